//! Independent reference implementations used as test oracles. They are
//! written from the definitions and deliberately share no code with the
//! library.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// First index of the largest value.
pub fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

pub fn brute_max(z: &[f64]) -> usize {
    let mut best_slot = 0;
    let mut best = f64::NEG_INFINITY;
    for (slot, &v) in z.iter().enumerate() {
        if v > best {
            best = v;
            best_slot = slot;
        }
    }
    best_slot / 2
}

pub fn brute_avg(z: &[f64]) -> usize {
    let k = z.len() / 2;
    let means: Vec<f64> = (0..k).map(|j| (z[2 * j] + z[2 * j + 1]) / 2.0).collect();
    first_max(&means)
}

pub fn brute_majority(z: &[f64], gamma: f64) -> usize {
    let k = z.len() / 2;
    let votes: Vec<usize> = (0..k)
        .map(|j| usize::from(z[2 * j] >= gamma) + usize::from(z[2 * j + 1] >= gamma))
        .collect();
    let top = *votes.iter().max().unwrap();
    let mut winner: Option<usize> = None;
    for j in 0..k {
        if votes[j] != top {
            continue;
        }
        let mean = (z[2 * j] + z[2 * j + 1]) / 2.0;
        match winner {
            Some(w) if (z[2 * w] + z[2 * w + 1]) / 2.0 >= mean => {}
            _ => winner = Some(j),
        }
    }
    winner.unwrap()
}

/// Slots scaled by two times the class weight of their expert.
pub fn brute_reweight(z: &[f64], weights: &[[f64; 2]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    for (j, w) in weights.iter().enumerate() {
        out.push(2.0 * w[0] * z[2 * j]);
        out.push(2.0 * w[1] * z[2 * j + 1]);
    }
    out
}

/// z-vector with a mix of continuous values and coarse grid values so that
/// ties and threshold boundaries occur often.
pub fn random_z(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..2 * k)
        .map(|_| {
            if rng.random_bool(0.4) {
                f64::from(rng.random_range(0..=10u8)) / 10.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect()
}

/// Sum of squared residuals of y ≈ Xw for two-column X.
pub fn rss2(x: &[[f64; 2]], y: &[f64], w: [f64; 2]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, t)| (r[0] * w[0] + r[1] * w[1] - t).powi(2))
        .sum()
}

/// Plain two-layer ReLU network used as a forward-pass oracle:
/// w1 is hidden×input row-major, w2 is output×hidden row-major.
pub struct RefNet<'a> {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
}

impl RefNet<'_> {
    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let mut s = self.b1[h];
                for i in 0..self.input {
                    s += self.w1[h * self.input + i] * x[i];
                }
                s
            })
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let a: Vec<f64> = self.pre_activations(x).into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
        (0..self.output)
            .map(|o| {
                let mut s = self.b2[o];
                for h in 0..self.hidden {
                    s += self.w2[o * self.hidden + h] * a[h];
                }
                s
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let l = self.logits(x);
        let m = l.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Mean negative log-likelihood.
    pub fn loss(&self, batch: &[(Vec<f64>, usize)]) -> f64 {
        batch.iter().map(|(x, y)| -self.probabilities(x)[*y].ln()).sum::<f64>() / batch.len() as f64
    }
}

/// Newton's method for binary logistic regression on dense features with an
/// unpenalized intercept, minimizing Σ loss + (ridge/2)·‖w‖²; returns
/// (weights, bias).
pub fn newton_logistic(x: &[Vec<f64>], y: &[f64], iterations: usize, ridge: f64) -> (Vec<f64>, f64) {
    use nalgebra::{DMatrix, DVector};
    let n = x.len();
    let d = x[0].len() + 1;
    let design = DMatrix::from_fn(n, d, |i, c| if c + 1 == d { 1.0 } else { x[i][c] });
    let mut beta = DVector::<f64>::zeros(d);
    for _ in 0..iterations {
        let eta = &design * &beta;
        let p = eta.map(|v| 1.0 / (1.0 + (-v).exp()));
        let mut penalty = ridge * &beta;
        penalty[d - 1] = 0.0;
        let grad = design.transpose() * (&p - DVector::from_column_slice(y)) + penalty;
        let wdiag = p.map(|v| v * (1.0 - v));
        let mut hess = design.transpose() * DMatrix::from_diagonal(&wdiag) * &design;
        for i in 0..d - 1 {
            hess[(i, i)] += ridge;
        }
        let step = hess.lu().solve(&grad).expect("penalized Hessian is invertible");
        beta -= step;
    }
    let w = beta.iter().take(d - 1).copied().collect();
    (w, beta[d - 1])
}
