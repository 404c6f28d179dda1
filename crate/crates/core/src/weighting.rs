//! Supervised non-neural aggregators fitted on the validation split: the
//! geometric optimal-weights framework (least squares without intercept,
//! softmax-normalized) and StackingC (least squares with intercept, softmax
//! across classes).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{self, argmax, ZVector, ARCHITECTURES};

/// Relative singular-value cutoff below which the normal matrix is treated
/// as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Normal matrix was rank deficient; coefficients are the minimum-norm solution.
    pub degenerate: bool,
    pub residual_ss: f64,
}

/// Solves min ‖Xβ − y‖² through the normal equations, falling back to the
/// pseudoinverse (minimum-norm solution) when XᵀX is rank deficient.
pub fn least_squares(design: &DMatrix<f64>, targets: &DVector<f64>) -> LeastSquares {
    let gram = design.transpose() * design;
    let rhs = design.transpose() * targets;
    let sv = gram.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let degenerate = smax.is_nan() || smax <= 0.0 || smin <= smax * RANK_TOLERANCE;
    let beta = if degenerate {
        if smax > 0.0 {
            gram.pseudo_inverse(smax * RANK_TOLERANCE).expect("non-negative eps") * rhs
        } else {
            DVector::zeros(design.ncols())
        }
    } else {
        match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram.pseudo_inverse(smax * RANK_TOLERANCE).expect("non-negative eps") * rhs,
        }
    };
    let residual = design * &beta - targets;
    LeastSquares {
        coefficients: beta.iter().copied().collect(),
        degenerate,
        residual_ss: residual.norm_squared(),
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-class expert weights from the geometric framework.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub class: usize,
    /// Unnormalized least-squares solution.
    pub raw: [f64; 2],
    /// softmax(raw): (domain, general).
    pub weights: [f64; 2],
    pub degenerate: bool,
    pub residual_ss: f64,
}

impl ClassWeights {
    pub fn from_raw(class: usize, raw: [f64; 2]) -> Self {
        let w = softmax(&raw);
        ClassWeights {
            class,
            raw,
            weights: [w[0], w[1]],
            degenerate: false,
            residual_ss: f64::NAN,
        }
    }
}

fn class_design(rows: &[(ZVector, usize)], class: usize, intercept: bool) -> (DMatrix<f64>, DVector<f64>) {
    let cols = if intercept { 3 } else { 2 };
    let design = DMatrix::from_fn(rows.len(), cols, |i, c| {
        if c < 2 {
            rows[i].0.pair(class)[c]
        } else {
            1.0
        }
    });
    let targets = DVector::from_iterator(rows.len(), rows.iter().map(|(_, y)| f64::from(u8::from(*y == class))));
    (design, targets)
}

fn check_rows(rows: &[(ZVector, usize)], min: usize, num_classes: usize) -> Result<()> {
    if rows.len() < min {
        return Err(Error::TrainingData(format!(
            "need at least {min} validation instances, got {}",
            rows.len()
        )));
    }
    for (z, y) in rows {
        if z.num_classes() != num_classes {
            return Err(Error::Shape {
                expected: ARCHITECTURES * num_classes,
                got: z.len(),
            });
        }
        if *y >= num_classes {
            return Err(Error::ClassOutOfRange {
                index: *y,
                classes: num_classes,
            });
        }
    }
    Ok(())
}

/// Fits the geometric weights of one class from validation z-pairs and
/// one-vs-all targets.
pub fn fit_geometric_pairs(class: usize, pairs: &[[f64; 2]], targets: &[f64]) -> Result<ClassWeights> {
    if pairs.len() < 2 || pairs.len() != targets.len() {
        return Err(Error::TrainingData("need at least 2 aligned validation pairs".into()));
    }
    let design = DMatrix::from_fn(pairs.len(), 2, |i, c| pairs[i][c]);
    let y = DVector::from_column_slice(targets);
    let fit = least_squares(&design, &y);
    let raw = [fit.coefficients[0], fit.coefficients[1]];
    let mut out = ClassWeights::from_raw(class, raw);
    out.degenerate = fit.degenerate;
    out.residual_ss = fit.residual_ss;
    Ok(out)
}

pub fn fit_geometric_weights(rows: &[(ZVector, usize)], num_classes: usize) -> Result<Vec<ClassWeights>> {
    check_rows(rows, 2, num_classes)?;
    (0..num_classes)
        .map(|j| {
            let (design, y) = class_design(rows, j, false);
            let fit = least_squares(&design, &y);
            let mut w = ClassWeights::from_raw(j, [fit.coefficients[0], fit.coefficients[1]]);
            w.degenerate = fit.degenerate;
            w.residual_ss = fit.residual_ss;
            Ok(w)
        })
        .collect()
}

fn check_weights(z: &[f64], weights: &[ClassWeights]) -> Result<()> {
    let k = z.len() / ARCHITECTURES;
    if weights.len() != k || weights.iter().enumerate().any(|(j, w)| w.class != j) {
        return Err(Error::Config(format!(
            "expected weights for classes 0..{k} in order, got {}",
            weights.len()
        )));
    }
    Ok(())
}

/// Weighted class scores żʲ = w_domain·z[2j] + w_general·z[2j+1].
pub fn apply_weights(z: &ZVector, weights: &[ClassWeights]) -> Result<Vec<f64>> {
    check_weights(z, weights)?;
    Ok(weights
        .iter()
        .map(|w| {
            let [a, b] = z.pair(w.class);
            w.weights[0] * a + w.weights[1] * b
        })
        .collect())
}

/// Per-model reweighted slots |A|·w_a·ρ_a. Their per-class mean is żʲ, and
/// uniform weights reproduce the raw slots exactly.
pub fn reweighted_slots(z: &ZVector, weights: &[ClassWeights]) -> Result<Vec<f64>> {
    check_weights(z, weights)?;
    let scale = ARCHITECTURES as f64;
    Ok(weights
        .iter()
        .flat_map(|w| {
            let [a, b] = z.pair(w.class);
            [scale * w.weights[0] * a, scale * w.weights[1] * b]
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum VotingRule {
    Max,
    Avg,
    Majority { gamma: f64 },
}

/// W-Max / W-Avg / W-Maj: a voting rule over the reweighted slots.
pub fn weighted_vote(z: &ZVector, weights: &[ClassWeights], rule: VotingRule) -> Result<usize> {
    let slots = reweighted_slots(z, weights)?;
    Ok(match rule {
        VotingRule::Max => fusion::max_vote(&slots),
        VotingRule::Avg => fusion::avg_vote(&slots).1,
        VotingRule::Majority { gamma } => fusion::majority_vote(&slots, gamma),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackingHead {
    pub class: usize,
    pub theta: [f64; 2],
    pub intercept: f64,
    pub degenerate: bool,
    pub residual_ss: f64,
}

impl StackingHead {
    pub fn logit(&self, z: &ZVector) -> f64 {
        let [a, b] = z.pair(self.class);
        self.theta[0] * a + self.theta[1] * b + self.intercept
    }
}

pub fn fit_stackingc(rows: &[(ZVector, usize)], num_classes: usize) -> Result<Vec<StackingHead>> {
    check_rows(rows, 3, num_classes)?;
    Ok((0..num_classes)
        .map(|j| {
            let (design, y) = class_design(rows, j, true);
            let fit = least_squares(&design, &y);
            let c = &fit.coefficients;
            StackingHead {
                class: j,
                theta: [c[0], c[1]],
                intercept: c[2],
                degenerate: fit.degenerate,
                residual_ss: fit.residual_ss,
            }
        })
        .collect())
}

/// Softmax over the per-class regression outputs, then argmax.
pub fn stackingc_predict(z: &ZVector, heads: &[StackingHead]) -> (Vec<f64>, usize) {
    let logits: Vec<f64> = heads.iter().map(|h| h.logit(z)).collect();
    let p = softmax(&logits);
    let j = argmax(&p);
    (p, j)
}
