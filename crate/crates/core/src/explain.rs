//! Exact Shapley attributions of level-1 heads over the 2K expert features,
//! and attribution-mass analytics of the level-0 experts.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::FormattedInput;
use crate::error::{Error, Result};
use crate::experts::BinaryExpert;
use crate::features::Variant;

/// Largest feature count accepted for exact coalition enumeration.
pub const MAX_SHAPLEY_FEATURES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub instance: usize,
    pub class: usize,
    pub baseline: Vec<f64>,
    pub phi: Vec<f64>,
    /// v(all features from z)
    pub value: f64,
    /// v(all features from the baseline)
    pub baseline_value: f64,
    /// |Σφ − (value − baseline_value)|
    pub efficiency_residual: f64,
}

/// Exact Shapley values of `value_fn` at `z` relative to `baseline`.
///
/// v(S) evaluates `value_fn` on the vector taking features in S from `z`
/// and the rest from `baseline`; all 2ⁿ coalitions are enumerated.
pub fn exact_shapley<F>(value_fn: F, z: &[f64], baseline: &[f64]) -> Result<(Vec<f64>, f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let n = z.len();
    if baseline.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: baseline.len(),
        });
    }
    if n > MAX_SHAPLEY_FEATURES {
        return Err(Error::TooManyFeatures(n));
    }
    let coalitions = 1usize << n;
    let mut point = baseline.to_vec();
    let values: Vec<f64> = (0..coalitions)
        .map(|mask| {
            for f in 0..n {
                point[f] = if mask >> f & 1 == 1 { z[f] } else { baseline[f] };
            }
            value_fn(&point)
        })
        .collect();

    // |S|!(n−|S|−1)!/n! for |S| = 0..n−1
    let fact: Vec<f64> = (0..=n).scan(1.0, |acc, i| {
        if i > 0 {
            *acc *= i as f64;
        }
        Some(*acc)
    })
    .collect();
    let weight: Vec<f64> = (0..n.max(1)).map(|s| fact[s] * fact[n.saturating_sub(s + 1)] / fact[n]).collect();

    let mut phi = vec![0.0; n];
    for (f, phi_f) in phi.iter_mut().enumerate() {
        let bit = 1usize << f;
        let mut acc = 0.0;
        for mask in 0..coalitions {
            if mask & bit == 0 {
                acc += weight[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
            }
        }
        *phi_f = acc;
    }
    Ok((phi, values[coalitions - 1], values[0]))
}

/// Shapley report for one instance and one output class of a probabilistic head.
pub fn explain_probability<F>(
    instance: usize,
    class: usize,
    probabilities: F,
    z: &[f64],
    baseline: &[f64],
) -> Result<ShapleyReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let (phi, value, baseline_value) = exact_shapley(|p| probabilities(p)[class], z, baseline)?;
    let efficiency_residual = (phi.iter().sum::<f64>() - (value - baseline_value)).abs();
    Ok(ShapleyReport {
        instance,
        class,
        baseline: baseline.to_vec(),
        phi,
        value,
        baseline_value,
        efficiency_residual,
    })
}

/// Component-wise mean of a set of z-vectors.
pub fn mean_baseline<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut sum: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for r in rows {
        let s = sum.get_or_insert_with(|| vec![0.0; r.len()]);
        s.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        n += 1;
    }
    sum.map(|s| s.into_iter().map(|v| v / n as f64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionMass {
    pub instance: usize,
    pub class: usize,
    pub variant: Variant,
    pub positive: f64,
    /// Magnitude of the negative contributions.
    pub negative: f64,
    pub signed: f64,
}

pub fn mass_from_contributions(
    instance: usize,
    class: usize,
    variant: Variant,
    contributions: impl IntoIterator<Item = f64>,
) -> AttributionMass {
    let (mut positive, mut negative) = (0.0, 0.0);
    for c in contributions {
        if c > 0.0 {
            positive += c;
        } else {
            negative -= c;
        }
    }
    AttributionMass {
        instance,
        class,
        variant,
        positive,
        negative,
        signed: positive - negative,
    }
}

/// Mass of one expert's token contributions towards its own positive output.
pub fn attribution_mass(expert: &BinaryExpert, instance: usize, input: &FormattedInput) -> Result<AttributionMass> {
    let attr = expert.token_attributions(input)?;
    Ok(mass_from_contributions(
        instance,
        expert.target_class,
        expert.variant,
        attr.tokens.iter().map(|t| t.contribution),
    ))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanStd { mean, std: var.sqrt() }
}

/// Pearson correlation; `None` when either series is constant or too short.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertMassStats {
    pub class: usize,
    pub variant: Variant,
    pub positive: MeanStd,
    pub negative: MeanStd,
    pub signed: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStatistics {
    pub predicted_class: usize,
    pub count: usize,
    /// Set when the group has fewer than 2 instances; statistics are omitted.
    pub too_small: bool,
    pub experts: Vec<ExpertMassStats>,
    /// Signed-mass correlations in expert slot order; `None` marks an undefined entry.
    pub correlation: Vec<Vec<Option<f64>>>,
}

/// Masses of all 2K experts for one instance, in z-vector slot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMasses {
    pub instance: usize,
    pub predicted: usize,
    pub masses: Vec<AttributionMass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassStatistics {
    pub groups: Vec<GroupStatistics>,
}

/// Groups instances by the ensemble's predicted class and summarizes masses.
pub fn mass_statistics(records: &[InstanceMasses], num_classes: usize) -> MassStatistics {
    let groups = (0..num_classes)
        .map(|class| {
            let members: Vec<&InstanceMasses> = records.iter().filter(|r| r.predicted == class).collect();
            let count = members.len();
            if count < 2 {
                return GroupStatistics {
                    predicted_class: class,
                    count,
                    too_small: true,
                    experts: Vec::new(),
                    correlation: Vec::new(),
                };
            }
            let width = members[0].masses.len();
            let column = |e: usize, f: fn(&AttributionMass) -> f64| -> Vec<f64> {
                members.iter().map(|r| f(&r.masses[e])).collect()
            };
            let experts = (0..width)
                .map(|e| ExpertMassStats {
                    class: members[0].masses[e].class,
                    variant: members[0].masses[e].variant,
                    positive: mean_std(&column(e, |m| m.positive)),
                    negative: mean_std(&column(e, |m| m.negative)),
                    signed: mean_std(&column(e, |m| m.signed)),
                })
                .collect();
            let signed: Vec<Vec<f64>> = (0..width).map(|e| column(e, |m| m.signed)).collect();
            let correlation = (0..width)
                .map(|a| {
                    (0..width)
                        .map(|b| {
                            let r = pearson(&signed[a], &signed[b]);
                            if a == b {
                                r.map(|_| 1.0)
                            } else {
                                r
                            }
                        })
                        .collect()
                })
                .collect();
            GroupStatistics {
                predicted_class: class,
                count,
                too_small: false,
                experts,
                correlation,
            }
        })
        .collect();
    MassStatistics { groups }
}

/// Table with one row per (predicted class, expert): mean and std of the
/// positive, negative and signed masses.
pub fn write_mass_table<W: Write>(out: W, stats: &MassStatistics, class_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "predicted_class",
        "expert",
        "count",
        "positive_mean",
        "positive_std",
        "negative_mean",
        "negative_std",
        "signed_mean",
        "signed_std",
    ])?;
    for g in stats.groups.iter().filter(|g| !g.too_small) {
        for e in &g.experts {
            w.write_record([
                class_names[g.predicted_class].clone(),
                format!("{}-{}", e.variant, class_names[e.class]),
                g.count.to_string(),
                format!("{:.4}", e.positive.mean),
                format!("{:.4}", e.positive.std),
                format!("{:.4}", e.negative.mean),
                format!("{:.4}", e.negative.std),
                format!("{:.4}", e.signed.mean),
                format!("{:.4}", e.signed.std),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Square correlation matrix for one group; undefined entries are written as `NA`.
pub fn write_correlation_matrix<W: Write>(out: W, group: &GroupStatistics, class_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labels: Vec<String> = group
        .experts
        .iter()
        .map(|e| format!("{}-{}", e.variant, class_names[e.class]))
        .collect();
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in labels.iter().zip(&group.correlation) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|c| c.map_or("NA".to_string(), |v| format!("{v:.4}"))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: Vec<f64>) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn null_player_gets_zero() {
        let f = |x: &[f64]| (x[0] * x[1]).sin() + x[3].powi(2);
        let z = [0.3, 0.8, 0.9, 0.1];
        let (phi, _, _) = exact_shapley(f, &z, &[0.5; 4]).unwrap();
        assert_eq!(phi[2], 0.0);
    }

    #[test]
    fn linear_game_closed_form() {
        let w = vec![0.7, -1.2, 0.0, 2.5, 0.3, -0.4];
        let z = [0.9, 0.1, 0.5, 0.6, 0.2, 0.75];
        let b = [0.4, 0.4, 0.3, 0.2, 0.5, 0.5];
        let (phi, _, _) = exact_shapley(linear(w.clone()), &z, &b).unwrap();
        for f in 0..6 {
            assert!((phi[f] - w[f] * (z[f] - b[f])).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_features_share_equally() {
        let f = |x: &[f64]| (x[0] + x[1]).exp() * x[2];
        let (phi, _, _) = exact_shapley(f, &[0.6, 0.6, 0.9], &[0.1, 0.1, 0.2]).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-15);
    }

    #[test]
    fn guard_and_shape() {
        let f = |_: &[f64]| 0.0;
        assert!(matches!(
            exact_shapley(f, &[0.0; 17], &[0.0; 17]),
            Err(Error::TooManyFeatures(17))
        ));
        assert!(exact_shapley(f, &[0.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn mass_examples() {
        let m = mass_from_contributions(0, 0, Variant::Domain, [1.0, -2.0]);
        assert_eq!((m.positive, m.negative, m.signed), (1.0, 2.0, -1.0));
        let m = mass_from_contributions(0, 0, Variant::Domain, []);
        assert_eq!((m.positive, m.negative, m.signed), (0.0, 0.0, 0.0));
        let m = mass_from_contributions(0, 0, Variant::Domain, [0.3, 0.7]);
        assert!((m.signed - 1.0).abs() < 1e-15);
        assert_eq!(m.signed, m.positive);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
    }

    fn masses(instance: usize, predicted: usize, signed: [f64; 4]) -> InstanceMasses {
        InstanceMasses {
            instance,
            predicted,
            masses: signed
                .iter()
                .enumerate()
                .map(|(e, s)| mass_from_contributions(instance, e / 2, Variant::ALL[e % 2], [*s]))
                .collect(),
        }
    }

    #[test]
    fn statistics_grouping_and_flags() {
        let records = vec![
            masses(0, 0, [1.0, 2.0, 0.5, 3.0]),
            masses(1, 0, [2.0, 4.0, 0.5, 2.0]),
            masses(2, 0, [3.0, 6.0, 0.5, 1.0]),
            masses(3, 1, [0.0, 0.0, 0.0, 0.0]),
        ];
        let stats = mass_statistics(&records, 2);
        let g0 = &stats.groups[0];
        assert_eq!(g0.count, 3);
        assert!(!g0.too_small);
        assert!((g0.correlation[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert!((g0.correlation[0][3].unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(g0.correlation[2][2], None);
        assert_eq!(g0.correlation[0][2], None);
        assert_eq!(g0.experts[2].signed.std, 0.0);
        assert!((g0.experts[0].signed.mean - 2.0).abs() < 1e-15);
        assert!((g0.experts[0].signed.std - 1.0).abs() < 1e-15);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(g0.correlation[a][b], g0.correlation[b][a]);
            }
        }
        assert!(stats.groups[1].too_small);

        let names = vec!["A".to_string(), "B".to_string()];
        let mut buf = Vec::new();
        write_correlation_matrix(&mut buf, g0, &names).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().starts_with(",domain-A,general-A"));
        assert!(text.contains("NA"));
        let mut buf = Vec::new();
        write_mass_table(&mut buf, &stats, &names).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4);
    }

    #[test]
    fn baseline_is_mean() {
        let rows = [vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let b = mean_baseline(rows.iter().map(|r| r.as_slice())).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-15 && (b[1] - 0.5).abs() < 1e-15);
        assert_eq!(mean_baseline(std::iter::empty()), None);
    }
}
