//! Level-0 → level-1 glue: z-vector assembly and the unsupervised voting
//! aggregators.
//!
//! Layout: for class `j`, slot `2j` holds the domain expert's positive
//! probability and slot `2j + 1` the general expert's. Every argmax in this
//! module breaks ties towards the lowest class index, then the domain slot.

use std::io::{Read, Write};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::corpus::FormattedInput;
use crate::error::{Error, Result};
use crate::experts::BinaryExpert;
use crate::features::Variant;

pub const DEFAULT_GAMMA: f64 = 0.5;

/// Number of expert architectures per class.
pub const ARCHITECTURES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZVector(pub Vec<f64>);

impl ZVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(ARCHITECTURES) {
            return Err(Error::Shape {
                expected: ARCHITECTURES * (values.len() / ARCHITECTURES).max(1),
                got: values.len(),
            });
        }
        Ok(ZVector(values))
    }

    pub fn num_classes(&self) -> usize {
        self.0.len() / ARCHITECTURES
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn pair(&self, class: usize) -> [f64; 2] {
        [self.0[2 * class], self.0[2 * class + 1]]
    }

    pub fn slot(class: usize, variant: Variant) -> usize {
        2 * class + variant.slot()
    }
}

impl Deref for ZVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// The 2K experts of one ensemble, indexed by (class, variant).
#[derive(Clone, Debug)]
pub struct ExpertSet<'a> {
    slots: Vec<&'a BinaryExpert>,
}

impl<'a> ExpertSet<'a> {
    pub fn new(num_classes: usize, experts: impl IntoIterator<Item = &'a BinaryExpert>) -> Result<Self> {
        let mut slots: Vec<Option<&BinaryExpert>> = vec![None; ARCHITECTURES * num_classes];
        for e in experts {
            if e.target_class >= num_classes {
                return Err(Error::ExpertSet(format!(
                    "expert targets class {} but the schema has {num_classes}",
                    e.target_class
                )));
            }
            let slot = ZVector::slot(e.target_class, e.variant);
            if slots[slot].is_some() {
                return Err(Error::ExpertSet(format!(
                    "duplicate expert for class {} ({})",
                    e.target_class, e.variant
                )));
            }
            slots[slot] = Some(e);
        }
        let slots = slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| {
                    Error::ExpertSet(format!(
                        "missing expert for class {} ({})",
                        i / 2,
                        Variant::ALL[i % 2]
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExpertSet { slots })
    }

    pub fn num_classes(&self) -> usize {
        self.slots.len() / ARCHITECTURES
    }

    pub fn experts(&self) -> &[&'a BinaryExpert] {
        &self.slots
    }

    pub fn assemble_z(&self, input: &FormattedInput) -> Result<ZVector> {
        self.slots
            .iter()
            .map(|e| e.positive_probability(input))
            .collect::<Result<Vec<_>>>()
            .map(ZVector)
    }
}

// The voting rules take raw slot slices so the weighted variants can run
// them on reweighted scores; a `&ZVector` coerces.

/// Global argmax over all 2K slots; returns the owning class.
pub fn max_vote(z: &[f64]) -> usize {
    argmax(z) / ARCHITECTURES
}

pub fn consensus(z: &[f64]) -> Vec<f64> {
    z.chunks(ARCHITECTURES)
        .map(|c| c.iter().sum::<f64>() / ARCHITECTURES as f64)
        .collect()
}

/// Per-class mean of the two slots and its argmax.
pub fn avg_vote(z: &[f64]) -> (Vec<f64>, usize) {
    let c = consensus(z);
    let j = argmax(&c);
    (c, j)
}

/// Votes per class: slots with probability ≥ γ.
pub fn vote_tally(z: &[f64], gamma: f64) -> Vec<u8> {
    z.chunks(ARCHITECTURES)
        .map(|c| c.iter().filter(|p| **p >= gamma).count() as u8)
        .collect()
}

/// Unique top tally wins; otherwise average voting among the tied classes.
pub fn majority_vote(z: &[f64], gamma: f64) -> usize {
    let tally = vote_tally(z, gamma);
    let top = *tally.iter().max().expect("non-empty z");
    let tied: Vec<usize> = (0..tally.len()).filter(|&j| tally[j] == top).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let c = consensus(z);
    let scores: Vec<f64> = tied.iter().map(|&j| c[j]).collect();
    tied[argmax(&scores)]
}

/// Writes cached z-vectors: header `z0_domain,z0_general,…,label`, one row per instance.
pub fn write_z_csv<W: Write>(out: W, rows: &[(ZVector, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = rows.first().map_or(0, |r| r.0.num_classes());
    let mut header: Vec<String> = (0..k)
        .flat_map(|j| [format!("z{j}_domain"), format!("z{j}_general")])
        .collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (z, label) in rows {
        if z.num_classes() != k {
            return Err(Error::Shape {
                expected: 2 * k,
                got: z.0.len(),
            });
        }
        let mut rec: Vec<String> = z.values().iter().map(|v| format!("{v:?}")).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_z_csv<R: Read>(input: R) -> Result<Vec<(ZVector, usize)>> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width < 3 || width % 2 == 0 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected 2K probability columns plus label, got {width} columns"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("{s:?}: {e}"),
            })
        };
        let values = rec.iter().take(width - 1).map(parse).collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parse {
                line,
                message: "probability outside [0, 1]".into(),
            });
        }
        let label = rec[width - 1].trim().parse::<usize>().map_err(|e| Error::Parse {
            line,
            message: format!("label: {e}"),
        })?;
        if label >= (width - 1) / 2 {
            return Err(Error::ClassOutOfRange {
                index: label,
                classes: (width - 1) / 2,
            });
        }
        rows.push((ZVector(values), label));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{format_input, Setting};
    use crate::features::Featurizer;

    fn z(v: &[f64]) -> ZVector {
        ZVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn max_vote_examples() {
        assert_eq!(max_vote(&z(&[0.9, 0.1, 0.2, 0.3, 0.05, 0.4])), 0);
        assert_eq!(max_vote(&z(&[0.1, 0.1, 0.1, 0.95, 0.1, 0.1])), 1);
        assert_eq!(max_vote(&z(&[0.5; 6])), 0);
    }

    #[test]
    fn avg_vote_examples() {
        let (c, j) = avg_vote(&z(&[0.2, 0.4, 0.8, 0.6, 0.1, 0.1]));
        assert!((c[0] - 0.3).abs() < 1e-15 && (c[1] - 0.7).abs() < 1e-15 && (c[2] - 0.1).abs() < 1e-15);
        assert_eq!(j, 1);
        assert_eq!(avg_vote(&z(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0])), (vec![1.0, 0.0, 0.0], 0));
        assert_eq!(avg_vote(&z(&[0.5; 6])), (vec![0.5; 3], 0));
    }

    #[test]
    fn majority_vote_examples() {
        let a = z(&[0.6, 0.7, 0.55, 0.2, 0.1, 0.3]);
        assert_eq!(vote_tally(&a, 0.5), vec![2, 1, 0]);
        assert_eq!(majority_vote(&a, 0.5), 0);
        let b = z(&[0.6, 0.6, 0.7, 0.55, 0.1, 0.1]);
        assert_eq!(vote_tally(&b, 0.5), vec![2, 2, 0]);
        assert_eq!(majority_vote(&b, 0.5), 1);
        let c = z(&[0.1; 6]);
        assert_eq!(vote_tally(&c, 0.5), vec![0, 0, 0]);
        assert_eq!(majority_vote(&c, 0.5), 0);
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(vote_tally(&z(&[0.5, 0.49, 0.2, 0.2]), 0.5), vec![1, 0]);
    }

    #[test]
    fn rejects_odd_width() {
        assert!(ZVector::new(vec![0.1, 0.2, 0.3]).is_err());
        assert!(ZVector::new(vec![]).is_err());
    }

    fn expert(class: usize, variant: Variant, bias: f64) -> BinaryExpert {
        let mut e = BinaryExpert::new(class, Setting::WoS, Featurizer::unfitted(variant, 16));
        e.model.bias = bias;
        e.trained = true;
        e
    }

    #[test]
    fn assemble_layout_and_errors() {
        let biases = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0];
        let experts: Vec<BinaryExpert> = (0..6)
            .map(|i| expert(i / 2, Variant::ALL[i % 2], biases[i]))
            .collect();
        // shuffled insertion order must not matter
        let order = [3, 0, 5, 1, 4, 2];
        let set = ExpertSet::new(3, order.iter().map(|&i| &experts[i])).unwrap();
        let input = format_input(None, "some context", Setting::WoS);
        let zv = set.assemble_z(&input).unwrap();
        for (i, b) in biases.iter().enumerate() {
            assert!((zv.0[i] - crate::experts::logistic(*b)).abs() < 1e-15);
        }

        assert!(ExpertSet::new(3, experts.iter().take(5)).is_err());
        let dup = expert(0, Variant::Domain, 0.0);
        assert!(ExpertSet::new(3, experts.iter().take(5).chain([&dup])).is_err());

        let mut untrained = experts.clone();
        untrained[4].trained = false;
        let set = ExpertSet::new(3, untrained.iter()).unwrap();
        assert!(set.assemble_z(&input).is_err());

        let zero: Vec<BinaryExpert> = (0..6).map(|i| expert(i / 2, Variant::ALL[i % 2], 0.0)).collect();
        let set = ExpertSet::new(3, zero.iter()).unwrap();
        assert_eq!(set.assemble_z(&input).unwrap().0, vec![0.5; 6]);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let rows = vec![
            (z(&[0.1, 0.2, 0.30000000000000004, 1.0]), 1),
            (z(&[0.0, 0.5, 0.25, 0.125]), 0),
        ];
        let mut buf = Vec::new();
        write_z_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("z0_domain,z0_general,z1_domain,z1_general,label\n"));
        assert_eq!(read_z_csv(buf.as_slice()).unwrap(), rows);
        let bad = "z0_domain,z0_general,label\n0.2,1.5,0\n";
        assert!(read_z_csv(bad.as_bytes()).is_err());
        let bad_label = "z0_domain,z0_general,label\n0.2,0.5,1\n";
        assert!(read_z_csv(bad_label.as_bytes()).is_err());
    }
}
