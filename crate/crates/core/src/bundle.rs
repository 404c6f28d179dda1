//! Serialized ensembles: 2K experts, the FFNN head and the metadata needed
//! to classify and explain new inputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{format_input, FormattedInput, LabelSchema, Setting, CITES_FOR_INFORMATION};
use crate::error::{Error, Result};
use crate::experts::BinaryExpert;
use crate::explain::{self, AttributionMass, ShapleyReport};
use crate::features::Variant;
use crate::fusion::{ExpertSet, ZVector, ARCHITECTURES};
use crate::meta::{FfnnParams, MetaPrediction};
use crate::weighting::{ClassWeights, StackingHead};

pub const BUNDLE_FORMAT: &str = "citefusion-ensemble";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBundle {
    pub format: String,
    pub version: u32,
    pub schema: LabelSchema,
    pub setting: Setting,
    pub seed: u64,
    /// Experts in z-vector slot order.
    pub experts: Vec<BinaryExpert>,
    pub ffnn: FfnnParams,
    /// Shapley baseline: mean training z-vector.
    pub baseline: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<ClassWeights>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stackingc: Option<Vec<StackingHead>>,
}

/// Summary shown by health and schema endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleInfo {
    pub dataset: String,
    pub setting: Setting,
    pub seed: u64,
    pub classes: usize,
    pub hidden: usize,
    pub version: u32,
}

impl EnsembleBundle {
    pub fn num_classes(&self) -> usize {
        self.schema.num_classes()
    }

    pub fn info(&self) -> BundleInfo {
        BundleInfo {
            dataset: self.schema.dataset_name.clone(),
            setting: self.setting,
            seed: self.seed,
            classes: self.num_classes(),
            hidden: self.ffnn.hidden,
            version: self.version,
        }
    }

    /// Checks format, version and that every component agrees on K.
    pub fn validate(&self) -> Result<()> {
        if self.format != BUNDLE_FORMAT {
            return Err(Error::Schema(format!("not an ensemble bundle (format {:?})", self.format)));
        }
        if self.version != BUNDLE_VERSION {
            return Err(Error::Schema(format!(
                "unsupported bundle version {} (expected {BUNDLE_VERSION})",
                self.version
            )));
        }
        self.schema.validate()?;
        let k = self.num_classes();
        let width = ARCHITECTURES * k;
        self.expert_set()?;
        if let Some(e) = self.experts.iter().find(|e| e.setting != self.setting) {
            return Err(Error::ExpertSet(format!(
                "expert for class {} was trained for {} inputs, bundle is {}",
                e.target_class, e.setting, self.setting
            )));
        }
        if self.ffnn.input != width || self.ffnn.output != k {
            return Err(Error::Shape {
                expected: width,
                got: self.ffnn.input,
            });
        }
        if self.baseline.len() != width {
            return Err(Error::Shape {
                expected: width,
                got: self.baseline.len(),
            });
        }
        Ok(())
    }

    pub fn expert_set(&self) -> Result<ExpertSet<'_>> {
        let set = ExpertSet::new(self.num_classes(), &self.experts)?;
        if set.experts().iter().zip(&self.experts).any(|(a, b)| !std::ptr::eq(*a, b)) {
            return Err(Error::ExpertSet("experts are not stored in slot order".into()));
        }
        Ok(set)
    }

    pub fn z(&self, input: &FormattedInput) -> Result<ZVector> {
        self.expert_set()?.assemble_z(input)
    }

    pub fn predict(&self, input: &FormattedInput) -> Result<(ZVector, MetaPrediction)> {
        let z = self.z(input)?;
        let p = self.ffnn.predict(&z)?;
        Ok((z, p))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: EnsembleBundle = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Full explanation of one input: expert token attributions and masses,
    /// the z-vector, head probabilities, the predicted CiTO IRI and exact
    /// Shapley values of the predicted class.
    pub fn explain(&self, instance: usize, section_title: Option<&str>, context: &str) -> Result<InstanceReport> {
        if context.trim().is_empty() {
            return Err(Error::EmptyContext { line: instance });
        }
        let input = format_input(section_title, context, self.setting);
        let (z, prediction) = self.predict(&input)?;
        let experts = self
            .experts
            .iter()
            .zip(z.iter())
            .map(|(e, rho)| {
                let attributions = e.token_attributions(&input)?;
                let mass = explain::mass_from_contributions(
                    instance,
                    e.target_class,
                    e.variant,
                    attributions.tokens.iter().map(|t| t.contribution),
                );
                Ok(ExpertReport {
                    class: e.target_class,
                    class_name: self.schema.class_name(e.target_class)?.to_string(),
                    variant: e.variant,
                    probability: *rho,
                    logit: attributions.logit,
                    bias: attributions.bias,
                    tokens: attributions
                        .tokens
                        .into_iter()
                        .map(|t| TokenWeight {
                            token: t.token,
                            start: t.start,
                            end: t.end,
                            weight: t.contribution,
                        })
                        .collect(),
                    mass,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let shapley = explain::explain_probability(
            instance,
            prediction.label,
            |p| self.ffnn.predict(p).map(|m| m.probabilities).expect("validated width"),
            &z,
            &self.baseline,
        )?;
        Ok(InstanceReport {
            instance,
            text: input.text.clone(),
            setting: self.setting,
            fallback: input.fallback.then(|| {
                "no section title available; the context was classified without one".to_string()
            }),
            experts,
            z: z.0,
            probabilities: prediction.probabilities,
            predicted_class: prediction.label,
            label: self.schema.class_name(prediction.label)?.to_string(),
            cito: self.schema.cito_for(prediction.label)?.to_string(),
            shapley,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenWeight {
    pub token: String,
    pub start: usize,
    pub end: usize,
    /// Signed contribution to the expert's positive logit.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertReport {
    pub class: usize,
    pub class_name: String,
    pub variant: Variant,
    /// ρ¹ of this expert.
    pub probability: f64,
    pub logit: f64,
    pub bias: f64,
    pub tokens: Vec<TokenWeight>,
    pub mass: AttributionMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance: usize,
    /// Text as seen by the experts.
    pub text: String,
    pub setting: Setting,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
    pub experts: Vec<ExpertReport>,
    pub z: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    pub label: String,
    pub cito: String,
    pub shapley: ShapleyReport,
}

/// CiTO IRI for a head output under the reliability threshold.
pub fn thresholded_iri(schema: &LabelSchema, probabilities: &[f64], label: usize, threshold: f64) -> Result<(bool, String)> {
    let top = probabilities.get(label).copied().unwrap_or(0.0);
    if top > threshold {
        Ok((true, schema.cito_for(label)?.to_string()))
    } else {
        Ok((false, CITES_FOR_INFORMATION.to_string()))
    }
}
