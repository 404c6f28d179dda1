//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page edits a z-vector of six expert probabilities and calls three
//! operations: voting-based aggregation, exact Shapley attribution of a small
//! FFNN meta-classifier and the reliability threshold with its CiTO mapping.
//! Each returns a JSON string.

use citefusion::bundle::thresholded_iri;
use citefusion::corpus::LabelSchema;
use citefusion::explain::{explain_probability, mean_baseline};
use citefusion::fusion::{self, ZVector};
use citefusion::meta::{train_ffnn, FfnnParams, MetaConfig};
use citefusion::synth::generate_z;
use citefusion::train::TrainConfig;
use citefusion::weighting::{self, ClassWeights, VotingRule};
use serde_json::json;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Demo {
    schema: LabelSchema,
    params: FfnnParams,
    baseline: Vec<f64>,
    train_accuracy: f64,
}

fn demo_weights(domain_shares: &[f64]) -> Result<Vec<ClassWeights>, String> {
    domain_shares
        .iter()
        .enumerate()
        .map(|(class, &w)| {
            if !(0.0..=1.0).contains(&w) {
                return Err(format!("domain weight for class {class} must lie in [0, 1]"));
            }
            Ok(ClassWeights {
                class,
                raw: [w.ln(), (1.0 - w).ln()],
                weights: [w, 1.0 - w],
                degenerate: false,
                residual_ss: f64::NAN,
            })
        })
        .collect()
}

impl Demo {
    /// Trains the demo meta-classifier on seeded synthetic z-vectors.
    pub fn build(seed: u32) -> Result<Demo, String> {
        let schema = LabelSchema::scicite();
        let k = schema.num_classes();
        let seed = u64::from(seed);
        let train = generate_z(k, 600, 0.15, seed).map_err(|e| e.to_string())?;
        let val = generate_z(k, 200, 0.15, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
        let config = MetaConfig {
            train: TrainConfig {
                max_epochs: 40,
                seed,
                ..MetaConfig::default().train
            },
            ..MetaConfig::default()
        };
        let params = train_ffnn(&train, &val, k, &config).map_err(|e| e.to_string())?.head;
        let correct = train
            .iter()
            .filter(|(z, y)| params.predict(z).map(|p| p.label == *y).unwrap_or(false))
            .count();
        let baseline = mean_baseline(train.iter().map(|(z, _)| z.values())).expect("non-empty");
        Ok(Demo {
            schema,
            params,
            baseline,
            train_accuracy: correct as f64 / train.len() as f64,
        })
    }

    fn z(&self, values: &[f64]) -> Result<ZVector, String> {
        let z = ZVector::new(values.to_vec()).map_err(|e| e.to_string())?;
        if z.num_classes() != self.schema.num_classes() {
            return Err(format!("expected {} probabilities", 2 * self.schema.num_classes()));
        }
        Ok(z)
    }

    fn names(&self) -> Vec<String> {
        self.schema.class_names().map(str::to_string).collect()
    }

    pub fn aggregate_json(&self, values: &[f64], gamma: f64, domain_shares: &[f64]) -> Result<String, String> {
        let z = self.z(values)?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err("gamma must lie in [0, 1]".into());
        }
        let weights = demo_weights(domain_shares)?;
        if weights.len() != z.num_classes() {
            return Err(format!("expected {} domain weights", z.num_classes()));
        }
        let names = self.names();
        let weighted = |rule| weighting::weighted_vote(&z, &weights, rule).map_err(|e| e.to_string());
        let label = |j: usize| names[j].clone();
        let (consensus, _) = fusion::avg_vote(&z);
        Ok(json!({
            "max": label(fusion::max_vote(&z)),
            "avg": label(fusion::avg_vote(&z).1),
            "majority": label(fusion::majority_vote(&z, gamma)),
            "w_max": label(weighted(VotingRule::Max)?),
            "w_avg": label(weighted(VotingRule::Avg)?),
            "w_maj": label(weighted(VotingRule::Majority { gamma })?),
            "consensus": consensus,
            "votes": fusion::vote_tally(&z, gamma),
            "weighted_scores": weighting::apply_weights(&z, &weights).map_err(|e| e.to_string())?,
        })
        .to_string())
    }

    pub fn explain_json(&self, values: &[f64]) -> Result<String, String> {
        let z = self.z(values)?;
        let prediction = self.params.predict(&z).map_err(|e| e.to_string())?;
        let report = explain_probability(
            0,
            prediction.label,
            |p| self.params.predict(p).map(|m| m.probabilities).expect("validated width"),
            &z,
            &self.baseline,
        )
        .map_err(|e| e.to_string())?;
        Ok(json!({
            "label": self.names()[prediction.label],
            "probabilities": prediction.probabilities,
            "phi": report.phi,
            "value": report.value,
            "baseline_value": report.baseline_value,
            "baseline": report.baseline,
            "efficiency_residual": report.efficiency_residual,
        })
        .to_string())
    }

    pub fn reliability_json(&self, probabilities: &[f64], threshold: f64) -> Result<String, String> {
        if probabilities.len() != self.schema.num_classes() {
            return Err(format!("expected {} probabilities", self.schema.num_classes()));
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err("threshold must lie in (0, 1]".into());
        }
        let label = fusion::argmax(probabilities);
        let (reliable, cito) =
            thresholded_iri(&self.schema, probabilities, label, threshold).map_err(|e| e.to_string())?;
        Ok(json!({
            "label": self.names()[label],
            "confidence": probabilities[label],
            "reliable": reliable,
            "cito": cito,
        })
        .to_string())
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Demo::build(seed).map_err(|e| JsError::new(&e))
    }

    /// Class names and their CiTO IRIs.
    pub fn schema(&self) -> String {
        json!({
            "classes": self.names(),
            "cito": self.schema.classes().iter().map(|c| c.cito.clone()).collect::<Vec<_>>(),
        })
        .to_string()
    }

    #[wasm_bindgen(js_name = trainAccuracy)]
    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    /// Voting decisions for `z` (slots 2j domain, 2j+1 general). `domain_shares`
    /// holds each class's domain-expert weight; the general expert gets the rest.
    pub fn aggregate(&self, z: &[f64], gamma: f64, domain_shares: &[f64]) -> Result<String, JsError> {
        self.aggregate_json(z, gamma, domain_shares).map_err(|e| JsError::new(&e))
    }

    /// FFNN probabilities and exact Shapley values of the predicted class.
    pub fn explain(&self, z: &[f64]) -> Result<String, JsError> {
        self.explain_json(z).map_err(|e| JsError::new(&e))
    }

    /// Reliability flag and CiTO IRI for meta-classifier probabilities.
    pub fn reliability(&self, probabilities: &[f64], threshold: f64) -> Result<String, JsError> {
        self.reliability_json(probabilities, threshold).map_err(|e| JsError::new(&e))
    }
}
