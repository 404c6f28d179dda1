//! Thresholded classification over a pair of ensembles (one trained with
//! section titles, one without) and the request/response types of the
//! HTTP API.

use serde::{Deserialize, Serialize};

use crate::bundle::{thresholded_iri, BundleInfo, EnsembleBundle, InstanceReport};
use crate::corpus::{format_input, LabelSchema, Setting};
use crate::error::{Error, Result};
use crate::features::Variant;

pub const DEFAULT_THRESHOLD: f64 = 0.90;
pub const MAX_BATCH: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Titled items go to the WS ensemble, untitled ones to the WoS ensemble.
    #[default]
    Mixed,
    /// Every item is formatted with its title and classified by the WS ensemble.
    WithSections,
    /// Titles are dropped and the WoS ensemble classifies every item.
    WithoutSections,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mixed" => Ok(Mode::Mixed),
            "with_sections" | "ws" => Ok(Mode::WithSections),
            "without_sections" | "wos" => Ok(Mode::WithoutSections),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (mixed, with_sections, without_sections)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestItem {
    #[serde(default, alias = "section_title", alias = "sectionName")]
    pub section: Option<String>,
    #[serde(alias = "string", alias = "text")]
    pub context: String,
}

impl RequestItem {
    pub fn new(section: Option<&str>, context: &str) -> Self {
        RequestItem {
            section: section.map(str::to_string),
            context: context.to_string(),
        }
    }

    fn title(&self) -> Option<&str> {
        self.section.as_deref().filter(|s| !s.trim().is_empty())
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub items: Vec<RequestItem>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl ClassifyRequest {
    pub fn new(items: Vec<RequestItem>) -> Self {
        ClassifyRequest {
            items,
            mode: Mode::Mixed,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::InvalidRequest("items must not be empty".into()));
        }
        if self.items.len() > MAX_BATCH {
            return Err(Error::InvalidRequest(format!(
                "{} items exceed the batch limit of {MAX_BATCH}",
                self.items.len()
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidRequest(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if let Some(i) = self.items.iter().position(|it| it.context.trim().is_empty()) {
            return Err(Error::InvalidRequest(format!("items[{i}].context is empty")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertScore {
    pub class: String,
    pub variant: Variant,
    /// Positive-class probability ρ¹.
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResult {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section: Option<String>,
    pub context: String,
    /// Setting of the ensemble that classified the item.
    pub setting: Setting,
    /// Set when WS formatting was requested but the item had no title.
    pub missing_section: bool,
    pub experts: Vec<ExpertScore>,
    pub probabilities: Vec<f64>,
    pub label: String,
    pub confidence: f64,
    pub reliable: bool,
    pub cito: String,
}

/// Immutable pair of ensembles sharing one label schema.
#[derive(Clone, Debug)]
pub struct Ensembles {
    ws: Option<EnsembleBundle>,
    wos: Option<EnsembleBundle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaInfo {
    pub dataset: String,
    pub classes: Vec<SchemaClass>,
    pub fallback: String,
    pub default_threshold: f64,
    pub max_batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaClass {
    pub name: String,
    pub cito: String,
}

impl Ensembles {
    pub fn new(ws: Option<EnsembleBundle>, wos: Option<EnsembleBundle>) -> Result<Self> {
        for (bundle, setting) in [(&ws, Setting::WS), (&wos, Setting::WoS)] {
            if let Some(b) = bundle {
                b.validate()?;
                if b.setting != setting {
                    return Err(Error::Config(format!(
                        "bundle trained for {} supplied as the {setting} ensemble",
                        b.setting
                    )));
                }
            }
        }
        match (&ws, &wos) {
            (None, None) => return Err(Error::MissingBundle("WS or WoS".into())),
            (Some(a), Some(b)) if a.schema.classes() != b.schema.classes() => {
                return Err(Error::Schema("WS and WoS bundles use different label schemas".into()))
            }
            _ => {}
        }
        Ok(Ensembles { ws, wos })
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.ws.as_ref().or(self.wos.as_ref()).expect("at least one bundle").schema
    }

    pub fn bundle(&self, setting: Setting) -> Result<&EnsembleBundle> {
        match setting {
            Setting::WS => self.ws.as_ref(),
            Setting::WoS => self.wos.as_ref(),
        }
        .ok_or_else(|| Error::MissingBundle(setting.to_string()))
    }

    pub fn info(&self) -> Vec<BundleInfo> {
        self.ws.iter().chain(&self.wos).map(EnsembleBundle::info).collect()
    }

    pub fn schema_info(&self) -> SchemaInfo {
        let schema = self.schema();
        SchemaInfo {
            dataset: schema.dataset_name.clone(),
            classes: schema
                .classes()
                .iter()
                .map(|c| SchemaClass {
                    name: c.name.clone(),
                    cito: c.cito.clone(),
                })
                .collect(),
            fallback: crate::corpus::CITES_FOR_INFORMATION.to_string(),
            default_threshold: DEFAULT_THRESHOLD,
            max_batch: MAX_BATCH,
        }
    }

    /// Setting that handles `item` under `mode`.
    pub fn route(mode: Mode, item: &RequestItem) -> Setting {
        match mode {
            Mode::Mixed if item.title().is_some() => Setting::WS,
            Mode::Mixed => Setting::WoS,
            Mode::WithSections => Setting::WS,
            Mode::WithoutSections => Setting::WoS,
        }
    }

    pub fn classify(&self, request: &ClassifyRequest) -> Result<Vec<ClassifyResult>> {
        request.validate()?;
        request
            .items
            .iter()
            .enumerate()
            .map(|(index, item)| {
                let setting = Self::route(request.mode, item);
                let bundle = self.bundle(setting)?;
                let input = format_input(item.title(), &item.context, setting);
                let (z, prediction) = bundle.predict(&input)?;
                let schema = &bundle.schema;
                let experts = bundle
                    .experts
                    .iter()
                    .zip(z.iter())
                    .map(|(e, p)| {
                        Ok(ExpertScore {
                            class: schema.class_name(e.target_class)?.to_string(),
                            variant: e.variant,
                            probability: *p,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let confidence = prediction.probabilities[prediction.label];
                let (reliable, cito) =
                    thresholded_iri(schema, &prediction.probabilities, prediction.label, request.threshold)?;
                Ok(ClassifyResult {
                    index,
                    section: item.section.clone(),
                    context: item.context.clone(),
                    setting,
                    missing_section: input.fallback,
                    experts,
                    label: schema.class_name(prediction.label)?.to_string(),
                    probabilities: prediction.probabilities,
                    confidence,
                    reliable,
                    cito,
                })
            })
            .collect()
    }

    pub fn explain(&self, request: &ClassifyRequest) -> Result<Vec<InstanceReport>> {
        request.validate()?;
        request
            .items
            .iter()
            .enumerate()
            .map(|(index, item)| {
                let setting = Self::route(request.mode, item);
                let title = if setting == Setting::WS { item.title() } else { None };
                self.bundle(setting)?.explain(index, title, &item.context)
            })
            .collect()
    }
}

/// Serialized `/classify` response body. Downloads and CLI output use the
/// same bytes.
pub fn results_json(results: &[ClassifyResult]) -> Result<String> {
    Ok(serde_json::to_string_pretty(results)?)
}
