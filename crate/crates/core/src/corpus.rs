//! Citation-intent datasets: label schemas, JSON-lines ingestion, WS/WoS
//! input formatting and one-vs-all binarization.
//!
//! Input records are JSON objects, one per line. Field names are resolved
//! through [`FieldMap`], which accepts both the SciCite and the ACL-ARC
//! public layouts:
//!
//! | role        | accepted keys (first match wins)                        |
//! |-------------|---------------------------------------------------------|
//! | context     | `string`, `text`, `context`                             |
//! | section     | `sectionName`, `section_name`, `section_title`, `section` |
//! | label       | `label`, `intent` (class name or integer index)         |
//! | split       | `split`                                                 |
//! | confidence  | `label_confidence`, `confidence`                        |

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const CITO_PREFIX: &str = "http://purl.org/spar/cito/";

/// Generic property used when a classification is not reliable enough.
pub const CITES_FOR_INFORMATION: &str = "http://purl.org/spar/cito/citesForInformation";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    pub cito: String,
}

/// Ordered label set of a dataset. The position of a class is its identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSchema {
    pub dataset_name: String,
    #[serde(rename = "class")]
    classes: Vec<ClassDef>,
}

impl LabelSchema {
    pub fn new(dataset_name: impl Into<String>, classes: Vec<ClassDef>) -> Result<Self> {
        let schema = LabelSchema {
            dataset_name: dataset_name.into(),
            classes,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 classes, got {}",
                self.classes.len()
            )));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(Error::Schema(format!("class {i} has an empty name")));
            }
            if c.cito.trim().is_empty() {
                return Err(Error::Schema(format!("class {:?} has no CiTO IRI", c.name)));
            }
            let dup = self.classes[..i]
                .iter()
                .any(|o| o.name.trim().eq_ignore_ascii_case(c.name.trim()));
            if dup {
                return Err(Error::Schema(format!("duplicate class {:?}", c.name)));
            }
        }
        Ok(())
    }

    /// SciCite, in the order of the public release's integer labels.
    pub fn scicite() -> Self {
        Self::builtin(
            "scicite",
            &[
                ("Method", "usesMethodIn"),
                ("Background", "obtainsBackgroundFrom"),
                ("Result", "usesConclusionsFrom"),
            ],
        )
    }

    pub fn acl_arc() -> Self {
        Self::builtin(
            "acl-arc",
            &[
                ("Background", "obtainsBackgroundFrom"),
                ("Uses", "usesMethodIn"),
                ("CompareOrContrast", "discusses"),
                ("Extends", "extends"),
                ("Motivation", "obtainsSupportFrom"),
                ("Future", "citesAsPotentialSolution"),
            ],
        )
    }

    fn builtin(name: &str, entries: &[(&str, &str)]) -> Self {
        LabelSchema {
            dataset_name: name.to_string(),
            classes: entries
                .iter()
                .map(|(n, p)| ClassDef {
                    name: n.to_string(),
                    cito: format!("{CITO_PREFIX}{p}"),
                })
                .collect(),
        }
    }

    /// Resolves `scicite`, `acl-arc` or a path to a TOML schema file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec.to_ascii_lowercase().as_str() {
            "scicite" => Ok(Self::scicite()),
            "acl-arc" | "aclarc" | "acl_arc" => Ok(Self::acl_arc()),
            _ => Self::from_toml_file(spec),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: LabelSchema =
            toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.name.as_str())
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn class_name(&self, index: usize) -> Result<&str> {
        self.classes
            .get(index)
            .map(|c| c.name.as_str())
            .ok_or(Error::ClassOutOfRange {
                index,
                classes: self.classes.len(),
            })
    }

    /// Case-insensitive lookup, ignoring surrounding whitespace.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.classes
            .iter()
            .position(|c| c.name.trim().eq_ignore_ascii_case(name))
    }

    pub fn cito_for(&self, index: usize) -> Result<&str> {
        self.classes
            .get(index)
            .map(|c| c.cito.as_str())
            .ok_or(Error::ClassOutOfRange {
                index,
                classes: self.classes.len(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Some(Split::Train),
            "val" | "dev" | "valid" | "validation" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::parse(s).ok_or_else(|| Error::Config(format!("unknown split {s:?} (train, val, test)")))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the section title is prepended to the citation context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    WS,
    WoS,
}

impl Setting {
    pub fn parse(s: &str) -> Option<Setting> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ws" => Some(Setting::WS),
            "wos" => Some(Setting::WoS),
            _ => None,
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::parse(s).ok_or_else(|| Error::Config(format!("unknown setting {s:?} (WS, WoS)")))
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::WS => f.write_str("WS"),
            Setting::WoS => f.write_str("WoS"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CitationInstance {
    pub section_title: Option<String>,
    pub context: String,
    pub label: usize,
    pub annotation_confidence: Option<f64>,
    pub split: Split,
}

impl CitationInstance {
    pub fn has_section_title(&self) -> bool {
        self.section_title
            .as_deref()
            .is_some_and(|s| !s.trim().is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormattedInput {
    pub text: String,
    pub setting: Setting,
    /// WS formatting was requested but no section title was available.
    #[serde(default)]
    pub fallback: bool,
}

/// Formats a context with or without its section title.
///
/// A missing or blank title in the WS setting yields the bare context.
pub fn format_input(section_title: Option<&str>, context: &str, setting: Setting) -> FormattedInput {
    let title = section_title.filter(|s| !s.trim().is_empty());
    match (setting, title) {
        (Setting::WS, Some(title)) => FormattedInput {
            text: format!("{title}. {context}"),
            setting,
            fallback: false,
        },
        (Setting::WS, None) => FormattedInput {
            text: context.to_string(),
            setting,
            fallback: true,
        },
        (Setting::WoS, _) => FormattedInput {
            text: context.to_string(),
            setting,
            fallback: false,
        },
    }
}

pub fn format_instance(instance: &CitationInstance, setting: Setting) -> FormattedInput {
    format_input(instance.section_title.as_deref(), &instance.context, setting)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDataset {
    pub target_class: usize,
    pub items: Vec<(FormattedInput, u8)>,
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|(_, k)| *k == 1).count()
    }
}

/// One-vs-all view of a split: `k = 1` exactly where the label is `target_class`.
pub fn ova_binarize(
    split: &[CitationInstance],
    target_class: usize,
    setting: Setting,
) -> BinaryDataset {
    BinaryDataset {
        target_class,
        items: split
            .iter()
            .map(|inst| (format_instance(inst, setting), u8::from(inst.label == target_class)))
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: LabelSchema,
    pub instances: Vec<CitationInstance>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<CitationInstance> {
        self.instances
            .iter()
            .filter(|i| i.split == split)
            .cloned()
            .collect()
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for inst in &self.instances {
            counts[inst.split as usize] += 1;
        }
        counts
    }

    pub fn label_counts(&self, split: Option<Split>) -> Vec<usize> {
        let mut counts = vec![0; self.schema.num_classes()];
        for inst in &self.instances {
            if split.is_none_or(|s| inst.split == s) {
                counts[inst.label] += 1;
            }
        }
        counts
    }

    /// Writes the dataset in the canonical JSON-lines layout read by [`load_dataset`].
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for inst in &self.instances {
            let mut obj = serde_json::Map::new();
            obj.insert("string".into(), Value::String(inst.context.clone()));
            if let Some(s) = &inst.section_title {
                obj.insert("sectionName".into(), Value::String(s.clone()));
            }
            obj.insert(
                "label".into(),
                Value::String(self.schema.class_name(inst.label)?.to_string()),
            );
            obj.insert("split".into(), Value::String(inst.split.to_string()));
            if let Some(c) = inst.annotation_confidence {
                obj.insert("label_confidence".into(), serde_json::json!(c));
            }
            serde_json::to_writer(&mut out, &Value::Object(obj))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Key aliases for each record field.
#[derive(Clone, Debug)]
pub struct FieldMap {
    pub context: &'static [&'static str],
    pub section: &'static [&'static str],
    pub label: &'static [&'static str],
    pub split: &'static [&'static str],
    pub confidence: &'static [&'static str],
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            context: &["string", "text", "context"],
            section: &["sectionName", "section_name", "section_title", "section"],
            label: &["label", "intent"],
            split: &["split"],
            confidence: &["label_confidence", "confidence"],
        }
    }
}

fn first<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k)).filter(|v| !v.is_null())
}

/// Parses one JSON-lines record. `line` is 1-based and only used in errors.
pub fn parse_record(
    text: &str,
    line: usize,
    schema: &LabelSchema,
    fields: &FieldMap,
    default_split: Option<Split>,
) -> Result<CitationInstance> {
    let parse_err = |message: String| Error::Parse { line, message };
    let value: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err("expected a JSON object".into()))?;

    let context = first(obj, fields.context)
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err("missing context text".into()))?;
    if context.trim().is_empty() {
        return Err(Error::EmptyContext { line });
    }

    let section_title = match first(obj, fields.section) {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(parse_err("section title must be a string".into())),
    };

    let label = match first(obj, fields.label) {
        Some(Value::String(s)) => schema.index_of(s).ok_or_else(|| Error::UnknownLabel {
            line,
            label: s.clone(),
        })?,
        Some(Value::Number(n)) => {
            let idx = n
                .as_u64()
                .ok_or_else(|| parse_err(format!("label index {n} is not a non-negative integer")))?
                as usize;
            if idx >= schema.num_classes() {
                return Err(Error::UnknownLabel {
                    line,
                    label: n.to_string(),
                });
            }
            idx
        }
        _ => return Err(parse_err("missing label".into())),
    };

    let split = match first(obj, fields.split) {
        Some(Value::String(s)) => {
            Split::parse(s).ok_or_else(|| parse_err(format!("unknown split {s:?}")))?
        }
        Some(_) => return Err(parse_err("split must be a string".into())),
        None => default_split.ok_or_else(|| parse_err("missing split".into()))?,
    };

    let annotation_confidence = match first(obj, fields.confidence) {
        None => None,
        Some(v) => {
            let c = v
                .as_f64()
                .ok_or_else(|| parse_err("confidence must be a number".into()))?;
            if !(0.0..=1.0).contains(&c) {
                return Err(parse_err(format!("confidence {c} outside [0, 1]")));
            }
            Some(c)
        }
    };

    Ok(CitationInstance {
        section_title,
        context: context.to_string(),
        label,
        annotation_confidence,
        split,
    })
}

/// Reads records, collecting per-line rejections instead of stopping at the first.
pub fn read_records<R: BufRead>(
    reader: R,
    schema: &LabelSchema,
    default_split: Option<Split>,
) -> Result<(Vec<CitationInstance>, Vec<Error>)> {
    let fields = FieldMap::default();
    let mut instances = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, line_no, schema, &fields, default_split) {
            Ok(inst) => instances.push(inst),
            Err(e) => rejected.push(e),
        }
    }
    Ok((instances, rejected))
}

/// Strict loader: the first rejected line aborts the load.
///
/// Records without a `split` field take the split implied by the file name
/// (`train`, `dev`/`val`/`validation`, `test`), if any.
pub fn load_dataset(path: impl AsRef<Path>, schema: &LabelSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let default_split = split_from_file_name(path);
    let reader = BufReader::new(File::open(path)?);
    let (instances, mut rejected) = read_records(reader, schema, default_split)?;
    if !rejected.is_empty() {
        return Err(rejected.swap_remove(0));
    }
    Ok(Dataset {
        schema: schema.clone(),
        instances,
    })
}

/// Loads either a single JSON-lines file or a directory holding
/// `train.jsonl`, `dev.jsonl` (or `val.jsonl`/`validation.jsonl`) and `test.jsonl`.
pub fn load_dataset_path(path: impl AsRef<Path>, schema: &LabelSchema) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_dir() {
        return load_dataset(path, schema);
    }
    let mut instances = Vec::new();
    for (split, names) in [
        (Split::Train, &["train.jsonl"][..]),
        (Split::Val, &["dev.jsonl", "val.jsonl", "validation.jsonl"][..]),
        (Split::Test, &["test.jsonl"][..]),
    ] {
        let file = names
            .iter()
            .map(|n| path.join(n))
            .find(|p| p.exists())
            .ok_or_else(|| {
                Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("no {split} file in {}", path.display()),
                ))
            })?;
        let reader = BufReader::new(File::open(&file)?);
        let (mut part, mut rejected) = read_records(reader, schema, Some(split))?;
        if !rejected.is_empty() {
            return Err(rejected.swap_remove(0));
        }
        instances.append(&mut part);
    }
    Ok(Dataset {
        schema: schema.clone(),
        instances,
    })
}

fn split_from_file_name(path: &Path) -> Option<Split> {
    let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
    ["train", "validation", "dev", "val", "test"]
        .iter()
        .find(|s| stem.split(|c: char| !c.is_ascii_alphanumeric()).any(|part| part == **s))
        .and_then(|s| Split::parse(s))
}
