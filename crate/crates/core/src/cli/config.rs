//! Run configuration: one TOML document, every section optional, unknown
//! keys rejected. `--set a.b=value` edits the parsed tree before it is
//! checked, with `value` read as a TOML value when possible and as a string
//! otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::objectives::{MlmStageConfig, Objective, OptimizerConfig};
use crate::sampler::SamplerConfig;
use crate::textproc::InputSetting;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every random stream derives from this value.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub data: DataSection,
    /// Architecture for fresh encoders; `vocab_size = 0` takes the
    /// vocabulary size.
    pub encoder: EncoderConfig,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    pub fewshot: FewshotSection,
    pub ablate: AblateSection,
    pub dump: DumpSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            output_dir: PathBuf::from("runs/default"),
            dataset: DatasetSection::default(),
            data: DataSection::default(),
            encoder: EncoderConfig::default(),
            pretrain: PretrainSection::default(),
            finetune: FinetuneSection::default(),
            fewshot: FewshotSection::default(),
            ablate: AblateSection::default(),
            dump: DumpSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub relations: usize,
    pub templates: usize,
    pub fillers: usize,
    pub count: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            relations: 8,
            templates: 8,
            fillers: 40,
            count: 1600,
        }
    }
}

/// Inputs of `build-dataset`: either a generated corpus or a linked corpus
/// plus a triple store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub synthetic: Option<SyntheticSection>,
    pub corpus: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    /// Entity pairs (`head<TAB>tail` per line) to keep out of pre-training.
    pub test_pairs: Option<PathBuf>,
    /// Also drop sentences whose reversed pair is listed.
    pub symmetric_leak: bool,
    /// Fractions of labeled sentences split off as dev and test; their
    /// entity pairs are then kept out of the pre-training corpus too.
    pub dev_fraction: f64,
    pub test_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            synthetic: None,
            corpus: None,
            triples: None,
            test_pairs: None,
            symmetric_leak: false,
            dev_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Labeled pre-training corpus.
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Evaluation corpus for few-shot episodes.
    pub fewshot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub objective: Objective,
    pub steps: u64,
    pub temperature: f64,
    pub mtb_mlm: bool,
    /// `sampler.seed` is replaced by the run seed.
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
    pub mlm_stage: MlmStageConfig,
    /// Unlabeled sentences for the MLM stage; `data.corpus` when unset.
    pub mlm_stage_corpus: Option<PathBuf>,
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection {
            objective: Objective::Cp,
            steps: 100,
            temperature: 1.0,
            mtb_mlm: false,
            sampler: SamplerConfig::default(),
            optimizer: OptimizerConfig::default(),
            mlm_stage: MlmStageConfig::default(),
            mlm_stage_corpus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub setting: InputSetting,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub na_label: Option<String>,
    pub optimizer: OptimizerConfig,
    pub seeds: Vec<u64>,
    /// Per-relation fraction of the training set kept.
    pub subsample: f64,
    /// Pre-trained encoder; a fresh one when absent.
    pub checkpoint: Option<PathBuf>,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection {
            setting: InputSetting::ContextMention,
            epochs: 6,
            batch_size: 16,
            max_len: 64,
            na_label: None,
            optimizer: OptimizerConfig::default(),
            seeds: vec![42, 43, 44, 45, 46],
            subsample: 1.0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewshotSection {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries: usize,
    pub episodes: u64,
    pub setting: InputSetting,
    pub max_len: usize,
    /// Defaults to the run seed alone.
    pub seeds: Option<Vec<u64>>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for FewshotSection {
    fn default() -> Self {
        FewshotSection {
            n_way: 5,
            k_shot: 1,
            queries: 1,
            episodes: 1000,
            setting: InputSetting::ContextMention,
            max_len: 64,
            seeds: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub settings: Vec<InputSetting>,
    /// Any of `random`, `cp`, `mtb`.
    pub inits: Vec<String>,
    pub cp_checkpoint: Option<PathBuf>,
    pub mtb_checkpoint: Option<PathBuf>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            settings: InputSetting::ALL.to_vec(),
            inits: vec!["random".into(), "cp".into()],
            cp_checkpoint: None,
            mtb_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpSection {
    pub batches: u64,
}

impl Default for DumpSection {
    fn default() -> Self {
        DumpSection { batches: 2 }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    toml::from_str::<Wrap>(&format!("v = {raw}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_owned()))
}

/// Applies one `key.path=value` override to a parsed document.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("non-empty");
    let mut table = doc;
    for p in path {
        let entry = table
            .entry((*p).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    table.insert((*last).to_owned(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads `path` (or starts from defaults when `None`) and applies the
    /// overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
