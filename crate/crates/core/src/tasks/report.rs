use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::Metric;
use crate::corpus::LinkedSentence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub metric: Metric,
    pub per_seed: Vec<f64>,
    pub median: f64,
    pub seeds: Vec<u64>,
    /// Episodes per seed, for few-shot evaluation.
    #[serde(default)]
    pub episodes: Option<u64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: usize,
    pub gold: String,
    pub pred: String,
}

/// One `{id, gold, pred}` object per line; `id` is the sentence index.
pub fn predictions_jsonl(sentences: &[LinkedSentence], labels: &[String], pred: &[usize]) -> String {
    let mut out = String::new();
    for (i, (s, &p)) in sentences.iter().zip(pred).enumerate() {
        let row = Prediction {
            id: i,
            gold: s.relation_id.clone().unwrap_or_default(),
            pred: labels.get(p).cloned().unwrap_or_default(),
        };
        writeln!(out, "{}", serde_json::to_string(&row).expect("row serializes")).expect("write to string");
    }
    out
}
