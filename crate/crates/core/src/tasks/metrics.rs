use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    MicroF1,
    Accuracy,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::MicroF1 => "micro-f1",
            Metric::Accuracy => "accuracy",
        }
    }
}

fn check_len<T>(gold: &[T], pred: &[T]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    Ok(())
}

/// Fraction of positions where `pred` equals `gold`; 0 for empty input.
pub fn accuracy<T: PartialEq>(gold: &[T], pred: &[T]) -> Result<f64> {
    check_len(gold, pred)?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Micro-averaged F1. With `na`, the no-relation label is left out of both
/// the predicted and the gold totals (the TACRED scorer convention);
/// without it, every position counts and the value equals accuracy.
/// Zero denominators give 0.
pub fn micro_f1<T: PartialEq>(gold: &[T], pred: &[T], na: Option<&T>) -> Result<f64> {
    check_len(gold, pred)?;
    let Some(na) = na else {
        return accuracy(gold, pred);
    };
    let mut correct = 0usize;
    let mut predicted = 0usize;
    let mut relevant = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        if p != na {
            predicted += 1;
            if p == g {
                correct += 1;
            }
        }
        if g != na {
            relevant += 1;
        }
    }
    if correct == 0 {
        return Ok(0.0);
    }
    let precision = correct as f64 / predicted as f64;
    let recall = correct as f64 / relevant as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Middle value of the sorted sample; the mean of the two middle values for
/// even counts. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated() {
        let gold = ["r1", "r1", "r2", "NA", "NA"];
        let pred = ["r1", "r2", "r2", "r1", "NA"];
        let f = micro_f1(&gold, &pred, Some(&"NA")).unwrap();
        assert!((f - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn conventions() {
        assert_eq!(micro_f1(&[1, 2], &[1, 2], Some(&0)).unwrap(), 1.0);
        assert_eq!(micro_f1(&[1, 2], &[0, 0], Some(&0)).unwrap(), 0.0);
        assert!(micro_f1(&[1], &[1, 2], None).is_err());
        assert_eq!(median(&[0.1, 0.9, 0.5, 0.2, 0.8]), Some(0.5));
        assert_eq!(median(&[1.0, 2.0]), Some(1.5));
    }
}
