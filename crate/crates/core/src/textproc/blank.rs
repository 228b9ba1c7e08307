use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::vocab::{BLANK, E1, E1_END, E2, E2_END};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Probability of hiding each entity mention behind `[BLANK]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlankPolicy {
    pub p_blank: f64,
    pub seed: u64,
}

impl BlankPolicy {
    pub fn new(p_blank: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_blank) {
            return Err(Error::Config(format!("p_blank {p_blank} outside [0, 1]")));
        }
        Ok(BlankPolicy { p_blank, seed })
    }

    pub fn apply(&self, tokens: &[String]) -> Result<Vec<String>> {
        let mut rng = rng::stream(self.seed, 0, 0);
        apply_blank_mask(tokens, self.p_blank, &mut rng)
    }
}

/// Locates the `[E1] .. [/E1]` and `[E2] .. [/E2]` regions as
/// `(open, close)` index pairs, checking the marker structure.
pub fn marker_regions(tokens: &[String]) -> Result<[(usize, usize); 2]> {
    let find = |tok: &str| -> Result<usize> {
        let mut hits = tokens.iter().enumerate().filter(|(_, t)| *t == tok).map(|(i, _)| i);
        match (hits.next(), hits.next()) {
            (Some(i), None) => Ok(i),
            (None, _) => Err(Error::Markers(format!("missing {tok}"))),
            _ => Err(Error::Markers(format!("repeated {tok}"))),
        }
    };
    let e1 = (find(E1)?, find(E1_END)?);
    let e2 = (find(E2)?, find(E2_END)?);
    for (open, close) in [e1, e2] {
        if close <= open + 1 {
            return Err(Error::Markers(format!("empty or inverted region at {open}..{close}")));
        }
    }
    let nested = |a: (usize, usize), b: (usize, usize)| a.0 < b.0 && b.0 < a.1;
    if nested(e1, e2) || nested(e2, e1) {
        return Err(Error::Markers("interleaved marker regions".into()));
    }
    Ok([e1, e2])
}

/// Replaces each entity interior by a single `[BLANK]` with probability
/// `p_blank`. Exactly two uniforms are drawn, head first.
pub fn apply_blank_mask(tokens: &[String], p_blank: f64, rng: &mut Rng) -> Result<Vec<String>> {
    let regions = marker_regions(tokens)?;
    let hide = [rng.random::<f64>() < p_blank, rng.random::<f64>() < p_blank];
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        match regions.iter().zip(hide).find(|((open, _), _)| *open == i) {
            Some(((open, close), true)) => {
                out.push(tokens[*open].clone());
                out.push(BLANK.to_owned());
                out.push(tokens[*close].clone());
                i = close + 1;
            }
            _ => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    const SPACEX: &str = "[CLS] [E1] SpaceX [/E1] was founded by [E2] Elon Musk [/E2] . [SEP]";

    #[test]
    fn extremes() {
        let t = toks(SPACEX);
        assert_eq!(BlankPolicy::new(0.0, 1).unwrap().apply(&t).unwrap(), t);
        assert_eq!(
            BlankPolicy::new(1.0, 1).unwrap().apply(&t).unwrap().join(" "),
            "[CLS] [E1] [BLANK] [/E1] was founded by [E2] [BLANK] [/E2] . [SEP]"
        );
        assert!(BlankPolicy::new(1.5, 0).is_err());
    }

    #[test]
    fn malformed_markers() {
        for bad in [
            "[CLS] [E1] a [/E1] b [SEP]",
            "[CLS] [E1] a [E2] b [/E1] c [/E2] [SEP]",
            "[CLS] [E1] [/E1] [E2] b [/E2] [SEP]",
            "[CLS] [E1] a [/E1] [E1] a [/E1] [E2] b [/E2] [SEP]",
        ] {
            assert!(
                apply_blank_mask(&toks(bad), 0.5, &mut rng::stream(0, 0, 0)).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let t = toks(SPACEX);
        let a = apply_blank_mask(&t, 0.5, &mut rng::stream(3, 0, 9)).unwrap();
        let b = apply_blank_mask(&t, 0.5, &mut rng::stream(3, 0, 9)).unwrap();
        assert_eq!(a, b);
    }
}
