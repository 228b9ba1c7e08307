use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::rng;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            epsilon: 1e-5,
            tolerance: 1e-4,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub passed: bool,
}

/// Compares the analytic gradient returned by `objective` with central
/// differences on a random subsample of coordinates: the largest-magnitude
/// coordinate of every tensor, then `samples / 2` drawn among coordinates
/// with non-zero analytic gradient and `samples / 2` drawn uniformly.
pub fn gradcheck<F>(params: &ParamSet, mut objective: F, opts: GradcheckOptions) -> Result<GradcheckReport>
where
    F: FnMut(&ParamSet) -> Result<(f64, ParamSet)>,
{
    let (loss, analytic) = objective(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let names: Vec<String> = params.iter().map(|(k, _)| k.to_owned()).collect();
    let mut all = Vec::new();
    let mut nonzero = Vec::new();
    let mut coords = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let g = analytic
            .get(name)
            .ok_or_else(|| Error::Shape(format!("objective returned no gradient for {name}")))?;
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in g.iter().enumerate() {
            all.push((ti, i));
            if v != 0.0 {
                nonzero.push((ti, i));
                if best.is_none_or(|(_, b)| v.abs() > b) {
                    best = Some((i, v.abs()));
                }
            }
        }
        if let Some((i, _)) = best {
            coords.push((ti, i));
        }
    }
    let mut rng = rng::stream(opts.seed, 0, 0);
    for _ in 0..opts.samples / 2 {
        if let Some(&c) = nonzero.choose(&mut rng) {
            coords.push(c);
        }
    }
    while coords.len() < opts.samples.max(1) + names.len() && !all.is_empty() {
        coords.push(all[rng.random_range(0..all.len())]);
    }

    let mut work = params.clone();
    let mut worst = (0.0f64, None);
    for &(ti, i) in &coords {
        let name = &names[ti];
        let orig = work[name.as_str()].as_slice().expect("standard layout")[i];
        let mut eval = |x: f64, work: &mut ParamSet| -> Result<f64> {
            work[name.as_str()].as_slice_mut().expect("standard layout")[i] = x;
            let (l, _) = objective(work)?;
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("loss at {name}[{i}]")));
            }
            Ok(l)
        };
        let plus = eval(orig + opts.epsilon, &mut work)?;
        let minus = eval(orig - opts.epsilon, &mut work)?;
        work[name.as_str()].as_slice_mut().expect("standard layout")[i] = orig;
        let numeric = (plus - minus) / (2.0 * opts.epsilon);
        let a = analytic[name.as_str()].as_slice().expect("standard layout")[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > worst.0 || worst.1.is_none() {
            worst = (rel, Some((name.clone(), i)));
        }
    }
    Ok(GradcheckReport {
        max_rel_error: worst.0,
        worst: worst.1,
        checked: coords.len(),
        passed: worst.0 <= opts.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamSet::new();
        p.insert(
            "w",
            Array2::from_shape_fn((20, 15), |(i, j)| (i as f64 - j as f64) * 0.1),
        );
        let report = gradcheck(
            &p,
            |p| Ok((0.5 * p["w"].mapv(|x| x * x).sum(), p.clone())),
            GradcheckOptions {
                tolerance: 1e-8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.checked >= 200);
    }

    #[test]
    fn wrong_gradient_fails() {
        let mut p = ParamSet::new();
        p.insert("w", Array2::from_elem((4, 4), 1.0));
        let report = gradcheck(
            &p,
            |p| {
                let mut g = p.clone();
                g.scale(2.0);
                Ok((0.5 * p["w"].mapv(|x| x * x).sum(), g))
            },
            GradcheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn non_finite_loss_errors() {
        let mut p = ParamSet::new();
        p.insert("w", Array2::zeros((2, 2)));
        assert!(gradcheck(&p, |p| Ok((f64::NAN, p.clone())), GradcheckOptions::default()).is_err());
    }
}
