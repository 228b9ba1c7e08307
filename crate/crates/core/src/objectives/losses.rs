use ndarray::{Array1, Array2};

use crate::encoder::ops::log_sum_exp;
use crate::error::{Error, Result};

fn check_finite(what: &str, v: &Array1<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Contrastive loss of one anchor: the negative log-probability of the
/// positive among the positive and the negatives, scoring by dot product.
pub fn cp_loss(x_a: &Array1<f64>, x_b: &Array1<f64>, negatives: &[Array1<f64>]) -> Result<f64> {
    check_finite("anchor", x_a)?;
    check_finite("positive", x_b)?;
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    for v in std::iter::once(x_b).chain(negatives) {
        if v.len() != x_a.len() {
            return Err(Error::Shape(format!(
                "representation of width {} vs {}",
                v.len(),
                x_a.len()
            )));
        }
        check_finite("negative", v)?;
        logits.push(x_a.dot(v));
    }
    Ok(cp_loss_from_logits(&logits))
}

/// `logsumexp(logits) - logits[0]`, clamped at zero against rounding.
pub fn cp_loss_from_logits(logits: &[f64]) -> f64 {
    (log_sum_exp(logits) - logits[0]).max(0.0)
}

/// In-batch contrastive loss for anchors `xa` (rows) against candidates `xb`
/// (rows), where row `i` of `xb` is the positive for anchor `i` and every
/// other row a negative. Returns the mean loss and the gradients with respect
/// to `xa` and `xb`.
pub fn in_batch_cp(xa: &Array2<f64>, xb: &Array2<f64>, temperature: f64) -> (f64, Array2<f64>, Array2<f64>) {
    let n = xa.nrows();
    let logits = xa.dot(&xb.t()) / temperature;
    let mut dlogits = Array2::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        let row: Vec<f64> = logits.row(i).to_vec();
        let lse = log_sum_exp(&row);
        total += (lse - row[i]).max(0.0);
        for j in 0..n {
            dlogits[(i, j)] = (row[j] - lse).exp();
        }
        dlogits[(i, i)] -= 1.0;
    }
    let scale = 1.0 / (n as f64 * temperature);
    dlogits *= scale;
    let dxa = dlogits.dot(xb);
    let dxb = dlogits.t().dot(xa);
    (total / n as f64, dxa, dxb)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(rep_1 . rep_2)` against `label`.
pub fn mtb_loss(rep_1: &Array1<f64>, rep_2: &Array1<f64>, label: u8) -> f64 {
    mtb_loss_from_logit(rep_1.dot(rep_2), label).0
}

/// Loss and its derivative with respect to the logit.
pub fn mtb_loss_from_logit(z: f64, label: u8) -> (f64, f64) {
    let y = f64::from(label.min(1));
    let loss = if label >= 1 { softplus(-z) } else { softplus(z) };
    (loss, sigmoid(z) - y)
}
