//! Masked-token prediction through the tied input embedding.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::encoder::ops::log_sum_exp;
use crate::encoder::ParamSet;
use crate::error::{Error, Result};

/// Output bias of the prediction layer, `1 x V`.
pub const MLM_BIAS: &str = "mlm.bias";

/// Registers a zero output bias unless present.
pub fn ensure_mlm_head(params: &mut ParamSet) {
    if !params.contains(MLM_BIAS) {
        let v = params["tok_emb"].nrows();
        params.insert(MLM_BIAS, Array2::zeros((1, v)));
    }
}

/// Summed (not averaged) cross-entropy of one sentence's labeled positions
/// together with the gradients of that sum.
pub struct MlmTerms {
    pub sum: f64,
    pub count: usize,
    /// Same shape as the hidden states; zero at unlabeled positions.
    pub d_hidden: Array2<f64>,
    pub d_tok_emb: Array2<f64>,
    pub d_bias: Array2<f64>,
}

/// Cross-entropy of `softmax(h E^T + b)` at every position with a label.
/// Gradients are scaled by `grad_scale` so a batch can average over all of
/// its labeled positions.
pub fn mlm_terms(
    hidden: ArrayView2<f64>,
    labels: &[Option<usize>],
    tok_emb: &Array2<f64>,
    bias: &Array2<f64>,
    grad_scale: f64,
) -> Result<MlmTerms> {
    let v = tok_emb.nrows();
    if labels.len() != hidden.nrows() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: hidden.nrows(),
        });
    }
    if bias.shape() != [1, v] || tok_emb.ncols() != hidden.ncols() {
        return Err(Error::Shape(
            "prediction head does not match the hidden width or vocabulary".into(),
        ));
    }
    let mut terms = MlmTerms {
        sum: 0.0,
        count: 0,
        d_hidden: Array2::zeros(hidden.raw_dim()),
        d_tok_emb: Array2::zeros(tok_emb.raw_dim()),
        d_bias: Array2::zeros(bias.raw_dim()),
    };
    for (pos, label) in labels.iter().enumerate() {
        let Some(y) = *label else { continue };
        if y >= v {
            return Err(Error::LabelRange { label: y, vocab: v });
        }
        let h = hidden.row(pos);
        let z: Array1<f64> = tok_emb.dot(&h) + bias.row(0);
        let lse = log_sum_exp(z.as_slice().expect("contiguous"));
        terms.sum += lse - z[y];
        terms.count += 1;
        let mut dz = z.mapv(|x| (x - lse).exp());
        dz[y] -= 1.0;
        dz *= grad_scale;
        terms.d_hidden.row_mut(pos).assign(&dz.dot(tok_emb));
        terms.d_tok_emb += &dz.view().insert_axis(Axis(1)).dot(&h.insert_axis(Axis(0)));
        let mut db = terms.d_bias.row_mut(0);
        db += &dz;
    }
    Ok(terms)
}

/// Mean cross-entropy over the labeled positions; zero when none are labeled.
pub fn mlm_loss(
    hidden: ArrayView2<f64>,
    labels: &[Option<usize>],
    tok_emb: &Array2<f64>,
    bias: &Array2<f64>,
) -> Result<f64> {
    let t = mlm_terms(hidden, labels, tok_emb, bias, 1.0)?;
    Ok(if t.count == 0 { 0.0 } else { t.sum / t.count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_v() {
        let e = Array2::zeros((7, 3));
        let b = Array2::zeros((1, 7));
        let h = array![[0.3, -1.0, 2.0]];
        let l = mlm_loss(h.view(), &[Some(4)], &e, &b).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_labels() {
        let e = Array2::ones((5, 2));
        let b = Array2::zeros((1, 5));
        let h = Array2::ones((3, 2));
        let t = mlm_terms(h.view(), &[None, None, None], &e, &b, 1.0).unwrap();
        assert_eq!(t.count, 0);
        assert_eq!(t.sum, 0.0);
        assert!(t.d_hidden.iter().all(|&x| x == 0.0));
        assert!(t.d_tok_emb.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn label_out_of_range() {
        let e = Array2::zeros((3, 2));
        let b = Array2::zeros((1, 3));
        let h = Array2::zeros((1, 2));
        assert!(matches!(
            mlm_loss(h.view(), &[Some(3)], &e, &b),
            Err(Error::LabelRange { label: 3, vocab: 3 })
        ));
    }
}
