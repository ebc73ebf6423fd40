use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cosine;

/// Training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    #[default]
    BradleyTerry,
    /// In-batch contrastive loss: each triplet's positive against its own
    /// negative and the other triplets' positives.
    Infonce {
        temperature: f64,
    },
}

impl Loss {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Infonce { temperature } if !(temperature > 0.0 && temperature.is_finite()) => {
                Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")))
            }
            _ => Ok(()),
        }
    }
}

/// `log(1 + e^{−m})`, evaluated as `log1p(e^{−|m|}) + max(−m, 0)`.
pub fn bt_loss(m: f64) -> f64 {
    (-m.abs()).exp().ln_1p() + (-m).max(0.0)
}

/// `dℓ/dm = −σ(−m)`
pub fn bt_grad_margin(m: f64) -> f64 {
    -sigmoid(-m)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log Σ exp(z)` with the maximum factored out.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy with the positive at index 0 of `logits`.
///
/// When the positive holds the largest logit the loss is
/// `log1p(Σ_{c>0} e^{z_c − z_0})`, which keeps saturated values such as
/// `e^{-40}` that `lse − z_0` would round to zero.
pub fn softmax_xent_first(logits: &[f64]) -> f64 {
    let z0 = logits[0];
    if logits.iter().all(|&z| z <= z0) {
        logits[1..].iter().map(|&z| (z - z0).exp()).sum::<f64>().ln_1p()
    } else {
        log_sum_exp(logits) - z0
    }
}

/// Contrastive loss of `positive` against `negatives` under cosine similarity
/// at temperature `tau`.
pub fn infonce_loss(anchor: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::InvalidInput("InfoNCE needs at least one negative".into()));
    }
    Loss::Infonce { temperature: tau }.validate()?;
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(cosine(anchor, positive)? / tau);
    for n in negatives {
        logits.push(cosine(anchor, n)? / tau);
    }
    Ok(softmax_xent_first(&logits))
}
