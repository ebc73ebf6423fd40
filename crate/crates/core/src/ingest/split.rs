use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

/// Seeded shuffle, then cut: val and test get `floor(n·f)` ids each and
/// train takes the remainder.
pub fn split_participants(ids: &[String], fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("split fractions must be positive and sum to 1, got {ft},{fv},{fs}")));
    }
    if ids.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 participants to split, got {}", ids.len())));
    }
    let n = ids.len();
    let mut order = ids.to_vec();
    rng::shuffle(&mut rng::stream(seed, streams::SPLIT), &mut order);
    // The small epsilon keeps products like 10 × 0.2 from flooring to 1.
    let n_val = (n as f64 * fv + 1e-9).floor() as usize;
    let n_test = (n as f64 * fs + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(Split { train: order, val, test, fractions, seed })
}

/// Parses `0.6,0.2,0.2`.
pub fn parse_fractions(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidInput(format!("bad split `{s}`: {e}")))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::InvalidInput(format!("split needs three fractions, got `{s}`"))),
    }
}
