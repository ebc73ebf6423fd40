use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TripletData;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::train::{fit, micro_accuracy, TrainConfig};

/// One row of a sweep table: the swept value and test accuracy over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
    /// `std / √seeds`
    pub se: f64,
    pub accuracies: Vec<f64>,
}

impl SweepRow {
    fn from_accuracies(value: usize, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        SweepRow { value, mean, std, se: std / n.sqrt(), accuracies }
    }
}

fn run_grid<F>(values: &[usize], seeds: &[u64], job: F) -> Result<Vec<SweepRow>>
where
    F: Fn(usize, u64) -> Result<f64> + Sync,
{
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one value and one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let accs: Vec<f64> = jobs.par_iter().map(|&(v, s)| job(v, s)).collect::<Result<_>>()?;
    Ok(values.iter().zip(accs.chunks(seeds.len())).map(|(&v, a)| SweepRow::from_accuracies(v, a.to_vec())).collect())
}

/// Test accuracy of a fit at each rank, for each seed.
pub fn sweep_rank(
    ranks: &[usize],
    seeds: &[u64],
    train: &TripletData,
    val: &TripletData,
    test: &TripletData,
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    run_grid(ranks, seeds, |rank, seed| {
        let cfg = TrainConfig { rank, seed, ..config.clone() };
        micro_accuracy(&fit(train, val, &cfg)?.scorer, test)
    })
}

/// Indices of `k` training triplets drawn without replacement, in ascending order.
pub fn subsample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("cannot subsample {k} of {n} training triplets")));
    }
    let mut idx = index::sample(&mut rng::stream(seed, streams::SUBSAMPLE), n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Learning curve: test accuracy after fitting on `k` sampled training triplets.
pub fn sweep_data(
    ks: &[usize],
    seeds: &[u64],
    train: &TripletData,
    val: &TripletData,
    test: &TripletData,
    config: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    for &k in ks {
        subsample_indices(train.len(), k, 0)?;
    }
    run_grid(ks, seeds, |k, seed| {
        let sub = train.subset(&subsample_indices(train.len(), k, seed)?);
        let cfg = TrainConfig { seed, ..config.clone() };
        micro_accuracy(&fit(&sub, val, &cfg)?.scorer, test)
    })
}
