use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::AnchorTable;
use crate::error::{invalid, Result};
use crate::ingest::{EmbeddingStore, VoteKind, VoteTable};
use crate::scorers::Scorer;
use crate::stats::quantile_sorted;

pub const DEFAULT_BANDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// Lower and upper similarity edge of the band.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub approvals: usize,
    /// `None` for an empty band.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub pairs: usize,
    pub bands: Vec<Band>,
}

/// Approval rate within quantile bands of similarity.
///
/// Edges are the pooled `j/n_bands` quantiles. Every band is closed on the
/// left and open on the right except the last, which also holds the maximum.
pub fn bands_from_pairs(pairs: &[(f64, bool)], n_bands: usize) -> Result<BandTable> {
    if n_bands == 0 {
        return Err(invalid("band count must be at least 1"));
    }
    if pairs.len() < n_bands {
        return Err(invalid(format!("{} similarity pairs cannot fill {n_bands} bands", pairs.len())));
    }
    let mut sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (0..=n_bands).map(|j| quantile_sorted(&sorted, j as f64 / n_bands as f64)).collect();
    let inner = &edges[1..n_bands];
    let mut counts = vec![(0usize, 0usize); n_bands];
    for &(s, approve) in pairs {
        let b = inner.partition_point(|&e| e <= s);
        counts[b].0 += 1;
        counts[b].1 += approve as usize;
    }
    let bands = counts
        .iter()
        .enumerate()
        .map(|(j, &(count, approvals))| Band {
            lo: edges[j],
            hi: edges[j + 1],
            count,
            approvals,
            rate: (count > 0).then(|| approvals as f64 / count as f64),
        })
        .collect();
    Ok(BandTable { pairs: pairs.len(), bands })
}

/// Scores every (participant, statement) vote against the participant's
/// anchor and bands the pooled pairs. Anchors come from `anchors` when
/// present and from the store under the participant's id otherwise.
pub fn proximity_bands(
    votes: &VoteTable,
    store: &EmbeddingStore,
    anchors: &AnchorTable,
    scorer: &Scorer,
    n_bands: usize,
) -> Result<BandTable> {
    if votes.kind() != VoteKind::Binary {
        return Err(invalid("proximity bands need binary votes"));
    }
    let pairs = votes
        .votes()
        .par_iter()
        .map(|v| {
            let a = match anchors.get(&v.participant) {
                Some(a) => a,
                None => store.require(&v.participant)?,
            };
            Ok((scorer.score(a, store.require(&v.statement)?)?, v.value == 1))
        })
        .collect::<Result<Vec<_>>>()?;
    bands_from_pairs(&pairs, n_bands)
}
