use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ingest::{Authorship, VoteKind, VoteTable};
use crate::linalg::Vector;
use crate::rng::{self, streams};
use crate::stats;

pub const DEFAULT_K_LIST: [usize; 4] = [3, 5, 8, 10];
pub const DEFAULT_KMEANS_SEEDS: usize = 5;
pub const DEFAULT_PERMUTATIONS: usize = 50;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vector>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vector]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

fn seed_plus_plus(points: &[Vector], k: usize, r: &mut rng::Rng) -> Vec<Vector> {
    let mut centroids = vec![points[rng::below(r, points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng::uniform(r, 0.0, total);
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            rng::below(r, points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vector], mut centroids: Vec<Vector>, max_iter: usize) -> KMeans {
    let k = centroids.len();
    let dim = points[0].dim();
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = Vector::from(sums[j].iter().map(|s| s / counts[j] as f64).collect::<Vec<_>>());
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..points.len()).filter(|&i| counts[assign[i]] > 1).max_by(|&x, &y| {
                    let dx = sq_dist(&points[x], &centroids[assign[x]]);
                    let dy = sq_dist(&points[y], &centroids[assign[y]]);
                    dx.total_cmp(&dy).then(y.cmp(&x))
                });
                if let Some(i) = far {
                    counts[assign[i]] -= 1;
                    assign[i] = j;
                    counts[j] = 1;
                    centroids[j] = points[i].clone();
                }
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let inertia = points.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    KMeans { assignments: assign, centroids, inertia, iterations }
}

/// k-means++ seeding followed by Lloyd iterations, keeping the restart with
/// the lowest inertia (the earliest on ties).
pub fn kmeans(points: &[Vector], k: usize, seed: u64, restarts: usize, max_iter: usize) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(invalid(format!("cannot form {k} clusters from {} points", points.len())));
    }
    if restarts == 0 || max_iter == 0 {
        return Err(invalid("k-means needs at least one restart and one iteration"));
    }
    let dim = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(crate::Error::DimensionMismatch { expected: dim, found: p.dim() });
    }
    let mut r = rng::stream(seed, streams::KMEANS);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts {
        let run = lloyd(points, seed_plus_plus(points, k, &mut r), max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub clusters: usize,
    /// Macro average over clusters of the pooled own-cluster approval rate.
    pub within: Option<f64>,
    /// Same for comments by members of other clusters; `None` with one cluster.
    pub across: Option<f64>,
    /// `within − across`, when both are defined.
    pub delta: Option<f64>,
    /// Lift recomputed after each permutation of the cluster labels.
    pub shuffle_deltas: Vec<f64>,
    /// Mean absolute lift over the permutations.
    pub shuffle_mean_abs: Option<f64>,
    pub users_used: usize,
    /// Clustered voters without a single eligible vote.
    pub users_excluded: usize,
    /// Votes whose voter or comment author has no cluster.
    pub skipped_votes: usize,
}

struct Eligible {
    voter: usize,
    author: usize,
    approve: bool,
}

fn lift(votes: &[Eligible], labels: &[usize], k: usize) -> (Option<f64>, Option<f64>) {
    let mut within = vec![(0usize, 0usize); k];
    let mut across = vec![(0usize, 0usize); k];
    for v in votes {
        let c = labels[v.voter];
        let slot = if labels[v.author] == c { &mut within[c] } else { &mut across[c] };
        slot.0 += v.approve as usize;
        slot.1 += 1;
    }
    let macro_rate = |t: &[(usize, usize)]| {
        let rates: Vec<f64> = t.iter().filter(|x| x.1 > 0).map(|&(a, n)| a as f64 / n as f64).collect();
        (!rates.is_empty()).then(|| stats::mean(&rates))
    };
    (macro_rate(&within), macro_rate(&across))
}

/// Approval lift for comments written inside the voter's own cluster.
///
/// Each voter's rate is weighted by their eligible-vote count, which makes
/// the per-cluster rate the pooled ratio of approvals to votes. Only votes
/// that exist count, so unseen comments never enter a denominator.
pub fn cluster_coherence(
    clusters: &HashMap<String, usize>,
    votes: &VoteTable,
    authorship: &Authorship,
    permutations: usize,
    seed: u64,
) -> Result<Coherence> {
    if votes.kind() != VoteKind::Binary {
        return Err(invalid("cluster coherence needs binary votes"));
    }
    let mut users: Vec<&str> = clusters.keys().map(String::as_str).collect();
    users.sort_unstable();
    let index: HashMap<&str, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let labels: Vec<usize> = users.iter().map(|u| clusters[*u]).collect();
    let k = labels.iter().max().map_or(0, |m| m + 1);

    let mut eligible = Vec::new();
    let mut skipped = 0;
    let mut has_vote = vec![false; users.len()];
    for v in votes.votes() {
        let voter = index.get(v.participant.as_str());
        let author = authorship.author_of(&v.statement).and_then(|a| index.get(a));
        match (voter, author) {
            (Some(&voter), Some(&author)) => {
                has_vote[voter] = true;
                eligible.push(Eligible { voter, author, approve: v.value == 1 });
            }
            _ => skipped += 1,
        }
    }
    let used = has_vote.iter().filter(|&&h| h).count();
    let distinct = {
        let mut l = labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    };

    let (within, across) = lift(&eligible, &labels, k);
    let delta = within.zip(across).map(|(w, a)| w - a);
    let mut shuffle_deltas = Vec::new();
    if delta.is_some() {
        let mut r = rng::stream(seed, streams::PERMUTE);
        let mut perm = labels.clone();
        for _ in 0..permutations {
            rng::shuffle(&mut r, &mut perm);
            if let (Some(w), Some(a)) = lift(&eligible, &perm, k) {
                shuffle_deltas.push(w - a);
            }
        }
    }
    let abs: Vec<f64> = shuffle_deltas.iter().map(|d| d.abs()).collect();
    Ok(Coherence {
        clusters: distinct,
        within,
        across,
        delta,
        shuffle_mean_abs: (!abs.is_empty()).then(|| stats::mean(&abs)),
        shuffle_deltas,
        users_used: used,
        users_excluded: users.len() - used,
        skipped_votes: skipped,
    })
}
