//! Dataset-level evaluation of scorers.

pub mod bands;
pub mod cluster;
pub mod likert;
pub mod subspace;

use serde::{Deserialize, Serialize};

use crate::data::TripletData;
use crate::error::{invalid, Error, Result};
use crate::hash;
use crate::scorers::Scorer;
use crate::stats::{self, mcnemar_exact, paired_t, wilcoxon_signed_rank, McNemar, PairedT, Wilcoxon};

pub use bands::{bands_from_pairs, proximity_bands, Band, BandTable, DEFAULT_BANDS};
pub use cluster::{cluster_coherence, kmeans, Coherence, KMeans};
pub use likert::{likert_correlation, likert_correlation_by, Exclusion, LikertReport};
pub use subspace::{subspace_report, SubspaceReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantAccuracy {
    pub participant: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Triplet outcomes of one scorer on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub scorer_id: String,
    /// Whether each triplet's margin is strictly positive, in dataset order.
    pub outcomes: Vec<bool>,
    /// Participant index of each triplet.
    pub groups: Vec<usize>,
    /// One entry per participant with at least one triplet, in group order.
    pub participants: Vec<ParticipantAccuracy>,
    /// Triplet-weighted accuracy.
    pub micro: f64,
    /// Participant-weighted accuracy.
    pub macro_accuracy: f64,
}

/// Micro and macro triplet accuracy. A zero margin counts as incorrect.
pub fn triplet_accuracy(scorer: &Scorer, data: &TripletData) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(invalid("accuracy of an empty triplet set"));
    }
    let outcomes: Vec<bool> = scorer.margins(data)?.into_iter().map(|m| m > 0.0).collect();
    let groups: Vec<usize> = data.triplets().iter().map(|t| t.group).collect();
    let names = data.groups();
    let mut correct = vec![0usize; names.len()];
    let mut total = vec![0usize; names.len()];
    for (&ok, &g) in outcomes.iter().zip(&groups) {
        total[g] += 1;
        correct[g] += ok as usize;
    }
    let participants: Vec<ParticipantAccuracy> = (0..names.len())
        .filter(|&g| total[g] > 0)
        .map(|g| ParticipantAccuracy {
            participant: names[g].clone(),
            correct: correct[g],
            total: total[g],
            accuracy: correct[g] as f64 / total[g] as f64,
        })
        .collect();
    let micro = outcomes.iter().filter(|&&o| o).count() as f64 / outcomes.len() as f64;
    let per: Vec<f64> = participants.iter().map(|p| p.accuracy).collect();
    Ok(EvalReport {
        dataset_id: data.content_hash(),
        scorer_id: hash::json_sha256(scorer)?,
        outcomes,
        groups,
        participants,
        micro,
        macro_accuracy: stats::mean(&per),
    })
}

/// Paired comparison of two scorers on the same triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n_triplets: usize,
    pub n_participants: usize,
    pub macro_a: f64,
    pub macro_b: f64,
    /// Triplets A gets right and B gets wrong.
    pub b: u64,
    /// Triplets B gets right and A gets wrong.
    pub c: u64,
    pub mcnemar: McNemar,
    /// `None` when every participant's accuracy difference is zero.
    pub wilcoxon: Option<Wilcoxon>,
    /// `None` when the differences have zero variance.
    pub paired_t: Option<PairedT>,
    /// Shares of participants where A is more, equally or less accurate than B.
    pub wins: f64,
    pub ties: f64,
    pub losses: f64,
}

fn undefined_as_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per-participant accuracy tests plus McNemar on the discordant triplets.
pub fn paired_model_comparison(a: &[bool], b: &[bool], groups: &[usize]) -> Result<Comparison> {
    if a.len() != b.len() || a.len() != groups.len() {
        return Err(invalid(format!(
            "outcome lists cover different triplets ({}, {} and {} groups)",
            a.len(),
            b.len(),
            groups.len()
        )));
    }
    if a.is_empty() {
        return Err(invalid("no triplets to compare"));
    }
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let mut acc = vec![(0usize, 0usize, 0usize); n_groups];
    let (mut disc_b, mut disc_c) = (0u64, 0u64);
    for ((&x, &y), &g) in a.iter().zip(b).zip(groups) {
        acc[g].0 += x as usize;
        acc[g].1 += y as usize;
        acc[g].2 += 1;
        match (x, y) {
            (true, false) => disc_b += 1,
            (false, true) => disc_c += 1,
            _ => {}
        }
    }
    let pairs: Vec<(f64, f64)> =
        acc.iter().filter(|t| t.2 > 0).map(|&(x, y, n)| (x as f64 / n as f64, y as f64 / n as f64)).collect();
    let np = pairs.len() as f64;
    let share = |f: fn(f64, f64) -> bool| pairs.iter().filter(|(x, y)| f(*x, *y)).count() as f64 / np;
    let t = if pairs.len() < 2 { None } else { undefined_as_none(paired_t(&pairs))? };
    Ok(Comparison {
        n_triplets: a.len(),
        n_participants: pairs.len(),
        macro_a: stats::mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>()),
        macro_b: stats::mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()),
        b: disc_b,
        c: disc_c,
        mcnemar: mcnemar_exact(disc_b, disc_c),
        wilcoxon: undefined_as_none(wilcoxon_signed_rank(&pairs))?,
        paired_t: t,
        wins: share(|x, y| x > y),
        ties: share(|x, y| x == y),
        losses: share(|x, y| x < y),
    })
}

/// [`paired_model_comparison`] on two reports, which must cover the same dataset.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    if a.dataset_id != b.dataset_id || a.groups != b.groups {
        return Err(invalid("reports were computed on different triplet sets"));
    }
    paired_model_comparison(&a.outcomes, &b.outcomes, &a.groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IndexedTriplet;
    use crate::linalg::{Matrix, Vector};
    use crate::rng::{self, unit_vector};

    fn random_data(seed: u64, points: usize, n: usize, groups: usize) -> TripletData {
        let mut r = rng::stream(seed, 0);
        let pts: Vec<Vector> = (0..points).map(|_| unit_vector(&mut r, 6)).collect();
        let trips = (0..n)
            .map(|_| {
                let pos = rng::below(&mut r, points);
                let neg = (pos + 1 + rng::below(&mut r, points - 1)) % points;
                IndexedTriplet { anchor: rng::below(&mut r, points), pos, neg, group: rng::below(&mut r, groups) }
            })
            .collect();
        TripletData::new(6, pts, (0..groups).map(|g| format!("u{g}")).collect(), trips).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let a = Vector::from(vec![1.0, 0.0]);
        let n = Vector::from(vec![0.0, 1.0]);
        let t = |pos, neg| IndexedTriplet { anchor: 0, pos, neg, group: 0 };
        let data = TripletData::new(2, vec![a.clone(), a, n], vec!["u".into()], vec![t(1, 2), t(2, 2)]).unwrap();
        let r = triplet_accuracy(&Scorer::Cosine, &data).unwrap();
        assert_eq!(r.outcomes, vec![true, false]);
        assert_eq!(r.micro, 0.5);
    }

    #[test]
    fn micro_matches_recount_and_macro_matches_groups() {
        let data = random_data(1, 60, 1000, 7);
        let s = Scorer::Cosine;
        let r = triplet_accuracy(&s, &data).unwrap();
        let mut hits = 0;
        let mut per = [(0, 0); 7];
        for t in data.triplets() {
            let pts = data.points();
            let m = crate::linalg::cosine(&pts[t.anchor], &pts[t.pos]).unwrap()
                - crate::linalg::cosine(&pts[t.anchor], &pts[t.neg]).unwrap();
            hits += (m > 0.0) as usize;
            per[t.group].0 += (m > 0.0) as usize;
            per[t.group].1 += 1;
        }
        assert_eq!(r.micro, hits as f64 / 1000.0);
        let macro_ = per.iter().map(|&(c, n)| c as f64 / n as f64).sum::<f64>() / 7.0;
        assert!((r.macro_accuracy - macro_).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&r.micro));
    }

    #[test]
    fn accuracy_ignores_triplet_order() {
        let data = random_data(2, 40, 300, 5);
        let r = triplet_accuracy(&Scorer::Cosine, &data).unwrap();
        let mut idx: Vec<usize> = (0..300).collect();
        rng::shuffle(&mut rng::stream(3, 0), &mut idx);
        let s = triplet_accuracy(&Scorer::Cosine, &data.subset(&idx)).unwrap();
        assert_eq!(r.micro, s.micro);
        assert!((r.macro_accuracy - s.macro_accuracy).abs() < 1e-12);
    }

    #[test]
    fn accuracy_invariant_under_global_rotation() {
        let data = random_data(4, 50, 400, 3);
        let mut r = rng::stream(5, 0);
        let rot = rng::random_basis(&mut r, 6, 6).matrix().clone();
        let rotate = |v: &Vector| rot.mul_vec(v).unwrap();
        let pts: Vec<Vector> = data.points().iter().map(rotate).collect();
        let rotated = TripletData::new(6, pts, data.groups().to_vec(), data.triplets().to_vec()).unwrap();
        let l = Matrix::new(6, 3, rng::gaussian_vec(&mut r, 18)).unwrap();
        let l_rot = rot.matmul(&l).unwrap();
        for (s1, s2) in [(Scorer::Cosine, Scorer::Cosine), (Scorer::IdealPoint { l }, Scorer::IdealPoint { l: l_rot })]
        {
            let a = triplet_accuracy(&s1, &data).unwrap();
            let b = triplet_accuracy(&s2, &rotated).unwrap();
            assert_eq!(a.outcomes, b.outcomes);
        }
    }

    #[test]
    fn comparison_identical_models() {
        let out = vec![true, false, true, true];
        let c = paired_model_comparison(&out, &out, &[0, 0, 1, 1]).unwrap();
        assert!(c.wilcoxon.is_none());
        assert_eq!((c.b, c.c, c.mcnemar.p), (0, 0, 1.0));
        assert_eq!(c.ties, 1.0);
    }

    #[test]
    fn comparison_one_sided() {
        let c = paired_model_comparison(&[true; 5], &[false; 5], &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!((c.b, c.c), (5, 0));
        assert!((c.mcnemar.p - 0.0625).abs() < 1e-15);
        assert_eq!(c.wins, 1.0);
        assert_eq!(c.wilcoxon.unwrap().p, 0.0625);
        assert!(c.paired_t.is_none());
    }

    #[test]
    fn comparison_mcnemar_ignores_participant_labels() {
        let mut r = rng::stream(6, 0);
        let a: Vec<bool> = (0..200).map(|_| rng::uniform(&mut r, 0.0, 1.0) < 0.7).collect();
        let b: Vec<bool> = (0..200).map(|_| rng::uniform(&mut r, 0.0, 1.0) < 0.6).collect();
        let g: Vec<usize> = (0..200).map(|i| i % 13).collect();
        let mut g2 = g.clone();
        rng::shuffle(&mut r, &mut g2);
        let x = paired_model_comparison(&a, &b, &g).unwrap();
        let y = paired_model_comparison(&a, &b, &g2).unwrap();
        assert_eq!(x.mcnemar, y.mcnemar);
    }

    #[test]
    fn comparison_universe_mismatch() {
        assert!(paired_model_comparison(&[true], &[true, false], &[0]).is_err());
        let d1 = random_data(7, 20, 50, 2);
        let d2 = random_data(8, 20, 50, 2);
        let r1 = triplet_accuracy(&Scorer::Cosine, &d1).unwrap();
        let r2 = triplet_accuracy(&Scorer::Cosine, &d2).unwrap();
        assert!(compare_reports(&r1, &r2).is_err());
        assert!(compare_reports(&r1, &r1).is_ok());
    }
}
