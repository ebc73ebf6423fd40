use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ingest::{pool_anchor, Authorship, EmbeddingStore, Participant, Vote, VoteKind, VoteTable};
use crate::scorers::Scorer;
use crate::stats::spearman;

/// Which of a participant's texts are left out of the anchor for a rating row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    /// Texts the participant wrote about the rated statement.
    #[default]
    AboutStatement,
    None,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exclusion::AboutStatement => "about-statement",
            Exclusion::None => "none",
        })
    }
}

impl FromStr for Exclusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "about-statement" => Ok(Exclusion::AboutStatement),
            "none" => Ok(Exclusion::None),
            _ => Err(invalid(format!("unknown exclusion rule `{s}` (expected about-statement or none)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikertReport {
    pub rho: f64,
    pub rows: usize,
    /// Rows dropped because exclusion left the participant without anchor texts.
    pub skipped_rows: usize,
    pub exclusion: Exclusion,
}

/// Pooled Spearman correlation between `score(vote, anchor, statement)` and
/// the Likert rating over all rows.
pub fn likert_correlation_by<F>(
    ratings: &VoteTable,
    authorship: &Authorship,
    store: &EmbeddingStore,
    exclusion: Exclusion,
    score: F,
) -> Result<LikertReport>
where
    F: Fn(&Vote, &[f64], &[f64]) -> Result<f64>,
{
    if ratings.kind() != VoteKind::Likert {
        return Err(invalid("Likert correlation needs Likert ratings"));
    }
    let participants: HashMap<String, Participant> =
        authorship.participants().into_iter().map(|p| (p.id.clone(), p)).collect();
    let (mut scores, mut values) = (Vec::new(), Vec::new());
    let mut skipped = 0;
    for v in ratings.votes() {
        let own = participants.get(&v.participant).cloned();
        let p = own.unwrap_or_else(|| Participant::self_anchored(v.participant.clone()));
        let exclude = match exclusion {
            Exclusion::AboutStatement => authorship.written_about(&v.participant, &v.statement),
            Exclusion::None => HashSet::new(),
        };
        let anchor = match pool_anchor(&p, store, &exclude) {
            Ok(a) => a,
            Err(Error::Undefined(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        scores.push(score(v, &anchor, store.require(&v.statement)?)?);
        values.push(f64::from(v.value));
    }
    if scores.len() < 2 {
        return Err(invalid(format!("{} rating rows remain after exclusions; need at least 2", scores.len())));
    }
    Ok(LikertReport { rho: spearman(&scores, &values)?, rows: scores.len(), skipped_rows: skipped, exclusion })
}

/// [`likert_correlation_by`] with the scorer's similarity.
pub fn likert_correlation(
    ratings: &VoteTable,
    authorship: &Authorship,
    store: &EmbeddingStore,
    exclusion: Exclusion,
    scorer: &Scorer,
) -> Result<LikertReport> {
    likert_correlation_by(ratings, authorship, store, exclusion, |_, a, x| scorer.score(a, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::AuthoredText;
    use crate::rng::{self, unit_vector};

    /// Participants with one stance text and one justification per statement;
    /// ratings rise with the cosine between stance and statement.
    fn fixture(users: usize, statements: usize, seed: u64) -> (VoteTable, Authorship, EmbeddingStore) {
        let mut r = rng::stream(seed, 0);
        let mut store = EmbeddingStore::new(8);
        let mut texts = Vec::new();
        let mut votes = Vec::new();
        let stmts: Vec<_> = (0..statements).map(|_| unit_vector(&mut r, 8)).collect();
        for (j, s) in stmts.iter().enumerate() {
            store.insert(format!("s{j}"), s.to_vec(), None).unwrap();
        }
        for i in 0..users {
            let u = unit_vector(&mut r, 8);
            store.insert(format!("t{i}"), u.to_vec(), None).unwrap();
            texts.push(AuthoredText { participant: format!("u{i}"), text_id: format!("t{i}"), about: None });
            for (j, s) in stmts.iter().enumerate() {
                let c = crate::linalg::cosine(&u, s).unwrap();
                let value = (((c + 1.0) / 2.0) * 6.0).round() as u8;
                votes.push(Vote { participant: format!("u{i}"), statement: format!("s{j}"), value });
                // A justification that copies the statement would leak the rating.
                let jid = format!("j{i}_{j}");
                store.insert(jid.clone(), s.to_vec(), None).unwrap();
                texts.push(AuthoredText { participant: format!("u{i}"), text_id: jid, about: Some(format!("s{j}")) });
            }
        }
        (VoteTable::new(VoteKind::Likert, votes).unwrap(), Authorship::new(texts).unwrap(), store)
    }

    #[test]
    fn planted_utility_is_recovered() {
        let (v, a, s) = fixture(30, 6, 1);
        let rep = likert_correlation(&v, &a, &s, Exclusion::None, &Scorer::Cosine).unwrap();
        assert_eq!(rep.rows, 180);
        let single: Vec<Participant> =
            (0..30).map(|i| Participant::new(format!("u{i}"), vec![format!("t{i}")]).unwrap()).collect();
        let stance_only = likert_correlation_by(&v, &a, &s, Exclusion::AboutStatement, |vote, _, x| {
            let p = single.iter().find(|p| p.id == vote.participant).unwrap();
            let anchor = pool_anchor(p, &s, &HashSet::new())?;
            Scorer::Cosine.score(&anchor, x)
        })
        .unwrap();
        assert!(stance_only.rho > 0.9, "{stance_only:?}");
        assert!(rep.rho.is_finite());
    }

    #[test]
    fn exclusion_removes_the_justification() {
        let (v, a, s) = fixture(20, 5, 2);
        let with = likert_correlation(&v, &a, &s, Exclusion::AboutStatement, &Scorer::Cosine).unwrap();
        assert_eq!(with.skipped_rows, 0);
        assert_eq!(with.exclusion, Exclusion::AboutStatement);
        // Only a participant's own statement-specific text is dropped, so the
        // pooled anchor differs between the two rules.
        let without = likert_correlation(&v, &a, &s, Exclusion::None, &Scorer::Cosine).unwrap();
        assert_ne!(with.rho, without.rho);
    }

    #[test]
    fn oracle_scorer_gives_one() {
        let (v, a, s) = fixture(10, 4, 3);
        let rep = likert_correlation_by(&v, &a, &s, Exclusion::AboutStatement, |vote, _, _| Ok(f64::from(vote.value)))
            .unwrap();
        assert!((rep.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_ratings_are_rejected() {
        let (v, a, s) = fixture(5, 3, 4);
        let flat: Vec<Vote> = v.votes().iter().map(|x| Vote { value: 3, ..x.clone() }).collect();
        let flat = VoteTable::new(VoteKind::Likert, flat).unwrap();
        assert!(matches!(
            likert_correlation(&flat, &a, &s, Exclusion::None, &Scorer::Cosine),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn binary_votes_are_rejected() {
        let (v, a, s) = fixture(3, 2, 5);
        let bin: Vec<Vote> = v.votes().iter().map(|x| Vote { value: x.value.min(1), ..x.clone() }).collect();
        let bin = VoteTable::new(VoteKind::Binary, bin).unwrap();
        assert!(likert_correlation(&bin, &a, &s, Exclusion::None, &Scorer::Cosine).is_err());
    }

    #[test]
    fn exclusion_rule_parses() {
        assert_eq!("none".parse::<Exclusion>().unwrap(), Exclusion::None);
        assert_eq!(Exclusion::default().to_string(), "about-statement");
        assert!("all".parse::<Exclusion>().is_err());
    }
}
