use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;
use crate::ingest::authors::Participant;
use crate::ingest::votes::VoteTable;

/// `anchor` is a participant id; `pos` and `neg` are statement ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub pos: String,
    pub neg: String,
    /// value(pos) − value(neg); carried along but not used as a training weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn new(triplets: Vec<Triplet>) -> Result<Self> {
        for t in &triplets {
            if t.pos == t.neg {
                return Err(Error::InvalidInput(format!("triplet for anchor {} has pos == neg ({})", t.anchor, t.pos)));
            }
        }
        Ok(TripletSet { triplets })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triplet> {
        self.triplets.iter()
    }

    /// Triplets whose anchor participant is in `keep`, original order preserved.
    pub fn filter_anchors(&self, keep: &std::collections::HashSet<&str>) -> TripletSet {
        TripletSet { triplets: self.triplets.iter().filter(|t| keep.contains(t.anchor.as_str())).cloned().collect() }
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        for t in &self.triplets {
            serde_json::to_writer(&mut buf, t).expect("writing to memory");
            buf.push(b'\n');
        }
        buf
    }

    pub fn content_hash(&self) -> String {
        hash::sha256_hex(&self.to_jsonl())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(&self.to_jsonl())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut triplets = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let at = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
            let t: Triplet = serde_json::from_str(&line).map_err(|e| at(format!("malformed triplet: {e}")))?;
            if t.pos == t.neg {
                return Err(at("pos and neg are the same statement".into()));
            }
            if t.strength.is_some_and(|s| !s.is_finite()) {
                return Err(at("non-finite strength".into()));
            }
            triplets.push(t);
        }
        Ok(TripletSet { triplets })
    }
}

/// One triplet per discordant pair of each participant's ratings.
///
/// Participants are visited in the given order and, within a participant,
/// statements in vote-file order; each pair with distinct values yields the
/// triplet (participant, higher, lower). Equal ratings produce nothing.
pub fn build_triplets(votes: &VoteTable, participants: &[Participant]) -> TripletSet {
    let by = votes.by_participant();
    let mut triplets = Vec::new();
    for p in participants {
        let Some(rated) = by.get(p.id.as_str()) else { continue };
        for (i, vi) in rated.iter().enumerate() {
            for vj in &rated[i + 1..] {
                let (hi, lo) = match vi.value.cmp(&vj.value) {
                    std::cmp::Ordering::Greater => (vi, vj),
                    std::cmp::Ordering::Less => (vj, vi),
                    std::cmp::Ordering::Equal => continue,
                };
                triplets.push(Triplet {
                    anchor: p.id.clone(),
                    pos: hi.statement.clone(),
                    neg: lo.statement.clone(),
                    strength: Some(f64::from(hi.value) - f64::from(lo.value)),
                });
            }
        }
    }
    TripletSet { triplets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::votes::{Vote, VoteKind};

    fn table(kind: VoteKind, rows: &[(&str, &str, u8)]) -> VoteTable {
        VoteTable::new(
            kind,
            rows.iter().map(|&(p, s, v)| Vote { participant: p.into(), statement: s.into(), value: v }).collect(),
        )
        .unwrap()
    }

    fn everyone(t: &VoteTable) -> Vec<Participant> {
        t.participants().into_iter().map(Participant::self_anchored).collect()
    }

    #[test]
    fn binary_pair() {
        let t = table(VoteKind::Binary, &[("u", "s1", 1), ("u", "s2", 0)]);
        let set = build_triplets(&t, &everyone(&t));
        assert_eq!(set.len(), 1);
        assert_eq!((set.triplets[0].pos.as_str(), set.triplets[0].neg.as_str()), ("s1", "s2"));
        assert_eq!(set.triplets[0].strength, Some(1.0));
    }

    #[test]
    fn likert_ties_skipped() {
        let t = table(VoteKind::Likert, &[("u", "s1", 5), ("u", "s2", 5), ("u", "s3", 2)]);
        let set = build_triplets(&t, &everyone(&t));
        let pairs: Vec<_> = set.iter().map(|t| (t.pos.as_str(), t.neg.as_str())).collect();
        assert_eq!(pairs, vec![("s1", "s3"), ("s2", "s3")]);

        let flat = table(VoteKind::Likert, &[("u", "s1", 3), ("u", "s2", 3), ("u", "s3", 3)]);
        assert!(build_triplets(&flat, &everyone(&flat)).is_empty());
    }

    #[test]
    fn only_listed_participants() {
        let t = table(VoteKind::Binary, &[("u", "s1", 1), ("u", "s2", 0), ("w", "s1", 0), ("w", "s2", 1)]);
        let set = build_triplets(&t, &[Participant::self_anchored("w".into())]);
        assert_eq!(set.len(), 1);
        assert_eq!(set.triplets[0].anchor, "w");
        assert_eq!(set.triplets[0].pos, "s2");
    }

    #[test]
    fn jsonl_round_trip() {
        let t = table(VoteKind::Likert, &[("u", "a", 6), ("u", "b", 1), ("u", "c", 3)]);
        let set = build_triplets(&t, &everyone(&t));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        set.save(&path).unwrap();
        assert_eq!(TripletSet::load(&path).unwrap(), set);
    }
}
