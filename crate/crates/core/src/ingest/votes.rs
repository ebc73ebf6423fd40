use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LIKERT_MAX: u8 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteKind {
    /// agree = 1, disagree = 0
    Binary,
    /// integer rating 0..=6
    Likert,
}

impl VoteKind {
    pub fn max_value(self) -> u8 {
        match self {
            VoteKind::Binary => 1,
            VoteKind::Likert => LIKERT_MAX,
        }
    }
}

impl FromStr for VoteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(VoteKind::Binary),
            "likert" => Ok(VoteKind::Likert),
            other => Err(Error::InvalidInput(format!("unknown vote kind `{other}`"))),
        }
    }
}

impl fmt::Display for VoteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VoteKind::Binary => "binary",
            VoteKind::Likert => "likert",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub participant: String,
    pub statement: String,
    pub value: u8,
}

/// Validated votes: no duplicate (participant, statement) pairs, values in
/// range, pass votes already removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteTable {
    kind: VoteKind,
    votes: Vec<Vote>,
    dropped_pass: usize,
}

impl VoteTable {
    pub fn new(kind: VoteKind, votes: Vec<Vote>) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in &votes {
            if v.value > kind.max_value() {
                return Err(Error::InvalidInput(format!(
                    "{kind} vote value {} out of range for ({}, {})",
                    v.value, v.participant, v.statement
                )));
            }
            if !seen.insert((v.participant.as_str(), v.statement.as_str())) {
                return Err(Error::DuplicateId(format!("{}/{}", v.participant, v.statement)));
            }
        }
        Ok(VoteTable { kind, votes, dropped_pass: 0 })
    }

    pub fn kind(&self) -> VoteKind {
        self.kind
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// Number of pass rows removed at load time.
    pub fn dropped_pass(&self) -> usize {
        self.dropped_pass
    }

    /// Participant ids in order of first appearance.
    pub fn participants(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.votes.iter().filter(|v| seen.insert(v.participant.as_str())).map(|v| v.participant.clone()).collect()
    }

    /// Votes grouped by participant, each group in file order.
    pub fn by_participant(&self) -> HashMap<&str, Vec<&Vote>> {
        let mut out: HashMap<&str, Vec<&Vote>> = HashMap::new();
        for v in &self.votes {
            out.entry(v.participant.as_str()).or_default().push(v);
        }
        out
    }
}

fn parse_value(raw: &str, kind: VoteKind) -> std::result::Result<Option<u8>, String> {
    let t = raw.trim().to_ascii_lowercase();
    if t == "pass" {
        return Ok(None);
    }
    match (kind, t.as_str()) {
        (VoteKind::Binary, "agree") => return Ok(Some(1)),
        (VoteKind::Binary, "disagree") => return Ok(Some(0)),
        _ => {}
    }
    let v: i64 = t.parse().map_err(|_| format!("unparseable vote value `{raw}`"))?;
    if v < 0 || v > kind.max_value() as i64 {
        return Err(format!("{kind} vote value {v} out of range 0..={}", kind.max_value()));
    }
    Ok(Some(v as u8))
}

/// Loads a `participant_id,statement_id,value` CSV. Binary values are
/// `1`/`agree` and `0`/`disagree`; Likert values are integers 0–6. Rows
/// whose value is `pass` are dropped and counted.
pub fn load_votes(path: &Path, kind: VoteKind) -> Result<VoteTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let expected = ["participant_id", "statement_id", "value"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}, found {:?}", expected.join(","), headers),
        });
    }
    let mut votes = Vec::new();
    let mut dropped = 0;
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let at = |message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let (p, s, raw) = (&rec[0], &rec[1], &rec[2]);
        if p.is_empty() || s.is_empty() {
            return Err(at("empty participant or statement id".into()));
        }
        let Some(value) = parse_value(raw, kind).map_err(at)? else {
            dropped += 1;
            continue;
        };
        if !seen.insert((p.to_string(), s.to_string())) {
            return Err(at(format!("duplicate vote for ({p}, {s})")));
        }
        votes.push(Vote { participant: p.to_string(), statement: s.to_string(), value });
    }
    let mut table = VoteTable::new(kind, votes)?;
    table.dropped_pass = dropped;
    Ok(table)
}

/// Writes votes back out in the input CSV layout.
pub fn save_votes(table: &VoteTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["participant_id", "statement_id", "value"])?;
    for v in table.votes() {
        w.write_record([v.participant.as_str(), v.statement.as_str(), &v.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "participant_id,statement_id,value\n{body}").unwrap();
        f
    }

    #[test]
    fn binary_rows() {
        let f = csv_file("u1,s1,1\nu1,s2,0\nu2,s1,agree\n");
        let t = load_votes(f.path(), VoteKind::Binary).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.votes()[2].value, 1);
        assert_eq!(t.participants(), vec!["u1", "u2"]);
    }

    #[test]
    fn likert_out_of_range() {
        let f = csv_file("u1,s1,3\nu1,s2,7\n");
        match load_votes(f.path(), VoteKind::Likert) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("out of range"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pass_dropped() {
        let f = csv_file("u1,s1,1\nu1,s2,pass\nu1,s3,0\n");
        let t = load_votes(f.path(), VoteKind::Binary).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dropped_pass(), 1);
    }

    #[test]
    fn duplicate_pair_rejected() {
        let f = csv_file("u1,s1,1\nu1,s1,0\n");
        assert!(matches!(load_votes(f.path(), VoteKind::Binary), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn binary_rejects_polis_minus_one() {
        let f = csv_file("u1,s1,-1\n");
        assert!(load_votes(f.path(), VoteKind::Binary).is_err());
    }

    #[test]
    fn bad_header() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "who,what,value\nu1,s1,1\n").unwrap();
        assert!(matches!(load_votes(f.path(), VoteKind::Binary), Err(Error::Parse { line: 1, .. })));
    }
}
