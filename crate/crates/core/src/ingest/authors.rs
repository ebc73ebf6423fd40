use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::embeddings::EmbeddingStore;
use crate::linalg::{normalize, Vector};

/// A participant and the texts they wrote, which serve as their anchor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub anchor_text_ids: Vec<String>,
}

impl Participant {
    pub fn new(id: String, anchor_text_ids: Vec<String>) -> Result<Self> {
        if anchor_text_ids.is_empty() {
            return Err(Error::InvalidInput(format!("participant {id} has no anchor texts")));
        }
        Ok(Participant { id, anchor_text_ids })
    }

    /// A participant whose single anchor text shares their id.
    pub fn self_anchored(id: String) -> Self {
        Participant { anchor_text_ids: vec![id.clone()], id }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthoredText {
    pub participant: String,
    pub text_id: String,
    /// Statement this text was written about, if it is a justification.
    pub about: Option<String>,
}

/// Who wrote which text, loaded from `participant_id,text_id[,about_statement]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Authorship {
    entries: Vec<AuthoredText>,
    author: HashMap<String, usize>,
}

impl Authorship {
    pub fn new(entries: Vec<AuthoredText>) -> Result<Self> {
        let mut author = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if author.insert(e.text_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.text_id.clone()));
            }
        }
        Ok(Authorship { entries, author })
    }

    pub fn entries(&self) -> &[AuthoredText] {
        &self.entries
    }

    pub fn author_of(&self, text_id: &str) -> Option<&str> {
        self.author.get(text_id).map(|&i| self.entries[i].participant.as_str())
    }

    /// Participants in order of first appearance with all their texts.
    pub fn participants(&self) -> Vec<Participant> {
        let mut order: Vec<&str> = Vec::new();
        let mut texts: HashMap<&str, Vec<String>> = HashMap::new();
        for e in &self.entries {
            let list = texts.entry(e.participant.as_str()).or_insert_with(|| {
                order.push(e.participant.as_str());
                Vec::new()
            });
            list.push(e.text_id.clone());
        }
        order
            .into_iter()
            .map(|p| Participant { id: p.to_string(), anchor_text_ids: texts.remove(p).unwrap_or_default() })
            .collect()
    }

    /// Texts `participant` wrote about `statement`.
    pub fn written_about(&self, participant: &str, statement: &str) -> HashSet<&str> {
        self.entries
            .iter()
            .filter(|e| e.participant == participant && e.about.as_deref() == Some(statement))
            .map(|e| e.text_id.as_str())
            .collect()
    }
}

pub fn load_authorship(path: &Path) -> Result<Authorship> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ok = headers.len() >= 2
        && headers.len() <= 3
        && &headers[0] == "participant_id"
        && &headers[1] == "text_id"
        && (headers.len() == 2 || &headers[2] == "about_statement");
    if !ok {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header participant_id,text_id[,about_statement], found {headers:?}"),
        });
    }
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() < 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "missing participant or text id".into(),
            });
        }
        let about = rec.get(2).filter(|s| !s.is_empty()).map(str::to_string);
        entries.push(AuthoredText { participant: rec[0].to_string(), text_id: rec[1].to_string(), about });
    }
    Authorship::new(entries).map_err(|e| Error::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() })
}

/// Mean of the participant's anchor vectors (minus `exclude`), rescaled to unit norm.
pub fn pool_anchor(p: &Participant, store: &EmbeddingStore, exclude: &HashSet<&str>) -> Result<Vector> {
    let mut sum = vec![0.0; store.dim()];
    let mut used = 0usize;
    for id in p.anchor_text_ids.iter().filter(|id| !exclude.contains(id.as_str())) {
        let v = store.require(id)?;
        for (s, x) in sum.iter_mut().zip(v.iter()) {
            *s += x;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Undefined(format!("participant {} has no anchors left after exclusion", p.id)));
    }
    let mean: Vec<f64> = sum.into_iter().map(|s| s / used as f64).collect();
    normalize(&mean)
}
