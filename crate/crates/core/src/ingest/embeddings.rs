use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;
use crate::linalg::{normalize, Vector};

/// Norm drift above this counts as a renormalization warning on load.
pub const UNIT_DRIFT_WARN: f64 = 1e-6;

/// Norms closer to 1 than this are stored untouched, keeping re-serialization bit-exact.
const UNIT_EXACT: f64 = 1e-12;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// Unit-norm vectors indexed by string id, kept in insertion order.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Vector>,
    texts: Vec<Option<String>>,
}

/// What happened while loading a store.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub count: usize,
    pub dim: usize,
    /// Vectors whose norm was more than 1e-6 away from 1 and got rescaled.
    pub renormalized: usize,
}

/// Sidecar written next to an embeddings file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dim: usize,
    pub count: usize,
    pub sha256: String,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore { dim, ..Default::default() }
    }

    /// Adds `vector` under `id`, rescaling it to unit norm. Returns the norm
    /// the vector had before rescaling.
    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>, text: Option<String>) -> Result<f64> {
        let id = id.into();
        if self.dim == 0 {
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: vector.len() });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let v = Vector::new(vector)?;
        let norm = v.norm();
        let v = if (norm - 1.0).abs() <= UNIT_EXACT { v } else { normalize(&v)? };
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(v);
        self.texts.push(text);
        Ok(norm)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Vector> {
        self.index.get(id).map(|&i| &self.vectors[i])
    }

    pub fn require(&self, id: &str) -> Result<&Vector> {
        self.get(id).ok_or_else(|| Error::MissingId(id.to_string()))
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.index.get(id).and_then(|&i| self.texts[i].as_deref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vector)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    fn write_records<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.ids.len() {
            let rec = EmbeddingRecord {
                id: self.ids[i].clone(),
                vector: self.vectors[i].to_vec(),
                text: self.texts[i].clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Canonical line-delimited serialization.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_records(&mut buf).expect("writing to memory");
        buf
    }

    pub fn content_hash(&self) -> String {
        hash::sha256_hex(&self.to_jsonl())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest { format_version: MANIFEST_VERSION, dim: self.dim, count: self.len(), sha256: self.content_hash() }
    }

    /// Writes the store to `path` and its manifest to [`manifest_path`].
    pub fn save(&self, path: &Path) -> Result<Manifest> {
        let bytes = self.to_jsonl();
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(&bytes)?;
        f.flush()?;
        let manifest = Manifest {
            format_version: MANIFEST_VERSION,
            dim: self.dim,
            count: self.len(),
            sha256: hash::sha256_hex(&bytes),
        };
        let mut m = serde_json::to_vec_pretty(&manifest)?;
        m.push(b'\n');
        std::fs::write(manifest_path(path), m)?;
        Ok(manifest)
    }
}

/// `embeddings.jsonl` → `embeddings.jsonl.manifest.json`
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Loads a line-delimited embeddings file (`{"id", "vector", "text"?}` per
/// line). Vectors are always stored at unit norm; with `expect_unit` set,
/// inputs that were not already unit-norm are counted in
/// [`LoadReport::renormalized`] and logged.
pub fn load_embeddings(path: &Path, expect_unit: bool) -> Result<(EmbeddingStore, LoadReport)> {
    let reader = BufReader::new(File::open(path)?);
    let mut store = EmbeddingStore::new(0);
    let mut report = LoadReport::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let at = |message: String| Error::Parse { path: path.to_path_buf(), line: lineno + 1, message };
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| at(format!("malformed record: {e}")))?;
        let norm = store.insert(rec.id, rec.vector, rec.text).map_err(|e| at(e.to_string()))?;
        if expect_unit && (norm - 1.0).abs() > UNIT_DRIFT_WARN {
            report.renormalized += 1;
        }
    }
    if store.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no embeddings", path.display())));
    }
    if report.renormalized > 0 {
        log::warn!(
            "{}: renormalized {} vectors with norm drift > {UNIT_DRIFT_WARN:e}",
            path.display(),
            report.renormalized
        );
    }
    report.count = store.len();
    report.dim = store.dim();
    Ok((store, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_small_file() {
        let f = write(&[r#"{"id":"a","vector":[1,0,0],"text":"hello"}"#, r#"{"id":"b","vector":[0,1,0]}"#]);
        let (store, report) = load_embeddings(f.path(), true).unwrap();
        assert_eq!(store.dim(), 3);
        assert_eq!(store.len(), 2);
        assert_eq!(report.renormalized, 0);
        assert_eq!(store.text("a"), Some("hello"));
        assert_eq!(store.text("b"), None);
    }

    #[test]
    fn mixed_dims_rejected_with_line() {
        let f = write(&[r#"{"id":"a","vector":[1,0,0]}"#, r#"{"id":"b","vector":[0,1,0,0]}"#]);
        match load_embeddings(f.path(), true) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("dimension mismatch"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renormalizes_with_warning() {
        let f = write(&[r#"{"id":"a","vector":[3,4,0]}"#]);
        let (store, report) = load_embeddings(f.path(), true).unwrap();
        assert_eq!(report.renormalized, 1);
        let v = store.get("a").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15 && v[2] == 0.0);

        let (_, quiet) = load_embeddings(f.path(), false).unwrap();
        assert_eq!(quiet.renormalized, 0);
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        let f = write(&[r#"{"id":"a","vector":[1,0]}"#, "not json"]);
        assert!(matches!(load_embeddings(f.path(), true), Err(Error::Parse { line: 2, .. })));

        let f = write(&[r#"{"id":"a","vector":[1,0]}"#, r#"{"id":"a","vector":[0,1]}"#]);
        match load_embeddings(f.path(), true) {
            Err(Error::Parse { line: 2, message, .. }) => assert!(message.contains("duplicate")),
            other => panic!("unexpected {other:?}"),
        }

        let f = write(&[r#"{"id":"a","vector":[0,0]}"#]);
        assert!(matches!(load_embeddings(f.path(), true), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn save_reload_is_exact() {
        let mut store = EmbeddingStore::new(4);
        let mut r = crate::rng::stream(5, 0);
        for i in 0..20 {
            store.insert(format!("s{i}"), crate::rng::gaussian_vec(&mut r, 4), Some(format!("text {i}"))).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let manifest = store.save(&path).unwrap();
        assert_eq!(manifest.count, 20);
        let (back, report) = load_embeddings(&path, true).unwrap();
        assert_eq!(report.renormalized, 0);
        for (id, v) in store.iter() {
            assert_eq!(back.get(id).unwrap(), v);
        }
        assert_eq!(back.content_hash(), manifest.sha256);
        let m: Manifest = serde_json::from_slice(&std::fs::read(manifest_path(&path)).unwrap()).unwrap();
        assert_eq!(m, manifest);
    }
}
