//! Triplets resolved to vectors, the form scorers, training and evaluation consume.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hash::Hasher;
use crate::ingest::{pool_anchor, EmbeddingStore, Participant, TripletSet};
use crate::linalg::Vector;

/// Pooled anchor vector per participant.
#[derive(Clone, Debug, Default)]
pub struct AnchorTable {
    anchors: HashMap<String, Vector>,
}

impl AnchorTable {
    pub fn build(participants: &[Participant], store: &EmbeddingStore) -> Result<Self> {
        let mut anchors = HashMap::with_capacity(participants.len());
        let none = HashSet::new();
        for p in participants {
            anchors.insert(p.id.clone(), pool_anchor(p, store, &none)?);
        }
        Ok(AnchorTable { anchors })
    }

    pub fn insert(&mut self, participant: String, v: Vector) {
        self.anchors.insert(participant, v);
    }

    pub fn get(&self, participant: &str) -> Option<&Vector> {
        self.anchors.get(participant)
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Indices into [`TripletData::points`] plus the participant (group) index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexedTriplet {
    pub anchor: usize,
    pub pos: usize,
    pub neg: usize,
    pub group: usize,
}

/// A triplet list over a shared pool of unit vectors.
///
/// Each distinct vector is stored once, so scorers and gradient code can
/// cache per-point work. Subsets share the pool.
#[derive(Clone, Debug)]
pub struct TripletData {
    dim: usize,
    points: Arc<Vec<Vector>>,
    groups: Arc<Vec<String>>,
    triplets: Vec<IndexedTriplet>,
}

#[derive(Hash, PartialEq, Eq)]
enum PointKey<'a> {
    Anchor(&'a str),
    Item(&'a str),
}

impl TripletData {
    pub fn new(dim: usize, points: Vec<Vector>, groups: Vec<String>, triplets: Vec<IndexedTriplet>) -> Result<Self> {
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
        }
        for t in &triplets {
            if [t.anchor, t.pos, t.neg].iter().any(|&i| i >= points.len()) || t.group >= groups.len() {
                return Err(Error::InvalidInput("triplet index out of range".into()));
            }
        }
        Ok(TripletData { dim, points: Arc::new(points), groups: Arc::new(groups), triplets })
    }

    /// Looks up every id. Anchors come from `anchors` when the participant
    /// has a pooled vector there and from `store` otherwise.
    pub fn resolve(set: &TripletSet, store: &EmbeddingStore, anchors: &AnchorTable) -> Result<Self> {
        let mut points = Vec::new();
        let mut point_index: HashMap<PointKey, usize> = HashMap::new();
        let mut groups = Vec::new();
        let mut group_index: HashMap<&str, usize> = HashMap::new();
        let mut triplets = Vec::with_capacity(set.len());

        let mut intern = |key, v: &Vector, points: &mut Vec<Vector>| -> usize {
            *point_index.entry(key).or_insert_with(|| {
                points.push(v.clone());
                points.len() - 1
            })
        };
        for t in set.iter() {
            let a = match anchors.get(&t.anchor) {
                Some(v) => intern(PointKey::Anchor(&t.anchor), v, &mut points),
                None => intern(PointKey::Item(&t.anchor), store.require(&t.anchor)?, &mut points),
            };
            let p = intern(PointKey::Item(&t.pos), store.require(&t.pos)?, &mut points);
            let n = intern(PointKey::Item(&t.neg), store.require(&t.neg)?, &mut points);
            let g = *group_index.entry(&t.anchor).or_insert_with(|| {
                groups.push(t.anchor.clone());
                groups.len() - 1
            });
            triplets.push(IndexedTriplet { anchor: a, pos: p, neg: n, group: g });
        }
        TripletData::new(store.dim(), points, groups, triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn triplets(&self) -> &[IndexedTriplet] {
        &self.triplets
    }

    /// (anchor, pos, neg) vectors of triplet `i`.
    pub fn vectors(&self, i: usize) -> (&Vector, &Vector, &Vector) {
        let t = self.triplets[i];
        (&self.points[t.anchor], &self.points[t.pos], &self.points[t.neg])
    }

    /// Triplets at `idx`, in that order, over the same point pool.
    pub fn subset(&self, idx: &[usize]) -> TripletData {
        TripletData {
            dim: self.dim,
            points: Arc::clone(&self.points),
            groups: Arc::clone(&self.groups),
            triplets: idx.iter().map(|&i| self.triplets[i]).collect(),
        }
    }

    /// Hash of the resolved contents (vectors, indices and group ids).
    pub fn content_hash(&self) -> String {
        let mut h = Hasher::new();
        h.u64(self.dim as u64);
        for p in self.points.iter() {
            h.f64s(p);
        }
        for g in self.groups.iter() {
            h.str(g);
        }
        for t in &self.triplets {
            h.u64(t.anchor as u64).u64(t.pos as u64).u64(t.neg as u64).u64(t.group as u64);
        }
        h.finish()
    }
}
