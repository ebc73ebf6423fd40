//! The scorer family and the margin decompositions built on it.
//!
//! Every scorer maps an (anchor, item) pair of embeddings to a scalar and a
//! triplet margin is `score(a, p) − score(a, n)`. The projection variants
//! score through low-dimensional representations:
//!
//! | variant         | anchor rep     | item rep       | score                 |
//! |-----------------|----------------|----------------|-----------------------|
//! | `ideal_point`   | `Lᵀa`          | `Lᵀx`          | `−‖ra − rx‖²`         |
//! | `inner_product` | `Lᵀa`          | `Lᵀx`          | `⟨ra, rx⟩`            |
//! | `asymmetric`    | `L_aᵀa`        | `L_xᵀx`        | `−‖ra − rx‖²`         |
//! | `mlp`           | `φ(a)`         | `φ(x)`         | `−‖ra − rx‖²`         |
//!
//! with `φ(v) = W2ᵀ tanh(W1ᵀv + b1)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TripletData;
use crate::error::{Error, Result};
use crate::linalg::{check_dims, cosine, dot_slice, project_split, Matrix, SubspaceBasis, Vector};

pub const DEFAULT_MLP_HIDDEN: usize = 64;

/// How far from 1 a norm may be for inputs to the cosine decomposition.
pub const UNIT_TOL: f64 = 1e-9;

pub const SCORER_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cosine,
    Bilinear,
    IdealPoint,
    InnerProduct,
    Asymmetric,
    Mlp,
}

impl Variant {
    pub const TRAINABLE: [Variant; 4] = [Variant::IdealPoint, Variant::InnerProduct, Variant::Asymmetric, Variant::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cosine => "cosine",
            Variant::Bilinear => "bilinear",
            Variant::IdealPoint => "ideal_point",
            Variant::InnerProduct => "inner_product",
            Variant::Asymmetric => "asymmetric",
            Variant::Mlp => "mlp",
        }
    }

    pub fn is_trainable(self) -> bool {
        Variant::TRAINABLE.contains(&self)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s.replace('-', "_").as_str() {
            "cosine" => Variant::Cosine,
            "bilinear" => Variant::Bilinear,
            "ideal_point" => Variant::IdealPoint,
            "inner_product" => Variant::InnerProduct,
            "asymmetric" => Variant::Asymmetric,
            "mlp" => Variant::Mlp,
            other => return Err(Error::InvalidInput(format!("unknown scorer variant `{other}`"))),
        };
        Ok(v)
    }
}

/// Which side of the pair a representation is for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Anchor,
    Item,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Scorer {
    Cosine,
    /// `ψ(a)ᵀ(Q B Qᵀ + λ(I − QQᵀ))ψ(x)` with `B` given in `S`-coordinates.
    Bilinear {
        basis: SubspaceBasis,
        b: Matrix,
        lambda: f64,
    },
    IdealPoint {
        l: Matrix,
    },
    InnerProduct {
        l: Matrix,
    },
    Asymmetric {
        l_anchor: Matrix,
        l_item: Matrix,
    },
    Mlp {
        w1: Matrix,
        b1: Vector,
        w2: Matrix,
    },
}

impl Scorer {
    pub fn bilinear(basis: SubspaceBasis, b: Matrix, lambda: f64) -> Result<Self> {
        let s = Scorer::Bilinear { basis, b, lambda };
        s.validate()?;
        Ok(s)
    }

    /// `B = I` on `S` with `λ = 1`, which is cosine on unit-norm inputs.
    pub fn bilinear_cosine(basis: SubspaceBasis) -> Self {
        let k = basis.dim();
        Scorer::Bilinear { basis, b: Matrix::identity(k), lambda: 1.0 }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Scorer::Cosine => Variant::Cosine,
            Scorer::Bilinear { .. } => Variant::Bilinear,
            Scorer::IdealPoint { .. } => Variant::IdealPoint,
            Scorer::InnerProduct { .. } => Variant::InnerProduct,
            Scorer::Asymmetric { .. } => Variant::Asymmetric,
            Scorer::Mlp { .. } => Variant::Mlp,
        }
    }

    /// Embedding dimension the scorer expects, if it is fixed.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Scorer::Cosine => None,
            Scorer::Bilinear { basis, .. } => Some(basis.ambient_dim()),
            Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => Some(l.rows()),
            Scorer::Asymmetric { l_anchor, .. } => Some(l_anchor.rows()),
            Scorer::Mlp { w1, .. } => Some(w1.rows()),
        }
    }

    /// Dimension of the learned representation.
    pub fn rank(&self) -> Option<usize> {
        match self {
            Scorer::Cosine | Scorer::Bilinear { .. } => None,
            Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => Some(l.cols()),
            Scorer::Asymmetric { l_anchor, .. } => Some(l_anchor.cols()),
            Scorer::Mlp { w2, .. } => Some(w2.cols()),
        }
    }

    /// The projection matrix whose column space the scorer uses, when it has one.
    pub fn projection(&self) -> Option<&Matrix> {
        match self {
            Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => Some(l),
            Scorer::Asymmetric { l_item, .. } => Some(l_item),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Scorer::Cosine => 0,
            Scorer::Bilinear { b, .. } => b.rows() * b.cols() + 1,
            Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => l.rows() * l.cols(),
            Scorer::Asymmetric { l_anchor, l_item } => {
                l_anchor.rows() * l_anchor.cols() + l_item.rows() * l_item.cols()
            }
            Scorer::Mlp { w1, b1, w2 } => w1.rows() * w1.cols() + b1.dim() + w2.rows() * w2.cols(),
        }
    }

    /// Shape and finiteness checks; run after deserializing.
    pub fn validate(&self) -> Result<()> {
        let finite = |m: &[f64], what: &'static str| {
            if m.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite(what))
            }
        };
        match self {
            Scorer::Cosine => {}
            Scorer::Bilinear { basis, b, lambda } => {
                let k = basis.dim();
                if b.shape() != (k, k) {
                    return Err(Error::InvalidInput(format!(
                        "bilinear B must be {k}x{k} in subspace coordinates, got {}x{}",
                        b.rows(),
                        b.cols()
                    )));
                }
                finite(b.as_slice(), "bilinear B")?;
                if !lambda.is_finite() {
                    return Err(Error::NonFinite("bilinear lambda"));
                }
                if !b.is_symmetric(1e-12 * b.max_abs().max(1.0)) {
                    return Err(Error::InvalidInput("bilinear B must be symmetric".into()));
                }
            }
            Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => finite(l.as_slice(), "projection L")?,
            Scorer::Asymmetric { l_anchor, l_item } => {
                if l_anchor.shape() != l_item.shape() {
                    return Err(Error::InvalidInput(format!(
                        "asymmetric maps differ in shape: {:?} vs {:?}",
                        l_anchor.shape(),
                        l_item.shape()
                    )));
                }
                finite(l_anchor.as_slice(), "anchor map")?;
                finite(l_item.as_slice(), "item map")?;
            }
            Scorer::Mlp { w1, b1, w2 } => {
                if b1.dim() != w1.cols() || w2.rows() != w1.cols() {
                    return Err(Error::InvalidInput(format!(
                        "mlp shapes disagree: W1 {:?}, b1 {}, W2 {:?}",
                        w1.shape(),
                        b1.dim(),
                        w2.shape()
                    )));
                }
                finite(w1.as_slice(), "mlp W1")?;
                finite(b1, "mlp b1")?;
                finite(w2.as_slice(), "mlp W2")?;
            }
        }
        Ok(())
    }

    /// Representation of `v` for the projection variants.
    pub fn represent(&self, v: &[f64], role: Role) -> Result<Vector> {
        match self {
            Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => l.tmul_vec(v),
            Scorer::Asymmetric { l_anchor, l_item } => match role {
                Role::Anchor => l_anchor.tmul_vec(v),
                Role::Item => l_item.tmul_vec(v),
            },
            Scorer::Mlp { w1, b1, w2 } => {
                let hidden = mlp_hidden(w1, b1, v)?;
                w2.tmul_vec(&hidden)
            }
            Scorer::Cosine | Scorer::Bilinear { .. } => {
                Err(Error::InvalidInput(format!("{} scorer has no learned representation", self.variant())))
            }
        }
    }

    pub fn score(&self, a: &[f64], x: &[f64]) -> Result<f64> {
        check_dims(a.len(), x.len())?;
        if let Some(d) = self.input_dim() {
            check_dims(d, a.len())?;
        }
        match self {
            Scorer::Cosine => cosine(a, x),
            Scorer::Bilinear { basis, b, lambda } => {
                let (ca, cx) = (basis.coords(a)?, basis.coords(x)?);
                Ok(bilinear_from_coords(b, *lambda, a, x, &ca, &cx))
            }
            _ => {
                let ra = self.represent(a, Role::Anchor)?;
                let rx = self.represent(x, Role::Item)?;
                Ok(rep_score(self.variant(), &ra, &rx))
            }
        }
    }

    pub fn margin(&self, a: &[f64], p: &[f64], n: &[f64]) -> Result<f64> {
        Ok(self.score(a, p)? - self.score(a, n)?)
    }

    /// Margins for every triplet in `data`, computing each point's
    /// representation once. Values equal [`Scorer::margin`] bit for bit.
    pub fn margins(&self, data: &TripletData) -> Result<Vec<f64>> {
        if let Some(d) = self.input_dim() {
            check_dims(d, data.dim())?;
        }
        let points = data.points();
        let trips = data.triplets();
        match self {
            Scorer::Cosine => trips
                .par_iter()
                .map(|t| Ok(cosine(&points[t.anchor], &points[t.pos])? - cosine(&points[t.anchor], &points[t.neg])?))
                .collect(),
            Scorer::Bilinear { basis, b, lambda } => {
                let coords = per_point(data, |v| basis.coords(v))?;
                let c = |i: usize| coords[i].as_ref().expect("point is referenced");
                Ok(trips
                    .par_iter()
                    .map(|t| {
                        let (a, ca) = (&points[t.anchor], c(t.anchor));
                        bilinear_from_coords(b, *lambda, a, &points[t.pos], ca, c(t.pos))
                            - bilinear_from_coords(b, *lambda, a, &points[t.neg], ca, c(t.neg))
                    })
                    .collect())
            }
            _ => {
                let anchor_reps = per_point(data, |v| self.represent(v, Role::Anchor))?;
                let item_reps = if matches!(self, Scorer::Asymmetric { .. }) {
                    per_point(data, |v| self.represent(v, Role::Item))?
                } else {
                    anchor_reps.clone()
                };
                let variant = self.variant();
                Ok(trips
                    .par_iter()
                    .map(|t| {
                        let ra = anchor_reps[t.anchor].as_ref().expect("point is referenced");
                        let rp = item_reps[t.pos].as_ref().expect("point is referenced");
                        let rn = item_reps[t.neg].as_ref().expect("point is referenced");
                        rep_score(variant, ra, rp) - rep_score(variant, ra, rn)
                    })
                    .collect())
            }
        }
    }
}

/// Applies `f` to every point some triplet in `data` references.
fn per_point<F>(data: &TripletData, f: F) -> Result<Vec<Option<Vector>>>
where
    F: Fn(&[f64]) -> Result<Vector> + Sync,
{
    let mut used = vec![false; data.points().len()];
    for t in data.triplets() {
        used[t.anchor] = true;
        used[t.pos] = true;
        used[t.neg] = true;
    }
    data.points().par_iter().zip(used.par_iter()).map(|(v, &u)| if u { f(v).map(Some) } else { Ok(None) }).collect()
}

pub(crate) fn mlp_hidden(w1: &Matrix, b1: &[f64], v: &[f64]) -> Result<Vector> {
    let mut z = w1.tmul_vec(v)?;
    for (zi, bi) in z.as_mut_slice().iter_mut().zip(b1) {
        *zi = (*zi + bi).tanh();
    }
    Ok(z)
}

pub(crate) fn rep_score(variant: Variant, ra: &[f64], rx: &[f64]) -> f64 {
    match variant {
        Variant::InnerProduct => dot_slice(ra, rx),
        _ => -ra.iter().zip(rx).map(|(a, x)| (a - x) * (a - x)).sum::<f64>(),
    }
}

fn bilinear_from_coords(b: &Matrix, lambda: f64, a: &[f64], x: &[f64], ca: &[f64], cx: &[f64]) -> f64 {
    let bcx = b.mul_vec(cx).expect("B is k x k");
    let in_s = dot_slice(ca, &bcx);
    let perp = dot_slice(a, x) - dot_slice(ca, cx);
    in_s + lambda * perp
}

/// The cosine margin split into preference-subspace and nuisance parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginDecomposition {
    /// `⟨ψ_S(a), ψ_S(p) − ψ_S(n)⟩`
    pub delta_s: f64,
    /// `⟨ψ_⊥(a), ψ_⊥(p) − ψ_⊥(n)⟩`
    pub delta_t: f64,
    /// `‖ψ_S(n)‖² − ‖ψ_S(p)‖²`
    pub delta_norm: f64,
    /// `cos(a, p) − cos(a, n)`
    pub full_margin: f64,
}

impl MarginDecomposition {
    /// Ideal-point margin with the identity map on `S`: `2Δ_S + Δ_norm`.
    pub fn utility_margin(&self) -> f64 {
        2.0 * self.delta_s + self.delta_norm
    }
}

/// Splits the cosine margin of a unit-norm triplet along `S` and its complement.
pub fn decompose_cosine_margin(a: &[f64], p: &[f64], n: &[f64], basis: &SubspaceBasis) -> Result<MarginDecomposition> {
    for v in [a, p, n] {
        let norm = dot_slice(v, v).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnitNorm { norm });
        }
    }
    let (a_s, a_t) = project_split(a, basis)?;
    let (p_s, p_t) = project_split(p, basis)?;
    let (n_s, n_t) = project_split(n, basis)?;
    let diff = |x: &Vector, y: &Vector| -> Vec<f64> { x.iter().zip(y.iter()).map(|(u, v)| u - v).collect() };
    let delta_s = dot_slice(&a_s, &diff(&p_s, &n_s));
    let delta_t = dot_slice(&a_t, &diff(&p_t, &n_t));
    let delta_norm = n_s.norm_squared() - p_s.norm_squared();
    let full_margin = cosine(a, p)? - cosine(a, n)?;
    // Norms within 1e-9 of one bound the gap between cosine and dot product by a few 1e-9.
    if (delta_s + delta_t - full_margin).abs() > 1e-8 {
        return Err(Error::Invariant(format!("margin parts {delta_s} + {delta_t} do not add up to {full_margin}")));
    }
    Ok(MarginDecomposition { delta_s, delta_t, delta_norm, full_margin })
}

/// `(2⟨Lᵀa, Lᵀ(p − n)⟩, ‖Lᵀn‖² − ‖Lᵀp‖²)`, which sum to the ideal-point margin.
pub fn projected_margin_report(l: &Matrix, a: &[f64], p: &[f64], n: &[f64]) -> Result<(f64, f64)> {
    let (la, lp, ln) = (l.tmul_vec(a)?, l.tmul_vec(p)?, l.tmul_vec(n)?);
    let diff: Vec<f64> = lp.iter().zip(ln.iter()).map(|(x, y)| x - y).collect();
    let inner = 2.0 * dot_slice(&la, &diff);
    let norm_term = ln.norm_squared() - lp.norm_squared();
    Ok((inner, norm_term))
}

/// `Lᵀx`
pub fn project_embedding(l: &Matrix, x: &[f64]) -> Result<Vector> {
    l.tmul_vec(x)
}

/// On-disk form of a scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerFile {
    pub format_version: u32,
    pub scorer: Scorer,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub data_hash: Option<String>,
}

impl ScorerFile {
    pub fn new(scorer: Scorer) -> Self {
        ScorerFile { format_version: SCORER_FORMAT_VERSION, scorer, seed: None, config_hash: None, data_hash: None }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let f: ScorerFile = serde_json::from_slice(bytes)?;
        if f.format_version != SCORER_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported scorer format version {}", f.format_version)));
        }
        f.scorer.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }
}
