//! Planted-subspace triplet generator and Monte Carlo checks of the
//! Bradley-Terry risk along the path from subspace scoring to full cosine.
//!
//! Every embedding is `√(1−η)·Q s + √η·t` with `s` a unit vector in
//! `S`-coordinates and `t` a unit vector orthogonal to `S`, so the squared
//! norm splits exactly into `1 − η` inside the subspace and `η` outside it.
//! Triplets place the preferred item closer to the anchor direction than the
//! dispreferred one, while the regime decides which item's nuisance part
//! leans towards the anchor's.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{IndexedTriplet, TripletData};
use crate::error::{invalid, Error, Result};
use crate::hash;
use crate::ingest::{EmbeddingStore, Triplet, TripletSet};
use crate::linalg::{dot_slice, normalize, Matrix, SubspaceBasis, Vector};
use crate::rng::{self, streams, Rng};
use crate::stats::{mean_se, quantile_sorted, Estimate};
use crate::train::loss::{bt_grad_margin, bt_loss};

/// Per-triplet gaps are `γ·U(GAP_SPREAD)`.
pub const GAP_SPREAD: (f64, f64) = (0.1, 1.9);
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_BINS: usize = 10;
/// Fewest triplets accepted by the binned hard-condition check.
pub const MIN_TRIPLETS_FOR_BINS: usize = 1000;
pub const FD_STEP: f64 = 1e-3;
/// Significance multiplier for every verdict in this module.
pub const Z_CRIT: f64 = 3.0;
pub const PLANTED_FORMAT_VERSION: u32 = 1;

/// How the nuisance parts of the two candidates relate to the anchor's.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The dispreferred item shares the anchor's nuisance direction.
    Hard,
    /// The preferred item shares it.
    Natural,
    /// Neither does.
    Neutral,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Hard, Regime::Natural, Regime::Neutral];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Hard => "hard",
            Regime::Natural => "natural",
            Regime::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| invalid(format!("unknown regime `{s}` (expected hard, natural or neutral)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Ambient dimension `d`.
    pub dim: usize,
    /// Preference subspace dimension `k`.
    pub subspace_dim: usize,
    pub triplets: usize,
    /// Scale `γ` of the in-subspace cosine gap between preferred and dispreferred.
    pub gap: f64,
    /// Squared-norm share `η` of the nuisance component.
    pub nuisance: f64,
    pub regime: Regime,
    /// Cosine `ρ` between the anchor's nuisance direction and the coupled item's.
    pub rho: f64,
    /// Standard deviation `σ` of Gaussian noise added to the preferred item's gap.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 64,
            subspace_dim: 8,
            triplets: 10_000,
            gap: 1.0,
            nuisance: 0.5,
            regime: Regime::Hard,
            rho: 0.8,
            noise: 0.0,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subspace_dim < 2 {
            return Err(invalid("subspace dimension must be at least 2"));
        }
        if self.dim < self.subspace_dim + 2 {
            return Err(invalid(format!(
                "ambient dimension {} leaves fewer than two nuisance directions beside a {}-dimensional subspace",
                self.dim, self.subspace_dim
            )));
        }
        if self.triplets == 0 {
            return Err(invalid("triplet count must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.nuisance) {
            return Err(invalid(format!("nuisance share must lie in [0, 1), got {}", self.nuisance)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(invalid(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.gap.is_nan() || self.gap <= 0.0 {
            return Err(invalid(format!("gap must be positive, got {}", self.gap)));
        }
        if self.gap * GAP_SPREAD.1 > 2.0 {
            return Err(invalid(format!(
                "infeasible norm budget: gaps up to {} exceed the largest cosine difference 2 between unit vectors",
                self.gap * GAP_SPREAD.1
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hash::json_sha256(self).expect("config serializes")
    }
}

/// The planted subspace and the configuration that generated a triplet set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub basis: SubspaceBasis,
    pub config: SyntheticConfig,
    /// Whether each triplet's in-subspace margin `Δ_S` is positive.
    pub delta_s_positive: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct PlantedFile {
    format_version: u32,
    config: SyntheticConfig,
    basis: SubspaceBasis,
}

impl PlantedModel {
    /// Fraction of triplets whose noise flipped the in-subspace order.
    pub fn violation_rate(&self) -> f64 {
        let bad = self.delta_s_positive.iter().filter(|&&ok| !ok).count();
        bad as f64 / self.delta_s_positive.len() as f64
    }

    /// `P[Δ_S ≤ 0]` implied by the gap and noise distributions.
    pub fn expected_violation_rate(config: &SyntheticConfig) -> f64 {
        if config.noise == 0.0 {
            return 0.0;
        }
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        let (lo, hi) = (config.gap * GAP_SPREAD.0, config.gap * GAP_SPREAD.1);
        // Simpson's rule over the uniform gap.
        let m = 2000;
        let h = (hi - lo) / m as f64;
        let f = |g: f64| std.cdf(-g / config.noise);
        let mut acc = f(lo) + f(hi);
        for i in 1..m {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        acc * h / 3.0 / (hi - lo)
    }

    /// Writes the configuration and basis; the triplets are regenerated from them.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = PlantedFile {
            format_version: PLANTED_FORMAT_VERSION,
            config: self.config.clone(),
            basis: self.basis.clone(),
        };
        std::fs::write(path, serde_json::to_vec_pretty(&f)?)?;
        Ok(())
    }

    /// Reads the file written by [`PlantedModel::save`] and returns its basis.
    pub fn load_basis(path: &Path) -> Result<(SyntheticConfig, SubspaceBasis)> {
        let f: PlantedFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if f.format_version != PLANTED_FORMAT_VERSION {
            return Err(invalid(format!("unsupported planted model format {}", f.format_version)));
        }
        Ok((f.config, f.basis))
    }
}

/// A generated triplet set with its planted model.
#[derive(Clone, Debug)]
pub struct SyntheticSet {
    pub model: PlantedModel,
    pub data: TripletData,
}

impl SyntheticSet {
    /// Ids `a{i}`, `p{i}`, `n{i}` for triplet `i`, in the ingest formats.
    pub fn to_ingest(&self) -> Result<(EmbeddingStore, TripletSet)> {
        let mut store = EmbeddingStore::new(self.data.dim());
        let mut trips = Vec::with_capacity(self.data.len());
        for i in 0..self.data.len() {
            let (a, p, n) = self.data.vectors(i);
            let ids = [format!("a{i}"), format!("p{i}"), format!("n{i}")];
            for (id, v) in ids.iter().zip([a, p, n]) {
                store.insert(id.clone(), v.to_vec(), None)?;
            }
            let [anchor, pos, neg] = ids;
            trips.push(Triplet { anchor, pos, neg, strength: None });
        }
        Ok((store, TripletSet::new(trips)?))
    }
}

/// Unit vector orthogonal to `S` (given by its basis) and to `avoid`.
fn nuisance_direction(r: &mut Rng, basis: &SubspaceBasis, avoid: Option<&[f64]>) -> Vector {
    let q = basis.matrix();
    loop {
        let mut g = rng::gaussian_vec(r, q.rows());
        // Two passes keep the result orthogonal to S to rounding level.
        for _ in 0..2 {
            let c = q.tmul_vec(&g).expect("dims agree");
            let qc = q.mul_vec(&c).expect("dims agree");
            for (x, y) in g.iter_mut().zip(qc.iter()) {
                *x -= y;
            }
            if let Some(a) = avoid {
                let proj = dot_slice(&g, a);
                for (x, y) in g.iter_mut().zip(a) {
                    *x -= proj * y;
                }
            }
        }
        if let Ok(v) = normalize(&g) {
            return v;
        }
    }
}

/// Unit vector in `k` coordinates at cosine `c` from unit `u`.
fn at_cosine(r: &mut Rng, u: &[f64], c: f64) -> Vec<f64> {
    let w = loop {
        let mut g = rng::gaussian_vec(r, u.len());
        let proj = dot_slice(&g, u);
        for (x, y) in g.iter_mut().zip(u) {
            *x -= proj * y;
        }
        if let Ok(w) = normalize(&g) {
            break w;
        }
    };
    let s = (1.0 - c * c).max(0.0).sqrt();
    u.iter().zip(w.iter()).map(|(a, b)| c * a + s * b).collect()
}

/// Draws a planted basis from `config.seed` and `config.triplets` triplets.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticSet> {
    config.validate()?;
    let (d, k) = (config.dim, config.subspace_dim);
    let basis = rng::random_basis(&mut rng::stream(config.seed, streams::BASIS), d, k);
    let mut r = rng::stream(config.seed, streams::TRIPLETS);
    let (ws, wt) = ((1.0 - config.nuisance).sqrt(), config.nuisance.sqrt());
    let rho_c = (1.0 - config.rho * config.rho).max(0.0).sqrt();

    let mut points = Vec::with_capacity(3 * config.triplets);
    let mut triplets = Vec::with_capacity(config.triplets);
    let mut groups = Vec::with_capacity(config.triplets);
    let mut positive = Vec::with_capacity(config.triplets);
    for i in 0..config.triplets {
        let u = rng::unit_vector(&mut r, k);
        let g = config.gap * rng::uniform(&mut r, GAP_SPREAD.0, GAP_SPREAD.1);
        let c_n = rng::uniform(&mut r, -1.0, 1.0 - g);
        let c_p = (c_n + g + config.noise * rng::standard_normal(&mut r)).clamp(-1.0, 1.0);
        let s_p = at_cosine(&mut r, &u, c_p);
        let s_n = at_cosine(&mut r, &u, c_n);

        let t_a = nuisance_direction(&mut r, &basis, None);
        let fresh = nuisance_direction(&mut r, &basis, None);
        let other = nuisance_direction(&mut r, &basis, None);
        let orth = nuisance_direction(&mut r, &basis, Some(&t_a));
        let coupled: Vec<f64> = t_a.iter().zip(orth.iter()).map(|(a, o)| config.rho * a + rho_c * o).collect();
        let (t_p, t_n): (&[f64], &[f64]) = match config.regime {
            Regime::Hard => (&fresh, &coupled),
            Regime::Natural => (&coupled, &fresh),
            Regime::Neutral => (&fresh, &other),
        };

        let embed = |s: &[f64], t: &[f64]| -> Vector {
            let mut v = basis.embed(s).expect("k coordinates").scaled(ws);
            for (x, y) in v.as_mut_slice().iter_mut().zip(t) {
                *x += wt * y;
            }
            v
        };
        let base = points.len();
        points.push(embed(&u, &t_a));
        points.push(embed(&s_p, t_p));
        points.push(embed(&s_n, t_n));
        triplets.push(IndexedTriplet { anchor: base, pos: base + 1, neg: base + 2, group: i });
        groups.push(format!("a{i}"));
        positive.push(c_p > c_n);
    }
    let data = TripletData::new(d, points, groups, triplets)?;
    Ok(SyntheticSet { model: PlantedModel { basis, config: config.clone(), delta_s_positive: positive }, data })
}

/// Per-triplet subspace margin `Δ_B` and nuisance margin `Δ_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginParts {
    pub delta_b: Vec<f64>,
    pub delta_t: Vec<f64>,
}

impl MarginParts {
    /// `Δ_B = c_aᵀ B (c_p − c_n)` with `c = Qᵀψ`, and `Δ_T` the inner product
    /// of the parts orthogonal to `S`.
    pub fn compute(b: &Matrix, data: &TripletData, basis: &SubspaceBasis) -> Result<Self> {
        let k = basis.dim();
        if b.shape() != (k, k) {
            return Err(invalid(format!("B must be {k}×{k} in subspace coordinates, got {:?}", b.shape())));
        }
        if !b.is_symmetric(1e-12) {
            return Err(invalid("B must be symmetric"));
        }
        if data.dim() != basis.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: basis.ambient_dim(), found: data.dim() });
        }
        let parts: Vec<(f64, f64)> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let (a, p, n) = data.vectors(i);
                let split = |v: &[f64]| -> (Vector, Vec<f64>) {
                    let c = basis.coords(v).expect("dims checked");
                    let inside = basis.embed(&c).expect("k coordinates");
                    let perp = v.iter().zip(inside.iter()).map(|(x, y)| x - y).collect();
                    (c, perp)
                };
                let ((ca, ta), (cp, tp), (cn, tn)) = (split(a), split(p), split(n));
                let dc: Vec<f64> = cp.iter().zip(cn.iter()).map(|(x, y)| x - y).collect();
                let bdc = b.mul_vec(&dc).expect("k coordinates");
                let dt: Vec<f64> = tp.iter().zip(&tn).map(|(x, y)| x - y).collect();
                (dot_slice(&ca, &bdc), dot_slice(&ta, &dt))
            })
            .collect();
        let (delta_b, delta_t) = parts.into_iter().unzip();
        Ok(MarginParts { delta_b, delta_t })
    }

    pub fn len(&self) -> usize {
        self.delta_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_b.is_empty()
    }

    fn losses(&self, lambda: f64) -> Vec<f64> {
        self.delta_b.iter().zip(&self.delta_t).map(|(b, t)| bt_loss(b + lambda * t)).collect()
    }

    /// Mean Bradley-Terry loss of `Δ_B + λΔ_T`.
    pub fn risk(&self, lambda: f64) -> Result<Estimate> {
        mean_se(&self.losses(lambda))
    }
}

/// `R̂(B, λ)` with its standard error.
pub fn empirical_risk(b: &Matrix, lambda: f64, data: &TripletData, basis: &SubspaceBasis) -> Result<Estimate> {
    MarginParts::compute(b, data, basis)?.risk(lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveVerdict {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
}

impl CurveVerdict {
    pub fn name(self) -> &'static str {
        match self {
            CurveVerdict::Increasing => "increasing",
            CurveVerdict::Decreasing => "decreasing",
            CurveVerdict::Flat => "flat",
            CurveVerdict::Mixed => "mixed",
        }
    }
}

impl fmt::Display for CurveVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub lambdas: Vec<f64>,
    pub risk: Vec<Estimate>,
    /// Paired differences `R̂(λ_{i+1}) − R̂(λ_i)` over the same triplets.
    pub steps: Vec<Estimate>,
    pub verdict: CurveVerdict,
}

/// Risk along `lambdas` on common triplets.
///
/// The verdict is `flat` when every pair of points lies within three
/// combined marginal standard errors, `increasing` (`decreasing`) when
/// every paired step rises (falls) by more than three standard errors of
/// the step, and `mixed` otherwise.
pub fn risk_curve_from_parts(parts: &MarginParts, lambdas: &[f64]) -> Result<RiskCurve> {
    if lambdas.len() < 2 {
        return Err(invalid("risk curve needs at least two grid points"));
    }
    if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) || lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("lambda grid must be strictly ascending within [0, 1]"));
    }
    let losses: Vec<Vec<f64>> = lambdas.iter().map(|&l| parts.losses(l)).collect();
    let risk = losses.iter().map(|l| mean_se(l)).collect::<Result<Vec<_>>>()?;
    let steps = losses
        .windows(2)
        .map(|w| mean_se(&w[1].iter().zip(&w[0]).map(|(x, y)| x - y).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;

    let flat = risk.iter().enumerate().all(|(i, ri)| {
        risk[..i].iter().all(|rj| (ri.mean - rj.mean).abs() <= Z_CRIT * (ri.se * ri.se + rj.se * rj.se).sqrt())
    });
    let verdict = if flat {
        CurveVerdict::Flat
    } else if steps.iter().all(|s| s.mean > Z_CRIT * s.se) {
        CurveVerdict::Increasing
    } else if steps.iter().all(|s| s.mean < -Z_CRIT * s.se) {
        CurveVerdict::Decreasing
    } else {
        CurveVerdict::Mixed
    };
    Ok(RiskCurve { lambdas: lambdas.to_vec(), risk, steps, verdict })
}

pub fn risk_curve(b: &Matrix, lambdas: &[f64], data: &TripletData, basis: &SubspaceBasis) -> Result<RiskCurve> {
    risk_curve_from_parts(&MarginParts::compute(b, data, basis)?, lambdas)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    /// Sample mean of `ℓ'(Δ_B)·Δ_T`.
    pub estimate: Estimate,
    /// Central difference `(R̂(h) − R̂(−h)) / 2h` on the same triplets.
    pub finite_difference: Estimate,
    pub step: f64,
    /// Whether the two agree within three combined standard errors.
    pub agrees: bool,
}

impl DerivativeReport {
    /// Whether the derivative is positive beyond three standard errors.
    pub fn positive(&self) -> bool {
        self.estimate.mean > Z_CRIT * self.estimate.se
    }
}

pub fn derivative_from_parts(parts: &MarginParts, step: f64) -> Result<DerivativeReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let pairs = || parts.delta_b.iter().zip(&parts.delta_t);
    let terms: Vec<f64> = pairs().map(|(b, t)| bt_grad_margin(*b) * t).collect();
    let fd: Vec<f64> = pairs().map(|(b, t)| (bt_loss(b + step * t) - bt_loss(b - step * t)) / (2.0 * step)).collect();
    let estimate = mean_se(&terms)?;
    let finite_difference = mean_se(&fd)?;
    let combined = (estimate.se.powi(2) + finite_difference.se.powi(2)).sqrt();
    Ok(DerivativeReport {
        estimate,
        finite_difference,
        step,
        agrees: (estimate.mean - finite_difference.mean).abs() <= Z_CRIT * combined,
    })
}

/// `R'(B, 0)` by Monte Carlo, cross-checked by a central difference with step [`FD_STEP`].
pub fn derivative_at_zero(b: &Matrix, data: &TripletData, basis: &SubspaceBasis) -> Result<DerivativeReport> {
    derivative_from_parts(&MarginParts::compute(b, data, basis)?, FD_STEP)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    /// Smallest and largest `Δ_S` in the bin.
    pub lo: f64,
    pub hi: f64,
    pub delta_t: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardConditionReport {
    pub bins: Vec<BinSummary>,
    /// Number of requested bins that received no triplets.
    pub collapsed: usize,
    /// No bin mean of `Δ_T` exceeds zero by three standard errors and at
    /// least one lies below zero by more than three.
    pub holds: bool,
}

/// Mean nuisance margin conditional on quantile bins of the subspace margin.
///
/// The conditional expectation cannot be checked pointwise from samples;
/// binned means are the testable stand-in. Bin edges are the `j/bins`
/// quantiles of `Δ_S`; a value equal to an edge goes to the upper bin.
pub fn verify_hard_condition(data: &TripletData, basis: &SubspaceBasis, bins: usize) -> Result<HardConditionReport> {
    if data.len() < MIN_TRIPLETS_FOR_BINS {
        return Err(invalid(format!(
            "hard-condition check needs at least {MIN_TRIPLETS_FOR_BINS} triplets, got {}",
            data.len()
        )));
    }
    if bins == 0 {
        return Err(invalid("bin count must be at least 1"));
    }
    let parts = MarginParts::compute(&Matrix::identity(basis.dim()), data, basis)?;
    let mut sorted = parts.delta_b.clone();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|j| quantile_sorted(&sorted, j as f64 / bins as f64)).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, &s) in parts.delta_b.iter().enumerate() {
        members[edges.partition_point(|&e| e <= s)].push(i);
    }
    let collapsed = members.iter().filter(|m| m.is_empty()).count();
    let summaries = members
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let s: Vec<f64> = m.iter().map(|&i| parts.delta_b[i]).collect();
            let t: Vec<f64> = m.iter().map(|&i| parts.delta_t[i]).collect();
            Ok(BinSummary {
                lo: s.iter().copied().fold(f64::INFINITY, f64::min),
                hi: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                delta_t: mean_se(&t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let holds = summaries.iter().all(|b| b.delta_t.mean <= Z_CRIT * b.delta_t.se)
        && summaries.iter().any(|b| b.delta_t.mean < -Z_CRIT * b.delta_t.se);
    Ok(HardConditionReport { bins: summaries, collapsed, holds })
}
