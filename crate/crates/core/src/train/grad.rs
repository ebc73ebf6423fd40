//! Mini-batch loss and analytic gradients for the trainable scorers.
//!
//! Each distinct point in a batch is pushed through the representation map
//! once per role. Score gradients are accumulated on those representations
//! and then pulled back to the parameters.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::TripletData;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::scorers::{mlp_hidden, Role, Scorer, Variant};
use crate::train::loss::{bt_grad_margin, bt_loss, log_sum_exp, softmax_xent_first, Loss};

/// Trainable parameters in a fixed order: `L`; `L_a` then `L_x`; `W1`, `b1`, `W2`.
pub fn flatten(s: &Scorer) -> Result<Vec<f64>> {
    Ok(match s {
        Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => l.as_slice().to_vec(),
        Scorer::Asymmetric { l_anchor, l_item } => [l_anchor.as_slice(), l_item.as_slice()].concat(),
        Scorer::Mlp { w1, b1, w2 } => [w1.as_slice(), b1.as_slice(), w2.as_slice()].concat(),
        Scorer::Cosine | Scorer::Bilinear { .. } => return Err(Error::NotTrainable(s.variant().name())),
    })
}

/// Scorer shaped like `template` holding `theta`.
pub fn unflatten(template: &Scorer, theta: &[f64]) -> Scorer {
    let take = |m: &Matrix, at: usize| {
        let n = m.rows() * m.cols();
        Matrix::new(m.rows(), m.cols(), theta[at..at + n].to_vec()).expect("shape from template")
    };
    match template {
        Scorer::IdealPoint { l } => Scorer::IdealPoint { l: take(l, 0) },
        Scorer::InnerProduct { l } => Scorer::InnerProduct { l: take(l, 0) },
        Scorer::Asymmetric { l_anchor, l_item } => {
            Scorer::Asymmetric { l_anchor: take(l_anchor, 0), l_item: take(l_item, l_anchor.rows() * l_anchor.cols()) }
        }
        Scorer::Mlp { w1, b1, w2 } => {
            let n1 = w1.rows() * w1.cols();
            Scorer::Mlp {
                w1: take(w1, 0),
                b1: Vector::from(theta[n1..n1 + b1.dim()].to_vec()),
                w2: take(w2, n1 + b1.dim()),
            }
        }
        Scorer::Cosine | Scorer::Bilinear { .. } => template.clone(),
    }
}

#[derive(Default)]
struct Slots {
    index: HashMap<usize, usize>,
    points: Vec<usize>,
}

impl Slots {
    fn slot(&mut self, point: usize) -> usize {
        *self.index.entry(point).or_insert_with(|| {
            self.points.push(point);
            self.points.len() - 1
        })
    }
}

/// Representations of one role, plus hidden activations for the MLP.
struct Side {
    slots: Slots,
    reps: Vec<Vector>,
    hidden: Vec<Vector>,
    grads: Vec<Vec<f64>>,
}

impl Side {
    fn forward(slots: Slots, scorer: &Scorer, data: &TripletData, role: Role) -> Result<Side> {
        let points = data.points();
        let mut reps = Vec::with_capacity(slots.points.len());
        let mut hidden = Vec::new();
        for &p in &slots.points {
            match scorer {
                Scorer::Mlp { w1, b1, w2 } => {
                    let h = mlp_hidden(w1, b1, &points[p])?;
                    reps.push(w2.tmul_vec(&h)?);
                    hidden.push(h);
                }
                _ => reps.push(scorer.represent(&points[p], role)?),
            }
        }
        let r = reps.first().map_or(0, Vector::dim);
        let grads = vec![vec![0.0; r]; reps.len()];
        Ok(Side { slots, reps, hidden, grads })
    }
}

fn score(variant: Variant, ra: &[f64], rx: &[f64]) -> f64 {
    crate::scorers::rep_score(variant, ra, rx)
}

/// Adds `coef · ∂s/∂ra` and `coef · ∂s/∂rx` to the returned pair.
fn score_grads(variant: Variant, ra: &[f64], rx: &[f64], coef: f64) -> (Vec<f64>, Vec<f64>) {
    match variant {
        Variant::InnerProduct => (rx.iter().map(|x| coef * x).collect(), ra.iter().map(|a| coef * a).collect()),
        _ => {
            let ga: Vec<f64> = ra.iter().zip(rx).map(|(a, x)| -2.0 * coef * (a - x)).collect();
            let gx = ga.iter().map(|g| -g).collect();
            (ga, gx)
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `G += v ⊗ g` for row-major `G` of shape `len(v) × len(g)`.
fn outer_acc(gm: &mut [f64], v: &[f64], g: &[f64]) {
    let c = g.len();
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for (dst, &gj) in gm[i * c..(i + 1) * c].iter_mut().zip(g) {
                *dst += vi * gj;
            }
        }
    }
}

/// Mean loss over `batch` (indices into `data`) and its gradient with
/// respect to [`flatten`]`(scorer)`.
pub fn loss_and_grad(scorer: &Scorer, data: &TripletData, batch: &[usize], loss: &Loss) -> Result<(f64, Vec<f64>)> {
    let variant = scorer.variant();
    if !variant.is_trainable() {
        return Err(Error::NotTrainable(variant.name()));
    }
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let tied = variant != Variant::Asymmetric;
    let trips = data.triplets();

    let mut anchor_slots = Slots::default();
    let mut item_slots = Slots::default();
    let mut idx = Vec::with_capacity(batch.len());
    for &b in batch {
        let t = trips[b];
        let a = anchor_slots.slot(t.anchor);
        let items = if tied { &mut anchor_slots } else { &mut item_slots };
        idx.push((a, items.slot(t.pos), items.slot(t.neg), t.pos));
    }
    let mut sides = vec![Side::forward(anchor_slots, scorer, data, Role::Anchor)?];
    if !tied {
        sides.push(Side::forward(item_slots, scorer, data, Role::Item)?);
    }
    let xs = if tied { 0 } else { 1 };
    let nb = batch.len() as f64;

    // Pass 1: per-score coefficients dL/ds for (anchor slot, item slot) pairs.
    let mut terms: Vec<(usize, usize, f64)> = Vec::new();
    let mut total = 0.0;
    match *loss {
        Loss::BradleyTerry => {
            for &(a, p, n, _) in &idx {
                let ra = &sides[0].reps[a];
                let m = score(variant, ra, &sides[xs].reps[p]) - score(variant, ra, &sides[xs].reps[n]);
                total += bt_loss(m);
                let g = bt_grad_margin(m) / nb;
                terms.push((a, p, g));
                terms.push((a, n, -g));
            }
        }
        Loss::Infonce { temperature } => {
            for (i, &(a, p, n, pos_point)) in idx.iter().enumerate() {
                let ra = &sides[0].reps[a];
                let mut cands = vec![p, n];
                for (j, &(_, pj, _, pj_point)) in idx.iter().enumerate() {
                    if j != i && pj_point != pos_point {
                        cands.push(pj);
                    }
                }
                let logits: Vec<f64> =
                    cands.iter().map(|&c| score(variant, ra, &sides[xs].reps[c]) / temperature).collect();
                let lse = log_sum_exp(&logits);
                total += softmax_xent_first(&logits);
                for (k, (&c, &z)) in cands.iter().zip(&logits).enumerate() {
                    let soft = (z - lse).exp();
                    let target = if k == 0 { 1.0 } else { 0.0 };
                    terms.push((a, c, (soft - target) / (temperature * nb)));
                }
            }
        }
    }

    // Pass 2: score gradients onto representations.
    for (a, x, coef) in terms {
        let (ga, gx) = score_grads(variant, &sides[0].reps[a], &sides[xs].reps[x], coef);
        add_into(&mut sides[0].grads[a], &ga);
        add_into(&mut sides[xs].grads[x], &gx);
    }

    // Pass 3: representations onto parameters.
    let points = data.points();
    let grad = match scorer {
        Scorer::IdealPoint { l } | Scorer::InnerProduct { l } => {
            let mut g = vec![0.0; l.rows() * l.cols()];
            let s = &sides[0];
            for (slot, &p) in s.slots.points.iter().enumerate() {
                outer_acc(&mut g, &points[p], &s.grads[slot]);
            }
            g
        }
        Scorer::Asymmetric { l_anchor, l_item } => {
            let mut ga = vec![0.0; l_anchor.rows() * l_anchor.cols()];
            let mut gx = vec![0.0; l_item.rows() * l_item.cols()];
            for (slot, &p) in sides[0].slots.points.iter().enumerate() {
                outer_acc(&mut ga, &points[p], &sides[0].grads[slot]);
            }
            for (slot, &p) in sides[1].slots.points.iter().enumerate() {
                outer_acc(&mut gx, &points[p], &sides[1].grads[slot]);
            }
            ga.extend(gx);
            ga
        }
        Scorer::Mlp { w1, b1, w2 } => {
            let mut gw1 = vec![0.0; w1.rows() * w1.cols()];
            let mut gb1 = vec![0.0; b1.dim()];
            let mut gw2 = vec![0.0; w2.rows() * w2.cols()];
            let s = &sides[0];
            for (slot, &p) in s.slots.points.iter().enumerate() {
                let (h, grep) = (&s.hidden[slot], &s.grads[slot]);
                outer_acc(&mut gw2, h, grep);
                let gh = w2.mul_vec(grep)?;
                let gz: Vec<f64> = gh.iter().zip(h.iter()).map(|(g, h)| g * (1.0 - h * h)).collect();
                add_into(&mut gb1, &gz);
                outer_acc(&mut gw1, &points[p], &gz);
            }
            [gw1, gb1, gw2].concat()
        }
        Scorer::Cosine | Scorer::Bilinear { .. } => unreachable!("checked above"),
    };
    Ok((total / nb, grad))
}

/// Mean batch loss computed through [`Scorer::score`] alone, independent
/// of the gradient engine.
pub fn reference_loss(scorer: &Scorer, data: &TripletData, batch: &[usize], loss: &Loss) -> Result<f64> {
    let trips = data.triplets();
    let pts = data.points();
    let mut total = 0.0;
    for (i, &b) in batch.iter().enumerate() {
        let t = trips[b];
        let a = &pts[t.anchor];
        match *loss {
            Loss::BradleyTerry => total += bt_loss(scorer.margin(a, &pts[t.pos], &pts[t.neg])?),
            Loss::Infonce { temperature } => {
                let mut logits = vec![scorer.score(a, &pts[t.pos])? / temperature];
                logits.push(scorer.score(a, &pts[t.neg])? / temperature);
                for (j, &bj) in batch.iter().enumerate() {
                    let pj = trips[bj].pos;
                    if j != i && pj != t.pos {
                        logits.push(scorer.score(a, &pts[pj])? / temperature);
                    }
                }
                total += softmax_xent_first(&logits);
            }
        }
    }
    Ok(total / batch.len() as f64)
}

/// Closed-form Bradley-Terry gradient of the ideal-point margin for one triplet.
pub fn grad_l_ideal_point(l: &Matrix, a: &[f64], p: &[f64], n: &[f64]) -> Result<Matrix> {
    let s = Scorer::IdealPoint { l: l.clone() };
    let coef = bt_grad_margin(s.margin(a, p, n)?);
    let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| x - y).collect();
    let an: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let (lap, lan) = (l.tmul_vec(&ap)?, l.tmul_vec(&an)?);
    let mut g = Matrix::zeros(l.rows(), l.cols());
    for i in 0..l.rows() {
        for j in 0..l.cols() {
            g[(i, j)] = coef * (-2.0 * ap[i] * lap[j] + 2.0 * an[i] * lan[j]);
        }
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub params: usize,
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, floor)`
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Denominator floor for the relative error, so that entries that are zero
/// up to rounding compare on absolute error instead.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compares [`loss_and_grad`] against central differences of [`reference_loss`].
pub fn gradcheck(scorer: &Scorer, data: &TripletData, batch: &[usize], loss: &Loss, step: f64) -> Result<GradCheck> {
    let (_, analytic) = loss_and_grad(scorer, data, batch, loss)?;
    let theta = flatten(scorer)?;
    let mut out = GradCheck { params: theta.len(), max_rel_error: 0.0, max_abs_error: 0.0 };
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let up = reference_loss(&unflatten(scorer, &probe), data, batch, loss)?;
        probe[i] = theta[i] - step;
        let down = reference_loss(&unflatten(scorer, &probe), data, batch, loss)?;
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * step);
        let abs = (analytic[i] - numeric).abs();
        let rel = abs / analytic[i].abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        out.max_abs_error = out.max_abs_error.max(abs);
        out.max_rel_error = out.max_rel_error.max(rel);
    }
    Ok(out)
}
