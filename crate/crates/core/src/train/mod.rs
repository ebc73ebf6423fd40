//! Fitting scorer parameters to triplets.

pub mod adam;
pub mod grad;
pub mod loss;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::data::TripletData;
use crate::error::{Error, Result};
use crate::hash::{self, Hasher};
use crate::linalg::{Matrix, Vector};
use crate::rng::{self, streams, Rng};
use crate::scorers::{Scorer, Variant, DEFAULT_MLP_HIDDEN};

pub use adam::Adam;
pub use grad::{flatten, grad_l_ideal_point, gradcheck, loss_and_grad, reference_loss, unflatten, GradCheck};
pub use loss::{bt_grad_margin, bt_loss, infonce_loss, Loss};
pub use sweep::{sweep_data, sweep_rank, SweepRow};

pub const DEFAULT_EPOCHS: usize = 300;
pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_LR: f64 = 0.01;
pub const DEFAULT_RANK: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub rank: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub loss: Loss,
    /// Initial weights are `N(0, 1) · init_scale / √fan_in`.
    pub init_scale: f64,
    /// Hidden width of the MLP variant.
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::IdealPoint,
            rank: DEFAULT_RANK,
            lr: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            weight_decay: 0.0,
            loss: Loss::BradleyTerry,
            init_scale: 1.0,
            hidden: DEFAULT_MLP_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !self.variant.is_trainable() {
            return Err(Error::NotTrainable(self.variant.name()));
        }
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be non-negative, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init scale must be positive, got {}", self.init_scale));
        }
        if self.variant == Variant::Mlp && self.hidden == 0 {
            return bad("mlp hidden width must be at least 1".into());
        }
        self.loss.validate()
    }

    pub fn hash(&self) -> String {
        hash::json_sha256(self).expect("config serializes")
    }
}

/// Seeded initial parameters for `config.variant` on `dim`-dimensional inputs.
pub fn init_scorer(config: &TrainConfig, dim: usize) -> Scorer {
    let mut r = rng::stream(config.seed, streams::INIT);
    let gauss = |r: &mut Rng, rows: usize, cols: usize, fan_in: usize| {
        let s = config.init_scale / (fan_in as f64).sqrt();
        let data = rng::gaussian_vec(r, rows * cols).into_iter().map(|x| x * s).collect();
        Matrix::new(rows, cols, data).expect("sizes agree")
    };
    let r_ = config.rank;
    match config.variant {
        Variant::IdealPoint => Scorer::IdealPoint { l: gauss(&mut r, dim, r_, dim) },
        Variant::InnerProduct => Scorer::InnerProduct { l: gauss(&mut r, dim, r_, dim) },
        Variant::Asymmetric => {
            let l_anchor = gauss(&mut r, dim, r_, dim);
            let l_item = gauss(&mut r, dim, r_, dim);
            Scorer::Asymmetric { l_anchor, l_item }
        }
        Variant::Mlp => {
            let w1 = gauss(&mut r, dim, config.hidden, dim);
            let w2 = gauss(&mut r, config.hidden, r_, config.hidden);
            Scorer::Mlp { w1, b1: Vector::zeros(config.hidden), w2 }
        }
        Variant::Cosine | Variant::Bilinear => unreachable!("validated as trainable"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub scorer: Scorer,
    /// Mean training loss of each epoch, one entry per epoch.
    pub train_loss: Vec<f64>,
    /// Validation accuracy; entry 0 is before any update, entry `e` after epoch `e`.
    pub val_accuracy: Vec<f64>,
    /// Index into `val_accuracy` of the returned parameters.
    pub selected_epoch: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub config_hash: String,
    pub data_hash: String,
}

impl FitResult {
    pub fn best_val_accuracy(&self) -> f64 {
        self.val_accuracy[self.selected_epoch]
    }
}

/// Fraction of triplets with strictly positive margin.
pub fn micro_accuracy(scorer: &Scorer, data: &TripletData) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty triplet set".into()));
    }
    let m = scorer.margins(data)?;
    Ok(m.iter().filter(|&&x| x > 0.0).count() as f64 / m.len() as f64)
}

/// Mini-batch training with per-epoch validation; returns the parameters of
/// the best validation epoch (earliest on ties).
pub fn fit(train: &TripletData, val: &TripletData, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("fit needs non-empty train and validation triplets".into()));
    }
    if train.dim() != val.dim() {
        return Err(Error::DimensionMismatch { expected: train.dim(), found: val.dim() });
    }
    let mut scorer = init_scorer(config, train.dim());
    let mut theta = flatten(&scorer)?;
    let mut opt = Adam::new(theta.len(), config.lr, config.weight_decay);
    let mut shuffle_rng = rng::stream(config.seed, streams::SHUFFLE);

    let mut best = scorer.clone();
    let mut val_accuracy = vec![micro_accuracy(&scorer, val)?];
    let mut selected = 0;
    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (l, g) = loss_and_grad(&scorer, train, batch, &config.loss)?;
            if !l.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += l * batch.len() as f64;
            opt.step(&mut theta, &g);
            scorer = unflatten(&scorer, &theta);
        }
        train_loss.push(epoch_loss / train.len() as f64);
        let acc = micro_accuracy(&scorer, val)?;
        if acc > val_accuracy[selected] {
            selected = epoch;
            best = scorer.clone();
        }
        val_accuracy.push(acc);
        log::debug!("epoch {epoch}: loss {:.6} val {:.4}", train_loss[epoch - 1], acc);
    }

    let data_hash = Hasher::new().str(&train.content_hash()).str(&val.content_hash()).finish();
    Ok(FitResult {
        scorer: best,
        train_loss,
        val_accuracy,
        selected_epoch: selected,
        seed: config.seed,
        config: config.clone(),
        config_hash: config.hash(),
        data_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IndexedTriplet;
    use crate::rng::unit_vector;

    /// Triplets whose order is decided by the first two coordinates.
    fn toy(seed: u64, n: usize) -> TripletData {
        let mut r = rng::stream(seed, 0);
        let pts: Vec<Vector> = (0..60).map(|_| unit_vector(&mut r, 6)).collect();
        let u = |v: &Vector, a: &Vector| -((v[0] - a[0]).powi(2) + (v[1] - a[1]).powi(2));
        let mut trips = Vec::new();
        while trips.len() < n {
            let (a, x, y) = (rng::below(&mut r, 60), rng::below(&mut r, 60), rng::below(&mut r, 60));
            if x == y {
                continue;
            }
            let (pos, neg) = if u(&pts[x], &pts[a]) > u(&pts[y], &pts[a]) { (x, y) } else { (y, x) };
            trips.push(IndexedTriplet { anchor: a, pos, neg, group: 0 });
        }
        TripletData::new(6, pts, vec!["g".into()], trips).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig { rank: 2, epochs: 20, batch_size: 32, lr: 0.05, seed: 7, ..Default::default() }
    }

    #[test]
    fn fit_is_deterministic() {
        let (tr, va) = (toy(1, 300), toy(2, 100));
        let a = fit(&tr, &va, &small_config()).unwrap();
        let b = fit(&tr, &va, &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_loss.len(), 20);
        assert_eq!(a.val_accuracy.len(), 21);
    }

    #[test]
    fn fit_learns_toy_problem() {
        let (tr, va) = (toy(1, 600), toy(2, 200));
        let res = fit(&tr, &va, &TrainConfig { epochs: 60, ..small_config() }).unwrap();
        assert!(res.best_val_accuracy() > 0.9, "{:?}", res.val_accuracy);
        assert!(res.train_loss.last().unwrap() < &res.train_loss[0]);
        let best = res.val_accuracy.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(res.best_val_accuracy(), best);
        assert_eq!(res.val_accuracy.iter().position(|&x| x == best), Some(res.selected_epoch));
    }

    #[test]
    fn zero_lr_keeps_init() {
        let (tr, va) = (toy(1, 100), toy(2, 50));
        let cfg = TrainConfig { lr: 0.0, ..small_config() };
        let res = fit(&tr, &va, &cfg).unwrap();
        assert_eq!(res.scorer, init_scorer(&cfg, 6));
        assert!(res.val_accuracy.iter().all(|&a| a == res.val_accuracy[0]));
        assert_eq!(res.selected_epoch, 0);
    }

    #[test]
    fn every_variant_and_loss_trains() {
        let (tr, va) = (toy(3, 200), toy(4, 80));
        for v in Variant::TRAINABLE {
            for loss in [Loss::BradleyTerry, Loss::Infonce { temperature: 0.5 }] {
                let cfg = TrainConfig { variant: v, loss, hidden: 8, epochs: 5, ..small_config() };
                let res = fit(&tr, &va, &cfg).unwrap();
                assert_eq!(res.scorer.variant(), v);
                assert!(res.train_loss.iter().all(|l| l.is_finite()));
            }
        }
    }

    #[test]
    fn full_batch_loss_decreases_at_small_lr() {
        let tr = toy(5, 256);
        let cfg = TrainConfig { lr: 1e-3, ..small_config() };
        let mut scorer = init_scorer(&cfg, 6);
        let mut theta = flatten(&scorer).unwrap();
        let mut opt = Adam::new(theta.len(), cfg.lr, 0.0);
        let batch: Vec<usize> = (0..tr.len()).collect();
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let (l, g) = loss_and_grad(&scorer, &tr, &batch, &Loss::BradleyTerry).unwrap();
            assert!(l <= prev + 1e-15, "{l} > {prev}");
            prev = l;
            opt.step(&mut theta, &g);
            scorer = unflatten(&scorer, &theta);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (tr, va) = (toy(1, 10), toy(2, 10));
        for cfg in [
            TrainConfig { rank: 0, ..small_config() },
            TrainConfig { lr: -1.0, ..small_config() },
            TrainConfig { batch_size: 0, ..small_config() },
            TrainConfig { variant: Variant::Cosine, ..small_config() },
            TrainConfig { loss: Loss::Infonce { temperature: 0.0 }, ..small_config() },
        ] {
            assert!(fit(&tr, &va, &cfg).is_err(), "{cfg:?}");
        }
        assert!(fit(&tr, &tr.subset(&[]), &small_config()).is_err());
    }

    #[test]
    fn huge_lr_reports_non_finite_loss() {
        // Inner-product scores grow without bound under a huge step.
        let (tr, va) = (toy(1, 64), toy(2, 10));
        let cfg = TrainConfig { variant: Variant::InnerProduct, lr: 1e200, epochs: 50, ..small_config() };
        match fit(&tr, &va, &cfg) {
            Err(Error::NonFiniteLoss { .. }) => {}
            other => panic!("expected non-finite loss, got {:?}", other.map(|r| r.train_loss)),
        }
    }
}
