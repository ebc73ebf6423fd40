//! End-to-end checks on planted-subspace data: the risk curve and its
//! slope, recovery of the subspace by a low-rank probe, and rank saturation.

use prefgeom::diagnostics::subspace_report;
use prefgeom::synthetic::{
    derivative_at_zero, generate, risk_curve, CurveVerdict, Regime, SyntheticConfig, DEFAULT_LAMBDA_GRID,
};
use prefgeom::train::{fit, micro_accuracy, sweep_rank, TrainConfig};
use prefgeom::{Matrix, Scorer, TripletData};

/// Consecutive train, validation and test blocks of a generated set.
fn split(data: &TripletData, train: usize, val: usize) -> (TripletData, TripletData, TripletData) {
    let idx = |lo: usize, hi: usize| (lo..hi).collect::<Vec<_>>();
    (data.subset(&idx(0, train)), data.subset(&idx(train, train + val)), data.subset(&idx(train + val, data.len())))
}

#[test]
fn risk_curve_direction_follows_the_regime() {
    for (regime, want) in [
        (Regime::Hard, CurveVerdict::Increasing),
        (Regime::Natural, CurveVerdict::Decreasing),
        (Regime::Neutral, CurveVerdict::Flat),
    ] {
        for seed in [101, 102] {
            let set = generate(&SyntheticConfig { regime, seed, ..Default::default() }).unwrap();
            let b = Matrix::identity(set.model.config.subspace_dim);
            let curve = risk_curve(&b, &DEFAULT_LAMBDA_GRID, &set.data, &set.model.basis).unwrap();
            assert_eq!(curve.verdict, want, "{regime} seed {seed}: {curve:?}");
            let d = derivative_at_zero(&b, &set.data, &set.model.basis).unwrap();
            assert!(d.agrees, "{regime}: {d:?}");
            assert_eq!(d.positive(), regime == Regime::Hard, "{regime}: {d:?}");
        }
    }
}

#[test]
fn noiseless_planted_model_is_fit_exactly() {
    let set = generate(&SyntheticConfig { triplets: 6000, nuisance: 0.0, noise: 0.0, seed: 7, ..Default::default() })
        .unwrap();
    let (train, val, test) = split(&set.data, 4000, 1000);
    let cfg = TrainConfig { rank: 8, epochs: 200, seed: 1, ..Default::default() };
    let res = fit(&train, &val, &cfg).unwrap();
    let first_perfect = res.val_accuracy.iter().position(|&a| a == 1.0);
    assert!(first_perfect.is_some(), "{:?}", &res.val_accuracy[..10]);
    assert!(micro_accuracy(&res.scorer, &test).unwrap() > 0.99);
}

#[test]
fn probe_beats_cosine_under_hard_nuisance() {
    let config = SyntheticConfig { triplets: 6000, nuisance: 0.6, noise: 0.0, seed: 8, ..Default::default() };
    let set = generate(&config).unwrap();
    let (train, val, test) = split(&set.data, 4000, 1000);
    let res = fit(&train, &val, &TrainConfig { rank: 8, epochs: 100, seed: 2, ..Default::default() }).unwrap();
    let probe = micro_accuracy(&res.scorer, &test).unwrap();
    let cosine = micro_accuracy(&Scorer::Cosine, &test).unwrap();
    assert!(probe - cosine >= 0.10, "probe {probe} cosine {cosine}");
    let angles = subspace_report(res.scorer.projection().unwrap(), set.model.basis.matrix()).unwrap();
    assert!(angles.median >= 0.9, "{angles:?}");
}

#[test]
fn accuracy_saturates_at_the_planted_rank() {
    let set = generate(&SyntheticConfig { triplets: 8000, noise: 0.3, seed: 9, ..Default::default() }).unwrap();
    let (train, val, test) = split(&set.data, 4000, 2000);
    let cfg = TrainConfig { epochs: 60, ..Default::default() };
    let rows = sweep_rank(&[1, 2, 8, 32], &[1, 2], &train, &val, &test, &cfg).unwrap();
    let m: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    assert!(m[0] < m[1] && m[1] < m[2], "{m:?}");
    assert!((m[3] - m[2]).abs() < 0.02, "{m:?}");
}
