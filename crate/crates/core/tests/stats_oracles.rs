//! Statistics routines against brute-force oracles and simulation.

use prefgeom::rng::{self, standard_normal, uniform};
use prefgeom::stats::{bootstrap_mean_ci, mcnemar_exact, spearman, wilcoxon_exact_p, wilcoxon_signed_rank, PMethod};

/// Average 1-based ranks by counting, with no sorting.
fn naive_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Two-sided p by visiting all 2ⁿ sign assignments of the observed ranks.
fn enumerated_p(diffs: &[f64]) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let ranks = naive_ranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w: f64 = ranks.iter().zip(&nz).filter(|(_, &d)| d > 0.0).map(|(r, _)| r).sum();
    let n = nz.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        le += (s <= w + 1e-9) as u64;
        ge += (s >= w - 1e-9) as u64;
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le as f64 / total).min(ge as f64 / total)).min(1.0)
}

#[test]
fn wilcoxon_exact_matches_enumeration() {
    let mut r = rng::stream(31, 0);
    for n in 1..=12 {
        for dataset in 0..100 {
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    let x = standard_normal(&mut r);
                    // Every third dataset is coarsened to force tied ranks and zeros.
                    if dataset % 3 == 0 {
                        (x * 2.0).round() / 2.0
                    } else {
                        x
                    }
                })
                .collect();
            if diffs.iter().all(|&d| d == 0.0) {
                continue;
            }
            let p = wilcoxon_exact_p(&diffs).unwrap();
            let oracle = enumerated_p(&diffs);
            assert!((p - oracle).abs() < 1e-12, "n={n} dataset={dataset}: {p} vs {oracle} on {diffs:?}");
        }
    }
}

#[test]
fn signed_rank_uses_exact_null_for_small_samples() {
    let pairs: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64 * 1.1, 0.0)).collect();
    let w = wilcoxon_signed_rank(&pairs).unwrap();
    assert_eq!(w.method, PMethod::Exact);
    assert_eq!(w.statistic, 55.0);
    assert!((w.p - 2.0 / 1024.0).abs() < 1e-15);
}

#[test]
fn spearman_matches_rank_then_pearson() {
    let mut r = rng::stream(32, 0);
    for case in 0..200 {
        let n = 3 + case % 40;
        let x: Vec<f64> = (0..n).map(|_| (standard_normal(&mut r) * 3.0).round()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + standard_normal(&mut r) * (case % 5) as f64).collect();
        let (rx, ry) = (naive_ranks(&x), naive_ranks(&y));
        if rx.iter().all(|&v| v == rx[0]) || ry.iter().all(|&v| v == ry[0]) {
            continue;
        }
        let s = spearman(&x, &y).unwrap();
        assert!((s - naive_pearson(&rx, &ry)).abs() <= 1e-12, "case {case}");
    }
}

#[test]
fn bootstrap_interval_coverage_is_nominal() {
    let mut r = rng::stream(33, 0);
    let reps = 1000;
    let mut covered = 0;
    for rep in 0..reps {
        let mu = uniform(&mut r, -2.0, 2.0);
        let xs: Vec<f64> = (0..100).map(|_| mu + standard_normal(&mut r)).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, 2000, 0.95, rep as u64).unwrap();
        covered += (lo <= mu && mu <= hi) as usize;
    }
    let coverage = covered as f64 / reps as f64;
    assert!((coverage - 0.95).abs() <= 0.02, "coverage {coverage}");
}

#[test]
fn mcnemar_on_large_discordant_counts() {
    let m = mcnemar_exact(14_891, 9_943);
    assert!((m.log10_p - (-217.02)).abs() <= 0.5, "{m:?}");
    assert!(m.p > 0.0 && m.p < 1e-216, "{}", m.p);
}
