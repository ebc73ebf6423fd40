//! Acceptance gate: one PASS or FAIL line per criterion, nonzero exit when
//! any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use prefgeom::diagnostics::subspace_report;
use prefgeom::linalg::cosine;
use prefgeom::rng::{self, gaussian_vec, random_basis, standard_normal, uniform, unit_vector, Rng};
use prefgeom::scorers::{decompose_cosine_margin, projected_margin_report};
use prefgeom::stats::{bootstrap_mean_ci, mcnemar_exact, spearman, wilcoxon_exact_p};
use prefgeom::synthetic::{
    derivative_at_zero, generate, risk_curve, CurveVerdict, Regime, SyntheticConfig, DEFAULT_LAMBDA_GRID,
};
use prefgeom::train::{fit, gradcheck, micro_accuracy, sweep_rank, Loss, TrainConfig};
use prefgeom::{IndexedTriplet, Matrix, Scorer, TripletData, Variant, Vector};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn split(data: &TripletData, train: usize, val: usize) -> (TripletData, TripletData, TripletData) {
    let idx = |lo: usize, hi: usize| (lo..hi).collect::<Vec<_>>();
    (data.subset(&idx(0, train)), data.subset(&idx(train, train + val)), data.subset(&idx(train + val, data.len())))
}

fn risk_curve_direction() -> Check {
    let mut slowest: f64 = 0.0;
    for (regime, want) in [
        (Regime::Hard, CurveVerdict::Increasing),
        (Regime::Natural, CurveVerdict::Decreasing),
        (Regime::Neutral, CurveVerdict::Flat),
    ] {
        for seed in SEEDS {
            let t = Instant::now();
            let set = generate(&SyntheticConfig { regime, seed, ..Default::default() }).map_err(|e| e.to_string())?;
            let b = Matrix::identity(set.model.config.subspace_dim);
            let curve = risk_curve(&b, &DEFAULT_LAMBDA_GRID, &set.data, &set.model.basis).map_err(|e| e.to_string())?;
            slowest = slowest.max(t.elapsed().as_secs_f64());
            ensure(curve.verdict == want, || format!("{regime} seed {seed}: verdict {}", curve.verdict))?;
            if regime == Regime::Neutral {
                // Every pair of points within three combined standard errors.
                for (i, ri) in curve.risk.iter().enumerate() {
                    for rj in &curve.risk[..i] {
                        let z = (ri.mean - rj.mean).abs() / (ri.se.powi(2) + rj.se.powi(2)).sqrt();
                        ensure(z <= 3.0, || format!("neutral seed {seed}: points {z:.2} SE apart"))?;
                    }
                }
            } else {
                for (i, s) in curve.steps.iter().enumerate() {
                    let rise = if regime == Regime::Hard { s.mean } else { -s.mean };
                    ensure(rise > 3.0 * s.se, || format!("{regime} seed {seed} step {i}: {} (SE {})", s.mean, s.se))?;
                }
            }
        }
    }
    ensure(slowest < 10.0, || format!("slowest seed took {slowest:.1} s"))?;
    Ok(format!("15 curves with the expected verdict, slowest seed {slowest:.2} s"))
}

fn derivative_identity() -> Check {
    let mut worst_gap: f64 = 0.0;
    for regime in [Regime::Hard, Regime::Natural, Regime::Neutral] {
        for seed in SEEDS {
            let set = generate(&SyntheticConfig { regime, seed, ..Default::default() }).map_err(|e| e.to_string())?;
            let b = Matrix::identity(set.model.config.subspace_dim);
            let d = derivative_at_zero(&b, &set.data, &set.model.basis).map_err(|e| e.to_string())?;
            let combined = (d.estimate.se.powi(2) + d.finite_difference.se.powi(2)).sqrt();
            let gap = (d.estimate.mean - d.finite_difference.mean).abs() / combined;
            worst_gap = worst_gap.max(gap);
            ensure(d.agrees && gap <= 3.0, || format!("{regime} seed {seed}: {d:?}"))?;
            if regime == Regime::Hard {
                ensure(d.estimate.mean > 3.0 * d.estimate.se, || format!("hard seed {seed} not positive: {d:?}"))?;
            }
        }
    }
    Ok(format!("largest disagreement {worst_gap:.2} combined SE; hard slope positive on 5 seeds"))
}

fn mcnemar_large_counts() -> Check {
    let m = mcnemar_exact(14_891, 9_943);
    ensure((m.log10_p + 217.02).abs() <= 0.5, || format!("log10 p = {}", m.log10_p))?;
    Ok(format!("p = {:.3e}, log10 p = {:.3}", m.p, m.log10_p))
}

fn grad_data(r: &mut Rng, d: usize, points: usize, triplets: usize) -> TripletData {
    let pts: Vec<Vector> = (0..points).map(|_| unit_vector(r, d)).collect();
    let trips = (0..triplets)
        .map(|i| {
            let pos = rng::below(r, points);
            let mut neg = rng::below(r, points);
            while neg == pos {
                neg = rng::below(r, points);
            }
            IndexedTriplet { anchor: rng::below(r, points), pos, neg, group: i % 3 }
        })
        .collect();
    TripletData::new(d, pts, (0..3).map(|g| format!("g{g}")).collect(), trips).unwrap()
}

fn grad_scorer(r: &mut Rng, v: Variant, d: usize, rank: usize) -> Scorer {
    let s = 0.7 / (d as f64).sqrt();
    let mut m = |rows: usize, cols: usize, scale: f64| {
        Matrix::new(rows, cols, gaussian_vec(r, rows * cols).into_iter().map(|x| x * scale).collect()).unwrap()
    };
    match v {
        Variant::IdealPoint => Scorer::IdealPoint { l: m(d, rank, s) },
        Variant::InnerProduct => Scorer::InnerProduct { l: m(d, rank, s) },
        Variant::Asymmetric => Scorer::Asymmetric { l_anchor: m(d, rank, s), l_item: m(d, rank, s) },
        Variant::Mlp => {
            let w1 = m(d, 5, 1.0 / (d as f64).sqrt());
            let w2 = m(5, rank, 1.0 / 5f64.sqrt());
            let b1 = Vector::from(m(1, 5, 0.3).as_slice().to_vec());
            Scorer::Mlp { w1, b1, w2 }
        }
        other => unreachable!("{other} is not trainable"),
    }
}

fn gradient_suite() -> Check {
    let t = Instant::now();
    let mut r = rng::stream(41, 0);
    let mut worst: f64 = 0.0;
    let losses = [Loss::BradleyTerry, Loss::Infonce { temperature: 0.1 }, Loss::Infonce { temperature: 1.0 }];
    for v in Variant::TRAINABLE {
        for loss in &losses {
            for i in 0..20 {
                let d = 6 + i % 5;
                let data = grad_data(&mut r, d, 14, 10);
                let s = grad_scorer(&mut r, v, d, 1 + i % 4);
                let batch: Vec<usize> = (0..data.len()).collect();
                let c = gradcheck(&s, &data, &batch, loss, 1e-5).map_err(|e| e.to_string())?;
                ensure(c.max_rel_error <= 1e-4, || format!("{v} {loss:?} instance {i}: {c:?}"))?;
                worst = worst.max(c.max_rel_error);
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} variants, worst relative error {worst:.1e}, {secs:.2} s", Variant::TRAINABLE.len()))
}

fn planted_recovery() -> Check {
    let mut firsts = Vec::new();
    for seed in SEEDS {
        let config = SyntheticConfig { triplets: 6000, nuisance: 0.0, noise: 0.0, seed, ..Default::default() };
        let set = generate(&config).map_err(|e| e.to_string())?;
        let (train, val, _) = split(&set.data, 4000, 1000);
        let res = fit(&train, &val, &TrainConfig { rank: 8, epochs: 200, seed, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let first = res.val_accuracy.iter().position(|&a| a == 1.0);
        let best = res.val_accuracy.iter().cloned().fold(0.0, f64::max);
        firsts.push(first.ok_or_else(|| format!("noiseless seed {seed}: best validation accuracy {best}"))?);
    }
    let mut gaps = Vec::new();
    let mut medians = Vec::new();
    for seed in SEEDS {
        let config = SyntheticConfig { triplets: 6000, nuisance: 0.6, noise: 0.0, seed, ..Default::default() };
        let set = generate(&config).map_err(|e| e.to_string())?;
        let (train, val, test) = split(&set.data, 4000, 1000);
        let res = fit(&train, &val, &TrainConfig { rank: 8, epochs: 100, seed, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let probe = micro_accuracy(&res.scorer, &test).map_err(|e| e.to_string())?;
        let cos = micro_accuracy(&Scorer::Cosine, &test).map_err(|e| e.to_string())?;
        let angles = subspace_report(res.scorer.projection().expect("ideal point"), set.model.basis.matrix())
            .map_err(|e| e.to_string())?;
        ensure(probe - cos >= 0.10, || format!("η=0.6 seed {seed}: probe {probe:.3} cosine {cos:.3}"))?;
        ensure(angles.median >= 0.9, || format!("η=0.6 seed {seed}: median angle cosine {:.3}", angles.median))?;
        gaps.push(probe - cos);
        medians.push(angles.median);
    }
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "validation 1.0 by epoch {}; probe gain ≥ {:.3}; median angle cosine ≥ {:.3}",
        firsts.iter().max().unwrap(),
        min(&gaps),
        min(&medians)
    ))
}

fn rank_saturation() -> Check {
    let set = generate(&SyntheticConfig { triplets: 8000, noise: 0.3, seed: 9, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let (train, val, test) = split(&set.data, 4000, 2000);
    let ranks = [1, 2, 4, 8, 16, 32];
    let rows = sweep_rank(&ranks, &SEEDS, &train, &val, &test, &TrainConfig { epochs: 100, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let se2 = |a: usize, b: usize| 2.0 * (rows[a].se.powi(2) + rows[b].se.powi(2)).sqrt();
    let at8 = ranks.iter().position(|&r| r == 8).unwrap();
    for i in 0..at8 {
        ensure(rows[i + 1].mean >= rows[i].mean - se2(i, i + 1), || {
            format!("drops from r={} ({:.4}) to r={} ({:.4})", ranks[i], rows[i].mean, ranks[i + 1], rows[i + 1].mean)
        })?;
    }
    for i in at8 + 1..ranks.len() {
        ensure((rows[i].mean - rows[at8].mean).abs() <= se2(i, at8), || {
            format!(
                "r={} ({:.4} SE {:.4}) vs r=8 ({:.4} SE {:.4})",
                ranks[i], rows[i].mean, rows[i].se, rows[at8].mean, rows[at8].se
            )
        })?;
    }
    let curve: Vec<String> = rows.iter().map(|r| format!("{}:{:.3}", r.value, r.mean)).collect();
    Ok(curve.join(" "))
}

fn decomposition_identities() -> Check {
    let mut r = rng::stream(42, 0);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let d = 3 + i % 60;
        let basis = random_basis(&mut r, d, 1 + i % (d - 1));
        let (a, p, n) = (unit_vector(&mut r, d), unit_vector(&mut r, d), unit_vector(&mut r, d));
        let dec = decompose_cosine_margin(&a, &p, &n, &basis).map_err(|e| e.to_string())?;
        let margin = cosine(&a, &p).unwrap() - cosine(&a, &n).unwrap();
        let err = (dec.delta_s + dec.delta_t - margin).abs();
        ensure(err <= 1e-10, || format!("cosine instance {i}: error {err:e}"))?;
        worst = worst.max(err);
    }
    for i in 0..1000 {
        let d = 2 + i % 50;
        let rank = 1 + i % 12;
        let l = Matrix::new(d, rank, gaussian_vec(&mut r, d * rank)).unwrap();
        let (a, p, n) = (unit_vector(&mut r, d), unit_vector(&mut r, d), unit_vector(&mut r, d));
        let (inner, norm) = projected_margin_report(&l, &a, &p, &n).map_err(|e| e.to_string())?;
        let proj = |x: &[f64]| l.tmul_vec(x).unwrap().into_inner();
        let dist2 = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let (la, lp, ln) = (proj(&a), proj(&p), proj(&n));
        let oracle = dist2(&la, &ln) - dist2(&la, &lp);
        let err = (inner + norm - oracle).abs() / (1.0 + oracle.abs());
        ensure(err <= 1e-10, || format!("ideal-point instance {i}: error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("2000 instances, worst error {worst:.1e}"))
}

fn naive_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

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

fn statistics_oracles() -> Check {
    let mut r = rng::stream(43, 0);
    for n in 1..=12 {
        for dataset in 0..100 {
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    let x = standard_normal(&mut r);
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
            let p = wilcoxon_exact_p(&diffs).map_err(|e| e.to_string())?;
            let oracle = enumerated_p(&diffs);
            ensure((p - oracle).abs() < 1e-12, || format!("Wilcoxon n={n} dataset {dataset}: {p} vs {oracle}"))?;
        }
    }
    for case in 0..200 {
        let n = 3 + case % 40;
        let x: Vec<f64> = (0..n).map(|_| (standard_normal(&mut r) * 3.0).round()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + standard_normal(&mut r) * (case % 5) as f64).collect();
        let (rx, ry) = (naive_ranks(&x), naive_ranks(&y));
        if rx.iter().all(|&v| v == rx[0]) || ry.iter().all(|&v| v == ry[0]) {
            continue;
        }
        let oracle = {
            let m = n as f64;
            let (mx, my) = (rx.iter().sum::<f64>() / m, ry.iter().sum::<f64>() / m);
            let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
            let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
            sxy / (sxx * syy).sqrt()
        };
        let s = spearman(&x, &y).map_err(|e| e.to_string())?;
        ensure((s - oracle).abs() <= 1e-12, || format!("Spearman case {case}: {s} vs {oracle}"))?;
    }
    let mut covered = 0;
    for rep in 0..1000 {
        let mu = uniform(&mut r, -2.0, 2.0);
        let xs: Vec<f64> = (0..100).map(|_| mu + standard_normal(&mut r)).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, 2000, 0.95, rep).map_err(|e| e.to_string())?;
        covered += (lo <= mu && mu <= hi) as usize;
    }
    let coverage = covered as f64 / 1000.0;
    ensure((coverage - 0.95).abs() <= 0.02, || format!("bootstrap coverage {coverage}"))?;
    Ok(format!("Wilcoxon and Spearman match their oracles; bootstrap coverage {coverage:.3}"))
}

fn cluster_null() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let users = 1000;
    let d = common::deliberation(dir.path(), users, 300, 0.0, 17);
    let (emb, votes, auth) =
        (d.embeddings.to_str().unwrap(), d.votes.to_str().unwrap(), d.authorship.to_str().unwrap());
    let o = common::prefgeom(
        dir.path(),
        &["--out", "out", "cluster", "--embeddings", emb, "--votes", votes, "--authorship", auth, "--perms", "50"],
    );
    ensure(o.status.success(), || common::describe(&o))?;
    let summary = std::fs::read_to_string(dir.path().join("out/cluster_summary.tsv")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for line in summary.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let v: f64 = f[2].parse().map_err(|_| format!("bad row {line}"))?;
        ensure(v <= 0.005, || format!("k={}: mean |shuffled lift| {v:.4}", f[0]))?;
        worst = worst.max(v);
    }
    Ok(format!("{users} users, k in 3,5,8,10, largest mean |shuffled lift| {worst:.4}"))
}

fn cli_determinism() -> Check {
    let url = common::embedding_server();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    common::pipeline(a.path(), &url, 1);
    common::pipeline(b.path(), &url, 0);
    let (ha, hb) = (common::hash_dir(&a.path().join("out")), common::hash_dir(&b.path().join("out")));
    ensure(ha.keys().eq(hb.keys()), || "reruns wrote different file sets".into())?;
    let differing: Vec<&String> = ha.iter().filter(|(k, v)| hb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("files differ: {differing:?}"))?;
    Ok(format!("{} commands, {} output files byte-identical", common::commands(&url).len(), ha.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("risk curve direction by regime", risk_curve_direction),
        ("derivative at zero matches finite difference", derivative_identity),
        ("McNemar on large discordant counts", mcnemar_large_counts),
        ("gradient suite", gradient_suite),
        ("planted subspace recovery", planted_recovery),
        ("rank saturation at the planted rank", rank_saturation),
        ("margin decomposition identities", decomposition_identities),
        ("statistics oracles", statistics_oracles),
        ("cluster coherence null", cluster_null),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
