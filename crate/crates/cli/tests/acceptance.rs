//! Acceptance criteria 1–10. Runs sequentially in one test so that the
//! runtime budgets are measured without interference, and writes one
//! PASS/FAIL line per criterion straight to stdout. `ACCEPTANCE_ONLY=2,7`
//! restricts the run to the listed criteria.

use std::io::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use mpibench::config::{ReportConfig, SimulateConfig, SweepConfig};
use mpibench_core::dip::{
    build_network, dip_loss, dip_reconstruct, grad_theta, homogeneous_dip, sample_input, AutoencoderSpec, DipConfig,
};
use mpibench_core::linalg::{exact_svd, rsvd, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};
use mpibench_core::metrics::{psnr, reference_set, ssim3d, ReferenceSet, ShiftGrid};
use mpibench_core::preprocess::{build_system, PreprocessConfig, ProcessedSystem};
use mpibench_core::simdata::{
    load_dataset, matrix_with_spectrum, random_volume, rasterize_phantom, GridSpec, PhantomSpec,
};
use mpibench_core::solvers::{
    kaczmarz, kaczmarz_l1l2, kaczmarz_l2, var_solve, CheckpointSchedule, KaczmarzParams, PenaltyConfig, PenaltyKind,
    VarConfig,
};
use mpibench_core::{Matrix, Volume};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

const DATA_RANGE: f64 = 100.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn flat_grid(n: usize) -> GridSpec {
    GridSpec {
        shape: [1, 1, n],
        fov: [1.0, 1.0, n as f64],
        origin: [0.0; 3],
    }
}

/// Solves `(AᵀA + ρI) x = Aᵀy` by Cholesky factorization.
fn ridge_solution(a: &Matrix, y: &[f64], rho: f64) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut g = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            g[i * n + j] = (0..m).map(|k| a.get(k, i) * a.get(k, j)).sum::<f64>() + if i == j { rho } else { 0.0 };
        }
        b[i] = (0..m).map(|k| a.get(k, i) * y[k]).sum();
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = g[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = if i == j { s.sqrt() } else { s / l[j * n + j] };
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i * n + k] * z[k]).sum::<f64>()) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k * n + i] * x[k]).sum::<f64>()) / l[i * n + i];
    }
    x
}

fn rel_err(x: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

/// Checkpoint indices written out by hand: 1..10, then steps of 2, 5, 10,
/// 25, 100, 500 and 1000.
fn schedule_by_hand(cap: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=10).collect();
    v.extend((12..=30).step_by(2));
    v.extend((35..=50).step_by(5));
    v.extend((60..=150).step_by(10));
    v.extend((175..=500).step_by(25));
    v.extend((600..=2000).step_by(100));
    v.extend((2500..=5000).step_by(500));
    v.extend((6000..=20000).step_by(1000));
    v.retain(|&i| i <= cap);
    v
}

fn synthetic_system(phantom: &PhantomSpec, seed: u64, whitening: bool) -> ProcessedSystem {
    let freqs = 100;
    let dir = tempfile::tempdir().unwrap();
    let cfg: SimulateConfig = serde_json::from_value(json!({
        "operator": { "kind": "spectral", "beta": 1.5, "frequencies": freqs },
        "phantom": phantom,
        "snr_db": 20.0,
        "seed": seed,
    }))
    .unwrap();
    mpibench::simulate(&cfg, dir.path()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    let cfg = PreprocessConfig {
        whitening,
        ..PreprocessConfig::new(0.0, 2 * freqs)
    };
    build_system(&ds, &cfg).unwrap()
}

fn psnr_curve(refs: &ReferenceSet, vols: impl Iterator<Item = Volume>) -> Vec<f64> {
    vols.map(|v| refs.eps_psnr(&v, DATA_RANGE).unwrap().0).collect()
}

fn best_beats_final(curve: &[f64]) -> bool {
    let best = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best > *curve.last().unwrap()
}

/// Central differences on 20 coordinates per parameter tensor of a 5³
/// network; the step shrinks where the interval straddles a rectifier kink.
fn c1_gradient() -> Outcome {
    let dims = [5, 5, 5];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..3 {
        let spec = AutoencoderSpec::with_channels(&[4, 6], seed);
        let (theta, net) = build_network(&spec, dims).unwrap();
        let z = sample_input(dims, seed + 50);
        let spectrum: Vec<f64> = (1..=30).map(|k| 1.0 / k as f64).collect();
        let a = matrix_with_spectrum(30, 125, &spectrum, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = (0..30).map(|_| rng.random::<f64>() - 0.5).collect();
        let grid = GridSpec {
            shape: dims,
            fov: [5.0; 3],
            origin: [0.0; 3],
        };
        let sys = ProcessedSystem::from_parts(a, y, grid).unwrap();
        let (_, grad) = grad_theta(&net, &theta, &z, &sys, 2).unwrap();
        for entry in &theta.layout {
            for k in sample(&mut rng, entry.len, entry.len.min(20)) {
                let j = entry.offset + k;
                let shifted = |h: f64| {
                    let mut tp = theta.values.clone();
                    tp[j] += h;
                    let mut tm = theta.values.clone();
                    tm[j] -= h;
                    (tp, tm)
                };
                let Some(h) = [1e-5, 1e-6, 1e-7, 1e-8].into_iter().find(|&h| {
                    let (tp, tm) = shifted(h);
                    net.activation_pattern(&tp, &z).unwrap() == net.activation_pattern(&tm, &z).unwrap()
                }) else {
                    return outcome(false, format!("seed {seed} {}[{k}] sits on a kink", entry.name));
                };
                let (tp, tm) = shifted(h);
                let fd =
                    (dip_loss(&net, &tp, &z, &sys, 2).unwrap() - dip_loss(&net, &tm, &z, &sys, 2).unwrap()) / (2.0 * h);
                let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("{checked} coordinates, max relative error {worst:.2e} (tol 1e-4)"),
    )
}

fn c2_kaczmarz_oracle() -> Outcome {
    let a = gaussian(20, 30, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let y: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rho = 0.25;
    let expect = ridge_solution(&a, &y, rho);
    let sys = ProcessedSystem::from_parts(a, y, flat_grid(30)).unwrap();
    let params = KaczmarzParams {
        nonneg: false,
        ..KaczmarzParams::new(rho, 0.0, 500)
    };
    let t = kaczmarz(&sys, &params, &CheckpointSchedule::new(vec![500]).unwrap(), None).unwrap();
    let err = rel_err(&t.last().unwrap().volume.values, &expect);
    outcome(err <= 1e-6, format!("relative error {err:.2e} (tol 1e-6)"))
}

fn c3_var_oracle() -> Outcome {
    let (m, n) = (40, 10);
    let a = gaussian(m, n, 21).scaled(1.0 / (m as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let truth: Vec<f64> = (0..n).map(|_| 0.2 + 0.3 * rng.random::<f64>()).collect();
    let mut y = a.matvec(&truth).unwrap();
    for v in &mut y {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += 0.01 * e;
    }
    let lambda = 0.05;
    let expect = ridge_solution(&a, &y, lambda);
    if expect.iter().any(|v| *v <= 0.05) {
        return outcome(false, "fixture minimizer is not strictly interior");
    }
    let sys = ProcessedSystem::from_parts(a, y, flat_grid(n)).unwrap();
    let cfg = VarConfig {
        iters: 500,
        lr: 1e-2,
        ..VarConfig::new(2, PenaltyConfig::new(PenaltyKind::L2, lambda))
    };
    let t = var_solve(&sys, &cfg, &CheckpointSchedule::new(vec![500]).unwrap(), None, 0).unwrap();
    let err = rel_err(&t.last().unwrap().volume.values, &expect);
    outcome(
        err <= 1e-3,
        format!("relative error {err:.2e} after 500 iterations (tol 1e-3)"),
    )
}

fn c4_rsvd() -> Outcome {
    let k = 12;
    let mut worst: f64 = 0.0;
    for (seed, (m, n)) in [(60, 80), (90, 70), (120, 150)].into_iter().enumerate() {
        // 1/j up to k, then a drop by a factor of 11
        let spectrum: Vec<f64> = (1..=m.min(n))
            .map(|j| if j <= k { 1.0 / j as f64 } else { 0.1 / j as f64 })
            .collect();
        let a = matrix_with_spectrum(m, n, &spectrum, seed as u64).unwrap();
        let approx = rsvd(&a, k, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS, 7).unwrap();
        let exact = exact_svd(&a).unwrap();
        for i in 0..k {
            worst = worst.max(((approx.s[i] - exact.s[i]) / exact.s[i]).abs());
        }
    }
    outcome(
        worst <= 1e-6,
        format!("max relative error {worst:.2e} over top {k} (tol 1e-6)"),
    )
}

fn c5_homogeneous() -> Outcome {
    let spectrum: Vec<f64> = (1..=30).map(|k| 1.0 / k as f64).collect();
    let a = matrix_with_spectrum(30, 125, &spectrum, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = (0..30).map(|_| rng.random::<f64>()).collect();
    let grid = GridSpec {
        shape: [5, 5, 5],
        fov: [5.0; 3],
        origin: [0.0; 3],
    };
    let sys = ProcessedSystem::from_parts(a, y, grid).unwrap();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (p, tau) in [(1.0, 4.0), (2.0, 0.8)] {
        let t = homogeneous_dip(&sys, p, tau, 300, 1e-2, &CheckpointSchedule::every(300), 5).unwrap();
        for c in &t.checkpoints {
            let r: f64 = c.volume.values.iter().map(|v| v.abs().powf(p)).sum();
            worst = worst.max((r - tau).abs() / tau);
            count += 1;
        }
    }
    outcome(
        worst <= 1e-10,
        format!("{count} iterates, max |‖c‖ₚᵖ − τ|/τ = {worst:.2e} (tol 1e-10)"),
    )
}

fn c6_metrics() -> Outcome {
    let grid = GridSpec::default();
    let spec = PhantomSpec::shape_cone();
    let reference = rasterize_phantom(&spec, &grid, [0.0; 3], 5).unwrap().volume;
    let mut plus = reference.clone();
    plus.values.iter_mut().for_each(|v| *v += 1.0);
    let self_psnr = psnr(&reference, &reference, DATA_RANGE).unwrap();
    let offset_psnr = psnr(&plus, &reference, DATA_RANGE).unwrap();
    let self_ssim = ssim3d(&reference, &reference, DATA_RANGE).unwrap();
    let mut ok = self_psnr == f64::INFINITY && (offset_psnr - 40.0).abs() <= 1e-9 && self_ssim == 1.0;
    let refs = reference_set(&spec, &grid, &ShiftGrid::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    for i in 0..50 {
        let x = if i % 2 == 0 {
            random_volume(&grid, DATA_RANGE, i)
        } else {
            let s = [0, 1, 2].map(|_| rng.random::<f64>() * 4.0 - 2.0);
            let mut v = rasterize_phantom(&spec, &grid, s, 3).unwrap().volume;
            v.values
                .iter_mut()
                .for_each(|x| *x = (*x + 5.0 * rng.random::<f64>()).max(0.0));
            v
        };
        let r = refs.evaluate(&x, DATA_RANGE).unwrap();
        if r.eps_psnr < r.unshifted_psnr || r.eps_ssim < r.unshifted_ssim {
            violations += 1;
        }
    }
    ok &= violations == 0;
    outcome(
        ok,
        format!(
            "PSNR(x,x) = {self_psnr}, PSNR(ref+1) = {offset_psnr:.12}, SSIM(x,x) = {self_ssim}, {violations}/50 ε < unshifted, {} shifts",
            refs.len()
        ),
    )
}

fn c7_early_stopping() -> Outcome {
    let grid = GridSpec::default();
    let phantom = PhantomSpec::shape_cone();
    let refs = ReferenceSet::build(&phantom, &grid, &ShiftGrid::default(), 5).unwrap();
    let rho = 0.5f64.powi(9);
    let (mut kacz_wins, mut dip_wins) = (0, 0);
    for seed in 0..10 {
        let sys = synthetic_system(&phantom, seed, true);
        let k = kaczmarz_l2(&sys, rho, 500, &CheckpointSchedule::kaczmarz(), None).unwrap();
        if best_beats_final(&psnr_curve(&refs, k.checkpoints.into_iter().map(|c| c.volume))) {
            kacz_wins += 1;
        }
        let spec = AutoencoderSpec::with_channels(&[4, 8, 16], seed);
        let d = dip_reconstruct(&sys, &DipConfig::new(1e-3, 2000, seed), &spec).unwrap();
        if best_beats_final(&psnr_curve(&refs, d.checkpoints.into_iter().map(|c| c.volume))) {
            dip_wins += 1;
        }
    }
    outcome(
        kacz_wins >= 8 && dip_wins >= 8,
        format!("best > final in KACZ-l2 {kacz_wins}/10, DIP {dip_wins}/10 (need 8)"),
    )
}

fn c8_l1_benefit() -> Outcome {
    let grid = GridSpec::default();
    let phantom: PhantomSpec = serde_json::from_value(json!({
        "geometry": { "kind": "cuboid_union", "boxes": [
            { "min": [-6.0, -4.0, -1.0], "max": [-2.0, 0.0, 1.0] },
            { "min": [4.0, 2.0, -3.0], "max": [6.0, 8.0, -1.0] }
        ]},
        "tracer_value": 50.0
    }))
    .unwrap();
    let refs = ReferenceSet::build(&phantom, &grid, &ShiftGrid::default(), 5).unwrap();
    // every 8th index of the halving grid
    let values: Vec<f64> = (1..=40).step_by(8).map(|i| 0.5f64.powi(i - 1)).collect();
    let sched = CheckpointSchedule::kaczmarz();
    let mut wins = 0;
    let mut margins = Vec::new();
    for seed in 0..10 {
        // whitened rows have mean squared norm in the hundreds, which caps the
        // shrinkage step at λ/300 for λ ≤ 1; the raw rows keep it effective
        let sys = synthetic_system(&phantom, seed, false);
        let best = |rho: f64, lambda: f64| {
            let t = kaczmarz_l1l2(&sys, rho, lambda, 500, &sched, None).unwrap();
            psnr_curve(&refs, t.checkpoints.into_iter().map(|c| c.volume))
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let l2 = values.iter().map(|&r| best(r, 0.0)).fold(f64::NEG_INFINITY, f64::max);
        let l1l2 = values
            .iter()
            .flat_map(|&r| values.iter().map(move |&l| (r, l)))
            .map(|(r, l)| best(r, l))
            .fold(f64::NEG_INFINITY, f64::max);
        if l1l2 >= l2 {
            wins += 1;
        }
        margins.push(l1l2 - l2);
    }
    let lo = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        wins >= 8,
        format!("ℓ1+ℓ2 ≥ ℓ2 in {wins}/10 seeds (need 8), margin {lo:.4}..{hi:.4} dB"),
    )
}

fn c9_schedules() -> Outcome {
    let spectrum: Vec<f64> = (1..=20).map(|k| 1.0 / k as f64).collect();
    let a = matrix_with_spectrum(20, 125, &spectrum, 1).unwrap();
    let y = vec![0.1; 20];
    let grid = GridSpec {
        shape: [5, 5, 5],
        fov: [5.0; 3],
        origin: [0.0; 3],
    };
    let sys = ProcessedSystem::from_parts(a, y, grid).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for cap in [37, 260] {
        let spec = AutoencoderSpec::with_channels(&[2, 3], 0);
        let t = dip_reconstruct(&sys, &DipConfig::new(1e-3, cap, 0), &spec).unwrap();
        ok &= t.iterations() == schedule_by_hand(cap);
        notes.push(format!("DIP cap {cap}: {} checkpoints", t.checkpoints.len()));
    }
    ok &= CheckpointSchedule::standard().indices() == schedule_by_hand(20000).as_slice();
    let k = kaczmarz_l2(&sys, 0.1, 500, &CheckpointSchedule::kaczmarz(), None).unwrap();
    ok &= k.iterations() == schedule_by_hand(500);
    let m: mpibench::config::MethodConfig =
        serde_json::from_value(json!({ "method": "KACZ-l1l2", "rho": 0.5, "lambda": 0.1 })).unwrap();
    let via_cli = m.run(&sys, 0).unwrap();
    ok &= via_cli.iterations() == schedule_by_hand(500);
    notes.push(format!("KACZ last sweep {}", via_cli.iterations().last().unwrap()));
    outcome(ok, notes.join(", "))
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pipeline(root: &Path, workers: usize) -> (String, Vec<(String, Vec<u8>)>) {
    let sim: SimulateConfig = serde_json::from_value(json!({
        "operator": { "kind": "spectral", "beta": 1.5, "frequencies": 60 },
        "coils": 2,
        "snr_db": 20.0,
        "seed": 3
    }))
    .unwrap();
    let data = root.join("data");
    let checksum = mpibench::simulate(&sim, &data).unwrap();
    let sweep: SweepConfig = serde_json::from_value(json!({
        "dataset": data,
        "preprocessing": [ { "tau": 0.0, "rank": 96 }, { "tau": 3.0, "rank": 64, "whitening": false } ],
        "methods": [
            { "method": "KACZ-l2", "rho": { "stride": 13 }, "sweeps": 60 },
            { "method": "KACZ-l1l2", "rho": [0.5, 0.0625], "lambda": [0.01, 0.0001], "sweeps": 60 },
            { "method": "KACZ-TSVD-l1", "lambda": [0.01], "k_keep": [16, 4096], "sweeps": 40 },
            { "method": "VAR", "fidelity_p": [1, 2], "penalty": ["tv"], "lambda": [0.01], "iters": 50 },
            { "method": "DIP-Dl1", "lr": [1e-3], "iterations": 30,
              "network": { "encoder_channels": [2, 4], "kernel": 3, "leaky_slope": 0.2, "seed": 0 } }
        ],
        "seeds": [0, 1],
        "evaluation": { "shift_grid": { "extent": 1.0, "step": 0.5 } }
    }))
    .unwrap();
    let results = root.join("sweep");
    mpibench::sweep::run_sweep(&sweep, &results, workers).unwrap();
    let rep = root.join("report");
    let cfg = ReportConfig {
        results: results.clone(),
        data_range: DATA_RANGE,
    };
    mpibench::report::report(&cfg, &rep).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = read_all(&results)
        .into_iter()
        .filter(|(name, _)| name.ends_with(".csv") && name != "timings.csv" || name.ends_with(".md"))
        .collect();
    files.extend(read_all(&rep).into_iter().map(|(n, b)| (format!("report/{n}"), b)));
    (checksum, files)
}

fn c10_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (sum1, files1) = pipeline(a.path(), 1);
    let (sum8, files8) = pipeline(b.path(), 8);
    let rows = files1
        .iter()
        .find(|(n, _)| n == "results.csv")
        .map(|(_, b)| b.iter().filter(|&&c| c == b'\n').count() - 1)
        .unwrap_or(0);
    let same = sum1 == sum8 && files1 == files8;
    outcome(
        same && rows > 0,
        format!(
            "{} files compared, {rows} result rows, dataset checksums equal: {}",
            files1.len(),
            sum1 == sum8
        ),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        (
            1,
            "DIP gradient vs finite differences",
            Duration::from_secs(60),
            c1_gradient,
        ),
        (
            2,
            "Kaczmarz-Tikhonov oracle",
            Duration::from_secs(1),
            c2_kaczmarz_oracle,
        ),
        (3, "VAR closed-form oracle", Duration::from_secs(10), c3_var_oracle),
        (4, "rSVD accuracy", Duration::from_secs(1), c4_rsvd),
        (5, "homogeneity constraint", Duration::from_secs(5), c5_homogeneous),
        (6, "metric identities", Duration::from_secs(30), c6_metrics),
        (7, "early stopping", Duration::from_secs(30 * 60), c7_early_stopping),
        (
            8,
            "l1+l2 vs l2 on a sparse phantom",
            Duration::from_secs(15 * 60),
            c8_l1_benefit,
        ),
        (9, "checkpoint schedules", Duration::from_secs(5), c9_schedules),
        (
            10,
            "pipeline determinism",
            Duration::from_secs(30 * 60),
            c10_determinism,
        ),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, budget, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let r = run();
        let took = start.elapsed();
        let pass = r.pass && took <= budget;
        let line = format!(
            "criterion {id:>2} {}: {name}: {}; {:.2} s (budget {} s)\n",
            if pass { "PASS" } else { "FAIL" },
            r.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        let mut out = std::io::stdout().lock();
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
