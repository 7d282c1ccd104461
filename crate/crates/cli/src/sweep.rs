//! Parameter sweeps over preprocessing variants and methods.
//!
//! Every job is independent and seeded, so the CSV outputs do not depend on
//! the worker count; wall times go to a separate `timings.csv`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use mpibench_core::container::ContainerWriter;
use mpibench_core::preprocess::{build_system, PreprocessConfig, ProcessedSystem};
use mpibench_core::simdata::load_dataset;
use mpibench_core::Volume;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{MethodConfig, SweepConfig};
use crate::error::{CliError, CliResult};
use crate::evaluate::{shift_str, write, Evaluator, Score};
use crate::format::{num, slug};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const BEST_DIR: &str = "best";
pub const VOLUME_KIND: &str = "volume";

#[derive(Debug, Clone)]
struct Job {
    index: usize,
    pre: usize,
    method: MethodConfig,
    seed: u64,
}

#[derive(Debug, Clone)]
struct Row {
    iteration: usize,
    score: Score,
    fidelity: f64,
    objective: f64,
}

#[derive(Debug)]
struct Best {
    value: f64,
    iteration: usize,
    volume: Volume,
}

#[derive(Debug)]
struct JobResult {
    rows: Vec<Row>,
    best_psnr: Option<Best>,
    best_ssim: Option<Best>,
    diverged: bool,
    warnings: Vec<String>,
    seconds: f64,
}

/// Best scores of one method under one preprocessing variant. Numbers are
/// kept in their CSV text form so that reports reproduce them exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub pre: usize,
    pub tau: String,
    pub rank: usize,
    pub whitening: bool,
    pub best_eps_psnr: String,
    pub psnr_params: String,
    pub psnr_seed: u64,
    pub psnr_iteration: usize,
    pub psnr_volume: String,
    pub best_eps_ssim: String,
    pub ssim_params: String,
    pub ssim_seed: String,
    pub ssim_iteration: String,
    pub ssim_volume: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub jobs: usize,
    pub failures: usize,
    pub summary: Vec<SummaryRow>,
}

fn expand_jobs(cfg: &SweepConfig, pres: usize) -> CliResult<Vec<Job>> {
    let mut methods = Vec::new();
    for m in &cfg.methods {
        methods.extend(m.expand()?);
    }
    let mut jobs = Vec::new();
    for pre in 0..pres {
        for method in &methods {
            let seeds: &[u64] = if method.is_stochastic() {
                &cfg.seeds
            } else {
                &cfg.seeds[..1]
            };
            for &seed in seeds {
                jobs.push(Job {
                    index: jobs.len(),
                    pre,
                    method: method.clone(),
                    seed,
                });
            }
        }
    }
    Ok(jobs)
}

fn keep_best(slot: &mut Option<Best>, value: f64, iteration: usize, volume: &Volume) {
    if value.is_nan() {
        return;
    }
    if slot.as_ref().is_none_or(|b| value > b.value) {
        *slot = Some(Best {
            value,
            iteration,
            volume: volume.clone(),
        });
    }
}

fn run_job(job: &Job, sys: &ProcessedSystem, ev: &Evaluator) -> Result<JobResult, String> {
    let start = Instant::now();
    let trace = job.method.run(sys, job.seed).map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    let mut rows = Vec::with_capacity(trace.checkpoints.len());
    let mut best_psnr = None;
    let mut best_ssim = None;
    for c in &trace.checkpoints {
        let score = ev.score(&c.volume).map_err(|e| e.to_string())?;
        keep_best(&mut best_psnr, score.eps_psnr, c.iteration, &c.volume);
        if let Some(s) = score.eps_ssim {
            keep_best(&mut best_ssim, s, c.iteration, &c.volume);
        }
        rows.push(Row {
            iteration: c.iteration,
            score,
            fidelity: c.fidelity,
            objective: c.objective,
        });
    }
    Ok(JobResult {
        rows,
        best_psnr,
        best_ssim,
        diverged: trace.diverged,
        warnings: trace.warnings,
        seconds,
    })
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .map(|m| format!("panic: {m}"))
            .unwrap_or_else(|| "panic".into())),
    }
}

fn csv_writer(path: &Path, header: &[&str]) -> CliResult<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(CliError::data)?;
    Ok(w)
}

fn save_volume(dir: &Path, v: &Volume, meta: serde_json::Value) -> CliResult<()> {
    ContainerWriter::new(VOLUME_KIND)
        .array("volume", &v.dims(), &v.values)
        .metadata(json!({ "voxel_size": v.voxel_size, "source": meta }))
        .write(dir)
        .map(|_| ())
        .map_err(CliError::data)
}

/// Loads a volume written by a sweep.
pub fn load_volume(dir: &Path) -> CliResult<Volume> {
    let c = mpibench_core::container::Container::open(dir).map_err(CliError::data)?;
    c.expect_kind(VOLUME_KIND).map_err(CliError::data)?;
    let (shape, values) = c.read_array("volume").map_err(CliError::data)?;
    let voxel: [f64; 3] = c.metadata_field("voxel_size").map_err(CliError::data)?;
    if shape.len() != 3 {
        return Err(CliError::data(format!("{}: volume must be 3D", dir.display())));
    }
    Volume::from_values([shape[0], shape[1], shape[2]], voxel, values).map_err(CliError::data)
}

fn pre_echo(p: &PreprocessConfig) -> [String; 3] {
    [num(p.tau), p.rank.to_string(), p.whitening.to_string()]
}

/// Runs the sweep and writes its outputs under `out`. Returns an error with
/// exit code 4 when any run failed; the outputs are complete either way.
pub fn run_sweep(cfg: &SweepConfig, out: &Path, workers: usize) -> CliResult<SweepOutcome> {
    if cfg.preprocessing.is_empty() || cfg.methods.is_empty() || cfg.seeds.is_empty() {
        return Err(CliError::config("preprocessing, methods and seeds must be nonempty"));
    }
    if workers == 0 {
        return Err(CliError::config("workers must be at least 1"));
    }
    for p in &cfg.preprocessing {
        p.validate().map_err(crate::core_err)?;
    }
    cfg.evaluation.shift_grid.validate().map_err(crate::core_err)?;
    let jobs = expand_jobs(cfg, cfg.preprocessing.len())?;
    let ds = load_dataset(&cfg.dataset).map_err(CliError::data)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::data(format!("thread pool: {e}")))?;

    let (systems, ev) = pool.install(|| {
        rayon::join(
            || {
                cfg.preprocessing
                    .par_iter()
                    .map(|p| guarded(|| build_system(&ds, p).map_err(|e| e.to_string())))
                    .collect::<Vec<_>>()
            },
            || Evaluator::new(&ds, cfg.phantom.as_ref(), &cfg.evaluation),
        )
    });
    let ev = ev?;
    let results: Vec<Result<JobResult, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| match &systems[job.pre] {
                Ok(sys) => guarded(|| run_job(job, sys, &ev)),
                Err(e) => Err(format!("preprocessing failed: {e}")),
            })
            .collect()
    });

    std::fs::create_dir_all(out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    let echo = serde_json::to_string_pretty(cfg).map_err(CliError::data)?;
    write(&out.join("sweep.json"), echo.as_bytes())?;

    let mut res = csv_writer(
        &out.join(RESULTS_FILE),
        &[
            "job",
            "method",
            "pre",
            "tau",
            "rank",
            "whitening",
            "params",
            "seed",
            "iteration",
            "eps_psnr",
            "eps_ssim",
            "psnr_shift",
            "ssim_shift",
            "fidelity",
            "objective",
            "diverged",
        ],
    )?;
    let mut fails = csv_writer(
        &out.join(FAILURES_FILE),
        &["job", "method", "pre", "params", "seed", "error"],
    )?;
    let mut times = csv_writer(
        &out.join(TIMINGS_FILE),
        &["job", "method", "pre", "params", "seed", "seconds"],
    )?;
    let mut warns = String::new();
    let mut failures = 0;
    for (job, r) in jobs.iter().zip(&results) {
        let p = pre_echo(&cfg.preprocessing[job.pre]);
        let id = job.method.id();
        let params = job.method.params();
        match r {
            Ok(r) => {
                for row in &r.rows {
                    let s = &row.score;
                    res.write_record([
                        job.index.to_string(),
                        id.clone(),
                        job.pre.to_string(),
                        p[0].clone(),
                        p[1].clone(),
                        p[2].clone(),
                        params.clone(),
                        job.seed.to_string(),
                        row.iteration.to_string(),
                        num(s.eps_psnr),
                        s.eps_ssim.map(num).unwrap_or_default(),
                        shift_str(s.psnr_shift),
                        s.ssim_shift.map(shift_str).unwrap_or_default(),
                        format!("{:e}", row.fidelity),
                        format!("{:e}", row.objective),
                        r.diverged.to_string(),
                    ])
                    .map_err(CliError::data)?;
                }
                times
                    .write_record([
                        job.index.to_string(),
                        id.clone(),
                        job.pre.to_string(),
                        params.clone(),
                        job.seed.to_string(),
                        format!("{:.6}", r.seconds),
                    ])
                    .map_err(CliError::data)?;
                for w in &r.warnings {
                    warns.push_str(&format!("job {} {id} {params}: {w}\n", job.index));
                }
            }
            Err(e) => {
                failures += 1;
                fails
                    .write_record([
                        job.index.to_string(),
                        id.clone(),
                        job.pre.to_string(),
                        params.clone(),
                        job.seed.to_string(),
                        e.clone(),
                    ])
                    .map_err(CliError::data)?;
            }
        }
    }
    for w in [&mut res, &mut fails, &mut times] {
        w.flush().map_err(CliError::data)?;
    }
    write(&out.join("warnings.txt"), warns.as_bytes())?;

    let summary = summarize(cfg, &jobs, &results, out)?;
    let mut sw = csv::Writer::from_path(out.join(SUMMARY_FILE)).map_err(CliError::data)?;
    for row in &summary {
        sw.serialize(row).map_err(CliError::data)?;
    }
    sw.flush().map_err(CliError::data)?;
    write(&out.join("summary.md"), summary_markdown(&summary).as_bytes())?;

    if failures > 0 {
        return Err(CliError::RunFailures {
            failed: failures,
            total: jobs.len(),
        });
    }
    Ok(SweepOutcome {
        jobs: jobs.len(),
        failures,
        summary,
    })
}

/// Best job per (method, preprocessing) pair; ties go to the earlier job.
fn summarize(
    cfg: &SweepConfig,
    jobs: &[Job],
    results: &[Result<JobResult, String>],
    out: &Path,
) -> CliResult<Vec<SummaryRow>> {
    let mut groups: Vec<(String, usize)> = Vec::new();
    for job in jobs {
        let key = (job.method.id(), job.pre);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let best_dir = out.join(BEST_DIR);
    let mut rows = Vec::new();
    for (id, pre) in groups {
        let members = || {
            jobs.iter()
                .zip(results)
                .filter(|(j, _)| j.method.id() == id && j.pre == pre)
                .filter_map(|(j, r)| r.as_ref().ok().map(|r| (j, r)))
        };
        let pick = |sel: fn(&JobResult) -> &Option<Best>| {
            let mut win: Option<(&Job, &Best)> = None;
            for (j, r) in members() {
                if let Some(b) = sel(r) {
                    if win.is_none_or(|(_, w)| b.value > w.value) {
                        win = Some((j, b));
                    }
                }
            }
            win
        };
        let Some((pj, pb)) = pick(|r| &r.best_psnr) else {
            continue;
        };
        let base = format!("{}_pre{pre}", slug(&id));
        let psnr_volume = format!("{BEST_DIR}/{base}_psnr");
        save_volume(
            &best_dir.join(format!("{base}_psnr")),
            &pb.volume,
            json!({ "method": id, "params": pj.method.params(), "seed": pj.seed, "iteration": pb.iteration, "eps_psnr": num(pb.value) }),
        )?;
        let p = &cfg.preprocessing[pre];
        let mut row = SummaryRow {
            method: id.clone(),
            pre,
            tau: num(p.tau),
            rank: p.rank,
            whitening: p.whitening,
            best_eps_psnr: num(pb.value),
            psnr_params: pj.method.params(),
            psnr_seed: pj.seed,
            psnr_iteration: pb.iteration,
            psnr_volume,
            best_eps_ssim: String::new(),
            ssim_params: String::new(),
            ssim_seed: String::new(),
            ssim_iteration: String::new(),
            ssim_volume: String::new(),
        };
        if let Some((sj, sb)) = pick(|r| &r.best_ssim) {
            save_volume(
                &best_dir.join(format!("{base}_ssim")),
                &sb.volume,
                json!({ "method": id, "params": sj.method.params(), "seed": sj.seed, "iteration": sb.iteration, "eps_ssim": num(sb.value) }),
            )?;
            row.best_eps_ssim = num(sb.value);
            row.ssim_params = sj.method.params();
            row.ssim_seed = sj.seed.to_string();
            row.ssim_iteration = sb.iteration.to_string();
            row.ssim_volume = format!("{BEST_DIR}/{base}_ssim");
        }
        rows.push(row);
    }
    Ok(rows)
}

fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "| method | pre | tau | rank | whitening | ε-PSNR | params | iteration | ε-SSIM | params | iteration |\n\
         |---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            r.method,
            r.pre,
            r.tau,
            r.rank,
            r.whitening,
            r.best_eps_psnr,
            r.psnr_params,
            r.psnr_iteration,
            r.best_eps_ssim,
            r.ssim_params,
            r.ssim_iteration
        ));
    }
    s
}

/// Reads `summary.csv` from a sweep directory.
pub fn load_summary(dir: &Path) -> CliResult<Vec<SummaryRow>> {
    let path = dir.join(SUMMARY_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<SummaryRow>, _>>()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
