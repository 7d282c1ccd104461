//! Scoring of reconstructions against shifted phantom references.

use std::path::Path;
use std::sync::Arc;

use mpibench_core::container::ContainerWriter;
use mpibench_core::metrics::{QualityReport, ReferenceSet};
use mpibench_core::simdata::{load_dataset, PhantomSpec, RawDataset, DEFAULT_SUPERSAMPLE};
use mpibench_core::solvers::SolverTrace;
use mpibench_core::Volume;
use serde::Serialize;
use serde_json::json;

use crate::config::{EvalSettings, EvaluateCommand};
use crate::core_err;
use crate::error::{CliError, CliResult};
use crate::format::num;

/// ε-scores of one volume. SSIM fields are `None` when disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub eps_psnr: f64,
    pub psnr_shift: [f64; 3],
    pub eps_ssim: Option<f64>,
    pub ssim_shift: Option<[f64; 3]>,
}

pub struct Evaluator {
    pub refs: Arc<ReferenceSet>,
    pub data_range: f64,
    pub ssim: bool,
}

/// Phantom and supersampling recorded by `simulate`, unless overridden.
pub fn dataset_reference(ds: &RawDataset, phantom: Option<&PhantomSpec>) -> CliResult<(PhantomSpec, usize)> {
    let supersample = ds
        .provenance
        .get("supersample")
        .and_then(|v| v.as_u64())
        .map(|v| v as usize)
        .unwrap_or(DEFAULT_SUPERSAMPLE);
    if let Some(p) = phantom {
        return Ok((p.clone(), supersample));
    }
    let raw = ds
        .provenance
        .get("phantom")
        .ok_or_else(|| CliError::config("dataset records no phantom; give one in the config under \"phantom\""))?;
    let spec = serde_json::from_value(raw.clone()).map_err(|e| CliError::data(format!("recorded phantom: {e}")))?;
    Ok((spec, supersample))
}

impl Evaluator {
    pub fn new(ds: &RawDataset, phantom: Option<&PhantomSpec>, settings: &EvalSettings) -> CliResult<Self> {
        let (spec, supersample) = dataset_reference(ds, phantom)?;
        let refs = ReferenceSet::build(&spec, &ds.grid, &settings.shift_grid, supersample).map_err(core_err)?;
        Ok(Self {
            refs: Arc::new(refs),
            data_range: settings.data_range,
            ssim: settings.ssim,
        })
    }

    pub fn score(&self, v: &Volume) -> mpibench_core::Result<Score> {
        if self.ssim {
            let r = self.refs.evaluate(v, self.data_range)?;
            Ok(Score {
                eps_psnr: r.eps_psnr,
                psnr_shift: r.psnr_shift,
                eps_ssim: Some(r.eps_ssim),
                ssim_shift: Some(r.ssim_shift),
            })
        } else {
            let (eps_psnr, psnr_shift) = self.refs.eps_psnr(v, self.data_range)?;
            Ok(Score {
                eps_psnr,
                psnr_shift,
                eps_ssim: None,
                ssim_shift: None,
            })
        }
    }
}

pub fn shift_str(s: [f64; 3]) -> String {
    format!("{} {} {}", num(s[0]), num(s[1]), num(s[2]))
}

#[derive(Serialize)]
struct BestReport<'a> {
    iteration: usize,
    report: &'a QualityReport,
}

/// Scores every checkpoint of a saved trace. Writes `checkpoints.csv`,
/// `report.json` for the best-PSNR checkpoint and a `per_shift` container.
pub fn evaluate(cmd: &EvaluateCommand, out: &Path) -> CliResult<QualityReport> {
    let ds = load_dataset(&cmd.dataset).map_err(CliError::data)?;
    let trace = SolverTrace::load(&cmd.trace).map_err(CliError::data)?;
    if trace.checkpoints.is_empty() {
        return Err(CliError::data("trace holds no checkpoints"));
    }
    let mut settings = cmd.evaluation.clone();
    settings.ssim = true;
    let ev = Evaluator::new(&ds, None, &settings)?;
    let mut rows = String::from("iteration,eps_psnr,eps_ssim,psnr_shift,ssim_shift\n");
    let mut best: Option<(usize, QualityReport)> = None;
    for c in &trace.checkpoints {
        let r = ev.refs.evaluate(&c.volume, ev.data_range).map_err(core_err)?;
        rows.push_str(&format!(
            "{},{},{},{},{}\n",
            c.iteration,
            num(r.eps_psnr),
            num(r.eps_ssim),
            shift_str(r.psnr_shift),
            shift_str(r.ssim_shift)
        ));
        if best.as_ref().is_none_or(|(_, b)| r.eps_psnr > b.eps_psnr) {
            best = Some((c.iteration, r));
        }
    }
    let (iteration, report) = best.expect("at least one checkpoint");
    std::fs::create_dir_all(out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    write(&out.join("checkpoints.csv"), rows.as_bytes())?;
    let text = serde_json::to_string_pretty(&BestReport {
        iteration,
        report: &report,
    })
    .map_err(CliError::data)?;
    write(&out.join("report.json"), text.as_bytes())?;
    let shifts: Vec<f64> = ev.refs.shifts().iter().flatten().copied().collect();
    let n = ev.refs.len();
    ContainerWriter::new("per_shift_scores")
        .array("shifts", &[n, 3], &shifts)
        .array("psnr", &[n], &report.psnr_per_shift)
        .array("ssim", &[n], &report.ssim_per_shift)
        .metadata(json!({ "iteration": iteration, "data_range": ev.data_range }))
        .write(out.join("per_shift"))
        .map_err(CliError::data)?;
    Ok(report)
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
