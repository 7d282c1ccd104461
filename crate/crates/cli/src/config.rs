//! JSON configuration files. Unknown keys are rejected and errors carry the
//! path of the offending field.

use std::path::{Path, PathBuf};

use mpibench_core::dip::{AutoencoderSpec, DEFAULT_DIP_ITERATIONS, DIP_LR_GRID};
use mpibench_core::metrics::{ShiftGrid, DEFAULT_DATA_RANGE};
use mpibench_core::preprocess::PreprocessConfig;
use mpibench_core::simdata::{GridSpec, OperatorModel, PhantomSpec, DEFAULT_SUPERSAMPLE};
use mpibench_core::solvers::{
    PenaltyConfig, PenaltyKind, DEFAULT_TV_EPSILON, DEFAULT_VAR_ITERS, DEFAULT_VAR_LR, KACZMARZ_SWEEPS,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reads a config and resolves its relative paths against the file's
/// directory.
pub fn load<T: DeserializeOwned + ResolvePaths>(path: &Path) -> CliResult<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut cfg: T = serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        if at == "." {
            CliError::Config(format!("{}: {inner}", path.display()))
        } else {
            CliError::Config(format!("{}: {at}: {inner}", path.display()))
        }
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.resolve(base);
    Ok(cfg)
}

pub trait ResolvePaths {
    fn resolve(&mut self, _base: &Path) {}
}

fn rebase(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn default_coils() -> usize {
    1
}
fn default_background_scale() -> f64 {
    1.0
}
fn default_background_repeats() -> usize {
    10
}
fn default_supersample() -> usize {
    DEFAULT_SUPERSAMPLE
}
fn default_cone() -> PhantomSpec {
    PhantomSpec::shape_cone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub operator: OperatorModel,
    #[serde(default = "default_cone")]
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_coils")]
    pub coils: usize,
    /// Uniform noise level set from the clean signal; exclusive with
    /// `noise_sigma`. Both absent means noiseless.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default = "default_background_scale")]
    pub background_scale: f64,
    #[serde(default = "default_background_repeats")]
    pub background_repeats: usize,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ResolvePaths for SimulateConfig {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessCommand {
    pub dataset: PathBuf,
    pub preprocess: PreprocessConfig,
}

impl ResolvePaths for PreprocessCommand {
    fn resolve(&mut self, base: &Path) {
        rebase(&mut self.dataset, base);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructCommand {
    /// Processed system written by `preprocess`.
    pub system: PathBuf,
    pub method: MethodConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ResolvePaths for ReconstructCommand {
    fn resolve(&mut self, base: &Path) {
        rebase(&mut self.system, base);
    }
}

fn default_range() -> f64 {
    DEFAULT_DATA_RANGE
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default)]
    pub shift_grid: ShiftGrid,
    #[serde(default = "default_range")]
    pub data_range: f64,
    /// SSIM is the expensive half; sweeps may skip it.
    #[serde(default = "yes")]
    pub ssim: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            shift_grid: ShiftGrid::default(),
            data_range: DEFAULT_DATA_RANGE,
            ssim: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateCommand {
    pub trace: PathBuf,
    /// Dataset whose phantom and grid define the reference.
    pub dataset: PathBuf,
    #[serde(default)]
    pub evaluation: EvalSettings,
}

impl ResolvePaths for EvaluateCommand {
    fn resolve(&mut self, base: &Path) {
        rebase(&mut self.trace, base);
        rebase(&mut self.dataset, base);
    }
}

fn default_sweeps() -> usize {
    KACZMARZ_SWEEPS
}
fn default_var_iters() -> usize {
    DEFAULT_VAR_ITERS
}
fn default_var_lr() -> f64 {
    DEFAULT_VAR_LR
}
fn default_dip_iterations() -> usize {
    DEFAULT_DIP_ITERATIONS
}

/// One solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", deny_unknown_fields)]
pub enum MethodConfig {
    #[serde(rename = "KACZ-l2")]
    KaczL2 {
        rho: f64,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "KACZ-l1l2")]
    KaczL1L2 {
        rho: f64,
        lambda: f64,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "KACZ-l1")]
    KaczL1 {
        lambda: f64,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "KACZ-TSVD-l1")]
    KaczTsvdL1 {
        lambda: f64,
        k_keep: usize,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "VAR")]
    Var {
        fidelity_p: u32,
        penalty: PenaltyConfig,
        #[serde(default = "default_var_iters")]
        iters: usize,
        #[serde(default = "default_var_lr")]
        lr: f64,
    },
    #[serde(rename = "DIP-Dl1")]
    Dip {
        lr: f64,
        #[serde(default = "default_dip_iterations")]
        iterations: usize,
        #[serde(default)]
        network: AutoencoderSpec,
    },
}

/// Values of the form `0.5^(i−1)` for `i = first, first + stride, …, last`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalvingRange {
    #[serde(default = "first_index")]
    pub first: u32,
    #[serde(default = "last_index")]
    pub last: u32,
    #[serde(default = "unit_stride")]
    pub stride: u32,
}

fn first_index() -> u32 {
    1
}
fn last_index() -> u32 {
    40
}
fn unit_stride() -> u32 {
    1
}

impl Default for HalvingRange {
    fn default() -> Self {
        Self {
            first: 1,
            last: 40,
            stride: 1,
        }
    }
}

/// A parameter axis: an explicit list, or a range of the halving grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamGrid {
    Values(Vec<f64>),
    Halving(HalvingRange),
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid::Halving(HalvingRange::default())
    }
}

impl ParamGrid {
    pub fn values(&self) -> CliResult<Vec<f64>> {
        match self {
            ParamGrid::Values(v) if v.is_empty() => Err(CliError::config("parameter list is empty")),
            ParamGrid::Values(v) => Ok(v.clone()),
            ParamGrid::Halving(r) => {
                if r.first == 0 || r.first > r.last || r.stride == 0 {
                    return Err(CliError::Config(format!(
                        "halving range needs 1 ≤ first ≤ last and stride ≥ 1, got {r:?}"
                    )));
                }
                Ok((r.first..=r.last)
                    .step_by(r.stride as usize)
                    .map(|i| 0.5f64.powi(i as i32 - 1))
                    .collect())
            }
        }
    }
}

fn zero_grid() -> ParamGrid {
    ParamGrid::Values(vec![0.0])
}
fn default_k_keep() -> Vec<usize> {
    vec![32, 64, 128, 256, 512, 1024]
}
fn default_fidelities() -> Vec<u32> {
    vec![1, 2]
}
fn default_penalties() -> Vec<PenaltyKind> {
    vec![PenaltyKind::L1, PenaltyKind::L2, PenaltyKind::Tv]
}
fn default_dip_lrs() -> Vec<f64> {
    DIP_LR_GRID.to_vec()
}
fn default_tv_eps() -> f64 {
    DEFAULT_TV_EPSILON
}

/// A method with parameter axes; expands to one [`MethodConfig`] per grid
/// point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", deny_unknown_fields)]
pub enum MethodSweep {
    #[serde(rename = "KACZ-l2")]
    KaczL2 {
        #[serde(default)]
        rho: ParamGrid,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "KACZ-l1l2")]
    KaczL1L2 {
        #[serde(default)]
        rho: ParamGrid,
        #[serde(default)]
        lambda: ParamGrid,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "KACZ-l1")]
    KaczL1 {
        #[serde(default)]
        lambda: ParamGrid,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "KACZ-TSVD-l1")]
    KaczTsvdL1 {
        #[serde(default)]
        lambda: ParamGrid,
        #[serde(default = "default_k_keep")]
        k_keep: Vec<usize>,
        #[serde(default = "default_sweeps")]
        sweeps: usize,
    },
    #[serde(rename = "VAR")]
    Var {
        #[serde(default = "default_fidelities")]
        fidelity_p: Vec<u32>,
        #[serde(default = "default_penalties")]
        penalty: Vec<PenaltyKind>,
        #[serde(default)]
        lambda: ParamGrid,
        /// ℓ² weight, used by `l1_plus_l2` only.
        #[serde(default = "zero_grid")]
        rho: ParamGrid,
        #[serde(default = "default_tv_eps")]
        tv_epsilon: f64,
        #[serde(default = "default_var_iters")]
        iters: usize,
        #[serde(default = "default_var_lr")]
        lr: f64,
    },
    #[serde(rename = "DIP-Dl1")]
    Dip {
        #[serde(default = "default_dip_lrs")]
        lr: Vec<f64>,
        #[serde(default = "default_dip_iterations")]
        iterations: usize,
        #[serde(default)]
        network: AutoencoderSpec,
    },
}

impl MethodSweep {
    pub fn expand(&self) -> CliResult<Vec<MethodConfig>> {
        let mut out = Vec::new();
        match self {
            MethodSweep::KaczL2 { rho, sweeps } => {
                for r in rho.values()? {
                    out.push(MethodConfig::KaczL2 {
                        rho: r,
                        sweeps: *sweeps,
                    });
                }
            }
            MethodSweep::KaczL1L2 { rho, lambda, sweeps } => {
                let lambdas = lambda.values()?;
                for r in rho.values()? {
                    for &l in &lambdas {
                        out.push(MethodConfig::KaczL1L2 {
                            rho: r,
                            lambda: l,
                            sweeps: *sweeps,
                        });
                    }
                }
            }
            MethodSweep::KaczL1 { lambda, sweeps } => {
                for l in lambda.values()? {
                    out.push(MethodConfig::KaczL1 {
                        lambda: l,
                        sweeps: *sweeps,
                    });
                }
            }
            MethodSweep::KaczTsvdL1 { lambda, k_keep, sweeps } => {
                if k_keep.is_empty() {
                    return Err(CliError::config("k_keep list is empty"));
                }
                let lambdas = lambda.values()?;
                for &k in k_keep {
                    for &l in &lambdas {
                        out.push(MethodConfig::KaczTsvdL1 {
                            lambda: l,
                            k_keep: k,
                            sweeps: *sweeps,
                        });
                    }
                }
            }
            MethodSweep::Var {
                fidelity_p,
                penalty,
                lambda,
                rho,
                tv_epsilon,
                iters,
                lr,
            } => {
                let lambdas = lambda.values()?;
                let rhos = rho.values()?;
                for &p in fidelity_p {
                    for &kind in penalty {
                        let rho_axis: &[f64] = if kind == PenaltyKind::L1PlusL2 { &rhos } else { &[0.0] };
                        for &r in rho_axis {
                            for &l in &lambdas {
                                out.push(MethodConfig::Var {
                                    fidelity_p: p,
                                    penalty: PenaltyConfig {
                                        kind,
                                        lambda: l,
                                        rho: r,
                                        tv_epsilon: *tv_epsilon,
                                    },
                                    iters: *iters,
                                    lr: *lr,
                                });
                            }
                        }
                    }
                }
            }
            MethodSweep::Dip {
                lr,
                iterations,
                network,
            } => {
                if lr.is_empty() {
                    return Err(CliError::config("DIP learning-rate list is empty"));
                }
                for &l in lr {
                    out.push(MethodConfig::Dip {
                        lr: l,
                        iterations: *iterations,
                        network: network.clone(),
                    });
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: PathBuf,
    pub preprocessing: Vec<PreprocessConfig>,
    pub methods: Vec<MethodSweep>,
    /// Seeds for the randomly initialized methods; deterministic methods run
    /// once.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub evaluation: EvalSettings,
    /// Reference phantom; defaults to the one recorded in the dataset.
    #[serde(default)]
    pub phantom: Option<PhantomSpec>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ResolvePaths for SweepConfig {
    fn resolve(&mut self, base: &Path) {
        rebase(&mut self.dataset, base);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Output directory of a sweep.
    pub results: PathBuf,
    #[serde(default = "default_range")]
    pub data_range: f64,
}

impl ResolvePaths for ReportConfig {
    fn resolve(&mut self, base: &Path) {
        rebase(&mut self.results, base);
    }
}
