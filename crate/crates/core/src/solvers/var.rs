//! Variational reconstruction: AMSGrad on `(1/p)‖Ac − y‖_p^p + R(c)` with
//! projection onto `c ≥ 0` after every step.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::schedule::CheckpointSchedule;
use super::trace::{to_volume, Checkpoint, SolverTrace};
use super::tv::tv_accumulate;
use crate::error::{Error, Result};
use crate::linalg::{project_nonneg_in_place, Volume};
use crate::optim::{Adam, AdamConfig};
use crate::preprocess::ProcessedSystem;

pub const DEFAULT_VAR_ITERS: usize = 500;
pub const DEFAULT_VAR_LR: f64 = 1e-2;
pub const DEFAULT_TV_EPSILON: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// `λ·½‖c‖₂²`
    L2,
    /// `λ‖c‖₁`
    L1,
    /// `λ‖c‖₁ + ρ·½‖c‖₂²`
    L1PlusL2,
    /// `λ·TV_ε(c)`
    Tv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub lambda: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_tv_eps")]
    pub tv_epsilon: f64,
}

fn default_tv_eps() -> f64 {
    DEFAULT_TV_EPSILON
}

impl PenaltyConfig {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            rho: 0.0,
            tv_epsilon: DEFAULT_TV_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.rho >= 0.0) {
            return Err(Error::invalid("penalty weights must be ≥ 0"));
        }
        if !(self.tv_epsilon > 0.0) {
            return Err(Error::invalid("tv_epsilon must be positive"));
        }
        Ok(())
    }

    /// Adds the (sub)gradient into `grad` and returns the penalty value.
    fn accumulate(&self, c: &[f64], dims: [usize; 3], grad: &mut [f64]) -> f64 {
        let lambda = self.lambda;
        let l1 = |grad: &mut [f64]| -> f64 {
            let mut v = 0.0;
            for (g, &x) in grad.iter_mut().zip(c) {
                v += x.abs();
                *g += lambda * sign(x);
            }
            lambda * v
        };
        let l2 = |w: f64, grad: &mut [f64]| -> f64 {
            let mut v = 0.0;
            for (g, &x) in grad.iter_mut().zip(c) {
                v += x * x;
                *g += w * x;
            }
            0.5 * w * v
        };
        match self.kind {
            PenaltyKind::L2 => l2(lambda, grad),
            PenaltyKind::L1 => l1(grad),
            PenaltyKind::L1PlusL2 => l1(grad) + l2(self.rho, grad),
            PenaltyKind::Tv => {
                if lambda == 0.0 {
                    return 0.0;
                }
                let mut tv_grad = vec![0.0; c.len()];
                let v = tv_accumulate(c, dims, self.tv_epsilon, &mut tv_grad);
                for (g, t) in grad.iter_mut().zip(&tv_grad) {
                    *g += lambda * t;
                }
                lambda * v
            }
        }
    }
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarConfig {
    /// Data-fidelity exponent, 1 or 2.
    pub fidelity_p: u32,
    pub penalty: PenaltyConfig,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
}

fn default_iters() -> usize {
    DEFAULT_VAR_ITERS
}
fn default_lr() -> f64 {
    DEFAULT_VAR_LR
}

impl VarConfig {
    pub fn new(fidelity_p: u32, penalty: PenaltyConfig) -> Self {
        Self {
            fidelity_p,
            penalty,
            iters: DEFAULT_VAR_ITERS,
            lr: DEFAULT_VAR_LR,
        }
    }
}

/// `((1/p)‖r‖_p^p, Aᵀ ∂)` for the residual `r = Ac − y`.
fn fidelity_and_grad(sys: &ProcessedSystem, c: &[f64], p: u32) -> Result<(f64, Vec<f64>)> {
    let mut r = sys.a.matvec(c)?;
    for (ri, yi) in r.iter_mut().zip(&sys.y) {
        *ri -= yi;
    }
    let value = match p {
        1 => {
            let v = r.iter().map(|x| x.abs()).sum();
            r.iter_mut().for_each(|x| *x = sign(*x));
            v
        }
        _ => 0.5 * r.iter().map(|x| x * x).sum::<f64>(),
    };
    Ok((value, sys.a.matvec_t(&r)?))
}

/// Minimizes `(1/p)‖Ac − y‖_p^p + R(c)` with AMSGrad and nonnegativity
/// projection. `seed` is recorded only; the method is deterministic.
pub fn var_solve(
    sys: &ProcessedSystem,
    cfg: &VarConfig,
    schedule: &CheckpointSchedule,
    x0: Option<&Volume>,
    seed: u64,
) -> Result<SolverTrace> {
    if cfg.fidelity_p != 1 && cfg.fidelity_p != 2 {
        return Err(Error::invalid(format!(
            "fidelity_p must be 1 or 2, got {}",
            cfg.fidelity_p
        )));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::invalid(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    cfg.penalty.validate()?;
    let n = sys.cols();
    let mut c = match x0 {
        Some(v) if v.len() != n => return Err(Error::invalid(format!("x0 has {} voxels, system has {n}", v.len()))),
        Some(v) => v.values.clone(),
        None => vec![0.0; n],
    };
    let dims = sys.grid.shape;
    let mut opt = Adam::new(AdamConfig::amsgrad(cfg.lr), n);
    let mut trace = SolverTrace::new(
        format!("var_l{}_{}", cfg.fidelity_p, penalty_name(cfg.penalty.kind)),
        json!({
            "config": cfg,
            "seed": seed,
            "fidelity_scale": format!("1/{}", cfg.fidelity_p),
            "optimizer": "amsgrad(0.9, 0.999, eps 1e-8)",
        }),
    );
    let start = Instant::now();
    for it in 1..=cfg.iters {
        let (_, mut grad) = fidelity_and_grad(sys, &c, cfg.fidelity_p)?;
        cfg.penalty.accumulate(&c, dims, &mut grad);
        opt.step(&mut c, &grad);
        project_nonneg_in_place(&mut c);
        if schedule.contains(it) || c.iter().any(|v| !v.is_finite()) {
            let (fid, _) = fidelity_and_grad(sys, &c, cfg.fidelity_p)?;
            let pen = cfg.penalty.accumulate(&c, dims, &mut vec![0.0; n]);
            let objective = fid + pen;
            if !objective.is_finite() {
                return Err(Error::NonFinite {
                    context: "var objective".into(),
                    iteration: it,
                });
            }
            trace.checkpoints.push(Checkpoint {
                iteration: it,
                volume: to_volume(&sys.grid, &c),
                fidelity: fid,
                objective,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(trace)
}

/// Objective `(1/p)‖Ac − y‖_p^p + R(c)` at `c`.
pub fn var_objective(sys: &ProcessedSystem, cfg: &VarConfig, c: &[f64]) -> Result<f64> {
    let (fid, _) = fidelity_and_grad(sys, c, cfg.fidelity_p)?;
    Ok(fid + cfg.penalty.accumulate(c, sys.grid.shape, &mut vec![0.0; c.len()]))
}

fn penalty_name(kind: PenaltyKind) -> &'static str {
    match kind {
        PenaltyKind::L2 => "l2",
        PenaltyKind::L1 => "l1",
        PenaltyKind::L1PlusL2 => "l1_plus_l2",
        PenaltyKind::Tv => "tv",
    }
}
