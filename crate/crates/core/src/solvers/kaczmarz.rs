//! Row-action solvers on the augmented system `A c + √ρ u = y`.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::schedule::CheckpointSchedule;
use super::trace::{to_volume, Checkpoint, SolverTrace};
use crate::error::{Error, Result};
use crate::linalg::{dot, project_nonneg_in_place, soft_shrink_in_place, Volume};
use crate::preprocess::ProcessedSystem;

/// Growth factor of `‖c‖₂` over its running maximum that sets the
/// divergence flag.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KaczmarzParams {
    pub rho: f64,
    #[serde(default)]
    pub lambda: f64,
    pub sweeps: usize,
    #[serde(default = "yes")]
    pub nonneg: bool,
}

fn yes() -> bool {
    true
}

impl KaczmarzParams {
    pub fn new(rho: f64, lambda: f64, sweeps: usize) -> Self {
        Self {
            rho,
            lambda,
            sweeps,
            nonneg: true,
        }
    }
}

/// Kaczmarz with optional soft shrinkage and nonnegativity after each sweep.
///
/// Per row: `β = (y_i − ⟨a_i, c⟩ − √ρ u_i) / (‖a_i‖² + ρ)`,
/// `c += β a_i`, `u_i += β √ρ`. After the sweep the shrinkage threshold is
/// `λ / (mean_i ‖a_i‖² + ρ)`.
pub fn kaczmarz(
    sys: &ProcessedSystem,
    params: &KaczmarzParams,
    schedule: &CheckpointSchedule,
    x0: Option<&Volume>,
) -> Result<SolverTrace> {
    let KaczmarzParams {
        rho,
        lambda,
        sweeps,
        nonneg,
    } = *params;
    if !(rho >= 0.0) || !(lambda >= 0.0) {
        return Err(Error::invalid(format!("rho {rho} and lambda {lambda} must be ≥ 0")));
    }
    if sweeps == 0 {
        return Err(Error::invalid("at least one sweep is required"));
    }
    let a = &sys.a;
    let (k, n) = a.shape();
    let mut c = match x0 {
        Some(v) if v.len() != n => return Err(Error::invalid(format!("x0 has {} voxels, system has {n}", v.len()))),
        Some(v) => v.values.clone(),
        None => vec![0.0; n],
    };
    let mut u = vec![0.0; k];
    let sqrt_rho = rho.sqrt();
    let row_sq: Vec<f64> = (0..k).map(|i| dot(a.row(i), a.row(i))).collect();
    let mean_sq = row_sq.iter().sum::<f64>() / k.max(1) as f64;
    let threshold = if lambda > 0.0 { lambda / (mean_sq + rho) } else { 0.0 };

    let mut trace = SolverTrace::new(
        method_name(rho, lambda),
        json!({
            "rho": rho,
            "lambda": lambda,
            "sweeps": sweeps,
            "nonneg": nonneg,
            "shrink_threshold": threshold,
            "shrink_scaling": "lambda / (mean squared row norm + rho)",
        }),
    );
    let start = Instant::now();
    let mut skipped = 0usize;
    let mut norm_sq = dot(&c, &c);
    let mut peak_sq = norm_sq;
    let mut augmented = Vec::with_capacity(schedule.len());

    for sweep in 1..=sweeps {
        for i in 0..k {
            let denom = row_sq[i] + rho;
            if denom == 0.0 {
                if sweep == 1 {
                    skipped += 1;
                }
                continue;
            }
            let row = a.row(i);
            let ac = dot(row, &c);
            let beta = (sys.y[i] - ac - sqrt_rho * u[i]) / denom;
            for (cj, &aj) in c.iter_mut().zip(row) {
                *cj += beta * aj;
            }
            u[i] += beta * sqrt_rho;
            norm_sq += 2.0 * beta * ac + beta * beta * row_sq[i];
            if peak_sq > 0.0 && norm_sq > DIVERGENCE_FACTOR * DIVERGENCE_FACTOR * peak_sq {
                trace.diverged = true;
            }
            peak_sq = peak_sq.max(norm_sq);
        }
        if threshold > 0.0 {
            soft_shrink_in_place(&mut c, threshold)?;
        }
        if nonneg {
            project_nonneg_in_place(&mut c);
        }
        norm_sq = dot(&c, &c);
        if !norm_sq.is_finite() {
            return Err(Error::NonFinite {
                context: "kaczmarz iterate".into(),
                iteration: sweep,
            });
        }
        if schedule.contains(sweep) {
            let (fidelity, objective, aug) = kaczmarz_objective(sys, &c, &u, rho, lambda)?;
            augmented.push(aug);
            trace.checkpoints.push(Checkpoint {
                iteration: sweep,
                volume: to_volume(&sys.grid, &c),
                fidelity,
                objective,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    }
    if let Some(m) = trace.metadata.as_object_mut() {
        m.insert("augmented_residuals".into(), json!(augmented));
    }
    if skipped > 0 {
        trace.warnings.push(format!("{skipped} zero rows skipped (rho = 0)"));
    }
    if trace.diverged {
        trace.warnings.push(format!(
            "iterate norm grew more than {DIVERGENCE_FACTOR}x over its running maximum"
        ));
    }
    Ok(trace)
}

fn method_name(rho: f64, lambda: f64) -> &'static str {
    match (rho > 0.0, lambda > 0.0) {
        (_, false) => "kaczmarz_l2",
        (true, true) => "kaczmarz_l1l2",
        (false, true) => "kaczmarz_l1",
    }
}

/// `(½‖Ac − y‖², ½‖Ac − y‖² + ½ρ‖c‖² + λ‖c‖₁, ‖Ac − y + √ρ u‖)`.
fn kaczmarz_objective(sys: &ProcessedSystem, c: &[f64], u: &[f64], rho: f64, lambda: f64) -> Result<(f64, f64, f64)> {
    let ac = sys.a.matvec(c)?;
    let fid = 0.5 * ac.iter().zip(&sys.y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let sr = rho.sqrt();
    let aug = ac
        .iter()
        .zip(&sys.y)
        .zip(u)
        .map(|((p, q), w)| (p - q + sr * w).powi(2))
        .sum::<f64>()
        .sqrt();
    let l2 = 0.5 * rho * dot(c, c);
    let l1 = lambda * c.iter().map(|v| v.abs()).sum::<f64>();
    Ok((fid, fid + l2 + l1, aug))
}

/// Tikhonov-regularized Kaczmarz with nonnegativity.
pub fn kaczmarz_l2(
    sys: &ProcessedSystem,
    rho: f64,
    sweeps: usize,
    schedule: &CheckpointSchedule,
    x0: Option<&Volume>,
) -> Result<SolverTrace> {
    kaczmarz(sys, &KaczmarzParams::new(rho, 0.0, sweeps), schedule, x0)
}

/// Kaczmarz sweeps followed by soft shrinkage and nonnegativity.
pub fn kaczmarz_l1l2(
    sys: &ProcessedSystem,
    rho: f64,
    lambda: f64,
    sweeps: usize,
    schedule: &CheckpointSchedule,
    x0: Option<&Volume>,
) -> Result<SolverTrace> {
    kaczmarz(sys, &KaczmarzParams::new(rho, lambda, sweeps), schedule, x0)
}

/// [`kaczmarz_l1l2`] with `ρ = 0`.
pub fn kaczmarz_l1(
    sys: &ProcessedSystem,
    lambda: f64,
    sweeps: usize,
    schedule: &CheckpointSchedule,
    x0: Option<&Volume>,
) -> Result<SolverTrace> {
    kaczmarz(sys, &KaczmarzParams::new(0.0, lambda, sweeps), schedule, x0)
}

/// Keeps the `k_keep` rows of largest norm, in their original order.
pub fn select_rows_by_norm(sys: &ProcessedSystem, k_keep: usize) -> Result<ProcessedSystem> {
    let k = sys.rows();
    if k_keep == 0 || k_keep > k {
        return Err(Error::invalid(format!("k_keep {k_keep} outside 1..={k}")));
    }
    let norms = sys.a.row_norms();
    let mut order: Vec<usize> = (0..k).collect();
    // stable sort keeps lower indices first among equal norms
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut keep = order[..k_keep].to_vec();
    keep.sort_unstable();
    let mut out = sys.clone();
    out.a = sys.a.select_rows(&keep);
    out.y = keep.iter().map(|&i| sys.y[i]).collect();
    if sys.retained_rows.len() == k {
        out.retained_rows = keep.iter().map(|&i| sys.retained_rows[i]).collect();
    }
    out.effective_rank = k_keep;
    Ok(out)
}
