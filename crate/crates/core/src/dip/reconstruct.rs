use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::network::{build_network, grad_theta, AutoencoderSpec};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::preprocess::ProcessedSystem;
use crate::solvers::{to_volume, Checkpoint, CheckpointSchedule, SolverTrace};

pub const DIP_LR_GRID: [f64; 3] = [1e-3, 1e-4, 1e-5];
pub const DEFAULT_DIP_ITERATIONS: usize = 20_000;
/// Upper end of the uniform input distribution `U[0, 0.7]`.
pub const INPUT_HIGH: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipConfig {
    pub lr: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_momenta")]
    pub momenta: (f64, f64),
    #[serde(default = "one")]
    pub fidelity_p: u32,
    /// Defaults to the standard schedule cut at `iterations`.
    #[serde(default)]
    pub schedule: Option<CheckpointSchedule>,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    DEFAULT_DIP_ITERATIONS
}
fn default_momenta() -> (f64, f64) {
    (0.9, 0.999)
}
fn one() -> u32 {
    1
}

impl DipConfig {
    pub fn new(lr: f64, iterations: usize, seed: u64) -> Self {
        Self {
            lr,
            iterations,
            momenta: default_momenta(),
            fidelity_p: 1,
            schedule: None,
            seed,
        }
    }

    pub fn schedule(&self) -> CheckpointSchedule {
        self.schedule
            .clone()
            .unwrap_or_else(|| CheckpointSchedule::standard_up_to(self.iterations))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.iterations == 0 {
            return Err(Error::invalid("dip needs lr > 0 and at least one iteration"));
        }
        if self.fidelity_p != 1 && self.fidelity_p != 2 {
            return Err(Error::invalid(format!(
                "fidelity_p must be 1 or 2, got {}",
                self.fidelity_p
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.momenta.0,
            beta2: self.momenta.1,
            ..AdamConfig::adam(self.lr)
        }
    }
}

/// Network input drawn once from `U[0, 0.7]`.
pub fn sample_input(dims: [usize; 3], seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let values = (0..n).map(|_| rng.random::<f64>() * INPUT_HIGH).collect();
    Tensor4 {
        channels: 1,
        nx: dims[0],
        ny: dims[1],
        nz: dims[2],
        values,
    }
}

/// Fits the network weights to the data with Adam and records `φ_θ(z)` at
/// the scheduled iterations.
pub fn dip_reconstruct(sys: &ProcessedSystem, cfg: &DipConfig, spec: &AutoencoderSpec) -> Result<SolverTrace> {
    cfg.validate()?;
    let dims = sys.grid.shape;
    let (mut theta, net) = build_network(spec, dims)?;
    let z = sample_input(dims, cfg.seed);
    let schedule = cfg.schedule();
    let mut opt = Adam::new(cfg.adam(), theta.len());
    let mut trace = SolverTrace::new(
        format!("dip_l{}", cfg.fidelity_p),
        json!({
            "config": cfg,
            "network": spec,
            "stage_dims": net.stage_dims,
            "parameters": theta.len(),
        }),
    );
    let start = Instant::now();
    for it in 1..=cfg.iterations {
        let (_, grad) = grad_theta(&net, &theta, &z, sys, cfg.fidelity_p).map_err(|e| at_iteration(e, it))?;
        opt.step(&mut theta.values, &grad);
        if schedule.contains(it) {
            let out = net.forward(&theta, &z).map_err(|e| at_iteration(e, it))?;
            let ax = sys.a.matvec(&out.values)?;
            let fidelity = residual_norm(&ax, &sys.y, cfg.fidelity_p);
            trace.checkpoints.push(Checkpoint {
                iteration: it,
                volume: to_volume(&sys.grid, &out.values),
                fidelity,
                objective: fidelity,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(trace)
}

/// `‖a − b‖_p^p`.
fn residual_norm(a: &[f64], b: &[f64], p: u32) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if p == 1 { (x - y).abs() } else { (x - y) * (x - y) })
        .sum()
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::NonFinite { context, iteration },
        other => other,
    }
}

/// `‖θ‖_p`.
fn p_norm(theta: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        theta.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        theta.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        theta.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `c = τ^{1/p} θ / ‖θ‖_p`, so that `‖c‖_p^p = τ`.
pub fn homogeneous_map(theta: &[f64], p: f64, tau: f64) -> Result<Vec<f64>> {
    let norm = p_norm(theta, p);
    if norm == 0.0 {
        return Err(Error::invalid("homogeneous map undefined at theta = 0"));
    }
    let g = tau.powf(1.0 / p) / norm;
    Ok(theta.iter().map(|v| g * v).collect())
}

/// Gradient of `L(c(θ))` in `θ` from `d = ∂L/∂c`:
/// `g·d + (θ·d) ∇g` with `∇g_j = −τ^{1/p} ‖θ‖_p^{−1−p} |θ_j|^{p−1} sign θ_j`.
fn homogeneous_pullback(theta: &[f64], d: &[f64], p: f64, tau: f64) -> Vec<f64> {
    let norm = p_norm(theta, p);
    let t = tau.powf(1.0 / p);
    let g = t / norm;
    let theta_d: f64 = theta.iter().zip(d).map(|(a, b)| a * b).sum();
    let coef = -t * norm.powf(-1.0 - p) * theta_d;
    theta
        .iter()
        .zip(d)
        .map(|(&th, &dj)| {
            let dn = if p == 1.0 {
                crate::solvers::sign(th)
            } else {
                th.abs().powf(p - 1.0) * crate::solvers::sign(th)
            };
            g * dj + coef * dn
        })
        .collect()
}

/// Minimizes `‖A c − y‖₂²` over `c = τ^{1/p} θ / ‖θ‖_p` with Adam on `θ ≥ 0`.
/// Every recorded iterate satisfies `‖c‖_p^p = τ`.
pub fn homogeneous_dip(
    sys: &ProcessedSystem,
    p: f64,
    tau: f64,
    iters: usize,
    lr: f64,
    schedule: &CheckpointSchedule,
    seed: u64,
) -> Result<SolverTrace> {
    if !(p >= 1.0) || !(tau > 0.0) || !(lr > 0.0) || iters == 0 {
        return Err(Error::invalid(
            "homogeneous dip needs p ≥ 1, tau > 0, lr > 0, iters ≥ 1",
        ));
    }
    let n = sys.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() + 1e-3).collect() };
    let mut theta = draw(&mut rng);
    let mut opt = Adam::new(AdamConfig::adam(lr), n);
    let mut trace = SolverTrace::new(
        "homogeneous_dip",
        json!({"p": p, "tau": tau, "iters": iters, "lr": lr, "seed": seed}),
    );
    let start = Instant::now();
    let mut reinits = 0usize;
    for it in 1..=iters {
        let c = homogeneous_map(&theta, p, tau)?;
        let mut r = sys.a.matvec(&c)?;
        for (ri, yi) in r.iter_mut().zip(&sys.y) {
            *ri = 2.0 * (*ri - yi);
        }
        let d = sys.a.matvec_t(&r)?;
        let grad = homogeneous_pullback(&theta, &d, p, tau);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "homogeneous dip gradient".into(),
                iteration: it,
            });
        }
        opt.step(&mut theta, &grad);
        crate::linalg::project_nonneg_in_place(&mut theta);
        if theta.iter().all(|v| *v == 0.0) {
            theta = draw(&mut rng);
            opt = Adam::new(AdamConfig::adam(lr), n);
            reinits += 1;
            trace
                .warnings
                .push(format!("theta vanished at iteration {it}; reinitialized"));
        }
        if schedule.contains(it) {
            let c = homogeneous_map(&theta, p, tau)?;
            let ac = sys.a.matvec(&c)?;
            let fid: f64 = ac.iter().zip(&sys.y).map(|(a, y)| (a - y) * (a - y)).sum();
            trace.checkpoints.push(Checkpoint {
                iteration: it,
                volume: to_volume(&sys.grid, &c),
                fidelity: fid,
                objective: fid,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
    }
    if let Some(m) = trace.metadata.as_object_mut() {
        m.insert("reinitializations".into(), json!(reinits));
    }
    Ok(trace)
}
