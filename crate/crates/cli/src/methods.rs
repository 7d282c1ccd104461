//! Dispatch from a [`MethodConfig`] to the core solvers.

use mpibench_core::dip::{dip_reconstruct, DipConfig};
use mpibench_core::preprocess::ProcessedSystem;
use mpibench_core::solvers::{
    kaczmarz_l1, kaczmarz_l1l2, kaczmarz_l2, select_rows_by_norm, var_solve, CheckpointSchedule, PenaltyKind,
    SolverTrace, VarConfig,
};
use mpibench_core::Result;

use crate::config::MethodConfig;
use crate::format::num;

pub fn penalty_name(kind: PenaltyKind) -> &'static str {
    match kind {
        PenaltyKind::L1 => "l1",
        PenaltyKind::L2 => "l2",
        PenaltyKind::L1PlusL2 => "l1l2",
        PenaltyKind::Tv => "tv",
    }
}

impl MethodConfig {
    /// Method identifier used in result tables.
    pub fn id(&self) -> String {
        match self {
            MethodConfig::KaczL2 { .. } => "KACZ-l2".into(),
            MethodConfig::KaczL1L2 { .. } => "KACZ-l1l2".into(),
            MethodConfig::KaczL1 { .. } => "KACZ-l1".into(),
            MethodConfig::KaczTsvdL1 { .. } => "KACZ-TSVD-l1".into(),
            MethodConfig::Var {
                fidelity_p, penalty, ..
            } => format!("VAR-Dl{fidelity_p}-P{}", penalty_name(penalty.kind)),
            MethodConfig::Dip { .. } => "DIP-Dl1".into(),
        }
    }

    /// Swept parameters as `name=value` pairs joined by `;`.
    pub fn params(&self) -> String {
        let pairs: Vec<String> = match self {
            MethodConfig::KaczL2 { rho, .. } => vec![format!("rho={}", num(*rho))],
            MethodConfig::KaczL1L2 { rho, lambda, .. } => {
                vec![format!("rho={}", num(*rho)), format!("lambda={}", num(*lambda))]
            }
            MethodConfig::KaczL1 { lambda, .. } => vec![format!("lambda={}", num(*lambda))],
            MethodConfig::KaczTsvdL1 { lambda, k_keep, .. } => {
                vec![format!("k_keep={k_keep}"), format!("lambda={}", num(*lambda))]
            }
            MethodConfig::Var { penalty, .. } => {
                let mut v = vec![format!("lambda={}", num(penalty.lambda))];
                if penalty.kind == PenaltyKind::L1PlusL2 {
                    v.push(format!("rho={}", num(penalty.rho)));
                }
                v
            }
            MethodConfig::Dip { lr, .. } => vec![format!("lr={}", num(*lr))],
        };
        pairs.join(";")
    }

    /// Whether the result depends on the seed.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, MethodConfig::Dip { .. })
    }

    pub fn run(&self, sys: &ProcessedSystem, seed: u64) -> Result<SolverTrace> {
        match self {
            MethodConfig::KaczL2 { rho, sweeps } => kaczmarz_l2(
                sys,
                *rho,
                *sweeps,
                &CheckpointSchedule::kaczmarz().truncated(*sweeps),
                None,
            ),
            MethodConfig::KaczL1L2 { rho, lambda, sweeps } => kaczmarz_l1l2(
                sys,
                *rho,
                *lambda,
                *sweeps,
                &CheckpointSchedule::kaczmarz().truncated(*sweeps),
                None,
            ),
            MethodConfig::KaczL1 { lambda, sweeps } => kaczmarz_l1(
                sys,
                *lambda,
                *sweeps,
                &CheckpointSchedule::kaczmarz().truncated(*sweeps),
                None,
            ),
            MethodConfig::KaczTsvdL1 { lambda, k_keep, sweeps } => {
                let keep = (*k_keep).min(sys.rows());
                let reduced = select_rows_by_norm(sys, keep)?;
                let mut trace = kaczmarz_l1(
                    &reduced,
                    *lambda,
                    *sweeps,
                    &CheckpointSchedule::kaczmarz().truncated(*sweeps),
                    None,
                )?;
                if keep < *k_keep {
                    trace.warnings.push(format!(
                        "k_keep {k_keep} exceeds the {keep} available rows; all rows kept"
                    ));
                }
                trace.metadata["k_keep"] = keep.into();
                Ok(trace)
            }
            MethodConfig::Var {
                fidelity_p,
                penalty,
                iters,
                lr,
            } => {
                let cfg = VarConfig {
                    fidelity_p: *fidelity_p,
                    penalty: penalty.clone(),
                    iters: *iters,
                    lr: *lr,
                };
                var_solve(sys, &cfg, &CheckpointSchedule::standard_up_to(*iters), None, seed)
            }
            MethodConfig::Dip {
                lr,
                iterations,
                network,
            } => {
                let mut spec = network.clone();
                spec.seed = spec.seed.wrapping_add(seed);
                dip_reconstruct(sys, &DipConfig::new(*lr, *iterations, seed), &spec)
            }
        }
    }
}
