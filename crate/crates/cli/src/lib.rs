//! Benchmark harness: simulate data, preprocess, run reconstruction sweeps,
//! score them and render reports.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod format;
pub mod methods;
pub mod report;
pub mod sweep;

use std::path::Path;

use mpibench_core::preprocess::{build_system, load_processed, save_processed};
use mpibench_core::simdata::{
    load_dataset, rasterize_phantom, save_dataset, sigma_for_snr_db, synth_measurement, synth_operator,
    MeasurementParams,
};
use serde_json::json;

use config::{PreprocessCommand, ReconstructCommand, SimulateConfig};
pub use error::{CliError, CliResult};

/// Invalid arguments are configuration problems; anything else concerns the
/// data.
pub fn core_err(e: mpibench_core::Error) -> CliError {
    match e {
        mpibench_core::Error::InvalidArgument(m) => CliError::Config(m),
        other => CliError::data(other),
    }
}

/// Synthesizes a dataset and returns its manifest checksum. The operator uses
/// `seed`, the noise `seed + 1`.
pub fn simulate(cfg: &SimulateConfig, out: &Path) -> CliResult<String> {
    if cfg.snr_db.is_some() && cfg.noise_sigma.is_some() {
        return Err(CliError::config("give at most one of snr_db and noise_sigma"));
    }
    let op = synth_operator(&cfg.operator, &cfg.grid, cfg.coils, cfg.seed).map_err(core_err)?;
    let phantom = rasterize_phantom(&cfg.phantom, &cfg.grid, [0.0; 3], cfg.supersample)
        .map_err(core_err)?
        .volume;
    let clean = op.system_rows.matvec(&phantom.values).map_err(core_err)?;
    let sigma = match (cfg.snr_db, cfg.noise_sigma) {
        (Some(db), _) => sigma_for_snr_db(&clean, db),
        (_, Some(s)) => s,
        _ => 0.0,
    };
    let params = MeasurementParams {
        noise_sigma: vec![sigma; clean.len()],
        background_scale: cfg.background_scale,
        background_repeats: cfg.background_repeats,
        seed: cfg.seed.wrapping_add(1),
    };
    let mut ds = synth_measurement(&op, &phantom, &params).map_err(core_err)?;
    ds.provenance["phantom"] = json!(cfg.phantom);
    ds.provenance["supersample"] = json!(cfg.supersample);
    ds.provenance["coils"] = json!(cfg.coils);
    ds.provenance["snr_db"] = json!(cfg.snr_db);
    ds.provenance["noise_sigma"] = json!(sigma);
    save_dataset(&ds, out).map_err(core_err)
}

pub fn preprocess(cmd: &PreprocessCommand, out: &Path) -> CliResult<String> {
    let ds = load_dataset(&cmd.dataset).map_err(CliError::data)?;
    let sys = build_system(&ds, &cmd.preprocess).map_err(core_err)?;
    save_processed(&sys, out).map_err(core_err)
}

pub fn reconstruct(cmd: &ReconstructCommand, out: &Path) -> CliResult<String> {
    let sys = load_processed(&cmd.system).map_err(CliError::data)?;
    let trace = cmd.method.run(&sys, cmd.seed).map_err(core_err)?;
    trace.save(out).map_err(core_err)
}
