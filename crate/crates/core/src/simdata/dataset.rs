//! Raw datasets: system rows plus phantom and empty-scanner measurements.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde_json::json;

use super::operator::{OperatorModel, Part, RowLabel, SystemOperator};
use super::phantom::GridSpec;
use crate::container::{Container, ContainerWriter};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Volume};

pub const DATASET_KIND: &str = "raw_dataset";

/// Highest harmonic used by the smooth background pattern.
pub const BACKGROUND_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub system_rows: Matrix,
    pub row_labels: Vec<RowLabel>,
    pub measurement: Vec<f64>,
    /// Mean of `background_samples`, the `v₀` that gets subtracted.
    pub background: Vec<f64>,
    pub background_samples: Matrix,
    pub noise_sigma: Vec<f64>,
    /// `‖S_i‖₂ / σ_i`, infinite for noiseless rows.
    pub snr_per_row: Vec<f64>,
    pub grid: GridSpec,
    pub seed: u64,
    /// Free-form provenance (phantom, operator model, generator settings).
    pub provenance: serde_json::Value,
}

impl RawDataset {
    pub fn rows(&self) -> usize {
        self.system_rows.rows()
    }

    /// `v − v₀`.
    pub fn corrected_measurement(&self) -> Vec<f64> {
        self.measurement
            .iter()
            .zip(&self.background)
            .map(|(v, b)| v - b)
            .collect()
    }

    pub fn frequency_range(&self) -> (u32, u32) {
        let lo = self.row_labels.iter().map(|l| l.frequency).min().unwrap_or(0);
        let hi = self.row_labels.iter().map(|l| l.frequency).max().unwrap_or(0);
        (lo, hi)
    }

    pub fn coil_count(&self) -> usize {
        self.row_labels.iter().map(|l| l.coil as usize + 1).max().unwrap_or(0)
    }

    pub fn operator_model(&self) -> Option<OperatorModel> {
        self.provenance
            .get("operator")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementParams {
    pub noise_sigma: Vec<f64>,
    pub background_scale: f64,
    /// Number of empty-scanner repetitions `B`.
    pub background_repeats: usize,
    pub seed: u64,
}

/// Smooth, seeded function of the row index with unit RMS-order amplitude.
pub fn background_pattern(rows: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let coeffs: Vec<(f64, f64)> = (0..=BACKGROUND_ORDER)
        .map(|_| (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    (0..rows)
        .map(|i| {
            let t = i as f64 / rows.max(1) as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let w = 2.0 * std::f64::consts::PI * k as f64 * t;
                    a * w.cos() + b * w.sin()
                })
                .sum()
        })
        .collect()
}

/// Uniform per-row sigma giving `snr_db = 20·log10(rms(clean) / σ)`.
pub fn sigma_for_snr_db(clean: &[f64], snr_db: f64) -> f64 {
    let rms = (clean.iter().map(|v| v * v).sum::<f64>() / clean.len().max(1) as f64).sqrt();
    rms / 10f64.powf(snr_db / 20.0)
}

fn add_noise(rng: &mut ChaCha8Rng, values: &mut [f64], sigma: &[f64]) -> Result<()> {
    for (v, &s) in values.iter_mut().zip(sigma) {
        if s > 0.0 {
            let n = Normal::new(0.0, s).map_err(|e| Error::invalid(e.to_string()))?;
            *v += n.sample(rng);
        }
    }
    Ok(())
}

/// Measures `phantom` through the operator:
/// `v = S·c + scale·pattern + η`, plus `B` empty scans `scale·pattern + η`.
pub fn synth_measurement(op: &SystemOperator, phantom: &Volume, params: &MeasurementParams) -> Result<RawDataset> {
    let s = &op.system_rows;
    let m = s.rows();
    if phantom.dims() != op.grid.shape {
        return Err(Error::invalid(format!(
            "phantom dims {:?} do not match grid {:?}",
            phantom.dims(),
            op.grid.shape
        )));
    }
    if params.noise_sigma.len() != m {
        return Err(Error::DimensionMismatch {
            op: "synth_measurement",
            left: (m, 1),
            right: (params.noise_sigma.len(), 1),
        });
    }
    if params.noise_sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("noise sigmas must be nonnegative"));
    }
    if params.background_repeats < 2 {
        return Err(Error::invalid("at least 2 background repeats are required"));
    }
    let pattern: Vec<f64> = background_pattern(m, params.seed)
        .into_iter()
        .map(|p| p * params.background_scale)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(2);
    let mut measurement = s.matvec(&phantom.values)?;
    for (v, p) in measurement.iter_mut().zip(&pattern) {
        *v += p;
    }
    add_noise(&mut rng, &mut measurement, &params.noise_sigma)?;

    let b = params.background_repeats;
    let mut samples = Matrix::zeros(b, m);
    for r in 0..b {
        let row = samples.row_mut(r);
        row.copy_from_slice(&pattern);
        add_noise(&mut rng, row, &params.noise_sigma)?;
    }
    let mut background = vec![0.0; m];
    for r in 0..b {
        for (acc, v) in background.iter_mut().zip(samples.row(r)) {
            *acc += v;
        }
    }
    for v in &mut background {
        *v /= b as f64;
    }

    let snr_per_row = s
        .row_norms()
        .into_iter()
        .zip(&params.noise_sigma)
        .map(|(n, &sig)| if sig > 0.0 { n / sig } else { f64::INFINITY })
        .collect();

    Ok(RawDataset {
        system_rows: s.clone(),
        row_labels: op.row_labels.clone(),
        measurement,
        background,
        background_samples: samples,
        noise_sigma: params.noise_sigma.clone(),
        snr_per_row,
        grid: op.grid.clone(),
        seed: params.seed,
        provenance: json!({
            "operator": op.model,
            "operator_seed": op.seed,
            "background_scale": params.background_scale,
        }),
    })
}

fn labels_to_array(labels: &[RowLabel]) -> Vec<f64> {
    labels
        .iter()
        .flat_map(|l| {
            let part = match l.part {
                Part::Re => 0.0,
                Part::Im => 1.0,
            };
            [l.coil as f64, l.frequency as f64, part]
        })
        .collect()
}

fn labels_from_array(values: &[f64]) -> Result<Vec<RowLabel>> {
    values
        .chunks_exact(3)
        .map(|c| {
            let part = match c[2] {
                0.0 => Part::Re,
                1.0 => Part::Im,
                other => return Err(Error::invalid(format!("bad row part code {other}"))),
            };
            Ok(RowLabel {
                coil: c[0] as u32,
                frequency: c[1] as u32,
                part,
            })
        })
        .collect()
}

pub(crate) fn expect_shape(name: &str, shape: &[usize], expected: &[usize]) -> Result<()> {
    if shape != expected {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: expected.iter().product(),
            found: shape.iter().product(),
        });
    }
    Ok(())
}

/// Writes the dataset container; returns the manifest SHA-256.
pub fn save_dataset(ds: &RawDataset, dir: impl AsRef<Path>) -> Result<String> {
    let (m, n) = ds.system_rows.shape();
    let b = ds.background_samples.rows();
    ContainerWriter::new(DATASET_KIND)
        .array("system_rows", &[m, n], ds.system_rows.as_slice())
        .array("row_labels", &[m, 3], &labels_to_array(&ds.row_labels))
        .array("measurement", &[m], &ds.measurement)
        .array("background", &[m], &ds.background)
        .array("background_samples", &[b, m], ds.background_samples.as_slice())
        .array("noise_sigma", &[m], &ds.noise_sigma)
        .array("snr_per_row", &[m], &ds.snr_per_row)
        .metadata(json!({
            "grid": ds.grid,
            "seed": ds.seed,
            "provenance": ds.provenance,
        }))
        .write(dir)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<RawDataset> {
    let c = Container::open(dir)?;
    c.expect_kind(DATASET_KIND)?;
    let grid: GridSpec = c.metadata_field("grid")?;
    let seed: u64 = c.metadata_field("seed")?;
    let provenance = c.metadata().get("provenance").cloned().unwrap_or_default();

    let (shape, rows) = c.read_array("system_rows")?;
    if shape.len() != 2 || shape[1] != grid.voxel_count() {
        return Err(Error::ShapeMismatch {
            name: "system_rows".into(),
            expected: grid.voxel_count(),
            found: shape.get(1).copied().unwrap_or(0),
        });
    }
    let m = shape[0];
    let system_rows = Matrix::from_vec(m, shape[1], rows)?;
    let (shape, labels) = c.read_array("row_labels")?;
    expect_shape("row_labels", &shape, &[m, 3])?;
    let vector = |name: &str| -> Result<Vec<f64>> {
        let (shape, v) = c.read_array(name)?;
        expect_shape(name, &shape, &[m])?;
        Ok(v)
    };
    let (shape, samples) = c.read_array("background_samples")?;
    if shape.len() != 2 || shape[1] != m {
        return Err(Error::ShapeMismatch {
            name: "background_samples".into(),
            expected: m,
            found: shape.get(1).copied().unwrap_or(0),
        });
    }
    Ok(RawDataset {
        system_rows,
        row_labels: labels_from_array(&labels)?,
        measurement: vector("measurement")?,
        background: vector("background")?,
        background_samples: Matrix::from_vec(shape[0], m, samples)?,
        noise_sigma: vector("noise_sigma")?,
        snr_per_row: vector("snr_per_row")?,
        grid,
        seed,
        provenance,
    })
}

/// Seeded random draw helper shared by fixtures: uniform volume in `[0, hi)`.
pub fn random_volume(grid: &GridSpec, hi: f64, seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = grid.empty_volume();
    for x in &mut v.values {
        *x = rng.random::<f64>() * hi;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{synth_operator, OperatorModel};

    fn small() -> SystemOperator {
        let grid = GridSpec {
            shape: [3, 3, 2],
            fov: [6.0, 6.0, 2.0],
            origin: [0.0; 3],
        };
        let model = OperatorModel::Spectral {
            beta: 1.0,
            scale: 1.0,
            frequencies: 6,
        };
        synth_operator(&model, &grid, 1, 3).unwrap()
    }

    fn params(m: usize, sigma: f64, scale: f64) -> MeasurementParams {
        MeasurementParams {
            noise_sigma: vec![sigma; m],
            background_scale: scale,
            background_repeats: 4,
            seed: 11,
        }
    }

    #[test]
    fn zero_everything_gives_zero_measurement() {
        let op = small();
        let ds = synth_measurement(&op, &op.grid.empty_volume(), &params(12, 0.0, 0.0)).unwrap();
        assert!(ds.measurement.iter().all(|v| *v == 0.0));
        assert!(ds.snr_per_row.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn noiseless_measurement_is_consistent() {
        let op = small();
        let c = random_volume(&op.grid, 10.0, 1);
        let ds = synth_measurement(&op, &c, &params(12, 0.0, 3.0)).unwrap();
        let clean = op.system_rows.matvec(&c.values).unwrap();
        for (v, e) in ds.corrected_measurement().iter().zip(&clean) {
            assert!((v - e).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn noise_has_requested_std() {
        let grid = GridSpec {
            shape: [2, 1, 1],
            fov: [2.0, 1.0, 1.0],
            origin: [0.0; 3],
        };
        let model = OperatorModel::Spectral {
            beta: 1.0,
            scale: 1.0,
            frequencies: 5000,
        };
        let op = synth_operator(&model, &grid, 1, 0).unwrap();
        let m = op.system_rows.rows();
        assert_eq!(m, 10_000);
        let c = grid.empty_volume();
        let ds = synth_measurement(&op, &c, &params(m, 0.01, 0.0)).unwrap();
        let mean = ds.measurement.iter().sum::<f64>() / m as f64;
        let var = ds.measurement.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((var.sqrt() / 0.01 - 1.0).abs() < 0.05, "{}", var.sqrt());
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let op = small();
        let c = random_volume(&op.grid, 5.0, 2);
        let ds = synth_measurement(&op, &c, &params(12, 0.05, 1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.measurement.iter().zip(&ds.measurement) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let op = small();
        let c = op.grid.empty_volume();
        assert!(synth_measurement(&op, &c, &params(11, 0.0, 0.0)).is_err());
        let mut p = params(12, 0.0, 0.0);
        p.background_repeats = 1;
        assert!(synth_measurement(&op, &c, &p).is_err());
        let wrong = Volume::zeros([2, 2, 2], [1.0; 3]);
        assert!(synth_measurement(&op, &wrong, &params(12, 0.0, 0.0)).is_err());
    }

    #[test]
    fn snr_db_helper() {
        let clean = vec![3.0, -4.0];
        let s = sigma_for_snr_db(&clean, 20.0);
        assert!((s - (12.5f64).sqrt() / 10.0).abs() < 1e-15);
    }
}
