//! From raw frequency-domain data to the processed system `A c = y`.
//!
//! 1. keep frequencies inside the band whose SNR reaches `tau`,
//!    Re and Im of one frequency together;
//! 2. subtract the mean background `v₀`;
//! 3. optionally whiten rows by the inverse background standard deviation;
//! 4. project onto the leading `K` left singular vectors of the result.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::{Container, ContainerWriter};
use crate::error::{Error, Result};
use crate::linalg::{rsvd, Matrix, SvdFactors, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};
use crate::simdata::{GridSpec, Part, RawDataset, RowLabel};

pub const PROCESSED_KIND: &str = "processed_system";

/// Added to background variances before inversion.
pub const VARIANCE_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub tau: f64,
    /// Inclusive frequency-index band per coil. A single entry applies to
    /// every coil; an empty list keeps all frequencies.
    #[serde(default)]
    pub bandpass: Vec<[u32; 2]>,
    #[serde(default = "default_true")]
    pub whitening: bool,
    pub rank: usize,
    #[serde(default)]
    pub rsvd_seed: u64,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    #[serde(default = "default_power_iters")]
    pub power_iters: usize,
}

fn default_true() -> bool {
    true
}
fn default_oversample() -> usize {
    DEFAULT_OVERSAMPLE
}
fn default_power_iters() -> usize {
    DEFAULT_POWER_ITERS
}

impl PreprocessConfig {
    pub fn new(tau: f64, rank: usize) -> Self {
        Self {
            tau,
            bandpass: Vec::new(),
            whitening: true,
            rank,
            rsvd_seed: 0,
            oversample: DEFAULT_OVERSAMPLE,
            power_iters: DEFAULT_POWER_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(Error::invalid(format!("tau must be ≥ 0, got {}", self.tau)));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        if let Some(b) = self.bandpass.iter().find(|b| b[0] >= b[1]) {
            return Err(Error::invalid(format!("bandpass {b:?} needs min < max")));
        }
        Ok(())
    }

    fn band_for(&self, coil: u32) -> Option<[u32; 2]> {
        match self.bandpass.len() {
            0 => None,
            1 => Some(self.bandpass[0]),
            _ => self.bandpass.get(coil as usize).copied(),
        }
    }

    fn band_description(&self) -> String {
        if self.bandpass.is_empty() {
            "all".to_string()
        } else {
            format!("{:?}", self.bandpass)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedRows {
    pub matrix: Matrix,
    /// `v − v₀` on the kept rows.
    pub data: Vec<f64>,
    pub labels: Vec<RowLabel>,
    /// Indices into the raw rows, ascending.
    pub indices: Vec<usize>,
}

/// Bandpass and SNR selection with Re/Im pairing by the larger of the pair's
/// SNRs.
pub fn select_rows(ds: &RawDataset, cfg: &PreprocessConfig) -> Result<SelectedRows> {
    cfg.validate()?;
    if cfg.bandpass.len() > 1 && cfg.bandpass.len() != ds.coil_count() {
        return Err(Error::invalid(format!(
            "{} bandpass entries for {} coils",
            cfg.bandpass.len(),
            ds.coil_count()
        )));
    }
    let (fmin, fmax) = ds.frequency_range();
    for b in &cfg.bandpass {
        if b[1] < fmin || b[0] > fmax {
            return Err(Error::invalid(format!(
                "bandpass {b:?} outside dataset frequencies {fmin}..={fmax}"
            )));
        }
    }

    let mut pair_snr: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (label, &snr) in ds.row_labels.iter().zip(&ds.snr_per_row) {
        let e = pair_snr
            .entry((label.coil, label.frequency))
            .or_insert(f64::NEG_INFINITY);
        *e = e.max(snr);
    }
    let keep = |label: &RowLabel| {
        let in_band = cfg
            .band_for(label.coil)
            .is_none_or(|[lo, hi]| label.frequency >= lo && label.frequency <= hi);
        in_band && pair_snr[&(label.coil, label.frequency)] >= cfg.tau
    };
    let indices: Vec<usize> = (0..ds.rows()).filter(|&i| keep(&ds.row_labels[i])).collect();
    if indices.is_empty() {
        return Err(Error::NoRowsSurvived {
            tau: cfg.tau,
            band: cfg.band_description(),
        });
    }
    let corrected = ds.corrected_measurement();
    Ok(SelectedRows {
        matrix: ds.system_rows.select_rows(&indices),
        data: indices.iter().map(|&i| corrected[i]).collect(),
        labels: indices.iter().map(|&i| ds.row_labels[i]).collect(),
        indices,
    })
}

/// Diagonal of `W`: `1/√(var_i + floor)` from the unbiased per-row variance
/// of the background samples (one sample per matrix row).
pub fn whitening_matrix(background_samples: &Matrix) -> Result<Vec<f64>> {
    let (b, m) = background_samples.shape();
    if b < 2 {
        return Err(Error::invalid(format!(
            "whitening needs at least 2 background samples, got {b}"
        )));
    }
    let mut mean = vec![0.0; m];
    for r in 0..b {
        for (acc, v) in mean.iter_mut().zip(background_samples.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= b as f64);
    let mut var = vec![0.0; m];
    for r in 0..b {
        for ((acc, v), mu) in var.iter_mut().zip(background_samples.row(r)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    Ok(var
        .into_iter()
        .map(|s| 1.0 / (s / (b - 1) as f64 + VARIANCE_FLOOR).sqrt())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSystem {
    pub a: Matrix,
    pub y: Vec<f64>,
    pub retained_rows: Vec<RowLabel>,
    pub whitening_weights: Option<Vec<f64>>,
    pub svd: SvdFactors,
    pub config: PreprocessConfig,
    pub grid: GridSpec,
    /// Rank actually used; below `config.rank` when clamped.
    pub effective_rank: usize,
}

impl ProcessedSystem {
    /// Builds a system directly from `(A, y)`, for fixtures and externally
    /// prepared data. The projection factors are left empty.
    pub fn from_parts(a: Matrix, y: Vec<f64>, grid: GridSpec) -> Result<Self> {
        if a.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                op: "ProcessedSystem::from_parts",
                left: a.shape(),
                right: (y.len(), 1),
            });
        }
        if a.cols() != grid.voxel_count() {
            return Err(Error::invalid(format!(
                "matrix has {} columns but grid has {} voxels",
                a.cols(),
                grid.voxel_count()
            )));
        }
        let k = a.rows();
        Ok(Self {
            svd: SvdFactors {
                u: Matrix::zeros(0, 0),
                s: Vec::new(),
                v: Matrix::zeros(0, 0),
            },
            config: PreprocessConfig {
                whitening: false,
                ..PreprocessConfig::new(0.0, k.max(1))
            },
            retained_rows: Vec::new(),
            whitening_weights: None,
            effective_rank: k,
            a,
            y,
            grid,
        })
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    pub fn rank_clamped(&self) -> bool {
        self.effective_rank < self.config.rank
    }

    /// Multiplies `A` and `y` by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.a = self.a.scaled(alpha);
        out.y.iter_mut().for_each(|v| *v *= alpha);
        out
    }
}

/// `A = Ũ_Kᵀ W S_sel`, `y = Ũ_Kᵀ W (v − v₀)` with `K` clamped to the
/// surviving row count and the voxel count.
pub fn build_system(ds: &RawDataset, cfg: &PreprocessConfig) -> Result<ProcessedSystem> {
    let sel = select_rows(ds, cfg)?;
    let mut s = sel.matrix;
    let mut d = sel.data;
    let weights = if cfg.whitening {
        let all = whitening_matrix(&ds.background_samples)?;
        let w: Vec<f64> = sel.indices.iter().map(|&i| all[i]).collect();
        s.scale_rows(&w);
        d.iter_mut().zip(&w).for_each(|(v, wi)| *v *= wi);
        Some(w)
    } else {
        None
    };
    let k = cfg.rank.min(s.rows()).min(s.cols());
    let svd = rsvd(&s, k, cfg.oversample, cfg.power_iters, cfg.rsvd_seed)?;
    let a = svd.u.t_matmul(&s)?;
    let y = svd.u.matvec_t(&d)?;
    Ok(ProcessedSystem {
        a,
        y,
        retained_rows: sel.labels,
        whitening_weights: weights,
        svd,
        config: cfg.clone(),
        grid: ds.grid.clone(),
        effective_rank: k,
    })
}

fn labels_array(labels: &[RowLabel]) -> Vec<f64> {
    labels
        .iter()
        .flat_map(|l| [l.coil as f64, l.frequency as f64, (l.part == Part::Im) as u8 as f64])
        .collect()
}

pub fn save_processed(sys: &ProcessedSystem, dir: impl AsRef<Path>) -> Result<String> {
    let (k, n) = sys.a.shape();
    let mut w = ContainerWriter::new(PROCESSED_KIND)
        .array("a", &[k, n], sys.a.as_slice())
        .array("y", &[k], &sys.y)
        .array(
            "retained_rows",
            &[sys.retained_rows.len(), 3],
            &labels_array(&sys.retained_rows),
        )
        .array("svd_u", &[sys.svd.u.rows(), sys.svd.u.cols()], sys.svd.u.as_slice())
        .array("svd_s", &[sys.svd.s.len()], &sys.svd.s)
        .array("svd_v", &[sys.svd.v.rows(), sys.svd.v.cols()], sys.svd.v.as_slice());
    if let Some(weights) = &sys.whitening_weights {
        w = w.array("whitening_weights", &[weights.len()], weights);
    }
    w.metadata(json!({
        "config": sys.config,
        "grid": sys.grid,
        "effective_rank": sys.effective_rank,
    }))
    .write(dir)
}

pub fn load_processed(dir: impl AsRef<Path>) -> Result<ProcessedSystem> {
    let c = Container::open(dir)?;
    c.expect_kind(PROCESSED_KIND)?;
    let matrix = |name: &str| -> Result<Matrix> {
        let (shape, v) = c.read_array(name)?;
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: 2,
                found: shape.len(),
            });
        }
        Matrix::from_vec(shape[0], shape[1], v)
    };
    let a = matrix("a")?;
    let (_, y) = c.read_array("y")?;
    let (_, labels) = c.read_array("retained_rows")?;
    let retained_rows = labels
        .chunks_exact(3)
        .map(|l| RowLabel {
            coil: l[0] as u32,
            frequency: l[1] as u32,
            part: if l[2] == 0.0 { Part::Re } else { Part::Im },
        })
        .collect();
    let whitening_weights = if c.has_array("whitening_weights") {
        Some(c.read_array("whitening_weights")?.1)
    } else {
        None
    };
    let sys = ProcessedSystem {
        y,
        retained_rows,
        whitening_weights,
        svd: SvdFactors {
            u: matrix("svd_u")?,
            s: c.read_array("svd_s")?.1,
            v: matrix("svd_v")?,
        },
        config: c.metadata_field("config")?,
        grid: c.metadata_field("grid")?,
        effective_rank: c.metadata_field("effective_rank")?,
        a,
    };
    if sys.a.rows() != sys.y.len() || sys.a.cols() != sys.grid.voxel_count() {
        return Err(Error::ShapeMismatch {
            name: "a".into(),
            expected: sys.y.len() * sys.grid.voxel_count(),
            found: sys.a.rows() * sys.a.cols(),
        });
    }
    Ok(sys)
}
