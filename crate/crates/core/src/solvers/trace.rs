use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::container::{Container, ContainerWriter};
use crate::error::{Error, Result};
use crate::linalg::Volume;
use crate::simdata::GridSpec;

pub const TRACE_KIND: &str = "solver_trace";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub volume: Volume,
    /// `(1/p)‖Ac − y‖_p^p`.
    pub fidelity: f64,
    pub objective: f64,
    /// Seconds since the run started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub method: String,
    pub checkpoints: Vec<Checkpoint>,
    /// Configuration echo.
    pub metadata: serde_json::Value,
    pub warnings: Vec<String>,
    pub diverged: bool,
}

impl SolverTrace {
    pub fn new(method: impl Into<String>, metadata: serde_json::Value) -> Self {
        Self {
            method: method.into(),
            checkpoints: Vec::new(),
            metadata,
            warnings: Vec::new(),
            diverged: false,
        }
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.checkpoints.iter().map(|c| c.iteration).collect()
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// Same trace with every wall time zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        t.checkpoints.iter_mut().for_each(|c| c.wall_time = 0.0);
        t
    }

    /// `iteration,fidelity,objective` lines with a header.
    pub fn csv_summary(&self) -> String {
        let mut out = String::from("iteration,fidelity,objective\n");
        for c in &self.checkpoints {
            let _ = writeln!(out, "{},{:e},{:e}", c.iteration, c.fidelity, c.objective);
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<String> {
        let n = self.checkpoints.len();
        let (dims, voxel) = match self.checkpoints.first() {
            Some(c) => (c.volume.dims(), c.volume.voxel_size),
            None => ([0; 3], [1.0; 3]),
        };
        let len = dims.iter().product::<usize>();
        let mut volumes = Vec::with_capacity(n * len);
        for c in &self.checkpoints {
            volumes.extend_from_slice(&c.volume.values);
        }
        let col = |f: fn(&Checkpoint) -> f64| -> Vec<f64> { self.checkpoints.iter().map(f).collect() };
        ContainerWriter::new(TRACE_KIND)
            .array("volumes", &[n, len], &volumes)
            .array("iterations", &[n], &col(|c| c.iteration as f64))
            .array("fidelity", &[n], &col(|c| c.fidelity))
            .array("objective", &[n], &col(|c| c.objective))
            .array("wall_time", &[n], &col(|c| c.wall_time))
            .metadata(json!({
                "method": self.method,
                "dims": dims,
                "voxel_size": voxel,
                "config": self.metadata,
                "warnings": self.warnings,
                "diverged": self.diverged,
            }))
            .write(dir)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let c = Container::open(dir)?;
        c.expect_kind(TRACE_KIND)?;
        let dims: [usize; 3] = c.metadata_field("dims")?;
        let voxel: [f64; 3] = c.metadata_field("voxel_size")?;
        let (shape, volumes) = c.read_array("volumes")?;
        let len = dims.iter().product::<usize>();
        if shape.len() != 2 || shape[1] != len {
            return Err(Error::ShapeMismatch {
                name: "volumes".into(),
                expected: len,
                found: shape.get(1).copied().unwrap_or(0),
            });
        }
        let iterations = c.read_array("iterations")?.1;
        let fidelity = c.read_array("fidelity")?.1;
        let objective = c.read_array("objective")?.1;
        let wall = c.read_array("wall_time")?.1;
        let mut checkpoints = Vec::with_capacity(shape[0]);
        for i in 0..shape[0] {
            checkpoints.push(Checkpoint {
                iteration: iterations[i] as usize,
                volume: Volume::from_values(dims, voxel, volumes[i * len..(i + 1) * len].to_vec())?,
                fidelity: fidelity[i],
                objective: objective[i],
                wall_time: wall[i],
            });
        }
        Ok(Self {
            method: c.metadata_field("method")?,
            checkpoints,
            metadata: c.metadata().get("config").cloned().unwrap_or_default(),
            warnings: c.metadata_field("warnings")?,
            diverged: c.metadata_field("diverged")?,
        })
    }
}

/// Wraps a coefficient vector as a volume on `grid`.
pub(crate) fn to_volume(grid: &GridSpec, values: &[f64]) -> Volume {
    Volume {
        nx: grid.shape[0],
        ny: grid.shape[1],
        nz: grid.shape[2],
        values: values.to_vec(),
        voxel_size: grid.voxel_size(),
    }
}
