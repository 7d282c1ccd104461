use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D scalar grid stored x-fastest: `index = x + nx * (y + ny * z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub values: Vec<f64>,
    /// Voxel edge lengths in millimetres.
    pub voxel_size: [f64; 3],
}

impl Volume {
    pub fn zeros(dims: [usize; 3], voxel_size: [f64; 3]) -> Self {
        Self {
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
            voxel_size,
        }
    }

    pub fn from_values(dims: [usize; 3], voxel_size: [f64; 3], values: Vec<f64>) -> Result<Self> {
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::invalid(format!(
                "volume of dims {dims:?} needs {} values, got {}",
                dims[0] * dims[1] * dims[2],
                values.len()
            )));
        }
        Ok(Self {
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            values,
            voxel_size,
        })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.voxel_size.iter().product()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn same_shape(&self, other: &Volume) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_same_shape(&self, other: &Volume, op: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                op,
                left: (self.len(), self.nx),
                right: (other.len(), other.nx),
            })
        }
    }
}
