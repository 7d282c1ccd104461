use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Volume;

/// Channel-major 3D feature map; each channel is stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub channels: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub values: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Self {
            channels,
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            values: vec![0.0; channels * dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_values(channels: usize, dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        let expected = channels * dims.iter().product::<usize>();
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "tensor ({channels}, {dims:?}) needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            channels,
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            values,
        })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn spatial_len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let s = self.spatial_len();
        &self.values[c * s..(c + 1) * s]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let s = self.spatial_len();
        &mut self.values[c * s..(c + 1) * s]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Single-channel tensor as a volume.
    pub fn into_volume(self, voxel_size: [f64; 3]) -> Result<Volume> {
        if self.channels != 1 {
            return Err(Error::invalid(format!(
                "expected a single-channel tensor, got {} channels",
                self.channels
            )));
        }
        Volume::from_values(self.dims(), voxel_size, self.values)
    }
}
