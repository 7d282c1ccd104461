//! Analytic phantoms and their voxelization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Volume;

/// Voxel grid. `origin` is the centre of the field of view in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub shape: [usize; 3],
    pub fov: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
}

impl Default for GridSpec {
    /// 19×19×19 voxels over 38 mm × 38 mm × 19 mm.
    fn default() -> Self {
        Self {
            shape: [19, 19, 19],
            fov: [38.0, 38.0, 19.0],
            origin: [0.0; 3],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if self.shape[a] == 0 || !(self.fov[a] > 0.0) {
                return Err(Error::invalid(format!(
                    "grid axis {a}: count {} and fov {} must be positive",
                    self.shape[a], self.fov[a]
                )));
            }
        }
        Ok(())
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.fov[a] / self.shape[a] as f64)
    }

    pub fn voxel_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Lower corner of the field of view.
    pub fn lower_corner(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] - 0.5 * self.fov[a])
    }

    pub fn voxel_center(&self, idx: [usize; 3]) -> [f64; 3] {
        let lo = self.lower_corner();
        let d = self.voxel_size();
        [0, 1, 2].map(|a| lo[a] + (idx[a] as f64 + 0.5) * d[a])
    }

    pub fn empty_volume(&self) -> Volume {
        Volume::zeros(self.shape, self.voxel_size())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cuboid {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomGeometry {
    /// Truncated cone: radius `tip_radius` at the tip growing with the
    /// opening angle `apex_angle_deg` (measured from the axis) over `height`.
    /// `center` is the midpoint of the axis segment.
    Cone {
        tip_radius: f64,
        apex_angle_deg: f64,
        height: f64,
        axis: Axis,
        center: [f64; 3],
    },
    /// Cylindrical tubes sharing one end point. One tube runs along +y; the
    /// others tilt towards +x (in-plane angles) or towards +z (out-of-plane
    /// angles).
    FiveTube {
        tube_radius: f64,
        length: f64,
        in_plane_angles_deg: Vec<f64>,
        out_of_plane_angles_deg: Vec<f64>,
        origin: [f64; 3],
    },
    CuboidUnion {
        boxes: Vec<Cuboid>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub geometry: PhantomGeometry,
    pub tracer_value: f64,
}

impl PhantomSpec {
    /// Cone with a 1 mm tip, 10° opening and 22 mm height, axis along y.
    pub fn shape_cone() -> Self {
        Self {
            geometry: PhantomGeometry::Cone {
                tip_radius: 1.0,
                apex_angle_deg: 10.0,
                height: 22.0,
                axis: Axis::Y,
                center: [0.0; 3],
            },
            tracer_value: 50.0,
        }
    }

    /// Five tubes from a common origin, tilted 20°/30° in the x–y plane and
    /// 10°/15° in the y–z plane.
    pub fn resolution_tubes() -> Self {
        Self {
            geometry: PhantomGeometry::FiveTube {
                tube_radius: 0.5,
                length: 28.0,
                in_plane_angles_deg: vec![20.0, 30.0],
                out_of_plane_angles_deg: vec![10.0, 15.0],
                origin: [0.0, -14.0, 0.0],
            },
            tracer_value: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tracer_value.is_finite() {
            return Err(Error::invalid("tracer_value must be finite"));
        }
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let angle = |v: f64| -> Result<()> {
            if v > 0.0 && v < 90.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("angle {v} must lie in (0, 90) degrees")))
            }
        };
        match &self.geometry {
            PhantomGeometry::Cone {
                tip_radius,
                apex_angle_deg,
                height,
                ..
            } => {
                positive("tip_radius", *tip_radius)?;
                positive("height", *height)?;
                angle(*apex_angle_deg)?;
            }
            PhantomGeometry::FiveTube {
                tube_radius,
                length,
                in_plane_angles_deg,
                out_of_plane_angles_deg,
                ..
            } => {
                positive("tube_radius", *tube_radius)?;
                positive("length", *length)?;
                for &a in in_plane_angles_deg.iter().chain(out_of_plane_angles_deg) {
                    angle(a)?;
                }
            }
            PhantomGeometry::CuboidUnion { boxes } => {
                if boxes.is_empty() {
                    return Err(Error::invalid("cuboid_union needs at least one box"));
                }
                for b in boxes {
                    for a in 0..3 {
                        positive("box extent", b.max[a] - b.min[a])?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Analytic volume of the support in mm³ (tubes and boxes assumed disjoint).
    pub fn analytic_volume(&self) -> f64 {
        match &self.geometry {
            PhantomGeometry::Cone {
                tip_radius,
                apex_angle_deg,
                height,
                ..
            } => {
                let r1 = *tip_radius;
                let r2 = r1 + height * apex_angle_deg.to_radians().tan();
                std::f64::consts::PI * height / 3.0 * (r1 * r1 + r1 * r2 + r2 * r2)
            }
            PhantomGeometry::FiveTube {
                tube_radius,
                length,
                in_plane_angles_deg,
                out_of_plane_angles_deg,
                ..
            } => {
                let n = 1 + in_plane_angles_deg.len() + out_of_plane_angles_deg.len();
                n as f64 * std::f64::consts::PI * tube_radius * tube_radius * length
            }
            PhantomGeometry::CuboidUnion { boxes } => boxes
                .iter()
                .map(|b| (0..3).map(|a| b.max[a] - b.min[a]).product::<f64>())
                .sum(),
        }
    }

    fn shape(&self) -> Shape {
        match &self.geometry {
            PhantomGeometry::Cone {
                tip_radius,
                apex_angle_deg,
                height,
                axis,
                center,
            } => Shape::Cone {
                tip: *tip_radius,
                slope: apex_angle_deg.to_radians().tan(),
                height: *height,
                axis: axis.index(),
                center: *center,
            },
            PhantomGeometry::FiveTube {
                tube_radius,
                length,
                in_plane_angles_deg,
                out_of_plane_angles_deg,
                origin,
            } => {
                let mut dirs = vec![[0.0, 1.0, 0.0]];
                for a in in_plane_angles_deg {
                    let t = a.to_radians();
                    dirs.push([t.sin(), t.cos(), 0.0]);
                }
                for a in out_of_plane_angles_deg {
                    let t = a.to_radians();
                    dirs.push([0.0, t.cos(), t.sin()]);
                }
                Shape::Tubes {
                    radius: *tube_radius,
                    length: *length,
                    origin: *origin,
                    dirs,
                }
            }
            PhantomGeometry::CuboidUnion { boxes } => Shape::Boxes(boxes.clone()),
        }
    }
}

/// Geometry with derived quantities precomputed for point queries.
enum Shape {
    Cone {
        tip: f64,
        slope: f64,
        height: f64,
        axis: usize,
        center: [f64; 3],
    },
    Tubes {
        radius: f64,
        length: f64,
        origin: [f64; 3],
        dirs: Vec<[f64; 3]>,
    },
    Boxes(Vec<Cuboid>),
}

impl Shape {
    #[inline]
    fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Cone {
                tip,
                slope,
                height,
                axis,
                center,
            } => {
                let l = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let along = l[*axis] + 0.5 * height;
                if !(0.0..=*height).contains(&along) {
                    return false;
                }
                let r = tip + along * slope;
                let radial2: f64 = (0..3).filter(|a| a != axis).map(|a| l[a] * l[a]).sum();
                radial2 <= r * r
            }
            Shape::Tubes {
                radius,
                length,
                origin,
                dirs,
            } => {
                let l = [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
                let l2 = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
                dirs.iter().any(|d| {
                    let t = l[0] * d[0] + l[1] * d[1] + l[2] * d[2];
                    (0.0..=*length).contains(&t) && l2 - t * t <= radius * radius
                })
            }
            Shape::Boxes(boxes) => boxes
                .iter()
                .any(|b| (0..3).all(|a| p[a] >= b.min[a] && p[a] < b.max[a])),
        }
    }

    /// Axis-aligned bounding box (lower, upper).
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Shape::Cone {
                tip,
                slope,
                height,
                axis,
                center,
            } => {
                let r = tip + height * slope;
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for a in 0..3 {
                    let half = if a == *axis { 0.5 * height } else { r };
                    lo[a] = center[a] - half;
                    hi[a] = center[a] + half;
                }
                (lo, hi)
            }
            Shape::Tubes {
                radius,
                length,
                origin,
                dirs,
            } => {
                let mut lo = *origin;
                let mut hi = *origin;
                for d in dirs {
                    for a in 0..3 {
                        let end = origin[a] + length * d[a];
                        lo[a] = lo[a].min(end);
                        hi[a] = hi[a].max(end);
                    }
                }
                (lo.map(|v| v - radius), hi.map(|v| v + radius))
            }
            Shape::Boxes(boxes) => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for b in boxes {
                    for a in 0..3 {
                        lo[a] = lo[a].min(b.min[a]);
                        hi[a] = hi[a].max(b.max[a]);
                    }
                }
                (lo, hi)
            }
        }
    }
}

pub const DEFAULT_SUPERSAMPLE: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub volume: Volume,
    /// Set when the shifted phantom does not intersect the field of view.
    pub outside_grid: bool,
}

/// Voxelizes the phantom translated by `shift`: each voxel receives
/// `tracer_value` times the fraction of its `supersample³` midpoint samples
/// that fall inside the phantom.
pub fn rasterize_phantom(
    spec: &PhantomSpec,
    grid: &GridSpec,
    shift: [f64; 3],
    supersample: usize,
) -> Result<Rasterized> {
    if supersample == 0 {
        return Err(Error::invalid("supersample must be at least 1"));
    }
    spec.validate()?;
    grid.validate()?;
    let shape = spec.shape();
    let (blo, bhi) = shape.bounds();
    let blo = [0, 1, 2].map(|a| blo[a] + shift[a]);
    let bhi = [0, 1, 2].map(|a| bhi[a] + shift[a]);

    let d = grid.voxel_size();
    let lo = grid.lower_corner();
    let s = supersample;
    let mut volume = grid.empty_volume();

    let fov_hi = [0, 1, 2].map(|a| lo[a] + grid.fov[a]);
    let outside_grid = (0..3).any(|a| bhi[a] < lo[a] || blo[a] > fov_hi[a]);
    if outside_grid || spec.tracer_value == 0.0 {
        return Ok(Rasterized { volume, outside_grid });
    }

    // sample coordinates per axis, already moved into the phantom frame
    let coords: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            (0..grid.shape[a] * s)
                .map(|k| lo[a] + ((k / s) as f64 + ((k % s) as f64 + 0.5) / s as f64) * d[a] - shift[a])
                .collect()
        })
        .collect();
    let voxel_range = |a: usize| -> (usize, usize) {
        let first = ((blo[a] - lo[a]) / d[a]).floor().max(0.0) as usize;
        let last = (((bhi[a] - lo[a]) / d[a]).floor() as isize).min(grid.shape[a] as isize - 1);
        (first.min(grid.shape[a]), (last + 1).max(0) as usize)
    };
    let (x0, x1) = voxel_range(0);
    let (y0, y1) = voxel_range(1);
    let (z0, z1) = voxel_range(2);
    let total = (s * s * s) as f64;

    for iz in z0..z1 {
        for iy in y0..y1 {
            for ix in x0..x1 {
                let mut count = 0usize;
                for kz in 0..s {
                    let pz = coords[2][iz * s + kz];
                    for ky in 0..s {
                        let py = coords[1][iy * s + ky];
                        for kx in 0..s {
                            let px = coords[0][ix * s + kx];
                            if shape.contains([px, py, pz]) {
                                count += 1;
                            }
                        }
                    }
                }
                if count > 0 {
                    let idx = volume.index(ix, iy, iz);
                    volume.values[idx] = spec.tracer_value * (count as f64 / total);
                }
            }
        }
    }
    Ok(Rasterized { volume, outside_grid })
}
