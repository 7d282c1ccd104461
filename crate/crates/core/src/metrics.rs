//! PSNR, windowed 3D SSIM, and their maxima over a grid of phantom shifts.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Volume;
use crate::simdata::{rasterize_phantom, GridSpec, PhantomSpec, DEFAULT_SUPERSAMPLE};

pub const DEFAULT_DATA_RANGE: f64 = 100.0;
pub const SSIM_WINDOW: usize = 7;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// `10 log10(L² / MSE)`; identical volumes give `+∞`.
pub fn psnr(x: &Volume, reference: &Volume, data_range: f64) -> Result<f64> {
    x.check_same_shape(reference, "psnr")?;
    check_range(data_range)?;
    Ok(psnr_unchecked(&x.values, &reference.values, data_range))
}

fn psnr_unchecked(x: &[f64], r: &[f64], data_range: f64) -> f64 {
    let sse: f64 = x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
    if sse == 0.0 {
        return f64::INFINITY;
    }
    let mse = sse / x.len() as f64;
    10.0 * (data_range * data_range / mse).log10()
}

fn check_range(data_range: f64) -> Result<()> {
    if data_range > 0.0 && data_range.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("data range must be positive, got {data_range}")))
    }
}

/// Sliding sums of width `w` along each axis in turn. Output has shape
/// `dims − w + 1`.
fn box_sum(values: &[f64], dims: [usize; 3], w: usize) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let ox = nx + 1 - w;
    let mut a = vec![0.0; ox * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            let row = &values[(y + ny * z) * nx..][..nx];
            let out = &mut a[(y + ny * z) * ox..][..ox];
            let mut s: f64 = row[..w].iter().sum();
            out[0] = s;
            for i in 1..ox {
                s += row[i + w - 1] - row[i - 1];
                out[i] = s;
            }
        }
    }
    let oy = ny + 1 - w;
    let mut b = vec![0.0; ox * oy * nz];
    for z in 0..nz {
        for x in 0..ox {
            let at = |y: usize| a[x + ox * (y + ny * z)];
            let mut s: f64 = (0..w).map(at).sum();
            b[x + ox * oy * z] = s;
            for j in 1..oy {
                s += at(j + w - 1) - at(j - 1);
                b[x + ox * (j + oy * z)] = s;
            }
        }
    }
    let oz = nz + 1 - w;
    let plane = ox * oy;
    let mut c = vec![0.0; plane * oz];
    for p in 0..plane {
        let at = |z: usize| b[p + plane * z];
        let mut s: f64 = (0..w).map(at).sum();
        c[p] = s;
        for k in 1..oz {
            s += at(k + w - 1) - at(k - 1);
            c[p + plane * k] = s;
        }
    }
    c
}

/// Window means of `x` and `x²`, shared across every reference `x` is
/// compared against.
struct WindowStats {
    dims: [usize; 3],
    mean: Vec<f64>,
    mean_sq: Vec<f64>,
}

impl WindowStats {
    fn new(v: &Volume) -> Result<Self> {
        let dims = v.dims();
        if dims.iter().any(|&n| n < SSIM_WINDOW) {
            return Err(Error::invalid(format!(
                "ssim needs every dimension ≥ {SSIM_WINDOW}, got {dims:?}"
            )));
        }
        let inv = 1.0 / (SSIM_WINDOW * SSIM_WINDOW * SSIM_WINDOW) as f64;
        let sq: Vec<f64> = v.values.iter().map(|a| a * a).collect();
        let mean = box_sum(&v.values, dims, SSIM_WINDOW)
            .into_iter()
            .map(|s| s * inv)
            .collect();
        let mean_sq = box_sum(&sq, dims, SSIM_WINDOW).into_iter().map(|s| s * inv).collect();
        Ok(Self { dims, mean, mean_sq })
    }
}

fn ssim_from_stats(xs: &WindowStats, x: &[f64], rs: &WindowStats, r: &[f64], data_range: f64) -> f64 {
    let inv = 1.0 / (SSIM_WINDOW * SSIM_WINDOW * SSIM_WINDOW) as f64;
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let prod: Vec<f64> = x.iter().zip(r).map(|(a, b)| a * b).collect();
    let cross = box_sum(&prod, xs.dims, SSIM_WINDOW);
    let mut total = 0.0;
    for (i, s) in cross.iter().enumerate() {
        let (mx, my) = (xs.mean[i], rs.mean[i]);
        let vx = xs.mean_sq[i] - mx * mx;
        let vy = rs.mean_sq[i] - my * my;
        let cov = s * inv - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total / cross.len() as f64
}

/// Mean local SSIM over all fully interior 7³ windows with uniform weights.
pub fn ssim3d(x: &Volume, reference: &Volume, data_range: f64) -> Result<f64> {
    x.check_same_shape(reference, "ssim3d")?;
    check_range(data_range)?;
    let xs = WindowStats::new(x)?;
    let rs = WindowStats::new(reference)?;
    Ok(ssim_from_stats(&xs, &x.values, &rs, &reference.values, data_range))
}

/// Cubic lattice of translations `k·step` for `|k·step| ≤ extent` on each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftGrid {
    pub extent: f64,
    pub step: f64,
}

impl Default for ShiftGrid {
    fn default() -> Self {
        Self { extent: 3.0, step: 0.5 }
    }
}

impl ShiftGrid {
    pub fn new(extent: f64, step: f64) -> Result<Self> {
        let g = Self { extent, step };
        g.validate()?;
        Ok(g)
    }

    /// Only the zero shift.
    pub fn none() -> Self {
        Self { extent: 0.0, step: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.extent >= 0.0) || !self.extent.is_finite() {
            return Err(Error::invalid(format!(
                "shift grid needs step > 0 and extent ≥ 0, got step {} extent {}",
                self.step, self.extent
            )));
        }
        let m = self.extent / self.step;
        if (m - m.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "shift extent {} is not a multiple of step {}",
                self.extent, self.step
            )));
        }
        Ok(())
    }

    fn half_count(&self) -> i64 {
        (self.extent / self.step).round() as i64
    }

    pub fn per_axis(&self) -> Vec<f64> {
        let m = self.half_count();
        (-m..=m).map(|k| k as f64 * self.step).collect()
    }

    /// All shifts, x slowest and z fastest.
    pub fn shifts(&self) -> Vec<[f64; 3]> {
        let axis = self.per_axis();
        let mut out = Vec::with_capacity(axis.len().pow(3));
        for &sx in &axis {
            for &sy in &axis {
                for &sz in &axis {
                    out.push([sx, sy, sz]);
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        (2 * self.half_count() as usize + 1).pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn zero_index(&self) -> usize {
        let m = self.half_count() as usize;
        let n = 2 * m + 1;
        (m * n + m) * n + m
    }
}

struct Reference {
    volume: Volume,
    stats: WindowStats,
}

/// Rasterized references for every shift of a grid, with their SSIM window
/// statistics.
pub struct ReferenceSet {
    pub spec: PhantomSpec,
    pub grid: GridSpec,
    pub shift_grid: ShiftGrid,
    pub supersample: usize,
    shifts: Vec<[f64; 3]>,
    refs: Vec<Reference>,
}

impl std::fmt::Debug for ReferenceSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceSet")
            .field("grid", &self.grid)
            .field("shift_grid", &self.shift_grid)
            .field("references", &self.refs.len())
            .finish()
    }
}

impl ReferenceSet {
    pub fn build(spec: &PhantomSpec, grid: &GridSpec, shift_grid: &ShiftGrid, supersample: usize) -> Result<Self> {
        shift_grid.validate()?;
        spec.validate()?;
        grid.validate()?;
        let shifts = shift_grid.shifts();
        let threads = std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(shifts.len());
        let chunk = shifts.len().div_ceil(threads);
        let parts: Vec<Result<Vec<Reference>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = shifts
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|&s| {
                                let volume = rasterize_phantom(spec, grid, s, supersample)?.volume;
                                let stats = WindowStats::new(&volume)?;
                                Ok(Reference { volume, stats })
                            })
                            .collect()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rasterization thread panicked"))
                .collect()
        });
        let mut refs = Vec::with_capacity(shifts.len());
        for p in parts {
            refs.extend(p?);
        }
        Ok(Self {
            spec: spec.clone(),
            grid: grid.clone(),
            shift_grid: shift_grid.clone(),
            supersample,
            shifts,
            refs,
        })
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn shifts(&self) -> &[[f64; 3]] {
        &self.shifts
    }

    pub fn reference(&self, i: usize) -> &Volume {
        &self.refs[i].volume
    }

    pub fn unshifted(&self) -> &Volume {
        self.reference(self.shift_grid.zero_index())
    }

    /// Scores `x` against every reference.
    pub fn evaluate(&self, x: &Volume, data_range: f64) -> Result<QualityReport> {
        check_range(data_range)?;
        x.check_same_shape(self.unshifted(), "eps_metrics")?;
        if x.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reconstruction contains non-finite values"));
        }
        let xs = WindowStats::new(x)?;
        let mut psnr_per_shift = Vec::with_capacity(self.len());
        let mut ssim_per_shift = Vec::with_capacity(self.len());
        for r in &self.refs {
            psnr_per_shift.push(psnr_unchecked(&x.values, &r.volume.values, data_range));
            ssim_per_shift.push(ssim_from_stats(&xs, &x.values, &r.stats, &r.volume.values, data_range));
        }
        let zero = self.shift_grid.zero_index();
        let ip = argmax(&psnr_per_shift);
        let is = argmax(&ssim_per_shift);
        Ok(QualityReport {
            eps_psnr: psnr_per_shift[ip],
            eps_ssim: ssim_per_shift[is],
            psnr_shift: self.shifts[ip],
            ssim_shift: self.shifts[is],
            unshifted_psnr: psnr_per_shift[zero],
            unshifted_ssim: ssim_per_shift[zero],
            data_range,
            psnr_per_shift,
            ssim_per_shift,
        })
    }

    /// PSNR-only variant of [`ReferenceSet::evaluate`]; returns the maximum
    /// and its shift.
    pub fn eps_psnr(&self, x: &Volume, data_range: f64) -> Result<(f64, [f64; 3])> {
        check_range(data_range)?;
        x.check_same_shape(self.unshifted(), "eps_psnr")?;
        let scores: Vec<f64> = self
            .refs
            .iter()
            .map(|r| psnr_unchecked(&x.values, &r.volume.values, data_range))
            .collect();
        let i = argmax(&scores);
        Ok((scores[i], self.shifts[i]))
    }
}

/// First index of the largest value.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    #[serde(with = "inf_scalar")]
    pub eps_psnr: f64,
    pub eps_ssim: f64,
    pub psnr_shift: [f64; 3],
    pub ssim_shift: [f64; 3],
    #[serde(with = "inf_scalar")]
    pub unshifted_psnr: f64,
    pub unshifted_ssim: f64,
    pub data_range: f64,
    #[serde(with = "inf_vec")]
    pub psnr_per_shift: Vec<f64>,
    pub ssim_per_shift: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MaybeInf {
    Num(f64),
    Str(String),
}

impl MaybeInf {
    fn wrap(v: f64) -> Self {
        if v == f64::INFINITY {
            MaybeInf::Str("inf".into())
        } else {
            MaybeInf::Num(v)
        }
    }

    fn unwrap<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            MaybeInf::Num(v) => Ok(v),
            MaybeInf::Str(s) if s == "inf" => Ok(f64::INFINITY),
            MaybeInf::Str(s) => Err(E::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

mod inf_scalar {
    use super::MaybeInf;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        MaybeInf::wrap(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        MaybeInf::deserialize(d)?.unwrap()
    }
}

mod inf_vec {
    use super::MaybeInf;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| MaybeInf::wrap(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<MaybeInf>::deserialize(d)?
            .into_iter()
            .map(MaybeInf::unwrap)
            .collect()
    }
}

type CacheMap = HashMap<String, Arc<ReferenceSet>>;

fn cache() -> &'static RwLock<CacheMap> {
    static CACHE: OnceLock<RwLock<CacheMap>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Process-wide reference set for the given phantom, grid and shifts, built
/// on first use.
pub fn reference_set(spec: &PhantomSpec, grid: &GridSpec, shift_grid: &ShiftGrid) -> Result<Arc<ReferenceSet>> {
    let key = serde_json::to_string(&(spec, grid, shift_grid, DEFAULT_SUPERSAMPLE))?;
    if let Some(hit) = cache().read().expect("reference cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let mut map = cache().write().expect("reference cache poisoned");
    if let Some(hit) = map.get(&key) {
        return Ok(Arc::clone(hit));
    }
    let set = Arc::new(ReferenceSet::build(spec, grid, shift_grid, DEFAULT_SUPERSAMPLE)?);
    map.insert(key, Arc::clone(&set));
    Ok(set)
}

/// Shift-maximized PSNR and SSIM of `x` against the phantom.
pub fn eps_metrics(
    x: &Volume,
    spec: &PhantomSpec,
    grid: &GridSpec,
    shift_grid: &ShiftGrid,
    data_range: f64,
) -> Result<QualityReport> {
    reference_set(spec, grid, shift_grid)?.evaluate(x, data_range)
}

/// Same as [`eps_metrics`] but rasterizes the references afresh.
pub fn eps_metrics_uncached(
    x: &Volume,
    spec: &PhantomSpec,
    grid: &GridSpec,
    shift_grid: &ShiftGrid,
    data_range: f64,
) -> Result<QualityReport> {
    ReferenceSet::build(spec, grid, shift_grid, DEFAULT_SUPERSAMPLE)?.evaluate(x, data_range)
}
