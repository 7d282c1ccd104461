//! Synthetic system matrices.
//!
//! Rows are stacked per receive coil as a block of real parts followed by a
//! block of imaginary parts over the coil's frequency indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::phantom::GridSpec;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Re,
    Im,
}

/// Identifies one row of a raw system: receive coil, frequency index, part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowLabel {
    pub coil: u32,
    pub frequency: u32,
    pub part: Part,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorModel {
    /// `U · diag(scale · k^(−beta)) · Vᵀ` with random orthonormal `U`, `V`.
    Spectral {
        beta: f64,
        #[serde(default = "one")]
        scale: f64,
        /// Frequency indices per coil (1..=frequencies).
        frequencies: usize,
    },
    /// Equilibrium Langevin particles under a Lissajous field-free-point
    /// trajectory.
    Langevin {
        /// Drive amplitude per axis in mT.
        drive_amplitude_mt: [f64; 3],
        /// Selection-field gradient along z in T/m (x and y get −½ of it).
        gradient_t_per_m: f64,
        /// Drive frequencies as harmonics of the repetition period.
        frequency_ratios: [u32; 3],
        /// Saturation parameter in 1/mT; 0 gives a linear response.
        kappa: f64,
        samples_per_period: usize,
        /// Highest frequency index kept in the raw system.
        max_frequency: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl OperatorModel {
    pub fn default_langevin() -> Self {
        OperatorModel::Langevin {
            drive_amplitude_mt: [12.0, 12.0, 12.0],
            gradient_t_per_m: 2.0,
            frequency_ratios: [16, 17, 15],
            kappa: 0.5,
            samples_per_period: 512,
            max_frequency: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OperatorModel::Spectral {
                beta,
                scale,
                frequencies,
            } => {
                if !(*beta > 0.0) || !(*scale > 0.0) || *frequencies == 0 {
                    return Err(Error::invalid(
                        "spectral operator needs beta > 0, scale > 0, frequencies ≥ 1",
                    ));
                }
            }
            OperatorModel::Langevin {
                drive_amplitude_mt,
                gradient_t_per_m,
                frequency_ratios,
                kappa,
                samples_per_period,
                max_frequency,
            } => {
                if drive_amplitude_mt.iter().any(|a| !(*a > 0.0)) || !(*gradient_t_per_m > 0.0) {
                    return Err(Error::invalid("drive amplitudes and gradient must be positive"));
                }
                if !(*kappa >= 0.0) {
                    return Err(Error::invalid("kappa must be nonnegative"));
                }
                for i in 0..3 {
                    if frequency_ratios[i] == 0 {
                        return Err(Error::invalid("frequency ratios must be positive"));
                    }
                    for j in i + 1..3 {
                        if gcd(frequency_ratios[i], frequency_ratios[j]) != 1 {
                            return Err(Error::invalid(format!(
                                "frequency ratios {frequency_ratios:?} are not pairwise coprime"
                            )));
                        }
                    }
                }
                if *max_frequency == 0 || 2 * max_frequency >= *samples_per_period {
                    return Err(Error::invalid(format!(
                        "max_frequency {max_frequency} must lie in 1..{}",
                        samples_per_period / 2
                    )));
                }
            }
        }
        Ok(())
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A synthesized system matrix with its row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemOperator {
    pub system_rows: Matrix,
    pub row_labels: Vec<RowLabel>,
    pub grid: GridSpec,
    pub model: OperatorModel,
    pub seed: u64,
}

fn stacked_labels(coils: usize, freqs: &[u32]) -> Vec<RowLabel> {
    let mut labels = Vec::with_capacity(2 * coils * freqs.len());
    for coil in 0..coils as u32 {
        for part in [Part::Re, Part::Im] {
            for &frequency in freqs {
                labels.push(RowLabel { coil, frequency, part });
            }
        }
    }
    labels
}

/// Matrix with prescribed singular values and seeded orthonormal factors.
pub fn matrix_with_spectrum(rows: usize, cols: usize, spectrum: &[f64], seed: u64) -> Result<Matrix> {
    let r = spectrum.len();
    if r > rows.min(cols) {
        return Err(Error::invalid(format!(
            "{r} singular values do not fit a {rows}x{cols} matrix"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g_left = Matrix::from_fn(rows, r, |_, _| StandardNormal.sample(&mut rng));
    let g_right = Matrix::from_fn(cols, r, |_, _| StandardNormal.sample(&mut rng));
    let u = orthonormalize(&g_left);
    let v = orthonormalize(&g_right);
    // (U·diag(s)) row-major times Vᵀ
    let us = Matrix::from_fn(rows, r, |i, k| u[k][i] * spectrum[k]);
    let vm = Matrix::from_fn(cols, r, |i, k| v[k][i]);
    us.matmul_t(&vm)
}

pub fn synth_operator(model: &OperatorModel, grid: &GridSpec, coils: usize, seed: u64) -> Result<SystemOperator> {
    model.validate()?;
    grid.validate()?;
    if coils == 0 {
        return Err(Error::invalid("at least one receive coil is required"));
    }
    let n = grid.voxel_count();
    let (system_rows, row_labels) = match model {
        OperatorModel::Spectral {
            beta,
            scale,
            frequencies,
        } => {
            let freqs: Vec<u32> = (1..=*frequencies as u32).collect();
            let labels = stacked_labels(coils, &freqs);
            let m = labels.len();
            let r = m.min(n);
            let spectrum: Vec<f64> = (1..=r).map(|k| scale * (k as f64).powf(-beta)).collect();
            (matrix_with_spectrum(m, n, &spectrum, seed)?, labels)
        }
        OperatorModel::Langevin { .. } => {
            if coils > 3 {
                return Err(Error::invalid(format!(
                    "langevin trajectory supports 1 to 3 receive coils, got {coils}"
                )));
            }
            langevin_rows(model, grid, coils)?
        }
    };
    Ok(SystemOperator {
        system_rows,
        row_labels,
        grid: grid.clone(),
        model: model.clone(),
        seed,
    })
}

/// `3·L(κr)/κ`, the magnetization magnitude; tends to `r` as κ → 0.
fn langevin_magnitude(r: f64, kappa: f64) -> f64 {
    let u = kappa * r;
    if u.abs() < 1e-4 {
        // L(u) = u/3 − u³/45 + 2u⁵/945
        let u2 = u * u;
        r * (1.0 - u2 / 15.0 + 2.0 * u2 * u2 / 315.0)
    } else {
        3.0 * (1.0 / u.tanh() - 1.0 / u) / kappa
    }
}

fn langevin_rows(model: &OperatorModel, grid: &GridSpec, coils: usize) -> Result<(Matrix, Vec<RowLabel>)> {
    let OperatorModel::Langevin {
        drive_amplitude_mt,
        gradient_t_per_m,
        frequency_ratios,
        kappa,
        samples_per_period,
        max_frequency,
    } = model
    else {
        unreachable!()
    };
    let ns = *samples_per_period;
    let freqs: Vec<u32> = (1..=*max_frequency as u32).collect();
    let labels = stacked_labels(coils, &freqs);
    let n_vox = grid.voxel_count();
    let nf = freqs.len();
    let mut rows = Matrix::zeros(labels.len(), n_vox);

    // T = 1; T/n sampling, inner product with ψ_j = (−1)^j e^{i2πjt}
    let drive: Vec<[f64; 3]> = (0..ns)
        .map(|k| {
            let t = k as f64 / ns as f64;
            [0, 1, 2]
                .map(|a| drive_amplitude_mt[a] * (2.0 * std::f64::consts::PI * frequency_ratios[a] as f64 * t).sin())
        })
        .collect();
    let g = [-0.5 * gradient_t_per_m, -0.5 * gradient_t_per_m, *gradient_t_per_m];

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(ns);
    let mut buf = vec![Complex::new(0.0, 0.0); ns];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    for iz in 0..grid.shape[2] {
        for iy in 0..grid.shape[1] {
            for ix in 0..grid.shape[0] {
                let pos = grid.voxel_center([ix, iy, iz]);
                let col = ix + grid.shape[0] * (iy + grid.shape[1] * iz);
                let sel = [0, 1, 2].map(|a| g[a] * pos[a]);
                let mags: Vec<[f64; 3]> = drive
                    .iter()
                    .map(|d| {
                        let h = [0, 1, 2].map(|a| sel[a] + d[a]);
                        let r = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
                        if r == 0.0 {
                            [0.0; 3]
                        } else {
                            let f = langevin_magnitude(r, *kappa) / r;
                            h.map(|c| c * f)
                        }
                    })
                    .collect();
                for coil in 0..coils {
                    for (b, m) in buf.iter_mut().zip(&mags) {
                        *b = Complex::new(m[coil], 0.0);
                    }
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    let base = coil * 2 * nf;
                    for (fi, &j) in freqs.iter().enumerate() {
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        let proj = buf[j as usize] * (sign / ns as f64);
                        // induced voltage −dm/dt ↔ −i2πj ⟨m, ψ_j⟩
                        let v = proj * Complex::new(0.0, -2.0 * std::f64::consts::PI * j as f64);
                        rows.set(base + fi, col, v.re);
                        rows.set(base + nf + fi, col, v.im);
                    }
                }
            }
        }
    }
    Ok((rows, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::exact_svd;

    #[test]
    fn spectral_operator_has_prescribed_spectrum() {
        let grid = GridSpec {
            shape: [2, 2, 2],
            fov: [2.0, 2.0, 2.0],
            origin: [0.0; 3],
        };
        let model = OperatorModel::Spectral {
            beta: 1.0,
            scale: 1.0,
            frequencies: 4,
        };
        let op = synth_operator(&model, &grid, 1, 0).unwrap();
        assert_eq!(op.system_rows.shape(), (8, 8));
        let s = exact_svd(&op.system_rows).unwrap().s;
        for (k, sk) in s.iter().enumerate() {
            assert!((sk - 1.0 / (k + 1) as f64).abs() < 1e-10, "{k}: {sk}");
        }
        assert_eq!(
            op.row_labels[0],
            RowLabel {
                coil: 0,
                frequency: 1,
                part: Part::Re
            }
        );
        assert_eq!(
            op.row_labels[4],
            RowLabel {
                coil: 0,
                frequency: 1,
                part: Part::Im
            }
        );
    }

    #[test]
    fn generators_are_deterministic() {
        let grid = GridSpec {
            shape: [4, 4, 3],
            fov: [8.0, 8.0, 3.0],
            origin: [0.0; 3],
        };
        let m = OperatorModel::Spectral {
            beta: 1.5,
            scale: 2.0,
            frequencies: 5,
        };
        assert_eq!(
            synth_operator(&m, &grid, 2, 7).unwrap(),
            synth_operator(&m, &grid, 2, 7).unwrap()
        );
        let l = OperatorModel::Langevin {
            drive_amplitude_mt: [12.0, 12.0, 12.0],
            gradient_t_per_m: 2.0,
            frequency_ratios: [16, 17, 15],
            kappa: 0.5,
            samples_per_period: 128,
            max_frequency: 40,
        };
        assert_eq!(
            synth_operator(&l, &grid, 3, 7).unwrap(),
            synth_operator(&l, &grid, 3, 7).unwrap()
        );
    }

    #[test]
    fn langevin_validation() {
        let grid = GridSpec::default();
        assert!(synth_operator(&OperatorModel::default_langevin(), &grid, 4, 0).is_err());
        let bad = OperatorModel::Langevin {
            drive_amplitude_mt: [12.0; 3],
            gradient_t_per_m: 2.0,
            frequency_ratios: [16, 18, 15],
            kappa: 0.5,
            samples_per_period: 512,
            max_frequency: 128,
        };
        assert!(bad.validate().is_err());
    }

    /// Linear magnetization: only the drive harmonic of each coil carries
    /// signal. The oracle integrates the analytic induced voltage directly.
    #[test]
    fn linear_regime_reproduces_drive_response() {
        let grid = GridSpec {
            shape: [5, 5, 3],
            fov: [10.0, 10.0, 3.0],
            origin: [0.0; 3],
        };
        let amps = [12.0, 10.0, 8.0];
        let ratios = [16u32, 17, 15];
        let ns = 256;
        let model = OperatorModel::Langevin {
            drive_amplitude_mt: amps,
            gradient_t_per_m: 2.0,
            frequency_ratios: ratios,
            kappa: 0.0,
            samples_per_period: ns,
            max_frequency: 60,
        };
        let op = synth_operator(&model, &grid, 3, 0).unwrap();
        let s = &op.system_rows;
        let c = vec![1.0; grid.voxel_count()];
        let response = s.matvec(&c).unwrap();
        let max_norm = s.row_norms().into_iter().fold(0.0, f64::max);

        for (i, label) in op.row_labels.iter().enumerate() {
            let coil = label.coil as usize;
            let f = ratios[coil];
            if label.frequency != f {
                assert!(s.row(i).iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8 * max_norm);
                continue;
            }
            // direct time-domain quadrature of v(t) = −d/dt (A sin 2πft)
            let j = label.frequency as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..ns {
                let t = k as f64 / ns as f64;
                let v = -2.0
                    * std::f64::consts::PI
                    * f as f64
                    * amps[coil]
                    * (2.0 * std::f64::consts::PI * f as f64 * t).cos();
                let sign = if label.frequency % 2 == 0 { 1.0 } else { -1.0 };
                let ang = -2.0 * std::f64::consts::PI * j * t;
                re += sign * v * ang.cos() / ns as f64;
                im += sign * v * ang.sin() / ns as f64;
            }
            let expected = match label.part {
                Part::Re => re,
                Part::Im => im,
            } * grid.voxel_count() as f64;
            assert!(
                (response[i] - expected).abs() <= 1e-9 * max_norm * grid.voxel_count() as f64,
                "{label:?}: {} vs {expected}",
                response[i]
            );
        }
    }

    #[test]
    fn langevin_magnitude_is_continuous_at_series_switch() {
        for kappa in [0.0, 0.3, 2.0] {
            let r1 = if kappa == 0.0 { 1.0 } else { 0.99e-4 / kappa };
            let r2 = if kappa == 0.0 { 1.0 } else { 1.01e-4 / kappa };
            let a = langevin_magnitude(r1, kappa) / r1;
            let b = langevin_magnitude(r2, kappa) / r2;
            assert!((a - b).abs() < 1e-6);
        }
        assert!((langevin_magnitude(100.0, 1.0) - 3.0 * (1.0 / 100f64.tanh() - 0.01)).abs() < 1e-12);
    }
}
