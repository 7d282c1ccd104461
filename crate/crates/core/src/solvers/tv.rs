use crate::error::{Error, Result};
use crate::linalg::Volume;

/// Smoothed anisotropic total variation
/// `Σ_d √(d² + ε²) − ε` over forward differences along x, y and z, with
/// replicate boundary (the difference past the last voxel is zero).
/// Returns the value and its gradient.
pub fn tv_penalty(c: &Volume, eps: f64) -> Result<(f64, Volume)> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("tv epsilon must be positive, got {eps}")));
    }
    let mut grad = Volume::zeros(c.dims(), c.voxel_size);
    let value = tv_accumulate(&c.values, c.dims(), eps, &mut grad.values);
    Ok((value, grad))
}

/// Adds the TV gradient of `values` into `grad` and returns the TV value.
pub(crate) fn tv_accumulate(values: &[f64], dims: [usize; 3], eps: f64, grad: &mut [f64]) -> f64 {
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];
    let mut value = 0.0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                let pos = [x, y, z];
                for axis in 0..3 {
                    if pos[axis] + 1 >= dims[axis] {
                        continue;
                    }
                    let j = i + strides[axis];
                    let d = values[j] - values[i];
                    let r = (d * d + eps * eps).sqrt();
                    value += r - eps;
                    let g = d / r;
                    grad[j] += g;
                    grad[i] -= g;
                }
            }
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_volume_has_zero_tv() {
        let v = Volume::from_values([3, 3, 3], [1.0; 3], vec![4.2; 27]).unwrap();
        let (val, g) = tv_penalty(&v, 1e-2).unwrap();
        assert_eq!(val, 0.0);
        assert!(g.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn step_edge_limit() {
        // a step of height h between x = 1 and x = 2 on a 4×3×2 volume
        let h = 5.0;
        let mut v = Volume::zeros([4, 3, 2], [1.0; 3]);
        for z in 0..2 {
            for y in 0..3 {
                for x in 2..4 {
                    let i = v.index(x, y, z);
                    v.values[i] = h;
                }
            }
        }
        let (val, _) = tv_penalty(&v, 1e-9).unwrap();
        assert!((val - h * 6.0).abs() < 1e-6, "{val}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let vals: Vec<f64> = (0..125).map(|_| rng.random::<f64>()).collect();
        let v = Volume::from_values([5, 5, 5], [1.0; 3], vals).unwrap();
        let eps = 1e-2;
        let (_, g) = tv_penalty(&v, eps).unwrap();
        let h = 1e-6;
        let mut fd_all = vec![0.0; 125];
        for i in 0..125 {
            let mut p = v.clone();
            p.values[i] += h;
            let mut m = v.clone();
            m.values[i] -= h;
            let fd = (tv_penalty(&p, eps).unwrap().0 - tv_penalty(&m, eps).unwrap().0) / (2.0 * h);
            fd_all[i] = fd;
        }
        let diff: f64 = fd_all
            .iter()
            .zip(&g.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = g.values.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(diff / norm <= 1e-6, "{}", diff / norm);
    }

    #[test]
    fn rejects_nonpositive_eps() {
        assert!(tv_penalty(&Volume::zeros([2, 2, 2], [1.0; 3]), 0.0).is_err());
    }
}
