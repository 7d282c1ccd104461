//! Forward and backward passes of the network building blocks.

use super::tensor::Tensor4;

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Output length along one axis: `ceil(n / stride)`.
#[inline]
pub fn conv_out_len(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

/// Range of output indices whose input index `o·s + k − pad` lies in `0..n`.
#[inline]
fn valid_range(n_in: usize, n_out: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // largest o with o·s + k − pad ≤ n_in − 1
    let hi = if n_in + pad > k {
        ((n_in - 1 + pad - k) / stride + 1).min(n_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k * self.k
    }

    pub fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn out_dims(&self, d: [usize; 3]) -> [usize; 3] {
        d.map(|n| conv_out_len(n, self.stride))
    }
}

/// Zero-padded 3D convolution (cross-correlation) with `pad = k/2` on the
/// low side. `weights` are `[cout][cin][kz][ky][kx]`.
pub fn conv_forward(x: &Tensor4, shape: ConvShape, weights: &[f64], bias: &[f64]) -> Tensor4 {
    let ConvShape { cin, cout, k, stride } = shape;
    debug_assert_eq!(x.channels, cin);
    let pad = shape.pad();
    let [ox, oy, oz] = shape.out_dims(x.dims());
    let [nx, ny, nz] = x.dims();
    let mut out = Tensor4::zeros(cout, [ox, oy, oz]);
    for co in 0..cout {
        let out_c = out.channel_mut(co);
        out_c.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let in_c = x.channel(ci);
            for kz in 0..k {
                let (z0, z1) = valid_range(nz, oz, stride, kz, pad);
                for ky in 0..k {
                    let (y0, y1) = valid_range(ny, oy, stride, ky, pad);
                    for kx in 0..k {
                        let (x0, x1) = valid_range(nx, ox, stride, kx, pad);
                        let w = weights[(((co * cin + ci) * k + kz) * k + ky) * k + kx];
                        if w == 0.0 {
                            continue;
                        }
                        for z in z0..z1 {
                            let iz = z * stride + kz - pad;
                            for y in y0..y1 {
                                let iy = y * stride + ky - pad;
                                let orow = &mut out_c[(z * oy + y) * ox..(z * oy + y + 1) * ox];
                                let irow = &in_c[(iz * ny + iy) * nx..(iz * ny + iy + 1) * nx];
                                if stride == 1 {
                                    let off = kx as isize - pad as isize;
                                    for xo in x0..x1 {
                                        orow[xo] += w * irow[(xo as isize + off) as usize];
                                    }
                                } else {
                                    for xo in x0..x1 {
                                        orow[xo] += w * irow[xo * stride + kx - pad];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution: accumulates into `gw`, `gb` and returns the
/// input gradient.
pub fn conv_backward(
    x: &Tensor4,
    shape: ConvShape,
    weights: &[f64],
    dout: &Tensor4,
    gw: &mut [f64],
    gb: &mut [f64],
) -> Tensor4 {
    let ConvShape { cin, cout, k, stride } = shape;
    let pad = shape.pad();
    let [ox, oy, oz] = dout.dims();
    let [nx, ny, nz] = x.dims();
    let mut dx = Tensor4::zeros(cin, x.dims());
    for co in 0..cout {
        let d_c = dout.channel(co);
        gb[co] += d_c.iter().sum::<f64>();
        for ci in 0..cin {
            let in_c = x.channel(ci);
            let s = dx.spatial_len();
            let dx_c = &mut dx.values[ci * s..(ci + 1) * s];
            for kz in 0..k {
                let (z0, z1) = valid_range(nz, oz, stride, kz, pad);
                for ky in 0..k {
                    let (y0, y1) = valid_range(ny, oy, stride, ky, pad);
                    for kx in 0..k {
                        let (x0, x1) = valid_range(nx, ox, stride, kx, pad);
                        let widx = (((co * cin + ci) * k + kz) * k + ky) * k + kx;
                        let w = weights[widx];
                        let mut acc = 0.0;
                        for z in z0..z1 {
                            let iz = z * stride + kz - pad;
                            for y in y0..y1 {
                                let iy = y * stride + ky - pad;
                                let drow = &d_c[(z * oy + y) * ox..(z * oy + y + 1) * ox];
                                let ibase = (iz * ny + iy) * nx;
                                for xo in x0..x1 {
                                    let ix = ibase + xo * stride + kx - pad;
                                    acc += drow[xo] * in_c[ix];
                                    dx_c[ix] += w * drow[xo];
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    dx
}

/// Per-channel normalization over the spatial extent with affine output.
pub fn norm_forward(x: &Tensor4, gamma: &[f64], beta: &[f64]) -> Tensor4 {
    let mut out = x.clone();
    let n = x.spatial_len() as f64;
    for c in 0..x.channels {
        let ch = out.channel_mut(c);
        let mean = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        for v in ch.iter_mut() {
            *v = gamma[c] * (*v - mean) * inv + beta[c];
        }
    }
    out
}

pub fn norm_backward(x: &Tensor4, gamma: &[f64], dout: &Tensor4, g_gamma: &mut [f64], g_beta: &mut [f64]) -> Tensor4 {
    let mut dx = Tensor4::zeros(x.channels, x.dims());
    let n = x.spatial_len() as f64;
    for c in 0..x.channels {
        let xc = x.channel(c);
        let dc = dout.channel(c);
        let mean = xc.iter().sum::<f64>() / n;
        let var = xc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        let mut sum_d = 0.0;
        let mut sum_dxhat = 0.0;
        for (v, d) in xc.iter().zip(dc) {
            let xhat = (v - mean) * inv;
            sum_d += d;
            sum_dxhat += d * xhat;
        }
        g_gamma[c] += sum_dxhat;
        g_beta[c] += sum_d;
        let scale = gamma[c] * inv / n;
        for ((g, v), d) in dx.channel_mut(c).iter_mut().zip(xc).zip(dc) {
            let xhat = (v - mean) * inv;
            *g = scale * (n * d - sum_d - xhat * sum_dxhat);
        }
    }
    dx
}

/// Leaky rectifier; slope 0 gives the plain rectifier.
pub fn leaky_forward(x: &Tensor4, slope: f64) -> Tensor4 {
    let mut out = x.clone();
    for v in &mut out.values {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

pub fn leaky_backward(x: &Tensor4, slope: f64, dout: &Tensor4) -> Tensor4 {
    let mut dx = dout.clone();
    for (g, v) in dx.values.iter_mut().zip(&x.values) {
        if *v < 0.0 {
            *g *= slope;
        }
    }
    dx
}

#[inline]
fn source_index(o: usize, n_in: usize, n_out: usize) -> usize {
    o * n_in / n_out
}

/// Nearest-neighbour resize to `to`.
pub fn upsample_forward(x: &Tensor4, to: [usize; 3]) -> Tensor4 {
    let [nx, ny, nz] = x.dims();
    let mut out = Tensor4::zeros(x.channels, to);
    for c in 0..x.channels {
        let src = x.channel(c);
        let dst = out.channel_mut(c);
        for z in 0..to[2] {
            let sz = source_index(z, nz, to[2]);
            for y in 0..to[1] {
                let sy = source_index(y, ny, to[1]);
                for xo in 0..to[0] {
                    let sx = source_index(xo, nx, to[0]);
                    dst[(z * to[1] + y) * to[0] + xo] = src[(sz * ny + sy) * nx + sx];
                }
            }
        }
    }
    out
}

pub fn upsample_backward(from: [usize; 3], dout: &Tensor4) -> Tensor4 {
    let [nx, ny, nz] = from;
    let to = dout.dims();
    let mut dx = Tensor4::zeros(dout.channels, from);
    for c in 0..dout.channels {
        let d = dout.channel(c);
        let g = dx.channel_mut(c);
        for z in 0..to[2] {
            let sz = source_index(z, nz, to[2]);
            for y in 0..to[1] {
                let sy = source_index(y, ny, to[1]);
                for xo in 0..to[0] {
                    let sx = source_index(xo, nx, to[0]);
                    g[(sz * ny + sy) * nx + sx] += d[(z * to[1] + y) * to[0] + xo];
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition of the padded convolution.
    fn conv_reference(x: &Tensor4, s: ConvShape, w: &[f64], b: &[f64]) -> Tensor4 {
        let pad = s.pad() as isize;
        let od = s.out_dims(x.dims());
        let mut out = Tensor4::zeros(s.cout, od);
        for co in 0..s.cout {
            for z in 0..od[2] {
                for y in 0..od[1] {
                    for xo in 0..od[0] {
                        let mut acc = b[co];
                        for ci in 0..s.cin {
                            for kz in 0..s.k {
                                for ky in 0..s.k {
                                    for kx in 0..s.k {
                                        let ix = (xo * s.stride + kx) as isize - pad;
                                        let iy = (y * s.stride + ky) as isize - pad;
                                        let iz = (z * s.stride + kz) as isize - pad;
                                        if ix < 0 || iy < 0 || iz < 0 {
                                            continue;
                                        }
                                        let (ix, iy, iz) = (ix as usize, iy as usize, iz as usize);
                                        if ix >= x.nx || iy >= x.ny || iz >= x.nz {
                                            continue;
                                        }
                                        let wv = w[(((co * s.cin + ci) * s.k + kz) * s.k + ky) * s.k + kx];
                                        acc += wv * x.channel(ci)[(iz * x.ny + iy) * x.nx + ix];
                                    }
                                }
                            }
                        }
                        out.channel_mut(co)[(z * od[1] + y) * od[0] + xo] = acc;
                    }
                }
            }
        }
        out
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919) % 23) as f64 * scale - 0.3).collect()
    }

    #[test]
    fn conv_matches_definition() {
        for (stride, dims) in [(1, [4, 3, 5]), (2, [5, 4, 3]), (2, [19, 2, 1])] {
            let s = ConvShape {
                cin: 2,
                cout: 3,
                k: 3,
                stride,
            };
            let x = Tensor4::from_values(2, dims, ramp(2 * dims.iter().product::<usize>(), 0.1)).unwrap();
            let w = ramp(s.weight_len(), 0.05);
            let b = vec![0.1, -0.2, 0.3];
            let fast = conv_forward(&x, s, &w, &b);
            let slow = conv_reference(&x, s, &w, &b);
            assert_eq!(fast.dims(), slow.dims());
            for (a, r) in fast.values.iter().zip(&slow.values) {
                assert!((a - r).abs() < 1e-12);
            }
        }
        assert_eq!(conv_out_len(19, 2), 10);
        assert_eq!(conv_out_len(5, 2), 3);
    }

    #[test]
    fn upsample_adjoint() {
        let x = Tensor4::from_values(1, [3, 2, 2], ramp(12, 1.0)).unwrap();
        let d = Tensor4::from_values(1, [5, 4, 3], ramp(60, 0.5)).unwrap();
        let up = upsample_forward(&x, [5, 4, 3]);
        let lhs: f64 = up.values.iter().zip(&d.values).map(|(a, b)| a * b).sum();
        let back = upsample_backward([3, 2, 2], &d);
        let rhs: f64 = back.values.iter().zip(&x.values).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        // 5 → 10 duplicates each voxel
        let x = Tensor4::from_values(1, [2, 1, 1], vec![1.0, 2.0]).unwrap();
        assert_eq!(upsample_forward(&x, [4, 1, 1]).values, vec![1.0, 1.0, 2.0, 2.0]);
    }
}
