//! Convolutional autoencoder without skip connections.
//!
//! Encoder stage: stride-2 conv, norm, leaky ReLU, conv, norm, leaky ReLU.
//! Decoder stage: nearest upsample to the mirrored encoder size, then the
//! same conv/norm/activation pair. A 1×1×1 convolution and a ReLU produce
//! the single output channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward, conv_forward, leaky_backward, leaky_forward, norm_backward, norm_forward, upsample_backward,
    upsample_forward, ConvShape,
};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::preprocess::ProcessedSystem;
use crate::solvers::sign;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderSpec {
    pub encoder_channels: Vec<usize>,
    pub kernel: usize,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        Self {
            encoder_channels: vec![64, 128, 256],
            kernel: 3,
            leaky_slope: 0.2,
            seed: 0,
        }
    }
}

impl AutoencoderSpec {
    pub fn with_channels(channels: &[usize], seed: u64) -> Self {
        Self {
            encoder_channels: channels.to_vec(),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return Err(Error::invalid("encoder_channels must be nonempty and positive"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::invalid(format!("kernel {} must be odd", self.kernel)));
        }
        if !(self.leaky_slope >= 0.0) {
            return Err(Error::invalid("leaky slope must be ≥ 0"));
        }
        Ok(())
    }
}

/// One named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<ParamEntry>,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.layout.iter().find(|e| e.name == name)
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.entry(name).map(|e| &self.values[e.offset..e.offset + e.len])
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv {
        name: String,
        shape: ConvShape,
        w: usize,
        b: usize,
    },
    Norm {
        name: String,
        channels: usize,
        gamma: usize,
        beta: usize,
    },
    Leaky {
        slope: f64,
    },
    Upsample {
        from: [usize; 3],
        to: [usize; 3],
    },
}

impl Layer {
    fn name(&self) -> String {
        match self {
            Layer::Conv { name, .. } | Layer::Norm { name, .. } => name.clone(),
            Layer::Leaky { slope } if *slope == 0.0 => "relu".into(),
            Layer::Leaky { .. } => "leaky_relu".into(),
            Layer::Upsample { to, .. } => format!("upsample_to_{}x{}x{}", to[0], to[1], to[2]),
        }
    }
}

/// Layer graph plus the spatial size table of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    /// Spatial dims of the input and after each encoder stage.
    pub stage_dims: Vec<[usize; 3]>,
    pub input_dims: [usize; 3],
    pub spec: AutoencoderSpec,
}

struct Builder {
    layers: Vec<Layer>,
    layout: Vec<ParamEntry>,
    len: usize,
}

impl Builder {
    fn alloc(&mut self, name: String, len: usize) -> usize {
        let offset = self.len;
        self.layout.push(ParamEntry { name, offset, len });
        self.len += len;
        offset
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) {
        let shape = ConvShape { cin, cout, k, stride };
        let w = self.alloc(format!("{name}.weight"), shape.weight_len());
        let b = self.alloc(format!("{name}.bias"), cout);
        self.layers.push(Layer::Conv {
            name: name.to_string(),
            shape,
            w,
            b,
        });
    }

    fn norm(&mut self, name: &str, channels: usize) {
        let gamma = self.alloc(format!("{name}.gamma"), channels);
        let beta = self.alloc(format!("{name}.beta"), channels);
        self.layers.push(Layer::Norm {
            name: name.to_string(),
            channels,
            gamma,
            beta,
        });
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, slope: f64) {
        self.conv(&format!("{name}.conv"), cin, cout, k, stride);
        self.norm(&format!("{name}.norm"), cout);
        self.layers.push(Layer::Leaky { slope });
    }
}

/// Builds the layer graph for `input_dims` and a seeded parameter vector:
/// convolution weights and biases `U(±1/√fan_in)`, norm scale 1, offset 0.
pub fn build_network(spec: &AutoencoderSpec, input_dims: [usize; 3]) -> Result<(ParamVector, Network)> {
    spec.validate()?;
    let k = spec.kernel;
    let slope = spec.leaky_slope;
    let mut dims = vec![input_dims];
    for _ in &spec.encoder_channels {
        let d = *dims.last().unwrap();
        if d.contains(&0) {
            return Err(Error::invalid(format!("spatial dims reached zero: {d:?}")));
        }
        dims.push(d.map(|n| n.div_ceil(2)));
    }
    if input_dims.contains(&0) {
        return Err(Error::invalid("input dims must be positive"));
    }
    // instance norm over one voxel discards its input
    if let Some(i) = dims.iter().position(|d| d.iter().product::<usize>() == 1) {
        return Err(Error::invalid(format!(
            "stage {i} of {input_dims:?} is a single voxel; use fewer encoder stages"
        )));
    }

    let mut b = Builder {
        layers: Vec::new(),
        layout: Vec::new(),
        len: 0,
    };
    let chans = &spec.encoder_channels;
    let mut cin = 1;
    for (i, &c) in chans.iter().enumerate() {
        b.block(&format!("enc{i}.down"), cin, c, k, 2, slope);
        b.block(&format!("enc{i}.same"), c, c, k, 1, slope);
        cin = c;
    }
    for i in (0..chans.len()).rev() {
        let cout = if i > 0 { chans[i - 1] } else { chans[0] };
        b.layers.push(Layer::Upsample {
            from: dims[i + 1],
            to: dims[i],
        });
        b.block(&format!("dec{i}.up"), cin, cout, k, 1, slope);
        b.block(&format!("dec{i}.same"), cout, cout, k, 1, slope);
        cin = cout;
    }
    b.conv("out", cin, 1, 1, 1);
    b.layers.push(Layer::Leaky { slope: 0.0 });

    let mut values = vec![0.0; b.len];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for layer in &b.layers {
        match layer {
            Layer::Conv { shape, w, b: bo, .. } => {
                let bound = 1.0 / ((shape.cin * shape.k.pow(3)) as f64).sqrt();
                for v in &mut values[*w..*w + shape.weight_len()] {
                    *v = rng.random_range(-bound..bound);
                }
                for v in &mut values[*bo..*bo + shape.cout] {
                    *v = rng.random_range(-bound..bound);
                }
            }
            Layer::Norm { channels, gamma, .. } => {
                values[*gamma..*gamma + channels].fill(1.0);
            }
            _ => {}
        }
    }
    let net = Network {
        layers: b.layers,
        stage_dims: dims,
        input_dims,
        spec: spec.clone(),
    };
    Ok((
        ParamVector {
            values,
            layout: b.layout,
        },
        net,
    ))
}

impl Network {
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv { shape, .. } => shape.weight_len() + shape.cout,
                Layer::Norm { channels, .. } => 2 * channels,
                _ => 0,
            })
            .sum()
    }

    fn check_input(&self, theta: &[f64], z: &Tensor4) -> Result<()> {
        if z.channels != 1 || z.dims() != self.input_dims {
            return Err(Error::invalid(format!(
                "network input must be (1, {:?}), got ({}, {:?})",
                self.input_dims,
                z.channels,
                z.dims()
            )));
        }
        if theta.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, network needs {}",
                theta.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    fn apply(&self, layer: &Layer, theta: &[f64], x: &Tensor4) -> Tensor4 {
        match layer {
            Layer::Conv { shape, w, b, .. } => conv_forward(
                x,
                *shape,
                &theta[*w..*w + shape.weight_len()],
                &theta[*b..*b + shape.cout],
            ),
            Layer::Norm {
                channels, gamma, beta, ..
            } => norm_forward(x, &theta[*gamma..*gamma + channels], &theta[*beta..*beta + channels]),
            Layer::Leaky { slope } => leaky_forward(x, *slope),
            Layer::Upsample { to, .. } => upsample_forward(x, *to),
        }
    }

    /// Runs the network, keeping every layer input for the backward pass.
    fn forward_cached(&self, theta: &[f64], z: &Tensor4) -> Result<Vec<Tensor4>> {
        self.check_input(theta, z)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(z.clone());
        for layer in &self.layers {
            let out = self.apply(layer, theta, acts.last().unwrap());
            if !out.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("forward through layer {}", layer.name()),
                    iteration: 0,
                });
            }
            acts.push(out);
        }
        Ok(acts)
    }

    /// `φ_θ(z)`, a single-channel tensor with the input's spatial size.
    pub fn forward(&self, theta: &ParamVector, z: &Tensor4) -> Result<Tensor4> {
        Ok(self.forward_cached(&theta.values, z)?.pop().unwrap())
    }

    /// Sign of every rectifier input (`true` where negative). Two parameter
    /// vectors with equal patterns lie on the same smooth piece of the network.
    pub fn activation_pattern(&self, theta: &[f64], z: &Tensor4) -> Result<Vec<bool>> {
        let acts = self.forward_cached(theta, z)?;
        Ok(self
            .layers
            .iter()
            .zip(&acts)
            .filter(|(l, _)| matches!(l, Layer::Leaky { .. }))
            .flat_map(|(_, x)| x.values.iter().map(|v| *v < 0.0))
            .collect())
    }

    /// Back-propagates `d_out` (gradient w.r.t. the network output).
    fn backward(&self, theta: &[f64], acts: &[Tensor4], d_out: Tensor4) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; theta.len()];
        let mut d = d_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts[i];
            d = match layer {
                Layer::Conv { shape, w, b, .. } => {
                    let (gw_all, gb_all) = grad.split_at_mut(*b);
                    let gw = &mut gw_all[*w..*w + shape.weight_len()];
                    let gb = &mut gb_all[..shape.cout];
                    conv_backward(x, *shape, &theta[*w..*w + shape.weight_len()], &d, gw, gb)
                }
                Layer::Norm {
                    channels, gamma, beta, ..
                } => {
                    let (gg_all, gbeta_all) = grad.split_at_mut(*beta);
                    norm_backward(
                        x,
                        &theta[*gamma..*gamma + channels],
                        &d,
                        &mut gg_all[*gamma..*gamma + channels],
                        &mut gbeta_all[..*channels],
                    )
                }
                Layer::Leaky { slope } => leaky_backward(x, *slope, &d),
                Layer::Upsample { from, .. } => upsample_backward(*from, &d),
            };
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("backward through layer {}", layer.name()),
                    iteration: 0,
                });
            }
        }
        Ok(grad)
    }
}

/// `‖A φ_θ(z) − y‖_p^p` and its gradient in `θ`; `sign(0) = 0` for `p = 1`.
pub fn grad_theta(
    net: &Network,
    theta: &ParamVector,
    z: &Tensor4,
    sys: &ProcessedSystem,
    fidelity_p: u32,
) -> Result<(f64, Vec<f64>)> {
    if fidelity_p != 1 && fidelity_p != 2 {
        return Err(Error::invalid(format!("fidelity_p must be 1 or 2, got {fidelity_p}")));
    }
    if sys.grid.shape != net.input_dims {
        return Err(Error::invalid(format!(
            "system grid {:?} does not match network input {:?}",
            sys.grid.shape, net.input_dims
        )));
    }
    let acts = net.forward_cached(&theta.values, z)?;
    let out = acts.last().unwrap();
    let mut r = sys.a.matvec(&out.values)?;
    for (ri, yi) in r.iter_mut().zip(&sys.y) {
        *ri -= yi;
    }
    let loss = if fidelity_p == 1 {
        let l = r.iter().map(|v| v.abs()).sum();
        r.iter_mut().for_each(|v| *v = sign(*v));
        l
    } else {
        let l = r.iter().map(|v| v * v).sum();
        r.iter_mut().for_each(|v| *v *= 2.0);
        l
    };
    let d_out = Tensor4::from_values(1, net.input_dims, sys.a.matvec_t(&r)?)?;
    let grad = net.backward(&theta.values, &acts, d_out)?;
    Ok((loss, grad))
}

/// Loss only, `‖A φ_θ(z) − y‖_p^p`.
pub fn dip_loss(net: &Network, theta: &[f64], z: &Tensor4, sys: &ProcessedSystem, fidelity_p: u32) -> Result<f64> {
    let out = net.forward_cached(theta, z)?.pop().unwrap();
    let ax = sys.a.matvec(&out.values)?;
    Ok(ax
        .iter()
        .zip(&sys.y)
        .map(|(a, y)| {
            if fidelity_p == 1 {
                (a - y).abs()
            } else {
                (a - y) * (a - y)
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_dims_follow_ceil_halving() {
        let (_, net) = build_network(&AutoencoderSpec::with_channels(&[2, 2, 2], 0), [19; 3]).unwrap();
        assert_eq!(net.stage_dims, vec![[19; 3], [10; 3], [5; 3], [3; 3]]);
        let (_, net) = build_network(&AutoencoderSpec::with_channels(&[2], 0), [4; 3]).unwrap();
        assert_eq!(net.stage_dims, vec![[4; 3], [2; 3]]);
    }

    #[test]
    fn builds_are_seed_deterministic() {
        let s = AutoencoderSpec::with_channels(&[3, 4], 3);
        let (a, _) = build_network(&s, [5; 3]).unwrap();
        let (b, _) = build_network(&s, [5; 3]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), a.layout.iter().map(|e| e.len).sum::<usize>());
        assert_eq!(a.slice("enc0.down.norm.gamma").unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn default_spec_parameter_count() {
        let (p, net) = build_network(&AutoencoderSpec::default(), [19; 3]).unwrap();
        assert_eq!(p.len(), net.param_count());
        let conv = |ci: usize, co: usize| co * ci * 27 + co;
        let block = |ci: usize, co: usize| conv(ci, co) + 2 * co;
        let expected = block(1, 64)
            + block(64, 64)
            + block(64, 128)
            + block(128, 128)
            + block(128, 256)
            + block(256, 256)
            + block(256, 128)
            + block(128, 128)
            + block(128, 64)
            + block(64, 64)
            + block(64, 64)
            + block(64, 64)
            + (64 + 1);
        assert_eq!(p.len(), expected);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let (mut p, net) = build_network(&AutoencoderSpec::with_channels(&[2, 3], 1), [8; 3]).unwrap();
        p.values.fill(0.0);
        let z = Tensor4::from_values(1, [8; 3], vec![0.3; 512]).unwrap();
        let out = net.forward(&p, &z).unwrap();
        assert_eq!(out.dims(), [8; 3]);
        assert!(out.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let (p, net) = build_network(&AutoencoderSpec::with_channels(&[2], 1), [4; 3]).unwrap();
        let z = Tensor4::zeros(1, [5, 4, 4]);
        assert!(net.forward(&p, &z).is_err());
        assert!(build_network(
            &AutoencoderSpec {
                kernel: 2,
                ..AutoencoderSpec::default()
            },
            [4; 3]
        )
        .is_err());
        assert!(build_network(&AutoencoderSpec::with_channels(&[2, 2, 2], 1), [5; 3]).is_err());
    }
}
