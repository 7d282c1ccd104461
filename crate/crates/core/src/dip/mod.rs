//! Deep image prior: a 3D convolutional autoencoder with reverse-mode
//! gradients, Adam fitting, and the norm-constrained homogeneous variant.

mod layers;
mod network;
mod reconstruct;
mod tensor;

pub use layers::{conv_out_len, ConvShape};
pub use network::{build_network, dip_loss, grad_theta, AutoencoderSpec, Network, ParamEntry, ParamVector};
pub use reconstruct::{
    dip_reconstruct, homogeneous_dip, homogeneous_map, sample_input, DipConfig, DEFAULT_DIP_ITERATIONS, DIP_LR_GRID,
    INPUT_HIGH,
};
pub use tensor::Tensor4;
