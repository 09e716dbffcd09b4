//! Value-and-gradient engine for plain MLP chains.

pub mod adam;
pub mod loss;
pub mod mlp;
pub mod snapshot;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use loss::{
    effective_sigma, gaussian_nll, gaussian_nll_sigma, gaussian_nll_with_grad,
    scaled_gaussian_nll_with_grad, sigmoid, softplus, softplus_inverse, NllGrad, SIGMA_FLOOR,
};
pub use mlp::{
    backward, mlp_forward, mlp_forward_recorded, Activation, ForwardRecord, GradientVector,
    LayerSpec, Mlp, MlpSpec, ParameterVector,
};

/// Global-norm clip applied before every optimizer step.
pub const GRAD_CLIP_NORM: f64 = 10.0;
