//! The denoising generator: transformer reconstruction followed by
//! multi-stage DCT-space graph-convolution refinement.

mod config;
mod network;
mod params;

pub use config::{GeneratorConfig, RefinementConfig, TransformerConfig};
pub use network::{
    gcn_block, sinusoidal_embedding, Activation, GcnBlockSpec, GcnWeights, Generator, Mode,
};
pub use params::{init_params, param_shapes, BoundParams, GeneratorParams};
