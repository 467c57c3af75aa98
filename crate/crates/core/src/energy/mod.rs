//! The scalar energy network and its hand-written reverse pass.
//!
//! `∇ₓE` is returned as one complex image `∂E/∂Re + i ∂E/∂Im`, which is the
//! steepest-ascent direction of a real function of a complex image.

mod checkpoint;
pub mod conv;
mod network;

pub use checkpoint::{config_from_header, config_header, params_from_container, params_to_tensors};
pub use network::{ConvParams, EnergyNetwork, InitConfig, NetConfig, Params, Tape, INPUT_CHANNELS};
