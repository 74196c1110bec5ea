//! Minimal sequential neural-network stack.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod weights;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckOptions, GradCheckReport};
pub use layers::{Layer, LayerKind, Param};
pub use loss::mse_loss;
pub use network::{Network, NetworkBuilder};
pub use tensor::{Scalar, Tensor};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights};
