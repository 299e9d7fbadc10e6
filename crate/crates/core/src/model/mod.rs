//! The 1D CNN: configuration, construction, training and model files.

mod config;
mod network;
mod serialize;
mod train;

pub use config::{BatchNormPosition, LayerShape, NetworkConfig, Optimizer, Profile, TrainConfig};
pub use network::{argmax, build_network, forward_pass, predict, ForwardPass, Layer, Mode, NetworkParams, NetworkProbe};
pub use serialize::{deserialize_params, params_from_bytes, params_to_bytes, serialize_params, FORMAT_VERSION, MAGIC};
pub use train::{train, TrainHistory};
pub(crate) use train::{infer_all, to_maps};
