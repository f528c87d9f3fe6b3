//! Binarized single-spike spiking neural networks.
//!
//! Images are latency coded (one spike per pixel), propagated through layers
//! of non-leaky integrate-and-fire neurons whose synapses are `+1` or `-1`
//! scaled by one factor per layer, and classified by the first output neuron
//! to fire. Training keeps real-valued proxy weights whose signs are the
//! binary synapses and updates them by temporal error backpropagation.

pub mod data;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod learning;
pub mod network;
pub mod persistence;

pub use data::{load_dataset, make_dataset, LabeledDataset};
pub use encoding::{add_jitter_noise, encode_image, IntensityImage, SpikeTimes};
pub use error::{Error, Result};
pub use evaluation::{evaluate, EvalReport};
pub use learning::{fit, init_network, train_step, Preset, TrainConfig};
pub use network::{classify, network_forward, predict, Decision, ForwardTrace, Layer, Mode, Network};
pub use persistence::{load_model, save_model};
