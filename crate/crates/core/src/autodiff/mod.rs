//! A small reverse-mode differentiation engine and the toy networks built on it.
//!
//! The engine is generic over the element type: training runs in `f32`,
//! while the same code instantiated at `f64` gives finite-difference checks
//! enough headroom to be meaningful.

mod checkpoint;
mod graph;
mod nets;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, StoredTensor, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use graph::{NodeId, ValueGraph, INSTANCE_NORM_EPS};
pub use nets::{
    build_toy_base, build_toy_refiner, image_tensor, refiner_input, to_logit_map, NetKind, NetOutputs, ToyNet,
    ToyNetConfig, MAX_CHANNELS, MAX_DEPTH, MIN_INPUT_SIZE,
};
pub use params::{Adam, AdamConfig, ParamId, ParamStore, INIT_GAIN};
pub use tensor::{Scalar, Tensor};
