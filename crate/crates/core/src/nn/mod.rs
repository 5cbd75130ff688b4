//! Minimal differentiable building blocks shared by the classifier heads and
//! the trainable encoder.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;

pub use graph::{Activation, Graph, Mat, Var};
pub use layers::{Dense, LayerNorm, Mlp};
pub use optim::Adam;
pub use params::{ParamGrads, ParamId, ParamShape, ParamStore};
