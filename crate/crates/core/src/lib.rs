//! Spatio-temporal Richards growth model for weekly regional counts.
//!
//! Numerical building blocks (`richards`, `graph`, `gmrf`, `model`) are
//! generic over [`Real`]; the sampler and the evaluation tools run in `f64`
//! and the aliases below name the concrete types they use.

pub mod datapipe;
pub mod error;
pub mod gmrf;
pub mod graph;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod plot;
pub mod richards;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Curve = richards::RichardsParams<f64>;
pub type Graph = graph::SpatialGraph<f64>;
pub type Params = model::ParamBlock<f64>;
pub type Model = model::Posterior<f64>;
