//! Affine LPV embedding of nonlinear state-space models and reduction of the
//! scheduling dimension by PCA and by a learned encoder/decoder network.

pub mod config;
pub mod container;
pub mod dnn;
pub mod error;
pub mod lpv;
pub mod metrics;
pub mod model;
pub mod pca;
pub mod pipeline;
pub mod region;
pub mod sim;

pub use error::{LpvError, Result};
