//! Online implicit-surface estimation of unseen obstacles from contacts
//! inferred through nominal-dynamics error, with dataset refinement and a
//! sampling-based controller.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constraints;
pub mod contact;
pub mod control;
pub mod envs;
pub mod error;
pub mod gp;
pub mod gpis;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod normal;
pub mod refine;
pub mod scalar;
pub mod state;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Gpis64 = gpis::Gpis<f64>;
pub type Gpis32 = gpis::Gpis<f32>;
pub type GpModel64 = gp::GpModel<f64>;
pub type GpModel32 = gp::GpModel<f32>;
pub type KernelParams64 = gp::KernelParams<f64>;
pub type TrainingSet64 = gp::TrainingSet<f64>;
pub type StateSet64 = state::StateSet<f64>;
pub type DatasetPair64 = contact::DatasetPair<f64>;
