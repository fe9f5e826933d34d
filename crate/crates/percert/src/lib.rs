//! Certified robustness via randomized smoothing, with worst-class
//! repair through principal-eigenvalue regularization.

pub mod bound;
pub mod checkpoint;
pub mod cli;
pub mod confusion;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod musim;
pub mod nn;
pub mod rng;
pub mod smoothing;
pub mod train;

pub use bound::BoundDiagnostics;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use confusion::{ConfusionMatrix, GradientCoefficients, SingularTriple};
pub use data::{Dataset, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::{EvalReport, SigmaEval};
pub use matrix::Matrix;
pub use musim::{Generator, MuSimConfig, MuSimReport};
pub use nn::{LossKind, Network, TrainState};
pub use rng::RngStream;
pub use smoothing::{CertificationOutcome, SmoothingConfig};
pub use train::{EpochLog, PerTrainConfig, TrainMode};
