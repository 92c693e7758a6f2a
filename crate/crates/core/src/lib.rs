//! Desk-scale root-cause attribution for injection-moulding quality data.
//!
//! The pipeline runs from a central composite design ([`doe`]) through a
//! synthetic process response ([`surrogate`]) and two black-box regressors
//! ([`models`]) to model-agnostic explainers ([`explain`]) and the
//! controlled perturbation experiments that score them ([`cause`]).

pub mod calibration;
pub mod cause;
pub mod doe;
pub mod error;
pub mod explain;
pub mod models;
pub mod predictor;
pub mod seed;
pub mod surrogate;

pub use cause::{CauseReport, ExperimentConfig, ImpactVector, Method};
pub use doe::{Dataset, Design, FactorSpec, Level, Response, Split};
pub use error::{Error, Result};
pub use models::{ModelFile, ModelKind, ModelSpec, TrainedModel};
pub use predictor::Predictor;
pub use surrogate::{Surrogate, SurrogateParams};
