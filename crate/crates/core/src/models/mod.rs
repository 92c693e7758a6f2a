//! Black-box regressors behind the [`Predictor`] contract, their training
//! entry points, persistence and error metrics.

pub mod forest;
pub mod lbfgs;
pub mod metrics;
pub mod network;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, ForestModel, ForestParams, Tree};
pub use metrics::{compute_metrics, MetricsReport};
pub use network::{fit_network, NetworkModel, NetworkParams, Standardizer, TargetScale};

use crate::doe::{Dataset, Response};
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::seed;

pub const MODEL_SCHEMA: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Network,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" | "rf" => Ok(ModelKind::Forest),
            "network" | "mlp" => Ok(ModelKind::Network),
            other => Err(Error::InvalidParameter(format!("unknown model kind `{other}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Forest => "forest",
            ModelKind::Network => "network",
        })
    }
}

/// Model family plus hyperparameters; enough to retrain from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Forest(ForestParams),
    Network(NetworkParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
            ModelKind::Network => ModelSpec::Network(NetworkParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Network(_) => ModelKind::Network,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Forest(p) => p.seed,
            ModelSpec::Network(p) => p.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ModelSpec::Forest(p) => ModelSpec::Forest(ForestParams { seed, ..*p }),
            ModelSpec::Network(p) => ModelSpec::Network(NetworkParams { seed, ..p.clone() }),
        }
    }

    /// Fit on the training split (the network also uses the validation split
    /// to pick its best iterate). A stagnated network is reseeded up to
    /// `retries` times before the error is returned.
    pub fn fit(&self, train: &Dataset, val: &Dataset, response: Response) -> Result<TrainedModel> {
        let y = train.response(response)?;
        match self {
            ModelSpec::Forest(p) => Ok(TrainedModel::Forest(fit_forest(train.points(), y, p)?)),
            ModelSpec::Network(p) => {
                let yv = val.response(response)?;
                let mut attempt = p.clone();
                for retry in 0..=p.retries {
                    match fit_network(train.points(), y, val.points(), yv, &attempt) {
                        Err(Error::Stagnated { .. }) if retry < p.retries => {
                            attempt.seed = seed::derive_str(p.seed, &format!("retry-{}", retry + 1));
                        }
                        other => return other.map(TrainedModel::Network),
                    }
                }
                unreachable!("loop returns on the final attempt")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Forest(ForestModel),
    Network(NetworkModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Network(_) => ModelKind::Network,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrainedModel::Forest(m) => m.validate(),
            TrainedModel::Network(m) => m.validate(),
        }
    }
}

impl Predictor for TrainedModel {
    fn n_features(&self) -> usize {
        match self {
            TrainedModel::Forest(m) => m.n_features(),
            TrainedModel::Network(m) => m.n_features(),
        }
    }

    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        match self {
            TrainedModel::Forest(m) => m.predict(rows),
            TrainedModel::Network(m) => m.predict(rows),
        }
    }
}

/// On-disk model: schema version, response, factor names, the model itself,
/// its training spec and the resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: u64,
    pub kind: ModelKind,
    pub response: Response,
    pub factors: Vec<String>,
    pub spec: ModelSpec,
    pub model: TrainedModel,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl ModelFile {
    pub fn new(response: Response, factors: Vec<String>, spec: ModelSpec, model: TrainedModel) -> Self {
        Self {
            schema: MODEL_SCHEMA,
            kind: model.kind(),
            response,
            factors,
            spec,
            model,
            config: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let schema = value.get("schema").and_then(|v| v.as_u64()).unwrap_or(0);
        if schema != MODEL_SCHEMA {
            return Err(Error::Schema {
                found: schema,
                expected: MODEL_SCHEMA,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        if file.kind != file.model.kind() || file.kind != file.spec.kind() {
            return Err(Error::Format("model kind disagrees with its payload".into()));
        }
        file.model.validate()?;
        Ok(file)
    }
}
