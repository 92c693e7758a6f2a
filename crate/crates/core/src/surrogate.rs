//! Synthetic ground-truth process: quadratic response surfaces in coded units
//! with pairwise interactions and Gaussian cycle noise.
//!
//! For each response `r` and coded settings `z` (axial range mapped to [-1, 1]):
//!
//! ```text
//! r(z) = base + Σ main_j z_j + Σ quad_j z_j² + Σ inter_jk z_j z_k
//! ```

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::{Dataset, Design, FactorSpec, Response};
use crate::error::{Error, Result};
use crate::seed;

pub const PARAMS_SCHEMA: u64 = 1;

/// Calibrated default parameters (see `xmold calibrate`).
pub const DEFAULT_PARAMS_JSON: &str = include_str!("../data/surrogate_default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub factors: [String; 2],
    pub coeff: f64,
}

/// Polynomial coefficients for one response channel, keyed by factor name.
/// Factors missing from `main` or `quad` have a zero coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams {
    pub base: f64,
    pub main: BTreeMap<String, f64>,
    #[serde(default)]
    pub quad: BTreeMap<String, f64>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    pub noise_sd: f64,
}

impl SurfaceParams {
    pub fn interaction(&self, a: &str, b: &str) -> f64 {
        self.interactions
            .iter()
            .filter(|i| (i.factors[0] == a && i.factors[1] == b) || (i.factors[0] == b && i.factors[1] == a))
            .map(|i| i.coeff)
            .sum()
    }

    pub fn set_interaction(&mut self, a: &str, b: &str, coeff: f64) {
        self.interactions
            .retain(|i| !((i.factors[0] == a && i.factors[1] == b) || (i.factors[0] == b && i.factors[1] == a)));
        self.interactions.push(Interaction {
            factors: [a.to_string(), b.to_string()],
            coeff,
        });
    }
}

/// Parameter file: one surface per response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub schema: u64,
    pub weight: SurfaceParams,
    pub planarity: SurfaceParams,
}

impl SurrogateParams {
    pub fn from_json(json: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            schema: u64,
        }
        let probe: Probe = serde_json::from_str(json)?;
        if probe.schema != PARAMS_SCHEMA {
            return Err(Error::Schema {
                found: probe.schema,
                expected: PARAMS_SCHEMA,
            });
        }
        Ok(serde_json::from_str(json)?)
    }

    pub fn default_params() -> Self {
        Self::from_json(DEFAULT_PARAMS_JSON).expect("bundled surrogate parameters are valid")
    }

    pub fn surface(&self, response: Response) -> &SurfaceParams {
        match response {
            Response::Weight => &self.weight,
            Response::Planarity => &self.planarity,
        }
    }

    pub fn surface_mut(&mut self, response: Response) -> &mut SurfaceParams {
        match response {
            Response::Weight => &mut self.weight,
            Response::Planarity => &mut self.planarity,
        }
    }
}

#[derive(Debug, Clone)]
struct Surface {
    base: f64,
    main: Vec<f64>,
    quad: Vec<f64>,
    inter: Vec<(usize, usize, f64)>,
    noise_sd: f64,
}

impl Surface {
    fn compile(p: &SurfaceParams, factors: &[FactorSpec]) -> Result<Self> {
        let index = |name: &str| {
            factors
                .iter()
                .position(|f| f.name == name)
                .ok_or_else(|| Error::InvalidParams(format!("unknown factor `{name}`")))
        };
        let per_factor = |map: &BTreeMap<String, f64>| -> Result<Vec<f64>> {
            let mut v = vec![0.0; factors.len()];
            for (name, c) in map {
                v[index(name)?] = *c;
            }
            Ok(v)
        };
        if !(p.noise_sd >= 0.0 && p.noise_sd.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise_sd must be >= 0, got {}",
                p.noise_sd
            )));
        }
        let mut inter = Vec::with_capacity(p.interactions.len());
        for i in &p.interactions {
            let (a, b) = (index(&i.factors[0])?, index(&i.factors[1])?);
            if a == b {
                return Err(Error::InvalidParams(format!(
                    "interaction of `{}` with itself; use quad",
                    i.factors[0]
                )));
            }
            inter.push((a, b, i.coeff));
        }
        Ok(Surface {
            base: p.base,
            main: per_factor(&p.main)?,
            quad: per_factor(&p.quad)?,
            inter,
            noise_sd: p.noise_sd,
        })
    }

    fn eval(&self, z: &[f64]) -> f64 {
        let mut y = self.base;
        for ((m, q), zj) in self.main.iter().zip(&self.quad).zip(z) {
            y += m * zj + q * zj * zj;
        }
        for &(a, b, c) in &self.inter {
            y += c * z[a] * z[b];
        }
        y
    }
}

/// Surrogate parameters bound to a concrete factor list.
#[derive(Debug, Clone)]
pub struct Surrogate {
    factors: Vec<FactorSpec>,
    params: SurrogateParams,
    weight: Surface,
    planarity: Surface,
}

impl Surrogate {
    pub fn new(factors: &[FactorSpec], params: SurrogateParams) -> Result<Self> {
        if params.schema != PARAMS_SCHEMA {
            return Err(Error::Schema {
                found: params.schema,
                expected: PARAMS_SCHEMA,
            });
        }
        Ok(Self {
            factors: factors.to_vec(),
            weight: Surface::compile(&params.weight, factors)?,
            planarity: Surface::compile(&params.planarity, factors)?,
            params,
        })
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    fn surface(&self, response: Response) -> &Surface {
        match response {
            Response::Weight => &self.weight,
            Response::Planarity => &self.planarity,
        }
    }

    fn coded(&self, settings: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if settings.len() != self.factors.len() {
            return Err(Error::FeatureCount {
                expected: self.factors.len(),
                got: settings.len(),
            });
        }
        settings
            .iter()
            .zip(&self.factors)
            .map(|(&v, f)| {
                if f.contains(v) {
                    Ok(f.coded(v))
                } else {
                    Err(Error::OutOfRange {
                        factor: f.name.clone(),
                        value: v,
                        low: f.axial_low(),
                        high: f.axial_high(),
                    })
                }
            })
            .collect()
    }

    /// Noise-free response at one settings row.
    pub fn response(&self, response: Response, settings: ArrayView1<'_, f64>) -> Result<f64> {
        let z = self.coded(settings)?;
        Ok(self.surface(response).eval(&z))
    }

    /// Noise-free part weight in grams.
    pub fn weight_response(&self, settings: ArrayView1<'_, f64>) -> Result<f64> {
        self.response(Response::Weight, settings)
    }

    /// Noise-free planarity deviation in millimetres.
    pub fn planarity_response(&self, settings: ArrayView1<'_, f64>) -> Result<f64> {
        self.response(Response::Planarity, settings)
    }

    /// Settings row with every factor at its centre level.
    pub fn centre_row(&self) -> Vec<f64> {
        self.factors.iter().map(FactorSpec::centre).collect()
    }

    /// Evaluate both responses over a design and add Gaussian cycle noise.
    /// Noise for row `r` comes from its own ChaCha stream, so the result does
    /// not depend on evaluation order.
    pub fn simulate(&self, design: &Design, seed: u64) -> Result<Dataset> {
        if design.factors != self.factors {
            return Err(Error::InvalidParams(
                "design factors differ from surrogate factors".into(),
            ));
        }
        let mut responses = BTreeMap::new();
        for response in Response::ALL {
            let surface = self.surface(response);
            let stream_seed = seed::derive_str(seed, response.column());
            let values = (0..design.n_rows())
                .into_par_iter()
                .map(|r| {
                    let clean = self.response(response, design.points.row(r))?;
                    let mut rng = seed::rng(stream_seed);
                    rng.set_stream(r as u64);
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    Ok(clean + surface.noise_sd * eps)
                })
                .collect::<Result<Vec<f64>>>()?;
            responses.insert(response, values);
        }
        Ok(Dataset {
            design: design.clone(),
            responses,
        })
    }
}

/// One interaction effect read off a step plot: the change in `response` when
/// `stepped` moves between two values while `held` is fixed and every other
/// factor sits at its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectTarget {
    pub stepped: &'static str,
    pub from: f64,
    pub to: f64,
    pub held: &'static str,
    pub held_value: f64,
    pub delta: f64,
}

/// Weight effect sizes the default parameters are calibrated to.
pub const WEIGHT_EFFECT_TARGETS: [EffectTarget; 4] = [
    EffectTarget {
        stepped: "packing_pressure",
        from: 346.97,
        to: 453.03,
        held: "melt_temperature",
        held_value: 220.0,
        delta: 0.12,
    },
    EffectTarget {
        stepped: "packing_pressure",
        from: 346.97,
        to: 453.03,
        held: "melt_temperature",
        held_value: 247.07,
        delta: 0.05,
    },
    EffectTarget {
        stepped: "packing_time",
        from: 1.025,
        to: 3.025,
        held: "melt_temperature",
        held_value: 240.0,
        delta: 0.49,
    },
    EffectTarget {
        stepped: "packing_time",
        from: 1.025,
        to: 3.025,
        held: "melt_temperature",
        held_value: 247.07,
        delta: 0.25,
    },
];

/// Relative tolerance on [`WEIGHT_EFFECT_TARGETS`].
pub const EFFECT_TOLERANCE: f64 = 0.25;

impl EffectTarget {
    /// The two settings rows (before, after) of the step.
    pub fn rows(&self, factors: &[FactorSpec]) -> Result<(Vec<f64>, Vec<f64>)> {
        let find = |name: &str| {
            factors
                .iter()
                .position(|f| f.name == name)
                .ok_or_else(|| Error::InvalidParams(format!("unknown factor `{name}`")))
        };
        let (s, h) = (find(self.stepped)?, find(self.held)?);
        let mut before: Vec<f64> = factors.iter().map(FactorSpec::centre).collect();
        before[h] = self.held_value;
        let mut after = before.clone();
        before[s] = self.from;
        after[s] = self.to;
        Ok((before, after))
    }

    /// Relative deviation of an observed delta from the target.
    pub fn relative_error(&self, observed: f64) -> f64 {
        (observed - self.delta) / self.delta
    }
}
