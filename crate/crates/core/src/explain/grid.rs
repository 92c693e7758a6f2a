use serde::{Deserialize, Serialize};

use crate::doe::{FactorSpec, Level};
use crate::error::{Error, Result};

/// Evaluation values for one factor, strictly ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    values: Vec<f64>,
}

impl Grid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("grid"));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "grid values must be finite and strictly ascending".into(),
            ));
        }
        Ok(Self { values })
    }

    /// The factor's five experimental levels.
    pub fn levels(factor: &FactorSpec) -> Self {
        Self {
            values: Level::ALL.iter().map(|&l| factor.level(l)).collect(),
        }
    }

    /// `n` evenly spaced points spanning the axial range.
    pub fn uniform(factor: &FactorSpec, n: usize) -> Result<Self> {
        let (lo, hi) = (factor.axial_low(), factor.axial_high());
        match n {
            0 => Err(Error::Empty("grid")),
            1 => Self::new(vec![factor.centre()]),
            _ => Self::new((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Error unless every value lies in the factor's axial range.
    pub fn check_within(&self, factor: &FactorSpec) -> Result<()> {
        match self.values.iter().find(|v| !factor.contains(**v)) {
            Some(&value) => Err(Error::OutOfRange {
                factor: factor.name.clone(),
                value,
                low: factor.axial_low(),
                high: factor.axial_high(),
            }),
            None => Ok(()),
        }
    }
}

/// Level grids for every factor.
pub fn default_grids(factors: &[FactorSpec]) -> Vec<Grid> {
    factors.iter().map(Grid::levels).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::table3_factors;

    #[test]
    fn level_grid_is_ascending_and_in_range() {
        for f in table3_factors() {
            let g = Grid::levels(&f);
            assert_eq!(g.len(), 5);
            g.check_within(&f).unwrap();
            assert!(g.values().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn uniform_grid_spans_axial_range() {
        let f = &table3_factors()[2];
        let g = Grid::uniform(f, 11).unwrap();
        assert_eq!(g.values()[0], 250.0);
        assert_eq!(*g.values().last().unwrap(), 550.0);
        g.check_within(f).unwrap();
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(vec![]).is_err());
        assert!(Grid::new(vec![1.0, 1.0]).is_err());
        assert!(Grid::new(vec![2.0, 1.0]).is_err());
        let f = &table3_factors()[0];
        assert!(Grid::new(vec![0.0]).unwrap().check_within(f).is_err());
    }
}
