//! Central composite designs over the machine settings, replication into
//! product cycles, stratified splitting and the dataset CSV format.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Relative tolerance used when matching a setting value to a level.
const LEVEL_TOL: f64 = 1e-9;

/// Default factor file: the six machine settings and their five experiment levels.
pub const TABLE3_FACTORS_JSON: &str = include_str!("../data/factors_table3.json");

/// Position of a value among a factor's five experiment levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    AxialLow,
    FactorialLow,
    Centre,
    FactorialHigh,
    AxialHigh,
}

impl Level {
    pub const ALL: [Level; 5] = [
        Level::AxialLow,
        Level::FactorialLow,
        Level::Centre,
        Level::FactorialHigh,
        Level::AxialHigh,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Plot glyph for the level.
    pub fn glyph(self) -> char {
        match self {
            Level::AxialHigh => '⇑',
            Level::FactorialHigh => '↑',
            Level::Centre => '−',
            Level::FactorialLow => '↓',
            Level::AxialLow => '⇓',
        }
    }

    /// ASCII fallback for [`Level::glyph`].
    pub fn ascii(self) -> &'static str {
        match self {
            Level::AxialHigh => "HH",
            Level::FactorialHigh => "H",
            Level::Centre => "M",
            Level::FactorialLow => "L",
            Level::AxialLow => "LL",
        }
    }
}

/// One machine setting and its five experiment levels, ascending:
/// axial-low, factorial-low, centre, factorial-high, axial-high.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub unit: String,
    pub levels: [f64; 5],
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, levels: [f64; 5]) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            unit: unit.into(),
            levels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidFactor {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(invalid("name must be a non-empty identifier"));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(invalid("levels must be finite"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("levels must be strictly ascending"));
        }
        let mid = 0.5 * (self.levels[0] + self.levels[4]);
        if (self.levels[2] - mid).abs() > LEVEL_TOL * mid.abs().max(1.0) {
            return Err(invalid("centre level must be the midpoint of the axial levels"));
        }
        Ok(())
    }

    pub fn level(&self, level: Level) -> f64 {
        self.levels[level.index()]
    }

    pub fn axial_low(&self) -> f64 {
        self.levels[0]
    }

    pub fn axial_high(&self) -> f64 {
        self.levels[4]
    }

    pub fn centre(&self) -> f64 {
        self.levels[2]
    }

    /// Half-width of the axial range; one coded unit.
    pub fn half_range(&self) -> f64 {
        0.5 * (self.levels[4] - self.levels[0])
    }

    /// Affine map of the axial range onto [-1, 1].
    pub fn coded(&self, value: f64) -> f64 {
        (value - self.centre()) / self.half_range()
    }

    pub fn uncoded(&self, z: f64) -> f64 {
        self.centre() + z * self.half_range()
    }

    pub fn contains(&self, value: f64) -> bool {
        let tol = LEVEL_TOL * self.half_range().max(1.0);
        value >= self.axial_low() - tol && value <= self.axial_high() + tol
    }

    /// Which level `value` sits at, if any.
    pub fn level_of(&self, value: f64) -> Option<Level> {
        let tol = LEVEL_TOL * self.half_range().max(1.0);
        Level::ALL.into_iter().find(|l| (self.level(*l) - value).abs() <= tol)
    }
}

/// The six Table-3 machine settings.
pub fn table3_factors() -> Vec<FactorSpec> {
    parse_factors(TABLE3_FACTORS_JSON).expect("bundled factor file is valid")
}

/// Parse and validate a JSON factor list.
pub fn parse_factors(json: &str) -> Result<Vec<FactorSpec>> {
    let factors: Vec<FactorSpec> = serde_json::from_str(json)?;
    check_factors(&factors)?;
    Ok(factors)
}

fn check_factors(factors: &[FactorSpec]) -> Result<()> {
    if !(2..=10).contains(&factors.len()) {
        return Err(Error::FactorCount(factors.len()));
    }
    let mut seen = HashSet::new();
    for f in factors {
        f.validate()?;
        if !seen.insert(f.name.as_str()) {
            return Err(Error::DuplicateFactor(f.name.clone()));
        }
    }
    Ok(())
}

/// Where the factorial and axial runs are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CcdMode {
    /// Factorial runs at the inner levels, axial runs at the extreme levels.
    #[default]
    Table3,
    /// Three-level variant: factorial and axial runs both at the extreme levels.
    FaceCentred,
}

impl FromStr for CcdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table3" => Ok(CcdMode::Table3),
            "face-centred" | "face-centered" => Ok(CcdMode::FaceCentred),
            other => Err(Error::InvalidParameter(format!("unknown CCD mode `{other}`"))),
        }
    }
}

impl fmt::Display for CcdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CcdMode::Table3 => "table3",
            CcdMode::FaceCentred => "face-centred",
        })
    }
}

/// Rows of machine settings, each tagged with its setting combination and the
/// product cycle it was run in.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub factors: Vec<FactorSpec>,
    pub points: Array2<f64>,
    pub combination_id: Vec<u32>,
    pub cycle_index: Vec<u32>,
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.points.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn unique_combinations(&self) -> usize {
        self.combination_id.iter().collect::<HashSet<_>>().len()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    fn select(&self, rows: &[usize]) -> Design {
        Design {
            factors: self.factors.clone(),
            points: self.points.select(Axis(0), rows),
            combination_id: rows.iter().map(|&r| self.combination_id[r]).collect(),
            cycle_index: rows.iter().map(|&r| self.cycle_index[r]).collect(),
        }
    }
}

/// Build the central composite design: 2^k factorial points, 2k axial points
/// and one centre point, in that order.
pub fn build_ccd(factors: &[FactorSpec], mode: CcdMode) -> Result<Design> {
    check_factors(factors)?;
    let k = factors.len();
    let (lo, hi) = match mode {
        CcdMode::Table3 => (Level::FactorialLow, Level::FactorialHigh),
        CcdMode::FaceCentred => (Level::AxialLow, Level::AxialHigh),
    };
    let n = (1usize << k) + 2 * k + 1;
    let mut points = Array2::zeros((n, k));
    for corner in 0..(1usize << k) {
        for (j, f) in factors.iter().enumerate() {
            let level = if corner >> j & 1 == 1 { hi } else { lo };
            points[[corner, j]] = f.level(level);
        }
    }
    let centre: Vec<f64> = factors.iter().map(FactorSpec::centre).collect();
    for j in 0..k {
        for (s, level) in [Level::AxialLow, Level::AxialHigh].into_iter().enumerate() {
            let r = (1 << k) + 2 * j + s;
            for (c, v) in centre.iter().enumerate() {
                points[[r, c]] = *v;
            }
            points[[r, j]] = factors[j].level(level);
        }
    }
    for (c, v) in centre.iter().enumerate() {
        points[[n - 1, c]] = *v;
    }
    let ids: Vec<u32> = (0..n as u32).collect();
    Ok(Design {
        factors: factors.to_vec(),
        points,
        combination_id: ids.clone(),
        cycle_index: ids,
    })
}

/// Repeat every row `reps` times, shuffle into a seeded run order and number
/// the cycles along that order.
pub fn replicate(design: &Design, reps: usize, shuffle_seed: u64) -> Result<Design> {
    if reps == 0 {
        return Err(Error::InvalidParameter("replication count must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..design.n_rows())
        .flat_map(|r| std::iter::repeat_n(r, reps))
        .collect();
    order.shuffle(&mut seed::rng(seed::derive_str(shuffle_seed, "replicate")));
    let mut out = design.select(&order);
    out.cycle_index = (0..out.n_rows() as u32).collect();
    Ok(out)
}

/// Measured (or simulated) quality characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Weight,
    Planarity,
}

impl Response {
    pub const ALL: [Response; 2] = [Response::Weight, Response::Planarity];

    pub fn column(self) -> &'static str {
        match self {
            Response::Weight => "weight_g",
            Response::Planarity => "planarity_mm",
        }
    }
}

impl FromStr for Response {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight_g" | "weight" => Ok(Response::Weight),
            "planarity_mm" | "planarity" => Ok(Response::Planarity),
            other => Err(Error::InvalidParameter(format!("unknown response `{other}`"))),
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// A design plus measured responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub design: Design,
    pub responses: BTreeMap<Response, Vec<f64>>,
}

impl From<Design> for Dataset {
    fn from(design: Design) -> Self {
        Dataset {
            design,
            responses: BTreeMap::new(),
        }
    }
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.design.n_rows()
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.design.factors
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.design.points.view()
    }

    pub fn response(&self, response: Response) -> Result<&[f64]> {
        self.responses
            .get(&response)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidTrainingData(format!("dataset has no `{response}` column")))
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            design: self.design.select(rows),
            responses: self
                .responses
                .iter()
                .map(|(k, v)| (*k, rows.iter().map(|&r| v[r]).collect()))
                .collect(),
        }
    }
}

/// Train / validation / test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Row counts per split for one stratum, by largest remainder.
fn stratum_counts(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        // guard against 11.999999 style quotas
        *c = (q + 1e-9).floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Stratified random split by `combination_id`.
pub fn stratified_split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidFractions(format!(
            "all fractions must be positive, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(format!("fractions sum to {total}, not 1")));
    }
    let mut strata: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, id) in dataset.design.combination_id.iter().enumerate() {
        strata.entry(*id).or_default().push(row);
    }
    let mut rng = seed::rng(seed::derive_str(seed, "stratified-split"));
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (id, mut rows) in strata {
        if rows.len() < 3 {
            return Err(Error::StratumTooSmall {
                combination_id: id,
                rows: rows.len(),
                splits: 3,
            });
        }
        rows.shuffle(&mut rng);
        let counts = stratum_counts(rows.len(), &fractions);
        let mut it = rows.into_iter();
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend(it.by_ref().take(count));
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(Split {
        train: dataset.select(&train),
        val: dataset.select(&val),
        test: dataset.select(&test),
    })
}

/// Pearson correlation matrix over the columns of `points`.
pub fn correlation_matrix(points: ArrayView2<'_, f64>, names: &[String]) -> Result<Array2<f64>> {
    let (n, k) = points.dim();
    if n < 2 {
        return Err(Error::Empty("correlation needs at least two rows"));
    }
    let means = points.mean_axis(Axis(0)).expect("n >= 2");
    let centred = &points - &means;
    let cov = centred.t().dot(&centred);
    for j in 0..k {
        if cov[[j, j]] <= 0.0 {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("column {j}"));
            return Err(Error::ZeroVariance(name));
        }
    }
    let mut r = Array2::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            r[[a, b]] = if a == b {
                1.0
            } else {
                cov[[a, b]] / (cov[[a, a]] * cov[[b, b]]).sqrt()
            };
        }
    }
    Ok(r)
}

/// Pearson correlation among the setting columns of a design.
pub fn design_correlation(design: &Design) -> Result<Array2<f64>> {
    let names: Vec<String> = design.factors.iter().map(|f| f.name.clone()).collect();
    correlation_matrix(design.points.view(), &names)
}

/// Write a dataset as CSV: factor columns, responses present, then ids.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header: Vec<&str> = dataset.factors().iter().map(|f| f.name.as_str()).collect();
    let responses: Vec<(&Response, &Vec<f64>)> = dataset.responses.iter().collect();
    header.extend(responses.iter().map(|(r, _)| r.column()));
    header.extend(["combination_id", "cycle_index"]);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for row in 0..dataset.n_rows() {
        record.clear();
        record.extend(dataset.design.points.row(row).iter().map(|v| v.to_string()));
        record.extend(responses.iter().map(|(_, vals)| vals[row].to_string()));
        record.push(dataset.design.combination_id[row].to_string());
        record.push(dataset.design.cycle_index[row].to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset CSV written by [`write_csv`]. The factor columns must match
/// `factors` by name and order.
pub fn read_csv<R: Read>(reader: R, factors: &[FactorSpec]) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let k = factors.len();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < k + 2 || names[..k].iter().zip(factors).any(|(h, f)| *h != f.name) {
        return Err(Error::Format(format!(
            "header {names:?} does not start with the factor columns {:?}",
            factors.iter().map(|f| f.name.as_str()).collect::<Vec<_>>()
        )));
    }
    if names[names.len() - 2..] != ["combination_id", "cycle_index"] {
        return Err(Error::Format("header must end with combination_id,cycle_index".into()));
    }
    let responses: Vec<Response> = names[k..names.len() - 2]
        .iter()
        .map(|c| c.parse())
        .collect::<Result<_>>()
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut values = Vec::new();
    let mut resp: Vec<Vec<f64>> = vec![Vec::new(); responses.len()];
    let mut combination_id = Vec::new();
    let mut cycle_index = Vec::new();
    let num = |s: &str, line: usize| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("line {line}: `{s}` is not a number")))
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != names.len() {
            return Err(Error::Format(format!("line {line}: expected {} fields", names.len())));
        }
        for c in 0..k {
            values.push(num(&rec[c], line)?);
        }
        for (col, vals) in resp.iter_mut().enumerate() {
            vals.push(num(&rec[k + col], line)?);
        }
        let int = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| Error::Format(format!("line {line}: `{s}` is not an integer id")))
        };
        combination_id.push(int(&rec[names.len() - 2])?);
        cycle_index.push(int(&rec[names.len() - 1])?);
    }
    let n = combination_id.len();
    let points = Array2::from_shape_vec((n, k), values).expect("row-major fill");
    Ok(Dataset {
        design: Design {
            factors: factors.to_vec(),
            points,
            combination_id,
            cycle_index,
        },
        responses: responses.into_iter().zip(resp).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full_dataset() -> Dataset {
        let design = build_ccd(&table3_factors(), CcdMode::Table3).unwrap();
        replicate(&design, 20, 1).unwrap().into()
    }

    #[test]
    fn table3_levels_are_valid_and_centred() {
        let factors = table3_factors();
        assert_eq!(factors.len(), 6);
        let pp = &factors[2];
        assert_eq!(pp.name, "packing_pressure");
        assert_eq!(pp.levels, [250.0, 346.97, 400.0, 453.03, 550.0]);
    }

    #[test]
    fn factor_validation() {
        assert!(FactorSpec::new("x", "u", [1.0, 2.0, 3.0, 4.0, 5.0]).is_ok());
        assert!(FactorSpec::new("x", "u", [1.0, 2.0, 2.0, 4.0, 5.0]).is_err());
        assert!(FactorSpec::new("x", "u", [1.0, 2.0, 3.5, 4.0, 5.0]).is_err());
        assert!(FactorSpec::new("bad name", "u", [1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
    }

    #[test]
    fn six_factor_ccd_has_77_points() {
        let d = build_ccd(&table3_factors(), CcdMode::Table3).unwrap();
        assert_eq!(d.n_rows(), 77);
        assert_eq!(d.unique_combinations(), 77);
        assert_eq!(d.combination_id, (0..77).collect::<Vec<u32>>());
    }

    #[test]
    fn two_factor_ccd_has_9_points() {
        let d = build_ccd(&table3_factors()[..2], CcdMode::Table3).unwrap();
        assert_eq!(d.n_rows(), 9);
    }

    #[test]
    fn ccd_values_are_table_levels() {
        let factors = table3_factors();
        let d = build_ccd(&factors, CcdMode::Table3).unwrap();
        for row in d.points.outer_iter() {
            for (v, f) in row.iter().zip(&factors) {
                assert!(f.levels.contains(v), "{v} not a level of {}", f.name);
            }
        }
        // factorial rows use the inner levels
        for row in d.points.outer_iter().take(64) {
            assert!([346.97, 453.03].contains(&row[2]));
        }
        // axial rows for packing pressure: extreme level, everything else centred
        let centre: Vec<f64> = factors.iter().map(FactorSpec::centre).collect();
        for (r, expect) in [(64 + 4, 250.0), (64 + 5, 550.0)] {
            let row = d.points.row(r);
            assert_eq!(row[2], expect);
            for c in [0, 1, 3, 4, 5] {
                assert_eq!(row[c], centre[c]);
            }
        }
        assert_eq!(d.points.row(76).to_vec(), centre);
    }

    #[test]
    fn face_centred_mode_uses_three_levels() {
        let factors = table3_factors();
        let d = build_ccd(&factors, CcdMode::FaceCentred).unwrap();
        assert_eq!(d.n_rows(), 77);
        for row in d.points.outer_iter() {
            for (v, f) in row.iter().zip(&factors) {
                assert!([f.axial_low(), f.centre(), f.axial_high()].contains(v));
            }
        }
    }

    #[test]
    fn ccd_rejects_bad_factor_lists() {
        let f = table3_factors();
        assert!(matches!(
            build_ccd(&f[..1], CcdMode::Table3),
            Err(Error::FactorCount(1))
        ));
        let many: Vec<FactorSpec> = (0..11)
            .map(|i| FactorSpec::new(format!("f{i}"), "u", [1.0, 2.0, 3.0, 4.0, 5.0]).unwrap())
            .collect();
        assert!(matches!(build_ccd(&many, CcdMode::Table3), Err(Error::FactorCount(11))));
        let dup = vec![f[0].clone(), f[0].clone()];
        assert!(matches!(
            build_ccd(&dup, CcdMode::Table3),
            Err(Error::DuplicateFactor(_))
        ));
    }

    #[test]
    fn replicate_counts_and_determinism() {
        let d = build_ccd(&table3_factors(), CcdMode::Table3).unwrap();
        let r = replicate(&d, 20, 9).unwrap();
        assert_eq!(r.n_rows(), 1540);
        assert_eq!(r, replicate(&d, 20, 9).unwrap());
        assert_ne!(r.points, replicate(&d, 20, 10).unwrap().points);
        assert!(replicate(&d, 0, 9).is_err());

        let once = replicate(&d, 1, 3).unwrap();
        let mut ids = once.combination_id.clone();
        ids.sort_unstable();
        assert_eq!(ids, d.combination_id);
        for (row, id) in once.points.outer_iter().zip(&once.combination_id) {
            assert_eq!(row, d.points.row(*id as usize));
        }
    }

    #[test]
    fn stratified_split_counts() {
        let data = full_dataset();
        let split = stratified_split(&data, [0.6, 0.1, 0.3], 5).unwrap();
        assert_eq!(split.train.n_rows(), 924);
        assert_eq!(split.val.n_rows(), 154);
        assert_eq!(split.test.n_rows(), 462);
        for id in 0..77u32 {
            let count = |d: &Dataset| d.design.combination_id.iter().filter(|c| **c == id).count();
            assert_eq!((count(&split.train), count(&split.val), count(&split.test)), (12, 2, 6));
        }
        assert_eq!(split, stratified_split(&data, [0.6, 0.1, 0.3], 5).unwrap());
    }

    #[test]
    fn stratified_split_rejects_bad_input() {
        let data = full_dataset();
        assert!(stratified_split(&data, [1.0, 0.0, 0.0], 1).is_err());
        assert!(stratified_split(&data, [0.5, 0.1, 0.3], 1).is_err());
        let small: Dataset = build_ccd(&table3_factors(), CcdMode::Table3).unwrap().into();
        assert!(matches!(
            stratified_split(&small, [0.6, 0.1, 0.3], 1),
            Err(Error::StratumTooSmall { rows: 1, .. })
        ));
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(stratum_counts(20, &[0.6, 0.1, 0.3]), [12, 2, 6]);
        assert_eq!(stratum_counts(3, &[0.6, 0.1, 0.3]), [2, 0, 1]);
        assert_eq!(stratum_counts(7, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]), [3, 2, 2]);
    }

    #[test]
    fn design_is_orthogonal() {
        let d = build_ccd(&table3_factors(), CcdMode::Table3).unwrap();
        for design in [d.clone(), replicate(&d, 20, 2).unwrap()] {
            let r = design_correlation(&design).unwrap();
            for a in 0..6 {
                assert_eq!(r[[a, a]], 1.0);
                for b in 0..6 {
                    if a != b {
                        assert!(r[[a, b]].abs() < 1e-10);
                        assert_eq!(r[[a, b]], r[[b, a]]);
                    }
                }
            }
        }
    }

    #[test]
    fn correlation_with_duplicated_column() {
        let d = build_ccd(&table3_factors(), CcdMode::Table3).unwrap();
        let mut pts = Array2::zeros((d.n_rows(), 7));
        pts.slice_mut(ndarray::s![.., ..6]).assign(&d.points);
        pts.column_mut(6).assign(&d.points.column(3));
        let names: Vec<String> = (0..7).map(|i| i.to_string()).collect();
        let r = correlation_matrix(pts.view(), &names).unwrap();
        assert!((r[[3, 6]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_rejects_constant_column() {
        let pts = ndarray::array![[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]];
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(correlation_matrix(pts.view(), &names), Err(Error::ZeroVariance(n)) if n == "a"));
    }

    #[test]
    fn csv_round_trip() {
        let mut data = full_dataset();
        let n = data.n_rows();
        data.responses
            .insert(Response::Weight, (0..n).map(|i| 11.9 + i as f64 * 1e-4).collect());
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "injection_velocity,cooling_time,packing_pressure,packing_time,mould_temperature,melt_temperature,weight_g,combination_id,cycle_index\n"
        ));
        assert!(!text.contains('\r'));
        let back = read_csv(buf.as_slice(), &table3_factors()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let text = "a,b,combination_id,cycle_index\n1,2,0,0\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &table3_factors()),
            Err(Error::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn point_count_formula(k in 2usize..=8) {
            let factors: Vec<FactorSpec> = (0..k)
                .map(|i| FactorSpec::new(format!("f{i}"), "u", [-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap())
                .collect();
            let d = build_ccd(&factors, CcdMode::Table3).unwrap();
            prop_assert_eq!(d.unique_combinations(), (1 << k) + 2 * k + 1);
            let r = design_correlation(&d).unwrap();
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        prop_assert!(r[[a, b]].abs() < 1e-10);
                    }
                }
            }
        }

        #[test]
        fn split_is_a_partition(reps in 3usize..8, seed in any::<u64>()) {
            let d = build_ccd(&table3_factors()[..3], CcdMode::Table3).unwrap();
            let data: Dataset = replicate(&d, reps, seed).unwrap().into();
            let s = stratified_split(&data, [0.6, 0.1, 0.3], seed).unwrap();
            let mut keys: Vec<(u32, u32)> = [&s.train, &s.val, &s.test]
                .iter()
                .flat_map(|p| p.design.combination_id.iter().copied().zip(p.design.cycle_index.iter().copied()))
                .collect();
            keys.sort_unstable();
            let mut all: Vec<(u32, u32)> = data.design.combination_id.iter().copied()
                .zip(data.design.cycle_index.iter().copied()).collect();
            all.sort_unstable();
            prop_assert_eq!(keys, all);
        }
    }
}
