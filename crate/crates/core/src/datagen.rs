//! Synthetic data generation: ancestral sampling through the structural
//! equations (method 1), direct multivariate-normal draws from a covariance
//! (method 2), and the hybrid of the two.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::NormalStream;
use crate::scenario::{self, ScenarioSpec};
use crate::sem::{self, CovarianceMatrix, LinearSem, Role, VariableKind};

/// Covariance entries are rounded to multiples of 2⁻³² before factorization,
/// so covariances that agree to well below that resolution (the same
/// distribution reached by two algebraic routes) produce identical draws.
const COVARIANCE_GRID: f64 = 4_294_967_296.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenMethod {
    #[serde(rename = "m1")]
    Method1,
    #[serde(rename = "m2")]
    Method2,
    #[serde(rename = "hybrid")]
    Hybrid,
}

impl GenMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GenMethod::Method1 => "m1",
            GenMethod::Method2 => "m2",
            GenMethod::Hybrid => "hybrid",
        }
    }
}

/// Where a dataset came from. Serializes as a single key (`scenario`,
/// `model` or `covariance`) so it can be flattened into a provenance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Scenario(ScenarioSpec),
    Model(LinearSem),
    Covariance(CovarianceMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(flatten)]
    pub source: DataSource,
    pub method: GenMethod,
    pub seed: u64,
    pub n: usize,
}

/// Column-major table of observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidConfig(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InvalidConfig("dataset needs at least one row".into()));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidConfig("columns have different lengths".into()));
        }
        if columns.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Self { names, columns, provenance })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.columns[i].as_slice())
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub(crate) fn with_source(mut self, source: DataSource) -> Self {
        self.provenance.source = source;
        self
    }

    /// Unbiased sample covariance (divisor n − 1).
    pub fn sample_covariance(&self) -> Result<CovarianceMatrix> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InsufficientObservations { n, needed: 1 });
        }
        let p = self.names.len();
        let means: Vec<f64> = self.columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let mut m = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let s: f64 =
                    self.columns[i].iter().zip(&self.columns[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum();
                m[(i, j)] = s / (n - 1) as f64;
                m[(j, i)] = m[(i, j)];
            }
        }
        CovarianceMatrix::new(self.names.clone(), m)
    }

    /// Header row of names, then one row per observation with 17 significant
    /// digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        let mut line = String::new();
        for row in 0..self.n() {
            line.clear();
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_sig17(col[row]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn provenance_json(&self) -> String {
        serde_json::to_string_pretty(&self.provenance).expect("provenance serializes")
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    Ok(())
}

fn observed_columns(model: &LinearSem, mut all: Vec<Vec<f64>>) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for (i, v) in model.variables().iter().enumerate() {
        if v.kind == VariableKind::Observed {
            names.push(v.name.clone());
            cols.push(std::mem::take(&mut all[i]));
        }
    }
    (names, cols)
}

/// Method 1: simulate every variable from its structural equation in
/// topological order and keep the observed columns.
pub fn sample_method1(model: &LinearSem, n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut stream = NormalStream::new(seed);
    let mut all = vec![Vec::new(); model.len()];
    for &v in model.order() {
        let mut col = vec![0.0; n];
        let noise = model.noise_at(v);
        if noise > 0.0 {
            stream.fill_normal(&mut col, noise.sqrt());
        }
        for &(p, coef) in model.parents_of(v) {
            for (x, &pv) in col.iter_mut().zip(&all[p]) {
                *x += coef * pv;
            }
        }
        all[v] = col;
    }
    let (names, columns) = observed_columns(model, all);
    let provenance = Provenance { source: DataSource::Model(model.clone()), method: GenMethod::Method1, seed, n };
    Dataset::new(names, columns, provenance)
}

fn quantize(cov: &CovarianceMatrix) -> DMatrix<f64> {
    cov.matrix().map(|x| (x * COVARIANCE_GRID).round() / COVARIANCE_GRID)
}

/// Draw `n` rows of `L z` with `z` standard normal, returning columns.
fn draw_mvn(l: &DMatrix<f64>, n: usize, stream: &mut NormalStream) -> Vec<Vec<f64>> {
    let p = l.nrows();
    let mut cols = vec![vec![0.0; n]; p];
    let mut z = vec![0.0; p];
    for row in 0..n {
        for zi in z.iter_mut() {
            *zi = stream.standard_normal();
        }
        for (i, col) in cols.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += l[(i, k)] * zk;
            }
            col[row] = s;
        }
    }
    cols
}

/// Method 2: zero-mean multivariate normal draws from `cov`.
pub fn sample_method2(cov: &CovarianceMatrix, n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let l = linalg::cholesky(&quantize(cov))?;
    let mut stream = NormalStream::new(seed);
    let columns = draw_mvn(&l, n, &mut stream);
    let provenance = Provenance { source: DataSource::Covariance(cov.clone()), method: GenMethod::Method2, seed, n };
    Dataset::new(cov.names().to_vec(), columns, provenance)
}

fn ancestors_of_any(model: &LinearSem, targets: &[usize]) -> HashSet<usize> {
    let mut found = HashSet::new();
    let mut stack: Vec<usize> = targets.to_vec();
    while let Some(v) = stack.pop() {
        for &(p, _) in model.parents_of(v) {
            if found.insert(p) {
                stack.push(p);
            }
        }
    }
    found
}

/// Hybrid: exposures (variables tagged [`Role::Exposure`]) are drawn jointly
/// from their implied covariance, then the remaining observed variables are
/// built one at a time. A variable whose parents are all already drawn and
/// which does not feed back into the exposures uses its structural equation;
/// otherwise it is drawn from its exact Gaussian conditional given everything
/// drawn so far.
pub fn sample_hybrid(model: &LinearSem, n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let exposures: Vec<usize> =
        model.names_with_role(Role::Exposure).iter().map(|name| model.index_of(name).expect("declared")).collect();
    if exposures.is_empty() {
        return Err(Error::InvalidConfig("hybrid sampling needs at least one exposure variable".into()));
    }
    let sigma = sem::implied_covariance(model);
    let block = DMatrix::from_fn(exposures.len(), exposures.len(), |i, j| sigma.matrix()[(exposures[i], exposures[j])]);
    let l = linalg::cholesky(&block)?;
    let mut stream = NormalStream::new(seed);

    let mut all = vec![Vec::new(); model.len()];
    for (cols, &e) in draw_mvn(&l, n, &mut stream).into_iter().zip(&exposures) {
        all[e] = cols;
    }
    let mut drawn = exposures.clone();
    let feeds_exposures = ancestors_of_any(model, &exposures);

    for &v in model.order() {
        if model.variables()[v].kind != VariableKind::Observed || drawn.contains(&v) {
            continue;
        }
        let parents = model.parents_of(v);
        let structural = !feeds_exposures.contains(&v) && parents.iter().all(|(p, _)| drawn.contains(p));
        let (weights, resid): (Vec<(usize, f64)>, f64) = if structural {
            (parents.to_vec(), model.noise_at(v))
        } else {
            let k = drawn.len();
            let s_dd = DMatrix::from_fn(k, k, |i, j| sigma.matrix()[(drawn[i], drawn[j])]);
            let s_dv = DVector::from_fn(k, |i, _| sigma.matrix()[(drawn[i], v)]);
            let beta = linalg::solve_spd(&s_dd, &s_dv)?;
            let resid = (sigma.matrix()[(v, v)] - beta.dot(&s_dv)).max(0.0);
            (drawn.iter().copied().zip(beta.iter().copied()).collect(), resid)
        };
        let mut col = vec![0.0; n];
        if resid > 0.0 {
            stream.fill_normal(&mut col, resid.sqrt());
        }
        for &(p, coef) in &weights {
            for (x, &pv) in col.iter_mut().zip(&all[p]) {
                *x += coef * pv;
            }
        }
        all[v] = col;
        drawn.push(v);
    }

    let (names, columns) = observed_columns(model, all);
    let provenance = Provenance { source: DataSource::Model(model.clone()), method: GenMethod::Hybrid, seed, n };
    Dataset::new(names, columns, provenance)
}

/// Generate a dataset for a scenario. Method 2 draws from the implied
/// covariance of the observed variables.
pub fn generate(spec: &ScenarioSpec, method: GenMethod, n: usize, seed: u64) -> Result<Dataset> {
    let model = scenario::build_model(spec)?;
    generate_from_model(&model, method, n, seed).map(|d| d.with_source(DataSource::Scenario(spec.clone())))
}

pub fn generate_from_model(model: &LinearSem, method: GenMethod, n: usize, seed: u64) -> Result<Dataset> {
    match method {
        GenMethod::Method1 => sample_method1(model, n, seed),
        GenMethod::Hybrid => sample_hybrid(model, n, seed),
        GenMethod::Method2 => {
            let cov = sem::implied_covariance(model).marginal(&model.observed_names())?;
            sample_method2(&cov, n, seed).map(|d| d.with_source(DataSource::Model(model.clone())))
        }
    }
}

/// Stable ranks where tied values all take the rank of their first
/// occurrence in sorted order.
fn tied_min_ranks(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    for (pos, &i) in idx.iter().enumerate() {
        if pos > 0 && values[i] != values[idx[pos - 1]] {
            start = pos;
        }
        ranks[i] = start;
    }
    ranks
}

/// Replace `columns` by quantile scores `0..q-1`: score = ⌊rank·q/n⌋ with
/// ties sharing the lowest rank in their group.
pub fn quantile_scores<S: AsRef<str>>(data: &Dataset, q: usize, columns: &[S]) -> Result<Dataset> {
    if q < 2 {
        return Err(Error::InvalidQuantileCount(q));
    }
    let n = data.n();
    if q > n {
        return Err(Error::QTooLargeForN { q, n });
    }
    let mut out = data.clone();
    for name in columns {
        let j = data.index_of(name.as_ref()).ok_or_else(|| Error::UnknownVariable(name.as_ref().to_owned()))?;
        out.columns[j] = tied_min_ranks(&data.columns[j]).into_iter().map(|r| ((r * q) / n) as f64).collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioSpec;

    fn one_column(values: &[f64]) -> Dataset {
        let cov = CovarianceMatrix::new(vec!["X".into()], DMatrix::from_element(1, 1, 1.0)).unwrap();
        Dataset::new(
            vec!["X".into()],
            vec![values.to_vec()],
            Provenance { source: DataSource::Covariance(cov), method: GenMethod::Method2, seed: 0, n: values.len() },
        )
        .unwrap()
    }

    #[test]
    fn quantiles_of_distinct_values() {
        let d = quantile_scores(&one_column(&[3.0, 1.0, 2.0, 4.0]), 4, &["X"]).unwrap();
        assert_eq!(d.column("X").unwrap(), &[2.0, 0.0, 1.0, 3.0]);
        let d = quantile_scores(&one_column(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]), 2, &["X"]).unwrap();
        assert_eq!(d.column("X").unwrap(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_column_lands_in_one_bin() {
        let d = quantile_scores(&one_column(&[2.5; 8]), 4, &["X"]).unwrap();
        assert!(d.column("X").unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn quantile_errors() {
        let d = one_column(&[1.0, 2.0, 3.0]);
        assert!(matches!(quantile_scores(&d, 4, &["X"]), Err(Error::QTooLargeForN { q: 4, n: 3 })));
        assert!(matches!(quantile_scores(&d, 1, &["X"]), Err(Error::InvalidQuantileCount(1))));
        assert!(matches!(quantile_scores(&d, 2, &["Z"]), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn noiseless_model_gives_zero_columns() {
        let model = sem::validate(
            serde_json::from_str(
                r#"{"variables":[{"name":"U","kind":"latent"},{"name":"X","kind":"observed"}],
                    "edges":[{"from":"U","to":"X","coef":0.7}],"noise":{"U":0,"X":0}}"#,
            )
            .unwrap(),
        )
        .unwrap();
        let d = sample_method1(&model, 50, 3).unwrap();
        assert_eq!(d.names(), &["X".to_string()]);
        assert!(d.column("X").unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn method1_is_deterministic() {
        let model = scenario::build_model(&ScenarioSpec::fig1a(0.4, 0.2, 0.5)).unwrap();
        let a = sample_method1(&model, 100, 11).unwrap();
        let b = sample_method1(&model, 100, 11).unwrap();
        let c = sample_method1(&model, 100, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.columns(), c.columns());
        assert_eq!(a.names(), &["X1", "X2", "Y"]);
    }

    #[test]
    fn method2_rejects_non_pd() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.99, 0.9, 0.99, 1.0, -0.9, 0.9, -0.9, 1.0]);
        let cov = CovarianceMatrix::new(vec!["X1".into(), "X2".into(), "Y".into()], m).unwrap();
        assert!(matches!(sample_method2(&cov, 10, 1), Err(Error::NotPositiveDefinite { pivot: 2, .. })));
    }

    #[test]
    fn n_zero_is_rejected() {
        let model = scenario::build_model(&ScenarioSpec::fig1a(0.4, 0.2, 0.5)).unwrap();
        assert!(sample_method1(&model, 0, 1).is_err());
        assert!(sample_hybrid(&model, 0, 1).is_err());
    }

    #[test]
    fn csv_has_seventeen_significant_digits() {
        let d = one_column(&[0.1, -2.0 / 3.0]);
        let text = d.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("X"));
        let v: f64 = lines.next().unwrap().parse().unwrap();
        assert_eq!(v, 0.1);
        let second = lines.next().unwrap();
        assert_eq!(second.parse::<f64>().unwrap(), -2.0 / 3.0);
        assert_eq!(second.trim_start_matches('-').split('e').next().unwrap().replace('.', "").len(), 17);
    }

    #[test]
    fn provenance_json_shape() {
        let d = generate(&ScenarioSpec::fig1a(0.4, 0.2, 0.5), GenMethod::Method2, 5, 7).unwrap();
        let v: serde_json::Value = serde_json::from_str(&d.provenance_json()).unwrap();
        assert_eq!(v["method"], "m2");
        assert_eq!(v["seed"], 7);
        assert_eq!(v["n"], 5);
        assert_eq!(v["scenario"]["kind"], "fig1a");
        let back: Provenance = serde_json::from_value(v).unwrap();
        assert_eq!(&back, d.provenance());
    }
}
