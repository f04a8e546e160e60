//! Crude and mutually adjusted least squares, and the summed mixture effect.
//!
//! Both estimators solve the normal equations of centered data, so no
//! intercept is reported.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sem::CovarianceMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub outcome: String,
    pub regressors: Vec<String>,
    pub coefficients: Vec<f64>,
    /// RSS / (n − p − 1).
    pub residual_variance: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureEstimate {
    pub name: String,
    pub crude: f64,
    pub adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub outcome: String,
    pub exposures: Vec<ExposureEstimate>,
    /// Residual variance of the mutually adjusted fit.
    pub residual_variance: f64,
    pub n: usize,
    pub psi_hat: f64,
}

/// Centered cross-product sums over a subset of dataset columns.
struct CrossProducts {
    sums: DMatrix<f64>,
    n: usize,
}

impl CrossProducts {
    fn new(columns: &[&[f64]]) -> Self {
        let p = columns.len();
        let n = columns[0].len();
        let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let centered: Vec<Vec<f64>> =
            columns.iter().zip(&means).map(|(c, m)| c.iter().map(|x| x - m).collect()).collect();
        let mut sums = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let s: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                sums[(i, j)] = s;
                sums[(j, i)] = s;
            }
        }
        Self { sums, n }
    }

    /// Coefficients and residual sum of squares of column `y` on `xs`.
    fn regress(&self, y: usize, xs: &[usize]) -> Result<(Vec<f64>, f64)> {
        let a = DMatrix::from_fn(xs.len(), xs.len(), |i, j| self.sums[(xs[i], xs[j])]);
        let b = DVector::from_fn(xs.len(), |i, _| self.sums[(xs[i], y)]);
        let beta = linalg::solve_spd(&a, &b)?;
        let rss = (self.sums[(y, y)] - beta.dot(&b)).max(0.0);
        Ok((beta.iter().copied().collect(), rss))
    }
}

fn columns_of<'a, S: AsRef<str>>(data: &'a Dataset, names: &[S]) -> Result<Vec<&'a [f64]>> {
    names.iter().map(|n| data.column(n.as_ref()).ok_or_else(|| Error::UnknownVariable(n.as_ref().to_owned()))).collect()
}

fn check_size(n: usize, p: usize) -> Result<()> {
    if n <= p + 1 {
        return Err(Error::InsufficientObservations { n, needed: p + 1 });
    }
    Ok(())
}

/// Least squares of `outcome` on `regressors` with internal centering.
pub fn ols<S: AsRef<str>>(data: &Dataset, outcome: &str, regressors: &[S]) -> Result<OlsFit> {
    let p = regressors.len();
    check_size(data.n(), p)?;
    let mut cols = columns_of(data, regressors)?;
    cols.push(columns_of(data, &[outcome])?[0]);
    let xp = CrossProducts::new(&cols);
    let xs: Vec<usize> = (0..p).collect();
    let (coefficients, rss) = xp.regress(p, &xs)?;
    Ok(OlsFit {
        outcome: outcome.to_owned(),
        regressors: regressors.iter().map(|s| s.as_ref().to_owned()).collect(),
        coefficients,
        residual_variance: rss / (xp.n - p - 1) as f64,
        n: xp.n,
    })
}

/// Least squares on second moments: `Σ_xx⁻¹ Σ_xy`.
pub fn moment_ols<S: AsRef<str>>(cov: &CovarianceMatrix, outcome: &str, regressors: &[S]) -> Result<Vec<f64>> {
    let idx = |name: &str| cov.index_of(name).ok_or_else(|| Error::UnknownVariable(name.to_owned()));
    let y = idx(outcome)?;
    let xs = regressors.iter().map(|r| idx(r.as_ref())).collect::<Result<Vec<_>>>()?;
    let m = cov.matrix();
    let a = DMatrix::from_fn(xs.len(), xs.len(), |i, j| m[(xs[i], xs[j])]);
    let b = DVector::from_fn(xs.len(), |i, _| m[(xs[i], y)]);
    Ok(linalg::solve_spd(&a, &b)?.iter().copied().collect())
}

/// Crude (one exposure at a time) and mutually adjusted fits from one pass
/// over the data.
pub fn fit_mixture<S: AsRef<str>>(data: &Dataset, outcome: &str, exposures: &[S]) -> Result<RegressionResult> {
    let p = exposures.len();
    check_size(data.n(), p)?;
    let mut cols = columns_of(data, exposures)?;
    cols.push(columns_of(data, &[outcome])?[0]);
    let xp = CrossProducts::new(&cols);
    let all: Vec<usize> = (0..p).collect();
    let (adjusted, rss) = xp.regress(p, &all)?;
    let mut estimates = Vec::with_capacity(p);
    for (i, name) in exposures.iter().enumerate() {
        let (crude, _) = xp.regress(p, &[i])?;
        estimates.push(ExposureEstimate { name: name.as_ref().to_owned(), crude: crude[0], adjusted: adjusted[i] });
    }
    let mut result = RegressionResult {
        outcome: outcome.to_owned(),
        exposures: estimates,
        residual_variance: rss / (xp.n - p - 1) as f64,
        n: xp.n,
        psi_hat: 0.0,
    };
    result.psi_hat = psi_hat(&result);
    Ok(result)
}

/// Overall mixture effect: the sum of the adjusted coefficients.
pub fn psi_hat(result: &RegressionResult) -> f64 {
    result.exposures.iter().map(|e| e.adjusted).sum()
}
