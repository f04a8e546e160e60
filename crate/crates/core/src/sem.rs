//! Linear Gaussian structural equation models over a DAG.
//!
//! Every variable `v` satisfies `v = Σ coef(p → v) · p + e_v` with independent
//! zero-mean Gaussian noise `e_v` of variance `noise[v]`. Explicit error
//! terms (the δ's and ε of a fully drawn DAG) are carried by the noise map,
//! never as extra nodes.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Noise variances computed within this distance below zero are clamped to 0.
const NOISE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Observed,
    Latent,
}

/// Annotation only; nothing in the algebra depends on it except the hybrid
/// sampler, which draws `Exposure` variables jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Exposure,
    Outcome,
    Confounder,
    NoiseFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

impl VariableDecl {
    pub fn observed(name: &str, role: Role) -> Self {
        Self { name: name.to_owned(), kind: VariableKind::Observed, role: Some(role) }
    }

    pub fn latent(name: &str) -> Self {
        Self { name: name.to_owned(), kind: VariableKind::Latent, role: Some(Role::Confounder) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralEdge {
    pub from: String,
    pub to: String,
    pub coef: f64,
}

impl StructuralEdge {
    pub fn new(from: &str, to: &str, coef: f64) -> Self {
        Self { from: from.to_owned(), to: to.to_owned(), coef }
    }
}

/// Wire form of a model: `{"variables": [...], "edges": [...], "noise": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemDocument {
    pub variables: Vec<VariableDecl>,
    #[serde(default)]
    pub edges: Vec<StructuralEdge>,
    pub noise: BTreeMap<String, f64>,
}

/// A validated model with a cached topological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SemDocument", into = "SemDocument")]
pub struct LinearSem {
    variables: Vec<VariableDecl>,
    edges: Vec<StructuralEdge>,
    noise: Vec<f64>,
    /// Incoming edges per variable as `(parent index, coefficient)`.
    parents: Vec<Vec<(usize, f64)>>,
    order: Vec<usize>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(|c| c.is_whitespace() || matches!(c, ',' | '"' | '\n' | '\r'))
}

/// Check every model invariant and compute the topological order.
pub fn validate(doc: SemDocument) -> Result<LinearSem> {
    let SemDocument { variables, edges, noise: noise_map } = doc;
    let mut index = HashMap::with_capacity(variables.len());
    for (i, v) in variables.iter().enumerate() {
        if !valid_name(&v.name) {
            return Err(Error::InvalidName(v.name.clone()));
        }
        if index.insert(v.name.clone(), i).is_some() {
            return Err(Error::DuplicateName(v.name.clone()));
        }
    }
    if !variables.iter().any(|v| v.kind == VariableKind::Observed) {
        return Err(Error::NoObservedVariable);
    }
    for name in noise_map.keys() {
        if !index.contains_key(name) {
            return Err(Error::UnknownVariable(name.clone()));
        }
    }
    let mut noise = Vec::with_capacity(variables.len());
    for v in &variables {
        let value = *noise_map.get(&v.name).ok_or_else(|| Error::MissingNoise(v.name.clone()))?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("noise variance of `{}`", v.name)));
        }
        if value < 0.0 {
            return Err(Error::NegativeNoiseVariance { variable: v.name.clone(), value });
        }
        noise.push(value);
    }

    let mut parents = vec![Vec::new(); variables.len()];
    for e in &edges {
        let from = *index.get(&e.from).ok_or_else(|| Error::UnknownVariable(e.from.clone()))?;
        let to = *index.get(&e.to).ok_or_else(|| Error::UnknownVariable(e.to.clone()))?;
        if from == to {
            return Err(Error::SelfLoop(e.from.clone()));
        }
        if !e.coef.is_finite() {
            return Err(Error::NonFinite(format!("coefficient {} -> {}", e.from, e.to)));
        }
        if parents[to].iter().any(|&(p, _)| p == from) {
            return Err(Error::DuplicateEdge { from: e.from.clone(), to: e.to.clone() });
        }
        parents[to].push((from, e.coef));
    }

    // Kahn's algorithm; ties resolved by declaration order.
    let p = variables.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); p];
    for (to, ps) in parents.iter().enumerate() {
        for &(from, _) in ps {
            children[from].push(to);
        }
    }
    let mut order = Vec::with_capacity(p);
    let mut done = vec![false; p];
    while order.len() < p {
        let Some(next) = (0..p).find(|&i| !done[i] && indegree[i] == 0) else {
            let stuck = (0..p).filter(|&i| !done[i]).map(|i| variables[i].name.clone()).collect();
            return Err(Error::Cycle(stuck));
        };
        done[next] = true;
        order.push(next);
        for &c in &children[next] {
            indegree[c] -= 1;
        }
    }

    Ok(LinearSem { variables, edges, noise, parents, order })
}

impl TryFrom<SemDocument> for LinearSem {
    type Error = Error;

    fn try_from(doc: SemDocument) -> Result<Self> {
        validate(doc)
    }
}

impl From<LinearSem> for SemDocument {
    fn from(model: LinearSem) -> Self {
        model.to_document()
    }
}

impl LinearSem {
    pub fn new(variables: Vec<VariableDecl>, edges: Vec<StructuralEdge>, noise: BTreeMap<String, f64>) -> Result<Self> {
        validate(SemDocument { variables, edges, noise })
    }

    pub fn to_document(&self) -> SemDocument {
        SemDocument {
            variables: self.variables.clone(),
            edges: self.edges.clone(),
            noise: self.variables.iter().map(|v| v.name.clone()).zip(self.noise.iter().copied()).collect(),
        }
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn edges(&self) -> &[StructuralEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.variables[index].name
    }

    pub fn noise_variance(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.noise[i])
    }

    pub(crate) fn noise_at(&self, index: usize) -> f64 {
        self.noise[index]
    }

    pub(crate) fn parents_of(&self, index: usize) -> &[(usize, f64)] {
        &self.parents[index]
    }

    /// Variable indices in topological order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn topological_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.name(i)).collect()
    }

    /// Observed variable names in declaration order.
    pub fn observed_names(&self) -> Vec<String> {
        self.variables.iter().filter(|v| v.kind == VariableKind::Observed).map(|v| v.name.clone()).collect()
    }

    pub fn names_with_role(&self, role: Role) -> Vec<String> {
        self.variables
            .iter()
            .filter(|v| v.role == Some(role) && v.kind == VariableKind::Observed)
            .map(|v| v.name.clone())
            .collect()
    }

    /// Copy of the model with one noise variance replaced.
    pub fn with_noise(&self, name: &str, variance: f64) -> Result<Self> {
        let i = self.index_of(name).ok_or_else(|| Error::UnknownVariable(name.to_owned()))?;
        if variance < 0.0 {
            return Err(Error::NegativeNoiseVariance { variable: name.to_owned(), value: variance });
        }
        let mut out = self.clone();
        out.noise[i] = variance;
        Ok(out)
    }
}

/// Symmetric covariance matrix over named variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovarianceDocument", into = "CovarianceDocument")]
pub struct CovarianceMatrix {
    names: Vec<String>,
    matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceDocument {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl TryFrom<CovarianceDocument> for CovarianceMatrix {
    type Error = Error;

    fn try_from(doc: CovarianceDocument) -> Result<Self> {
        let p = doc.names.len();
        if doc.matrix.len() != p || doc.matrix.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidCovariance(format!("matrix must be {p}x{p}")));
        }
        let flat: Vec<f64> = doc.matrix.into_iter().flatten().collect();
        CovarianceMatrix::new(doc.names, DMatrix::from_row_slice(p, p, &flat))
    }
}

impl From<CovarianceMatrix> for CovarianceDocument {
    fn from(cov: CovarianceMatrix) -> Self {
        let p = cov.dim();
        let matrix = (0..p).map(|i| (0..p).map(|j| cov.matrix[(i, j)]).collect()).collect();
        CovarianceDocument { names: cov.names, matrix }
    }
}

impl CovarianceMatrix {
    pub fn new(names: Vec<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let p = names.len();
        if matrix.nrows() != p || matrix.ncols() != p {
            return Err(Error::InvalidCovariance(format!(
                "{} names for a {}x{} matrix",
                p,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariance matrix".into()));
        }
        for i in 0..p {
            if matrix[(i, i)] < 0.0 {
                return Err(Error::InvalidCovariance(format!(
                    "negative variance {} for `{}`",
                    matrix[(i, i)],
                    names[i]
                )));
            }
            for j in 0..i {
                let gap = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if gap > linalg::SYMMETRY_TOLERANCE {
                    return Err(Error::InvalidCovariance(format!(
                        "asymmetry {gap:e} between `{}` and `{}`",
                        names[i], names[j]
                    )));
                }
            }
        }
        Ok(Self { names, matrix })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.matrix[(self.index_of(a)?, self.index_of(b)?)])
    }

    pub fn variance(&self, name: &str) -> Option<f64> {
        self.get(name, name)
    }

    /// Sub-matrix over `keep`, in the order given.
    pub fn marginal<S: AsRef<str>>(&self, keep: &[S]) -> Result<Self> {
        let idx = keep
            .iter()
            .map(|k| self.index_of(k.as_ref()).ok_or_else(|| Error::UnknownVariable(k.as_ref().to_owned())))
            .collect::<Result<Vec<_>>>()?;
        let m = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]);
        Self::new(keep.iter().map(|k| k.as_ref().to_owned()).collect(), m)
    }

    /// Correlation matrix with the same names.
    pub fn correlation(&self) -> Result<Self> {
        let p = self.dim();
        let sd: Vec<f64> = (0..p).map(|i| self.matrix[(i, i)].sqrt()).collect();
        if let Some(i) = sd.iter().position(|&s| s <= 0.0) {
            return Err(Error::InvalidCovariance(format!("zero variance for `{}`", self.names[i])));
        }
        let m = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { self.matrix[(i, j)] / (sd[i] * sd[j]) });
        Self::new(self.names.clone(), m)
    }

    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        linalg::cholesky(&self.matrix)
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).abs().max()
    }
}

/// Population covariance of `var(v) = explained + noise`, computed in
/// topological order. `noise_for` receives the variable index and the variance
/// explained by its parents and returns the noise variance to use.
fn propagate<F>(model: &LinearSem, mut noise_for: F) -> Result<(DMatrix<f64>, Vec<f64>)>
where
    F: FnMut(usize, f64) -> Result<f64>,
{
    let p = model.len();
    let mut sigma = DMatrix::<f64>::zeros(p, p);
    let mut noise = model.noise.clone();
    let mut seen: Vec<usize> = Vec::with_capacity(p);
    for &v in &model.order {
        let parents = model.parents_of(v);
        for &w in &seen {
            let c: f64 = parents.iter().map(|&(q, coef)| coef * sigma[(q, w)]).sum();
            sigma[(v, w)] = c;
            sigma[(w, v)] = c;
        }
        let mut explained = 0.0;
        for &(a, ca) in parents {
            for &(b, cb) in parents {
                explained += ca * cb * sigma[(a, b)];
            }
        }
        noise[v] = noise_for(v, explained)?;
        sigma[(v, v)] = explained + noise[v];
        seen.push(v);
    }
    Ok((sigma, noise))
}

/// Exact population covariance of every variable, in declaration order.
pub fn implied_covariance(model: &LinearSem) -> CovarianceMatrix {
    let (sigma, _) = propagate(model, |v, _| Ok(model.noise[v])).expect("no fallible hook");
    let names = model.variables.iter().map(|v| v.name.clone()).collect();
    CovarianceMatrix::new(names, sigma).expect("implied covariance is symmetric by construction")
}

/// Set the noise variance of each target so its population variance is 1.
pub fn solve_standardizing_noise<S: AsRef<str>>(model: &LinearSem, targets: &[S]) -> Result<LinearSem> {
    let mut is_target = vec![false; model.len()];
    for t in targets {
        let i = model.index_of(t.as_ref()).ok_or_else(|| Error::UnknownVariable(t.as_ref().to_owned()))?;
        is_target[i] = true;
    }
    let (_, noise) = propagate(model, |v, explained| {
        if !is_target[v] {
            return Ok(model.noise[v]);
        }
        let required = 1.0 - explained;
        if required >= 0.0 {
            Ok(required)
        } else if required > -NOISE_CLAMP {
            Ok(0.0)
        } else {
            Err(Error::InfeasibleStandardization { variable: model.name(v).to_owned(), required })
        }
    })?;
    let mut out = model.clone();
    out.noise = noise;
    Ok(out)
}

pub fn marginal_covariance<S: AsRef<str>>(cov: &CovarianceMatrix, keep: &[S]) -> Result<CovarianceMatrix> {
    cov.marginal(keep)
}
