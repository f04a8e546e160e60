#![allow(dead_code)]

use std::collections::BTreeMap;

use mixlab::sem::{LinearSem, Role, StructuralEdge, VariableDecl};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Covariance by the trek rule: every pair of directed paths out of a common
/// source `s` contributes ω_s times the product of both paths' coefficients.
pub fn trek_covariance(model: &LinearSem) -> DMatrix<f64> {
    let names: Vec<String> = model.variables().iter().map(|v| v.name.clone()).collect();
    let k = names.len();
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    let mut children: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for e in model.edges() {
        children[idx(&e.from)].push((idx(&e.to), e.coef));
    }
    // total[s][v]: sum over directed paths s -> v of the coefficient product
    fn walk(v: usize, weight: f64, children: &[Vec<(usize, f64)>], acc: &mut [f64]) {
        acc[v] += weight;
        for &(c, coef) in &children[v] {
            walk(c, weight * coef, children, acc);
        }
    }
    let mut out = DMatrix::zeros(k, k);
    for (s, name) in names.iter().enumerate() {
        let omega = model.noise_variance(name).unwrap();
        let mut total = vec![0.0; k];
        walk(s, 1.0, &children, &mut total);
        for a in 0..k {
            for b in 0..k {
                out[(a, b)] += omega * total[a] * total[b];
            }
        }
    }
    out
}

/// (I − B)⁻¹ Ω (I − B)⁻ᵀ with B[to, from] = coefficient.
pub fn reduced_form_covariance(model: &LinearSem) -> DMatrix<f64> {
    let names: Vec<String> = model.variables().iter().map(|v| v.name.clone()).collect();
    let k = names.len();
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    let mut b = DMatrix::zeros(k, k);
    for e in model.edges() {
        b[(idx(&e.to), idx(&e.from))] = e.coef;
    }
    let omega = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        k,
        names.iter().map(|n| model.noise_variance(n).unwrap()),
    ));
    let inv = (DMatrix::identity(k, k) - b).try_inverse().unwrap();
    &inv * omega * inv.transpose()
}

/// A random DAG over `k` variables: edge i -> j only for i < j in a hidden
/// order, then declared in a shuffled order.
#[derive(Debug, Clone)]
pub struct RandomDag {
    pub k: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub noise: Vec<f64>,
    pub latent: Vec<bool>,
    pub declaration: Vec<usize>,
}

impl RandomDag {
    pub fn name(i: usize) -> String {
        format!("V{i}")
    }

    pub fn model_with_order(&self, declaration: &[usize]) -> LinearSem {
        let variables = declaration
            .iter()
            .map(|&i| {
                if self.latent[i] {
                    VariableDecl::latent(&Self::name(i))
                } else {
                    VariableDecl::observed(&Self::name(i), Role::Confounder)
                }
            })
            .collect();
        let edges =
            self.edges.iter().map(|&(a, b, c)| StructuralEdge::new(&Self::name(a), &Self::name(b), c)).collect();
        let noise: BTreeMap<String, f64> = (0..self.k).map(|i| (Self::name(i), self.noise[i])).collect();
        LinearSem::new(variables, edges, noise).unwrap()
    }

    pub fn model(&self) -> LinearSem {
        self.model_with_order(&self.declaration)
    }
}

pub fn random_dag() -> impl Strategy<Value = RandomDag> {
    (2usize..7)
        .prop_flat_map(|k| {
            let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
            let m = pairs.len();
            (
                Just(k),
                Just(pairs),
                proptest::collection::vec(proptest::option::weighted(0.6, -1.0f64..1.0), m),
                proptest::collection::vec(0.05f64..2.0, k),
                proptest::collection::vec(proptest::bool::weighted(0.3), k),
                Just((0..k).collect::<Vec<usize>>()).prop_shuffle(),
            )
        })
        .prop_map(|(k, pairs, coefs, noise, mut latent, declaration)| {
            // keep at least one observed variable
            latent[k - 1] = false;
            let edges = pairs.into_iter().zip(coefs).filter_map(|((a, b), c)| c.map(|c| (a, b, c))).collect();
            RandomDag { k, edges, noise, latent, declaration }
        })
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
