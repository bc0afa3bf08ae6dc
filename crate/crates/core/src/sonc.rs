//! Circuit polynomials and sums of nonnegative circuits (SONC).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpResult};
use crate::poly::{Exponent, Polynomial};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoncError {
    #[error("trellis is empty")]
    EmptyTrellis,
    #[error("vertex {0} is not an even exponent")]
    OddVertex(String),
    #[error("trellis vertices are affinely dependent")]
    AffinelyDependent,
    #[error("exponent dimensions disagree")]
    Dimension,
    #[error("inner exponent is not in the relative interior of the trellis")]
    NotInterior,
    #[error("vertex coefficient {0} is not positive")]
    NonPositive(f64),
    #[error("exponent {0} is not covered by any simplex on the positive even terms")]
    Uncoverable(String),
    #[error("invalid decomposition JSON: {0}")]
    Json(String),
}

const INTERIOR_TOL: f64 = 1e-12;

/// Vertex set of a simplex with even exponents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trellis {
    vertices: Vec<Exponent>,
}

fn affine_rank(points: &[Exponent]) -> usize {
    if points.len() <= 1 {
        return points.len().saturating_sub(1);
    }
    let n = points[0].nvars();
    let base = &points[0];
    let m = DMatrix::from_fn(n, points.len() - 1, |i, j| {
        f64::from(points[j + 1].entries()[i]) - f64::from(base.entries()[i])
    });
    m.rank(1e-9)
}

impl Trellis {
    pub fn new(vertices: Vec<Exponent>) -> Result<Self, SoncError> {
        let first = vertices.first().ok_or(SoncError::EmptyTrellis)?;
        let n = first.nvars();
        for v in &vertices {
            if v.nvars() != n {
                return Err(SoncError::Dimension);
            }
            if !v.is_even() {
                return Err(SoncError::OddVertex(format!("{v:?}")));
            }
        }
        if affine_rank(&vertices) + 1 != vertices.len() {
            return Err(SoncError::AffinelyDependent);
        }
        Ok(Trellis { vertices })
    }

    pub fn vertices(&self) -> &[Exponent] {
        &self.vertices
    }
}

/// The unique `λ > 0` with `Σ λ_j α_j = β` and `Σ λ_j = 1`.
pub fn barycentric_coords(t: &Trellis, beta: &Exponent) -> Result<Vec<f64>, SoncError> {
    let n = beta.nvars();
    let verts = t.vertices();
    if verts[0].nvars() != n {
        return Err(SoncError::Dimension);
    }
    let m = verts.len();
    let a = DMatrix::from_fn(n + 1, m, |i, j| if i < n { f64::from(verts[j].entries()[i]) } else { 1.0 });
    let rhs = DVector::from_fn(n + 1, |i, _| if i < n { f64::from(beta.entries()[i]) } else { 1.0 });
    let lam = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|_| SoncError::NotInterior)?;
    let resid = (&a * &lam - &rhs).norm();
    if resid > 1e-9 * (1.0 + rhs.norm()) || lam.iter().any(|&l| l <= INTERIOR_TOL) {
        return Err(SoncError::NotInterior);
    }
    Ok(lam.iter().copied().collect())
}

/// `Θ = Π (c_j / λ_j)^{λ_j}`, evaluated in log space.
pub fn circuit_number(c: &[f64], lam: &[f64]) -> f64 {
    assert_eq!(c.len(), lam.len(), "one barycentric coordinate per coefficient");
    c.iter().zip(lam).map(|(c, l)| l * (c.ln() - l.ln())).sum::<f64>().exp()
}

/// `Σ_{α∈T} c_α x^α − d x^β` with `β` inside the simplex `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitPolynomial {
    pub trellis: Trellis,
    pub vertex_coeffs: Vec<f64>,
    pub inner_exponent: Exponent,
    pub inner_coeff: f64,
}

impl CircuitPolynomial {
    pub fn new(trellis: Trellis, vertex_coeffs: Vec<f64>, inner_exponent: Exponent, inner_coeff: f64) -> Result<Self, SoncError> {
        if vertex_coeffs.len() != trellis.vertices().len() {
            return Err(SoncError::Dimension);
        }
        if let Some(&c) = vertex_coeffs.iter().find(|&&c| !(c > 0.0)) {
            return Err(SoncError::NonPositive(c));
        }
        barycentric_coords(&trellis, &inner_exponent)?;
        Ok(CircuitPolynomial {
            trellis,
            vertex_coeffs,
            inner_exponent,
            inner_coeff,
        })
    }

    pub fn circuit_number(&self) -> f64 {
        let lam = barycentric_coords(&self.trellis, &self.inner_exponent).expect("checked at construction");
        circuit_number(&self.vertex_coeffs, &lam)
    }

    pub fn to_polynomial(&self) -> Polynomial {
        let n = self.inner_exponent.nvars();
        let mut terms: Vec<(Exponent, f64)> = self
            .trellis
            .vertices()
            .iter()
            .cloned()
            .zip(self.vertex_coeffs.iter().copied())
            .collect();
        terms.push((self.inner_exponent.clone(), -self.inner_coeff));
        Polynomial::from_terms(n, terms)
    }
}

/// Nonnegativity test: a sum of monomial squares, or `|d| ≤ Θ`.
pub fn is_nonneg_circuit(f: &CircuitPolynomial) -> bool {
    let d = f.inner_coeff;
    if d == 0.0 || (f.inner_exponent.is_even() && d <= 0.0) {
        return true;
    }
    d.abs() <= f.circuit_number() * (1.0 + 1e-12)
}

/// Simplex selection: maximize the weight on `alpha0` among convex
/// combinations of `lambda` that reproduce `beta`.
pub fn simsel(beta: &Exponent, lambda: &[Exponent], alpha0: &Exponent) -> Option<Trellis> {
    let n = beta.nvars();
    let k = lambda.len();
    let a = DMatrix::from_fn(n + 1, k, |i, j| if i < n { f64::from(lambda[j].entries()[i]) } else { 1.0 });
    let b: Vec<f64> = beta.entries().iter().map(|&v| f64::from(v)).chain([1.0]).collect();
    let c: Vec<f64> = lambda.iter().map(|a| if a == alpha0 { 1.0 } else { 0.0 }).collect();
    let LpResult::Optimal { x, .. } = lp::solve(&a, &b, &c) else {
        return None;
    };
    let mut support: Vec<(f64, Exponent)> = x
        .iter()
        .zip(lambda)
        .filter(|(v, _)| **v > 1e-9)
        .map(|(v, e)| (*v, e.clone()))
        .collect();
    loop {
        let verts: Vec<Exponent> = support.iter().map(|(_, e)| e.clone()).collect();
        match Trellis::new(verts) {
            Ok(t) => return barycentric_coords(&t, beta).ok().map(|_| t),
            Err(SoncError::AffinelyDependent) if support.len() > 1 => {
                // degenerate vertex: drop the lightest point
                let (i, _) = support
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                    .expect("nonempty");
                support.remove(i);
            }
            Err(_) => return None,
        }
    }
}

/// `Λ(f)`: even exponents with positive coefficients, and `Γ(f)`: the rest.
pub fn split_terms(f: &Polynomial) -> (Vec<Exponent>, Vec<Exponent>) {
    f.terms()
        .map(|(e, _)| e.clone())
        .partition(|e| e.is_even() && f.coeff(e) > 0.0)
}

/// One covering trellis per exponent of `Γ(f)`, sweeping `α₀` over `Λ(f)`
/// in graded-lex order.
pub fn simplex_cover(f: &Polynomial) -> Result<Vec<(Trellis, Exponent)>, SoncError> {
    let (lambda, gamma) = split_terms(f);
    gamma
        .into_iter()
        .map(|beta| {
            lambda
                .iter()
                .find_map(|a0| simsel(&beta, &lambda, a0))
                .map(|t| (t, beta.clone()))
                .ok_or_else(|| SoncError::Uncoverable(format!("{beta:?}")))
        })
        .collect()
}

/// Reasons `f = Σ parts + residual` fails to be a valid SONC certificate.
pub fn sonc_failures(f: &Polynomial, parts: &[CircuitPolynomial], residual: &Polynomial) -> Vec<String> {
    let mut failures = Vec::new();
    let n = f.nvars();
    let mut sum = residual.clone();
    for (i, p) in parts.iter().enumerate() {
        if p.inner_exponent.nvars() != n {
            failures.push(format!("part {i}: wrong number of variables"));
            continue;
        }
        if !is_nonneg_circuit(p) {
            failures.push(format!(
                "part {i}: |d| = {} exceeds the circuit number {}",
                p.inner_coeff.abs(),
                p.circuit_number()
            ));
        }
        sum = sum.add(&p.to_polynomial());
    }
    for (e, c) in residual.terms() {
        if !e.is_even() || c <= 0.0 {
            failures.push(format!("residual term {e} with coefficient {c} is not a monomial square"));
        }
    }
    let diff = f.sub(&sum);
    for (e, c) in diff.terms() {
        if c.abs() > 1e-9 {
            failures.push(format!("coefficient of {e} differs by {c}"));
        }
    }
    failures
}

pub fn verify_sonc_decomposition(f: &Polynomial, parts: &[CircuitPolynomial], residual: &Polynomial) -> bool {
    sonc_failures(f, parts, residual).is_empty()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitJson {
    pub trellis: Vec<Vec<u32>>,
    pub coeffs: Vec<f64>,
    pub inner: Vec<u32>,
    pub inner_coeff: f64,
}

/// Decomposition file: `f`, circuit parts and a monomial-square residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoncDecomposition {
    pub f: Polynomial,
    pub parts: Vec<CircuitJson>,
    pub residual: Polynomial,
}

impl SoncDecomposition {
    pub fn from_json(s: &str) -> Result<Self, SoncError> {
        serde_json::from_str(s).map_err(|e| SoncError::Json(e.to_string()))
    }

    pub fn circuits(&self) -> Result<Vec<CircuitPolynomial>, SoncError> {
        self.parts
            .iter()
            .map(|p| {
                let t = Trellis::new(p.trellis.iter().cloned().map(Exponent::new).collect())?;
                CircuitPolynomial::new(t, p.coeffs.clone(), Exponent::new(p.inner.clone()), p.inner_coeff)
            })
            .collect()
    }

    /// All failures, including parts that are not valid circuits.
    pub fn check(&self) -> Vec<String> {
        match self.circuits() {
            Ok(parts) => sonc_failures(&self.f, &parts, &self.residual),
            Err(e) => vec![e.to_string()],
        }
    }
}

/// Coefficients of `f` keyed by exponent, handy for building parts.
pub fn coefficient_map(f: &Polynomial) -> BTreeMap<Exponent, f64> {
    f.terms().map(|(e, c)| (e.clone(), c)).collect()
}
