//! Constant-trace scaling for problems on the unit sphere.

use nalgebra::DVector;
use thiserror::Error;

use crate::basis::standard_basis;
use crate::poly::{Exponent, Polynomial};
use crate::pop::Pop;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("the equality 1 - |x|^2 = 0 is not among the constraints")]
    NoSphere,
}

/// `trace(T M_r(y) T) = a` for every sphere-feasible moment vector `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantTrace {
    pub a: f64,
    /// Diagonal of `T`, indexed like `basis`.
    pub t: DVector<f64>,
    pub basis: Vec<Exponent>,
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `a_r = 2^r` and `T_r = diag(θ_{r,α}^{1/2})`, where `θ_{r,α}` is the
/// coefficient of `x^{2α}` in `(1 + |x|²)^r`.
pub fn sphere_trace_scaling(n: usize, r: usize) -> ConstantTrace {
    let basis = standard_basis(n, r);
    let t = DVector::from_iterator(
        basis.len(),
        basis.iter().map(|a| {
            let mut theta = factorial(r as u32) / factorial(r as u32 - a.degree());
            for &k in a.entries() {
                theta /= factorial(k);
            }
            theta.sqrt()
        }),
    );
    ConstantTrace {
        a: 2f64.powi(r as i32),
        t,
        basis,
    }
}

fn is_sphere(h: &Polynomial) -> bool {
    let n = h.nvars();
    let c = h.coeff(&Exponent::zero(n));
    if c == 0.0 || h.num_terms() != n + 1 {
        return false;
    }
    (0..n).all(|i| {
        let v = h.coeff(&Exponent::unit(n, i).scale(2));
        ((v + c) / c).abs() < 1e-12
    })
}

/// Constant-trace data of `pop` at order `r`; needs a sphere equality.
pub fn constant_trace_sphere(pop: &Pop, r: usize) -> Result<ConstantTrace, TraceError> {
    if pop.equalities.iter().any(is_sphere) {
        Ok(sphere_trace_scaling(pop.n, r))
    } else {
        Err(TraceError::NoSphere)
    }
}
