//! Embedded first-order SDP solver for [`BlockSDP`] instances, bisection,
//! SDPA export and constant-trace scaling.

pub mod admm;
mod sdpa;
mod trace;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::poly::Exponent;
use crate::relaxation::{BlockSDP, VarKey};

pub use sdpa::{export_sdpa, parse_sdpa, SdpaError};
pub use trace::{constant_trace_sphere, sphere_trace_scaling, ConstantTrace, TraceError};

use admm::{AdmmSettings, Cone, Outcome, SparseRows};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iters: usize,
    pub over_relaxation: f64,
    /// Ruiz equilibration of the data.
    pub scale: bool,
    /// Periodic rebalancing of primal and dual residuals; turning it off can
    /// help feasibility problems whose solutions are badly scaled.
    pub adaptive_scale: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_primal: 1e-6,
            eps_dual: 1e-6,
            max_iters: 200_000,
            over_relaxation: 1.6,
            scale: true,
            adaptive_scale: true,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(eps: f64) -> Self {
        SolverOptions {
            eps_primal: eps,
            eps_dual: eps,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    PrimalInfeasibleSuspected,
    UnboundedSuspected,
    IterationLimit,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("ill-formed SDP: {0}")]
    IllFormed(String),
}

#[derive(Clone, Debug)]
pub struct MomentSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub y: BTreeMap<Exponent, f64>,
    pub aux: BTreeMap<usize, f64>,
    /// Blocks evaluated at the returned variables.
    pub block_matrices: Vec<DMatrix<f64>>,
    /// Dual multipliers, one per block.
    pub dual_blocks: Vec<DMatrix<f64>>,
    /// `(primal, dual)` residual norms.
    pub residuals: (f64, f64),
    pub gap: f64,
    pub iterations: usize,
}

impl MomentSolution {
    pub fn value(&self, k: &VarKey) -> f64 {
        match k {
            VarKey::Moment(e) => self.y.get(e).copied().unwrap_or(0.0),
            VarKey::Aux(i) => self.aux.get(i).copied().unwrap_or(0.0),
        }
    }

    /// `M[i,j] = y_{rows[i]+rows[j]}`; `None` if some moment is absent.
    pub fn moment_matrix(&self, rows: &[Exponent]) -> Option<DMatrix<f64>> {
        let d = rows.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = *self.y.get(&rows[i].add(&rows[j]))?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Some(m)
    }

    /// `Σ_k ⟨F_k(x), Z_k⟩`, equal to the primal-dual gap at a KKT point.
    pub fn complementarity(&self) -> f64 {
        self.block_matrices
            .iter()
            .zip(&self.dual_blocks)
            .map(|(f, z)| f.dot(z))
            .sum()
    }

    pub fn min_block_eigenvalue(&self) -> f64 {
        self.block_matrices
            .iter()
            .map(|m| m.clone().symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Conic data of a block SDP together with the variable order.
pub(crate) struct ConicData {
    pub vars: Vec<VarKey>,
    pub a: SparseRows,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub cone: Cone,
}

pub(crate) fn to_conic(sdp: &BlockSDP) -> Result<ConicData, SolveError> {
    let vars: Vec<VarKey> = sdp.variables().into_iter().collect();
    let index: BTreeMap<&VarKey, usize> = vars.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let n = vars.len();
    let finite = |f: &crate::relaxation::AffineForm| {
        f.constant.is_finite() && f.terms.values().all(|c| c.is_finite())
    };
    if !finite(&sdp.objective) {
        return Err(SolveError::IllFormed("non-finite objective".into()));
    }
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for (k, e) in sdp.equalities.iter().enumerate() {
        if !finite(e) {
            return Err(SolveError::IllFormed(format!("non-finite equality {k}")));
        }
        rows.push(e.terms.iter().map(|(v, &c)| (index[v], c)).collect());
        b.push(-e.constant);
    }
    for (k, blk) in sdp.blocks.iter().enumerate() {
        for (i, j, f) in blk.upper() {
            if !finite(f) {
                return Err(SolveError::IllFormed(format!("non-finite entry in block {k}")));
            }
            let w = admm::svec_weight(i, j);
            rows.push(f.terms.iter().map(|(v, &c)| (index[v], -w * c)).collect());
            b.push(w * f.constant);
        }
    }
    let mut c = vec![0.0; n];
    for (v, &coef) in &sdp.objective.terms {
        c[index[v]] = coef;
    }
    Ok(ConicData {
        vars,
        a: SparseRows { ncols: n, rows },
        b,
        c,
        cone: Cone {
            zero: sdp.equalities.len(),
            psd: sdp.block_sizes(),
        },
    })
}

/// Solve a block SDP with the splitting method.
pub fn solve(sdp: &BlockSDP, opts: &SolverOptions) -> Result<MomentSolution, SolveError> {
    if !(opts.eps_primal > 0.0 && opts.eps_dual > 0.0) {
        return Err(SolveError::IllFormed("tolerances must be positive".into()));
    }
    let data = to_conic(sdp)?;
    let st = AdmmSettings {
        eps_primal: opts.eps_primal,
        eps_dual: opts.eps_dual,
        max_iters: opts.max_iters.max(1),
        alpha: opts.over_relaxation,
        scale: opts.scale,
        adaptive: opts.adaptive_scale,
        check_every: 20,
    };
    let res = admm::solve(&data.a, &data.b, &data.c, &data.cone, &st);
    let mut y = BTreeMap::new();
    let mut aux = BTreeMap::new();
    for (k, v) in data.vars.iter().zip(&res.x) {
        match k {
            VarKey::Moment(e) => {
                y.insert(e.clone(), *v);
            }
            VarKey::Aux(i) => {
                aux.insert(*i, *v);
            }
        }
    }
    let lookup = |k: &VarKey| match k {
        VarKey::Moment(e) => y.get(e).copied().unwrap_or(0.0),
        VarKey::Aux(i) => aux.get(i).copied().unwrap_or(0.0),
    };
    let ev = sdp.evaluate(&lookup);
    let mut dual_blocks = Vec::with_capacity(sdp.blocks.len());
    let mut start = data.cone.zero;
    for &d in &data.cone.psd {
        let len = d * (d + 1) / 2;
        dual_blocks.push(admm::smat(&res.y[start..start + len], d));
        start += len;
    }
    let status = match res.outcome {
        Outcome::Solved => SolveStatus::Optimal,
        Outcome::Inaccurate => SolveStatus::NearOptimal,
        Outcome::Infeasible => SolveStatus::PrimalInfeasibleSuspected,
        Outcome::Unbounded => SolveStatus::UnboundedSuspected,
        Outcome::MaxIters => SolveStatus::IterationLimit,
    };
    Ok(MomentSolution {
        status,
        objective: ev.objective,
        y,
        aux,
        block_matrices: ev.blocks,
        dual_blocks,
        residuals: (res.primal_res, res.dual_res),
        gap: res.gap,
        iterations: res.iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BisectResult {
    pub value: f64,
    /// Set when the oracle rejects `hi`.
    pub failed: bool,
    pub steps: usize,
}

/// Smallest feasible value of a monotone oracle on `[lo, hi]` up to `tol`.
pub fn bisect(mut oracle: impl FnMut(f64) -> bool, lo: f64, hi: f64, tol: f64) -> BisectResult {
    assert!(lo < hi && tol > 0.0, "bisect needs lo < hi and tol > 0");
    let mut steps = 1;
    if !oracle(hi) {
        return BisectResult {
            value: hi,
            failed: true,
            steps,
        };
    }
    steps += 1;
    if oracle(lo) {
        return BisectResult {
            value: lo,
            failed: false,
            steps,
        };
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        steps += 1;
        if oracle(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    BisectResult {
        value: b,
        failed: false,
        steps,
    }
}
