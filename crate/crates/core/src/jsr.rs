//! Joint spectral radius bounds.
//!
//! Upper bounds come from SOS certificates `p - |x|^{2r}` and
//! `γ^{2r} p - p(A_i x)` with `p` restricted to a propagated support and
//! Gram matrices restricted to chordal term-sparsity patterns. Lower bounds
//! come from spectral radii of products.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::basis::homogeneous_basis;
use crate::graph::{chordal_extension, maximal_cliques_rip, tsp_graph, Extension, GraphError};
use crate::poly::{newton_halfpolytope_of, substitute_linear, Exponent, Polynomial};
use crate::relaxation::{AffineForm, BlockOrigin, BlockSDP, RelaxMeta, SymbolicMatrix, VarKey};
use crate::sdp::{bisect, solve, SolveStatus, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JsrError {
    #[error("matrix set is empty")]
    Empty,
    #[error("matrix {index} is {rows}x{cols}, expected {n}x{n}")]
    Shape { index: usize, rows: usize, cols: usize, n: usize },
    #[error("matrix {0} has a non-finite entry")]
    NonFinite(usize),
    #[error("invalid matrix-set JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A finite set of square matrices of one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSet {
    pub n: usize,
    pub matrices: Vec<DMatrix<f64>>,
}

#[derive(Deserialize)]
struct MatrixSetJson {
    n: usize,
    matrices: Vec<Vec<f64>>,
}

impl MatrixSet {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self, JsrError> {
        let n = matrices.first().ok_or(JsrError::Empty)?.nrows();
        for (index, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(JsrError::Shape {
                    index,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    n,
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(JsrError::NonFinite(index));
            }
        }
        Ok(MatrixSet { n, matrices })
    }

    /// `{"n": 2, "matrices": [[a11, a12, a21, a22], ...]}`, row-major.
    pub fn from_json(s: &str) -> Result<Self, JsrError> {
        let raw: MatrixSetJson = serde_json::from_str(s).map_err(|e| JsrError::Json(e.to_string()))?;
        let mut ms = Vec::with_capacity(raw.matrices.len());
        for (index, data) in raw.matrices.iter().enumerate() {
            if data.len() != raw.n * raw.n {
                return Err(JsrError::Shape {
                    index,
                    rows: data.len(),
                    cols: 1,
                    n: raw.n,
                });
            }
            ms.push(DMatrix::from_row_slice(raw.n, raw.n, data));
        }
        let set = MatrixSet::new(ms)?;
        if set.n != raw.n {
            return Err(JsrError::Json("declared n does not match the matrices".into()));
        }
        Ok(set)
    }

    pub fn scaled(&self, c: f64) -> MatrixSet {
        MatrixSet {
            n: self.n,
            matrices: self.matrices.iter().map(|m| m * c).collect(),
        }
    }

    /// Columns that vanish in every matrix.
    pub fn common_zero_columns(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&j| self.matrices.iter().all(|m| m.column(j).iter().all(|v| *v == 0.0)))
            .collect()
    }

    /// Whether some matrix has a row without zeros, which makes the support
    /// chain dense after one step.
    pub fn has_dense_row(&self) -> bool {
        self.matrices
            .iter()
            .any(|m| (0..self.n).any(|i| m.row(i).iter().all(|v| *v != 0.0)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportChain {
    /// `stages[0] = {2r e_i}`, then one entry per propagation step.
    pub stages: Vec<BTreeSet<Exponent>>,
    pub stabilized: bool,
    /// Some matrix has a fully dense row, so sparsity is lost.
    pub dense_row: bool,
}

impl SupportChain {
    pub fn stage(&self, s: usize) -> &BTreeSet<Exponent> {
        &self.stages[s.min(self.stages.len() - 1)]
    }
}

/// All exponents of degree `k` on the variables `vars`.
fn monomials_on(n: usize, vars: &[usize], k: u32) -> Vec<Exponent> {
    homogeneous_basis(vars.len(), k as usize)
        .into_iter()
        .map(|e| e.embed(n, vars))
        .collect()
}

/// `supp(x^α ∘ A)` assuming generic coefficients (no cancellation).
fn image_support(alpha: &Exponent, a: &DMatrix<f64>) -> BTreeSet<Exponent> {
    let n = a.nrows();
    let mut acc: BTreeSet<Exponent> = [Exponent::zero(n)].into();
    for (i, &k) in alpha.entries().iter().enumerate() {
        if k == 0 {
            continue;
        }
        let row: Vec<usize> = (0..n).filter(|&j| a[(i, j)] != 0.0).collect();
        if row.is_empty() {
            return BTreeSet::new();
        }
        let factor = monomials_on(n, &row, k);
        acc = acc.iter().flat_map(|e| factor.iter().map(move |f| e.add(f))).collect();
    }
    acc
}

fn propagate(set: &BTreeSet<Exponent>, ms: &MatrixSet) -> BTreeSet<Exponent> {
    let mut out = set.clone();
    for a in &ms.matrices {
        for alpha in set {
            out.extend(image_support(alpha, a));
        }
    }
    out
}

/// Ascending supports for the auxiliary form `p`, propagated symbolically.
pub fn jsr_support_chain(ms: &MatrixSet, r: usize, s_max: usize) -> SupportChain {
    let n = ms.n;
    let first: BTreeSet<Exponent> = (0..n).map(|i| Exponent::unit(n, i).scale(2 * r as u32)).collect();
    let mut stages = vec![first];
    let mut stabilized = false;
    for _ in 0..s_max {
        let next = propagate(stages.last().unwrap(), ms);
        if &next == stages.last().unwrap() {
            stabilized = true;
            break;
        }
        stages.push(next);
    }
    SupportChain {
        stages,
        stabilized,
        dense_row: ms.has_dense_row(),
    }
}

/// Which SOS program to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JsrSparsity {
    /// Full homogeneous support and dense Gram matrices.
    Dense,
    /// Support `𝒜^{(s)}` and chordal term-sparsity Gram patterns.
    Sparse { s: usize, extension: Extension },
}

/// Polynomial with affine coefficients in the unknowns.
type SymPoly = BTreeMap<Exponent, AffineForm>;

fn add_numeric(target: &mut SymPoly, p: &Polynomial, coef: &AffineForm) {
    for (e, c) in p.terms() {
        let f = target.entry(e.clone()).or_default();
        *f = f.add(&coef.scale(c));
    }
}

struct Builder {
    sdp: BlockSDP,
    next_aux: usize,
    certificates: usize,
}

impl Builder {
    fn fresh(&mut self) -> VarKey {
        self.next_aux += 1;
        VarKey::Aux(self.next_aux - 1)
    }

    /// Require `q ∈ Σ(support)`: Gram blocks on the cliques of the pattern.
    fn require_sos(
        &mut self,
        q: &SymPoly,
        support: &BTreeSet<Exponent>,
        n: usize,
        r: usize,
        sparsity: JsrSparsity,
    ) -> Result<(), JsrError> {
        let cert = self.certificates;
        self.certificates += 1;
        let cliques: Vec<Vec<Exponent>> = match sparsity {
            JsrSparsity::Dense => vec![homogeneous_basis(n, r)],
            JsrSparsity::Sparse { extension, .. } => {
                let pts: Vec<Exponent> = support.iter().cloned().collect();
                let basis: Vec<Exponent> = newton_halfpolytope_of(&pts, n)
                    .into_iter()
                    .filter(|e| e.degree() as usize == r)
                    .collect();
                let g = chordal_extension(&tsp_graph(&basis, support), extension);
                let dec = maximal_cliques_rip(&g)?;
                dec.cliques
                    .iter()
                    .map(|c| c.iter().map(|&i| basis[i].clone()).collect())
                    .collect()
            }
        };
        let mut gram_sum: SymPoly = BTreeMap::new();
        for (part, rows) in cliques.iter().enumerate() {
            let d = rows.len();
            let mut keys = vec![vec![VarKey::Aux(0); d]; d];
            for i in 0..d {
                for j in i..d {
                    let k = self.fresh();
                    keys[i][j] = k.clone();
                    keys[j][i] = k.clone();
                    let w = if i == j { 1.0 } else { 2.0 };
                    gram_sum.entry(rows[i].add(&rows[j])).or_default().add_term(k, w);
                }
            }
            let m = SymbolicMatrix::from_fn(d, |i, j| AffineForm::var(keys[i][j].clone(), 1.0));
            self.sdp.push_block(m, BlockOrigin::Gram { certificate: cert, part }, rows.clone());
        }
        let monos: BTreeSet<&Exponent> = q.keys().chain(gram_sum.keys()).collect();
        let empty = AffineForm::default();
        let eqs: Vec<AffineForm> = monos
            .into_iter()
            .map(|e| {
                let lhs = q.get(e).unwrap_or(&empty);
                let rhs = gram_sum.get(e).unwrap_or(&empty);
                lhs.add(&rhs.scale(-1.0))
            })
            .collect();
        self.sdp.push_equalities(eqs);
        Ok(())
    }
}

/// The Gram feasibility SDP for a fixed `γ`, with a zero objective.
///
/// A trace regularizer turns each verdict into a minimization whose optimum
/// sits on the boundary of a thin feasible set, which stalls the solver
/// near the threshold; the plain feasibility form converges quickly.
pub fn jsr_sos_program(ms: &MatrixSet, gamma: f64, r: usize, sparsity: JsrSparsity) -> Result<BlockSDP, JsrError> {
    let n = ms.n;
    let support: BTreeSet<Exponent> = match sparsity {
        JsrSparsity::Dense => homogeneous_basis(n, 2 * r).into_iter().collect(),
        JsrSparsity::Sparse { s, .. } => jsr_support_chain(ms, r, s).stage(s).clone(),
    };
    let mut b = Builder {
        sdp: BlockSDP::new(AffineForm::default(), RelaxMeta::generic(n)),
        next_aux: 0,
        certificates: 0,
    };
    // p = Σ c_α x^α over the support
    let coeffs: Vec<(Exponent, VarKey)> = support.iter().map(|e| (e.clone(), b.fresh())).collect();

    // p - |x|^{2r}
    let mut q0: SymPoly = coeffs
        .iter()
        .map(|(e, k)| (e.clone(), AffineForm::var(k.clone(), 1.0)))
        .collect();
    let norm2 = (0..n).fold(Polynomial::zero(n), |acc, i| acc.add(&Polynomial::var(n, i).pow(2)));
    add_numeric(&mut q0, &norm2.pow(r as u32), &AffineForm::constant(-1.0));
    b.require_sos(&q0, &support, n, r, sparsity)?;

    let g2r = gamma.powi(2 * r as i32);
    for a in &ms.matrices {
        // γ^{2r} p(x) - p(A x)
        let mut q: SymPoly = coeffs
            .iter()
            .map(|(e, k)| (e.clone(), AffineForm::var(k.clone(), g2r)))
            .collect();
        let mut img_support = support.clone();
        for (e, k) in &coeffs {
            let img = substitute_linear(&Polynomial::monomial(e.clone(), 1.0), a).expect("square matrices");
            add_numeric(&mut q, &img, &AffineForm::var(k.clone(), -1.0));
            img_support.extend(image_support(e, a));
        }
        b.require_sos(&q, &img_support, n, r, sparsity)?;
    }
    Ok(b.sdp)
}

/// Whether the Gram program at `γ` is solved to optimality; an iteration
/// limit or an infeasibility verdict both count as infeasible.
pub fn jsr_sos_feasible(
    ms: &MatrixSet,
    gamma: f64,
    r: usize,
    sparsity: JsrSparsity,
    solver: &SolverOptions,
) -> Result<bool, JsrError> {
    let sdp = jsr_sos_program(ms, gamma, r, sparsity)?;
    Ok(solve(&sdp, solver).is_ok_and(|s| s.status == SolveStatus::Optimal))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JsrOptions {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub solver: SolverOptions,
}

impl Default for JsrOptions {
    fn default() -> Self {
        JsrOptions {
            lo: 0.0,
            hi: 2.0,
            tol: 1e-5,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JsrUpper {
    pub value: f64,
    /// The program was infeasible at `hi`; `value` is then not a bound.
    pub failed: bool,
    pub steps: usize,
}

/// Upper bound on the JSR by bisection on `γ`.
///
/// Both the JSR and each certificate are homogeneous, so the bisection runs
/// on the set scaled to unit spectral norm. Otherwise the `γ^{2r} p - p(A x)`
/// rows shrink like `|A|^{2r}` against `p - |x|^{2r}` and the solver stalls
/// near the threshold.
pub fn jsr_upper(ms: &MatrixSet, r: usize, sparsity: JsrSparsity, opts: &JsrOptions) -> Result<JsrUpper, JsrError> {
    // surface structural errors once instead of inside the oracle
    jsr_sos_program(ms, opts.hi, r, sparsity)?;
    let norm = ms
        .matrices
        .iter()
        .map(|m| m.clone().svd(false, false).singular_values.max())
        .fold(0.0, f64::max);
    let s = if norm > 0.0 && norm.is_finite() { norm } else { 1.0 };
    let unit = ms.scaled(1.0 / s);
    let res = bisect(
        |g| jsr_sos_feasible(&unit, g, r, sparsity, &opts.solver).unwrap_or(false),
        opts.lo / s,
        opts.hi / s,
        opts.tol / s,
    );
    Ok(JsrUpper {
        value: res.value * s,
        failed: res.failed,
        steps: res.steps,
    })
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max ρ(A_w)^{1/|w|}` over all words `w` of length at most `depth`.
pub fn jsr_lower_products(ms: &MatrixSet, depth: usize) -> f64 {
    let mut best = 0.0f64;
    let mut layer: Vec<DMatrix<f64>> = vec![DMatrix::identity(ms.n, ms.n)];
    for k in 1..=depth {
        let mut next = Vec::with_capacity(layer.len() * ms.matrices.len());
        for w in &layer {
            for a in &ms.matrices {
                let p = w * a;
                best = best.max(spectral_radius(&p).powf(1.0 / k as f64));
                next.push(p);
            }
        }
        layer = next;
    }
    best
}
