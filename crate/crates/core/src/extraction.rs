//! Flatness detection and extraction of atoms from moment matrices.
//!
//! Extraction follows the classical route: factor `M = V Vᵀ`, bring `V` to
//! column echelon form, read off the multiplication matrices `N_i` of the
//! quotient basis, and simultaneously triangularize them through an ordered
//! real Schur form of a random combination `N = Σ λ_i N_i`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::basis::clique_basis;
use crate::poly::Exponent;
use crate::pop::Pop;
use crate::sdp::MomentSolution;

/// Singular values below this fraction of the largest one count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("row {0} needed by a multiplication matrix lies beyond the moment order")]
    EchelonFailure(String),
    #[error("moment matrix of size {0} does not match a full monomial basis")]
    DimensionMismatch(usize),
    #[error("moment value {0} is missing from the solution")]
    MissingMoment(String),
    #[error("the combined multiplication matrix has complex eigenvalues")]
    ComplexSpectrum,
    #[error("clique atoms disagree on shared variables by {0:.3e}")]
    OverlapMismatch(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlatnessReport {
    /// Numeric rank of `M_k(y)` for each truncation order `k`.
    pub ranks: BTreeMap<usize, usize>,
    /// Smallest `k` with `rank M_k = rank M_{k-d}`.
    pub flat_at: Option<usize>,
    pub tol: f64,
    /// Per order: smallest kept over largest dropped singular value
    /// (infinite when nothing is dropped). Values near 1 mean a fragile rank.
    pub margins: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtractedSolutions {
    pub points: Vec<Vec<f64>>,
    /// Atom weights, fitted to the first column of the moment matrix.
    pub weights: Vec<f64>,
    pub certified: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    pub rank_tol: f64,
    /// Feasibility tolerance when certifying points against the POP.
    pub feas_tol: f64,
    /// Allowed `|f(x) - bound|`, relative to `1 + |bound|`.
    pub obj_tol: f64,
    pub seed: u64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            rank_tol: DEFAULT_RANK_TOL,
            feas_tol: 1e-4,
            obj_tol: 1e-3,
            seed: 0,
        }
    }
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().symmetric_eigenvalues().iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numeric rank with the relative cutoff, plus the margin around the cutoff.
pub fn numeric_rank(m: &DMatrix<f64>, tol: f64) -> (usize, f64) {
    let s = sorted_singular_values(m);
    let Some(&top) = s.first() else {
        return (0, f64::INFINITY);
    };
    if top == 0.0 {
        return (0, f64::INFINITY);
    }
    let rank = s.iter().take_while(|&&v| v >= tol * top).count();
    let margin = match (rank, s.get(rank)) {
        (_, None) => f64::INFINITY,
        (0, _) => 0.0,
        (k, Some(&d)) => {
            if d == 0.0 {
                f64::INFINITY
            } else {
                s[k - 1] / d
            }
        }
    };
    (rank, margin)
}

fn moment_matrix(y: &BTreeMap<Exponent, f64>, rows: &[Exponent]) -> Result<DMatrix<f64>, ExtractError> {
    let d = rows.len();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let e = rows[i].add(&rows[j]);
            let v = *y.get(&e).ok_or_else(|| ExtractError::MissingMoment(e.to_string()))?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Ranks of `M_k(y)` for `k = 0..=r` and the first flat order `k ≥ d`.
pub fn flatness_rank(y: &BTreeMap<Exponent, f64>, n: usize, r: usize, d: usize, tol: f64) -> FlatnessReport {
    let vars: Vec<usize> = (0..n).collect();
    flatness_rank_on(y, n, &vars, r, d, tol)
}

/// [`flatness_rank`] restricted to the variables `vars`.
pub fn flatness_rank_on(
    y: &BTreeMap<Exponent, f64>,
    n: usize,
    vars: &[usize],
    r: usize,
    d: usize,
    tol: f64,
) -> FlatnessReport {
    let mut ranks = BTreeMap::new();
    let mut margins = BTreeMap::new();
    for k in 0..=r {
        let Ok(m) = moment_matrix(y, &clique_basis(n, vars, k)) else {
            break;
        };
        let (rk, margin) = numeric_rank(&m, tol);
        ranks.insert(k, rk);
        margins.insert(k, margin);
    }
    let flat_at = (d.max(1)..=r).find(|&k| match (ranks.get(&k), ranks.get(&(k - d))) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    });
    FlatnessReport {
        ranks,
        flat_at,
        tol,
        margins,
    }
}

/// Reduced column echelon form of `v` (rows = monomials); returns it with the pivot rows.
fn column_echelon(v: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    // row-reduce the transpose with partial pivoting
    let mut a = v.transpose();
    let (t, s) = a.shape();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..s {
        if row == t {
            break;
        }
        let (best, val) = (row..t)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol * scale {
            for i in row..t {
                a[(i, col)] = 0.0;
            }
            continue;
        }
        a.swap_rows(row, best);
        let p = a[(row, col)];
        for j in 0..s {
            a[(row, j)] /= p;
        }
        for i in 0..t {
            if i != row {
                let f = a[(i, col)];
                if f != 0.0 {
                    for j in 0..s {
                        a[(i, j)] -= f * a[(row, j)];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    (a.rows(0, pivots.len()).transpose(), pivots)
}

/// Swap adjacent 1×1 diagonal entries `k`, `k+1` of the triangular `t`.
fn swap_adjacent(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, k: usize) {
    let (a, b, c) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k + 1)]);
    let (x, y) = (b, c - a);
    let h = x.hypot(y);
    if h == 0.0 {
        return;
    }
    let (cs, sn) = (x / h, y / h);
    let n = t.nrows();
    // T ← Gᵀ T G with G = [[cs, -sn], [sn, cs]] on (k, k+1)
    for j in 0..n {
        let (u, v) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = cs * u + sn * v;
        t[(k + 1, j)] = -sn * u + cs * v;
    }
    for i in 0..n {
        let (u, v) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = cs * u + sn * v;
        t[(i, k + 1)] = -sn * u + cs * v;
    }
    for i in 0..q.nrows() {
        let (u, v) = (q[(i, k)], q[(i, k + 1)]);
        q[(i, k)] = cs * u + sn * v;
        q[(i, k + 1)] = -sn * u + cs * v;
    }
    t[(k + 1, k)] = 0.0;
}

/// Real Schur form `N = Q T Qᵀ` with the diagonal of `T` increasing.
fn ordered_schur(n: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), ExtractError> {
    let dim = n.nrows();
    let schur = nalgebra::linalg::Schur::try_new(n.clone(), f64::EPSILON, 10_000).ok_or(ExtractError::ComplexSpectrum)?;
    let (mut q, mut t) = schur.unpack();
    let scale = t.amax().max(1.0);
    for k in 0..dim.saturating_sub(1) {
        if t[(k + 1, k)].abs() > 1e-10 * scale {
            return Err(ExtractError::ComplexSpectrum);
        }
        t[(k + 1, k)] = 0.0;
    }
    // bubble sort on the diagonal
    for pass in 0..dim {
        let mut swapped = false;
        for k in 0..dim.saturating_sub(1 + pass) {
            if t[(k, k)] > t[(k + 1, k + 1)] {
                swap_adjacent(&mut t, &mut q, k);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    Ok((q, t))
}

/// Atoms of a moment matrix whose rows are indexed by `basis`; coordinates
/// are returned for the variables `vars` in that order.
pub fn extract_with_basis(
    m: &DMatrix<f64>,
    basis: &[Exponent],
    vars: &[usize],
    tol: f64,
    seed: u64,
) -> Result<ExtractedSolutions, ExtractError> {
    assert_eq!(m.nrows(), basis.len());
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] >= tol * top)
        .collect();
    if kept.is_empty() {
        return Ok(ExtractedSolutions {
            points: Vec::new(),
            weights: Vec::new(),
            certified: false,
        });
    }
    let v = DMatrix::from_fn(basis.len(), kept.len(), |i, j| {
        eig.eigenvectors[(i, kept[j])] * eig.eigenvalues[kept[j]].sqrt()
    });
    let (u, pivots) = column_echelon(&v, tol);
    let t = pivots.len();
    let index: BTreeMap<&Exponent, usize> = basis.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let n = basis[0].nvars();

    let mut mults = Vec::with_capacity(vars.len());
    for &var in vars {
        let unit = Exponent::unit(n, var);
        let mut ni = DMatrix::zeros(t, t);
        for (k, &p) in pivots.iter().enumerate() {
            let target = basis[p].add(&unit);
            let &row = index.get(&target).ok_or_else(|| ExtractError::EchelonFailure(target.to_string()))?;
            for j in 0..t {
                ni[(k, j)] = u[(row, j)];
            }
        }
        mults.push(ni);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lambda: Vec<f64> = (0..vars.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= total);
    let mut comb = DMatrix::zeros(t, t);
    for (l, ni) in lambda.iter().zip(&mults) {
        comb += ni * *l;
    }
    let (q, _) = ordered_schur(&comb)?;
    let points: Vec<Vec<f64>> = (0..t)
        .map(|j| {
            let qj = q.column(j);
            mults.iter().map(|ni| qj.dot(&(ni * qj))).collect()
        })
        .collect();

    // weights from y_β = Σ κ_j x_j^β on the row basis
    let full: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut x = vec![0.0; n];
            for (&var, &c) in vars.iter().zip(p) {
                x[var] = c;
            }
            x
        })
        .collect();
    let vand = DMatrix::from_fn(basis.len(), t, |i, j| basis[i].eval(&full[j]));
    let rhs = DVector::from_fn(basis.len(), |i, _| m[(i, 0)]);
    let weights = vand
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map(|w| w.iter().copied().collect())
        .unwrap_or_else(|_| vec![f64::NAN; t]);

    // recombination check
    let mut rec = DMatrix::zeros(basis.len(), basis.len());
    for (j, w) in weights.iter().enumerate() {
        let col = vand.column(j);
        rec += col * col.transpose() * *w;
    }
    let err = (&rec - m).norm();
    let certified = err <= 1e2 * tol.max(1e-8) * m.norm() && weights.iter().all(|w| *w > 0.0);
    Ok(ExtractedSolutions {
        points,
        weights,
        certified,
    })
}

/// Atoms of `M` indexed by the full graded-lex basis of `n` variables.
pub fn extract(m: &DMatrix<f64>, n: usize, tol: f64, seed: u64) -> Result<ExtractedSolutions, ExtractError> {
    let dim = m.nrows();
    let vars: Vec<usize> = (0..n).collect();
    let mut r = 0;
    loop {
        let basis = clique_basis(n, &vars, r);
        if basis.len() == dim {
            return extract_with_basis(m, &basis, &vars, tol, seed);
        }
        if basis.len() > dim {
            return Err(ExtractError::DimensionMismatch(dim));
        }
        r += 1;
    }
}

fn point_ok(pop: &Pop, x: &[f64], bound: f64, opts: &ExtractOptions) -> bool {
    pop.is_feasible(x, opts.feas_tol) && (pop.objective.eval(x) - bound).abs() <= opts.obj_tol * (1.0 + bound.abs())
}

fn constraint_offset(pop: &Pop, vars: Option<&[usize]>) -> usize {
    pop.constraints()
        .into_iter()
        .filter(|(_, g)| vars.map_or(true, |v| g.variables().iter().all(|i| v.contains(i))))
        .map(|(_, g)| g.half_degree())
        .max()
        .unwrap_or(1)
        .max(1)
}

/// Dense route: find the flat order and extract there.
pub fn extract_dense(
    pop: &Pop,
    sol: &MomentSolution,
    r: usize,
    opts: &ExtractOptions,
) -> (FlatnessReport, Result<ExtractedSolutions, ExtractError>) {
    let d = constraint_offset(pop, None);
    let report = flatness_rank(&sol.y, pop.n, r, d, opts.rank_tol);
    let k = report.flat_at.unwrap_or(r);
    let vars: Vec<usize> = (0..pop.n).collect();
    let basis = clique_basis(pop.n, &vars, k);
    let result = moment_matrix(&sol.y, &basis).and_then(|m| {
        let mut ex = extract_with_basis(&m, &basis, &vars, opts.rank_tol, opts.seed)?;
        ex.certified = ex.certified
            && report.flat_at.is_some()
            && !ex.points.is_empty()
            && ex.points.iter().all(|x| point_ok(pop, x, sol.objective, opts));
        Ok(ex)
    });
    (report, result)
}

fn shared(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|v| b.contains(v)).collect()
}

/// Correlative-sparse route: per-clique flatness with rank-one overlaps, or
/// the first-order fallback reading `x_i = y_{e_i}` from rank-one `M_1` blocks.
pub fn extract_cs(
    pop: &Pop,
    sol: &MomentSolution,
    cliques: &[Vec<usize>],
    r: usize,
    opts: &ExtractOptions,
) -> Result<ExtractedSolutions, ExtractError> {
    let n = pop.n;
    let mut flat = true;
    for c in cliques {
        let d = constraint_offset(pop, Some(c));
        let rep = flatness_rank_on(&sol.y, n, c, r, d, opts.rank_tol);
        flat &= rep.flat_at.is_some();
    }
    for (i, a) in cliques.iter().enumerate() {
        for b in &cliques[i + 1..] {
            let s = shared(a, b);
            if s.is_empty() {
                continue;
            }
            let rep = flatness_rank_on(&sol.y, n, &s, r, 1, opts.rank_tol);
            flat &= rep.ranks.get(&r) == Some(&1);
        }
    }

    let candidates = if flat {
        stitch_atoms(sol, cliques, n, r, opts)?
    } else {
        first_order_point(sol, cliques, n, opts).into_iter().collect()
    };
    let certified = !candidates.is_empty() && candidates.iter().all(|x| point_ok(pop, x, sol.objective, opts));
    let k = candidates.len();
    Ok(ExtractedSolutions {
        points: candidates,
        weights: vec![1.0 / k.max(1) as f64; k],
        certified,
    })
}

fn overlap_tol(opts: &ExtractOptions) -> f64 {
    opts.rank_tol.sqrt().max(1e-6)
}

fn stitch_atoms(
    sol: &MomentSolution,
    cliques: &[Vec<usize>],
    n: usize,
    r: usize,
    opts: &ExtractOptions,
) -> Result<Vec<Vec<f64>>, ExtractError> {
    const MAX_POINTS: usize = 64;
    let tol = overlap_tol(opts);
    let mut partial: Vec<(Vec<f64>, BTreeSet<usize>)> = vec![(vec![0.0; n], BTreeSet::new())];
    let mut worst = 0.0f64;
    for c in cliques {
        let basis = clique_basis(n, c, r);
        let m = moment_matrix(&sol.y, &basis)?;
        let atoms = extract_with_basis(&m, &basis, c, opts.rank_tol, opts.seed)?.points;
        let mut next = Vec::new();
        for (x, fixed) in &partial {
            for atom in &atoms {
                let gap = c
                    .iter()
                    .zip(atom)
                    .filter(|(v, _)| fixed.contains(v))
                    .map(|(&v, &a)| (x[v] - a).abs())
                    .fold(0.0, f64::max);
                if gap > tol {
                    worst = worst.max(gap);
                    continue;
                }
                let mut y = x.clone();
                let mut f = fixed.clone();
                for (&v, &a) in c.iter().zip(atom) {
                    if !f.contains(&v) {
                        y[v] = a;
                        f.insert(v);
                    }
                }
                if next.len() < MAX_POINTS {
                    next.push((y, f));
                }
            }
        }
        if next.is_empty() {
            return Err(ExtractError::OverlapMismatch(worst));
        }
        partial = next;
    }
    Ok(partial.into_iter().map(|(x, _)| x).collect())
}

fn first_order_point(sol: &MomentSolution, cliques: &[Vec<usize>], n: usize, opts: &ExtractOptions) -> Option<Vec<f64>> {
    for c in cliques {
        let m = moment_matrix(&sol.y, &clique_basis(n, c, 1)).ok()?;
        if numeric_rank(&m, opts.rank_tol).0 != 1 {
            return None;
        }
    }
    (0..n)
        .map(|i| sol.y.get(&Exponent::unit(n, i)).copied())
        .collect()
}
