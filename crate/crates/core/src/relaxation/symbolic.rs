//! Affine forms in moment variables, symbolic matrices and block SDPs.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::poly::{Exponent, Polynomial, ZERO_TOL};

/// Key of a decision variable: a moment `y_α` or an auxiliary unknown.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VarKey {
    Moment(Exponent),
    Aux(usize),
}

/// `constant + Σ coef·var`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AffineForm {
    pub terms: BTreeMap<VarKey, f64>,
    pub constant: f64,
}

impl AffineForm {
    pub fn constant(c: f64) -> Self {
        AffineForm {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(k: VarKey, c: f64) -> Self {
        let mut f = AffineForm::default();
        f.add_term(k, c);
        f
    }

    pub fn add_term(&mut self, k: VarKey, c: f64) {
        let e = self.terms.entry(k.clone()).or_insert(0.0);
        *e += c;
        if e.abs() < ZERO_TOL {
            self.terms.remove(&k);
        }
    }

    /// `L_y(g · x^shift) = Σ_δ g_δ y_{δ+shift}`.
    pub fn riesz(g: &Polynomial, shift: &Exponent) -> Self {
        let mut f = AffineForm::default();
        for (d, c) in g.terms() {
            f.add_term(VarKey::Moment(d.add(shift)), c);
        }
        f
    }

    pub fn scale(&self, s: f64) -> Self {
        AffineForm {
            terms: self.terms.iter().map(|(k, &c)| (k.clone(), c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn add(&self, other: &AffineForm) -> Self {
        let mut f = self.clone();
        for (k, &c) in &other.terms {
            f.add_term(k.clone(), c);
        }
        f.constant += other.constant;
        f
    }

    pub fn eval(&self, value: &dyn Fn(&VarKey) -> f64) -> f64 {
        self.constant + self.terms.iter().map(|(k, c)| c * value(k)).sum::<f64>()
    }

    /// Bitwise key used for exact de-duplication.
    pub fn key(&self) -> (Vec<(VarKey, u64)>, u64) {
        (
            self.terms
                .iter()
                .map(|(k, c)| (k.clone(), c.to_bits()))
                .collect(),
            self.constant.to_bits(),
        )
    }
}

/// Symmetric matrix of affine forms, stored as the packed upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicMatrix {
    dim: usize,
    entries: Vec<AffineForm>,
}

impl SymbolicMatrix {
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> AffineForm) -> Self {
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                entries.push(f(i, j));
            }
        }
        SymbolicMatrix { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * (2 * self.dim - i + 1) / 2 + (j - i)
    }

    pub fn entry(&self, i: usize, j: usize) -> &AffineForm {
        &self.entries[self.idx(i, j)]
    }

    /// Upper-triangle entries `(i, j, form)` with `i ≤ j`.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, &AffineForm)> {
        let dim = self.dim;
        (0..dim)
            .flat_map(move |i| (i..dim).map(move |j| (i, j)))
            .zip(self.entries.iter())
            .map(|((i, j), f)| (i, j, f))
    }

    pub fn eval(&self, value: &dyn Fn(&VarKey) -> f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, f) in self.upper() {
            let v = f.eval(value);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }
}

/// `[M(g y)]_{β,γ} = L_y(g x^{β+γ})` over the given row monomials.
pub fn localizing_matrix(rows: &[Exponent], g: &Polynomial) -> SymbolicMatrix {
    SymbolicMatrix::from_fn(rows.len(), |i, j| {
        AffineForm::riesz(g, &rows[i].add(&rows[j]))
    })
}

/// Where a PSD block came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockOrigin {
    /// Moment matrix (or one of its term-sparsity blocks) of a clique.
    Moment { clique: usize, part: usize },
    /// Localizing matrix of constraint `constraint` assigned to `clique`.
    Localizing {
        constraint: usize,
        clique: usize,
        part: usize,
    },
    /// Scalar inequality `L_y(g_j) ≥ 0` for a constraint outside every clique.
    Scalar { constraint: usize },
    /// Extra dense order-one moment matrix of a clique.
    FirstOrder { clique: usize },
    /// Gram matrix block of an SOS certificate.
    Gram { certificate: usize, part: usize },
    /// Block read from a file or built by hand.
    Generic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockInfo {
    pub origin: BlockOrigin,
    /// Row monomials for moment-type blocks; empty otherwise.
    pub rows: Vec<Exponent>,
}

/// Which family of relaxations produced a block SDP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Dense,
    Cs,
    Ts,
    CsTs,
    MinimalInitial,
    Other,
}

/// Structural metadata of a relaxation.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxMeta {
    pub n: usize,
    pub mode: Mode,
    pub r: usize,
    pub s: Option<usize>,
    /// Variable cliques (zero-based), one per moment block family.
    pub cliques: Vec<Vec<usize>>,
    /// Relaxation order used in each clique.
    pub orders: Vec<usize>,
    /// Constraint indices owned by each clique.
    pub assignment: Vec<Vec<usize>>,
    /// Constraints realized as scalar inequalities/equalities.
    pub scalar_constraints: Vec<usize>,
}

impl RelaxMeta {
    pub fn generic(n: usize) -> Self {
        RelaxMeta {
            n,
            mode: Mode::Other,
            r: 0,
            s: None,
            cliques: Vec::new(),
            orders: Vec::new(),
            assignment: Vec::new(),
            scalar_constraints: Vec::new(),
        }
    }
}

/// `min objective s.t. blocks ⪰ 0, equalities = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSDP {
    pub objective: AffineForm,
    pub blocks: Vec<SymbolicMatrix>,
    pub info: Vec<BlockInfo>,
    pub equalities: Vec<AffineForm>,
    pub meta: RelaxMeta,
}

/// Numeric realization of a block SDP at a point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: f64,
    pub blocks: Vec<DMatrix<f64>>,
    pub equalities: Vec<f64>,
}

impl BlockSDP {
    pub fn new(objective: AffineForm, meta: RelaxMeta) -> Self {
        BlockSDP {
            objective,
            blocks: Vec::new(),
            info: Vec::new(),
            equalities: Vec::new(),
            meta,
        }
    }

    pub fn push_block(&mut self, m: SymbolicMatrix, origin: BlockOrigin, rows: Vec<Exponent>) {
        self.blocks.push(m);
        self.info.push(BlockInfo { origin, rows });
    }

    /// Append equalities, skipping exact duplicates and identically-zero forms.
    pub fn push_equalities(&mut self, forms: impl IntoIterator<Item = AffineForm>) {
        let mut seen: BTreeSet<_> = self.equalities.iter().map(AffineForm::key).collect();
        for f in forms {
            if f.terms.is_empty() && f.constant == 0.0 {
                continue;
            }
            if seen.insert(f.key()) {
                self.equalities.push(f);
            }
        }
    }

    /// Every variable appearing anywhere, in key order.
    pub fn variables(&self) -> BTreeSet<VarKey> {
        let mut out: BTreeSet<VarKey> = self.objective.terms.keys().cloned().collect();
        for b in &self.blocks {
            for (_, _, f) in b.upper() {
                out.extend(f.terms.keys().cloned());
            }
        }
        for e in &self.equalities {
            out.extend(e.terms.keys().cloned());
        }
        out
    }

    pub fn moment_variables(&self) -> Vec<Exponent> {
        self.variables()
            .into_iter()
            .filter_map(|k| match k {
                VarKey::Moment(e) => Some(e),
                VarKey::Aux(_) => None,
            })
            .collect()
    }

    pub fn num_moment_vars(&self) -> usize {
        self.moment_variables().len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(SymbolicMatrix::dim).collect()
    }

    /// Sizes of the moment-matrix blocks belonging to clique `k`.
    pub fn moment_block_sizes(&self, k: usize) -> Vec<usize> {
        self.blocks
            .iter()
            .zip(&self.info)
            .filter(|(_, i)| matches!(i.origin, BlockOrigin::Moment { clique, .. } if clique == k))
            .map(|(b, _)| b.dim())
            .collect()
    }

    /// `Σ_k |{β+γ : β, γ rows of a moment block of clique k}|`.
    pub fn moment_slot_count(&self) -> usize {
        let mut per: BTreeMap<usize, BTreeSet<Exponent>> = BTreeMap::new();
        for info in &self.info {
            if let BlockOrigin::Moment { clique, .. } = info.origin {
                let set = per.entry(clique).or_default();
                for a in &info.rows {
                    for b in &info.rows {
                        set.insert(a.add(b));
                    }
                }
            }
        }
        per.values().map(BTreeSet::len).sum()
    }

    pub fn evaluate(&self, value: &dyn Fn(&VarKey) -> f64) -> Evaluation {
        Evaluation {
            objective: self.objective.eval(value),
            blocks: self.blocks.iter().map(|b| b.eval(value)).collect(),
            equalities: self.equalities.iter().map(|e| e.eval(value)).collect(),
        }
    }

    /// Evaluate with `y_α = x^α` (auxiliary variables set to zero).
    pub fn evaluate_at_point(&self, x: &[f64]) -> Evaluation {
        self.evaluate(&|k| match k {
            VarKey::Moment(e) => e.eval(x),
            VarKey::Aux(_) => 0.0,
        })
    }
}
