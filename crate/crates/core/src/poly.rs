//! Sparse multivariate polynomials over `f64` and support-level analyses.
//!
//! Exponents are ordered graded-lexicographically: total degree first, then
//! the exponent tuple in descending order so that `x1` precedes `x2`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp;

/// Coefficients with magnitude below this are dropped on construction.
pub const ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite coefficient at term {0}")]
    NonFinite(usize),
}

/// Exponent vector `α` of a monomial `x^α`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(entries: Vec<u32>) -> Self {
        Exponent(entries)
    }

    pub fn zero(n: usize) -> Self {
        Exponent(vec![0; n])
    }

    /// The unit exponent `e_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Exponent(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn is_even(&self) -> bool {
        self.0.iter().all(|&a| a % 2 == 0)
    }

    /// Indices of the variables with a positive exponent.
    pub fn vars(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        debug_assert_eq!(self.0.len(), other.0.len());
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, k: u32) -> Exponent {
        Exponent(self.0.iter().map(|a| a * k).collect())
    }

    /// `self / 2` when every entry is even.
    pub fn half(&self) -> Option<Exponent> {
        if self.is_even() {
            Some(Exponent(self.0.iter().map(|a| a / 2).collect()))
        } else {
            None
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&a, &xi)| acc * xi.powi(a as i32))
    }

    /// Embed an exponent on the variables `vars` into `n` variables.
    pub fn embed(&self, n: usize, vars: &[usize]) -> Exponent {
        let mut e = vec![0; n];
        for (k, &v) in vars.iter().enumerate() {
            e[v] = self.0[k];
        }
        Exponent(e)
    }

    /// Whether every variable of `self` lies in `vars`.
    pub fn supported_in(&self, vars: &[usize]) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, &a)| a == 0 || vars.contains(&i))
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if a == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, a)?;
            }
        }
        Ok(())
    }
}

impl From<Vec<u32>> for Exponent {
    fn from(v: Vec<u32>) -> Self {
        Exponent(v)
    }
}

/// A polynomial in `n` variables stored as a canonical sparse map.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "PolyJson", into = "PolyJson")]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Exponent, f64>,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    exp: Vec<u32>,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    n: usize,
    terms: Vec<TermJson>,
}

impl TryFrom<PolyJson> for Polynomial {
    type Error = PolyError;

    fn try_from(p: PolyJson) -> Result<Self, Self::Error> {
        let mut terms = Vec::with_capacity(p.terms.len());
        for (k, t) in p.terms.into_iter().enumerate() {
            if t.exp.len() != p.n {
                return Err(PolyError::DimensionMismatch {
                    expected: p.n,
                    found: t.exp.len(),
                });
            }
            if !t.coef.is_finite() {
                return Err(PolyError::NonFinite(k));
            }
            terms.push((Exponent(t.exp), t.coef));
        }
        Ok(Polynomial::from_terms(p.n, terms))
    }
}

impl From<Polynomial> for PolyJson {
    fn from(p: Polynomial) -> Self {
        PolyJson {
            n: p.n,
            terms: p
                .terms
                .into_iter()
                .map(|(e, c)| TermJson { exp: e.0, coef: c })
                .collect(),
        }
    }
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::from_terms(n, vec![(Exponent::zero(n), c)])
    }

    /// The variable `x_{i+1}` (zero-based index `i`).
    pub fn var(n: usize, i: usize) -> Self {
        Self::from_terms(n, vec![(Exponent::unit(n, i), 1.0)])
    }

    pub fn monomial(exp: Exponent, c: f64) -> Self {
        let n = exp.nvars();
        Self::from_terms(n, vec![(exp, c)])
    }

    /// Sum like terms and drop negligible coefficients.
    pub fn from_terms<I>(n: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Exponent, f64)>,
    {
        let mut map: BTreeMap<Exponent, f64> = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.nvars(), n, "exponent length must equal n");
            *map.entry(e).or_insert(0.0) += c;
        }
        map.retain(|_, c| c.abs() >= ZERO_TOL);
        Polynomial { n, terms: map }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, e: &Exponent) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    /// `⌈deg/2⌉`.
    pub fn half_degree(&self) -> usize {
        (self.degree() as usize).div_ceil(2)
    }

    /// Variables appearing in some term, in increasing order.
    pub fn variables(&self) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for e in self.terms.keys() {
            set.extend(e.vars());
        }
        set.into_iter().collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(e, c)| c * e.eval(x)).sum()
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        Self::from_terms(
            self.n,
            self.terms
                .iter()
                .chain(other.terms.iter())
                .map(|(e, &c)| (e.clone(), c)),
        )
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Self::from_terms(self.n, self.terms.iter().map(|(e, &c)| (e.clone(), c * s)))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                out.push((a.add(b), ca * cb));
            }
        }
        Self::from_terms(self.n, out)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.n, 1.0);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Multiply by the monomial `x^e`.
    pub fn shift(&self, e: &Exponent) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(a, &c)| (a.add(e), c)).collect(),
        }
    }
}

/// Exact support of a canonical polynomial.
pub fn support(p: &Polynomial) -> BTreeSet<Exponent> {
    p.terms.keys().cloned().collect()
}

/// The polynomial `x ↦ p(Mx)`.
pub fn substitute_linear(p: &Polynomial, m: &DMatrix<f64>) -> Result<Polynomial, PolyError> {
    let n = p.nvars();
    if m.nrows() != n || m.ncols() != n {
        return Err(PolyError::DimensionMismatch {
            expected: n,
            found: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    let rows: Vec<Polynomial> = (0..n)
        .map(|i| {
            Polynomial::from_terms(
                n,
                (0..n).map(|j| (Exponent::unit(n, j), m[(i, j)])),
            )
        })
        .collect();
    let mut out = Polynomial::zero(n);
    for (e, c) in p.terms() {
        let mut term = Polynomial::constant(n, c);
        for (i, &a) in e.entries().iter().enumerate() {
            if a > 0 {
                term = term.mul(&rows[i].pow(a));
            }
        }
        out = out.add(&term);
    }
    Ok(out)
}

/// Whether `target` lies in the convex hull of `points` (LP feasibility).
pub fn in_convex_hull(points: &[Exponent], target: &[f64]) -> bool {
    if points.is_empty() {
        return false;
    }
    let n = target.len();
    let k = points.len();
    let mut a = DMatrix::zeros(n + 1, k);
    for (j, p) in points.iter().enumerate() {
        for i in 0..n {
            a[(i, j)] = p.entries()[i] as f64;
        }
        a[(n, j)] = 1.0;
    }
    let mut b: Vec<f64> = target.to_vec();
    b.push(1.0);
    lp::feasible(&a, &b)
}

/// Lattice points `β` with `2β ∈ conv(supp(p))`.
pub fn newton_halfpolytope(p: &Polynomial) -> BTreeSet<Exponent> {
    newton_halfpolytope_of(&support(p).into_iter().collect::<Vec<_>>(), p.nvars())
}

/// Half Newton polytope of an explicit point set.
pub fn newton_halfpolytope_of(points: &[Exponent], n: usize) -> BTreeSet<Exponent> {
    let mut out = BTreeSet::new();
    if points.is_empty() {
        return out;
    }
    let lo: Vec<u32> = (0..n)
        .map(|i| {
            let m = points.iter().map(|e| e.entries()[i]).min().unwrap();
            m.div_ceil(2)
        })
        .collect();
    let hi: Vec<u32> = (0..n)
        .map(|i| points.iter().map(|e| e.entries()[i]).max().unwrap() / 2)
        .collect();
    let dmin = points.iter().map(Exponent::degree).min().unwrap().div_ceil(2);
    let dmax = points.iter().map(Exponent::degree).max().unwrap() / 2;
    let present: BTreeSet<&Exponent> = points.iter().collect();
    let mut cur = lo.clone();
    loop {
        let cand = Exponent(cur.clone());
        let d = cand.degree();
        if d >= dmin && d <= dmax {
            let twice = cand.scale(2);
            let inside = present.contains(&twice) || {
                let t: Vec<f64> = twice.entries().iter().map(|&a| a as f64).collect();
                in_convex_hull(points, &t)
            };
            if inside {
                out.insert(cand);
            }
        }
        // odometer increment over the bounding box
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            if cur[i] < hi[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = lo[i];
            i += 1;
        }
    }
}

/// Binary generators of the sign-symmetry group of a support set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignSymmetryBasis {
    pub n: usize,
    pub generators: Vec<Vec<u8>>,
}

impl SignSymmetryBasis {
    /// Whether `s⊺α ≡ 0 (mod 2)` for every generator `s`.
    pub fn annihilates(&self, alpha: &Exponent) -> bool {
        self.generators.iter().all(|s| {
            s.iter()
                .zip(alpha.entries())
                .map(|(&si, &a)| si as u32 * (a % 2))
                .sum::<u32>()
                % 2
                == 0
        })
    }

    /// Whether the binary vector `v` lies in the span of the generators.
    pub fn spans(&self, v: &[u8]) -> bool {
        let mut rows: Vec<Vec<u8>> = self.generators.clone();
        let rank = gf2_rank(&mut rows.clone(), self.n);
        rows.push(v.to_vec());
        gf2_rank(&mut rows, self.n) == rank
    }
}

fn gf2_rank(rows: &mut [Vec<u8>], n: usize) -> usize {
    let mut rank = 0;
    for col in 0..n {
        if let Some(p) = (rank..rows.len()).find(|&r| rows[r][col] == 1) {
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank && rows[r][col] == 1 {
                    let pivot = rows[rank].clone();
                    for (x, y) in rows[r].iter_mut().zip(pivot) {
                        *x ^= y;
                    }
                }
            }
            rank += 1;
        }
    }
    rank
}

/// GF(2) kernel basis of the support reduced mod 2.
pub fn sign_symmetries(a: &[Exponent]) -> SignSymmetryBasis {
    let n = a.first().map(Exponent::nvars).unwrap_or(0);
    let mut rows: Vec<Vec<u8>> = a
        .iter()
        .map(|e| e.entries().iter().map(|&x| (x % 2) as u8).collect())
        .collect();
    // reduced row echelon form over GF(2)
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        if let Some(p) = (rank..rows.len()).find(|&r| rows[r][col] == 1) {
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank && rows[r][col] == 1 {
                    let pivot = rows[rank].clone();
                    for (x, y) in rows[r].iter_mut().zip(pivot) {
                        *x ^= y;
                    }
                }
            }
            pivots.push(col);
            rank += 1;
        }
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let generators = free
        .iter()
        .map(|&f| {
            let mut v = vec![0u8; n];
            v[f] = 1;
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = rows[r][f];
            }
            v
        })
        .collect();
    SignSymmetryBasis { n, generators }
}
