mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::jsr_pair;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsepop::graph::Extension;
use sparsepop::jsr::{
    jsr_lower_products, jsr_sos_feasible, jsr_support_chain, jsr_upper, spectral_radius, JsrOptions, JsrSparsity,
    MatrixSet,
};
use sparsepop::sdp::SolverOptions;
use sparsepop::Exponent;

const TOL: f64 = 1e-5;
/// Bisection width for the random properties. Near the threshold the
/// feasibility verdicts are unreliable in a band of up to a few 1e-4 on
/// nearly degenerate sets, so comparisons across runs use a wider grid.
const PROP_TOL: f64 = 1e-3;

fn set(n: usize, ms: &[&[f64]]) -> MatrixSet {
    MatrixSet::new(ms.iter().map(|m| DMatrix::from_row_slice(n, n, m)).collect()).unwrap()
}

fn sparse(s: usize) -> JsrSparsity {
    JsrSparsity::Sparse {
        s,
        extension: Extension::Maximal,
    }
}

fn upper_at(ms: &MatrixSet, r: usize, sp: JsrSparsity, tol: f64) -> f64 {
    let opts = JsrOptions {
        tol,
        ..JsrOptions::default()
    };
    let res = jsr_upper(ms, r, sp, &opts).unwrap();
    assert!(!res.failed);
    res.value
}

fn upper(ms: &MatrixSet, r: usize, sp: JsrSparsity) -> f64 {
    upper_at(ms, r, sp, TOL)
}

fn coarse(ms: &MatrixSet, r: usize, sp: JsrSparsity) -> f64 {
    upper_at(ms, r, sp, PROP_TOL)
}

type Dense = BTreeMap<Vec<u32>, f64>;

fn mul(a: &Dense, b: &Dense) -> Dense {
    let mut out = Dense::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_default() += ca * cb;
        }
    }
    out
}

/// Support of `p(A x)` for a numeric `p`, expanded term by term.
fn image_support_numeric(p: &Dense, a: &DMatrix<f64>) -> BTreeSet<Vec<u32>> {
    let n = a.nrows();
    let rows: Vec<Dense> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| a[(i, j)] != 0.0)
                .map(|j| {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    (e, a[(i, j)])
                })
                .collect()
        })
        .collect();
    let mut total = Dense::new();
    for (alpha, c) in p {
        let mut t: Dense = [(vec![0; n], *c)].into();
        for (i, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                t = mul(&t, &rows[i]);
            }
        }
        for (e, v) in t {
            *total.entry(e).or_default() += v;
        }
    }
    total.into_iter().filter(|(_, v)| v.abs() > 1e-12).map(|(e, _)| e).collect()
}

/// The support recurrence with random coefficients in (0, 1).
fn support_oracle(ms: &MatrixSet, r: usize, steps: usize, seed: u64) -> BTreeSet<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ms.n;
    let mut cur: BTreeSet<Vec<u32>> = (0..n)
        .map(|i| {
            let mut e = vec![0; n];
            e[i] = 2 * r as u32;
            e
        })
        .collect();
    for _ in 0..steps {
        let p: Dense = cur.iter().map(|e| (e.clone(), rng.gen_range(0.01..1.0))).collect();
        let mut next = cur.clone();
        for a in &ms.matrices {
            next.extend(image_support_numeric(&p, a));
        }
        cur = next;
    }
    cur
}

fn raw(s: &BTreeSet<Exponent>) -> BTreeSet<Vec<u32>> {
    s.iter().map(|e| e.entries().to_vec()).collect()
}

#[test]
fn support_chain_matches_random_coefficients() {
    let pair = jsr_pair();
    for r in [1, 2] {
        let ch = jsr_support_chain(&pair, r, 10);
        assert!(ch.stabilized);
        let last = ch.stages.last().unwrap();
        assert_eq!(raw(last), support_oracle(&pair, r, ch.stages.len() + 2, 7));
        for w in ch.stages.windows(2) {
            assert!(w[0].is_subset(&w[1]) && w[0] != w[1]);
        }
        assert!(ch.stages.iter().flatten().all(|e| e.degree() as usize == 2 * r));
    }
}

#[test]
fn diagonal_sets_keep_pure_powers() {
    let ms = set(3, &[&[0.5, 0., 0., 0., -1., 0., 0., 0., 2.], &[3., 0., 0., 0., 0., 0., 0., 0., 1.]]);
    let ch = jsr_support_chain(&ms, 2, 4);
    assert!(ch.stabilized && !ch.dense_row);
    assert_eq!(ch.stages.len(), 1);
    assert_eq!(raw(&ch.stages[0]), [vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4]].into());
}

#[test]
fn common_zero_columns_stay_isolated() {
    let pair = jsr_pair();
    assert_eq!(pair.common_zero_columns(), vec![2]);
    for r in [1, 2] {
        let ch = jsr_support_chain(&pair, r, 10);
        for e in ch.stages.iter().flatten() {
            let x3 = e.entries()[2];
            assert!(x3 == 0 || x3 as usize == 2 * r, "{e:?}");
        }
        assert!(ch.stage(10).contains(&Exponent::new(vec![0, 0, 2 * r as u32])));
    }
}

#[test]
fn identity_feasibility_threshold() {
    let solver = SolverOptions::default();
    let id = set(2, &[&[1., 0., 0., 1.]]);
    for sp in [JsrSparsity::Dense, sparse(1)] {
        assert!(jsr_sos_feasible(&id, 1.001, 1, sp, &solver).unwrap());
        assert!(!jsr_sos_feasible(&id, 0.9, 1, sp, &solver).unwrap());
    }
    let c = 0.7;
    let scaled = id.scaled(-c);
    assert!(jsr_sos_feasible(&scaled, c + 0.01, 1, JsrSparsity::Dense, &solver).unwrap());
    assert!(!jsr_sos_feasible(&scaled, c - 0.01, 1, JsrSparsity::Dense, &solver).unwrap());
}

/// A quadratic Lyapunov certificate `P ⪰ I`, `AᵀPA ⪯ γ²P`, by grid search
/// over `P = t·[[1, b], [b, c]]`.
fn lyapunov_certificate(a: &DMatrix<f64>, gamma: f64) -> Option<DMatrix<f64>> {
    for i in -160..=160 {
        let c = 10f64.powf(i as f64 / 40.0);
        for j in -200..=200 {
            let b = 0.01 * j as f64;
            let p = DMatrix::from_row_slice(2, 2, &[1.0, b, b, c]);
            let lo = p.clone().symmetric_eigenvalues().min();
            if lo <= 0.0 {
                continue;
            }
            let p = p / lo;
            let gap = &p * gamma * gamma - a.transpose() * &p * a;
            if gap.symmetric_eigenvalues().min() >= 0.0 {
                return Some(p);
            }
        }
    }
    None
}

#[test]
fn jordan_block_thresholds() {
    let jordan = set(2, &[&[1., 1., 0., 1.]]);
    let a = &jordan.matrices[0];
    assert!(lyapunov_certificate(a, 1.02).is_some());
    // the eigenvector e1 has A e1 = e1, so no P works below ρ = 1
    assert!(lyapunov_certificate(a, 0.98).is_none());

    let solver = SolverOptions::default();
    assert!(jsr_sos_feasible(&jordan, 1.02, 1, JsrSparsity::Dense, &solver).unwrap());
    assert!(!jsr_sos_feasible(&jordan, 0.98, 1, JsrSparsity::Dense, &solver).unwrap());
}

#[test]
fn scalar_sets() {
    let id = set(2, &[&[1., 0., 0., 1.]]);
    let halves = MatrixSet::new(vec![DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2) * -0.25]).unwrap();
    for sp in [JsrSparsity::Dense, sparse(1)] {
        assert!((upper(&id, 1, sp) - 1.0).abs() <= 2.0 * TOL);
        assert!((upper(&halves, 1, sp) - 0.5).abs() <= 2.0 * TOL);
    }
    let big = id.scaled(3.0);
    assert!(jsr_upper(&big, 1, JsrSparsity::Dense, &JsrOptions::default()).unwrap().failed);
}

#[test]
fn lower_products() {
    let id = set(2, &[&[1., 0., 0., 1.]]);
    assert_eq!(jsr_lower_products(&id, 3), 1.0);
    let a = set(2, &[&[0.2, 1.3, -0.4, 0.9]]);
    let rho = spectral_radius(&a.matrices[0]);
    assert!((jsr_lower_products(&a, 5) - rho).abs() <= 1e-9);
    // rotation by 90° and a swap: products reach the identity at length 2
    let pair = set(2, &[&[0., -1., 1., 0.], &[0., 1., 1., 0.]]);
    assert!((jsr_lower_products(&pair, 4) - 1.0).abs() <= 1e-9);
}

#[test]
fn pair_is_sandwiched() {
    let pair = jsr_pair();
    let lower = jsr_lower_products(&pair, 8);
    let dense = upper(&pair, 1, JsrSparsity::Dense);
    let s1 = upper(&pair, 1, sparse(1));
    assert!(lower <= dense + 2.0 * TOL, "{lower} vs {dense}");
    assert!(dense <= s1 + 2.0 * TOL, "{dense} vs {s1}");
    assert!(dense / 2f64.sqrt() <= lower + 2.0 * TOL);
}

/// Two random matrices of spectral norm at most one.
fn random_pair(n: usize) -> impl Strategy<Value = MatrixSet> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |raw| {
        let ms = raw
            .chunks(n * n)
            .map(|c| {
                let m = DMatrix::from_row_slice(n, n, c);
                let s = m.norm().max(1e-3);
                m / s
            })
            .collect();
        MatrixSet::new(ms).unwrap()
    })
}

/// Conjugate every matrix by the permutation `perm`.
fn permuted(ms: &MatrixSet, perm: &[usize]) -> MatrixSet {
    let n = ms.n;
    let p = DMatrix::from_fn(n, n, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
    MatrixSet::new(ms.matrices.iter().map(|a| &p * a * p.transpose()).collect()).unwrap()
}

/// Random 3×3 pairs with zero patterns, so that sparsity has an effect.
fn sparse_pair() -> impl Strategy<Value = MatrixSet> {
    (random_pair(3), prop::collection::vec(any::<bool>(), 18)).prop_map(|(ms, mask)| {
        let out = ms
            .matrices
            .iter()
            .enumerate()
            .map(|(k, m)| DMatrix::from_fn(3, 3, |i, j| if i == j || mask[9 * k + 3 * i + j] { m[(i, j)] } else { 0.0 }))
            .collect();
        MatrixSet::new(out).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bounds_sandwich_the_radius(ms in random_pair(2)) {
        let lb = jsr_lower_products(&ms, 8);
        let ub = coarse(&ms, 1, JsrSparsity::Dense);
        prop_assert!(lb <= ub + 2.0 * PROP_TOL, "{} vs {}", lb, ub);
        prop_assert!(ub / 2f64.sqrt() <= lb + 2.0 * PROP_TOL, "{} vs {}", ub, lb);
    }

    #[test]
    fn more_support_never_hurts(ms in sparse_pair()) {
        let s1 = coarse(&ms, 1, sparse(1));
        let s2 = coarse(&ms, 1, sparse(2));
        prop_assert!(s2 <= s1 + 2.0 * PROP_TOL, "{} vs {}", s2, s1);
    }

    #[test]
    fn bounds_scale_with_the_set(ms in random_pair(2), c in 0.2f64..1.5) {
        let a = coarse(&ms, 1, JsrSparsity::Dense);
        let b = coarse(&ms.scaled(-c), 1, JsrSparsity::Dense);
        prop_assert!((b - c * a).abs() <= 4.0 * PROP_TOL, "{} vs {}", b, c * a);
    }

    #[test]
    fn relabeling_variables_changes_nothing(ms in sparse_pair(), k in 0usize..6) {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let other = permuted(&ms, &perms[k]);
        prop_assert!((jsr_lower_products(&ms, 6) - jsr_lower_products(&other, 6)).abs() <= 1e-9);
        for sp in [JsrSparsity::Dense, sparse(1)] {
            let (a, b) = (coarse(&ms, 1, sp), coarse(&other, 1, sp));
            prop_assert!((a - b).abs() <= 2.0 * PROP_TOL, "{} vs {}", a, b);
        }
    }
}
