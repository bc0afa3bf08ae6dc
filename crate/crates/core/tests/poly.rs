mod common;

use std::collections::BTreeSet;

use common::{sum, term};
use nalgebra::DMatrix;
use proptest::prelude::*;
use sparsepop::poly::{newton_halfpolytope, sign_symmetries, substitute_linear, support, PolyError};
use sparsepop::{Exponent, Polynomial};

fn e(v: &[u32]) -> Exponent {
    Exponent::new(v.to_vec())
}

fn set(v: &[&[u32]]) -> BTreeSet<Exponent> {
    v.iter().map(|x| e(x)).collect()
}

fn same(p: &Polynomial, q: &Polynomial, tol: f64) -> bool {
    p.sub(q).terms().all(|(_, c)| c.abs() <= tol)
}

#[test]
fn support_of_quadratic() {
    let p = sum(2, [term(1.0 / 3.0, &[0, 0]), term(1.0, &[2, 0]), term(2.0, &[1, 1]), term(1.0, &[0, 2])]);
    assert_eq!(support(&p), set(&[&[0, 0], &[2, 0], &[1, 1], &[0, 2]]));
    assert!(support(&Polynomial::zero(2)).is_empty());
    let q = Polynomial::from_terms(2, vec![(e(&[1, 1]), 1.0), (e(&[1, 0]), 0.0)]);
    assert_eq!(support(&q), set(&[&[1, 1]]));
}

#[test]
fn linear_substitution_examples() {
    let swap = DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]);
    let x1 = Polynomial::var(2, 0);
    let x2 = Polynomial::var(2, 1);
    assert_eq!(substitute_linear(&x1.pow(2), &swap).unwrap(), x2.pow(2));

    let m = DMatrix::from_row_slice(2, 2, &[1., -1., -0.5, 1.]);
    assert!(same(&substitute_linear(&x1, &m).unwrap(), &x1.sub(&x2), 0.0));

    let p = x1.mul(&x2);
    assert_eq!(substitute_linear(&p, &DMatrix::identity(2, 2)).unwrap(), p);

    assert!(matches!(
        substitute_linear(&p, &DMatrix::identity(3, 3)),
        Err(PolyError::DimensionMismatch { .. })
    ));
}

#[test]
fn newton_halfpolytope_examples() {
    let f = sum(2, [term(4.0, &[4, 6]), term(1.0, &[2, 0]), term(-1.0, &[1, 2]), term(1.0, &[0, 2])]);
    assert_eq!(newton_halfpolytope(&f), set(&[&[1, 0], &[2, 3], &[0, 1], &[1, 2], &[1, 1]]));

    let g = sum(2, [term(1.0, &[2, 0]), term(1.0, &[0, 2])]);
    assert_eq!(newton_halfpolytope(&g), set(&[&[1, 0], &[0, 1]]));

    let h = sum(1, [term(1.0, &[0]), term(2.0, &[1]), term(1.0, &[2])]);
    assert_eq!(newton_halfpolytope(&h), set(&[&[0], &[1]]));
}

#[test]
fn sign_symmetry_examples() {
    let a: Vec<Exponent> = set(&[&[0, 0], &[2, 4], &[4, 2], &[4, 4], &[1, 2], &[2, 2]]).into_iter().collect();
    assert_eq!(sign_symmetries(&a).generators, vec![vec![0, 1]]);
    assert!(sign_symmetries(&[e(&[1, 0]), e(&[0, 1])]).generators.is_empty());
    let even = sign_symmetries(&[e(&[2, 0]), e(&[0, 2])]).generators;
    assert_eq!(even.len(), 2);
    assert!(even.contains(&vec![1, 0]) && even.contains(&vec![0, 1]));
}

/// Lower and upper hull by Andrew's monotone chain; integer arithmetic only.
fn hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut p: Vec<(i64, i64)> = points.to_vec();
    p.sort_unstable();
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Exact membership of `q` in the hull of `points` (planar).
fn in_hull(points: &[(i64, i64)], q: (i64, i64)) -> bool {
    let h = hull(points);
    match h.len() {
        0 => false,
        1 => h[0] == q,
        2 => {
            let (a, b) = (h[0], h[1]);
            let cr = (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
            cr == 0 && q.0 >= a.0.min(b.0) && q.0 <= a.0.max(b.0) && q.1 >= a.1.min(b.1) && q.1 <= a.1.max(b.1)
        }
        k => (0..k).all(|i| {
            let (a, b) = (h[i], h[(i + 1) % k]);
            (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0) >= 0
        }),
    }
}

fn poly_strategy(n: usize, max_deg: u32, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0..=max_deg, n), -3.0f64..3.0), 1..=max_terms).prop_map(
        move |terms| Polynomial::from_terms(n, terms.into_iter().map(|(v, c)| (Exponent::new(v), c))),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn halfpolytope_matches_planar_hull(p in poly_strategy(2, 6, 6)) {
        prop_assume!(!p.is_zero());
        let pts: Vec<(i64, i64)> = support(&p).iter().map(|a| (a.entries()[0] as i64, a.entries()[1] as i64)).collect();
        let want: BTreeSet<Exponent> = (0..=3u32)
            .flat_map(|i| (0..=3u32).map(move |j| (i, j)))
            .filter(|&(i, j)| in_hull(&pts, (2 * i as i64, 2 * j as i64)))
            .map(|(i, j)| e(&[i, j]))
            .collect();
        prop_assert_eq!(newton_halfpolytope(&p), want);
    }

    #[test]
    fn sign_symmetries_are_the_whole_kernel(
        n in 1usize..=5,
        raw in prop::collection::vec(prop::collection::vec(0u32..4, 5), 1..6),
    ) {
        let a: Vec<Exponent> = raw.iter().map(|v| Exponent::new(v[..n].to_vec())).collect();
        let r = sign_symmetries(&a);
        for s in &r.generators {
            prop_assert!(a.iter().all(|al| s.iter().zip(al.entries()).map(|(&x, &y)| x as u32 * y).sum::<u32>() % 2 == 0));
        }
        for mask in 0u32..(1 << n) {
            let v: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let orth = a.iter().all(|al| v.iter().zip(al.entries()).map(|(&x, &y)| x as u32 * y).sum::<u32>() % 2 == 0);
            prop_assert_eq!(orth, r.spans(&v));
        }
        // independence: the span has exactly 2^k elements
        let count = (0u32..(1 << n)).filter(|mask| {
            let v: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            r.spans(&v)
        }).count();
        prop_assert_eq!(count, 1 << r.generators.len());
    }

    #[test]
    fn supports_of_sums_and_products(p in poly_strategy(3, 3, 5), q in poly_strategy(3, 3, 5)) {
        let (sp, sq) = (support(&p), support(&q));
        prop_assert!(support(&p.add(&q)).iter().all(|a| sp.contains(a) || sq.contains(a)));
        let mink: BTreeSet<Exponent> = sp.iter().flat_map(|a| sq.iter().map(move |b| a.add(b))).collect();
        prop_assert!(support(&p.mul(&q)).is_subset(&mink));
        prop_assert!(p.terms().all(|(_, c)| c != 0.0));
    }

    #[test]
    fn substitution_is_composition(
        p in poly_strategy(2, 3, 5),
        m in prop::collection::vec(-2.0f64..2.0, 4),
        x in prop::collection::vec(-1.5f64..1.5, 2),
    ) {
        let mat = DMatrix::from_row_slice(2, 2, &m);
        let y = &mat * nalgebra::DVector::from_column_slice(&x);
        let lhs = substitute_linear(&p, &mat).unwrap().eval(&x);
        let rhs = p.eval(y.as_slice());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn substitution_is_linear(
        p in poly_strategy(2, 3, 4),
        q in poly_strategy(2, 3, 4),
        a in -2.0f64..2.0,
        m in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let mat = DMatrix::from_row_slice(2, 2, &m);
        let lhs = substitute_linear(&p.scale(a).add(&q), &mat).unwrap();
        let rhs = substitute_linear(&p, &mat).unwrap().scale(a).add(&substitute_linear(&q, &mat).unwrap());
        prop_assert!(same(&lhs, &rhs, 1e-9));
        prop_assert_eq!(substitute_linear(&p, &DMatrix::identity(2, 2)).unwrap(), p);
    }
}
