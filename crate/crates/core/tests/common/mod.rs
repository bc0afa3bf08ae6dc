//! Problem instances shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sparsepop::jsr::MatrixSet;
use sparsepop::{Exponent, Polynomial, Pop};

pub fn var(n: usize, i: usize) -> Polynomial {
    Polynomial::var(n, i)
}

pub fn cst(n: usize, c: f64) -> Polynomial {
    Polynomial::constant(n, c)
}

pub fn term(c: f64, e: &[u32]) -> Polynomial {
    Polynomial::monomial(Exponent::new(e.to_vec()), c)
}

pub fn sum(n: usize, parts: impl IntoIterator<Item = Polynomial>) -> Polynomial {
    parts.into_iter().fold(Polynomial::zero(n), |a, b| a.add(&b))
}

pub fn sq(p: Polynomial) -> Polynomial {
    p.pow(2)
}

/// Three disks in the plane with minimizers (1,2), (2,2), (2,3).
pub fn three_disks() -> Pop {
    let n = 2;
    let (x1, x2) = (var(n, 0), var(n, 1));
    let f = sq(x1.sub(&cst(n, 1.0)))
        .add(&sq(x1.sub(&x2)))
        .add(&sq(x2.sub(&cst(n, 3.0))))
        .scale(-1.0);
    let g = vec![
        cst(n, 1.0).sub(&sq(x1.sub(&cst(n, 1.0)))),
        cst(n, 1.0).sub(&sq(x1.sub(&x2))),
        cst(n, 1.0).sub(&sq(x2.sub(&cst(n, 3.0)))),
    ];
    Pop::new(f).with_inequalities(g)
}

/// Six-variable quadratic over a box `4 ≤ x_i ≤ 6.36`.
pub fn box_quadratic() -> Pop {
    let n = 6;
    let x: Vec<Polynomial> = (0..n).map(|i| var(n, i)).collect();
    let f = x[1]
        .mul(&x[4])
        .add(&x[2].mul(&x[5]))
        .sub(&x[1].mul(&x[2]))
        .sub(&x[4].mul(&x[5]))
        .add(&x[0].mul(&x[0].scale(-1.0).add(&x[1]).add(&x[2]).sub(&x[3]).add(&x[4]).add(&x[5])));
    let g = (0..n)
        .map(|i| cst(n, 6.36).sub(&x[i]).mul(&x[i].sub(&cst(n, 4.0))))
        .collect();
    Pop::new(f).with_inequalities(g)
}

/// Unconstrained trivariate quartic whose TS bound depends on the extension.
pub fn ts_quartic() -> Pop {
    let f = sum(
        3,
        [
            term(1.0, &[2, 0, 0]),
            term(-2.0, &[1, 1, 0]),
            term(3.0, &[0, 2, 0]),
            term(-2.0, &[2, 1, 0]),
            term(2.0, &[2, 2, 0]),
            term(-2.0, &[0, 1, 1]),
            term(6.0, &[0, 0, 2]),
            term(18.0, &[0, 2, 1]),
            term(-54.0, &[0, 1, 2]),
            term(142.0, &[0, 2, 2]),
        ],
    );
    Pop::new(f)
}

/// `x1⁴ + (x1x2 − 1)² + x2²x3² + (x3² − 1)²`, whose infimum 0 is not attained.
pub fn chained_pair() -> Pop {
    let n = 3;
    let x: Vec<Polynomial> = (0..n).map(|i| var(n, i)).collect();
    let f = x[0]
        .pow(4)
        .add(&sq(x[0].mul(&x[1]).sub(&cst(n, 1.0))))
        .add(&x[1].pow(2).mul(&x[2].pow(2)))
        .add(&sq(x[2].pow(2).sub(&cst(n, 1.0))));
    Pop::new(f)
}

/// `1 + Σ x_i⁴` plus five cubic couplings on six variables.
pub fn cubic_couplings() -> Pop {
    let n = 6;
    let x: Vec<Polynomial> = (0..n).map(|i| var(n, i)).collect();
    let mut f = cst(n, 1.0);
    for xi in &x {
        f = f.add(&xi.pow(4));
    }
    for (a, b, c) in [(0, 1, 2), (2, 3, 4), (2, 3, 5), (2, 4, 5), (3, 4, 5)] {
        f = f.add(&x[a].mul(&x[b]).mul(&x[c]));
    }
    Pop::new(f)
}

/// `1 + x1²x2⁴ + x1⁴x2² + x1⁴x2⁴ − x1x2² − 3x1²x2²`.
pub fn sign_symmetric() -> Pop {
    Pop::new(sum(
        2,
        [
            term(1.0, &[0, 0]),
            term(1.0, &[2, 4]),
            term(1.0, &[4, 2]),
            term(1.0, &[4, 4]),
            term(-1.0, &[1, 2]),
            term(-3.0, &[2, 2]),
        ],
    ))
}

pub fn motzkin() -> Polynomial {
    sum(
        2,
        [term(1.0, &[4, 2]), term(1.0, &[2, 4]), term(1.0, &[0, 0]), term(-3.0, &[2, 2])],
    )
}

pub fn jsr_pair() -> MatrixSet {
    MatrixSet::new(vec![
        DMatrix::from_row_slice(3, 3, &[1., -1., 0., -0.5, 1., 0., 1., 1., 0.]),
        DMatrix::from_row_slice(3, 3, &[0.5, 1., 0., -1., 1., 0., -1., -0.5, 0.]),
    ])
    .unwrap()
}

/// Random quadratic with each monomial of degree ≤ 2 present with probability `density`.
pub fn random_quadratic(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for e in sparsepop::basis::standard_basis(n, 2) {
        if rng.gen_bool(density) {
            p = p.add(&Polynomial::monomial(e, rng.gen_range(-1.0..1.0)));
        }
    }
    p
}

/// Random QCQP on the unit ball with one extra quadratic inequality.
pub fn random_qcqp(rng: &mut ChaCha8Rng) -> Pop {
    let n = rng.gen_range(2..=4);
    let f = random_quadratic(rng, n, 0.6);
    let mut ball = cst(n, 1.0);
    for i in 0..n {
        ball = ball.sub(&var(n, i).pow(2));
    }
    // the origin stays strictly feasible
    let g = random_quadratic(rng, n, 0.5).scale(0.5).add(&cst(n, 1.0));
    let g = g.sub(&cst(n, g.coeff(&Exponent::zero(n)) - 1.0));
    Pop::new(f).with_inequalities(vec![ball, g])
}

pub fn random_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-radius..radius)).collect()
}
