mod common;

use common::{cst, random_point, random_qcqp, three_disks, var};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsepop::basis::standard_basis;
use sparsepop::relaxation::{build_dense, AffineForm, BlockOrigin, BlockSDP, RelaxMeta, SymbolicMatrix, VarKey};
use sparsepop::sdp::admm::project_psd;
use sparsepop::sdp::{
    bisect, constant_trace_sphere, export_sdpa, parse_sdpa, solve, sphere_trace_scaling, SolveStatus,
    SolverOptions, TraceError,
};
use sparsepop::{Exponent, Pop};

/// `min t s.t. [[1, t], [t, 1]] ⪰ 0`.
fn correlation_edge() -> BlockSDP {
    let t = VarKey::Aux(0);
    let mut sdp = BlockSDP::new(AffineForm::var(t.clone(), 1.0), RelaxMeta::generic(1));
    let m = SymbolicMatrix::from_fn(2, |i, j| {
        if i == j {
            AffineForm::constant(1.0)
        } else {
            AffineForm::var(t.clone(), 1.0)
        }
    });
    sdp.push_block(m, BlockOrigin::Generic, Vec::new());
    sdp
}

fn normalization_only() -> BlockSDP {
    let y0 = VarKey::Moment(Exponent::zero(1));
    let mut sdp = BlockSDP::new(AffineForm::var(y0.clone(), 1.0), RelaxMeta::generic(1));
    sdp.push_equalities([AffineForm::var(y0, 1.0).add(&AffineForm::constant(-1.0))]);
    sdp
}

#[test]
fn correlation_edge_value() {
    let sol = solve(&correlation_edge(), &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective + 1.0).abs() <= 1e-6);
}

#[test]
fn unit_circle_in_one_variable() {
    // inf { x : 1 − x² = 0 } over the two feasible points ±1
    let pop = Pop::new(var(1, 0)).with_equalities(vec![cst(1, 1.0).sub(&var(1, 0).pow(2))]);
    let brute = [-1.0f64, 1.0].into_iter().fold(f64::INFINITY, f64::min);
    let sdp = build_dense(&pop, 2).unwrap();
    let at = sdp.evaluate_at_point(&[brute]);
    assert!((at.objective - brute).abs() < 1e-12);
    assert!(at.equalities.iter().all(|v| v.abs() < 1e-12));
    let sol = solve(&sdp, &SolverOptions::default()).unwrap();
    assert!((sol.objective - brute).abs() <= 1e-2, "{}", sol.objective);
}

#[test]
fn bisection_examples() {
    let r = bisect(|g| g >= 1.0, 0.0, 2.0, 1e-5);
    assert!(!r.failed && (r.value - 1.0).abs() <= 1e-5 && r.value >= 1.0);
    let r = bisect(|_| true, -3.0, 2.0, 1e-5);
    assert_eq!((r.value, r.failed), (-3.0, false));
    let r = bisect(|_| false, -3.0, 2.0, 1e-5);
    assert_eq!((r.value, r.failed), (2.0, true));
}

#[test]
fn export_of_the_correlation_edge() {
    let text = export_sdpa(&correlation_edge());
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('*')).collect();
    // m, nBLOCK, block structure, c, then F_0 = −I and F_1 = offdiag(1)
    assert_eq!(lines[..4], ["1", "1", "2", "1e0"]);
    let mut entries: Vec<&str> = lines[4..].to_vec();
    entries.sort_unstable();
    assert_eq!(entries, ["0 1 1 1 -1e0", "0 1 2 2 -1e0", "1 1 1 2 1e0"]);
}

#[test]
fn normalization_only_program() {
    let sdp = normalization_only();
    let text = export_sdpa(&sdp);
    assert!(text.lines().any(|l| l == "-2"), "{text}");
    for s in [sdp.clone(), parse_sdpa(&text).unwrap()] {
        let sol = solve(&s, &SolverOptions::default()).unwrap();
        assert!((sol.objective - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn export_round_trip_on_a_relaxation() {
    let sdp = build_dense(&three_disks(), 1).unwrap();
    let back = parse_sdpa(&export_sdpa(&sdp)).unwrap();
    let opts = SolverOptions::with_tol(1e-8);
    let a = solve(&sdp, &opts).unwrap().objective;
    let b = solve(&back, &opts).unwrap().objective;
    assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    assert!(parse_sdpa("1\n1\nfoo\n").is_err());
}

#[test]
fn optimal_solutions_certify_themselves() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = SolverOptions::default();
    for _ in 0..5 {
        let sdp = build_dense(&random_qcqp(&mut rng), 1).unwrap();
        let sol = solve(&sdp, &opts).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.min_block_eigenvalue() >= -10.0 * opts.eps_primal);
        let scale = 1.0 + sol.objective.abs();
        assert!(sol.complementarity().abs() <= 10.0 * opts.eps_primal * scale, "{}", sol.complementarity());
        assert!(sol.gap.abs() <= 10.0 * opts.eps_primal * scale, "{}", sol.gap);
        for v in sdp.evaluate(&|k| sol.value(k)).equalities {
            assert!(v.abs() <= 10.0 * opts.eps_primal);
        }
        let again = solve(&sdp, &opts).unwrap();
        assert_eq!(again.objective.to_bits(), sol.objective.to_bits());
        assert_eq!(again.y, sol.y);
        assert_eq!(again.iterations, sol.iterations);
    }
}

#[test]
fn constant_trace_small_cases() {
    let c = sphere_trace_scaling(3, 0);
    assert_eq!(c.a, 1.0);
    assert_eq!(c.t, DVector::from_element(1, 1.0));
    let c = sphere_trace_scaling(2, 1);
    assert_eq!(c.a, 2.0);
    assert_eq!(c.t, DVector::from_element(3, 1.0));

    let n = 2;
    let sphere = (0..n).fold(cst(n, 1.0), |p, i| p.sub(&var(n, i).pow(2)));
    let pop = Pop::new(var(n, 0)).with_equalities(vec![sphere.clone()]);
    assert_eq!(constant_trace_sphere(&pop, 2).unwrap(), sphere_trace_scaling(n, 2));
    let ball = Pop::new(var(n, 0)).with_inequalities(vec![sphere]);
    assert_eq!(constant_trace_sphere(&ball, 2), Err(TraceError::NoSphere));
}

fn symmetric(n: usize, raw: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| raw[i * 6 + j]);
    (&a + a.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psd_projection_is_the_eigen_clip(n in 1usize..=6, raw in prop::collection::vec(-5.0f64..5.0, 36)) {
        let m = symmetric(n, &raw);
        let p = project_psd(&m);
        let rest = &m - &p;
        let tol = 1e-9 * (1.0 + m.norm());
        prop_assert!(p.clone().symmetric_eigenvalues().min() >= -tol);
        prop_assert!(rest.clone().symmetric_eigenvalues().max() <= tol);
        prop_assert!(p.dot(&rest).abs() <= tol);
        prop_assert!((&p - p.transpose()).norm() <= tol);
    }

    #[test]
    fn sphere_moments_have_constant_trace(n in 1usize..=4, r in 0usize..=3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = random_point(&mut rng, n, 1.0);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        x.iter_mut().for_each(|v| *v /= norm);
        let c = sphere_trace_scaling(n, r);
        prop_assert_eq!(&c.basis, &standard_basis(n, r));
        let v = DVector::from_iterator(c.basis.len(), c.basis.iter().map(|b| b.eval(&x)));
        let m = &v * v.transpose();
        let tm = DMatrix::from_diagonal(&c.t) * m * DMatrix::from_diagonal(&c.t);
        prop_assert!((tm.trace() - c.a).abs() <= 1e-10, "{} vs {}", tm.trace(), c.a);
    }
}
