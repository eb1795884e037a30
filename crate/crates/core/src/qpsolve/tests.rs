use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference::exhaustive_active_set;
use super::*;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

fn dm(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

fn empty(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    (DMatrix::zeros(0, n), DVector::zeros(0))
}

fn random_qp(rng: &mut ChaCha8Rng) -> QuadraticProgram {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=8);
    let p = rng.random_range(0..=n.min(2)).min(n - 1);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let ub = DVector::from_fn(m, |_, _| rng.random_range(-0.5..1.5));
    let e = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    let er = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    QuadraticProgram::new(h, f, e, er, g, ub).unwrap()
}

#[test]
fn unconstrained_minimum() {
    let (e, er) = empty(2);
    let (g, ub) = empty(2);
    let qp = QuadraticProgram::new(dm(2, 2, &[2.0, 0.0, 0.0, 4.0]), dv(&[-2.0, -4.0]), e, er, g, ub).unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!((sol.primal[0] - 1.0).abs() < 1e-9 && (sol.primal[1] - 1.0).abs() < 1e-9);
}

#[test]
fn box_constrained_textbook() {
    // min (x-2)^2 + (y-2)^2 s.t. x + y <= 2 -> (1, 1), multiplier 2
    let (e, er) = empty(2);
    let qp = QuadraticProgram::new(
        dm(2, 2, &[2.0, 0.0, 0.0, 2.0]),
        dv(&[-4.0, -4.0]),
        e,
        er,
        dm(1, 2, &[1.0, 1.0]),
        dv(&[2.0]),
    )
    .unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!((sol.primal - dv(&[1.0, 1.0])).amax() < 1e-9);
    assert!((sol.dual_ineq[0] - 2.0).abs() < 1e-8);
    assert!(sol.kkt.max() < 1e-8);
}

#[test]
fn two_sided_rows_give_signed_duals() {
    // min ½x² + 3x with -1 <= x <= 1 -> x = -1, lower bound active
    let (e, er) = empty(1);
    let qp = QuadraticProgram::new_two_sided(dm(1, 1, &[1.0]), dv(&[3.0]), e, er, dm(1, 1, &[1.0]), dv(&[-1.0]), dv(&[1.0]))
        .unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!((sol.primal[0] + 1.0).abs() < 1e-9);
    assert!((sol.dual_ineq[0] + 2.0).abs() < 1e-8);
}

#[test]
fn equality_constrained() {
    // min x² + y² s.t. x + y = 1
    let (g, ub) = empty(2);
    let qp = QuadraticProgram::new(dm(2, 2, &[2.0, 0.0, 0.0, 2.0]), dv(&[0.0, 0.0]), dm(1, 2, &[1.0, 1.0]), dv(&[1.0]), g, ub)
        .unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!((sol.primal - dv(&[0.5, 0.5])).amax() < 1e-9);
    assert!((sol.dual_eq[0] + 1.0).abs() < 1e-8);
}

#[test]
fn infeasible_box_has_certificate() {
    // x <= -1 and -x <= -1
    let (e, er) = empty(1);
    let qp = QuadraticProgram::new(dm(1, 1, &[1.0]), dv(&[0.0]), e, er, dm(2, 1, &[1.0, -1.0]), dv(&[-1.0, -1.0])).unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::PrimalInfeasible);
    let cert = sol.certificate.unwrap();
    assert!(cert.residual < 1e-10);
    assert!(cert.contradiction < 0.0);
    assert!(cert.ineq.iter().all(|&y| y >= 0.0));
}

#[test]
fn inconsistent_equalities_are_infeasible() {
    let (g, ub) = empty(1);
    let qp = QuadraticProgram::new(dm(1, 1, &[1.0]), dv(&[0.0]), dm(2, 1, &[1.0, 1.0]), dv(&[0.0, 1.0]), g, ub).unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::PrimalInfeasible);
    let fr = feasibility_of(&qp).unwrap();
    assert!(!fr.feasible);
    assert!((fr.margin - 0.5).abs() < 1e-12);
}

#[test]
fn unbounded_lp_is_dual_infeasible() {
    let (e, er) = empty(2);
    let lp = LinearProgram::new(dv(&[-1.0, 0.0]), e, er, dm(1, 2, &[0.0, 1.0]), dv(&[1.0])).unwrap();
    let sol = solve_lp(&lp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::DualInfeasible);
}

#[test]
fn unbounded_qp_is_dual_infeasible() {
    // min -x with x unconstrained above, PSD hessian on y only
    let (e, er) = empty(2);
    let qp = QuadraticProgram::new(dm(2, 2, &[0.0, 0.0, 0.0, 1.0]), dv(&[-1.0, 0.0]), e, er, dm(1, 2, &[-1.0, 0.0]), dv(&[0.0]))
        .unwrap();
    let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::DualInfeasible);
}

#[test]
fn lp_textbook() {
    // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
    let (e, er) = empty(2);
    let lp = LinearProgram::new(
        dv(&[-1.0, -1.0]),
        e,
        er,
        dm(4, 2, &[1.0, 2.0, 3.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
        dv(&[4.0, 6.0, 0.0, 0.0]),
    )
    .unwrap();
    let sol = solve_lp(&lp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!((sol.primal - dv(&[1.6, 1.2])).amax() < 1e-12);
    assert!((sol.objective + 2.8).abs() < 1e-12);
    assert!(sol.kkt.max() < 1e-10);
}

#[test]
fn degenerate_lp_vertex() {
    // three constraints through the optimal vertex (0, 0)
    let (e, er) = empty(2);
    let lp = LinearProgram::new(
        dv(&[1.0, 1.0]),
        e,
        er,
        dm(3, 2, &[-1.0, 0.0, 0.0, -1.0, -1.0, -1.0]),
        dv(&[0.0, 0.0, 0.0]),
    )
    .unwrap();
    let sol = solve_lp(&lp, &QpSettings::default()).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!(sol.primal.amax() < 1e-12);
}

#[test]
fn feasibility_margin_is_max_violation() {
    // x <= 1, -x <= -3 (x >= 3): best compromise violation 1 at x = 2
    let (e, er) = empty(1);
    let fr = feasibility_check(&e, &er, &dm(2, 1, &[1.0, -1.0]), &dv(&[1.0, -3.0])).unwrap();
    assert!(!fr.feasible);
    assert!((fr.margin - 1.0).abs() < 1e-12);
    let fr = feasibility_check(&e, &er, &dm(2, 1, &[1.0, -1.0]), &dv(&[1.0, 1.0])).unwrap();
    assert!(fr.feasible);
    assert!((fr.margin + 1.0).abs() < 1e-12);
}

#[test]
fn rejects_nan_and_indefinite() {
    let (e, er) = empty(1);
    let (g, ub) = empty(1);
    let qp = QuadraticProgram::new(dm(1, 1, &[f64::NAN]), dv(&[0.0]), e.clone(), er.clone(), g.clone(), ub.clone()).unwrap();
    assert!(solve_qp(&qp, &QpSettings::default()).is_err());
    let qp = QuadraticProgram::new(dm(1, 1, &[-1.0]), dv(&[0.0]), e, er, g, ub).unwrap();
    assert!(solve_qp(&qp, &QpSettings::default()).is_err());
}

#[test]
fn dimension_mismatch_is_reported() {
    let r = QuadraticProgram::new(
        DMatrix::identity(2, 2),
        dv(&[0.0, 0.0]),
        DMatrix::zeros(0, 2),
        DVector::zeros(0),
        dm(1, 3, &[1.0, 0.0, 0.0]),
        dv(&[1.0]),
    );
    assert!(matches!(r, Err(crate::Error::DimensionMismatch { .. })));
}

#[test]
fn dump_roundtrip() {
    let qp = QuadraticProgram::new_two_sided(
        DMatrix::identity(2, 2),
        dv(&[1.0, -1.0]),
        dm(1, 2, &[1.0, 1.0]),
        dv(&[0.5]),
        dm(1, 2, &[1.0, 0.0]),
        dv(&[f64::NEG_INFINITY]),
        dv(&[2.0]),
    )
    .unwrap();
    let s = serde_json::to_string(&qp.to_dump()).unwrap();
    let back = QuadraticProgram::from_dump(&serde_json::from_str(&s).unwrap()).unwrap();
    assert_eq!(qp, back);
}

#[test]
fn random_qps_match_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = QpSettings::default();
    for case in 0..300 {
        let qp = random_qp(&mut rng);
        let oracle = exhaustive_active_set(&qp, 1e-9);
        let sol = solve_qp(&qp, &s).unwrap();
        let fr = feasibility_of(&qp).unwrap();
        match oracle {
            Some(o) => {
                assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
                assert!((sol.objective - o.objective).abs() <= 1e-6 * (1.0 + o.objective.abs()), "case {case}");
                assert!(sol.kkt.max() <= 1e-6, "case {case}: {:?}", sol.kkt);
                assert!(fr.feasible, "case {case}");
            }
            None => {
                assert_eq!(sol.status, QpStatus::PrimalInfeasible, "case {case}");
                assert!(!fr.feasible, "case {case}");
            }
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let qp = random_qp(&mut rng);
        let a = solve_qp(&qp, &QpSettings::default()).unwrap();
        let b = solve_qp(&qp, &QpSettings::default()).unwrap();
        assert_eq!(a.status, b.status);
        if a.status == QpStatus::Optimal {
            assert_eq!(a.primal, b.primal);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_scaling_keeps_minimizer(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = random_qp(&mut rng);
        let s = QpSettings::default();
        let a = solve_qp(&qp, &s).unwrap();
        let mut scaled = qp.clone();
        scaled.hessian *= scale;
        scaled.linear *= scale;
        let b = solve_qp(&scaled, &s).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.status == QpStatus::Optimal {
            prop_assert!((&a.primal - &b.primal).amax() <= 1e-6 * (1.0 + a.primal.amax()));
        }
    }

    #[test]
    fn optimal_solutions_satisfy_kkt(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = random_qp(&mut rng);
        let sol = solve_qp(&qp, &QpSettings::default()).unwrap();
        if sol.status == QpStatus::Optimal {
            prop_assert!(sol.kkt.passes(&qp, &sol, &QpSettings::default()));
            prop_assert!(qp.max_violation(&sol.primal) <= 1e-8);
        } else {
            prop_assert_eq!(sol.status, QpStatus::PrimalInfeasible);
            let c = sol.certificate.unwrap();
            prop_assert!(c.contradiction < 0.0);
            prop_assert!(c.residual <= 1e-8 * (1.0 + c.ineq.amax() + c.eq.amax()));
        }
    }

    #[test]
    fn lp_value_is_below_every_feasible_sample(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        // bounded polytope: box plus random cuts through a ball around 0
        let m = rng.random_range(0..=6);
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push(e.clone());
            rhs.push(1.0);
            e[j] = -1.0;
            rows.push(e);
            rhs.push(1.0);
        }
        for _ in 0..m {
            rows.push((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
            rhs.push(rng.random_range(0.1..1.0));
        }
        let g = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let b = DVector::from_vec(rhs);
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let lp = LinearProgram::new(c.clone(), DMatrix::zeros(0, n), DVector::zeros(0), g.clone(), b.clone()).unwrap();
        let sol = solve_lp(&lp, &QpSettings::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        for _ in 0..200 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            if (&g * &x - &b).max() <= 0.0 {
                prop_assert!(c.dot(&x) >= sol.objective - 1e-12);
            }
        }
    }
}
