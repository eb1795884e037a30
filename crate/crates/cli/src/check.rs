//! Invariant suites run by `drmpc check`.

use drmpc_core::deadbeat::{barycentric, compute_plan};
use drmpc_core::drmpc::{build_online, closed_form_row_count, DrmpcController, TerminalKind};
use drmpc_core::plant::ProblemSpec;
use drmpc_core::qpsolve::reference::{exhaustive_active_set, MAX_ROWS};
use drmpc_core::qpsolve::{feasibility_of, solve_qp, QpSettings, QpStatus, QuadraticProgram};
use drmpc_core::sim::{simulate, DisturbancePolicy, PolicyKind, COMPLIANCE_TOL};
use drmpc_core::{Controller, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::CheckArgs;
use crate::manifest::OutputDir;
use crate::{exit_code, Loaded, Report, EXIT_CHECK_FAILED, EXIT_OK};

#[derive(Debug, Serialize)]
struct Suite {
    name: &'static str,
    passed: bool,
    detail: String,
    /// Exit code of the error that stopped the suite, if any.
    error_code: Option<i32>,
}

fn suite(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Suite {
    match body() {
        Ok((passed, detail)) => Suite {
            name,
            passed,
            detail,
            error_code: None,
        },
        Err(e) => Suite {
            name,
            passed: false,
            detail: e.to_string(),
            error_code: Some(exit_code(&e)),
        },
    }
}

fn constraint_count(spec: &ProblemSpec) -> Result<(bool, String)> {
    let closed = closed_form_row_count(spec.p(), spec.deadbeat_m, spec.horizon_n, spec.n(), spec.m());
    let built = build_online(spec, &DVector::zeros(spec.n()))?.num_ineq() as u128;
    Ok((closed == built, format!("closed form {closed}, enumerated {built}")))
}

fn deadbeat(spec: &ProblemSpec) -> Result<(bool, String)> {
    let plan = compute_plan(spec)?;
    let mut worst: f64 = 0.0;
    for (i, d) in spec.d_set.vertices().iter().enumerate() {
        let mut z = d.clone();
        for k in 0..plan.m_horizon() {
            z = spec.system.a() * &z + spec.system.b() * plan.input(i, k);
        }
        worst = worst.max(z.amax());
    }
    Ok((worst <= 1e-8, format!("max |z_M| = {worst:.3e} over {} vertices", plan.num_vertices())))
}

fn barycentric_suite(spec: &ProblemSpec, seed: u64) -> Result<(bool, String)> {
    let ds = DisturbancePolicy::new(PolicyKind::UniformBox, seed).sample(&spec.d_set, 1000)?;
    let (mut recon, mut sum_err, mut smallest): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for d in &ds {
        let w = barycentric(&spec.d_set, d)?;
        let mut back = DVector::zeros(spec.n());
        for (l, v) in w.lambdas.iter().zip(spec.d_set.vertices()) {
            back += v * *l;
        }
        recon = recon.max((back - d).amax());
        sum_err = sum_err.max((w.lambdas.sum() - 1.0).abs());
        smallest = smallest.min(w.lambdas.min());
    }
    Ok((
        recon <= 1e-10 && sum_err <= 1e-12 && smallest >= 0.0,
        format!("1000 samples: reconstruction {recon:.1e}, |sum - 1| {sum_err:.1e}, smallest weight {smallest:.1e}"),
    ))
}

fn tightening(spec: &ProblemSpec) -> Result<(bool, String)> {
    let ctrl = DrmpcController::offline(spec, TerminalKind::Origin)?;
    let t = ctrl.tightening().expect("offline controller has a tightening");
    let (u_m, x_m) = t.most_tightened();
    let nonempty = !u_m.is_empty()? && !x_m.is_empty()?;
    Ok((nonempty, format!("most tightened U and X nonempty: {nonempty}")))
}

fn closed_loop(spec: &ProblemSpec, seed: u64) -> Result<(bool, String)> {
    let ctrl = DrmpcController::online(spec)?;
    let x0 = DVector::zeros(spec.n());
    let at_rest = ctrl.decide(&x0)?;
    let rest_ok = at_rest.is_optimal() && at_rest.input.amax() <= 1e-9;
    let trace = simulate(&ctrl, &x0, 20, &DisturbancePolicy::new(PolicyKind::UniformBox, seed))?;
    let feasible = trace.all_optimal();
    let consistent = trace.is_self_consistent(spec);
    let violation = trace.constraint_violation(spec);
    Ok((
        rest_ok && feasible && consistent && violation <= COMPLIANCE_TOL,
        format!(
            "u(0) = 0: {rest_ok}; 20 disturbed steps from 0 feasible: {feasible}; \
             trace self-consistent: {consistent}; max constraint violation {violation:.1e}"
        ),
    ))
}

fn random_qp(rng: &mut ChaCha8Rng) -> Result<QuadraticProgram> {
    let n = rng.random_range(1..=5);
    let m = rng.random_range(0..=8usize.min(MAX_ROWS));
    let p = rng.random_range(0..=n.min(2)).min(n - 1);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let ub = DVector::from_fn(m, |_, _| rng.random_range(-0.5..1.5));
    let e = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    let er = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    QuadraticProgram::new(h, f, e, er, g, ub)
}

fn qp_oracle(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = QpSettings::default();
    let mut misses = 0;
    for _ in 0..100 {
        let qp = random_qp(&mut rng)?;
        let oracle = exhaustive_active_set(&qp, 1e-9);
        let sol = solve_qp(&qp, &settings)?;
        let phase1 = feasibility_of(&qp)?;
        let ok = match &oracle {
            Some(o) => {
                sol.status == QpStatus::Optimal
                    && (sol.objective - o.objective).abs() <= 1e-6
                    && sol.kkt.max() <= 1e-6
                    && phase1.feasible
            }
            None => sol.status == QpStatus::PrimalInfeasible && !phase1.feasible,
        };
        misses += usize::from(!ok);
    }
    Ok((misses == 0, format!("100 random QPs, {misses} disagreements with the exhaustive oracle")))
}

pub(crate) fn run(loaded: &Loaded, args: &CheckArgs, out: Option<&mut OutputDir>) -> Result<Report> {
    let spec = &loaded.spec;
    let suites = vec![
        suite("constraint-count", || constraint_count(spec)),
        suite("deadbeat", || deadbeat(spec)),
        suite("barycentric", || barycentric_suite(spec, args.seed)),
        suite("tightening", || tightening(spec)),
        suite("closed-loop", || closed_loop(spec, args.seed)),
        suite("qp-oracle", || qp_oracle(args.seed)),
    ];
    let mut summary = String::new();
    for s in &suites {
        log::info!("suite {}: {}", s.name, s.detail);
        summary.push_str(&format!("{:<17} {}  {}\n", s.name, if s.passed { "pass" } else { "FAIL" }, s.detail));
    }
    let failed: Vec<&Suite> = suites.iter().filter(|s| !s.passed).collect();
    summary.push_str(&format!("{}/{} suites passed", suites.len() - failed.len(), suites.len()));
    if let Some(out) = out {
        out.write_json("check.json", &serde_json::json!({ "seed": args.seed, "suites": suites }))?;
    }
    let code = match failed.first() {
        None => EXIT_OK,
        Some(s) => s.error_code.unwrap_or(EXIT_CHECK_FAILED),
    };
    Ok(Report {
        summary,
        code,
        seed: Some(args.seed),
    })
}
