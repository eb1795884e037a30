use super::*;
use crate::geometry::{BoxSet, VPolytope};
use crate::plant::example_spec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn spec_with_p(p: usize, m_h: usize, big_n: usize) -> ProblemSpec {
    let base = example_spec(0.4, big_n, m_h).unwrap();
    let d = match p {
        1 => VPolytope::origin(2),
        2 => VPolytope::new(vec![v(&[0.01, 0.01]), v(&[-0.01, -0.01])]).unwrap(),
        4 => base.d_set.clone(),
        _ => unreachable!(),
    };
    base.with_disturbance(d).unwrap()
}

#[test]
fn tuple_enumeration_is_lexicographic() {
    let mut seen = Vec::new();
    for_each_tuple(3, 2, |t| seen.push(t.to_vec()));
    assert_eq!(seen.len(), 9);
    assert_eq!(seen[0], vec![0, 0]);
    assert_eq!(seen[1], vec![0, 1]);
    assert_eq!(seen[8], vec![2, 2]);
    let mut empty = 0;
    for_each_tuple(4, 0, |t| {
        assert!(t.is_empty());
        empty += 1;
    });
    assert_eq!(empty, 1);
}

#[test]
fn row_count_matches_closed_form_on_lattice() {
    for p in [1, 2, 4] {
        for m_h in [2, 3] {
            for big_n in [5, 10] {
                let spec = spec_with_p(p, m_h, big_n);
                let qp = build_online(&spec, &v(&[0.0, 0.0])).unwrap();
                let expected = closed_form_row_count(p, m_h, big_n, 2, 1);
                assert_eq!(qp.num_ineq() as u128, expected, "p={p} M={m_h} N={big_n}");
            }
        }
    }
    assert_eq!(closed_form_row_count(4, 3, 10, 2, 1), 1533);
    // each stage beyond the deadbeat horizon carries p^M = 64 times the nominal rows
    let per_stage = |p| closed_form_row_count(p, 3, 11, 3, 1) - closed_form_row_count(p, 3, 10, 3, 1);
    assert_eq!(per_stage(4), 64 * per_stage(1));
}

#[test]
fn variable_count() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let qp = build_online(&spec, &v(&[0.0, 0.0])).unwrap();
    // (M p + N)(m + n)
    assert_eq!(qp.num_vars(), (3 * 4 + 10) * 3);
}

#[test]
fn row_cap_is_enforced() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    assert!(build_online_capped(&spec, &v(&[0.0, 0.0]), 1000).is_err());
    assert!(build_online_capped(&spec, &v(&[0.0, 0.0]), 1533).is_ok());
}

#[test]
fn zero_disturbance_online_equals_nominal() {
    let spec = spec_with_p(1, 3, 10);
    let online = DrmpcController::online(&spec).unwrap();
    let offline = DrmpcController::offline(&spec, TerminalKind::Origin).unwrap();
    let t = offline.tightening().unwrap();
    assert_eq!(t.inputs[3], spec.u_set);
    assert_eq!(t.states[3], spec.x_set);
    for x in [v(&[1.0, 0.5]), v(&[-3.0, 1.0]), v(&[2.0, -1.5])] {
        let a = online.decide(&x).unwrap();
        let b = offline.decide(&x).unwrap();
        assert!(a.is_optimal() && b.is_optimal());
        assert!((a.value - b.value).abs() <= 1e-6 * b.value.max(1.0), "{} vs {}", a.value, b.value);
    }
}

#[test]
fn origin_is_an_equilibrium() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let x = v(&[0.0, 0.0]);
    for ctrl in [
        DrmpcController::online(&spec).unwrap(),
        DrmpcController::offline(&spec, TerminalKind::Origin).unwrap(),
        DrmpcController::offline(&spec, TerminalKind::PiSet).unwrap(),
    ] {
        let d = ctrl.decide(&x).unwrap();
        assert!(d.is_optimal());
        assert!(d.input.amax() <= 1e-7, "{}", d.input);
        assert!(d.value.abs() <= 1e-10);
    }
}

#[test]
fn far_state_is_infeasible() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let x = v(&[4.9, 1.9]);
    for ctrl in [DrmpcController::online(&spec).unwrap(), DrmpcController::offline(&spec, TerminalKind::Origin).unwrap()] {
        let d = ctrl.decide(&x).unwrap();
        assert_eq!(d.status, QpStatus::PrimalInfeasible);
        assert!(!ctrl.feasibility(&x).unwrap().feasible);
    }
}

#[test]
fn decision_input_is_first_stack_entry() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let ctrl = DrmpcController::online(&spec).unwrap();
    let x = v(&[1.0, -0.5]);
    let d = ctrl.decide(&x).unwrap();
    assert!(d.is_optimal());
    let stack = d.full_solution.as_ref().unwrap();
    assert_eq!(d.input[0], stack[0]);
    assert!(spec.u_set.contains(&d.input, 1e-7));
}

#[test]
fn online_with_pi_set_is_rejected() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    assert!(DrmpcController::new(&spec, Mode::Online, TerminalKind::PiSet).is_err());
}

#[test]
fn offline_tightening_shrinks_then_saturates() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let ctrl = DrmpcController::offline(&spec, TerminalKind::Origin).unwrap();
    let t = ctrl.tightening().unwrap();
    assert_eq!(t.inputs.len(), 4);
    let bounds: Vec<BoxSet> = t.inputs.iter().map(|h| h.as_box().unwrap()).collect();
    for k in 1..bounds.len() {
        assert!(bounds[k].upper()[0] <= bounds[k - 1].upper()[0]);
        assert!(bounds[k].lower()[0] >= bounds[k - 1].lower()[0]);
    }
    let last = &bounds[3];
    assert!(last.upper()[0] < 2.0 && last.lower()[0] > -2.0 && last.upper()[0] > last.lower()[0]);
    assert_eq!(t.input_at(7), t.input_at(3));
    assert_eq!(t.state_at(10), t.state_at(3));
    for k in 1..t.states.len() {
        for j in 0..2 {
            let dir = DVector::from_fn(2, |r, _| if r == j { 1.0 } else { 0.0 });
            let a = t.states[k].support_lp(&dir).unwrap().unwrap();
            let b = t.states[k - 1].support_lp(&dir).unwrap().unwrap();
            assert!(a <= b + 1e-12);
        }
    }
}

#[test]
fn tightening_of_large_disturbance_is_reported() {
    let spec = example_spec(0.4, 10, 3)
        .unwrap()
        .with_disturbance(BoxSet::symmetric(&[0.15, 0.6]).unwrap().to_vpolytope())
        .unwrap();
    match DrmpcController::offline(&spec, TerminalKind::Origin) {
        Err(Error::SynthesisInfeasible(_)) => {}
        other => panic!("expected synthesis infeasibility, got {other:?}"),
    }
}

#[test]
fn offline_value_dominates_online() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let online = DrmpcController::online(&spec).unwrap();
    let offline = DrmpcController::offline(&spec, TerminalKind::Origin).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 15 {
        let x = v(&[rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)]);
        let b = offline.decide(&x).unwrap();
        if !b.is_optimal() {
            continue;
        }
        let a = online.decide(&x).unwrap();
        assert!(a.is_optimal(), "offline feasible but online not at {x}");
        assert!(b.value >= a.value - 1e-6, "{} < {}", b.value, a.value);
        checked += 1;
    }
}

#[test]
fn pi_terminal_relaxes_origin() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let origin = DrmpcController::offline(&spec, TerminalKind::Origin).unwrap();
    let pi = DrmpcController::offline(&spec, TerminalKind::PiSet).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    while checked < 15 {
        let x = v(&[rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)]);
        let a = origin.decide(&x).unwrap();
        if !a.is_optimal() {
            continue;
        }
        let b = pi.decide(&x).unwrap();
        assert!(b.is_optimal());
        assert!(b.value <= a.value + 1e-7);
        checked += 1;
    }
}

#[test]
fn terminal_set_is_invariant_by_sampling() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let plan = DeadbeatPlan::compute(&spec).unwrap();
    let term = terminal_ingredients(&spec, &plan).unwrap();
    let TerminalCondition::PiSet { set, gain, .. } = &term else { panic!() };
    let t = Tightening::compute(&spec, &plan).unwrap();
    let (u_t, x_t) = t.most_tightened();
    let ak = spec.system.a() + spec.system.b() * gain;
    assert!(set.contains(&DVector::zeros(2), 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0;
    while hits < 10_000 {
        let x = v(&[rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)]);
        if !set.contains(&x, 0.0) {
            continue;
        }
        hits += 1;
        assert!(set.contains(&(&ak * &x), 1e-9));
        assert!(u_t.contains(&(gain * &x), 1e-9));
        assert!(x_t.contains(&x, 1e-9));
    }
}

#[test]
fn zero_disturbance_terminal_is_nominal_pi_set() {
    let spec = spec_with_p(1, 3, 10);
    let plan = DeadbeatPlan::compute(&spec).unwrap();
    let TerminalCondition::PiSet { set, gain, .. } = terminal_ingredients(&spec, &plan).unwrap() else { panic!() };
    let lq = lqr(&spec.system, &spec.cost).unwrap();
    assert_eq!(gain, lq.gain);
    let nominal = max_pi_set(&lq.closed_loop(&spec.system), &spec.x_set.intersect(&spec.u_set.preimage(&lq.gain).unwrap()).unwrap(), 1000).unwrap();
    for k in 0..32 {
        let th = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
        let dir = v(&[th.cos(), th.sin()]);
        let a = set.support_lp(&dir).unwrap().unwrap();
        let b = nominal.support_lp(&dir).unwrap().unwrap();
        assert!((a - b).abs() <= 1e-9);
    }
}

fn candidate_checks(ctrl: &DrmpcController, seed: u64, count: usize) {
    let spec = ctrl.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    while done < count {
        let x = v(&[rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)]);
        let dec = ctrl.decide(&x).unwrap();
        if !dec.is_optimal() {
            continue;
        }
        let d = v(&[rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)]);
        let c = candidate_shift(ctrl, &x, &dec, &d).unwrap();
        assert!(c.feasible, "{} at x={x} d={d}: violation {:e}", ctrl.id(), c.max_violation);
        for vert in spec.d_set.vertices() {
            let c = candidate_shift(ctrl, &x, &dec, vert).unwrap();
            assert!(c.feasible, "vertex {vert}: violation {:e}", c.max_violation);
        }
        let c = candidate_shift(ctrl, &x, &dec, &DVector::zeros(2)).unwrap();
        assert!(c.feasible);
        done += 1;
    }
}

#[test]
fn candidate_shift_is_feasible_offline() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    candidate_checks(&DrmpcController::offline(&spec, TerminalKind::Origin).unwrap(), 21, 10);
    candidate_checks(&DrmpcController::offline(&spec, TerminalKind::PiSet).unwrap(), 22, 10);
}

#[test]
fn candidate_shift_is_feasible_online() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    candidate_checks(&DrmpcController::online(&spec).unwrap(), 23, 10);
}

#[test]
fn candidate_rejects_outside_disturbance() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let ctrl = DrmpcController::offline(&spec, TerminalKind::Origin).unwrap();
    let x = v(&[0.5, 0.0]);
    let dec = ctrl.decide(&x).unwrap();
    assert!(candidate_shift(&ctrl, &x, &dec, &v(&[0.3, 0.0])).is_err());
}

#[test]
fn export_has_sets_and_plan() {
    let spec = example_spec(0.4, 10, 3).unwrap();
    let ctrl = DrmpcController::offline(&spec, TerminalKind::PiSet).unwrap();
    let js = ctrl.export();
    assert_eq!(js["type"], "drmpc-offline");
    assert_eq!(js["terminal"]["kind"], "pi-set");
    assert_eq!(js["tightened_u"].as_array().unwrap().len(), 4);
    assert_eq!(js["plan"]["M"], 3);
}
