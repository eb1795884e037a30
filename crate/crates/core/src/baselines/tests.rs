use super::*;
use crate::geometry::{BoxSet, Support};
use crate::plant::{example_spec, lqr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn setup(ts: f64) -> (ProblemSpec, LqrIngredients) {
    let spec = example_spec(ts, 10, 3).unwrap();
    let lq = lqr(&spec.system, &spec.cost).unwrap();
    (spec, lq)
}

#[test]
fn nominal_origin_gives_zero_input() {
    let (spec, _) = setup(0.4);
    for t in [TerminalKind::Origin, TerminalKind::PiSet] {
        let c = build_nominal(&spec, t).unwrap();
        let d = c.decide(&v(&[0.0, 0.0])).unwrap();
        assert!(d.is_optimal());
        assert!(d.input.amax() <= 1e-8);
    }
}

#[test]
fn baselines_reduce_to_nominal_without_disturbance() {
    let (spec, lq) = setup(0.4);
    let spec = spec.with_disturbance(VPolytope::origin(2)).unwrap();
    let nominal = build_nominal(&spec, TerminalKind::PiSet).unwrap();
    let tube = build_tube(&spec, &lq).unwrap();
    let adf = build_adf(&spec, &lq).unwrap();
    assert_eq!(tube.mrpi().num_vertices(), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 20 {
        let x = v(&[rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)]);
        let a = nominal.decide(&x).unwrap();
        let b = tube.decide(&x).unwrap();
        let c = adf.decide(&x).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.status, c.status);
        if a.is_optimal() {
            assert!((a.value - b.value).abs() <= 1e-8 * a.value.max(1.0), "{} {}", a.value, b.value);
            assert!((a.value - c.value).abs() <= 1e-8 * a.value.max(1.0), "{} {}", a.value, c.value);
            checked += 1;
        }
    }
}

#[test]
fn adf_first_tightening_is_x_minus_d() {
    let (spec, lq) = setup(0.4);
    let adf = build_adf(&spec, &lq).unwrap();
    assert_eq!(adf.reach_sets()[0].num_vertices(), 1);
    let x1 = adf.tightened_x()[1].as_box().unwrap();
    assert_eq!(x1.upper(), &v(&[4.85, 1.85]));
    assert_eq!(x1.lower(), &v(&[-4.85, -1.85]));
    assert_eq!(&adf.tightened_x()[0], &spec.x_set);
    for k in 1..adf.reach_sets().len() {
        for j in 0..16 {
            let th = 2.0 * std::f64::consts::PI * j as f64 / 16.0;
            let dir = v(&[th.cos(), th.sin()]);
            let a = adf.reach_sets()[k].support(&dir).unwrap();
            let b = adf.reach_sets()[k - 1].support(&dir).unwrap();
            assert!(a >= b - 1e-12);
        }
    }
}

#[test]
fn tube_cross_section_is_rpi() {
    let (spec, lq) = setup(0.4);
    let tube = build_tube(&spec, &lq).unwrap();
    let ak = lq.closed_loop(&spec.system);
    let image = minkowski_sum(&tube.mrpi().linear_map(&ak).unwrap(), &spec.d_set).unwrap();
    for j in 0..64 {
        let th = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
        let dir = v(&[th.cos(), th.sin()]);
        assert!(image.support(&dir).unwrap() <= tube.mrpi().support(&dir).unwrap() + 1e-6);
    }
    let f = tube.mrpi().to_hpolytope().unwrap();
    let d = BoxSet::symmetric(&[0.15, 0.15]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let mut e = DVector::zeros(2);
        for _ in 0..30 {
            let w = v(&[rng.random_range(d.lower()[0]..d.upper()[0]), rng.random_range(d.lower()[1]..d.upper()[1])]);
            e = &ak * e + w;
            assert!(f.contains(&e, 1e-6));
        }
    }
}

#[test]
fn tube_input_uses_feedback_on_the_error() {
    let (spec, lq) = setup(0.4);
    let tube = build_tube(&spec, &lq).unwrap();
    let x = v(&[1.0, 0.3]);
    let d = tube.decide(&x).unwrap();
    assert!(d.is_optimal());
    let z0 = tube.center(&d).unwrap();
    let stack = d.full_solution.as_ref().unwrap();
    let expected = stack[0] + (tube.gain() * (&x - &z0))[0];
    assert!((d.input[0] - expected).abs() < 1e-15);
    assert!(tube.mrpi().to_hpolytope().unwrap().contains(&(&x - &z0), 1e-7));
}

#[test]
fn too_large_disturbance_is_reported() {
    let (spec, lq) = setup(0.4);
    let spec = spec.with_disturbance(BoxSet::symmetric(&[3.0, 3.0]).unwrap().to_vpolytope()).unwrap();
    assert!(matches!(build_adf(&spec, &lq), Err(Error::SynthesisInfeasible(_))));
    assert!(matches!(build_tube(&spec, &lq), Err(Error::SynthesisInfeasible(_))));
}

#[test]
fn exports_are_tagged() {
    let (spec, lq) = setup(0.4);
    assert_eq!(build_tube(&spec, &lq).unwrap().export()["type"], "tube");
    assert_eq!(build_adf(&spec, &lq).unwrap().export()["type"], "adf");
    assert_eq!(build_nominal(&spec, TerminalKind::Origin).unwrap().export()["type"], "nominal");
}
