use num_complex::Complex64;
use probe_core::conductivity::{conductivity_indicator, conductivity_scene, dtn_gamma_pair, trace_sign};
use probe_core::fem::dtn_map;
use probe_core::{FitContext, Needle, Point, Scene, Schedule, Shape, Thresholds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit() -> Shape {
    Shape::disc([0.0, 0.0], 1.0)
}

fn base(r: f64) -> Scene {
    Scene::new(unit(), vec![Shape::disc([0.0, 0.0], r)], 0.0).unwrap()
}

/// Mode-`m` eigenvalue of the two-phase disc with inner radius `eps` and
/// inner conductivity `g`: `m (1 + μ ρ) / (1 - μ ρ)`, `μ = (g-1)/(g+1)`, `ρ = ε^{2m}`.
fn two_phase(m: i32, eps: f64, g: f64) -> f64 {
    let mu = (g - 1.0) / (g + 1.0);
    let rho = eps.powi(2 * m);
    m as f64 * (1.0 + mu * rho) / (1.0 - mu * rho)
}

#[test]
fn zero_jump_reproduces_the_background() {
    let s = conductivity_scene(&base(0.3), vec![0.0]).unwrap();
    let (g, one) = dtn_gamma_pair(&s, 6, 0.05).unwrap();
    assert!((&g.real_form - &one.real_form).abs().max() < 1e-10);
}

#[test]
fn background_agrees_with_the_sound_hard_pipeline() {
    let s = conductivity_scene(&base(0.3), vec![1.0]).unwrap();
    let (_, one) = dtn_gamma_pair(&s, 6, 0.05).unwrap();
    let l0 = dtn_map(&base(0.3), false, 6, 0.05).unwrap();
    assert!((&one.real_form - &l0.real_form).abs().max() < 1e-10);
}

#[test]
fn two_phase_mode_eigenvalues() {
    assert!((two_phase(1, 0.5, 2.0) - 13.0 / 11.0).abs() < 1e-14);
    let s = conductivity_scene(&base(0.5), vec![1.0]).unwrap();
    let (g, _) = dtn_gamma_pair(&s, 4, 0.02).unwrap();
    for m in 1..=3 {
        let got = g.mode_eigenvalue(m as i64).unwrap();
        let want = two_phase(m, 0.5, 2.0);
        assert!((got - want).abs() < 0.01 * want, "mode {m}: {got} vs {want}");
    }
}

#[test]
fn monotone_in_the_jump() {
    let up = conductivity_scene(&base(0.5), vec![1.0]).unwrap();
    let down = conductivity_scene(&base(0.5), vec![-0.5]).unwrap();
    let (gu, one) = dtn_gamma_pair(&up, 4, 0.04).unwrap();
    let (gd, _) = dtn_gamma_pair(&down, 4, 0.04).unwrap();
    let l1 = one.mode_eigenvalue(1).unwrap();
    assert!(gu.mode_eigenvalue(1).unwrap() >= l1);
    assert!(gd.mode_eigenvalue(1).unwrap() <= l1);
}

#[test]
fn difference_is_sign_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (h, sign) in [(1.0, 1.0), (-0.5, -1.0)] {
        let s = conductivity_scene(&base(0.3), vec![h]).unwrap();
        let (g, one) = dtn_gamma_pair(&s, 6, 0.05).unwrap();
        let d = g.difference(&one).unwrap();
        for _ in 0..20 {
            let f: Vec<Complex64> = (0..13).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let v = d.sesquilinear(&f);
            assert!(sign * v.re >= -1e-10, "h={h}: {v}");
        }
    }
}

#[test]
fn invalid_jumps_are_rejected() {
    let two = Scene::new(unit(), vec![Shape::disc([-0.4, 0.0], 0.2), Shape::disc([0.4, 0.0], 0.2)], 0.0).unwrap();
    assert_eq!(conductivity_scene(&two, vec![1.0, -0.5]).unwrap_err().code(), "invalid_input");
    assert_eq!(conductivity_scene(&base(0.3), vec![-1.0]).unwrap_err().code(), "nonpositive_conductivity");
    assert!(conductivity_scene(&base(0.3).with_k(1.0).unwrap(), vec![1.0]).is_err());
    assert!(conductivity_scene(&base(0.3), vec![1.0, 1.0]).is_err());
}

#[test]
fn equal_maps_give_zero_trace() {
    let s = conductivity_scene(&base(0.3), vec![1.0]).unwrap();
    let schedule = Schedule { n_max: 4, ..Schedule::default() };
    let (_, one) = dtn_gamma_pair(&s, schedule.order(4), 0.05).unwrap();
    let ctx = FitContext::new(&s, &schedule).unwrap();
    let seq = ctx.fit(&Needle::straight(Point::new(1.0, 0.0), Point::new(0.15, 0.0), &unit()).unwrap()).unwrap();
    let tr = conductivity_indicator(&seq, &one, &one, &Thresholds { burn_in: 1, ratio: 10.0 }).unwrap();
    assert!(tr.values.iter().all(|v| v.1.norm() == 0.0));
    assert_eq!(trace_sign(&tr, 3), None);
}

#[test]
fn indicator_sign_follows_the_jump() {
    let schedule = Schedule { n_max: 4, ..Schedule::default() };
    let needle = Needle::straight(Point::new(1.0, 0.0), Point::new(0.15, 0.0), &unit()).unwrap();
    let th = Thresholds { burn_in: 1, ratio: 10.0 };
    for (h, sign) in [(1.0, 1), (-0.5, -1)] {
        let s = conductivity_scene(&base(0.3), vec![h]).unwrap();
        let (g, one) = dtn_gamma_pair(&s, schedule.order(4), 0.05).unwrap();
        let seq = FitContext::new(&s, &schedule).unwrap().fit(&needle).unwrap();
        let tr = conductivity_indicator(&seq, &g, &one, &th).unwrap();
        assert_eq!(trace_sign(&tr, 3), Some(sign), "h={h}");
        assert!(tr.values.iter().all(|v| v.1.im.abs() <= 1e-12 * (1.0 + v.1.norm())));
    }
}
