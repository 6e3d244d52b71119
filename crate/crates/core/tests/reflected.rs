use num_complex::Complex64;
use probe_core::fem::FemSystem;
use probe_core::reflected::{
    blowup_set_estimate, check_needle_conditions, directed_distance, interpolate, kelvin_point, reflected_needle,
    reflected_run, reflected_solution, BallGrid,
};
use probe_core::{FitContext, ForwardModel, Needle, Point, Scene, Schedule, Shape, Thresholds};
use proptest::prelude::*;

const EPS: f64 = 0.3;

fn unit() -> Shape {
    Shape::disc([0.0, 0.0], 1.0)
}

fn scene(k: f64) -> Scene {
    Scene::new(unit(), vec![Shape::disc([0.0, 0.0], EPS)], k).unwrap()
}

fn o() -> Point {
    Point::new(0.0, 0.0)
}

#[test]
fn kelvin_examples() {
    assert!((kelvin_point(Point::new(0.3, 0.0), EPS).unwrap() - Point::new(0.3, 0.0)).norm() < 1e-15);
    assert!((kelvin_point(Point::new(0.6, 0.0), EPS).unwrap() - Point::new(0.15, 0.0)).norm() < 1e-15);
    let z = Point::new(0.47, -0.2);
    assert!((kelvin_point(kelvin_point(z, EPS).unwrap(), EPS).unwrap() - z).norm() < 1e-12);
    assert_eq!(kelvin_point(o(), EPS).unwrap_err().code(), "origin_singularity");
}

#[test]
fn reflected_segment_of_radial_needle() {
    let n = Needle::straight(Point::new(1.0, 0.0), Point::new(0.15, 0.0), &unit()).unwrap();
    let s = reflected_needle(&n, o(), EPS, 1.0).unwrap();
    assert!((s[0] - Point::new(0.3, 0.0)).norm() < 1e-12);
    assert!((s.last().unwrap() - Point::new(0.6, 0.0)).norm() < 1e-12);
    assert!(s.iter().all(|p| p.y.abs() < 1e-12 && p.x >= 0.3 - 1e-12 && p.x <= 0.6 + 1e-12));
}

#[test]
fn tip_on_the_inner_circle_reflects_to_itself() {
    let n = Needle::straight(Point::new(1.0, 0.0), Point::new(0.3, 0.0), &unit()).unwrap();
    let s = reflected_needle(&n, o(), EPS, 1.0).unwrap();
    assert_eq!(s.len(), 1);
    assert!((s[0] - Point::new(0.3, 0.0)).norm() < 1e-12);
}

#[test]
fn needle_conditions() {
    let deep = Needle::straight(Point::new(1.0, 0.0), Point::new(0.05, 0.0), &unit()).unwrap();
    assert_eq!(reflected_needle(&deep, o(), EPS, 1.0).unwrap_err().code(), "needle_conditions_violated");
    let twice = Needle::new(
        vec![Point::new(1.0, 0.0), Point::new(0.2, 0.0), Point::new(0.2, 0.5), Point::new(0.1, 0.25)],
        &unit(),
    )
    .unwrap();
    assert!(check_needle_conditions(&twice, o(), EPS, 1.0).is_err());
}

#[test]
fn constant_data_have_no_reflection() {
    let m = ForwardModel::new(&scene(0.0), 0.04).unwrap();
    let mixed = FemSystem::mixed(m.mesh.clone(), 0.0).unwrap();
    let v = vec![vec![Complex64::new(2.5, 0.0); m.mesh.n_nodes()]];
    let w = reflected_solution(&mixed, &v).unwrap();
    assert!(w[0].iter().all(|z| z.norm() < 1e-10));
}

#[test]
fn linear_data_reflection_matches_separation_of_variables() {
    let m = ForwardModel::new(&scene(0.0), 0.02).unwrap();
    let mixed = FemSystem::mixed(m.mesh.clone(), 0.0).unwrap();
    let v = vec![m.mesh.nodes.iter().map(|p| Complex64::new(p.x, 0.0)).collect::<Vec<_>>()];
    let w = reflected_solution(&mixed, &v).unwrap().pop().unwrap();
    let exact = (0.7 + EPS * EPS / 0.7) / (1.0 + EPS * EPS) - 0.7;
    let got = interpolate(&m.mesh, &w, Point::new(0.7, 0.0), 0).unwrap();
    assert!((got.re - exact).abs() < 0.01 * exact && got.im.abs() < 1e-12, "{got} vs {exact}");
    for &b in &m.mesh.outer_loop {
        assert!(w[b].norm() < 1e-12);
    }
}

#[test]
fn avoiding_needle_has_empty_blowup_set() {
    let s = scene(0.0);
    let m = ForwardModel::new(&s, 0.05).unwrap();
    let ctx = FitContext::new(&s, &Schedule { n_max: 5, ..Schedule::default() }).unwrap();
    let seq = ctx.fit(&Needle::straight(Point::new(1.0, 0.0), Point::new(0.6, 0.0), &unit()).unwrap()).unwrap();
    let run = reflected_run(&m, &seq, &BallGrid { spacing: 0.1, radius: 0.05 }, &Thresholds { burn_in: 1, ratio: 10.0 }).unwrap();
    assert!(run.sigma_r.is_empty());
    assert!(blowup_set_estimate(&run).points.is_empty());
    assert!(run.balls.iter().all(|b| {
        let p = Point::new(b.center[0], b.center[1]);
        p.norm() > EPS && p.norm() < 1.0
    }));
    assert!(run.balls_csv().starts_with("x,y,n,energy,class\n"));
}

#[test]
fn reflected_run_preconditions() {
    let seq_for = |s: &Scene| {
        FitContext::new(s, &Schedule { n_max: 4, ..Schedule::default() })
            .unwrap()
            .fit(&Needle::straight(Point::new(1.0, 0.0), Point::new(0.15, 0.0), &unit()).unwrap())
            .unwrap()
    };
    let th = Thresholds { burn_in: 1, ratio: 10.0 };
    let hk = scene(1.0);
    let m = ForwardModel::new(&hk, 0.08).unwrap();
    assert!(reflected_run(&m, &seq_for(&hk), &BallGrid { spacing: 0.1, radius: 0.05 }, &th).is_err());
    let s = scene(0.0);
    let m = ForwardModel::new(&s, 0.08).unwrap();
    assert!(reflected_run(&m, &seq_for(&s), &BallGrid { spacing: 0.1, radius: 0.2 }, &th).is_err());
    let off = Scene::new(unit(), vec![Shape::disc([0.1, 0.0], EPS)], 0.0).unwrap();
    let m = ForwardModel::new(&off, 0.08).unwrap();
    assert!(reflected_run(&m, &seq_for(&off), &BallGrid { spacing: 0.1, radius: 0.05 }, &th).is_err());
}

#[test]
fn directed_distances() {
    let a = [Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
    let b = [Point::new(0.0, 0.0)];
    assert_eq!(directed_distance(&a, &b), 1.0);
    assert_eq!(directed_distance(&b, &a), 0.0);
    assert_eq!(directed_distance(&[], &a), 0.0);
    assert!(directed_distance(&a, &[]).is_infinite());
}

proptest! {
    #[test]
    fn kelvin_algebra(x in -2.0f64..2.0, y in -2.0f64..2.0, eps in 0.05f64..1.0) {
        let z = Point::new(x, y);
        prop_assume!(z.norm() > 1e-3);
        let k = kelvin_point(z, eps).unwrap();
        prop_assert!((k.norm() * z.norm() - eps * eps).abs() <= 1e-12 * eps * eps);
        prop_assert!((kelvin_point(k, eps).unwrap() - z).norm() <= 1e-12 * (1.0 + z.norm()));
    }
}
