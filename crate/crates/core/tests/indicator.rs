use num_complex::Complex64;
use probe_core::indicator::{
    classify_point, indicator_profile, indicator_sequence, reconstruct, trace_from_values, GridSpec, ReconstructOptions,
};
use probe_core::{
    DtnMatrix, FitContext, ForwardModel, Needle, NeedleSequence, Pairing, Point, PointClass, Scene, Schedule, Shape,
    Thresholds, TipCase, TraceClass,
};
use std::sync::OnceLock;

const N_MAX: usize = 4;

fn unit() -> Shape {
    Shape::disc([0.0, 0.0], 1.0)
}

fn schedule() -> Schedule {
    Schedule { n_max: N_MAX, ..Schedule::default() }
}

fn th() -> Thresholds {
    Thresholds { burn_in: 1, ratio: 10.0 }
}

struct Fixture {
    scene: Scene,
    ctx: FitContext,
    l0: DtnMatrix,
    ld: DtnMatrix,
}

fn fixture(k: f64) -> Fixture {
    let scene = Scene::new(unit(), vec![Shape::disc([0.0, 0.0], 0.3)], k).unwrap();
    let model = ForwardModel::new(&scene, 0.05).unwrap();
    let (l0, ld) = model.dtn_pair(schedule().order(N_MAX)).unwrap();
    let ctx = FitContext::new(&scene, &schedule()).unwrap();
    Fixture { scene, ctx, l0, ld }
}

fn static_fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| fixture(0.0))
}

fn radial(tip: f64) -> Needle {
    Needle::straight(Point::new(1.0, 0.0), Point::new(tip, 0.0), &unit()).unwrap()
}

fn seq(f: &Fixture, n: &Needle) -> NeedleSequence {
    f.ctx.fit(n).unwrap()
}

#[test]
fn identical_maps_give_zero_indicator() {
    let f = static_fixture();
    let tr = indicator_sequence(&seq(f, &radial(0.5)), &f.l0, &f.l0, &th()).unwrap();
    assert!(tr.values.iter().all(|v| v.1.norm() == 0.0));
    assert_eq!(tr.class, TraceClass::Convergent);
    assert_eq!(tr.limit, Some(Complex64::new(0.0, 0.0)));
    assert_eq!(classify_point(&tr), PointClass::Outside);
}

#[test]
fn synthetic_traces_classify_by_the_rule() {
    let f = static_fixture();
    let s = seq(f, &radial(0.5));
    let zeros: Vec<(usize, Complex64)> = (1..=6).map(|n| (n, Complex64::new(0.0, 0.0))).collect();
    assert_eq!(classify_point(&trace_from_values(&s, zeros, &th()).unwrap()), PointClass::Outside);
    let geo: Vec<(usize, Complex64)> = (1..=6).map(|n| (n, Complex64::new(2f64.powi(n as i32 - 1), 0.0))).collect();
    let tr = trace_from_values(&s, geo, &th()).unwrap();
    assert_eq!(tr.class, TraceClass::Divergent);
    assert_eq!(tr.limit, None);
    assert_eq!(classify_point(&tr), PointClass::InsideOrBoundary);
}

#[test]
fn tangential_contact_is_unclassified() {
    let f = static_fixture();
    let s = seq(f, &radial(0.5));
    let zeros: Vec<(usize, Complex64)> = (1..=6).map(|n| (n, Complex64::new(0.0, 0.0))).collect();
    let tr = trace_from_values(&s, zeros, &th()).unwrap().with_case(TipCase::Exceptional);
    assert_eq!(tr.class, TraceClass::Unclassified);
    assert_eq!(classify_point(&tr), PointClass::InsideOrBoundary);
}

#[test]
fn static_indicator_is_real_and_nonnegative() {
    let f = static_fixture();
    for tip in [0.7, 0.31, 0.15] {
        let tr = indicator_sequence(&seq(f, &radial(tip)), &f.l0, &f.ld, &th()).unwrap();
        assert!(tr.imag_defect <= 1e-6, "{}", tr.imag_defect);
        assert!(tr.min_real >= -1e-8, "{}", tr.min_real);
    }
}

#[test]
fn helmholtz_indicator_is_real() {
    let f = fixture(1.0);
    let tr = indicator_sequence(&seq(&f, &radial(0.7)), &f.l0, &f.ld, &th()).unwrap();
    assert!(tr.imag_defect <= 1e-6, "{}", tr.imag_defect);
}

#[test]
fn point_just_outside_with_avoiding_needle_is_outside() {
    let f = static_fixture();
    let tr = indicator_sequence(&seq(f, &radial(0.31)), &f.l0, &f.ld, &th()).unwrap();
    assert_eq!(classify_point(&tr), PointClass::Outside);
}

#[test]
fn mismatched_maps_are_rejected() {
    let f = static_fixture();
    let model = ForwardModel::new(&f.scene, 0.05).unwrap();
    let (_, small) = model.dtn_pair(3).unwrap();
    let s = seq(f, &radial(0.5));
    assert_eq!(indicator_sequence(&s, &f.l0, &small, &th()).unwrap_err().code(), "basis_mismatch");
    let (a, b) = model.dtn_pair(5).unwrap();
    assert_eq!(indicator_sequence(&s, &a, &b, &th()).unwrap_err().code(), "basis_mismatch");
}

#[test]
fn profile_of_avoiding_needle_reaches_one() {
    let f = static_fixture();
    let n = Needle::straight(Point::new(0.0, 1.0), Point::new(0.6, 0.0), &unit()).unwrap();
    let p = indicator_profile(&n, &f.scene, &f.ctx, &f.l0, &f.ld, &[0.2, 0.4, 0.6, 0.8], &th()).unwrap();
    assert_eq!(p.t_hat, 1.0);
    assert!(p.rows.iter().all(|r| r.case == TipCase::AOutsideAvoiding && r.class == TraceClass::Convergent));
    assert!(p.to_csv().starts_with("t,x,y,case,class,last_abs,sup_abs\n"));
    assert!(indicator_profile(&n, &f.scene, &f.ctx, &f.l0, &f.ld, &[0.0, 0.5], &th()).is_err());
}

#[test]
fn no_obstacle_reconstructs_nothing() {
    let f = static_fixture();
    let opts = ReconstructOptions { grid: GridSpec::new(0.25, 0.1), thresholds: th(), pairing: Pairing::Sesquilinear };
    let field = reconstruct(&f.ctx, &f.l0, &f.l0, &opts).unwrap();
    assert!(field.points.len() > 20);
    assert!(field.points.iter().all(|p| p.class == PointClass::Outside));
    assert!(field.estimated_region().is_empty());
    assert_eq!(field.region_components(), 0);
    assert!(field.points.iter().all(|p| (p.x[0].powi(2) + p.x[1].powi(2)).sqrt() <= 0.9 + 1e-12));
    assert!(field.to_csv().starts_with("x,y,class,last_abs\n"));
}

#[test]
fn reconstruction_is_deterministic() {
    let f = static_fixture();
    let mut opts = ReconstructOptions { grid: GridSpec::new(0.2, 0.1), thresholds: th(), pairing: Pairing::Sesquilinear };
    opts.grid.window = Some(([-0.5, -0.5], [0.5, 0.5]));
    let a = reconstruct(&f.ctx, &f.l0, &f.ld, &opts).unwrap().to_csv();
    let b = reconstruct(&f.ctx, &f.l0, &f.ld, &opts).unwrap().to_csv();
    assert_eq!(a, b);
}
