use num_complex::Complex64;
use probe_core::poincare::{
    basic_inequality_check, mixed_poincare_constant, neumann_poincare_constant, poincare_constants, small_volume_condition,
    smallness_check, subset_mean_constant, BasicInequalityContext, ConstantsReport, SubsetSpec,
};
use probe_core::special::{bessel_j0, bessel_j1, bessel_y0, bessel_y1};
use probe_core::{Needle, Point, Scene, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// First zero of `J_1`, the first nonzero Neumann eigenvalue root of the unit disc.
const J1P_1: f64 = 1.841_183_781_340_659;
/// First zero of `J_0`.
const J0_1: f64 = 2.404_825_557_695_773;

fn unit() -> Shape {
    Shape::disc([0.0, 0.0], 1.0)
}

fn default_scene(k: f64) -> Scene {
    Scene::new(unit(), vec![Shape::disc([0.0, 0.0], 0.3)], k).unwrap()
}

fn default_constants() -> &'static ConstantsReport {
    static C: OnceLock<ConstantsReport> = OnceLock::new();
    C.get_or_init(|| poincare_constants(&default_scene(0.0), 0.03).unwrap())
}

fn random_trace(rng: &mut ChaCha8Rng, n_modes: usize) -> Vec<Complex64> {
    (0..2 * n_modes + 1).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

#[test]
fn neumann_constant_of_unit_disc() {
    let c = neumann_poincare_constant(&unit(), 0.03).unwrap();
    assert!((c - 1.0 / J1P_1).abs() < 0.02 / J1P_1, "{c}");
}

#[test]
fn neumann_constant_of_unit_square() {
    let c = neumann_poincare_constant(&Shape::square([0.5, 0.5], 1.0), 0.03).unwrap();
    assert!((c - 1.0 / PI).abs() < 0.02 / PI, "{c}");
}

#[test]
fn neumann_constant_scales_with_the_shape() {
    for shape in [unit(), Shape::square([0.0, 0.0], 1.0)] {
        let base = neumann_poincare_constant(&shape, 0.04).unwrap();
        for s in [0.5, 2.0] {
            let scaled = neumann_poincare_constant(&shape.scaled(s, Point::new(0.0, 0.0)), 0.04 * s).unwrap();
            assert!((scaled / (s * base) - 1.0).abs() < 0.01, "{scaled} vs {}", s * base);
        }
    }
    let c = neumann_poincare_constant(&Shape::disc([0.2, 0.1], 0.3), 0.01).unwrap();
    assert!((c - 0.3 / J1P_1).abs() < 0.02 * 0.1629, "{c}");
}

#[test]
fn mixed_constant_bracket() {
    let empty = Scene::new(unit(), vec![], 0.0).unwrap();
    let c_empty = mixed_poincare_constant(&empty, 0.03).unwrap();
    assert!((c_empty - 1.0 / J0_1).abs() < 0.02 / J0_1, "{c_empty}");
}

/// First root of `J_1(μ/2) Y_0(μ) - Y_1(μ/2) J_0(μ)`: the radial mode vanishing at
/// `r = 1` with zero slope at `r = 1/2`.
fn annulus_mixed_root() -> f64 {
    let g = |mu: f64| bessel_j1(0.5 * mu) * bessel_y0(mu) - bessel_y1(0.5 * mu) * bessel_j0(mu);
    let (mut a, mut b) = (1.0, 5.0);
    assert!(g(a) * g(b) < 0.0);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if g(a) * g(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn mixed_constant_of_annulus() {
    let annulus = Scene::new(unit(), vec![Shape::disc([0.0, 0.0], 0.5)], 0.0).unwrap();
    let c = mixed_poincare_constant(&annulus, 0.03).unwrap();
    let exact = 1.0 / annulus_mixed_root();
    assert!((c - exact).abs() < 0.02 * exact, "{c} vs {exact}");
    // A thin shell clamped on one side only is stiffer than the full disc.
    assert!(c < 1.0 / J0_1);
}

#[test]
fn mixed_constant_is_mesh_stable() {
    let a = mixed_poincare_constant(&default_scene(0.0), 0.04).unwrap();
    let b = mixed_poincare_constant(&default_scene(0.0), 0.02).unwrap();
    assert!((a - b).abs() < 0.01 * b, "{a} vs {b}");
}

#[test]
fn subset_constant() {
    assert!((subset_mean_constant(0.5, 2.0, 2.0).unwrap() - 4.0 * 0.25).abs() < 1e-15);
    assert!((subset_mean_constant(0.5, 2.0, 0.5).unwrap() - 9.0 * 0.25).abs() < 1e-15);
    assert!((subset_mean_constant(0.5, 2.0, 2.0 - 1e-9).unwrap() - 1.0).abs() < 1e-8);
    assert!(subset_mean_constant(0.5, 2.0, 3.0).is_err());
    assert!(subset_mean_constant(0.5, 2.0, 0.0).is_err());
}

#[test]
fn smallness_thresholds() {
    let c = default_constants();
    assert!(c.c0 > 0.0 && c.cj.iter().all(|&v| v > 0.0));
    let expect = (1.0 / c.c0).min(1.0 / (8f64.sqrt() * c.cj[0]));
    assert!((c.k_max - expect).abs() < 1e-12);
    assert!((c.k_max - 1.0 / (8f64.sqrt() * 0.3 / J1P_1)).abs() < 0.02 * 2.171, "{}", c.k_max);
    let s0 = smallness_check(&default_scene(0.0), c);
    assert!(s0.ok_complement && s0.ok_obstacles);
    let above = smallness_check(&default_scene(c.k_max * 1.001), c);
    assert!(!(above.ok_complement && above.ok_obstacles));
    let below = smallness_check(&default_scene(c.k_max * 0.999), c);
    assert!(below.ok_complement && below.ok_obstacles);
}

#[test]
fn small_volume() {
    assert!(small_volume_condition(&unit(), 0.0));
    assert!(!small_volume_condition(&unit(), 1.0));
    assert!(small_volume_condition(&Shape::disc([0.0, 0.0], 0.5), 1.0));
}

#[test]
fn basic_inequality_without_obstacles_is_zero() {
    let s = Scene::new(unit(), vec![], 1.0).unwrap();
    let f = vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    let b = basic_inequality_check(&s, &f, &[], 0.05).unwrap();
    assert!(b.lhs.norm() < 1e-12 && b.rhs.abs() < 1e-12 && b.margin.abs() < 1e-12);
}

#[test]
fn basic_inequality_holds_for_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let k_max = default_constants().k_max;
    for k in [0.0, 0.5 * k_max, 0.9 * k_max] {
        let ctx = BasicInequalityContext::new(&default_scene(k), &[SubsetSpec::Full], 0.05, 6).unwrap();
        for _ in 0..20 {
            let b = ctx.check(&random_trace(&mut rng, 6)).unwrap();
            assert!(b.margin >= -1e-6, "k={k}: {b:?}");
        }
    }
}

#[test]
fn basic_inequality_with_tube_removed() {
    let needle = Needle::straight(Point::new(1.0, 0.0), Point::new(0.15, 0.0), &unit()).unwrap();
    let ctx = BasicInequalityContext::new(
        &default_scene(1.0),
        &[SubsetSpec::MinusTube { needle, delta: 0.05 }],
        0.05,
        6,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        assert!(ctx.check(&random_trace(&mut rng, 6)).unwrap().margin >= -1e-6);
    }
}

#[test]
fn basic_inequality_rejects_large_k() {
    let k = default_constants().k_max * 1.2;
    let f = vec![Complex64::new(1.0, 0.0); 3];
    let e = basic_inequality_check(&default_scene(k), &f, &[SubsetSpec::Full], 0.05).unwrap_err();
    assert_eq!(e.code(), "smallness_violated");
}
