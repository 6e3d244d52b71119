use probe_core::special::{
    bessel_j0, bessel_j1, bessel_jn_series, bessel_y0, bessel_y1, fundamental_solution, hankel1_0, t_series,
};
use probe_core::Point;
use proptest::prelude::*;
use std::f64::consts::PI;

/// `J_n(x) = (1/pi) ∫_0^pi cos(nτ - x sin τ) dτ` by the trapezoid rule,
/// which is spectrally accurate for this periodic integrand.
fn jn_integral(n: usize, x: f64) -> f64 {
    let m = 2000;
    let h = PI / m as f64;
    let f = |t: f64| (n as f64 * t - x * t.sin()).cos();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for i in 1..m {
        s += f(i as f64 * h);
    }
    s * h / PI
}

#[test]
fn reference_values() {
    let cases = [
        (bessel_j0(1.0), 0.765197686557967),
        (bessel_y0(1.0), 0.088256964215677),
        (bessel_y1(1.0), -0.781212821300289),
        (bessel_j0(10.0), -0.245935764451348),
        (bessel_y0(10.0), 0.055671167283599),
        (bessel_y1(10.0), 0.249015424206954),
    ];
    for (got, want) in cases {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn series_matches_integral_representation() {
    for n in 0..12 {
        for &x in &[0.1, 0.5, 1.0, 2.5, 5.0, 9.0] {
            let a = bessel_jn_series(n, x);
            let b = jn_integral(n, x);
            assert!((a - b).abs() < 1e-10, "J_{n}({x}): {a} vs {b}");
        }
    }
}

#[test]
fn j0_j1_match_integral_beyond_series_range() {
    for &x in &[12.5, 15.0, 20.0, 30.0] {
        assert!((bessel_j0(x) - jn_integral(0, x)).abs() < 1e-9);
        assert!((bessel_j1(x) - jn_integral(1, x)).abs() < 1e-9);
    }
}

#[test]
fn t_series_normalisation() {
    assert_eq!(t_series(3, 0.0), 1.0);
    let x = 1.7;
    let j = (x / 2.0f64).powi(2) / 2.0 * t_series(2, x);
    assert!((j - jn_integral(2, x)).abs() < 1e-12);
}

#[test]
fn fundamental_solution_values() {
    let o = Point::new(0.0, 0.0);
    let (g, _) = fundamental_solution(0.0, o, Point::new(1.0, 0.0)).unwrap();
    assert!(g.norm() < 1e-15);
    let (g, _) = fundamental_solution(0.0, o, Point::new((-1.0f64).exp(), 0.0)).unwrap();
    assert!((g.re - 1.0 / (2.0 * PI)).abs() < 1e-12);
    let (g, _) = fundamental_solution(1.0, o, Point::new(1.0, 0.0)).unwrap();
    assert!((g.re + 0.02206).abs() < 1e-5 && (g.im - 0.19130).abs() < 1e-5, "{g}");
    assert_eq!(fundamental_solution(1.0, o, o).unwrap_err().code(), "singular_point");
}

#[test]
fn fundamental_solution_gradient_matches_differences() {
    let x = Point::new(0.1, -0.2);
    for k in [0.0, 1.5] {
        let y = Point::new(0.6, 0.3);
        let (_, g) = fundamental_solution(k, x, y).unwrap();
        let h = 1e-6;
        for (c, e) in [Point::new(h, 0.0), Point::new(0.0, h)].into_iter().enumerate() {
            let fd = (fundamental_solution(k, x, y + e).unwrap().0 - fundamental_solution(k, x, y - e).unwrap().0) / (2.0 * h);
            assert!((fd - g[c]).norm() < 1e-7);
        }
    }
}

proptest! {
    #[test]
    fn wronskian(x in 0.05f64..40.0) {
        let w = bessel_j1(x) * bessel_y0(x) - bessel_j0(x) * bessel_y1(x);
        prop_assert!((w - 2.0 / (PI * x)).abs() < 1e-9 * (1.0 + 2.0 / (PI * x)));
    }

    #[test]
    fn hankel_is_j_plus_iy(x in 0.05f64..40.0) {
        let h = hankel1_0(x);
        prop_assert!((h.re - bessel_j0(x)).abs() < 1e-14 && (h.im - bessel_y0(x)).abs() < 1e-14);
    }

    #[test]
    fn fundamental_solution_is_radial(k in 0.0f64..3.0, r in 0.05f64..1.5, a in 0.0f64..6.3, b in 0.0f64..6.3) {
        let o = Point::new(0.0, 0.0);
        let g1 = fundamental_solution(k, o, Point::new(r * a.cos(), r * a.sin())).unwrap().0;
        let g2 = fundamental_solution(k, o, Point::new(r * b.cos(), r * b.sin())).unwrap().0;
        prop_assert!((g1 - g2).norm() < 1e-12);
    }
}
