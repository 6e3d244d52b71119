use num_complex::Complex64;
use probe_core::dtn::dtn_annulus_analytic;
use probe_core::fem::{check_admissibility, energy_identity, energy_identity_residual, solve_mixed};
use probe_core::mesh::{triangulate, MIN_ANGLE_DEG};
use probe_core::reflected::interpolate;
use probe_core::{DtnMatrix, ForwardModel, Point, Scene, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn annulus() -> Scene {
    Scene::new(Shape::disc([0.0, 0.0], 1.0), vec![Shape::disc([0.0, 0.0], 0.5)], 0.0).unwrap()
}

fn default_scene() -> Scene {
    Scene::new(Shape::disc([0.0, 0.0], 1.0), vec![Shape::disc([0.0, 0.0], 0.3)], 0.0).unwrap()
}

fn annulus_model() -> &'static (ForwardModel, DtnMatrix, DtnMatrix) {
    static M: OnceLock<(ForwardModel, DtnMatrix, DtnMatrix)> = OnceLock::new();
    M.get_or_init(|| {
        let m = ForwardModel::new(&annulus(), 0.02).unwrap();
        let (l0, ld) = m.dtn_pair(8).unwrap();
        (m, l0, ld)
    })
}

fn random_trace(rng: &mut ChaCha8Rng, n_modes: usize) -> Vec<Complex64> {
    (0..2 * n_modes + 1).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn mode(n_modes: usize, m: i64) -> Vec<Complex64> {
    let mut f = vec![c(0.0, 0.0); 2 * n_modes + 1];
    f[(m + n_modes as i64) as usize] = c(1.0, 0.0);
    f
}

#[test]
fn annulus_mesh_nodes_lie_in_the_complement() {
    let mesh = &annulus_model().0.mesh;
    let act = mesh.active_nodes(|t| mesh.tri_region[t] == 0);
    for (p, a) in mesh.nodes.iter().zip(act) {
        if a {
            assert!(p.norm() >= 0.5 - 1e-9 && p.norm() <= 1.0 + 1e-9, "{p}");
        }
    }
}

#[test]
fn disc_mesh_has_euler_characteristic_one() {
    let mesh = triangulate(&default_scene(), 0.05).unwrap();
    let (v, e, f) = (mesh.n_nodes() as i64, mesh.n_edges() as i64, mesh.triangles.len() as i64);
    assert_eq!(v - e + f, 1);
    assert!(mesh.min_angle() >= MIN_ANGLE_DEG, "{}", mesh.min_angle());
    let total: f64 = (0..mesh.triangles.len()).map(|t| mesh.area(t)).sum();
    let inscribed = 0.5 * mesh.outer_loop.len() as f64 * (2.0 * PI / mesh.outer_loop.len() as f64).sin();
    assert!((total - inscribed).abs() < 1e-10);
    assert!((0..mesh.triangles.len()).all(|t| mesh.area(t) > 0.0));
}

#[test]
fn two_obstacle_complement_is_connected() {
    let s = Scene::new(
        Shape::disc([0.0, 0.0], 1.0),
        vec![Shape::disc([-0.4, 0.0], 0.2), Shape::disc([0.4, 0.2], 0.2)],
        0.0,
    )
    .unwrap();
    let mesh = triangulate(&s, 0.04).unwrap();
    assert_eq!(mesh.components(|t| mesh.tri_region[t] == 0), 1);
    assert_eq!(mesh.components(|t| mesh.tri_region[t] == 1), 1);
    assert_eq!(mesh.components(|t| mesh.tri_region[t] == 2), 1);
    assert!(mesh.min_angle() >= MIN_ANGLE_DEG);
}

#[test]
fn polygon_domain_meshes() {
    let s = Scene::new(Shape::square([0.0, 0.0], 2.0), vec![Shape::square([0.2, 0.1], 0.5)], 0.0).unwrap();
    let mesh = triangulate(&s, 0.05).unwrap();
    let area: f64 = (0..mesh.triangles.len()).filter(|&t| mesh.tri_region[t] == 1).map(|t| mesh.area(t)).sum();
    assert!((area - 0.25).abs() < 1e-10);
    assert!(mesh.min_angle() >= MIN_ANGLE_DEG);
}

#[test]
fn constant_data_give_constant_solution() {
    let mesh = annulus_model().0.mesh.clone();
    let u = solve_mixed(mesh.clone(), 0.0, &vec![c(1.0, 0.0); mesh.outer_loop.len()]).unwrap();
    let act = mesh.active_nodes(|t| mesh.tri_region[t] == 0);
    for (v, a) in u.iter().zip(act) {
        if a {
            assert!((v - c(1.0, 0.0)).norm() < 1e-10);
        }
    }
}

#[test]
fn first_mode_matches_separation_of_variables() {
    let mesh = annulus_model().0.mesh.clone();
    let f: Vec<Complex64> = mesh.outer_loop.iter().map(|&v| {
        let p = mesh.nodes[v];
        Complex64::from_polar(1.0, p.y.atan2(p.x))
    }).collect();
    let u = solve_mixed(mesh.clone(), 0.0, &f).unwrap();
    let exact = (0.75 + 0.25 / 0.75) / 1.25;
    let at = |p: Point| interpolate(&mesh, &u, p, 0).unwrap();
    assert!((at(Point::new(0.75, 0.0)) - c(exact, 0.0)).norm() < 0.01 * exact);
    assert!((at(Point::new(0.0, 0.75)) - c(0.0, exact)).norm() < 0.01 * exact);
}

#[test]
fn linear_data_are_reproduced_without_obstacles() {
    let s = Scene::new(Shape::disc([0.0, 0.0], 1.0), vec![], 0.0).unwrap();
    let m = ForwardModel::new(&s, 0.05).unwrap();
    let g: Vec<Vec<f64>> = vec![m.mesh.outer_loop.iter().map(|&v| m.mesh.nodes[v].x).collect()];
    let u = m.background.solve_real(&g).unwrap().pop().unwrap();
    for (p, v) in m.mesh.nodes.iter().zip(u) {
        assert!((p.x - v).abs() < 1e-10);
    }
}

#[test]
fn analytic_annulus_eigenvalues() {
    let l = dtn_annulus_analytic(2.0, 1.0, 1).unwrap();
    assert!((l[1] - 0.3).abs() < 1e-12);
    let l = dtn_annulus_analytic(1.0, 0.5, 2).unwrap();
    assert!((l[1] - 0.6).abs() < 1e-12 && (l[2] - 30.0 / 17.0).abs() < 1e-12);
    let l = dtn_annulus_analytic(1.0, 1e-8, 5).unwrap();
    for (n, v) in l.iter().enumerate() {
        assert!((v - n as f64).abs() < 1e-12);
    }
    assert!(dtn_annulus_analytic(1.0, 1.0, 2).is_err());
}

#[test]
fn annulus_dtn_matches_analytic_modes() {
    let (_, _, ld) = annulus_model();
    let exact = dtn_annulus_analytic(1.0, 0.5, 8).unwrap();
    assert!(ld.mode_eigenvalue(0).unwrap().abs() < 1e-8);
    for n in 1..=4 {
        for m in [n as i64, -(n as i64)] {
            let got = ld.mode_eigenvalue(m).unwrap();
            assert!((got - exact[n]).abs() < 0.01 * exact[n], "mode {m}: {got} vs {}", exact[n]);
        }
    }
}

#[test]
fn eigenvalue_error_converges_under_refinement() {
    let err = |h: f64| {
        let m = ForwardModel::new(&annulus(), h).unwrap();
        let (_, ld) = m.dtn_pair(4).unwrap();
        let exact = dtn_annulus_analytic(1.0, 0.5, 4).unwrap();
        (1..=4).map(|n| (ld.mode_eigenvalue(n as i64).unwrap() - exact[n]).abs()).sum::<f64>()
    };
    let (e1, e2) = (err(0.08), err(0.04));
    assert!(e1 / e2 >= 1.7, "{e1} / {e2}");
}

#[test]
fn energy_identity_is_exact_without_obstacles() {
    let s = Scene::new(Shape::disc([0.0, 0.0], 1.0), vec![], 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = energy_identity_residual(&s, &random_trace(&mut rng, 6), 0.05).unwrap();
    assert!(r < 1e-12, "{r}");
}

#[test]
fn energy_identity_on_default_scene() {
    let s = default_scene().with_k(1.0).unwrap();
    let m = ForwardModel::new(&s, 0.04).unwrap();
    let (l0, ld) = m.dtn_pair(6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let e = energy_identity(&m, &l0, &ld, &random_trace(&mut rng, 6)).unwrap();
        assert!(e.residual <= 1e-2, "{}", e.residual);
    }
}

#[test]
fn annulus_lhs_matches_closed_form() {
    // Mode 1 has eigenvalue 1 without the obstacle and 0.6 with it, on a circle of length 2π.
    let (_, l0, ld) = annulus_model();
    let f = mode(8, 1);
    let lhs = l0.sesquilinear(&f) - ld.sesquilinear(&f);
    let exact = 2.0 * PI * (1.0 - 0.6);
    assert!((lhs.re - exact).abs() < 0.01 * exact && lhs.im.abs() < 1e-10, "{lhs}");
}

#[test]
fn static_form_is_real_and_nonnegative() {
    let (_, l0, ld) = annulus_model();
    let diff = l0.difference(ld).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let v = diff.sesquilinear(&random_trace(&mut rng, 8));
        assert!(v.re >= -1e-8 && v.im.abs() < 1e-10 * (1.0 + v.re.abs()), "{v}");
    }
}

#[test]
fn form_is_hermitian() {
    let s = default_scene().with_k(1.3).unwrap();
    let m = ForwardModel::new(&s, 0.05).unwrap();
    let (_, ld) = m.dtn_pair(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let herm = |f: &[Complex64], g: &[Complex64]| ld.pairing(&ld.basis.conj_trace(f), g);
    for _ in 0..10 {
        let (f, g) = (random_trace(&mut rng, 5), random_trace(&mut rng, 5));
        let (a, b) = (herm(&f, &g), herm(&g, &f).conj());
        assert!((a - b).norm() <= 1e-8 * a.norm().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn admissibility() {
    let disc = Scene::new(Shape::disc([0.0, 0.0], 1.0), vec![], 0.0).unwrap();
    assert!(check_admissibility(&disc, 0.05).unwrap().admissible);
    let r = check_admissibility(&disc.with_k(2.404825557695773).unwrap(), 0.05).unwrap();
    assert!(!r.admissible, "{r:?}");
    assert!((r.dirichlet_nearest - 5.7832).abs() < 0.05);
    assert!(check_admissibility(&annulus().with_k(0.5).unwrap(), 0.05).unwrap().admissible);
}

#[test]
fn text_roundtrip() {
    let (_, l0, _) = annulus_model();
    let back = DtnMatrix::from_text(&l0.to_text()).unwrap();
    assert_eq!(back.basis, l0.basis);
    assert!((&back.real_form - &l0.real_form).abs().max() < 1e-14);
    assert!(DtnMatrix::from_text("not a matrix").is_err());
}

#[test]
fn mismatched_bases_are_rejected() {
    let m = &annulus_model().0;
    let (a, _) = m.dtn_pair(3).unwrap();
    let (_, b) = m.dtn_pair(4).unwrap();
    assert_eq!(a.difference(&b).unwrap_err().code(), "basis_mismatch");
}

#[test]
fn shared_mesh_with_arc() {
    let mesh = Arc::new(triangulate(&annulus(), 0.05).unwrap());
    let m = ForwardModel::with_mesh(&annulus(), mesh.clone()).unwrap();
    assert!(Arc::ptr_eq(&m.mesh, &mesh));
}
