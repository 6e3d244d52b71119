//! Reflected solutions on concentric discs at `k = 0`: the Kelvin
//! transform, the reflected curve and ball-grid blowup-set estimates.

use crate::blowup::{classify_growth, Growth, GrowthFit, Thresholds};
use crate::error::{Error, Result};
use crate::fem::{FemSystem, ForwardModel};
use crate::geometry::{point_segment_distance, pt, Needle, Point, Scene, Shape};
use crate::mesh::Mesh;
use crate::needle::{evaluate, NeedleSequence};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Samples of the reflected curve.
pub const REFLECTED_SAMPLES: usize = 200;

/// Inversion `ε² z / |z|²` across the circle of radius `eps` about the origin.
pub fn kelvin_point(z: Point, eps: f64) -> Result<Point> {
    let r2 = z.norm_squared();
    if r2 == 0.0 {
        return Err(Error::OriginSingularity);
    }
    Ok(z * (eps * eps / r2))
}

/// Centre, inner radius `ε` and outer radius `R` of a concentric-disc scene.
pub fn concentric(scene: &Scene) -> Result<(Point, f64, f64)> {
    match (&scene.outer, scene.obstacles.as_slice()) {
        (Shape::Disc { center: c0, radius: r }, [Shape::Disc { center: c1, radius: e }])
            if (pt(*c0) - pt(*c1)).norm() <= 1e-12 =>
        {
            Ok((pt(*c0), *e, *r))
        }
        _ => Err(Error::InvalidInput("scene must be two concentric discs".into())),
    }
}

/// Parameters `s` in [0,1] where the segment `a`-`b` meets the circle.
fn circle_hits(a: Point, b: Point, c: Point, eps: f64) -> Vec<f64> {
    let d = b - a;
    let f = a - c;
    let qa = d.norm_squared();
    let qb = 2.0 * f.dot(&d);
    let qc = f.norm_squared() - eps * eps;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let mut out: Vec<f64> = [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)]
        .into_iter()
        .filter(|s| (-1e-12..=1.0 + 1e-12).contains(s))
        .collect();
    out.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    out
}

/// Needle parameters where the needle meets the circle `|y-c| = ε`, sorted.
fn crossings(needle: &Needle, c: Point, eps: f64) -> Vec<f64> {
    let total = needle.length();
    let mut acc = 0.0;
    let mut out: Vec<f64> = Vec::new();
    for (a, b) in needle.segments() {
        let len = (b - a).norm();
        for s in circle_hits(a, b, c, eps) {
            let t = (acc + s * len) / total;
            if out.last().is_none_or(|l| (t - l).abs() > 1e-12) {
                out.push(t);
            }
        }
        acc += len;
    }
    out
}

/// Whether the needle meets the closed inner disc.
pub fn meets_inner_disc(needle: &Needle, c: Point, eps: f64) -> bool {
    needle.segments().any(|(a, b)| point_segment_distance(c, a, b) <= eps)
}

/// Checks that the needle crosses `|y-c| = ε` exactly once and avoids
/// `|y-c| ≤ ε²/R`; returns the crossing parameter.
pub fn check_needle_conditions(needle: &Needle, c: Point, eps: f64, r: f64) -> Result<f64> {
    let cr = crossings(needle, c, eps);
    if cr.len() != 1 {
        return Err(Error::NeedleConditionsViolated(format!("needle meets the inner circle {} times", cr.len())));
    }
    let inner = eps * eps / r;
    let dmin = needle.segments().map(|(a, b)| point_segment_distance(c, a, b)).fold(f64::INFINITY, f64::min);
    if dmin <= inner {
        return Err(Error::NeedleConditionsViolated(format!(
            "needle comes within {dmin:.4} of the centre, inside radius {inner:.4}"
        )));
    }
    Ok(cr[0])
}

/// `σ^R`: the Kelvin image of the part of the needle in the closed inner
/// disc, sampled along the needle.
pub fn reflected_needle(needle: &Needle, c: Point, eps: f64, r: f64) -> Result<Vec<Point>> {
    let t0 = check_needle_conditions(needle, c, eps, r)?;
    if 1.0 - t0 <= 1e-12 {
        return Ok(vec![c + kelvin_point(needle.tip() - c, eps)?]);
    }
    (0..REFLECTED_SAMPLES)
        .map(|i| {
            let t = t0 + (1.0 - t0) * i as f64 / (REFLECTED_SAMPLES - 1) as f64;
            Ok(c + kelvin_point(needle.point_at(t) - c, eps)?)
        })
        .collect()
}

/// `w = u - v` on the complement, where `u` solves the mixed problem with
/// Dirichlet data `v|∂Ω`. `v` holds nodal values on the whole mesh; entries
/// of `w` outside the complement are zero.
pub fn reflected_solution(mixed: &FemSystem, v: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
    let mesh = &mixed.mesh;
    let data: Vec<Vec<Complex64>> = v.iter().map(|vn| mesh.outer_loop.iter().map(|&i| vn[i]).collect()).collect();
    let u = mixed.solve_complex(&data)?;
    let active = mesh.active_nodes(|t| mesh.tri_region[t] == 0);
    Ok(u
        .into_iter()
        .zip(v)
        .map(|(un, vn)| {
            un.iter().zip(vn).enumerate().map(|(i, (a, b))| if active[i] { a - b } else { Complex64::new(0.0, 0.0) }).collect()
        })
        .collect())
}

/// P1 interpolant of nodal values at `p`, searching triangles of `region`.
pub fn interpolate(mesh: &Mesh, u: &[Complex64], p: Point, region: usize) -> Option<Complex64> {
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.tri_region[t] != region {
            continue;
        }
        let [a, b, c] = tri.map(|i| mesh.nodes[i]);
        let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        let l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
        let l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
        let l0 = 1.0 - l1 - l2;
        let tol = -1e-10;
        if l0 >= tol && l1 >= tol && l2 >= tol {
            return Some(u[tri[0]] * l0 + u[tri[1]] * l1 + u[tri[2]] * l2);
        }
    }
    None
}

/// Ball lattice for blowup-set estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallGrid {
    pub spacing: f64,
    pub radius: f64,
}

/// Reflected fields `w_n` of a needle sequence and their ball energies.
#[derive(Clone, Debug, Serialize)]
pub struct ReflectedRun {
    pub center: [f64; 2],
    pub eps: f64,
    pub r: f64,
    pub needle: Vec<[f64; 2]>,
    /// Sampled reflected curve; empty when the needle avoids the inner disc.
    pub sigma_r: Vec<[f64; 2]>,
    /// `‖w_n‖²_{H¹}` over the complement.
    pub h1_norms: Vec<(usize, f64)>,
    pub balls: Vec<BallTrace>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BallTrace {
    pub center: [f64; 2],
    pub energies: Vec<f64>,
    pub growth: GrowthFit,
}

/// Reflected solutions of a fitted sequence on a concentric-disc model.
pub fn reflected_run(model: &ForwardModel, seq: &NeedleSequence, grid: &BallGrid, th: &Thresholds) -> Result<ReflectedRun> {
    let scene = &model.scene;
    if scene.k != 0.0 {
        return Err(Error::InvalidInput("reflected solutions are defined at k = 0".into()));
    }
    let (c, eps, r) = concentric(scene)?;
    if !(grid.spacing > 0.0 && grid.radius > 0.0) || grid.radius > 0.5 * eps.min(r - eps) {
        return Err(Error::InvalidInput("ball radius must be positive and at most half the gap".into()));
    }
    let sigma_r = if meets_inner_disc(&seq.needle, c, eps) {
        reflected_needle(&seq.needle, c, eps, r)?
    } else {
        Vec::new()
    };
    let mesh = &model.mesh;
    let mixed = FemSystem::mixed(mesh.clone(), 0.0)?;
    let v: Vec<Vec<Complex64>> = seq
        .terms
        .iter()
        .map(|t| Ok(evaluate(seq, t.n, &mesh.nodes)?.into_iter().map(|e| e.0).collect()))
        .collect::<Result<_>>()?;
    let w = reflected_solution(&mixed, &v)?;
    let tris: Vec<usize> = (0..mesh.triangles.len()).filter(|&t| mesh.tri_region[t] == 0).collect();
    // Per-triangle gradient energy of each w_n.
    let dens: Vec<Vec<f64>> = w
        .iter()
        .map(|wn| {
            tris.iter()
                .map(|&t| {
                    let g = mesh.hat_gradients(t);
                    let tri = mesh.triangles[t];
                    let (mut gx, mut gy) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                    for a in 0..3 {
                        gx += wn[tri[a]] * g[a].x;
                        gy += wn[tri[a]] * g[a].y;
                    }
                    mesh.area(t) * (gx.norm_sqr() + gy.norm_sqr())
                })
                .collect()
        })
        .collect();
    let h1_norms = seq
        .terms
        .iter()
        .zip(&w)
        .zip(&dens)
        .map(|((t, wn), d)| {
            let (_, m) = crate::fem::energy_parts(mesh, wn, |tt| mesh.tri_region[tt] == 0);
            (t.n, d.iter().sum::<f64>() + m)
        })
        .collect();
    let centroids: Vec<Point> = tris.iter().map(|&t| mesh.centroid(t)).collect();
    let m = ((r + grid.spacing) / grid.spacing).ceil() as i64;
    let mut balls = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let z = c + Point::new(i as f64, j as f64) * grid.spacing;
            let rho = (z - c).norm();
            if rho <= eps || rho >= r {
                continue;
            }
            let inside: Vec<usize> =
                (0..tris.len()).filter(|&q| (centroids[q] - z).norm() < grid.radius).collect();
            let energies: Vec<f64> = dens.iter().map(|d| inside.iter().map(|&q| d[q]).sum()).collect();
            let growth = classify_growth(&energies, th)?;
            balls.push(BallTrace { center: [z.x, z.y], energies, growth });
        }
    }
    Ok(ReflectedRun {
        center: [c.x, c.y],
        eps,
        r,
        needle: seq.needle.vertices().iter().map(|p| [p.x, p.y]).collect(),
        sigma_r: sigma_r.iter().map(|p| [p.x, p.y]).collect(),
        h1_norms,
        balls,
    })
}

/// Estimated blowup set and its directed distances to the reflected curve.
#[derive(Clone, Debug, Serialize)]
pub struct BlowupSet {
    pub points: Vec<[f64; 2]>,
    /// `sup_{z in set} dist(z, σ^R)`.
    pub set_to_curve: f64,
    /// `sup_{y in σ^R} dist(y, set)`.
    pub curve_to_set: f64,
}

/// Ball centres whose energy trace diverges.
pub fn blowup_set_estimate(run: &ReflectedRun) -> BlowupSet {
    let points: Vec<[f64; 2]> =
        run.balls.iter().filter(|b| b.growth.class == Growth::Divergent).map(|b| b.center).collect();
    let curve: Vec<Point> = run.sigma_r.iter().map(|&p| pt(p)).collect();
    let set: Vec<Point> = points.iter().map(|&p| pt(p)).collect();
    BlowupSet { set_to_curve: directed_distance(&set, &curve), curve_to_set: directed_distance(&curve, &set), points }
}

/// `sup_{a in from} min_{b in to} |a - b|`; zero for an empty `from`,
/// infinite for an empty `to`.
pub fn directed_distance(from: &[Point], to: &[Point]) -> f64 {
    from.iter().map(|a| to.iter().map(|b| (a - b).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

impl ReflectedRun {
    pub fn balls_csv(&self) -> String {
        let mut s = String::from("x,y,n,energy,class\n");
        for b in &self.balls {
            let class = if b.growth.class == Growth::Divergent { "divergent" } else { "bounded" };
            for (i, e) in b.energies.iter().enumerate() {
                s += &format!("{},{},{},{:e},{}\n", b.center[0], b.center[1], i + 1, e, class);
            }
        }
        s
    }
}

/// Polyline table `x,y`.
pub fn polyline_csv(points: &[[f64; 2]]) -> String {
    let mut s = String::from("x,y\n");
    for p in points {
        s += &format!("{},{}\n", p[0], p[1]);
    }
    s
}
