//! Conforming triangulation of the outer domain with obstacle boundaries
//! embedded as constraint loops.
//!
//! One mesh serves every operator of a scene: the background problem uses all
//! triangles, the obstacle problem only those tagged with region 0, and the
//! conductivity problem weights each region.

use crate::error::{Error, Result};
use crate::geometry::{Point, Scene, Shape};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use std::collections::HashMap;

/// Minimum interior angle accepted by the quality gate, in degrees.
pub const MIN_ANGLE_DEG: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeTag {
    Outer,
    Obstacle(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: EdgeTag,
}

/// P1 triangulation of the outer domain.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    /// 0 for the complement of the obstacles, `j + 1` for obstacle `j`.
    pub tri_region: Vec<usize>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Outer boundary nodes in counter-clockwise order.
    pub outer_loop: Vec<usize>,
    pub obstacle_loops: Vec<Vec<usize>>,
    pub h: f64,
}

fn polygon_contains(p: &[Point], q: Point) -> bool {
    let n = p.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (p[i], p[j]);
        if (a.y > q.y) != (b.y > q.y) {
            let x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if q.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn triangle_min_angle(a: Point, b: Point, c: Point) -> f64 {
    let ang = |p: Point, q: Point, r: Point| {
        let u = q - p;
        let v = r - p;
        (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b)).to_degrees()
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((q - p).x * (r - p).y - (q - p).y * (r - p).x)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        (self.nodes[a] + self.nodes[b] + self.nodes[c]) / 3.0
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| triangle_min_angle(self.nodes[a], self.nodes[b], self.nodes[c]))
            .fold(180.0, f64::min)
    }

    /// Number of distinct edges.
    pub fn n_edges(&self) -> usize {
        let mut set = std::collections::HashSet::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.len()
    }

    /// Connected components of the triangles selected by `keep`, via shared edges.
    pub fn components(&self, keep: impl Fn(usize) -> bool) -> usize {
        let mut edge_owner: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if !keep(t) {
                continue;
            }
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                edge_owner.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut parent: Vec<usize> = (0..self.triangles.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for owners in edge_owner.values() {
            for w in owners.windows(2) {
                let (ra, rb) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        let mut roots = std::collections::HashSet::new();
        for t in 0..self.triangles.len() {
            if keep(t) {
                roots.insert(find(&mut parent, t));
            }
        }
        roots.len()
    }

    /// Per-node flag: touched by a triangle selected by `keep`.
    pub fn active_nodes(&self, keep: impl Fn(usize) -> bool) -> Vec<bool> {
        let mut act = vec![false; self.nodes.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            if keep(t) {
                for &v in tri {
                    act[v] = true;
                }
            }
        }
        act
    }

    /// Gradients of the three P1 hat functions on triangle `t`.
    pub fn hat_gradients(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let det = (q - p).x * (r - p).y - (q - p).y * (r - p).x;
        let perp = |u: Point| Point::new(-u.y, u.x) / det;
        [perp(r - q), perp(p - r), perp(q - p)]
    }
}

/// Triangulates the outer shape of `scene` with target edge length `h`.
pub fn triangulate(scene: &Scene, h: f64) -> Result<Mesh> {
    triangulate_shapes(&scene.outer, &scene.obstacles, h)
}

/// Triangulates `outer` with the boundaries of `obstacles` as constraints.
pub fn triangulate_shapes(outer: &Shape, obstacles: &[Shape], h: f64) -> Result<Mesh> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
    }
    for (j, o) in obstacles.iter().enumerate() {
        if o.perimeter() / h < 8.0 {
            return Err(Error::MeshQualityFailure(format!(
                "h = {h} gives fewer than 8 edges on obstacle {j} (perimeter {:.4})",
                o.perimeter()
            )));
        }
    }
    if outer.perimeter() / h < 8.0 {
        return Err(Error::MeshQualityFailure(format!("h = {h} is too coarse for the outer boundary")));
    }

    let mut nodes: Vec<Point> = Vec::new();
    let mut loops: Vec<Vec<usize>> = Vec::new();
    for shape in std::iter::once(outer).chain(obstacles.iter()) {
        let pts = shape.boundary_loop(h, 8);
        let start = nodes.len();
        nodes.extend(pts.iter().copied());
        loops.push((start..nodes.len()).collect());
    }
    let n_fixed = nodes.len();

    // Hexagonal lattice away from every boundary curve.
    let keep_gap = 0.55 * h;
    let (lo, hi) = outer.bbox();
    let dy = h * 3f64.sqrt() / 2.0;
    let ny = ((hi.y - lo.y) / dy).ceil() as i64 + 1;
    let nx = ((hi.x - lo.x) / h).ceil() as i64 + 1;
    for j in 0..=ny {
        let y = lo.y + j as f64 * dy;
        let shift = if j % 2 == 0 { 0.0 } else { 0.5 * h };
        for i in 0..=nx {
            let p = Point::new(lo.x + i as f64 * h + shift, y);
            if outer.signed_distance(p) >= -keep_gap {
                continue;
            }
            if obstacles.iter().any(|o| o.boundary_distance(p) <= keep_gap) {
                continue;
            }
            nodes.push(p);
        }
    }

    let loop_polys: Vec<Vec<Point>> = loops.iter().map(|l| l.iter().map(|&i| nodes[i]).collect()).collect();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    for l in &loops {
        for i in 0..l.len() {
            edges.push([l[i], l[(i + 1) % l.len()]]);
        }
    }

    let mut tris = cdt(&nodes, &edges)?;
    // Laplacian smoothing of the free lattice nodes; boundary nodes stay fixed.
    for _ in 0..4 {
        let mut sum = vec![Point::zeros(); nodes.len()];
        let mut cnt = vec![0usize; nodes.len()];
        for t in &tris {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                sum[a] += nodes[b];
                cnt[a] += 1;
                sum[b] += nodes[a];
                cnt[b] += 1;
            }
        }
        let mut moved = false;
        for v in n_fixed..nodes.len() {
            if cnt[v] == 0 {
                continue;
            }
            let p = sum[v] / cnt[v] as f64;
            let safe = outer.signed_distance(p) < -0.25 * h
                && obstacles.iter().all(|o| {
                    let (d0, d1) = (o.signed_distance(nodes[v]), o.signed_distance(p));
                    d0.signum() == d1.signum() && d1.abs() > 0.25 * h
                });
            if safe {
                nodes[v] = p;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        tris = cdt(&nodes, &edges)?;
    }

    let outer_poly = &loop_polys[0];
    let mut triangles = Vec::with_capacity(tris.len());
    let mut tri_region = Vec::with_capacity(tris.len());
    for t in tris {
        let c = (nodes[t[0]] + nodes[t[1]] + nodes[t[2]]) / 3.0;
        if !polygon_contains(outer_poly, c) {
            continue;
        }
        let region = loop_polys[1..].iter().position(|p| polygon_contains(p, c)).map_or(0, |j| j + 1);
        let (p, q, r) = (nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        let det = (q - p).x * (r - p).y - (q - p).y * (r - p).x;
        triangles.push(if det > 0.0 { t } else { [t[0], t[2], t[1]] });
        tri_region.push(region);
    }

    let mut boundary_edges = Vec::new();
    for (li, l) in loops.iter().enumerate() {
        let tag = if li == 0 { EdgeTag::Outer } else { EdgeTag::Obstacle(li - 1) };
        for i in 0..l.len() {
            boundary_edges.push(BoundaryEdge { nodes: [l[i], l[(i + 1) % l.len()]], tag });
        }
    }

    let mesh = Mesh {
        nodes,
        triangles,
        tri_region,
        boundary_edges,
        outer_loop: loops[0].clone(),
        obstacle_loops: loops[1..].to_vec(),
        h,
    };
    // Drop lattice nodes not used by any triangle (cannot occur for valid input).
    if mesh.active_nodes(|_| true).iter().any(|a| !a) {
        return Err(Error::MeshQualityFailure("orphan nodes after triangulation".into()));
    }
    let ma = mesh.min_angle();
    if ma < MIN_ANGLE_DEG {
        return Err(Error::MeshQualityFailure(format!("minimum angle {ma:.2} deg below {MIN_ANGLE_DEG} deg")));
    }
    if mesh.components(|t| mesh.tri_region[t] == 0) != 1 {
        return Err(Error::ComplementDisconnected);
    }
    Ok(mesh)
}

fn cdt(nodes: &[Point], edges: &[[usize; 2]]) -> Result<Vec<[usize; 3]>> {
    let verts: Vec<Point2<f64>> = nodes.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let t = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(verts, edges.to_vec())
        .map_err(|e| Error::MeshQualityFailure(format!("triangulation failed: {e:?}")))?;
    if t.num_vertices() != nodes.len() {
        return Err(Error::MeshQualityFailure("duplicate mesh vertices".into()));
    }
    Ok(t.inner_faces().map(|f| f.vertices().map(|v| v.fix().index())).collect())
}
