//! Scenes, needles, cones and tubes.
//!
//! Shapes are discs or simple polygons. Needle queries (impact parameter,
//! tip classification, tube membership) are computed exactly per segment.

use crate::error::{Error, Result};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Point = Vector2<f64>;

/// Distance tolerance used for tangency and on-boundary decisions.
pub const GEOM_TOL: f64 = 1e-12;
/// Tolerance for accepting a needle start point as lying on the outer boundary.
pub const ON_BOUNDARY_TOL: f64 = 1e-9;

#[inline]
pub fn pt(a: [f64; 2]) -> Point {
    Point::new(a[0], a[1])
}

#[inline]
fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Closest parameter in [0,1] on segment `a`-`b` to `p`.
pub fn segment_closest_param(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return 0.0;
    }
    ((p - a).dot(&d) / l2).clamp(0.0, 1.0)
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let s = segment_closest_param(p, a, b);
    (p - (a + (b - a) * s)).norm()
}

/// Intersection parameters `(s, u)` of segments `p0+s(p1-p0)` and `q0+u(q1-q0)`.
///
/// Collinear overlapping segments report the overlap end closest to `p0`.
pub fn segment_intersection(p0: Point, p1: Point, q0: Point, q1: Point) -> Option<(f64, f64)> {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = cross(r, s);
    let qp = q0 - p0;
    let scale = r.norm() * s.norm();
    if denom.abs() <= 1e-14 * scale {
        // Parallel: intersect only if collinear.
        if cross(qp, r).abs() > 1e-14 * r.norm() * qp.norm().max(1.0) {
            return None;
        }
        let rr = r.norm_squared();
        if rr == 0.0 {
            return None;
        }
        let t0 = qp.dot(&r) / rr;
        let t1 = (q1 - p0).dot(&r) / rr;
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        if hi < 0.0 || lo > 1.0 {
            return None;
        }
        let sp = lo.max(0.0);
        let point = p0 + r * sp;
        let u = if s.norm_squared() > 0.0 { (point - q0).dot(&s) / s.norm_squared() } else { 0.0 };
        return Some((sp, u.clamp(0.0, 1.0)));
    }
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    let eps = 1e-12;
    if (-eps..=1.0 + eps).contains(&t) && (-eps..=1.0 + eps).contains(&u) {
        Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
    } else {
        None
    }
}

pub fn segment_segment_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    if segment_intersection(a0, a1, b0, b1).is_some() {
        return 0.0;
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

/// A disc or a simple polygon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Disc { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Shape {
    pub fn disc(center: [f64; 2], radius: f64) -> Shape {
        Shape::Disc { center, radius }
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Shape {
        Shape::Polygon { vertices }
    }

    /// Axis-aligned square `[cx-a/2, cx+a/2] x [cy-a/2, cy+a/2]`.
    pub fn square(center: [f64; 2], side: f64) -> Shape {
        let (cx, cy, h) = (center[0], center[1], side / 2.0);
        Shape::Polygon {
            vertices: vec![[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]],
        }
    }

    /// Checks well-formedness and returns the shape with polygons oriented
    /// counter-clockwise.
    pub fn validated(&self) -> Result<Shape> {
        match self {
            Shape::Disc { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidShape(format!("disc radius must be positive, got {radius}")));
                }
                Ok(self.clone())
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(Error::InvalidShape("polygon needs at least 3 vertices".into()));
                }
                if !vertices.iter().flatten().all(|c| c.is_finite()) {
                    return Err(Error::InvalidShape("non-finite polygon vertex".into()));
                }
                let pts: Vec<Point> = vertices.iter().map(|&v| pt(v)).collect();
                for i in 0..n {
                    if (pts[(i + 1) % n] - pts[i]).norm() <= GEOM_TOL {
                        return Err(Error::InvalidShape("repeated polygon vertex".into()));
                    }
                }
                for i in 0..n {
                    for j in i + 1..n {
                        let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                        let (a0, a1) = (pts[i], pts[(i + 1) % n]);
                        let (b0, b1) = (pts[j], pts[(j + 1) % n]);
                        if adjacent {
                            // Adjacent edges may only share their common vertex.
                            let (shared, other_a, other_b) =
                                if j == i + 1 { (a1, a0, b1) } else { (a0, a1, b0) };
                            let da = other_a - shared;
                            let db = other_b - shared;
                            if cross(da, db).abs() <= 1e-14 * da.norm() * db.norm() && da.dot(&db) > 0.0 {
                                return Err(Error::InvalidShape("polygon folds back on itself".into()));
                            }
                        } else if segment_intersection(a0, a1, b0, b1).is_some() {
                            return Err(Error::InvalidShape("polygon is not simple".into()));
                        }
                    }
                }
                let area2: f64 = (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum();
                if area2.abs() <= GEOM_TOL {
                    return Err(Error::InvalidShape("polygon has zero area".into()));
                }
                let mut v = vertices.clone();
                if area2 < 0.0 {
                    v.reverse();
                }
                Ok(Shape::Polygon { vertices: v })
            }
        }
    }

    fn polygon_points(&self) -> Vec<Point> {
        match self {
            Shape::Polygon { vertices } => vertices.iter().map(|&v| pt(v)).collect(),
            Shape::Disc { .. } => Vec::new(),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                0.5 * (0..n).map(|i| cross(p[i], p[(i + 1) % n])).sum::<f64>().abs()
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Shape::Disc { radius, .. } => 2.0 * std::f64::consts::PI * radius,
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                (0..n).map(|i| (p[(i + 1) % n] - p[i]).norm()).sum()
            }
        }
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point {
        match self {
            Shape::Disc { center, .. } => pt(*center),
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                let mut a = 0.0;
                let mut c = Point::zeros();
                for i in 0..n {
                    let w = cross(p[i], p[(i + 1) % n]);
                    a += w;
                    c += (p[i] + p[(i + 1) % n]) * w;
                }
                c / (3.0 * a)
            }
        }
    }

    /// Largest distance from `center` to a point of the shape.
    pub fn radius_about(&self, center: Point) -> f64 {
        match self {
            Shape::Disc { center: c, radius } => (pt(*c) - center).norm() + radius,
            Shape::Polygon { .. } => {
                self.polygon_points().iter().map(|v| (v - center).norm()).fold(0.0, f64::max)
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bbox(&self) -> (Point, Point) {
        match self {
            Shape::Disc { center, radius } => {
                let c = pt(*center);
                (c - Point::new(*radius, *radius), c + Point::new(*radius, *radius))
            }
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let mut lo = p[0];
                let mut hi = p[0];
                for v in &p {
                    lo = lo.inf(v);
                    hi = hi.sup(v);
                }
                (lo, hi)
            }
        }
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

    /// Distance from `q` to the boundary curve.
    pub fn boundary_distance(&self, q: Point) -> f64 {
        match self {
            Shape::Disc { center, radius } => ((q - pt(*center)).norm() - radius).abs(),
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                (0..n).map(|i| point_segment_distance(q, p[i], p[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Signed distance: negative inside, positive outside.
    pub fn signed_distance(&self, q: Point) -> f64 {
        match self {
            Shape::Disc { center, radius } => (q - pt(*center)).norm() - radius,
            Shape::Polygon { .. } => {
                let d = self.boundary_distance(q);
                if Self::polygon_contains(&self.polygon_points(), q) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Membership in the open shape.
    pub fn contains(&self, q: Point) -> bool {
        self.signed_distance(q) < 0.0
    }

    /// Membership in the closure, with tolerance `tol`.
    pub fn contains_closed(&self, q: Point, tol: f64) -> bool {
        self.signed_distance(q) <= tol
    }

    /// Counter-clockwise boundary loop with spacing at most `h`
    /// (at least `min_points` points).
    pub fn boundary_loop(&self, h: f64, min_points: usize) -> Vec<Point> {
        match self {
            Shape::Disc { center, radius } => {
                let n = ((2.0 * std::f64::consts::PI * radius / h).ceil() as usize).max(min_points).max(3);
                let c = pt(*center);
                (0..n)
                    .map(|i| {
                        let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                        c + Point::new(radius * th.cos(), radius * th.sin())
                    })
                    .collect()
            }
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                let per = self.perimeter();
                let hh = h.min(per / min_points.max(3) as f64);
                let mut out = Vec::new();
                for i in 0..n {
                    let (a, b) = (p[i], p[(i + 1) % n]);
                    let m = ((b - a).norm() / hh).ceil().max(1.0) as usize;
                    for s in 0..m {
                        out.push(a + (b - a) * (s as f64 / m as f64));
                    }
                }
                out
            }
        }
    }

    /// Projection of `q` onto the boundary curve.
    pub fn nearest_boundary_point(&self, q: Point) -> Point {
        match self {
            Shape::Disc { center, radius } => {
                let c = pt(*center);
                let d = q - c;
                let n = d.norm();
                if n == 0.0 {
                    c + Point::new(*radius, 0.0)
                } else {
                    c + d * (radius / n)
                }
            }
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                let mut best = (f64::INFINITY, p[0]);
                for i in 0..n {
                    let (a, b) = (p[i], p[(i + 1) % n]);
                    let s = segment_closest_param(q, a, b);
                    let c = a + (b - a) * s;
                    let d = (q - c).norm();
                    if d < best.0 {
                        best = (d, c);
                    }
                }
                best.1
            }
        }
    }

    /// Smallest `s` in [0,1] with `a + s(b-a)` in the closed shape.
    pub fn segment_entry(&self, a: Point, b: Point) -> Option<f64> {
        if self.contains_closed(a, 0.0) {
            return Some(0.0);
        }
        match self {
            Shape::Disc { center, radius } => {
                let c = pt(*center);
                let d = b - a;
                let f = a - c;
                let qa = d.norm_squared();
                let qb = 2.0 * f.dot(&d);
                let qc = f.norm_squared() - radius * radius;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 || qa == 0.0 {
                    return None;
                }
                // `a` is outside, so both roots share a sign; the smaller one is the entry.
                let s = (-qb - disc.sqrt()) / (2.0 * qa);
                if (0.0..=1.0).contains(&s) {
                    Some(s)
                } else {
                    None
                }
            }
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                let mut best: Option<f64> = None;
                for i in 0..n {
                    if let Some((s, _)) = segment_intersection(a, b, p[i], p[(i + 1) % n]) {
                        best = Some(best.map_or(s, |v: f64| v.min(s)));
                    }
                }
                best
            }
        }
    }

    /// Distance between the segment `a`-`b` and the closed shape (0 if they meet).
    pub fn segment_distance(&self, a: Point, b: Point) -> f64 {
        match self {
            Shape::Disc { center, radius } => (point_segment_distance(pt(*center), a, b) - radius).max(0.0),
            Shape::Polygon { .. } => {
                if self.segment_entry(a, b).is_some() {
                    return 0.0;
                }
                let p = self.polygon_points();
                let n = p.len();
                (0..n).map(|i| segment_segment_distance(a, b, p[i], p[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// True if the segment passes through the open interior (beyond `tol`).
    pub fn segment_enters_interior(&self, a: Point, b: Point, tol: f64) -> bool {
        match self {
            Shape::Disc { center, radius } => point_segment_distance(pt(*center), a, b) < radius - tol,
            Shape::Polygon { .. } => {
                let p = self.polygon_points();
                let n = p.len();
                let mut cuts = vec![0.0, 1.0];
                for i in 0..n {
                    let (q0, q1) = (p[i], p[(i + 1) % n]);
                    if let Some((s, _)) = segment_intersection(a, b, q0, q1) {
                        cuts.push(s);
                    }
                    if let Some((s, _)) = segment_intersection(b, a, q0, q1) {
                        cuts.push(1.0 - s);
                    }
                    // Vertices touching the segment split it too.
                    let s = segment_closest_param(q0, a, b);
                    if point_segment_distance(q0, a, b) <= tol {
                        cuts.push(s);
                    }
                }
                cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let mut probes: Vec<f64> = cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
                probes.extend_from_slice(&[0.0, 1.0]);
                probes.iter().any(|&s| self.signed_distance(a + (b - a) * s) < -tol)
            }
        }
    }

    /// True if the closure of `self` lies in the open interior of `outer`.
    pub fn closure_inside(&self, outer: &Shape) -> bool {
        match (self, outer) {
            (Shape::Disc { center, radius }, Shape::Disc { center: c2, radius: r2 }) => {
                (pt(*center) - pt(*c2)).norm() + radius < *r2
            }
            (Shape::Polygon { .. }, Shape::Disc { .. }) => {
                self.polygon_points().iter().all(|&v| outer.signed_distance(v) < 0.0)
            }
            (Shape::Disc { center, radius }, Shape::Polygon { .. }) => {
                outer.signed_distance(pt(*center)) < -radius
            }
            (Shape::Polygon { .. }, Shape::Polygon { .. }) => {
                let a = self.polygon_points();
                let b = outer.polygon_points();
                if !a.iter().all(|&v| outer.signed_distance(v) < 0.0) {
                    return false;
                }
                let (na, nb) = (a.len(), b.len());
                for i in 0..na {
                    for j in 0..nb {
                        if segment_intersection(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb]).is_some() {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }

    /// True if the closures of the two shapes are disjoint.
    pub fn closures_disjoint(&self, other: &Shape) -> bool {
        match (self, other) {
            (Shape::Disc { center, radius }, Shape::Disc { center: c2, radius: r2 }) => {
                (pt(*center) - pt(*c2)).norm() > radius + r2
            }
            (Shape::Disc { center, radius }, Shape::Polygon { .. }) => {
                other.signed_distance(pt(*center)) > *radius
            }
            (Shape::Polygon { .. }, Shape::Disc { .. }) => other.closures_disjoint(self),
            (Shape::Polygon { .. }, Shape::Polygon { .. }) => {
                let a = self.polygon_points();
                let b = other.polygon_points();
                let (na, nb) = (a.len(), b.len());
                for i in 0..na {
                    for j in 0..nb {
                        if segment_intersection(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb]).is_some() {
                            return false;
                        }
                    }
                }
                !a.iter().any(|&v| other.contains_closed(v, 0.0)) && !b.iter().any(|&v| self.contains_closed(v, 0.0))
            }
        }
    }

    /// The shape scaled by `s` about `origin`.
    pub fn scaled(&self, s: f64, origin: Point) -> Shape {
        match self {
            Shape::Disc { center, radius } => {
                let c = origin + (pt(*center) - origin) * s;
                Shape::Disc { center: [c.x, c.y], radius: radius * s }
            }
            Shape::Polygon { vertices } => Shape::Polygon {
                vertices: vertices
                    .iter()
                    .map(|&v| {
                        let c = origin + (pt(v) - origin) * s;
                        [c.x, c.y]
                    })
                    .collect(),
            },
        }
    }
}

/// Obstacle condition on the boundary of `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryCondition {
    /// `du/dnu = 0` on the obstacle boundary.
    SoundHardNeumann,
    /// Conductivity `1 + h_j` on obstacle `j`.
    Conductivity { h: Vec<f64> },
}

/// Scene description as read from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDesc {
    pub outer: Shape,
    #[serde(default)]
    pub obstacles: Vec<Shape>,
    #[serde(default)]
    pub k: f64,
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
}

fn default_bc() -> BoundaryCondition {
    BoundaryCondition::SoundHardNeumann
}

/// Validated geometry, wavenumber and obstacle condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scene {
    pub outer: Shape,
    pub obstacles: Vec<Shape>,
    pub k: f64,
    pub bc: BoundaryCondition,
}

/// Validates a scene description.
pub fn make_scene(desc: &SceneDesc) -> Result<Scene> {
    let outer = desc.outer.validated()?;
    let obstacles = desc.obstacles.iter().map(|s| s.validated()).collect::<Result<Vec<_>>>()?;
    if !(desc.k.is_finite() && desc.k >= 0.0) {
        return Err(Error::InvalidInput(format!("wavenumber must be finite and nonnegative, got {}", desc.k)));
    }
    for (j, o) in obstacles.iter().enumerate() {
        if !o.closure_inside(&outer) {
            return Err(Error::ObstacleNotInterior(j));
        }
    }
    for j in 0..obstacles.len() {
        for l in j + 1..obstacles.len() {
            if !obstacles[j].closures_disjoint(&obstacles[l]) {
                return Err(Error::ObstaclesOverlap(j, l));
            }
        }
    }
    if let BoundaryCondition::Conductivity { h } = &desc.bc {
        check_jumps(h, obstacles.len())?;
    }
    Ok(Scene { outer, obstacles, k: desc.k, bc: desc.bc.clone() })
}

pub(crate) fn check_jumps(h: &[f64], n_obstacles: usize) -> Result<()> {
    if h.len() != n_obstacles {
        return Err(Error::InvalidInput(format!("{} jump values for {} obstacles", h.len(), n_obstacles)));
    }
    if let Some(j) = h.iter().position(|&v| !v.is_finite() || 1.0 + v <= 0.0) {
        return Err(Error::NonpositiveConductivity(format!("1 + h_{j} = {} <= 0", 1.0 + h[j])));
    }
    let pos = h.iter().any(|&v| v > 0.0);
    let neg = h.iter().any(|&v| v < 0.0);
    let zero = h.iter().any(|&v| v == 0.0);
    if (pos && neg) || (zero && (pos || neg)) {
        return Err(Error::InvalidInput("jump values must all share one strict sign (or all vanish)".into()));
    }
    Ok(())
}

impl Scene {
    pub fn new(outer: Shape, obstacles: Vec<Shape>, k: f64) -> Result<Scene> {
        make_scene(&SceneDesc { outer, obstacles, k, bc: BoundaryCondition::SoundHardNeumann })
    }

    /// Same geometry with another wavenumber.
    pub fn with_k(&self, k: f64) -> Result<Scene> {
        let mut s = self.clone();
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::InvalidInput(format!("wavenumber must be nonnegative, got {k}")));
        }
        s.k = k;
        Ok(s)
    }

    /// Same outer domain without obstacles.
    pub fn background(&self) -> Scene {
        Scene { outer: self.outer.clone(), obstacles: Vec::new(), k: self.k, bc: BoundaryCondition::SoundHardNeumann }
    }

    /// Index of the obstacle whose closure contains `p`.
    pub fn obstacle_at(&self, p: Point, tol: f64) -> Option<usize> {
        self.obstacles.iter().position(|o| o.contains_closed(p, tol))
    }

    /// Reference center used for trace bases and needle bases.
    pub fn center(&self) -> Point {
        match &self.outer {
            Shape::Disc { center, .. } => pt(*center),
            s => s.centroid(),
        }
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer.radius_about(self.center())
    }
}

/// Injective polyline from the outer boundary to an interior tip.
#[derive(Clone, Debug, PartialEq)]
pub struct Needle {
    vertices: Vec<Point>,
    cumlen: Vec<f64>,
}

impl Needle {
    /// Validates the polyline against the outer domain.
    pub fn new(vertices: Vec<Point>, outer: &Shape) -> Result<Needle> {
        if vertices.len() < 2 {
            return Err(Error::InvalidNeedle("needle needs at least two vertices".into()));
        }
        let mut cumlen = vec![0.0];
        for w in vertices.windows(2) {
            let l = (w[1] - w[0]).norm();
            if l <= GEOM_TOL {
                return Err(Error::InvalidNeedle("zero-length segment".into()));
            }
            cumlen.push(cumlen.last().unwrap() + l);
        }
        if outer.signed_distance(vertices[0]).abs() > ON_BOUNDARY_TOL {
            return Err(Error::InvalidNeedle("first vertex must lie on the outer boundary".into()));
        }
        let tip = *vertices.last().unwrap();
        if outer.signed_distance(tip) >= -GEOM_TOL {
            return Err(Error::InvalidNeedle("tip must lie in the open domain".into()));
        }
        for v in &vertices[1..] {
            if outer.signed_distance(*v) >= -GEOM_TOL {
                return Err(Error::InvalidNeedle("interior vertices must lie in the open domain".into()));
            }
        }
        if let Shape::Polygon { vertices: pv } = outer {
            let p: Vec<Point> = pv.iter().map(|&v| pt(v)).collect();
            let n = p.len();
            for (si, w) in vertices.windows(2).enumerate() {
                for i in 0..n {
                    if let Some((s, _)) = segment_intersection(w[0], w[1], p[i], p[(i + 1) % n]) {
                        let at_start = si == 0 && s <= 1e-9;
                        if !at_start {
                            return Err(Error::InvalidNeedle("needle leaves the domain".into()));
                        }
                    }
                }
            }
        }
        // First segment must enter the domain.
        if outer.signed_distance(vertices[0] + (vertices[1] - vertices[0]) * 1e-6) >= 0.0 {
            return Err(Error::InvalidNeedle("needle does not enter the domain".into()));
        }
        let m = vertices.len() - 1;
        for i in 0..m {
            for j in i + 1..m {
                let (a0, a1) = (vertices[i], vertices[i + 1]);
                let (b0, b1) = (vertices[j], vertices[j + 1]);
                if j == i + 1 {
                    let da = a0 - a1;
                    let db = b1 - b0;
                    if cross(da, db).abs() <= 1e-12 * da.norm() * db.norm() && da.dot(&db) > 0.0 {
                        return Err(Error::InvalidNeedle("needle folds back on itself".into()));
                    }
                } else if segment_intersection(a0, a1, b0, b1).is_some() {
                    return Err(Error::InvalidNeedle("needle self-intersects".into()));
                }
            }
        }
        Ok(Needle { vertices, cumlen })
    }

    /// Segment from `start` (on the outer boundary) to `tip`.
    pub fn straight(start: Point, tip: Point, outer: &Shape) -> Result<Needle> {
        Needle::new(vec![start, tip], outer)
    }

    /// Segment from the boundary point nearest to `tip`.
    pub fn nearest_straight(tip: Point, outer: &Shape) -> Result<Needle> {
        Needle::new(vec![outer.nearest_boundary_point(tip), tip], outer)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn start(&self) -> Point {
        self.vertices[0]
    }

    pub fn tip(&self) -> Point {
        *self.vertices.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        *self.cumlen.last().unwrap()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    /// Arclength-proportional parametrisation `sigma(t)`, `t` in [0,1].
    pub fn point_at(&self, t: f64) -> Point {
        let s = t.clamp(0.0, 1.0) * self.length();
        for (i, w) in self.vertices.windows(2).enumerate() {
            let (l0, l1) = (self.cumlen[i], self.cumlen[i + 1]);
            if s <= l1 || i + 2 == self.vertices.len() {
                let u = ((s - l0) / (l1 - l0)).clamp(0.0, 1.0);
                return w[0] + (w[1] - w[0]) * u;
            }
        }
        self.tip()
    }

    /// Parameter of the arclength position `s`.
    pub fn param_of_length(&self, s: f64) -> f64 {
        s / self.length()
    }

    /// Initial piece `c_t` of the needle, ending at `c(t)`.
    pub fn truncate(&self, t: f64, outer: &Shape) -> Result<Needle> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidNeedle(format!("truncation parameter {t} outside ]0,1]")));
        }
        let s = t * self.length();
        let mut v = vec![self.vertices[0]];
        for i in 1..self.vertices.len() {
            if self.cumlen[i] < s - 1e-14 {
                v.push(self.vertices[i]);
            } else {
                break;
            }
        }
        v.push(self.point_at(t));
        Needle::new(v, outer)
    }

    /// Distance from `y` to the polyline.
    pub fn distance(&self, y: Point) -> f64 {
        self.segments().map(|(a, b)| point_segment_distance(y, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// Mirror image across the line through the origin with direction `axis`.
    pub fn reflected_across(&self, axis: Point, outer: &Shape) -> Result<Needle> {
        let a = axis.normalize();
        let v = self.vertices.iter().map(|p| a * (2.0 * p.dot(&a)) - p).collect();
        Needle::new(v, outer)
    }
}

/// Impact parameter: the first parameter at which the needle meets the
/// obstacle closure, or 1 if it never does before the tip.
pub fn impact_parameter(needle: &Needle, scene: &Scene) -> f64 {
    let total = needle.length();
    let mut acc = 0.0;
    for (a, b) in needle.segments() {
        let len = (b - a).norm();
        let hit = scene.obstacles.iter().filter_map(|o| o.segment_entry(a, b)).fold(None, |m: Option<f64>, s| {
            Some(m.map_or(s, |v| v.min(s)))
        });
        if let Some(s) = hit {
            return ((acc + s * len) / total).min(1.0);
        }
        acc += len;
    }
    1.0
}

/// Position of the tip and needle relative to the obstacles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipCase {
    /// Tip outside the closure, needle avoiding the closure.
    AOutsideAvoiding,
    /// Tip outside the closure, needle passing through the interior.
    BOutsideCrossing,
    /// Tip in the closure.
    CInClosure,
    /// Needle touches the boundary without entering.
    Exceptional,
}

pub fn classify_tip(needle: &Needle, scene: &Scene) -> TipCase {
    let x = needle.tip();
    if scene.obstacles.iter().any(|o| o.contains_closed(x, GEOM_TOL)) {
        return TipCase::CInClosure;
    }
    let enters = needle.segments().any(|(a, b)| scene.obstacles.iter().any(|o| o.segment_enters_interior(a, b, GEOM_TOL)));
    if enters {
        return TipCase::BOutsideCrossing;
    }
    let touches = needle.segments().any(|(a, b)| scene.obstacles.iter().any(|o| o.segment_distance(a, b) <= GEOM_TOL));
    if touches {
        TipCase::Exceptional
    } else {
        TipCase::AOutsideAvoiding
    }
}

/// Open tube of radius `delta` around the needle.
#[derive(Clone, Debug)]
pub struct Tube<'a> {
    pub needle: &'a Needle,
    pub delta: f64,
}

pub fn needle_tube(needle: &Needle, delta: f64) -> Tube<'_> {
    Tube { needle, delta }
}

impl Tube<'_> {
    pub fn contains(&self, y: Point) -> bool {
        self.needle.distance(y) < self.delta
    }
}

/// Finite cone `{y : |y-x| < rho, (y-x).b > |y-x| cos(theta/2)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteCone {
    pub vertex: Point,
    pub axis: Point,
    pub aperture: f64,
    pub height: f64,
}

impl FiniteCone {
    pub fn new(vertex: Point, axis: Point, aperture: f64, height: f64) -> Result<FiniteCone> {
        if !(aperture > 0.0 && aperture < std::f64::consts::PI) {
            return Err(Error::InvalidInput(format!("cone aperture {aperture} outside ]0,pi[")));
        }
        if !(height > 0.0) || axis.norm() == 0.0 {
            return Err(Error::InvalidInput("cone needs positive height and nonzero axis".into()));
        }
        Ok(FiniteCone { vertex, axis: axis.normalize(), aperture, height })
    }

    pub fn contains(&self, y: Point) -> bool {
        let d = y - self.vertex;
        let r = d.norm();
        r < self.height && d.dot(&self.axis) > r * (self.aperture / 2.0).cos()
    }
}

pub fn cone_contains(cone: &FiniteCone, y: Point) -> bool {
    cone.contains(y)
}
