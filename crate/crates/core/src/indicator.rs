//! Indicator sequences, the along-the-needle profile and grid reconstruction.

use crate::blowup::{classify_growth, Growth, GrowthFit, Thresholds};
use crate::dtn::DtnMatrix;
use crate::error::{Error, Result};
use crate::geometry::{classify_tip, point_segment_distance, Needle, Point, Scene, Shape, TipCase};
use crate::needle::{FitContext, NeedleSequence};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Boundary pairing used to form `I_n` from the difference of two maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// `∫ {(Λ0-ΛD) f̄} f`.
    Sesquilinear,
    /// `∫ {(Λγ-Λ1) f} f`.
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceClass {
    Convergent,
    Divergent,
    /// Tangential needle contact, outside the scope of the dichotomy.
    Unclassified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    InsideOrBoundary,
    Outside,
}

/// `I_n` for one probe point and needle.
#[derive(Clone, Debug, Serialize)]
pub struct IndicatorTrace {
    pub tip: [f64; 2],
    pub needle: Vec<[f64; 2]>,
    pub values: Vec<(usize, Complex64)>,
    pub class: TraceClass,
    pub growth: GrowthFit,
    /// Last value when convergent.
    pub limit: Option<Complex64>,
    /// `max_n |Im I_n| / (1 + |I_n|)`.
    pub imag_defect: f64,
    /// `min_n Re I_n`.
    pub min_real: f64,
}

impl IndicatorTrace {
    pub fn abs_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.1.norm()).collect()
    }

    pub fn last(&self) -> Complex64 {
        self.values.last().map(|v| v.1).unwrap_or_default()
    }

    pub fn sup_abs(&self) -> f64 {
        self.abs_values().into_iter().fold(0.0, f64::max)
    }

    /// Marks the trace unclassified when the needle only touches an obstacle.
    pub fn with_case(mut self, case: TipCase) -> IndicatorTrace {
        if case == TipCase::Exceptional {
            self.class = TraceClass::Unclassified;
            self.limit = None;
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,re,im,abs\n");
        for (n, v) in &self.values {
            s += &format!("{n},{:e},{:e},{:e}\n", v.re, v.im, v.norm());
        }
        s
    }
}

/// `I_n` for every fitted index of `seq` against a difference form.
pub fn indicator_values(seq: &NeedleSequence, diff: &DtnMatrix, pairing: Pairing) -> Result<Vec<(usize, Complex64)>> {
    seq.terms
        .iter()
        .map(|t| {
            let f = seq.trace(t.n, &diff.basis)?;
            let v = match pairing {
                Pairing::Sesquilinear => diff.sesquilinear(&f),
                Pairing::Bilinear => diff.pairing(&f, &f),
            };
            Ok((t.n, v))
        })
        .collect()
}

/// Classifies a finished list of `I_n` values on `|I_n|`.
pub fn trace_from_values(seq: &NeedleSequence, values: Vec<(usize, Complex64)>, th: &Thresholds) -> Result<IndicatorTrace> {
    let abs: Vec<f64> = values.iter().map(|v| v.1.norm()).collect();
    let growth = classify_growth(&abs, th)?;
    let class = match growth.class {
        Growth::Divergent => TraceClass::Divergent,
        Growth::Bounded => TraceClass::Convergent,
    };
    let imag_defect = values.iter().map(|v| v.1.im.abs() / (1.0 + v.1.norm())).fold(0.0, f64::max);
    let min_real = values.iter().map(|v| v.1.re).fold(f64::INFINITY, f64::min);
    let limit = (class == TraceClass::Convergent).then(|| values.last().unwrap().1);
    let x = seq.tip();
    Ok(IndicatorTrace {
        tip: [x.x, x.y],
        needle: seq.needle.vertices().iter().map(|p| [p.x, p.y]).collect(),
        values,
        class,
        growth,
        limit,
        imag_defect,
        min_real,
    })
}

/// Indicator sequence `I_n = ∫ {(Λ0-ΛD) f̄_n} f_n` with `f_n` the trace of `v_n`.
pub fn indicator_sequence(seq: &NeedleSequence, lam0: &DtnMatrix, lamd: &DtnMatrix, th: &Thresholds) -> Result<IndicatorTrace> {
    let diff = lam0.difference(lamd)?;
    trace_from_values(seq, indicator_values(seq, &diff, Pairing::Sesquilinear)?, th)
}

/// Outside iff the trace converges.
pub fn classify_point(trace: &IndicatorTrace) -> PointClass {
    if trace.class == TraceClass::Convergent {
        PointClass::Outside
    } else {
        PointClass::InsideOrBoundary
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    pub t: f64,
    pub tip: [f64; 2],
    pub case: TipCase,
    pub class: TraceClass,
    pub last_abs: f64,
    pub sup_abs: f64,
}

/// Indicator along the truncations `c_t` of one needle.
#[derive(Clone, Debug, Serialize)]
pub struct Profile {
    pub rows: Vec<ProfileRow>,
    /// First grid parameter whose trace diverges, 1 if none.
    pub t_hat: f64,
    pub traces: Vec<IndicatorTrace>,
}

impl Profile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,case,class,last_abs,sup_abs\n");
        for r in &self.rows {
            s += &format!(
                "{},{},{},{},{},{:e},{:e}\n",
                r.t,
                r.tip[0],
                r.tip[1],
                tag(&r.case),
                tag(&r.class),
                r.last_abs,
                r.sup_abs
            );
        }
        s
    }
}

fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_owned)).unwrap_or_default()
}

/// Runs the indicator at every tip `c(t)`, `t` in `t_grid`, along the truncated
/// needles. `scene` labels tangential contacts; it does not enter the data.
pub fn indicator_profile(
    needle: &Needle,
    scene: &Scene,
    ctx: &FitContext,
    lam0: &DtnMatrix,
    lamd: &DtnMatrix,
    t_grid: &[f64],
    th: &Thresholds,
) -> Result<Profile> {
    if t_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::InvalidInput("profile parameters must lie in ]0,1[".into()));
    }
    let mut ts = t_grid.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let needles: Vec<Needle> = ts.iter().map(|&t| needle.truncate(t, &scene.outer)).collect::<Result<_>>()?;
    let seqs = ctx.fit_many(&needles)?;
    let diff = lam0.difference(lamd)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut t_hat = 1.0;
    for ((&t, nd), seq) in ts.iter().zip(&needles).zip(&seqs) {
        let case = classify_tip(nd, scene);
        let tr = trace_from_values(seq, indicator_values(seq, &diff, Pairing::Sesquilinear)?, th)?.with_case(case);
        if tr.class == TraceClass::Divergent && t_hat == 1.0 {
            t_hat = t;
        }
        rows.push(ProfileRow { t, tip: tr.tip, case, class: tr.class, last_abs: tr.last().norm(), sup_abs: tr.sup_abs() });
        traces.push(tr);
    }
    Ok(Profile { rows, t_hat, traces })
}

/// Probe lattice for reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub spacing: f64,
    /// Minimum distance of probe points from the outer boundary.
    pub margin: f64,
    /// Optional axis-aligned window `[lo, hi]` restricting the lattice.
    pub window: Option<([f64; 2], [f64; 2])>,
}

impl GridSpec {
    pub fn new(spacing: f64, margin: f64) -> GridSpec {
        GridSpec { spacing, margin, window: None }
    }
}

/// How a probe point's needle was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NeedleKind {
    Nearest,
    Straight,
    Polyline,
    /// No candidate avoided the flagged points; the nearest needle is used.
    Fallback,
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldPoint {
    pub index: [i64; 2],
    pub x: [f64; 2],
    pub class: PointClass,
    pub trace_class: TraceClass,
    pub last_abs: f64,
    pub last: Complex64,
    pub needle_kind: NeedleKind,
}

/// Per-point classification on a probe lattice.
#[derive(Clone, Debug, Serialize)]
pub struct IndicatorField {
    pub spacing: f64,
    pub points: Vec<FieldPoint>,
}

impl IndicatorField {
    /// Points classified inside or on the boundary of an obstacle.
    pub fn estimated_region(&self) -> Vec<Point> {
        self.points.iter().filter(|p| p.class == PointClass::InsideOrBoundary).map(|p| Point::new(p.x[0], p.x[1])).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,class,last_abs\n");
        for p in &self.points {
            s += &format!("{},{},{},{:e}\n", p.x[0], p.x[1], tag(&p.class), p.last_abs);
        }
        s
    }

    /// Number of 8-connected components of the estimated region.
    pub fn region_components(&self) -> usize {
        let inside: std::collections::BTreeSet<[i64; 2]> =
            self.points.iter().filter(|p| p.class == PointClass::InsideOrBoundary).map(|p| p.index).collect();
        let mut seen = std::collections::BTreeSet::new();
        let mut count = 0;
        for &start in &inside {
            if !seen.insert(start) {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            while let Some([i, j]) = stack.pop() {
                for di in -1..=1 {
                    for dj in -1..=1 {
                        let q = [i + di, j + dj];
                        if inside.contains(&q) && seen.insert(q) {
                            stack.push(q);
                        }
                    }
                }
            }
        }
        count
    }

    /// Hausdorff-type distance between the estimated region and the true
    /// obstacles: the larger of the farthest estimated point from the
    /// obstacle closures and the farthest lattice point inside an obstacle
    /// from the estimate. Zero when both sets are empty.
    pub fn hausdorff_to_truth(&self, obstacles: &[Shape]) -> f64 {
        let est = self.estimated_region();
        let dist_truth = |p: Point| obstacles.iter().map(|o| o.signed_distance(p).max(0.0)).fold(f64::INFINITY, f64::min);
        let truth: Vec<Point> = self
            .points
            .iter()
            .map(|p| Point::new(p.x[0], p.x[1]))
            .filter(|&p| obstacles.iter().any(|o| o.contains_closed(p, 1e-12)))
            .collect();
        if est.is_empty() && truth.is_empty() && obstacles.is_empty() {
            return 0.0;
        }
        let a = est.iter().map(|&p| dist_truth(p)).fold(0.0, f64::max);
        let b = truth
            .iter()
            .map(|&q| est.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        a.max(b)
    }
}

fn lattice(outer: &Shape, center: Point, spec: &GridSpec) -> Vec<([i64; 2], Point)> {
    let (lo, hi) = outer.bbox();
    let (lo, hi) = match spec.window {
        Some((a, b)) => (Point::new(lo.x.max(a[0]), lo.y.max(a[1])), Point::new(hi.x.min(b[0]), hi.y.min(b[1]))),
        None => (lo, hi),
    };
    let h = spec.spacing;
    let i0 = ((lo.x - center.x) / h).floor() as i64;
    let i1 = ((hi.x - center.x) / h).ceil() as i64;
    let j0 = ((lo.y - center.y) / h).floor() as i64;
    let j1 = ((hi.y - center.y) / h).ceil() as i64;
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = center + Point::new(i as f64 * h, j as f64 * h);
            let inside_window = p.x >= lo.x - 1e-12 && p.x <= hi.x + 1e-12 && p.y >= lo.y - 1e-12 && p.y <= hi.y + 1e-12;
            if inside_window && outer.signed_distance(p) <= -spec.margin {
                out.push(([i, j], p));
            }
        }
    }
    out
}

/// Boundary point hit by the ray from `x` in direction `dir`.
fn ray_exit(outer: &Shape, x: Point, dir: Point) -> Option<Point> {
    let (lo, hi) = outer.bbox();
    let far = x + dir * (4.0 * (hi - lo).norm());
    let s = outer.segment_entry(far, x)?;
    Some(far + (x - far) * s)
}

struct Chooser<'a> {
    outer: &'a Shape,
    clearance: f64,
    blocked: &'a [Point],
    outside: &'a [(Point, Needle)],
}

impl Chooser<'_> {
    fn clear(&self, nd: &Needle) -> bool {
        let tip = nd.tip();
        self.blocked.iter().all(|&q| {
            (q - tip).norm() < 1.5 * self.clearance
                || nd.segments().all(|(a, b)| point_segment_distance(q, a, b) >= self.clearance)
        })
    }

    fn choose(&self, x: Point) -> Result<(Needle, NeedleKind)> {
        let nearest = Needle::nearest_straight(x, self.outer)?;
        if self.clear(&nearest) {
            return Ok((nearest, NeedleKind::Nearest));
        }
        let mut best: Option<Needle> = None;
        for k in 0..64 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            let Some(b) = ray_exit(self.outer, x, Point::new(th.cos(), th.sin())) else { continue };
            let Ok(nd) = Needle::straight(b, x, self.outer) else { continue };
            if self.clear(&nd) && best.as_ref().is_none_or(|c| nd.length() < c.length()) {
                best = Some(nd);
            }
        }
        if let Some(nd) = best {
            return Ok((nd, NeedleKind::Straight));
        }
        let mut via: Vec<&(Point, Needle)> = self.outside.iter().collect();
        via.sort_by(|a, b| (a.0 - x).norm().partial_cmp(&(b.0 - x).norm()).unwrap());
        for (q, _) in via {
            let start = self.outer.nearest_boundary_point(*q);
            let Ok(nd) = Needle::new(vec![start, *q, x], self.outer) else { continue };
            if self.clear(&nd) {
                return Ok((nd, NeedleKind::Polyline));
            }
        }
        Ok((nearest, NeedleKind::Fallback))
    }
}

/// Options shared by the obstacle and conductivity reconstructions.
#[derive(Clone, Copy, Debug)]
pub struct ReconstructOptions {
    pub grid: GridSpec,
    pub thresholds: Thresholds,
    pub pairing: Pairing,
}

/// Classifies every lattice point, processing layers by distance to the
/// outer boundary so that needles can steer around points already flagged.
pub fn reconstruct(ctx: &FitContext, lam0: &DtnMatrix, lamd: &DtnMatrix, opts: &ReconstructOptions) -> Result<IndicatorField> {
    let outer = &ctx.scene.outer;
    let spec = &opts.grid;
    if !(spec.spacing > 0.0) || spec.margin < 0.0 {
        return Err(Error::InvalidInput("grid spacing must be positive and the margin nonnegative".into()));
    }
    let diff = lam0.difference(lamd)?;
    let pts = lattice(outer, ctx.scene.center(), spec);
    let mut layers: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
    for (i, (_, p)) in pts.iter().enumerate() {
        let d = -outer.signed_distance(*p);
        layers.entry((d / spec.spacing).floor() as i64).or_default().push(i);
    }
    let mut blocked: Vec<Point> = Vec::new();
    let mut outside: Vec<(Point, Needle)> = Vec::new();
    let mut result: Vec<Option<FieldPoint>> = vec![None; pts.len()];
    for idx in layers.values() {
        let chooser = Chooser { outer, clearance: spec.spacing, blocked: &blocked, outside: &outside };
        let chosen: Vec<(Needle, NeedleKind)> = idx.iter().map(|&i| chooser.choose(pts[i].1)).collect::<Result<_>>()?;
        let tips: Vec<Point> = idx.iter().map(|&i| pts[i].1).collect();
        let rhs = ctx.full_rhs_many(&tips)?;
        let traces: Vec<IndicatorTrace> = chosen
            .par_iter()
            .enumerate()
            .map(|(col, (nd, _))| {
                let seq = ctx.fit_with(nd, &rhs, col)?;
                trace_from_values(&seq, indicator_values(&seq, &diff, opts.pairing)?, &opts.thresholds)
            })
            .collect::<Result<_>>()?;
        for ((&i, (nd, kind)), tr) in idx.iter().zip(chosen).zip(traces) {
            let class = classify_point(&tr);
            let (index, p) = pts[i];
            match class {
                PointClass::InsideOrBoundary => blocked.push(p),
                PointClass::Outside => outside.push((p, nd)),
            }
            result[i] = Some(FieldPoint {
                index,
                x: [p.x, p.y],
                class,
                trace_class: tr.class,
                last_abs: tr.last().norm(),
                last: tr.last(),
                needle_kind: kind,
            });
        }
    }
    Ok(IndicatorField { spacing: spec.spacing, points: result.into_iter().map(Option::unwrap).collect() })
}
