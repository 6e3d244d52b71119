//! Needle sequences: entire Helmholtz solutions fitted to the fundamental
//! solution on the domain minus a shrinking tube around the needle.
//!
//! The basis is centred at the domain centre `c` and normalised on the
//! circle of radius `R` (the outer radius):
//! `b_m(y) = ((y-c)/R)^m T_m(k|y-c|) / T_m(kR)` for `m >= 0` and the complex
//! conjugate powers for `m < 0`, with `T_m` from [`crate::special::t_series`].
//! For `k = 0` these are the harmonic monomials `z^m`, `z̄^m`. On a disc the
//! boundary trace of `b_m` is `e^{imθ}`.

use crate::dtn::TraceBasis;
use crate::error::{Error, Result};
use crate::geometry::{GEOM_TOL, Needle, Point, Scene, Shape};
use crate::special::{fundamental_solution_unchecked, t_series};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Condition number above which a fit is reported as ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Points per block when streaming control sets through dense products.
const BLOCK: usize = 1024;

/// Entire solutions `b_m`, `m = -order..order`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntireBasis {
    pub k: f64,
    pub center: Point,
    pub radius: f64,
    pub order: usize,
    scale: Vec<f64>,
    /// `T_m(kR)` divided by the normalisation actually used.
    boundary: Vec<f64>,
}

impl EntireBasis {
    pub fn new(k: f64, center: Point, radius: f64, order: usize) -> EntireBasis {
        let mut scale = Vec::with_capacity(order + 3);
        let mut boundary = Vec::with_capacity(order + 3);
        for m in 0..order + 3 {
            let t = t_series(m, k * radius);
            // Near a zero of J_m(kR) the trace normalisation is dropped.
            let norm = if t.abs() >= 1e-3 { t } else { 1.0 };
            scale.push(1.0 / (radius.powi(m as i32) * norm));
            boundary.push(t / norm);
        }
        EntireBasis { k, center, radius, order, scale, boundary }
    }

    /// Basis for `scene` centred at its centre, normalised at its outer radius.
    pub fn for_scene(scene: &Scene, order: usize) -> EntireBasis {
        EntireBasis::new(scene.k, scene.center(), scene.outer_radius(), order)
    }

    pub fn dim(&self) -> usize {
        2 * self.order + 1
    }

    /// Unnormalised `T_m(x)` for `m = 0..=top` by downward recurrence
    /// `T_{m-1} = T_m - x²/(4m(m+1)) T_{m+1}`.
    fn t_values(&self, x: f64, top: usize) -> Vec<f64> {
        let mut t = vec![0.0; top + 2];
        if self.k == 0.0 {
            t.iter_mut().for_each(|v| *v = 1.0);
            return t;
        }
        t[top + 1] = t_series(top + 1, x);
        t[top] = t_series(top, x);
        let q = 0.25 * x * x;
        for m in (1..=top).rev() {
            t[m - 1] = t[m] - q / (m as f64 * (m + 1) as f64) * t[m + 1];
        }
        t
    }

    /// Values and `(∂x, ∂y)` gradients of `b_m`, `m = -order..order`,
    /// stored at index `m + order`.
    pub fn eval(&self, y: Point) -> (Vec<Complex64>, Vec<[Complex64; 2]>) {
        let n = self.order;
        let w = Complex64::new(y.x - self.center.x, y.y - self.center.y);
        let r = w.norm();
        let t = self.t_values(self.k * r, n + 1);
        // Positive-index unnormalised values B_m = w^m T_m, m = 0..=n+1.
        let mut pos = Vec::with_capacity(n + 2);
        let mut pw = Complex64::new(1.0, 0.0);
        for m in 0..=n + 1 {
            pos.push(pw * t[m] * self.scale[m]);
            pw *= w;
        }
        let k2 = self.k * self.k;
        let s = &self.scale;
        let mut vals = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
        let mut grads = vec![[Complex64::new(0.0, 0.0); 2]; 2 * n + 1];
        let put = |dp: Complex64, dm: Complex64| {
            // ∂x = (∂+ + ∂-)/2, ∂y = (∂+ - ∂-)/(2i)
            [(dp + dm) * 0.5, (dp - dm) * Complex64::new(0.0, -0.5)]
        };
        let up = |m: usize| -k2 / (2.0 * (m + 1) as f64) * s[m] / s[m + 1];
        let down = |m: usize| 2.0 * m as f64 * s[m] / s[m - 1];
        for m in 0..=n {
            let b = pos[m];
            let dp = pos[m + 1] * up(m);
            if m == 0 {
                let dm = pos[1].conj() * up(0);
                vals[n] = b;
                grads[n] = put(dp, dm);
            } else {
                let dm = pos[m - 1] * down(m);
                vals[n + m] = b;
                grads[n + m] = put(dp, dm);
                // Conjugate family: ∂+ and ∂- swap roles.
                vals[n - m] = b.conj();
                grads[n - m] = put(dm.conj(), dp.conj());
            }
        }
        (vals, grads)
    }

    /// Real basis `1, Re b_1, Im b_1, Re b_2, ...` with rows
    /// `[value, ∂x, ∂y]`, written into `out[3*dim]`.
    fn eval_real(&self, y: Point, out: &mut [f64]) {
        let n = self.order;
        let d = self.dim();
        let (v, g) = self.eval(y);
        out[0] = v[n].re;
        out[d] = g[n][0].re;
        out[2 * d] = g[n][1].re;
        for m in 1..=n {
            let (a, b) = (2 * m - 1, 2 * m);
            out[a] = v[n + m].re;
            out[b] = v[n + m].im;
            out[d + a] = g[n + m][0].re;
            out[d + b] = g[n + m][0].im;
            out[2 * d + a] = g[n + m][1].re;
            out[2 * d + b] = g[n + m][1].im;
        }
    }

    /// Complex mode coefficients from real-basis coefficients.
    fn complex_from_real(&self, a: &[Complex64]) -> Vec<Complex64> {
        let n = self.order;
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
        c[n] = a[0];
        let half_i = Complex64::new(0.0, 0.5);
        for m in 1..=n {
            let (re, im) = (a[2 * m - 1], a[2 * m]);
            c[n + m] = re * 0.5 - half_i * im;
            c[n - m] = re * 0.5 + half_i * im;
        }
        c
    }

    /// Value and gradient of `Σ c_m b_m` at `y`.
    pub fn combine(&self, c: &[Complex64], y: Point) -> (Complex64, [Complex64; 2]) {
        let (v, g) = self.eval(y);
        let mut val = Complex64::new(0.0, 0.0);
        let mut grad = [Complex64::new(0.0, 0.0); 2];
        for i in 0..c.len() {
            val += c[i] * v[i];
            grad[0] += c[i] * g[i][0];
            grad[1] += c[i] * g[i][1];
        }
        (val, grad)
    }

    /// Coefficient of `e^{imθ}` in the trace of `b_m` on the normalisation circle.
    pub fn boundary_factor(&self, m: usize) -> f64 {
        self.boundary[m]
    }
}

/// Tube radii, basis orders and regularisation per index `n = 1..=n_max`:
/// `δ_n = max(delta0 / n^delta_decay, delta_min)`, `N_n = order0 + order_step n`,
/// `α_n = alpha_rel trace(normal matrix) / dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub delta0: f64,
    pub delta_decay: f64,
    pub delta_min: f64,
    pub order0: usize,
    pub order_step: usize,
    pub alpha_rel: f64,
    pub n_max: usize,
}

impl Default for Schedule {
    fn default() -> Schedule {
        Schedule { delta0: 0.25, delta_decay: 1.0, delta_min: 0.02, order0: 4, order_step: 3, alpha_rel: 1e-8, n_max: 12 }
    }
}

impl Schedule {
    /// Fixed tube and order for every index.
    pub fn constant(delta: f64, order: usize, n_max: usize) -> Schedule {
        Schedule { delta0: delta, delta_decay: 0.0, delta_min: delta, order0: order, order_step: 0, n_max, ..Schedule::default() }
    }

    pub fn delta(&self, n: usize) -> f64 {
        (self.delta0 / (n as f64).powf(self.delta_decay)).max(self.delta_min)
    }

    pub fn order(&self, n: usize) -> usize {
        self.order0 + self.order_step * n
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.delta0 > 0.0
            && self.delta_min > 0.0
            && self.delta_decay >= 0.0
            && self.alpha_rel > 0.0
            && self.n_max >= 1
            && self.order(1) >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("schedule knobs must be positive".into()))
        }
    }
}

/// Weighted quadrature points of a control set.
#[derive(Clone, Debug)]
pub struct ControlSet {
    pub delta: f64,
    pub spacing: f64,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Lattice of spacing `s` anchored at the domain centre, restricted to the
/// domain, plus boundary points. Lattices with spacing ratios that are
/// integers nest.
#[derive(Clone, Debug)]
struct Grid {
    spacing: f64,
    points: Vec<Point>,
    weights: Vec<f64>,
    lattice: HashMap<(i64, i64), usize>,
    n_interior: usize,
    origin: Point,
}

impl Grid {
    fn new(outer: &Shape, origin: Point, spacing: f64) -> Grid {
        let (lo, hi) = outer.bbox();
        let (i0, i1) = (((lo.x - origin.x) / spacing).floor() as i64, ((hi.x - origin.x) / spacing).ceil() as i64);
        let (j0, j1) = (((lo.y - origin.y) / spacing).floor() as i64, ((hi.y - origin.y) / spacing).ceil() as i64);
        let mut points = Vec::new();
        let mut lattice = HashMap::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = origin + Point::new(i as f64 * spacing, j as f64 * spacing);
                if outer.contains(p) {
                    lattice.insert((i, j), points.len());
                    points.push(p);
                }
            }
        }
        let n_interior = points.len();
        let mut weights = vec![spacing * spacing; n_interior];
        let bl = outer.boundary_loop(spacing, 8);
        let m = bl.len();
        for (i, &p) in bl.iter().enumerate() {
            let arc = 0.5 * ((bl[(i + 1) % m] - p).norm() + (p - bl[(i + m - 1) % m]).norm());
            points.push(p);
            weights.push(arc * spacing / 2.0);
        }
        Grid { spacing, points, weights, lattice, n_interior, origin }
    }

    /// Indices of points within `delta` of the needle.
    fn tube(&self, needle: &Needle, delta: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let s = self.spacing;
        let mut seen = std::collections::HashSet::new();
        for (a, b) in needle.segments() {
            let lo = a.inf(&b) - Point::new(delta, delta) - self.origin;
            let hi = a.sup(&b) + Point::new(delta, delta) - self.origin;
            for j in (lo.y / s).floor() as i64..=(hi.y / s).ceil() as i64 {
                for i in (lo.x / s).floor() as i64..=(hi.x / s).ceil() as i64 {
                    if let Some(&q) = self.lattice.get(&(i, j)) {
                        if needle.distance(self.points[q]) < delta && seen.insert(q) {
                            out.push(q);
                        }
                    }
                }
            }
        }
        for q in self.n_interior..self.points.len() {
            if needle.distance(self.points[q]) < delta {
                out.push(q);
            }
        }
        out.sort_unstable();
        out
    }
}

/// Control set `K_n`: domain points at distance at least `δ_n` from the
/// needle, with lattice spacing `δ_n / 3` and boundary points.
pub fn control_set(scene: &Scene, needle: &Needle, n: usize, schedule: &Schedule) -> Result<ControlSet> {
    let delta = schedule.delta(n);
    control_set_for_delta(scene, needle, delta)
}

pub fn control_set_for_delta(scene: &Scene, needle: &Needle, delta: f64) -> Result<ControlSet> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("tube radius must be positive".into()));
    }
    let grid = Grid::new(&scene.outer, scene.center(), delta / 3.0);
    let tube = grid.tube(needle, delta);
    let mut drop = vec![false; grid.points.len()];
    for q in tube {
        drop[q] = true;
    }
    let (points, weights): (Vec<Point>, Vec<f64>) = grid
        .points
        .iter()
        .zip(&grid.weights)
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|((p, w), _)| (*p, *w))
        .unzip();
    if points.is_empty() {
        return Err(Error::EmptyControlSet(delta));
    }
    Ok(ControlSet { delta, spacing: grid.spacing, points, weights })
}

/// One fitted index of a needle sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTerm {
    pub n: usize,
    pub delta: f64,
    pub order: usize,
    pub alpha: f64,
    /// Condition estimate of the unregularised normal matrix.
    pub condition: f64,
    /// Mode coefficients `c_m`, `m = -order..order`, at index `m + order`.
    pub coeffs: Vec<Complex64>,
}

impl SequenceTerm {
    pub fn ill_conditioned(&self) -> bool {
        self.condition > ILL_CONDITIONED
    }
}

/// Fitted needle sequence `v_n`, `n = 1..=n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeedleSequence {
    pub needle: Needle,
    pub k: f64,
    pub center: Point,
    pub radius: f64,
    pub terms: Vec<SequenceTerm>,
}

impl NeedleSequence {
    pub fn tip(&self) -> Point {
        self.needle.tip()
    }

    pub fn n_max(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, n: usize) -> Result<&SequenceTerm> {
        self.terms
            .iter()
            .find(|t| t.n == n)
            .ok_or_else(|| Error::InvalidInput(format!("index {n} not in the sequence (n_max {})", self.n_max())))
    }

    pub fn basis(&self, n: usize) -> Result<EntireBasis> {
        Ok(EntireBasis::new(self.k, self.center, self.radius, self.term(n)?.order))
    }

    /// Warnings for ill-conditioned indices.
    pub fn warnings(&self) -> Vec<Error> {
        self.terms.iter().filter(|t| t.ill_conditioned()).map(|t| Error::IllConditionedFit(t.condition)).collect()
    }

    /// Trace coefficients of `v_n` on `basis`.
    pub fn trace(&self, n: usize, basis: &TraceBasis) -> Result<Vec<Complex64>> {
        let eb = self.basis(n)?;
        let c = &self.term(n)?.coeffs;
        match basis {
            TraceBasis::Trig { center, radius, n_modes }
                if (center[0] - self.center.x).abs() < 1e-12
                    && (center[1] - self.center.y).abs() < 1e-12
                    && (radius - self.radius).abs() < 1e-12 =>
            {
                let order = eb.order;
                if order > *n_modes {
                    return Err(Error::BasisMismatch(format!(
                        "sequence order {order} exceeds the {n_modes} trace modes of the DtN map"
                    )));
                }
                let mut out = vec![Complex64::new(0.0, 0.0); 2 * n_modes + 1];
                for m in -(order as i64)..=order as i64 {
                    out[(m + *n_modes as i64) as usize] =
                        c[(m + order as i64) as usize] * eb.boundary_factor(m.unsigned_abs() as usize);
                }
                Ok(out)
            }
            _ => Ok(basis.project(|y| eb.combine(c, y).0)),
        }
    }

    /// Coefficient table `n,mode,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,mode,re,im\n");
        for t in &self.terms {
            for (i, c) in t.coeffs.iter().enumerate() {
                s += &format!("{},{},{:e},{:e}\n", t.n, i as i64 - t.order as i64, c.re, c.im);
            }
        }
        s
    }

    /// Rebuilds a sequence from a coefficient table; the schedule supplies
    /// the per-index tube radii.
    pub fn from_csv(
        text: &str,
        needle: Needle,
        scene: &Scene,
        schedule: &Schedule,
    ) -> Result<NeedleSequence> {
        let perr = |m: String| Error::Parse(format!("coefficient table: {m}"));
        let mut rows: std::collections::BTreeMap<usize, Vec<(i64, Complex64)>> = Default::default();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(perr(format!("line {} has {} fields", ln + 1, f.len())));
            }
            let n: usize = f[0].trim().parse().map_err(|e| perr(format!("{e}")))?;
            let m: i64 = f[1].trim().parse().map_err(|e| perr(format!("{e}")))?;
            let re: f64 = f[2].trim().parse().map_err(|e| perr(format!("{e}")))?;
            let im: f64 = f[3].trim().parse().map_err(|e| perr(format!("{e}")))?;
            rows.entry(n).or_default().push((m, Complex64::new(re, im)));
        }
        let mut terms = Vec::new();
        for (n, mut entries) in rows {
            entries.sort_by_key(|e| e.0);
            let order = entries.last().map(|e| e.0).unwrap_or(0);
            if order < 0 || entries.len() != 2 * order as usize + 1 || entries[0].0 != -order {
                return Err(perr(format!("index {n} has an incomplete mode range")));
            }
            terms.push(SequenceTerm {
                n,
                delta: schedule.delta(n),
                order: order as usize,
                alpha: 0.0,
                condition: 0.0,
                coeffs: entries.into_iter().map(|e| e.1).collect(),
            });
        }
        Ok(NeedleSequence { needle, k: scene.k, center: scene.center(), radius: scene.outer_radius(), terms })
    }
}

/// Values and gradients of `v_n` at `points`.
pub fn evaluate(seq: &NeedleSequence, n: usize, points: &[Point]) -> Result<Vec<(Complex64, [Complex64; 2])>> {
    let eb = seq.basis(n)?;
    let c = &seq.term(n)?.coeffs;
    Ok(points.iter().map(|&y| eb.combine(c, y)).collect())
}

struct Level {
    n: usize,
    delta: f64,
    basis: EntireBasis,
    grid: Grid,
    gram: DMatrix<f64>,
    alpha: f64,
}

/// Control-set lattices and cached full Gram matrices for every index of a
/// schedule; fits for many tips reuse them.
pub struct FitContext {
    pub scene: Scene,
    pub schedule: Schedule,
    levels: Vec<Level>,
}

/// Adds `Φᵀ diag(w) Φ` over `idx` to `gram`.
fn accumulate_gram(basis: &EntireBasis, grid: &Grid, idx: &[usize], gram: &mut DMatrix<f64>, sign: f64) {
    let d = basis.dim();
    let mut buf = vec![0.0; 3 * d];
    for chunk in idx.chunks(BLOCK) {
        let mut phi = DMatrix::<f64>::zeros(3 * chunk.len(), d);
        for (r, &q) in chunk.iter().enumerate() {
            basis.eval_real(grid.points[q], &mut buf);
            let sw = grid.weights[q].sqrt();
            for a in 0..d {
                for c in 0..3 {
                    phi[(3 * r + c, a)] = sw * buf[c * d + a];
                }
            }
        }
        gram.gemm_tr(sign, &phi, &phi, 1.0);
    }
}

impl FitContext {
    pub fn new(scene: &Scene, schedule: &Schedule) -> Result<FitContext> {
        schedule.validate()?;
        let mut levels = Vec::with_capacity(schedule.n_max);
        for n in 1..=schedule.n_max {
            let delta = schedule.delta(n);
            let basis = EntireBasis::for_scene(scene, schedule.order(n));
            let grid = Grid::new(&scene.outer, scene.center(), delta / 3.0);
            let d = basis.dim();
            let mut gram = DMatrix::zeros(d, d);
            let all: Vec<usize> = (0..grid.points.len()).collect();
            accumulate_gram(&basis, &grid, &all, &mut gram, 1.0);
            let alpha = schedule.alpha_rel * gram.trace() / d as f64;
            levels.push(Level { n, delta, basis, grid, gram, alpha });
        }
        Ok(FitContext { scene: scene.clone(), schedule: schedule.clone(), levels })
    }

    /// Full-lattice right-hand sides `Σ w (φ G + ∇φ·∇G)` for each tip,
    /// skipping points within `δ_n` of the tip (they lie in every tube).
    /// Returned as (real part, imaginary part) with one column per tip.
    fn full_rhs(&self, level: &Level, tips: &[Point]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = level.basis.dim();
        let nt = tips.len();
        let mut rre = DMatrix::zeros(d, nt);
        let mut rim = DMatrix::zeros(d, nt);
        let mut buf = vec![0.0; 3 * d];
        let k = self.scene.k;
        let n_pts = level.grid.points.len();
        let mut start = 0;
        while start < n_pts {
            let end = (start + BLOCK).min(n_pts);
            let len = end - start;
            let mut phi = DMatrix::<f64>::zeros(3 * len, d);
            let mut gre = DMatrix::<f64>::zeros(3 * len, nt);
            let mut gim = DMatrix::<f64>::zeros(3 * len, nt);
            for r in 0..len {
                let q = start + r;
                let y = level.grid.points[q];
                let w = level.grid.weights[q];
                level.basis.eval_real(y, &mut buf);
                for a in 0..d {
                    for c in 0..3 {
                        phi[(3 * r + c, a)] = w * buf[c * d + a];
                    }
                }
                for (j, &x) in tips.iter().enumerate() {
                    let dv = y - x;
                    let dist = dv.norm();
                    if dist < level.delta {
                        continue;
                    }
                    let (g, gg) = fundamental_solution_unchecked(k, dv, dist);
                    for (c, z) in [g, gg[0], gg[1]].into_iter().enumerate() {
                        gre[(3 * r + c, j)] = z.re;
                        gim[(3 * r + c, j)] = z.im;
                    }
                }
            }
            rre.gemm_tr(1.0, &phi, &gre, 1.0);
            rim.gemm_tr(1.0, &phi, &gim, 1.0);
            start = end;
        }
        (rre, rim)
    }

    /// Solves one index given the full-lattice right-hand side for this tip.
    fn solve_level(&self, level: &Level, needle: &Needle, rre: &[f64], rim: &[f64]) -> Result<SequenceTerm> {
        let x = needle.tip();
        let d = level.basis.dim();
        let tube = level.grid.tube(needle, level.delta);
        if tube.len() >= level.grid.points.len() {
            return Err(Error::EmptyControlSet(level.delta));
        }
        let mut a = level.gram.clone();
        accumulate_gram(&level.basis, &level.grid, &tube, &mut a, -1.0);
        let mut b: Vec<Complex64> = (0..d).map(|i| Complex64::new(rre[i], rim[i])).collect();
        let mut buf = vec![0.0; 3 * d];
        for &q in &tube {
            let y = level.grid.points[q];
            let dv = y - x;
            let dist = dv.norm();
            if dist < level.delta {
                continue;
            }
            let w = level.grid.weights[q];
            level.basis.eval_real(y, &mut buf);
            let (g, gg) = fundamental_solution_unchecked(self.scene.k, dv, dist);
            for i in 0..d {
                b[i] -= w * (buf[i] * g + buf[d + i] * gg[0] + buf[2 * d + i] * gg[1]);
            }
        }
        let (sol, condition) = regularised_solve(a, &b, level.alpha);
        Ok(SequenceTerm {
            n: level.n,
            delta: level.delta,
            order: level.basis.order,
            alpha: level.alpha,
            condition,
            coeffs: level.basis.complex_from_real(&sol),
        })
    }

    /// Fits `G_k(·-x)` for a pole `x` outside the closed domain on the full
    /// lattices, one term per index.
    pub fn fit_pole(&self, x: Point) -> Result<Vec<SequenceTerm>> {
        if self.scene.outer.contains(x) || self.scene.outer.boundary_distance(x) < GEOM_TOL {
            return Err(Error::InvalidInput(format!("pole ({}, {}) is not outside the domain", x.x, x.y)));
        }
        let mut terms = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let (rre, rim) = self.full_rhs(level, &[x]);
            let b: Vec<Complex64> = (0..level.basis.dim()).map(|i| Complex64::new(rre[(i, 0)], rim[(i, 0)])).collect();
            let (sol, condition) = regularised_solve(level.gram.clone(), &b, level.alpha);
            terms.push(SequenceTerm {
                n: level.n,
                delta: level.delta,
                order: level.basis.order,
                alpha: level.alpha,
                condition,
                coeffs: level.basis.complex_from_real(&sol),
            });
        }
        Ok(terms)
    }
}

/// Solves `(A + α) s = b` through the eigen-decomposition of `A`, returning
/// the solution and the condition estimate of `A`.
fn regularised_solve(a: DMatrix<f64>, b: &[Complex64], alpha: f64) -> (Vec<Complex64>, f64) {
    let d = b.len();
    {
        let a = (&a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(a);
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        let v = &eig.eigenvectors;
        let mut sol = vec![Complex64::new(0.0, 0.0); d];
        for j in 0..d {
            let mut p = Complex64::new(0.0, 0.0);
            for i in 0..d {
                p += v[(i, j)] * b[i];
            }
            let p = p / (eig.eigenvalues[j].max(0.0) + alpha);
            for i in 0..d {
                sol[i] += v[(i, j)] * p;
            }
        }
        (sol, condition)
    }
}

impl FitContext {

    /// Fits one sequence.
    pub fn fit(&self, needle: &Needle) -> Result<NeedleSequence> {
        Ok(self.fit_many(std::slice::from_ref(needle))?.pop().unwrap())
    }

    /// Fits sequences for several needles, sharing the lattice sweeps.
    pub fn fit_many(&self, needles: &[Needle]) -> Result<Vec<NeedleSequence>> {
        let rhs = self.full_rhs_many(&needles.iter().map(|n| n.tip()).collect::<Vec<_>>())?;
        needles.iter().enumerate().map(|(j, nd)| self.fit_with(nd, &rhs, j)).collect()
    }

    /// Full-lattice right-hand sides for `tips`, one entry per index.
    pub fn full_rhs_many(&self, tips: &[Point]) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
        for &x in tips {
            if !self.scene.outer.contains(x) {
                return Err(Error::InvalidInput(format!("tip ({}, {}) outside the domain", x.x, x.y)));
            }
        }
        Ok(self.levels.iter().map(|l| self.full_rhs(l, tips)).collect())
    }

    /// Completes the fit of `needle` from column `col` of precomputed right-hand sides.
    pub fn fit_with(&self, needle: &Needle, rhs: &[(DMatrix<f64>, DMatrix<f64>)], col: usize) -> Result<NeedleSequence> {
        let mut terms = Vec::with_capacity(self.levels.len());
        for (level, (rre, rim)) in self.levels.iter().zip(rhs) {
            let re: Vec<f64> = rre.column(col).iter().copied().collect();
            let im: Vec<f64> = rim.column(col).iter().copied().collect();
            terms.push(self.solve_level(level, needle, &re, &im)?);
        }
        Ok(NeedleSequence {
            needle: needle.clone(),
            k: self.scene.k,
            center: self.scene.center(),
            radius: self.scene.outer_radius(),
            terms,
        })
    }
}

/// Fits the needle sequence for the tip of `needle`.
pub fn fit(x: Point, needle: &Needle, scene: &Scene, schedule: &Schedule) -> Result<NeedleSequence> {
    if (needle.tip() - x).norm() > GEOM_TOL {
        return Err(Error::InvalidNeedle("needle tip differs from the probe point".into()));
    }
    FitContext::new(scene, schedule)?.fit(needle)
}

/// Regular lattice over `region ∩ domain` with the given spacing, as
/// (points, cell weights).
pub fn region_quadrature(region: &Shape, outer: &Shape, spacing: f64) -> (Vec<Point>, f64) {
    let (lo, hi) = region.bbox();
    let nx = ((hi.x - lo.x) / spacing).ceil().max(1.0) as usize;
    let ny = ((hi.y - lo.y) / spacing).ceil().max(1.0) as usize;
    let (sx, sy) = ((hi.x - lo.x) / nx as f64, (hi.y - lo.y) / ny as f64);
    let mut pts = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = Point::new(lo.x + (i as f64 + 0.5) * sx, lo.y + (j as f64 + 0.5) * sy);
            if region.contains(p) && outer.contains(p) {
                pts.push(p);
            }
        }
    }
    (pts, sx * sy)
}

/// Distance from a compact region to the needle (zero when they meet).
pub fn compact_needle_distance(compact: &Shape, needle: &Needle) -> f64 {
    needle.segments().map(|(a, b)| compact.segment_distance(a, b)).fold(f64::INFINITY, f64::min)
}

/// L² misfits of value and gradient of `v_n - G_k(·-x)` over a compact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Misfit {
    pub value: f64,
    pub gradient: f64,
}

impl Misfit {
    /// `H¹` misfit `sqrt(value² + gradient²)`.
    pub fn h1(&self) -> f64 {
        self.value.hypot(self.gradient)
    }
}

/// Misfit of `v_n` against the fundamental solution on `compact`.
pub fn misfit(seq: &NeedleSequence, n: usize, compact: &Shape, outer: &Shape) -> Result<Misfit> {
    let (lo, hi) = compact.bbox();
    let spacing = (hi - lo).norm() / 60.0;
    let (pts, w) = region_quadrature(compact, outer, spacing);
    let x = seq.tip();
    let vals = evaluate(seq, n, &pts)?;
    let (mut ev, mut eg) = (0.0, 0.0);
    for (p, (v, g)) in pts.iter().zip(vals) {
        let d = p - x;
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::SingularPoint);
        }
        let (gv, gg) = fundamental_solution_unchecked(seq.k, d, r);
        ev += w * (v - gv).norm_sqr();
        eg += w * ((g[0] - gg[0]).norm_sqr() + (g[1] - gg[1]).norm_sqr());
    }
    Ok(Misfit { value: ev.sqrt(), gradient: eg.sqrt() })
}

/// Misfit table of a sequence over test compacts.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    /// `rows[c][n-1]` is the misfit on compact `c` at index `n`.
    pub rows: Vec<Vec<Misfit>>,
    /// First index whose tube misses each compact (`δ_n < dist(K, σ)`).
    pub first_inside: Vec<Option<usize>>,
    /// Indices after `first_inside` where the `H¹` misfit increased.
    pub non_decrease: Vec<Vec<usize>>,
}

pub fn convergence_report(seq: &NeedleSequence, compacts: &[Shape], outer: &Shape) -> Result<ConvergenceReport> {
    let mut rows = Vec::new();
    let mut first_inside = Vec::new();
    let mut non_decrease = Vec::new();
    for (ci, c) in compacts.iter().enumerate() {
        let dist = compact_needle_distance(c, &seq.needle);
        if dist <= 0.0 {
            return Err(Error::CompactTouchesNeedle(ci));
        }
        let row: Vec<Misfit> = seq.terms.iter().map(|t| misfit(seq, t.n, c, outer)).collect::<Result<_>>()?;
        let first = seq.terms.iter().find(|t| t.delta < dist).map(|t| t.n);
        let mut bad = Vec::new();
        if let Some(f) = first {
            for (i, t) in seq.terms.iter().enumerate().skip(1) {
                if t.n > f && row[i].h1() > row[i - 1].h1() {
                    bad.push(t.n);
                }
            }
        }
        rows.push(row);
        first_inside.push(first);
        non_decrease.push(bad);
    }
    Ok(ConvergenceReport { rows, first_inside, non_decrease })
}
