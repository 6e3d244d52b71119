//! P1 finite elements for `Δu + k²u = 0` and `∇·γ∇u = 0` with Dirichlet data
//! on the outer boundary, discrete DtN maps, the energy identity and the
//! admissibility check.
//!
//! Neumann traces are variational: the flux moment against boundary hat `i`
//! is row `i` of the assembled residual `A u`, so that
//! `∫ (Λ g) f dS = fᵀ (A u_g)|_∂Ω` exactly for the discrete map.

use crate::dtn::{DtnMatrix, TraceBasis};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, Point, Scene, Shape};
use crate::linalg::{eigs_near, Csr, SparseLu};
use crate::mesh::{triangulate, Mesh};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Relative eigenvalue gap below which a wavenumber is flagged inadmissible.
pub const ADMISSIBILITY_GAP: f64 = 1e-3;

/// Assembles stiffness `Σ w_r ∫ ∇φ_a·∇φ_b` and mass `∫ φ_a φ_b` over the
/// triangles whose region weight `w_r` is nonzero.
pub fn assemble(mesh: &Mesh, weights: &[f64]) -> (Csr, Csr) {
    let n = mesh.n_nodes();
    let mut kt = Vec::with_capacity(9 * mesh.triangles.len());
    let mut mt = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let w = weights[mesh.tri_region[t]];
        if w == 0.0 {
            continue;
        }
        let area = mesh.area(t);
        let g = mesh.hat_gradients(t);
        for a in 0..3 {
            for b in 0..3 {
                kt.push((tri[a], tri[b], w * area * g[a].dot(&g[b])));
                mt.push((tri[a], tri[b], area / 12.0 * if a == b { 2.0 } else { 1.0 }));
            }
        }
    }
    (Csr::from_triplets(n, n, &kt), Csr::from_triplets(n, n, &mt))
}

/// A factorised Dirichlet problem on the outer boundary.
#[derive(Debug)]
pub struct FemSystem {
    pub mesh: Arc<Mesh>,
    pub k: f64,
    /// Per-region coefficient; zero excludes the region.
    pub weights: Vec<f64>,
    pub stiffness: Csr,
    pub mass: Csr,
    operator: Csr,
    free: Vec<usize>,
    free_index: Vec<usize>,
    lu: SparseLu,
}

impl FemSystem {
    /// Builds and factorises `K - k² M` restricted to the active interior nodes.
    pub fn new(mesh: Arc<Mesh>, k: f64, weights: Vec<f64>) -> Result<FemSystem> {
        if weights.len() != mesh.obstacle_loops.len() + 1 {
            return Err(Error::InvalidInput("one weight per region expected".into()));
        }
        let (stiffness, mass) = assemble(&mesh, &weights);
        let operator = stiffness.add_scaled(&mass, -k * k);
        let active = mesh.active_nodes(|t| weights[mesh.tri_region[t]] != 0.0);
        let mut is_dir = vec![false; mesh.n_nodes()];
        for &v in &mesh.outer_loop {
            is_dir[v] = true;
        }
        let free: Vec<usize> = (0..mesh.n_nodes()).filter(|&v| active[v] && !is_dir[v]).collect();
        let mut free_index = vec![usize::MAX; mesh.n_nodes()];
        for (i, &v) in free.iter().enumerate() {
            free_index[v] = i;
        }
        let a_ff = operator.select(&free_index, free.len(), &free_index, free.len());
        let lu = SparseLu::new(&a_ff)?;
        Ok(FemSystem { mesh, k, weights, stiffness, mass, operator, free, free_index, lu })
    }

    /// Whole-domain Helmholtz problem.
    pub fn background(mesh: Arc<Mesh>, k: f64) -> Result<FemSystem> {
        let w = vec![1.0; mesh.obstacle_loops.len() + 1];
        FemSystem::new(mesh, k, w)
    }

    /// Mixed problem on the complement of the obstacles (Neumann on their boundary).
    pub fn mixed(mesh: Arc<Mesh>, k: f64) -> Result<FemSystem> {
        let mut w = vec![0.0; mesh.obstacle_loops.len() + 1];
        w[0] = 1.0;
        FemSystem::new(mesh, k, w)
    }

    /// Free (interior, active) nodes.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    /// Solves for real Dirichlet data given at the outer loop nodes.
    /// Inactive nodes are set to zero.
    pub fn solve_real(&self, data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let dir = &self.mesh.outer_loop;
        let n = self.mesh.n_nodes();
        let mut lifts = Vec::with_capacity(data.len());
        let mut rhs = Vec::with_capacity(data.len());
        for g in data {
            if g.len() != dir.len() {
                return Err(Error::InvalidInput("Dirichlet data length differs from the boundary node count".into()));
            }
            let mut u = vec![0.0; n];
            for (&v, &val) in dir.iter().zip(g) {
                u[v] = val;
            }
            let au = self.operator.mul_vec(&u);
            rhs.push(self.free.iter().map(|&v| -au[v]).collect::<Vec<f64>>());
            lifts.push(u);
        }
        let sol = self.lu.solve_many(&rhs)?;
        for (u, s) in lifts.iter_mut().zip(sol) {
            for (i, &v) in self.free.iter().enumerate() {
                u[v] = s[i];
            }
        }
        Ok(lifts)
    }

    pub fn solve_complex(&self, data: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        let mut parts = Vec::with_capacity(2 * data.len());
        for g in data {
            parts.push(g.iter().map(|z| z.re).collect());
            parts.push(g.iter().map(|z| z.im).collect());
        }
        let sol = self.solve_real(&parts)?;
        Ok(sol.chunks(2).map(|c| c[0].iter().zip(&c[1]).map(|(&a, &b)| Complex64::new(a, b)).collect()).collect())
    }

    /// Variational flux moments `(A u)_i` at the outer loop nodes.
    pub fn flux_moments(&self, u: &[f64]) -> Vec<f64> {
        let au = self.operator.mul_vec(u);
        self.mesh.outer_loop.iter().map(|&v| au[v]).collect()
    }

    pub(crate) fn free_position(&self, v: usize) -> Option<usize> {
        let i = self.free_index[v];
        (i != usize::MAX).then_some(i)
    }

    /// Discrete DtN form on `basis`.
    pub fn dtn(&self, basis: TraceBasis, outer: &Shape) -> Result<DtnMatrix> {
        let pts: Vec<Point> = self.mesh.outer_loop.iter().map(|&v| self.mesh.nodes[v]).collect();
        let g = basis.real_nodal(&pts);
        let u = self.solve_real(&g)?;
        let d = g.len();
        let moments: Vec<Vec<f64>> = u.iter().map(|c| self.flux_moments(c)).collect();
        let mut p = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                p[(a, b)] = g[a].iter().zip(&moments[b]).map(|(x, y)| x * y).sum();
            }
        }
        let gram = boundary_gram(&basis, &pts);
        Ok(DtnMatrix { basis, shape: outer.clone(), k: self.k, h: self.mesh.h, real_form: p, real_gram: gram })
    }
}

fn boundary_gram(basis: &TraceBasis, pts: &[Point]) -> DMatrix<f64> {
    let d = basis.dim();
    match basis {
        TraceBasis::Trig { radius, .. } => {
            let mut g = DMatrix::zeros(d, d);
            g[(0, 0)] = 2.0 * PI * radius;
            for i in 1..d {
                g[(i, i)] = PI * radius;
            }
            g
        }
        TraceBasis::Hat { .. } => {
            let mut g = DMatrix::zeros(d, d);
            for i in 0..d {
                let j = (i + 1) % d;
                let l = (pts[j] - pts[i]).norm();
                g[(i, i)] += l / 3.0;
                g[(j, j)] += l / 3.0;
                g[(i, j)] += l / 6.0;
                g[(j, i)] += l / 6.0;
            }
            g
        }
    }
}

/// The trace basis used for `outer`: trigonometric modes on discs, boundary
/// hats of `mesh` on polygons.
pub fn default_basis(outer: &Shape, mesh: &Mesh, n_modes: usize) -> TraceBasis {
    match outer {
        Shape::Disc { center, radius } => TraceBasis::Trig { center: *center, radius: *radius, n_modes },
        Shape::Polygon { .. } => TraceBasis::Hat {
            nodes: mesh.outer_loop.iter().map(|&v| [mesh.nodes[v].x, mesh.nodes[v].y]).collect(),
        },
    }
}

/// Mesh and both factorised operators of a scene.
///
/// For a sound-hard scene the obstacle operator is the mixed problem on the
/// complement; for a conductivity scene it is `∇·γ∇` on the whole domain.
#[derive(Debug)]
pub struct ForwardModel {
    pub scene: Scene,
    pub mesh: Arc<Mesh>,
    pub background: FemSystem,
    pub obstacle: FemSystem,
}

impl ForwardModel {
    pub fn new(scene: &Scene, h: f64) -> Result<ForwardModel> {
        let mesh = Arc::new(triangulate(scene, h)?);
        ForwardModel::with_mesh(scene, mesh)
    }

    pub fn with_mesh(scene: &Scene, mesh: Arc<Mesh>) -> Result<ForwardModel> {
        let background = FemSystem::background(mesh.clone(), scene.k)?;
        let obstacle = match &scene.bc {
            BoundaryCondition::SoundHardNeumann => FemSystem::mixed(mesh.clone(), scene.k)?,
            BoundaryCondition::Conductivity { h } => {
                let mut w = vec![1.0];
                w.extend(h.iter().map(|v| 1.0 + v));
                FemSystem::new(mesh.clone(), scene.k, w)?
            }
        };
        Ok(ForwardModel { scene: scene.clone(), mesh, background, obstacle })
    }

    pub fn basis(&self, n_modes: usize) -> TraceBasis {
        default_basis(&self.scene.outer, &self.mesh, n_modes)
    }

    /// `(Λ_0, Λ_D)` on the shared basis.
    pub fn dtn_pair(&self, n_modes: usize) -> Result<(DtnMatrix, DtnMatrix)> {
        let b = self.basis(n_modes);
        Ok((self.background.dtn(b.clone(), &self.scene.outer)?, self.obstacle.dtn(b, &self.scene.outer)?))
    }

    /// Nodal Dirichlet data at the outer loop for trace coefficients `f`.
    pub fn nodal_data(&self, basis: &TraceBasis, f: &[Complex64]) -> Vec<Complex64> {
        let pts: Vec<Point> = self.mesh.outer_loop.iter().map(|&v| self.mesh.nodes[v]).collect();
        basis.eval(f, &pts)
    }
}

/// Solves the mixed problem (Neumann on the obstacles) for complex nodal
/// Dirichlet data on the outer loop of `mesh`.
pub fn solve_mixed(mesh: Arc<Mesh>, k: f64, f: &[Complex64]) -> Result<Vec<Complex64>> {
    let sys = FemSystem::mixed(mesh, k)?;
    Ok(sys.solve_complex(&[f.to_vec()])?.pop().unwrap())
}

/// `Λ_D` (`with_obstacle`) or `Λ_0` of `scene` on the default basis.
pub fn dtn_map(scene: &Scene, with_obstacle: bool, n_modes: usize, h: f64) -> Result<DtnMatrix> {
    let mesh = Arc::new(triangulate(scene, h)?);
    let sys = if with_obstacle {
        ForwardModel::with_mesh(scene, mesh.clone())?.obstacle
    } else {
        FemSystem::background(mesh.clone(), scene.k)?
    };
    sys.dtn(default_basis(&scene.outer, &mesh, n_modes), &scene.outer)
}

/// `(∫|∇u|², ∫|u|²)` over the triangles selected by `keep`.
pub fn energy_parts(mesh: &Mesh, u: &[Complex64], keep: impl Fn(usize) -> bool) -> (f64, f64) {
    let mut grad = 0.0;
    let mut mass = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !keep(t) {
            continue;
        }
        let area = mesh.area(t);
        let g = mesh.hat_gradients(t);
        let (mut gx, mut gy) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for a in 0..3 {
            gx += u[tri[a]] * g[a].x;
            gy += u[tri[a]] * g[a].y;
        }
        grad += area * (gx.norm_sqr() + gy.norm_sqr());
        let mut m = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { 2.0 } else { 1.0 };
                m += w * (u[tri[a]].conj() * u[tri[b]]).re;
            }
        }
        mass += area / 12.0 * m;
    }
    (grad, mass)
}

/// `∫ u` over the triangles selected by `keep`, and their total area.
pub fn integral(mesh: &Mesh, u: &[Complex64], keep: impl Fn(usize) -> bool) -> (Complex64, f64) {
    let mut s = Complex64::new(0.0, 0.0);
    let mut area = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if keep(t) {
            let a = mesh.area(t);
            s += (u[tri[0]] + u[tri[1]] + u[tri[2]]) * (a / 3.0);
            area += a;
        }
    }
    (s, area)
}

/// Both sides of the energy identity for one boundary datum.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyIdentity {
    /// `∫ {(Λ_0 - Λ_D) f̄} f dS`.
    pub lhs: Complex64,
    /// Complement and obstacle energies of `w = u - v` and `v`.
    pub rhs: f64,
    /// `|lhs - rhs| / (1 + |lhs|)`.
    pub residual: f64,
}

/// Evaluates the energy identity for trace coefficients `f` on the maps
/// `lam0`, `lamd` assembled from `model`.
pub fn energy_identity(model: &ForwardModel, lam0: &DtnMatrix, lamd: &DtnMatrix, f: &[Complex64]) -> Result<EnergyIdentity> {
    lam0.check_compatible(lamd)?;
    let lhs = lam0.sesquilinear(f) - lamd.sesquilinear(f);
    let g = model.nodal_data(&lam0.basis, f);
    let v = model.background.solve_complex(&[g.clone()])?.pop().unwrap();
    let u = model.obstacle.solve_complex(&[g])?.pop().unwrap();
    let w: Vec<Complex64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
    let mesh = &model.mesh;
    let k2 = model.scene.k * model.scene.k;
    let (ge, me) = energy_parts(mesh, &w, |t| mesh.tri_region[t] == 0);
    let (gd, md) = energy_parts(mesh, &v, |t| mesh.tri_region[t] != 0);
    let rhs = ge - k2 * me + gd - k2 * md;
    Ok(EnergyIdentity { lhs, rhs, residual: (lhs - rhs).norm() / (1.0 + lhs.norm()) })
}

/// Relative energy-identity residual for trace coefficients `f` on the
/// default basis of `scene` (sound-hard obstacles).
pub fn energy_identity_residual(scene: &Scene, f: &[Complex64], h: f64) -> Result<f64> {
    let model = ForwardModel::new(scene, h)?;
    let n_modes = match scene.outer {
        Shape::Disc { .. } => (f.len().saturating_sub(1)) / 2,
        Shape::Polygon { .. } => f.len(),
    };
    let basis = model.basis(n_modes);
    if basis.dim() != f.len() {
        return Err(Error::BasisMismatch(format!("{} trace coefficients for a basis of dimension {}", f.len(), basis.dim())));
    }
    let (l0, ld) = model.dtn_pair(n_modes)?;
    Ok(energy_identity(&model, &l0, &ld, f)?.residual)
}

/// Nearest discrete eigenvalues to `k²` and the admissibility verdict.
#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub k: f64,
    /// Dirichlet eigenvalue of `-Δ` on the domain nearest to `k²`.
    pub dirichlet_nearest: f64,
    /// Mixed eigenvalue on the complement nearest to `k²` (absent without obstacles).
    pub mixed_nearest: Option<f64>,
    pub dirichlet_gap: f64,
    pub mixed_gap: Option<f64>,
    pub admissible: bool,
}

fn nearest_eigenvalue(sys_k: &Csr, sys_m: &Csr, k2: f64) -> Result<f64> {
    let shift = k2 - 0.01 * (1.0 + k2);
    let eigs = eigs_near(sys_k, sys_m, shift, 4, 7)?;
    Ok(eigs.into_iter().map(|e| e.0).min_by(|a, b| (a - k2).abs().partial_cmp(&(b - k2).abs()).unwrap()).unwrap())
}

/// Restriction of stiffness and mass to the free nodes of `sys`.
pub fn free_pencil(sys: &FemSystem) -> (Csr, Csr) {
    let n = sys.mesh.n_nodes();
    let map: Vec<usize> = (0..n).map(|v| sys.free_position(v).unwrap_or(usize::MAX)).collect();
    let nf = sys.free_nodes().len();
    (sys.stiffness.select(&map, nf, &map, nf), sys.mass.select(&map, nf, &map, nf))
}

/// Checks that `k²` is not (close to) a Dirichlet eigenvalue of the domain
/// or an eigenvalue of the mixed problem on the complement.
pub fn check_admissibility(scene: &Scene, h: f64) -> Result<AdmissibilityReport> {
    let mesh = Arc::new(triangulate(scene, h)?);
    let k2 = scene.k * scene.k;
    // Factorise at k = 0: the pencil, not the Helmholtz operator, is needed.
    let bg = FemSystem::background(mesh.clone(), 0.0)?;
    let (kk, mm) = free_pencil(&bg);
    let dn = nearest_eigenvalue(&kk, &mm, k2)?;
    let dgap = (dn - k2).abs() / dn.abs();
    let (mn, mgap) = if scene.obstacles.is_empty() {
        (None, None)
    } else {
        let mx = FemSystem::mixed(mesh, 0.0)?;
        let (kk, mm) = free_pencil(&mx);
        let e = nearest_eigenvalue(&kk, &mm, k2)?;
        (Some(e), Some((e - k2).abs() / e.abs()))
    };
    let admissible = dgap >= ADMISSIBILITY_GAP && mgap.is_none_or(|g| g >= ADMISSIBILITY_GAP);
    Ok(AdmissibilityReport { k: scene.k, dirichlet_nearest: dn, mixed_nearest: mn, dirichlet_gap: dgap, mixed_gap: mgap, admissible })
}
