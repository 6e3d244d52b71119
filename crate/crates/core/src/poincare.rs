//! Poincaré constants from discrete spectra, the smallness conditions on
//! the wavenumber and a direct check of the basic inequality.

use crate::dtn::DtnMatrix;
use crate::error::{Error, Result};
use crate::fem::{assemble, energy_parts, free_pencil, integral, FemSystem, ForwardModel};
use crate::geometry::{needle_tube, BoundaryCondition, Needle, Scene, Shape};
use crate::linalg::eigs_near;
use crate::mesh::{triangulate_shapes, Mesh};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Relative size below which a Neumann eigenvalue counts as the constant mode.
const ZERO_MODE: f64 = 1e-8;

/// Smallest eigenvalue of the mixed problem on the complement (Dirichlet on
/// the outer boundary, Neumann on the obstacles).
pub fn mixed_eigenvalue(mesh: Arc<Mesh>) -> Result<f64> {
    let sys = FemSystem::mixed(mesh, 0.0)?;
    let (k, m) = free_pencil(&sys);
    Ok(eigs_near(&k, &m, 0.0, 2, 11)?[0].0)
}

/// `C0 = λ₁^{-1/2}` for the mixed problem on the complement of the obstacles.
pub fn mixed_poincare_constant(scene: &Scene, h: f64) -> Result<f64> {
    let mesh = Arc::new(crate::mesh::triangulate(scene, h)?);
    Ok(mixed_eigenvalue(mesh)?.powf(-0.5))
}

/// First nonzero Neumann eigenvalue of `-Δ` on region `region` of `mesh`.
pub fn neumann_eigenvalue(mesh: &Mesh, region: usize) -> Result<f64> {
    let mut w = vec![0.0; mesh.obstacle_loops.len() + 1];
    w[region] = 1.0;
    let (k, m) = assemble(mesh, &w);
    let active = mesh.active_nodes(|t| mesh.tri_region[t] == region);
    let mut map = vec![usize::MAX; mesh.n_nodes()];
    let mut na = 0;
    for v in 0..mesh.n_nodes() {
        if active[v] {
            map[v] = na;
            na += 1;
        }
    }
    let (k, m) = (k.select(&map, na, &map, na), m.select(&map, na, &map, na));
    // Shift below zero: K + M is definite, the constant mode is the nearest.
    let eigs = eigs_near(&k, &m, -1.0, 4, 13)?;
    let scale = eigs.iter().map(|e| e.0.abs()).fold(0.0, f64::max);
    eigs.iter()
        .map(|e| e.0)
        .filter(|&v| v > ZERO_MODE * scale)
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |b| b.min(v))))
        .ok_or_else(|| Error::EigensolverFailure("no nonzero Neumann eigenvalue found".into()))
}

/// `C(U) = μ₁^{-1/2}` with `μ₁` the first nonzero Neumann eigenvalue of `U`.
pub fn neumann_poincare_constant(shape: &Shape, h: f64) -> Result<f64> {
    let mesh = triangulate_shapes(&shape.validated()?, &[], h)?;
    Ok(neumann_eigenvalue(&mesh, 0)?.powf(-0.5))
}

/// Squared constant `C²(1 + (|U|/|A|)^{1/2})²` of the subset-mean bound.
pub fn subset_mean_constant(c: f64, vol_u: f64, vol_a: f64) -> Result<f64> {
    if !(vol_a > 0.0 && vol_a <= vol_u) {
        return Err(Error::InvalidInput(format!("subset volume {vol_a} must lie in ]0, {vol_u}]")));
    }
    Ok(c * c * (1.0 + (vol_u / vol_a).sqrt()).powi(2))
}

/// Poincaré constants of a scene on one mesh.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantsReport {
    pub c0: f64,
    pub cj: Vec<f64>,
    pub obstacle_volumes: Vec<f64>,
    pub complement_volume: f64,
    /// `min(1/C0, min_j 1/(√8 C_j))`.
    pub k_max: f64,
}

fn k_max(c0: f64, cj: &[f64]) -> f64 {
    cj.iter().map(|c| 1.0 / (8f64.sqrt() * c)).fold(1.0 / c0, f64::min)
}

/// Constants computed on the mesh of the scene; obstacle constants use
/// the obstacle sub-meshes.
pub fn constants_on_mesh(mesh: Arc<Mesh>) -> Result<ConstantsReport> {
    let c0 = mixed_eigenvalue(mesh.clone())?.powf(-0.5);
    let nobs = mesh.obstacle_loops.len();
    let cj: Vec<f64> = (1..=nobs).map(|r| Ok(neumann_eigenvalue(&mesh, r)?.powf(-0.5))).collect::<Result<_>>()?;
    let mut vols = vec![0.0; nobs + 1];
    for t in 0..mesh.triangles.len() {
        vols[mesh.tri_region[t]] += mesh.area(t);
    }
    Ok(ConstantsReport { k_max: k_max(c0, &cj), c0, cj, obstacle_volumes: vols[1..].to_vec(), complement_volume: vols[0] })
}

/// Constants of a scene at mesh size `h`.
pub fn poincare_constants(scene: &Scene, h: f64) -> Result<ConstantsReport> {
    constants_on_mesh(Arc::new(crate::mesh::triangulate(scene, h)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Smallness {
    /// `k²C0² ≤ 1`.
    pub ok_complement: bool,
    /// `1 - 8k²C_j² > 0` for every obstacle.
    pub ok_obstacles: bool,
    pub k_max: f64,
}

/// `k²C0² ≤ 1` and `min_j (1 - 8k²C_j²) > 0`.
pub fn smallness_check(scene: &Scene, c: &ConstantsReport) -> Smallness {
    let k2 = scene.k * scene.k;
    let ok_complement = k2 * c.c0 * c.c0 <= 1.0;
    let ok_obstacles = c.cj.iter().map(|cj| 1.0 - 8.0 * k2 * cj * cj).fold(f64::INFINITY, f64::min) > 0.0;
    Smallness { ok_complement, ok_obstacles, k_max: c.k_max }
}

/// `π > k²|U|`.
pub fn small_volume_condition(shape: &Shape, k: f64) -> bool {
    PI > k * k * shape.area()
}

/// Subset `A_j` of obstacle `D_j` used for the mean term.
#[derive(Clone, Debug)]
pub enum SubsetSpec {
    Full,
    /// `D_j` minus the tube of radius `delta` around a needle.
    MinusTube { needle: Needle, delta: f64 },
}

/// Both sides of the basic inequality for one boundary datum.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BasicInequality {
    pub lhs: Complex64,
    pub rhs: f64,
    /// `Re lhs - rhs`.
    pub margin: f64,
}

/// Mesh, maps and constants shared by repeated checks on one scene.
pub struct BasicInequalityContext {
    pub model: ForwardModel,
    pub lam0: DtnMatrix,
    pub lamd: DtnMatrix,
    pub constants: ConstantsReport,
    /// Triangle masks of `A_j` and their areas.
    subsets: Vec<(Vec<bool>, f64)>,
}

impl BasicInequalityContext {
    pub fn new(scene: &Scene, subsets: &[SubsetSpec], h: f64, n_modes: usize) -> Result<BasicInequalityContext> {
        if scene.bc != BoundaryCondition::SoundHardNeumann {
            return Err(Error::InvalidInput("the basic inequality concerns sound-hard obstacles".into()));
        }
        if subsets.len() != scene.obstacles.len() {
            return Err(Error::InvalidInput("one subset per obstacle expected".into()));
        }
        let model = ForwardModel::new(scene, h)?;
        let constants = if scene.obstacles.is_empty() {
            ConstantsReport {
                c0: mixed_eigenvalue(model.mesh.clone())?.powf(-0.5),
                cj: vec![],
                obstacle_volumes: vec![],
                complement_volume: scene.outer.area(),
                k_max: f64::INFINITY,
            }
        } else {
            constants_on_mesh(model.mesh.clone())?
        };
        let sm = smallness_check(scene, &constants);
        if !(sm.ok_complement && sm.ok_obstacles) {
            return Err(Error::SmallnessViolated(format!("k = {} exceeds k_max = {:.6}", scene.k, sm.k_max)));
        }
        let mesh = &model.mesh;
        let mut masks = Vec::new();
        for (j, spec) in subsets.iter().enumerate() {
            let region = j + 1;
            let mask: Vec<bool> = (0..mesh.triangles.len())
                .map(|t| {
                    mesh.tri_region[t] == region
                        && match spec {
                            SubsetSpec::Full => true,
                            SubsetSpec::MinusTube { needle, delta } => !needle_tube(needle, *delta).contains(mesh.centroid(t)),
                        }
                })
                .collect();
            let area: f64 = (0..mesh.triangles.len()).filter(|&t| mask[t]).map(|t| mesh.area(t)).sum();
            if area <= 0.0 {
                return Err(Error::InvalidInput(format!("subset of obstacle {j} has no area")));
            }
            masks.push((mask, area));
        }
        let (lam0, lamd) = model.dtn_pair(n_modes)?;
        Ok(BasicInequalityContext { model, lam0, lamd, constants, subsets: masks })
    }

    pub fn check(&self, f: &[Complex64]) -> Result<BasicInequality> {
        self.lam0.check_compatible(&self.lamd)?;
        let lhs = self.lam0.sesquilinear(f) - self.lamd.sesquilinear(f);
        let g = self.model.nodal_data(&self.lam0.basis, f);
        let v = self.model.background.solve_complex(&[g.clone()])?.pop().unwrap();
        let u = self.model.obstacle.solve_complex(&[g])?.pop().unwrap();
        let w: Vec<Complex64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let mesh = &self.model.mesh;
        let k2 = self.model.scene.k.powi(2);
        let c = &self.constants;
        let (gw, _) = energy_parts(mesh, &w, |t| mesh.tri_region[t] == 0);
        let mut rhs = (1.0 - k2 * c.c0 * c.c0) * gw;
        let vol_d: f64 = c.obstacle_volumes.iter().sum();
        let mut means = 0.0;
        for (j, (mask, area_a)) in self.subsets.iter().enumerate() {
            let (gv, _) = energy_parts(mesh, &v, |t| mesh.tri_region[t] == j + 1);
            let coef = 1.0 - 2.0 * k2 * subset_mean_constant(c.cj[j], c.obstacle_volumes[j], *area_a)?;
            rhs += coef * gv;
            let (s, _) = integral(mesh, &v, |t| mask[t]);
            means += (s / area_a).norm_sqr();
        }
        rhs -= 2.0 * k2 * vol_d * means;
        Ok(BasicInequality { lhs, rhs, margin: lhs.re - rhs })
    }
}

/// Margin of the basic inequality for trace coefficients `f` on the default
/// basis with `(f.len()-1)/2` modes.
pub fn basic_inequality_check(scene: &Scene, f: &[Complex64], subsets: &[SubsetSpec], h: f64) -> Result<BasicInequality> {
    let n_modes = f.len().saturating_sub(1) / 2;
    let ctx = BasicInequalityContext::new(scene, subsets, h, n_modes)?;
    if ctx.lam0.dim() != f.len() {
        return Err(Error::BasisMismatch(format!("{} coefficients for a basis of dimension {}", f.len(), ctx.lam0.dim())));
    }
    ctx.check(f)
}
