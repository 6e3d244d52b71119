//! Conductivity inclusions `γ = 1 + h_j` on `D_j` at `k = 0`: the map
//! `Λ_γ`, the bilinear indicator and the grid reconstruction.

use crate::blowup::Thresholds;
use crate::dtn::DtnMatrix;
use crate::error::{Error, Result};
use crate::fem::{default_basis, FemSystem};
use crate::geometry::{check_jumps, BoundaryCondition, Scene};
use crate::indicator::{indicator_values, reconstruct, trace_from_values, IndicatorField, IndicatorTrace, Pairing, ReconstructOptions, TraceClass};
use crate::mesh::triangulate;
use crate::needle::{FitContext, NeedleSequence};
use std::sync::Arc;

/// Builds a conductivity scene from geometry and jumps, enforcing
/// positivity of `1 + h_j` and a common strict sign of the jumps.
pub fn conductivity_scene(base: &Scene, h: Vec<f64>) -> Result<Scene> {
    if base.k != 0.0 {
        return Err(Error::InvalidInput("conductivity scenes are defined at k = 0".into()));
    }
    check_jumps(&h, base.obstacles.len())?;
    Ok(Scene { bc: BoundaryCondition::Conductivity { h }, ..base.clone() })
}

fn jumps(scene: &Scene) -> Result<&[f64]> {
    match &scene.bc {
        BoundaryCondition::Conductivity { h } if scene.k == 0.0 => Ok(h),
        _ => Err(Error::InvalidInput("expected a conductivity scene with k = 0".into())),
    }
}

/// `(Λ_γ, Λ_1)` on one mesh covering the whole domain.
pub fn dtn_gamma_pair(scene: &Scene, n_modes: usize, h_mesh: f64) -> Result<(DtnMatrix, DtnMatrix)> {
    let h = jumps(scene)?;
    check_jumps(h, scene.obstacles.len())?;
    let mesh = Arc::new(triangulate(scene, h_mesh)?);
    let mut w = vec![1.0];
    w.extend(h.iter().map(|v| 1.0 + v));
    let basis = default_basis(&scene.outer, &mesh, n_modes);
    let gamma = FemSystem::new(mesh.clone(), 0.0, w)?.dtn(basis.clone(), &scene.outer)?;
    let one = FemSystem::background(mesh, 0.0)?.dtn(basis, &scene.outer)?;
    Ok((gamma, one))
}

/// `Λ_γ` of a conductivity scene.
pub fn dtn_gamma(scene: &Scene, n_modes: usize, h_mesh: f64) -> Result<DtnMatrix> {
    Ok(dtn_gamma_pair(scene, n_modes, h_mesh)?.0)
}

/// `I_n = ∫ {(Λ_γ - Λ_1) f_n} f_n`, classified on `|I_n|`.
pub fn conductivity_indicator(seq: &NeedleSequence, lam_g: &DtnMatrix, lam_1: &DtnMatrix, th: &Thresholds) -> Result<IndicatorTrace> {
    if seq.k != 0.0 {
        return Err(Error::InvalidInput("the conductivity indicator needs a harmonic sequence".into()));
    }
    let diff = lam_g.difference(lam_1)?;
    trace_from_values(seq, indicator_values(seq, &diff, Pairing::Bilinear)?, th)
}

/// Eventual sign of a trace: the common sign of `Re I_n` over the last
/// `tail` indices, if they share one.
pub fn trace_sign(trace: &IndicatorTrace, tail: usize) -> Option<i8> {
    let n = trace.values.len();
    let last = &trace.values[n.saturating_sub(tail)..];
    if last.is_empty() {
        return None;
    }
    if last.iter().all(|v| v.1.re > 0.0) {
        Some(1)
    } else if last.iter().all(|v| v.1.re < 0.0) {
        Some(-1)
    } else {
        None
    }
}

/// Whether a trace diverges.
pub fn is_divergent(trace: &IndicatorTrace) -> bool {
    trace.class == TraceClass::Divergent
}

/// Grid reconstruction with the bilinear pairing.
pub fn conductivity_classify(
    ctx: &FitContext,
    lam_g: &DtnMatrix,
    lam_1: &DtnMatrix,
    opts: &ReconstructOptions,
) -> Result<IndicatorField> {
    if ctx.scene.k != 0.0 {
        return Err(Error::InvalidInput("the conductivity reconstruction needs k = 0".into()));
    }
    reconstruct(ctx, lam_g, lam_1, &ReconstructOptions { pairing: Pairing::Bilinear, ..*opts })
}
