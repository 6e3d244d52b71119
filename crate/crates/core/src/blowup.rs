//! Gradient energies of needle sequences over cones and balls, and the
//! finite-index divergence classifier shared by every trace.

use crate::error::{Error, Result};
use crate::geometry::{FiniteCone, Point, Scene};
use crate::needle::{evaluate, NeedleSequence};
use serde::{Deserialize, Serialize};

/// Cells per characteristic length in the midpoint rule.
pub const CELLS_PER_LENGTH: usize = 64;

/// Parameters of the divergence rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Index `n` (1-based) the final value is compared against.
    pub burn_in: usize,
    pub ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Thresholds {
        Thresholds { burn_in: 3, ratio: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Bounded,
    Divergent,
}

/// Outcome of the divergence rule on one trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    /// `E_{n_max} / E_{burn_in}`.
    pub ratio: f64,
    /// Least-squares slope of `ln E_n` against `n` from `burn_in` on.
    pub slope: f64,
    pub class: Growth,
}

/// Divergent iff `E_{n_max} >= ratio · E_{burn_in}` and the fitted slope of
/// `ln E` against `n` is positive. `values[i]` is `E_{i+1}`.
pub fn classify_growth(values: &[f64], th: &Thresholds) -> Result<GrowthFit> {
    if th.burn_in == 0 || values.len() < th.burn_in + 3 {
        return Err(Error::InsufficientData(format!(
            "{} values for burn-in index {} (need at least {})",
            values.len(),
            th.burn_in,
            th.burn_in + 3
        )));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("traces must be finite and nonnegative".into()));
    }
    let tail = &values[th.burn_in - 1..];
    let first = tail[0];
    let last = *tail.last().unwrap();
    let ratio = if first > 0.0 {
        last / first
    } else if last > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let floor = tail.iter().copied().fold(0.0f64, f64::max) * 1e-300;
    if floor == 0.0 {
        return Ok(GrowthFit { ratio, slope: 0.0, class: Growth::Bounded });
    }
    let ys: Vec<f64> = tail.iter().map(|v| v.max(floor).ln()).collect();
    let xs: Vec<f64> = (0..ys.len()).map(|i| (th.burn_in + i) as f64).collect();
    let slope = ls_slope(&xs, &ys);
    let class = if ratio >= th.ratio && slope > 0.0 { Growth::Divergent } else { Growth::Bounded };
    Ok(GrowthFit { ratio, slope, class })
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Integration region intersected with the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    Cone(FiniteCone),
    Ball { center: Point, radius: f64 },
}

impl Region {
    pub fn contains(&self, y: Point) -> bool {
        match self {
            Region::Cone(c) => c.contains(y),
            Region::Ball { center, radius } => (y - center).norm() < *radius,
        }
    }

    fn extent(&self) -> (Point, f64) {
        match self {
            Region::Cone(c) => (c.vertex, c.height),
            Region::Ball { center, radius } => (*center, *radius),
        }
    }

    /// Short tag for tables.
    pub fn tag(&self) -> String {
        match self {
            Region::Cone(c) => format!(
                "cone(x={:.4},y={:.4},theta={:.4},rho={:.4})",
                c.vertex.x, c.vertex.y, c.aperture, c.height
            ),
            Region::Ball { center, radius } => format!("ball(x={:.4},y={:.4},r={:.4})", center.x, center.y, radius),
        }
    }

    /// Midpoint-rule cell centres in `region ∩ Ω` and the cell area, with
    /// `cells` cells per characteristic length.
    pub fn quadrature(&self, scene: &Scene, cells: usize) -> (Vec<Point>, f64) {
        let (c, l) = self.extent();
        let hcell = l / cells as f64;
        let m = 2 * cells;
        let mut pts = Vec::new();
        // Rows are shifted half a cell against columns, so diagonal edges
        // through the centre never pass through cell centres.
        for j in 0..=m {
            for i in 0..m {
                let p = c + Point::new(-l + (i as f64 + 0.5) * hcell, -l + j as f64 * hcell);
                if self.contains(p) && scene.outer.contains(p) {
                    pts.push(p);
                }
            }
        }
        (pts, hcell * hcell)
    }
}

/// `∫_{region ∩ Ω} |∇v_n|²` by the midpoint rule with `cells` cells per
/// characteristic length (cone height or ball radius).
pub fn region_energy(seq: &NeedleSequence, n: usize, region: &Region, scene: &Scene, cells: usize) -> Result<f64> {
    let (pts, area) = region.quadrature(scene, cells);
    let vals = evaluate(seq, n, &pts)?;
    Ok(area * vals.iter().map(|(_, g)| g[0].norm_sqr() + g[1].norm_sqr()).sum::<f64>())
}

/// Gradient energy of `v_n` over a finite cone at the tip.
pub fn cone_energy(seq: &NeedleSequence, n: usize, cone: &FiniteCone, scene: &Scene) -> Result<f64> {
    if (cone.vertex - seq.tip()).norm() > 1e-9 {
        return Err(Error::InvalidInput("cone vertex must be the needle tip".into()));
    }
    region_energy(seq, n, &Region::Cone(*cone), scene, CELLS_PER_LENGTH)
}

/// Gradient energy of `v_n` over a ball intersected with the domain.
pub fn ball_energy(seq: &NeedleSequence, n: usize, center: Point, radius: f64, scene: &Scene) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("ball radius must be positive".into()));
    }
    region_energy(seq, n, &Region::Ball { center, radius }, scene, CELLS_PER_LENGTH)
}

/// Energies `E_n`, `n = 1..=n_max`, over one region with their classification.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyTrace {
    pub region: String,
    pub values: Vec<(usize, f64)>,
    pub growth: GrowthFit,
}

impl EnergyTrace {
    pub fn energies(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.1).collect()
    }

    pub fn to_csv(traces: &[EnergyTrace]) -> String {
        let mut s = String::from("n,energy,region\n");
        for t in traces {
            for (n, e) in &t.values {
                s += &format!("{n},{e:e},\"{}\"\n", t.region);
            }
        }
        s
    }
}

/// Energy trace of a sequence over `region` for every fitted index.
pub fn energy_trace(seq: &NeedleSequence, region: &Region, scene: &Scene, th: &Thresholds) -> Result<EnergyTrace> {
    let values: Vec<(usize, f64)> = seq
        .terms
        .iter()
        .map(|t| Ok((t.n, region_energy(seq, t.n, region, scene, CELLS_PER_LENGTH)?)))
        .collect::<Result<_>>()?;
    let growth = classify_growth(&values.iter().map(|v| v.1).collect::<Vec<_>>(), th)?;
    Ok(EnergyTrace { region: region.tag(), values, growth })
}
