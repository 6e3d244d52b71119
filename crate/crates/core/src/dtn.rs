//! Discrete Dirichlet-to-Neumann operators on a boundary trace basis.
//!
//! A [`DtnMatrix`] stores the bilinear form `P[i][j] = ∫ (Λ e_i) e_j dS` in a
//! real basis of boundary traces together with the Gram matrix of that basis.
//! On a disc the real basis is `1, cos θ, sin θ, cos 2θ, ...`; complex
//! coefficient vectors refer to `e^{imθ}`, `m = -M..M`, stored at index
//! `m + M`. On polygons the basis is the boundary hat functions of the mesh.

use crate::error::{Error, Result};
use crate::geometry::{Point, Shape};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Boundary trace basis shared by all maps of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceBasis {
    /// `e^{imθ}` about `center`, `|m| <= n_modes`.
    Trig { center: [f64; 2], radius: f64, n_modes: usize },
    /// Hat functions at the listed boundary nodes, in loop order.
    Hat { nodes: Vec<[f64; 2]> },
}

impl TraceBasis {
    pub fn dim(&self) -> usize {
        match self {
            TraceBasis::Trig { n_modes, .. } => 2 * n_modes + 1,
            TraceBasis::Hat { nodes } => nodes.len(),
        }
    }

    /// Number of modes as written in export headers.
    pub fn n_modes(&self) -> usize {
        match self {
            TraceBasis::Trig { n_modes, .. } => *n_modes,
            TraceBasis::Hat { nodes } => nodes.len(),
        }
    }

    /// Index of mode `m` in a complex trigonometric coefficient vector.
    pub fn mode_index(&self, m: i64) -> Option<usize> {
        match self {
            TraceBasis::Trig { n_modes, .. } if m.unsigned_abs() as usize <= *n_modes => {
                Some((m + *n_modes as i64) as usize)
            }
            _ => None,
        }
    }

    /// Nodal values of the real basis functions at boundary points.
    /// Column `a` of the result holds basis function `a`.
    pub fn real_nodal(&self, points: &[Point]) -> Vec<Vec<f64>> {
        match self {
            TraceBasis::Trig { center, n_modes, .. } => {
                let c = Point::new(center[0], center[1]);
                let th: Vec<f64> = points.iter().map(|p| (p.y - c.y).atan2(p.x - c.x)).collect();
                let mut cols = vec![vec![1.0; points.len()]];
                for m in 1..=*n_modes {
                    cols.push(th.iter().map(|t| (m as f64 * t).cos()).collect());
                    cols.push(th.iter().map(|t| (m as f64 * t).sin()).collect());
                }
                cols
            }
            TraceBasis::Hat { nodes } => (0..nodes.len())
                .map(|a| (0..points.len()).map(|i| if i == a { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Real-basis coefficients of a complex coefficient vector.
    pub fn to_real(&self, c: &[Complex64]) -> Vec<Complex64> {
        match self {
            TraceBasis::Trig { n_modes, .. } => {
                let m0 = *n_modes;
                let mut out = vec![c[m0]];
                for m in 1..=m0 {
                    let (p, q) = (c[m0 + m], c[m0 - m]);
                    out.push(p + q);
                    out.push(Complex64::i() * (p - q));
                }
                out
            }
            TraceBasis::Hat { .. } => c.to_vec(),
        }
    }

    /// Matrix `T` with `to_real(c) = T c`.
    pub fn real_transform(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut t = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = vec![Complex64::new(0.0, 0.0); d];
            e[j] = Complex64::new(1.0, 0.0);
            for (i, v) in self.to_real(&e).into_iter().enumerate() {
                t[(i, j)] = v;
            }
        }
        t
    }

    /// Values of the trace with coefficients `c` at boundary points.
    pub fn eval(&self, c: &[Complex64], points: &[Point]) -> Vec<Complex64> {
        match self {
            TraceBasis::Trig { center, n_modes, .. } => {
                let m0 = *n_modes as i64;
                points
                    .iter()
                    .map(|p| {
                        let th = (p.y - center[1]).atan2(p.x - center[0]);
                        (-m0..=m0)
                            .map(|m| c[(m + m0) as usize] * Complex64::from_polar(1.0, m as f64 * th))
                            .sum()
                    })
                    .collect()
            }
            TraceBasis::Hat { nodes } => points
                .iter()
                .map(|p| {
                    let i = nodes
                        .iter()
                        .position(|q| (q[0] - p.x).abs() < 1e-12 && (q[1] - p.y).abs() < 1e-12)
                        .expect("hat trace evaluated off the boundary nodes");
                    c[i]
                })
                .collect(),
        }
    }

    /// Coefficients of the trace of `f`: trapezoidal projection for the
    /// trigonometric basis, nodal interpolation for hats.
    pub fn project(&self, f: impl Fn(Point) -> Complex64) -> Vec<Complex64> {
        match self {
            TraceBasis::Trig { center, radius, n_modes } => {
                let m0 = *n_modes as i64;
                let q = 8 * n_modes + 256;
                let vals: Vec<(f64, Complex64)> = (0..q)
                    .map(|j| {
                        let th = 2.0 * PI * j as f64 / q as f64;
                        (th, f(Point::new(center[0] + radius * th.cos(), center[1] + radius * th.sin())))
                    })
                    .collect();
                (-m0..=m0)
                    .map(|m| {
                        vals.iter().map(|(th, v)| v * Complex64::from_polar(1.0, -(m as f64) * th)).sum::<Complex64>()
                            / q as f64
                    })
                    .collect()
            }
            TraceBasis::Hat { nodes } => nodes.iter().map(|p| f(Point::new(p[0], p[1]))).collect(),
        }
    }

    /// Coefficients of the complex conjugate trace.
    pub fn conj_trace(&self, c: &[Complex64]) -> Vec<Complex64> {
        match self {
            TraceBasis::Trig { .. } => c.iter().rev().map(|z| z.conj()).collect(),
            TraceBasis::Hat { .. } => c.iter().map(|z| z.conj()).collect(),
        }
    }

    fn same_as(&self, other: &TraceBasis) -> bool {
        match (self, other) {
            (
                TraceBasis::Trig { center: c1, radius: r1, n_modes: n1 },
                TraceBasis::Trig { center: c2, radius: r2, n_modes: n2 },
            ) => n1 == n2 && (r1 - r2).abs() < 1e-12 && (c1[0] - c2[0]).abs() < 1e-12 && (c1[1] - c2[1]).abs() < 1e-12,
            (TraceBasis::Hat { nodes: a }, TraceBasis::Hat { nodes: b }) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(p, q)| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12)
            }
            _ => false,
        }
    }
}

/// Discrete DtN operator with its boundary pairing.
#[derive(Clone, Debug)]
pub struct DtnMatrix {
    pub basis: TraceBasis,
    pub shape: Shape,
    pub k: f64,
    pub h: f64,
    /// `∫ (Λ e_a) e_b dS` over the real basis.
    pub real_form: DMatrix<f64>,
    /// `∫ e_a e_b dS` over the real basis.
    pub real_gram: DMatrix<f64>,
}

impl DtnMatrix {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Bilinear form in the complex coefficient basis, `P_c = Tᵀ P T`.
    pub fn form(&self) -> DMatrix<Complex64> {
        let t = self.basis.real_transform();
        let p = self.real_form.map(|v| Complex64::new(v, 0.0));
        t.transpose() * p * t
    }

    /// Gram matrix in the complex coefficient basis.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let t = self.basis.real_transform();
        let g = self.real_gram.map(|v| Complex64::new(v, 0.0));
        t.transpose() * g * t
    }

    /// `∫ (Λ g) f dS` for complex coefficient vectors.
    pub fn pairing(&self, g: &[Complex64], f: &[Complex64]) -> Complex64 {
        let a = self.basis.to_real(g);
        let b = self.basis.to_real(f);
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..a.len() {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..b.len() {
                row += self.real_form[(i, j)] * b[j];
            }
            s += a[i] * row;
        }
        s
    }

    /// `∫ (Λ f̄) f dS`.
    pub fn sesquilinear(&self, f: &[Complex64]) -> Complex64 {
        self.pairing(&self.basis.conj_trace(f), f)
    }

    /// Operator matrix mapping Dirichlet coefficients to Neumann
    /// coefficients, `Gram⁻¹ P`, in the complex basis.
    pub fn matrix(&self) -> Result<DMatrix<Complex64>> {
        let g = self.gram();
        let inv = g.try_inverse().ok_or_else(|| Error::SingularSystem("singular trace Gram matrix".into()))?;
        Ok(inv * self.form())
    }

    /// Eigenvalues of the operator, ascending (real for real `k`).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let g = SymmetricEigen::new(self.real_gram.clone());
        let s = DMatrix::from_diagonal(&g.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let w = &g.eigenvectors * s * g.eigenvectors.transpose();
        let c = &w * &self.real_form * &w;
        let c = (&c + c.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Rayleigh quotient of `e^{imθ}`, the eigenvalue of mode `m` on a disc.
    pub fn mode_eigenvalue(&self, m: i64) -> Result<f64> {
        match &self.basis {
            TraceBasis::Trig { radius, .. } => {
                let d = self.dim();
                let i = self.basis.mode_index(m).ok_or_else(|| Error::BasisMismatch(format!("mode {m} out of range")))?;
                let j = self.basis.mode_index(-m).unwrap();
                let mut e = vec![Complex64::new(0.0, 0.0); d];
                let mut f = e.clone();
                e[j] = Complex64::new(1.0, 0.0);
                f[i] = Complex64::new(1.0, 0.0);
                Ok(self.pairing(&e, &f).re / (2.0 * PI * radius))
            }
            TraceBasis::Hat { .. } => Err(Error::BasisMismatch("mode eigenvalues need a trigonometric basis".into())),
        }
    }

    /// Fails unless both maps use the same trace basis.
    pub fn check_compatible(&self, other: &DtnMatrix) -> Result<()> {
        if self.basis.same_as(&other.basis) {
            Ok(())
        } else {
            Err(Error::BasisMismatch("maps use different trace bases".into()))
        }
    }

    /// `self - other` as a form on the shared basis.
    pub fn difference(&self, other: &DtnMatrix) -> Result<DtnMatrix> {
        self.check_compatible(other)?;
        Ok(DtnMatrix { real_form: &self.real_form - &other.real_form, ..self.clone() })
    }

    /// Textual export: a header of `key value` lines, then the form and
    /// Gram rows.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# probe dtn v1\n");
        s += &format!("shape {}\n", serde_json::to_string(&self.shape).unwrap());
        s += &format!("basis {}\n", serde_json::to_string(&self.basis).unwrap());
        s += &format!("k {:e}\nn_modes {}\nh {:e}\ndim {}\n", self.k, self.basis.n_modes(), self.h, self.dim());
        for (name, m) in [("form", &self.real_form), ("gram", &self.real_gram)] {
            s += name;
            s += "\n";
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
                s += &row.join(" ");
                s += "\n";
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<DtnMatrix> {
        let perr = |m: &str| Error::Parse(format!("dtn file: {m}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let mut header = std::collections::HashMap::new();
        for key in ["shape", "basis", "k", "n_modes", "h", "dim"] {
            let l = lines.next().ok_or_else(|| perr("truncated header"))?;
            let (kk, v) = l.split_once(' ').ok_or_else(|| perr("bad header line"))?;
            if kk != key {
                return Err(perr(&format!("expected `{key}`, found `{kk}`")));
            }
            header.insert(key, v.to_string());
        }
        let shape: Shape = serde_json::from_str(&header["shape"]).map_err(|e| perr(&e.to_string()))?;
        let basis: TraceBasis = serde_json::from_str(&header["basis"]).map_err(|e| perr(&e.to_string()))?;
        let num = |k: &str| header[k].trim().parse::<f64>().map_err(|e| perr(&e.to_string()));
        let (k, h) = (num("k")?, num("h")?);
        let dim: usize = header["dim"].trim().parse().map_err(|_| perr("bad dim"))?;
        if dim != basis.dim() || header["n_modes"].trim().parse::<usize>().ok() != Some(basis.n_modes()) {
            return Err(perr("dimension does not match basis"));
        }
        let mut read = |name: &str| -> Result<DMatrix<f64>> {
            if lines.next().map(str::trim) != Some(name) {
                return Err(perr(&format!("missing `{name}` block")));
            }
            let mut m = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                let l = lines.next().ok_or_else(|| perr("truncated matrix"))?;
                let vals: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| perr(&e.to_string())))
                    .collect::<Result<_>>()?;
                if vals.len() != dim {
                    return Err(perr("wrong row length"));
                }
                for (j, v) in vals.into_iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            Ok(m)
        };
        let real_form = read("form")?;
        let real_gram = read("gram")?;
        Ok(DtnMatrix { basis, shape, k, h, real_form, real_gram })
    }

    /// CSV of `index,eigenvalue` (ascending), followed by per-mode Rayleigh
    /// quotients `mode,value` on discs.
    pub fn eigen_csv(&self) -> String {
        let mut s = String::from("kind,index,value\n");
        for (i, v) in self.eigenvalues().iter().enumerate() {
            s += &format!("eigenvalue,{i},{v:e}\n");
        }
        if let TraceBasis::Trig { n_modes, .. } = self.basis {
            for m in 0..=n_modes as i64 {
                s += &format!("mode,{m},{:e}\n", self.mode_eigenvalue(m).unwrap());
            }
        }
        s
    }
}

/// Closed-form eigenvalues `λ_n = (n/R)(R^{2n} - ε^{2n})/(R^{2n} + ε^{2n})`,
/// `n = 0..=n_modes`, of the Laplace DtN map on the annulus `ε < r < R`
/// with a Neumann inner boundary. `eps = 0` gives the disc values `n/R`.
pub fn dtn_annulus_analytic(r: f64, eps: f64, n_modes: usize) -> Result<Vec<f64>> {
    if !(r > 0.0 && eps >= 0.0 && eps < r) {
        return Err(Error::InvalidInput(format!("need 0 <= eps < R, got eps = {eps}, R = {r}")));
    }
    Ok((0..=n_modes)
        .map(|n| {
            let q = (eps / r).powi(2 * n as i32);
            (n as f64 / r) * (1.0 - q) / (1.0 + q)
        })
        .collect())
}
