//! Sparse matrices, direct factorisation and a shift-invert subspace
//! eigensolver for symmetric pencils.

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, trips: &[(usize, usize, f64)]) -> Csr {
        let mut count = vec![0usize; nrows + 1];
        for &(r, _, _) in trips {
            count[r + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        let mut cols = vec![0usize; trips.len()];
        let mut vals = vec![0f64; trips.len()];
        let mut next = count.clone();
        for &(r, c, v) in trips {
            let p = next[r];
            cols[p] = c;
            vals[p] = v;
            next[r] += 1;
        }
        let mut indptr = vec![0usize];
        let mut indices = Vec::with_capacity(trips.len());
        let mut data = Vec::with_capacity(trips.len());
        for r in 0..nrows {
            let mut row: Vec<(usize, f64)> = (count[r]..count[r + 1]).map(|p| (cols[p], vals[p])).collect();
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut s = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            y[r] = s;
        }
        y
    }

    /// `x^T A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// `A + s B` for matrices of equal shape.
    pub fn add_scaled(&self, other: &Csr, s: f64) -> Csr {
        let mut trips = self.triplets();
        trips.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, s * v)));
        Csr::from_triplets(self.nrows, self.ncols, &trips)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.data.len());
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                t.push((r, self.indices[p], self.data[p]));
            }
        }
        t
    }

    /// Submatrix with rows/columns renumbered through `row_map`/`col_map`
    /// (`usize::MAX` drops an index).
    pub fn select(&self, row_map: &[usize], nr: usize, col_map: &[usize], nc: usize) -> Csr {
        let mut trips = Vec::new();
        for r in 0..self.nrows {
            let rr = row_map[r];
            if rr == usize::MAX {
                continue;
            }
            for p in self.indptr[r]..self.indptr[r + 1] {
                let cc = col_map[self.indices[p]];
                if cc != usize::MAX {
                    trips.push((rr, cc, self.data[p]));
                }
            }
        }
        Csr::from_triplets(nr, nc, &trips)
    }
}

/// Sparse LU factorisation of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    matrix: Csr,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SparseLu({}x{})", self.n, self.n)
    }
}

impl SparseLu {
    pub fn new(a: &Csr) -> Result<SparseLu> {
        if a.nrows != a.ncols {
            return Err(Error::InvalidInput("LU of a non-square matrix".into()));
        }
        let trips: Vec<Triplet<usize, usize, f64>> =
            a.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &trips)
            .map_err(|e| Error::SingularSystem(format!("sparse assembly: {e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::SingularSystem(format!("factorisation: {e:?}")))?;
        Ok(SparseLu { n: a.nrows, lu, matrix: a.clone() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves for each column of `rhs`; fails if the result is not a
    /// faithful solution (signals a singular pencil).
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        if self.n == 0 {
            return Ok(rhs.iter().map(|_| Vec::new()).collect());
        }
        let m = rhs.len();
        let mut b = Mat::<f64>::zeros(self.n, m);
        for (j, col) in rhs.iter().enumerate() {
            for i in 0..self.n {
                b[(i, j)] = col[i];
            }
        }
        let x = self.lu.solve(&b);
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<f64> = (0..self.n).map(|i| x[(i, j)]).collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSystem("non-finite solution".into()));
            }
            let r = self.matrix.mul_vec(&col);
            let bn: f64 = rhs[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            let rn: f64 = r.iter().zip(&rhs[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if rn > 1e-6 * bn.max(1e-300) && bn > 0.0 {
                return Err(Error::SingularSystem(format!("relative residual {:.2e}", rn / bn)));
            }
            out.push(col);
        }
        Ok(out)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(std::slice::from_ref(&rhs.to_vec()))?.pop().unwrap())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenvalues of the pencil `K x = lambda M x` closest to `shift`,
/// sorted by distance from it, with the corresponding `M`-normalised vectors.
///
/// `K` symmetric, `M` symmetric positive definite. Shift-invert subspace
/// iteration with Rayleigh-Ritz projection.
pub fn eigs_near(k: &Csr, m: &Csr, shift: f64, count: usize, seed: u64) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = k.nrows;
    if count == 0 || n == 0 {
        return Err(Error::EigensolverFailure("empty eigenproblem".into()));
    }
    let p = (count + 4).min(n);
    let a = k.add_scaled(m, -shift);
    let lu = SparseLu::new(&a).map_err(|e| Error::EigensolverFailure(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let mut prev = vec![f64::INFINITY; count];
    for _iter in 0..500 {
        let mx: Vec<Vec<f64>> = x.iter().map(|c| m.mul_vec(c)).collect();
        let y = lu.solve_many(&mx).map_err(|e| Error::EigensolverFailure(e.to_string()))?;
        let ky: Vec<Vec<f64>> = y.iter().map(|c| k.mul_vec(c)).collect();
        let my: Vec<Vec<f64>> = y.iter().map(|c| m.mul_vec(c)).collect();
        let kr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i])));
        let mr = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &my[j]) + dot(&y[j], &my[i])));
        let chol = mr
            .clone()
            .cholesky()
            .ok_or_else(|| Error::EigensolverFailure("projected mass matrix not positive definite".into()))?;
        let l = chol.l();
        let linv = l.clone().try_inverse().ok_or_else(|| Error::EigensolverFailure("singular projection".into()))?;
        let c = &linv * &kr * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let s = linv.transpose() * &eig.eigenvectors;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| {
            (eig.eigenvalues[i] - shift).abs().partial_cmp(&(eig.eigenvalues[j] - shift).abs()).unwrap()
        });
        x = order
            .iter()
            .map(|&jj| {
                let mut v = vec![0.0; n];
                for (i, yi) in y.iter().enumerate() {
                    let w = s[(i, jj)];
                    for (vv, yy) in v.iter_mut().zip(yi) {
                        *vv += w * yy;
                    }
                }
                v
            })
            .collect();
        let vals: Vec<f64> = order.iter().take(count).map(|&i| eig.eigenvalues[i]).collect();
        let converged = vals
            .iter()
            .zip(&prev)
            .all(|(v, pv)| (v - pv).abs() <= 1e-12 * v.abs().max((v - shift).abs()).max(1e-300));
        prev = vals.clone();
        if converged {
            return Ok(vals.into_iter().zip(x.into_iter()).collect());
        }
    }
    Err(Error::EigensolverFailure("subspace iteration did not converge".into()))
}
