//! Small dense and banded linear algebra helpers shared across the crate.
//!
//! Component interior problems and the pairwise training solves are banded
//! SPD systems on structured meshes, so a plain band Cholesky is enough and
//! keeps those paths dependency-free and bit-deterministic. Dense work uses
//! nalgebra; the wrapper here adds first-failing-pivot diagnostics that
//! nalgebra's `Cholesky` does not expose.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric positive definite matrix in lower-band storage.
///
/// `bands[d][i] = A[i + d, i]` holds the d-th subdiagonal, so `bands[0]` is
/// the main diagonal. Only entries within the half bandwidth are stored.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    hbw: usize,
    bands: Vec<Vec<f64>>,
}

impl BandMatrix {
    /// Accumulates symmetric triplets into band storage. Entries from both
    /// triangles are accepted; duplicates add up, as in FE assembly.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut hbw = 0;
        for &(i, j, _) in triplets {
            let d = i.abs_diff(j);
            if d > hbw {
                hbw = d;
            }
        }
        let mut bands: Vec<Vec<f64>> = (0..=hbw).map(|d| vec![0.0; n - d]).collect();
        for &(i, j, v) in triplets {
            if i >= j {
                bands[i - j][j] += v;
            }
            // Upper-triangle entries are mirrored by symmetry; adding them
            // here would double-count when both triangles are supplied.
        }
        BandMatrix { n, hbw, bands }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.hbw
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.hbw {
            0.0
        } else {
            self.bands[d][lo]
        }
    }

    /// Symmetric matrix-vector product from the stored lower triangle.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (j, (&xj, yj)) in x.iter().zip(y.iter_mut()).enumerate() {
            *yj += self.bands[0][j] * xj;
        }
        for d in 1..=self.hbw {
            let band = &self.bands[d];
            for (j, &v) in band.iter().enumerate() {
                y[j + d] += v * x[j];
                y[j] += v * x[j + d];
            }
        }
        y
    }

    /// Symmetric matrix-matrix product, column by column.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n);
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = self.mul_vec(x.column(c).as_slice());
            y.column_mut(c).copy_from_slice(&col);
        }
        y
    }

    /// In-place lower Cholesky factorization. Fails with the first
    /// non-positive pivot index.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let n = self.n;
        let hbw = self.hbw;
        for j in 0..n {
            let lo = j.saturating_sub(hbw);
            let mut diag = self.bands[0][j];
            for k in lo..j {
                let l = self.bands[j - k][k];
                diag -= l * l;
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::Singular(format!(
                    "non-positive pivot {diag:.3e} at row {j}"
                )));
            }
            let ljj = diag.sqrt();
            self.bands[0][j] = ljj;
            let imax = (j + hbw).min(n - 1);
            for i in (j + 1)..=imax {
                let mut s = self.bands[i - j][j];
                let klo = lo.max(i.saturating_sub(hbw));
                for k in klo..j {
                    s -= self.bands[i - k][k] * self.bands[j - k][k];
                }
                self.bands[i - j][j] = s / ljj;
            }
        }
        Ok(BandCholesky {
            n,
            hbw,
            bands: self.bands,
        })
    }
}

/// Lower Cholesky factor of a [`BandMatrix`], same storage layout.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    hbw: usize,
    bands: Vec<Vec<f64>>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let hbw = self.hbw;
        for i in 0..n {
            let lo = i.saturating_sub(hbw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.bands[i - k][k] * b[k];
            }
            b[i] = s / self.bands[0][i];
        }
        for i in (0..n).rev() {
            let hi = (i + hbw).min(n - 1);
            let mut s = b[i];
            for k in (i + 1)..=hi {
                s -= self.bands[k - i][i] * b[k];
            }
            b[i] = s / self.bands[0][i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves for every column of `b` in place.
    pub fn solve_mat_in_place(&self, b: &mut DMatrix<f64>) {
        assert_eq!(b.nrows(), self.n);
        for mut col in b.column_iter_mut() {
            let slice: &mut [f64] = col.as_mut_slice();
            self.solve_in_place(slice);
        }
    }
}

/// Dense SPD factorization wrapper that reports the first failing pivot.
pub struct DenseSpd {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    n: usize,
}

impl DenseSpd {
    pub fn factor(a: &DMatrix<f64>) -> std::result::Result<Self, usize> {
        let n = a.nrows();
        match nalgebra::Cholesky::new(a.clone()) {
            Some(chol) => Ok(DenseSpd { chol, n }),
            None => Err(first_bad_pivot(a)),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// Locates the row where an unblocked Cholesky first breaks down. Used only
/// for diagnostics after a failed factorization.
fn first_bad_pivot(a: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return j;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    n
}

/// Solution of the symmetric generalized eigenproblem `K x = theta M x`.
///
/// Eigenvalues come back ascending and eigenvectors M-orthonormal, with a
/// deterministic sign convention (largest-magnitude entry positive).
pub struct GeneralizedEig {
    pub values: Vec<f64>,
    /// Columns are eigenvectors.
    pub vectors: DMatrix<f64>,
}

pub fn generalized_symmetric_eig(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<GeneralizedEig> {
    let n = k.nrows();
    assert_eq!(k.ncols(), n);
    assert_eq!(m.nrows(), n);
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| Error::Singular("mass matrix not positive definite".into()))?;
    let l = chol.l();
    // C = L^-1 K L^-T, formed column by column through triangular solves.
    let y = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let c = (&z + z.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let lt = l.transpose();
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (out, &idx) in order.iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let v = eig.eigenvectors.column(idx).into_owned();
        let u = lt
            .solve_upper_triangular(&v)
            .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
        let mut u = u;
        // Deterministic sign: make the largest-magnitude entry positive.
        let mut pick = 0;
        for i in 1..n {
            if u[i].abs() > u[pick].abs() {
                pick = i;
            }
        }
        if u[pick] < 0.0 {
            u.neg_mut();
        }
        vectors.set_column(out, &u);
        let _ = out;
    }
    Ok(GeneralizedEig { values, vectors })
}

/// Relative L2 difference `|a - b| / max(|b|, floor)`.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - y) * (x - y);
        den += y * y;
    }
    (num.sqrt()) / den.sqrt().max(f64::MIN_POSITIVE)
}

/// Largest entrywise deviation of `a` from `b`, scaled by the largest
/// magnitude found in `b`.
pub fn rel_max_entry(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut scale: f64 = 0.0;
    for v in b.iter() {
        scale = scale.max(v.abs());
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        worst = worst.max((x - y).abs());
    }
    worst / scale.max(f64::MIN_POSITIVE)
}
