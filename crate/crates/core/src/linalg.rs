//! Dense complex matrices and the spectral routines everything else builds on.
//!
//! Matrices are row-major `Vec<Complex64>` with explicit shape. Dimensions stay
//! at desk scale (a few hundred at most), so the eigensolver is a cyclic Jacobi
//! iteration rather than a LAPACK binding: deterministic, dependency-free, and
//! accurate to machine precision for Hermitian input.

use num_complex::Complex64;

use crate::{Error, Result};

/// Relative eigenvalue cutoff: eigenvalues with `|lambda| < EIG_CUTOFF_PER_DIM * dim`
/// are treated as exactly zero for ranks, logs and pseudo-inverses.
pub const EIG_CUTOFF_PER_DIM: f64 = 1e-12;

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Build from row-major data, checking shape and that every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("matrix entry is NaN or infinite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Real diagonal matrix.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(diag[i], 0.0);
        }
        m
    }

    /// Outer product `v w†`.
    pub fn outer(v: &[Complex64], w: &[Complex64]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.data[i * self.cols + j] * v[j])
                    .sum()
            })
            .collect()
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Kronecker product.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.data[i1 * self.cols + j1];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for i2 in 0..other.rows {
                    for j2 in 0..other.cols {
                        out.data[(i1 * other.rows + i2) * cols + (j1 * other.cols + j2)] =
                            a * other.data[i2 * other.cols + j2];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max-norm distance to the conjugate transpose.
    pub fn hermiticity_defect(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.hermiticity_defect() <= tol
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, and a
/// unitary whose columns are the matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Errors if the input is not square or deviates from Hermitian by more than
/// `1e-10` in max norm. Reconstruction `U diag(lambda) U^dagger` matches the
/// input to machine precision at the dimensions this crate works at.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEig> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.is_hermitian(1e-10) {
        return Err(Error::Domain(format!(
            "matrix is not Hermitian (defect {:.3e})",
            a.hermiticity_defect()
        )));
    }
    let n = a.rows;
    // Work on the exactly Hermitian part so roundoff in the input cannot leak
    // imaginary components into the diagonal.
    let mut m = ComplexMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
    let mut u = ComplexMatrix::identity(n);
    let scale = m.frobenius().max(1e-300);
    let tol = 1e-15 * scale;

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.norm() <= tol / (n as f64) {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                // Stable Jacobi rotation for the block [[app, apq], [apq*, aqq]]:
                // phase out apq, then a real Givens rotation with the classic
                // small-angle tangent (no cancellation near degenerate gaps).
                let r = apq.norm();
                let phase = apq.conj() / r; // e^{-i arg(apq)}
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let (j00, j01) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
                let (j10, j11) = (phase * (-s), phase * c);
                let (lam_p, lam_q) = (app - t * r, aqq + t * r);
                // m <- J^dagger m J on rows/cols p, q.
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * j00 + mkq * j10;
                    m[(k, q)] = mkp * j01 + mkq * j11;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = j00.conj() * mpk + j10.conj() * mqk;
                    m[(q, k)] = j01.conj() * mpk + j11.conj() * mqk;
                }
                m[(p, q)] = Complex64::new(0.0, 0.0);
                m[(q, p)] = Complex64::new(0.0, 0.0);
                m[(p, p)] = Complex64::new(lam_p, 0.0);
                m[(q, q)] = Complex64::new(lam_q, 0.0);
                for k in 0..n {
                    let ukp = u[(k, p)];
                    let ukq = u[(k, q)];
                    u[(k, p)] = ukp * j00 + ukq * j10;
                    u[(k, q)] = ukp * j01 + ukq * j11;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.partial_cmp(&m[(j, j)].re).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok(HermitianEig { values, vectors })
}

impl HermitianEig {
    /// `U f(diag) U^dagger` for a real spectral function.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let u = &self.vectors;
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            if fv[k] == 0.0 {
                continue;
            }
            for i in 0..n {
                let uik = u[(i, k)] * fv[k];
                for j in 0..n {
                    out.data[i * n + j] += uik * u[(j, k)].conj();
                }
            }
        }
        out
    }
}

/// Eigenvalue cutoff used for rank decisions and pseudo-inverses.
pub fn eig_cutoff(dim: usize) -> f64 {
    EIG_CUTOFF_PER_DIM * dim as f64
}

/// `a^power` on the support of a PSD matrix (eigenvalues below the cutoff are
/// dropped), e.g. `power = -0.5` for the pseudo-inverse square root.
pub fn psd_power(a: &ComplexMatrix, power: f64) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(a)?;
    let cut = eig_cutoff(a.rows);
    Ok(eig.apply_spectral(|l| if l > cut { l.powf(power) } else { 0.0 }))
}

/// Projector onto the support of a PSD matrix.
pub fn support_projector(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = hermitian_eig(a)?;
    let cut = eig_cutoff(a.rows);
    Ok(eig.apply_spectral(|l| if l > cut { 1.0 } else { 0.0 }))
}

/// Trace norm (sum of singular values).
///
/// Hermitian input takes the spectral route (sum of absolute eigenvalues);
/// general input falls back to the singular values of `A^dagger A`.
pub fn trace_norm(a: &ComplexMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "trace norm needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if a.is_hermitian(1e-10) {
        let eig = hermitian_eig(a)?;
        Ok(eig.values.iter().map(|l| l.abs()).sum())
    } else {
        let gram = a.dagger().matmul(a);
        let eig = hermitian_eig(&gram)?;
        Ok(eig.values.iter().map(|l| l.max(0.0).sqrt()).sum())
    }
}
