//! Complex third-order tensors and the matrix products CP-ALS is built from.
//!
//! Layout: element `(n, m, t)` of an `N × M × T` tensor sits at row `m·N + n`,
//! column `t` of the stacked `MN × T` matrix (0-based). The unfoldings are
//! ordered so that for `𝓨 = ⟦A, B, Sᵀ⟧`:
//!
//! ```text
//! Y(1) = A (Sᵀ ⊙ B)ᵀ    N × MT, column t·M + m
//! Y(2) = B (Sᵀ ⊙ A)ᵀ    M × NT, column t·N + n
//! Y(3) = Sᵀ (B ⊙ A)ᵀ    T × MN, column m·N + n
//! ```
//!
//! where `X ⊙ Y` is the column-wise Khatri-Rao product with row `i·J + j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor3 {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

impl ComplexTensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut out = Self::zeros(dims);
        for t in 0..dims.2 {
            for m in 0..dims.1 {
                for n in 0..dims.0 {
                    let i = out.offset(n, m, t);
                    out.data[i] = f(n, m, t);
                }
            }
        }
        out
    }

    /// Builds the tensor from the stacked `MN × T` matrix `[Y_1; …; Y_M]`.
    pub fn from_stacked(stacked: &DMatrix<Complex64>, n: usize, m: usize) -> Result<Self> {
        if stacked.nrows() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "stacked matrix has {} rows, expected N*M = {}",
                stacked.nrows(),
                n * m
            )));
        }
        let t = stacked.ncols();
        Ok(Self::from_fn((n, m, t), |i, j, k| stacked[(j * n + i, k)]))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    fn offset(&self, n: usize, m: usize, t: usize) -> usize {
        let (nn, mm, _) = self.dims;
        n + nn * (m + mm * t)
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize, t: usize) -> Complex64 {
        self.data[self.offset(n, m, t)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, m: usize, t: usize, value: Complex64) {
        let i = self.offset(n, m, t);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, c: Complex64) {
        self.data.iter_mut().for_each(|z| *z *= c);
    }

    /// `‖self − other‖_F`; panics on shape mismatch.
    pub fn distance(&self, other: &ComplexTensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "tensor shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Rotation slice `Y_m` as an `N × T` matrix.
    pub fn rotation_slice(&self, m: usize) -> DMatrix<Complex64> {
        let (n, _, t) = self.dims;
        DMatrix::from_fn(n, t, |i, k| self.get(i, m, k))
    }

    /// The stacked `MN × T` matrix.
    pub fn stacked(&self) -> DMatrix<Complex64> {
        let (n, m, t) = self.dims;
        DMatrix::from_column_slice(n * m, t, &self.data)
    }
}

impl std::ops::Add<&ComplexTensor3> for ComplexTensor3 {
    type Output = ComplexTensor3;

    fn add(mut self, rhs: &ComplexTensor3) -> ComplexTensor3 {
        assert_eq!(self.dims, rhs.dims, "tensor shape mismatch");
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a += b);
        self
    }
}

/// Mode-`mode` unfolding (`mode ∈ {1, 2, 3}`), column order as in the module docs.
pub fn unfold(tensor: &ComplexTensor3, mode: usize) -> Result<DMatrix<Complex64>> {
    let (n, m, t) = tensor.dims();
    let out = match mode {
        1 => DMatrix::from_fn(n, m * t, |i, c| tensor.get(i, c % m, c / m)),
        2 => DMatrix::from_fn(m, n * t, |j, c| tensor.get(c % n, j, c / n)),
        3 => DMatrix::from_fn(t, m * n, |k, c| tensor.get(c % n, c / n, k)),
        other => return Err(Error::InvalidMode(other)),
    };
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(
    matrix: &DMatrix<Complex64>,
    mode: usize,
    dims: (usize, usize, usize),
) -> Result<ComplexTensor3> {
    let (n, m, t) = dims;
    let expected = match mode {
        1 => (n, m * t),
        2 => (m, n * t),
        3 => (t, m * n),
        other => return Err(Error::InvalidMode(other)),
    };
    if matrix.shape() != expected {
        return Err(Error::DimensionMismatch(format!(
            "mode-{mode} unfolding of {dims:?} must be {expected:?}, got {:?}",
            matrix.shape()
        )));
    }
    Ok(ComplexTensor3::from_fn(dims, |i, j, k| match mode {
        1 => matrix[(i, k * m + j)],
        2 => matrix[(j, k * n + i)],
        _ => matrix[(k, j * n + i)],
    }))
}

/// Column-wise Kronecker product: column `k` is `x_k ⊗ y_k`.
pub fn khatri_rao(x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Khatri-Rao needs equal column counts, got {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let j = y.nrows();
    Ok(DMatrix::from_fn(x.nrows() * j, x.ncols(), |r, k| {
        x[(r / j, k)] * y[(r % j, k)]
    }))
}

/// Standard Kronecker product of two vectors (`x` index varies slowest).
pub fn kronecker_vec(x: &[Complex64], y: &[Complex64]) -> DVector<Complex64> {
    DVector::from_iterator(
        x.len() * y.len(),
        x.iter().flat_map(|a| y.iter().map(move |b| a * b)),
    )
}
