//! Rank-revealing solves used by the torsion solver.
//!
//! Singular value decompositions go through `faer`: nalgebra's bidiagonal
//! iteration can return factors that do not reproduce rank-deficient inputs,
//! and every system here is rank-deficient by construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for every rank decision.
pub const RCOND: f64 = 1e-12;

/// `A = U diag(s) Vᵀ`. Thin unless built with [`Svd::full`].
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    /// `U` is `m × k`, `V` is `n × k` with `k = min(m, n)`.
    pub fn thin(a: &DMatrix<f64>) -> Result<Self> {
        let m = to_faer(a);
        let svd = m.thin_svd().map_err(|_| Error::SvdNoConvergence)?;
        Ok(Self::from_parts(svd.U(), svd.S().column_vector(), svd.V()))
    }

    /// `V` is square, so its trailing columns span the null space.
    pub fn full(a: &DMatrix<f64>) -> Result<Self> {
        let m = to_faer(a);
        let svd = m.svd().map_err(|_| Error::SvdNoConvergence)?;
        Ok(Self::from_parts(svd.U(), svd.S().column_vector(), svd.V()))
    }

    fn from_parts(u: faer::MatRef<'_, f64>, s: faer::ColRef<'_, f64>, v: faer::MatRef<'_, f64>) -> Self {
        Self {
            u: from_faer(u),
            s: DVector::from_fn(s.nrows(), |i, _| s[i]),
            v: from_faer(v),
        }
    }

    pub fn max_singular_value(&self) -> f64 {
        self.s.iter().fold(0.0, |m, &v| m.max(v))
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

#[derive(Debug, Clone)]
pub struct MinNormSolution {
    pub x: DVector<f64>,
    pub rank: usize,
    /// Euclidean norm of `A x − b`.
    pub residual: f64,
}

/// Minimum-norm least-squares solution of `A x = b` by truncated SVD.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Result<MinNormSolution> {
    let ncols = a.ncols();
    if a.nrows() == 0 || ncols == 0 {
        return Ok(MinNormSolution {
            x: DVector::zeros(ncols),
            rank: 0,
            residual: b.norm(),
        });
    }
    let svd = Svd::thin(a)?;
    let cutoff = rcond * svd.max_singular_value();
    let mut x = DVector::zeros(ncols);
    let mut rank = 0;
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            x += svd.v.column(k) * (svd.u.column(k).dot(b) / s);
        }
    }
    let residual = (a * &x - b).norm();
    Ok(MinNormSolution { x, rank, residual })
}

/// Orthonormal basis of `{x : A x = 0}`, deciding rank at `rcond · σ_max`.
pub fn null_space(a: &DMatrix<f64>, rcond: f64) -> Result<Vec<DVector<f64>>> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok((0..n).map(|k| DVector::from_fn(n, |i, _| f64::from(u8::from(i == k)))).collect());
    }
    let svd = Svd::full(a)?;
    let cutoff = rcond * svd.max_singular_value();
    let rank = svd.s.iter().filter(|&&s| s > cutoff).count();
    // faer orders singular values decreasingly
    Ok((rank..n).map(|k| svd.v.column(k).into_owned()).collect())
}

/// Minimum-norm solution of the symmetric system `G λ = r` through the
/// eigendecomposition of `G`, discarding eigenvalues below `rcond · λ_max`.
pub fn gram_solve(gram: &DMatrix<f64>, r: &DVector<f64>, rcond: f64) -> (DVector<f64>, usize) {
    let eig = SymmetricEigen::new(gram.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut lambda = DVector::zeros(r.len());
    let mut rank = 0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > rcond * lmax && l > 0.0 {
            rank += 1;
            let q = eig.eigenvectors.column(k);
            lambda += q * (q.dot(r) / l);
        }
    }
    (lambda, rank)
}
