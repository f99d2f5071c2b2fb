//! Averaged Riemannian metric and its Levi-Civita data.
//!
//! The averaged metric integrates the Riemann–Finsler metric over the
//! indicatrix `∂K_p = {F = 1}` against its induced volume form `μ`. The
//! indicatrix is parametrized radially over the Euclidean unit sphere,
//! `y(u) = u / F(u)`, under which `μ` pulls back to
//! `√det g(u) · F(u)^{-n} dσ(u)` (`g` is 0-homogeneous, so `g(y(u)) = g(u)`).
//!
//! No normalization is applied: for the Euclidean plane `γ = 2π·I`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::metric::{ChartPoint, LocalMetric, MetricFamily, MetricJet};
use crate::quadrature::SphereQuadrature;

/// Connection coefficients `Γ^k_ij`, stored densely as `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y^j Γ^k_ij` as the matrix with entry `(k, i)`.
    pub fn contract_lower_second(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |k, i| (0..n).map(|j| y[j] * self.get(k, i, j)).sum())
    }
}

/// Settings for [`AveragedMetricData::compute`].
#[derive(Debug, Clone)]
pub struct AveragingConfig {
    pub quad: SphereQuadrature,
    /// Relative step for the fourth-order central differences of `γ`:
    /// `h = fd_step · (1 + |x_k|)`.
    pub fd_step: f64,
    /// Constant factor applied to `γ`; every downstream quantity is invariant
    /// under it, which the test suite exercises.
    pub gamma_scale: f64,
}

impl AveragingConfig {
    pub fn for_dim(dim: usize) -> Result<Self> {
        Ok(Self {
            quad: SphereQuadrature::default_for(dim)?,
            fd_step: 1e-3,
            gamma_scale: 1.0,
        })
    }

    pub fn with_nodes(dim: usize, nodes: usize) -> Result<Self> {
        Ok(Self {
            quad: SphereQuadrature::with_resolution(dim, nodes)?,
            ..Self::for_dim(dim)?
        })
    }
}

/// Averaged metric data at one chart point.
#[derive(Debug, Clone)]
pub struct AveragedMetricData {
    pub point: ChartPoint,
    pub gamma: DMatrix<f64>,
    pub gamma_inv: DMatrix<f64>,
    /// Columns form a γ-orthonormal basis `B` (`BᵀγB = I`), `B = γ^{-1/2}`.
    pub frame: DMatrix<f64>,
    pub frame_inv: DMatrix<f64>,
    pub christoffel_star: Christoffel,
}

impl AveragedMetricData {
    pub fn compute(family: &MetricFamily, p: &ChartPoint, cfg: &AveragingConfig) -> Result<Self> {
        if family.is_x_independent() {
            let gamma = averaged_metric(&family.at(p)?, &cfg.quad)? * cfg.gamma_scale;
            return Self::from_parts(p.clone(), gamma, Christoffel::zeros(family.dim()));
        }
        let (gamma, dgamma) = averaged_metric_derivatives(family, p, cfg)?;
        let christoffel_star = levi_civita(&gamma, &dgamma);
        Self::from_parts(p.clone(), gamma, christoffel_star)
    }

    pub fn from_parts(point: ChartPoint, gamma: DMatrix<f64>, christoffel_star: Christoffel) -> Result<Self> {
        let frame = orthonormal_frame(&gamma)?;
        let gamma_inv = gamma.clone().cholesky().ok_or(Error::NotSpd)?.inverse();
        let frame_inv = &frame * &gamma;
        Ok(Self {
            point,
            gamma,
            gamma_inv,
            frame,
            frame_inv,
            christoffel_star,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    /// Frame components `B⁻¹ y` of a chart vector.
    pub fn to_frame_vector(&self, y: &[f64]) -> DVector<f64> {
        &self.frame_inv * DVector::from_column_slice(y)
    }

    /// Chart components `B u` of a frame vector.
    pub fn to_chart_vector(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.frame * u
    }
}

/// `∫_{∂K_p} integrand · μ`, with the integrand evaluated at indicatrix points.
pub fn indicatrix_integral(
    local: &LocalMetric,
    quad: &SphereQuadrature,
    integrand: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    check_quad_dim(local, quad)?;
    let n = local.dim() as i32;
    let mut sum = 0.0;
    for (u, w) in quad.iter() {
        let jet = local.jet(u.as_slice())?;
        let y: Vec<f64> = u.iter().map(|c| c / jet.f).collect();
        sum += w * integrand(&y) * radial_weight(&jet, n);
    }
    Ok(sum)
}

fn check_quad_dim(local: &LocalMetric, quad: &SphereQuadrature) -> Result<()> {
    if quad.dim() != local.dim() {
        return Err(Error::DimensionMismatch {
            expected: local.dim(),
            found: quad.dim(),
        });
    }
    Ok(())
}

/// Pullback density `√det g(u) · F(u)^{-n}` of `μ` at a Euclidean unit vector.
fn radial_weight(jet: &MetricJet, n: i32) -> f64 {
    jet.g.determinant().sqrt() / jet.f.powi(n)
}

/// `γ_ij(p) = ∫_{∂K_p} g_ij μ`.
pub fn averaged_metric(local: &LocalMetric, quad: &SphereQuadrature) -> Result<DMatrix<f64>> {
    check_quad_dim(local, quad)?;
    let n = local.dim();
    let mut gamma = DMatrix::zeros(n, n);
    for (u, w) in quad.iter() {
        let jet = local.jet(u.as_slice())?;
        gamma += &jet.g * (w * radial_weight(&jet, n as i32));
    }
    // symmetric by construction up to rounding; make it exact
    let sym = (&gamma + gamma.transpose()) * 0.5;
    Ok(sym)
}

/// Symmetric inverse square root `γ^{-1/2}`, so that `BᵀγB = I`.
pub fn orthonormal_frame(gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !gamma.is_square() || (gamma - gamma.transpose()).amax() > 1e-12 * gamma.amax() {
        return Err(Error::NotSpd);
    }
    let eig = SymmetricEigen::new(gamma.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotSpd);
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let b = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    Ok((&b + b.transpose()) * 0.5)
}

/// Levi-Civita symbols of `γ` from fourth-order central differences of the
/// averaged metric.
pub fn christoffel_star(family: &MetricFamily, p: &ChartPoint, cfg: &AveragingConfig) -> Result<Christoffel> {
    if family.is_x_independent() {
        return Ok(Christoffel::zeros(family.dim()));
    }
    let (center, dgamma) = averaged_metric_derivatives(family, p, cfg)?;
    Ok(levi_civita(&center, &dgamma))
}

/// `γ(p)` and `∂_k γ(p)` by the fourth-order stencil
/// `(8(γ(p+h) − γ(p−h)) − (γ(p+2h) − γ(p−2h))) / 12h`, `h = fd_step·(1 + |x_k|)`.
pub fn averaged_metric_derivatives(
    family: &MetricFamily,
    p: &ChartPoint,
    cfg: &AveragingConfig,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let n = family.dim();
    let gamma_at = |x: Vec<f64>| -> Result<DMatrix<f64>> {
        if !family.domain().contains(&x) {
            return Err(Error::StencilOutOfDomain { point: x });
        }
        Ok(averaged_metric(&family.at(&ChartPoint::new(x))?, &cfg.quad)? * cfg.gamma_scale)
    };
    let center = gamma_at(p.coords.clone())?;
    if family.is_x_independent() {
        return Ok((center, vec![DMatrix::zeros(n, n); n]));
    }
    let mut dgamma = Vec::with_capacity(n);
    for k in 0..n {
        let h = cfg.fd_step * (1.0 + p.coords[k].abs());
        let shifted = |s: f64| {
            let mut x = p.coords.clone();
            x[k] += s * h;
            x
        };
        let (p2, p1, m1, m2) = (
            gamma_at(shifted(2.0))?,
            gamma_at(shifted(1.0))?,
            gamma_at(shifted(-1.0))?,
            gamma_at(shifted(-2.0))?,
        );
        dgamma.push((p1 - m1) * (8.0 / (12.0 * h)) - (p2 - m2) * (1.0 / (12.0 * h)));
    }
    Ok((center, dgamma))
}

/// `Γ^k_ij = ½ γ^{kl}(∂_i γ_jl + ∂_j γ_il − ∂_l γ_ij)` from `γ` and `∂_m γ`.
pub fn levi_civita(gamma: &DMatrix<f64>, dgamma: &[DMatrix<f64>]) -> Christoffel {
    let n = gamma.nrows();
    let inv = gamma.clone().try_inverse().expect("averaged metric is invertible");
    let mut out = Christoffel::zeros(n);
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                let v = 0.5
                    * (0..n)
                        .map(|l| inv[(k, l)] * (dgamma[i][(j, l)] + dgamma[j][(i, l)] - dgamma[l][(i, j)]))
                        .sum::<f64>();
                out.set(k, i, j, v);
                out.set(k, j, i, v);
            }
        }
    }
    out
}

/// `X_i^{h*}F(v) = ∂F/∂x^i − y^j Γ*^k_ij ∂F/∂y^k`.
pub fn horizontal_derivative(local: &LocalMetric, avg: &AveragedMetricData, y: &[f64]) -> Result<DVector<f64>> {
    let jet = local.jet(y)?;
    Ok(horizontal_derivative_from_jet(&jet, avg, y))
}

pub fn horizontal_derivative_from_jet(jet: &MetricJet, avg: &AveragedMetricData, y: &[f64]) -> DVector<f64> {
    let yg = avg.christoffel_star.contract_lower_second(y);
    &jet.dfdx - yg.transpose() * &jet.dfdy
}

/// `F*(v) = √γ_p(v, v)`.
pub fn averaged_norm(avg: &AveragedMetricData, v: &[f64]) -> f64 {
    let y = DVector::from_column_slice(v);
    y.dot(&(&avg.gamma * &y)).sqrt()
}
