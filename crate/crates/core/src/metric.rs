//! Finsler metric families on a single coordinate chart and their pointwise jets.
//!
//! A [`MetricFamily`] is evaluated in two stages: [`MetricFamily::at`] resolves
//! the coefficient fields (and their exact `x`-gradients) at a chart point, and
//! [`LocalMetric::jet`] then evaluates `F`, `∂F/∂y`, `∂F/∂x` and the
//! Riemann–Finsler metric `g = ∂²(F²/2)/∂y∂y` for any nonzero direction. The
//! split keeps direction scans over one tangent space cheap.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::averaging::Christoffel;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::torsion::{FrameTag, TorsionTensor};

/// Smallest admissible ratio between the extreme eigenvalues of `g`.
pub const CONVEXITY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Self { coords: coords.into() }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub comps: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: ChartPoint, comps: impl Into<Vec<f64>>) -> Self {
        Self {
            base,
            comps: comps.into(),
        }
    }
}

/// Value and first/second derivative data of `F` at one tangent vector.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub f: f64,
    pub dfdy: DVector<f64>,
    pub dfdx: DVector<f64>,
    pub g: DMatrix<f64>,
}

/// Axis-aligned box in chart coordinates; unbounded by default.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ChartDomain {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|v| v.is_infinite()) && self.upper.iter().all(|v| v.is_infinite())
    }
}

/// Square matrix of coefficient expressions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    dim: usize,
    entries: Vec<Expr>,
}

impl MatrixField {
    pub fn new(dim: usize, entries: Vec<Expr>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let entries = (0..dim * dim)
            .map(|k| Expr::constant(m[(k / dim, k % dim)]))
            .collect();
        Self { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(&DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> &Expr {
        &self.entries[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, e: Expr) {
        self.entries[row * self.dim + col] = e;
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(x))
    }

    /// Value and the partial derivatives `∂_k M` for each coordinate `k`.
    pub fn eval_grad(&self, x: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let n = self.dim;
        let mut value = DMatrix::zeros(n, n);
        let mut grads = vec![DMatrix::zeros(n, n); x.len()];
        for i in 0..n {
            for j in 0..n {
                let (v, g) = self.entry(i, j).eval_grad(x);
                value[(i, j)] = v;
                for (k, gk) in g.into_iter().enumerate() {
                    grads[k][(i, j)] = gk;
                }
            }
        }
        (value, grads)
    }

    fn depends_on_x(&self) -> bool {
        self.entries.iter().any(Expr::depends_on_x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    entries: Vec<Expr>,
}

impl VectorField {
    pub fn new(entries: Vec<Expr>) -> Self {
        Self { entries }
    }

    pub fn constant(v: &[f64]) -> Self {
        Self {
            entries: v.iter().map(|&c| Expr::constant(c)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, i: usize) -> &Expr {
        &self.entries[i]
    }

    pub fn eval_grad(&self, x: &[f64]) -> (DVector<f64>, Vec<DVector<f64>>) {
        let n = self.entries.len();
        let mut value = DVector::zeros(n);
        let mut grads = vec![DVector::zeros(n); x.len()];
        for (i, e) in self.entries.iter().enumerate() {
            let (v, g) = e.eval_grad(x);
            value[i] = v;
            for (k, gk) in g.into_iter().enumerate() {
                grads[k][i] = gk;
            }
        }
        (value, grads)
    }

    fn depends_on_x(&self) -> bool {
        self.entries.iter().any(Expr::depends_on_x)
    }
}

/// Minkowski norm `F₀(z) = √(zᵀAz) + b·z` on frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MinkowskiNorm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl MinkowskiNorm {
    pub fn randers(b: &[f64]) -> Self {
        let n = b.len();
        Self {
            a: DMatrix::identity(n, n),
            b: DVector::from_column_slice(b),
        }
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        (z.dot(&(&self.a * z))).sqrt() + self.b.dot(z)
    }

    fn validate(&self) -> Result<()> {
        let a_inv = spd_inverse(&self.a)
            .ok_or_else(|| Error::InvalidMetric("Minkowski quadratic part is not positive definite".into()))?;
        if self.b.dot(&(&a_inv * &self.b)) >= 1.0 {
            return Err(Error::InvalidMetric("Minkowski linear part has norm >= 1".into()));
        }
        Ok(())
    }
}

/// Finite-difference steps used by [`MetricFamily::numeric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    /// Relative step for `∂F/∂y` (scaled by `|y|`).
    pub y: f64,
    /// Relative step for `∂F/∂x` (scaled by `1 + |x_k|`).
    pub x: f64,
    /// Relative step for the second differences of `F²/2`.
    pub hessian: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            y: 1e-6,
            x: 1e-6,
            hessian: 1e-4,
        }
    }
}

pub type MetricFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct NumericMetric {
    pub f: MetricFn,
    pub steps: FdSteps,
}

impl fmt::Debug for NumericMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericMetric").field("steps", &self.steps).finish()
    }
}

#[derive(Debug, Clone)]
pub enum FamilyKind {
    Riemannian { a: MatrixField },
    Randers { a: MatrixField, b: VectorField },
    /// `F(x, y) = F₀(E(x)⁻¹ y)`; column `i` of the matrix is the frame vector `E_i`.
    FrameMinkowski { frame: MatrixField, norm: MinkowskiNorm },
    Numeric(NumericMetric),
}

/// A Finsler metric on one chart of `ℝⁿ`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MetricFamily {
    kind: FamilyKind,
    dim: usize,
    domain: ChartDomain,
}

impl MetricFamily {
    pub fn riemannian(a: MatrixField) -> Result<Self> {
        let dim = a.dim();
        Self::build(FamilyKind::Riemannian { a }, dim)
    }

    pub fn randers(a: MatrixField, b: VectorField) -> Result<Self> {
        let dim = a.dim();
        if b.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: b.dim(),
            });
        }
        Self::build(FamilyKind::Randers { a, b }, dim)
    }

    pub fn frame_minkowski(frame: MatrixField, norm: MinkowskiNorm) -> Result<Self> {
        let dim = frame.dim();
        if norm.a.nrows() != dim || norm.a.ncols() != dim || norm.b.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: norm.b.len(),
            });
        }
        norm.validate()?;
        Self::build(FamilyKind::FrameMinkowski { frame, norm }, dim)
    }

    pub fn numeric(dim: usize, f: MetricFn, steps: FdSteps) -> Result<Self> {
        Self::build(FamilyKind::Numeric(NumericMetric { f, steps }), dim)
    }

    fn build(kind: FamilyKind, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(Self {
            kind,
            dim,
            domain: ChartDomain::unbounded(dim),
        })
    }

    pub fn with_domain(mut self, domain: ChartDomain) -> Result<Self> {
        if domain.lower.len() != self.dim || domain.upper.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: domain.lower.len(),
            });
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Riemannian { .. } => "riemannian",
            FamilyKind::Randers { .. } => "randers",
            FamilyKind::FrameMinkowski { .. } => "frame_minkowski",
            FamilyKind::Numeric(_) => "numeric",
        }
    }

    /// True when no coefficient depends on the chart coordinates.
    pub fn is_x_independent(&self) -> bool {
        match &self.kind {
            FamilyKind::Riemannian { a } => !a.depends_on_x(),
            FamilyKind::Randers { a, b } => !a.depends_on_x() && !b.depends_on_x(),
            FamilyKind::FrameMinkowski { frame, .. } => !frame.depends_on_x(),
            FamilyKind::Numeric(_) => false,
        }
    }

    /// Resolves the coefficient fields at `p`.
    pub fn at(&self, p: &ChartPoint) -> Result<LocalMetric> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.dim(),
            });
        }
        if !p.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidMetric(format!("non-finite chart point {:?}", p.coords)));
        }
        let x = p.coords.as_slice();
        let data = match &self.kind {
            FamilyKind::Riemannian { a } => {
                let (a, da) = a.eval_grad(x);
                check_spd(&a, "Riemannian coefficient matrix")?;
                LocalData::Quadratic { a, da, b: None }
            }
            FamilyKind::Randers { a, b } => {
                let (a, da) = a.eval_grad(x);
                let (bv, db) = b.eval_grad(x);
                let a_inv = check_spd(&a, "Randers quadratic part")?;
                let bnorm = bv.dot(&(&a_inv * &bv)).sqrt();
                if bnorm >= 1.0 {
                    return Err(Error::InvalidMetric(format!(
                        "Randers 1-form has a-norm {bnorm} >= 1 at {x:?}"
                    )));
                }
                LocalData::Quadratic {
                    a,
                    da,
                    b: Some((bv, db)),
                }
            }
            FamilyKind::FrameMinkowski { frame, norm } => {
                let (e, de) = frame.eval_grad(x);
                let e_inv = e
                    .clone()
                    .try_inverse()
                    .filter(|inv| inv.iter().all(|v| v.is_finite()) && e.determinant().abs() > 1e-300)
                    .ok_or_else(|| Error::InvalidMetric(format!("frame matrix is singular at {x:?}")))?;
                LocalData::Frame {
                    e,
                    e_inv,
                    de,
                    norm: norm.clone(),
                }
            }
            FamilyKind::Numeric(m) => LocalData::Numeric(m.clone()),
        };
        Ok(LocalMetric {
            x: x.to_vec(),
            data,
        })
    }
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
    if !sym {
        return None;
    }
    m.clone().cholesky().map(|c| c.inverse())
}

fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    spd_inverse(m).ok_or_else(|| Error::InvalidMetric(format!("{what} is not symmetric positive definite")))
}

#[derive(Debug, Clone)]
enum LocalData {
    Quadratic {
        a: DMatrix<f64>,
        da: Vec<DMatrix<f64>>,
        b: Option<(DVector<f64>, Vec<DVector<f64>>)>,
    },
    Frame {
        e: DMatrix<f64>,
        e_inv: DMatrix<f64>,
        de: Vec<DMatrix<f64>>,
        norm: MinkowskiNorm,
    },
    Numeric(NumericMetric),
}

/// A metric family with its coefficients resolved at one chart point.
#[derive(Debug, Clone)]
pub struct LocalMetric {
    x: Vec<f64>,
    data: LocalData,
}

/// `(F, ∂F/∂y, ∂²E/∂y∂y)` of `√(yᵀAy) + b·y`.
fn randers_parts(a: &DMatrix<f64>, b: Option<&DVector<f64>>, y: &DVector<f64>) -> (f64, f64, DVector<f64>, DMatrix<f64>) {
    let ay = a * y;
    let alpha = y.dot(&ay).sqrt();
    let a_tilde = ay / alpha;
    match b {
        None => (alpha, alpha, a_tilde, a.clone()),
        Some(b) => {
            let f = alpha + b.dot(y);
            let l = &a_tilde + b;
            let g = (a - &a_tilde * a_tilde.transpose()) * (f / alpha) + &l * l.transpose();
            (f, alpha, l, g)
        }
    }
}

impl LocalMetric {
    pub fn point(&self) -> ChartPoint {
        ChartPoint::new(self.x.clone())
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `F(x, y)` alone.
    pub fn value(&self, y: &[f64]) -> f64 {
        let yv = DVector::from_column_slice(y);
        match &self.data {
            LocalData::Quadratic { a, b, .. } => {
                let alpha = yv.dot(&(a * &yv)).sqrt();
                alpha + b.as_ref().map_or(0.0, |(b, _)| b.dot(&yv))
            }
            LocalData::Frame { e_inv, norm, .. } => norm.value(&(e_inv * &yv)),
            LocalData::Numeric(m) => (m.f)(&self.x, y),
        }
    }

    /// Frame matrix at this point (FrameMinkowski only).
    pub fn frame_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.data {
            LocalData::Frame { e, .. } => Some(e),
            _ => None,
        }
    }

    pub fn jet(&self, y: &[f64]) -> Result<MetricJet> {
        let n = self.dim();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if y.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroVector);
        }
        let yv = DVector::from_column_slice(y);
        let jet = match &self.data {
            LocalData::Quadratic { a, da, b } => {
                let (f, alpha, dfdy, g) = randers_parts(a, b.as_ref().map(|(b, _)| b), &yv);
                let dfdx = DVector::from_fn(n, |k, _| {
                    let quad = yv.dot(&(&da[k] * &yv)) / (2.0 * alpha);
                    quad + b.as_ref().map_or(0.0, |(_, db)| db[k].dot(&yv))
                });
                MetricJet { f, dfdy, dfdx, g }
            }
            LocalData::Frame { e_inv, de, norm, .. } => {
                let z = e_inv * &yv;
                let (f, _, grad0, g0) = randers_parts(&norm.a, Some(&norm.b), &z);
                let e_inv_t = e_inv.transpose();
                let dfdy = &e_inv_t * &grad0;
                // the congruence loses symmetry at round-off level; restore it exactly
                let g = &e_inv_t * g0 * e_inv;
                let g = (&g + g.transpose()) * 0.5;
                // ∂z/∂x_k = -E⁻¹ (∂_k E) z
                let dfdx = DVector::from_fn(n, |k, _| -grad0.dot(&(e_inv * (&de[k] * &z))));
                MetricJet { f, dfdy, dfdx, g }
            }
            LocalData::Numeric(m) => numeric_jet(m, &self.x, y),
        };
        if !(jet.f > 0.0) || !jet.f.is_finite() {
            return Err(Error::NonConvex {
                min_eig: f64::NAN,
                max_eig: f64::NAN,
            });
        }
        check_convex(&jet.g)?;
        Ok(jet)
    }
}

fn check_convex(g: &DMatrix<f64>) -> Result<()> {
    // λ_max ≤ tr g, so positive definiteness of g − floor·tr(g)·I implies the floor
    let n = g.nrows();
    let shifted = g - DMatrix::identity(n, n) * (CONVEXITY_FLOOR * g.trace());
    if g.trace() > 0.0 && shifted.cholesky().is_some() {
        return Ok(());
    }
    let eig = SymmetricEigen::new(g.clone()).eigenvalues;
    let max_eig = eig.max();
    let min_eig = eig.min();
    if !(max_eig > 0.0) || min_eig < CONVEXITY_FLOOR * max_eig || !min_eig.is_finite() {
        return Err(Error::NonConvex { min_eig, max_eig });
    }
    Ok(())
}

fn numeric_jet(m: &NumericMetric, x: &[f64], y: &[f64]) -> MetricJet {
    let n = y.len();
    let f = |xx: &[f64], yy: &[f64]| (m.f)(xx, yy);
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let shifted = |base: &[f64], k: usize, h: f64| {
        let mut v = base.to_vec();
        v[k] += h;
        v
    };
    let f0 = f(x, y);
    let hy = m.steps.y * ynorm;
    let dfdy = DVector::from_fn(n, |k, _| (f(x, &shifted(y, k, hy)) - f(x, &shifted(y, k, -hy))) / (2.0 * hy));
    let dfdx = DVector::from_fn(n, |k, _| {
        let hx = m.steps.x * (1.0 + x[k].abs());
        (f(&shifted(x, k, hx), y) - f(&shifted(x, k, -hx), y)) / (2.0 * hx)
    });
    let energy = |yy: &[f64]| 0.5 * f(x, yy).powi(2);
    let h = m.steps.hessian * ynorm;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut pp = y.to_vec();
            let mut pm = y.to_vec();
            let mut mp = y.to_vec();
            let mut mm = y.to_vec();
            pp[i] += h;
            pp[j] += h;
            pm[i] += h;
            pm[j] -= h;
            mp[i] -= h;
            mp[j] += h;
            mm[i] -= h;
            mm[j] -= h;
            let v = (energy(&pp) - energy(&pm) - energy(&mp) + energy(&mm)) / (4.0 * h * h);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    MetricJet {
        f: f0,
        dfdy,
        dfdx,
        g,
    }
}

/// Evaluates the jet of `family` at the tangent vector `v`.
pub fn eval_jet(family: &MetricFamily, v: &TangentVector) -> Result<MetricJet> {
    family.at(&v.base)?.jet(&v.comps)
}

/// Homogeneity defect of `F` at `v`: the larger of the Euler-identity residual
/// `|yⁱ ∂F/∂yⁱ − F| / F` and the scaling residual `|F(2v) − 2F(v)| / F(v)`.
pub fn check_homogeneity(family: &MetricFamily, v: &TangentVector) -> Result<f64> {
    let local = family.at(&v.base)?;
    let jet = local.jet(&v.comps)?;
    let euler = (jet.dfdy.iter().zip(&v.comps).map(|(d, y)| d * y).sum::<f64>() - jet.f).abs() / jet.f;
    let doubled: Vec<f64> = v.comps.iter().map(|c| 2.0 * c).collect();
    let scaling = (local.value(&doubled) - 2.0 * jet.f).abs() / jet.f;
    Ok(euler.max(scaling))
}

/// Coefficients `Γ^l_ab = −(∂_a E · E⁻¹)^l_b` of the connection that makes the
/// frame of a FrameMinkowski family parallel (`∇E_j = 0`).
pub fn frame_parallel_connection(family: &MetricFamily, p: &ChartPoint) -> Result<Christoffel> {
    let FamilyKind::FrameMinkowski { frame, .. } = family.kind() else {
        return Err(Error::WrongFamily {
            expected: "frame_minkowski",
        });
    };
    let n = family.dim();
    let (e, de) = frame.eval_grad(&p.coords);
    let e_inv = e
        .try_inverse()
        .ok_or_else(|| Error::InvalidMetric("frame matrix is singular".into()))?;
    let mut conn = Christoffel::zeros(n);
    for (a, d) in de.iter().enumerate() {
        let m = -(d * &e_inv);
        for l in 0..n {
            for b in 0..n {
                conn.set(l, a, b, m[(l, b)]);
            }
        }
    }
    Ok(conn)
}

/// Torsion `T^l_ab = Γ^l_ab − Γ^l_ba`, in chart components, of
/// [`frame_parallel_connection`].
pub fn frame_ground_truth_torsion(family: &MetricFamily, p: &ChartPoint) -> Result<TorsionTensor> {
    let conn = frame_parallel_connection(family, p)?;
    let n = family.dim();
    let mut t = TorsionTensor::zeros(n, FrameTag::Chart);
    for a in 0..n {
        for b in (a + 1)..n {
            for l in 0..n {
                t.set(a, b, l, conn.get(l, a, b) - conn.get(l, b, a));
            }
        }
    }
    Ok(t)
}
