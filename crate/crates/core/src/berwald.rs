//! Grid-level decision procedure: per-point extremal torsion, connection
//! reconstruction, parallel-transport validation and the global verdict.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::averaging::{averaged_metric_derivatives, AveragedMetricData, AveragingConfig, Christoffel};
use crate::error::{Error, Result};
use crate::metric::{ChartPoint, LocalMetric, MetricFamily};
use crate::torsion::extremal::{classify_blocks, extremal_from_blocks, lattice, PointBlocks};
use crate::torsion::{
    extremal_torsion, is_horizontal_contact, oracle_min_norm, ChainDiagnostics, DirectionPools, PoolSpec, Route,
    Tolerances, TorsionTensor,
};

/// Regular grid on a coordinate box with `resolution` points per axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if resolution < 2 {
            return Err(Error::InvalidMetric(format!("grid resolution {resolution} < 2")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidMetric("grid box has an empty side".into()));
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    /// `[0, 1]ⁿ`.
    pub fn unit_box(dim: usize, resolution: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim], resolution)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.resolution - 1) as f64
    }

    /// Multi-index of point `k`; the first axis varies slowest.
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for slot in idx.iter_mut().rev() {
            *slot = k % self.resolution;
            k /= self.resolution;
        }
        idx
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.resolution + i)
    }

    pub fn point(&self, k: usize) -> ChartPoint {
        let idx = self.multi_index(k);
        ChartPoint::new(
            idx.iter()
                .enumerate()
                .map(|(a, &i)| self.lower[a] + i as f64 * self.spacing(a))
                .collect::<Vec<_>>(),
        )
    }

    pub fn points(&self) -> Vec<ChartPoint> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Pairs of points one step apart along an axis.
    pub fn neighbors(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.len() {
            let idx = self.multi_index(k);
            for a in 0..self.dim() {
                if idx[a] + 1 < self.resolution {
                    let mut next = idx.clone();
                    next[a] += 1;
                    out.push((k, self.flat_index(&next)));
                }
            }
        }
        out
    }

    /// Grid with halved spacing, containing every point of `self`.
    pub fn refined(&self) -> Self {
        Self {
            resolution: 2 * self.resolution - 1,
            ..self.clone()
        }
    }
}

/// Settings of the transport check along grid edges.
#[derive(Debug, Clone, Serialize)]
pub struct TransportConfig {
    pub steps_per_unit: usize,
    /// Initial vectors per edge, equispaced in the γ-orthonormal frame.
    pub directions: usize,
    /// Quadrature resolution used for the connection along the edges.
    pub quad_nodes: usize,
    pub pools: PoolSpec,
}

impl TransportConfig {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            steps_per_unit: 1000,
            directions: 4,
            quad_nodes: if dim == 2 { 64 } else { 16 },
            pools: PoolSpec {
                selection: if dim == 2 { 90 } else { 200 },
                random: 0,
                validation: 16,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecideConfig {
    pub averaging: AveragingConfig,
    pub pools: PoolSpec,
    pub tols: Tolerances,
    pub transport: Option<TransportConfig>,
}

impl DecideConfig {
    pub fn for_dim(dim: usize) -> Result<Self> {
        Ok(Self {
            averaging: AveragingConfig::for_dim(dim)?,
            pools: PoolSpec::for_dim(dim),
            tols: Tolerances::default(),
            transport: Some(TransportConfig::for_dim(dim)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Passed,
    Failed,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalVerdict {
    Riemannian,
    ClassicalBerwald,
    GeneralizedBerwald,
    NotGeneralizedBerwald,
    Inconclusive,
}

impl GlobalVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Riemannian => "riemannian",
            Self::ClassicalBerwald => "classical_berwald",
            Self::GeneralizedBerwald => "generalized_berwald",
            Self::NotGeneralizedBerwald => "not_generalized_berwald",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointVerdict {
    pub p: Vec<f64>,
    pub route: Route,
    pub status: PointStatus,
    /// `T^c_ab` in chart components, `a < b`, flat index `pair·n + c`.
    pub torsion_chart: Vec<f64>,
    pub torsion_frame: Vec<f64>,
    /// Norm of the torsion in the γ-orthonormal frame.
    pub torsion_norm: f64,
    /// Largest relative compatibility residual over both pools.
    pub residual_max: f64,
    /// Largest relative residual of the stacked least-squares solution.
    pub ls_residual: f64,
    /// The same after one pool refinement; computed only above the trigger.
    pub ls_residual_refined: Option<f64>,
    /// `‖T_a − T_b‖_∞ / max(1, ‖T_a‖_∞)` between runs on disjoint selection pools.
    pub pool_agreement: f64,
    /// Sampled vertical contact directions that are not horizontal contact.
    pub contact_violations: usize,
    /// `(max − min) / max` of `F/F*` over the pools, for vertical contact points.
    pub norm_ratio_spread: Option<f64>,
    pub chain_diag: ChainDiagnostics,
    pub alternate_diag: ChainDiagnostics,
}

impl PointVerdict {
    pub fn torsion_chart_tensor(&self) -> TorsionTensor {
        TorsionTensor::from_comps(self.p.len(), self.torsion_chart.clone(), crate::torsion::FrameTag::Chart)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub global: GlobalVerdict,
    pub verdicts: Vec<PointVerdict>,
    pub tolerances: Tolerances,
    pub pools: PoolSpec,
    pub grid: GridSpec,
    pub continuity: f64,
    pub residual_max: f64,
    pub torsion_max: f64,
    pub transport_drift: Option<f64>,
    pub failed_points: usize,
    pub marginal_points: usize,
}

/// Classification of one tangent space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentClass {
    pub route: Route,
    pub norm_ratio_spread: Option<f64>,
}

/// Routes the tangent space at `local` by its sampled contact structure; at
/// vertical contact points also measures how far `F/F*` is from constant.
pub fn classify_tangent_space(
    local: &LocalMetric,
    avg: &AveragedMetricData,
    pools: &DirectionPools,
    tols: &Tolerances,
) -> Result<TangentClass> {
    let blocks = PointBlocks::assemble(local, avg, pools)?;
    Ok(classify_point_blocks(&blocks, tols))
}

fn classify_point_blocks(blocks: &PointBlocks, tols: &Tolerances) -> TangentClass {
    let route = classify_blocks(blocks, tols).route;
    // pool directions are F*-unit, so F(v)/F*(v) = F(v)
    let norm_ratio_spread = (route == Route::VerticalContact).then(|| {
        let (lo, hi) = blocks
            .all()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), b| (lo.min(b.f), hi.max(b.f)));
        (hi - lo) / hi
    });
    TangentClass {
        route,
        norm_ratio_spread,
    }
}

/// `Γ^r_ij = Γ*^r_ij − ½(T^l_jk γ^{kr} γ_il + T^l_ik γ^{kr} γ_jl − T^r_ij)`; its
/// antisymmetric part `Γ^r_ij − Γ^r_ji` is `T^r_ij` and it is γ-metrical.
pub fn reconstruct_connection(avg: &AveragedMetricData, t_chart: &TorsionTensor) -> Christoffel {
    let n = avg.dim();
    let g = &avg.gamma;
    let gi = &avg.gamma_inv;
    // lowered[i][j][r] = T^l_ik γ_jl γ^{kr}
    let mut mixed = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for r in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    for k in 0..n {
                        acc += t_chart.get(i, k, l) * g[(j, l)] * gi[(k, r)];
                    }
                }
                mixed[(i * n + j) * n + r] = acc;
            }
        }
    }
    let mut out = avg.christoffel_star.clone();
    for r in 0..n {
        for i in 0..n {
            for j in 0..n {
                let corr = mixed[(j * n + i) * n + r] + mixed[(i * n + j) * n + r] - t_chart.get(i, j, r);
                out.set(r, i, j, out.get(r, i, j) - 0.5 * corr);
            }
        }
    }
    out
}

/// `‖∂F/∂x^i − y^j Γ^k_ij ∂F/∂y^k‖_∞ / F` at the chart vector `y`.
pub fn connection_residual(local: &LocalMetric, conn: &Christoffel, y: &[f64]) -> Result<f64> {
    let jet = local.jet(y)?;
    let r = &jet.dfdx - conn.contract_lower_second(y).transpose() * &jet.dfdy;
    Ok(r.amax() / jet.f)
}

/// `max |∂_k γ_ij − Γ^l_ki γ_lj − Γ^l_kj γ_il| / max|γ|` with `∂γ` by finite differences.
pub fn metricity_residual(
    family: &MetricFamily,
    p: &ChartPoint,
    conn: &Christoffel,
    cfg: &AveragingConfig,
) -> Result<f64> {
    let (gamma, dgamma) = averaged_metric_derivatives(family, p, cfg)?;
    let n = family.dim();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = dgamma[k][(i, j)];
                for l in 0..n {
                    v -= conn.get(l, k, i) * gamma[(l, j)] + conn.get(l, k, j) * gamma[(i, l)];
                }
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst / gamma.amax())
}

/// A field of connection coefficients on the chart.
pub trait ConnectionField: Sync {
    fn christoffel(&self, x: &ChartPoint) -> Result<Christoffel>;
}

impl<F> ConnectionField for F
where
    F: Fn(&ChartPoint) -> Result<Christoffel> + Sync,
{
    fn christoffel(&self, x: &ChartPoint) -> Result<Christoffel> {
        self(x)
    }
}

/// Levi-Civita connection of the averaged metric.
pub struct LeviCivitaConnection<'a> {
    pub family: &'a MetricFamily,
    pub averaging: AveragingConfig,
}

impl ConnectionField for LeviCivitaConnection<'_> {
    fn christoffel(&self, x: &ChartPoint) -> Result<Christoffel> {
        crate::averaging::christoffel_star(self.family, x, &self.averaging)
    }
}

/// Connection reconstructed from the extremal torsion at every point.
pub struct ExtremalConnection<'a> {
    pub family: &'a MetricFamily,
    pub averaging: AveragingConfig,
    pub pools: DirectionPools,
    pub tols: Tolerances,
}

impl<'a> ExtremalConnection<'a> {
    pub fn new(family: &'a MetricFamily, cfg: &TransportConfig, gamma_scale: f64, tols: Tolerances) -> Result<Self> {
        let mut averaging = AveragingConfig::with_nodes(family.dim(), cfg.quad_nodes)?;
        averaging.gamma_scale = gamma_scale;
        Ok(Self {
            family,
            averaging,
            pools: DirectionPools::generate(family.dim(), &cfg.pools, 0.0)?,
            tols,
        })
    }
}

impl ConnectionField for ExtremalConnection<'_> {
    fn christoffel(&self, x: &ChartPoint) -> Result<Christoffel> {
        let avg = AveragedMetricData::compute(self.family, x, &self.averaging)?;
        let local = self.family.at(x)?;
        let out = extremal_torsion(&local, &avg, &self.pools, &self.tols)?;
        Ok(reconstruct_connection(&avg, &out.torsion.frame_to_chart(&avg.frame)))
    }
}

/// Transports each initial vector along the polyline `path` by
/// `(X^k)' = −(c^i)' X^j Γ^k_ij(c)` (classical RK4, `steps_per_unit` steps per
/// unit chart length) and returns the largest relative drift `|F(X) − F(X₀)| / F(X₀)`.
pub fn validate_connection(
    family: &MetricFamily,
    field: &dyn ConnectionField,
    path: &[ChartPoint],
    initial: &[Vec<f64>],
    steps_per_unit: usize,
) -> Result<f64> {
    let n = family.dim();
    let start = path.first().ok_or_else(|| Error::InvalidMetric("empty path".into()))?;
    let f0: Vec<f64> = {
        let local = family.at(start)?;
        initial.iter().map(|v| local.value(v)).collect()
    };
    let mut xs: Vec<DVector<f64>> = initial.iter().map(|v| DVector::from_column_slice(v)).collect();
    let mut drift: f64 = 0.0;
    for seg in path.windows(2) {
        let (a, b) = (&seg[0].coords, &seg[1].coords);
        let vel = DVector::from_fn(n, |i, _| b[i] - a[i]);
        let steps = ((vel.norm() * steps_per_unit as f64).ceil() as usize).max(1);
        let half = (0..=2 * steps)
            .map(|m| {
                let t = m as f64 / (2 * steps) as f64;
                let x: Vec<f64> = (0..n).map(|i| a[i] + t * vel[i]).collect();
                if family.domain().contains(&x) {
                    Ok(ChartPoint::new(x))
                } else {
                    Err(Error::CurveLeavesChart { point: x })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let gammas = half
            .par_iter()
            .map(|x| field.christoffel(x).map(|c| velocity_contraction(&c, &vel)))
            .collect::<Result<Vec<_>>>()?;
        let dt = 1.0 / steps as f64;
        for s in 0..steps {
            let (m0, m1, m2) = (&gammas[2 * s], &gammas[2 * s + 1], &gammas[2 * s + 2]);
            let local = family.at(&half[2 * s + 2])?;
            for (x, f_start) in xs.iter_mut().zip(&f0) {
                let k1 = -(m0 * &*x);
                let k2 = -(m1 * (&*x + &k1 * (0.5 * dt)));
                let k3 = -(m1 * (&*x + &k2 * (0.5 * dt)));
                let k4 = -(m2 * (&*x + &k3 * dt));
                *x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                drift = drift.max((local.value(x.as_slice()) - f_start).abs() / f_start);
            }
        }
    }
    Ok(drift)
}

/// Matrix `(k, j) ↦ ċ^i Γ^k_ij`.
fn velocity_contraction(c: &Christoffel, vel: &DVector<f64>) -> DMatrix<f64> {
    let n = c.dim();
    DMatrix::from_fn(n, n, |k, j| (0..n).map(|i| vel[i] * c.get(k, i, j)).sum())
}

/// `max ‖T(p) − T(q)‖_∞ / |p − q|` over neighbouring grid points, chart components.
pub fn continuity_probe(verdicts: &[PointVerdict], grid: &GridSpec) -> f64 {
    grid.neighbors()
        .into_iter()
        .map(|(a, b)| {
            let (va, vb) = (&verdicts[a], &verdicts[b]);
            let dist = va.p.iter().zip(&vb.p).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let diff = va
                .torsion_chart
                .iter()
                .zip(&vb.torsion_chart)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            diff / dist
        })
        .fold(0.0, f64::max)
}

/// Full analysis of one grid point.
pub fn evaluate_point(family: &MetricFamily, p: &ChartPoint, cfg: &DecideConfig) -> Result<PointVerdict> {
    let dim = family.dim();
    let tols = &cfg.tols;
    let local = family.at(p)?;
    let avg = AveragedMetricData::compute(family, p, &cfg.averaging)?;

    let pools_a = DirectionPools::generate(dim, &cfg.pools, 0.0)?;
    let alternate = PoolSpec {
        seed: cfg.pools.seed.wrapping_add(1),
        ..cfg.pools
    };
    let pools_b = DirectionPools::generate(dim, &alternate, 0.5)?;
    let blocks_a = PointBlocks::assemble(&local, &avg, &pools_a)?;
    let blocks_b = PointBlocks::assemble(&local, &avg, &pools_b)?;

    let contact_violations = blocks_a
        .all()
        .chain(blocks_b.all())
        .filter(|b| b.vertical_margin < tols.tol_contact && !is_horizontal_contact(b, tols.tol_res))
        .count();
    let class = classify_point_blocks(&blocks_a, tols);
    let run_a = extremal_from_blocks(&blocks_a, tols);
    let run_b = extremal_from_blocks(&blocks_b, tols);
    let t_a = run_a.torsion.frame_to_chart(&avg.frame);
    let t_b = run_b.torsion.frame_to_chart(&avg.frame);
    let pool_agreement = t_a.sub(&t_b).max_abs() / t_a.max_abs().max(1.0);

    let (ls_residual, ls_residual_refined) = if class.route == Route::Chain {
        let ls = oracle_min_norm(blocks_a.all())?.residual_max;
        let refined = if ls > tols.not_gb_trigger {
            let pools_r = DirectionPools::generate(dim, &cfg.pools.refined(), 0.0)?;
            let blocks_r = PointBlocks::assemble(&local, &avg, &pools_r)?;
            Some(oracle_min_norm(blocks_r.all())?.residual_max)
        } else {
            None
        };
        (ls, refined)
    } else {
        (run_a.diagnostics.validation_residual.max(run_a.diagnostics.selection_residual), None)
    };

    let residual_of = |d: &ChainDiagnostics| d.selection_residual.max(d.validation_residual);
    let residual_max = residual_of(&run_a.diagnostics);
    let failed = contact_violations > 0
        || (ls_residual > tols.not_gb_trigger && ls_residual_refined.is_none_or(|r| r > tols.not_gb_trigger));
    let ratio_ok = class.norm_ratio_spread.is_none_or(|s| s < tols.tol_contact);
    let passed = residual_max < tols.tol_res
        && residual_of(&run_b.diagnostics) < tols.tol_res
        && pool_agreement < tols.tol_agree
        && ratio_ok;
    let status = if failed {
        PointStatus::Failed
    } else if passed {
        PointStatus::Passed
    } else {
        PointStatus::Marginal
    };

    Ok(PointVerdict {
        p: p.coords.clone(),
        route: class.route,
        status,
        torsion_chart: t_a.comps().to_vec(),
        torsion_frame: run_a.torsion.comps().to_vec(),
        torsion_norm: run_a.torsion.norm(),
        residual_max,
        ls_residual,
        ls_residual_refined,
        pool_agreement,
        contact_violations,
        norm_ratio_spread: class.norm_ratio_spread,
        chain_diag: run_a.diagnostics,
        alternate_diag: run_b.diagnostics,
    })
}

/// Global verdict from per-point verdicts (transport not considered).
pub fn aggregate(verdicts: &[PointVerdict], tols: &Tolerances) -> GlobalVerdict {
    if verdicts.iter().any(|v| v.status == PointStatus::Failed) {
        return GlobalVerdict::NotGeneralizedBerwald;
    }
    if verdicts.iter().any(|v| v.status != PointStatus::Passed) {
        return GlobalVerdict::Inconclusive;
    }
    if verdicts.iter().all(|v| v.route == Route::VerticalContact) {
        return GlobalVerdict::Riemannian;
    }
    let torsion_free = verdicts
        .iter()
        .all(|v| v.torsion_chart.iter().all(|c| c.abs() < tols.tol_res));
    if torsion_free {
        GlobalVerdict::ClassicalBerwald
    } else {
        GlobalVerdict::GeneralizedBerwald
    }
}

/// Runs every grid point concurrently and aggregates the verdict. A
/// generalized Berwald verdict is downgraded to inconclusive when the
/// transport check along grid edges drifts by more than `10 · tol_res`.
pub fn decide(family: &MetricFamily, grid: &GridSpec, cfg: &DecideConfig) -> Result<ClassificationReport> {
    if grid.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            found: grid.dim(),
        });
    }
    let points = grid.points();
    let verdicts = points
        .par_iter()
        .map(|p| evaluate_point(family, p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut global = aggregate(&verdicts, &cfg.tols);

    let transport_drift = match (&cfg.transport, global) {
        (Some(tc), GlobalVerdict::GeneralizedBerwald) => {
            let drift = grid_transport_drift(family, grid, tc, cfg.averaging.gamma_scale, cfg.tols)?;
            if drift > 10.0 * cfg.tols.tol_res {
                global = GlobalVerdict::Inconclusive;
            }
            Some(drift)
        }
        _ => None,
    };

    Ok(ClassificationReport {
        global,
        continuity: continuity_probe(&verdicts, grid),
        residual_max: verdicts.iter().map(|v| v.residual_max).fold(0.0, f64::max),
        torsion_max: verdicts
            .iter()
            .flat_map(|v| v.torsion_chart.iter())
            .fold(0.0f64, |m, c| m.max(c.abs())),
        transport_drift,
        failed_points: verdicts.iter().filter(|v| v.status == PointStatus::Failed).count(),
        marginal_points: verdicts.iter().filter(|v| v.status == PointStatus::Marginal).count(),
        verdicts,
        tolerances: cfg.tols,
        pools: cfg.pools,
        grid: grid.clone(),
    })
}

/// Largest transport drift of the extremal connection over all grid edges.
pub fn grid_transport_drift(
    family: &MetricFamily,
    grid: &GridSpec,
    cfg: &TransportConfig,
    gamma_scale: f64,
    tols: Tolerances,
) -> Result<f64> {
    let field = ExtremalConnection::new(family, cfg, gamma_scale, tols)?;
    let mut drift: f64 = 0.0;
    for (a, b) in grid.neighbors() {
        let (pa, pb) = (grid.point(a), grid.point(b));
        let avg = AveragedMetricData::compute(family, &pa, &field.averaging)?;
        let initial: Vec<Vec<f64>> = lattice(family.dim(), cfg.directions, 0.25)
            .iter()
            .map(|u| avg.to_chart_vector(u).as_slice().to_vec())
            .collect();
        drift = drift.max(validate_connection(family, &field, &[pa, pb], &initial, cfg.steps_per_unit)?);
    }
    Ok(drift)
}
