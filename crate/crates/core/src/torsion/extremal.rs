//! The pointwise extremal-torsion algorithm and its least-squares oracle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::averaging::AveragedMetricData;
use crate::error::{Error, Result};
use crate::metric::{LocalMetric, TangentVector};
use crate::torsion::chain::{chain_step, ChainState, StepTolerances};
use crate::torsion::constraint::{is_horizontal_contact, sigma, ConstraintBlock};
use crate::torsion::linalg::{min_norm_solve, MinNormSolution, RCOND};
use crate::torsion::tensor::{torsion_space_dim, FrameTag, TorsionTensor};

/// Numerical thresholds of the decision procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol_contact: f64,
    pub tol_res: f64,
    pub tol_infeasible: f64,
    /// Least-squares residual above which a point counts as not generalized Berwald.
    pub not_gb_trigger: f64,
    /// Agreement required between runs on disjoint selection pools.
    pub tol_agree: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_contact: 1e-9,
            tol_res: 1e-7,
            tol_infeasible: 1e-6,
            not_gb_trigger: 1e-3,
            tol_agree: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn step(&self) -> StepTolerances {
        StepTolerances {
            tol_contact: self.tol_contact,
            tol_res: self.tol_res,
            tol_infeasible: self.tol_infeasible,
        }
    }
}

/// Sizes and seed of the direction pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolSpec {
    /// Deterministic lattice size of the selection pool.
    pub selection: usize,
    /// Seeded random directions appended to the selection pool.
    pub random: usize,
    pub validation: usize,
    pub seed: u64,
}

impl PoolSpec {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            selection: if dim == 2 { 720 } else { 1026 },
            random: 32,
            validation: 64,
            seed: 0,
        }
    }

    /// Twice the lattice and validation sizes; the lattice of the result
    /// contains the original one.
    pub fn refined(&self) -> Self {
        Self {
            selection: 2 * self.selection,
            validation: 2 * self.validation,
            ..*self
        }
    }
}

const VALIDATION_OFFSET: f64 = 0.381_966_011_250_105_1;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Euclidean unit directions in the γ-orthonormal frame.
#[derive(Debug, Clone)]
pub struct DirectionPools {
    pub selection: Vec<DVector<f64>>,
    pub validation: Vec<DVector<f64>>,
}

impl DirectionPools {
    /// `offset` shifts the selection lattice by that fraction of its spacing;
    /// offsets 0 and ½ give disjoint lattices. The validation lattice sits at
    /// an irrational offset, disjoint from both.
    pub fn generate(dim: usize, spec: &PoolSpec, offset: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut selection = lattice(dim, spec.selection, offset);
        selection.extend((0..spec.random).map(|_| random_direction(dim, &mut rng)));
        let validation = lattice(dim, spec.validation, VALIDATION_OFFSET);
        Ok(Self { selection, validation })
    }

    pub fn all(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.selection.iter().chain(&self.validation)
    }
}

/// `count` directions: equispaced on `S¹`, a Fibonacci lattice on `S²`.
pub fn lattice(dim: usize, count: usize, offset: f64) -> Vec<DVector<f64>> {
    match dim {
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + offset) / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        _ => (0..count)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = GOLDEN_ANGLE * k as f64 + 2.0 * PI * offset * 0.618_033_988_749_894_8;
                DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
            })
            .collect(),
    }
}

fn random_direction(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Constraint blocks of the two pools at one point.
#[derive(Debug, Clone)]
pub struct PointBlocks {
    pub selection: Vec<ConstraintBlock>,
    pub validation: Vec<ConstraintBlock>,
}

impl PointBlocks {
    pub fn assemble(local: &LocalMetric, avg: &AveragedMetricData, pools: &DirectionPools) -> Result<Self> {
        let build = |dirs: &[DVector<f64>]| -> Result<Vec<ConstraintBlock>> {
            dirs.iter().map(|u| block_for(local, avg, u)).collect()
        };
        Ok(Self {
            selection: build(&pools.selection)?,
            validation: build(&pools.validation)?,
        })
    }

    pub fn all(&self) -> impl Iterator<Item = &ConstraintBlock> {
        self.selection.iter().chain(&self.validation)
    }
}

/// Block of the chart vector `B·u` for a frame direction `u`.
pub fn block_for(local: &LocalMetric, avg: &AveragedMetricData, u: &DVector<f64>) -> Result<ConstraintBlock> {
    let v = avg.to_chart_vector(u);
    let jet = local.jet(v.as_slice())?;
    sigma(&jet, &TangentVector::new(local.point(), v.as_slice().to_vec()), avg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    VerticalContact,
    HorizontalContact,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Contact route; no chain was run.
    Trivial,
    Converged,
    MaxLength,
    Infeasible,
    /// The worst selection direction stayed the same after a step.
    Stalled,
    /// Validation fails but every selection direction is satisfied.
    NoCandidate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainDiagnostics {
    pub route: Route,
    pub termination: Termination,
    pub chain_length: usize,
    pub chain_norms: Vec<f64>,
    pub orthogonality_defect: f64,
    pub selection_residual: f64,
    pub validation_residual: f64,
    pub infeasible_residual: Option<f64>,
    pub vertical_contacts: usize,
    pub horizontal_contacts: usize,
    pub excluded_near_contact: usize,
    /// Chart components of the reference directions, in chain order.
    pub references: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExtremalOutcome {
    /// Components in the γ-orthonormal frame.
    pub torsion: TorsionTensor,
    pub chain: ChainState,
    pub diagnostics: ChainDiagnostics,
}

fn max_residual<'a>(blocks: impl Iterator<Item = &'a ConstraintBlock>, t: &TorsionTensor) -> f64 {
    blocks.map(|b| b.relative_residual(t)).fold(0.0, f64::max)
}

/// Contact classification of a point's sampled directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContactCounts {
    pub route: Route,
    pub vertical: usize,
    pub horizontal: usize,
}

/// Vertical contact route if every block is vertical contact, horizontal
/// contact route if every block is horizontal contact, chain otherwise.
pub fn classify_blocks(blocks: &PointBlocks, tols: &Tolerances) -> ContactCounts {
    let total = blocks.selection.len() + blocks.validation.len();
    let vertical = blocks.all().filter(|b| b.vertical_margin < tols.tol_contact).count();
    let horizontal = blocks
        .all()
        .filter(|b| is_horizontal_contact(b, tols.tol_contact))
        .count();
    let route = if vertical == total {
        Route::VerticalContact
    } else if horizontal == total {
        Route::HorizontalContact
    } else {
        Route::Chain
    };
    ContactCounts {
        route,
        vertical,
        horizontal,
    }
}

/// Runs the pointwise algorithm at a point of the metric.
pub fn extremal_torsion(
    local: &LocalMetric,
    avg: &AveragedMetricData,
    pools: &DirectionPools,
    tols: &Tolerances,
) -> Result<ExtremalOutcome> {
    let blocks = PointBlocks::assemble(local, avg, pools)?;
    Ok(extremal_from_blocks(&blocks, tols))
}

/// The case analysis and orthogonal chain over precomputed blocks.
pub fn extremal_from_blocks(blocks: &PointBlocks, tols: &Tolerances) -> ExtremalOutcome {
    let dim = blocks
        .all()
        .next()
        .map(|b| b.dim())
        .expect("at least one direction");
    let ContactCounts {
        route,
        vertical,
        horizontal,
    } = classify_blocks(blocks, tols);
    let zero = TorsionTensor::zeros(dim, FrameTag::Orthonormal);
    let trivial = |route| {
        let diagnostics = ChainDiagnostics {
            route,
            termination: Termination::Trivial,
            chain_length: 0,
            chain_norms: Vec::new(),
            orthogonality_defect: 0.0,
            selection_residual: max_residual(blocks.selection.iter(), &zero),
            validation_residual: max_residual(blocks.validation.iter(), &zero),
            infeasible_residual: None,
            vertical_contacts: vertical,
            horizontal_contacts: horizontal,
            excluded_near_contact: 0,
            references: Vec::new(),
        };
        ExtremalOutcome {
            torsion: zero.clone(),
            chain: ChainState::new(dim),
            diagnostics,
        }
    };
    if route != Route::Chain {
        return trivial(route);
    }

    let candidates: Vec<usize> = (0..blocks.selection.len())
        .filter(|&k| blocks.selection[k].vertical_margin >= 10.0 * tols.tol_contact)
        .collect();
    let excluded = blocks.selection.len() - candidates.len();
    let step_tols = tols.step();
    let max_len = torsion_space_dim(dim);
    let mut state = ChainState::new(dim);
    let mut last_pick = None;
    let mut infeasible_residual = None;

    let termination = loop {
        let (pick, sel_max) = candidates
            .iter()
            .map(|&k| (k, blocks.selection[k].relative_residual(&state.current)))
            .fold((None, 0.0), |(bk, bv), (k, r)| if r > bv { (Some(k), r) } else { (bk, bv) });
        let val_max = max_residual(blocks.validation.iter(), &state.current);
        if sel_max < tols.tol_res && val_max < tols.tol_res {
            break Termination::Converged;
        }
        if state.len() >= max_len {
            break Termination::MaxLength;
        }
        let Some(k) = pick.filter(|_| sel_max >= tols.tol_res) else {
            break Termination::NoCandidate;
        };
        if last_pick == Some(k) {
            break Termination::Stalled;
        }
        last_pick = Some(k);
        match chain_step(state.clone(), &blocks.selection[k], &step_tols) {
            Ok(next) => state = next,
            Err(Error::InfeasibleStep { residual }) | Err(Error::Inconsistent { residual }) => {
                infeasible_residual = Some(residual);
                break Termination::Infeasible;
            }
            Err(_) => break Termination::Stalled,
        }
    };

    let diagnostics = ChainDiagnostics {
        route: Route::Chain,
        termination,
        chain_length: state.len(),
        chain_norms: state.chain.iter().map(TorsionTensor::norm).collect(),
        orthogonality_defect: state.orthogonality_defect(),
        selection_residual: max_residual(blocks.selection.iter(), &state.current),
        validation_residual: max_residual(blocks.validation.iter(), &state.current),
        infeasible_residual,
        vertical_contacts: vertical,
        horizontal_contacts: horizontal,
        excluded_near_contact: excluded,
        references: state.used_refs.iter().map(|v| v.comps.clone()).collect(),
    };
    ExtremalOutcome {
        torsion: state.current.clone(),
        chain: state,
        diagnostics,
    }
}

/// Minimum-norm least-squares solution of all stacked blocks.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Components in the γ-orthonormal frame.
    pub torsion: TorsionTensor,
    /// Largest relative residual over the stacked blocks.
    pub residual_max: f64,
    pub rank: usize,
}

/// Stacks every block and solves through the pseudo-inverse.
pub fn oracle_min_norm<'a>(blocks: impl IntoIterator<Item = &'a ConstraintBlock>) -> Result<OracleSolution> {
    let blocks: Vec<&ConstraintBlock> = blocks.into_iter().collect();
    let first = blocks.first().ok_or(Error::VerticalContact)?;
    let n = first.dim();
    let big_n = first.s.ncols();
    let smax_block = blocks.iter().map(|b| b.s.amax() / b.f).fold(0.0, f64::max);
    if smax_block == 0.0 {
        return Err(Error::VerticalContact);
    }
    let mut a = DMatrix::zeros(n * blocks.len(), big_n);
    let mut rhs = DVector::zeros(n * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        a.view_mut((k * n, 0), (n, big_n)).copy_from(&b.s);
        rhs.rows_mut(k * n, n).copy_from(&(-&b.rhs));
    }
    let MinNormSolution { x, rank, .. } = min_norm_solve(&a, &rhs, RCOND)?;
    let torsion = TorsionTensor::from_vector(n, &x, FrameTag::Orthonormal);
    let residual_max = blocks
        .iter()
        .map(|b| b.relative_residual(&torsion))
        .fold(0.0, f64::max);
    Ok(OracleSolution {
        torsion,
        residual_max,
        rank,
    })
}
