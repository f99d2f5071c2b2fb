//! Reference-element solve and the orthogonal chain of minimum-norm points.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric::TangentVector;
use crate::torsion::constraint::ConstraintBlock;
use crate::torsion::linalg::{gram_solve, min_norm_solve, RCOND};
use crate::torsion::tensor::{FrameTag, TorsionTensor};

/// Thresholds for a single chain step.
#[derive(Debug, Clone, Copy)]
pub struct StepTolerances {
    /// Blocks with `‖S‖_∞ < tol_contact · F` are vertical contact.
    pub tol_contact: f64,
    /// Blocks already satisfied to this relative residual are skipped.
    pub tol_res: f64,
    /// Relative residual of the augmented system above which a step is infeasible.
    pub tol_infeasible: f64,
}

impl Default for StepTolerances {
    fn default() -> Self {
        Self {
            tol_contact: 1e-9,
            tol_res: 1e-7,
            tol_infeasible: 1e-6,
        }
    }
}

/// Minimum-norm point of `A_p(v)` through the Gramian of the σ rows:
/// `G λ = −rhs`, `T0 = Σ λ_j σ_j`.
pub fn solve_reference(block: &ConstraintBlock) -> Result<(TorsionTensor, DVector<f64>)> {
    solve_reference_with(block, StepTolerances::default().tol_contact)
}

pub fn solve_reference_with(block: &ConstraintBlock, tol_contact: f64) -> Result<(TorsionTensor, DVector<f64>)> {
    if block.is_degenerate(tol_contact) {
        return Err(Error::VerticalContact);
    }
    let n = block.dim();
    let gram = block.gram();
    let target = -&block.rhs;
    let (lambda, _) = gram_solve(&gram, &target, RCOND);
    let mismatch = (&gram * &lambda - &target).norm();
    let scale = target.norm().max(f64::MIN_POSITIVE);
    if mismatch > 1e-8 * scale {
        return Err(Error::Inconsistent {
            residual: mismatch / scale,
        });
    }
    let t = block.s.transpose() * &lambda;
    Ok((TorsionTensor::from_vector(n, &t, FrameTag::Orthonormal), lambda))
}

/// Progress of the orthogonal chain at one point.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub current: TorsionTensor,
    pub chain: Vec<TorsionTensor>,
    pub used_refs: Vec<TangentVector>,
    /// Orthonormal basis of the chain's span, one vector per nonzero increment.
    normals: Vec<DVector<f64>>,
}

impl ChainState {
    pub fn new(dim: usize) -> Self {
        Self {
            current: TorsionTensor::zeros(dim, FrameTag::Orthonormal),
            chain: Vec::new(),
            used_refs: Vec::new(),
            normals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    /// Increments `ΔT_m = T_m − T_{m−1}` with `T_0 = 0`.
    pub fn increments(&self) -> Vec<TorsionTensor> {
        let dim = self.current.dim();
        let mut prev = TorsionTensor::zeros(dim, FrameTag::Orthonormal);
        self.chain
            .iter()
            .map(|t| {
                let d = t.sub(&prev);
                prev = t.clone();
                d
            })
            .collect()
    }

    /// `max_{k<m} |⟨ΔT_m, T_k⟩| / (‖ΔT_m‖‖T_k‖)` over the chain.
    pub fn orthogonality_defect(&self) -> f64 {
        let inc = self.increments();
        let mut worst: f64 = 0.0;
        for (m, d) in inc.iter().enumerate() {
            for t in &self.chain[..m] {
                let denom = d.norm() * t.norm();
                if denom > 0.0 {
                    worst = worst.max(d.dot(t).abs() / denom);
                }
            }
        }
        worst
    }

    fn push(mut self, t: TorsionTensor, v: &TangentVector) -> Self {
        let mut d = t.sub(&self.current).to_vector();
        for q in &self.normals {
            let c = q.dot(&d);
            d -= q * c;
        }
        let len = d.norm();
        if len > 1e-14 * (1.0 + t.norm()) {
            self.normals.push(d / len);
        }
        self.current = t.clone();
        self.chain.push(t);
        self.used_refs.push(v.clone());
        self
    }

    /// Augmented system: σ rows with target `−rhs`, then one row per chain
    /// direction fixing `⟨q, T⟩ = ⟨q, T_current⟩`. The chain directions are an
    /// orthonormalised basis of `span{T_k}`, so the constraint set is the same
    /// as with the raw chain elements. Rows are scaled to unit length.
    fn augmented(&self, block: &ConstraintBlock) -> (DMatrix<f64>, DVector<f64>) {
        let n = block.dim();
        let big_n = block.s.ncols();
        let rows = n + self.normals.len();
        let mut a = DMatrix::zeros(rows, big_n);
        let mut b = DVector::zeros(rows);
        let cur = self.current.to_vector();
        for i in 0..n {
            a.row_mut(i).copy_from(&block.s.row(i));
            b[i] = -block.rhs[i];
        }
        for (k, q) in self.normals.iter().enumerate() {
            a.row_mut(n + k).copy_from(&q.transpose());
            b[n + k] = q.dot(&cur);
        }
        for r in 0..rows {
            let len = a.row(r).norm();
            if len > 0.0 {
                a.row_mut(r).unscale_mut(len);
                b[r] /= len;
            }
        }
        (a, b)
    }
}

/// One step of the chain: the minimum-norm point of
/// `A_p(v_m) ∩ {T : ⟨T_k, T − T_current⟩ = 0 ∀k}`.
///
/// The first step is the reference solve. A block already satisfied by the
/// current torsion leaves the state unchanged.
pub fn chain_step(state: ChainState, block: &ConstraintBlock, tols: &StepTolerances) -> Result<ChainState> {
    if block.relative_residual(&state.current) < tols.tol_res {
        return Ok(state);
    }
    if state.is_empty() {
        let (t, _) = solve_reference_with(block, tols.tol_contact)?;
        return Ok(state.push(t, &block.v));
    }
    if block.is_degenerate(tols.tol_contact) {
        return Err(Error::VerticalContact);
    }
    let (a, b) = state.augmented(block);
    let sol = min_norm_solve(&a, &b, RCOND)?;
    let scale = b.norm().max(sol.x.norm()).max(f64::MIN_POSITIVE);
    if sol.residual > tols.tol_infeasible * scale {
        return Err(Error::InfeasibleStep {
            residual: sol.residual / scale,
        });
    }
    let t = TorsionTensor::from_vector(block.dim(), &sol.x, FrameTag::Orthonormal);
    Ok(state.push(t, &block.v))
}

/// The same step solved as `min ‖D‖` over displacements `D = T − T_current`.
/// Agrees with [`chain_step`] because `T_current` lies in the span of the
/// chain, which is orthogonal to every admissible displacement.
pub fn chain_step_displacement(
    state: ChainState,
    block: &ConstraintBlock,
    tols: &StepTolerances,
) -> Result<ChainState> {
    if block.relative_residual(&state.current) < tols.tol_res {
        return Ok(state);
    }
    if state.is_empty() {
        return chain_step(state, block, tols);
    }
    let (a, mut b) = state.augmented(block);
    let cur = state.current.to_vector();
    b -= &a * &cur;
    let sol = min_norm_solve(&a, &b, RCOND)?;
    let scale = (&a * &cur).norm().max(b.norm()).max(f64::MIN_POSITIVE);
    if sol.residual > tols.tol_infeasible * scale {
        return Err(Error::InfeasibleStep {
            residual: sol.residual / scale,
        });
    }
    let t = TorsionTensor::from_vector(block.dim(), &(cur + sol.x), FrameTag::Orthonormal);
    Ok(state.push(t, &block.v))
}
