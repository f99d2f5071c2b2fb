//! Invariance of the residual-free torsion directions under linear symmetries of `F`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::averaging::AveragedMetricData;
use crate::error::{Error, Result};
use crate::metric::LocalMetric;
use crate::torsion::extremal::block_for;
use crate::torsion::linalg::null_space;
use crate::torsion::tensor::{FrameTag, TorsionTensor};

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    /// Dimension of the sampled null space of the stacked σ rows.
    pub null_dim: usize,
    /// `max ‖S(w)·φT‖_∞ / F(w)` over null vectors `T` (unit norm) and `w` in the transformed samples.
    pub invariance_residual: f64,
    pub gamma_defect: f64,
    pub norm_defect: f64,
}

/// Relative singular-value level below which a stacked direction counts as residual-free.
const NULL_CUTOFF: f64 = 1e-9;

/// Checks that `φ` maps the residual-free torsions of `samples` to residual-free
/// torsions of `φ⁻¹(samples)`. `phi` acts on chart vectors; `samples` are frame
/// directions.
pub fn symmetry_invariance_check(
    local: &LocalMetric,
    avg: &AveragedMetricData,
    phi: &DMatrix<f64>,
    samples: &[DVector<f64>],
) -> Result<SymmetryReport> {
    let n = avg.dim();
    let gamma_defect = (phi.transpose() * &avg.gamma * phi - &avg.gamma).amax() / avg.gamma.amax();
    if gamma_defect > 1e-8 {
        return Err(Error::NotASymmetry {
            reason: format!("φ does not preserve γ (defect {gamma_defect:e})"),
        });
    }
    let mut norm_defect: f64 = 0.0;
    for u in samples {
        let v = avg.to_chart_vector(u);
        let fv = local.value(v.as_slice());
        let fphi = local.value((phi * &v).as_slice());
        norm_defect = norm_defect.max((fphi - fv).abs() / fv);
    }
    if norm_defect > 1e-10 {
        return Err(Error::NotASymmetry {
            reason: format!("F∘φ differs from F (defect {norm_defect:e})"),
        });
    }

    let blocks = samples
        .iter()
        .map(|u| block_for(local, avg, u))
        .collect::<Result<Vec<_>>>()?;
    let big_n = blocks[0].s.ncols();
    let mut stacked = DMatrix::zeros(n * blocks.len(), big_n);
    for (k, b) in blocks.iter().enumerate() {
        stacked.view_mut((k * n, 0), (n, big_n)).copy_from(&(&b.s / b.f));
    }
    let null = null_space(&stacked, NULL_CUTOFF)?;

    let phi_frame = &avg.frame_inv * phi * &avg.frame;
    let phi_inv = phi_frame
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotASymmetry {
            reason: "φ is singular".into(),
        })?;
    let moved = samples
        .iter()
        .map(|u| block_for(local, avg, &(&phi_inv * u)))
        .collect::<Result<Vec<_>>>()?;
    let mut invariance_residual: f64 = 0.0;
    for h in &null {
        let t = TorsionTensor::from_vector(n, h, FrameTag::Orthonormal).pull_back(&phi_frame, FrameTag::Orthonormal);
        for b in &moved {
            let r = (&b.s * t.to_vector()).amax() / b.f;
            invariance_residual = invariance_residual.max(r);
        }
    }
    Ok(SymmetryReport {
        null_dim: null.len(),
        invariance_residual,
        gamma_defect,
        norm_defect,
    })
}
