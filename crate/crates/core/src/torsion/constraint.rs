//! Compatibility constraints in torsion variables for one reference direction.
//!
//! For a direction `v` the compatibility equations read
//! `X_i^{h*}F(v) + Σ_{a<b,c} σ^{ab}_{c;i}(v) T^c_ab = 0`, `i = 1..n`.
//! Solver-side everything is expressed in the γ-orthonormal frame at the
//! point, where the coefficients take their short form and the torsion norm
//! is the Euclidean norm of the stored components.

use nalgebra::{DMatrix, DVector};

use crate::averaging::{horizontal_derivative_from_jet, AveragedMetricData};
use crate::error::{Error, Result};
use crate::metric::{MetricJet, TangentVector};
use crate::torsion::tensor::{num_pairs, pair_index, torsion_space_dim, TorsionTensor};

/// σ-coefficients in a γ-orthonormal frame; row `i`, column `pair(a,b)·n + c`.
///
/// `σ^{ab}_{c;i} = ½(δ_i^c(y^a F_b − y^b F_a) + δ_i^a(y^c F_b − y^b F_c) − δ_i^b(y^c F_a − y^a F_c))`
pub fn sigma_orthonormal(y: &DVector<f64>, dfdy: &DVector<f64>) -> DMatrix<f64> {
    let n = y.len();
    let mut s = DMatrix::zeros(n, torsion_space_dim(n));
    let rot = |p: usize, q: usize| y[p] * dfdy[q] - y[q] * dfdy[p];
    for a in 0..n {
        for b in (a + 1)..n {
            let base = pair_index(n, a, b) * n;
            for c in 0..n {
                let col = base + c;
                s[(c, col)] += 0.5 * rot(a, b);
                s[(a, col)] += 0.5 * rot(c, b);
                s[(b, col)] -= 0.5 * rot(c, a);
            }
        }
    }
    s
}

/// σ-coefficients for chart components with a general averaged metric:
///
/// `σ^{ab}_{c;i} = ½((y^a γ^{br} − y^b γ^{ar}) F_r γ_ic + (δ_i^a γ^{br} − δ_i^b γ^{ar}) F_r y^j γ_jc − (δ_i^a y^b − δ_i^b y^a) F_c)`
pub fn sigma_general(
    y: &DVector<f64>,
    dfdy: &DVector<f64>,
    gamma: &DMatrix<f64>,
    gamma_inv: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = y.len();
    let w = gamma_inv * dfdy;
    let y_low = gamma * y;
    let mut s = DMatrix::zeros(n, torsion_space_dim(n));
    for a in 0..n {
        for b in (a + 1)..n {
            let base = pair_index(n, a, b) * n;
            let lead = y[a] * w[b] - y[b] * w[a];
            for c in 0..n {
                let col = base + c;
                for i in 0..n {
                    s[(i, col)] += 0.5 * lead * gamma[(i, c)];
                }
                s[(a, col)] += 0.5 * (w[b] * y_low[c] - y[b] * dfdy[c]);
                s[(b, col)] += 0.5 * (-w[a] * y_low[c] + y[a] * dfdy[c]);
            }
        }
    }
    s
}

/// The affine constraint set `A_p(v) = {T : S·T + rhs = 0}` of one direction.
#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    /// `n × N` σ-coefficients in the orthonormal frame.
    pub s: DMatrix<f64>,
    /// `X_i^{h*}F(v)` with the equation index `i` moved to the frame (`Bᵀ·rhs_chart`).
    pub rhs: DVector<f64>,
    /// `X_i^{h*}F(v)` in chart components.
    pub rhs_chart: DVector<f64>,
    /// Maps frame-indexed equation values back to chart indices (`B⁻ᵀ`).
    pub chart_map: DMatrix<f64>,
    pub f: f64,
    pub v: TangentVector,
    /// `max_i |∂log F/∂y^i − ∂log F*/∂y^i|` at the F*-unit rescaling of `v`.
    pub vertical_margin: f64,
}

impl ConstraintBlock {
    /// Block not tied to a metric: identity chart map, unit `F`.
    pub fn synthetic(s: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        let n = s.nrows();
        let vertical_margin = s.amax();
        Self {
            chart_map: DMatrix::identity(n, n),
            rhs_chart: rhs.clone(),
            s,
            rhs,
            f: 1.0,
            v: TangentVector::new(crate::metric::ChartPoint::new(vec![0.0; n]), vec![0.0; n]),
            vertical_margin,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// Equation values `S·T + rhs` (frame-indexed).
    pub fn residual(&self, t: &TorsionTensor) -> DVector<f64> {
        &self.s * t.to_vector() + &self.rhs
    }

    /// `‖S·T + rhs‖_∞ / F(v)` with the equation index in chart form; invariant
    /// under rescaling of `v` and of `γ`.
    pub fn relative_residual(&self, t: &TorsionTensor) -> f64 {
        (&self.chart_map * self.residual(t)).amax() / self.f
    }

    /// `S(v) ≈ 0` relative to `F(v)`.
    pub fn is_degenerate(&self, tol: f64) -> bool {
        self.s.amax() < tol * self.f
    }

    pub fn gram(&self) -> DMatrix<f64> {
        &self.s * self.s.transpose()
    }
}

/// Assembles the constraint block of `v` from its jet.
pub fn sigma(jet: &MetricJet, v: &TangentVector, avg: &AveragedMetricData) -> Result<ConstraintBlock> {
    if v.comps.iter().all(|&c| c == 0.0) {
        return Err(Error::ZeroVector);
    }
    let y_frame = avg.to_frame_vector(&v.comps);
    let grad_frame = avg.frame.transpose() * &jet.dfdy;
    let s = sigma_orthonormal(&y_frame, &grad_frame);
    let rhs_chart = horizontal_derivative_from_jet(jet, avg, &v.comps);
    let rhs = avg.frame.transpose() * &rhs_chart;
    Ok(ConstraintBlock {
        s,
        rhs,
        rhs_chart,
        chart_map: avg.frame_inv.transpose(),
        f: jet.f,
        v: v.clone(),
        vertical_margin: log_gradient_gap(&y_frame, &grad_frame, jet.f),
    })
}

fn log_gradient_gap(y_frame: &DVector<f64>, grad_frame: &DVector<f64>, f: f64) -> f64 {
    let r = y_frame.norm();
    // ∇log F at the F*-unit point y/r is r·∇F(v)/F(v); ∇log F* there is y/r
    (grad_frame * (r / f) - y_frame / r).amax()
}

/// Vertical contact test: `max_i |∂log F/∂y^i − ∂log F*/∂y^i| < tol` at the
/// F*-unit rescaling of `v`, in the γ-orthonormal frame.
pub fn is_vertical_contact(jet: &MetricJet, avg: &AveragedMetricData, v: &TangentVector, tol: f64) -> Result<bool> {
    if v.comps.iter().all(|&c| c == 0.0) {
        return Err(Error::ZeroVector);
    }
    let y_frame = avg.to_frame_vector(&v.comps);
    let grad_frame = avg.frame.transpose() * &jet.dfdy;
    Ok(log_gradient_gap(&y_frame, &grad_frame, jet.f) < tol)
}

/// Horizontal contact test: `‖X^{h*}F(v)‖_∞ < tol · F(v)`.
pub fn is_horizontal_contact(block: &ConstraintBlock, tol: f64) -> bool {
    block.rhs_chart.amax() < tol * block.f
}

/// `S·T + rhs`, the values `g_i(T, v)` of the compatibility equations.
pub fn residual(block: &ConstraintBlock, t: &TorsionTensor) -> DVector<f64> {
    block.residual(t)
}

/// Number of stored torsion pairs, re-exported for callers sizing buffers.
pub fn pairs(n: usize) -> usize {
    num_pairs(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torsion::tensor::FrameTag;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    /// Brute-force expansion of `½ y^j (T^i_jr + T^j_ir − T^r_ij) F_r` for unit tensors.
    fn brute_force(y: &DVector<f64>, f: &DVector<f64>) -> DMatrix<f64> {
        let n = y.len();
        let big_n = torsion_space_dim(n);
        let mut s = DMatrix::zeros(n, big_n);
        for col in 0..big_n {
            let mut comps = vec![0.0; big_n];
            comps[col] = 1.0;
            let t = TorsionTensor::from_comps(n, comps, FrameTag::Orthonormal);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    for r in 0..n {
                        acc += 0.5 * y[j] * (t.get(j, r, i) + t.get(i, r, j) - t.get(i, j, r)) * f[r];
                    }
                }
                s[(i, col)] = acc;
            }
        }
        s
    }

    #[test]
    fn orthonormal_sigma_matches_term_by_term_expansion() {
        for (y, f) in [
            (vec(&[0.3, -1.2]), vec(&[0.7, 0.1])),
            (vec(&[0.3, -1.2, 0.5]), vec(&[0.7, 0.1, -0.4])),
        ] {
            let s = sigma_orthonormal(&y, &f);
            assert!((s - brute_force(&y, &f)).amax() < 1e-15);
        }
    }

    #[test]
    fn two_dimensional_sigma_is_kappa_identity() {
        let y = vec(&[0.8, -0.35]);
        let f = vec(&[1.1, 0.25]);
        let kappa = y[0] * f[1] - y[1] * f[0];
        let s = sigma_orthonormal(&y, &f);
        assert!((s - DMatrix::identity(2, 2) * kappa).amax() < 1e-15);
    }

    #[test]
    fn swapping_pair_flips_sign() {
        // the coefficient of T^c_ba is −σ^{ab}_{c;i}: evaluate the bracket with T^c_ab = 1 and T^c_ba = 1
        let y = vec(&[0.3, -1.2, 0.5]);
        let f = vec(&[0.7, 0.1, -0.4]);
        let s = sigma_orthonormal(&y, &f);
        let n = 3;
        for a in 0..n {
            for b in (a + 1)..n {
                for c in 0..n {
                    let mut t = TorsionTensor::zeros(n, FrameTag::Orthonormal);
                    t.set(a, b, c, -1.0); // T^c_ba = +1
                    let col = pair_index(n, a, b) * n + c;
                    let r = &s * t.to_vector();
                    for i in 0..n {
                        assert!((r[i] + s[(i, col)]).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn general_sigma_agrees_with_orthonormal_after_frame_change() {
        let gamma = DMatrix::from_row_slice(3, 3, &[5.0, 0.7, -0.4, 0.7, 3.0, 0.2, -0.4, 0.2, 2.0]);
        let avg = AveragedMetricData::from_parts(
            crate::metric::ChartPoint::new(vec![0.0; 3]),
            gamma.clone(),
            crate::averaging::Christoffel::zeros(3),
        )
        .unwrap();
        let y = vec(&[0.3, -1.2, 0.5]);
        let dfdy = vec(&[0.7, 0.1, -0.4]);
        let s_chart = sigma_general(&y, &dfdy, &avg.gamma, &avg.gamma_inv);
        let s_frame = sigma_orthonormal(&avg.to_frame_vector(y.as_slice()), &(avg.frame.transpose() * &dfdy));
        for seed in 0..5 {
            let comps: Vec<f64> = (0..9).map(|k| ((k + 3 * seed) as f64 * 0.71).sin()).collect();
            let t_frame = TorsionTensor::from_comps(3, comps, FrameTag::Orthonormal);
            let t_chart = t_frame.frame_to_chart(&avg.frame);
            let g_chart = &s_chart * t_chart.to_vector();
            let g_frame = &s_frame * t_frame.to_vector();
            assert!((avg.frame.transpose() * g_chart - g_frame).amax() < 1e-13);
        }
    }
}
