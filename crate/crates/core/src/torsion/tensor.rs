use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Which basis the components of a [`TorsionTensor`] refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTag {
    /// Coordinate frame `∂/∂u^i`.
    Chart,
    /// γ-orthonormal frame at the point of evaluation.
    Orthonormal,
}

/// Number of index pairs `a < b` in dimension `n`.
pub fn num_pairs(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Dimension `n · n(n−1)/2` of the torsion space.
pub fn torsion_space_dim(n: usize) -> usize {
    n * num_pairs(n)
}

/// Position of the pair `(a, b)`, `a < b`, in lexicographic order.
pub fn pair_index(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Antisymmetric `(1,2)`-tensor with components `T^c_ab`; only `a < b` is stored,
/// at flat index `pair_index(a, b) · n + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorsionTensor {
    dim: usize,
    comps: Vec<f64>,
    frame: FrameTag,
}

impl TorsionTensor {
    pub fn zeros(dim: usize, frame: FrameTag) -> Self {
        Self {
            dim,
            comps: vec![0.0; torsion_space_dim(dim)],
            frame,
        }
    }

    pub fn from_comps(dim: usize, comps: Vec<f64>, frame: FrameTag) -> Self {
        assert_eq!(comps.len(), torsion_space_dim(dim), "torsion component count");
        Self { dim, comps, frame }
    }

    pub fn from_vector(dim: usize, v: &DVector<f64>, frame: FrameTag) -> Self {
        Self::from_comps(dim, v.as_slice().to_vec(), frame)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self) -> FrameTag {
        self.frame
    }

    pub fn comps(&self) -> &[f64] {
        &self.comps
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.comps)
    }

    /// `T^c_ab` for any `a, b` (antisymmetric, zero on the diagonal).
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        use std::cmp::Ordering::*;
        match a.cmp(&b) {
            Less => self.comps[pair_index(self.dim, a, b) * self.dim + c],
            Greater => -self.comps[pair_index(self.dim, b, a) * self.dim + c],
            Equal => 0.0,
        }
    }

    /// Sets `T^c_ab` for `a < b`.
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        assert!(a < b, "torsion components are stored for a < b");
        let n = self.dim;
        self.comps[pair_index(n, a, b) * n + c] = v;
    }

    /// Sum of squared stored components; the torsion norm when the frame is
    /// γ-orthonormal.
    pub fn norm(&self) -> f64 {
        self.comps.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &TorsionTensor) -> f64 {
        self.comps.iter().zip(&other.comps).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &TorsionTensor) -> TorsionTensor {
        TorsionTensor {
            dim: self.dim,
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a - b).collect(),
            frame: self.frame,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pulls the tensor back along the linear map `m`:
    /// `(mT)(u, w) = m⁻¹ T(m u, m w)`, i.e.
    /// `(mT)^c_ab = (m⁻¹)^c_k T^k_ij m^i_a m^j_b`.
    ///
    /// With `m = B` this converts chart components to the frame `B`; with
    /// `m = B⁻¹` it converts back.
    pub fn pull_back(&self, m: &DMatrix<f64>, frame: FrameTag) -> TorsionTensor {
        let n = self.dim;
        let m_inv = m.clone().try_inverse().expect("pull-back map must be invertible");
        // T(m e_a, m e_b) in the original basis
        let mut out = TorsionTensor::zeros(n, frame);
        for a in 0..n {
            for b in (a + 1)..n {
                let mut image = DVector::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        let coef = m[(i, a)] * m[(j, b)];
                        if coef == 0.0 || i == j {
                            continue;
                        }
                        for k in 0..n {
                            image[k] += coef * self.get(i, j, k);
                        }
                    }
                }
                let back = &m_inv * image;
                for c in 0..n {
                    out.set(a, b, c, back[c]);
                }
            }
        }
        out
    }

    /// Chart components to the γ-orthonormal frame with basis matrix `frame`.
    pub fn chart_to_frame(&self, frame: &DMatrix<f64>) -> TorsionTensor {
        debug_assert_eq!(self.frame, FrameTag::Chart);
        self.pull_back(frame, FrameTag::Orthonormal)
    }

    /// γ-orthonormal components back to chart components.
    pub fn frame_to_chart(&self, frame: &DMatrix<f64>) -> TorsionTensor {
        debug_assert_eq!(self.frame, FrameTag::Orthonormal);
        let inv = frame.clone().try_inverse().expect("frame matrix is invertible");
        self.pull_back(&inv, FrameTag::Chart)
    }
}
