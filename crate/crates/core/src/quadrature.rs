//! Quadrature rules on the Euclidean unit sphere `S^{n-1}`.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Nodes on the unit sphere with positive weights summing to its area.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    dim: usize,
    nodes: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    /// Equispaced trapezoid rule on `S¹`; exact for trigonometric polynomials
    /// of degree below `count`.
    pub fn circle(count: usize) -> Self {
        let w = 2.0 * PI / count as f64;
        let nodes = (0..count)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / count as f64;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect();
        Self {
            dim: 2,
            nodes,
            weights: vec![w; count],
        }
    }

    /// Product rule on `S²`: Gauss–Legendre in `cos θ` times trapezoid in `φ`.
    pub fn sphere(polar: usize, azimuthal: usize) -> Self {
        let (zs, wz) = gauss_legendre(polar);
        let dphi = 2.0 * PI / azimuthal as f64;
        let mut nodes = Vec::with_capacity(polar * azimuthal);
        let mut weights = Vec::with_capacity(polar * azimuthal);
        for (z, w) in zs.iter().zip(&wz) {
            let r = (1.0 - z * z).max(0.0).sqrt();
            for j in 0..azimuthal {
                let phi = dphi * j as f64;
                nodes.push(DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), *z]));
                weights.push(w * dphi);
            }
        }
        Self {
            dim: 3,
            nodes,
            weights,
        }
    }

    /// Default rule: 256 nodes on `S¹`, 32×64 on `S²`.
    pub fn default_for(dim: usize) -> Result<Self> {
        Self::with_resolution(dim, if dim == 2 { 256 } else { 64 })
    }

    /// `resolution` is the node count on `S¹` and the azimuthal count on `S²`
    /// (with half as many polar nodes).
    pub fn with_resolution(dim: usize, resolution: usize) -> Result<Self> {
        match dim {
            2 if resolution >= 3 => Ok(Self::circle(resolution)),
            3 if resolution >= 4 => Ok(Self::sphere(resolution / 2, resolution)),
            2 | 3 => Err(Error::InvalidMetric(format!(
                "quadrature resolution {resolution} too small"
            ))),
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DVector<f64>, f64)> {
        self.nodes.iter().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = x;
        xs[n - 1 - i] = -x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sphere_area() {
        let c = SphereQuadrature::circle(256);
        assert!((c.weights().iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
        let s = SphereQuadrature::sphere(32, 64);
        assert!((s.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
        assert!(s.nodes().iter().all(|u| (u.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn circle_rule_is_exact_below_node_count() {
        let c = SphereQuadrature::circle(16);
        for deg in 1..16 {
            let s: f64 = c
                .iter()
                .map(|(u, w)| w * (deg as f64 * u[1].atan2(u[0])).cos())
                .sum();
            assert!(s.abs() < 1e-13, "degree {deg}: {s}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for p in 0..16 {
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((got - exact).abs() < 1e-14, "x^{p}: {got} vs {exact}");
        }
    }

    #[test]
    fn sphere_second_moments() {
        let s = SphereQuadrature::sphere(16, 32);
        for i in 0..3 {
            let m: f64 = s.iter().map(|(u, w)| w * u[i] * u[i]).sum();
            assert!((m - 4.0 * PI / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupported_dimension() {
        assert!(matches!(SphereQuadrature::default_for(5), Err(Error::UnsupportedDimension(5))));
    }
}
