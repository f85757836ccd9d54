//! Product quadrature on S^{m−1}: Gauss rules in the polar coordinate at each
//! level and a trapezoid rule on the final circle.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::model::half_gamma;

/// Nodes and weights of the Gauss rule for the weight `(1 − z²)^a` on [−1, 1].
pub fn gauss_gegenbauer(n: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    // monic recurrence for the Gegenbauer parameter μ = a + 1/2
    let mu = a + 0.5;
    let beta = |k: usize| {
        let k = k as f64;
        k * (k + 2.0 * mu - 1.0) / (4.0 * (k + mu) * (k + mu - 1.0))
    };
    let jac = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { beta(i.max(j)).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jac);
    // ∫(1 − z²)^a dz = B(1/2, a + 1)
    let mass = beta_half(a);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|k| (eig.eigenvalues[k], mass * eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

/// `B(1/2, a + 1)` for `a` a non-negative half-integer.
fn beta_half(a: f64) -> f64 {
    // a = (k − 3)/2 for the level S^{k−1}: B = √π Γ((k−1)/2)/Γ(k/2)
    let k = (2.0 * a + 3.0).round() as usize;
    std::f64::consts::PI.sqrt() * half_gamma(k - 1) / half_gamma(k)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereQuadrature {
    pub m: usize,
    /// Unit vectors, one per node.
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Polynomials of total degree up to this are integrated exactly.
    pub degree: usize,
}

impl SphereQuadrature {
    pub fn new(m: usize, degree: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Invalid(format!("sphere quadrature needs m >= 2, got {m}")));
        }
        let nc = degree + 1;
        let mut nodes: Vec<Vec<f64>> = (0..nc)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / nc as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let mut weights = vec![2.0 * std::f64::consts::PI / nc as f64; nc];
        let nz = degree / 2 + 1;
        for level in 3..=m {
            let (z, wz) = gauss_gegenbauer(nz, (level as f64 - 3.0) / 2.0);
            let mut nn = Vec::with_capacity(nodes.len() * nz);
            let mut nw = Vec::with_capacity(nodes.len() * nz);
            for (zi, wi) in z.iter().zip(&wz) {
                let s = (1.0 - zi * zi).sqrt();
                for (y, wy) in nodes.iter().zip(&weights) {
                    let mut p: Vec<f64> = y.iter().map(|v| v * s).collect();
                    p.push(*zi);
                    nn.push(p);
                    nw.push(wi * wy);
                }
            }
            nodes = nn;
            weights = nw;
        }
        Ok(Self { m, nodes, weights, degree })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}
