//! Real spherical harmonics as homogeneous harmonic polynomials, orthonormal
//! for the sphere quadrature.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::quadrature::SphereQuadrature;
use crate::error::{Error, Result};
use crate::linalg::Subspace;

/// Exponent vectors of all monomials of degree `d` in `m` variables.
pub fn exponents(m: usize, d: usize) -> Vec<Vec<u32>> {
    fn rec(m: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == m {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(m, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, d as u32, &mut Vec::with_capacity(m), &mut out);
    out
}

/// A homogeneous polynomial of degree `l`, harmonic in R^m.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicPoly {
    pub l: usize,
    /// Coefficients over `exponents(m, l)`.
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicBasis {
    pub m: usize,
    pub l_max: usize,
    pub modes: Vec<HarmonicPoly>,
    monomials: Vec<Vec<Vec<u32>>>,
}

fn laplacian_matrix(m: usize, l: usize) -> DMatrix<f64> {
    let src = exponents(m, l);
    if l < 2 {
        return DMatrix::zeros(0, src.len());
    }
    let dst = exponents(m, l - 2);
    let mut a = DMatrix::zeros(dst.len(), src.len());
    for (c, e) in src.iter().enumerate() {
        for k in 0..m {
            if e[k] >= 2 {
                let mut t = e.clone();
                t[k] -= 2;
                let r = dst.iter().position(|d| *d == t).expect("lowered monomial");
                a[(r, c)] += (e[k] * (e[k] - 1)) as f64;
            }
        }
    }
    a
}

/// `dim H_l = C(m+l−1, l) − C(m+l−3, l−2)`.
pub fn harmonic_dim(m: usize, l: usize) -> usize {
    let c = |n: usize, k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
    c(m + l - 1, l) - if l >= 2 { c(m + l - 3, l - 2) } else { 0 }
}

impl HarmonicBasis {
    pub fn new(m: usize, l_max: usize, quad: &SphereQuadrature) -> Result<Self> {
        if quad.degree < 2 * l_max {
            return Err(Error::UnderResolved(format!("quadrature degree {} < 2 L_max = {}", quad.degree, 2 * l_max)));
        }
        let mut modes = Vec::new();
        let mut monomials = Vec::new();
        for l in 0..=l_max {
            let mons = exponents(m, l);
            let ker = if l < 2 { Subspace::full(mons.len()) } else { Subspace::null_space(&laplacian_matrix(m, l)) };
            if ker.dim() != harmonic_dim(m, l) {
                return Err(Error::Invalid(format!("harmonic kernel for l={l} has dim {}", ker.dim())));
            }
            // Gram matrix on the sphere, then symmetric orthonormalization
            let vals = DMatrix::from_fn(quad.len(), mons.len(), |n, c| monomial(&mons[c], &quad.nodes[n]));
            let b = &vals * ker.basis();
            let mut wb = b.clone();
            for (n, w) in quad.weights.iter().enumerate() {
                wb.row_mut(n).scale_mut(*w);
            }
            let gram = b.transpose() * &wb;
            let eig = SymmetricEigen::new(gram);
            let inv_sqrt = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
                * eig.eigenvectors.transpose();
            let coeffs = ker.basis() * inv_sqrt;
            for c in 0..coeffs.ncols() {
                modes.push(HarmonicPoly { l, coeffs: coeffs.column(c).iter().copied().collect() });
            }
            monomials.push(mons);
        }
        Ok(Self { m, l_max, modes, monomials })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eval(&self, k: usize, x: &[f64]) -> f64 {
        let p = &self.modes[k];
        self.monomials[p.l].iter().zip(&p.coeffs).map(|(e, c)| c * monomial(e, x)).sum()
    }

    /// `∇P(x)`.
    pub fn grad(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let p = &self.modes[k];
        let mut g = vec![0.0; self.m];
        for (e, c) in self.monomials[p.l].iter().zip(&p.coeffs) {
            for (d, gd) in g.iter_mut().enumerate() {
                if e[d] > 0 {
                    let mut t = e.clone();
                    t[d] -= 1;
                    *gd += c * e[d] as f64 * monomial(&t, x);
                }
            }
        }
        g
    }

    /// Values `P_k(x_n)` and gradients `∂_d P_k(x_n)` at many points, as
    /// `nodes × modes` matrices.
    pub fn eval_points(&self, pts: &[Vec<f64>]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let m = self.m;
        let np = pts.len();
        let nm = self.len();
        let mon_vals: Vec<DMatrix<f64>> = self
            .monomials
            .iter()
            .map(|mons| DMatrix::from_fn(np, mons.len(), |n, i| monomial(&mons[i], &pts[n])))
            .collect();
        let mut vals = DMatrix::zeros(np, nm);
        let mut grads = vec![DMatrix::zeros(np, nm); m];
        let mut start = 0;
        for l in 0..=self.l_max {
            let ks: Vec<usize> = (start..nm).take_while(|&k| self.modes[k].l == l).collect();
            let coef = DMatrix::from_fn(self.monomials[l].len(), ks.len(), |i, c| self.modes[ks[c]].coeffs[i]);
            vals.columns_mut(start, ks.len()).copy_from(&(&mon_vals[l] * &coef));
            if l > 0 {
                for (d, gd) in grads.iter_mut().enumerate() {
                    // ∂_d x^e = e_d x^{e − 1_d}
                    let lower = &self.monomials[l - 1];
                    let deriv = DMatrix::from_fn(lower.len(), self.monomials[l].len(), |r, c| {
                        let e = &self.monomials[l][c];
                        if e[d] == 0 {
                            return 0.0;
                        }
                        let mut t = e.clone();
                        t[d] -= 1;
                        if lower[r] == t {
                            e[d] as f64
                        } else {
                            0.0
                        }
                    });
                    gd.columns_mut(start, ks.len()).copy_from(&(&mon_vals[l - 1] * deriv * &coef));
                }
            }
            start += ks.len();
        }
        (vals, grads)
    }

    /// Coefficients of the degree-one mode `k` on the coordinates.
    pub fn linear_coords(&self, k: usize) -> Option<Vec<f64>> {
        let p = &self.modes[k];
        (p.l == 1).then(|| {
            let mut v = vec![0.0; self.m];
            for (e, c) in self.monomials[1].iter().zip(&p.coeffs) {
                let d = e.iter().position(|&x| x == 1).expect("linear monomial");
                v[d] += c;
            }
            v
        })
    }
}

fn monomial(e: &[u32], x: &[f64]) -> f64 {
    e.iter().zip(x).fold(1.0, |acc, (&p, &v)| acc * v.powi(p as i32))
}
