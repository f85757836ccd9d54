//! Polynomials in m variables truncated at degree 3, stored as symmetric
//! coefficient tensors per degree.

use crate::tensor::Tensor;

pub const DEGREE: usize = 3;

/// `p(x) = Σ_d T_d(x, .., x)` with `T_d` symmetric of rank `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    m: usize,
    parts: Vec<Tensor>,
}

fn sym_all(t: Tensor) -> Tensor {
    match t.rank() {
        0 | 1 => t,
        2 => t.symmetrize(&[1, 2]).expect("rank 2"),
        _ => t.symmetrize(&[1, 2, 3]).expect("rank 3"),
    }
}

impl Poly {
    pub fn zero(m: usize) -> Self {
        Self { m, parts: (0..=DEGREE).map(|d| Tensor::zeros(m, d)).collect() }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        let mut p = Self::zero(m);
        p.parts[0] = Tensor::scalar(m, c);
        p
    }

    /// The coordinate function `x_k`.
    pub fn coordinate(m: usize, k: usize) -> Self {
        let mut p = Self::zero(m);
        p.parts[1].set(&[k], 1.0);
        p
    }

    /// Set the degree-`d` part; the tensor is symmetrized.
    pub fn with_part(mut self, t: Tensor) -> Self {
        let d = t.rank();
        assert!(d <= DEGREE && t.dim() == self.m);
        self.parts[d] = sym_all(t);
        self
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn part(&self, d: usize) -> &Tensor {
        &self.parts[d]
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { m: self.m, parts: self.parts.iter().zip(&other.parts).map(|(a, b)| a + b).collect() }
    }

    pub fn axpy(&mut self, c: f64, other: &Self) {
        for (a, b) in self.parts.iter_mut().zip(&other.parts) {
            if c != 0.0 {
                *a = &*a + &(b * c);
            }
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { m: self.m, parts: self.parts.iter().map(|a| a * c).collect() }
    }

    /// Product truncated at `DEGREE`.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.m);
        for (i, a) in self.parts.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.parts.iter().enumerate().take(DEGREE + 1 - i) {
                if b.is_zero() {
                    continue;
                }
                let prod = if i == 0 {
                    b * a.value()
                } else if j == 0 {
                    a * b.value()
                } else {
                    sym_all(a.outer(b).expect("degree <= 3"))
                };
                out.parts[i + j] = &out.parts[i + j] + &prod;
            }
        }
        out
    }

    /// `∂p/∂x_k`; the top-degree part is lost to truncation only if it was
    /// already beyond `DEGREE`.
    pub fn deriv(&self, k: usize) -> Self {
        let mut out = Self::zero(self.m);
        for d in 1..=DEGREE {
            let t = &self.parts[d];
            let lower = Tensor::from_fn(self.m, d - 1, |rest| {
                let mut idx = [k, 0, 0];
                idx[1..d].copy_from_slice(rest);
                *t.get(&idx[..d]) * d as f64
            });
            out.parts[d - 1] = lower;
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = self.parts[0].value();
        let m = self.m;
        for (flat, v) in self.parts[1].entries().iter().enumerate() {
            acc += v * x[flat];
        }
        for (flat, v) in self.parts[2].entries().iter().enumerate() {
            acc += v * x[flat / m] * x[flat % m];
        }
        for (flat, v) in self.parts[3].entries().iter().enumerate() {
            acc += v * x[flat / (m * m)] * x[(flat / m) % m] * x[flat % m];
        }
        acc
    }

    /// `p(q_1(x), .., q_m(x))`, truncated.
    pub fn compose(&self, q: &[Poly]) -> Self {
        let m = self.m;
        assert_eq!(q.len(), m);
        let mut out = Self::constant(m, self.parts[0].value());
        for a in 0..m {
            out.axpy(*self.parts[1].get(&[a]), &q[a]);
        }
        if self.parts[2].is_zero() && self.parts[3].is_zero() {
            return out;
        }
        let pairs: Vec<Vec<Poly>> = (0..m).map(|a| (0..m).map(|b| q[a].mul(&q[b])).collect()).collect();
        for a in 0..m {
            for b in 0..m {
                out.axpy(*self.parts[2].get(&[a, b]), &pairs[a][b]);
            }
        }
        if !self.parts[3].is_zero() {
            for a in 0..m {
                for b in 0..m {
                    for c in 0..m {
                        let v = *self.parts[3].get(&[a, b, c]);
                        if v != 0.0 {
                            out.axpy(v, &pairs[a][b].mul(&q[c]));
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, rng: &mut ChaCha8Rng) -> Poly {
        let mut p = Poly::constant(m, rng.gen_range(-1.0..1.0));
        for d in 1..=DEGREE {
            p = p.with_part(Tensor::from_fn(m, d, |_| rng.gen_range(-1.0..1.0)));
        }
        p
    }

    #[test]
    fn product_matches_pointwise_low_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 3;
        let mut p = random(m, &mut rng);
        let mut q = random(m, &mut rng);
        // keep the product inside the truncation
        p = p.with_part(Tensor::zeros(m, 2)).with_part(Tensor::zeros(m, 3));
        q = q.with_part(Tensor::zeros(m, 3));
        let x = [0.3, -0.2, 0.7];
        assert!((p.mul(&q).eval(&x) - p.eval(&x) * q.eval(&x)).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random(4, &mut rng);
        let x = [0.1, 0.2, -0.3, 0.4];
        let h = 1e-6;
        for k in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * h);
            assert!((p.deriv(k).eval(&x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn compose_with_coordinates_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random(3, &mut rng);
        let ids: Vec<Poly> = (0..3).map(|k| Poly::coordinate(3, k)).collect();
        let back = p.compose(&ids);
        for d in 0..=DEGREE {
            assert!(back.part(d).dist(p.part(d)) < 1e-14);
        }
    }
}
