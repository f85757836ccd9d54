//! Named tensor subspaces, generated as null spaces or images inside explicit
//! product bases.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::maps;
use crate::error::{Error, Result};
use crate::linalg::{columns, Subspace};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceId {
    S2,
    S2_0,
    Lambda2,
    S3,
    S2Rm,
    RmS3,
    S2S2,
    S2S2_0,
    C,
    W,
    Ctilde,
    Wtilde,
    Y1,
    Y2,
    H21,
    Z1,
    Z2,
    Z3,
    Z4,
    Z5,
    H22,
}

impl SpaceId {
    pub const ALL: [SpaceId; 21] = [
        Self::S2,
        Self::S2_0,
        Self::Lambda2,
        Self::S3,
        Self::S2Rm,
        Self::RmS3,
        Self::S2S2,
        Self::S2S2_0,
        Self::C,
        Self::W,
        Self::Ctilde,
        Self::Wtilde,
        Self::Y1,
        Self::Y2,
        Self::H21,
        Self::Z1,
        Self::Z2,
        Self::Z3,
        Self::Z4,
        Self::Z5,
        Self::H22,
    ];

    pub fn rank(self) -> usize {
        use SpaceId::*;
        match self {
            S2 | S2_0 | Lambda2 => 2,
            S3 | S2Rm | Y1 | Y2 | H21 => 3,
            _ => 4,
        }
    }

    pub fn name(self) -> &'static str {
        use SpaceId::*;
        match self {
            S2 => "S2",
            S2_0 => "S2_0",
            Lambda2 => "Lambda2",
            S3 => "S3",
            S2Rm => "S2xRm",
            RmS3 => "RmxS3",
            S2S2 => "S2xS2",
            S2S2_0 => "S2xS2_0",
            C => "C",
            W => "W",
            Ctilde => "Ctilde",
            Wtilde => "Wtilde",
            Y1 => "Y1",
            Y2 => "Y2",
            H21 => "H21",
            Z1 => "Z1",
            Z2 => "Z2",
            Z3 => "Z3",
            Z4 => "Z4",
            Z5 => "Z5",
            H22 => "H22",
        }
    }

    /// Closed-form dimension.
    pub fn expected_dim(self, m: usize) -> usize {
        use SpaceId::*;
        let s2 = m * (m + 1) / 2;
        let l2 = m * (m - 1) / 2;
        let s3 = m * (m + 1) * (m + 2) / 6;
        let c = m * m * (m * m - 1) / 12;
        let w = m * (m + 1) * (m + 2) * (m.saturating_sub(3)) / 12;
        match self {
            S2 => s2,
            S2_0 => s2 - 1,
            Lambda2 => l2,
            S3 => s3,
            S2Rm => s2 * m,
            RmS3 => m * s3,
            S2S2 => s2 * s2,
            S2S2_0 => s2 * (s2 - 1),
            C | Ctilde => c,
            W | Wtilde => w,
            Y1 | Y2 => m,
            H21 => s2 * m - 2 * m,
            Z1 | Z2 | Z5 => s2 - 1,
            Z3 => l2,
            Z4 => 1,
            H22 => s2 * (s2 - 1) - 2 * (s2 - 1) - l2 - 1,
        }
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpaceId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SpaceId::ALL.iter().copied().find(|id| id.name().eq_ignore_ascii_case(s)).ok_or_else(|| Error::Config(format!("unknown space {s}")))
    }
}

/// A generated subspace of rank-k tensors over R^m.
#[derive(Clone, Debug)]
pub struct TensorSpace {
    pub id: SpaceId,
    pub m: usize,
    space: Subspace,
}

impl TensorSpace {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn rank(&self) -> usize {
        self.id.rank()
    }

    pub fn subspace(&self) -> &Subspace {
        &self.space
    }

    pub fn basis(&self) -> Vec<Tensor> {
        let k = self.rank();
        self.space.basis().column_iter().map(|c| Tensor::from_column(self.m, k, c.as_slice())).collect()
    }

    pub fn project(&self, t: &Tensor) -> Tensor {
        let v = DVector::from_column_slice(t.entries());
        Tensor::from_column(self.m, self.rank(), self.space.project(&v).as_slice())
    }

    pub fn projector(&self) -> DMatrix<f64> {
        self.space.projector()
    }

    /// `‖T − PT‖ ≤ tol·max(1, ‖T‖)`.
    pub fn is_member(&self, t: &Tensor, tol: f64) -> bool {
        t.dim() == self.m && t.rank() == self.rank() && self.distance(t) <= tol * t.norm().max(1.0)
    }

    pub fn distance(&self, t: &Tensor) -> f64 {
        self.space.residual(&DVector::from_column_slice(t.entries()))
    }

    /// Coordinates in the orthonormal basis.
    pub fn coords(&self, t: &Tensor) -> DVector<f64> {
        self.space.basis().transpose() * DVector::from_column_slice(t.entries())
    }

    pub fn from_coords(&self, c: &DVector<f64>) -> Tensor {
        Tensor::from_column(self.m, self.rank(), (self.space.basis() * c).as_slice())
    }

    pub fn basis_json(&self) -> serde_json::Value {
        serde_json::json!({
            "space": self.id.name(),
            "m": self.m,
            "dim": self.dim(),
            "basis": self.basis(),
        })
    }
}

fn unit(m: usize, k: usize) -> Tensor {
    Tensor::vector((0..m).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
}

fn sym2(m: usize) -> Vec<Tensor> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for i in 0..m {
        for j in i..m {
            out.push(Tensor::from_fn(m, 2, |x| {
                if i == j {
                    if x[0] == i && x[1] == i {
                        1.0
                    } else {
                        0.0
                    }
                } else if (x[0] == i && x[1] == j) || (x[0] == j && x[1] == i) {
                    r
                } else {
                    0.0
                }
            }));
        }
    }
    out
}

fn skew2(m: usize) -> Vec<Tensor> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            out.push(Tensor::from_fn(m, 2, |x| {
                if x[0] == i && x[1] == j {
                    r
                } else if x[0] == j && x[1] == i {
                    -r
                } else {
                    0.0
                }
            }));
        }
    }
    out
}

fn sym3(m: usize) -> Vec<Tensor> {
    let mut out = Vec::new();
    for i in 0..m {
        for j in i..m {
            for k in j..m {
                let key = [i, j, k];
                let t = Tensor::from_fn(m, 3, |x| {
                    let mut s = [x[0], x[1], x[2]];
                    s.sort_unstable();
                    if s == key {
                        1.0
                    } else {
                        0.0
                    }
                });
                let n = t.norm();
                out.push(t.scale(1.0 / n));
            }
        }
    }
    out
}

fn products(a: &[Tensor], b: &[Tensor]) -> Vec<Tensor> {
    a.iter().flat_map(|x| b.iter().map(move |y| x.outer(y).expect("rank <= 4"))).collect()
}

fn orthonormal_of(m: usize, rank: usize, ts: &[Tensor]) -> Subspace {
    Subspace::from_orthonormal(columns(m.pow(rank as u32), ts))
}

fn span_of(m: usize, rank: usize, ts: &[Tensor]) -> Subspace {
    Subspace::span(&columns(m.pow(rank as u32), ts))
}

/// Kernel of the linear map `f` inside `parent`.
fn kernel_within(parent: &Subspace, m: usize, rank: usize, f: impl Fn(&Tensor) -> Vec<f64>) -> Subspace {
    let cols: Vec<Vec<f64>> = parent.basis().column_iter().map(|c| f(&Tensor::from_column(m, rank, c.as_slice()))).collect();
    let rows = cols.first().map_or(0, Vec::len);
    let img = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    parent.restrict_coords(&img)
}


fn cat(parts: &[Tensor]) -> Vec<f64> {
    parts.iter().flat_map(|t| t.entries().iter().copied()).collect()
}

/// Lazily generated spaces for one ambient dimension.
pub struct Algebra {
    m: usize,
    cache: Vec<OnceLock<TensorSpace>>,
}

impl Algebra {
    pub fn new(m: usize) -> Result<Self> {
        if !(3..=10).contains(&m) {
            return Err(Error::Config(format!("dimension {m} outside 3..=10")));
        }
        Ok(Self { m, cache: (0..SpaceId::ALL.len()).map(|_| OnceLock::new()).collect() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn space(&self, id: SpaceId) -> &TensorSpace {
        let slot = SpaceId::ALL.iter().position(|&x| x == id).expect("listed id");
        self.cache[slot].get_or_init(|| TensorSpace { id, m: self.m, space: self.build(id) })
    }

    fn build(&self, id: SpaceId) -> Subspace {
        use SpaceId::*;
        let m = self.m;
        let d = Tensor::delta(m);
        let basis_of = |s: SpaceId| self.space(s).basis();
        match id {
            S2 => orthonormal_of(m, 2, &sym2(m)),
            Lambda2 => orthonormal_of(m, 2, &skew2(m)),
            S3 => orthonormal_of(m, 3, &sym3(m)),
            S2_0 => kernel_within(self.space(S2).subspace(), m, 2, |t| vec![t.trace(1, 2).unwrap().value()]),
            S2Rm => {
                let e: Vec<Tensor> = (0..m).map(|k| unit(m, k)).collect();
                orthonormal_of(m, 3, &products(&sym2(m), &e))
            }
            RmS3 => {
                let e: Vec<Tensor> = (0..m).map(|k| unit(m, k)).collect();
                orthonormal_of(m, 4, &products(&e, &sym3(m)))
            }
            S2S2 => orthonormal_of(m, 4, &products(&sym2(m), &sym2(m))),
            S2S2_0 => orthonormal_of(m, 4, &products(&sym2(m), &basis_of(S2_0))),
            C => {
                let parent = orthonormal_of(m, 4, &products(&skew2(m), &skew2(m)));
                kernel_within(&parent, m, 4, |t| {
                    let pair = t - &t.permuted(&[3, 4, 1, 2]);
                    let cyc = &(t + &t.permuted(&[2, 3, 1, 4])) + &t.permuted(&[3, 1, 2, 4]);
                    cat(&[pair, cyc])
                })
            }
            W => kernel_within(self.space(C).subspace(), m, 4, |t| t.trace(1, 4).unwrap().into_entries()),
            Ctilde => span_of(m, 4, &basis_of(C).iter().map(maps::s_unchecked).collect::<Vec<_>>()),
            Wtilde => span_of(m, 4, &basis_of(W).iter().map(maps::s_unchecked).collect::<Vec<_>>()),
            Y1 => span_of(m, 3, &(0..m).map(|k| d.outer(&unit(m, k)).unwrap()).collect::<Vec<_>>()),
            Y2 => span_of(m, 3, &(0..m).map(|k| maps::psi3(&unit(m, k)).unwrap()).collect::<Vec<_>>()),
            H21 => kernel_within(self.space(S2Rm).subspace(), m, 3, |t| cat(&[t.trace(1, 2).unwrap(), t.trace(1, 3).unwrap()])),
            Z1 => span_of(m, 4, &basis_of(S2_0).iter().map(maps::xi1_unchecked).collect::<Vec<_>>()),
            Z2 => span_of(m, 4, &basis_of(S2_0).iter().map(maps::xi2_unchecked).collect::<Vec<_>>()),
            Z3 => span_of(m, 4, &basis_of(Lambda2).iter().map(maps::xi3_unchecked).collect::<Vec<_>>()),
            Z4 => span_of(m, 4, &[maps::xi4(m, 1.0)]),
            Z5 => span_of(m, 4, &basis_of(S2_0).iter().map(maps::xi5_unchecked).collect::<Vec<_>>()),
            H22 => kernel_within(self.space(S2S2_0).subspace(), m, 4, |t| cat(&[t.trace(1, 2).unwrap(), t.trace(1, 3).unwrap()])),
        }
    }

    /// Matrix of a linear map from the basis of `domain` to flattened outputs.
    pub fn map_matrix(&self, domain: SpaceId, f: impl Fn(&Tensor) -> Tensor) -> DMatrix<f64> {
        let imgs: Vec<Tensor> = self.space(domain).basis().iter().map(f).collect();
        let n = imgs.first().map_or(0, |t| t.entries().len());
        columns(n, &imgs)
    }

    /// Kernel of `f` restricted to `domain`, as a subspace of the ambient tensors.
    pub fn kernel(&self, domain: SpaceId, f: impl Fn(&Tensor) -> Tensor) -> Subspace {
        let mat = self.map_matrix(domain, f);
        self.space(domain).subspace().restrict_coords(&mat)
    }

    /// Image of `f` on `domain`.
    pub fn image(&self, domain: SpaceId, f: impl Fn(&Tensor) -> Tensor) -> Subspace {
        Subspace::span(&self.map_matrix(domain, f))
    }
}

/// Generate a single space (uncached).
pub fn space_basis(id: SpaceId, m: usize) -> Result<TensorSpace> {
    let alg = Algebra::new(m)?;
    Ok(alg.space(id).clone())
}

/// Element of a space with coefficients uniform in [−1, 1] on its orthonormal basis.
pub fn random_element(id: SpaceId, m: usize, rng: &mut impl rand::Rng) -> Result<Tensor> {
    let sp = space_basis(id, m)?;
    Ok(sp.basis().iter().fold(Tensor::zeros(m, id.rank()), |acc, b| &acc + &b.scale(rng.gen_range(-1.0..1.0))))
}

/// `dims` table as CSV: one row per space, one column per m.
pub fn dims_csv(ms: &[usize]) -> Result<String> {
    let algs: Vec<Algebra> = ms.iter().map(|&m| Algebra::new(m)).collect::<Result<_>>()?;
    let mut out = String::from("space");
    for m in ms {
        out.push_str(&format!(",m={m}"));
    }
    out.push('\n');
    for id in SpaceId::ALL {
        out.push_str(id.name());
        for a in &algs {
            out.push_str(&format!(",{}", a.space(id).dim()));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_match_closed_forms_small_m() {
        for m in [3, 4] {
            let alg = Algebra::new(m).unwrap();
            for id in SpaceId::ALL {
                assert_eq!(alg.space(id).dim(), id.expected_dim(m), "{id} at m={m}");
            }
        }
    }

    #[test]
    fn wtilde_dimension_four_is_ten() {
        assert_eq!(space_basis(SpaceId::Wtilde, 4).unwrap().dim(), 10);
    }

    #[test]
    fn w_is_trivial_in_three_dimensions() {
        assert_eq!(space_basis(SpaceId::W, 3).unwrap().dim(), 0);
    }

    #[test]
    fn membership_basics() {
        let alg = Algebra::new(4).unwrap();
        let s2 = alg.space(SpaceId::S2);
        assert!(s2.is_member(&Tensor::delta(4), 1e-10));
        let skew = Tensor::from_fn(4, 2, |x| match (x[0], x[1]) {
            (0, 1) => 1.0,
            (1, 0) => -1.0,
            _ => 0.0,
        });
        assert!(!s2.is_member(&skew, 1e-10));
        assert!(!s2.is_member(&Tensor::zeros(4, 3), 1e-10));
    }

    #[test]
    fn basis_is_orthonormal_and_fixed_by_projector() {
        let alg = Algebra::new(4).unwrap();
        let sp = alg.space(SpaceId::H22);
        let b = sp.subspace().basis();
        let g = b.transpose() * b;
        assert!((g - DMatrix::identity(sp.dim(), sp.dim())).norm() < 1e-10);
        for t in sp.basis().iter().take(5) {
            assert!(sp.project(t).dist(t) < 1e-10);
        }
    }

    #[test]
    fn parse_ids() {
        assert_eq!("wtilde".parse::<SpaceId>().unwrap(), SpaceId::Wtilde);
        assert!("nope".parse::<SpaceId>().is_err());
    }
}
