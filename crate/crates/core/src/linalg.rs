//! Orthonormal subspaces of flattened tensor spaces, null spaces and ranks.

use nalgebra::{DMatrix, DVector};
use num::{BigRational, Zero};

use crate::tensor::Tensor;
use crate::tol::RANK_REL_TOL;

/// Column-orthonormal basis of a subspace of R^n.
#[derive(Clone, Debug)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

fn singular_cut(sv: &DVector<f64>) -> f64 {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    RANK_REL_TOL * smax
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Self { basis: DMatrix::zeros(ambient, 0) }
    }

    pub fn full(ambient: usize) -> Self {
        Self { basis: DMatrix::identity(ambient, ambient) }
    }

    /// Wrap columns that are already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    /// Span of the columns of `vectors`.
    pub fn span(vectors: &DMatrix<f64>) -> Self {
        let n = vectors.nrows();
        if vectors.ncols() == 0 || vectors.iter().all(|x| *x == 0.0) {
            return Self::zero(n);
        }
        let svd = vectors.clone().svd(true, false);
        let u = svd.u.expect("u requested");
        let cut = singular_cut(&svd.singular_values);
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > cut).collect();
        Self { basis: u.select_columns(&keep) }
    }

    pub fn span_tensors(ambient: usize, ts: &[Tensor]) -> Self {
        Self::span(&columns(ambient, ts))
    }

    /// Null space of `a` (rows are constraints).
    pub fn null_space(a: &DMatrix<f64>) -> Self {
        let n = a.ncols();
        if a.nrows() == 0 || a.iter().all(|x| *x == 0.0) {
            return Self::full(n);
        }
        // reduce a tall constraint block to its n x n triangular factor first
        let square = if a.nrows() > n {
            a.clone().qr().r()
        } else {
            let mut p = DMatrix::zeros(n, n);
            p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
            p
        };
        let svd = square.svd(false, true);
        let vt = svd.v_t.expect("v requested");
        let cut = singular_cut(&svd.singular_values);
        let rows: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= cut).collect();
        Self { basis: vt.select_rows(&rows).transpose() }
    }

    /// Vectors of `self` annihilated by `constraints` (rows act on the ambient space).
    pub fn restrict(&self, constraints: &DMatrix<f64>) -> Self {
        let reduced = constraints * &self.basis;
        let ns = Self::null_space(&reduced);
        let mut b = &self.basis * ns.basis;
        orthonormalize_in_place(&mut b);
        Self { basis: b }
    }

    /// Restrict by a constraint matrix written in this subspace's coordinates.
    pub fn restrict_coords(&self, constraint_in_coords: &DMatrix<f64>) -> Subspace {
        let ns = Subspace::null_space(constraint_in_coords);
        Subspace::from_orthonormal(&self.basis * ns.basis)
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `‖v − Pv‖`.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        (v - self.project(v)).norm()
    }

    /// Largest residual of `other`'s basis vectors off `self`.
    pub fn containment_gap(&self, other: &Subspace) -> f64 {
        if other.dim() == 0 {
            return 0.0;
        }
        let r = &other.basis - &self.basis * (self.basis.transpose() * &other.basis);
        r.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn contains(&self, other: &Subspace, tol: f64) -> bool {
        self.containment_gap(other) <= tol
    }

    pub fn sum(&self, other: &Subspace) -> Subspace {
        let mut m = DMatrix::zeros(self.ambient(), self.dim() + other.dim());
        m.view_mut((0, 0), (self.ambient(), self.dim())).copy_from(&self.basis);
        m.view_mut((0, self.dim()), (self.ambient(), other.dim())).copy_from(&other.basis);
        Subspace::span(&m)
    }

    /// dim(self ∩ other) from dim(self) + dim(other) − dim(self + other).
    pub fn intersection_dim(&self, other: &Subspace) -> usize {
        self.dim() + other.dim() - self.sum(other).dim()
    }

    /// Same subspace: two containments plus dimension equality.
    pub fn equals(&self, other: &Subspace, tol: f64) -> bool {
        self.dim() == other.dim() && self.contains(other, tol) && other.contains(self, tol)
    }
}

fn orthonormalize_in_place(b: &mut DMatrix<f64>) {
    if b.ncols() == 0 {
        return;
    }
    let q = b.clone().qr().q();
    *b = q.columns(0, b.ncols()).into_owned();
}

/// Tensors as matrix columns.
pub fn columns(ambient: usize, ts: &[Tensor]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(ambient, ts.len());
    for (j, t) in ts.iter().enumerate() {
        assert_eq!(t.entries().len(), ambient);
        m.column_mut(j).copy_from_slice(t.entries());
    }
    m
}

/// Numerical rank with the relative singular-value cut.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let cut = singular_cut(&sv);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Exact rank by Gaussian elimination over the rationals.
pub fn exact_rank(mut rows: Vec<Vec<BigRational>>) -> usize {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, p);
        let pivot = rows[r][c].clone();
        for i in (r + 1)..rows.len() {
            if rows[i][c].is_zero() {
                continue;
            }
            let f = rows[i][c].clone() / pivot.clone();
            for j in c..ncols {
                let v = rows[r][j].clone() * f.clone();
                rows[i][j] -= v;
            }
        }
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    r
}
