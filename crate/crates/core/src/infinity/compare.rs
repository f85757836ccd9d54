//! Equality of Weyl tensors up to an orthogonal change of frame.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::expansion::random_orthogonal;
use crate::tensor::Tensor;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Matched,
    NotMatched,
    /// Invariants agree but no rotation was found.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylMatch {
    pub status: MatchStatus,
    /// `W1 = W2.rotate(Q)` when matched; otherwise the best candidate.
    pub rotation: Option<DMatrix<f64>>,
    /// `|W2·Q − W1| / |W1|` at the best candidate.
    pub residual: f64,
    pub invariant_gap: f64,
}

impl WeylMatch {
    pub fn matched(&self) -> bool {
        self.status == MatchStatus::Matched
    }
}

/// Eigenvalues of `h ↦ W_ikjl h_kl` on trace-free symmetric matrices, plus `|W|`.
pub fn weyl_invariants(w: &Tensor) -> Vec<f64> {
    let m = w.dim();
    // orthonormal basis of S²₀
    let mut basis: Vec<DMatrix<f64>> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let mut e = DMatrix::zeros(m, m);
            e[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
            e[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
            basis.push(e);
        }
    }
    for k in 1..m {
        let kf = k as f64;
        let mut e = DMatrix::zeros(m, m);
        for i in 0..k {
            e[(i, i)] = 1.0;
        }
        e[(k, k)] = -kf;
        basis.push(e / (kf * (kf + 1.0)).sqrt());
    }
    let apply = |h: &DMatrix<f64>| DMatrix::from_fn(m, m, |i, j| {
        let mut s = 0.0;
        for k in 0..m {
            for l in 0..m {
                s += w.get(&[i, k, j, l]) * h[(k, l)];
            }
        }
        s
    });
    let n = basis.len();
    let images: Vec<DMatrix<f64>> = basis.iter().map(apply).collect();
    let op = DMatrix::from_fn(n, n, |a, b| basis[a].dot(&images[b]));
    let op = (&op + op.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(op).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev.push(w.norm());
    ev
}

fn cayley(s: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(m, m);
    let mut c = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            k[(i, j)] = s[c];
            k[(j, i)] = -s[c];
            c += 1;
        }
    }
    let id = DMatrix::<f64>::identity(m, m);
    (&id - &k).try_inverse().expect("I − K invertible for skew K") * (&id + &k)
}

fn residual_vec(w1: &Tensor, w2: &Tensor, q: &DMatrix<f64>) -> DVector<f64> {
    let d = &w2.rotate(q) - w1;
    DVector::from_column_slice(d.entries())
}

/// Levenberg–Marquardt over `Q0·cayley(S)` with a finite-difference Jacobian.
fn refine(w1: &Tensor, w2: &Tensor, q0: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let m = w1.dim();
    let np = m * (m - 1) / 2;
    let mut q = q0;
    let mut r = residual_vec(w1, w2, &q);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let h = 1e-7;
    for _ in 0..200 {
        let mut jac = DMatrix::zeros(r.len(), np);
        for p in 0..np {
            let mut s = DVector::zeros(np);
            s[p] = h;
            let rp = residual_vec(w1, w2, &(&q * cayley(&s, m)));
            jac.set_column(p, &((rp - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let qn = &q * cayley(&step, m);
            let rn = residual_vec(w1, w2, &qn);
            let cn = rn.norm_squared();
            if cn < cost {
                let done = step.amax() < 1e-14 || cost - cn < 1e-30;
                q = qn;
                r = rn;
                cost = cn;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    // re-orthogonalize against accumulated drift
    let svd = q.clone().svd(true, true);
    let q = svd.u.unwrap() * svd.v_t.unwrap();
    let res = residual_vec(w1, w2, &q).norm();
    (q, res)
}

fn signed_permutations(m: usize) -> Vec<DMatrix<f64>> {
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..m {
        perms = perms
            .into_iter()
            .flat_map(|p| (0..m).filter(|k| !p.contains(k)).map(|k| [p.clone(), vec![k]].concat()).collect::<Vec<_>>())
            .collect();
    }
    let mut out = Vec::new();
    for p in &perms {
        for signs in 0..(1usize << m) {
            out.push(DMatrix::from_fn(m, m, |i, j| if p[i] == j { if signs >> i & 1 == 1 { -1.0 } else { 1.0 } } else { 0.0 }));
        }
    }
    out
}

/// `W_iabc W_jabc`, which transforms like `Q·M·Qᵀ`.
fn square(w: &Tensor) -> DMatrix<f64> {
    let m = w.dim();
    let e = w.entries();
    let n = m * m * m;
    DMatrix::from_fn(m, m, |i, j| (0..n).map(|t| e[i * n + t] * e[j * n + t]).sum())
}

/// Candidates `V1·S·V2ᵀ` from the eigenframes of the squares, one per sign
/// pattern `S`. Empty when the spectrum is degenerate (always so for m = 4,
/// where the square is a multiple of δ).
fn square_frame_seeds(w1: &Tensor, w2: &Tensor) -> Vec<DMatrix<f64>> {
    let m = w1.dim();
    let eig = |w: &Tensor| {
        let e = SymmetricEigen::new(square(w));
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
        let vals: Vec<f64> = order.iter().map(|&k| e.eigenvalues[k]).collect();
        let vecs = DMatrix::from_fn(m, m, |i, c| e.eigenvectors[(i, order[c])]);
        (vals, vecs)
    };
    let (v1, f1) = eig(w1);
    let (_, f2) = eig(w2);
    let spread = v1.last().unwrap().abs().max(f64::MIN_POSITIVE);
    if v1.windows(2).any(|p| p[1] - p[0] < 1e-6 * spread) || m > 10 {
        return Vec::new();
    }
    (0..(1usize << m))
        .map(|signs| {
            let s = DMatrix::from_fn(m, m, |i, j| if i == j { if signs >> i & 1 == 1 { -1.0 } else { 1.0 } } else { 0.0 });
            &f1 * s * f2.transpose()
        })
        .collect()
}

/// Search for an orthogonal `Q` with `W1 = W2.rotate(Q)`.
pub fn compare_weyl_up_to_rotation(w1: &Tensor, w2: &Tensor, seed: u64) -> WeylMatch {
    compare_weyl_tol(w1, w2, tol::WEYL_MATCH, seed)
}

pub fn compare_weyl_tol(w1: &Tensor, w2: &Tensor, rel_tol: f64, seed: u64) -> WeylMatch {
    let m = w1.dim();
    assert_eq!(m, w2.dim(), "Weyl tensors of different dimension");
    let scale = w1.norm().max(w2.norm());
    if scale == 0.0 {
        return WeylMatch { status: MatchStatus::Matched, rotation: Some(DMatrix::identity(m, m)), residual: 0.0, invariant_gap: 0.0 };
    }
    let (i1, i2) = (weyl_invariants(w1), weyl_invariants(w2));
    let invariant_gap = i1.iter().zip(&i2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    if invariant_gap > rel_tol {
        return WeylMatch { status: MatchStatus::NotMatched, rotation: None, residual: f64::NAN, invariant_gap };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = vec![DMatrix::identity(m, m)];
    if m <= 4 {
        let mut perms: Vec<(f64, DMatrix<f64>)> =
            signed_permutations(m).into_iter().map(|q| (residual_vec(w1, w2, &q).norm(), q)).collect();
        perms.sort_by(|a, b| a.0.total_cmp(&b.0));
        seeds.extend(perms.into_iter().take(8).map(|p| p.1));
    }
    seeds.extend(square_frame_seeds(w1, w2));
    for _ in 0..tol::ROTATION_STARTS {
        seeds.push(random_orthogonal(m, &mut |_| StandardNormal.sample(&mut rng)));
    }
    let mut best: Option<(DMatrix<f64>, f64)> = None;
    for q0 in seeds {
        let (q, res) = refine(w1, w2, q0);
        if best.as_ref().map_or(true, |b| res < b.1) {
            best = Some((q, res));
        }
        if res <= rel_tol * scale * 1e-2 {
            break;
        }
    }
    let (q, res) = best.expect("at least one seed");
    let residual = res / scale;
    let status = if residual <= rel_tol { MatchStatus::Matched } else { MatchStatus::Inconclusive };
    WeylMatch { status, rotation: Some(q), residual, invariant_gap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::spaces::{Algebra, SpaceId};
    use rand::Rng;

    fn random_weyl(m: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = Algebra::new(m).unwrap().space(SpaceId::W).clone();
        sp.basis().iter().fold(Tensor::zeros(m, 4), |acc, b| &acc + &b.scale(rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn identical_tensors_match() {
        let w = random_weyl(4, 1);
        let r = compare_weyl_up_to_rotation(&w, &w, 0);
        assert!(r.matched());
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn rotated_conjugate_is_recovered() {
        for m in [4, 5, 6] {
            let w = random_weyl(m, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let q = random_orthogonal(m, &mut |_| StandardNormal.sample(&mut rng));
            let w2 = w.rotate(&q.transpose());
            let r = compare_weyl_up_to_rotation(&w, &w2, 1);
            assert!(r.matched(), "m={m} residual {}", r.residual);
            assert!(w2.rotate(r.rotation.as_ref().unwrap()).dist(&w) < 1e-6 * w.norm());
        }
    }

    #[test]
    fn different_spectra_do_not_match() {
        let r = compare_weyl_up_to_rotation(&random_weyl(4, 3), &random_weyl(4, 4), 0);
        assert_eq!(r.status, MatchStatus::NotMatched);
    }
}
