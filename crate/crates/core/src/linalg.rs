// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense linear-algebra kernels on top of nalgebra: SPD solves, symmetric square
//! roots, and the two small nonconvex/constrained quadratic minimizers used by the
//! rate computations and the estimation step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{CaseError, Result};

/// Cholesky factor of an SPD matrix, reusable for several right-hand sides.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(CaseError::InvalidDimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(CaseError::NumericFailure("non-finite matrix entry".into()));
        }
        let chol = m.clone().cholesky().ok_or_else(|| {
            CaseError::NumericFailure(format!(
                "matrix of size {} is not positive definite (condition estimate {:.3e})",
                m.nrows(),
                condition_estimate(m)
            ))
        })?;
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..m.nrows()).map(|i| l[(i, i)]).collect();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        if m.nrows() > 0 && (lo <= 0.0 || (hi / lo).powi(2) > 1e14) {
            return Err(CaseError::NumericFailure(format!(
                "matrix of size {} is numerically singular (condition estimate {:.3e})",
                m.nrows(),
                (hi / lo).powi(2)
            )));
        }
        Ok(Self { chol })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Ratio of extreme eigenvalues; `inf` when the smallest is not positive.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = ev.min();
    let hi = ev.max();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve `M x = b` for SPD `M`, checking the relative residual.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != m.nrows() {
        return Err(CaseError::InvalidDimension(format!("rhs length {} vs matrix {}", b.len(), m.nrows())));
    }
    let f = SpdFactor::new(m)?;
    let x = f.solve(b);
    let res = (m * &x - b).norm();
    let bn = b.norm();
    if !(res <= 1e-10 * bn.max(f64::MIN_POSITIVE)) && res > 1e-300 {
        // one step of iterative refinement before giving up
        let x2 = &x + f.solve(&(b - m * &x));
        let res2 = (m * &x2 - b).norm();
        if res2 <= 1e-10 * bn {
            return Ok(x2);
        }
        return Err(CaseError::NumericFailure(format!("spd_solve residual {res2:.3e} exceeds tolerance")));
    }
    Ok(x)
}

/// Inverse of an SPD matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SpdFactor::new(m)?.inverse())
}

/// Symmetric square root of an SPD matrix.
pub fn sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo > 0.0) || lo < 1e-14 * hi.abs() {
        return Err(CaseError::NumericFailure(format!(
            "matrix is not positive definite: smallest eigenvalue {lo:.6e}"
        )));
    }
    let mut scaled = eig.eigenvectors.clone();
    for k in 0..n {
        let s = eig.eigenvalues[k].sqrt();
        scaled.column_mut(k).scale_mut(s);
    }
    let mut s = scaled * eig.eigenvectors.transpose();
    // enforce exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Rows/columns `idx` of `m`.
pub fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

pub fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

pub fn subvec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn numerically_singular(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return false;
    }
    let sv = m.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    !(hi > 0.0) || lo <= 1e-11 * hi
}

/// Exact minimum of `x' A x - 2 b' x` over `{x : |x_i| >= bound for all i, C x = 0}`
/// for positive semidefinite `A`.
///
/// Every coordinate is either clamped at `+bound`, clamped at `-bound`, or free; for
/// each of the `3^n` patterns the free block is solved from its KKT system and kept
/// when feasible. Patterns with a singular KKT system are skipped: an optimum always
/// exists at a pattern where the reduced system is nonsingular, since any null
/// direction can be followed until another coordinate hits its bound.
pub fn min_quadratic_outside_box(
    a: &DMatrix<f64>,
    b: Option<&DVector<f64>>,
    bound: f64,
    eq: Option<&DMatrix<f64>>,
) -> Result<(f64, DVector<f64>)> {
    let n = a.nrows();
    if n == 0 {
        return Err(CaseError::InvalidDimension("empty quadratic".into()));
    }
    if n > 12 {
        return Err(CaseError::InvalidDimension(format!("quadratic of size {n} too large for enumeration")));
    }
    let zero = DVector::zeros(n);
    let b = b.unwrap_or(&zero);
    let k = eq.map_or(0, |c| c.nrows());
    let scale = a.abs().max().max(1.0) * bound * bound;
    let tol = 1e-9 * bound.max(1e-300);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(n as u32);
    let mut state = vec![0u8; n];
    for code in 0..total {
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let clamped: Vec<usize> = (0..n).filter(|&i| state[i] != 2).collect();
        let mut x = DVector::zeros(n);
        for &i in &clamped {
            x[i] = if state[i] == 0 { bound } else { -bound };
        }
        let nf = free.len();
        if nf > 0 {
            let dim = nf + k;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            for (ai, &i) in free.iter().enumerate() {
                for (bi, &j) in free.iter().enumerate() {
                    kkt[(ai, bi)] = a[(i, j)];
                }
                let mut r = b[i];
                for &j in &clamped {
                    r -= a[(i, j)] * x[j];
                }
                rhs[ai] = r;
            }
            if let Some(cm) = eq {
                for row in 0..k {
                    for (ai, &i) in free.iter().enumerate() {
                        kkt[(nf + row, ai)] = cm[(row, i)];
                        kkt[(ai, nf + row)] = cm[(row, i)];
                    }
                    let mut r = 0.0;
                    for &j in &clamped {
                        r -= cm[(row, j)] * x[j];
                    }
                    rhs[nf + row] = r;
                }
            }
            if numerically_singular(&kkt) {
                continue;
            }
            let sol = match kkt.lu().solve(&rhs) {
                Some(s) => s,
                None => continue,
            };
            let mut ok = true;
            for (ai, &i) in free.iter().enumerate() {
                let v = sol[ai];
                if !v.is_finite() || v.abs() < bound - tol {
                    ok = false;
                    break;
                }
                x[i] = v;
            }
            if !ok {
                continue;
            }
        } else if let Some(cm) = eq {
            let r = cm * &x;
            if r.amax() > 1e-12 * bound.max(1.0) {
                continue;
            }
        }
        let val = (x.transpose() * a * &x)[(0, 0)] - 2.0 * b.dot(&x);
        if best.as_ref().is_none_or(|(bv, _)| val < *bv - 1e-14 * scale) {
            best = Some((val, x));
        }
    }
    best.ok_or_else(|| CaseError::NumericFailure("no feasible point for constrained quadratic".into()))
}

/// Minimize `1/2 y' A y - b' y` subject to `y >= 0` for SPD `A`
/// (Lawson-Hanson active-set scheme adapted to a general quadratic).
pub fn nonneg_quadratic(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mut y = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = b.amax().max(a.abs().max()).max(1.0);
    let tol = 1e-13 * scale;
    for _outer in 0..(3 * n + 10) {
        let grad = a * &y - b;
        let mut t = None;
        let mut wmax = tol;
        for i in 0..n {
            if !passive[i] && -grad[i] > wmax {
                wmax = -grad[i];
                t = Some(i);
            }
        }
        let Some(t) = t else { break };
        passive[t] = true;
        for _inner in 0..(3 * n + 10) {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let app = principal(a, &idx);
            let bp = subvec(b, &idx);
            let zp = SpdFactor::new(&app)?.solve(&bp);
            if zp.iter().all(|&v| v > 0.0) {
                y.fill(0.0);
                for (ai, &i) in idx.iter().enumerate() {
                    y[i] = zp[ai];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (ai, &i) in idx.iter().enumerate() {
                if zp[ai] <= 0.0 {
                    let denom = y[i] - zp[ai];
                    let step = if denom > 0.0 { y[i] / denom } else { 0.0 };
                    alpha = alpha.min(step);
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (ai, &i) in idx.iter().enumerate() {
                y[i] += alpha * (zp[ai] - y[i]);
            }
            let mut removed = false;
            for (ai, &i) in idx.iter().enumerate() {
                if zp[ai] <= 0.0 && y[i] <= 1e-14 * scale {
                    y[i] = 0.0;
                    passive[i] = false;
                    removed = true;
                }
            }
            if !removed {
                // the blocking variable is numerically on the boundary; drop the smallest
                let (ai, _) = idx.iter().enumerate().min_by(|x, z| y[*x.1].total_cmp(&y[*z.1])).unwrap();
                y[idx[ai]] = 0.0;
                passive[idx[ai]] = false;
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| next());
        &a * a.transpose() + DMatrix::identity(n, n) * 0.3
    }

    #[test]
    fn identity_solve() {
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = spd_solve(&DMatrix::identity(3, 3), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn round_trip_solve() {
        let m = random_spd(5, 3);
        let x0 = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0, 5.0]);
        let b = &m * &x0;
        let x = spd_solve(&m, &b).unwrap();
        assert!((x - x0).amax() < 1e-10);
    }

    #[test]
    fn indefinite_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_solve(&m, &DVector::from_vec(vec![1.0, 1.0])), Err(CaseError::NumericFailure(_))));
        assert!(matches!(sqrt_spd(&m), Err(CaseError::NumericFailure(_))));
    }

    #[test]
    fn sqrt_identity() {
        let s = sqrt_spd(&DMatrix::identity(4, 4)).unwrap();
        assert!((s - DMatrix::identity(4, 4)).amax() < 1e-14);
    }

    #[test]
    fn outside_box_identity() {
        let (v, x) = min_quadratic_outside_box(&DMatrix::identity(3, 3), None, 1.0, None).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        assert!(x.iter().all(|c| (c.abs() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn outside_box_with_sum_constraint() {
        // min over |x_i| >= 1, x1 + x2 = 0 of x2^2 -> 1
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (v, _) = min_quadratic_outside_box(&a, None, 1.0, Some(&c)).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonneg_matches_unconstrained_when_interior() {
        let a = random_spd(4, 9);
        let y0 = DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0]);
        let b = &a * &y0;
        let y = nonneg_quadratic(&a, &b).unwrap();
        assert!((y - y0).amax() < 1e-10);
    }

    #[test]
    fn nonneg_kkt() {
        for seed in 0..50 {
            let a = random_spd(5, seed);
            let b = DVector::from_fn(5, |i, _| ((i as f64 + seed as f64) * 1.7).sin() * 3.0);
            let y = nonneg_quadratic(&a, &b).unwrap();
            let g = &a * &y - &b;
            for i in 0..5 {
                assert!(y[i] >= 0.0);
                assert!(g[i] >= -1e-9, "seed {seed} dual infeasible");
                if y[i] > 1e-12 {
                    assert!(g[i].abs() < 1e-9);
                }
            }
        }
    }
}
