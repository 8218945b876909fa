// SPDX-License-Identifier: MIT OR Apache-2.0

//! Comparison methods: SaRa, naive hard thresholding, lasso by coordinate descent,
//! BIC scoring and the plug-in `(s_p, tau_p)` estimator.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{CaseError, Result};
use crate::simlab::hamming_error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaraConfig {
    pub lambda: f64,
    pub h: usize,
}

/// Moving-window difference `W_i = mean(y[i+1..=i+h]) - mean(y[i-h+1..=i])`;
/// positions without a full two-sided window are 0.
pub fn sara_statistic(y: &[f64], h: usize) -> Result<Vec<f64>> {
    let p = y.len();
    if h == 0 || 2 * h >= p {
        return Err(CaseError::InvalidParameter(format!("SaRa window h = {h} invalid for length {p}")));
    }
    let mut pre = vec![0.0; p + 1];
    for i in 0..p {
        pre[i + 1] = pre[i] + y[i];
    }
    let hf = h as f64;
    Ok((0..p)
        .map(|i| {
            if i + 1 < h || i + h >= p {
                0.0
            } else {
                let right = pre[i + h + 1] - pre[i + 1];
                let left = pre[i + 1] - pre[i + 1 - h];
                (right - left) / hf
            }
        })
        .collect())
}

/// SaRa estimate `W_i 1{|W_i| > lambda}`.
pub fn sara(y: &[f64], cfg: &SaraConfig) -> Result<Vec<f64>> {
    if !(cfg.lambda > 0.0) {
        return Err(CaseError::InvalidParameter(format!("lambda must be positive, got {}", cfg.lambda)));
    }
    let w = sara_statistic(y, cfg.h)?;
    Ok(naive_threshold(&w, cfg.lambda))
}

/// `w_j 1{|w_j| > t}`.
pub fn naive_threshold(w: &[f64], t: f64) -> Vec<f64> {
    w.iter().map(|&v| if v.abs() > t { v } else { 0.0 }).collect()
}

/// Threshold on `|w_j|` for naive thresholding of the change-point differences: the square
/// root of `(r + 2 vartheta)^2 / (2 r) log p`, which is the optimal level on the squared scale
/// for differences with variance 2.
pub fn naive_threshold_level(vartheta: f64, r: f64, p: usize) -> f64 {
    ((r + 2.0 * vartheta).powi(2) / (2.0 * r) * (p as f64).ln()).sqrt()
}

/// Result of a lasso fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Cyclic coordinate descent for `1/2 b' G b - b' xty + lambda ||b||_1`, the Gram form of
/// `1/2 ||Y - X b||^2 + lambda ||b||_1`. Stops when no coordinate moves by more than `tol`.
pub fn lasso_cd_gram(
    gram: &DMatrix<f64>,
    xty: &[f64],
    lambda: f64,
    max_iter: usize,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<LassoFit> {
    let p = xty.len();
    if gram.nrows() != p || gram.ncols() != p {
        return Err(CaseError::InvalidDimension("Gram matrix and X'Y disagree".into()));
    }
    if !(lambda >= 0.0) {
        return Err(CaseError::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let mut beta = warm.map_or_else(|| vec![0.0; p], |w| w.to_vec());
    // c = xty - G beta
    let mut c: Vec<f64> = xty.to_vec();
    for j in 0..p {
        if beta[j] != 0.0 {
            for i in 0..p {
                c[i] -= gram[(i, j)] * beta[j];
            }
        }
    }
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let z = c[j] + gjj * beta[j];
            let new = soft(z, lambda) / gjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                let col = gram.column(j);
                for i in 0..p {
                    c[i] -= col[i] * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("lasso did not converge in {max_iter} sweeps at lambda = {lambda}");
    }
    Ok(LassoFit { beta, sweeps, converged })
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso on a design matrix.
pub fn lasso_cd(x: &DMatrix<f64>, y: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<LassoFit> {
    if x.nrows() != y.len() {
        return Err(CaseError::InvalidDimension("X and Y disagree".into()));
    }
    let gram = x.transpose() * x;
    let xty = x.transpose() * nalgebra::DVector::from_column_slice(y);
    lasso_cd_gram(&gram, xty.as_slice(), lambda, max_iter, tol, None)
}

/// Lasso objective `1/2 b' G b - b' xty + lambda ||b||_1`.
pub fn lasso_objective(gram: &DMatrix<f64>, xty: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let b = nalgebra::DVector::from_column_slice(beta);
    0.5 * b.dot(&(gram * &b)) - b.dot(&nalgebra::DVector::from_column_slice(xty))
        + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
}

/// Geometric grid of `n` penalties from `max |xty|` down to `ratio` times it.
pub fn lasso_lambda_grid(xty: &[f64], n: usize, ratio: f64) -> Vec<f64> {
    let lmax = xty.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (0..n).map(|k| lmax * ratio.powf(k as f64 / (n - 1).max(1) as f64)).collect()
}

/// Smallest Hamming error along a warm-started lasso path (tuning that knows `beta`).
pub fn lasso_ideal(gram: &DMatrix<f64>, xty: &[f64], beta: &[f64], lambdas: &[f64]) -> Result<(f64, usize, Vec<f64>)> {
    let mut warm: Option<Vec<f64>> = None;
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for &lam in lambdas {
        let fit = lasso_cd_gram(gram, xty, lam, 2000, 1e-7, warm.as_deref())?;
        let err = hamming_error(&fit.beta, beta)?;
        if best.as_ref().is_none_or(|b| err < b.1) {
            best = Some((lam, err, fit.beta.clone()));
        }
        warm = Some(fit.beta);
    }
    best.ok_or_else(|| CaseError::InvalidInput("empty lambda grid".into()))
}

/// `1/2 rss + log(p) k`.
pub fn bic_score(rss: f64, support_size: usize, p: usize) -> f64 {
    0.5 * rss + (p as f64).ln() * support_size as f64
}

/// Residual sum of squares of a change-point fit: the mean path is built from the jumps
/// `beta[i] = theta_{i+1} - theta_i` (the last coordinate is ignored) and the overall level
/// is fitted by least squares.
pub fn changepoint_rss(y: &[f64], jumps: &[f64]) -> f64 {
    let p = y.len();
    let mut path = vec![0.0; p];
    for i in 1..p {
        path[i] = path[i - 1] + jumps[i - 1];
    }
    let level = y.iter().zip(&path).map(|(a, b)| a - b).sum::<f64>() / p as f64;
    y.iter().zip(&path).map(|(a, b)| (a - b - level).powi(2)).sum()
}

/// Plug-in estimates `(s_hat, tau_hat)`: the number of nonzeros and the median nonzero magnitude.
pub fn estimate_sparsity_strength(beta: &[f64]) -> Result<(usize, f64)> {
    let mut mags: Vec<f64> = beta.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    if mags.is_empty() {
        return Err(CaseError::NoSignalDetected);
    }
    mags.sort_by(f64::total_cmp);
    let n = mags.len();
    let med = if n % 2 == 1 { mags[n / 2] } else { 0.5 * (mags[n / 2 - 1] + mags[n / 2]) };
    Ok((n, med))
}

/// Best threshold for one statistic vector given the truth: returns `(errors, lambda)`.
/// Only the first `len` coordinates are scored.
pub fn best_threshold(w: &[f64], beta: &[f64], len: usize) -> (usize, f64) {
    let mut order: Vec<usize> = (0..len).filter(|&i| w[i] != 0.0).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    let base: usize = (0..len).filter(|&i| beta[i] != 0.0).count();
    let mut best = (base, order.first().map_or(1.0, |&i| w[i].abs()));
    let mut cur = base as i64;
    for (k, &i) in order.iter().enumerate() {
        let wrong = (beta[i] == 0.0 || (w[i] > 0.0) != (beta[i] > 0.0)) as i64;
        cur += wrong - (beta[i] != 0.0) as i64;
        // the cut must separate distinct magnitudes
        let next = order.get(k + 1).map(|&j| w[j].abs());
        if next.is_none_or(|v| v < w[i].abs()) && (cur as usize) < best.0 {
            let lam = next.map_or(0.5 * w[i].abs(), |v| 0.5 * (v + w[i].abs()));
            best = (cur as usize, lam);
        }
    }
    best
}

/// SaRa with `(h, lambda)` chosen to minimize the Hamming error against `beta`.
/// Scores the first `len` coordinates. Returns `(errors, h, lambda)`.
pub fn sara_ideal(y: &[f64], beta: &[f64], hs: &[usize], len: usize) -> Result<(usize, usize, f64)> {
    let res: Vec<Result<(usize, usize, f64)>> = hs
        .par_iter()
        .map(|&h| {
            let w = sara_statistic(y, h)?;
            let (e, lam) = best_threshold(&w, beta, len);
            Ok((e, h, lam))
        })
        .collect();
    let mut best: Option<(usize, usize, f64)> = None;
    for r in res {
        let r = r?;
        if best.is_none_or(|b| r.0 < b.0) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| CaseError::InvalidInput("empty SaRa window grid".into()))
}

/// SaRa with `(h, lambda)` chosen by BIC over `hs` and a geometric grid of
/// `n_lambda` thresholds per window. Returns the chosen estimate and tuning.
pub fn sara_bic(y: &[f64], hs: &[usize], n_lambda: usize) -> Result<(Vec<f64>, SaraConfig)> {
    let p = y.len();
    let mut best: Option<(f64, Vec<f64>, SaraConfig)> = None;
    for &h in hs {
        let w = sara_statistic(y, h)?;
        let wmax = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if wmax == 0.0 {
            continue;
        }
        for k in 0..n_lambda {
            let lam = wmax * (0.05f64).powf(k as f64 / (n_lambda - 1).max(1) as f64) * 0.999;
            let est = naive_threshold(&w, lam);
            let kk = est[..p - 1].iter().filter(|v| **v != 0.0).count();
            let score = bic_score(changepoint_rss(y, &est), kk, p);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, est, SaraConfig { lambda: lam, h }));
            }
        }
    }
    best.map(|(_, e, c)| (e, c)).ok_or(CaseError::NoSignalDetected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sara_constant_is_zero() {
        let y = vec![3.0; 40];
        let out = sara(&y, &SaraConfig { lambda: 0.1, h: 4 }).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sara_single_jump() {
        let mut y = vec![0.0; 40];
        for v in y.iter_mut().skip(21) {
            *v = 2.5;
        }
        let w = sara_statistic(&y, 5).unwrap();
        assert!((w[20] - 2.5).abs() < 1e-14);
        assert!(w[20].abs() >= w.iter().fold(0.0f64, |a, v| a.max(v.abs())) - 1e-14);
    }

    #[test]
    fn sara_window_checked() {
        assert!(sara_statistic(&[1.0; 10], 5).is_err());
        assert!(sara_statistic(&[1.0; 10], 0).is_err());
    }

    #[test]
    fn threshold_basics() {
        let w = [1.0, -3.0, 0.5];
        assert!(naive_threshold(&w, f64::INFINITY).iter().all(|v| *v == 0.0));
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        let a = naive_threshold(&w, 0.8);
        let b = naive_threshold(&neg, 0.8);
        for i in 0..3 {
            assert_eq!(a[i], -b[i]);
        }
    }

    #[test]
    fn lasso_zero_above_lambda_max() {
        let x = DMatrix::from_fn(8, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let y: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let xty = x.transpose() * nalgebra::DVector::from_column_slice(&y);
        let fit = lasso_cd(&x, &y, xty.amax() * 1.0001, 100, 1e-10).unwrap();
        assert!(fit.beta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lasso_orthogonal_least_squares() {
        let x = DMatrix::<f64>::identity(4, 4);
        let y = vec![1.0, -2.0, 0.5, 3.0];
        let fit = lasso_cd(&x, &y, 0.0, 100, 1e-12).unwrap();
        for (b, v) in fit.beta.iter().zip(&y) {
            assert!((b - v).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsity_strength() {
        let (s, t) = estimate_sparsity_strength(&[0.0, 2.0, 0.0, -5.0, 9.0]).unwrap();
        assert_eq!((s, t), (3, 5.0));
        assert_eq!(estimate_sparsity_strength(&[0.0; 4]), Err(CaseError::NoSignalDetected));
    }

    #[test]
    fn bic_zero_model() {
        assert_eq!(bic_score(10.0, 0, 100), 5.0);
    }

    #[test]
    fn best_threshold_brute_force() {
        let w = [0.3, -2.0, 1.5, 0.0, -0.7, 2.2, 1.5];
        let beta = [0.0, -1.0, 1.0, 1.0, 0.0, -1.0, 0.0];
        let (e, lam) = best_threshold(&w, &beta, 7);
        let brute = [0.0, 0.2, 0.5, 1.0, 1.6, 2.1, 2.5]
            .iter()
            .map(|&t| hamming_error(&naive_threshold(&w, t), &beta).unwrap())
            .min()
            .unwrap();
        assert_eq!(e, brute);
        assert_eq!(hamming_error(&naive_threshold(&w, lam), &beta).unwrap(), e);
    }
}
