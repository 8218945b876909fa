// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gram matrix families and finite-order linear filters.
//!
//! All indices are 0-based. The change-point Gram matrix is `min(i, j) + 1`
//! so that it agrees with the usual 1-based `min(i, j)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{CaseError, Result};
use crate::linalg;
use crate::quad;

/// Order-`h` linear filter with coefficients `eta[0..=h]`, `eta[0] == 1`.
///
/// Row `i` of the induced matrix `D` has `eta[k]` in column `i + k`;
/// rows near the bottom edge drop the columns past `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFilter {
    coeffs: Vec<f64>,
}

impl LinearFilter {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(CaseError::InvalidFilter("filter needs at least one coefficient".into()));
        }
        if coeffs[0] != 1.0 {
            return Err(CaseError::InvalidFilter(format!("leading coefficient must be 1, got {}", coeffs[0])));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(CaseError::InvalidFilter("non-finite coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn identity() -> Self {
        Self { coeffs: vec![1.0] }
    }

    /// `(1, -1)`.
    pub fn first_difference() -> Self {
        Self { coeffs: vec![1.0, -1.0] }
    }

    /// `(1, -2, 1)`.
    pub fn second_difference() -> Self {
        Self { coeffs: vec![1.0, -2.0, 1.0] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_identity(&self) -> bool {
        self.coeffs.len() == 1
    }

    pub fn is_second_difference(&self) -> bool {
        self.coeffs == [1.0, -2.0, 1.0]
    }
}

/// Which family a [`GramModel`] belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum GramKind {
    /// `G(i, j) = min(i, j)` in 1-based indexing.
    ChangePoint,
    /// FARIMA(0, phi, 0) autocovariance normalized to unit variance.
    SpectralToeplitz { phi: f64 },
    /// `G(i, j) = (1 + scale |i - j|)^(-rate)`.
    PowerDecay { rate: f64, scale: f64 },
    /// Arbitrary symmetric matrix.
    Dense,
}

#[derive(Debug, Clone)]
enum Storage {
    None,
    Lags(Arc<Vec<f64>>),
    Dense(Arc<DMatrix<f64>>),
}

/// A structured `p x p` Gram matrix with exact entry access. Cheap to clone.
#[derive(Debug, Clone)]
pub struct GramModel {
    p: usize,
    kind: GramKind,
    storage: Storage,
}

/// Change-point Gram matrix `min(i, j)`.
pub fn gram_changepoint(p: usize) -> Result<GramModel> {
    if p < 2 {
        return Err(CaseError::InvalidDimension(format!("change-point model needs p >= 2, got {p}")));
    }
    Ok(GramModel { p, kind: GramKind::ChangePoint, storage: Storage::None })
}

/// Toeplitz Gram matrix of FARIMA(0, phi, 0) noise with unit variance.
pub fn gram_farima(p: usize, phi: f64) -> Result<GramModel> {
    if p == 0 {
        return Err(CaseError::InvalidDimension("p must be positive".into()));
    }
    if !(phi > 0.0 && phi < 0.5) {
        return Err(CaseError::InvalidParameter(format!("phi must lie in (0, 1/2), got {phi}")));
    }
    Ok(GramModel { p, kind: GramKind::SpectralToeplitz { phi }, storage: Storage::Lags(Arc::new(farima_acov(phi, p))) })
}

/// Power-decay Gram matrix `(1 + scale |i - j|)^(-rate)`.
pub fn gram_powerdecay(p: usize, rate: f64, scale: f64) -> Result<GramModel> {
    if p == 0 {
        return Err(CaseError::InvalidDimension("p must be positive".into()));
    }
    if !(rate > 0.0 && rate.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return Err(CaseError::InvalidParameter(format!(
            "rate and scale must be positive, got rate={rate} scale={scale}"
        )));
    }
    let lags = (0..p).map(|k| (1.0 + scale * k as f64).powf(-rate)).collect();
    Ok(GramModel { p, kind: GramKind::PowerDecay { rate, scale }, storage: Storage::Lags(Arc::new(lags)) })
}

/// Dense symmetric Gram matrix.
pub fn gram_dense(values: DMatrix<f64>) -> Result<GramModel> {
    let p = values.nrows();
    if p == 0 || values.ncols() != p {
        return Err(CaseError::InvalidDimension(format!(
            "dense Gram matrix must be square and non-empty, got {}x{}",
            values.nrows(),
            values.ncols()
        )));
    }
    for i in 0..p {
        for j in 0..i {
            let (a, b) = (values[(i, j)], values[(j, i)]);
            if !a.is_finite() || (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                return Err(CaseError::InvalidInput(format!("dense Gram matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(GramModel { p, kind: GramKind::Dense, storage: Storage::Dense(Arc::new(values)) })
}

impl GramModel {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> &GramKind {
        &self.kind
    }

    pub fn is_changepoint(&self) -> bool {
        matches!(self.kind, GramKind::ChangePoint)
    }

    /// Entry `G(i, j)`, 0-based.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::None => (i.min(j) + 1) as f64,
            Storage::Lags(l) => l[i.abs_diff(j)],
            Storage::Dense(m) => m[(i, j)],
        }
    }

    /// Lag-`k` entry for Toeplitz kinds.
    pub fn lag(&self, k: usize) -> Option<f64> {
        match &self.storage {
            Storage::Lags(l) => l.get(k).copied(),
            _ => None,
        }
    }

    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.entry(rows[a], cols[b]))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| self.entry(i, j))
    }

    /// `G v` without materializing `G` when the structure allows it.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let p = self.p;
        assert_eq!(v.len(), p);
        match &self.storage {
            Storage::None => {
                // (G v)_i = sum_j min(i, j) v_j = sum_{k <= i} (sum_{j >= k} v_j)
                let mut tail = vec![0.0; p];
                let mut acc = 0.0;
                for j in (0..p).rev() {
                    acc += v[j];
                    tail[j] = acc;
                }
                let mut out = vec![0.0; p];
                let mut run = 0.0;
                for i in 0..p {
                    run += tail[i];
                    out[i] = run;
                }
                out
            }
            _ => (0..p).map(|i| (0..p).map(|j| self.entry(i, j) * v[j]).sum()).collect(),
        }
    }
}

/// FARIMA(0, phi, 0) autocorrelations `gamma(0..n)` via the Gamma-ratio recursion
/// `gamma(k) = gamma(k - 1) (k - 1 + phi) / (k - phi)`.
pub fn farima_acov(phi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(1.0);
    for k in 1..n {
        let kf = k as f64;
        let prev = out[k - 1];
        out.push(prev * (kf - 1.0 + phi) / (kf - phi));
    }
    out
}

/// Normalizing constant `Gamma(1 - phi)^2 / Gamma(1 - 2 phi)` of the FARIMA spectral density.
pub fn farima_fstar(phi: f64) -> f64 {
    (2.0 * ln_gamma(1.0 - phi) - ln_gamma(1.0 - 2.0 * phi)).exp()
}

/// Lag-`k` autocovariance by direct numerical integration of the spectral density
/// `f(w) = |1 - e^{iw}|^{-2 phi} f*`. Independent of [`farima_acov`].
///
/// The substitution `w = pi u^{1 / (1 - 2 phi)}` removes the singularity at `w = 0`.
pub fn farima_acov_quadrature(phi: f64, k: usize) -> f64 {
    let alpha = 1.0 / (1.0 - 2.0 * phi);
    let fstar = farima_fstar(phi);
    let pi = std::f64::consts::PI;
    let integrand = |u: f64| {
        let w = pi * u.powf(alpha);
        // (2 sin(w/2))^{-2 phi} dw/du with the u-power cancelled analytically
        let ratio = if w < 1e-8 { 1.0 } else { 2.0 * (0.5 * w).sin() / w };
        (k as f64 * w).cos() * ratio.powf(-2.0 * phi) * pi.powf(1.0 - 2.0 * phi) * alpha
    };
    let panels = 64 + 8 * k * (alpha.ceil() as usize);
    quad::integrate(integrand, 0.0, 1.0, panels, 20) * fstar / pi
}

/// Symmetric square root `S` with `S S = G`.
pub fn matrix_sqrt_spd(g: &GramModel) -> Result<DMatrix<f64>> {
    linalg::sqrt_spd(&g.to_dense())
}

/// Dense `D` for filter `f` at size `p`, with truncated bottom rows.
pub fn filter_matrix(f: &LinearFilter, p: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(p, p);
    for i in 0..p {
        for (k, &c) in f.coeffs().iter().enumerate() {
            if i + k < p {
                d[(i, i + k)] = c;
            }
        }
    }
    d
}

/// `D x` for filter `f`.
pub fn apply_filter(f: &LinearFilter, x: &[f64]) -> Vec<f64> {
    let p = x.len();
    (0..p).map(|i| f.coeffs().iter().enumerate().filter(|(k, _)| i + k < p).map(|(k, c)| c * x[i + k]).sum()).collect()
}

/// `X' Y` for the change-point design `X(i, j) = 1{j >= i}`, i.e. prefix sums of `y`.
pub fn changepoint_xty(y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    y.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Mean vector `X beta` of the change-point design: `theta_i = sum_{j >= i} beta_j`.
pub fn changepoint_mean(beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; beta.len()];
    let mut acc = 0.0;
    for i in (0..beta.len()).rev() {
        acc += beta[i];
        out[i] = acc;
    }
    out
}

/// Dense matrix from equal-length rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(CaseError::InvalidDimension("matrix rows must be nonempty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Explicit change-point design `X(i, j) = 1{j >= i}`; `X' X` is the change-point Gram matrix.
pub fn changepoint_design(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if j >= i { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn changepoint_rows() {
        let g = gram_changepoint(3).unwrap();
        let d = g.to_dense();
        assert_eq!(d, DMatrix::from_row_slice(3, 3, &[1., 1., 1., 1., 2., 2., 1., 2., 3.]));
        assert_eq!(gram_changepoint(2).unwrap().entry(0, 0), 1.0);
        assert_eq!(gram_changepoint(5000).unwrap().entry(1999, 1999), 2000.0);
        assert!(matches!(gram_changepoint(1), Err(CaseError::InvalidDimension(_))));
    }

    #[test]
    fn changepoint_design_gram() {
        let x = changepoint_design(6);
        let g = gram_changepoint(6).unwrap().to_dense();
        assert!((x.transpose() * &x - g).abs().max() < 1e-12);
    }

    #[test]
    fn farima_unit_variance_and_validation() {
        let g = gram_farima(10, 0.35).unwrap();
        assert_eq!(g.entry(3, 3), 1.0);
        assert!((farima_acov_quadrature(0.35, 0) - 1.0).abs() < 1e-8);
        assert!(gram_farima(10, 0.5).is_err());
        assert!(gram_farima(10, 0.0).is_err());
    }

    #[test]
    fn farima_white_noise_limit() {
        let a = farima_acov(1e-9, 5);
        assert!((a[0] - 1.0).abs() < 1e-15);
        for v in &a[1..] {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn farima_lag_one_closed_form() {
        let phi = 0.25;
        let rec = farima_acov(phi, 2)[1];
        assert!((rec - phi / (1.0 - phi)).abs() < 1e-15);
        assert!((farima_acov_quadrature(phi, 1) - rec).abs() < 1e-6);
    }

    #[test]
    fn powerdecay_entries() {
        let g = gram_powerdecay(10, 0.95, 5.0).unwrap();
        assert_eq!(g.entry(4, 4), 1.0);
        assert!((g.entry(0, 1) - 6f64.powf(-0.95)).abs() < 1e-15);
        assert!(gram_powerdecay(10, -1.0, 5.0).is_err());
    }

    #[test]
    fn filter_validation() {
        assert!(LinearFilter::new(vec![2.0, 1.0]).is_err());
        assert!(LinearFilter::new(vec![]).is_err());
        assert_eq!(LinearFilter::second_difference().order(), 2);
    }

    #[test]
    fn filter_matrix_matches_apply() {
        let f = LinearFilter::new(vec![1.0, -0.5, 0.25]).unwrap();
        let x: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let dm = filter_matrix(&f, 7) * DVector::from_column_slice(&x);
        let dv = apply_filter(&f, &x);
        for i in 0..7 {
            assert!((dm[i] - dv[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn changepoint_mul_vec_matches_dense() {
        let g = gram_changepoint(9).unwrap();
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).cos()).collect();
        let fast = g.mul_vec(&v);
        let slow = g.to_dense() * DVector::from_column_slice(&v);
        for i in 0..9 {
            assert!((fast[i] - slow[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_of_diagonal() {
        let g = gram_dense(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        let s = matrix_sqrt_spd(&g).unwrap();
        assert!((s - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).abs().max() < 1e-12);
    }
}
