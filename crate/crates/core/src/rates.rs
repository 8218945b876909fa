// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rate exponents: `omega`, `omega_tilde`, `psi`, `rho*`, the change-point closed form,
//! the long-memory phase boundary and patched Fisher information.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CaseError, Result};
use crate::gram::{farima_fstar, gram_farima, GramModel, LinearFilter};
use crate::linalg::{self, SpdFactor};
use crate::quad;
use crate::screening::{self, symmetrize};
use crate::sparsify::{sparsify, SparsifiedPair};

/// `6 + 2 sqrt(10)`: the ratio `r / vartheta` where the change-point exponent switches branch.
pub fn cp_branch_ratio() -> f64 {
    6.0 + 2.0 * 10f64.sqrt()
}

fn check_sets(f: &[usize], n: &[usize]) -> Result<()> {
    if f.is_empty() {
        return Err(CaseError::InvalidInput("F must be nonempty".into()));
    }
    if f.iter().any(|i| n.contains(i)) {
        return Err(CaseError::InvalidInput("F and N must be disjoint".into()));
    }
    Ok(())
}

/// Schur complement `M_FF - M_FN (M_NN)^{-1} M_NF`; `f`, `n` are positions into `m`.
pub fn schur_complement(m: &DMatrix<f64>, f: &[usize], n: &[usize]) -> Result<DMatrix<f64>> {
    let mff = linalg::principal(m, f);
    if n.is_empty() {
        return Ok(mff);
    }
    let mnn = linalg::principal(m, n);
    let mnf = linalg::sub(m, n, f);
    let x = SpdFactor::new(&mnn)?.solve_mat(&mnf);
    let mut s = mff - mnf.transpose() * x;
    symmetrize(&mut s);
    Ok(s)
}

/// `min_{|xi_i| >= 1} xi' S xi` for a PSD matrix `S`.
pub fn min_outside_unit_box(s: &DMatrix<f64>) -> Result<f64> {
    match s.nrows() {
        0 => Err(CaseError::InvalidDimension("empty matrix".into())),
        1 => Ok(s[(0, 0)]),
        2 => {
            // |xi_1| = 1 or |xi_2| = 1 at the optimum; minimize the other coordinate in closed form
            let (a, b, c) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
            let one_side = |a: f64, b: f64, c: f64| {
                // xi_1 = 1, minimize c t^2 + 2 b t + a over |t| >= 1
                let t_free = if c > 0.0 { -b / c } else { f64::NAN };
                let mut best = a + c - 2.0 * b.abs();
                if t_free.is_finite() && t_free.abs() >= 1.0 {
                    best = best.min(a - b * b / c);
                }
                best
            };
            Ok(one_side(a, b, c).min(one_side(c, b, a)))
        }
        _ => Ok(linalg::min_quadratic_outside_box(s, None, 1.0, None)?.0),
    }
}

/// The quadratic minimum on the Schur complement of `m` for positions `f` given `n`.
pub fn omega_from_matrix(m: &DMatrix<f64>, f: &[usize], n: &[usize]) -> Result<f64> {
    check_sets(f, n)?;
    let s = schur_complement(m, f, n)?;
    Ok(min_outside_unit_box(&s)?.max(0.0))
}

/// `omega(F, N)` on the Gram matrix `g`; `F`, `N` are 0-based node sets.
pub fn omega(f: &[usize], n: &[usize], g: &GramModel) -> Result<f64> {
    check_sets(f, n)?;
    let nodes: Vec<usize> = f.iter().chain(n).copied().collect();
    let m = g.block(&nodes, &nodes);
    let fp: Vec<usize> = (0..f.len()).collect();
    let np: Vec<usize> = (f.len()..nodes.len()).collect();
    omega_from_matrix(&m, &fp, &np)
}

/// `omega_tilde(F, N)`: as `omega` with `Q` of `I = F u N` (patched at `radius`) in place of `G`.
pub fn omega_tilde(f: &[usize], n: &[usize], sp: &SparsifiedPair, radius: usize) -> Result<f64> {
    check_sets(f, n)?;
    let mut nodes: Vec<usize> = f.iter().chain(n).copied().collect();
    nodes.sort_unstable();
    let zero = vec![0.0; sp.p()];
    let (_, q) = screening::wq_statistics(sp, &zero, &nodes, radius)?;
    let fp: Vec<usize> = f.iter().map(|i| nodes.binary_search(i).unwrap()).collect();
    let np: Vec<usize> = n.iter().map(|i| nodes.binary_search(i).unwrap()).collect();
    omega_from_matrix(&q, &fp, &np)
}

/// `psi` from the pattern sizes and `omega`.
pub fn psi_from_omega(f_size: usize, n_size: usize, omega: f64, vartheta: f64, r: f64) -> f64 {
    let base = (f_size as f64 + 2.0 * n_size as f64) * vartheta / 2.0;
    if omega.is_infinite() {
        return f64::INFINITY;
    }
    if f_size.is_multiple_of(2) {
        base + omega * r / 4.0
    } else {
        let wr = omega * r;
        let inner = if wr > 0.0 { (wr.sqrt() - vartheta / wr.sqrt()).max(0.0) } else { 0.0 };
        base + vartheta / 2.0 + 0.25 * inner * inner
    }
}

/// `psi(F, N)` on the Gram matrix `g`.
pub fn psi(f: &[usize], n: &[usize], vartheta: f64, r: f64, g: &GramModel) -> Result<f64> {
    let w = omega(f, n, g)?;
    Ok(psi_from_omega(f.len(), n.len(), w, vartheta, r))
}

/// Default size cap `ceil(max((vartheta + r)^2 / (2 vartheta r), m))`.
pub fn default_gmax(vartheta: f64, r: f64, m: usize) -> usize {
    let g = (vartheta + r).powi(2) / (2.0 * vartheta * r);
    g.max(m as f64).ceil() as usize
}

/// One `(F, N)` pattern with its exponent ingredients. Node labels are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternRecord {
    pub f: Vec<usize>,
    pub n: Vec<usize>,
    pub omega: f64,
}

impl PatternRecord {
    pub fn psi(&self, vartheta: f64, r: f64) -> f64 {
        psi_from_omega(self.f.len(), self.n.len(), self.omega, vartheta, r)
    }
}

/// All `(F, N)` with `j in F`, `F n N = {}`, `|F u N| <= gmax`, `F u N` inside
/// `[j - (gmax - 1), j + (gmax - 1)]`, together with `omega(F, N)`.
pub fn patterns_around(j: usize, g: &GramModel, gmax: usize) -> Result<Vec<PatternRecord>> {
    let p = g.p();
    if j >= p || gmax == 0 {
        return Err(CaseError::InvalidInput(format!("j = {j} or gmax = {gmax} out of range")));
    }
    let lo = j.saturating_sub(gmax - 1);
    let hi = (j + gmax - 1).min(p - 1);
    let others: Vec<usize> = (lo..=hi).filter(|&k| k != j).collect();
    let mut shapes: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let no = others.len();
    for mask in 0u64..(1u64 << no) {
        let members: Vec<usize> = (0..no).filter(|&b| mask >> b & 1 == 1).map(|b| others[b]).collect();
        if members.len() + 1 > gmax {
            continue;
        }
        let k = members.len();
        for split in 0u64..(1u64 << k) {
            let mut f = vec![j];
            let mut n = Vec::new();
            for (b, &node) in members.iter().enumerate() {
                if split >> b & 1 == 1 {
                    f.push(node);
                } else {
                    n.push(node);
                }
            }
            f.sort_unstable();
            shapes.push((f, n));
        }
    }
    shapes
        .into_par_iter()
        .map(|(f, n)| {
            let w = omega(&f, &n, g)?;
            Ok(PatternRecord { f, n, omega: w })
        })
        .collect()
}

/// `rho*_j = min psi(F, N)` over the patterns of [`patterns_around`].
pub fn rho_star_j(j: usize, vartheta: f64, r: f64, g: &GramModel, gmax: usize) -> Result<f64> {
    let pats = patterns_around(j, g, gmax)?;
    Ok(pats.iter().map(|pt| pt.psi(vartheta, r)).fold(f64::INFINITY, f64::min))
}

/// Closed-form change-point exponent.
pub fn rho_star_cp(vartheta: f64, r: f64) -> f64 {
    if r / vartheta <= cp_branch_ratio() {
        vartheta + r / 4.0
    } else {
        3.0 * vartheta + (r / 2.0 - vartheta).powi(2) / (2.0 * r)
    }
}

/// `r` on the change-point boundary `rho*_cp(vartheta, r) = 1` in closed form.
pub fn cp_boundary(vartheta: f64) -> f64 {
    let right = cp_boundary_right(vartheta);
    if right / vartheta <= cp_branch_ratio() {
        right
    } else {
        cp_boundary_left(vartheta)
    }
}

/// `(4 - 10 v) + 2 sqrt((2 - 5 v)^2 - v^2)`; `NaN` where the root is complex.
pub fn cp_boundary_left(vartheta: f64) -> f64 {
    let disc = (2.0 - 5.0 * vartheta).powi(2) - vartheta * vartheta;
    if disc < 0.0 {
        f64::NAN
    } else {
        (4.0 - 10.0 * vartheta) + 2.0 * disc.sqrt()
    }
}

/// `4 (1 - v)`.
pub fn cp_boundary_right(vartheta: f64) -> f64 {
    4.0 * (1.0 - vartheta)
}

/// Hard-thresholding boundaries on the change-point model: `(lower, upper)` =
/// `(2 v, 2 (1 + sqrt(1 - v))^2)`.
pub fn hard_threshold_boundaries(vartheta: f64) -> (f64, f64) {
    (2.0 * vartheta, 2.0 * (1.0 + (1.0 - vartheta).sqrt()).powi(2))
}

/// Change-point `omega^(inf)(F, N)` for a pattern whose union `F u N` is a run of
/// `k <= 5` consecutive positions (0-based, shifted to start at 0).
///
/// With `N` nonempty it is `min xi' [(S^{F,F})^{-1}] xi` where `S` is the `k x k`
/// second-difference matrix with unit corner entries; with `N` empty and `|F| > 1` it is
/// `min xi' W xi` subject to `1' xi = 0`, `W(i, j) = min(i, j)`; a single node with
/// `N` empty gives `+inf`.
pub fn omega_infinity_cp(f: &[usize], n: &[usize]) -> Result<f64> {
    check_sets(f, n)?;
    let mut all: Vec<usize> = f.iter().chain(n).copied().collect();
    all.sort_unstable();
    all.dedup();
    let base = all[0];
    let k = all.len();
    if k > 5 || all.iter().enumerate().any(|(a, &v)| v != base + a) {
        return Err(CaseError::InvalidInput("pattern must be at most 5 consecutive positions".into()));
    }
    let fpos: Vec<usize> = f.iter().map(|v| v - base).collect();
    if n.is_empty() {
        if f.len() == 1 {
            return Ok(f64::INFINITY);
        }
        let w = DMatrix::from_fn(k, k, |i, j| i.min(j) as f64);
        let c = DMatrix::from_element(1, k, 1.0);
        let (v, _) = linalg::min_quadratic_outside_box(&w, None, 1.0, Some(&c))?;
        return Ok(v);
    }
    let s = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            if i == 0 || i == k - 1 {
                1.0
            } else {
                2.0
            }
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    });
    let sff = linalg::principal(&s, &fpos);
    let inv = linalg::spd_inverse(&sff)?;
    min_outside_unit_box(&inv)
}

/// Search space for the long-memory exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LtsSearch {
    /// `F u N` a run of consecutive nodes with `F` a consecutive run inside it.
    Consecutive { max_f: usize, max_n: usize },
    /// All `F`, `N` inside `[c - span, c + span]` with the center `c` in `F`.
    Exhaustive { span: usize, max_f: usize, max_n: usize },
}

impl Default for LtsSearch {
    fn default() -> Self {
        LtsSearch::Consecutive { max_f: 3, max_n: 4 }
    }
}

/// Precomputed `(|F|, |N|, omega)` triples for a FARIMA Toeplitz block; `rho` is then
/// cheap to evaluate for many `(vartheta, r)`.
#[derive(Debug, Clone)]
pub struct LtsPatterns {
    pub records: Vec<PatternRecord>,
}

impl LtsPatterns {
    pub fn new(phi: f64, window: usize, search: LtsSearch) -> Result<Self> {
        if window < 50 {
            return Err(CaseError::InvalidParameter(format!("window must be at least 50, got {window}")));
        }
        let g = gram_farima(window, phi)?;
        let c = window / 2;
        let mut shapes: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        match search {
            LtsSearch::Consecutive { max_f, max_n } => {
                for len in 1..=(max_f + max_n) {
                    for fs in 0..len {
                        for fl in 1..=max_f.min(len - fs) {
                            if len - fl > max_n {
                                continue;
                            }
                            let start = c - fs;
                            let f: Vec<usize> = (c..c + fl).collect();
                            let n: Vec<usize> = (start..start + len).filter(|v| !f.contains(v)).collect();
                            shapes.push((f, n));
                        }
                    }
                }
            }
            LtsSearch::Exhaustive { span, max_f, max_n } => {
                let others: Vec<usize> = (c - span..=c + span).filter(|&v| v != c).collect();
                let no = others.len();
                let mut stack: Vec<(usize, Vec<usize>, Vec<usize>)> = vec![(0, vec![c], Vec::new())];
                while let Some((pos, f, n)) = stack.pop() {
                    if pos == no {
                        let mut fs = f.clone();
                        fs.sort_unstable();
                        shapes.push((fs, n));
                        continue;
                    }
                    stack.push((pos + 1, f.clone(), n.clone()));
                    if f.len() < max_f {
                        let mut f2 = f.clone();
                        f2.push(others[pos]);
                        stack.push((pos + 1, f2, n.clone()));
                    }
                    if n.len() < max_n {
                        let mut n2 = n;
                        n2.push(others[pos]);
                        stack.push((pos + 1, f, n2));
                    }
                }
            }
        }
        let records = shapes
            .into_par_iter()
            .map(|(f, n)| {
                let w = omega(&f, &n, &g)?;
                Ok(PatternRecord { f, n, omega: w })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records })
    }

    pub fn rho(&self, vartheta: f64, r: f64) -> f64 {
        self.records.iter().map(|pt| pt.psi(vartheta, r)).fold(f64::INFINITY, f64::min)
    }

    /// Bisection for `rho(vartheta, r) = 1`; `rho` is nondecreasing in `r`.
    pub fn boundary(&self, vartheta: f64) -> Result<f64> {
        if !(vartheta > 0.0 && vartheta < 1.0) {
            return Err(CaseError::InvalidParameter(format!("vartheta must lie in (0,1), got {vartheta}")));
        }
        let mut lo = 1e-9;
        if self.rho(vartheta, lo) >= 1.0 {
            return Err(CaseError::NumericFailure("boundary bracket failure at small r".into()));
        }
        let mut hi = 1.0;
        while self.rho(vartheta, hi) < 1.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(CaseError::NumericFailure("boundary bracket failure at large r".into()));
            }
        }
        while hi - lo > 1e-9 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.rho(vartheta, mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Long-memory exponent with the default consecutive search space.
pub fn rho_star_lts(vartheta: f64, r: f64, phi: f64, window: usize) -> Result<f64> {
    Ok(LtsPatterns::new(phi, window, LtsSearch::default())?.rho(vartheta, r))
}

/// Phase boundary `r*(vartheta)` solving `rho*_lts = 1`.
pub fn r_star_boundary(vartheta: f64, phi: f64, window: usize) -> Result<f64> {
    LtsPatterns::new(phi, window, LtsSearch::default())?.boundary(vartheta)
}

/// Small-`vartheta` limit `(2 / pi) int_{-pi}^{pi} f^{-1}(w) dw` of the long-memory
/// boundary, in closed form `4 G(1+2phi) G(1-2phi) / (G(1+phi)^2 G(1-phi)^2)`.
pub fn r_star_limit(phi: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    4.0 * (ln_gamma(1.0 + 2.0 * phi) + ln_gamma(1.0 - 2.0 * phi)
        - 2.0 * ln_gamma(1.0 + phi)
        - 2.0 * ln_gamma(1.0 - phi))
    .exp()
}

/// The same limit by quadrature of `1 / f`.
pub fn r_star_limit_quadrature(phi: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let fstar = farima_fstar(phi);
    // (2/pi) * 2 * int_0^pi (2 sin(w/2))^{2 phi} / f* dw, with w = pi u^beta removing the cusp
    let beta = 1.0 / (1.0 + 2.0 * phi);
    let integrand = |u: f64| {
        let w = pi * u.powf(beta);
        let ratio = if w < 1e-8 { 1.0 } else { 2.0 * (0.5 * w).sin() / w };
        ratio.powf(2.0 * phi) * pi.powf(1.0 + 2.0 * phi) * beta
    };
    4.0 / pi * quad::integrate(integrand, 0.0, 1.0, 64, 20) / fstar
}

/// Patched Fisher information `(B^{I+,I})' (H^{I+,I+})^{-1} B^{I+,I}`.
pub fn fisher_info_patched(g: &GramModel, f: &LinearFilter, i: &[usize], iplus: &[usize]) -> Result<DMatrix<f64>> {
    if i.iter().any(|x| !iplus.contains(x)) {
        return Err(CaseError::InvalidInput("I must be a subset of I+".into()));
    }
    let sp = sparsify_exact(g, f)?;
    let zero = vec![0.0; g.p()];
    let mut ip = iplus.to_vec();
    ip.sort_unstable();
    let (_, q) = screening::wq_with_patch(&sp, &zero, i, &ip)?;
    Ok(q)
}

/// Filtered pair without neighbor lists (only entry access is needed here).
fn sparsify_exact(g: &GramModel, f: &LinearFilter) -> Result<SparsifiedPair> {
    // An infinite threshold makes the neighbor computation trivial for the banded case.
    sparsify(g, f, f64::INFINITY)
}

/// The same information through the null space of `D^{I+,J+}`:
/// `G^{I,I} - [U (U' (G^{J+,J+})^{-1} U)^{-1} U']^{I,I}`.
pub fn fisher_info_nullspace(g: &GramModel, f: &LinearFilter, i: &[usize], iplus: &[usize]) -> Result<DMatrix<f64>> {
    let sp = sparsify_exact(g, f)?;
    let d = sp.filter_matrix();
    let p = g.p();
    let mut ip = iplus.to_vec();
    ip.sort_unstable();
    let jplus: Vec<usize> = (0..p).filter(|&c| ip.iter().any(|&r| d[(r, c)] != 0.0)).collect();
    let pos: Vec<usize> = i
        .iter()
        .map(|x| {
            jplus
                .binary_search(x)
                .map_err(|_| CaseError::InvalidInput("I must lie inside the filter support of I+".into()))
        })
        .collect::<Result<_>>()?;
    let dsub = linalg::sub(&d, &ip, &jplus);
    let nj = jplus.len();
    // orthonormal null-space basis from the projector I - D'(D D')^{-1} D
    let ddt = &dsub * dsub.transpose();
    let proj_row = dsub.transpose() * SpdFactor::new(&ddt)?.solve_mat(&dsub);
    let proj_null = DMatrix::identity(nj, nj) - proj_row;
    let eig = SymmetricEigen::new(proj_null);
    let cols: Vec<usize> = (0..nj).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    let g1 = g.block(&jplus, &jplus);
    let gii = g.block(i, i);
    if cols.is_empty() {
        return Ok(gii);
    }
    let u = DMatrix::from_fn(nj, cols.len(), |a, b| eig.eigenvectors[(a, cols[b])]);
    let g1_inv_u = SpdFactor::new(&g1)?.solve_mat(&u);
    let mid = u.transpose() * g1_inv_u;
    let core = SpdFactor::new(&mid)?.inverse();
    let full = &u * core * u.transpose();
    let corr = linalg::principal(&full, &pos);
    let mut q = gii - corr;
    symmetrize(&mut q);
    Ok(q)
}

/// `q*(F, N)` from its ingredients: the largest `q` with
/// `(|F| + |N|) v + [(sqrt(w r) - sqrt(q |F|))_+]^2 >= psi`. Returns `+inf` when every
/// `q` qualifies and `0` when none does.
pub fn q_star_from_parts(f_size: usize, n_size: usize, omega_tilde: f64, psi: f64, vartheta: f64, r: f64) -> f64 {
    let left = (f_size + n_size) as f64 * vartheta;
    let gap = psi - left;
    if gap <= 0.0 {
        return f64::INFINITY;
    }
    let a = (omega_tilde * r).sqrt();
    let b = gap.sqrt();
    if a < b {
        return 0.0;
    }
    (a - b).powi(2) / f_size as f64
}

/// `q*(F, N)` on a filtered pair with patch radius `radius`.
pub fn q_star(f: &[usize], n: &[usize], vartheta: f64, r: f64, sp: &SparsifiedPair, radius: usize) -> Result<f64> {
    let ot = omega_tilde(f, n, sp, radius)?;
    let ps = psi(f, n, vartheta, r, sp.gram())?;
    Ok(q_star_from_parts(f.len(), n.len(), ot, ps, vartheta, r))
}

/// Per-pattern exponent table plus summary values.
#[derive(Debug, Clone, Serialize)]
pub struct RateRecord {
    pub f: Vec<usize>,
    pub n: Vec<usize>,
    pub omega: f64,
    pub omega_tilde: f64,
    pub psi: f64,
    pub q_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub vartheta: f64,
    pub r: f64,
    pub j: usize,
    pub records: Vec<RateRecord>,
    pub rho_star: f64,
    pub boundary: Vec<(f64, f64)>,
}

/// Exponent table for all patterns around `j` of size `<= gmax`.
pub fn rate_report(
    j: usize,
    vartheta: f64,
    r: f64,
    sp: &SparsifiedPair,
    radius: usize,
    gmax: usize,
) -> Result<RateReport> {
    let pats = patterns_around(j, sp.gram(), gmax)?;
    let records = pats
        .par_iter()
        .map(|pt| {
            let ot = omega_tilde(&pt.f, &pt.n, sp, radius)?;
            let ps = pt.psi(vartheta, r);
            Ok(RateRecord {
                f: pt.f.clone(),
                n: pt.n.clone(),
                omega: pt.omega,
                omega_tilde: ot,
                psi: ps,
                q_star: q_star_from_parts(pt.f.len(), pt.n.len(), ot, ps, vartheta, r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rho_star = records.iter().map(|r| r.psi).fold(f64::INFINITY, f64::min);
    Ok(RateReport { vartheta, r, j, records, rho_star, boundary: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::{gram_changepoint, gram_dense};

    #[test]
    fn identity_omega_is_size() {
        let g = gram_dense(DMatrix::identity(6, 6)).unwrap();
        assert!((omega(&[0, 2, 3], &[1, 5], &g).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psi_examples() {
        let v = 0.4;
        assert!((psi_from_omega(1, 0, 1.0, v, v) - v).abs() < 1e-15);
        assert!((psi_from_omega(2, 1, 1.0, 0.3, 2.0) - (4.0 * 0.3 / 2.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rho_cp_examples() {
        assert!((rho_star_cp(0.5, 2.0) - 1.0).abs() < 1e-15);
        assert!((rho_star_cp(0.1, 10.0) - 1.5005).abs() < 1e-12);
        let v = 0.2;
        let r = cp_branch_ratio() * v;
        let a = v + r / 4.0;
        let b = 3.0 * v + (r / 2.0 - v).powi(2) / (2.0 * r);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn table_values() {
        let cases: [(&[usize], &[usize], f64); 8] = [
            (&[0], &[1], 1.0),
            (&[1], &[0, 2], 0.5),
            (&[0, 1], &[], 1.0),
            (&[0, 1], &[2], 1.0),
            (&[1, 2], &[0, 3], 2.0 / 3.0),
            (&[0, 1, 2], &[], 2.0),
            (&[0, 1, 2], &[3], 1.5),
            (&[1, 2, 3], &[0, 4], 1.0),
        ];
        for (f, n, want) in cases {
            let got = omega_infinity_cp(f, n).unwrap();
            assert!((got - want).abs() < 1e-9, "{f:?} {n:?}: {got} vs {want}");
        }
        assert!(omega_infinity_cp(&[0], &[]).unwrap().is_infinite());
        assert!(omega_infinity_cp(&[0], &[2]).is_err());
    }

    #[test]
    fn q_star_tight_at_solution() {
        let (fs, ns, ot, vt, r) = (2, 1, 0.7, 0.4, 3.0);
        let ps = 2.2;
        let q = q_star_from_parts(fs, ns, ot, ps, vt, r);
        let lhs = (fs + ns) as f64 * vt + ((ot * r).sqrt() - (q * fs as f64).sqrt()).max(0.0).powi(2);
        assert!((lhs - ps).abs() < 1e-9);
        assert_eq!(q_star_from_parts(1, 0, 0.1, 5.0, 0.1, 1.0), 0.0);
        assert!(q_star_from_parts(1, 3, 0.1, 0.5, 0.4, 1.0).is_infinite());
    }

    #[test]
    fn limit_closed_form_matches_quadrature() {
        for phi in [0.25, 0.35] {
            let a = r_star_limit(phi);
            let b = r_star_limit_quadrature(phi);
            assert!((a - b).abs() < 1e-8, "{a} {b}");
        }
        assert!((r_star_limit(0.35) - 7.14).abs() < 0.01);
    }

    #[test]
    fn changepoint_rho_j_small() {
        let g = gram_changepoint(200).unwrap();
        let v = rho_star_j(100, 0.5, 2.0, &g, 4).unwrap();
        assert!((v - rho_star_cp(0.5, 2.0)).abs() < 0.01, "{v}");
    }
}
