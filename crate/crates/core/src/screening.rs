// SPDX-License-Identifier: MIT OR Apache-2.0

//! Patching-and-screening: a sequential sweep of chi-square type tests over the
//! small connected subgraphs of the GOSD.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CaseError, Result};
use crate::gosd::SubgraphList;
use crate::linalg::{self, SpdFactor};
use crate::rates;
use crate::sparsify::SparsifiedPair;

/// Which side of the data-driven `q` formula applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum BranchRule {
    /// First branch when `r w > |F| v`; `q` is then continuous in `w`.
    #[default]
    Continuous,
    /// First branch when `w > |F| v`.
    OmegaOnly,
}

/// How the acceptance threshold `t(F, N)` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThresholdMode {
    /// `t = 2 q |F| log p`.
    ConstantPerNode { q_tilde: f64 },
    /// `t = 2 q(F, N) log p` with `q = cap * [(r w + |F| v)^2 / (4 r w)]` on the first branch
    /// and `q = cap * r w` otherwise, where `w = omega_tilde(F, N)` and `v = vartheta`.
    DataDriven { vartheta: f64, r: f64, cap: f64, rule: BranchRule },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenConfig {
    pub m: usize,
    pub l_ps: usize,
    pub threshold: ThresholdMode,
    pub delta: f64,
}

impl ScreenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(CaseError::InvalidParameter("m must be positive".into()));
        }
        match self.threshold {
            ThresholdMode::ConstantPerNode { q_tilde } if !(q_tilde > 0.0) => {
                Err(CaseError::InvalidParameter(format!("q_tilde must be positive, got {q_tilde}")))
            }
            ThresholdMode::DataDriven { vartheta, r, cap, .. }
                if !(vartheta > 0.0 && vartheta < 1.0) || !(r > 0.0) || !(cap > 0.0) =>
            {
                Err(CaseError::InvalidParameter(format!(
                    "data-driven threshold needs vartheta in (0,1), r > 0, cap > 0; got {vartheta}, {r}, {cap}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// One stage of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: usize,
    pub nodes: Vec<usize>,
    pub f_hat: Vec<usize>,
    pub n_hat: Vec<usize>,
    /// `None` for skipped stages (no new node to test).
    pub t: Option<f64>,
    pub threshold: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningState {
    /// Retained set, sorted.
    pub retained: Vec<usize>,
    pub trace: Vec<TraceRecord>,
}

/// Union of the clipped intervals `[i - radius, i + radius]`, sorted.
pub fn patch_set(nodes: &[usize], radius: usize, p: usize) -> Vec<usize> {
    let mut sorted = nodes.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<usize> = Vec::new();
    for &i in &sorted {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(p - 1);
        let start = match out.last() {
            Some(&last) if last >= lo => last + 1,
            _ => lo,
        };
        for k in start..=hi {
            out.push(k);
        }
    }
    out
}

/// `W = (B^{P,I})' (H^{P,P})^{-1} d^P` and `Q = (B^{P,I})' (H^{P,P})^{-1} B^{P,I}` with
/// `P` the patch of `nodes` at `radius`.
pub fn wq_statistics(
    sp: &SparsifiedPair,
    d: &[f64],
    nodes: &[usize],
    radius: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let patch = patch_set(nodes, radius, sp.p());
    wq_with_patch(sp, d, nodes, &patch)
}

/// As [`wq_statistics`] with an explicit patch set.
pub fn wq_with_patch(
    sp: &SparsifiedPair,
    d: &[f64],
    nodes: &[usize],
    patch: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if nodes.is_empty() {
        return Err(CaseError::InvalidInput("empty node set".into()));
    }
    let h = sp.h_block(patch, patch);
    let b = sp.b_block(patch, nodes);
    let fac = SpdFactor::new(&h)?;
    let hib = fac.solve_mat(&b);
    let dp = SparsifiedPair::sub_d(d, patch);
    let w = hib.transpose() * dp;
    let mut q = b.transpose() * hib;
    symmetrize(&mut q);
    Ok((w, q))
}

pub(crate) fn symmetrize(q: &mut DMatrix<f64>) {
    let n = q.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (q[(i, j)] + q[(j, i)]);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
}

fn quad_form_inv(q: &DMatrix<f64>, w: &DVector<f64>) -> Result<f64> {
    if w.is_empty() {
        return Ok(0.0);
    }
    let x = SpdFactor::new(q)?.solve(w);
    Ok(w.dot(&x))
}

/// `T = W' Q^{-1} W - W_N' (Q_{N,N})^{-1} W_N`; `f` and `n` are positions into `W`.
pub fn test_statistic(w: &DVector<f64>, q: &DMatrix<f64>, f: &[usize], n: &[usize]) -> Result<f64> {
    let k = w.len();
    if f.is_empty() {
        return Err(CaseError::InvalidInput("F must be nonempty".into()));
    }
    let mut seen = vec![false; k];
    for &i in f.iter().chain(n) {
        if i >= k || seen[i] {
            return Err(CaseError::InvalidInput("F and N must partition the positions of W".into()));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(CaseError::InvalidInput("F and N must partition the positions of W".into()));
    }
    let full = quad_form_inv(q, w)?;
    let reduced = if n.is_empty() { 0.0 } else { quad_form_inv(&linalg::principal(q, n), &linalg::subvec(w, n))? };
    Ok(full - reduced)
}

/// Threshold `t(F, N)` for a test with `f_size = |F|` given `omega_tilde(F, N)`.
pub fn threshold_value(mode: &ThresholdMode, f_size: usize, omega_tilde: f64, p: usize) -> f64 {
    let logp = (p as f64).ln();
    match *mode {
        ThresholdMode::ConstantPerNode { q_tilde } => 2.0 * q_tilde * f_size as f64 * logp,
        ThresholdMode::DataDriven { vartheta, r, cap, rule } => {
            2.0 * data_driven_q(vartheta, r, cap, rule, f_size, omega_tilde) * logp
        }
    }
}

/// `q(F, N)` of the data-driven threshold family.
pub fn data_driven_q(vartheta: f64, r: f64, cap: f64, rule: BranchRule, f_size: usize, omega_tilde: f64) -> f64 {
    let fv = f_size as f64 * vartheta;
    let rw = r * omega_tilde;
    let first = match rule {
        BranchRule::Continuous => rw > fv,
        BranchRule::OmegaOnly => omega_tilde > fv,
    };
    if first {
        cap * (rw + fv).powi(2) / (4.0 * rw)
    } else {
        cap * rw
    }
}

/// `t(F, N)` computed from the pair, recomputing `omega_tilde` on `F u N` with the
/// configured patch radius.
pub fn threshold_q(f: &[usize], n: &[usize], cfg: &ScreenConfig, sp: &SparsifiedPair) -> Result<f64> {
    match cfg.threshold {
        ThresholdMode::ConstantPerNode { .. } => Ok(threshold_value(&cfg.threshold, f.len(), 0.0, sp.p())),
        ThresholdMode::DataDriven { .. } => {
            let ot = rates::omega_tilde(f, n, sp, cfg.l_ps)?;
            Ok(threshold_value(&cfg.threshold, f.len(), ot, sp.p()))
        }
    }
}

/// Sequential screening sweep over `subgraphs`.
pub fn ps_screen(
    sp: &SparsifiedPair,
    d: &[f64],
    subgraphs: &SubgraphList,
    cfg: &ScreenConfig,
) -> Result<ScreeningState> {
    cfg.validate()?;
    let p = sp.p();
    if d.len() != p {
        return Err(CaseError::InvalidDimension(format!("d has length {} but p = {p}", d.len())));
    }
    let mut in_u = vec![false; p];
    let mut trace = Vec::with_capacity(subgraphs.len());
    for (stage, nodes) in subgraphs.iter().enumerate() {
        let mut f_pos = Vec::with_capacity(nodes.len());
        let mut n_pos = Vec::new();
        for (a, &i) in nodes.iter().enumerate() {
            if in_u[i] {
                n_pos.push(a);
            } else {
                f_pos.push(a);
            }
        }
        let f_hat: Vec<usize> = f_pos.iter().map(|&a| nodes[a]).collect();
        let n_hat: Vec<usize> = n_pos.iter().map(|&a| nodes[a]).collect();
        if f_pos.is_empty() {
            trace.push(TraceRecord {
                stage,
                nodes: nodes.clone(),
                f_hat,
                n_hat,
                t: None,
                threshold: None,
                accepted: false,
            });
            continue;
        }
        let (w, q) = wq_statistics(sp, d, nodes, cfg.l_ps).map_err(|e| stage_error(e, nodes))?;
        let t = test_statistic(&w, &q, &f_pos, &n_pos).map_err(|e| stage_error(e, nodes))?;
        let omega_t = match cfg.threshold {
            ThresholdMode::ConstantPerNode { .. } => 0.0,
            ThresholdMode::DataDriven { .. } => {
                rates::omega_from_matrix(&q, &f_pos, &n_pos).map_err(|e| stage_error(e, nodes))?
            }
        };
        let thr = threshold_value(&cfg.threshold, f_pos.len(), omega_t, p);
        let accepted = t > thr;
        if accepted {
            for &i in &f_hat {
                in_u[i] = true;
            }
        }
        trace.push(TraceRecord {
            stage,
            nodes: nodes.clone(),
            f_hat,
            n_hat,
            t: Some(t),
            threshold: Some(thr),
            accepted,
        });
    }
    let retained = (0..p).filter(|&i| in_u[i]).collect();
    Ok(ScreeningState { retained, trace })
}

fn stage_error(e: CaseError, nodes: &[usize]) -> CaseError {
    match e {
        CaseError::NumericFailure(msg) => CaseError::NumericFailure(format!("{msg} (subgraph {nodes:?})")),
        other => other,
    }
}

/// Write the trace as CSV with 1-based node labels; sets are space-separated.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["stage", "I", "F_hat", "N_hat", "T", "threshold", "accepted"])?;
    let fmt = |s: &[usize]| s.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ");
    for r in trace {
        wtr.write_record([
            (r.stage + 1).to_string(),
            fmt(&r.nodes),
            fmt(&r.f_hat),
            fmt(&r.n_hat),
            r.t.map_or(String::new(), |v| format!("{v:.10e}")),
            r.threshold.map_or(String::new(), |v| format!("{v:.10e}")),
            if r.t.is_none() { "skipped".to_string() } else { r.accepted.to_string() },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::{gram_changepoint, LinearFilter};
    use crate::sparsify::sparsify;

    #[test]
    fn patch_examples() {
        let ps = patch_set(&[1999], 10, 5000);
        assert_eq!(ps, (1989..=2009).collect::<Vec<_>>());
        assert_eq!(patch_set(&[3, 7], 0, 10), vec![3, 7]);
        assert_eq!(patch_set(&[0], 3, 10), vec![0, 1, 2, 3]);
        assert_eq!(patch_set(&[2, 4], 1, 10), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn changepoint_singleton_q() {
        let g = gram_changepoint(50).unwrap();
        let sp = sparsify(&g, &LinearFilter::second_difference(), 0.0).unwrap();
        let d = vec![0.0; 50];
        let (w, q) = wq_statistics(&sp, &d, &[20], 0).unwrap();
        assert!((q[(0, 0)] - 0.5).abs() < 1e-14);
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn identity_q_gives_norm() {
        let w = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let t = test_statistic(&w, &DMatrix::identity(3, 3), &[0, 1, 2], &[]).unwrap();
        assert!((t - 5.25).abs() < 1e-14);
    }

    #[test]
    fn constant_threshold() {
        let p = (10f64).exp().round() as usize;
        let t = threshold_value(&ThresholdMode::ConstantPerNode { q_tilde: 0.1 }, 2, 0.0, p);
        assert!((t - 0.4 * (p as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn data_driven_branches() {
        let omega_only = BranchRule::OmegaOnly;
        // omega_tilde <= |F| vartheta
        let q = data_driven_q(0.75, 1.8, 0.8, omega_only, 1, 0.5);
        assert!((q - 0.8 * 1.8 * 0.5).abs() < 1e-14);
        // omega_tilde > |F| vartheta
        let q = data_driven_q(0.3, 2.0, 0.8, omega_only, 1, 0.5);
        assert!((q - 0.8 * (1.0f64 + 0.3).powi(2) / 4.0).abs() < 1e-14);
        // r omega_tilde = 0.9 > 0.75 selects the first branch under the continuous rule
        let q = data_driven_q(0.75, 1.8, 0.8, BranchRule::Continuous, 1, 0.5);
        assert!((q - 0.8 * (0.9f64 + 0.75).powi(2) / 3.6).abs() < 1e-14);
    }

    #[test]
    fn continuous_rule_has_no_jump() {
        let (v, r) = (0.4, 2.0);
        let w0 = v / r;
        let below = data_driven_q(v, r, 1.0, BranchRule::Continuous, 1, w0 - 1e-9);
        let above = data_driven_q(v, r, 1.0, BranchRule::Continuous, 1, w0 + 1e-9);
        assert!((below - above).abs() < 1e-8);
        assert!((below - v).abs() < 1e-8);
    }
}
