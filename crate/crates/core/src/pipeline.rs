// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tuning configuration and the end-to-end selection pipeline.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CaseError, Result};
use crate::estimation::{pe_step, CpPatchMode, LargeComponentPolicy, PeConfig, SelectionResult};
use crate::gosd::{build_gosd, enumerate_connected_subgraphs, ExpandedGraph};
use crate::gram::{changepoint_xty, GramModel, LinearFilter};
use crate::screening::{ps_screen, BranchRule, ScreenConfig, ThresholdMode};
use crate::sparsify::{sparsify, SparsifiedPair};

/// Every tuning parameter of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseConfig {
    #[serde(skip)]
    pub filter: LinearFilter,
    pub delta: f64,
    pub m: usize,
    pub l_ps: usize,
    pub threshold: ThresholdMode,
    pub pe: PeConfig,
}

/// Sparsity exponent `log(p / s_p) / log(p)` from the expected number of signals.
pub fn vartheta_from_sp(p: usize, s_p: f64) -> f64 {
    (p as f64 / s_p).ln() / (p as f64).ln()
}

/// Strength exponent `tau^2 / (2 log p)`.
pub fn r_from_tau(p: usize, tau_p: f64) -> f64 {
    tau_p * tau_p / (2.0 * (p as f64).ln())
}

pub fn sp_from_vartheta(p: usize, vartheta: f64) -> f64 {
    (p as f64).powf(1.0 - vartheta)
}

pub fn tau_from_r(p: usize, r: f64) -> f64 {
    (2.0 * r * (p as f64).ln()).sqrt()
}

impl CaseConfig {
    /// Tuning from the expected number of signals `s_p` and the minimum strength `tau_p`:
    /// `m = 2`, `l_pe = 10 log(p / s_p)`, `u_pe = sqrt(2 log(p / s_p))`, `v_pe = tau_p`, and
    /// data-driven thresholds with cap 0.8. The change-point model uses the second-difference
    /// filter with `delta = 0`, `l_ps = 0`; other models use the first-difference filter with
    /// `delta = 2.5 / log p` and `l_ps = l_pe / 2`.
    pub fn from_sparsity_strength(g: &GramModel, s_p: f64, tau_p: f64) -> Result<Self> {
        let p = g.p();
        if !(s_p > 0.0 && s_p < p as f64) || !(tau_p > 0.0) {
            return Err(CaseError::InvalidParameter(format!("need 0 < s_p < p and tau_p > 0, got {s_p}, {tau_p}")));
        }
        let logp = (p as f64).ln();
        let lr = (p as f64 / s_p).ln();
        let vartheta = vartheta_from_sp(p, s_p);
        let r = r_from_tau(p, tau_p);
        let l_pe = ((10.0 * lr).round() as usize).max(1);
        let pe = PeConfig {
            l_pe,
            u_pe: (2.0 * lr).sqrt(),
            v_pe: tau_p,
            cp_patch_mode: CpPatchMode::SimpleWindow,
            cap: 12,
            large_component: LargeComponentPolicy::GapSplit,
        };
        let threshold = ThresholdMode::DataDriven { vartheta, r, cap: 0.8, rule: BranchRule::Continuous };
        let cfg = if g.is_changepoint() {
            CaseConfig { filter: LinearFilter::second_difference(), delta: 0.0, m: 2, l_ps: 0, threshold, pe }
        } else {
            CaseConfig {
                filter: LinearFilter::first_difference(),
                delta: 2.5 / logp,
                m: 2,
                l_ps: ((l_pe as f64 / 2.0).round() as usize).max(1),
                threshold,
                pe,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tuning from the exponents `(vartheta, r)`: `u_pe = sqrt(2 vartheta log p)`,
    /// `v_pe = sqrt(2 r log p)`, `l_pe = 2 log p` for the change-point model and
    /// `(log p)^0.5` otherwise, `delta = 1 / log p` (0 for change points).
    pub fn from_exponents(g: &GramModel, vartheta: f64, r: f64) -> Result<Self> {
        let p = g.p();
        if !(vartheta > 0.0 && vartheta < 1.0) || !(r > 0.0) {
            return Err(CaseError::InvalidParameter(format!("need vartheta in (0,1), r > 0, got {vartheta}, {r}")));
        }
        let logp = (p as f64).ln();
        let threshold = ThresholdMode::DataDriven { vartheta, r, cap: 0.8, rule: BranchRule::Continuous };
        let mut pe = PeConfig {
            l_pe: 1,
            u_pe: (2.0 * vartheta * logp).sqrt(),
            v_pe: (2.0 * r * logp).sqrt(),
            cp_patch_mode: CpPatchMode::SimpleWindow,
            cap: 12,
            large_component: LargeComponentPolicy::GapSplit,
        };
        let cfg = if g.is_changepoint() {
            pe.l_pe = ((2.0 * logp).round() as usize).max(1);
            CaseConfig { filter: LinearFilter::second_difference(), delta: 0.0, m: 2, l_ps: 0, threshold, pe }
        } else {
            pe.l_pe = (logp.sqrt().round() as usize).max(1);
            CaseConfig {
                filter: LinearFilter::first_difference(),
                delta: 1.0 / logp,
                m: 2,
                l_ps: pe.l_pe,
                threshold,
                pe,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn screen_config(&self) -> ScreenConfig {
        ScreenConfig { m: self.m, l_ps: self.l_ps, threshold: self.threshold, delta: self.delta }
    }

    pub fn validate(&self) -> Result<()> {
        self.screen_config().validate()?;
        self.pe.validate()?;
        if !(self.delta >= 0.0) {
            return Err(CaseError::InvalidParameter(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Data handed to the pipeline.
#[derive(Debug, Clone)]
pub enum Observation {
    /// The filtered sufficient statistic `d = D X'Y`.
    Filtered(Vec<f64>),
    /// `X'Y`.
    XtY(Vec<f64>),
    /// Raw design and response.
    Design { x: DMatrix<f64>, y: Vec<f64> },
    /// A change-point series `Y`. Coefficient `i` of the result is the jump
    /// `theta_{i+1} - theta_i` of the mean after position `i`; the last coordinate
    /// carries minus the final level.
    ChangePointSeries(Vec<f64>),
}

/// Filtered statistic `d` for an observation.
pub fn filtered_statistic(sp: &SparsifiedPair, obs: &Observation) -> Result<Vec<f64>> {
    let p = sp.p();
    let check = |n: usize| {
        if n != p {
            Err(CaseError::InvalidDimension(format!("observation has length {n} but p = {p}")))
        } else {
            Ok(())
        }
    };
    match obs {
        Observation::Filtered(d) => {
            check(d.len())?;
            Ok(d.clone())
        }
        Observation::XtY(v) => {
            check(v.len())?;
            Ok(sp.filter_vector(v))
        }
        Observation::Design { x, y } => {
            if x.nrows() != y.len() {
                return Err(CaseError::InvalidDimension(format!("X has {} rows but Y has {}", x.nrows(), y.len())));
            }
            check(x.ncols())?;
            let xty = x.transpose() * nalgebra::DVector::from_column_slice(y);
            Ok(sp.filter_vector(xty.as_slice()))
        }
        Observation::ChangePointSeries(y) => {
            check(y.len())?;
            if !sp.gram().is_changepoint() {
                return Err(CaseError::InvalidInput("change-point series requires the change-point model".into()));
            }
            let d = sp.filter_vector(&changepoint_xty(y));
            Ok(d.into_iter().map(|v| -v).collect())
        }
    }
}

/// Full pipeline: filter, GOSD, subgraph enumeration, screening, expanded graph, estimation.
pub fn case_select(g: &GramModel, obs: &Observation, cfg: &CaseConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let sp = sparsify(g, &cfg.filter, cfg.delta)?;
    let d = filtered_statistic(&sp, obs)?;
    case_select_filtered(&sp, &d, cfg)
}

/// Pipeline on an already filtered pair and statistic.
pub fn case_select_filtered(sp: &SparsifiedPair, d: &[f64], cfg: &CaseConfig) -> Result<SelectionResult> {
    let gosd = build_gosd(sp, cfg.delta);
    let subs = enumerate_connected_subgraphs(&gosd, cfg.m);
    let state = ps_screen(sp, d, &subs, &cfg.screen_config())?;
    let gplus = ExpandedGraph::new(&gosd, cfg.pe.l_pe);
    pe_step(sp, d, &state, &gplus, &cfg.pe)
}

/// Reusable pipeline state for repeated runs on the same model and tuning.
pub struct CasePipeline {
    sp: SparsifiedPair,
    gosd: crate::gosd::Gosd,
    subgraphs: Vec<Vec<usize>>,
    cfg: CaseConfig,
}

impl CasePipeline {
    pub fn new(g: &GramModel, cfg: &CaseConfig) -> Result<Self> {
        cfg.validate()?;
        let sp = sparsify(g, &cfg.filter, cfg.delta)?;
        let gosd = build_gosd(&sp, cfg.delta);
        let subgraphs = enumerate_connected_subgraphs(&gosd, cfg.m);
        Ok(Self { sp, gosd, subgraphs, cfg: cfg.clone() })
    }

    pub fn pair(&self) -> &SparsifiedPair {
        &self.sp
    }

    pub fn gosd(&self) -> &crate::gosd::Gosd {
        &self.gosd
    }

    pub fn config(&self) -> &CaseConfig {
        &self.cfg
    }

    /// Same pipeline with different tuning but identical filter and GOSD threshold.
    pub fn with_config(&self, cfg: &CaseConfig) -> Result<Self> {
        if cfg.filter != self.cfg.filter || cfg.delta != self.cfg.delta || cfg.m != self.cfg.m {
            return CasePipeline::new(self.sp.gram(), cfg);
        }
        cfg.validate()?;
        Ok(Self { sp: self.sp.clone(), gosd: self.gosd.clone(), subgraphs: self.subgraphs.clone(), cfg: cfg.clone() })
    }

    pub fn run(&self, obs: &Observation) -> Result<SelectionResult> {
        let d = filtered_statistic(&self.sp, obs)?;
        self.run_filtered(&d)
    }

    pub fn run_filtered(&self, d: &[f64]) -> Result<SelectionResult> {
        let state = ps_screen(&self.sp, d, &self.subgraphs, &self.cfg.screen_config())?;
        let gplus = ExpandedGraph::new(&self.gosd, self.cfg.pe.l_pe);
        pe_step(&self.sp, d, &state, &gplus, &self.cfg.pe)
    }
}
