// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rare/Weak data generation, Hamming error and the seeded Monte Carlo runner.
//!
//! Every repetition draws from its own ChaCha8 stream: the 32-byte key holds the run seed
//! (bytes 0..8, little endian) and the cell index (bytes 8..16), and the stream number is
//! the repetition index. Gaussians use the ziggurat sampler of `rand_distr::StandardNormal`.
//! Results are collected in repetition order, so output does not depend on thread count.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{
    estimate_sparsity_strength, lasso_ideal, lasso_lambda_grid, naive_threshold, naive_threshold_level, sara_bic,
    sara_ideal,
};
use crate::error::{CaseError, Result};
use crate::estimation::LargeComponentPolicy;
use crate::gram::{gram_changepoint, gram_farima, GramModel};
use crate::linalg::sqrt_spd;
use crate::pipeline::{r_from_tau, sp_from_vartheta, CaseConfig, CasePipeline, Observation};
use crate::screening::{BranchRule, ThresholdMode};

/// Sign/placement pattern of the nonzero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SignalPattern {
    /// iid, magnitude `U(tau, a tau)`, random sign.
    IidTwoSided,
    /// iid, magnitude `U(tau, a tau)`, positive.
    IidOneSided,
    /// Pairs `(2j-1, 2j)` are `(tau, -tau)` with probability `eps`.
    AdjacentPairsOpposite,
    /// Consecutive blocks of `signs.len()` coordinates equal `tau * signs` with probability `eps`.
    BlockPattern { signs: Vec<i8> },
    /// iid `+-tau` with equal probability.
    PointMassTwoSided,
}

impl SignalPattern {
    /// Parse a sign string such as `"+-+"`.
    pub fn block(signs: &str) -> Result<Self> {
        let v: Vec<i8> = signs
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                _ => Err(CaseError::InvalidParameter(format!("bad sign character {c:?} in {signs:?}"))),
            })
            .collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(CaseError::InvalidParameter("empty sign string".into()));
        }
        Ok(SignalPattern::BlockPattern { signs: v })
    }

    pub fn label(&self) -> String {
        match self {
            SignalPattern::IidTwoSided => "iid-two-sided".into(),
            SignalPattern::IidOneSided => "iid-one-sided".into(),
            SignalPattern::AdjacentPairsOpposite => "pairs-opposite".into(),
            SignalPattern::PointMassTwoSided => "point-mass".into(),
            SignalPattern::BlockPattern { signs } => {
                let s: String = signs.iter().map(|&v| if v > 0 { '+' } else { '-' }).collect();
                format!("block{s}")
            }
        }
    }

    /// Parse a label produced by [`SignalPattern::label`] or a bare sign string.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "iid-two-sided" => Ok(SignalPattern::IidTwoSided),
            "iid-one-sided" => Ok(SignalPattern::IidOneSided),
            "pairs-opposite" => Ok(SignalPattern::AdjacentPairsOpposite),
            "point-mass" => Ok(SignalPattern::PointMassTwoSided),
            _ => SignalPattern::block(s.strip_prefix("block").unwrap_or(s)),
        }
    }
}

/// Rare/Weak design: `eps = p^-vartheta`, nonzero magnitudes in `[tau_p, a tau_p]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RwDesign {
    pub p: usize,
    pub vartheta: f64,
    pub tau_p: f64,
    pub a: f64,
    pub pattern: SignalPattern,
}

impl RwDesign {
    pub fn from_exponents(p: usize, vartheta: f64, r: f64, a: f64, pattern: SignalPattern) -> Result<Self> {
        let d = RwDesign { p, vartheta, tau_p: crate::pipeline::tau_from_r(p, r), a, pattern };
        d.validate()?;
        Ok(d)
    }

    pub fn epsilon(&self) -> f64 {
        (self.p as f64).powf(-self.vartheta)
    }

    pub fn s_p(&self) -> f64 {
        sp_from_vartheta(self.p, self.vartheta)
    }

    pub fn r(&self) -> f64 {
        r_from_tau(self.p, self.tau_p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(CaseError::InvalidDimension(format!("p must be at least 2, got {}", self.p)));
        }
        if !(self.vartheta > 0.0 && self.vartheta < 1.0) {
            return Err(CaseError::InvalidParameter(format!("vartheta must be in (0,1), got {}", self.vartheta)));
        }
        if !(self.tau_p > 0.0) || !(self.a >= 1.0) {
            return Err(CaseError::InvalidParameter(format!(
                "need tau_p > 0 and a >= 1, got {}, {}",
                self.tau_p, self.a
            )));
        }
        if let SignalPattern::BlockPattern { signs } = &self.pattern {
            if !self.p.is_multiple_of(signs.len()) {
                return Err(CaseError::InvalidParameter(format!(
                    "p = {} is not divisible by the block size {}",
                    self.p,
                    signs.len()
                )));
            }
        }
        if self.pattern == SignalPattern::AdjacentPairsOpposite && !self.p.is_multiple_of(2) {
            return Err(CaseError::InvalidParameter(format!("p = {} must be even for paired signals", self.p)));
        }
        Ok(())
    }

    fn magnitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.a > 1.0 {
            self.tau_p * rng.random_range(1.0..self.a)
        } else {
            self.tau_p
        }
    }
}

/// Draw `beta` of length `design.p`.
pub fn gen_beta<R: Rng + ?Sized>(design: &RwDesign, rng: &mut R) -> Vec<f64> {
    draw_beta(design, design.p, rng)
}

/// Draw jumps for a change-point series: `p - 1` coordinates from the design and a trailing 0.
pub fn gen_beta_changepoint<R: Rng + ?Sized>(design: &RwDesign, rng: &mut R) -> Vec<f64> {
    let mut b = draw_beta(design, design.p - 1, rng);
    b.push(0.0);
    b
}

fn draw_beta<R: Rng + ?Sized>(design: &RwDesign, n: usize, rng: &mut R) -> Vec<f64> {
    let eps = design.epsilon();
    let mut beta = vec![0.0; n];
    match &design.pattern {
        SignalPattern::IidTwoSided => {
            for b in beta.iter_mut() {
                if rng.random::<f64>() < eps {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    *b = sign * design.magnitude(rng);
                }
            }
        }
        SignalPattern::IidOneSided => {
            for b in beta.iter_mut() {
                if rng.random::<f64>() < eps {
                    *b = design.magnitude(rng);
                }
            }
        }
        SignalPattern::PointMassTwoSided => {
            for b in beta.iter_mut() {
                if rng.random::<f64>() < eps {
                    *b = if rng.random::<bool>() { design.tau_p } else { -design.tau_p };
                }
            }
        }
        SignalPattern::AdjacentPairsOpposite => {
            for k in 0..n / 2 {
                if rng.random::<f64>() < eps {
                    beta[2 * k] = design.tau_p;
                    beta[2 * k + 1] = -design.tau_p;
                }
            }
        }
        SignalPattern::BlockPattern { signs } => {
            let b = signs.len();
            for k in 0..n / b {
                if rng.random::<f64>() < eps {
                    for (t, &s) in signs.iter().enumerate() {
                        beta[k * b + t] = s as f64 * design.tau_p;
                    }
                }
            }
        }
    }
    beta
}

/// Change-point series `Y_i = theta_i + z_i` with `theta_1 = 0`, `theta_{i+1} = theta_i + beta_i`.
pub fn gen_changepoint_series<R: Rng + ?Sized>(beta: &[f64], rng: &mut R) -> Vec<f64> {
    let mut theta = 0.0;
    let mut y = Vec::with_capacity(beta.len());
    for (i, _) in beta.iter().enumerate() {
        if i > 0 {
            theta += beta[i - 1];
        }
        let z: f64 = rng.sample(StandardNormal);
        y.push(theta + z);
    }
    y
}

/// `Y = X beta + z` and `X' Y` for a square design.
pub fn gen_design_response<R: Rng + ?Sized>(x: &DMatrix<f64>, beta: &[f64], rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let mean = x * nalgebra::DVector::from_column_slice(beta);
    let y: Vec<f64> = (0..n).map(|i| mean[i] + rng.sample::<f64, _>(StandardNormal)).collect();
    let xty = x.transpose() * nalgebra::DVector::from_column_slice(&y);
    (y, xty.as_slice().to_vec())
}

/// Observation for a model: a series for change points, `X'Y` with `X = G^{1/2}` otherwise.
pub fn gen_data<R: Rng + ?Sized>(
    g: &GramModel,
    x: Option<&DMatrix<f64>>,
    beta: &[f64],
    rng: &mut R,
) -> Result<Observation> {
    if beta.len() != g.p() {
        return Err(CaseError::InvalidDimension(format!("beta has length {} but p = {}", beta.len(), g.p())));
    }
    if g.is_changepoint() {
        return Ok(Observation::ChangePointSeries(gen_changepoint_series(beta, rng)));
    }
    let x = x.ok_or_else(|| CaseError::InvalidInput("design matrix required for this model".into()))?;
    Ok(Observation::XtY(gen_design_response(x, beta, rng).1))
}

/// Number of coordinates with `sgn(beta_hat_j) != sgn(beta_j)`.
pub fn hamming_error(beta_hat: &[f64], beta: &[f64]) -> Result<usize> {
    if beta_hat.len() != beta.len() {
        return Err(CaseError::InvalidInput(format!("lengths differ: {} vs {}", beta_hat.len(), beta.len())));
    }
    Ok(beta_hat.iter().zip(beta).filter(|(a, b)| sgn(**a) != sgn(**b)).count())
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Directory for cached matrix square roots: `$CASE_CACHE_DIR` or `<tmp>/case-cache`.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os("CASE_CACHE_DIR").map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("case-cache"))
}

/// `G^{1/2}` of the FARIMA Gram matrix, read from or written to `dir` when given.
/// The file holds `p * p` little-endian `f64` in column-major order.
pub fn farima_sqrt_cached(p: usize, phi: f64, dir: Option<&Path>) -> Result<DMatrix<f64>> {
    let g = gram_farima(p, phi)?;
    let Some(dir) = dir else {
        return sqrt_spd(&g.to_dense());
    };
    let path = dir.join(format!("farima-sqrt-p{p}-phi{:016x}.bin", phi.to_bits()));
    if let Ok(bytes) = std::fs::read(&path) {
        if bytes.len() == p * p * 8 {
            let vals: Vec<f64> =
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            return Ok(DMatrix::from_vec(p, p, vals));
        }
        log::warn!("ignoring cache file {} with unexpected size", path.display());
    }
    let s = sqrt_spd(&g.to_dense())?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        for v in s.iter() {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
    }
    std::fs::rename(&tmp, &path)?;
    Ok(s)
}

/// Model of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ModelSpec {
    ChangePoint,
    Farima { phi: f64 },
}

impl ModelSpec {
    pub fn gram(&self, p: usize) -> Result<GramModel> {
        match self {
            ModelSpec::ChangePoint => gram_changepoint(p),
            ModelSpec::Farima { phi } => gram_farima(p, *phi),
        }
    }
}

/// Methods compared by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// CASE tuned from the true (or misspecified) `(s_p, tau_p)`.
    Case,
    /// CASE tuned from `(s_p, tau_p)` estimated by BIC-tuned SaRa (change point only).
    AdaptiveCase,
    /// SaRa with `(h, lambda)` minimizing the Hamming error.
    SaraIdeal,
    /// SaRa with `(h, lambda)` chosen by BIC.
    SaraBic,
    /// Hard thresholding of the filtered statistic (change point only).
    NaiveThreshold,
    /// Lasso with `lambda` minimizing the Hamming error along a path.
    LassoIdeal,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Case => "CASE",
            Method::AdaptiveCase => "adCASE",
            Method::SaraIdeal => "SaRa",
            Method::SaraBic => "SaRa-BIC",
            Method::NaiveThreshold => "nHT",
            Method::LassoIdeal => "lasso",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "case" => Ok(Method::Case),
            "adcase" | "adaptive-case" => Ok(Method::AdaptiveCase),
            "sara" | "sara-ideal" => Ok(Method::SaraIdeal),
            "sara-bic" => Ok(Method::SaraBic),
            "nht" | "naive" => Ok(Method::NaiveThreshold),
            "lasso" => Ok(Method::LassoIdeal),
            _ => Err(CaseError::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// One parameter cell. `tune_*` are the values handed to CASE; they equal the truth
/// unless misspecification is studied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub vartheta: f64,
    pub tau_p: f64,
    pub a: f64,
    pub pattern: SignalPattern,
    pub tune_vartheta: f64,
    pub tune_tau: f64,
}

impl Cell {
    pub fn new(vartheta: f64, tau_p: f64, a: f64, pattern: SignalPattern) -> Self {
        Cell { vartheta, tau_p, a, pattern, tune_vartheta: vartheta, tune_tau: tau_p }
    }

    /// Does the cell match every `key=value` pair of a filter such as `vartheta=0.75,tau=5.5`?
    pub fn matches(&self, filter: &str) -> Result<bool> {
        for part in filter.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| CaseError::InvalidParameter(format!("cell filter entry {part:?} lacks '='")))?;
            let k = k.trim();
            let v = v.trim();
            if k == "pattern" {
                if SignalPattern::parse(v)? != self.pattern {
                    return Ok(false);
                }
                continue;
            }
            let x: f64 =
                v.parse().map_err(|_| CaseError::InvalidParameter(format!("bad number {v:?} in cell filter")))?;
            let have = match k {
                "vartheta" => self.vartheta,
                "tau" | "tau_p" => self.tau_p,
                "a" => self.a,
                "tune_vartheta" => self.tune_vartheta,
                "tune_tau" => self.tune_tau,
                _ => return Err(CaseError::InvalidParameter(format!("unknown cell key {k:?}"))),
            };
            if (have - x).abs() > 1e-9 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Explicit overrides of the CASE tuning derived from `(s_p, tau_p)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CaseOverrides {
    pub m: Option<usize>,
    pub delta: Option<f64>,
    pub l_ps: Option<usize>,
    pub l_pe: Option<usize>,
    pub u_pe: Option<f64>,
    pub v_pe: Option<f64>,
    /// Constant per-node `q` instead of the data-driven thresholds.
    pub q_tilde: Option<f64>,
    pub branch_rule: Option<BranchRule>,
    pub large_component: Option<LargeComponentPolicy>,
}

impl CaseOverrides {
    pub fn apply(&self, cfg: &mut CaseConfig) {
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.l_ps {
            cfg.l_ps = v;
        }
        if let Some(v) = self.l_pe {
            cfg.pe.l_pe = v;
        }
        if let Some(v) = self.u_pe {
            cfg.pe.u_pe = v;
        }
        if let Some(v) = self.v_pe {
            cfg.pe.v_pe = v;
        }
        if let Some(q) = self.q_tilde {
            cfg.threshold = ThresholdMode::ConstantPerNode { q_tilde: q };
        }
        if let (Some(b), ThresholdMode::DataDriven { rule, .. }) = (self.branch_rule, &mut cfg.threshold) {
            *rule = b;
        }
        if let Some(v) = self.large_component {
            cfg.pe.large_component = v;
        }
    }
}

/// A full Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: ModelSpec,
    pub p: usize,
    pub cells: Vec<Cell>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    pub overrides: CaseOverrides,
    /// SaRa half-windows swept by the ideal and BIC tunings.
    pub sara_windows: Vec<usize>,
    /// Thresholds per window for BIC-tuned SaRa.
    pub sara_bic_lambdas: usize,
    /// Lasso path: number of penalties and smallest-to-largest ratio.
    pub lasso_grid: (usize, f64),
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(
        name: &str,
        model: ModelSpec,
        p: usize,
        cells: Vec<Cell>,
        methods: Vec<Method>,
        reps: usize,
        seed: u64,
    ) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            model,
            p,
            cells,
            methods,
            reps,
            seed,
            overrides: CaseOverrides::default(),
            sara_windows: (1..=30).collect(),
            sara_bic_lambdas: 40,
            lasso_grid: (60, 0.01),
            cache_dir: Some(default_cache_dir()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(CaseError::InvalidParameter("repetitions must be at least 1".into()));
        }
        if self.cells.is_empty() || self.methods.is_empty() {
            return Err(CaseError::InvalidParameter("experiment needs at least one cell and one method".into()));
        }
        for c in &self.cells {
            RwDesign { p: self.p, vartheta: c.vartheta, tau_p: c.tau_p, a: c.a, pattern: c.pattern.clone() }
                .validate()?;
            if !(c.tune_vartheta > 0.0 && c.tune_vartheta < 1.0) || !(c.tune_tau > 0.0) {
                return Err(CaseError::InvalidParameter("tuning values out of range".into()));
            }
        }
        let cp = self.model == ModelSpec::ChangePoint;
        for m in &self.methods {
            let ok = match m {
                Method::Case | Method::LassoIdeal => true,
                Method::AdaptiveCase | Method::SaraIdeal | Method::SaraBic | Method::NaiveThreshold => cp,
            };
            if !ok {
                return Err(CaseError::InvalidParameter(format!("method {} needs the change-point model", m.label())));
            }
            if *m == Method::LassoIdeal && cp {
                return Err(CaseError::InvalidParameter("lasso is only wired for designs with X = G^(1/2)".into()));
            }
        }
        Ok(())
    }

    /// Keep the cells matching a `key=value,...` filter.
    pub fn filter_cells(&mut self, filter: &str) -> Result<()> {
        let mut kept = Vec::new();
        for c in &self.cells {
            if c.matches(filter)? {
                kept.push(c.clone());
            }
        }
        if kept.is_empty() {
            return Err(CaseError::InvalidParameter(format!("no cell matches {filter:?}")));
        }
        self.cells = kept;
        Ok(())
    }

    /// CASE configuration for a cell.
    pub fn case_config(&self, g: &GramModel, cell: &Cell) -> Result<CaseConfig> {
        let mut cfg =
            CaseConfig::from_sparsity_strength(g, sp_from_vartheta(self.p, cell.tune_vartheta), cell.tune_tau)?;
        self.overrides.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Aggregate for one `(cell, method)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    pub method: Method,
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
    pub failed: usize,
    pub errors: Vec<Option<usize>>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<CellResult>,
}

fn rep_rng(seed: u64, cell: usize, rep: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(cell as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(rep as u64);
    rng
}

/// Mean and standard error by compensated summation in the given order.
pub fn mean_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let kahan = |it: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for v in it {
            let y = v - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        s
    };
    let mean = kahan(&mut vals.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = kahan(&mut vals.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

struct CellContext {
    g: GramModel,
    x: Option<Arc<DMatrix<f64>>>,
    gram_dense: Option<Arc<DMatrix<f64>>>,
    case: Option<CasePipeline>,
}

fn run_method(
    spec: &ExperimentSpec,
    ctx: &CellContext,
    cell: &Cell,
    method: Method,
    obs: &Observation,
    beta: &[f64],
) -> Result<usize> {
    let p = spec.p;
    let scored = if ctx.g.is_changepoint() { p - 1 } else { p };
    let score = |est: &[f64]| hamming_error(&est[..scored], &beta[..scored]);
    match method {
        Method::Case => {
            let pipe = ctx.case.as_ref().ok_or_else(|| CaseError::InvalidInput("missing CASE pipeline".into()))?;
            score(&pipe.run(obs)?.beta_hat)
        }
        Method::AdaptiveCase => {
            let Observation::ChangePointSeries(y) = obs else {
                return Err(CaseError::InvalidInput("adaptive CASE needs a change-point series".into()));
            };
            let (est, _) = sara_bic(y, &spec.sara_windows, spec.sara_bic_lambdas)?;
            let (s_hat, tau_hat) = estimate_sparsity_strength(&est[..p - 1])?;
            let s = (s_hat as f64).clamp(1.0, (p - 1) as f64);
            let mut cfg = CaseConfig::from_sparsity_strength(&ctx.g, s, tau_hat)?;
            spec.overrides.apply(&mut cfg);
            score(&crate::pipeline::case_select(&ctx.g, obs, &cfg)?.beta_hat)
        }
        Method::SaraIdeal => {
            let Observation::ChangePointSeries(y) = obs else {
                return Err(CaseError::InvalidInput("SaRa needs a change-point series".into()));
            };
            Ok(sara_ideal(y, beta, &spec.sara_windows, scored)?.0)
        }
        Method::SaraBic => {
            let Observation::ChangePointSeries(y) = obs else {
                return Err(CaseError::InvalidInput("SaRa needs a change-point series".into()));
            };
            score(&sara_bic(y, &spec.sara_windows, spec.sara_bic_lambdas)?.0)
        }
        Method::NaiveThreshold => {
            let Observation::ChangePointSeries(y) = obs else {
                return Err(CaseError::InvalidInput("naive thresholding needs a change-point series".into()));
            };
            let mut w: Vec<f64> = y.windows(2).map(|s| s[1] - s[0]).collect();
            w.push(0.0);
            let t = naive_threshold_level(cell.tune_vartheta, r_from_tau(p, cell.tune_tau), p);
            score(&naive_threshold(&w, t))
        }
        Method::LassoIdeal => {
            let Observation::XtY(xty) = obs else {
                return Err(CaseError::InvalidInput("lasso needs X'Y".into()));
            };
            let gram = ctx.gram_dense.as_ref().ok_or_else(|| CaseError::InvalidInput("missing Gram matrix".into()))?;
            let grid = lasso_lambda_grid(xty, spec.lasso_grid.0, spec.lasso_grid.1);
            Ok(lasso_ideal(gram, xty, beta, &grid)?.1)
        }
    }
}

/// Run every cell and method for `spec.reps` repetitions. All methods see the same data
/// within a repetition. Failed repetitions are logged and excluded from the means.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let g = spec.model.gram(spec.p)?;
    let x = match spec.model {
        ModelSpec::ChangePoint => None,
        ModelSpec::Farima { phi } => Some(Arc::new(farima_sqrt_cached(spec.p, phi, spec.cache_dir.as_deref())?)),
    };
    let gram_dense = if spec.methods.contains(&Method::LassoIdeal) { Some(Arc::new(g.to_dense())) } else { None };
    let mut rows = Vec::new();
    for (ci, cell) in spec.cells.iter().enumerate() {
        let start = Instant::now();
        let case = if spec.methods.contains(&Method::Case) {
            Some(CasePipeline::new(&g, &spec.case_config(&g, cell)?)?)
        } else {
            None
        };
        let ctx = CellContext { g: g.clone(), x: x.clone(), gram_dense: gram_dense.clone(), case };
        let design = RwDesign {
            p: spec.p,
            vartheta: cell.vartheta,
            tau_p: cell.tau_p,
            a: cell.a,
            pattern: cell.pattern.clone(),
        };
        let per_rep: Vec<Vec<Option<usize>>> = (0..spec.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(spec.seed, ci, rep);
                let beta = if ctx.g.is_changepoint() {
                    gen_beta_changepoint(&design, &mut rng)
                } else {
                    gen_beta(&design, &mut rng)
                };
                let obs = match gen_data(&ctx.g, ctx.x.as_deref(), &beta, &mut rng) {
                    Ok(o) => o,
                    Err(e) => {
                        log::warn!("cell {ci} rep {rep}: data generation failed: {e}");
                        return vec![None; spec.methods.len()];
                    }
                };
                spec.methods
                    .iter()
                    .map(|&m| match run_method(spec, &ctx, cell, m, &obs, &beta) {
                        Ok(e) => Some(e),
                        Err(e) => {
                            log::warn!("cell {ci} rep {rep} method {}: {e}", m.label());
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        let seconds = start.elapsed().as_secs_f64();
        for (mi, &m) in spec.methods.iter().enumerate() {
            let errors: Vec<Option<usize>> = per_rep.iter().map(|r| r[mi]).collect();
            let ok: Vec<f64> = errors.iter().flatten().map(|&e| e as f64).collect();
            let (mean, stderr) = mean_stderr(&ok);
            rows.push(CellResult {
                cell: cell.clone(),
                method: m,
                mean,
                stderr,
                reps: ok.len(),
                failed: spec.reps - ok.len(),
                errors,
                seconds,
            });
        }
    }
    Ok(ExperimentResult { spec: spec.clone(), rows })
}

impl ExperimentResult {
    /// Result table. Wall time is included only when `timing` is set, so the default
    /// output is reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, out: W, timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "experiment",
            "method",
            "model",
            "p",
            "vartheta",
            "s_p",
            "tau_p",
            "a",
            "pattern",
            "tune_vartheta",
            "tune_tau",
            "mean",
            "stderr",
            "reps",
            "failed",
        ];
        if timing {
            header.push("seconds");
        }
        w.write_record(&header)?;
        let model = match self.spec.model {
            ModelSpec::ChangePoint => "changepoint".to_string(),
            ModelSpec::Farima { phi } => format!("farima(phi={phi})"),
        };
        for r in &self.rows {
            let c = &r.cell;
            let mut rec = vec![
                self.spec.name.clone(),
                r.method.label().to_string(),
                model.clone(),
                self.spec.p.to_string(),
                format!("{}", c.vartheta),
                format!("{:.1}", sp_from_vartheta(self.spec.p, c.vartheta)),
                format!("{}", c.tau_p),
                format!("{}", c.a),
                c.pattern.label(),
                format!("{}", c.tune_vartheta),
                format!("{}", c.tune_tau),
                format!("{:.4}", r.mean),
                format!("{:.4}", r.stderr),
                r.reps.to_string(),
                r.failed.to_string(),
            ];
            if timing {
                rec.push(format!("{:.3}", r.seconds));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON-lines manifest: the full experiment definition, then one line per row with wall time.
    pub fn write_manifest<W: Write>(&self, mut out: W) -> Result<()> {
        let spec = serde_json::to_string(&self.spec).map_err(|e| CaseError::Io(e.to_string()))?;
        writeln!(out, "{{\"spec\":{spec}}}")?;
        for r in &self.rows {
            let line = serde_json::json!({
                "method": r.method.label(),
                "cell": r.cell,
                "mean": r.mean,
                "stderr": r.stderr,
                "reps": r.reps,
                "failed": r.failed,
                "seconds": r.seconds,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

/// Preset experiments at their published sizes. Names: `1a` (alias `1`), `1b`, `2`, `3`,
/// `4a` (alias `4`), `4b`, `5`, `6`.
pub fn preset(name: &str, seed: u64) -> Result<ExperimentSpec> {
    let cp = ModelSpec::ChangePoint;
    let farima = ModelSpec::Farima { phi: 0.35 };
    let two = SignalPattern::IidTwoSided;
    let changepoint_grid = |pattern: SignalPattern| -> Vec<Cell> {
        let mut cells = Vec::new();
        for &v in &[0.3, 0.45, 0.6, 0.75] {
            let taus = if v == 0.3 { grid(4.0, 6.5, 0.5) } else { grid(3.0, 5.5, 0.5) };
            for t in taus {
                cells.push(Cell::new(v, t, 1.0, pattern.clone()));
            }
        }
        cells
    };
    let spec = match name {
        "1" | "1a" => {
            ExperimentSpec::new("1a", cp, 5000, changepoint_grid(two), vec![Method::Case, Method::SaraIdeal], 100, seed)
        }
        "1b" => ExperimentSpec::new(
            "1b",
            cp,
            5000,
            changepoint_grid(two),
            vec![Method::Case, Method::AdaptiveCase, Method::SaraBic],
            100,
            seed,
        ),
        "2" => {
            let mut cells = Vec::new();
            for &v in &[0.35, 0.5, 0.75] {
                for t in grid(5.0, 13.0, 1.0) {
                    cells.push(Cell::new(v, t, 1.0, SignalPattern::PointMassTwoSided));
                }
            }
            ExperimentSpec::new("2", cp, 1_000_000, cells, vec![Method::Case, Method::NaiveThreshold], 50, seed)
        }
        "3" => {
            let mut cells = Vec::new();
            for pat in [SignalPattern::IidTwoSided, SignalPattern::IidOneSided] {
                for a in grid(1.0, 3.0, 0.5) {
                    cells.push(Cell::new(0.5, 4.5, a, pat.clone()));
                }
            }
            ExperimentSpec::new("3", cp, 5000, cells, vec![Method::Case, Method::SaraIdeal], 50, seed)
        }
        "4" | "4a" | "4b" => {
            let pat =
                if name == "4b" { SignalPattern::AdjacentPairsOpposite } else { SignalPattern::PointMassTwoSided };
            let mut cells = Vec::new();
            for &v in &[0.35, 0.45, 0.55] {
                for t in grid(4.0, 8.0, 1.0) {
                    cells.push(Cell::new(v, t, 1.0, pat.clone()));
                }
            }
            let label = if name == "4b" { "4b" } else { "4a" };
            ExperimentSpec::new(label, farima, 5000, cells, vec![Method::Case, Method::LassoIdeal], 100, seed)
        }
        "5" => {
            let mut cells = Vec::new();
            let pat = SignalPattern::AdjacentPairsOpposite;
            for (v, t, vs, ts) in [
                (0.35, 6.0, vec![0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5], vec![4.0, 5.0, 5.5, 6.0, 6.5, 7.0, 8.0]),
                (0.55, 5.0, vec![0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7], vec![3.0, 4.0, 4.5, 5.0, 5.5, 6.0, 7.0]),
            ] {
                for tv in vs {
                    cells.push(Cell { tune_vartheta: tv, ..Cell::new(v, t, 1.0, pat.clone()) });
                }
                for tt in ts {
                    cells.push(Cell { tune_tau: tt, ..Cell::new(v, t, 1.0, pat.clone()) });
                }
            }
            ExperimentSpec::new("5", farima, 5000, cells, vec![Method::Case], 50, seed)
        }
        "6" => {
            let mut cells = Vec::new();
            for s in ["++", "+-", "+++", "++-", "+-+", "+--"] {
                for t in grid(5.0, 10.0, 1.0) {
                    cells.push(Cell::new(0.75, t, 1.0, SignalPattern::block(s)?));
                }
            }
            ExperimentSpec::new("6", farima, 4998, cells, vec![Method::Case, Method::LassoIdeal], 50, seed)
        }
        _ => return Err(CaseError::InvalidParameter(format!("unknown experiment {name:?}"))),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_basics() {
        let b = [0.0, 1.0, -2.0, 0.0];
        assert_eq!(hamming_error(&b, &b).unwrap(), 0);
        assert_eq!(hamming_error(&[0.0; 4], &b).unwrap(), 2);
        assert_eq!(hamming_error(&[0.0, -1.0, -2.0, 0.0], &b).unwrap(), 1);
        assert!(hamming_error(&[0.0; 3], &b).is_err());
    }

    #[test]
    fn a_one_gives_exact_magnitudes() {
        let d = RwDesign { p: 2000, vartheta: 0.3, tau_p: 4.0, a: 1.0, pattern: SignalPattern::IidTwoSided };
        let mut rng = rep_rng(1, 0, 0);
        let b = gen_beta(&d, &mut rng);
        assert!(b.iter().filter(|v| **v != 0.0).all(|v| v.abs() == 4.0));
        assert!(b.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn pairs_cancel() {
        let d = RwDesign { p: 1000, vartheta: 0.2, tau_p: 3.0, a: 1.0, pattern: SignalPattern::AdjacentPairsOpposite };
        let b = gen_beta(&d, &mut rep_rng(3, 0, 0));
        for k in 0..500 {
            assert_eq!(b[2 * k] + b[2 * k + 1], 0.0);
        }
    }

    #[test]
    fn changepoint_step() {
        let mut beta = vec![0.0; 10];
        beta[3] = 2.0;
        let mut rng = rep_rng(0, 0, 0);
        let y = gen_changepoint_series(&beta, &mut rng);
        let mut rng = rep_rng(0, 0, 0);
        let z = gen_changepoint_series(&[0.0; 10], &mut rng);
        for i in 0..10 {
            let step = if i >= 4 { 2.0 } else { 0.0 };
            assert!((y[i] - z[i] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn block_divisibility() {
        let d = RwDesign { p: 1000, vartheta: 0.5, tau_p: 3.0, a: 1.0, pattern: SignalPattern::block("+-+").unwrap() };
        assert!(d.validate().is_err());
    }

    #[test]
    fn streams_differ_by_rep_and_cell() {
        let a: u64 = rep_rng(5, 0, 0).random();
        let b: u64 = rep_rng(5, 0, 1).random();
        let c: u64 = rep_rng(5, 1, 0).random();
        assert!(a != b && a != c && b != c);
        assert_eq!(a, rep_rng(5, 0, 0).random::<u64>());
    }

    #[test]
    fn cell_filter() {
        let c = Cell::new(0.75, 5.5, 1.0, SignalPattern::IidTwoSided);
        assert!(c.matches("vartheta=0.75,tau=5.5").unwrap());
        assert!(!c.matches("vartheta=0.6").unwrap());
        assert!(c.matches("bogus=1").is_err());
    }

    #[test]
    fn presets_validate() {
        for n in ["1a", "1b", "2", "3", "4a", "4b", "5", "6"] {
            preset(n, 1).unwrap().validate().unwrap();
        }
    }
}
