// SPDX-License-Identifier: MIT OR Apache-2.0

//! `case`: variable selection, Monte Carlo experiments and rate computations.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numeric failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use case_core::gosd::{build_gosd, subgraph_counts};
use case_core::gram::matrix_from_rows;
use case_core::pipeline::{case_select, sp_from_vartheta, tau_from_r, CaseConfig, Observation};
use case_core::rates::{
    cp_boundary, cp_boundary_left, cp_boundary_right, default_gmax, hard_threshold_boundaries, rate_report,
    LtsPatterns, LtsSearch,
};
use case_core::screening::{write_trace_csv, BranchRule};
use case_core::simlab::{self, Cell, ExperimentSpec, Method, ModelSpec, SignalPattern};
use case_core::sparsify::sparsify;
use case_core::{
    gram_changepoint, gram_dense, gram_farima, gram_powerdecay, CaseError, GramModel, LargeComponentPolicy,
    LinearFilter,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "case", version, about = "Covariance assisted screening and estimation")]
struct Cli {
    /// INI file with default flag values; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the selection pipeline on one data set.
    #[command(args_override_self = true)]
    Select(SelectArgs),
    /// Run a Monte Carlo experiment.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Exponent tables and boundary samples.
    #[command(args_override_self = true)]
    Rates(RatesArgs),
    /// Phase-diagram boundary curves.
    #[command(name = "phase-diagram", args_override_self = true)]
    PhaseDiagram(PhaseArgs),
    /// Degree histogram and connected-subgraph counts of the GOSD.
    #[command(name = "gosd-inspect", args_override_self = true)]
    GosdInspect(GosdArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ModelArg {
    Changepoint,
    Farima,
    Powerdecay,
    DenseFile,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum QMode {
    DataDriven,
    Constant,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum BranchArg {
    Continuous,
    OmegaOnly,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum LargeArg {
    Marginal,
    GapSplit,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum FilterArg {
    Identity,
    First,
    Second,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "changepoint")]
    model: ModelArg,
    /// Number of variables.
    #[arg(long)]
    p: Option<usize>,
    /// FARIMA long-memory parameter in (0, 1/2).
    #[arg(long, default_value_t = 0.35)]
    phi: f64,
    /// Power-decay model `G(i,j) = (1 + scale |i-j|)^-rate`.
    #[arg(long, default_value_t = 0.95)]
    decay_rate: f64,
    #[arg(long, default_value_t = 5.0)]
    decay_scale: f64,
    /// Gram matrix CSV for `dense-file` (no header).
    #[arg(long, value_name = "PATH")]
    gram: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct SignalArgs {
    /// Sparsity exponent; `s_p = p^(1 - vartheta)`.
    #[arg(long, conflicts_with = "s_p")]
    vartheta: Option<f64>,
    /// Expected number of signals.
    #[arg(long = "s-p")]
    s_p: Option<f64>,
    /// Strength exponent; `tau_p = sqrt(2 r log p)`.
    #[arg(long, conflicts_with = "tau_p")]
    r: Option<f64>,
    /// Minimum signal strength.
    #[arg(long = "tau-p")]
    tau_p: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct TuningArgs {
    /// Largest connected subgraph screened.
    #[arg(long)]
    m: Option<usize>,
    /// GOSD threshold.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "l-ps")]
    l_ps: Option<usize>,
    #[arg(long = "l-pe")]
    l_pe: Option<usize>,
    #[arg(long = "u-pe")]
    u_pe: Option<f64>,
    #[arg(long = "v-pe")]
    v_pe: Option<f64>,
    /// Screening thresholds: data driven from (vartheta, r) or `2 q |F| log p`.
    #[arg(long = "q-mode", value_enum)]
    q_mode: Option<QMode>,
    /// `q` for `--q-mode constant`.
    #[arg(long = "q-tilde", default_value_t = 0.5)]
    q_tilde: f64,
    /// Branch test of the data-driven `q`: `r w > |F| vartheta` or `w > |F| vartheta`.
    #[arg(long = "q-branch", value_enum)]
    q_branch: Option<BranchArg>,
    /// Handling of components above the exact-search cap.
    #[arg(long = "large-component", value_enum)]
    large_component: Option<LargeArg>,
}

impl TuningArgs {
    fn overrides(&self) -> simlab::CaseOverrides {
        simlab::CaseOverrides {
            m: self.m,
            delta: self.delta,
            l_ps: self.l_ps,
            l_pe: self.l_pe,
            u_pe: self.u_pe,
            v_pe: self.v_pe,
            q_tilde: (self.q_mode == Some(QMode::Constant)).then_some(self.q_tilde),
            branch_rule: self.q_branch.map(|v| match v {
                BranchArg::Continuous => BranchRule::Continuous,
                BranchArg::OmegaOnly => BranchRule::OmegaOnly,
            }),
            large_component: self.large_component.map(|v| match v {
                LargeArg::Marginal => LargeComponentPolicy::Marginal,
                LargeArg::GapSplit => LargeComponentPolicy::GapSplit,
            }),
        }
    }
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    signal: SignalArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Data CSV, one value per row: the series for `changepoint`, otherwise `X'Y`
    /// (or `Y` when `--design` is given).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Design matrix CSV (no header); `--input` is then `Y`.
    #[arg(long, value_name = "PATH")]
    design: Option<PathBuf>,
    /// Screening trace CSV.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Output CSV (default: standard output).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Preset experiment: 1a (or 1), 1b, 2, 3, 4a (or 4), 4b, 5, 6.
    #[arg(long, visible_alias = "experiment")]
    table: Option<String>,
    /// Keep cells matching `key=value,...` (keys: vartheta, tau, a, pattern, tune_vartheta, tune_tau).
    #[arg(long)]
    cell: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    phi: Option<f64>,
    #[command(flatten)]
    signal: SignalArgs,
    /// Signal magnitude ratio; nonzero magnitudes lie in `[tau_p, a tau_p]`.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Signal pattern for a custom cell: iid-two-sided, iid-one-sided, pairs-opposite,
    /// point-mass or a sign string such as `+-+`.
    #[arg(long, default_value = "iid-two-sided")]
    pattern: String,
    /// Comma-separated methods: case, adcase, sara, sara-bic, nht, lasso.
    #[arg(long)]
    methods: Option<String>,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Directory for cached matrix square roots.
    #[arg(long, value_name = "PATH")]
    cache_dir: Option<PathBuf>,
    /// Add a wall-time column to the CSV.
    #[arg(long)]
    timing: bool,
    /// Result CSV (default: standard output).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// JSON-lines manifest (default: `<out>.manifest.jsonl` when `--out` is set).
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[arg(long, value_enum, default_value = "changepoint")]
    model: ModelArg,
    #[arg(long, default_value_t = 0.35)]
    phi: f64,
    /// Number of vartheta grid points in (0, 1) for boundary samples.
    #[arg(long, default_value_t = 50)]
    grid: usize,
    /// Toeplitz window for the long-memory exponent.
    #[arg(long, default_value_t = 300)]
    window: usize,
    /// Emit the per-(F, N) exponent table at `--j` instead of boundary samples.
    #[arg(long)]
    patterns: bool,
    /// Finite model size for `--patterns`.
    #[arg(long, default_value_t = 200)]
    p: usize,
    /// 1-based position for `--patterns` (default: middle).
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    vartheta: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    /// Largest pattern size `|F u N|` for `--patterns`.
    #[arg(long)]
    gmax: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[arg(long, value_enum, default_value = "changepoint")]
    model: ModelArg,
    #[arg(long, default_value_t = 0.35)]
    phi: f64,
    #[arg(long, default_value_t = 50)]
    grid: usize,
    #[arg(long, default_value_t = 300)]
    window: usize,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GosdArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Filter (default: second difference for change points, first difference otherwise).
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<CaseError> for Failure {
    fn from(e: CaseError) -> Self {
        Failure { code: if e.is_numeric() { 2 } else { 1 }, msg: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, msg: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { code: 1, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

type Res<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let raw: Vec<OsString> = std::env::args_os().collect();
    let argv = match merge_config(raw) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            return ExitCode::from(f.code);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(usage(e.to_string())),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

/// Insert `--key value` pairs from the INI file named by `--config` right after the
/// subcommand so that explicit flags, which come later, override them. Keys outside
/// any section apply to every subcommand; a section named after the subcommand applies
/// to it alone. Boolean keys take `true`/`false`.
fn merge_config(raw: Vec<OsString>) -> Res<Vec<OsString>> {
    let args: Vec<String> = raw.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(v) = a.strip_prefix("--config=") {
            path = Some(v.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(raw);
    };
    let subs = ["select", "simulate", "rates", "phase-diagram", "gosd-inspect"];
    let Some(pos) = args.iter().position(|a| subs.contains(&a.as_str())) else {
        return Ok(raw);
    };
    let ini = ini::Ini::load_from_file(&path).map_err(|e| usage(format!("cannot read config {path}: {e}")))?;
    let mut extra: Vec<OsString> = Vec::new();
    for section in [None, Some(args[pos].as_str())] {
        if let Some(props) = ini.section(section) {
            for (k, v) in props.iter() {
                let flag = format!("--{}", k.trim().replace('_', "-"));
                match v.trim() {
                    "true" => extra.push(flag.into()),
                    "false" => {}
                    val => {
                        extra.push(flag.into());
                        extra.push(val.into());
                    }
                }
            }
        }
    }
    let mut out: Vec<OsString> = raw[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&raw[pos + 1..]);
    Ok(out)
}

fn dispatch(cmd: Command) -> Res<()> {
    match cmd {
        Command::Select(a) => cmd_select(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Rates(a) => cmd_rates(a),
        Command::PhaseDiagram(a) => cmd_phase(a),
        Command::GosdInspect(a) => cmd_gosd(a),
    }
}

fn output(path: &Option<PathBuf>) -> Res<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Read a numeric CSV. A first row that does not parse is taken as a header.
fn read_matrix_csv(path: &Path) -> Res<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(usage(format!("{}: non-numeric value on line {}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

fn read_vector_csv(path: &Path) -> Res<Vec<f64>> {
    let rows = read_matrix_csv(path)?;
    rows.into_iter().map(|r| r.last().copied().ok_or_else(|| usage(format!("{}: empty row", path.display())))).collect()
}

fn build_gram(m: &ModelArgs, p_default: Option<usize>) -> Res<GramModel> {
    let p = m.p.or(p_default);
    let need_p = || p.ok_or_else(|| usage("--p is required for this model"));
    Ok(match m.model {
        ModelArg::Changepoint => gram_changepoint(need_p()?)?,
        ModelArg::Farima => gram_farima(need_p()?, m.phi)?,
        ModelArg::Powerdecay => gram_powerdecay(need_p()?, m.decay_rate, m.decay_scale)?,
        ModelArg::DenseFile => {
            let path = m.gram.as_ref().ok_or_else(|| usage("--gram is required for dense-file"))?;
            let rows = read_matrix_csv(path)?;
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(usage(format!("{}: Gram matrix must be square", path.display())));
            }
            gram_dense(matrix_from_rows(&rows)?)?
        }
    })
}

/// `(s_p, tau_p)` from whichever of the exponent or direct flags was given.
fn sparsity_strength(s: &SignalArgs, p: usize) -> Res<(f64, f64)> {
    let s_p = match (s.s_p, s.vartheta) {
        (Some(v), _) => v,
        (None, Some(t)) => sp_from_vartheta(p, t),
        _ => return Err(usage("one of --s-p or --vartheta is required")),
    };
    let tau = match (s.tau_p, s.r) {
        (Some(v), _) => v,
        (None, Some(r)) => tau_from_r(p, r),
        _ => return Err(usage("one of --tau-p or --r is required")),
    };
    Ok((s_p, tau))
}

fn cmd_select(a: SelectArgs) -> Res<()> {
    let data = read_vector_csv(&a.input)?;
    let design = a.design.as_ref().map(|p| read_matrix_csv(p)).transpose()?;
    let p_default = match &design {
        Some(x) => x.first().map(Vec::len),
        None => Some(data.len()),
    };
    let g = build_gram(&a.model, p_default)?;
    let p = g.p();
    let (s_p, tau) = sparsity_strength(&a.signal, p)?;
    let mut cfg = CaseConfig::from_sparsity_strength(&g, s_p, tau)?;
    a.tuning.overrides().apply(&mut cfg);
    let obs = if g.is_changepoint() {
        Observation::ChangePointSeries(data)
    } else if let Some(x) = design {
        Observation::Design { x: matrix_from_rows(&x)?, y: data }
    } else {
        Observation::XtY(data)
    };
    let res = case_select(&g, &obs, &cfg)?;
    if let Some(t) = &a.trace {
        write_trace_csv(&res.screening.trace, File::create(t)?)?;
    }
    // the last change-point coordinate is the level, not a jump
    let rows = if g.is_changepoint() { p - 1 } else { p };
    let mut out = output(&a.out)?;
    res.write_csv(&mut out, rows)?;
    out.flush()?;
    Ok(())
}

fn parse_methods(s: &str) -> Res<Vec<Method>> {
    s.split(',').map(str::trim).filter(|m| !m.is_empty()).map(|m| Method::parse(m).map_err(Failure::from)).collect()
}

fn cmd_simulate(a: SimulateArgs) -> Res<()> {
    let mut spec = match &a.table {
        Some(t) => simlab::preset(t, a.seed)?,
        None => {
            let model = match a.model.unwrap_or(ModelArg::Changepoint) {
                ModelArg::Changepoint => ModelSpec::ChangePoint,
                ModelArg::Farima => ModelSpec::Farima { phi: a.phi.unwrap_or(0.35) },
                m => return Err(usage(format!("simulate supports changepoint and farima, not {m:?}"))),
            };
            let p = a.p.ok_or_else(|| usage("--p is required without --table"))?;
            let vartheta = match (a.signal.vartheta, a.signal.s_p) {
                (Some(v), _) => v,
                (None, Some(s)) => case_core::pipeline::vartheta_from_sp(p, s),
                _ => return Err(usage("one of --vartheta or --s-p is required without --table")),
            };
            let (_, tau) = sparsity_strength(&SignalArgs { vartheta: Some(vartheta), ..a.signal.clone() }, p)?;
            let cell = Cell::new(vartheta, tau, a.a, SignalPattern::parse(&a.pattern)?);
            let methods = match model {
                ModelSpec::ChangePoint => vec![Method::Case, Method::SaraIdeal],
                ModelSpec::Farima { .. } => vec![Method::Case, Method::LassoIdeal],
            };
            ExperimentSpec::new("custom", model, p, vec![cell], methods, 100, a.seed)
        }
    };
    if a.table.is_some() {
        if let Some(p) = a.p {
            spec.p = p;
        }
        if let (Some(phi), ModelSpec::Farima { .. }) = (a.phi, spec.model) {
            spec.model = ModelSpec::Farima { phi };
        }
    }
    if let Some(r) = a.reps {
        spec.reps = r;
    }
    if let Some(m) = &a.methods {
        spec.methods = parse_methods(m)?;
    }
    if let Some(c) = &a.cell {
        spec.filter_cells(c)?;
    }
    if let Some(d) = &a.cache_dir {
        spec.cache_dir = Some(d.clone());
    }
    spec.overrides = a.tuning.overrides();
    let res = simlab::run_experiment(&spec)?;
    let mut out = output(&a.out)?;
    res.write_csv(&mut out, a.timing)?;
    out.flush()?;
    let manifest = a.manifest.clone().or_else(|| {
        a.out.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".manifest.jsonl");
            PathBuf::from(s)
        })
    });
    if let Some(m) = manifest {
        res.write_manifest(BufWriter::new(File::create(m)?))?;
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn labels(v: &[usize]) -> String {
    v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ")
}

fn vartheta_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

fn cmd_rates(a: RatesArgs) -> Res<()> {
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    if a.patterns {
        let vartheta = a.vartheta.ok_or_else(|| usage("--vartheta is required with --patterns"))?;
        let r = a.r.ok_or_else(|| usage("--r is required with --patterns"))?;
        let (g, f) = match a.model {
            ModelArg::Changepoint => (gram_changepoint(a.p)?, LinearFilter::second_difference()),
            ModelArg::Farima => (gram_farima(a.p, a.phi)?, LinearFilter::first_difference()),
            m => return Err(usage(format!("rates supports changepoint and farima, not {m:?}"))),
        };
        let j = a.j.unwrap_or(a.p / 2);
        if j == 0 || j > a.p {
            return Err(usage(format!("--j must be in 1..={}", a.p)));
        }
        let sp = sparsify(&g, &f, 0.0)?;
        let gmax = a.gmax.unwrap_or_else(|| default_gmax(vartheta, r, 2).min(4));
        let radius = ((a.p as f64).ln().round() as usize).max(1);
        let rep = rate_report(j - 1, vartheta, r, &sp, radius, gmax)?;
        w.write_record(["F", "N", "omega", "omega_tilde", "psi", "q_star"])?;
        for rec in &rep.records {
            w.write_record([
                labels(&rec.f),
                labels(&rec.n),
                fmt(rec.omega),
                fmt(rec.omega_tilde),
                fmt(rec.psi),
                fmt(rec.q_star),
            ])?;
        }
    } else {
        match a.model {
            ModelArg::Changepoint => {
                w.write_record(["vartheta", "r_star"])?;
                for v in vartheta_grid(a.grid) {
                    w.write_record([fmt(v), fmt(cp_boundary(v))])?;
                }
            }
            ModelArg::Farima => {
                let pats = LtsPatterns::new(a.phi, a.window, LtsSearch::default())?;
                w.write_record(["vartheta", "r_star"])?;
                for v in vartheta_grid(a.grid) {
                    w.write_record([fmt(v), fmt(pats.boundary(v)?)])?;
                }
            }
            m => return Err(usage(format!("rates supports changepoint and farima, not {m:?}"))),
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_phase(a: PhaseArgs) -> Res<()> {
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    match a.model {
        ModelArg::Changepoint => {
            w.write_record(["vartheta", "case_boundary", "curve_left", "curve_right", "nht_lower", "nht_upper"])?;
            for v in vartheta_grid(a.grid) {
                let (lo, hi) = hard_threshold_boundaries(v);
                w.write_record([
                    fmt(v),
                    fmt(cp_boundary(v)),
                    fmt(cp_boundary_left(v)),
                    fmt(cp_boundary_right(v)),
                    fmt(lo),
                    fmt(hi),
                ])?;
            }
        }
        ModelArg::Farima => {
            let pats = LtsPatterns::new(a.phi, a.window, LtsSearch::default())?;
            w.write_record(["vartheta", "r_star"])?;
            for v in vartheta_grid(a.grid) {
                w.write_record([fmt(v), fmt(pats.boundary(v)?)])?;
            }
        }
        m => return Err(usage(format!("phase-diagram supports changepoint and farima, not {m:?}"))),
    }
    w.flush()?;
    Ok(())
}

fn cmd_gosd(a: GosdArgs) -> Res<()> {
    let g = build_gram(&a.model, None)?;
    let filter = match a.filter {
        Some(FilterArg::Identity) => LinearFilter::identity(),
        Some(FilterArg::First) => LinearFilter::first_difference(),
        Some(FilterArg::Second) => LinearFilter::second_difference(),
        None if g.is_changepoint() => LinearFilter::second_difference(),
        None => LinearFilter::first_difference(),
    };
    let delta = a.delta.unwrap_or(if g.is_changepoint() { 0.0 } else { 1.0 / (g.p() as f64).ln() });
    let sp = sparsify(&g, &filter, delta)?;
    let gosd = build_gosd(&sp, delta);
    let mut w = csv::Writer::from_writer(output(&a.out)?);
    w.write_record(["kind", "value", "count"])?;
    for (d, c) in gosd.degree_histogram().iter().enumerate() {
        w.write_record(["degree".to_string(), d.to_string(), c.to_string()])?;
    }
    for (k, c) in subgraph_counts(&gosd, a.m).iter().enumerate().skip(1) {
        w.write_record(["subgraph_size".to_string(), k.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
