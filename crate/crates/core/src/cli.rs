//! `ddmpc` command-line driver: gen, synth, verify, sim, repro.
//!
//! Exit codes: 0 when every requested certificate passes, 1 when a
//! certificate fails or informativity is not established, 2 on bad input.

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{self, ConfigError, ControllerFile, FileDigest, Manifest, Preset, SynthConfig};
use crate::datalab::{self, consistent_set, dataset_from_json, dataset_to_json, regressor_rank, run_experiment, uniform_inputs, DataError, Dataset, SystemMatrices};
use crate::io::{self, IoError};
use crate::lmi::{self, LmiProblem, Mode};
use crate::plants::{parse_plant, Plant};
use crate::simloop::{self, SimResult};
use crate::synthesis::{self, verify_certificate, verify_gain, CertificateReport, SynthError, Synthesis, VerifyContext};

#[derive(Parser, Debug)]
#[command(name = "ddmpc", version, about = "Robust state-feedback MPC synthesis from input/state data, with certificate checking")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct GlobalArgs {
    /// Experiment seed (repro: base seed, vertex j uses seed + j).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "tol-feas", global = true)]
    pub tol_feas: Option<f64>,
    #[arg(long = "tol-gap", global = true)]
    pub tol_gap: Option<f64>,
    /// Strictness margin for the `≻ 0` blocks.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Simulation and verification horizon.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true, value_parser = parse_mode)]
    #[serde(serialize_with = "ser_mode")]
    pub mode: Option<Mode>,
    /// Output file (gen, sim) or directory (synth, verify, repro).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

fn ser_mode<S: serde::Serializer>(m: &Option<Mode>, s: S) -> Result<S::Ok, S::Error> {
    m.map(|m| m.as_str()).serialize(s)
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an open-loop experiment and record a dataset.
    Gen(GenArgs),
    /// Synthesize a controller from datasets.
    Synth(SynthArgs),
    /// Re-check a controller file against its datasets.
    Verify(VerifyArgs),
    /// Simulate a controller on a plant.
    Sim(SimArgs),
    /// Reproduce one of the built-in examples end to end.
    Repro(ReproArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub plant: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    /// Experiment length T.
    #[arg(long, short = 'T')]
    pub length: usize,
    /// Per-channel input amplitude (default 1 for every channel).
    #[arg(long = "input-bound", allow_hyphen_values = true)]
    pub input_bound: Option<String>,
    /// Apply u ≡ 0 (produces rank-deficient data).
    #[arg(long = "zero-input")]
    pub zero_input: bool,
    /// Record W₋ (Lur'e plants).
    #[arg(long = "record-w")]
    pub record_w: bool,
    /// Vertex tag stored in the dataset.
    #[arg(long)]
    pub vertex: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Dataset files (one per vertex in polytopic mode).
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub controller: PathBuf,
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SimArgs {
    #[arg(long)]
    pub controller: PathBuf,
    #[arg(long)]
    pub plant: PathBuf,
    /// Initial state (defaults to the synthesis x0).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Re-synthesize at every step from the controller's datasets.
    #[arg(long = "resolve-online")]
    pub resolve_online: bool,
    /// Datasets for online re-synthesis.
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// Also write an SVG rendering next to the trajectory.
    #[arg(long)]
    pub svg: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    One,
    Two,
}

impl Example {
    fn name(self) -> &'static str {
        match self {
            Example::One => "one",
            Example::Two => "two",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ReproArgs {
    pub example: Example,
    /// Check the published reference gain instead of synthesizing.
    #[arg(long = "use-paper-gain")]
    pub use_paper_gain: bool,
    #[arg(long = "resolve-online")]
    pub resolve_online: bool,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Input(String),
    /// Pipeline ran but a certificate failed: exit code 1.
    Failed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

macro_rules! input_err {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_err!(IoError, ConfigError, DataError, crate::plants::PlantError, crate::lmi::LmiError, crate::simloop::SimError);

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Lmi(_) | SynthError::Data(_) | SynthError::Plant(_) | SynthError::MissingW | SynthError::Sector { .. } => CliError::Input(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen(a) => cmd_gen(g, a, argv),
        Command::Synth(a) => cmd_synth(g, a, argv),
        Command::Verify(a) => cmd_verify(g, a, argv),
        Command::Sim(a) => cmd_sim(g, a, argv),
        Command::Repro(a) => cmd_repro(g, a, argv),
    }
}

struct Outputs {
    files: Vec<FileDigest>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn write(&mut self, path: &Path, text: &str) -> CliResult<()> {
        io::write_text(path, text)?;
        self.files.push(FileDigest::of(path)?);
        Ok(())
    }

    fn manifest(self, path: &Path, command: &str, argv: &[String], parameters: serde_json::Value, inputs: Vec<FileDigest>) -> CliResult<()> {
        let m = Manifest {
            tool: "ddmpc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv: argv.to_vec(),
            parameters,
            inputs,
            outputs: self.files,
        };
        io::write_text(path, &io::to_json(&m))?;
        Ok(())
    }
}

fn params<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn vector(text: &str, what: &str) -> CliResult<DVector<f64>> {
    io::parse_vector(text).map_err(|e| CliError::Input(format!("--{what}: {e}")))
}

fn load_plant(path: &Path) -> CliResult<Plant> {
    Ok(parse_plant(&io::read_text(path)?, &path.display().to_string())?)
}

fn load_datasets(paths: &[PathBuf]) -> CliResult<(Vec<Dataset>, Vec<FileDigest>)> {
    let mut ds = Vec::new();
    let mut digests = Vec::new();
    for p in paths {
        ds.push(dataset_from_json(&io::read_text(p)?, &p.display().to_string())?);
        digests.push(FileDigest::of(p)?);
    }
    Ok((ds, digests))
}

fn apply_overrides(cfg: &mut SynthConfig, g: &GlobalArgs) {
    let s = &mut cfg.settings;
    if let Some(v) = g.tol_feas {
        s.solver.feas_tol = v;
    }
    if let Some(v) = g.tol_gap {
        s.solver.gap_tol = v;
    }
    if let Some(v) = g.delta {
        s.solver.delta = v;
    }
    if let Some(v) = g.steps {
        s.verify.sim_steps = v;
    }
    if let Some(m) = g.mode {
        cfg.mode = m;
    }
}

fn out_dir(g: &GlobalArgs, default: &str) -> CliResult<PathBuf> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn check_mode(cfg: &SynthConfig, ds: &[Dataset]) -> CliResult<()> {
    let first = ds.first().ok_or_else(|| CliError::Input("no datasets given".into()))?;
    let (n, m) = (first.n(), first.m());
    if ds.iter().any(|d| d.n() != n || d.m() != m) {
        return Err(CliError::Input("datasets disagree on (n, m)".into()));
    }
    cfg.check_dims(n, m)?;
    match cfg.mode {
        Mode::Nominal if ds.len() != 1 => Err(CliError::Input(format!("nominal mode takes one dataset, got {}", ds.len()))),
        Mode::Lure if ds.len() != 1 => Err(CliError::Input(format!("lure mode takes one dataset, got {}", ds.len()))),
        Mode::Lure if first.w_minus.is_none() => Err(CliError::Input("lure mode needs a dataset with recorded W_minus (gen --record-w)".into())),
        Mode::Lure if cfg.lure.is_none() && first.lure.is_none() => Err(CliError::Input("lure mode needs H and beta ([lure] in the config)".into())),
        _ => Ok(()),
    }
}

fn lure_hb(cfg: &SynthConfig, d: &Dataset) -> CliResult<(DMatrix<f64>, DMatrix<f64>)> {
    match cfg.lure_matrices()? {
        Some(hb) => Ok(hb),
        None => d.lure.as_ref().map(|r| (r.h.clone(), r.beta.clone())).ok_or_else(|| CliError::Input("missing H and beta".into())),
    }
}

/// Runs the synthesis selected by `cfg.mode`.
pub fn synthesize(cfg: &SynthConfig, ds: &[Dataset]) -> Result<Synthesis, CliError> {
    check_mode(cfg, ds)?;
    let w = cfg.weights()?;
    let rows = cfg.rows(ds[0].n(), ds[0].m())?;
    let x0 = cfg.x0();
    let s = &cfg.settings;
    Ok(match cfg.mode {
        Mode::Nominal => synthesis::synthesize_nominal(&ds[0], &w, &rows, &x0, s)?,
        Mode::Polytopic => synthesis::synthesize_polytopic(ds, &w, &rows, &x0, s)?,
        Mode::Lure => {
            let (h, beta) = lure_hb(cfg, &ds[0])?;
            synthesis::synthesize_lure(&ds[0], &w, &rows, &x0, &h, &beta, s)?
        }
    })
}

fn build_problem(cfg: &SynthConfig, ds: &[Dataset]) -> CliResult<LmiProblem> {
    check_mode(cfg, ds)?;
    let w = cfg.weights()?;
    let rows = cfg.rows(ds[0].n(), ds[0].m())?;
    let x0 = cfg.x0();
    Ok(match cfg.mode {
        Mode::Nominal => lmi::build_nominal(&ds[0], &w, &rows, &x0)?,
        Mode::Polytopic => lmi::build_polytopic(ds, &w, &rows, &x0, cfg.settings.per_vertex_epsilon)?,
        Mode::Lure => {
            let (h, beta) = lure_hb(cfg, &ds[0])?;
            lmi::build_lure(&ds[0], &w, &rows, &x0, &h, &beta)?
        }
    })
}

fn fmt_row(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_k(k: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..k.nrows()).map(|i| fmt_row(&k.row(i).iter().copied().collect::<Vec<_>>())).collect();
    rows.join("; ")
}

fn report_lines(r: &CertificateReport) -> String {
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    let mut s = String::new();
    let worst = r.lmi_residuals.iter().map(|b| b.min_eig).fold(f64::INFINITY, f64::min);
    let _ = writeln!(s, "  lmi residuals       {}  (worst min eig {worst:.3e})", mark(r.lmi_ok));
    let _ = writeln!(s, "  closed-loop radii   {}  (max {:.6} over {} systems)", mark(r.radii_ok), r.max_radius, r.vertex_radii.len());
    let em = r.ellipsoid_margins.iter().copied().fold(f64::INFINITY, f64::min);
    let _ = writeln!(s, "  ellipsoid in rows   {}  (min margin {em:.3e})", mark(r.ellipsoid_ok));
    let _ = writeln!(s, "  lyapunov decrease   {}", mark(r.lyapunov_ok));
    let _ = writeln!(s, "  cost <= alpha       {}", mark(r.cost_bound_ok));
    let _ = writeln!(s, "  constraints in sim  {}", mark(r.constraints_ok));
    if let Some(ok) = r.sector_ok {
        let _ = writeln!(s, "  sector residual     {}", mark(ok));
    }
    for n in &r.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    s
}

fn cmd_gen(g: &GlobalArgs, a: &GenArgs, argv: &[String]) -> CliResult<()> {
    let out = g.out.clone().ok_or_else(|| CliError::Input("gen needs --out <dataset.json>".into()))?;
    let plant = load_plant(&a.plant)?;
    let x0 = vector(&a.x0, "x0")?;
    let seed = g.seed.unwrap_or(0);
    let bounds = match (&a.input_bound, a.zero_input) {
        (_, true) => vec![0.0; plant.m()],
        (Some(b), false) => vector(b, "input-bound")?.as_slice().to_vec(),
        (None, false) => vec![1.0; plant.m()],
    };
    if bounds.len() != plant.m() {
        return Err(CliError::Input(format!("--input-bound has {} entries, plant has m = {}", bounds.len(), plant.m())));
    }
    let mut d = run_experiment(&plant, &x0, &uniform_inputs(&bounds, a.length, seed), a.record_w)?;
    d.seed = Some(seed);
    d.vertex = a.vertex;
    d.provenance = format!("{}; plant {}; inputs uniform in +-{:?}, seed {seed}", d.provenance, a.plant.display(), bounds);
    let mut outs = Outputs::new();
    outs.write(&out, &dataset_to_json(&d))?;
    let rank = regressor_rank(&d)?;
    println!("dataset: n = {}, m = {}, T = {}, regressor rank {rank}{} -> {}", d.n(), d.m(), d.t(), if d.w_minus.is_some() { ", W recorded" } else { "" }, out.display());
    let inputs = vec![FileDigest::of(&a.plant)?];
    let params = serde_json::json!({ "global": params(g), "gen": params(a), "seed": seed, "input_bounds": bounds });
    outs.manifest(&with_suffix(&out, ".manifest.json"), "gen", argv, params, inputs)
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_synth(g: &GlobalArgs, a: &SynthArgs, argv: &[String]) -> CliResult<()> {
    let mut cfg = config::parse_synth_config(&io::read_text(&a.config)?, &a.config.display().to_string())?;
    apply_overrides(&mut cfg, g);
    let (ds, mut inputs) = load_datasets(&a.data)?;
    inputs.push(FileDigest::of(&a.config)?);
    let dir = out_dir(g, "synth-out")?;
    let syn = synthesize(&cfg, &ds)?;
    let mut outs = Outputs::new();
    outs.write(&dir.join("controller.json"), &io::to_json(&ControllerFile::new(&syn, &cfg, &ds)))?;
    outs.write(&dir.join("report.json"), &io::to_json(&syn.report))?;
    outs.write(&dir.join("problem.txt"), &syn.problem.debug_dump())?;
    println!("synthesis ({}): {} alpha = {:.6}  K = {}", cfg.mode.as_str(), syn.solution.status.as_str(), syn.controller.alpha, fmt_k(&syn.controller.k));
    print!("{}", report_lines(&syn.report));
    outs.manifest(&dir.join("manifest.json"), "synth", argv, serde_json::json!({ "global": params(g), "config": params(&cfg) }), inputs)?;
    certificate_outcome(&syn.report)
}

fn certificate_outcome(r: &CertificateReport) -> CliResult<()> {
    if r.pass {
        println!("certificate: pass");
        Ok(())
    } else {
        Err(CliError::Failed("certificate checks failed".into()))
    }
}

fn cmd_verify(g: &GlobalArgs, a: &VerifyArgs, argv: &[String]) -> CliResult<()> {
    let file: ControllerFile = io::from_json(&io::read_text(&a.controller)?, &a.controller.display().to_string())?;
    let (ds, mut inputs) = load_datasets(&a.data)?;
    inputs.push(FileDigest::of(&a.controller)?);
    let mut cfg = file.config.clone();
    apply_overrides(&mut cfg, g);
    let digests: Vec<String> = ds.iter().map(config::dataset_digest).collect();
    if digests != file.dataset_digests {
        eprintln!("warning: dataset digests differ from those recorded in the controller file");
    }
    let report = verify_file(&file, &cfg, &ds)?;
    println!("verify: alpha = {:.6}  K = {}", file.controller.alpha, fmt_k(&file.controller.k));
    print!("{}", report_lines(&report));
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(e.to_string()))?;
        let mut outs = Outputs::new();
        outs.write(&dir.join("report.json"), &io::to_json(&report))?;
        outs.manifest(&dir.join("manifest.json"), "verify", argv, serde_json::json!({ "global": params(g) }), inputs)?;
    }
    certificate_outcome(&report)
}

/// Re-runs the certificate checks for a stored controller against `ds`.
pub fn verify_file(file: &ControllerFile, cfg: &SynthConfig, ds: &[Dataset]) -> CliResult<CertificateReport> {
    let problem = build_problem(cfg, ds)?;
    let lure = cfg.mode == Mode::Lure;
    let sets = ds.iter().map(|d| consistent_set(d, lure)).collect::<Result<Vec<_>, _>>()?;
    let w = cfg.weights()?;
    let rows = cfg.rows(ds[0].n(), ds[0].m())?;
    let record = if lure {
        let (h, beta) = lure_hb(cfg, &ds[0])?;
        ds[0].lure.as_ref().map(|r| datalab::LureRecord { h, gamma: r.gamma.clone(), beta })
    } else {
        None
    };
    let ctx = VerifyContext { weights: &w, rows: &rows, lure: record.as_ref() };
    Ok(verify_certificate(&file.controller, &problem, &sets, ctx, &cfg.settings.verify))
}

/// Online re-synthesis at each visited state until convergence.
fn resolver<'a>(cfg: &'a SynthConfig, ds: &'a [Dataset], start: DMatrix<f64>, threshold: f64) -> impl FnMut(&DVector<f64>) -> Option<DMatrix<f64>> + 'a {
    let mut last = start;
    move |x: &DVector<f64>| {
        if x.amax() < threshold {
            return Some(last.clone());
        }
        let mut local = cfg.clone();
        local.x0 = x.as_slice().to_vec();
        let problem = build_problem(&local, ds).ok()?;
        let (sol, _) = synthesis::solve_problem(&problem, &local.settings).ok()?;
        let (k, _) = synthesis::recover_gain(&problem.layout.to_point(&sol.point)).ok()?;
        last = k.clone();
        Some(k)
    }
}

fn sim_summary(sr: &SimResult, alpha: Option<f64>) -> String {
    let conv = sr.convergence_step.map_or("not converged".to_string(), |k| format!("converged at step {k}"));
    let cost = simloop::accumulated_cost(sr);
    let tail = cost.tail_bound.map_or(String::new(), |t| format!(" (tail <= {t:.3e})"));
    match alpha {
        Some(a) => format!(
            "J = {:.6}{tail}, alpha = {a:.6}, slack = {:.6}, {conv}, min constraint margin {:.6}",
            sr.total_cost,
            a - sr.total_cost,
            sr.min_margin()
        ),
        None => format!("J = {:.6}{tail}, {conv}, min constraint margin {:.6}", sr.total_cost, sr.min_margin()),
    }
}

fn cmd_sim(g: &GlobalArgs, a: &SimArgs, argv: &[String]) -> CliResult<()> {
    let file: ControllerFile = io::from_json(&io::read_text(&a.controller)?, &a.controller.display().to_string())?;
    let plant = load_plant(&a.plant)?;
    let ctrl = &file.controller;
    let (n, m) = (plant.n(), plant.m());
    if ctrl.k.shape() != (m, n) {
        return Err(CliError::Input(format!("controller K is {}x{}, plant has (n, m) = ({n}, {m})", ctrl.k.nrows(), ctrl.k.ncols())));
    }
    let x0 = match &a.x0 {
        Some(t) => vector(t, "x0")?,
        None => ctrl.x0(),
    };
    let steps = g.steps.unwrap_or(2000);
    let cfg = &file.config;
    let w = cfg.weights()?;
    let rows = cfg.rows(n, m)?;
    let mut inputs = vec![FileDigest::of(&a.controller)?, FileDigest::of(&a.plant)?];
    let sr = if a.resolve_online {
        let (ds, digests) = load_datasets(&a.data)?;
        if ds.is_empty() {
            return Err(CliError::Input("--resolve-online needs the synthesis datasets (--data)".into()));
        }
        inputs.extend(digests);
        let mut r = resolver(cfg, &ds, ctrl.k.clone(), simloop::DEFAULT_CONVERGENCE_THRESHOLD);
        simloop::simulate(&plant, &ctrl.k, &x0, steps, &w, &rows, Some(&ctrl.p), Some(&mut r))?
    } else {
        simloop::simulate(&plant, &ctrl.k, &x0, steps, &w, &rows, Some(&ctrl.p), None)?
    };
    println!("{}", sim_summary(&sr, Some(ctrl.alpha)));
    if !sr.resolve_failures.is_empty() {
        println!("online re-solve failed at {} steps; previous gain kept", sr.resolve_failures.len());
    }
    if let Some(out) = &g.out {
        let mut outs = Outputs::new();
        outs.write(out, &sr.to_csv())?;
        if a.svg {
            outs.write(&out.with_extension("svg"), &svg_traces(&sr, "closed-loop trajectory"))?;
        }
        let params = serde_json::json!({ "global": params(g), "sim": params(a), "steps": steps, "x0": x0.as_slice() });
        outs.manifest(&with_suffix(out, ".manifest.json"), "sim", argv, params, inputs)?;
    }
    let same_start = (&x0 - ctrl.x0()).amax() == 0.0 && !a.resolve_online;
    let bound_ok = !same_start || simloop::check_against_bound(&sr, ctrl.alpha).0;
    let cons_ok = sr.min_margin() >= -1e-8 || rows.is_empty();
    if bound_ok && cons_ok {
        Ok(())
    } else {
        Err(CliError::Failed(format!("simulation checks failed (cost bound {bound_ok}, constraints {cons_ok})")))
    }
}

/// One line of the reproduction summary.
#[derive(Debug, Clone, Serialize)]
pub struct Claim {
    pub claim: String,
    pub achieved: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproSummary {
    pub example: String,
    pub title: String,
    pub seeds: Vec<u64>,
    pub gain_source: String,
    pub k: Vec<f64>,
    pub alpha: Option<f64>,
    pub claims: Vec<Claim>,
    pub pass: bool,
}

fn stage<T, E: Into<CliError>>(name: &str, r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| match e.into() {
        CliError::Input(m) => CliError::Input(format!("[stage {name}] {m}")),
        CliError::Failed(m) => CliError::Failed(format!("[stage {name}] {m}")),
    })
}

/// True vertex systems used for the published-gain radii.
fn true_systems(preset: &Preset) -> CliResult<Vec<(String, SystemMatrices)>> {
    let mut out = Vec::new();
    for f in &preset.experiment.plants {
        let sys = match config::preset_plant(f)? {
            Plant::Lti(p) => SystemMatrices { a: p.a, b: p.b, e: None },
            Plant::Lure(p) => SystemMatrices { a: p.a, b: p.b, e: Some(p.e) },
            Plant::Polytopic(_) => return Err(CliError::Input(format!("{f}: experiment plants must be single systems"))),
        };
        out.push((f.trim_end_matches(".toml").to_string(), sys));
    }
    Ok(out)
}

fn cmd_repro(g: &GlobalArgs, a: &ReproArgs, argv: &[String]) -> CliResult<()> {
    let preset = config::preset(a.example.name())?;
    let dir = out_dir(g, &format!("repro-{}", preset.name))?;
    let mut cfg = preset.synth.clone();
    apply_overrides(&mut cfg, g);
    let mut outs = Outputs::new();

    let seeds: Vec<u64> = match g.seed {
        Some(base) => (0..preset.experiment.plants.len() as u64).map(|j| base + j).collect(),
        None => preset.experiment.seeds.clone(),
    };
    let x0e = DVector::from_column_slice(&preset.experiment.x0);
    let mut ds = Vec::new();
    for (j, (file, &seed)) in preset.experiment.plants.iter().zip(&seeds).enumerate() {
        let plant = stage("gen", config::preset_plant(file))?;
        let u = uniform_inputs(&preset.experiment.input_bounds, preset.experiment.length, seed);
        let mut d = stage("gen", run_experiment(&plant, &x0e, &u, preset.experiment.record_w))?;
        d.seed = Some(seed);
        d.vertex = (preset.experiment.plants.len() > 1).then_some(j);
        d.provenance = format!("{}; plant {file}; seed {seed}", d.provenance);
        outs.write(&dir.join(format!("data_{}.json", j + 1)), &dataset_to_json(&d))?;
        ds.push(d);
    }

    let sim_plant = stage("sim", config::preset_plant(&preset.simulation.plant))?;
    let steps = g.steps.unwrap_or(preset.simulation.steps);
    let xs = DVector::from_column_slice(&preset.simulation.x0);
    let w = cfg.weights()?;
    let rows = cfg.rows(sim_plant.n(), sim_plant.m())?;
    let truth = true_systems(&preset)?;
    let mut claims = Vec::new();

    let (k, p, alpha, gain_source) = if a.use_paper_gain {
        let k = preset.reference.k.to_matrix("reference.k")?;
        (k, None, None, "reference".to_string())
    } else {
        let syn = stage("synth", synthesize(&cfg, &ds))?;
        outs.write(&dir.join("controller.json"), &io::to_json(&ControllerFile::new(&syn, &cfg, &ds)))?;
        outs.write(&dir.join("report.json"), &io::to_json(&syn.report))?;
        outs.write(&dir.join("problem.txt"), &syn.problem.debug_dump())?;
        println!("synthesis ({}): {} alpha = {:.6}  K = {}", cfg.mode.as_str(), syn.solution.status.as_str(), syn.controller.alpha, fmt_k(&syn.controller.k));
        print!("{}", report_lines(&syn.report));
        claims.push(Claim { claim: "LMI problem feasible (informativity established)".into(), achieved: syn.solution.status.as_str().into(), pass: true });
        claims.push(Claim {
            claim: "certificate verified on sampled consistent systems".into(),
            achieved: format!("max radius {:.6}, lmi {}, lyapunov {}, cost {}", syn.report.max_radius, syn.report.lmi_ok, syn.report.lyapunov_ok, syn.report.cost_bound_ok),
            pass: syn.report.pass,
        });
        let c = &syn.controller;
        (c.k.clone(), Some(c.p.clone()), Some(c.alpha), "synthesized".to_string())
    };

    let gr = verify_gain(&k, &truth, cfg.settings.verify.radius_margin);
    let radii: Vec<String> = gr.radii.iter().map(|r| format!("{} {:.4}", r.source, r.radius)).collect();
    claims.push(Claim { claim: "closed loop stable at every true system (radius < 1 - 1e-4)".into(), achieved: radii.join(", "), pass: gr.stable });

    let sr = if a.resolve_online && !a.use_paper_gain {
        let mut r = resolver(&cfg, &ds, k.clone(), simloop::DEFAULT_CONVERGENCE_THRESHOLD);
        stage("sim", simloop::simulate(&sim_plant, &k, &xs, steps, &w, &rows, p.as_ref(), Some(&mut r)))?
    } else {
        stage("sim", simloop::simulate(&sim_plant, &k, &xs, steps, &w, &rows, p.as_ref(), None))?
    };
    outs.write(&dir.join("trajectory.csv"), &sr.to_csv())?;
    outs.write(&dir.join("trajectory.svg"), &svg_traces(&sr, &preset.title))?;
    println!("simulation: {}", sim_summary(&sr, alpha));

    claims.push(Claim {
        claim: format!("state converges (|x|_inf < {:.0e}) within {steps} steps", sr.threshold),
        achieved: sr.convergence_step.map_or("no".into(), |k| format!("step {k}")),
        pass: sr.converged,
    });
    claims.push(Claim {
        claim: "all constraints satisfied at every step".into(),
        achieved: format!("min margin {:.6}, max |u| {:.6}", sr.min_margin(), sr.max_input_abs()),
        pass: sr.min_margin() >= -1e-8,
    });
    if let Some(alpha) = alpha {
        let (ok, slack) = simloop::check_against_bound(&sr, alpha);
        claims.push(Claim { claim: "accumulated cost J <= alpha".into(), achieved: format!("J {:.6}, alpha {alpha:.6}, slack {slack:.6}", sr.total_cost), pass: ok });
        if !a.resolve_online {
            let worst = sr.worst_decrease().unwrap_or(f64::INFINITY);
            claims.push(Claim {
                claim: "V(k+1) - V(k) + stage cost <= 1e-8 alpha at every step".into(),
                achieved: format!("worst {worst:.3e}"),
                pass: worst <= 1e-8 * alpha,
            });
        }
    }
    if !sr.sector_residuals.is_empty() {
        let min = sr.sector_residuals.iter().copied().fold(f64::INFINITY, f64::min);
        claims.push(Claim { claim: "sector residual >= -1e-12 along the run".into(), achieved: format!("min {min:.3e}"), pass: min >= -1e-12 });
    }
    if !sr.resolve_failures.is_empty() {
        claims.push(Claim { claim: "online re-solves succeed".into(), achieved: format!("{} failures", sr.resolve_failures.len()), pass: false });
    }

    let pass = claims.iter().all(|c| c.pass);
    let summary = ReproSummary {
        example: preset.name.clone(),
        title: preset.title.clone(),
        seeds: seeds.clone(),
        gain_source,
        k: k.transpose().as_slice().to_vec(),
        alpha,
        claims,
        pass,
    };
    let mut text = format!("example {}: {}\n", summary.example, summary.title);
    for c in &summary.claims {
        let _ = writeln!(text, "[{}] {} -- {}", if c.pass { "pass" } else { "FAIL" }, c.claim, c.achieved);
    }
    print!("{text}");
    outs.write(&dir.join("summary.json"), &io::to_json(&summary))?;
    outs.write(&dir.join("summary.txt"), &text)?;
    let params = serde_json::json!({ "global": params(g), "repro": params(a), "preset": params(&preset), "seeds": seeds, "steps": steps, "effective_config": params(&cfg) });
    outs.manifest(&dir.join("manifest.json"), "repro", argv, params, Vec::new())?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!("example {} did not reproduce every claim", preset.name)))
    }
}

/// Static two-panel rendering: states on top, inputs below.
pub fn svg_traces(sr: &SimResult, title: &str) -> String {
    const W: f64 = 720.0;
    const H: f64 = 220.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let panel = |series: Vec<Vec<f64>>, top: f64, label: &str| -> String {
        let len = series.first().map_or(0, |s| s.len()).max(2);
        let (lo, hi) = series.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
        let sx = |k: usize| PAD + (W - 2.0 * PAD) * k as f64 / (len - 1) as f64;
        let sy = |v: f64| top + H - PAD / 2.0 - (H - PAD) * (v - lo) / (hi - lo);
        let mut s = format!(
            "<rect x=\"{PAD}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n<text x=\"{PAD}\" y=\"{}\" font-size=\"12\">{label} [{lo:.3}, {hi:.3}]</text>\n",
            top + PAD / 2.0,
            W - 2.0 * PAD,
            H - PAD,
            top + PAD / 2.0 - 4.0
        );
        for (i, ser) in series.iter().enumerate() {
            let pts: Vec<String> = ser.iter().enumerate().map(|(k, &v)| format!("{:.2},{:.2}", sx(k), sy(v))).collect();
            let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>", COLORS[i % COLORS.len()], pts.join(" "));
        }
        s
    };
    let n = sr.states.first().map_or(0, |x| x.len());
    let m = sr.inputs.first().map_or(0, |u| u.len());
    let xs: Vec<Vec<f64>> = (0..n).map(|i| sr.states.iter().map(|x| x[i]).collect()).collect();
    let us: Vec<Vec<f64>> = (0..m).map(|i| sr.inputs.iter().map(|u| u[i]).collect()).collect();
    let esc = title.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{}\" font-family=\"sans-serif\">\n<text x=\"{PAD}\" y=\"16\" font-size=\"14\">{esc}</text>\n{}{}</svg>\n",
        2.0 * H + 30.0,
        panel(xs, 20.0, "states"),
        panel(us, 20.0 + H, "inputs")
    )
}
