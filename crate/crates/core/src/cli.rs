//! Config-driven command line front end.
//!
//! ```text
//! factored-raptor <command> --config <path> [--out <path>] [--seed <u64>] [--log <level>]
//! ```
//!
//! Exit codes: 0 ok, 1 domain failure, 2 configuration error, 3 I/O error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::{debug, info, LevelFilter};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::blockgrid::{Block, PartitionSpec};
use crate::decoder::{decode_with, inactivation_decode_with, DecodeOptions, DecodeReport, Decoded, Via};
use crate::degrees::{DegreeDistribution, SplitScheme};
use crate::error::Error;
use crate::fixtures;
use crate::flt::{encode_inputs, worker_compute, CoeffMode, WorkerTask};
use crate::outer::{fr_encode, mds_encode, OuterProductCode};
use crate::simlab::{
    estimate_threshold, estimate_threshold_product3d, run_trials, trial_rng, DecoderKind, Product3d, SimConfig,
    SimResult, PRODUCT_3D_LABEL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Check a degree distribution against the coded grid.
    ValidateDist,
    /// Encode, drop stragglers, decode and verify one random product.
    Demo,
    /// Monte Carlo failure probability against straggler count.
    Simulate,
    /// Smallest number of results reaching a target failure rate.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum LogLevel {
    Quiet,
    #[default]
    Info,
    Debug,
}

impl From<LogLevel> for LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Quiet => LevelFilter::Off,
            LogLevel::Info => LevelFilter::Info,
            LogLevel::Debug => LevelFilter::Debug,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "factored-raptor", version, about = "Factored LT / factored Raptor coded matrix multiplication")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long = "config")]
    pub config_path: PathBuf,
    /// Where to write results; standard output when absent.
    #[arg(long = "out")]
    pub output_path: Option<PathBuf>,
    /// Replaces `simulation.seed` from the config.
    #[arg(long = "seed")]
    pub seed_override: Option<u64>,
    #[arg(long = "log", value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,
}

/// Top-level JSON document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub spec: SpecSection,
    #[serde(default)]
    pub distribution: Option<DistributionSection>,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

/// Either a full partition or the name of the built-in worked example.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpecSection {
    Fixture(FixtureName),
    Partition(PartitionSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum FixtureName {
    #[serde(rename = "example")]
    Example,
}

impl SpecSection {
    pub fn partition(&self) -> PartitionSpec {
        match self {
            SpecSection::Fixture(FixtureName::Example) => fixtures::example_spec(),
            SpecSection::Partition(p) => *p,
        }
    }
}

/// A `degree,probability` table file (relative to the config) or an inline
/// map from degree to probability.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DistributionSection {
    Table { table: PathBuf },
    Inline(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SchemeSection {
    One(SplitScheme),
    Many(Vec<SplitScheme>),
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection::One(SplitScheme::SchemeIII)
    }
}

impl SchemeSection {
    pub fn schemes(&self) -> Vec<SplitScheme> {
        match self {
            SchemeSection::One(s) => vec![*s],
            SchemeSection::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub workers: usize,
    pub stragglers: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub decoder: DecoderKind,
    pub options: DecodeOptions,
    pub baseline: Option<Product3d>,
    pub threads: Option<usize>,
    pub coefficients: CoeffMode,
    pub target_failure: f64,
    /// Trials per probe of the threshold search; `trials` when absent.
    pub threshold_trials: Option<usize>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            workers: 0,
            stragglers: Vec::new(),
            trials: 100,
            seed: 0,
            decoder: DecoderKind::default(),
            options: DecodeOptions::default(),
            baseline: None,
            threads: None,
            coefficients: CoeffMode::default(),
            target_failure: 0.02,
            threshold_trials: None,
        }
    }
}

/// A failed command with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const DOMAIN: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;

    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(Self::CONFIG, message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => Self::IO,
            Error::Config(_)
            | Error::Parse { .. }
            | Error::NonDivisible { .. }
            | Error::InvalidPartition(_)
            | Error::InvalidDistribution(_)
            | Error::DegenerateDistribution(_)
            | Error::NoValidSplit { .. } => Self::CONFIG,
            _ => Self::DOMAIN,
        };
        CliError::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parsed config plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: FileConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let f = File::open(path).map_err(|e| CliError::config(format!("cannot open config {}: {e}", path.display())))?;
        let file: FileConfig = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { file, base_dir })
    }

    pub fn spec(&self) -> PartitionSpec {
        self.file.spec.partition()
    }

    pub fn distribution(&self) -> CliResult<DegreeDistribution> {
        match &self.file.distribution {
            None => match self.file.spec {
                SpecSection::Fixture(FixtureName::Example) => Ok(fixtures::example_distribution()),
                SpecSection::Partition(_) => Err(CliError::config("config has no distribution section")),
            },
            Some(DistributionSection::Table { table }) => {
                let path = self.base_dir.join(table);
                let f = File::open(&path)
                    .map_err(|e| CliError::config(format!("cannot open distribution {}: {e}", path.display())))?;
                Ok(DegreeDistribution::read_table(BufReader::new(f))?)
            }
            Some(DistributionSection::Inline(map)) => {
                let pairs = map
                    .iter()
                    .map(|(d, p)| {
                        d.trim()
                            .parse::<usize>()
                            .map(|d| (d, *p))
                            .map_err(|e| CliError::config(format!("degree `{d}`: {e}")))
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(DegreeDistribution::new(pairs)?)
            }
        }
    }

    fn sim_config(&self, scheme: SplitScheme, seed: u64) -> CliResult<SimConfig> {
        let s = &self.file.simulation;
        let spec = self.spec();
        spec.validate()?;
        Ok(SimConfig {
            spec,
            dist: self.distribution()?,
            scheme,
            workers: s.workers,
            stragglers: s.stragglers.clone(),
            trials: s.trials,
            seed,
            decoder: s.decoder,
            options: s.options,
            baseline: None,
            threads: s.threads,
        })
    }
}

/// Parses arguments, runs the command and maps the result to an exit code.
pub fn main() -> ExitCode {
    let args = RunConfig::parse();
    env_logger::Builder::new()
        .filter_level(args.log_level.into())
        .format_timestamp(None)
        .init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

pub fn run(args: &RunConfig) -> CliResult<()> {
    let config = LoadedConfig::load(&args.config_path)?;
    let seed = args.seed_override.unwrap_or(config.file.simulation.seed);
    debug!("{:?} with seed {seed}", args.command);
    let text = match args.command {
        Command::ValidateDist => cmd_validate_dist(&config)?,
        Command::Demo => cmd_demo(&config, seed)?,
        Command::Simulate => cmd_simulate(&config, seed)?,
        Command::Threshold => cmd_threshold(&config, seed)?,
    };
    emit(args.output_path.as_deref(), &text)
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    let io_err = |e: io::Error| CliError::new(CliError::IO, e.to_string());
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::new(CliError::IO, format!("{}: {e}", p.display())))
        }
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(io_err),
    }
}

pub fn cmd_validate_dist(config: &LoadedConfig) -> CliResult<String> {
    let spec = config.spec();
    let dist = config.distribution()?;
    match dist.validate(spec.a_coded, spec.b_coded) {
        Ok(()) => Ok("ok\n".into()),
        Err(violations) => {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(CliError::new(CliError::DOMAIN, list.join("\n")))
        }
    }
}

fn symbol_name(k: usize, spec: &PartitionSpec) -> String {
    format!("A{}^T B{}", k / spec.b_coded + 1, k % spec.b_coded + 1)
}

/// One line per recovered symbol, indices 1-based.
pub fn format_trace(decoded: &Decoded, spec: &PartitionSpec) -> String {
    let mut out = String::new();
    for (step, r) in decoded.trace.iter().enumerate() {
        let how = match r.via {
            Via::Peel { worker } => format!("peeled from worker {}", worker + 1),
            Via::RowDecode { row } => format!("filled from grid row {}", row + 1),
            Via::ColumnDecode { col } => format!("filled from grid column {}", col + 1),
            Via::Inactivated => "solved after inactivation".into(),
        };
        out.push_str(&format!("{:>2}. {} {how}\n", step + 1, symbol_name(r.symbol, spec)));
    }
    out
}

fn gaussian_block<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Block {
    Block::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn max_rel_error(got: &Block, want: &Block) -> f64 {
    let scale = want.amax().max(f64::MIN_POSITIVE);
    (got - want).amax() / scale
}

pub const DEMO_TOLERANCE: f64 = 1e-6;

pub fn cmd_demo(config: &LoadedConfig, seed: u64) -> CliResult<String> {
    let spec = config.spec();
    spec.validate()?;
    let sim = &config.file.simulation;
    let mut rng = trial_rng(seed, 0);
    let a = gaussian_block(spec.inner, spec.a_cols, &mut rng);
    let b = gaussian_block(spec.inner, spec.b_cols, &mut rng);
    let blocks_a = crate::blockgrid::split_columns(&a, spec.a_blocks)?;
    let blocks_b = crate::blockgrid::split_columns(&b, spec.b_blocks)?;

    let fixture = matches!(config.file.spec, SpecSection::Fixture(FixtureName::Example));
    let (outer, coded_a, coded_b, tasks, received): (_, _, _, Vec<WorkerTask>, Vec<usize>) = if fixture {
        let outer = fixtures::example_outer();
        let coded_a = mds_encode(&blocks_a, &outer.col_code)?;
        let coded_b = mds_encode(&blocks_b, &outer.row_code)?;
        (outer, coded_a, coded_b, fixtures::example_tasks(), fixtures::example_workers())
    } else {
        if sim.workers == 0 {
            return Err(CliError::config("simulation.workers must be at least 1"));
        }
        let dist = config.distribution()?;
        let scheme = config.file.scheme.schemes().first().copied().unwrap_or(SplitScheme::SchemeIII);
        let outer = OuterProductCode::random(&spec, &mut rng)?;
        let enc = fr_encode(&blocks_a, &blocks_b, &outer, &spec, &dist, scheme, sim.workers, sim.coefficients, &mut rng)?;
        let stragglers = sim.stragglers.first().copied().unwrap_or(0);
        if stragglers >= sim.workers {
            return Err(CliError::config(format!("{stragglers} stragglers leave no worker out of {}", sim.workers)));
        }
        let mut order: Vec<usize> = (0..sim.workers).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut received = order[..sim.workers - stragglers].to_vec();
        received.sort_unstable();
        (outer, enc.coded_a, enc.coded_b, enc.tasks, received)
    };
    info!("{} of {} workers respond", received.len(), tasks.len());

    let mut got_tasks = Vec::with_capacity(received.len());
    let mut results = Vec::with_capacity(received.len());
    for &p in &received {
        let (ea, eb) = encode_inputs(&tasks[p], &coded_a, &coded_b)?;
        results.push(worker_compute(&ea, &eb)?);
        got_tasks.push(tasks[p].clone());
    }
    let decoded = match sim.decoder {
        DecoderKind::Inactivation | DecoderKind::SupportInactivation => {
            inactivation_decode_with(&got_tasks, &results, Some(&outer), &spec, sim.options)?
        }
        DecoderKind::PeelingOnly => decode_with(&got_tasks, &results, None, &spec, sim.options)?,
        DecoderKind::Algorithm1 | DecoderKind::SupportFast => {
            decode_with(&got_tasks, &results, Some(&outer), &spec, sim.options)?
        }
    };

    let mut out = format_trace(&decoded, &spec);
    out.push_str(DecodeReport::CSV_HEADER);
    out.push('\n');
    out.push_str(&format!("{}\n", decoded.report));
    let Some(product) = &decoded.product else {
        print!("{out}");
        return Err(CliError::new(CliError::DOMAIN, "decoding failed"));
    };
    let err = max_rel_error(product, &(a.transpose() * &b));
    out.push_str(&format!("max relative error {err:.3e}\n"));
    if err > DEMO_TOLERANCE {
        print!("{out}");
        return Err(CliError::new(
            CliError::DOMAIN,
            format!("relative error {err:.3e} exceeds {DEMO_TOLERANCE:e}"),
        ));
    }
    Ok(out)
}

pub fn cmd_simulate(config: &LoadedConfig, seed: u64) -> CliResult<String> {
    let mut rows = Vec::new();
    for (idx, scheme) in config.file.scheme.schemes().into_iter().enumerate() {
        let mut cfg = config.sim_config(scheme, seed)?;
        if idx == 0 {
            cfg.baseline = config.file.simulation.baseline;
        }
        rows.extend(run_trials(&cfg)?.rows);
    }
    Ok(SimResult { rows }.to_csv())
}

pub const THRESHOLD_HEADER: &str = "scheme,N,failure_rate,trials";

pub fn cmd_threshold(config: &LoadedConfig, seed: u64) -> CliResult<String> {
    let sim = &config.file.simulation;
    let trials = sim.threshold_trials.unwrap_or(sim.trials);
    let mut out = format!("{THRESHOLD_HEADER}\n");
    for scheme in config.file.scheme.schemes() {
        let cfg = config.sim_config(scheme, seed)?;
        let est = estimate_threshold(&cfg, sim.target_failure, trials)?;
        info!("{scheme}: N = {} after {} probes", est.received, est.probes.len());
        out.push_str(&format!("{scheme},{},{:.6},{trials}\n", est.received, est.failure_rate));
    }
    if let Some(params) = &sim.baseline {
        let est = estimate_threshold_product3d(params, seed, sim.target_failure, trials, sim.threads)?;
        out.push_str(&format!("{PRODUCT_3D_LABEL},{},{:.6},{trials}\n", est.received, est.failure_rate));
    }
    Ok(out)
}
