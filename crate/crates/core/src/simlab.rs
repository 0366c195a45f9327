//! Monte Carlo straggler experiments.
//!
//! Every trial draws its own code and straggler pattern from a random stream
//! keyed by `(seed, trial index)`. Within a trial the worker order is a
//! random permutation and the last `S` workers straggle, so all straggler
//! counts in a run share their randomness and a trial that decodes with `N`
//! results also decodes with more.

use std::fmt;
use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockgrid::PartitionSpec;
use crate::decoder::{support_decode, DecodeOptions, DecodeState, GridShape, SupportOptions};
use crate::degrees::{DegreeDistribution, SplitScheme};
use crate::error::{Error, Result};
use crate::flt::{attach_coefficients, sample_support, CoeffMode, TaskSupport, WorkerTask};
use crate::linalg::Fp61;
use crate::outer::{LineCodes, OuterProductCode};

/// Which decoder a simulation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DecoderKind {
    /// Peeling on the worker equations alone, ignoring the outer code.
    #[serde(rename = "PEELING_ONLY")]
    PeelingOnly,
    /// Peeling alternated with outer-code line filling, real coefficients.
    #[serde(rename = "ALGORITHM_1")]
    Algorithm1,
    /// Peeling, line filling and inactivation with a final dense solve,
    /// real coefficients.
    #[serde(rename = "INACTIVATION")]
    Inactivation,
    /// Peeling and line filling on supports only.
    #[default]
    #[serde(rename = "SUPPORT_FAST")]
    SupportFast,
    /// Inactivation decoding over a large prime field with random
    /// coefficients, giving exact generic-rank outcomes and inactivation
    /// counts at full scale.
    #[serde(rename = "SUPPORT_INACTIVATION")]
    SupportInactivation,
}

/// `(n, k)` of one axis of a product code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisCode {
    pub n: usize,
    pub k: usize,
}

/// Three-dimensional product of MDS codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product3d {
    pub axes: [AxisCode; 3],
}

impl Product3d {
    pub fn new(axes: [(usize, usize); 3]) -> Result<Self> {
        for (n, k) in axes {
            if k == 0 || n < k {
                return Err(Error::Config(format!("invalid axis code ({n},{k})")));
            }
        }
        Ok(Product3d {
            axes: axes.map(|(n, k)| AxisCode { n, k }),
        })
    }

    /// The `(21,18) x (22,19) x (22,19)` baseline with about as many cells as
    /// the FR experiment has workers.
    pub fn reference() -> Self {
        Product3d::new([(21, 18), (22, 19), (22, 19)]).expect("valid")
    }

    pub fn cells(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn message_cells(&self) -> usize {
        self.axes.iter().map(|a| a.k).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: PartitionSpec,
    pub dist: DegreeDistribution,
    pub scheme: SplitScheme,
    /// Total number of workers `P`.
    pub workers: usize,
    /// Straggler counts `S` to evaluate.
    pub stragglers: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub decoder: DecoderKind,
    pub options: DecodeOptions,
    /// Also evaluate a 3-D product code at the same straggler counts.
    pub baseline: Option<Product3d>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    /// The large-scale FR setup: `80 x 80` blocks, `(82,80)` outer codes on
    /// both sides and 10000 workers.
    pub fn reference(scheme: SplitScheme, stragglers: Vec<usize>, trials: usize, seed: u64) -> Self {
        SimConfig {
            spec: PartitionSpec::grid_only(80, 80, 82, 82).expect("valid"),
            dist: DegreeDistribution::fr_simulation(),
            scheme,
            workers: 10_000,
            stragglers,
            trials,
            seed,
            decoder: DecoderKind::SupportFast,
            options: DecodeOptions::default(),
            baseline: None,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("need at least one worker".into()));
        }
        if let Some(&s) = self.stragglers.iter().find(|&&s| s >= self.workers) {
            return Err(Error::Config(format!("straggler count {s} must be below {} workers", self.workers)));
        }
        if let Some(b) = &self.baseline {
            if let Some(&s) = self.stragglers.iter().find(|&&s| s >= b.cells()) {
                return Err(Error::Config(format!("straggler count {s} must be below {} baseline cells", b.cells())));
            }
        }
        if let Err(v) = self.dist.validate(self.spec.a_coded, self.spec.b_coded) {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidDistribution(list.join(", ")));
        }
        Ok(())
    }
}

/// Aggregate over all trials at one straggler count.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub label: String,
    pub stragglers: usize,
    pub received: usize,
    pub trials: usize,
    pub failures: usize,
    pub mean_inactivated: f64,
    pub mean_edge_ops: f64,
}

impl SimRow {
    pub fn failure_probability(&self) -> f64 {
        self.failures as f64 / self.trials as f64
    }
}

impl fmt::Display for SimRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{:.6},{:.4},{:.2}",
            self.label,
            self.stragglers,
            self.received,
            self.trials,
            self.failures,
            self.failure_probability(),
            self.mean_inactivated,
            self.mean_edge_ops
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
}

pub const CSV_HEADER: &str = "scheme,S,N,trials,failures,failure_prob,mean_inactivated,mean_edge_ops";

impl SimResult {
    pub fn row(&self, label: &str, stragglers: usize) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.label == label && r.stragglers == stragglers)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Outcome of one decode inside a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrialOutcome {
    pub success: bool,
    pub inactivated: usize,
    pub edge_operations: usize,
}

/// Random stream for one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Everything one trial draws before any decoding happens.
struct FrTrial {
    supports: Vec<TaskSupport>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl FrTrial {
    fn draw(config: &SimConfig, trial: usize) -> Result<Self> {
        let mut rng = trial_rng(config.seed, trial);
        let supports = (0..config.workers)
            .map(|_| sample_support(&config.spec, &config.dist, config.scheme, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..config.workers).collect();
        order.shuffle(&mut rng);
        Ok(FrTrial { supports, order, rng })
    }

    /// Workers that answer when `s` straggle, in worker order.
    fn received(&self, s: usize) -> Vec<usize> {
        let mut r = self.order[..self.order.len() - s].to_vec();
        r.sort_unstable();
        r
    }

    fn decode_all(&self, config: &SimConfig, stragglers: &[usize]) -> Result<Vec<TrialOutcome>> {
        let spec = &config.spec;
        let shape = GridShape::from(spec);
        match config.decoder {
            DecoderKind::SupportFast => Ok(stragglers
                .iter()
                .map(|&s| {
                    let rows: Vec<Vec<usize>> = self
                        .received(s)
                        .into_iter()
                        .map(|p| self.supports[p].flat(spec.b_coded).collect())
                        .collect();
                    let opts = SupportOptions {
                        fill_order: config.options.fill_order,
                        inactivation: config.options.inactivation,
                        count_inactivations: false,
                    };
                    let rep = support_decode(&rows, shape, opts);
                    TrialOutcome {
                        success: rep.outcome.is_success(),
                        inactivated: 0,
                        edge_operations: rep.edge_operations,
                    }
                })
                .collect()),
            DecoderKind::SupportInactivation => {
                let mut rng = self.rng.clone();
                let coeffs: Vec<(Vec<Fp61>, Vec<Fp61>)> = self
                    .supports
                    .iter()
                    .map(|s| {
                        let a = s.a.iter().map(|_| Fp61::random_nonzero(&mut rng)).collect();
                        let b = s.b.iter().map(|_| Fp61::random_nonzero(&mut rng)).collect();
                        (a, b)
                    })
                    .collect();
                let codes = LineCodes::random_fp(spec, &mut rng);
                stragglers
                    .iter()
                    .map(|&s| {
                        let mut state = DecodeState::new(shape, Some(codes.clone()), (), config.options)?;
                        for p in self.received(s) {
                            let sup = &self.supports[p];
                            let (ca, cb) = &coeffs[p];
                            let mut entries = Vec::with_capacity(sup.degree());
                            for (&i, &x) in sup.a.iter().zip(ca) {
                                for (&j, &y) in sup.b.iter().zip(cb) {
                                    entries.push((i * spec.b_coded + j, x * y));
                                }
                            }
                            state.add_row(p, &entries, ())?;
                        }
                        let outcome = state.run_inactivation()?;
                        let rep = state.report();
                        Ok(TrialOutcome {
                            success: outcome.is_success(),
                            inactivated: rep.inactivated,
                            edge_operations: rep.edge_operations,
                        })
                    })
                    .collect()
            }
            DecoderKind::PeelingOnly | DecoderKind::Algorithm1 | DecoderKind::Inactivation => {
                let mut rng = self.rng.clone();
                let tasks = attach_coefficients(&self.supports, CoeffMode::Gaussian, &mut rng);
                let codes = match config.decoder {
                    DecoderKind::PeelingOnly => None,
                    _ => Some(LineCodes::from_outer(&OuterProductCode::random(spec, &mut rng)?)),
                };
                stragglers
                    .iter()
                    .map(|&s| {
                        let mut state = DecodeState::new(shape, codes.clone(), (), config.options)?;
                        for p in self.received(s) {
                            let t: &WorkerTask = &tasks[p];
                            state.add_row(p, &t.row_entries(spec), ())?;
                        }
                        let outcome = if config.decoder == DecoderKind::Inactivation {
                            state.run_inactivation()?
                        } else {
                            state.run_peeling()?
                        };
                        let rep = state.report();
                        Ok(TrialOutcome {
                            success: outcome.is_success(),
                            inactivated: rep.inactivated,
                            edge_operations: rep.edge_operations,
                        })
                    })
                    .collect()
            }
        }
    }
}

/// Decodes trial `trial` of `config` at each straggler count.
pub fn fr_trial(config: &SimConfig, trial: usize, stragglers: &[usize]) -> Result<Vec<TrialOutcome>> {
    FrTrial::draw(config, trial)?.decode_all(config, stragglers)
}

/// One random erasure pattern of `erased` cells on a 3-D product code,
/// decoded by repeatedly filling any axis line with at most `n - k`
/// erasures. Returns whether every cell ends up filled.
pub fn product3d_trial<R: Rng + ?Sized>(params: &Product3d, erased: usize, rng: &mut R) -> bool {
    let [n0, n1, n2] = params.axes.map(|a| a.n);
    let cells = n0 * n1 * n2;
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(rng);
    let mut missing = vec![false; cells];
    for &c in &order[..erased.min(cells)] {
        missing[c] = true;
    }
    product3d_fill(params, &mut missing)
}

/// Iterative line filling on an erasure mask; returns whether it clears.
pub fn product3d_fill(params: &Product3d, missing: &mut [bool]) -> bool {
    let dims = params.axes.map(|a| a.n);
    let red = params.axes.map(|a| a.n - a.k);
    let strides = [dims[1] * dims[2], dims[2], 1];
    let coords = |c: usize| [c / strides[0], (c / strides[1]) % dims[1], c % dims[2]];
    // a line along `axis` is identified by the cell where that coordinate is 0
    let line_of = |c: usize, axis: usize| c - coords(c)[axis] * strides[axis];
    let mut count: [Vec<usize>; 3] = std::array::from_fn(|_| vec![0; missing.len()]);
    let mut remaining = 0;
    for c in 0..missing.len() {
        if missing[c] {
            remaining += 1;
            for axis in 0..3 {
                count[axis][line_of(c, axis)] += 1;
            }
        }
    }
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for axis in 0..3 {
        for (base, &e) in count[axis].iter().enumerate() {
            if e > 0 && e <= red[axis] {
                stack.push((axis, base));
            }
        }
    }
    while let Some((axis, base)) = stack.pop() {
        if count[axis][base] == 0 || count[axis][base] > red[axis] {
            continue;
        }
        for step in 0..dims[axis] {
            let c = base + step * strides[axis];
            if !missing[c] {
                continue;
            }
            missing[c] = false;
            remaining -= 1;
            for other in 0..3 {
                let l = line_of(c, other);
                count[other][l] -= 1;
                if other != axis && count[other][l] > 0 && count[other][l] <= red[other] {
                    stack.push((other, l));
                }
            }
        }
    }
    remaining == 0
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

fn aggregate(label: &str, workers: usize, stragglers: &[usize], per_trial: &[Vec<TrialOutcome>]) -> Vec<SimRow> {
    stragglers
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut failures = 0;
            let mut inact = 0usize;
            let mut edges = 0usize;
            for t in per_trial {
                let o = t[i];
                failures += usize::from(!o.success);
                inact += o.inactivated;
                edges += o.edge_operations;
            }
            let n = per_trial.len();
            SimRow {
                label: label.to_string(),
                stragglers: s,
                received: workers - s,
                trials: n,
                failures,
                mean_inactivated: inact as f64 / n as f64,
                mean_edge_ops: edges as f64 / n as f64,
            }
        })
        .collect()
}

pub const PRODUCT_3D_LABEL: &str = "PRODUCT_3D";

/// Runs every trial at every straggler count. Results do not depend on the
/// number of threads.
pub fn run_trials(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    info!(
        "{} trials of {} at S = {:?} with {:?}",
        config.trials, config.scheme, config.stragglers, config.decoder
    );
    let fr: Vec<Vec<TrialOutcome>> = with_threads(config.threads, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| fr_trial(config, t, &config.stragglers))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut rows = aggregate(config.scheme.label(), config.workers, &config.stragglers, &fr);
    if let Some(params) = &config.baseline {
        let base: Vec<Vec<TrialOutcome>> = with_threads(config.threads, || {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let rng = trial_rng(config.seed ^ 0x3d3d_3d3d, t);
                    config
                        .stragglers
                        .iter()
                        .map(|&s| TrialOutcome {
                            success: product3d_trial(params, s, &mut rng.clone()),
                            ..TrialOutcome::default()
                        })
                        .collect()
                })
                .collect()
        })?;
        rows.extend(aggregate(PRODUCT_3D_LABEL, params.cells(), &config.stragglers, &base));
    }
    for r in &rows {
        debug!("{r}");
    }
    Ok(SimResult { rows })
}

/// Result of a threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    /// Smallest number of received results meeting the target.
    pub received: usize,
    pub failure_rate: f64,
    /// Every probe made, as `(received, failure rate)`.
    pub probes: Vec<(usize, f64)>,
}

/// Binary search for the smallest `n` in `1..=max` whose failure rate is at
/// most `target`. `failures(n)` must be non-increasing in `n`.
pub fn threshold_search(
    max: usize,
    trials: usize,
    target: f64,
    mut failures: impl FnMut(usize) -> Result<usize>,
) -> Result<ThresholdEstimate> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!("target failure {target} must lie in (0, 1)")));
    }
    let mut probes = Vec::new();
    let mut rate_at = |n: usize, probes: &mut Vec<(usize, f64)>| -> Result<f64> {
        let rate = failures(n)? as f64 / trials as f64;
        debug!("N = {n}: failure {rate}");
        probes.push((n, rate));
        Ok(rate)
    };
    let top = rate_at(max, &mut probes)?;
    if top > target {
        return Err(Error::NotFound { max_workers: max, target });
    }
    let (mut lo, mut hi, mut hi_rate) = (0usize, max, top);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let r = rate_at(mid, &mut probes)?;
        if r <= target {
            hi = mid;
            hi_rate = r;
        } else {
            lo = mid;
        }
    }
    Ok(ThresholdEstimate {
        received: hi,
        failure_rate: hi_rate,
        probes,
    })
}

/// Smallest number of received results at which the FR code fails at most
/// `target` of `trials` trials.
pub fn estimate_threshold(config: &SimConfig, target: f64, trials: usize) -> Result<ThresholdEstimate> {
    let mut cfg = config.clone();
    cfg.trials = trials;
    cfg.stragglers.clear();
    cfg.validate()?;
    threshold_search(config.workers, trials, target, |n| {
        let s = [config.workers - n];
        let outcomes = with_threads(cfg.threads, || {
            (0..trials)
                .into_par_iter()
                .map(|t| fr_trial(&cfg, t, &s).map(|o| o[0]))
                .collect::<Result<Vec<_>>>()
        })??;
        Ok(outcomes.iter().filter(|o| !o.success).count())
    })
}

/// Threshold of the 3-D product code, counted in received cells.
pub fn estimate_threshold_product3d(
    params: &Product3d,
    seed: u64,
    target: f64,
    trials: usize,
    threads: Option<usize>,
) -> Result<ThresholdEstimate> {
    let cells = params.cells();
    threshold_search(cells, trials, target, |n| {
        with_threads(threads, || {
            (0..trials)
                .into_par_iter()
                .filter(|&t| !product3d_trial(params, cells - n, &mut trial_rng(seed, t)))
                .count()
        })
    })
}

/// Per-worker transfer and compute cost of a task list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// Encoded matrices sent to each worker.
    pub chunks_per_worker: f64,
    /// Block products each worker computes.
    pub products_per_worker: f64,
    /// Mean number of coefficients (`|I_A| + |I_B|`) per task.
    pub mean_coefficients: f64,
    /// Mean task degree `|I_A| * |I_B|`.
    pub mean_degree: f64,
}

pub fn cost_report(tasks: &[WorkerTask]) -> Result<CostReport> {
    if tasks.is_empty() {
        return Err(Error::Config("cost report needs at least one task".into()));
    }
    let n = tasks.len() as f64;
    Ok(CostReport {
        chunks_per_worker: 2.0,
        products_per_worker: 1.0,
        mean_coefficients: tasks.iter().map(|t| (t.a.len() + t.b.len()) as f64).sum::<f64>() / n,
        mean_degree: tasks.iter().map(|t| t.degree() as f64).sum::<f64>() / n,
    })
}
