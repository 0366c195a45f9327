//! Factored LT encoding: per-worker tasks, encoded inputs, worker products,
//! and the coefficient matrix relating worker results to source symbols.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blockgrid::{flat_index, Block, PartitionSpec};
use crate::degrees::{sample_split, DegreeDistribution, SplitScheme};
use crate::error::{Error, Result};

/// How nonzero encoding coefficients are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoeffMode {
    /// i.i.d. standard normal.
    #[default]
    #[serde(rename = "GAUSSIAN")]
    Gaussian,
    /// All ones; used for hand-checkable fixtures.
    #[serde(rename = "UNIT")]
    Unit,
}

/// What the master asks one worker to compute: `(sum a_i A_i)^T (sum b_j B_j)`
/// over the coded blocks. Index lists are sorted and 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerTask {
    pub worker: usize,
    pub a: Vec<(usize, f64)>,
    pub b: Vec<(usize, f64)>,
}

impl WorkerTask {
    pub fn new(worker: usize, mut a: Vec<(usize, f64)>, mut b: Vec<(usize, f64)>) -> Self {
        a.sort_by_key(|(i, _)| *i);
        b.sort_by_key(|(j, _)| *j);
        WorkerTask { worker, a, b }
    }

    /// A task with unit coefficients on the given index sets.
    pub fn unit(worker: usize, a: &[usize], b: &[usize]) -> Self {
        Self::new(
            worker,
            a.iter().map(|&i| (i, 1.0)).collect(),
            b.iter().map(|&j| (j, 1.0)).collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.a.len() * self.b.len()
    }

    pub fn a_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.a.iter().map(|(i, _)| *i)
    }

    pub fn b_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.b.iter().map(|(j, _)| *j)
    }

    /// Nonzero entries of this task's coefficient row, sorted by flat index.
    pub fn row_entries(&self, spec: &PartitionSpec) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.degree());
        for &(i, ai) in &self.a {
            for &(j, bj) in &self.b {
                out.push((i * spec.b_coded + j, ai * bj));
            }
        }
        out
    }

    /// Flat indices of the support, sorted.
    pub fn support(&self, spec: &PartitionSpec) -> Vec<usize> {
        self.row_entries(spec).into_iter().map(|(k, _)| k).collect()
    }
}

/// Line format: `p; i:a_i,i:a_i; j:b_j,...` with 1-based worker and block
/// indices.
impl fmt::Display for WorkerTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |v: &[(usize, f64)]| {
            v.iter()
                .map(|(i, c)| format!("{}:{}", i + 1, c))
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "{}; {}; {}", self.worker + 1, side(&self.a), side(&self.b))
    }
}

impl FromStr for WorkerTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |msg: String| Error::Parse { line: 0, msg };
        let parts: Vec<&str> = s.split(';').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(err(format!("expected `p; a-list; b-list`, got `{s}`")));
        }
        let worker: usize = parts[0].parse().map_err(|e| err(format!("worker: {e}")))?;
        if worker == 0 {
            return Err(err("worker ids are 1-based".into()));
        }
        let side = |text: &str| -> Result<Vec<(usize, f64)>> {
            text.split(',')
                .map(|entry| {
                    let (i, c) = entry
                        .trim()
                        .split_once(':')
                        .ok_or_else(|| err(format!("expected `index:coeff`, got `{entry}`")))?;
                    let i: usize = i.trim().parse().map_err(|e| err(format!("index: {e}")))?;
                    let c: f64 = c.trim().parse().map_err(|e| err(format!("coefficient: {e}")))?;
                    if i == 0 {
                        return Err(err("block indices are 1-based".into()));
                    }
                    Ok((i - 1, c))
                })
                .collect()
        };
        Ok(WorkerTask::new(worker - 1, side(parts[1])?, side(parts[2])?))
    }
}

/// Parses one task per non-empty, non-comment line.
pub fn parse_tasks(text: &str) -> Result<Vec<WorkerTask>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            l.parse().map_err(|e| match e {
                Error::Parse { msg, .. } => Error::Parse { line: n + 1, msg },
                other => other,
            })
        })
        .collect()
}

/// Uniform `k`-subset of `0..n` by Floyd's algorithm, sorted.
pub fn sample_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut chosen = Vec::with_capacity(k);
    for j in n - k..n {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Row and column index sets of one task, before coefficients are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSupport {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl TaskSupport {
    pub fn flat(&self, b_coded: usize) -> impl Iterator<Item = usize> + '_ {
        self.a
            .iter()
            .flat_map(move |&i| self.b.iter().map(move |&j| i * b_coded + j))
    }

    pub fn degree(&self) -> usize {
        self.a.len() * self.b.len()
    }
}

/// Samples a degree, its split and the two index sets for one worker.
pub fn sample_support<R: Rng + ?Sized>(
    spec: &PartitionSpec,
    dist: &DegreeDistribution,
    scheme: SplitScheme,
    rng: &mut R,
) -> Result<TaskSupport> {
    let d = dist.sample_degree(rng);
    let (d1, d2) = sample_split(d, spec.a_coded, spec.b_coded, scheme, rng)?;
    Ok(TaskSupport {
        a: sample_subset(spec.a_coded, d1, rng),
        b: sample_subset(spec.b_coded, d2, rng),
    })
}

fn draw_coeff<R: Rng + ?Sized>(mode: CoeffMode, rng: &mut R) -> f64 {
    match mode {
        CoeffMode::Unit => 1.0,
        CoeffMode::Gaussian => loop {
            let x: f64 = rng.sample(StandardNormal);
            if x != 0.0 {
                break x;
            }
        },
    }
}

/// Generates tasks for `workers` workers. All supports are drawn first, then
/// all coefficients, so the support sequence for a seed does not depend on
/// `mode`.
pub fn generate_tasks<R: Rng + ?Sized>(
    spec: &PartitionSpec,
    dist: &DegreeDistribution,
    scheme: SplitScheme,
    workers: usize,
    mode: CoeffMode,
    rng: &mut R,
) -> Result<Vec<WorkerTask>> {
    let supports = (0..workers)
        .map(|_| sample_support(spec, dist, scheme, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(attach_coefficients(&supports, mode, rng))
}

/// Draws coefficients for each support in order, `A` side then `B` side.
pub fn attach_coefficients<R: Rng + ?Sized>(supports: &[TaskSupport], mode: CoeffMode, rng: &mut R) -> Vec<WorkerTask> {
    supports
        .iter()
        .enumerate()
        .map(|(p, s)| {
            let a = s.a.iter().map(|&i| (i, draw_coeff(mode, rng))).collect();
            let b = s.b.iter().map(|&j| (j, draw_coeff(mode, rng))).collect();
            WorkerTask::new(p, a, b)
        })
        .collect()
}

fn weighted_sum(terms: &[(usize, f64)], blocks: &[Block], side: &str) -> Result<Block> {
    let Some(&(first, _)) = terms.first() else {
        return Err(Error::ShapeMismatch(format!("empty index set for {side}")));
    };
    let shape = blocks
        .get(first)
        .ok_or_else(|| Error::ShapeMismatch(format!("{side} block {first} missing")))?
        .shape();
    let mut acc = Block::zeros(shape.0, shape.1);
    for &(i, c) in terms {
        let blk = blocks
            .get(i)
            .ok_or_else(|| Error::ShapeMismatch(format!("{side} block {i} missing")))?;
        if blk.shape() != shape {
            return Err(Error::ShapeMismatch(format!(
                "{side} block {i} is {:?}, expected {:?}",
                blk.shape(),
                shape
            )));
        }
        acc.zip_apply(blk, |x, y| *x += c * y);
    }
    Ok(acc)
}

/// The two encoded inputs sent to the task's worker.
pub fn encode_inputs(task: &WorkerTask, blocks_a: &[Block], blocks_b: &[Block]) -> Result<(Block, Block)> {
    Ok((
        weighted_sum(&task.a, blocks_a, "A")?,
        weighted_sum(&task.b, blocks_b, "B")?,
    ))
}

/// `enc_a^T * enc_b`, the one product a worker computes.
pub fn worker_compute(enc_a: &Block, enc_b: &Block) -> Result<Block> {
    if enc_a.nrows() != enc_b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "inner dimensions {} and {} differ",
            enc_a.nrows(),
            enc_b.nrows()
        )));
    }
    Ok(enc_a.tr_mul(enc_b))
}

/// Dense coefficient row of length `m_tilde * n_tilde`.
pub fn coefficient_row(task: &WorkerTask, spec: &PartitionSpec) -> Vec<f64> {
    let mut row = vec![0.0; spec.num_symbols()];
    for &(i, ai) in &task.a {
        for &(j, bj) in &task.b {
            if let Ok(k) = flat_index(i, j, spec) {
                row[k] = ai * bj;
            }
        }
    }
    row
}

/// Sparse `N x (m_tilde * n_tilde)` coefficient matrix, one row per task.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl CoefficientMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, p: usize) -> &[(usize, f64)] {
        &self.rows[p]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows.len(), self.cols);
        for (p, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                m[(p, k)] = v;
            }
        }
        m
    }
}

pub fn coefficient_matrix(tasks: &[WorkerTask], spec: &PartitionSpec) -> CoefficientMatrix {
    CoefficientMatrix {
        cols: spec.num_symbols(),
        rows: tasks.iter().map(|t| t.row_entries(spec)).collect(),
    }
}
