#![allow(dead_code)]

use factored_raptor::blockgrid::split_columns;
use factored_raptor::flt::{coefficient_matrix, encode_inputs, generate_tasks, worker_compute};
use factored_raptor::outer::{mds_encode, OuterProductCode};
use factored_raptor::{Block, CoeffMode, DegreeDistribution, PartitionSpec, SplitScheme, WorkerTask};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Block {
    Block::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn small_dist(rows: usize, cols: usize) -> DegreeDistribution {
    DegreeDistribution::new([(1, 0.2), (2, 0.45), (3, 0.15), (4, 0.15), (6, 0.05)])
        .unwrap()
        .restrict_to_grid(rows, cols)
        .unwrap()
}

/// Any scheme when every degree fits on one line, scheme III otherwise.
pub fn random_scheme<R: Rng>(dist: &DegreeDistribution, rows: usize, cols: usize, rng: &mut R) -> SplitScheme {
    if dist.max_degree() <= rows.min(cols) {
        SplitScheme::ALL[rng.random_range(0..3)]
    } else {
        SplitScheme::SchemeIII
    }
}

/// Matrices, coded blocks and every worker's task and result.
pub struct Instance {
    pub spec: PartitionSpec,
    pub outer: OuterProductCode,
    pub tasks: Vec<WorkerTask>,
    pub results: Vec<Block>,
    pub product: Block,
}

impl Instance {
    pub fn random<R: Rng>(spec: PartitionSpec, outer: OuterProductCode, workers: usize, rng: &mut R) -> Self {
        let a = gaussian(spec.inner, spec.a_cols, rng);
        let b = gaussian(spec.inner, spec.b_cols, rng);
        let coded_a = mds_encode(&split_columns(&a, spec.a_blocks).unwrap(), &outer.col_code).unwrap();
        let coded_b = mds_encode(&split_columns(&b, spec.b_blocks).unwrap(), &outer.row_code).unwrap();
        let dist = small_dist(spec.a_coded, spec.b_coded);
        let scheme = random_scheme(&dist, spec.a_coded, spec.b_coded, rng);
        let tasks = generate_tasks(&spec, &dist, scheme, workers, CoeffMode::Gaussian, rng).unwrap();
        let results = tasks
            .iter()
            .map(|t| {
                let (ea, eb) = encode_inputs(t, &coded_a, &coded_b).unwrap();
                worker_compute(&ea, &eb).unwrap()
            })
            .collect();
        Instance {
            spec,
            outer,
            tasks,
            results,
            product: a.transpose() * b,
        }
    }

    /// Tasks and results of the given workers.
    pub fn received(&self, workers: &[usize]) -> (Vec<WorkerTask>, Vec<Block>) {
        (
            workers.iter().map(|&p| self.tasks[p].clone()).collect(),
            workers.iter().map(|&p| self.results[p].clone()).collect(),
        )
    }
}

/// `s, r, t <= 60`, `m, n <= 4`, one redundant block on each side.
pub fn random_spec<R: Rng>(rng: &mut R) -> PartitionSpec {
    let m = rng.random_range(1..=4);
    let n = rng.random_range(1..=4);
    let r = m * rng.random_range(1..=60 / m);
    let t = n * rng.random_range(1..=60 / n);
    let s = rng.random_range(1..=60);
    PartitionSpec::new(r, s, t, m, n, m + 1, n + 1).unwrap()
}

/// A random subset of `count` workers out of `workers`, sorted.
pub fn survivors<R: Rng>(workers: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..workers).collect();
    order.shuffle(rng);
    let mut out = order[..count].to_vec();
    out.sort_unstable();
    out
}

pub fn rel_err(got: &Block, want: &Block) -> f64 {
    (got - want).amax() / want.amax()
}

/// Rank by Gaussian elimination with full pivoting, written independently
/// of the library's solver.
pub fn elimination_rank(rows: &[Vec<f64>]) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let n_rows = a.len();
    let n_cols = a.first().map_or(0, Vec::len);
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale.max(1.0) * (n_rows.max(n_cols) as f64);
    let mut rank = 0;
    while rank < n_rows.min(n_cols) {
        let mut best = (rank, rank, 0.0);
        for (i, row) in a.iter().enumerate().skip(rank) {
            for (j, v) in row.iter().enumerate().skip(rank) {
                if v.abs() > best.2 {
                    best = (i, j, v.abs());
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        a.swap(rank, best.0);
        for row in a.iter_mut() {
            row.swap(rank, best.1);
        }
        let pivot_row = a[rank].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[rank] / pivot_row[rank];
            for (x, p) in row.iter_mut().zip(&pivot_row).skip(rank) {
                *x -= f * p;
            }
        }
        rank += 1;
    }
    rank
}

pub fn dense_rows(tasks: &[WorkerTask], spec: &PartitionSpec) -> Vec<Vec<f64>> {
    let m = coefficient_matrix(tasks, spec).to_dense();
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub struct EndToEnd {
    pub instances: usize,
    pub worst_error: f64,
}

/// Random instances with `(m+1, m) x (n+1, n)` outer codes. Stragglers are
/// dropped from a random order until peeling with line filling succeeds;
/// inactivation decoding is run on the same results.
pub fn end_to_end(count: usize, seed: u64) -> EndToEnd {
    use factored_raptor::{decode, inactivation_decode};
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let spec = random_spec(&mut rng);
        let outer = OuterProductCode::random(&spec, &mut rng).unwrap();
        let k = spec.num_symbols();
        let workers = 4 * k + 10;
        let inst = Instance::random(spec, outer, workers, &mut rng);
        let order = survivors(workers, workers, &mut rng);
        let mut received = rng.random_range(k..=2 * k);
        let decoded = loop {
            let mut got = order[..received].to_vec();
            got.sort_unstable();
            let (tasks, results) = inst.received(&got);
            let d = decode(&tasks, &results, &inst.outer, &spec).unwrap();
            if d.report.outcome.is_success() || received == workers {
                let ml = inactivation_decode(&tasks, &results, &inst.outer, &spec).unwrap();
                break (d, ml);
            }
            received += 1;
        };
        let c = decoded.0.product.expect("all workers decode");
        let ml = decoded.1.product.expect("inactivation covers peeling");
        worst = worst.max(rel_err(&c, &inst.product)).max(rel_err(&ml, &inst.product));
    }
    EndToEnd {
        instances: count,
        worst_error: worst,
    }
}

/// Rate-one instances: counts cases where inactivation decoding and the
/// elimination rank test disagree on whether the results determine the
/// grid. Returns `(disagreements, full-rank cases)`.
pub fn rank_oracle(count: usize, seed: u64) -> (usize, usize) {
    use factored_raptor::inactivation_decode;
    let mut rng = rng(seed);
    let mut disagreements = 0;
    let mut full = 0;
    for _ in 0..count {
        let (m, n) = loop {
            let (m, n) = (rng.random_range(1..=6), rng.random_range(1..=6));
            if m * n <= 36 {
                break (m, n);
            }
        };
        let spec = PartitionSpec::new(m, rng.random_range(1..=4), n, m, n, m, n).unwrap();
        let k = spec.num_symbols();
        let workers = k + 8;
        let inst = Instance::random(spec, OuterProductCode::identity(&spec), workers, &mut rng);
        let lo = k.saturating_sub(2).max(1);
        let got = survivors(workers, rng.random_range(lo..=k + 6), &mut rng);
        let (tasks, results) = inst.received(&got);
        let full_rank = elimination_rank(&dense_rows(&tasks, &spec)) == k;
        let ok = inactivation_decode(&tasks, &results, &inst.outer, &spec)
            .map(|d| d.report.outcome.is_success())
            .unwrap_or(false);
        full += usize::from(full_rank);
        disagreements += usize::from(ok != full_rank);
    }
    (disagreements, full)
}

/// Support-only and numeric peeling with line filling on the same random
/// instances. Returns `(outcome disagreements, count disagreements, successes)`.
pub fn duality(count: usize, seed: u64) -> (usize, usize, usize) {
    use factored_raptor::decoder::{decode_with, support_decode, DecodeOptions, GridShape, SupportOptions};
    let mut rng = rng(seed);
    let (mut outcome, mut counts, mut successes) = (0, 0, 0);
    for _ in 0..count {
        let (mc, nc) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let (m, n) = (rng.random_range(1..=mc), rng.random_range(1..=nc));
        let spec = PartitionSpec::new(m, 2, n, m, n, mc, nc).unwrap();
        let outer = OuterProductCode::random(&spec, &mut rng).unwrap();
        let k = spec.num_symbols();
        let workers = 3 * k + 4;
        let inst = Instance::random(spec, outer, workers, &mut rng);
        let got = survivors(workers, rng.random_range(1..=workers), &mut rng);
        let (tasks, results) = inst.received(&got);
        let numeric = decode_with(&tasks, &results, Some(&inst.outer), &spec, DecodeOptions::default())
            .unwrap()
            .report;
        let supports: Vec<Vec<usize>> = tasks.iter().map(|t| t.support(&spec)).collect();
        let structural = support_decode(&supports, GridShape::from(&spec), SupportOptions::default());
        outcome += usize::from(numeric.outcome != structural.outcome);
        counts += usize::from(numeric != structural);
        successes += usize::from(numeric.outcome.is_success());
    }
    (outcome, counts, successes)
}
