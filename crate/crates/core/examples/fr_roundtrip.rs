//! Full FR pipeline on random matrices: outer-encode, hand out FLT tasks,
//! drop stragglers, decode, and compare against the direct product.
//!
//! cargo run --release --example fr_roundtrip -- [workers] [stragglers] [seed]

use factored_raptor::blockgrid::split_columns;
use factored_raptor::flt::{encode_inputs, worker_compute};
use factored_raptor::outer::OuterProductCode;
use factored_raptor::simlab::cost_report;
use factored_raptor::{fr_encode, inactivation_decode, Block, CoeffMode, DegreeDistribution, PartitionSpec, SplitScheme};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> factored_raptor::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let workers = args.first().copied().unwrap_or(120);
    let stragglers = args.get(1).copied().unwrap_or(40);
    let seed = args.get(2).copied().unwrap_or(3) as u64;

    let spec = PartitionSpec::new(30, 50, 24, 6, 4, 7, 5)?;
    let dist = DegreeDistribution::new([(1, 0.1), (2, 0.5), (3, 0.15), (4, 0.15), (6, 0.1)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Block::from_fn(spec.inner, spec.a_cols, |_, _| rng.sample(StandardNormal));
    let b = Block::from_fn(spec.inner, spec.b_cols, |_, _| rng.sample(StandardNormal));

    let outer = OuterProductCode::random(&spec, &mut rng)?;
    let enc = fr_encode(
        &split_columns(&a, spec.a_blocks)?,
        &split_columns(&b, spec.b_blocks)?,
        &outer,
        &spec,
        &dist,
        SplitScheme::SchemeIII,
        workers,
        CoeffMode::Gaussian,
        &mut rng,
    )?;
    let cost = cost_report(&enc.tasks)?;
    println!(
        "{} workers, mean degree {:.2}, {:.2} coefficients per task",
        workers, cost.mean_degree, cost.mean_coefficients
    );

    let mut order: Vec<usize> = (0..workers).collect();
    order.shuffle(&mut rng);
    let mut tasks = Vec::new();
    let mut results = Vec::new();
    for &p in &order[..workers - stragglers] {
        let (ea, eb) = encode_inputs(&enc.tasks[p], &enc.coded_a, &enc.coded_b)?;
        results.push(worker_compute(&ea, &eb)?);
        tasks.push(enc.tasks[p].clone());
    }

    let decoded = inactivation_decode(&tasks, &results, &outer, &spec)?;
    println!("{}", decoded.report);
    match decoded.product {
        Some(c) => {
            let want = a.transpose() * &b;
            println!("max relative error {:.3e}", (c - &want).amax() / want.amax());
        }
        None => println!("not enough results: {} symbols still unknown", spec.num_symbols() - decoded.grid.present_count()),
    }
    Ok(())
}
