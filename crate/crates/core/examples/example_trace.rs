//! Decodes the small worked instance by hand-sized steps and prints the
//! order in which output blocks are recovered.
//!
//! cargo run --example example_trace

use factored_raptor::blockgrid::split_columns;
use factored_raptor::decoder::{numeric_state, DecodeOptions, Via};
use factored_raptor::fixtures;
use factored_raptor::flt::{encode_inputs, worker_compute};
use factored_raptor::outer::mds_encode;
use factored_raptor::Block;

fn main() -> factored_raptor::Result<()> {
    let spec = fixtures::example_spec();
    let outer = fixtures::example_outer();
    let a = Block::from_fn(spec.inner, spec.a_cols, |i, j| (i * spec.a_cols + j) as f64 + 1.0);
    let b = Block::from_fn(spec.inner, spec.b_cols, |i, j| ((i + 2 * j) % 5) as f64 - 2.0);
    let coded_a = mds_encode(&split_columns(&a, spec.a_blocks)?, &outer.col_code)?;
    let coded_b = mds_encode(&split_columns(&b, spec.b_blocks)?, &outer.row_code)?;

    let tasks = fixtures::example_tasks();
    for t in &tasks {
        println!("{t}");
    }
    let received: Vec<_> = fixtures::example_workers().iter().map(|&p| tasks[p].clone()).collect();
    let results = received
        .iter()
        .map(|t| {
            let (ea, eb) = encode_inputs(t, &coded_a, &coded_b)?;
            worker_compute(&ea, &eb)
        })
        .collect::<factored_raptor::Result<Vec<_>>>()?;

    let mut state = numeric_state(&received, &results, Some(&outer), &spec, DecodeOptions::default())?;
    state.run_peeling()?;
    println!();
    for r in state.trace() {
        let (i, j) = (r.symbol / spec.b_coded + 1, r.symbol % spec.b_coded + 1);
        match r.via {
            Via::Peel { worker } => println!("A{i}^T B{j}  <- worker {}", worker + 1),
            Via::RowDecode { row } => println!("A{i}^T B{j}  <- row {} of the grid", row + 1),
            Via::ColumnDecode { col } => println!("A{i}^T B{j}  <- column {} of the grid", col + 1),
            Via::Inactivated => println!("A{i}^T B{j}  <- inactivation"),
        }
    }
    println!("{}", state.report());
    Ok(())
}
