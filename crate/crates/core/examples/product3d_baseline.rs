//! Iterative erasure decoding of the (21,18)x(22,19)x(22,19) product code
//! under uniformly random cell erasures.
//!
//! cargo run --release --example product3d_baseline -- [trials] [seed]

use factored_raptor::simlab::{product3d_trial, trial_rng, Product3d};

fn main() -> factored_raptor::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let code = Product3d::reference();
    println!("{} cells, {} message cells", code.cells(), code.message_cells());
    println!("erased,received,failure_prob");
    for erased in (2800..=3100).step_by(50) {
        let failures = (0..trials)
            .filter(|&t| !product3d_trial(&code, erased, &mut trial_rng(seed, t)))
            .count();
        println!("{erased},{},{:.4}", code.cells() - erased, failures as f64 / trials as f64);
    }
    Ok(())
}
