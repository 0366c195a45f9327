//! Estimates how many worker results the FR code and the 3-D product code
//! need before the failure rate drops to 2%.
//!
//! cargo run --release --example recovery_threshold -- [trials] [seed]

use factored_raptor::simlab::{estimate_threshold, estimate_threshold_product3d, Product3d, SimConfig};
use factored_raptor::SplitScheme;

fn main() -> factored_raptor::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let trials = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let target = 0.02;

    let cfg = SimConfig::reference(SplitScheme::SchemeIII, Vec::new(), trials, seed);
    let fr = estimate_threshold(&cfg, target, trials)?;
    println!("FR (scheme III): N = {} (failure {:.3})", fr.received, fr.failure_rate);
    for (n, f) in &fr.probes {
        println!("  probe N = {n}: {f:.3}");
    }

    let p3 = estimate_threshold_product3d(&Product3d::reference(), seed, target, trials, None)?;
    println!("3-D product: N = {} (failure {:.3})", p3.received, p3.failure_rate);
    Ok(())
}
