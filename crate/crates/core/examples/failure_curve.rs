//! Failure probability against straggler count for the three split schemes
//! on the large FR configuration, with the 3-D product code alongside.
//!
//! cargo run --release --example failure_curve -- [trials] [seed]

use factored_raptor::degrees::SplitScheme;
use factored_raptor::simlab::{run_trials, Product3d, SimConfig};

fn main() -> factored_raptor::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let trials = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let stragglers = vec![2800, 2850, 2900, 2950, 3000, 3050, 3100, 3150];
    for scheme in SplitScheme::ALL {
        let mut cfg = SimConfig::reference(scheme, stragglers.clone(), trials, seed);
        if scheme == SplitScheme::SchemeIII {
            cfg.baseline = Some(Product3d::reference());
        }
        let res = run_trials(&cfg)?;
        for row in &res.rows {
            println!("{row}");
        }
    }
    Ok(())
}
