//! Mean number of inactivated symbols and decoding failure rate against
//! straggler count on the large FR configuration.
//!
//! cargo run --release --example inactivation_stats -- [trials] [seed]

use factored_raptor::decoder::InactivationRule;
use factored_raptor::simlab::{run_trials, DecoderKind, SimConfig};
use factored_raptor::SplitScheme;

fn main() -> factored_raptor::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let trials = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let stragglers = vec![3000, 3050, 3100, 3150, 3200, 3250];
    println!("rule,S,N,failure_prob,mean_inactivated");
    for rule in [InactivationRule::DegreeTwo, InactivationRule::MaxDegree, InactivationRule::MinRow] {
        let mut cfg = SimConfig::reference(SplitScheme::SchemeIII, stragglers.clone(), trials, seed);
        cfg.decoder = DecoderKind::SupportInactivation;
        cfg.options.inactivation = rule;
        for r in run_trials(&cfg)?.rows {
            println!(
                "{rule:?},{},{},{:.4},{:.2}",
                r.stragglers,
                r.received,
                r.failure_probability(),
                r.mean_inactivated
            );
        }
    }
    Ok(())
}
