//! Checks degree distributions against a coded grid and shows how a robust
//! soliton is trimmed to the degrees that factor onto it.
//!
//! cargo run --example validate_distribution

use factored_raptor::degrees::valid_splits;
use factored_raptor::DegreeDistribution;

fn report(name: &str, dist: &DegreeDistribution, rows: usize, cols: usize) {
    match dist.validate(rows, cols) {
        Ok(()) => println!("{name}: ok (average degree {:.3})", dist.average_degree()),
        Err(v) => {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            println!("{name}: {}", list.join(", "));
        }
    }
}

fn main() -> factored_raptor::Result<()> {
    report("large FR distribution on 82x82", &DegreeDistribution::fr_simulation(), 82, 82);
    report("degree 25 on 4x4", &DegreeDistribution::point_mass(25), 4, 4);
    report("degree 7 on 6x6", &DegreeDistribution::point_mass(7), 6, 6);
    report("unnormalized", &DegreeDistribution::new([(1, 0.5), (2, 0.4)])?, 4, 4);

    println!("splits of 18 on 82x82: {:?}", valid_splits(18, 82, 82));

    let soliton = DegreeDistribution::robust_soliton(36, 0.1, 0.05, Some((6, 6)))?;
    report("robust soliton trimmed to 6x6", &soliton, 6, 6);
    let mut out = std::io::stdout().lock();
    soliton.write_table(&mut out)?;
    Ok(())
}
