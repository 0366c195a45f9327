//! Output degree distributions and the factored degree split `d = d1 * d2`.
//!
//! A worker's output symbol covers a `d1 x d2` rectangle of the block grid,
//! so a degree is only usable when it factors within the grid bounds. The
//! distribution types here keep that constraint explicit: degrees with no
//! valid split are zeroed at construction time rather than rejected while
//! sampling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOLERANCE: f64 = 1e-9;

/// Probability mass over output-symbol degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    mass: BTreeMap<usize, f64>,
    // (degree, cumulative mass) for entries with positive mass
    cumulative: Vec<(usize, f64)>,
}

/// How a sampled degree is factored into row and column counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitScheme {
    /// All of the degree on the `A` side: `(d, 1)`.
    #[serde(rename = "SCHEME_I", alias = "I")]
    SchemeI,
    /// `(d, 1)` or `(1, d)` with equal probability.
    #[serde(rename = "SCHEME_II", alias = "II")]
    SchemeII,
    /// Uniform over every factor pair that fits the grid.
    #[serde(rename = "SCHEME_III", alias = "III")]
    SchemeIII,
}

impl SplitScheme {
    pub const ALL: [SplitScheme; 3] = [SplitScheme::SchemeI, SplitScheme::SchemeII, SplitScheme::SchemeIII];

    pub fn label(&self) -> &'static str {
        match self {
            SplitScheme::SchemeI => "SCHEME_I",
            SplitScheme::SchemeII => "SCHEME_II",
            SplitScheme::SchemeIII => "SCHEME_III",
        }
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A reason a distribution is unusable for a given grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MassNotOne(f64),
    NegativeMass { degree: usize, mass: f64 },
    ZeroDegree,
    UnsplittableDegree(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MassNotOne(total) => write!(f, "MassNotOne({total})"),
            Violation::NegativeMass { degree, mass } => write!(f, "NegativeMass({degree}: {mass})"),
            Violation::ZeroDegree => write!(f, "ZeroDegree"),
            Violation::UnsplittableDegree(d) => write!(f, "UnsplittableDegree({d})"),
        }
    }
}

/// Every `(d1, d2)` with `d1 * d2 = d`, `d1 <= rows`, `d2 <= cols`, ordered by `d1`.
pub fn valid_splits(d: usize, rows: usize, cols: usize) -> Vec<(usize, usize)> {
    if d == 0 {
        return Vec::new();
    }
    (1..=d.min(rows))
        .filter(|d1| d % d1 == 0 && d / d1 <= cols)
        .map(|d1| (d1, d / d1))
        .collect()
}

impl DegreeDistribution {
    /// Builds a distribution from `(degree, mass)` pairs. Masses are kept as
    /// given; use [`validate`](Self::validate) to check normalization.
    pub fn new<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut mass = BTreeMap::new();
        for (d, p) in pairs {
            if !p.is_finite() {
                return Err(Error::InvalidDistribution(format!("mass at degree {d} is {p}")));
            }
            *mass.entry(d).or_insert(0.0) += p;
        }
        Ok(Self::from_map(mass))
    }

    fn from_map(mass: BTreeMap<usize, f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = mass
            .iter()
            .filter(|(d, p)| **d > 0 && **p > 0.0)
            .map(|(d, p)| {
                acc += p;
                (*d, acc)
            })
            .collect();
        DegreeDistribution { mass, cumulative }
    }

    pub fn point_mass(d: usize) -> Self {
        Self::from_map(BTreeMap::from([(d, 1.0)]))
    }

    /// `0.2x + 0.7x^2 + 0.1x^4`, the small worked-example distribution.
    pub fn small_example() -> Self {
        Self::from_map(BTreeMap::from([(1, 0.2), (2, 0.7), (4, 0.1)]))
    }

    /// Output degree distribution used for the (82,80)x(82,80) outer-coded,
    /// 10000-worker experiments.
    pub fn fr_simulation() -> Self {
        Self::from_map(BTreeMap::from([
            (1, 0.013),
            (2, 0.5),
            (3, 0.1661),
            (4, 0.0726),
            (5, 0.0826),
            (8, 0.0581),
            (9, 0.0340),
            (18, 0.0576),
            (66, 0.0160),
        ]))
    }

    /// Robust soliton distribution over degrees `1..=k` with spike
    /// parameter `c` and failure bound `delta`. When `grid` is given,
    /// degrees with no valid split are removed and the rest renormalized.
    pub fn robust_soliton(k: usize, c: f64, delta: f64, grid: Option<(usize, usize)>) -> Result<Self> {
        if k == 0 || !(c > 0.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "robust soliton needs k >= 1, c > 0, 0 < delta < 1 (got {k}, {c}, {delta})"
            )));
        }
        let kf = k as f64;
        let ripple = c * (kf / delta).ln() * kf.sqrt();
        let spike = ((kf / ripple).round() as usize).clamp(1, k);
        let mut weights = vec![0.0; k + 1];
        for (d, w) in weights.iter_mut().enumerate().skip(1) {
            let ideal = if d == 1 { 1.0 / kf } else { 1.0 / (d as f64 * (d as f64 - 1.0)) };
            let extra = if d < spike {
                ripple / (d as f64 * kf)
            } else if d == spike {
                (ripple * (ripple / delta).ln() / kf).max(0.0)
            } else {
                0.0
            };
            *w = ideal + extra;
        }
        if let Some((rows, cols)) = grid {
            for (d, w) in weights.iter_mut().enumerate().skip(1) {
                if valid_splits(d, rows, cols).is_empty() {
                    *w = 0.0;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateDistribution(format!(
                "no degree in 1..={k} splits within the grid"
            )));
        }
        Ok(Self::from_map(
            weights
                .into_iter()
                .enumerate()
                .skip(1)
                .filter(|(_, w)| *w > 0.0)
                .map(|(d, w)| (d, w / total))
                .collect(),
        ))
    }

    /// Zeroes degrees with no valid split for a `rows x cols` grid and
    /// renormalizes.
    pub fn restrict_to_grid(&self, rows: usize, cols: usize) -> Result<Self> {
        let kept: BTreeMap<usize, f64> = self
            .mass
            .iter()
            .filter(|(d, p)| **p > 0.0 && !valid_splits(**d, rows, cols).is_empty())
            .map(|(d, p)| (*d, *p))
            .collect();
        let total: f64 = kept.values().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateDistribution("all mass removed by grid restriction".into()));
        }
        Ok(Self::from_map(kept.into_iter().map(|(d, p)| (d, p / total)).collect()))
    }

    pub fn mass(&self) -> &BTreeMap<usize, f64> {
        &self.mass
    }

    pub fn probability(&self, d: usize) -> f64 {
        self.mass.get(&d).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn max_degree(&self) -> usize {
        self.cumulative.last().map(|(d, _)| *d).unwrap_or(0)
    }

    pub fn average_degree(&self) -> f64 {
        let total = self.total_mass();
        self.mass.iter().map(|(d, p)| *d as f64 * p).sum::<f64>() / total
    }

    /// Checks normalization, sign, and that every supported degree splits
    /// within a `rows x cols` grid.
    pub fn validate(&self, rows: usize, cols: usize) -> std::result::Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            violations.push(Violation::MassNotOne(total));
        }
        for (&d, &p) in &self.mass {
            if p < 0.0 {
                violations.push(Violation::NegativeMass { degree: d, mass: p });
            } else if p > 0.0 {
                if d == 0 {
                    violations.push(Violation::ZeroDegree);
                } else if valid_splits(d, rows, cols).is_empty() {
                    violations.push(Violation::UnsplittableDegree(d));
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn sample_degree<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let Some(&(last, total)) = self.cumulative.last() else {
            return 0;
        };
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|(_, c)| *c <= u);
        self.cumulative.get(idx).map(|(d, _)| *d).unwrap_or(last)
    }

    /// Reads the `degree,probability` text table. Blank lines, `#` comments
    /// and a `degree,probability` header line are skipped.
    pub fn read_table<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("degree,probability") {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: idx + 1, msg };
            let (d, p) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected `degree,probability`, got `{line}`")))?;
            let d: usize = d.trim().parse().map_err(|e| parse_err(format!("degree: {e}")))?;
            let p: f64 = p.trim().parse().map_err(|e| parse_err(format!("probability: {e}")))?;
            pairs.push((d, p));
        }
        Self::new(pairs)
    }

    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (d, p) in &self.mass {
            writeln!(out, "{d},{p}")?;
        }
        Ok(())
    }
}

/// Factors `d` according to `scheme` for a `rows x cols` grid.
pub fn sample_split<R: Rng + ?Sized>(
    d: usize,
    rows: usize,
    cols: usize,
    scheme: SplitScheme,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let no_split = || Error::NoValidSplit { degree: d, rows, cols };
    if d == 0 {
        return Err(no_split());
    }
    match scheme {
        SplitScheme::SchemeI => {
            if d <= rows {
                Ok((d, 1))
            } else {
                Err(no_split())
            }
        }
        SplitScheme::SchemeII => {
            if d > rows || d > cols {
                return Err(no_split());
            }
            if rng.random::<bool>() {
                Ok((d, 1))
            } else {
                Ok((1, d))
            }
        }
        SplitScheme::SchemeIII => {
            let splits = valid_splits(d, rows, cols);
            match splits.len() {
                0 => Err(no_split()),
                1 => Ok(splits[0]),
                len => Ok(splits[rng.random_range(0..len)]),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_splits(d: usize, rows: usize, cols: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 1..=rows {
            for b in 1..=cols {
                if a * b == d {
                    out.push((a, b));
                }
            }
        }
        out
    }

    #[test]
    fn valid_split_examples() {
        assert_eq!(valid_splits(4, 3, 3), vec![(2, 2)]);
        assert_eq!(valid_splits(6, 3, 3), vec![(2, 3), (3, 2)]);
        assert!(valid_splits(25, 4, 4).is_empty());
        assert_eq!(valid_splits(1, 1, 1), vec![(1, 1)]);
    }

    proptest! {
        #[test]
        fn valid_splits_match_brute_force(d in 1usize..200, rows in 1usize..20, cols in 1usize..20) {
            prop_assert_eq!(valid_splits(d, rows, cols), brute_splits(d, rows, cols));
        }

        #[test]
        fn sampled_splits_respect_bounds(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..12) {
            let dist = DegreeDistribution::robust_soliton(rows * cols, 0.1, 0.5, Some((rows, cols))).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let d = dist.sample_degree(&mut rng);
                let (d1, d2) = sample_split(d, rows, cols, SplitScheme::SchemeIII, &mut rng).unwrap();
                prop_assert_eq!(d1 * d2, d);
                prop_assert!(d1 <= rows && d2 <= cols);
            }
        }
    }

    #[test]
    fn fr_simulation_distribution_is_valid() {
        let dist = DegreeDistribution::fr_simulation();
        assert!(dist.validate(82, 82).is_ok());
        assert!(dist.validate(80, 80).is_ok());
        assert!((dist.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unsplittable_and_unnormalized_violations() {
        let dist = DegreeDistribution::new([(25, 1.0)]).unwrap();
        assert_eq!(dist.validate(4, 4), Err(vec![Violation::UnsplittableDegree(25)]));
        let dist = DegreeDistribution::new([(1, 0.5), (2, 0.4)]).unwrap();
        match dist.validate(3, 3) {
            Err(v) => {
                assert_eq!(v.len(), 1);
                assert!(matches!(v[0], Violation::MassNotOne(t) if (t - 0.9).abs() < 1e-12));
            }
            Ok(()) => panic!("expected violation"),
        }
        let dist = DegreeDistribution::new([(1, 1.2), (2, -0.2)]).unwrap();
        assert!(matches!(
            dist.validate(3, 3).unwrap_err()[0],
            Violation::NegativeMass { degree: 2, .. }
        ));
    }

    #[test]
    fn point_mass_always_samples_its_degree() {
        let dist = DegreeDistribution::point_mass(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| dist.sample_degree(&mut rng) == 3));
    }

    #[test]
    fn empirical_degree_frequencies_within_three_sigma() {
        let dist = DegreeDistribution::small_example();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut counts = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(dist.sample_degree(&mut rng)).or_insert(0usize) += 1;
        }
        for (d, p) in [(1, 0.2), (2, 0.7), (4, 0.1)] {
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            let got = counts.get(&d).copied().unwrap_or(0) as f64;
            assert!((got - draws as f64 * p).abs() < 3.0 * sigma, "degree {d}: {got}");
        }
        assert_eq!(counts.len(), 3);
    }

    #[test]
    fn sampling_is_reproducible() {
        let dist = DegreeDistribution::small_example();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..200).map(|_| dist.sample_degree(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn split_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_split(4, 3, 3, SplitScheme::SchemeIII, &mut rng).unwrap(), (2, 2));
        assert!(matches!(
            sample_split(4, 3, 3, SplitScheme::SchemeI, &mut rng),
            Err(Error::NoValidSplit { degree: 4, .. })
        ));
        assert_eq!(sample_split(3, 3, 3, SplitScheme::SchemeI, &mut rng).unwrap(), (3, 1));
    }

    #[test]
    fn scheme_iii_is_uniform_over_valid_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let first = (0..draws)
            .filter(|_| sample_split(6, 3, 3, SplitScheme::SchemeIII, &mut rng).unwrap() == (2, 3))
            .count() as f64;
        let sigma = (draws as f64 * 0.25).sqrt();
        assert!((first - draws as f64 / 2.0).abs() < 3.0 * sigma, "{first}");
    }

    #[test]
    fn scheme_iii_chi_square_for_many_splits() {
        // degree 12 on a 12x12 grid has six splits
        let splits = valid_splits(12, 12, 12);
        assert_eq!(splits.len(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 10_000;
        let mut counts = vec![0usize; splits.len()];
        for _ in 0..draws {
            let s = sample_split(12, 12, 12, SplitScheme::SchemeIII, &mut rng).unwrap();
            counts[splits.iter().position(|x| *x == s).unwrap()] += 1;
        }
        let expected = draws as f64 / splits.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 5 degrees of freedom
        assert!(chi2 < 20.52, "chi2 = {chi2}");
    }

    #[test]
    fn scheme_ii_balances_orientation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 10_000;
        let tall = (0..draws)
            .filter(|_| sample_split(3, 4, 4, SplitScheme::SchemeII, &mut rng).unwrap() == (3, 1))
            .count() as f64;
        assert!((tall - 5000.0).abs() < 150.0);
    }

    #[test]
    fn robust_soliton_single_symbol() {
        let dist = DegreeDistribution::robust_soliton(1, 0.1, 0.5, None).unwrap();
        assert_eq!(dist.mass(), &BTreeMap::from([(1, 1.0)]));
    }

    #[test]
    fn robust_soliton_matches_direct_formula() {
        let dist = DegreeDistribution::robust_soliton(10, 0.1, 0.5, None).unwrap();
        assert!((dist.total_mass() - 1.0).abs() < 1e-9);
        assert!(dist.mass().keys().all(|d| (1..=10).contains(d)));

        // k = 10, c = 0.1, delta = 0.5: R = 0.1 ln(20) sqrt(10), k/R rounds
        // past k so the spike lands on degree 10.
        let k = 10.0_f64;
        let r = 0.1 * (20.0_f64).ln() * k.sqrt();
        let mut w: Vec<f64> = (1..=10)
            .map(|d| {
                let d = d as f64;
                let rho = if d == 1.0 { 0.1 } else { 1.0 / (d * (d - 1.0)) };
                rho + if d < 10.0 { r / (d * k) } else { r * (r / 0.5).ln() / k }
            })
            .collect();
        let beta: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= beta);
        for (d, expect) in (1..=10).zip(w) {
            assert!((dist.probability(d) - expect).abs() < 1e-12, "degree {d}");
        }
    }

    #[test]
    fn robust_soliton_grid_filter() {
        let dist = DegreeDistribution::robust_soliton(10, 0.1, 0.5, Some((2, 3))).unwrap();
        assert_eq!(dist.probability(7), 0.0);
        assert_eq!(dist.probability(5), 0.0);
        assert!(dist.probability(6) > 0.0);
        assert!((dist.total_mass() - 1.0).abs() < 1e-9);
        assert!(dist.validate(2, 3).is_ok());
    }

    #[test]
    fn restriction_that_removes_everything_is_degenerate() {
        let dist = DegreeDistribution::point_mass(7);
        assert!(matches!(dist.restrict_to_grid(2, 3), Err(Error::DegenerateDistribution(_))));
    }

    #[test]
    fn table_round_trip() {
        let dist = DegreeDistribution::fr_simulation();
        let mut buf = Vec::new();
        dist.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("1,0.013\n2,0.5\n"));
        let back = DegreeDistribution::read_table(&buf[..]).unwrap();
        assert_eq!(back, dist);
        assert!(matches!(
            DegreeDistribution::read_table(&b"degree,probability\n1;0.5\n"[..]),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
