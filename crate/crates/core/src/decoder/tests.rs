use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::degrees::{DegreeDistribution, SplitScheme};
use crate::fixtures;
use crate::flt::{encode_inputs, generate_tasks, worker_compute, CoeffMode};
use crate::linalg::Fp61;
use crate::outer::{fr_encode, mds_encode};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Block {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Every coded block product, computed directly.
fn true_grid(coded_a: &[Block], coded_b: &[Block]) -> Vec<Block> {
    let mut out = Vec::new();
    for a in coded_a {
        for b in coded_b {
            out.push(a.transpose() * b);
        }
    }
    out
}

struct Instance {
    spec: PartitionSpec,
    outer: OuterProductCode,
    tasks: Vec<WorkerTask>,
    results: Vec<Block>,
    truth: Vec<Block>,
    product: Block,
}

fn fixture_instance(rng: &mut ChaCha8Rng) -> Instance {
    let spec = fixtures::example_spec();
    let outer = fixtures::example_outer();
    let a = gaussian(spec.inner, spec.a_cols, rng);
    let b = gaussian(spec.inner, spec.b_cols, rng);
    let blocks_a = crate::blockgrid::split_columns(&a, spec.a_blocks).unwrap();
    let blocks_b = crate::blockgrid::split_columns(&b, spec.b_blocks).unwrap();
    let coded_a = mds_encode(&blocks_a, &outer.col_code).unwrap();
    let coded_b = mds_encode(&blocks_b, &outer.row_code).unwrap();
    let all = fixtures::example_tasks();
    let tasks: Vec<WorkerTask> = fixtures::example_workers().iter().map(|&w| all[w].clone()).collect();
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
        truth: true_grid(&coded_a, &coded_b),
        product: a.transpose() * b,
    }
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    spec: PartitionSpec,
    dist: &DegreeDistribution,
    workers: usize,
    received: usize,
) -> Instance {
    let outer = OuterProductCode::random(&spec, rng).unwrap();
    let a = gaussian(spec.inner, spec.a_cols, rng);
    let b = gaussian(spec.inner, spec.b_cols, rng);
    let blocks_a = crate::blockgrid::split_columns(&a, spec.a_blocks).unwrap();
    let blocks_b = crate::blockgrid::split_columns(&b, spec.b_blocks).unwrap();
    let enc = fr_encode(
        &blocks_a,
        &blocks_b,
        &outer,
        &spec,
        dist,
        SplitScheme::SchemeIII,
        workers,
        CoeffMode::Gaussian,
        rng,
    )
    .unwrap();
    let tasks: Vec<WorkerTask> = enc.tasks.into_iter().take(received).collect();
    let results = tasks
        .iter()
        .map(|t| {
            let (ea, eb) = encode_inputs(t, &enc.coded_a, &enc.coded_b).unwrap();
            worker_compute(&ea, &eb).unwrap()
        })
        .collect();
    Instance {
        spec,
        outer,
        tasks,
        results,
        truth: true_grid(&enc.coded_a, &enc.coded_b),
        product: a.transpose() * b,
    }
}

fn rel_err(x: &Block, y: &Block) -> f64 {
    (x - y).amax() / y.amax()
}

#[test]
fn fixture_recovers_in_expected_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = fixture_instance(&mut rng);
    let out = decode(&inst.tasks, &inst.results, &inst.outer, &inst.spec).unwrap();
    let order: Vec<usize> = out.trace.iter().map(|r| r.symbol).collect();
    assert_eq!(order, fixtures::example_recovery_order());
    assert_eq!(out.trace[0].via, Via::Peel { worker: 0 });
    assert_eq!(out.trace[1].via, Via::Peel { worker: 6 });
    assert_eq!(out.trace[2].via, Via::Peel { worker: 2 });
    assert_eq!(out.trace[3].via, Via::RowDecode { row: 0 });
    assert_eq!(out.trace[4].via, Via::ColumnDecode { col: 0 });
    assert_eq!(out.report.outcome, Outcome::Success);
    assert_eq!(out.report.inactivated, 0);
    assert_eq!(out.report.peeled + out.report.product_filled, 9);
    assert!(rel_err(out.product.as_ref().unwrap(), &inst.product) < 1e-12);
}

#[test]
fn fixture_support_counts_match_numeric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = fixture_instance(&mut rng);
    let out = decode(&inst.tasks, &inst.results, &inst.outer, &inst.spec).unwrap();
    let supports: Vec<Vec<usize>> = inst.tasks.iter().map(|t| t.support(&inst.spec)).collect();
    let rep = support_decode(&supports, GridShape::from(&inst.spec), SupportOptions::default());
    assert_eq!(rep, out.report);
}

#[test]
fn fill_pass_completes_first_row_and_column() {
    // (0,0), (0,1), (1,0) known: row 0 and column 0 each miss one cell
    let spec = fixtures::example_spec();
    let codes = LineCodes::from_outer(&fixtures::example_outer());
    let mut state = DecodeState::new(GridShape::from(&spec), Some(codes), (), DecodeOptions::default()).unwrap();
    for (w, k) in [0usize, 1, 3].into_iter().enumerate() {
        state.add_row(w, &[(k, 1.0)], ()).unwrap();
    }
    while state.peel_step().unwrap() {}
    assert_eq!(state.product_fill_pass().unwrap(), 2);
    assert!(state.is_known(2) && state.is_known(6));
    assert_eq!(state.product_fill_pass().unwrap(), 0);
}

#[test]
fn single_unit_row_is_recovered_verbatim() {
    let spec = PartitionSpec::new(2, 2, 2, 1, 1, 1, 1).unwrap();
    let value = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let task = WorkerTask::unit(0, &[0], &[0]);
    let out = decode_with(&[task], &[value.clone()], None, &spec, DecodeOptions::default()).unwrap();
    assert_eq!(out.product.unwrap(), value);
    assert_eq!(out.report.peeled, 1);
}

#[test]
fn no_results_is_failure() {
    let spec = fixtures::example_spec();
    let out = decode(&[], &[], &fixtures::example_outer(), &spec).unwrap();
    assert_eq!(out.report.outcome, Outcome::Failure);
    assert!(out.product.is_none());
}

#[test]
fn report_csv_line() {
    let r = DecodeReport {
        outcome: Outcome::Success,
        peeled: 3,
        product_filled: 6,
        inactivated: 0,
        edge_operations: 12,
    };
    assert_eq!(r.to_string(), "SUCCESS,3,6,0,12");
    assert_eq!(DecodeReport::CSV_HEADER, "outcome,peeled,product_filled,inactivated,edge_ops");
}

#[test]
fn residuals_stay_consistent_while_peeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = PartitionSpec::new(6, 5, 9, 2, 3, 3, 4).unwrap();
    for _ in 0..20 {
        let inst = random_instance(&mut rng, spec, &DegreeDistribution::small_example(), 30, 18);
        let mut state = numeric_state(&inst.tasks, &inst.results, Some(&inst.outer), &spec, DecodeOptions::default()).unwrap();
        loop {
            for (_, support, value) in state.residual_rows() {
                let mut expect = Block::zeros(spec.block_rows(), spec.block_cols());
                for &(k, c) in support {
                    expect += &inst.truth[k] * c;
                }
                let scale = expect.amax().max(1.0);
                assert!((&value.x - &expect).amax() / scale < 1e-8);
            }
            if !state.peel_step().unwrap() && state.product_fill_pass().unwrap() == 0 {
                break;
            }
        }
    }
}

#[test]
fn dense_pair_needs_one_inactivation() {
    let spec = PartitionSpec::grid_only(1, 2, 1, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = [gaussian(1, 1, &mut rng), gaussian(1, 1, &mut rng)];
    let tasks: Vec<WorkerTask> = (0..2)
        .map(|p| {
            let b = vec![(0, rng.sample(StandardNormal)), (1, rng.sample(StandardNormal))];
            WorkerTask::new(p, vec![(0, 1.0)], b)
        })
        .collect();
    let results: Vec<Block> = tasks.iter().map(|t| &truth[0] * t.b[0].1 + &truth[1] * t.b[1].1).collect();
    let outer = OuterProductCode::identity(&spec);
    let plain = decode(&tasks, &results, &outer, &spec).unwrap();
    assert_eq!(plain.report.outcome, Outcome::Failure);
    let ml = inactivation_decode(&tasks, &results, &outer, &spec).unwrap();
    assert_eq!(ml.report.outcome, Outcome::Success);
    assert_eq!(ml.report.inactivated, 1);
    let expect = DMatrix::from_row_slice(1, 2, &[truth[0][(0, 0)], truth[1][(0, 0)]]);
    assert!(rel_err(ml.product.as_ref().unwrap(), &expect) < 1e-10);
}

#[test]
fn inactivation_matches_peeling_when_peeling_suffices() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = fixture_instance(&mut rng);
    let a = decode(&inst.tasks, &inst.results, &inst.outer, &inst.spec).unwrap();
    let b = inactivation_decode(&inst.tasks, &inst.results, &inst.outer, &inst.spec).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.product, b.product);
}

#[test]
fn inactivation_recovers_beyond_peeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = PartitionSpec::new(8, 4, 8, 4, 4, 5, 5).unwrap();
    let dist = DegreeDistribution::new([(1, 0.1), (2, 0.5), (3, 0.2), (4, 0.2)]).unwrap();
    let mut beyond = 0;
    for _ in 0..40 {
        let inst = random_instance(&mut rng, spec, &dist, 40, 22);
        let plain = decode(&inst.tasks, &inst.results, &inst.outer, &spec).unwrap();
        let ml = inactivation_decode(&inst.tasks, &inst.results, &inst.outer, &spec).unwrap();
        if plain.report.outcome.is_success() {
            assert!(ml.report.outcome.is_success());
        }
        if let Some(c) = &ml.product {
            assert!(rel_err(c, &inst.product) < 1e-6);
            if !plain.report.outcome.is_success() {
                beyond += 1;
            }
        }
    }
    assert!(beyond > 0);
}

#[test]
fn line_fill_agrees_with_generator_decode() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = PartitionSpec::grid_only(3, 1, 5, 1).unwrap();
    let outer = OuterProductCode::random(&spec, &mut rng).unwrap();
    let msg: Vec<Block> = (0..3).map(|_| gaussian(1, 1, &mut rng)).collect();
    let coded = mds_encode(&msg, &outer.col_code).unwrap();
    let mut state =
        DecodeState::new(GridShape::from(&spec), Some(LineCodes::from_outer(&outer)), Block::zeros(1, 1), DecodeOptions::default())
            .unwrap();
    for (p, k) in [1usize, 3, 4].into_iter().enumerate() {
        state.add_row(p, &[(k, 1.0)], coded[k].clone()).unwrap();
    }
    state.run_peeling().unwrap();
    let cells: Vec<Option<Block>> = (0..5).map(|k| [1, 3, 4].contains(&k).then(|| coded[k].clone())).collect();
    let filled = crate::outer::mds_erasure_decode(&cells, &outer.col_code).unwrap();
    for k in 0..5 {
        let v = &state.value(k).unwrap().x;
        assert!((v - &filled[k]).amax() < 1e-9);
    }
}

#[test]
fn edge_operations_bounded_by_total_degree() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spec = PartitionSpec::grid_only(4, 4, 5, 5).unwrap();
    let dist = DegreeDistribution::new([(1, 0.2), (2, 0.5), (4, 0.3)]).unwrap();
    for _ in 0..50 {
        let inst = random_instance(&mut rng, spec, &dist, 40, 30);
        let total: usize = inst.tasks.iter().map(WorkerTask::degree).sum();
        let out = decode(&inst.tasks, &inst.results, &inst.outer, &spec).unwrap();
        assert!(out.report.edge_operations <= total);
        let ml = inactivation_decode(&inst.tasks, &inst.results, &inst.outer, &spec).unwrap();
        assert!(ml.report.edge_operations <= total);
        let r = ml.report;
        assert!(r.peeled + r.product_filled + r.inactivated <= spec.num_symbols());
    }
}

#[test]
fn field_engine_counts_match_support_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = PartitionSpec::grid_only(5, 5, 6, 6).unwrap();
    let dist = DegreeDistribution::new([(1, 0.05), (2, 0.5), (3, 0.2), (4, 0.25)]).unwrap();
    let rules = [InactivationRule::DegreeTwo, InactivationRule::MaxDegree, InactivationRule::MinRow];
    for round in 0..150 {
        let rule = rules[round % 3];
        let tasks = generate_tasks(&spec, &dist, SplitScheme::SchemeIII, 34, CoeffMode::Gaussian, &mut rng).unwrap();
        let codes = LineCodes::random_fp(&spec, &mut rng);
        let options = DecodeOptions {
            inactivation: rule,
            ..DecodeOptions::default()
        };
        let mut state = DecodeState::new(GridShape::from(&spec), Some(codes), (), options).unwrap();
        let mut supports = Vec::new();
        for t in &tasks {
            let s = t.support(&spec);
            let entries: Vec<(usize, Fp61)> = s.iter().map(|&k| (k, Fp61::random_nonzero(&mut rng))).collect();
            state.add_row(t.worker, &entries, ()).unwrap();
            supports.push(s);
        }
        state.run_inactivation().unwrap();
        let opts = SupportOptions {
            count_inactivations: true,
            inactivation: rule,
            ..SupportOptions::default()
        };
        let rep = support_decode(&supports, GridShape::from(&spec), opts);
        let eng = state.report();
        assert_eq!(rep.inactivated, eng.inactivated, "{rule:?}");
        assert_eq!(rep.peeled, eng.peeled);
        assert_eq!(rep.product_filled, eng.product_filled);
        assert_eq!(rep.edge_operations, eng.edge_operations);
    }
}

#[test]
fn degree_two_rule_needs_fewer_inactivations_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let spec = PartitionSpec::grid_only(10, 10, 12, 12).unwrap();
    let dist = DegreeDistribution::new([(1, 0.03), (2, 0.5), (3, 0.2), (4, 0.17), (6, 0.1)]).unwrap();
    let mut totals = [0usize; 2];
    for _ in 0..200 {
        let tasks = generate_tasks(&spec, &dist, SplitScheme::SchemeIII, 110, CoeffMode::Unit, &mut rng).unwrap();
        let supports: Vec<Vec<usize>> = tasks.iter().map(|t| t.support(&spec)).collect();
        for (slot, rule) in [InactivationRule::DegreeTwo, InactivationRule::MaxDegree].into_iter().enumerate() {
            let opts = SupportOptions {
                count_inactivations: true,
                inactivation: rule,
                ..SupportOptions::default()
            };
            totals[slot] += support_decode(&supports, GridShape::from(&spec), opts).inactivated;
        }
    }
    assert!(totals[0] < totals[1], "{totals:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn support_and_numeric_decoders_agree(seed in any::<u64>(), received in 4usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = PartitionSpec::new(6, 3, 6, 2, 3, 3, 4).unwrap();
        let inst = random_instance(&mut rng, spec, &DegreeDistribution::small_example(), 30, received);
        let out = decode(&inst.tasks, &inst.results, &inst.outer, &spec).unwrap();
        let supports: Vec<Vec<usize>> = inst.tasks.iter().map(|t| t.support(&spec)).collect();
        let rep = support_decode(&supports, GridShape::from(&spec), SupportOptions::default());
        prop_assert_eq!(rep, out.report);
    }

    #[test]
    fn recovered_set_only_grows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = PartitionSpec::grid_only(3, 3, 4, 4).unwrap();
        let inst = random_instance(&mut rng, spec, &DegreeDistribution::small_example(), 24, 16);
        let out = inactivation_decode(&inst.tasks, &inst.results, &inst.outer, &spec).unwrap();
        let mut seen = std::collections::HashSet::new();
        for r in &out.trace {
            prop_assert!(seen.insert(r.symbol));
        }
    }
}
