//! Cross-module acceptance suite. Each test exercises one release gate and
//! prints a single PASS line with the measured numbers.

use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use minleaf::boost::{extend_tree, gbdt_train, GbdtConfig};
use minleaf::cart::{cart_train, CartConfig};
use minleaf::data::{compute_epsilon, load_csv, split_dataset, Dataset, Encoding, SplitSpec};
use minleaf::eval::stats::{sign_test, wilcoxon_signed_rank};
use minleaf::mio::{
    build_mio, check_feasible, emit_lp, parse_lp, warmstart_from_tree, FeasTolerances, Objective,
};
use minleaf::search::{brute_force_optimal, solve, SearchConfig, Strategy};
use minleaf::tree::{leaf_accuracy, model_accuracy, reduce_tree, ShallowTree, TreeNode};

fn search_config(depth: usize, n_min: usize, objective: Objective) -> SearchConfig {
    SearchConfig {
        depth,
        n_min,
        objective,
        strategy: Strategy::Direct,
        time_budget: Duration::from_secs(60),
        seed: 0,
    }
}

/// 200 small instances: n <= 40, p <= 3, two classes, depth <= 2,
/// n_min in {1, 3}. Half carry a planted feature interaction (so greedy
/// and optimal trees differ often), half are label noise.
fn oracle_suite() -> Vec<(Dataset, usize, usize)> {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut suite = Vec::with_capacity(200);
    for i in 0..200 {
        let n = rng.gen_range(8..=40);
        let p = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=2);
        let n_min = if rng.gen_bool(0.5) { 1 } else { 3 };
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let mut labels = Vec::with_capacity(n);
        for row in &rows {
            let second = row.get(1).copied().unwrap_or(0.0);
            let base = if i % 2 == 0 {
                ((row[0] > 0.5) != (second > 0.5)) as usize
            } else {
                rng.gen_range(0..2)
            };
            labels.push(if rng.gen_bool(0.2) { 1 - base } else { base });
        }
        suite.push((
            Dataset::with_classes(rows, labels, 2).unwrap(),
            depth,
            n_min,
        ));
    }
    suite
}

#[test]
fn exact_search_matches_the_brute_force_oracle_on_both_objectives() {
    let start = Instant::now();
    let suite = oracle_suite();
    let mut checked = 0usize;
    for (instance, (ds, depth, n_min)) in suite.iter().enumerate() {
        for objective in [Objective::LeafAccuracy, Objective::Misclassification] {
            let cfg = search_config(*depth, *n_min, objective);
            let got = solve(ds, &cfg, None).unwrap();
            let want = brute_force_optimal(ds, &cfg).unwrap();
            assert!(
                (got.objective_value - want.objective_value).abs() <= 1e-9,
                "instance {instance} ({objective}): solve {} vs oracle {}",
                got.objective_value,
                want.objective_value
            );
            assert!(got.proven_optimal, "instance {instance} not proven");
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed <= Duration::from_secs(300),
        "suite took {elapsed:?}, budget 5 minutes"
    );
    println!("PASS oracle equivalence: {checked} solves matched within 1e-9 in {elapsed:.2?}");
}

#[test]
fn solver_trees_embed_as_feasible_warmstarts_with_matching_objective() {
    let suite = oracle_suite();
    let mut checked = 0usize;
    for (instance, (ds, depth, n_min)) in suite.iter().enumerate() {
        let cfg = search_config(*depth, *n_min, Objective::LeafAccuracy);
        let tree = solve(ds, &cfg, None).unwrap().tree;
        let eps = compute_epsilon(ds);
        let model = build_mio(ds, &eps, *depth, *n_min, Objective::LeafAccuracy).unwrap();
        let warmstart = warmstart_from_tree(&model, &tree, ds).unwrap();
        let report = check_feasible(&model, &warmstart, FeasTolerances::default()).unwrap();
        assert!(
            report.feasible,
            "instance {instance} infeasible: {:?}",
            report.violations
        );
        let q = warmstart.get("Q").unwrap();
        let (a_l, _) = leaf_accuracy(&tree, ds);
        assert!(
            (q - a_l).abs() <= 1e-9,
            "instance {instance}: Q {q} vs leaf accuracy {a_l}"
        );
        checked += 1;
    }
    println!("PASS warmstart consistency: {checked} trees feasible with Q = leaf accuracy");
}

fn random_tree(rng: &mut StdRng, depth: usize, p: usize, k: usize) -> TreeNode {
    if depth == 0 || rng.gen_bool(0.25) {
        TreeNode::leaf(rng.gen_range(0..k))
    } else {
        TreeNode::branch(
            rng.gen_range(0..p),
            rng.gen::<f64>(),
            random_tree(rng, depth - 1, p, k),
            random_tree(rng, depth - 1, p, k),
        )
    }
}

#[test]
fn reduction_keeps_model_accuracy_never_lowers_leaf_accuracy_and_is_idempotent() {
    let mut rng = StdRng::seed_from_u64(7);
    for case in 0..100 {
        let n = rng.gen_range(10..=60);
        let p = rng.gen_range(1..=3);
        let k = rng.gen_range(2..=4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let ds = Dataset::with_classes(rows, labels, k).unwrap();
        let tree = ShallowTree::new(random_tree(&mut rng, 3, p, k));
        let reduced = reduce_tree(&tree, &ds);
        assert_eq!(
            model_accuracy(&tree, &ds),
            model_accuracy(&reduced, &ds),
            "case {case}: model accuracy changed"
        );
        let (before, _) = leaf_accuracy(&tree, &ds);
        let (after, _) = leaf_accuracy(&reduced, &ds);
        assert!(after >= before, "case {case}: {after} < {before}");
        assert_eq!(reduce_tree(&reduced, &ds), reduced, "case {case}");
    }
    println!("PASS reduction invariants: 100 random trees preserved and idempotent");
}

#[test]
fn exact_search_dominates_cart_and_is_often_strictly_better() {
    let suite = oracle_suite();
    let mut strict = 0usize;
    for (instance, (ds, depth, n_min)) in suite.iter().enumerate() {
        let cart = cart_train(ds, &CartConfig::at(*depth, *n_min)).unwrap();
        let (cart_al, _) = leaf_accuracy(&reduce_tree(&cart, ds), ds);
        let cfg = search_config(*depth, *n_min, Objective::LeafAccuracy);
        let exact = solve(ds, &cfg, None).unwrap();
        assert!(
            exact.objective_value >= cart_al - 1e-9,
            "instance {instance}: exact {} < cart {cart_al}",
            exact.objective_value
        );
        if exact.objective_value > cart_al + 1e-9 {
            strict += 1;
        }
    }
    let needed = (suite.len() * 30).div_ceil(100);
    assert!(
        strict >= needed,
        "strict improvements {strict}/{} below {needed}",
        suite.len()
    );
    println!(
        "PASS dominance: exact >= cart on {} instances, strictly better on {strict}",
        suite.len()
    );
}

#[test]
fn bundled_dataset_demo_beats_cart_and_extends_within_budget() {
    let start = Instant::now();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/compas_synth.csv");
    let ds = load_csv(path, "label", Encoding::Ordinal).unwrap();
    assert_eq!(ds.p(), 11);
    assert_eq!(ds.k(), 2);
    assert!((900..=1100).contains(&ds.n()), "n = {}", ds.n());

    let cart = reduce_tree(&cart_train(&ds, &CartConfig::at(3, 25)).unwrap(), &ds);
    let (cart_al, _) = leaf_accuracy(&cart, &ds);
    let cfg = SearchConfig {
        depth: 3,
        n_min: 25,
        objective: Objective::LeafAccuracy,
        strategy: Strategy::Warmstarted,
        time_budget: Duration::from_secs(60),
        seed: 0,
    };
    let exact = solve(&ds, &cfg, Some(&cart)).unwrap();
    assert!(
        exact.objective_value > cart_al,
        "exact {} did not beat cart {cart_al}",
        exact.objective_value
    );

    let shallow = reduce_tree(&exact.tree, &ds);
    let hybrid = extend_tree(&shallow, &ds, 50, 3, 0).unwrap();
    let shallow_acc = model_accuracy(&shallow, &ds);
    let hybrid_acc = model_accuracy(&hybrid, &ds);
    assert!(
        hybrid_acc >= shallow_acc,
        "hybrid {hybrid_acc} < shallow {shallow_acc}"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed <= Duration::from_secs(180),
        "pipeline took {elapsed:?}"
    );
    println!(
        "PASS bundled demo: cart leaf accuracy {cart_al:.4} < exact {:.4}; \
         hybrid accuracy {hybrid_acc:.4} >= shallow {shallow_acc:.4}; total {elapsed:.2?}",
        exact.objective_value
    );
}

#[test]
fn lp_text_round_trips_and_the_golden_file_byte_matches() {
    let mut rng = StdRng::seed_from_u64(99);
    for case in 0..50 {
        let n = rng.gen_range(4..=20);
        let p = rng.gen_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let ds = Dataset::with_classes(rows, labels, 2).unwrap();
        let depth = rng.gen_range(1..=2);
        let n_min = rng.gen_range(1..=2);
        let objective = if case % 2 == 0 {
            Objective::LeafAccuracy
        } else {
            Objective::Misclassification
        };
        let model = build_mio(&ds, &compute_epsilon(&ds), depth, n_min, objective).unwrap();
        let parsed = parse_lp(&emit_lp(&model)).unwrap();
        assert_eq!(parsed, model, "case {case} did not round trip");
    }

    let ds = Dataset::with_classes(
        vec![
            vec![0.1, 0.0],
            vec![0.2, 1.0],
            vec![0.8, 0.0],
            vec![0.9, 1.0],
        ],
        vec![0, 0, 1, 1],
        2,
    )
    .unwrap();
    let model = build_mio(&ds, &compute_epsilon(&ds), 1, 1, Objective::LeafAccuracy).unwrap();
    assert_eq!(
        emit_lp(&model),
        include_str!("golden/model_d1.lp"),
        "golden LP drifted"
    );
    println!("PASS lp round trip: 50 random models identical after parse; golden byte-match");
}

/// Literal 2^m enumeration of sign patterns with O(m^2) mid-ranking.
fn wilcoxon_enumeration(differences: &[f64]) -> f64 {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    let m = nonzero.len();
    let ranks: Vec<f64> = (0..m)
        .map(|i| {
            let below = nonzero
                .iter()
                .filter(|d| d.abs() < nonzero[i].abs())
                .count();
            let equal = nonzero
                .iter()
                .filter(|d| d.abs() == nonzero[i].abs())
                .count();
            below as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let observed_plus: f64 = (0..m)
        .filter(|&i| nonzero[i] > 0.0)
        .map(|i| ranks[i])
        .sum();
    let observed = observed_plus.min(total - observed_plus);
    let mut favorable = 0u64;
    for pattern in 0u64..(1 << m) {
        let plus: f64 = (0..m)
            .filter(|i| pattern & (1 << i) != 0)
            .map(|i| ranks[i])
            .sum();
        if plus.min(total - plus) <= observed + 1e-12 {
            favorable += 1;
        }
    }
    favorable as f64 / (1u64 << m) as f64
}

#[test]
fn significance_tests_agree_with_exact_enumeration() {
    assert_eq!(sign_test(9, 1), 0.021484375);

    let mut checked = 0usize;
    for m in 1..=8usize {
        // Distinct magnitudes and heavily tied magnitudes, under every
        // possible sign pattern.
        let distinct: Vec<f64> = (1..=m).map(|v| v as f64).collect();
        let tied: Vec<f64> = (0..m).map(|v| (v / 2 + 1) as f64).collect();
        for magnitudes in [&distinct, &tied] {
            for pattern in 0u32..(1 << m) {
                let diffs: Vec<f64> = magnitudes
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if pattern & (1 << i) != 0 { v } else { -v })
                    .collect();
                let got = wilcoxon_signed_rank(&diffs).unwrap().p_value;
                let want = wilcoxon_enumeration(&diffs);
                assert!(
                    (got - want).abs() <= 1e-12,
                    "m={m} pattern={pattern:b}: {got} vs {want}"
                );
                checked += 1;
            }
        }
    }

    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..50 {
        let m = rng.gen_range(1..=12);
        let diffs: Vec<f64> = (0..m)
            .map(|_| {
                let magnitude = rng.gen_range(1..=8) as f64 / 2.0;
                if rng.gen_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        let got = wilcoxon_signed_rank(&diffs).unwrap().p_value;
        let want = wilcoxon_enumeration(&diffs);
        assert!((got - want).abs() <= 1e-12, "{diffs:?}: {got} vs {want}");
        checked += 1;
    }
    println!("PASS statistics: sign test exact; {checked} rank-test vectors match enumeration");
}

#[test]
fn boosting_loss_is_monotone_and_separates_two_clusters_quickly() {
    let mut rng = StdRng::seed_from_u64(5);
    for case in 0..20 {
        let n = rng.gen_range(15..=50);
        let p = rng.gen_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let ds = Dataset::with_classes(rows, labels, 2).unwrap();
        let cfg = GbdtConfig {
            n_trees: 25,
            learning_rate: rng.gen_range(0.05..=0.3),
            gamma: 1e-8,
            ..GbdtConfig::default()
        };
        let model = gbdt_train(&ds, &cfg, case as u64);
        for (round, w) in model.train_loss.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + 1e-9,
                "case {case} round {round}: loss rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }

    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(17);
    let mut rows = Vec::with_capacity(500);
    let mut labels = Vec::with_capacity(500);
    for i in 0..500 {
        let label = i % 2;
        let center = if label == 0 { 0.3 } else { 0.7 };
        rows.push(vec![
            center + rng.gen_range(-0.12..0.12),
            center + rng.gen_range(-0.12..0.12),
        ]);
        labels.push(label);
    }
    let ds = Dataset::with_classes(rows, labels, 2).unwrap();
    let (train, test) = split_dataset(&ds, &SplitSpec::new(0)).unwrap();
    let model = gbdt_train(&train, &GbdtConfig::default(), 0);
    let accuracy = model_accuracy(&model, &test);
    let elapsed = start.elapsed();
    assert!(accuracy >= 0.95, "test accuracy {accuracy}");
    assert!(elapsed <= Duration::from_secs(2), "took {elapsed:?}");
    println!(
        "PASS boosting: 20 monotone loss curves; two-cluster test accuracy {accuracy:.3} in {elapsed:.2?}"
    );
}

#[test]
fn large_instance_search_improves_on_its_warmstart_within_budget() {
    let mut rng = StdRng::seed_from_u64(7);
    let n = 500;
    let p = 10;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut labels = Vec::with_capacity(n);
    for row in &rows {
        let planted = ((row[0] > 0.5) != (row[1] > 0.5)) as usize;
        labels.push(if rng.gen_bool(0.15) { 1 - planted } else { planted });
    }
    let ds = Dataset::with_classes(rows, labels, 2).unwrap();

    let cart = reduce_tree(&cart_train(&ds, &CartConfig::at(3, 25)).unwrap(), &ds);
    let (warm_al, _) = leaf_accuracy(&cart, &ds);
    let cfg = SearchConfig {
        depth: 3,
        n_min: 25,
        objective: Objective::LeafAccuracy,
        strategy: Strategy::Warmstarted,
        time_budget: Duration::from_secs(60),
        seed: 0,
    };
    let start = Instant::now();
    let result = solve(&ds, &cfg, Some(&cart)).unwrap();
    let elapsed = start.elapsed();
    assert!(
        result.proven_optimal || result.objective_value > warm_al,
        "no improvement: warmstart {warm_al}, result {} (proven {})",
        result.objective_value,
        result.proven_optimal
    );
    assert!(elapsed <= Duration::from_secs(75), "took {elapsed:?}");
    println!(
        "PASS scale check: warmstart {warm_al:.4} -> {:.4} (proven optimal: {}) in {elapsed:.2?}",
        result.objective_value, result.proven_optimal
    );
}
