mod common;

use ndarray::Array2;
use rand::Rng;
use treeshrink::ot::wasserstein_lp;
use treeshrink::tree::{path_cost, TreeFile};
use treeshrink::{generate_random, load, nested_distance, save, ScenarioTree};

fn stage_masses(tree: &ScenarioTree) -> Vec<f64> {
    (0..=tree.depth()).map(|t| tree.stage_nodes(t).iter().map(|&n| tree.prob(n)).sum()).collect()
}

#[test]
fn every_stage_carries_unit_mass() {
    let mut rng = common::rng(10);
    for _ in 0..50 {
        let depth = rng.gen_range(1..=4);
        let tree = common::random_tree(&mut rng, depth, 4, 2);
        assert!(tree.validate().is_empty());
        for mass in stage_masses(&tree) {
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn path_cost_is_symmetric_and_vanishes_on_the_diagonal() {
    let mut rng = common::rng(11);
    for _ in 0..20 {
        let (a, b) = common::random_pair(&mut rng, 3, 3, 2);
        for i in a.leaves() {
            assert_eq!(path_cost(&a, i, &a, i, 2.0).unwrap(), 0.0);
            for j in b.leaves() {
                assert_eq!(path_cost(&a, i, &b, j, 2.0).unwrap(), path_cost(&b, j, &a, i, 2.0).unwrap());
            }
        }
    }
}

#[test]
fn generation_is_reproducible_and_sized() {
    let a = generate_random(3, 6, 1, -10.0, 10.0, 4).unwrap();
    assert_eq!((a.len(), a.leaves().count()), (259, 216));
    assert_eq!(a, generate_random(3, 6, 1, -10.0, 10.0, 4).unwrap());
    let chain = generate_random(1, 1, 1, -1.0, 1.0, 0).unwrap();
    assert_eq!(chain.len(), 2);
    assert_eq!(chain.prob(1), 1.0);
}

#[test]
fn eight_stage_quinary_tree() {
    let big = generate_random(7, 5, 1, -10.0, 10.0, 0).unwrap();
    assert_eq!(big.len(), 97_656);
    assert_eq!(big.leaves().count(), 78_125);
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = common::rng(12);
    for k in 0..10 {
        let tree = common::random_tree(&mut rng, 3, 3, 2);
        let path = dir.path().join(format!("t{k}.json"));
        save(&tree, &path).unwrap();
        assert_eq!(load(&path).unwrap(), tree);
    }
}

#[test]
fn bad_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let short = r#"{"T":1,"d":1,"nodes":[{"id":0,"parent":null,"quantizer":[0],"prob":1},
        {"id":1,"parent":0,"quantizer":[0],"prob":0.45},{"id":2,"parent":0,"quantizer":[1],"prob":0.45}]}"#;
    let two_roots = r#"{"T":1,"d":1,"nodes":[{"id":0,"parent":null,"quantizer":[0],"prob":1},
        {"id":1,"parent":null,"quantizer":[0],"prob":1}]}"#;
    for (name, text) in [("short", short), ("roots", two_roots)] {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        assert!(load(&path).is_err(), "{name} accepted");
    }
    assert!(serde_json::from_str::<TreeFile>("{\"T\": 1}").is_err());
}

#[test]
fn nested_distance_is_a_symmetric_zero_on_copies() {
    let mut rng = common::rng(13);
    for _ in 0..30 {
        let depth = rng.gen_range(1..=3);
        let (a, b) = common::random_pair(&mut rng, depth, 3, 1);
        let (ab, _) = nested_distance(&a, &b, 2.0).unwrap();
        let (ba, _) = nested_distance(&b, &a, 2.0).unwrap();
        assert!((ab - ba).abs() < 1e-9);
        assert!(nested_distance(&a, &a, 2.0).unwrap().0 < 1e-9);
    }
}

#[test]
fn nested_distance_obeys_the_triangle_inequality() {
    let mut rng = common::rng(14);
    for _ in 0..30 {
        let depth = rng.gen_range(1..=3);
        let trees: Vec<ScenarioTree> = (0..3).map(|_| common::random_tree(&mut rng, depth, 3, 1)).collect();
        let d = |i: usize, j: usize| nested_distance(&trees[i], &trees[j], 2.0).unwrap().0;
        assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-7);
    }
}

#[test]
fn nested_distance_dominates_the_path_wasserstein_distance() {
    let mut rng = common::rng(15);
    for _ in 0..30 {
        let (a, b) = common::random_pair(&mut rng, 2, 3, 1);
        let (la, lb): (Vec<usize>, Vec<usize>) = (a.leaves().collect(), b.leaves().collect());
        let cost = Array2::from_shape_fn((la.len(), lb.len()), |(i, j)| path_cost(&a, la[i], &b, lb[j], 2.0).unwrap());
        let pa: Vec<f64> = la.iter().map(|&n| a.prob(n)).collect();
        let pb: Vec<f64> = lb.iter().map(|&n| b.prob(n)).collect();
        let (w, _) = wasserstein_lp(&pa, &pb, cost.view()).unwrap();
        let (nd, _) = nested_distance(&a, &b, 2.0).unwrap();
        assert!(nd * nd >= w - 1e-9, "{} < {w}", nd * nd);
    }
}
