mod common;

use common::*;
use rand::Rng;
use tnet_infer::tasks::to_tropical;
use tnet_infer::{
    backward_real, backward_tropical, complexity_report, contract, exhaustive_order, forward, greedy_order, validate, Assignment,
    ContractionTree, OrderStrategy, VarId,
};

#[test]
fn five_tensor_example() {
    let net = five_tensor_network();
    let root = contract(&net, OrderStrategy::Greedy).unwrap();
    assert_eq!(root.vars(), &[VarId(0), VarId(4)]);
    assert_eq!(root.values(), vec![16.0; 4]);

    let g = greedy_order(&net).unwrap();
    let x = exhaustive_order(&net, 10).unwrap();
    validate(&net, &g).unwrap();
    validate(&net, &x).unwrap();
    let (gs, xs) = (complexity_report(&net, &g).space, complexity_report(&net, &x).space);
    assert!(xs <= gs);
    assert!(gs <= xs + 2.0);
    assert!(gs <= 4.0);
}

#[test]
fn trivial_trees() {
    let net = five_tensor_network();
    let one = without(&without(&without(&without(&net, 4, vec![]), 3, vec![]), 2, vec![]), 1, vec![]);
    assert_eq!(exhaustive_order(&one, 10).unwrap(), ContractionTree::Leaf(0));
    let two = without(&without(&without(&net, 4, vec![]), 3, vec![]), 2, vec![]);
    let tree = exhaustive_order(&two, 10).unwrap();
    assert_eq!(tree, ContractionTree::branch(ContractionTree::Leaf(0), ContractionTree::Leaf(1), vec![]));
}

#[test]
fn unity_gradients_are_contractions_without_the_leaf() {
    for seed in 0..30 {
        let mut r = rng(500 + seed);
        let m = random_model(&mut r, Shape::default());
        let e = random_evidence(&mut r, &m, 2);
        let (net, slots) = with_unity_leaves(&m, &e);
        let tree = greedy_order(&net).unwrap();
        let (_, tape) = forward(&net, &tree).unwrap();
        let adj = backward_real(&tape).unwrap();
        assert!(adj.ops <= 2 * tape.forward_ops());
        for &(v, i) in &slots {
            let got = adj.leaves[i].values();
            let want = contraction_without(&net, i, v);
            for x in 0..got.len() {
                assert!(rel_err(got[x], want[x]) < 1e-10, "seed {seed} var {v}");
                let mut ext = e.clone();
                ext.insert(v, x);
                assert!(rel_err(got[x], brute_pr(&m, &ext)) < 1e-10);
            }
        }
    }
}

#[test]
fn factor_gradients_match_finite_differences() {
    let eps = 1e-5;
    for seed in 0..10 {
        let mut r = rng(600 + seed);
        let m = random_model(&mut r, Shape { max_vars: 6, ..Shape::default() });
        let net = network(&m);
        let tree = greedy_order(&net).unwrap();
        let (_, tape) = forward(&net, &tree).unwrap();
        let adj = backward_real(&tape).unwrap();
        for _ in 0..20 {
            let i = r.gen_range(0..net.tensors().len());
            let off = r.gen_range(0..net.tensors()[i].len());
            // The entry is stored as x·2^s, so a step of eps/2^s in storage
            // is a step of eps in value.
            let step = eps * (-(net.tensors()[i].scale() as f64)).exp2();
            let up = contract(&perturbed(&net, i, off, step), OrderStrategy::Greedy).unwrap().scaled_at(0).value();
            let down = contract(&perturbed(&net, i, off, -step), OrderStrategy::Greedy).unwrap().scaled_at(0).value();
            let fd = (up - down) / (2.0 * eps);
            let g = adj.leaves[i].values()[off];
            assert!(rel_err(fd, g) < 1e-6, "seed {seed}: {fd} vs {g}");
        }
    }
}

#[test]
fn tropical_masks_are_one_hot_and_reproduce_the_root() {
    for seed in 0..30 {
        let mut r = rng(700 + seed);
        let m = random_model(&mut r, Shape::default());
        let e = random_evidence(&mut r, &m, 2);
        let (net, _) = with_unity_leaves(&m, &e);
        let trop = net.convert(to_tropical);
        let tree = greedy_order(&trop).unwrap();
        let (root, tape) = forward(&trop, &tree).unwrap();
        let adj = backward_tropical(&tape).unwrap();
        for mask in &adj.masks.leaves {
            assert_eq!(mask.data().iter().filter(|b| b.0).count(), 1);
        }
        assert_eq!(tape.evaluate_path(&adj.config).unwrap(), root.data()[0]);
        let free: Assignment = adj.config.iter().filter(|(v, _)| !e.contains_key(v)).map(|(&v, &x)| (v, x)).collect();
        assert!((joint_of(&m, &e, &free).ln() - root.data()[0].0).abs() < 1e-10);
    }
}
