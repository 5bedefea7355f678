//! Random models and brute-force enumeration oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use tnet_infer::uai::{Factor, NetworkKind};
use tnet_infer::{build_network, Assignment, ModelSpec, RealNetwork, VarId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub max_vars: usize,
    pub max_card: usize,
    pub max_factors: usize,
    pub max_arity: usize,
    /// Probability that a table entry is exactly zero.
    pub zero_rate: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_vars: 10,
            max_card: 3,
            max_factors: 8,
            max_arity: 3,
            zero_rate: 0.0,
        }
    }
}

pub fn random_model(rng: &mut ChaCha8Rng, shape: Shape) -> ModelSpec {
    let n = rng.gen_range(1..=shape.max_vars);
    let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=shape.max_card.max(2))).collect();
    let nf = rng.gen_range(1..=shape.max_factors);
    let ids: Vec<usize> = (0..n).collect();
    let factors = (0..nf)
        .map(|_| {
            let arity = rng.gen_range(1..=shape.max_arity.min(n));
            let scope: Vec<VarId> = ids.choose_multiple(rng, arity).map(|&v| VarId(v)).collect();
            let len: usize = scope.iter().map(|v| cards[v.0]).product();
            let table = (0..len)
                .map(|_| if rng.gen_bool(shape.zero_rate) { 0.0 } else { rng.gen_range(0.05..1.0) })
                .collect();
            Factor { scope, table }
        })
        .collect();
    ModelSpec {
        kind: NetworkKind::Markov,
        cards,
        factors,
    }
}

pub fn random_evidence(rng: &mut ChaCha8Rng, m: &ModelSpec, max: usize) -> Assignment {
    let k = rng.gen_range(0..=max.min(m.cards.len()));
    let ids: Vec<usize> = (0..m.cards.len()).collect();
    ids.choose_multiple(rng, k).map(|&v| (VarId(v), rng.gen_range(0..m.cards[v]))).collect()
}

pub fn network(m: &ModelSpec) -> RealNetwork {
    build_network::<f64>(m).unwrap()
}

/// Calls `f` on every complete assignment consistent with `evidence`.
pub fn for_each_config(cards: &[usize], evidence: &Assignment, mut f: impl FnMut(&[usize])) {
    let n = cards.len();
    let mut x = vec![0; n];
    for (v, &val) in evidence {
        x[v.0] = val;
    }
    let free: Vec<usize> = (0..n).filter(|v| !evidence.contains_key(&VarId(*v))).collect();
    loop {
        f(&x);
        let mut k = free.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            let v = free[k];
            x[v] += 1;
            if x[v] < cards[v] {
                break;
            }
            x[v] = 0;
        }
    }
}

/// Unnormalized joint weight of a complete assignment.
pub fn joint(m: &ModelSpec, x: &[usize]) -> f64 {
    m.factors
        .iter()
        .map(|f| {
            let mut off = 0;
            for v in &f.scope {
                off = off * m.cards[v.0] + x[v.0];
            }
            f.table[off]
        })
        .product()
}

/// Joint weight of `evidence ∪ a`, which must cover every variable.
pub fn joint_of(m: &ModelSpec, evidence: &Assignment, a: &Assignment) -> f64 {
    let mut x = vec![usize::MAX; m.cards.len()];
    for (v, &val) in evidence.iter().chain(a) {
        x[v.0] = val;
    }
    assert!(x.iter().all(|&v| v != usize::MAX), "assignment is incomplete");
    joint(m, &x)
}

pub fn brute_pr(m: &ModelSpec, evidence: &Assignment) -> f64 {
    let mut z = 0.0;
    for_each_config(&m.cards, evidence, |x| z += joint(m, x));
    z
}

/// Conditional marginal of every free variable, in ascending id order.
pub fn brute_mar(m: &ModelSpec, evidence: &Assignment) -> Vec<(VarId, Vec<f64>)> {
    let free: Vec<usize> = (0..m.cards.len()).filter(|v| !evidence.contains_key(&VarId(*v))).collect();
    let mut acc: Vec<Vec<f64>> = free.iter().map(|&v| vec![0.0; m.cards[v]]).collect();
    let mut z = 0.0;
    for_each_config(&m.cards, evidence, |x| {
        let p = joint(m, x);
        z += p;
        for (slot, &v) in free.iter().enumerate() {
            acc[slot][x[v]] += p;
        }
    });
    free.into_iter()
        .zip(acc)
        .map(|(v, row)| (VarId(v), row.into_iter().map(|p| p / z).collect()))
        .collect()
}

/// Largest joint weight over completions of the evidence.
pub fn brute_mpe(m: &ModelSpec, evidence: &Assignment) -> f64 {
    let mut best = 0.0f64;
    for_each_config(&m.cards, evidence, |x| best = best.max(joint(m, x)));
    best
}

/// Summed weight of the query assignment `q` together with the evidence.
pub fn mmap_value(m: &ModelSpec, evidence: &Assignment, q: &Assignment) -> f64 {
    let mut fixed = evidence.clone();
    fixed.extend(q.iter().map(|(&v, &x)| (v, x)));
    brute_pr(m, &fixed)
}

/// Largest `mmap_value` over all assignments of `query`.
pub fn brute_mmap(m: &ModelSpec, evidence: &Assignment, query: &BTreeSet<VarId>) -> f64 {
    let qvars: Vec<VarId> = query.iter().copied().collect();
    let qcards: Vec<usize> = qvars.iter().map(|v| m.cards[v.0]).collect();
    let mut best = 0.0f64;
    for_each_config(&qcards, &Assignment::new(), |x| {
        let q: Assignment = qvars.iter().copied().zip(x.iter().copied()).collect();
        best = best.max(mmap_value(m, evidence, &q));
    });
    best
}

/// Random non-empty query set avoiding the evidence, or `None` if every
/// variable is observed.
pub fn random_query(rng: &mut ChaCha8Rng, m: &ModelSpec, evidence: &Assignment) -> Option<BTreeSet<VarId>> {
    let free: Vec<VarId> = (0..m.cards.len()).map(VarId).filter(|v| !evidence.contains_key(v)).collect();
    if free.is_empty() {
        return None;
    }
    let k = rng.gen_range(1..=free.len());
    Some(free.choose_multiple(rng, k).copied().collect())
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        return 0.0;
    }
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

pub const N1_UAI: &str = "BAYES\n2\n2 2\n2\n1 0\n2 0 1\n\n2\n0.6 0.4\n\n4\n0.7 0.3\n0.25 0.75\n";

pub fn n1() -> ModelSpec {
    tnet_infer::parse_model(N1_UAI.as_bytes()).unwrap()
}

/// Evidence-sliced network with a scalar output and one unity vector per
/// free variable; returns the network and each unity leaf's `(var, index)`.
pub fn with_unity_leaves(m: &ModelSpec, evidence: &Assignment) -> (RealNetwork, Vec<(VarId, usize)>) {
    let mut net = network(m).sliced(evidence).unwrap().with_output(Vec::new()).unwrap();
    let mut slots = Vec::new();
    for v in (0..m.cards.len()).map(VarId).filter(|v| !evidence.contains_key(v)) {
        let i = net.push(tnet_infer::LabeledTensor::unity(vec![v], vec![m.cards[v.0]]).unwrap()).unwrap();
        slots.push((v, i));
    }
    (net, slots)
}

/// Same network with tensor `skip` removed and `output` as the result scope.
pub fn without<S: tnet_infer::Semiring>(
    net: &tnet_infer::TensorNetwork<S>,
    skip: usize,
    output: Vec<VarId>,
) -> tnet_infer::TensorNetwork<S> {
    let rest = net.tensors().iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, t)| t.clone()).collect();
    tnet_infer::TensorNetwork::new(net.cards().to_vec(), rest, output).unwrap()
}

/// Copy of `net` with one entry of tensor `i` (in stored units) shifted by
/// `delta`.
pub fn perturbed(net: &RealNetwork, i: usize, offset: usize, delta: f64) -> RealNetwork {
    let mut tensors = net.tensors().to_vec();
    let t = &tensors[i];
    let mut data = t.data().to_vec();
    data[offset].0 += delta;
    tensors[i] = tnet_infer::LabeledTensor::new(t.vars().to_vec(), t.dims().to_vec(), data).unwrap().with_scale(t.scale());
    tnet_infer::TensorNetwork::new(net.cards().to_vec(), tensors, net.output().to_vec()).unwrap()
}

/// Five-tensor network `A{i,l} B{l} C{k,j,l} D{k,m,n} E{j,n}`
/// with output `{i,m}`, every dimension 2 and every entry one.
pub fn five_tensor_network() -> RealNetwork {
    let [i, j, k, l, m, n] = [0, 1, 2, 3, 4, 5].map(VarId);
    let scopes = [vec![i, l], vec![l], vec![k, j, l], vec![k, m, n], vec![j, n]];
    let tensors = scopes
        .into_iter()
        .map(|s| {
            let dims = vec![2; s.len()];
            tnet_infer::LabeledTensor::unity(s, dims).unwrap()
        })
        .collect();
    tnet_infer::TensorNetwork::new(vec![2; 6], tensors, vec![i, m]).unwrap()
}

/// Contraction of `net` minus leaf `i`, with output `{v}`. A variable that
/// only the removed leaf mentioned is free in the rest, so the scalar result
/// is broadcast over it.
pub fn contraction_without(net: &RealNetwork, i: usize, v: VarId) -> Vec<f64> {
    if net.tensors().iter().enumerate().any(|(j, t)| j != i && t.vars().contains(&v)) {
        return tnet_infer::contract(&without(net, i, vec![v]), tnet_infer::OrderStrategy::Greedy).unwrap().values();
    }
    let rest = tnet_infer::contract(&without(net, i, vec![]), tnet_infer::OrderStrategy::Greedy).unwrap().values()[0];
    vec![rest; net.card(v)]
}
