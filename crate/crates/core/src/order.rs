//! Contraction trees: construction, validation and cost.
//!
//! A tree fixes the order of pairwise contractions. Each branch keeps exactly
//! the variables still referenced outside its subtree (or by the network
//! output); everything else is summed at that branch. Variables shared by more
//! than two tensors are therefore eliminated at the branch where the last
//! tensor mentioning them joins.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ordered_float::OrderedFloat;

use crate::algebra::Semiring;
use crate::error::{Error, Result};
use crate::network::TensorNetwork;
use crate::tensor::VarId;

/// Binary tree of pairwise contractions; leaves index the network's tensors.
#[derive(Clone, Debug, PartialEq)]
pub enum ContractionTree {
    Leaf(usize),
    Branch {
        left: Box<ContractionTree>,
        right: Box<ContractionTree>,
        out: Vec<VarId>,
    },
}

impl ContractionTree {
    pub fn branch(left: ContractionTree, right: ContractionTree, out: Vec<VarId>) -> Self {
        ContractionTree::Branch {
            left: Box::new(left),
            right: Box::new(right),
            out,
        }
    }

    /// Leaf indices in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, acc: &mut Vec<usize>) {
        match self {
            ContractionTree::Leaf(i) => acc.push(*i),
            ContractionTree::Branch { left, right, .. } => {
                left.collect_leaves(acc);
                right.collect_leaves(acc);
            }
        }
    }

    /// Number of branches.
    pub fn num_branches(&self) -> usize {
        match self {
            ContractionTree::Leaf(_) => 0,
            ContractionTree::Branch { left, right, .. } => 1 + left.num_branches() + right.num_branches(),
        }
    }
}

/// Costs of a tree, all as base-2 logarithms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexityReport {
    /// Largest tensor touched (leaf or intermediate), in elements.
    pub space: f64,
    /// Total ⊙ operations, charged per branch as the product of the
    /// cardinalities of every variable the branch involves.
    pub time: f64,
    /// Total elements read and written across all branches.
    pub rw: f64,
}

/// How to pick a contraction tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OrderStrategy {
    #[default]
    Greedy,
    /// Exact search; refuses networks with more tensors than the limit.
    Exhaustive { max_tensors: usize },
}

pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 10;

impl OrderStrategy {
    pub fn exhaustive() -> Self {
        OrderStrategy::Exhaustive {
            max_tensors: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }

    pub fn build<S: Semiring>(&self, net: &TensorNetwork<S>) -> Result<ContractionTree> {
        match *self {
            OrderStrategy::Greedy => greedy_order(net),
            OrderStrategy::Exhaustive { max_tensors } => exhaustive_order(net, max_tensors),
        }
    }
}

fn size_of(cards: &[usize], vars: &[VarId]) -> f64 {
    vars.iter().map(|v| cards[v.0] as f64).product()
}

fn sorted_union(a: &[VarId], b: &[VarId]) -> Vec<VarId> {
    let set: BTreeSet<VarId> = a.iter().chain(b).copied().collect();
    set.into_iter().collect()
}

/// Greedy pairwise merging.
///
/// At each step the pair minimizing `size(result) − size(a) − size(b)` is
/// merged, ties going to the smallest index pair (intermediates are numbered
/// after the inputs in creation order). Only pairs sharing a variable are
/// candidates; once the remaining tensors are pairwise disjoint the two
/// smallest are merged.
pub fn greedy_order<S: Semiring>(net: &TensorNetwork<S>) -> Result<ContractionTree> {
    let k = net.tensors().len();
    if k == 0 {
        return Err(Error::shape("cannot order an empty network"));
    }
    check_output_present(net)?;
    let cards = net.cards();
    let output: BTreeSet<VarId> = net.output().iter().copied().collect();

    let mut scopes: Vec<Vec<VarId>> = net
        .tensors()
        .iter()
        .map(|t| {
            let mut s = t.vars().to_vec();
            s.sort();
            s
        })
        .collect();
    let mut nodes: Vec<Option<ContractionTree>> = (0..k).map(|i| Some(ContractionTree::Leaf(i))).collect();
    let mut holders: BTreeMap<VarId, BTreeSet<usize>> = BTreeMap::new();
    for (i, s) in scopes.iter().enumerate() {
        for &v in s {
            holders.entry(v).or_default().insert(i);
        }
    }

    let out_of = |scopes: &[Vec<VarId>], holders: &BTreeMap<VarId, BTreeSet<usize>>, i: usize, j: usize| -> Vec<VarId> {
        sorted_union(&scopes[i], &scopes[j])
            .into_iter()
            .filter(|v| {
                if output.contains(v) {
                    return true;
                }
                let h = &holders[v];
                let inside = usize::from(h.contains(&i)) + usize::from(h.contains(&j));
                h.len() > inside
            })
            .collect()
    };
    let cost_of = |scopes: &[Vec<VarId>], holders: &BTreeMap<VarId, BTreeSet<usize>>, i: usize, j: usize| -> f64 {
        let out = out_of(scopes, holders, i, j);
        size_of(cards, &out) - size_of(cards, &scopes[i]) - size_of(cards, &scopes[j])
    };

    let mut queue: BTreeSet<(OrderedFloat<f64>, usize, usize)> = BTreeSet::new();
    let mut costs: HashMap<(usize, usize), f64> = HashMap::new();
    let refresh = |x: usize,
                   scopes: &[Vec<VarId>],
                   holders: &BTreeMap<VarId, BTreeSet<usize>>,
                   queue: &mut BTreeSet<(OrderedFloat<f64>, usize, usize)>,
                   costs: &mut HashMap<(usize, usize), f64>| {
        let neighbours: BTreeSet<usize> = scopes[x].iter().flat_map(|v| holders[v].iter().copied()).filter(|&y| y != x).collect();
        for y in neighbours {
            let key = (x.min(y), x.max(y));
            let c = cost_of(scopes, holders, key.0, key.1);
            if let Some(old) = costs.insert(key, c) {
                queue.remove(&(OrderedFloat(old), key.0, key.1));
            }
            queue.insert((OrderedFloat(c), key.0, key.1));
        }
    };
    for x in 0..k {
        refresh(x, &scopes, &holders, &mut queue, &mut costs);
    }

    let mut alive: BTreeSet<usize> = (0..k).collect();
    while alive.len() > 1 {
        let (i, j) = match queue.iter().next() {
            Some(&(_, i, j)) => (i, j),
            None => {
                let mut by_size: Vec<(OrderedFloat<f64>, usize)> = alive.iter().map(|&x| (OrderedFloat(size_of(cards, &scopes[x])), x)).collect();
                by_size.sort();
                let (a, b) = (by_size[0].1, by_size[1].1);
                (a.min(b), a.max(b))
            }
        };
        let out = out_of(&scopes, &holders, i, j);
        let n = scopes.len();
        // drop every queued pair touching i or j
        for x in [i, j] {
            let touched: Vec<(usize, usize)> = costs.keys().filter(|&&(a, b)| a == x || b == x).copied().collect();
            for key in touched {
                let c = costs.remove(&key).unwrap();
                queue.remove(&(OrderedFloat(c), key.0, key.1));
            }
        }
        let affected = sorted_union(&scopes[i], &scopes[j]);
        for v in &affected {
            let h = holders.get_mut(v).unwrap();
            h.remove(&i);
            h.remove(&j);
        }
        for &v in &out {
            holders.get_mut(&v).unwrap().insert(n);
        }
        let left = nodes[i].take().unwrap();
        let right = nodes[j].take().unwrap();
        nodes.push(Some(ContractionTree::branch(left, right, out.clone())));
        scopes.push(out);
        alive.remove(&i);
        alive.remove(&j);
        alive.insert(n);

        let mut dirty: BTreeSet<usize> = affected.iter().flat_map(|v| holders[v].iter().copied()).collect();
        dirty.insert(n);
        for x in dirty {
            refresh(x, &scopes, &holders, &mut queue, &mut costs);
        }
    }
    let root_idx = *alive.iter().next().unwrap();
    let mut root = nodes[root_idx].take().unwrap();
    if let ContractionTree::Branch { out, .. } = &mut root {
        *out = net.output().to_vec();
    }
    Ok(root)
}

fn check_output_present<S: Semiring>(net: &TensorNetwork<S>) -> Result<()> {
    let inside: BTreeSet<VarId> = net.tensors().iter().flat_map(|t| t.vars().iter().copied()).collect();
    if let Some(v) = net.output().iter().find(|v| !inside.contains(v)) {
        return Err(Error::shape(format!("output variable {v} is not carried by any tensor")));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Pareto {
    space: f64,
    time: f64,
    split: Option<(usize, usize, usize)>,
}

/// Exact search over all binary trees, minimizing `(space, time)`
/// lexicographically.
///
/// Dynamic programming over leaf subsets keeps the Pareto front of
/// `(space, time)` per subset, which is what makes the lexicographic optimum
/// exact rather than a per-subset greedy choice.
pub fn exhaustive_order<S: Semiring>(net: &TensorNetwork<S>, max_tensors: usize) -> Result<ContractionTree> {
    let k = net.tensors().len();
    if k == 0 {
        return Err(Error::shape("cannot order an empty network"));
    }
    if k > max_tensors || k >= usize::BITS as usize - 1 {
        return Err(Error::TooManyTensors {
            tensors: k,
            limit: max_tensors,
        });
    }
    check_output_present(net)?;
    if k == 1 {
        return Ok(ContractionTree::Leaf(0));
    }
    let cards = net.cards();
    let full = (1usize << k) - 1;
    let scopes: Vec<BTreeSet<VarId>> = net.tensors().iter().map(|t| t.vars().iter().copied().collect()).collect();
    let union_of = |mask: usize| -> BTreeSet<VarId> {
        (0..k).filter(|i| mask >> i & 1 == 1).flat_map(|i| scopes[i].iter().copied()).collect()
    };
    let output: BTreeSet<VarId> = net.output().iter().copied().collect();
    let mut outs: Vec<Vec<VarId>> = vec![Vec::new(); full + 1];
    for (mask, slot) in outs.iter_mut().enumerate().skip(1) {
        let mine = union_of(mask);
        let rest = union_of(full ^ mask);
        *slot = mine.into_iter().filter(|v| rest.contains(v) || output.contains(v)).collect();
    }

    let mut fronts: Vec<Vec<Pareto>> = vec![Vec::new(); full + 1];
    for i in 0..k {
        let leaf: Vec<VarId> = scopes[i].iter().copied().collect();
        fronts[1 << i] = vec![Pareto {
            space: size_of(cards, &leaf),
            time: 0.0,
            split: None,
        }];
    }
    let mut masks: Vec<usize> = (1..=full).filter(|m: &usize| m.count_ones() > 1).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let low = mask & mask.wrapping_neg();
        let here = size_of(cards, &outs[mask]);
        let mut front: Vec<Pareto> = Vec::new();
        let mut sub = (mask - 1) & mask;
        while sub > 0 {
            if sub & low != 0 {
                let other = mask ^ sub;
                let ops = size_of(cards, &sorted_union(&outs[sub], &outs[other]));
                for (ia, a) in fronts[sub].iter().enumerate() {
                    for (ib, b) in fronts[other].iter().enumerate() {
                        let cand = Pareto {
                            space: a.space.max(b.space).max(here),
                            time: a.time + b.time + ops,
                            split: Some((sub, ia, ib)),
                        };
                        if front.iter().any(|p| p.space <= cand.space && p.time <= cand.time) {
                            continue;
                        }
                        front.retain(|p| !(cand.space <= p.space && cand.time <= p.time));
                        front.push(cand);
                    }
                }
            }
            sub = (sub - 1) & mask;
        }
        fronts[mask] = front;
    }

    let best = fronts[full]
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (OrderedFloat(a.space), OrderedFloat(a.time)).cmp(&(OrderedFloat(b.space), OrderedFloat(b.time))))
        .map(|(i, _)| i)
        .unwrap();
    fn rebuild(mask: usize, idx: usize, fronts: &[Vec<Pareto>], outs: &[Vec<VarId>]) -> ContractionTree {
        match fronts[mask][idx].split {
            None => ContractionTree::Leaf(mask.trailing_zeros() as usize),
            Some((sub, ia, ib)) => ContractionTree::branch(
                rebuild(sub, ia, fronts, outs),
                rebuild(mask ^ sub, ib, fronts, outs),
                outs[mask].clone(),
            ),
        }
    }
    let mut root = rebuild(full, best, &fronts, &outs);
    if let ContractionTree::Branch { out, .. } = &mut root {
        *out = net.output().to_vec();
    }
    Ok(root)
}

/// Checks the structural invariants of `tree` against `net`.
pub fn validate<S: Semiring>(net: &TensorNetwork<S>, tree: &ContractionTree) -> Result<()> {
    let k = net.tensors().len();
    let mut leaves = tree.leaves();
    leaves.sort_unstable();
    if leaves != (0..k).collect::<Vec<_>>() {
        return Err(Error::shape(format!("tree leaves {leaves:?} are not a permutation of 0..{k}")));
    }
    check_output_present(net)?;
    let counts = var_counts(net);
    let output: BTreeSet<VarId> = net.output().iter().copied().collect();
    fn walk<S: Semiring>(
        net: &TensorNetwork<S>,
        node: &ContractionTree,
        counts: &BTreeMap<VarId, usize>,
        output: &BTreeSet<VarId>,
    ) -> Result<(Vec<VarId>, BTreeMap<VarId, usize>)> {
        match node {
            ContractionTree::Leaf(i) => {
                let vars = net.tensors()[*i].vars().to_vec();
                let inside = vars.iter().map(|&v| (v, 1)).collect();
                Ok((vars, inside))
            }
            ContractionTree::Branch { left, right, out } => {
                let (lv, mut li) = walk(net, left, counts, output)?;
                let (rv, ri) = walk(net, right, counts, output)?;
                for (v, c) in ri {
                    *li.entry(v).or_default() += c;
                }
                let expect: BTreeSet<VarId> = sorted_union(&lv, &rv)
                    .into_iter()
                    .filter(|v| output.contains(v) || counts[v] > li[v])
                    .collect();
                let got: BTreeSet<VarId> = out.iter().copied().collect();
                if got.len() != out.len() || got != expect {
                    return Err(Error::shape(format!("branch keeps {out:?}, expected {expect:?}")));
                }
                Ok((out.clone(), li))
            }
        }
    }
    let (root_vars, _) = walk(net, tree, &counts, &output)?;
    if matches!(tree, ContractionTree::Branch { .. }) && root_vars.as_slice() != net.output() {
        return Err(Error::shape(format!("root keeps {root_vars:?}, network output is {:?}", net.output())));
    }
    Ok(())
}

fn var_counts<S: Semiring>(net: &TensorNetwork<S>) -> BTreeMap<VarId, usize> {
    let mut counts = BTreeMap::new();
    for t in net.tensors() {
        for &v in t.vars() {
            *counts.entry(v).or_default() += 1;
        }
    }
    counts
}

/// Space, time and read-write costs of `tree`, computed from scopes alone.
pub fn complexity_report<S: Semiring>(net: &TensorNetwork<S>, tree: &ContractionTree) -> ComplexityReport {
    let cards = net.cards();
    struct Acc {
        space: f64,
        time: f64,
        rw: f64,
    }
    fn walk<S: Semiring>(net: &TensorNetwork<S>, node: &ContractionTree, acc: &mut Acc) -> Vec<VarId> {
        let cards = net.cards();
        match node {
            ContractionTree::Leaf(i) => {
                let vars = net.tensors()[*i].vars().to_vec();
                acc.space = acc.space.max(size_of(cards, &vars));
                vars
            }
            ContractionTree::Branch { left, right, out } => {
                let l = walk(net, left, acc);
                let r = walk(net, right, acc);
                let all = sorted_union(&sorted_union(&l, &r), out);
                acc.time += size_of(cards, &all);
                acc.rw += size_of(cards, &l) + size_of(cards, &r) + size_of(cards, out);
                acc.space = acc.space.max(size_of(cards, out));
                out.clone()
            }
        }
    }
    let mut acc = Acc {
        space: 0.0,
        time: 0.0,
        rw: 0.0,
    };
    let root = walk(net, tree, &mut acc);
    if let ContractionTree::Leaf(_) = tree {
        acc.time = size_of(cards, &root);
        acc.rw = size_of(cards, &root) + size_of(cards, net.output());
    }
    ComplexityReport {
        space: acc.space.log2(),
        time: acc.time.log2(),
        rw: acc.rw.log2(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Real;
    use crate::tensor::LabeledTensor;

    fn ones_net(scopes: &[&[usize]], output: &[usize], nvars: usize) -> TensorNetwork<Real<f64>> {
        let tensors = scopes
            .iter()
            .map(|s| LabeledTensor::unity(s.iter().map(|&i| VarId(i)).collect(), vec![2; s.len()]).unwrap())
            .collect();
        TensorNetwork::new(vec![2; nvars], tensors, output.iter().map(|&i| VarId(i)).collect()).unwrap()
    }

    #[test]
    fn two_tensors_single_branch() {
        let net = ones_net(&[&[0, 1], &[1, 2]], &[], 3);
        let tree = greedy_order(&net).unwrap();
        assert_eq!(tree, ContractionTree::branch(ContractionTree::Leaf(0), ContractionTree::Leaf(1), vec![]));
        assert_eq!(exhaustive_order(&net, 10).unwrap().num_branches(), 1);
    }

    #[test]
    fn matrix_chain_costs() {
        let net = ones_net(&[&[0, 1], &[1, 2], &[2, 3]], &[0, 3], 4);
        let tree = greedy_order(&net).unwrap();
        validate(&net, &tree).unwrap();
        let r = complexity_report(&net, &tree);
        assert_eq!(r.space, 2.0);
        assert_eq!(r.time, 4.0);
        assert_eq!(r.rw, 24f64.log2());
    }

    #[test]
    fn leaf_only_and_scalar_reports() {
        let net = ones_net(&[&[0, 1, 2]], &[], 3);
        let r = complexity_report(&net, &ContractionTree::Leaf(0));
        assert_eq!(r.space, 3.0);
        assert!(r.space <= r.time);
        let scalars = TensorNetwork::new(
            vec![],
            vec![LabeledTensor::scalar(Real(2.0f64)), LabeledTensor::scalar(Real(3.0))],
            vec![],
        )
        .unwrap();
        let tree = greedy_order(&scalars).unwrap();
        assert_eq!(complexity_report(&scalars, &tree).space, 0.0);
        assert_eq!(exhaustive_order(&scalars, 10).unwrap().num_branches(), 1);
    }

    #[test]
    fn exhaustive_refuses_large() {
        let scopes: Vec<Vec<usize>> = (0..12).map(|i| vec![i, i + 1]).collect();
        let refs: Vec<&[usize]> = scopes.iter().map(|s| s.as_slice()).collect();
        let net = ones_net(&refs, &[], 13);
        assert!(matches!(exhaustive_order(&net, 10), Err(Error::TooManyTensors { tensors: 12, limit: 10 })));
        assert_eq!(exhaustive_order(&ones_net(&[&[0]], &[], 1), 10).unwrap(), ContractionTree::Leaf(0));
    }

    #[test]
    fn validator_catches_bad_trees() {
        let net = ones_net(&[&[0, 1], &[1, 2]], &[], 3);
        let wrong_out = ContractionTree::branch(ContractionTree::Leaf(0), ContractionTree::Leaf(1), vec![VarId(1)]);
        assert!(validate(&net, &wrong_out).is_err());
        let dup = ContractionTree::branch(ContractionTree::Leaf(0), ContractionTree::Leaf(0), vec![]);
        assert!(validate(&net, &dup).is_err());
    }

    #[test]
    fn disconnected_components_merge() {
        let net = ones_net(&[&[0], &[1, 2], &[3]], &[1], 4);
        let tree = greedy_order(&net).unwrap();
        validate(&net, &tree).unwrap();
        assert_eq!(tree.leaves().len(), 3);
    }
}
