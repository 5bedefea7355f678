//! Forward contraction with a tape of intermediates, and the two reverse
//! passes over it: real gradients and tropical Boolean masks.

use std::borrow::Cow;

use crate::algebra::{BoolMask, MaxPlus, Real, Scalar, Semiring};
use crate::error::{Error, Result};
use crate::network::TensorNetwork;
use crate::order::{validate, ContractionTree, OrderStrategy};
use crate::tensor::{contract_into, for_each_index, strides_in, Assignment, LabeledTensor, VarId};

/// Input of a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operand {
    Leaf(usize),
    Node(usize),
    /// Scalar multiplicative identity; used when a lone leaf must be reduced
    /// onto the network output.
    One,
}

/// One pairwise contraction and its cached result.
#[derive(Clone, Debug)]
pub struct TapeNode<S> {
    pub left: Operand,
    pub right: Operand,
    pub output: LabeledTensor<S>,
}

/// Record of a forward pass. Nodes are stored in evaluation order, so the
/// last node (if any) produced the root.
#[derive(Clone, Debug)]
pub struct Tape<'a, S> {
    net: &'a TensorNetwork<S>,
    nodes: Vec<TapeNode<S>>,
    root_leaf: Option<usize>,
    forward_ops: u128,
}

/// Per-leaf adjoints; `leaves[i]` has the scope of tensor `i`.
#[derive(Clone, Debug)]
pub struct AdjointSet<S> {
    pub leaves: Vec<LabeledTensor<S>>,
    /// Multiply count of the backward pass under the same charging scheme as
    /// the forward pass.
    pub ops: u128,
}

impl<'a, S: Semiring> Tape<'a, S> {
    pub fn network(&self) -> &'a TensorNetwork<S> {
        self.net
    }

    pub fn nodes(&self) -> &[TapeNode<S>] {
        &self.nodes
    }

    pub fn forward_ops(&self) -> u128 {
        self.forward_ops
    }

    pub fn root(&self) -> &LabeledTensor<S> {
        match (self.nodes.last(), self.root_leaf) {
            (Some(n), _) => &n.output,
            (None, Some(i)) => &self.net.tensors()[i],
            (None, None) => unreachable!("tape without root"),
        }
    }

    pub fn operand(&self, op: Operand) -> Cow<'_, LabeledTensor<S>> {
        match op {
            Operand::Leaf(i) => Cow::Borrowed(&self.net.tensors()[i]),
            Operand::Node(j) => Cow::Borrowed(&self.nodes[j].output),
            Operand::One => Cow::Owned(LabeledTensor::scalar(S::one())),
        }
    }

    /// Re-evaluates the root for one complete configuration by combining the
    /// selected leaf entries along the tree, in the forward association order.
    pub fn evaluate_path(&self, config: &Assignment) -> Option<S> {
        let leaf = |i: usize| {
            let t = &self.net.tensors()[i];
            t.offset_of(config).map(|o| t.data()[o])
        };
        if self.nodes.is_empty() {
            return self.root_leaf.and_then(leaf);
        }
        let mut vals: Vec<S> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let get = |op: Operand, vals: &[S]| match op {
                Operand::Leaf(i) => leaf(i),
                Operand::Node(j) => Some(vals[j]),
                Operand::One => Some(S::one()),
            };
            let v = get(n.left, &vals)?.mul(get(n.right, &vals)?);
            vals.push(v);
        }
        vals.last().copied()
    }
}

/// Contracts `net` along `tree`, caching every intermediate.
pub fn forward<'a, S: Semiring>(net: &'a TensorNetwork<S>, tree: &ContractionTree) -> Result<(LabeledTensor<S>, Tape<'a, S>)> {
    validate(net, tree)?;
    let mut tape = Tape {
        net,
        nodes: Vec::with_capacity(tree.num_branches() + 1),
        root_leaf: None,
        forward_ops: 0,
    };
    fn eval<S: Semiring>(tape: &mut Tape<'_, S>, node: &ContractionTree) -> Result<Operand> {
        match node {
            ContractionTree::Leaf(i) => Ok(Operand::Leaf(*i)),
            ContractionTree::Branch { left, right, out } => {
                let l = eval(tape, left)?;
                let r = eval(tape, right)?;
                push_node(tape, l, r, out)
            }
        }
    }
    match tree {
        ContractionTree::Leaf(i) => {
            if net.tensors()[*i].vars() == net.output() {
                tape.root_leaf = Some(*i);
            } else {
                push_node(&mut tape, Operand::Leaf(*i), Operand::One, net.output())?;
            }
        }
        branch => {
            eval(&mut tape, branch)?;
        }
    }
    Ok((tape.root().clone(), tape))
}

fn push_node<S: Semiring>(tape: &mut Tape<'_, S>, l: Operand, r: Operand, out: &[VarId]) -> Result<Operand> {
    let dims: Vec<usize> = out.iter().map(|&v| tape.net.card(v)).collect();
    let (output, ops) = {
        let a = tape.operand(l);
        let b = tape.operand(r);
        contract_into(&a, &b, out, &dims)?
    };
    tape.forward_ops += ops;
    tape.nodes.push(TapeNode {
        left: l,
        right: r,
        output,
    });
    Ok(Operand::Node(tape.nodes.len() - 1))
}

/// Contracts `net` along `tree`.
pub fn contract_network<S: Semiring>(net: &TensorNetwork<S>, tree: &ContractionTree) -> Result<LabeledTensor<S>> {
    forward(net, tree).map(|(root, _)| root)
}

/// Orders and contracts `net`; an empty network contracts to the scalar one.
pub fn contract<S: Semiring>(net: &TensorNetwork<S>, strategy: OrderStrategy) -> Result<LabeledTensor<S>> {
    if net.tensors().is_empty() {
        if !net.output().is_empty() {
            return Err(Error::shape("empty network cannot carry output variables"));
        }
        return Ok(LabeledTensor::scalar(S::one()));
    }
    contract_network(net, &strategy.build(net)?)
}

fn require_scalar_root<S: Semiring>(tape: &Tape<'_, S>) -> Result<()> {
    if tape.root().rank() != 0 {
        return Err(Error::shape(format!("backward pass needs a scalar root, got scope {:?}", tape.root().vars())));
    }
    Ok(())
}

/// Reverse-mode gradient of the scalar root with respect to every leaf.
///
/// For a node `C = con({A, B}, V_c)` the adjoints are
/// `Ā = con({C̄, B}, V_a)` and `B̄ = con({A, C̄}, V_b)`; each costs the same
/// multiply count as the forward contraction.
pub fn backward_real<'a, T: Scalar>(tape: &Tape<'a, Real<T>>) -> Result<AdjointSet<Real<T>>> {
    require_scalar_root(tape)?;
    let net = tape.net;
    let mut leaves: Vec<Option<LabeledTensor<Real<T>>>> = vec![None; net.tensors().len()];
    let mut ops = 0u128;
    if let Some(i) = tape.root_leaf {
        leaves[i] = Some(LabeledTensor::scalar(Real(T::one())));
    }
    let mut node_adj: Vec<Option<LabeledTensor<Real<T>>>> = vec![None; tape.nodes.len()];
    if let Some(last) = node_adj.last_mut() {
        *last = Some(LabeledTensor::scalar(Real(T::one())));
    }
    for j in (0..tape.nodes.len()).rev() {
        let cbar = node_adj[j].take().expect("node adjoint computed by its parent");
        let node = &tape.nodes[j];
        for (target, other) in [(node.left, node.right), (node.right, node.left)] {
            if target == Operand::One {
                continue;
            }
            let t = tape.operand(target);
            let dims: Vec<usize> = t.vars().iter().map(|&v| net.card(v)).collect();
            let (adj, cost) = contract_into(&cbar, &tape.operand(other), t.vars(), &dims)?;
            ops += cost;
            match target {
                Operand::Leaf(i) => leaves[i] = Some(adj),
                Operand::Node(k) => node_adj[k] = Some(adj),
                Operand::One => {}
            }
        }
    }
    let leaves = leaves
        .into_iter()
        .zip(net.tensors())
        .map(|(adj, t)| match adj {
            Some(a) => a,
            // only reachable for leaves absent from the tree, which validation forbids
            None => LabeledTensor::new(t.vars().to_vec(), t.dims().to_vec(), vec![Real(T::zero()); t.len()]).unwrap(),
        })
        .collect();
    Ok(AdjointSet { leaves, ops })
}

/// Precomputed index arithmetic for walking a tape from the root back to
/// the leaves, fixing the eliminated variables of each node in turn.
#[derive(Clone, Debug)]
pub struct TracePlan {
    steps: Vec<TraceStep>,
    num_vars: usize,
}

#[derive(Clone, Debug)]
struct TraceStep {
    node: usize,
    kept: Vec<VarId>,
    eliminated: Vec<VarId>,
    elim_dims: Vec<usize>,
    c_kept: Vec<usize>,
    a_kept: Vec<usize>,
    b_kept: Vec<usize>,
    a_elim: Vec<usize>,
    b_elim: Vec<usize>,
}

/// Marker for "not yet fixed" in dense configurations.
pub const UNSET: usize = usize::MAX;

impl TracePlan {
    pub fn new<S: Semiring>(tape: &Tape<'_, S>) -> Self {
        let mut steps = Vec::with_capacity(tape.nodes.len());
        for (j, node) in tape.nodes.iter().enumerate().rev() {
            let a = tape.operand(node.left);
            let b = tape.operand(node.right);
            let kept = node.output.vars().to_vec();
            let mut eliminated: Vec<VarId> = a.vars().iter().chain(b.vars()).copied().filter(|v| !kept.contains(v)).collect();
            eliminated.sort();
            eliminated.dedup();
            let elim_dims = eliminated.iter().map(|&v| tape.net.card(v)).collect();
            steps.push(TraceStep {
                node: j,
                c_kept: strides_in(node.output.vars(), node.output.dims(), &kept),
                a_kept: strides_in(a.vars(), a.dims(), &kept),
                b_kept: strides_in(b.vars(), b.dims(), &kept),
                a_elim: strides_in(a.vars(), a.dims(), &eliminated),
                b_elim: strides_in(b.vars(), b.dims(), &eliminated),
                kept,
                eliminated,
                elim_dims,
            });
        }
        TracePlan {
            steps,
            num_vars: tape.net.num_vars(),
        }
    }

    /// Dense configuration buffer with every variable unset.
    pub fn blank(&self) -> Vec<usize> {
        vec![UNSET; self.num_vars]
    }

    /// Walks the tape root-first. At each node the kept variables are already
    /// fixed in `config`; `choose(candidates, c)` receives `A ⊙ B` for every
    /// assignment of the eliminated variables in row-major order (ascending
    /// variable id) plus the cached output entry `c`, and returns the index to
    /// fix.
    pub fn trace<S: Semiring>(
        &self,
        tape: &Tape<'_, S>,
        config: &mut [usize],
        scratch: &mut Vec<S>,
        mut choose: impl FnMut(&[S], S) -> Result<usize>,
    ) -> Result<()> {
        for step in &self.steps {
            let node = &tape.nodes[step.node];
            let a = tape.operand(node.left);
            let b = tape.operand(node.right);
            let (mut ca, mut cb, mut cc) = (0, 0, 0);
            for (i, v) in step.kept.iter().enumerate() {
                let x = config[v.0];
                debug_assert_ne!(x, UNSET, "kept variable {v} not fixed by a parent");
                ca += x * step.a_kept[i];
                cb += x * step.b_kept[i];
                cc += x * step.c_kept[i];
            }
            scratch.clear();
            let (ad, bd) = (a.data(), b.data());
            for_each_index(&step.elim_dims, [&step.a_elim, &step.b_elim], |[oa, ob]| {
                scratch.push(ad[ca + oa].mul(bd[cb + ob]));
            });
            let mut pick = choose(scratch, node.output.data()[cc])?;
            for (v, d) in step.eliminated.iter().zip(&step.elim_dims).rev() {
                config[v.0] = pick % d;
                pick /= d;
            }
        }
        Ok(())
    }
}

/// Result of the tropical reverse pass.
#[derive(Clone, Debug)]
pub struct TropicalAdjoints {
    /// One-hot mask per leaf.
    pub masks: AdjointSet<BoolMask>,
    /// The maximizing configuration the masks encode, over every variable the
    /// network contracts.
    pub config: Assignment,
}

/// Boolean-mask backpropagation through a tropical tape.
///
/// At each node with a one-hot output mask, the child masks mark the entries
/// of `A` and `B` whose product reproduces the selected output entry. Ties
/// are thinned at every node to the first maximizing assignment of the
/// eliminated variables in row-major order, so each child mask is one-hot
/// and all masks describe one global configuration.
pub fn backward_tropical<'a, T: Scalar>(tape: &Tape<'a, MaxPlus<T>>) -> Result<TropicalAdjoints> {
    require_scalar_root(tape)?;
    if tape.root().data()[0].is_zero() {
        return Err(Error::Inconsistent("no configuration has nonzero probability".into()));
    }
    let plan = TracePlan::new(tape);
    let mut dense = plan.blank();
    let mut scratch = Vec::new();
    plan.trace(tape, &mut dense, &mut scratch, |cands, c| {
        cands
            .iter()
            .position(|&x| x == c)
            .ok_or_else(|| Error::shape("tropical backward found no entry attaining the cached maximum"))
    })?;
    let config: Assignment = dense
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != UNSET)
        .map(|(v, &x)| (VarId(v), x))
        .collect();
    let leaves = tape
        .net
        .tensors()
        .iter()
        .map(|t| {
            let mut data = vec![BoolMask(false); t.len()];
            let at = t.offset_of(&config).expect("every leaf variable is fixed by the trace");
            data[at] = BoolMask(true);
            LabeledTensor::new(t.vars().to_vec(), t.dims().to_vec(), data).unwrap()
        })
        .collect();
    Ok(TropicalAdjoints {
        masks: AdjointSet { leaves, ops: 0 },
        config,
    })
}

/// Unthinned tropical backward rule for one pairwise contraction
/// `C = tcon({A, B}, V_c)` under output mask `C̄`:
/// `Ā = δ(A, tcon({C⁻¹ ⊙ C̄, B}, V_a)⁻¹)`, and symmetrically for `B̄`.
///
/// The δ test is evaluated in the equivalent form `A ⊙ B = C` over the
/// masked outputs, which avoids cancellation in `C − B`.
pub fn tropical_pair_masks<T: Scalar>(
    a: &LabeledTensor<MaxPlus<T>>,
    b: &LabeledTensor<MaxPlus<T>>,
    c: &LabeledTensor<MaxPlus<T>>,
    cbar: &LabeledTensor<BoolMask>,
) -> Result<(LabeledTensor<BoolMask>, LabeledTensor<BoolMask>)> {
    if cbar.vars() != c.vars() {
        return Err(Error::shape("output mask scope differs from output scope"));
    }
    let mut all: Vec<VarId> = a.vars().iter().chain(b.vars()).chain(c.vars()).copied().collect();
    all.sort();
    all.dedup();
    let dims: Vec<usize> = all
        .iter()
        .map(|&v| a.dim_of(v).or_else(|| b.dim_of(v)).or_else(|| c.dim_of(v)).unwrap())
        .collect();
    let (sa, sb, sc) = (strides_in(a.vars(), a.dims(), &all), strides_in(b.vars(), b.dims(), &all), strides_in(c.vars(), c.dims(), &all));
    let mut am = vec![BoolMask(false); a.len()];
    let mut bm = vec![BoolMask(false); b.len()];
    for_each_index(&dims, [&sa, &sb, &sc], |[oa, ob, oc]| {
        if cbar.data()[oc].0 && a.data()[oa].mul(b.data()[ob]) == c.data()[oc] {
            am[oa] = BoolMask(true);
            bm[ob] = BoolMask(true);
        }
    });
    Ok((
        LabeledTensor::new(a.vars().to_vec(), a.dims().to_vec(), am)?,
        LabeledTensor::new(b.vars().to_vec(), b.dims().to_vec(), bm)?,
    ))
}
