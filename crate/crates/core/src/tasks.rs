//! Inference task drivers: PR, MAR, MPE, MMAP and sampling.
//!
//! Every driver slices the model by the evidence first, so evidence
//! variables never appear in any output. Model variables that no factor
//! mentions are covered with unity tensors so they are summed (or maximized,
//! or sampled) like every other free variable.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::{MaxPlus, Real, Scalar, Scaled, Semiring};
use crate::engine::{backward_real, backward_tropical, forward, TracePlan, UNSET};
use crate::error::{Error, Result};
use crate::network::TensorNetwork;
use crate::order::{complexity_report, ContractionTree, OrderStrategy};
use crate::tensor::{Assignment, LabeledTensor, VarId};
use crate::uai::QuerySet;

/// Ordering and resource limits shared by all drivers.
#[derive(Clone, Copy, Debug, Default)]
pub struct TaskOptions {
    pub strategy: OrderStrategy,
    /// Refuse trees whose space complexity (log2 elements) exceeds this.
    pub space_cap: Option<f64>,
}

/// Identifier of the generator behind [`draw_samples`].
pub const SAMPLER_RNG: &str = "chacha8-stream-per-sample";

/// Conditional marginals, one entry per query set.
#[derive(Clone, Debug)]
pub struct MarginalTable<T: Scalar> {
    pub partition: Scaled<T>,
    pub entries: Vec<Marginal<T>>,
}

/// Distribution over one query set; `probs` is row-major over `vars`.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal<T> {
    pub vars: Vec<VarId>,
    pub dims: Vec<usize>,
    pub probs: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpeSolution<T> {
    pub assignment: Assignment,
    /// Natural log of the maximized probability.
    pub log_prob: T,
}

#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub samples: Vec<Assignment>,
    pub seed: u64,
    pub rng: &'static str,
}

fn order_checked<S: Semiring>(net: &TensorNetwork<S>, opts: &TaskOptions) -> Result<ContractionTree> {
    let tree = opts.strategy.build(net)?;
    if let Some(cap) = opts.space_cap {
        let space = complexity_report(net, &tree).space;
        if space > cap {
            return Err(Error::Capacity { space, cap });
        }
    }
    Ok(tree)
}

fn free_vars<S: Semiring>(net: &TensorNetwork<S>, evidence: &Assignment) -> Vec<VarId> {
    (0..net.num_vars()).map(VarId).filter(|v| !evidence.contains_key(v)).collect()
}

/// Refuses a unity tensor over `dims` before it is allocated when it alone
/// would exceed the space cap.
fn check_unity(dims: &[usize], opts: &TaskOptions) -> Result<()> {
    if let Some(cap) = opts.space_cap {
        let space: f64 = dims.iter().map(|&d| (d as f64).log2()).sum();
        if space > cap {
            return Err(Error::Capacity { space, cap });
        }
    }
    Ok(())
}

/// Evidence-sliced network with scalar output and every free variable present.
fn prepared<T: Scalar>(net: &TensorNetwork<Real<T>>, evidence: &Assignment, opts: &TaskOptions) -> Result<TensorNetwork<Real<T>>> {
    let mut sliced = net.sliced(evidence)?.with_output(Vec::new())?;
    let free = free_vars(net, evidence);
    for &v in &free {
        check_unity(&[net.card(v)], opts)?;
    }
    sliced.cover(free)?;
    Ok(sliced)
}

/// Elementwise natural log, folding the tensor's exponent in.
pub fn to_tropical<T: Scalar>(t: &LabeledTensor<Real<T>>) -> LabeledTensor<MaxPlus<T>> {
    let shift = T::from_i64(t.scale()).unwrap() * T::from_f64(std::f64::consts::LN_2).unwrap();
    t.map(|x| MaxPlus(x.0.ln() + shift))
}

/// Probability of the evidence, `p(e)`.
pub fn compute_pr<T: Scalar>(net: &TensorNetwork<Real<T>>, evidence: &Assignment, opts: &TaskOptions) -> Result<Scaled<T>> {
    let net = prepared(net, evidence, opts)?;
    if net.tensors().is_empty() {
        return Ok(Scaled::one());
    }
    let tree = order_checked(&net, opts)?;
    let (root, _) = forward(&net, &tree)?;
    Ok(root.scaled_at(0))
}

/// Conditional marginals `p(Q_i | e)` from one forward and one backward pass.
///
/// With `queries = None` every free variable is its own query set. A set of
/// several variables gets one joint unity tensor, which can make the
/// contraction much more expensive.
pub fn compute_mar<T: Scalar>(
    net: &TensorNetwork<Real<T>>,
    evidence: &Assignment,
    queries: Option<&[Vec<VarId>]>,
    opts: &TaskOptions,
) -> Result<MarginalTable<T>> {
    let sets: Vec<Vec<VarId>> = match queries {
        Some(q) => q.to_vec(),
        None => free_vars(net, evidence).into_iter().map(|v| vec![v]).collect(),
    };
    let mut aug = net.sliced(evidence)?.with_output(Vec::new())?;
    let mut slots = Vec::with_capacity(sets.len());
    for set in &sets {
        let mut vars = set.clone();
        vars.sort();
        if vars.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::shape(format!("query set {set:?} repeats a variable")));
        }
        if let Some(v) = vars.iter().find(|v| v.0 >= net.num_vars() || evidence.contains_key(v)) {
            return Err(Error::shape(format!("query variable {v} is observed or out of range")));
        }
        let dims: Vec<usize> = vars.iter().map(|&v| net.card(v)).collect();
        check_unity(&dims, opts)?;
        slots.push(aug.push(LabeledTensor::unity(vars, dims)?)?);
    }
    let free = free_vars(net, evidence);
    for &v in &free {
        check_unity(&[net.card(v)], opts)?;
    }
    aug.cover(free)?;
    if aug.tensors().is_empty() {
        return Ok(MarginalTable {
            partition: Scaled::one(),
            entries: Vec::new(),
        });
    }
    let tree = order_checked(&aug, opts)?;
    let (root, tape) = forward(&aug, &tree)?;
    let partition = root.scaled_at(0);
    if partition.mantissa().is_zero() {
        return Err(Error::Inconsistent("evidence has zero probability".into()));
    }
    let grads = backward_real(&tape)?;
    let entries = slots
        .iter()
        .map(|&i| {
            let g = &grads.leaves[i];
            Marginal {
                vars: g.vars().to_vec(),
                dims: g.dims().to_vec(),
                probs: (0..g.len()).map(|k| g.scaled_at(k).ratio(&partition)).collect(),
            }
        })
        .collect();
    Ok(MarginalTable { partition, entries })
}

/// Maximizes a tropical network after adding a log-unity vector for each of
/// `decode`, then reads each variable's value off its one-hot mask.
fn tropical_argmax<T: Scalar>(mut net: TensorNetwork<MaxPlus<T>>, decode: &[VarId], opts: &TaskOptions) -> Result<MpeSolution<T>> {
    let mut slots = Vec::with_capacity(decode.len());
    for &v in decode {
        check_unity(&[net.card(v)], opts)?;
        slots.push(net.push(LabeledTensor::unity(vec![v], vec![net.card(v)])?)?);
    }
    if net.tensors().is_empty() {
        return Ok(MpeSolution {
            assignment: Assignment::new(),
            log_prob: T::zero(),
        });
    }
    let tree = order_checked(&net, opts)?;
    let (root, tape) = forward(&net, &tree)?;
    let adj = backward_tropical(&tape).map_err(|e| match e {
        Error::Inconsistent(_) => Error::Inconsistent("zero-probability model under evidence".into()),
        other => other,
    })?;
    let assignment = decode
        .iter()
        .zip(&slots)
        .map(|(&v, &i)| {
            let hot = adj.masks.leaves[i].data().iter().position(|m| m.0).expect("one-hot mask");
            (v, hot)
        })
        .collect();
    Ok(MpeSolution {
        assignment,
        log_prob: root.data()[0].0,
    })
}

/// Most probable assignment of every free variable.
pub fn compute_mpe<T: Scalar>(net: &TensorNetwork<Real<T>>, evidence: &Assignment, opts: &TaskOptions) -> Result<MpeSolution<T>> {
    let sliced = net.sliced(evidence)?.with_output(Vec::new())?;
    let trop = sliced.convert(to_tropical);
    tropical_argmax(trop, &free_vars(net, evidence), opts)
}

/// Groups tensors so that every marginalized variable has all of its tensors
/// in one group. Variables are seeded in ascending order and each group is
/// closed under "shares a marginalized variable"; tensors touching no
/// marginalized variable become singletons.
pub fn mmap_partition<S: Semiring>(net: &TensorNetwork<S>, marginalized: &BTreeSet<VarId>) -> Vec<Vec<usize>> {
    let tensors = net.tensors();
    let mut owner: Vec<Option<usize>> = vec![None; tensors.len()];
    let mut done: BTreeSet<VarId> = BTreeSet::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &seed in marginalized {
        if done.contains(&seed) {
            continue;
        }
        let g = groups.len();
        let mut members = Vec::new();
        let mut frontier = vec![seed];
        done.insert(seed);
        while let Some(u) = frontier.pop() {
            for (i, t) in tensors.iter().enumerate() {
                if owner[i].is_none() && t.vars().contains(&u) {
                    owner[i] = Some(g);
                    members.push(i);
                    for w in t.vars() {
                        if marginalized.contains(w) && done.insert(*w) {
                            frontier.push(*w);
                        }
                    }
                }
            }
        }
        if !members.is_empty() {
            members.sort_unstable();
            groups.push(members);
        }
    }
    for (i, o) in owner.iter().enumerate() {
        if o.is_none() {
            groups.push(vec![i]);
        }
    }
    groups
}

/// Most probable assignment of `query` after summing out every other free
/// variable.
pub fn compute_mmap<T: Scalar>(
    net: &TensorNetwork<Real<T>>,
    evidence: &Assignment,
    query: &QuerySet,
    opts: &TaskOptions,
) -> Result<MpeSolution<T>> {
    if query.vars.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if let Some(v) = query.vars.iter().find(|v| v.0 >= net.num_vars() || evidence.contains_key(v)) {
        return Err(Error::shape(format!("query variable {v} is observed or out of range")));
    }
    let base = prepared(net, evidence, opts)?;
    let marginalized: BTreeSet<VarId> = free_vars(net, evidence).into_iter().filter(|v| !query.vars.contains(v)).collect();

    let mut summaries = Vec::new();
    for group in mmap_partition(&base, &marginalized) {
        let tensors: Vec<_> = group.iter().map(|&i| base.tensors()[i].clone()).collect();
        let local: BTreeSet<VarId> = tensors.iter().flat_map(|t| t.vars().iter().copied()).collect();
        let keep: Vec<VarId> = local.into_iter().filter(|v| query.vars.contains(v)).collect();
        let sub = TensorNetwork::new(net.cards().to_vec(), tensors, keep)?;
        let tree = order_checked(&sub, opts)?;
        summaries.push(forward(&sub, &tree)?.0);
    }
    let mut trop = TensorNetwork::new(net.cards().to_vec(), Vec::new(), Vec::new())?;
    for s in &summaries {
        trop.push(to_tropical(s))?;
    }
    let decode: Vec<VarId> = query.vars.iter().copied().collect();
    let sol = tropical_argmax(trop, &decode, opts)?;
    if sol.log_prob == T::neg_infinity() {
        return Err(Error::Inconsistent("evidence has zero probability".into()));
    }
    Ok(sol)
}

fn inverse_cdf<T: Scalar>(weights: &[Real<T>], u: f64) -> Result<usize> {
    let total: f64 = weights.iter().map(|w| w.0.to_f64().unwrap()).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Inconsistent("sampling reached a zero-probability branch".into()));
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        let w = w.0.to_f64().unwrap();
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Independent exact samples of the free variables given the evidence.
///
/// Each sample walks the cached contraction from the root back to the
/// leaves; at a node `C = con({A, B}, Z)` with `Z` already drawn, the
/// eliminated variables are drawn from `A·B` restricted to `Z`, normalized.
/// Sample `i` uses its own generator stream, so results do not depend on
/// thread scheduling.
pub fn draw_samples<T: Scalar>(
    net: &TensorNetwork<Real<T>>,
    evidence: &Assignment,
    n: usize,
    seed: u64,
    opts: &TaskOptions,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::shape("number of samples must be at least 1"));
    }
    let net = prepared(net, evidence, opts)?;
    let batch = |samples| SampleBatch {
        samples,
        seed,
        rng: SAMPLER_RNG,
    };
    if net.tensors().is_empty() {
        return Ok(batch(vec![Assignment::new(); n]));
    }
    let tree = order_checked(&net, opts)?;
    let (root, tape) = forward(&net, &tree)?;
    if root.data()[0].is_zero() {
        return Err(Error::Inconsistent("evidence has zero probability".into()));
    }
    let plan = TracePlan::new(&tape);
    let samples = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut config = plan.blank();
            plan.trace(&tape, &mut config, scratch, |w, _| inverse_cdf(w, rng.gen::<f64>()))?;
            Ok(config
                .iter()
                .enumerate()
                .filter(|(v, &x)| x != UNSET && !evidence.contains_key(&VarId(*v)))
                .map(|(v, &x)| (VarId(v), x))
                .collect())
        })
        .collect::<Result<Vec<Assignment>>>()?;
    Ok(batch(samples))
}
