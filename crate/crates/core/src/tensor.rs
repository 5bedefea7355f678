//! Labeled dense tensors and pairwise contraction.

use std::collections::BTreeMap;
use std::fmt;

use crate::algebra::{ldexp, Real, Scalar, Scaled, Semiring};
use crate::error::{Error, Result};

/// Index of a variable in the model's variable table.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Fixed values for a set of variables.
pub type Assignment = BTreeMap<VarId, usize>;

/// Dense row-major tensor whose axes are named by variables.
///
/// The first entry of `vars` is the slowest-varying axis. `scale` is a shared
/// base-2 exponent: the represented entries are `data[i] · 2^scale`. Only the
/// real algebra ever sets it to a nonzero value.
#[derive(Clone, PartialEq)]
pub struct LabeledTensor<S> {
    vars: Vec<VarId>,
    dims: Vec<usize>,
    data: Vec<S>,
    scale: i64,
}

impl<S: fmt::Debug> fmt::Debug for LabeledTensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabeledTensor")
            .field("vars", &self.vars)
            .field("dims", &self.dims)
            .field("scale", &self.scale)
            .field("data", &self.data)
            .finish()
    }
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

/// Strides of each variable of `order` inside a tensor laid out as
/// `vars`/`dims`; zero for variables the tensor does not carry.
pub(crate) fn strides_in(vars: &[VarId], dims: &[usize], order: &[VarId]) -> Vec<usize> {
    let own = row_major_strides(dims);
    order
        .iter()
        .map(|v| vars.iter().position(|x| x == v).map_or(0, |p| own[p]))
        .collect()
}

/// Calls `f(counter, offsets)` for every multi-index over `dims` in row-major
/// order, where `offsets[j]` is the dot product of the index with `strides[j]`.
pub(crate) fn for_each_index<const N: usize>(dims: &[usize], strides: [&[usize]; N], mut f: impl FnMut([usize; N])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    let mut off = [0usize; N];
    loop {
        f(off);
        let mut axis = dims.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            for j in 0..N {
                off[j] += strides[j][axis];
            }
            if idx[axis] < dims[axis] {
                break;
            }
            for j in 0..N {
                off[j] -= strides[j][axis] * dims[axis];
            }
            idx[axis] = 0;
        }
    }
}

/// Reads `src` into a fresh row-major buffer over `keep`, ⊕-reducing over
/// `sum`. Variables of `keep` missing from the source are broadcast.
fn gather_reduce<S: Semiring>(src: &[S], vars: &[VarId], dims: &[usize], keep: &[(VarId, usize)], sum: &[(VarId, usize)]) -> Vec<S> {
    let keep_vars: Vec<VarId> = keep.iter().map(|p| p.0).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|p| p.1).collect();
    let sum_vars: Vec<VarId> = sum.iter().map(|p| p.0).collect();
    let sum_dims: Vec<usize> = sum.iter().map(|p| p.1).collect();
    let ks = strides_in(vars, dims, &keep_vars);
    let ss = strides_in(vars, dims, &sum_vars);
    let mut out = Vec::with_capacity(keep_dims.iter().product());
    for_each_index(&keep_dims, [&ks], |[base]| {
        if sum.is_empty() {
            out.push(src[base]);
        } else {
            let mut acc = S::zero();
            for_each_index(&sum_dims, [&ss], |[o]| acc = acc.add(src[base + o]));
            out.push(acc);
        }
    });
    out
}

impl<S: Semiring> LabeledTensor<S> {
    pub fn new(vars: Vec<VarId>, dims: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if vars.len() != dims.len() {
            return Err(Error::shape(format!("{} variables but {} dimensions", vars.len(), dims.len())));
        }
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(Error::shape(format!("variable {v} repeated in tensor scope")));
            }
        }
        if let Some(p) = dims.iter().position(|&d| d == 0) {
            return Err(Error::shape(format!("variable {} has zero cardinality", vars[p])));
        }
        let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if len != Some(data.len()) {
            return Err(Error::shape(format!(
                "table has {} entries but scope {:?} needs {}",
                data.len(),
                dims,
                len.map_or("too many".to_string(), |l| l.to_string())
            )));
        }
        Ok(LabeledTensor {
            vars,
            dims,
            data,
            scale: 0,
        })
    }

    /// Rank-0 tensor.
    pub fn scalar(x: S) -> Self {
        LabeledTensor {
            vars: Vec::new(),
            dims: Vec::new(),
            data: vec![x],
            scale: 0,
        }
    }

    /// Tensor filled with the multiplicative identity.
    pub fn unity(vars: Vec<VarId>, dims: Vec<usize>) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(vars, dims, vec![S::one(); n])
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn scale(&self) -> i64 {
        self.scale
    }

    pub fn rank(&self) -> usize {
        self.vars.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn with_scale(mut self, scale: i64) -> Self {
        self.scale = scale;
        self
    }

    pub fn dim_of(&self, v: VarId) -> Option<usize> {
        self.vars.iter().position(|&x| x == v).map(|p| self.dims[p])
    }

    /// Entry at a multi-index aligned with `vars`.
    pub fn get(&self, index: &[usize]) -> S {
        let strides = row_major_strides(&self.dims);
        self.data[index.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>()]
    }

    /// Flat offset of the entry selected by `a`; every scope variable must be assigned.
    pub fn offset_of(&self, a: &Assignment) -> Option<usize> {
        let strides = row_major_strides(&self.dims);
        self.vars.iter().zip(&strides).try_fold(0, |acc, (v, s)| a.get(v).map(|x| acc + x * s))
    }

    pub fn map<U: Semiring>(&self, f: impl Fn(S) -> U) -> LabeledTensor<U> {
        LabeledTensor {
            vars: self.vars.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            scale: 0,
        }
    }

    /// Fixes the assigned variables, dropping their axes. Assignments to
    /// variables outside the scope are ignored.
    pub fn slice(&self, a: &Assignment) -> Result<Self> {
        let mut keep = Vec::new();
        let mut base = 0;
        let strides = row_major_strides(&self.dims);
        for (i, &v) in self.vars.iter().enumerate() {
            match a.get(&v) {
                Some(&x) if x >= self.dims[i] => {
                    return Err(Error::Domain {
                        var: v,
                        value: x,
                        card: self.dims[i],
                    })
                }
                Some(&x) => base += x * strides[i],
                None => keep.push(i),
            }
        }
        if keep.len() == self.vars.len() {
            return Ok(self.clone());
        }
        let kdims: Vec<usize> = keep.iter().map(|&i| self.dims[i]).collect();
        let kstrides: Vec<usize> = keep.iter().map(|&i| strides[i]).collect();
        let mut data = Vec::with_capacity(kdims.iter().product());
        for_each_index(&kdims, [&kstrides], |[o]| data.push(self.data[base + o]));
        Ok(LabeledTensor {
            vars: keep.iter().map(|&i| self.vars[i]).collect(),
            dims: kdims,
            data,
            scale: self.scale,
        })
    }

    /// Same tensor with axes reordered to `order` (a permutation of `vars`).
    pub fn permuted(&self, order: &[VarId]) -> Result<Self> {
        let mut sorted_a = self.vars.clone();
        let mut sorted_b = order.to_vec();
        sorted_a.sort();
        sorted_b.sort();
        if sorted_a != sorted_b {
            return Err(Error::shape(format!("{:?} is not a permutation of {:?}", order, self.vars)));
        }
        let keep: Vec<(VarId, usize)> = order.iter().map(|&v| (v, self.dim_of(v).unwrap())).collect();
        Ok(LabeledTensor {
            vars: order.to_vec(),
            dims: keep.iter().map(|p| p.1).collect(),
            data: gather_reduce(&self.data, &self.vars, &self.dims, &keep, &[]),
            scale: self.scale,
        })
    }
}

impl<T: Scalar> LabeledTensor<Real<T>> {
    /// Builds a real tensor from plain floats.
    pub fn from_values(vars: Vec<VarId>, dims: Vec<usize>, values: Vec<T>) -> Result<Self> {
        Self::new(vars, dims, values.into_iter().map(Real).collect())
    }

    /// Entries with the shared exponent applied.
    pub fn values(&self) -> Vec<T> {
        self.data.iter().map(|x| ldexp(x.0, self.scale)).collect()
    }

    /// Same values with the buffer rescaled so its max-abs entry lies in
    /// `[0.5, 1)`.
    pub fn normalized(mut self) -> Self {
        self.scale += Real::normalize(&mut self.data);
        self
    }

    /// Entry at a flat offset, with its exponent kept separate.
    pub fn scaled_at(&self, offset: usize) -> Scaled<T> {
        Scaled::new(self.data[offset].0, self.scale)
    }
}

/// Contracts `a` and `b` onto `out_vars`, ⊕-summing every other variable.
pub fn contract_pair<S: Semiring>(a: &LabeledTensor<S>, b: &LabeledTensor<S>, out_vars: &[VarId]) -> Result<LabeledTensor<S>> {
    let mut dims = Vec::with_capacity(out_vars.len());
    for &v in out_vars {
        match a.dim_of(v).or_else(|| b.dim_of(v)) {
            Some(d) => dims.push(d),
            None => return Err(Error::shape(format!("output variable {v} appears in neither operand"))),
        }
    }
    contract_into(a, b, out_vars, &dims).map(|(t, _)| t)
}

/// Pairwise contraction kernel.
///
/// Output variables absent from both operands are broadcast, which the
/// backward rule needs. Returns the result and its multiply count, charged as
/// the product of the cardinalities of every variable involved.
pub(crate) fn contract_into<S: Semiring>(
    a: &LabeledTensor<S>,
    b: &LabeledTensor<S>,
    out_vars: &[VarId],
    out_dims: &[usize],
) -> Result<(LabeledTensor<S>, u128)> {
    let mut card: BTreeMap<VarId, usize> = BTreeMap::new();
    let operands = [(a.vars(), a.dims()), (b.vars(), b.dims()), (out_vars, out_dims)];
    for (vars, dims) in operands {
        for (&v, &d) in vars.iter().zip(dims) {
            if let Some(&prev) = card.get(&v) {
                if prev != d {
                    return Err(Error::shape(format!("variable {v} has cardinality {prev} in one operand and {d} in another")));
                }
            } else {
                card.insert(v, d);
            }
        }
    }
    for (i, v) in out_vars.iter().enumerate() {
        if out_vars[..i].contains(v) {
            return Err(Error::shape(format!("variable {v} repeated in output")));
        }
    }
    let ops = card.values().fold(1u128, |acc, &d| acc.saturating_mul(d as u128));

    let in_a = |v: &VarId| a.vars.contains(v);
    let in_b = |v: &VarId| b.vars.contains(v);
    let in_out = |v: &VarId| out_vars.contains(v);
    let pick = |pred: &dyn Fn(&VarId) -> bool| -> Vec<(VarId, usize)> {
        card.iter().filter(|(v, _)| pred(v)).map(|(&v, &d)| (v, d)).collect()
    };
    let batch = pick(&|v| in_a(v) && in_b(v) && in_out(v));
    let left = pick(&|v| in_a(v) && !in_b(v) && in_out(v));
    let right = pick(&|v| !in_a(v) && in_b(v) && in_out(v));
    let inner = pick(&|v| in_a(v) && in_b(v) && !in_out(v));
    let a_only = pick(&|v| in_a(v) && !in_b(v) && !in_out(v));
    let b_only = pick(&|v| !in_a(v) && in_b(v) && !in_out(v));

    let a_keep: Vec<_> = batch.iter().chain(&left).chain(&inner).copied().collect();
    let b_keep: Vec<_> = batch.iter().chain(&inner).chain(&right).copied().collect();
    let am = gather_reduce(&a.data, &a.vars, &a.dims, &a_keep, &a_only);
    let bm = gather_reduce(&b.data, &b.vars, &b.dims, &b_keep, &b_only);

    let size = |xs: &[(VarId, usize)]| xs.iter().map(|p| p.1).product::<usize>();
    let (nb, nl, nk, nr) = (size(&batch), size(&left), size(&inner), size(&right));
    let mut cm = vec![S::zero(); nb * nl * nr];
    for t in 0..nb {
        let ab = &am[t * nl * nk..(t + 1) * nl * nk];
        let bb = &bm[t * nk * nr..(t + 1) * nk * nr];
        let cb = &mut cm[t * nl * nr..(t + 1) * nl * nr];
        for l in 0..nl {
            let crow = &mut cb[l * nr..(l + 1) * nr];
            for k in 0..nk {
                let x = ab[l * nk + k];
                if x.is_zero() {
                    continue;
                }
                let brow = &bb[k * nr..(k + 1) * nr];
                for (c, &y) in crow.iter_mut().zip(brow) {
                    *c = c.add(x.mul(y));
                }
            }
        }
    }

    let c_vars: Vec<VarId> = batch.iter().chain(&left).chain(&right).map(|p| p.0).collect();
    let c_dims: Vec<usize> = batch.iter().chain(&left).chain(&right).map(|p| p.1).collect();
    let out_keep: Vec<(VarId, usize)> = out_vars.iter().copied().zip(out_dims.iter().copied()).collect();
    let mut data = if c_vars.as_slice() == out_vars {
        cm
    } else {
        gather_reduce(&cm, &c_vars, &c_dims, &out_keep, &[])
    };
    let shift = S::normalize(&mut data);
    let out = LabeledTensor {
        vars: out_vars.to_vec(),
        dims: out_dims.to_vec(),
        data,
        scale: a.scale + b.scale + shift,
    };
    Ok((out, ops))
}
