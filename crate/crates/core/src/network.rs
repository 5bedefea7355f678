use std::collections::BTreeSet;

use crate::algebra::Semiring;
use crate::error::{Error, Result};
use crate::tensor::{Assignment, LabeledTensor, VarId};

/// Tensors over a shared variable table plus the output variables V₀.
///
/// The contracted variables are those present in some tensor or in the
/// output. A table variable referenced by nothing does not take part; task
/// drivers cover such variables with unity tensors when they must be summed.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorNetwork<S> {
    cards: Vec<usize>,
    tensors: Vec<LabeledTensor<S>>,
    output: Vec<VarId>,
}

impl<S: Semiring> TensorNetwork<S> {
    pub fn new(cards: Vec<usize>, tensors: Vec<LabeledTensor<S>>, output: Vec<VarId>) -> Result<Self> {
        let net = TensorNetwork {
            cards,
            tensors: Vec::new(),
            output: Vec::new(),
        };
        let mut net = net.with_output(output)?;
        for t in tensors {
            net.push(t)?;
        }
        Ok(net)
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn card(&self, v: VarId) -> usize {
        self.cards[v.0]
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn tensors(&self) -> &[LabeledTensor<S>] {
        &self.tensors
    }

    pub fn output(&self) -> &[VarId] {
        &self.output
    }

    pub fn into_tensors(self) -> Vec<LabeledTensor<S>> {
        self.tensors
    }

    fn check_var(&self, v: VarId) -> Result<()> {
        if v.0 >= self.cards.len() {
            return Err(Error::shape(format!("variable {v} not in a table of {} variables", self.cards.len())));
        }
        Ok(())
    }

    pub fn push(&mut self, t: LabeledTensor<S>) -> Result<usize> {
        for (&v, &d) in t.vars().iter().zip(t.dims()) {
            self.check_var(v)?;
            if self.cards[v.0] != d {
                return Err(Error::shape(format!("tensor gives {v} cardinality {d}, table says {}", self.cards[v.0])));
            }
        }
        self.tensors.push(t);
        Ok(self.tensors.len() - 1)
    }

    /// Replaces the output variable list.
    pub fn with_output(mut self, output: Vec<VarId>) -> Result<Self> {
        for (i, &v) in output.iter().enumerate() {
            self.check_var(v)?;
            if output[..i].contains(&v) {
                return Err(Error::shape(format!("output variable {v} repeated")));
            }
        }
        self.output = output;
        Ok(self)
    }

    /// Variables referenced by any tensor or by the output.
    pub fn present_vars(&self) -> BTreeSet<VarId> {
        self.tensors
            .iter()
            .flat_map(|t| t.vars().iter().copied())
            .chain(self.output.iter().copied())
            .collect()
    }

    /// Slices every tensor by `evidence` and drops evidenced output variables.
    pub fn sliced(&self, evidence: &Assignment) -> Result<Self> {
        for (&v, &x) in evidence {
            self.check_var(v)?;
            if x >= self.cards[v.0] {
                return Err(Error::Domain {
                    var: v,
                    value: x,
                    card: self.cards[v.0],
                });
            }
        }
        Ok(TensorNetwork {
            cards: self.cards.clone(),
            tensors: self.tensors.iter().map(|t| t.slice(evidence)).collect::<Result<_>>()?,
            output: self.output.iter().copied().filter(|v| !evidence.contains_key(v)).collect(),
        })
    }

    /// Adds a rank-1 unity tensor for each listed variable not yet present.
    /// Returns the indices of the added tensors.
    pub fn cover(&mut self, vars: impl IntoIterator<Item = VarId>) -> Result<Vec<usize>> {
        let present = self.present_vars();
        let mut added = Vec::new();
        for v in vars {
            if !present.contains(&v) {
                self.check_var(v)?;
                added.push(self.push(LabeledTensor::unity(vec![v], vec![self.cards[v.0]])?)?);
            }
        }
        Ok(added)
    }

    /// Converts every tensor to another algebra, keeping scopes.
    pub fn convert<U: Semiring>(&self, f: impl Fn(&LabeledTensor<S>) -> LabeledTensor<U>) -> TensorNetwork<U> {
        TensorNetwork {
            cards: self.cards.clone(),
            tensors: self.tensors.iter().map(f).collect(),
            output: self.output.clone(),
        }
    }
}
