//! UAI model, evidence and query files, and result-file output.
//!
//! All three input formats are whitespace-tokenized; spaces, tabs and
//! newlines are interchangeable. Parse errors carry the zero-based index of
//! the offending token.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::algebra::{Real, Scalar, Scaled};
use crate::error::{Error, Result};
use crate::network::TensorNetwork;
use crate::tensor::{Assignment, LabeledTensor, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Markov,
    Bayes,
}

impl NetworkKind {
    fn header(self) -> &'static str {
        match self {
            NetworkKind::Markov => "MARKOV",
            NetworkKind::Bayes => "BAYES",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub scope: Vec<VarId>,
    /// Row-major over `scope`, first variable slowest.
    pub table: Vec<f64>,
}

/// A parsed model file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: NetworkKind,
    pub cards: Vec<usize>,
    pub factors: Vec<Factor>,
}

/// Observed variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Evidence {
    pub assignment: Assignment,
}

/// Query variables for MMAP.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QuerySet {
    pub vars: BTreeSet<VarId>,
}

struct Tokens<'a> {
    toks: Vec<&'a [u8]>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Tokens {
            toks: bytes.split(|b| b.is_ascii_whitespace()).filter(|t| !t.is_empty()).collect(),
            pos: 0,
        }
    }

    fn err<T>(&self, token: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { token, msg: msg.into() })
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let at = self.pos;
        let Some(tok) = self.toks.get(at) else {
            return self.err(at, format!("truncated stream: expected {what}"));
        };
        self.pos += 1;
        match std::str::from_utf8(tok) {
            Ok(s) => Ok((at, s)),
            Err(_) => self.err(at, format!("non-numeric token where {what} was expected")),
        }
    }

    fn count(&mut self, what: &str) -> Result<(usize, usize)> {
        let (at, s) = self.next(what)?;
        match s.parse::<usize>() {
            Ok(n) => Ok((at, n)),
            Err(_) => self.err(at, format!("non-numeric token {s:?} where {what} was expected")),
        }
    }

    fn real(&mut self, what: &str) -> Result<(usize, f64)> {
        let (at, s) = self.next(what)?;
        match s.parse::<f64>() {
            Ok(x) if x.is_nan() => self.err(at, "NaN table entry"),
            Ok(x) if x < 0.0 => self.err(at, format!("negative table entry {x}")),
            Ok(x) if !x.is_finite() => self.err(at, format!("non-finite table entry {x}")),
            Ok(x) => Ok((at, x)),
            Err(_) => self.err(at, format!("non-numeric token {s:?} where {what} was expected")),
        }
    }

    fn finish(&self) -> Result<()> {
        if self.pos < self.toks.len() {
            return self.err(self.pos, "trailing tokens after end of file");
        }
        Ok(())
    }
}

/// Parses a `MARKOV` or `BAYES` model file.
pub fn parse_model(bytes: &[u8]) -> Result<ModelSpec> {
    let mut tk = Tokens::new(bytes);
    let (at, head) = tk.next("header")?;
    let kind = match head {
        "MARKOV" => NetworkKind::Markov,
        "BAYES" => NetworkKind::Bayes,
        other => return tk.err(at, format!("unknown header {other:?}")),
    };
    let (_, nvars) = tk.count("number of variables")?;
    let mut cards = Vec::new();
    for _ in 0..nvars {
        let (at, c) = tk.count("cardinality")?;
        if c == 0 {
            return tk.err(at, "cardinality must be positive");
        }
        cards.push(c);
    }
    let (_, nfactors) = tk.count("number of factors")?;
    let mut scopes: Vec<(Vec<VarId>, usize)> = Vec::new();
    for _ in 0..nfactors {
        let (_, arity) = tk.count("scope size")?;
        let mut scope = Vec::new();
        let mut len = 1usize;
        for _ in 0..arity {
            let (at, v) = tk.count("variable id")?;
            if v >= nvars {
                return tk.err(at, format!("variable {v} out of range for {nvars} variables"));
            }
            if scope.contains(&VarId(v)) {
                return tk.err(at, format!("variable {v} repeated in factor scope"));
            }
            len = match len.checked_mul(cards[v]) {
                Some(l) => l,
                None => return tk.err(at, "factor table size overflows"),
            };
            scope.push(VarId(v));
        }
        scopes.push((scope, len));
    }
    let mut factors = Vec::with_capacity(scopes.len());
    for (scope, len) in scopes {
        let (at, n) = tk.count("table entry count")?;
        if n != len {
            return tk.err(at, format!("count mismatch: table declares {n} entries, scope needs {len}"));
        }
        let mut table = Vec::new();
        for _ in 0..n {
            table.push(tk.real("table entry")?.1);
        }
        factors.push(Factor { scope, table });
    }
    tk.finish()?;
    Ok(ModelSpec { kind, cards, factors })
}

/// Parses an evidence file: `k` then `k` pairs of variable and value.
pub fn parse_evidence(bytes: &[u8], model: &ModelSpec) -> Result<Evidence> {
    let mut tk = Tokens::new(bytes);
    let (_, k) = tk.count("number of observed variables")?;
    let mut assignment = Assignment::new();
    for _ in 0..k {
        let (at, v) = tk.count("variable id")?;
        if v >= model.cards.len() {
            return tk.err(at, format!("variable out of range: {v}"));
        }
        if assignment.contains_key(&VarId(v)) {
            return tk.err(at, format!("variable {v} observed twice"));
        }
        let (at, x) = tk.count("value")?;
        if x >= model.cards[v] {
            return tk.err(at, format!("value {x} out of range for variable {v} (cardinality {})", model.cards[v]));
        }
        assignment.insert(VarId(v), x);
    }
    tk.finish()?;
    Ok(Evidence { assignment })
}

/// Parses a query file: `k` then `k` distinct variable ids.
pub fn parse_query(bytes: &[u8], model: &ModelSpec) -> Result<QuerySet> {
    let mut tk = Tokens::new(bytes);
    let (_, k) = tk.count("number of query variables")?;
    let mut vars = BTreeSet::new();
    for _ in 0..k {
        let (at, v) = tk.count("variable id")?;
        if v >= model.cards.len() {
            return tk.err(at, format!("variable out of range: {v}"));
        }
        if !vars.insert(VarId(v)) {
            return tk.err(at, format!("duplicate query variable {v}"));
        }
    }
    tk.finish()?;
    Ok(QuerySet { vars })
}

/// Writes a model back in the canonical single-space layout.
pub fn serialize_model(m: &ModelSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", m.kind.header());
    let _ = writeln!(s, "{}", m.cards.len());
    let cards: Vec<String> = m.cards.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(s, "{}", cards.join(" "));
    let _ = writeln!(s, "{}", m.factors.len());
    for f in &m.factors {
        let _ = write!(s, "{}", f.scope.len());
        for v in &f.scope {
            let _ = write!(s, " {}", v.0);
        }
        s.push('\n');
    }
    for f in &m.factors {
        let _ = writeln!(s, "\n{}", f.table.len());
        let xs: Vec<String> = f.table.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", xs.join(" "));
    }
    s
}

/// One tensor per factor over the model's variables, output empty.
pub fn build_network<T: Scalar>(m: &ModelSpec) -> Result<TensorNetwork<Real<T>>> {
    let tensors = m
        .factors
        .iter()
        .map(|f| {
            let dims = f.scope.iter().map(|v| m.cards[v.0]).collect();
            let values = f.table.iter().map(|&x| T::from_f64(x).unwrap()).collect();
            LabeledTensor::from_values(f.scope.clone(), dims, values).map(LabeledTensor::normalized)
        })
        .collect::<Result<Vec<_>>>()?;
    TensorNetwork::new(m.cards.clone(), tensors, Vec::new())
}

/// Task payloads accepted by [`write_result`].
#[derive(Clone, Debug)]
pub enum ResultPayload<'a> {
    Pr(Scaled<f64>),
    /// Per query set: its variables' joint cardinality and probabilities.
    Mar(&'a [(usize, Vec<f64>)]),
    Mpe(&'a Assignment),
    Mmap(&'a Assignment),
    Samples(&'a [Assignment]),
}

/// Renders a result file; always newline-terminated.
pub fn write_result(payload: &ResultPayload<'_>) -> String {
    let mut s = String::new();
    match payload {
        ResultPayload::Pr(z) => {
            let _ = writeln!(s, "PR\n{:.6}", z.to_log10());
        }
        ResultPayload::Mar(tables) => {
            let _ = write!(s, "MAR\n{}", tables.len());
            for (card, probs) in tables.iter() {
                let _ = write!(s, " {card}");
                for p in probs {
                    let _ = write!(s, " {p:.6}");
                }
            }
            s.push('\n');
        }
        ResultPayload::Mpe(a) | ResultPayload::Mmap(a) => {
            let name = if matches!(payload, ResultPayload::Mpe(_)) { "MPE" } else { "MMAP" };
            let _ = write!(s, "{name}\n{}", a.len());
            for x in a.values() {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        ResultPayload::Samples(batch) => {
            for a in batch.iter() {
                let vals: Vec<String> = a.values().map(|x| x.to_string()).collect();
                let _ = writeln!(s, "{}", vals.join(" "));
            }
        }
    }
    s
}
