//! Exact inference on discrete graphical models by tensor-network contraction.
//!
//! A model's factors become labeled tensors; each inference task is a
//! contraction of that network under a suitable algebra:
//!
//! - **PR** (partition function / evidence probability): sum-product
//!   contraction to a scalar.
//! - **MAR** (marginals): unity tensors are attached for each query set and
//!   the gradient of the partition function with respect to each one, from a
//!   single reverse pass, is the unnormalized marginal.
//! - **MPE**: max-plus contraction of the log tables; Boolean-mask
//!   backpropagation recovers the maximizing configuration.
//! - **MMAP**: clusters of tensors are summed out in the real algebra, then
//!   the reduced network over the query variables is maximized.
//! - **Sampling**: the cached forward contraction is traced back from the
//!   root, drawing each node's eliminated variables conditionally.
//!
//! All numeric code is generic over the scalar type ([`Scalar`]: `f32` or
//! `f64`); the aliases below fix `f64`, which the CLI uses.
//!
//! ```
//! use tnet_infer::{parse_model, build_network, compute_pr, Assignment, TaskOptions, VarId};
//!
//! let model = parse_model(b"BAYES 2 2 2 2 1 0 2 0 1 2 0.6 0.4 4 0.7 0.3 0.25 0.75").unwrap();
//! let net = build_network::<f64>(&model).unwrap();
//! let evidence = Assignment::from([(VarId(1), 1)]);
//! let pr = compute_pr(&net, &evidence, &TaskOptions::default()).unwrap();
//! assert!((pr.value() - 0.48).abs() < 1e-12);
//! ```

pub mod algebra;
pub mod engine;
pub mod error;
pub mod network;
pub mod order;
pub mod tasks;
pub mod tensor;
pub mod uai;

pub use algebra::{BoolMask, MaxPlus, Real, Scalar, Scaled, Semiring};
pub use engine::{backward_real, backward_tropical, contract, contract_network, forward, AdjointSet, Tape, TropicalAdjoints};
pub use error::{Category, Error, Result};
pub use network::TensorNetwork;
pub use order::{complexity_report, exhaustive_order, greedy_order, validate, ComplexityReport, ContractionTree, OrderStrategy};
pub use tasks::{
    compute_mar, compute_mmap, compute_mpe, compute_pr, draw_samples, MarginalTable, MpeSolution, SampleBatch, TaskOptions,
};
pub use tensor::{contract_pair, Assignment, LabeledTensor, VarId};
pub use uai::{build_network, parse_evidence, parse_model, parse_query, write_result, Evidence, ModelSpec, QuerySet, ResultPayload};

/// Real tensor over `f64`.
pub type RealTensor = LabeledTensor<Real<f64>>;
/// Max-plus tensor over `f64`.
pub type TropicalTensor = LabeledTensor<MaxPlus<f64>>;
/// Boolean mask tensor.
pub type MaskTensor = LabeledTensor<BoolMask>;
/// Probability network over `f64`.
pub type RealNetwork = TensorNetwork<Real<f64>>;
/// Log-probability network over `f64`.
pub type TropicalNetwork = TensorNetwork<MaxPlus<f64>>;
/// Scaled partition value over `f64`.
pub type Partition = Scaled<f64>;
