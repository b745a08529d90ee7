//! Construction, sampling and statistical verification of fixed points of the
//! multivariate smoothing transform
//!
//! ```text
//! X  =d  Σ_{i=1}^N T_i X_i + Q
//! ```
//!
//! with random nonnegative `d × d` weights `T_i` and a nonnegative random
//! vector `Q`.
//!
//! The modules follow the objects of the theory:
//!
//! * [`model`]: weight ensembles and their structural assumptions.
//! * [`spectral`]: the transfer operators, `m(s)`, `α`, `H^α` and `ν^α`.
//! * [`walk`]: the Markov random walk `(U_n, S_n)` and its `α`-shifted law.
//! * [`branching`]: branch weights `L(v)`, the martingale `W_n(u)`, stopping lines, `W*`.
//! * [`stable`]: positive and multivariate `α`-stable samplers.
//! * [`fixedpoint`]: fixed-point samplers and Laplace transforms.
//! * [`diagnostics`]: the verification suite.
//! * [`pipeline`]: the end-to-end runs behind the command-line tool.
//!
//! All randomness flows through [`rng::StreamKey`], so results depend only on
//! the seed, never on the number of threads.

pub mod branching;
pub mod diagnostics;
pub mod error;
pub mod fixedpoint;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod spectral;
pub mod stable;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use linalg::{NonnegMatrix, NonnegVector, SpherePoint};
pub use model::WeightEnsemble;
pub use rng::StreamKey;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/walk.md")]
    mod walk {}
    #[doc = include_str!("../../../book/src/branching.md")]
    mod branching {}
    #[doc = include_str!("../../../book/src/stable.md")]
    mod stable {}
    #[doc = include_str!("../../../book/src/fixed_points.md")]
    mod fixed_points {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
