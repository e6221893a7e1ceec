//! Stochastic weighted bipartite matching in the query-commit model.
//!
//! The crate is organized bottom-up:
//!
//! - [`instance`]: graphs with per-edge weight and existence probability, file
//!   I/O, random generators and lazily sampled realizations.
//! - [`simplex`]: a small dense two-phase simplex used by the LP code.
//! - [`lpmatch`]: the exponential-size matching LP solved by cutting planes
//!   with a prefix separation oracle.
//! - [`transform`]: the shrinking transform `g`, dummy-edge padding and the
//!   analytic thresholds behind the improved rounding.
//! - [`permdist`]: distributions over permutations of edge subsets with
//!   prescribed first-realized marginals, and the modified sampler.
//! - [`engine`]: the query-commit execution state machine and the rounding
//!   algorithms (greedy, simple, single-round and two-branch).
//! - [`oracle`]: exact offline optimum, exact event probabilities by
//!   event-tree enumeration, and Monte Carlo estimation.
//! - [`verify`]: numeric certification of the analytic inequalities.
//! - [`cli`]: the command-line front end.

pub mod cli;
pub mod engine;
pub mod error;
pub mod instance;
pub mod lpmatch;
pub mod oracle;
pub mod permdist;
pub mod simplex;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
pub use instance::{Edge, StochasticGraph};
