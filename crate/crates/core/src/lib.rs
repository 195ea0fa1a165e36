//! Global solution of polynomial mathematical programs with equilibrium
//! constraints (MPECs).
//!
//! The equilibrium value function `J(x, y) = min_{v in B(x)} phi(x, y, v)` is
//! under-approximated by polynomials `J_k` obtained from a joint+marginal SOS
//! program, and the resulting epsilon-perturbed polynomial problems are solved
//! with moment relaxations and atom extraction.

pub mod driver;
pub mod jm;
pub mod measure;
pub mod oracle;
pub mod poly;
pub mod problem;
pub mod sdp;
pub mod sos;

pub use driver::{run_algorithm1, AlgoConfig, AlgorithmTrace, TerminationReason};
pub use jm::{compute_jk, ValueFunctionApprox};
pub use poly::{ExponentVector, MonomialBasis, Polynomial};
pub use problem::{load_problem, MpecProblem, OmegaBox};
pub use sdp::{SdpProblem, SdpSolution, SdpStatus, SolverOptions};
