//! Distributed solver for sparse linear systems `Ax = b` under generalised
//! diagonal dominance (walk-summability).
//!
//! Every node `i` owns row `i` of the system and talks only to the
//! neighbours of the induced graph. The main algorithm is a Gaussian
//! belief-propagation style message-passing scheme for asymmetric `A`
//! ([`solvers::bp`]) that is exact after `diameter(G)` rounds on trees and
//! converges asymptotically on loopy walk-summable systems. Around it sit
//! the pieces needed to use and check it:
//!
//! * [`system`], [`graph`], [`generate`]: instances and their graphs;
//! * [`analysis`]: dominance and walk-summability classification;
//! * [`engine`]: a synchronous round simulator with communication, work
//!   and storage accounting;
//! * [`solvers`]: the message-passing solver and the Jacobi, Gauss–Seidel
//!   and projection-consensus baselines;
//! * [`dense`]: the direct reference solver;
//! * [`oracle`]: independent walk-sum, Schur-complement and computation-tree
//!   checks.

pub mod analysis;
pub mod dense;
pub mod engine;
pub mod generate;
pub mod graph;
pub mod oracle;
pub mod solvers;
pub mod system;

pub use graph::UndirectedGraph;
pub use system::{NodeId, SparseMatrix, SparseSystem, SystemError};
