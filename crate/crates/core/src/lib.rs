//! Balance notions for mass-action reaction networks in the deterministic
//! and stochastic regimes: network structure, state and measure
//! classification, equilibrium and stationary-distribution solvers,
//! simulation, and the per-instance implication check.

pub mod detbal;
pub mod gen;
pub mod graph;
pub mod model;
pub mod parser;
pub mod report;
pub mod ssa;
pub mod stoch;
