//! Analysis toolkit for reward structure in grid-world MDPs.
//!
//! The crate builds the directed weighted graph induced by a deterministic
//! multi-agent grid world and answers structural questions about it: how
//! dense the rewards are, where the minimum start-to-goal cut-sets
//! (bottlenecks) lie, and whether crossing them is rewarded. It also ships
//! delayed potential-based reward shaping, a random-exploration harness with
//! an exact absorption-probability oracle, a tabular learner, and a spectral
//! bottleneck-discovery pipeline.

pub mod discovery;
pub mod gridworld;
pub mod mdpgraph;
pub mod rollout;
pub mod seeding;
pub mod shaping;
pub mod stats;
pub mod tabular;
