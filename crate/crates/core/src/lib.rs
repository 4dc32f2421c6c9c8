//! Scalable multi-agent power control for radar networks.
//!
//! Radars on a communication graph each pick a transmit power level while a
//! target moves on a finite Markov chain. Each agent learns a softmax policy
//! from its κ-hop neighbourhood only, using truncated Q estimates.

pub mod environment;
pub mod harness;
pub mod learning;
pub mod oracle;
pub mod physics;
pub mod policy;
pub mod rng;
pub mod topology;
