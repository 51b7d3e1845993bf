//! Counterfactual explanations for continuous-action RL agents.
//!
//! Given an observed trajectory of a black-box policy, this crate trains a
//! counterfactual generator (a TD3 agent with a distance-penalized terminal
//! reward) that produces alternative action sequences from the same initial
//! state, trading off return improvement against proximity to the observed
//! actions. It ships three simulators (glucose regulation, a 2-D lander, and
//! a 1-D point mass), a constrained-state wrapper that auto-plays a
//! predefined policy inside designated regions, and the evaluation metrics
//! used to compare generators.

pub mod cfgen;
pub mod config;
pub mod constrained;
pub mod env;
pub mod error;
pub mod evalmetrics;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod td3;
pub mod trajectory;

pub use error::{Error, Result};
