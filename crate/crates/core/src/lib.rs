//! Online expert selection in Markov decision processes with upper
//! confidence bounds.
//!
//! A controller repeatedly picks one of several pre-trained expert policies
//! and runs it for an episode on a shared, never-reset MDP. The crate
//! provides the MDP and gridworld models ([`mdp`], [`gridworld`]), expert
//! training ([`experts`]), exact analysis of each expert's induced Markov
//! chain ([`chain`]), the UCB loop and baselines ([`controller`]), regret
//! metrics and the theoretical bound ([`regret`]), and the configurable
//! experiment harness behind the `ucb-experts` CLI ([`config`],
//! [`harness`]).

pub mod chain;
pub mod config;
pub mod controller;
pub mod error;
pub mod experts;
pub mod gridworld;
pub mod harness;
pub mod mdp;
pub mod regret;

pub use error::{Error, Result};
