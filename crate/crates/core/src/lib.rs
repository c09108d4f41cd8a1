//! Adaptive-teaming testbed for multi-pursuer / multi-evader drone pursuit.
//!
//! The crate is organized bottom-up:
//!
//! - [`config`]: scenario documents and the built-in environments
//! - [`sim`]: deterministic kinematic simulator (transition, observation,
//!   reward, termination, trajectory logs)
//! - [`scripted`]: Greedy and Vicsek pursuers and the potential-field evader
//! - [`nn`]: MLP, Gaussian head, Adam and the checkpoint archive
//! - [`rl`]: GAE, PPO, rollout collection and the IPPO / PBT / MAPPO trainers
//! - [`population`]: hypergraph population training with the max-min
//!   preference oracle
//! - [`teammate`]: teammate-modeling encoder/decoder and its trainer
//! - [`evalkit`]: unseen zoos, evaluation protocol, metrics and SVG renders

pub mod config;
pub mod evalkit;
pub mod geometry;
pub mod nn;
pub mod policy;
pub mod population;
pub mod rl;
pub mod rng;
pub mod scripted;
pub mod sim;
pub mod teammate;
