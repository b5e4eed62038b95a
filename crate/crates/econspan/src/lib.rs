//! Economic bridge span selection.
//!
//! Two routes to the same answer: closed-form and numeric minimization
//! of parametric bridge-cost functions ([`cost_model`]), and a deep
//! Q-network trained from scratch ([`neural`], [`dqn_agent`]) on a
//! material/span gridworld ([`environment`]) whose reward is the
//! negative construction cost. A value-iteration oracle solves the small
//! MDP exactly for verification, and the CLI wires everything into
//! reproducible analyze/train/eval workflows.

pub mod config;
pub mod cost_model;
pub mod dqn_agent;
pub mod environment;
pub mod image;
pub mod neural;
