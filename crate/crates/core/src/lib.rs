//! Stationary-target search on a grid with a noisy, oriented sensor.
//!
//! The crate models the search problem as a belief MDP whose action set is
//! widened with *options*: macro-actions that drive the agent to the most
//! probable cell of a region of interest (ROI). Regions are segmented once
//! from the prior with a seeded watershed. Planning uses PUCT, either over the
//! full belief formulation (the belief is depleted along simulated paths) or
//! over a "lite" formulation that keeps the map static and scores options
//! with an anticipated-density heuristic. Two receding-horizon baselines
//! (greedy and direct policy search) and a seeded experiment harness are
//! included.
//!
//! Module map:
//!
//! - [`gridworld`]: grid, agent kinematics, priors, target placement.
//! - [`sensing`]: fields of view, observation sampling, belief updates.
//! - [`roi`]: seed detection and watershed segmentation.
//! - [`options`]: macro-actions toward region targets.
//! - [`planners`]: PUCT (full and lite) and the receding-horizon baselines.
//! - [`harness`]: episodes, batches, percentile summaries and report files.

pub mod error;
pub mod gridworld;
pub mod harness;
pub mod options;
pub mod planners;
pub mod rng;
pub mod roi;
pub mod sensing;

pub use error::{Error, Result};
pub use gridworld::{
    generate_prior, sample_target, step, Action, AgentState, BeliefMap, Cell, GridSpec, Heading,
    PriorConfig, SpreadUnit,
};
pub use options::{available_options, expand_option, OptionKind, PlanOption};
pub use roi::{find_seeds, roi_target_cell, watershed, RoiSet};
pub use sensing::{
    exact_posterior, planning_update, resolve_fov, sample_observation, FovMask, Observation,
    Reading,
};
