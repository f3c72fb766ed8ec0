//! Scores how well a complexity measure predicts the generalization gap of
//! a population of trained models.
//!
//! A [`Population`] holds the hyperparameter grid, one record per trained
//! model (training and validation error) and any number of named measures.
//! [`metrics`] turns a measure into two scores built on pairwise sign votes:
//!
//! * Ψ, the mean Kendall τ over slices of the grid in which a single
//!   hyperparameter varies, averaged over hyperparameters;
//! * J, the minimum over conditioning sets of hyperparameters of the
//!   conditional mutual information between gap votes and measure votes,
//!   normalized by the conditional entropy of the gap votes.
//!
//! [`report`] aggregates those across tasks, [`baselines`] provides
//! reference measures and [`synth`] generates populations with known
//! answers.

pub mod archive;
pub mod baselines;
pub mod error;
pub mod metrics;
pub mod population;
pub mod report;
mod rng;
pub mod synth;
pub mod votes;

pub use archive::{Layer, LayerKind, TensorArchive};
pub use error::{Error, Result};
pub use metrics::{
    cond_mi, metric2_task, psi_axis, psi_overall, score_task, vote_joint, CmiBreakdown,
    ScoreOptions, TaskScore, Weighting,
};
pub use population::{
    gap, Axis, AxisValue, GridReport, Group, HyperparamSpace, MeasureVector, ModelRecord,
    Population,
};
pub use report::{aggregate, score_populations, ScoreReport};
pub use votes::{kendall_tau, sign_vote, VoteJoint};
