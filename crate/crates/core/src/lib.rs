//! Estimation, prediction and planning for an observer that has to catch up
//! with and hold station on a target it can only see through a noisy,
//! intermittent relative-pose sensor.
//!
//! The closed loop runs once per tick: [`estimator`] filters the relative
//! pose in the observer's body frame and recovers the target twist from the
//! filter's own history, [`predictor`] fits cubics to the recent track,
//! [`intercept`] finds the earliest time the observer can reach the
//! predicted target, and [`planner`] turns that goal into commands (SCP over
//! [`qp`] for the unicycle, min-snap polynomials for holonomic platforms).
//! [`sim`] and [`harness`] provide the seeded world, the sensor model and
//! the Monte-Carlo tooling around it.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod intercept;
pub mod predictor;
pub mod qp;
pub mod planner;
pub mod sim;
pub mod harness;
pub mod par;
