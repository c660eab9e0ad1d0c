//! Robust task-space QP control for kinematic-controlled robots.
//!
//! The controller integrates a desired joint state (a double integrator) whose
//! acceleration is the solution of a small weighted QP. Each task contributes a
//! least-squares term driven by a feedback law, and each barrier contributes an
//! inequality row. The robot itself is simulated as a per-joint linear servo
//! that tracks the desired state, which is where the unmodeled dynamics come
//! from.
//!
//! Module layout:
//! - [`model`]: robot/desired states, the double integrator, tracking error.
//! - [`plant`]: the servo plant and its RK4 integrator.
//! - [`kinematics`]: planar chains, task and barrier output states.
//! - [`control`]: feedback laws, barrier rows, Lyapunov utilities.
//! - [`qp`]: QP assembly and a dense dual active-set solver.
//! - [`sim`]: scenarios, the closed-loop engine, logs and metrics.
//! - [`catalog`]: built-in scenarios.
//! - [`acceptance`]: the acceptance suites shared by the CLI and tests.

pub mod acceptance;
pub mod catalog;
pub mod control;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod plant;
pub mod qp;
pub mod sim;

pub use error::{Error, Result};
