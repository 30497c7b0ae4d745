//! Load limiting control: load linearization, ZOH discretization, the
//! direct-transcription QP and control margins.

mod discretize;
mod load;
mod margin;
mod mpc;
pub mod qp;

pub use discretize::{discretize, DiscreteModel};
pub use load::{linearize_load, LoadLinearization};
pub use margin::{clamp_command, control_margin, ControlMargin};
pub use mpc::{build_qp, solve_mpc, ConstraintMode, Layout, LlcModel, LoadLimiter, MpcConfig, MpcProblem, MpcSolution};
pub use qp::{solve_qp, PreparedQp, QpOptions, QpProblem, QpSolution, QpStatus};
