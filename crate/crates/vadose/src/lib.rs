//! Steady-state groundwater flow in variably saturated conditions.
//!
//! The steady Richards equation is discretized with a two-point flux
//! approximation on structured hexahedral grids and solved by Newton with
//! line search, either directly, through nonlinearity continuation (a
//! family of problems interpolating from the linear Darcy problem to the
//! full nonlinear one), or with a pseudo-transient implicit-Euler baseline.
//!
//! The crate is organized bottom-up: [`mesh`] and [`constitutive`] define
//! the grid and material model, [`discretization`] assembles residuals and
//! Jacobians, [`linsolve`] and [`newton`] solve the linearized and
//! nonlinear systems, [`continuation`] and [`pseudo_transient`] drive them
//! to the steady solution, and [`config`]/[`runner`]/[`vtk`] provide the
//! file-based front end.

pub mod config;
pub mod constitutive;
pub mod continuation;
pub mod discretization;
pub mod error;
pub mod exec;
pub mod linsolve;
pub mod mesh;
pub mod newton;
pub mod pseudo_transient;
pub mod report;
pub mod runner;
pub mod sparse;
pub mod state;
pub mod vtk;

pub use config::{Overrides, ProblemConfig, Strategy};
pub use constitutive::{ContinuationFunctionKind, MediumProperties};
pub use discretization::{BoundaryCondition, KrScheme, SteadyProblem};
pub use error::{Error, Result};
pub use mesh::{build_box_grid, BoundaryTag, Mesh};
pub use newton::{NewtonConfig, NewtonOutcome, NewtonStatus};
pub use state::HeadState;
