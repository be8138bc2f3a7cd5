//! Numerical solver and verification harness for major-minor mean field games
//! whose costs and dynamics depend on the joint state-control law of the
//! minor population.
//!
//! The pipeline mirrors the structure of the problem:
//!
//! * [`model`] defines the game (coefficients, partials, law-derivative kernels)
//!   and the pointwise Hamiltonian minimizations.
//! * [`measure`] holds feedback-form joint laws, moments, W2 and a
//!   finite-difference Lions-derivative oracle.
//! * [`pde`] solves the backward HJB and forward Fokker-Planck equations.
//! * [`equilibrium`] finds the mean-field fixed point by damped Picard iteration.
//! * [`major`] solves the dominating player's adjoint system, optimizes its
//!   control and provides the linear-quadratic oracle.
//! * [`simulate`] runs N-player Monte Carlo checks.
//! * [`cli`] drives all of the above from a config file.
//!
//! Everything is scalar (one-dimensional state and control) and the common
//! noise is frozen, so the backward equations are deterministic PDEs.

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod major;
pub mod measure;
pub mod model;
pub mod pde;
pub mod simulate;

pub use equilibrium::{best_response_map, solve_fixed_point, EquilibriumOptions, EquilibriumSolution, MajorPath};
pub use error::{Error, Result};
pub use grid::{Grids, StateGrid, TimeGrid};
pub use measure::{EmpiricalJointLaw, JointLaw, Measure};
pub use model::{lq::LqModel, lq::LqParams, GameModel};
