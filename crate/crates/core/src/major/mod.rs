//! The dominating player: adjoint system, control optimization and the
//! linear-quadratic oracle.

pub mod adjoint;
pub mod optimize;
pub mod oracle;

pub use adjoint::{evaluate_J0, gradient_pairing, solve_adjoints, u0_stationarity_residual, AdjointBundle, AdjointOptions};
pub use optimize::{optimize_u0, OptimizeOptions, Optimized};
