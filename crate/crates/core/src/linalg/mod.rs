//! Dense linear algebra and the seeded random source used everywhere else.

mod decomp;
mod matrix;
mod rng;

pub use decomp::{
    cholesky, inverse_spd, log_det_spd, solve_lower, solve_spd, solve_upper_t, sym_eig,
    CHOLESKY_PIVOT_TOL, JACOBI_MAX_SWEEPS, JACOBI_TOL, SYMMETRY_TOL,
};
pub use matrix::{dot, norm, Matrix};
pub use rng::Rng;
