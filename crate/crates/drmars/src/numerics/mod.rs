//! Minimal dense linear algebra and deterministic sampling shared by the
//! whole crate: pivoted-QR least squares, Jacobi symmetric eigen,
//! Cholesky, and seeded splittable random streams.

pub mod cholesky;
pub mod eigen;
pub mod lstsq;
pub mod matrix;
pub mod rng;

pub use cholesky::cholesky_lower;
pub use eigen::{sym_eigen, EigenResult};
pub use lstsq::{residual_sum_of_squares, solve_least_squares};
pub use matrix::{dot, norm2, DenseMatrix};
pub use rng::{mix_stream, RngStream};
