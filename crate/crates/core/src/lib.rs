//! Variable-step weighted and shifted BDF2 (WSBDF2) time stepping for linear
//! parabolic problems `u' + Au = f`.
//!
//! The scheme interpolates between Crank–Nicolson (`theta = 1/2`) and BDF2
//! (`theta = 1`). Besides the integrator this crate carries the algebra that
//! the stability theory rests on:
//!
//! * [`kernels`]: the bidiagonal convolution kernels of the discrete
//!   derivative and their discrete orthogonal convolution (DOC) inverse.
//! * [`ratio_bounds`]: step-ratio thresholds below which the kernels stay
//!   positive semi-definite, plus brute-force eigenvalue oracles.
//! * [`integrator`]: the time stepper with energy, L2 stability and
//!   consistency diagnostics.
//! * [`spectral2d`]: a Chebyshev collocation Dirichlet Laplacian on the
//!   square `(-1, 1)^2` with fast diagonalized shifted solves.
//! * [`harness`]: convergence studies and figure data.
//!
//! ```
//! use wsbdf2::harness::ManufacturedProblem;
//! use wsbdf2::{wsbdf2_solve, Mesh, SolveOptions};
//!
//! let problem = ManufacturedProblem::new(20, 20)?;
//! let mesh = Mesh::case1(1.0, 40)?;
//! let trace = wsbdf2_solve(
//!     &problem.op,
//!     &mesh,
//!     0.75,
//!     &problem.initial(),
//!     |t| problem.forcing(t),
//!     SolveOptions::default(),
//! )?;
//! let error = problem.error(1.0, trace.final_state(), Default::default());
//! assert!(error < 1e-4);
//! # Ok::<(), wsbdf2::Error>(())
//! ```

pub mod error;
pub mod harness;
pub mod integrator;
pub mod kernels;
pub mod mesh;
pub mod ratio_bounds;
pub mod spectral2d;

pub use error::{Error, Result};
pub use integrator::{wsbdf2_solve, ScalarProblem, SolutionTrace, SolveOptions, SpatialProblem};
pub use kernels::{DocTable, KernelTable};
pub use mesh::Mesh;
pub use spectral2d::SpectralLaplacian;
