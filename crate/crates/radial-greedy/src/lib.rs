//! Greedy minimization of elliptic convex energies over radial dictionaries.
//!
//! The core iteration is `u_0 = 0`, `u_m = u_{m-1} + z_m` where `z_m`
//! minimizes `E(u_{m-1} + z)` over a cone-structured dictionary (a basis
//! cone, the monomial cone on `[0, 1]`, elementary rank-1 tensors, or
//! bounded-weight neural networks). The crate also ships the classical
//! steepest-descent baseline and a diagnostics kit that turns the method's
//! provable properties (monotone energies, step summability, stationarity
//! along accepted atoms, the `O(1/m)` gap envelope) into executable checks.
//!
//! ```
//! use radial_greedy::*;
//!
//! let space = Space::euclidean(2)?;
//! let matrix = QuadraticMatrix::Dense(nalgebra::DMatrix::from_row_slice(
//!     2, 2, &[2.0, 0.0, 0.0, 1.0],
//! ));
//! let energy =
//!     Functional::Quadratic(Quadratic::new(matrix, space.vector(vec![2.0, 1.0])?)?);
//! let dict = Dictionary::Basis(BasisCone::coordinate(&space)?);
//! let reference = energy.exact_minimizer()?.expect("closed-form solve");
//!
//! let run = progressive_learning(&energy, &dict, &SolverConfig::default(), Some(&reference))?;
//! assert_eq!(run.final_iterate.coeffs(), &[1.0, 1.0]);
//! assert_eq!(run.records[0].gap, Some(0.5));
//! # Ok::<(), radial_greedy::Error>(())
//! ```

// validation guards use `!(x > 0.0)` so NaN parameters are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dictionary;
pub mod error;
pub mod functional;
pub mod solver;
pub mod space;

// matrices in the public API are nalgebra types; re-export the crate so
// callers build against the same version
pub use nalgebra;

pub use diagnostics::{
    convexity_slack, ellipticity_slack, gradient_check, lower_bound_slack, positive_window,
    rate2_sequence_oracle, rate_fit, reference_minimize, residual_bound_check, RateReport,
    ResidualBoundReport, SampleReport,
};
pub use dictionary::{
    line_search_scale, Activation, Atom, BasisCone, ConeCheckReport, Dictionary, Generator,
    InnerSolve, InnerSolveOptions, MonomialCone, NeuralCone, NeuralLayer, NeuralWeights,
    Rank1Cone,
};
pub use error::{Error, Result};
pub use functional::{
    CertificateOrigin, EllipticityCertificate, Functional, OperatorLsq, PDirichlet, Quadratic,
    QuadraticMatrix,
};
pub use solver::{
    progressive_learning, steepest_descent, stopping_check, IterateRecord, RunResult,
    SolverConfig, Termination,
};
pub use space::{pairing, DualVector, Grid, NormKind, Space, Vector};
