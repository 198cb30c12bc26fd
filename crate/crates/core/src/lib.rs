//! Matrix-pencil analysis of the numerical stability and accuracy of
//! partitioned predictor-corrector integration for differential-algebraic
//! systems.
//!
//! The crate is organized around five building blocks:
//!
//! * [`model`] - nonlinear DAE definitions, equilibria and the small-signal
//!   Jacobian blocks f_x, f_y, g_x, g_y.
//! * [`pencils`] - construction of the matrix pencils that encode the exact
//!   one-step behavior of partitioned predictor-corrector schemes, the
//!   reference DAE pencil, the delay approximation and the multistep
//!   companion form.
//! * [`spectra`] - standard/generalized/delay eigensolvers, Z-to-S mapping,
//!   stiffness and per-mode damping summaries.
//! * [`deformation`] - mode pairing, deformation metrics, numerical
//!   stability margins and accuracy-constrained maximum step sizes.
//! * [`simulator`] - partitioned time-domain integrators plus a
//!   simultaneous trapezoidal reference solver that double as brute-force
//!   oracles for the pencil predictions.
//!
//! All types are immutable after construction and all operations are pure
//! functions of their inputs, so everything can be shared across worker
//! threads freely.
//!
//! ```
//! use penstab::model::fixtures;
//! use penstab::{pencils, spectra, PencilForm};
//!
//! // One Heun corrector pass at h = 0.1 on x' = -2x amplifies by
//! // 1 + h*lambda*(1 + h*lambda/2) = 0.82 per step.
//! let ssm = fixtures::scalar_test_ssm(-2.0);
//! let pencil = pencils::pencil_pc_extrapolation(&ssm, 0.1, 1, PencilForm::Dense)?;
//! let spectrum = spectra::pencil_spectrum(&pencil)?;
//! assert!((spectrum.eigenvalues()[0].re - 0.82).abs() < 1e-12);
//!
//! // Mapped back to the S-plane the mode lands near the true -2.
//! let mode = spectrum.mapped_to_s()?[0].s.unwrap();
//! assert!((mode.re - (-1.9845)).abs() < 1e-3);
//! # Ok::<(), penstab::Error>(())
//! ```

pub mod deformation;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pencils;
pub mod simulator;
pub mod spectra;

pub use error::{Error, Result};
pub use model::{
    find_equilibrium, linearize, DaeModel, Equilibrium, JacobianMode, SmallSignalModel,
};
pub use pencils::{
    adams_companion, compute_cr, hm_step_map, pencil_dae, pencil_delay,
    pencil_pc_extrapolation, pencil_pc_perfect, DelayPencil, Domain, Interfacing, PcFamily,
    PcScheme, Pencil, PencilForm,
};
pub use spectra::{
    damping_frequency, eig_dense, eig_generalized, map_z_to_s, pencil_spectrum, solve_delay_eigs,
    stiffness_ratio, ModeSummary, Spectrum,
};
