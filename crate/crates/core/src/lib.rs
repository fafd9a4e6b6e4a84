//! Quantum-limited resolution of incoherent optical sources.
//!
//! The crate models one-dimensional paraxial imaging of incoherent objects
//! and compares direct imaging against spatial-mode demultiplexing:
//!
//! - [`psf`]: point-spread functions on uniform grids and their spectra.
//! - [`scene`]: point-source and sampled object densities with moments.
//! - [`modes`]: PSF-adapted and Hermite-Gauss mode bases, parity and
//!   half-plane measurements, outcome probabilities.
//! - [`information`]: Fisher and Helstrom information, Cramér-Rao bounds.
//! - [`simulate`]: reproducible Poisson photon counting.
//! - [`estimate`]: maximum-likelihood and moment estimators, Fourier
//!   reconstruction.
//! - [`experiments`]: scripted sweeps writing CSV tables and manifests.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod experiments;
pub mod grid;
pub mod information;
pub mod modes;
pub mod polynomial;
pub mod psf;
pub mod scene;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{
    even_moment_estimator, fourier_coefficients, ml_separation, odd_moment_estimator,
    reconstruct_object, EstimatorResult, FourierModel, MlEstimate,
};
pub use experiments::{ExperimentKind, ExperimentSpec, Manifest, Table};
pub use grid::Grid;
pub use information::{
    crb, fi_direct, fi_direct_small_sep, fi_modes, fi_sliver, fisher_information,
    helstrom_onephoton, helstrom_thermal, InfoReport, ParamFamily,
};
pub use modes::{
    direct_intensity, hermite_gauss_basis, ipad_pairs, mode_probabilities, overlap, pad_basis,
    sliver_probabilities, splice_mode, BasisKind, Measurement, ModeBasis, OutcomeDistribution,
};
pub use polynomial::{gram_schmidt_polynomials, Polynomial};
pub use psf::{make_gaussian_psf, make_signum_masked_psf, Psf, PsfKind};
pub use rustfft::num_complex::Complex64;
pub use scene::{two_point_scene, MomentVector, PointSource, SceneKind, SourceScene};
pub use simulate::{
    sample_direct_positions, sample_mode_counts, sample_thermal_mode_counts, PhotonData,
};
