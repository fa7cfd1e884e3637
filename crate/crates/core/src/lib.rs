//! Simulation and verification toolkit for energy-critical Schrödinger maps
//! into the sphere S² and the hyperbolic plane H².
//!
//! The crate integrates the map flow `∂_t φ = φ ×_μ Δφ` and the harmonic map
//! heat flow on a periodic square, builds the caloric gauge by parallel
//! transport from the trivialized end of the heat flow, and measures the
//! gauge identities, conservation laws and space-time norms that the
//! continuation theory is phrased in.
//!
//! Module map:
//! - [`manifold`]: target geometry (μ-inner product, μ-cross product, energy, mass).
//! - [`spectral`]: Fourier engine, Littlewood-Paley bands, propagators, rotations.
//! - [`evolve_sm`]: implicit-midpoint Schrödinger map integrator and audits.
//! - [`evolve_heat`]: harmonic map heat flow on a geometric s-grid.
//! - [`caloric`]: caloric frame transport, gauge fields, residual suite.
//! - [`norms`]: mixed, lateral and Galilean norms, X_k/Y_k surrogates, envelopes.
//! - [`runner`]: configuration, scenarios, snapshots, experiment orchestration.

pub mod caloric;
pub mod error;
pub mod evolve_heat;
pub mod evolve_sm;
pub mod manifold;
pub mod norms;
pub mod runner;
pub mod spectral;

pub use error::{Error, Result};
pub use manifold::{MapField, TargetManifold, Vec3};
pub use spectral::{GridSpec, ScalarField2D, Spectral};
