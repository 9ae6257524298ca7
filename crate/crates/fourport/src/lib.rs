//! Numerical engine for quantum state transformation by dispersive,
//! absorbing optical four-port devices (lossy beam splitters).
//!
//! A four-port device couples two incoming light modes to two outgoing ones
//! through a 2x2 complex transmission matrix `T` and, when the device
//! absorbs, leaks device excitations into the output through a 2x2
//! absorption matrix `A`. Energy conservation ties the two together:
//! `T T† + A A† = I`. The engine works frequency bin by frequency bin:
//!
//! - [`device`] represents and validates `(T, A)` pairs, renormalizes
//!   media-embedded devices, and loads binned spectra from JSON;
//! - [`embedding`] dilates `(T, A)` into a 4x4 unitary `Λ` on two light
//!   plus two device modes and computes its Hermitian generator `Φ`;
//! - [`factorization`] breaks `Λ` into chains of two-mode blocks and
//!   recomposes them for verification;
//! - [`fockmap`] transforms Fock-state inputs with the closed-form
//!   amplitude formula and reduces to the outgoing-field density matrix;
//! - [`coherentmap`] transforms coherent states (they stay coherent);
//! - [`oracle`] is an independent brute-force verifier on truncated Fock
//!   space, used to cross-check every closed formula;
//! - [`smallmat`] is the shared fixed-size complex linear algebra kernel.
//!
//! All computations are pure functions on immutable values and safe to run
//! in parallel across frequency bins.

pub mod coherentmap;
pub mod device;
pub mod embedding;
pub mod factorization;
pub mod fockmap;
pub mod oracle;
pub mod smallmat;
#[cfg(test)]
pub(crate) mod testutil;

pub use coherentmap::CoherentVector;
pub use device::{DeviceMatrices, DeviceSpectrum, RenormalizationResult};
pub use embedding::{LambdaEmbedding, LosslessGenerator};
pub use factorization::{FactorChain, TwoModeBlock};
pub use fockmap::{FieldDensity, FockAmplitudes, Occupation4, ZMatrix};
pub use oracle::{SectorBasis, SectorUnitary};
pub use smallmat::CMat;

/// Default cap on total quanta for Fock-space operations.
pub const DEFAULT_CAP: usize = 10;
