//! Two-phase subspace direction-of-arrival estimation for uniform linear
//! arrays whose sensors see white noise of *unequal* power.
//!
//! Classical subspace methods assume the noise covariance is a scaled
//! identity; when each sensor has its own noise variance the signal and
//! noise subspaces of the plain covariance eigendecomposition no longer
//! separate, and MUSIC-style estimators degrade badly as the spread of
//! noise powers grows. This crate implements a non-iterative two-phase
//! estimator that repairs the separation:
//!
//! 1. **Phase 1** zeroes the covariance diagonal. For uncorrelated noise
//!    the population diagonal-stripped covariance equals
//!    `A P Aᴴ − (Σₖ sₖ)·I`, so its `M − L` smallest eigenvectors span the
//!    exact noise subspace regardless of how uneven the noise is.
//! 2. The phase-1 subspace is then used to estimate the noise covariance
//!    itself: the sensor with the smallest covariance diagonal anchors a
//!    common-power estimate, and the remaining per-sensor excesses are
//!    read directly off the diagonal.
//! 3. **Phase 2** solves the generalized eigenproblem of the covariance
//!    against the reconstructed noise covariance, which restores the
//!    finite-sample accuracy lost to the stripped diagonal.
//!
//! Both phases cost a constant number of `O(M³)` eigendecompositions; no
//! iteration between subspace and noise estimates is required.
//!
//! Modules:
//! - [`linalg`]: dense complex Hermitian eigensolvers and orthonormalization
//! - [`array`]: array geometry, source and noise descriptions, population
//!   covariance construction
//! - [`snapshots`]: reproducible snapshot synthesis and sample covariance
//! - [`estimator`]: the two-phase pipeline plus spectral MUSIC peak search
//! - [`harness`]: seeded Monte Carlo experiments with CSV output
//!
//! All numeric code is generic over the real scalar through [`Scalar`];
//! concrete `f64` aliases are exported at the crate root.

pub mod array;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod snapshots;

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real scalar type underlying all complex arithmetic in this crate.
///
/// Implemented for `f32` and `f64`. The bounds pull in everything the
/// numeric kernels need: IEEE float behaviour, mathematical constants,
/// compound assignment, conversions from literals and counts, iterator
/// sums, and thread-safety for the parallel harness.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Draws one sample from the standard normal distribution N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossless widening to `f64` for reporting and error payloads.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// `f64` complex matrix.
pub type ComplexMatrix64 = linalg::ComplexMatrix<f64>;
/// `f64` Hermitian matrix.
pub type HermitianMatrix64 = linalg::HermitianMatrix<f64>;
/// `f64` real diagonal matrix.
pub type DiagonalMatrix64 = linalg::DiagonalMatrix<f64>;
/// `f64` eigendecomposition result.
pub type EigenPairs64 = linalg::EigenPairs<f64>;
/// `f64` array geometry.
pub type ArrayGeometry64 = array::ArrayGeometry<f64>;
/// `f64` source description.
pub type SourceSet64 = array::SourceSet<f64>;
/// `f64` per-sensor noise description.
pub type NoiseProfile64 = array::NoiseProfile<f64>;
/// `f64` snapshot matrix.
pub type SnapshotMatrix64 = snapshots::SnapshotMatrix<f64>;
/// `f64` scan grid.
pub type GridSpec64 = estimator::GridSpec<f64>;
/// `f64` pseudospectrum.
pub type Pseudospectrum64 = estimator::Pseudospectrum<f64>;
/// `f64` DOA estimate.
pub type DoaEstimate64 = estimator::DoaEstimate<f64>;
