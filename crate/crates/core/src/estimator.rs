//! Direction-of-arrival estimation from a covariance estimate.
//!
//! Three subspace extraction modes feed one MUSIC scan:
//!
//! - **Classical**: eigenvectors of the covariance itself. Exact only for
//!   spatially uniform noise; kept as the baseline.
//! - **Phase 1**: eigenvectors of the diagonal-stripped covariance. With
//!   uncorrelated noise the stripped population matrix is
//!   `A P Aᴴ − (Σₖ sₖ)·I`, so its `M − L` smallest eigenvectors span the
//!   exact noise subspace for *any* per-sensor noise powers.
//! - **Phase 2**: the phase-1 subspace prices a reconstruction of the
//!   noise covariance `Q̂ = σ̂²·I + Q̂_nun`, and the `M − L` smallest
//!   generalized eigenvectors of `(R, Q̂)` give a refined subspace. The
//!   diagonal excess `Q̂_nun = diag(R) − c` comes straight off the
//!   covariance diagonal with `c` its smallest entry; the common floor
//!   `σ̂²` is recovered at that same reference sensor `k` from
//!   `σ̂² = (eₖᵀ R U Uᴴ eₖ) / (eₖᵀ U Uᴴ eₖ)`, valid because the noise
//!   subspace annihilates the signal part of row `k` and the stripped
//!   diagonal contributes nothing there.
//!
//! Phase 2 falls back to the phase-1 subspace, flagged, whenever the
//! reconstruction is unusable (non-positive σ̂², degenerate reference row,
//! or a failed generalized decomposition). The scan itself evaluates
//! `S(θ) = 1 / (aᴴ(θ) U Uᴴ a(θ))` on a uniform grid and refines each kept
//! local maximum with a three-point parabolic fit in the log domain.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

use crate::array::{steering_vector, ArrayGeometry};
use crate::linalg::{
    eigh, generalized_eigh, orthonormalize_columns, ComplexMatrix, DiagonalMatrix, HermitianMatrix,
    LinalgError,
};
use crate::Scalar;

/// Errors from subspace extraction and noise-floor recovery.
#[derive(Debug, Error)]
pub enum EstimatorError {
    /// The noise subspace carries almost no energy at the reference
    /// sensor, so the common-power quotient is meaningless.
    #[error("noise subspace energy at the reference sensor is negligible ({denominator:.3e})")]
    DegenerateSubspace { denominator: f64 },
    /// The common-power quotient came out non-positive.
    #[error("estimated common noise power is not positive ({value:.3e})")]
    NonPositiveNoisePower { value: f64 },
    /// Scan grid parameters out of range.
    #[error("invalid scan grid: {context}")]
    InvalidGrid { context: String },
    /// Failure inside an eigensolver or orthonormalization.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Subspace extraction mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Plain covariance eigendecomposition.
    Classical,
    /// Diagonal-stripped covariance eigendecomposition.
    Phase1,
    /// Generalized decomposition against the reconstructed noise covariance.
    Phase2,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Classical, Method::Phase1, Method::Phase2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Classical => "classical",
            Method::Phase1 => "phase1",
            Method::Phase2 => "phase2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "classical" => Ok(Method::Classical),
            "phase1" => Ok(Method::Phase1),
            "phase2" => Ok(Method::Phase2),
            other => Err(format!(
                "unknown method '{other}' (expected classical, phase1 or phase2)"
            )),
        }
    }
}

/// Orthonormal basis of an estimated noise subspace.
#[derive(Clone, Debug)]
pub struct NoiseSubspace<T> {
    basis: ComplexMatrix<T>,
    method: Method,
    eigenvalues: Vec<T>,
}

impl<T: Scalar> NoiseSubspace<T> {
    pub fn basis(&self) -> &ComplexMatrix<T> {
        &self.basis
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Eigenvalues retained with the basis, ascending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn sensors(&self) -> usize {
        self.basis.rows()
    }

    /// Subspace dimension `M − L`.
    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    /// Orthogonal projector `U Uᴴ`.
    pub fn projector(&self) -> ComplexMatrix<T> {
        self.basis.projector()
    }
}

/// Reconstructed noise covariance `Q̂ = σ̂²·I + Q̂_nun`.
#[derive(Clone, Debug)]
pub struct NoiseCovEstimate<T> {
    q_hat: DiagonalMatrix<T>,
    sigma2: T,
    anchor: usize,
    anchor_diag: T,
    floored: bool,
}

impl<T: Scalar> NoiseCovEstimate<T> {
    pub fn q_hat(&self) -> &DiagonalMatrix<T> {
        &self.q_hat
    }

    /// Estimated common noise floor σ̂².
    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    /// Reference sensor: index of the smallest covariance diagonal entry.
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// Covariance diagonal value at the reference sensor.
    pub fn anchor_diag(&self) -> T {
        self.anchor_diag
    }

    /// Whether any entry had to be clamped to the positivity floor.
    pub fn floored(&self) -> bool {
        self.floored
    }
}

/// Uniform scan grid over an open angular interval, degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    min_deg: T,
    max_deg: T,
    step_deg: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(min_deg: T, max_deg: T, step_deg: T) -> Result<Self, EstimatorError> {
        let limit = T::from(90.0).unwrap();
        if !min_deg.is_finite() || !max_deg.is_finite() || !step_deg.is_finite() {
            return Err(EstimatorError::InvalidGrid {
                context: "grid parameters must be finite".into(),
            });
        }
        if min_deg < -limit || max_deg > limit || min_deg >= max_deg {
            return Err(EstimatorError::InvalidGrid {
                context: format!(
                    "grid [{}, {}] must satisfy -90 <= min < max <= 90",
                    min_deg.as_f64(),
                    max_deg.as_f64()
                ),
            });
        }
        if !(step_deg > T::zero()) {
            return Err(EstimatorError::InvalidGrid {
                context: "grid step must be positive".into(),
            });
        }
        if (max_deg - min_deg) / step_deg < T::from(4.0).unwrap() {
            return Err(EstimatorError::InvalidGrid {
                context: "grid must contain at least three interior points".into(),
            });
        }
        Ok(Self {
            min_deg,
            max_deg,
            step_deg,
        })
    }

    /// Full scan at the default 0.05° resolution.
    pub fn default_scan() -> Self {
        Self::new(
            T::from(-90.0).unwrap(),
            T::from(90.0).unwrap(),
            T::from(0.05).unwrap(),
        )
        .expect("default grid parameters are valid")
    }

    pub fn min_deg(&self) -> T {
        self.min_deg
    }

    pub fn max_deg(&self) -> T {
        self.max_deg
    }

    pub fn step_deg(&self) -> T {
        self.step_deg
    }

    /// Grid points, both interval ends excluded.
    pub fn angles(&self) -> Vec<T> {
        let guard = self.step_deg * T::from(1e-6).unwrap();
        let mut out = Vec::new();
        let mut i = 1usize;
        loop {
            let theta = self.min_deg + self.step_deg * T::from(i).unwrap();
            if theta >= self.max_deg - guard {
                break;
            }
            out.push(theta);
            i += 1;
        }
        out
    }
}

/// Sampled MUSIC pseudospectrum.
#[derive(Clone, Debug)]
pub struct Pseudospectrum<T> {
    grid_deg: Vec<T>,
    values: Vec<T>,
    method: Method,
}

impl<T: Scalar> Pseudospectrum<T> {
    pub fn grid_deg(&self) -> &[T] {
        &self.grid_deg
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn method(&self) -> Method {
        self.method
    }
}

/// Estimated directions, ascending, degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct DoaEstimate<T> {
    doas_deg: Vec<T>,
    method: Method,
    padded: bool,
}

impl<T: Scalar> DoaEstimate<T> {
    pub fn doas_deg(&self) -> &[T] {
        &self.doas_deg
    }

    /// Method that actually produced the subspace (after any fallback).
    pub fn method(&self) -> Method {
        self.method
    }

    /// True when fewer local maxima were found than sources requested and
    /// the remainder was filled with the largest leftover grid values.
    pub fn padded(&self) -> bool {
        self.padded
    }
}

/// Full result of [`estimate_doa`].
#[derive(Clone, Debug)]
pub struct DoaOutcome<T> {
    /// The direction estimates.
    pub estimate: DoaEstimate<T>,
    /// Reconstructed noise covariance, when phase 2 produced one.
    pub noise_cov: Option<NoiseCovEstimate<T>>,
    /// True when phase 2 failed and the phase-1 subspace was used instead.
    pub fell_back: bool,
}

/// Copy of `r` with its diagonal zeroed; off-diagonal entries are
/// preserved exactly.
pub fn strip_diagonal<T: Scalar>(r: &HermitianMatrix<T>) -> HermitianMatrix<T> {
    HermitianMatrix::from_fn(r.dim(), |i, j| if i == j { Complex::zero() } else { r[(i, j)] })
}

/// Noise subspace from the full covariance eigendecomposition.
pub fn classical_noise_subspace<T: Scalar>(
    r: &HermitianMatrix<T>,
    sources: usize,
) -> Result<NoiseSubspace<T>, EstimatorError> {
    let m = r.dim();
    assert!(sources >= 1 && sources < m, "need 1 <= sources < sensors");
    let ep = eigh(r)?;
    let keep = m - sources;
    Ok(NoiseSubspace {
        basis: ep.smallest_vectors(keep),
        method: Method::Classical,
        eigenvalues: ep.values()[..keep].to_vec(),
    })
}

/// Noise subspace from the diagonal-stripped covariance: the `M − L`
/// eigenvectors of smallest eigenvalue.
///
/// `stripped` must already have a zero diagonal, see [`strip_diagonal`].
pub fn phase1_noise_subspace<T: Scalar>(
    stripped: &HermitianMatrix<T>,
    sources: usize,
) -> Result<NoiseSubspace<T>, EstimatorError> {
    let m = stripped.dim();
    assert!(sources >= 1 && sources < m, "need 1 <= sources < sensors");
    let ep = eigh(stripped)?;
    let keep = m - sources;
    Ok(NoiseSubspace {
        basis: ep.smallest_vectors(keep),
        method: Method::Phase1,
        eigenvalues: ep.values()[..keep].to_vec(),
    })
}

/// Index of the smallest covariance diagonal entry; ties resolve to the
/// smallest index.
pub fn smallest_diag_index<T: Scalar>(r: &HermitianMatrix<T>) -> usize {
    let diag = r.diag();
    let mut best = 0;
    for (i, &d) in diag.iter().enumerate().skip(1) {
        if d < diag[best] {
            best = i;
        }
    }
    best
}

/// Common noise floor estimate
/// `σ̂² = (eₖᵀ R U Uᴴ eₖ) / (eₖᵀ U Uᴴ eₖ)` at reference sensor `k`.
pub fn estimate_common_power<T: Scalar>(
    r: &HermitianMatrix<T>,
    subspace: &NoiseSubspace<T>,
    k: usize,
) -> Result<T, EstimatorError> {
    let m = r.dim();
    assert_eq!(subspace.sensors(), m, "subspace must match covariance order");
    assert!(k < m, "reference sensor out of range");

    let u = subspace.basis();
    // w = U Uᴴ eₖ without forming the projector.
    let coeffs: Vec<Complex<T>> = (0..u.cols()).map(|l| u[(k, l)].conj()).collect();
    let w = u.mul_vec(&coeffs);

    let den = w[k].re;
    if den.abs() < T::from(1e-10).unwrap() {
        return Err(EstimatorError::DegenerateSubspace {
            denominator: den.as_f64(),
        });
    }
    let mut num = Complex::<T>::zero();
    for j in 0..m {
        num += r[(k, j)] * w[j];
    }
    let imag_bound = T::from(1e-8).unwrap() * T::one().max(num.re.abs());
    if num.im.abs() > imag_bound {
        log::warn!(
            "common-power quotient has imaginary residue {:.3e}",
            num.im.as_f64()
        );
    }
    let sigma2 = num.re / den;
    if !(sigma2 > T::zero()) {
        return Err(EstimatorError::NonPositiveNoisePower {
            value: sigma2.as_f64(),
        });
    }
    Ok(sigma2)
}

/// Per-sensor noise excess over the common floor, read off the covariance
/// diagonal: `Q̂_nun = diag(R) − min(diag(R))`. The reference sensor's
/// entry is exactly zero.
pub fn build_qnun<T: Scalar>(r: &HermitianMatrix<T>) -> DiagonalMatrix<T> {
    let diag = r.diag();
    let c = diag[smallest_diag_index(r)];
    DiagonalMatrix::new(diag.into_iter().map(|d| d - c).collect())
}

/// Assembles `Q̂ = σ̂²·I + Q̂_nun`, clamping entries to a positivity floor
/// of `1e-8` times the largest raw entry so a downstream generalized
/// decomposition never sees a non-positive metric.
pub fn estimate_noise_cov<T: Scalar>(
    sigma2: T,
    qnun: &DiagonalMatrix<T>,
    anchor: usize,
    anchor_diag: T,
) -> NoiseCovEstimate<T> {
    let raw: Vec<T> = qnun.entries().iter().map(|&d| sigma2 + d).collect();
    let max_raw = raw.iter().fold(T::zero(), |acc, &x| acc.max(x));
    let eps = (T::from(1e-8).unwrap() * max_raw).max(T::min_positive_value());
    let mut floored = false;
    let clamped: Vec<T> = raw
        .into_iter()
        .map(|x| {
            if x < eps {
                floored = true;
                eps
            } else {
                x
            }
        })
        .collect();
    NoiseCovEstimate {
        q_hat: DiagonalMatrix::new(clamped),
        sigma2,
        anchor,
        anchor_diag,
        floored,
    }
}

/// Refined noise subspace: the `M − L` smallest generalized eigenvectors
/// of `(R, Q̂)`, re-orthonormalized in the Euclidean inner product so the
/// MUSIC projector is well defined.
pub fn phase2_noise_subspace<T: Scalar>(
    r: &HermitianMatrix<T>,
    noise_cov: &NoiseCovEstimate<T>,
    sources: usize,
) -> Result<NoiseSubspace<T>, EstimatorError> {
    let m = r.dim();
    assert!(sources >= 1 && sources < m, "need 1 <= sources < sensors");
    let ep = generalized_eigh(r, noise_cov.q_hat())?;
    let keep = m - sources;
    let basis = orthonormalize_columns(&ep.smallest_vectors(keep))?;
    Ok(NoiseSubspace {
        basis,
        method: Method::Phase2,
        eigenvalues: ep.values()[..keep].to_vec(),
    })
}

/// MUSIC pseudospectrum `S(θ) = 1 / (aᴴ(θ) U Uᴴ a(θ))` over the grid.
/// Denominators are floored at `1e-12·M` to bound the population-exact
/// nulls, so values are always finite and positive.
pub fn music_pseudospectrum<T: Scalar>(
    subspace: &NoiseSubspace<T>,
    geometry: &ArrayGeometry<T>,
    grid: &GridSpec<T>,
) -> Pseudospectrum<T> {
    let m = geometry.sensors();
    assert_eq!(subspace.sensors(), m, "subspace must match the array");
    let floor = T::from(1e-12).unwrap() * T::from(m).unwrap();
    let u = subspace.basis();
    let grid_deg = grid.angles();

    let values = grid_deg
        .iter()
        .map(|&theta| {
            let a = steering_vector(geometry, theta).expect("grid angles lie inside (-90, 90)");
            let mut den = T::zero();
            for l in 0..u.cols() {
                let mut dot = Complex::zero();
                for i in 0..m {
                    dot += u[(i, l)].conj() * a[i];
                }
                den += dot.norm_sqr();
            }
            T::one() / den.max(floor)
        })
        .collect();

    Pseudospectrum {
        grid_deg,
        values,
        method: subspace.method(),
    }
}

/// Picks the `count` largest strict interior local maxima of the
/// pseudospectrum and refines each with a three-point parabolic fit on
/// `log S`. When fewer maxima exist, the remainder is filled with the
/// largest leftover grid values (unrefined) and the estimate is marked
/// padded. Results come back ascending.
pub fn find_peaks<T: Scalar>(spectrum: &Pseudospectrum<T>, count: usize) -> DoaEstimate<T> {
    let grid = spectrum.grid_deg();
    let values = spectrum.values();
    let n = grid.len();
    assert!(count >= 1, "need at least one direction");
    assert!(n >= 3, "grid too coarse for peak search");

    let mut maxima: Vec<usize> = (1..n - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite spectrum"));
    maxima.truncate(count);

    let half = T::from(0.5).unwrap();
    let mut doas: Vec<T> = maxima
        .iter()
        .map(|&i| {
            let ym = values[i - 1].ln();
            let y0 = values[i].ln();
            let yp = values[i + 1].ln();
            let curvature = ym - (y0 + y0) + yp;
            let mut delta = if curvature < T::zero() {
                (ym - yp) / (curvature + curvature)
            } else {
                T::zero()
            };
            delta = delta.max(-half).min(half);
            let step = (grid[i + 1] - grid[i - 1]) * half;
            grid[i] + delta * step
        })
        .collect();

    let padded = doas.len() < count;
    if padded {
        let mut rest: Vec<usize> = (0..n).filter(|i| !maxima.contains(i)).collect();
        rest.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite spectrum"));
        for &i in rest.iter().take(count - doas.len()) {
            doas.push(grid[i]);
        }
    }
    doas.sort_by(|a, b| a.partial_cmp(b).expect("finite directions"));

    DoaEstimate {
        doas_deg: doas,
        method: spectrum.method(),
        padded,
    }
}

/// Runs the full pipeline for one covariance estimate.
///
/// `Phase2` follows: strip diagonal, phase-1 subspace, noise covariance
/// reconstruction, generalized subspace, scan. If any reconstruction step
/// fails the scan runs on the phase-1 subspace instead and the outcome is
/// flagged `fell_back`; a phase-1 eigensolver failure is not recoverable
/// and propagates.
pub fn estimate_doa<T: Scalar>(
    r: &HermitianMatrix<T>,
    sources: usize,
    geometry: &ArrayGeometry<T>,
    grid: &GridSpec<T>,
    method: Method,
) -> Result<DoaOutcome<T>, EstimatorError> {
    let m = r.dim();
    assert_eq!(geometry.sensors(), m, "geometry must match covariance order");
    assert!(sources >= 1 && sources < m, "need 1 <= sources < sensors");

    let (subspace, noise_cov, fell_back) = match method {
        Method::Classical => (classical_noise_subspace(r, sources)?, None, false),
        Method::Phase1 => {
            let stripped = strip_diagonal(r);
            (phase1_noise_subspace(&stripped, sources)?, None, false)
        }
        Method::Phase2 => {
            let stripped = strip_diagonal(r);
            let phase1 = phase1_noise_subspace(&stripped, sources)?;
            match refine_subspace(r, &phase1, sources) {
                Ok((subspace, est)) => (subspace, Some(est), false),
                Err(err) => {
                    log::warn!("phase 2 fell back to the phase-1 subspace: {err}");
                    (phase1, None, true)
                }
            }
        }
    };

    let spectrum = music_pseudospectrum(&subspace, geometry, grid);
    let estimate = find_peaks(&spectrum, sources);
    Ok(DoaOutcome {
        estimate,
        noise_cov,
        fell_back,
    })
}

/// Noise covariance reconstruction plus the phase-2 subspace; any error
/// here is recoverable by falling back to phase 1.
fn refine_subspace<T: Scalar>(
    r: &HermitianMatrix<T>,
    phase1: &NoiseSubspace<T>,
    sources: usize,
) -> Result<(NoiseSubspace<T>, NoiseCovEstimate<T>), EstimatorError> {
    let anchor = smallest_diag_index(r);
    let sigma2 = estimate_common_power(r, phase1, anchor)?;
    let qnun = build_qnun(r);
    let anchor_diag = r.diag()[anchor];
    let est = estimate_noise_cov(sigma2, &qnun, anchor, anchor_diag);
    let subspace = phase2_noise_subspace(r, &est, sources)?;
    Ok((subspace, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{population_covariance, NoiseProfile, SourceSet};

    /// Single unit-power source at 30° on a 4-sensor half-wavelength
    /// array with graded noise diag{1,2,3,4}.
    fn graded_noise_scene() -> (ArrayGeometry<f64>, HermitianMatrix<f64>) {
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let s = SourceSet::equal_power(vec![30.0], 1.0).unwrap();
        let q = NoiseProfile::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = population_covariance(&g, &s, &q);
        (g, r)
    }

    /// Two unit-power sources at −3° and 6° on an 8-sensor array with a
    /// strongly nonuniform noise profile (power ratio 50).
    fn wide_spread_scene() -> (ArrayGeometry<f64>, HermitianMatrix<f64>) {
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let s = SourceSet::equal_power(vec![-3.0, 6.0], 1.0).unwrap();
        let q = NoiseProfile::new(vec![1.0, 1.0, 1.0, 1.0, 1.0, 20.0, 30.0, 50.0]).unwrap();
        let r = population_covariance(&g, &s, &q);
        (g, r)
    }

    #[test]
    fn strip_diagonal_zeroes_only_the_diagonal() {
        let (_, r) = graded_noise_scene();
        let stripped = strip_diagonal(&r);
        for i in 0..4 {
            assert_eq!(stripped[(i, i)], Complex::new(0.0, 0.0));
            for j in 0..4 {
                if i != j {
                    assert_eq!(stripped[(i, j)], r[(i, j)], "off-diagonal ({i},{j}) changed");
                }
            }
        }
    }

    #[test]
    fn strip_diagonal_of_diagonal_matrix_is_zero() {
        let d = DiagonalMatrix::new(vec![1.0, 2.0, 3.0]);
        let stripped = strip_diagonal(&d.to_hermitian());
        assert_eq!(stripped.frobenius_norm(), 0.0);
    }

    #[test]
    fn phase1_population_eigenvalues_are_minus_total_power() {
        // Stripped population covariance is A P Aᴴ − (Σ sₖ)·I, so the
        // retained eigenvalues all equal −Σ sₖ exactly.
        let (_, r) = graded_noise_scene();
        let sub = phase1_noise_subspace(&strip_diagonal(&r), 1).unwrap();
        assert_eq!(sub.dim(), 3);
        for &v in sub.eigenvalues() {
            assert!((v + 1.0).abs() < 1e-10, "retained eigenvalue {v}");
        }
    }

    #[test]
    fn phase1_subspace_is_orthogonal_to_steering() {
        let (g, r) = wide_spread_scene();
        let sub = phase1_noise_subspace(&strip_diagonal(&r), 2).unwrap();
        for &v in sub.eigenvalues() {
            assert!((v + 2.0).abs() < 1e-9, "retained eigenvalue {v}");
        }
        for theta in [-3.0, 6.0] {
            let a = steering_vector(&g, theta).unwrap();
            for l in 0..sub.dim() {
                let mut dot = Complex::new(0.0, 0.0);
                for i in 0..8 {
                    dot += sub.basis()[(i, l)].conj() * a[i];
                }
                assert!(dot.norm() < 1e-9, "steering leakage {:.3e} at {theta}", dot.norm());
            }
        }
    }

    #[test]
    fn smallest_diag_index_prefers_first_on_ties() {
        let (_, r) = graded_noise_scene();
        assert_eq!(smallest_diag_index(&r), 0);
        let tied = DiagonalMatrix::new(vec![5.0, 2.0, 2.0, 7.0]).to_hermitian();
        assert_eq!(smallest_diag_index(&tied), 1);
        let (_, r8) = wide_spread_scene();
        // Five equal minima at indices 0..4: the first wins.
        assert_eq!(smallest_diag_index(&r8), 0);
    }

    #[test]
    fn common_power_recovers_reference_variance() {
        let (_, r) = graded_noise_scene();
        let sub = phase1_noise_subspace(&strip_diagonal(&r), 1).unwrap();
        let sigma2 = estimate_common_power(&r, &sub, smallest_diag_index(&r)).unwrap();
        assert!((sigma2 - 1.0).abs() < 1e-10, "sigma2 = {sigma2}");

        let (_, r8) = wide_spread_scene();
        let sub8 = phase1_noise_subspace(&strip_diagonal(&r8), 2).unwrap();
        let sigma2 = estimate_common_power(&r8, &sub8, smallest_diag_index(&r8)).unwrap();
        assert!((sigma2 - 1.0).abs() < 1e-10, "sigma2 = {sigma2}");
    }

    #[test]
    fn common_power_under_uniform_noise_is_the_common_variance() {
        let g = ArrayGeometry::<f64>::half_wavelength(5).unwrap();
        let s = SourceSet::equal_power(vec![12.5], 2.0).unwrap();
        let q = NoiseProfile::uniform(5, 3.0).unwrap();
        let r = population_covariance(&g, &s, &q);
        let sub = phase1_noise_subspace(&strip_diagonal(&r), 1).unwrap();
        let sigma2 = estimate_common_power(&r, &sub, smallest_diag_index(&r)).unwrap();
        assert!((sigma2 - 3.0).abs() < 1e-9, "sigma2 = {sigma2}");
    }

    #[test]
    fn common_power_rejects_degenerate_reference_row() {
        // A subspace with no energy at the reference sensor cannot price
        // the common power there.
        let basis = ComplexMatrix::from_fn(3, 1, |i, _| {
            if i == 2 {
                Complex::new(1.0, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        });
        let sub = NoiseSubspace {
            basis,
            method: Method::Phase1,
            eigenvalues: vec![0.0],
        };
        let r = DiagonalMatrix::new(vec![1.0, 2.0, 3.0]).to_hermitian();
        match estimate_common_power(&r, &sub, 0) {
            Err(EstimatorError::DegenerateSubspace { .. }) => {}
            other => panic!("expected degenerate subspace, got {other:?}"),
        }
    }

    #[test]
    fn common_power_rejects_non_positive_quotient() {
        let basis = ComplexMatrix::from_fn(3, 1, |i, _| {
            if i == 0 {
                Complex::new(1.0, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        });
        let sub = NoiseSubspace {
            basis,
            method: Method::Phase1,
            eigenvalues: vec![0.0],
        };
        let r = DiagonalMatrix::new(vec![-5.0, 2.0, 3.0]).to_hermitian();
        match estimate_common_power(&r, &sub, 0) {
            Err(EstimatorError::NonPositiveNoisePower { value }) => {
                assert!((value + 5.0).abs() < 1e-12);
            }
            other => panic!("expected non-positive power, got {other:?}"),
        }
    }

    #[test]
    fn qnun_is_diagonal_excess_over_minimum() {
        let (_, r) = graded_noise_scene();
        let qnun = build_qnun(&r);
        let expect = [0.0, 1.0, 2.0, 3.0];
        for (got, want) in qnun.entries().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        // Uniform diagonal collapses to all zeros.
        let uniform = DiagonalMatrix::new(vec![4.0; 5]).to_hermitian();
        assert!(build_qnun(&uniform).entries().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noise_cov_assembles_floor_plus_excess() {
        let (_, r) = graded_noise_scene();
        let qnun = build_qnun(&r);
        let est = estimate_noise_cov(1.0, &qnun, 0, r.diag()[0]);
        let expect = [1.0, 2.0, 3.0, 4.0];
        for (got, want) in est.q_hat().entries().iter().zip(expect) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(!est.floored());
        assert_eq!(est.anchor(), 0);
        assert!((est.anchor_diag() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noise_cov_floors_non_positive_entries() {
        let qnun = DiagonalMatrix::new(vec![0.0f64, 3.0, 7.0]);
        let est = estimate_noise_cov(0.0, &qnun, 0, 1.0);
        assert!(est.floored());
        let entries = est.q_hat().entries();
        assert!(entries[0] > 0.0, "floored entry must stay positive");
        assert!((entries[0] - 7e-8).abs() < 1e-12, "floor is 1e-8 of the largest entry");
        assert_eq!(entries[1], 3.0);
        assert_eq!(entries[2], 7.0);
    }

    #[test]
    fn phase2_population_generalized_eigenvalues_are_one() {
        // With the exact noise covariance recovered, the retained
        // generalized eigenvalues of (R, Q̂) are all exactly 1.
        let (_, r) = wide_spread_scene();
        let sub1 = phase1_noise_subspace(&strip_diagonal(&r), 2).unwrap();
        let anchor = smallest_diag_index(&r);
        let sigma2 = estimate_common_power(&r, &sub1, anchor).unwrap();
        let est = estimate_noise_cov(sigma2, &build_qnun(&r), anchor, r.diag()[anchor]);
        let sub2 = phase2_noise_subspace(&r, &est, 2).unwrap();
        for &v in sub2.eigenvalues() {
            assert!((v - 1.0).abs() < 1e-9, "generalized eigenvalue {v}");
        }
        // Phase 1 and phase 2 agree on the population noise subspace.
        let diff = sub1.projector().sub(&sub2.projector()).frobenius_norm();
        assert!(diff < 1e-9, "projector difference {diff:.3e}");
        // The basis is orthonormal in the Euclidean sense after the
        // final orthonormalization pass.
        let gram = sub2.basis().adjoint().matmul(sub2.basis());
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - Complex::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_noise_makes_all_methods_agree() {
        let g = ArrayGeometry::<f64>::half_wavelength(5).unwrap();
        let s = SourceSet::equal_power(vec![12.5], 2.0).unwrap();
        let q = NoiseProfile::uniform(5, 3.0).unwrap();
        let r = population_covariance(&g, &s, &q);

        let classical = classical_noise_subspace(&r, 1).unwrap();
        let phase1 = phase1_noise_subspace(&strip_diagonal(&r), 1).unwrap();
        let anchor = smallest_diag_index(&r);
        let sigma2 = estimate_common_power(&r, &phase1, anchor).unwrap();
        let est = estimate_noise_cov(sigma2, &build_qnun(&r), anchor, r.diag()[anchor]);
        let phase2 = phase2_noise_subspace(&r, &est, 1).unwrap();

        let pc = classical.projector();
        let p1 = phase1.projector();
        let p2 = phase2.projector();
        assert!(pc.sub(&p1).frobenius_norm() < 1e-9);
        assert!(pc.sub(&p2).frobenius_norm() < 1e-9);
        assert!((sigma2 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn grid_spec_validation_and_points() {
        assert!(GridSpec::new(-90.0, 90.0, 0.0).is_err());
        assert!(GridSpec::new(-91.0, 90.0, 0.05).is_err());
        assert!(GridSpec::new(10.0, 10.0, 0.05).is_err());
        assert!(GridSpec::new(0.0, 0.1, 0.05).is_err());

        let grid = GridSpec::<f64>::default_scan();
        let angles = grid.angles();
        assert_eq!(angles.len(), 3599);
        assert!((angles[0] + 89.95).abs() < 1e-9);
        assert!((angles[3598] - 89.95).abs() < 1e-9);
        // Ends are excluded.
        assert!(angles.iter().all(|&a| a > -90.0 && a < 90.0));
    }

    #[test]
    fn music_peaks_at_population_null() {
        let (g, r) = graded_noise_scene();
        let sub = phase1_noise_subspace(&strip_diagonal(&r), 1).unwrap();
        let grid = GridSpec::default_scan();
        let spectrum = music_pseudospectrum(&sub, &g, &grid);
        let est = find_peaks(&spectrum, 1);
        assert!(!est.padded());
        assert!(
            (est.doas_deg()[0] - 30.0).abs() <= 0.01,
            "peak at {}",
            est.doas_deg()[0]
        );
    }

    #[test]
    fn music_resolves_close_pair() {
        // Population subspace, fine grid: exactly two dominant maxima,
        // each within one step of a true direction.
        let (g, r) = wide_spread_scene();
        let sub = phase1_noise_subspace(&strip_diagonal(&r), 2).unwrap();
        let grid = GridSpec::new(-20.0, 20.0, 0.01).unwrap();
        let spectrum = music_pseudospectrum(&sub, &g, &grid);

        let values = spectrum.values();
        let n = values.len();
        let peak_level = values.iter().cloned().fold(0.0f64, f64::max) * 0.5;
        let mut dominant = Vec::new();
        for i in 1..n - 1 {
            if values[i] > values[i - 1] && values[i] > values[i + 1] && values[i] > peak_level {
                dominant.push(spectrum.grid_deg()[i]);
            }
        }
        assert_eq!(dominant.len(), 2, "dominant maxima at {dominant:?}");
        assert!((dominant[0] + 3.0).abs() <= 0.01);
        assert!((dominant[1] - 6.0).abs() <= 0.01);
    }

    #[test]
    fn pseudospectrum_is_scale_invariant_in_peak_locations() {
        let (g, r) = wide_spread_scene();
        let scaled = HermitianMatrix::from_fn(8, |i, j| r[(i, j)].scale(7.3));
        let grid = GridSpec::default_scan();

        let sub_a = phase1_noise_subspace(&strip_diagonal(&r), 2).unwrap();
        let sub_b = phase1_noise_subspace(&strip_diagonal(&scaled), 2).unwrap();
        let est_a = find_peaks(&music_pseudospectrum(&sub_a, &g, &grid), 2);
        let est_b = find_peaks(&music_pseudospectrum(&sub_b, &g, &grid), 2);
        for (a, b) in est_a.doas_deg().iter().zip(est_b.doas_deg()) {
            assert!((a - b).abs() < 1e-9, "peak moved under scaling: {a} vs {b}");
        }
    }

    fn synthetic_spectrum(values: Vec<f64>, step: f64) -> Pseudospectrum<f64> {
        let grid_deg = (0..values.len()).map(|i| i as f64 * step).collect();
        Pseudospectrum {
            grid_deg,
            values,
            method: Method::Phase1,
        }
    }

    #[test]
    fn parabolic_refinement_is_exact_on_log_parabola() {
        // S(θ) = exp(−(θ − θ₀)²) is an exact parabola in the log domain.
        let step = 0.1;
        let theta0 = 3.137;
        let values: Vec<f64> = (0..100)
            .map(|i| {
                let theta = i as f64 * step;
                (-(theta - theta0).powi(2)).exp()
            })
            .collect();
        let est = find_peaks(&synthetic_spectrum(values, step), 1);
        assert!(!est.padded());
        assert!(
            (est.doas_deg()[0] - theta0).abs() < 1e-12,
            "refined peak {}",
            est.doas_deg()[0]
        );
    }

    #[test]
    fn refinement_never_leaves_the_bracketing_cell() {
        // A kinked profile is not a parabola; the refined position must
        // stay within half a step of the sampled maximum.
        let step = 0.5;
        let theta0 = 10.3;
        let values: Vec<f64> = (0..80)
            .map(|i| {
                let theta = i as f64 * step;
                0.1 + (5.0 - (theta - theta0).abs()).max(0.0)
            })
            .collect();
        let est = find_peaks(&synthetic_spectrum(values, step), 1);
        assert!((est.doas_deg()[0] - theta0).abs() <= 0.5 * step + 1e-12);
    }

    #[test]
    fn peaks_come_back_ascending_and_by_magnitude() {
        // Taller bump at 7, shorter at 2; count 1 keeps the taller.
        let step = 0.1;
        let bump = |theta: f64, at: f64, h: f64| h * (-(theta - at).powi(2) / 0.2).exp();
        let values: Vec<f64> = (0..120)
            .map(|i| {
                let theta = i as f64 * step;
                1e-3 + bump(theta, 2.0, 1.0) + bump(theta, 7.0, 4.0)
            })
            .collect();
        let one = find_peaks(&synthetic_spectrum(values.clone(), step), 1);
        assert!((one.doas_deg()[0] - 7.0).abs() < 0.05);
        let two = find_peaks(&synthetic_spectrum(values, step), 2);
        assert!(!two.padded());
        assert!(two.doas_deg()[0] < two.doas_deg()[1], "not ascending");
        assert!((two.doas_deg()[0] - 2.0).abs() < 0.05);
        assert!((two.doas_deg()[1] - 7.0).abs() < 0.05);
    }

    #[test]
    fn monotone_spectrum_pads_with_largest_grid_values() {
        let step = 1.0;
        let values: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        let est = find_peaks(&synthetic_spectrum(values, step), 2);
        assert!(est.padded());
        // No strict interior maxima exist; the two largest grid values
        // sit at indices 9 and 8.
        assert_eq!(est.doas_deg(), &[8.0, 9.0]);
    }

    #[test]
    fn plateau_is_not_a_strict_maximum() {
        let step = 1.0;
        let values = vec![1.0, 2.0, 2.0, 1.0, 0.5];
        let est = find_peaks(&synthetic_spectrum(values, step), 1);
        assert!(est.padded());
        assert_eq!(est.doas_deg(), &[1.0], "largest value at the first plateau point");
    }

    #[test]
    fn estimate_doa_population_recovery_all_methods() {
        let (g, r) = graded_noise_scene();
        let grid = GridSpec::default_scan();
        for method in Method::ALL {
            let out = estimate_doa(&r, 1, &g, &grid, method).unwrap();
            assert!(!out.fell_back, "{method} fell back on population input");
            let theta = out.estimate.doas_deg()[0];
            assert!(
                (theta - 30.0).abs() <= 0.01,
                "{method} estimated {theta} for the population covariance"
            );
        }
    }

    #[test]
    fn estimate_doa_phase2_reports_noise_cov() {
        let (g, r) = wide_spread_scene();
        let grid = GridSpec::default_scan();
        let out = estimate_doa(&r, 2, &g, &grid, Method::Phase2).unwrap();
        assert!(!out.fell_back);
        let est = out.noise_cov.expect("phase 2 produces a noise covariance");
        let expect = [1.0, 1.0, 1.0, 1.0, 1.0, 20.0, 30.0, 50.0];
        for (got, want) in est.q_hat().entries().iter().zip(expect) {
            assert!((got - want).abs() < 1e-9, "q_hat entry {got} vs {want}");
        }
        assert!((est.sigma2() - 1.0).abs() < 1e-9);
        assert_eq!(out.estimate.method(), Method::Phase2);
    }

    #[test]
    fn estimate_doa_falls_back_when_reconstruction_fails() {
        // A negative diagonal drives the common-power quotient negative;
        // phase 2 must fall back to the phase-1 subspace and say so.
        let r = DiagonalMatrix::new(vec![-5.0, -5.0, -5.0, -5.0]).to_hermitian();
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let grid = GridSpec::default_scan();
        let out = estimate_doa(&r, 1, &g, &grid, Method::Phase2).unwrap();
        assert!(out.fell_back);
        assert!(out.noise_cov.is_none());
        assert_eq!(out.estimate.method(), Method::Phase1);
        assert_eq!(out.estimate.doas_deg().len(), 1);
    }

    #[test]
    fn method_names_round_trip() {
        for method in Method::ALL {
            assert_eq!(method.as_str().parse::<Method>().unwrap(), method);
        }
        assert_eq!("Phase2".parse::<Method>().unwrap(), Method::Phase2);
        assert!("esprit".parse::<Method>().is_err());
    }
}
