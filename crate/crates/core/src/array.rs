//! Uniform linear array model: geometry, sources, per-sensor noise, and
//! the population covariance they generate.
//!
//! Angles are degrees at every public boundary and are converted to
//! radians only inside steering-vector evaluation. The steering phase
//! convention is `a_m(θ) = exp(+j·2π·d·m·sin θ)` for sensor index
//! `m = 0..M−1` with spacing `d` in wavelengths.

use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

use crate::linalg::{DiagonalMatrix, HermitianMatrix};
use crate::Scalar;

/// Errors from model construction and evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    /// Steering angles must lie strictly inside (−90°, 90°).
    #[error("angle {theta_deg} deg outside the open interval (-90, 90)")]
    AngleOutOfRange { theta_deg: f64 },
    /// Geometry parameters out of range.
    #[error("invalid array geometry: {context}")]
    InvalidGeometry { context: String },
    /// Source description violates its invariants.
    #[error("invalid source set: {context}")]
    InvalidSources { context: String },
    /// Noise description violates its invariants.
    #[error("invalid noise profile: {context}")]
    InvalidNoise { context: String },
}

/// Uniform linear array with `sensors ≥ 2` elements spaced `spacing`
/// wavelengths apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayGeometry<T> {
    sensors: usize,
    spacing: T,
}

impl<T: Scalar> ArrayGeometry<T> {
    pub fn new(sensors: usize, spacing: T) -> Result<Self, ModelError> {
        if sensors < 2 {
            return Err(ModelError::InvalidGeometry {
                context: format!("need at least 2 sensors, got {sensors}"),
            });
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(ModelError::InvalidGeometry {
                context: format!("spacing must be a positive finite number of wavelengths, got {spacing}"),
            });
        }
        Ok(Self { sensors, spacing })
    }

    /// Half-wavelength array, the usual configuration.
    pub fn half_wavelength(sensors: usize) -> Result<Self, ModelError> {
        Self::new(sensors, T::from(0.5).unwrap())
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }
}

/// Far-field narrowband sources: directions in degrees and per-source
/// powers. Directions are distinct and strictly inside (−90°, 90°);
/// powers are positive.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSet<T> {
    doas_deg: Vec<T>,
    powers: Vec<T>,
}

impl<T: Scalar> SourceSet<T> {
    pub fn new(doas_deg: Vec<T>, powers: Vec<T>) -> Result<Self, ModelError> {
        if doas_deg.is_empty() {
            return Err(ModelError::InvalidSources {
                context: "need at least one source".into(),
            });
        }
        if doas_deg.len() != powers.len() {
            return Err(ModelError::InvalidSources {
                context: format!("{} directions but {} powers", doas_deg.len(), powers.len()),
            });
        }
        let limit = T::from(90.0).unwrap();
        for &theta in &doas_deg {
            if !theta.is_finite() || theta <= -limit || theta >= limit {
                return Err(ModelError::InvalidSources {
                    context: format!("direction {theta} deg outside the open interval (-90, 90)"),
                });
            }
        }
        for i in 0..doas_deg.len() {
            for j in (i + 1)..doas_deg.len() {
                if doas_deg[i] == doas_deg[j] {
                    return Err(ModelError::InvalidSources {
                        context: format!("directions must be distinct, {} deg repeats", doas_deg[i]),
                    });
                }
            }
        }
        if powers.iter().any(|&p| !(p > T::zero()) || !p.is_finite()) {
            return Err(ModelError::InvalidSources {
                context: "source powers must be positive".into(),
            });
        }
        Ok(Self { doas_deg, powers })
    }

    /// All sources share one power.
    pub fn equal_power(doas_deg: Vec<T>, power: T) -> Result<Self, ModelError> {
        let powers = vec![power; doas_deg.len()];
        Self::new(doas_deg, powers)
    }

    /// Bypasses validation; test-only escape hatch for degenerate cases
    /// such as zero-power sources.
    #[cfg(test)]
    pub(crate) fn unchecked(doas_deg: Vec<T>, powers: Vec<T>) -> Self {
        Self { doas_deg, powers }
    }

    pub fn count(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn doas_deg(&self) -> &[T] {
        &self.doas_deg
    }

    pub fn powers(&self) -> &[T] {
        &self.powers
    }

    /// Sum of source powers; the amount phase 1 subtracts from every
    /// covariance diagonal entry.
    pub fn total_power(&self) -> T {
        self.powers.iter().copied().sum()
    }
}

/// Per-sensor noise variances, all positive.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseProfile<T> {
    variances: Vec<T>,
}

impl<T: Scalar> NoiseProfile<T> {
    pub fn new(variances: Vec<T>) -> Result<Self, ModelError> {
        if variances.is_empty() {
            return Err(ModelError::InvalidNoise {
                context: "need at least one sensor variance".into(),
            });
        }
        if variances.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(ModelError::InvalidNoise {
                context: "noise variances must be positive".into(),
            });
        }
        Ok(Self { variances })
    }

    /// Spatially uniform noise with common variance `q`.
    pub fn uniform(sensors: usize, q: T) -> Result<Self, ModelError> {
        Self::new(vec![q; sensors])
    }

    /// Bypasses validation; test-only escape hatch for degenerate cases
    /// such as noise-free synthesis.
    #[cfg(test)]
    pub(crate) fn unchecked(variances: Vec<T>) -> Self {
        Self { variances }
    }

    pub fn sensors(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    /// Worst-case noise power ratio, max variance over min variance.
    pub fn wnpr(&self) -> T {
        let mut min = self.variances[0];
        let mut max = self.variances[0];
        for &v in &self.variances[1..] {
            min = min.min(v);
            max = max.max(v);
        }
        max / min
    }

    /// Diagonal-matrix view.
    pub fn to_diagonal(&self) -> DiagonalMatrix<T> {
        DiagonalMatrix::new(self.variances.clone())
    }
}

/// Steering vector of the array towards `theta_deg`, which must lie
/// strictly inside (−90°, 90°).
pub fn steering_vector<T: Scalar>(
    geometry: &ArrayGeometry<T>,
    theta_deg: T,
) -> Result<Vec<Complex<T>>, ModelError> {
    let limit = T::from(90.0).unwrap();
    if !theta_deg.is_finite() || theta_deg <= -limit || theta_deg >= limit {
        return Err(ModelError::AngleOutOfRange {
            theta_deg: theta_deg.as_f64(),
        });
    }
    let two_pi = T::PI() + T::PI();
    let phase_step = two_pi * geometry.spacing() * theta_deg.to_radians().sin();
    Ok((0..geometry.sensors())
        .map(|m| Complex::from_polar(T::one(), phase_step * T::from(m).unwrap()))
        .collect())
}

/// Population covariance `R = A P Aᴴ + Q` for the given sources and
/// noise. Its diagonal is `Σₖ sₖ + σ_m²` per sensor.
pub fn population_covariance<T: Scalar>(
    geometry: &ArrayGeometry<T>,
    sources: &SourceSet<T>,
    noise: &NoiseProfile<T>,
) -> HermitianMatrix<T> {
    let m = geometry.sensors();
    assert_eq!(noise.sensors(), m, "noise profile must cover every sensor");
    assert!(sources.count() < m, "need fewer sources than sensors");

    let steerings: Vec<Vec<Complex<T>>> = sources
        .doas_deg()
        .iter()
        .map(|&theta| steering_vector(geometry, theta).expect("validated source direction"))
        .collect();

    HermitianMatrix::from_fn(m, |i, j| {
        let mut acc = Complex::zero();
        for (k, a) in steerings.iter().enumerate() {
            acc += (a[i] * a[j].conj()).scale(sources.powers()[k]);
        }
        if i == j {
            acc += Complex::new(noise.variances()[i], T::zero());
        }
        acc
    })
}

/// Common source power that realizes a target array SNR against the
/// given noise profile. The array SNR of equal-power sources is
/// `(σ_s²/M)·Σ_m σ_m⁻²`, so the inverse is
/// `σ_s² = 10^(SNR_dB/10) · M / Σ_m σ_m⁻²`.
pub fn signal_power_for_snr<T: Scalar>(snr_db: T, noise: &NoiseProfile<T>) -> T {
    let m = T::from(noise.sensors()).unwrap();
    let inv_sum: T = noise.variances().iter().map(|&v| T::one() / v).sum();
    let ten = T::from(10.0).unwrap();
    let linear = ten.powf(snr_db / ten);
    linear * m / inv_sum
}

/// Array SNR in dB realized by a common source power; inverse of
/// [`signal_power_for_snr`].
pub fn snr_from_signal_power<T: Scalar>(signal_power: T, noise: &NoiseProfile<T>) -> T {
    let m = T::from(noise.sensors()).unwrap();
    let inv_sum: T = noise.variances().iter().map(|&v| T::one() / v).sum();
    let ten = T::from(10.0).unwrap();
    ten * (signal_power * inv_sum / m).log10()
}
