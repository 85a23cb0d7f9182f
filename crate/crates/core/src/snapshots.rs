//! Reproducible snapshot synthesis and the sample covariance.
//!
//! Snapshots follow the narrowband model `x(t) = A·s(t) + n(t)` with
//! circularly symmetric complex Gaussian sources and noise: each complex
//! draw is `(g₁ + j·g₂)·√(v/2)` with independent standard normal `g₁, g₂`,
//! so its variance is exactly `v`. Draw order is fixed by contract: per
//! snapshot, first the `L` source coefficients, then the `M` noise
//! entries, each as a (re, im) pair, which makes every synthesized
//! matrix a pure function of `(seed, stream_id)`.
//!
//! Streams come from a counter-based generator, so disjoint
//! `stream_id`s give statistically independent sequences; the Monte
//! Carlo harness hands every trial its own stream.

use std::io::{self, Read, Write};

use num_complex::Complex;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::array::{steering_vector, ArrayGeometry, NoiseProfile, SourceSet};
use crate::linalg::{ComplexMatrix, HermitianMatrix};
use crate::Scalar;

/// Magic prefix of the snapshot dump format.
const DUMP_MAGIC: &[u8; 4] = b"DOAS";

/// Fully determines one synthesized snapshot matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngSeed {
    /// Base seed shared by a whole experiment.
    pub seed: u64,
    /// Substream within the experiment (trial, realization, ...).
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }
}

/// `M × N` matrix of array snapshots, one time sample per column.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix<T> {
    mat: ComplexMatrix<T>,
}

impl<T: Scalar> SnapshotMatrix<T> {
    /// Wraps an existing matrix: rows are sensors, columns snapshots.
    pub fn from_matrix(mat: ComplexMatrix<T>) -> Self {
        Self { mat }
    }

    pub fn sensors(&self) -> usize {
        self.mat.rows()
    }

    pub fn count(&self) -> usize {
        self.mat.cols()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.mat
    }
}

/// Synthesizes `count` snapshots of the given scene.
pub fn generate_snapshots<T: Scalar>(
    geometry: &ArrayGeometry<T>,
    sources: &SourceSet<T>,
    noise: &NoiseProfile<T>,
    count: usize,
    seed: RngSeed,
) -> SnapshotMatrix<T> {
    let m = geometry.sensors();
    assert_eq!(noise.sensors(), m, "noise profile must cover every sensor");
    assert!(sources.count() < m, "need fewer sources than sensors");
    assert!(count >= 1, "need at least one snapshot");

    let mut rng = ChaCha8Rng::seed_from_u64(seed.seed);
    rng.set_stream(seed.stream_id);

    let half = T::from(0.5).unwrap();
    let source_amps: Vec<T> = sources.powers().iter().map(|&p| (p * half).sqrt()).collect();
    let noise_amps: Vec<T> = noise.variances().iter().map(|&v| (v * half).sqrt()).collect();
    let steerings: Vec<Vec<Complex<T>>> = sources
        .doas_deg()
        .iter()
        .map(|&theta| steering_vector(geometry, theta).expect("validated source direction"))
        .collect();

    let mut mat = ComplexMatrix::zeros(m, count);
    for t in 0..count {
        for (k, a) in steerings.iter().enumerate() {
            let re = T::standard_normal(&mut rng);
            let im = T::standard_normal(&mut rng);
            let s = Complex::new(re, im).scale(source_amps[k]);
            for i in 0..m {
                mat[(i, t)] += a[i] * s;
            }
        }
        for i in 0..m {
            let re = T::standard_normal(&mut rng);
            let im = T::standard_normal(&mut rng);
            mat[(i, t)] += Complex::new(re, im).scale(noise_amps[i]);
        }
    }
    SnapshotMatrix { mat }
}

/// Sample covariance `R̂ = (1/N) Σ_t x(t) x(t)ᴴ`, symmetrized in storage.
pub fn sample_covariance<T: Scalar>(snapshots: &SnapshotMatrix<T>) -> HermitianMatrix<T> {
    let m = snapshots.sensors();
    let n = snapshots.count();
    assert!(n >= 1, "need at least one snapshot");
    let x = snapshots.matrix();
    let scale = T::one() / T::from(n).unwrap();

    HermitianMatrix::from_fn(m, |i, j| {
        let mut acc = Complex::zero();
        for t in 0..n {
            acc += x[(i, t)] * x[(j, t)].conj();
        }
        acc.scale(scale)
    })
}

/// Writes a snapshot matrix in the binary dump format: a 16-byte header
/// (`"DOAS"`, sensor count as LE u32, snapshot count as LE u32, four
/// reserved zero bytes) followed by the entries row-major as interleaved
/// little-endian f64 (re, im) pairs.
pub fn write_snapshots<T: Scalar, W: Write>(snapshots: &SnapshotMatrix<T>, out: &mut W) -> io::Result<()> {
    let m = snapshots.sensors();
    let n = snapshots.count();
    let m32 = u32::try_from(m).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "sensor count exceeds u32"))?;
    let n32 = u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "snapshot count exceeds u32"))?;

    out.write_all(DUMP_MAGIC)?;
    out.write_all(&m32.to_le_bytes())?;
    out.write_all(&n32.to_le_bytes())?;
    out.write_all(&[0u8; 4])?;
    for i in 0..m {
        for t in 0..n {
            let z = snapshots.matrix()[(i, t)];
            out.write_all(&z.re.as_f64().to_le_bytes())?;
            out.write_all(&z.im.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a snapshot matrix written by [`write_snapshots`].
pub fn read_snapshots<T: Scalar, R: Read>(input: &mut R) -> io::Result<SnapshotMatrix<T>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[0..4] != DUMP_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad snapshot dump magic"));
    }
    let m = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if m == 0 || n == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "empty snapshot dump"));
    }
    m.checked_mul(n)
        .and_then(|e| e.checked_mul(16))
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "snapshot dump dimensions overflow"))?;

    let mut mat = ComplexMatrix::zeros(m, n);
    let mut buf = [0u8; 16];
    for i in 0..m {
        for t in 0..n {
            input.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[0..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..16].try_into().unwrap());
            mat[(i, t)] = Complex::new(
                T::from(re).expect("f64 entry converts to scalar"),
                T::from(im).expect("f64 entry converts to scalar"),
            );
        }
    }
    Ok(SnapshotMatrix { mat })
}
