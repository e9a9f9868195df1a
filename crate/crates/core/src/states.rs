//! State families: computational and Fourier kets, Bloch qubits, Haar-random
//! qubit inputs, and validated density operators.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::QubitBasis;
use crate::error::{Error, Result};
use crate::tensor::{ComplexMatrix, Ket, C64, EPS, ONE, ZERO};

/// A Hermitian, unit-trace matrix. Positivity is checked on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, EPS)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::mismatch(
                "square matrix",
                format!("{}x{}", matrix.rows(), matrix.cols()),
            ));
        }
        let defect = matrix.hermiticity_defect();
        if defect > tol {
            return Err(Error::NotHermitian(defect));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidTrace(tr.re));
        }
        Ok(Self { matrix })
    }

    pub fn from_ket(ket: &Ket) -> Result<Self> {
        let n2 = ket.norm_sqr();
        if (n2 - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(n2));
        }
        Ok(Self {
            matrix: ket.projector(),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)),
        }
    }

    /// Convex combination `Σ_k p_k ρ_k`.
    pub fn mixture(parts: &[(f64, &DensityOperator)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(Error::InvalidWeights("empty ensemble".into()));
        };
        let total: f64 = parts.iter().map(|(p, _)| p).sum();
        if parts.iter().any(|(p, _)| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        let dim = first.dim();
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for (p, rho) in parts {
            acc = acc.try_add(&rho.matrix.scale(C64::new(*p, 0.0)))?;
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn kron(&self, other: &DensityOperator) -> Result<Self> {
        Ok(Self {
            matrix: self.matrix.kron(&other.matrix)?,
        })
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        self.matrix.data().iter().map(C64::norm_sqr).sum()
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with_pure(&self, ket: &Ket) -> Result<f64> {
        Ok(ket.inner(&self.matrix.apply(ket)?).re)
    }

    /// Eigenvalues (ascending) and orthonormal eigenvectors.
    pub fn spectral_decomposition(&self) -> Result<Vec<(f64, Ket)>> {
        hermitian_eigen(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self
            .spectral_decomposition()?
            .first()
            .map_or(0.0, |(lambda, _)| *lambda))
    }

    pub fn is_positive(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }

    /// Eigenvector of the largest eigenvalue.
    pub fn dominant_ket(&self) -> Result<Ket> {
        self.spectral_decomposition()?
            .pop()
            .map(|(_, k)| k)
            .ok_or_else(|| Error::Eigen("empty spectrum".into()))
    }
}

/// Eigen-pairs of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<Vec<(f64, Ket)>> {
    if !m.is_square() {
        return Err(Error::Eigen("matrix is not square".into()));
    }
    let n = m.rows();
    let dm = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
    let eig = dm.symmetric_eigen();
    let mut pairs: Vec<(f64, Ket)> = (0..n)
        .map(|k| {
            let col = eig.eigenvectors.column(k);
            (eig.eigenvalues[k], Ket::from_amplitudes(col.iter().copied().collect()))
        })
        .collect();
    if pairs.iter().any(|(l, _)| !l.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs)
}

/// Fourier ket `|f_k⟩ = D^{-1/2} Σ_j ω^{(k−1)(j−1)} |j⟩`, with 1-based `k`.
pub fn fourier_ket(dim: usize, k: usize) -> Result<Ket> {
    if dim == 0 || k == 0 || k > dim {
        return Err(Error::IndexOutOfRange { index: k, max: dim });
    }
    let norm = 1.0 / (dim as f64).sqrt();
    let amps = (0..dim)
        .map(|j| {
            let phase = 2.0 * PI * (((k - 1) * j) % dim) as f64 / dim as f64;
            C64::from_polar(norm, phase)
        })
        .collect();
    Ok(Ket::from_amplitudes(amps))
}

/// The textureless state `|f₁⟩`.
pub fn textureless_ket(dim: usize) -> Ket {
    fourier_ket(dim, 1).expect("dimension is positive")
}

/// Unitary whose columns are `|f₁⟩ … |f_D⟩`.
pub fn fourier_matrix(dim: usize) -> ComplexMatrix {
    let kets: Vec<Ket> = (1..=dim).map(|k| fourier_ket(dim, k).expect("k in range")).collect();
    ComplexMatrix::from_fn(dim, dim, |i, j| kets[j].amplitudes()[i])
}

/// Pauli matrices `(σx, σy, σz)`.
pub fn pauli() -> [ComplexMatrix; 3] {
    let i = C64::new(0.0, 1.0);
    [
        ComplexMatrix::from_fn(2, 2, |r, c| if r != c { ONE } else { ZERO }),
        ComplexMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 1) => -i,
            (1, 0) => i,
            _ => ZERO,
        }),
        ComplexMatrix::from_fn(2, 2, |r, c| match (r, c) {
            (0, 0) => ONE,
            (1, 1) => -ONE,
            _ => ZERO,
        }),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let r2 = x * x + y * y + z * z;
        if !r2.is_finite() || r2 > 1.0 + 1e-12 {
            return Err(Error::InvalidBloch(r2));
        }
        Ok(Self { x, y, z })
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Reads `(Tr ρσx, Tr ρσy, Tr ρσz)` off a qubit state.
    pub fn of(rho: &DensityOperator) -> Result<Self> {
        if rho.dim() != 2 {
            return Err(Error::mismatch(2, rho.dim()));
        }
        let [sx, sy, sz] = pauli();
        let comp = |s: &ComplexMatrix| -> Result<f64> { Ok(rho.matrix().matmul(s)?.trace().re) };
        Ok(Self {
            x: comp(&sx)?,
            y: comp(&sy)?,
            z: comp(&sz)?,
        })
    }
}

/// `ρ = ½(𝟙 + xσx + yσy + zσz)`.
pub fn qubit_from_bloch(v: BlochVector) -> Result<DensityOperator> {
    let v = BlochVector::new(v.x, v.y, v.z)?;
    let half = 0.5;
    let m = ComplexMatrix::from_rows(&[
        vec![C64::new(half * (1.0 + v.z), 0.0), C64::new(half * v.x, -half * v.y)],
        vec![C64::new(half * v.x, half * v.y), C64::new(half * (1.0 - v.z), 0.0)],
    ])?;
    DensityOperator::new(m)
}

/// Polar angles of a random input qubit `cos(θ/2)|+⟩ + e^{iφ} sin(θ/2)|−⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaarQubitSample {
    pub theta: f64,
    pub phi: f64,
}

impl HaarQubitSample {
    /// `(a, b) = (cos(θ/2), e^{iφ} sin(θ/2))`.
    pub fn amplitudes(&self) -> (C64, C64) {
        let (s, c) = (self.theta / 2.0).sin_cos();
        (C64::new(c, 0.0), C64::from_polar(s, self.phi))
    }
}

/// Haar-distributed qubit angles: `cos θ` uniform on [−1, 1], `φ` uniform on [0, 2π).
pub fn sample_haar_qubit<R: Rng + ?Sized>(rng: &mut R) -> HaarQubitSample {
    let cos_theta: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    HaarQubitSample {
        theta: cos_theta.clamp(-1.0, 1.0).acos(),
        phi,
    }
}

/// `a|+⟩ + b|−⟩` in computational coordinates.
pub fn ket_in_basis(sample: &HaarQubitSample, basis: &QubitBasis) -> Ket {
    let (a, b) = sample.amplitudes();
    basis.compose(a, b)
}

/// Haar-random pure state in dimension `dim`.
pub fn random_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Ket {
    loop {
        let amps: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        if let Ok(k) = Ket::normalize(amps) {
            return k;
        }
    }
}

/// Random mixture of `rank` Haar kets with flat-Dirichlet weights.
pub fn random_mixed<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> Result<DensityOperator> {
    let kets: Vec<DensityOperator> = (0..rank.max(1))
        .map(|_| DensityOperator::from_ket(&random_ket(dim, rng)))
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = kets.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let parts: Vec<(f64, &DensityOperator)> = raw.iter().map(|w| w / total).zip(&kets).collect();
    DensityOperator::mixture(&parts)
}
