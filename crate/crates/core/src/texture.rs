//! Texture quantifiers.
//!
//! The grand sum `Σ(ρ)` adds up every entry of `ρ` in the computational basis
//! and equals `D⟨f₁|ρ|f₁⟩`. Rugosity is `−ln(Σ/D)`; it vanishes only on the
//! textureless state `f₁` and diverges on the subspace orthogonal to it.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::states::{fourier_matrix, BlochVector, DensityOperator};
use crate::tensor::{ComplexMatrix, EPS};

/// Grand sum of an arbitrary square matrix (complex in general).
pub fn grand_sum_matrix(m: &ComplexMatrix) -> crate::tensor::C64 {
    m.entry_sum()
}

/// `Σ(ρ) = Σ_ij ρ_ij`. Fails if the imaginary residue exceeds tolerance.
pub fn grand_sum(rho: &DensityOperator) -> Result<f64> {
    let s = grand_sum_matrix(rho.matrix());
    if s.im.abs() > EPS {
        return Err(Error::NotHermitian(s.im.abs()));
    }
    Ok(s.re)
}

/// Grand sum with respect to the Fourier basis `{|f_k⟩}`.
///
/// The uniform superposition of Fourier kets is `|1⟩`, so this equals `D ρ₁₁`.
pub fn grand_sum_fourier(rho: &DensityOperator) -> Result<f64> {
    let f = fourier_matrix(rho.dim());
    let in_fourier = f.adjoint().matmul(rho.matrix())?.matmul(&f)?;
    let s = in_fourier.entry_sum();
    if s.im.abs() > EPS {
        return Err(Error::NotHermitian(s.im.abs()));
    }
    Ok(s.re)
}

/// `Σ/D` below this is indistinguishable from round-off and counts as zero.
pub const ZERO_GRAND_SUM_RATIO: f64 = 1e-14;

/// `−ln(Σ/D)`, with `+∞` when the grand sum vanishes.
pub fn rugosity_from_grand_sum(grand_sum: f64, dim: usize) -> f64 {
    // Round-off can push Σ slightly outside [0, D].
    let ratio = (grand_sum / dim as f64).clamp(0.0, 1.0);
    if ratio <= ZERO_GRAND_SUM_RATIO {
        f64::INFINITY
    } else {
        (-ratio.ln()).max(0.0)
    }
}

pub fn rugosity(rho: &DensityOperator) -> Result<f64> {
    Ok(rugosity_from_grand_sum(grand_sum(rho)?, rho.dim()))
}

/// Probability of the outcome `|f₁⟩`: `Tr(ρ f₁) = Σ/D`.
pub fn projective_probability(rho: &DensityOperator) -> Result<f64> {
    Ok((grand_sum(rho)? / rho.dim() as f64).clamp(0.0, 1.0))
}

/// Qubit imaginarity `2|y|`.
pub fn imaginarity_qubit(rho: &DensityOperator) -> Result<f64> {
    if rho.dim() != 2 {
        return Err(Error::mismatch("qubit (D = 2)", rho.dim()));
    }
    Ok(2.0 * BlochVector::of(rho)?.y.abs())
}

/// Compares `𝔯(⊗ρ_ν)` with `Σ_ν 𝔯(ρ_ν)`; returns `(lhs, rhs)`.
pub fn additivity_check(rhos: &[DensityOperator]) -> Result<(f64, f64)> {
    let Some((first, rest)) = rhos.split_first() else {
        return Err(Error::mismatch("at least one factor", 0));
    };
    let mut product = first.clone();
    for r in rest {
        product = product.kron(r)?;
    }
    let lhs = rugosity(&product)?;
    let rhs = rhos.iter().map(rugosity).sum::<Result<f64>>()?;
    Ok((lhs, rhs))
}

/// Grand sum, rugosity and `f₁` probability for one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TextureReading {
    pub dim: usize,
    pub grand_sum: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub rugosity: f64,
    pub projective_probability: f64,
}

impl TextureReading {
    pub fn of(rho: &DensityOperator) -> Result<Self> {
        let grand_sum = grand_sum(rho)?;
        Ok(Self {
            dim: rho.dim(),
            grand_sum,
            rugosity: rugosity_from_grand_sum(grand_sum, rho.dim()),
            projective_probability: (grand_sum / rho.dim() as f64).clamp(0.0, 1.0),
        })
    }
}

/// Writes `+∞` as the string `"inf"`, finite values as numbers.
pub fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}
