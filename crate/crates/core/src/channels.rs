//! Texture-free channels.
//!
//! A channel `Λ(ρ) = Σ K_n ρ K_n†` is free when each Kraus operator maps
//! `|f₁⟩` to a multiple of itself. Free channels never lower the grand sum:
//! writing a pure state as `ζ|f₁⟩ + ζ⊥|g⊥⟩` and `A_n = K_n − a_n f₁`,
//!
//! ```text
//! Σ(Λ(φ)) = Σ(φ) + D |ζ⊥|² Σ_n |⟨f₁|A_n|g⊥⟩|²
//! ```
//!
//! The family built here takes the maximal state `|f₂⟩` to any chosen target.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::trial_rng;
use crate::states::{fourier_ket, random_ket, random_mixed, textureless_ket, DensityOperator};
use crate::tensor::{ComplexMatrix, Ket, C64, EPS, ZERO};
use crate::texture::grand_sum;

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    dim: usize,
    ops: Vec<ComplexMatrix>,
}

impl KrausChannel {
    /// Checks shapes only; see [`KrausChannel::completeness_residual`] and
    /// [`KrausChannel::certificate`] for the channel conditions.
    pub fn new(dim: usize, ops: Vec<ComplexMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::mismatch("at least one Kraus operator", 0));
        }
        if let Some(bad) = ops.iter().find(|k| k.rows() != dim || k.cols() != dim) {
            return Err(Error::mismatch(
                format!("{dim}x{dim}"),
                format!("{}x{}", bad.rows(), bad.cols()),
            ));
        }
        Ok(Self { dim, ops })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    /// `‖Σ K†K − 𝟙‖_F`.
    pub fn completeness_residual(&self) -> f64 {
        let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.ops {
            acc = &acc + &(&k.adjoint() * k);
        }
        (&acc - &ComplexMatrix::identity(self.dim)).frobenius_norm()
    }

    /// Eigenvalues `a_n` with `K_n|f₁⟩ = a_n|f₁⟩`, after checking every
    /// residual and `Σ|a_n|² = 1` against `tol`.
    pub fn certificate(&self, tol: f64) -> Result<Vec<C64>> {
        let f1 = textureless_ket(self.dim);
        let mut coeffs = Vec::with_capacity(self.ops.len());
        for (n, k) in self.ops.iter().enumerate() {
            let image = k.apply(&f1)?;
            let a = f1.inner(&image);
            let residual = image.add(&f1.scale(-a)).norm_sqr().sqrt();
            if residual > tol {
                return Err(Error::NotFree(format!(
                    "K_{n}|f1> leaves the f1 ray (residual {residual:.3e})"
                )));
            }
            coeffs.push(a);
        }
        let total: f64 = coeffs.iter().map(C64::norm_sqr).sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::NotFree(format!("sum |a_n|^2 = {total}")));
        }
        Ok(coeffs)
    }

    pub fn is_free(&self, tol: f64) -> bool {
        self.completeness_residual() <= tol && self.certificate(tol).is_ok()
    }

    pub fn apply_matrix(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.rows() != self.dim || m.cols() != self.dim {
            return Err(Error::mismatch(
                format!("{0}x{0}", self.dim),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
        let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.ops {
            acc = acc.try_add(&m.conjugate_by(k)?)?;
        }
        Ok(acc)
    }

    /// `Λ(ρ) = Σ K ρ K†`.
    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        DensityOperator::new(self.apply_matrix(rho.matrix())?)
    }

    /// Convex combination of channels: Kraus sets concatenated with `√w` prefactors.
    pub fn convex_mixture(parts: &[(f64, &KrausChannel)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(Error::InvalidWeights("empty mixture".into()));
        };
        check_weights(parts.iter().map(|(w, _)| *w))?;
        let mut ops = Vec::new();
        for (w, ch) in parts {
            if ch.dim != first.dim {
                return Err(Error::mismatch(first.dim, ch.dim));
            }
            let s = C64::new(w.sqrt(), 0.0);
            ops.extend(ch.ops.iter().map(|k| k.scale(s)));
        }
        Self::new(first.dim, ops)
    }

    pub fn to_json(&self) -> ChannelJson {
        ChannelJson {
            dim: self.dim,
            kraus: self
                .ops
                .iter()
                .map(|k| k.row_vecs().into_iter().map(|r| r.into_iter().map(|z| [z.re, z.im]).collect()).collect())
                .collect(),
        }
    }

    pub fn from_json(json: &ChannelJson) -> Result<Self> {
        let ops = json
            .kraus
            .iter()
            .enumerate()
            .map(|(n, rows)| {
                let rows: Vec<Vec<C64>> = rows
                    .iter()
                    .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
                    .collect();
                ComplexMatrix::from_rows(&rows).map_err(|e| Error::field(format!("kraus[{n}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(json.dim, ops).map_err(|e| Error::field("kraus", e.to_string()))
    }
}

/// Interchange form `{dim, kraus: [[[re, im], ...], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelJson {
    pub dim: usize,
    pub kraus: Vec<Vec<Vec<[f64; 2]>>>,
}

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidWeights(format!("negative or non-finite weight {w}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidWeights(format!("weights sum to {total}")));
    }
    Ok(())
}

/// The `D²` operators that send `|f₂⟩` to `target` deterministically:
///
/// ```text
/// K_{n,ℓ} = (1/D)[ f₁ + (ωⁿ/√D) Σ_{i,j} (ω*)^{i−1} α_{i⊕(ℓ−1)} |i⊕(ℓ−1)⟩(⟨i| − ⟨j|) ]
/// ```
fn free_kraus_family(dim: usize, target: &Ket, weight: f64) -> Vec<ComplexMatrix> {
    let d = dim as f64;
    let f1 = textureless_ket(dim).projector();
    let alpha = target.amplitudes();
    let pre = weight.sqrt() / d;
    let mut ops = Vec::with_capacity(dim * dim);
    for n in 1..=dim {
        let omega_n = C64::from_polar(1.0 / d.sqrt(), 2.0 * PI * (n % dim) as f64 / d);
        for shift in 0..dim {
            let mut m = f1.clone();
            for i in 0..dim {
                let row = (i + shift) % dim;
                let coeff = omega_n * C64::from_polar(1.0, -2.0 * PI * i as f64 / d) * alpha[row];
                // Σ_j (⟨i| − ⟨j|) = D⟨i| − Σ_j ⟨j|
                for col in 0..dim {
                    let weight = if col == i { d - 1.0 } else { -1.0 };
                    m.set(row, col, m.get(row, col) + coeff * weight);
                }
            }
            ops.push(m.scale(C64::new(pre, 0.0)));
        }
    }
    ops
}

fn require_normalized(ket: &Ket) -> Result<()> {
    let n2 = ket.norm_sqr();
    if (n2 - 1.0).abs() > 1e-12 {
        return Err(Error::NotNormalized(n2));
    }
    Ok(())
}

/// Free channel taking `|f₂⟩` to `target`.
pub fn build_free_channel(dim: usize, target: &Ket) -> Result<KrausChannel> {
    if target.dim() != dim {
        return Err(Error::mismatch(dim, target.dim()));
    }
    require_normalized(target)?;
    KrausChannel::new(dim, free_kraus_family(dim, target, 1.0))
}

/// Free channel taking `|f₂⟩` to `Σ_k q_k |ψ_k⟩⟨ψ_k|`.
pub fn build_free_channel_mixed(dim: usize, ensemble: &[(f64, Ket)]) -> Result<KrausChannel> {
    if ensemble.is_empty() {
        return Err(Error::InvalidWeights("empty ensemble".into()));
    }
    check_weights(ensemble.iter().map(|(q, _)| *q))?;
    let mut ops = Vec::with_capacity(dim * dim * ensemble.len());
    for (q, ket) in ensemble {
        if ket.dim() != dim {
            return Err(Error::mismatch(dim, ket.dim()));
        }
        require_normalized(ket)?;
        ops.extend(free_kraus_family(dim, ket, *q));
    }
    KrausChannel::new(dim, ops)
}

pub fn apply_channel(ch: &KrausChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    ch.apply(rho)
}

/// Eigenvalues below this are dropped from the conversion ensemble.
const SPECTRAL_FLOOR: f64 = 1e-12;

/// Free channel taking `f₂` to a mixed `target`, built from the target's
/// spectral decomposition.
pub fn free_channel_to(target: &DensityOperator) -> Result<KrausChannel> {
    let spectrum = target.spectral_decomposition()?;
    let kept: Vec<(f64, Ket)> = spectrum.into_iter().filter(|(l, _)| *l > SPECTRAL_FLOOR).collect();
    let total: f64 = kept.iter().map(|(l, _)| l).sum();
    if kept.is_empty() || !total.is_finite() {
        return Err(Error::Eigen("no positive eigenvalue".into()));
    }
    let ensemble: Vec<(f64, Ket)> = kept
        .into_iter()
        .map(|(l, k)| Ok((l / total, Ket::normalize(k.amplitudes().to_vec())?)))
        .collect::<Result<_>>()?;
    build_free_channel_mixed(target.dim(), &renormalize_weights(ensemble))
}

/// Prepares `target` from the maximal state `f₂` with a free channel.
pub fn convert_from_f2(dim: usize, target: &DensityOperator) -> Result<DensityOperator> {
    if target.dim() != dim || dim < 2 {
        return Err(Error::mismatch(dim, target.dim()));
    }
    let f2 = DensityOperator::from_ket(&fourier_ket(dim, 2)?)?;
    free_channel_to(target)?.apply(&f2)
}

fn renormalize_weights(mut ensemble: Vec<(f64, Ket)>) -> Vec<(f64, Ket)> {
    let total: f64 = ensemble.iter().map(|(w, _)| w).sum();
    for (w, _) in &mut ensemble {
        *w /= total;
    }
    ensemble
}

/// `|φ⟩ = ζ|f₁⟩ + ζ⊥|g⊥⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct F1Decomposition {
    pub zeta: C64,
    pub zeta_perp: C64,
    /// `None` when `φ` lies on the `f₁` ray.
    pub g_perp: Option<Ket>,
}

/// Splits a ket along `|f₁⟩`. The orthogonal part is normalized with its
/// first non-negligible component real and positive.
pub fn decompose_against_f1(phi: &Ket) -> F1Decomposition {
    let f1 = textureless_ket(phi.dim());
    let zeta = f1.inner(phi);
    let residual = phi.add(&f1.scale(-zeta));
    let norm = residual.norm_sqr().sqrt();
    if norm < 1e-12 {
        return F1Decomposition {
            zeta,
            zeta_perp: ZERO,
            g_perp: None,
        };
    }
    let lead = residual
        .amplitudes()
        .iter()
        .find(|z| z.norm() > 1e-12 * norm.max(1.0))
        .copied()
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = C64::from_polar(1.0, -lead.arg());
    let g = residual.scale(phase / norm);
    let zeta_perp = g.inner(phi);
    F1Decomposition {
        zeta,
        zeta_perp,
        g_perp: Some(g),
    }
}

/// Grand sum before and after a free channel, and the predicted gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonotonicityAudit {
    pub sigma_before: f64,
    pub sigma_after: f64,
    pub gain_term: f64,
}

impl MonotonicityAudit {
    pub fn identity_residual(&self) -> f64 {
        (self.sigma_after - self.sigma_before - self.gain_term).abs()
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.sigma_after >= self.sigma_before - tol
    }
}

const CERTIFICATE_TOL: f64 = 1e-9;

fn gain_for_pure(ch: &KrausChannel, coeffs: &[C64], phi: &Ket) -> Result<f64> {
    let dec = decompose_against_f1(phi);
    let Some(g) = dec.g_perp else {
        return Ok(0.0);
    };
    let f1 = textureless_ket(ch.dim);
    let f1_proj = f1.projector();
    let mut sum = 0.0;
    for (k, a) in ch.ops.iter().zip(coeffs) {
        let a_op = k.try_sub(&f1_proj.scale(*a))?;
        sum += f1.inner(&a_op.apply(&g)?).norm_sqr();
    }
    Ok(ch.dim as f64 * dec.zeta_perp.norm_sqr() * sum)
}

/// Checks the grand-sum gain identity on a pure state.
pub fn monotonicity_audit(ch: &KrausChannel, phi: &Ket) -> Result<MonotonicityAudit> {
    if phi.dim() != ch.dim {
        return Err(Error::mismatch(ch.dim, phi.dim()));
    }
    require_normalized(phi)?;
    let coeffs = ch.certificate(CERTIFICATE_TOL)?;
    let rho = DensityOperator::from_ket(phi)?;
    let sigma_before = grand_sum(&rho)?;
    let sigma_after = grand_sum(&DensityOperator::with_tolerance(ch.apply_matrix(rho.matrix())?, 1e-9)?)?;
    Ok(MonotonicityAudit {
        sigma_before,
        sigma_after,
        gain_term: gain_for_pure(ch, &coeffs, phi)?,
    })
}

/// Mixed-state version: the gain is the spectral average of the pure-state gains.
pub fn monotonicity_audit_mixed(ch: &KrausChannel, rho: &DensityOperator) -> Result<MonotonicityAudit> {
    if rho.dim() != ch.dim {
        return Err(Error::mismatch(ch.dim, rho.dim()));
    }
    let coeffs = ch.certificate(CERTIFICATE_TOL)?;
    let sigma_before = grand_sum(rho)?;
    let sigma_after = grand_sum(&DensityOperator::with_tolerance(ch.apply_matrix(rho.matrix())?, 1e-9)?)?;
    let mut gain_term = 0.0;
    for (weight, ket) in rho.spectral_decomposition()? {
        if weight.abs() <= EPS * 1e-2 {
            continue;
        }
        let ket = Ket::normalize(ket.amplitudes().to_vec())?;
        gain_term += weight * gain_for_pure(ch, &coeffs, &ket)?;
    }
    Ok(MonotonicityAudit {
        sigma_before,
        sigma_after,
        gain_term,
    })
}

/// Summary of a channel's validity and its behaviour on random inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChannelAudit {
    pub dim: usize,
    pub kraus_count: usize,
    pub completeness_residual: f64,
    pub free: bool,
    /// `‖Λ(f₁) − f₁‖_F`.
    pub fixed_point_residual: f64,
    pub samples: u64,
    /// Smallest `Σ(Λρ) − Σ(ρ)` seen; `None` when the channel is not free.
    pub min_gain: Option<f64>,
    pub max_identity_residual: Option<f64>,
    pub monotone: Option<bool>,
}

/// Validates `ch` and, when free, audits the gain identity on `samples`
/// random states (even trials pure, odd trials mixed). Trial `i` draws from
/// stream `i` of `seed`.
pub fn audit_channel(ch: &KrausChannel, samples: u64, seed: u64) -> Result<ChannelAudit> {
    let f1 = DensityOperator::from_ket(&textureless_ket(ch.dim))?;
    let fixed = ch.apply_matrix(f1.matrix())?;
    let mut audit = ChannelAudit {
        dim: ch.dim,
        kraus_count: ch.ops.len(),
        completeness_residual: ch.completeness_residual(),
        free: ch.is_free(CERTIFICATE_TOL),
        fixed_point_residual: crate::tensor::frobenius_distance(&fixed, f1.matrix())?,
        samples,
        min_gain: None,
        max_identity_residual: None,
        monotone: None,
    };
    if !audit.free {
        return Ok(audit);
    }
    let mut min_gain = f64::INFINITY;
    let mut max_residual = 0.0f64;
    let mut monotone = true;
    for i in 0..samples {
        let mut rng = trial_rng(seed, i);
        let a = if i % 2 == 0 {
            monotonicity_audit(ch, &random_ket(ch.dim, &mut rng))?
        } else {
            let rank = rng.random_range(2..=ch.dim.max(2));
            monotonicity_audit_mixed(ch, &random_mixed(ch.dim, rank, &mut rng)?)?
        };
        min_gain = min_gain.min(a.sigma_after - a.sigma_before);
        max_residual = max_residual.max(a.identity_residual());
        monotone &= a.is_monotone(1e-10);
    }
    if samples > 0 {
        audit.min_gain = Some(min_gain);
        audit.max_identity_residual = Some(max_residual);
        audit.monotone = Some(monotone);
    }
    Ok(audit)
}
