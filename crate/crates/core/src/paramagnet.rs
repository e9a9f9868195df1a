//! Texture of coherent Gibbs states of an ideal spin-½ paramagnet.
//!
//! Everything depends on the single ratio `x = μ₀B/k_BT`. A spin in the
//! coherent Gibbs state `Ψ_φ ∝ e^{x/2}|1⟩ + e^{iφ}e^{−x/2}|2⟩` has grand sum
//! `1 + sech(x) cos φ`; averaging its rugosity over a uniform phase gives the
//! rugosity per spin of the coherent ensemble.

use std::f64::consts::{LN_2, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::parallel::thread_pool;
use crate::states::DensityOperator;
use crate::tensor::{ComplexMatrix, Ket, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamagnetConfig {
    pub x: f64,
    pub spins: usize,
}

impl ParamagnetConfig {
    pub fn new(x: f64, spins: usize) -> Result<Self> {
        check_ratio(x)?;
        if spins == 0 {
            return Err(Error::field("spins", "must be at least 1"));
        }
        Ok(Self { x, spins })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentGibbsQubit {
    pub x: f64,
    pub phi: f64,
}

impl CoherentGibbsQubit {
    pub fn new(x: f64, phi: f64) -> Result<Self> {
        check_ratio(x)?;
        if !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::field("phi", format!("{phi} outside [0, 2pi)")));
        }
        Ok(Self { x, phi })
    }

    pub fn ket(&self) -> Ket {
        // Divide by e^{|x|} first so large ratios do not overflow.
        let up = 1.0;
        let down = (-2.0 * self.x).exp();
        let norm = (up * up + down).sqrt();
        Ket::from_amplitudes(vec![C64::new(up / norm, 0.0), C64::from_polar(down.sqrt() / norm, self.phi)])
    }
}

fn check_ratio(x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::field("x", format!("{x} is not a finite non-negative ratio")));
    }
    Ok(())
}

fn sech(x: f64) -> f64 {
    if x > 700.0 {
        0.0
    } else {
        1.0 / x.cosh()
    }
}

/// Canonical state `diag(e^x, e^{−x}) / (2 cosh x)`.
pub fn gibbs_state(x: f64) -> Result<DensityOperator> {
    check_ratio(x)?;
    let down = (-2.0 * x).exp();
    let p_up = 1.0 / (1.0 + down);
    let m = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(p_up, 0.0),
        (1, 1) => C64::new(1.0 - p_up, 0.0),
        _ => C64::new(0.0, 0.0),
    });
    DensityOperator::new(m)
}

/// `Σ(Ψ_φ) = 1 + sech(x) cos φ`.
pub fn coherent_gibbs_sigma(s: &CoherentGibbsQubit) -> f64 {
    1.0 + sech(s.x) * s.phi.cos()
}

/// Fewest trapezoid nodes accepted.
pub const MIN_QUADRATURE_POINTS: usize = 64;
const TOLERANCE: f64 = 1e-10;
const MAX_POINTS: usize = 1 << 24;
/// Above this `sech x` the integrand is treated as log-singular at `φ = π`.
const SINGULAR_C: f64 = 1.0 - 1e-6;
const WINDOW: f64 = 1e-4;

/// `−(1/2π) ∫₀^{2π} ln(Σ(Ψ_φ)/2) dφ`, by numerical quadrature.
pub fn averaged_rugosity_per_spin(x: f64, quadrature_points: usize) -> Result<f64> {
    check_ratio(x)?;
    if quadrature_points < MIN_QUADRATURE_POINTS {
        return Err(Error::field(
            "quadrature_points",
            format!("{quadrature_points} < {MIN_QUADRATURE_POINTS}"),
        ));
    }
    let c = sech(x);
    let mean_log = if c > SINGULAR_C {
        singular_mean_log(c)?
    } else {
        trapezoid_mean_log(c, quadrature_points)?
    };
    Ok(-mean_log)
}

fn log_half_sigma(c: f64, phi: f64) -> f64 {
    ((1.0 + c * phi.cos()) / 2.0).ln()
}

/// Periodic trapezoid, doubled until two successive levels agree.
fn trapezoid_mean_log(c: f64, points: usize) -> Result<f64> {
    let mean = |n: usize| (0..n).map(|k| log_half_sigma(c, 2.0 * PI * k as f64 / n as f64)).sum::<f64>() / n as f64;
    let mut n = points;
    let mut prev = mean(n);
    loop {
        n *= 2;
        let next = mean(n);
        let change = (next - prev).abs();
        if change < TOLERANCE {
            return Ok(next);
        }
        if n >= MAX_POINTS {
            return Err(Error::NonConvergence(change));
        }
        prev = next;
    }
}

/// `∫_{−h}^{h} ln((a + b t²)/2) dt`, the integrand near `φ = π` with
/// `a = 1 − c`, `b = c/2`.
fn window_integral(a: f64, b: f64, h: f64) -> f64 {
    let base = 2.0 * h * ((a + b * h * h) / 2.0).ln() - 4.0 * h;
    if a <= 0.0 {
        base
    } else {
        base + 4.0 * (a / b).sqrt() * (h * (b / a).sqrt()).atan()
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut z = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let pk = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = pk;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let step = p1 / dp;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (z, 2.0 / ((1.0 - z * z) * dp * dp))
        })
        .collect()
}

/// Composite Gauss–Legendre on `[0, π − h]` with panels shrinking
/// geometrically toward `π − h`.
fn graded_integral(c: f64, h: f64, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let mut edges = vec![h];
    while *edges.last().expect("non-empty") < PI / 2.0 {
        let next = edges.last().expect("non-empty") * 2.0;
        edges.push(next);
    }
    *edges.last_mut().expect("non-empty") = PI;
    // Distances from π; panel [π − d₁, π − d₀].
    edges
        .windows(2)
        .map(|w| {
            let (lo, hi) = (PI - w[1], PI - w[0]);
            let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
            half * rule.iter().map(|(z, wt)| wt * log_half_sigma(c, mid + half * z)).sum::<f64>()
        })
        .sum()
}

fn singular_mean_log(c: f64) -> Result<f64> {
    let h = WINDOW / 2.0;
    let tail = window_integral(1.0 - c, c / 2.0, h);
    let coarse = graded_integral(c, h, 20);
    let fine = graded_integral(c, h, 40);
    let change = (fine - coarse).abs();
    if change > TOLERANCE {
        return Err(Error::NonConvergence(change));
    }
    Ok((2.0 * fine + tail) / (2.0 * PI))
}

/// `tanh(x/2)`: magnetization per spin in units of `μ₀`, the form that
/// `magnetization_closed_form` is written in.
pub fn equilibrium_magnetization(cfg: &ParamagnetConfig) -> f64 {
    (cfg.x / 2.0).tanh()
}

/// `tanh x`: the canonical-ensemble magnetization per spin of `gibbs_state`.
pub fn canonical_magnetization(cfg: &ParamagnetConfig) -> f64 {
    cfg.x.tanh()
}

/// `−ln(1/2 + tanh(x/2)/2)`.
pub fn magnetization_closed_form(x: f64) -> f64 {
    -(0.5 + (x / 2.0).tanh() / 2.0).ln()
}

/// `2 ln 2 − ln(1 + tanh x)`.
pub fn alt_closed_form(x: f64) -> f64 {
    2.0 * LN_2 - x.tanh().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RugosityRow {
    pub x: f64,
    pub rugosity_quadrature: f64,
    pub magnetization_closed_form: f64,
    pub alt_closed_form: f64,
    pub residual_magnetization: f64,
    pub residual_alt: f64,
}

pub const DEFAULT_GRID: [f64; 21] = [
    0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5, 3.75, 4.0, 4.25, 4.5, 4.75, 5.0,
];

/// Quadrature against both closed forms on every grid point.
pub fn rugosity_magnetization_report(
    grid: &[f64],
    quadrature_points: usize,
    threads: Option<usize>,
) -> Result<Vec<RugosityRow>> {
    if grid.is_empty() {
        return Err(Error::field("grid", "empty"));
    }
    let pool = thread_pool(threads)?;
    pool.install(|| {
        grid.par_iter()
            .map(|&x| {
                let q = averaged_rugosity_per_spin(x, quadrature_points)?;
                let (p, a) = (magnetization_closed_form(x), alt_closed_form(x));
                Ok(RugosityRow {
                    x,
                    rugosity_quadrature: q,
                    magnetization_closed_form: p,
                    alt_closed_form: a,
                    residual_magnetization: (q - p).abs(),
                    residual_alt: (q - a).abs(),
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::texture::{grand_sum, rugosity};

    #[test]
    fn gibbs_state_examples() {
        let rho = gibbs_state(0.0).unwrap();
        assert!((rho.matrix().get(0, 0).re - 0.5).abs() < 1e-15);
        for x in [0.0, 0.5, 2.0, 10.0] {
            let rho = gibbs_state(x).unwrap();
            assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
            assert!((rugosity(&rho).unwrap() - LN_2).abs() < 1e-12);
        }
        assert!(gibbs_state(-1.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        let s = |x, phi| coherent_gibbs_sigma(&CoherentGibbsQubit::new(x, phi).unwrap());
        assert!((s(0.0, 0.0) - 2.0).abs() < 1e-15);
        assert!(s(0.0, PI).abs() < 1e-15);
        assert!((s(1.0, 0.0) - 1.6480542736638855).abs() < 1e-12);
        let ket = CoherentGibbsQubit::new(1.0, 0.0).unwrap().ket();
        let direct: f64 = ket.amplitudes().iter().map(|a| a.re).sum::<f64>().powi(2);
        assert!((direct - s(1.0, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn quadrature_limits() {
        assert!((averaged_rugosity_per_spin(50.0, 64).unwrap() - LN_2).abs() < 1e-6);
        assert!((averaged_rugosity_per_spin(0.0, 64).unwrap() - 2.0 * LN_2).abs() < 1e-6);
        assert!(averaged_rugosity_per_spin(1.0, 16).is_err());
    }

    #[test]
    fn quadrature_tracks_alternative_form() {
        for &x in &DEFAULT_GRID {
            let q = averaged_rugosity_per_spin(x, 256).unwrap();
            assert!((q - alt_closed_form(x)).abs() < 1e-8, "x = {x}");
        }
        // Near-singular but on the regular branch.
        let x = 2e-3;
        assert!((averaged_rugosity_per_spin(x, 64).unwrap() - alt_closed_form(x)).abs() < 1e-8);
    }

    #[test]
    fn magnetization_examples() {
        let m = |x| equilibrium_magnetization(&ParamagnetConfig::new(x, 1).unwrap());
        assert_eq!(m(0.0), 0.0);
        assert!((m(60.0) - 1.0).abs() < 1e-15);
        assert!((m(2.0) - 0.7615941559557649).abs() < 1e-12);
    }

    #[test]
    fn report_rows() {
        let rows = rugosity_magnetization_report(&[0.0, 50.0], 128, Some(1)).unwrap();
        assert!((rows[0].magnetization_closed_form - LN_2).abs() < 1e-12);
        assert!((rows[0].alt_closed_form - 2.0 * LN_2).abs() < 1e-12);
        assert!(rows[1].magnetization_closed_form < 1e-12);
        assert!(rows[1].residual_alt < 1e-6);
        let ket = CoherentGibbsQubit::new(0.3, 2.0).unwrap().ket();
        let rho = DensityOperator::from_ket(&ket).unwrap();
        let s = CoherentGibbsQubit::new(0.3, 2.0).unwrap();
        assert!((grand_sum(&rho).unwrap() - coherent_gibbs_sigma(&s)).abs() < 1e-12);
    }
}
