//! Identification of an unknown circuit layer from output textures.
//!
//! Random inputs are pushed through the layer and each track's output grand
//! sum is averaged in the computational and the Fourier basis. Single-qubit
//! gates leave both averages at 1; CNOT tracks move them, and the four CNOT
//! averages `(X, X̃, Y, Ỹ)` fix the hidden basis up to a few candidates. Those
//! candidates are polished and tested with deterministic probe inputs, after
//! which CNOT pairs and single-qubit gates are read off directly.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::circuit::{
    grand_sum_in, run_layer, run_layer_with_inputs, sample_grand_sum, CircuitLayer, Gate, MeasurementBasis, Noise,
    QubitBasis, SingleGate, TrackRole,
};
use crate::error::{Error, Result};
use crate::optimize::nelder_mead;
use crate::parallel::thread_pool;
use crate::rng::trial_rng;
use crate::states::{sample_haar_qubit, DensityOperator};
use crate::tensor::{phase_aligned_distance, ComplexMatrix, Ket, C64};

/// Output fidelity a noiseless probe must reach.
pub const PROBE_FIDELITY: f64 = 1.0 - 1e-9;
/// Frobenius tolerance for matching a reconstructed gate.
pub const GATE_MATCH_TOL: f64 = 1e-8;
pub const DEFAULT_TAU: f64 = 0.05;
pub const DEFAULT_TRIALS: u64 = 100_000;

const CHUNK: u64 = 512;

/// `X, X̃` are the control/target averages in the computational basis,
/// `Y, Ỹ` the same in the Fourier basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CnotAverages {
    pub x: f64,
    pub x_tilde: f64,
    pub y: f64,
    pub y_tilde: f64,
}

impl CnotAverages {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_tilde, self.y, self.y_tilde]
    }

    /// Control and target roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.x_tilde,
            x_tilde: self.x,
            y: self.y_tilde,
            y_tilde: self.y,
        }
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Closed-form Haar averages of the CNOT output grand sums.
pub fn expected_averages(basis: &QubitBasis) -> CnotAverages {
    let (a, b) = (basis.alpha(), basis.beta());
    CnotAverages {
        x: 1.0 - (a * a - b * b).re / 3.0,
        x_tilde: 1.0 + 2.0 * (a.conj() * b).re / 3.0,
        y: 1.0 + 2.0 * (a * b).re / 3.0,
        y_tilde: 1.0 + (a.norm_sqr() - b.norm_sqr()) / 3.0,
    }
}

/// `Δ• + Δ⊕`: squared deviations from 1 of all four averages.
pub fn detectability_margin(basis: &QubitBasis) -> f64 {
    expected_averages(basis).as_array().iter().map(|v| (v - 1.0).powi(2)).sum()
}

/// Range of CNOT-track averages under input depolarization `p` and CNOT
/// failure `q`.
pub fn noise_interval(p: f64, q: f64) -> Result<(f64, f64)> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::field(name, format!("{v} outside [0, 1]")));
        }
    }
    let half_width = (1.0 + q * p - p - q) / 3.0;
    Ok((1.0 - half_width, 1.0 + half_width))
}

/// Averaged grand sums of one output track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackStats {
    pub track: usize,
    pub x_like: f64,
    pub y_like: f64,
    pub stderr_x: f64,
    pub stderr_y: f64,
    pub trials: u64,
}

impl TrackStats {
    pub fn deviation(&self) -> f64 {
        (self.x_like - 1.0).abs().max((self.y_like - 1.0).abs())
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr_x.max(self.stderr_y)
    }
}

impl Serialize for TrackStats {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TrackStats", 6)?;
        st.serialize_field("track", &self.track)?;
        st.serialize_field("X", &self.x_like)?;
        st.serialize_field("Y", &self.y_like)?;
        st.serialize_field("stderr_X", &self.stderr_x)?;
        st.serialize_field("stderr_Y", &self.stderr_y)?;
        st.serialize_field("trials", &self.trials)?;
        st.end()
    }
}

/// Monte Carlo settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub trials: u64,
    /// Measurement shots per basis per trial; exact expectations when `None`.
    pub shots: Option<u64>,
    pub seed: u64,
    /// Worker threads; falls back to `TEXLAB_THREADS`, then all cores.
    pub threads: Option<usize>,
}

impl ProtocolConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            shots: None,
            seed,
            threads: None,
        }
    }
}

/// Neumaier summation.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.carry);
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Per-track sums of x, x², y, y².
type Moments = Vec<[Compensated; 4]>;

fn run_chunk(layer: &CircuitLayer, cfg: &ProtocolConfig, range: std::ops::Range<u64>) -> Result<Moments> {
    let mut acc: Moments = vec![[Compensated::default(); 4]; layer.num_tracks()];
    for trial in range {
        let mut rng = trial_rng(cfg.seed, trial);
        let input = sample_haar_qubit(&mut rng);
        for out in run_layer(layer, &input)? {
            let mut x = grand_sum_in(&out.reduced_state, MeasurementBasis::Computational)?;
            let mut y = grand_sum_in(&out.reduced_state, MeasurementBasis::Fourier)?;
            if let Some(n) = cfg.shots.filter(|&n| n > 0) {
                x = sample_grand_sum(x, n, &mut rng);
                y = sample_grand_sum(y, n, &mut rng);
            }
            let a = &mut acc[out.track];
            a[0].add(x);
            a[1].add(x * x);
            a[2].add(y);
            a[3].add(y * y);
        }
    }
    Ok(acc)
}

fn mean_and_stderr(sum: f64, sum_sq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Mean and standard error of each track's grand sums over `trials` Haar
/// inputs. Trial `i` always uses generator stream `i`, and chunk totals are
/// combined in a fixed order, so the result does not depend on the thread
/// count.
pub fn run_protocol(layer: &CircuitLayer, cfg: &ProtocolConfig) -> Result<Vec<TrackStats>> {
    if cfg.trials == 0 {
        return Err(Error::field("trials", "must be at least 1"));
    }
    let chunks: Vec<std::ops::Range<u64>> = (0..cfg.trials.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(cfg.trials))
        .collect();
    let pool = thread_pool(cfg.threads)?;
    let partials: Vec<Result<Moments>> =
        pool.install(|| chunks.into_par_iter().map(|r| run_chunk(layer, cfg, r)).collect());

    let mut total: Moments = vec![[Compensated::default(); 4]; layer.num_tracks()];
    for part in partials {
        for (t, m) in part?.iter().enumerate() {
            for k in 0..4 {
                total[t][k].merge(&m[k]);
            }
        }
    }
    Ok(total
        .iter()
        .enumerate()
        .map(|(track, m)| {
            let (x_like, stderr_x) = mean_and_stderr(m[0].value(), m[1].value(), cfg.trials);
            let (y_like, stderr_y) = mean_and_stderr(m[2].value(), m[3].value(), cfg.trials);
            TrackStats {
                track,
                x_like,
                y_like,
                stderr_x,
                stderr_y,
                trials: cfg.trials,
            }
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub cnot_tracks: Vec<usize>,
    /// Below threshold, but within three standard errors of it.
    pub ambiguous: Vec<usize>,
}

/// Flags tracks whose averages deviate from 1 by more than `tau`.
pub fn detect_cnot_tracks(stats: &[TrackStats], tau: f64) -> Result<Detection> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::field("tau", format!("{tau} is not a positive number")));
    }
    let mut d = Detection::default();
    for s in stats {
        let dev = s.deviation();
        if dev > tau {
            d.cnot_tracks.push(s.track);
        } else if dev + 3.0 * s.max_stderr() > tau {
            d.ambiguous.push(s.track);
        }
    }
    Ok(d)
}

/// One basis compatible with a set of CNOT averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateBasis {
    pub basis: QubitBasis,
    /// Signs of `cos χ` relative to `cos λ`, and of `sin λ`.
    pub sign_choice: (i8, i8),
    /// Whether the averages were read with control and target exchanged.
    pub swap_applied: bool,
}

impl Serialize for CandidateBasis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("CandidateBasis", 4)?;
        st.serialize_field("alpha", &complex_pair(self.basis.alpha()))?;
        st.serialize_field("beta", &complex_pair(self.basis.beta()))?;
        st.serialize_field("sign_choice", &[self.sign_choice.0, self.sign_choice.1])?;
        st.serialize_field("swap_applied", &self.swap_applied)?;
        st.end()
    }
}

pub(crate) fn complex_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `value` clamped into `[lo, hi]` if it lies within `eps` of the interval.
fn clamp_within(value: f64, lo: f64, hi: f64, eps: f64, what: &str) -> Result<f64> {
    if value < lo - eps || value > hi + eps || !value.is_finite() {
        return Err(Error::Inconsistent(format!("{what} = {value:.6} outside [{lo}, {hi}]")));
    }
    Ok(value.clamp(lo, hi))
}

/// Square root of a radicand, treating round-off-sized values as zero.
fn root(radicand: f64) -> f64 {
    if radicand < 1e-14 {
        0.0
    } else {
        radicand.sqrt()
    }
}

fn recover_branch(avg: &CnotAverages, eps: f64, swap_applied: bool) -> Result<Vec<CandidateBasis>> {
    let CnotAverages { x, x_tilde, y, y_tilde } = *avg;
    let a2 = clamp_within(1.5 * y_tilde - 1.0, 0.0, 1.0, eps, "|alpha|^2")?;
    let b2 = 1.0 - a2;
    // With u = |α|cos λ, v = |β|cos χ, p = |α|sin λ, r = |β|sin χ:
    // Ỹ − X = (2/3)(u² − v²), X̃ + Y − 2 = (4/3)uv, X̃ − Y = (4/3)pr.
    let d = 1.5 * (y_tilde - x);
    let uv = 0.75 * (x_tilde + y - 2.0);
    let pr = 0.75 * (x_tilde - y);
    let disc = (d * d + 4.0 * uv * uv).sqrt();
    let u2 = 0.5 * (d + disc);
    let v2 = 0.5 * (disc - d);

    let cos_of = |num2: f64, den2: f64, what: &str| -> Result<f64> {
        if den2 <= eps {
            // The amplitude vanishes; its phase is immaterial.
            return Ok(1.0);
        }
        Ok(root(clamp_within(num2 / den2, 0.0, 1.0, 2.0 * eps / den2, what)?))
    };
    let cos_l = cos_of(u2, a2, "cos^2 lambda")?;
    let cos_c = sign(uv) * cos_of(v2, b2, "cos^2 chi")?;
    let (sin2_l, sin2_c) = (1.0 - u2 / a2.max(f64::MIN_POSITIVE), 1.0 - v2 / b2.max(f64::MIN_POSITIVE));
    let sin_l = if a2 <= eps { 0.0 } else { root(sin2_l.clamp(0.0, 1.0)) };
    let sin_c = if b2 <= eps { 0.0 } else { sign(pr) * root(sin2_c.clamp(0.0, 1.0)) };

    let mut out = Vec::with_capacity(2);
    for s in [1.0, -1.0] {
        let basis = QubitBasis::normalized(
            C64::new(cos_l, s * sin_l) * root(a2),
            C64::new(cos_c, s * sin_c) * root(b2),
        )?;
        if out.iter().any(|c: &CandidateBasis| c.basis.amplitude_distance(&basis) < 1e-12) {
            continue;
        }
        out.push(CandidateBasis {
            basis,
            sign_choice: (sign(cos_c) as i8, s as i8),
            swap_applied,
        });
    }
    // Four data fix three parameters; reject a branch the data contradict.
    let residual = out
        .iter()
        .map(|c| expected_averages(&c.basis).max_abs_diff(avg))
        .fold(f64::INFINITY, f64::min);
    if residual > 4.0 * eps + 1e-9 {
        return Err(Error::Inconsistent(format!("averages not reproduced (residual {residual:.3e})")));
    }
    Ok(out)
}

/// Hidden-basis candidates compatible with `avg`, from both the given and the
/// swapped control/target association. Each association yields a conjugate
/// pair. Radicands within `eps` of their valid range are clamped.
pub fn recover_basis(avg: &CnotAverages, eps: f64) -> Result<Vec<CandidateBasis>> {
    let eps = eps.max(1e-9);
    let direct = recover_branch(avg, eps, false);
    let swapped = recover_branch(&avg.swapped(), eps, true);
    match (direct, swapped) {
        (Err(e), Err(_)) => Err(e),
        (d, s) => {
            let mut all = d.unwrap_or_default();
            for c in s.unwrap_or_default() {
                if !all.iter().any(|k| k.basis.amplitude_distance(&c.basis) < 1e-12) {
                    all.push(c);
                }
            }
            Ok(all)
        }
    }
}

fn plus_x(basis: &QubitBasis) -> Ket {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    basis.compose(h, h)
}

fn pure_defect(rho: &DensityOperator, ket: &Ket) -> f64 {
    (rho.matrix() - &ket.projector()).frobenius_norm().powi(2)
}

fn uniform_run(layer: &CircuitLayer, ket: &Ket) -> Result<Vec<DensityOperator>> {
    Ok(run_layer_with_inputs(layer, &vec![ket.clone(); layer.num_tracks()])?
        .into_iter()
        .map(|o| o.reduced_state)
        .collect())
}

/// Smallest output fidelity over `tracks` when the candidate's `|+⟩` is fed
/// to every track.
pub fn plus_probe_fidelity(layer: &CircuitLayer, basis: &QubitBasis, tracks: &[usize]) -> Result<f64> {
    probe_fidelity(layer, &basis.plus_ket(), tracks)
}

fn probe_fidelity(layer: &CircuitLayer, probe: &Ket, tracks: &[usize]) -> Result<f64> {
    let outs = uniform_run(layer, probe)?;
    tracks
        .iter()
        .map(|&t| outs[t].fidelity_with_pure(probe))
        .try_fold(1.0f64, |m, f| Ok(m.min(f?)))
}

/// Squared distance of the CNOT outputs from the candidate's `|+⟩` and
/// `(|+⟩ + |−⟩)/√2` probes. Zero exactly on the true basis and on its
/// Hadamard twin.
fn probe_defect(layer: &CircuitLayer, basis: &QubitBasis, tracks: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for probe in [basis.plus_ket(), plus_x(basis)] {
        let outs = uniform_run(layer, &probe)?;
        total += tracks.iter().map(|&t| pure_defect(&outs[t], &probe)).sum::<f64>();
    }
    Ok(total)
}

fn basis_from_params(p: &[f64]) -> QubitBasis {
    let (s, c) = p[0].sin_cos();
    QubitBasis::new(C64::from_polar(c, p[1]), C64::from_polar(s, p[2])).expect("unit norm by construction")
}

/// Locally polishes a candidate against the deterministic probes.
pub fn refine_candidate(layer: &CircuitLayer, basis: &QubitBasis, tracks: &[usize]) -> Result<QubitBasis> {
    let start = [basis.beta().norm().atan2(basis.alpha().norm()), basis.lambda(), basis.chi()];
    let objective = |p: &[f64]| probe_defect(layer, &basis_from_params(p), tracks).unwrap_or(f64::INFINITY);
    let mut best = nelder_mead(objective, &start, 0.1, 1e-30, 4000);
    for step in [1e-3, 1e-6] {
        let next = nelder_mead(objective, &best.point, step, 1e-32, 2000);
        if next.value <= best.value {
            best = next;
        }
    }
    Ok(basis_from_params(&best.point))
}

/// The basis whose `|+⟩` is `(|+⟩ + |−⟩)/√2` of `basis` and whose
/// `(|+⟩ + |−⟩)/√2` is `|+⟩` of `basis`. In it `𝟙` and `H` keep their matrices
/// and every CNOT is reversed.
pub fn hadamard_twin(basis: &QubitBasis) -> QubitBasis {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let v = plus_x(basis);
    let (v1, v2) = (v.amplitudes()[0], v.amplitudes()[1]);
    let w = Ket::from_amplitudes(vec![v2.conj(), -v1.conj()]);
    let kappa = basis.compose(h, -h).inner(&w).arg();
    let g = C64::from_polar(1.0, kappa / 2.0);
    QubitBasis::normalized(g * v1, g * v2).expect("unit vector")
}

/// Whether the two bases describe the same layer with every CNOT reversed:
/// each one's `|+⟩` is the other's `(|+⟩ + |−⟩)/√2`.
pub fn are_hadamard_twins(a: &QubitBasis, b: &QubitBasis) -> bool {
    a.plus_ket().overlap(&plus_x(b)) > 1.0 - 1e-9 && b.plus_ket().overlap(&plus_x(a)) > 1.0 - 1e-9
}

/// Outcome of the deterministic candidate test.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub basis: QubitBasis,
    pub candidate_index: usize,
    /// Other passing candidates, whose `|+⟩` is fixed for the same reason.
    pub twins: Vec<usize>,
}

/// Feeds each candidate's `|+⟩` through the layer and keeps those whose CNOT
/// outputs return it unchanged. The first passing candidate is selected.
/// Another passing candidate is tolerated only when its `|+⟩` is the
/// selected `|+⟩` or the selected `(|+⟩ + |−⟩)/√2`: CNOT tracks fix both
/// states, so this probe cannot separate the basis from its Hadamard twin.
pub fn disambiguate(layer: &CircuitLayer, candidates: &[CandidateBasis], cnot_tracks: &[usize]) -> Result<Selection> {
    if cnot_tracks.is_empty() {
        return Err(Error::Disambiguation("no CNOT tracks to probe".into()));
    }
    let mut passing = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if plus_probe_fidelity(layer, &c.basis, cnot_tracks)? >= PROBE_FIDELITY
            && !passing
                .iter()
                .any(|&j: &usize| candidates[j].basis.amplitude_distance(&c.basis) < 1e-9)
        {
            passing.push(i);
        }
    }
    let Some((&first, rest)) = passing.split_first() else {
        return Err(Error::Disambiguation("no candidate reproduces its |+> on every CNOT track".into()));
    };
    let basis = candidates[first].basis;
    let explained = |other: &QubitBasis| {
        let p = other.plus_ket();
        p.overlap(&basis.plus_ket()) > PROBE_FIDELITY || p.overlap(&plus_x(&basis)) > PROBE_FIDELITY
    };
    if let Some(&j) = rest.iter().find(|&&j| !explained(&candidates[j].basis)) {
        return Err(Error::Disambiguation(format!(
            "candidates {first} and {j} both pass and are not equivalent"
        )));
    }
    Ok(Selection {
        basis,
        candidate_index: first,
        twins: rest.to_vec(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Pairing {
    /// `(control, target)`, sorted by control.
    pub pairs: Vec<(usize, usize)>,
    pub probes: usize,
}

fn flips_to_minus(outs: &[DensityOperator], minus: &Ket, t: usize) -> Result<bool> {
    Ok(outs[t].fidelity_with_pure(minus)? >= 1.0 - 1e-6)
}

/// Pairs CNOT tracks by feeding `|−⟩` to one track and `|+⟩` to the rest:
/// a control passes the flip to its target. A track that flips nothing is
/// taken as a target and its control is searched among the other tracks.
pub fn pairing_probe(layer: &CircuitLayer, basis: &QubitBasis, candidate_controls: &[usize]) -> Result<Pairing> {
    let n = layer.num_tracks();
    let (plus, minus) = (basis.plus_ket(), basis.minus_ket());
    let mut paired = vec![false; n];
    let mut result = Pairing::default();
    let probe = |c: usize, result: &mut Pairing| -> Result<Vec<DensityOperator>> {
        let mut inputs = vec![plus.clone(); n];
        inputs[c] = minus.clone();
        result.probes += 1;
        Ok(run_layer_with_inputs(layer, &inputs)?
            .into_iter()
            .map(|o| o.reduced_state)
            .collect())
    };

    for &c in candidate_controls {
        if c >= n {
            return Err(Error::Pairing(format!("track {c} outside 0..{n}")));
        }
        if paired[c] {
            continue;
        }
        let outs = probe(c, &mut result)?;
        let mut flipped = Vec::new();
        for t in (0..n).filter(|&t| t != c) {
            if flips_to_minus(&outs, &minus, t)? {
                flipped.push(t);
            }
        }
        match flipped.as_slice() {
            [t] if !paired[*t] => {
                paired[c] = true;
                paired[*t] = true;
                result.pairs.push((c, *t));
            }
            [] => {
                let mut found = None;
                for s in (0..n).filter(|&s| s != c && !paired[s]) {
                    let outs = probe(s, &mut result)?;
                    if flips_to_minus(&outs, &minus, c)? {
                        found = Some(s);
                        break;
                    }
                }
                let s = found.ok_or_else(|| Error::Pairing(format!("track {c} has no CNOT partner")))?;
                paired[c] = true;
                paired[s] = true;
                result.pairs.push((s, c));
            }
            many => {
                return Err(Error::Pairing(format!("probing track {c} flipped tracks {many:?}")));
            }
        }
    }
    result.pairs.sort_unstable();
    Ok(result)
}

/// Gate on one track, expressed in hidden-basis coordinates, from the
/// outputs for `|+⟩`, `|−⟩`, `(|+⟩+|−⟩)/√2` and `(|+⟩+i|−⟩)/√2`.
fn reconstruct_gate(outs: &[DensityOperator; 4], basis: &QubitBasis) -> Result<Option<ComplexMatrix>> {
    let ub_dag = basis.unitary().adjoint();
    let mut kets = Vec::with_capacity(4);
    for rho in outs {
        if rho.purity() < 1.0 - 1e-9 {
            return Ok(None);
        }
        kets.push(ub_dag.apply(&rho.dominant_ket()?)?);
    }
    let (w0, w1, ox) = (&kets[0], &kets[1], &kets[2]);
    let (c0, c1) = (w0.inner(ox), w1.inner(ox));
    if c0.norm() < 1e-6 || c1.norm() < 1e-6 {
        return Ok(None);
    }
    let rel = (c1 / c0) / (c1 / c0).norm();
    let m = ComplexMatrix::from_fn(2, 2, |i, j| {
        if j == 0 {
            w0.amplitudes()[i]
        } else {
            rel * w1.amplitudes()[i]
        }
    });
    let h = FRAC_1_SQRT_2;
    let predicted_y = m.apply(&Ket::from_amplitudes(vec![C64::new(h, 0.0), C64::new(0.0, h)]))?;
    if predicted_y.overlap(&kets[3]) < PROBE_FIDELITY {
        return Ok(None);
    }
    Ok(Some(m))
}

/// Labels each listed track with the gate from `{𝟙, H, T, S}` that matches
/// its action on four deterministic probes.
pub fn classify_single_qubit_gates(
    layer: &CircuitLayer,
    basis: &QubitBasis,
    tracks: &[usize],
) -> Result<BTreeMap<usize, SingleGate>> {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let probes = [
        basis.plus_ket(),
        basis.minus_ket(),
        basis.compose(h, h),
        basis.compose(h, C64::new(0.0, FRAC_1_SQRT_2)),
    ];
    let runs: Vec<Vec<DensityOperator>> = probes.iter().map(|p| uniform_run(layer, p)).collect::<Result<_>>()?;
    let mut labels = BTreeMap::new();
    for &t in tracks {
        if t >= layer.num_tracks() {
            return Err(Error::field("tracks", format!("track {t} outside 0..{}", layer.num_tracks())));
        }
        let outs = [runs[0][t].clone(), runs[1][t].clone(), runs[2][t].clone(), runs[3][t].clone()];
        let Some(m) = reconstruct_gate(&outs, basis)? else {
            return Err(Error::NoGateMatch {
                track: t,
                distance: f64::INFINITY,
            });
        };
        let (gate, distance) = SingleGate::ALL
            .iter()
            .map(|g| (*g, phase_aligned_distance(&m, &g.standard_matrix()).expect("2x2 shapes")))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty gate set");
        if distance > GATE_MATCH_TOL {
            return Err(Error::NoGateMatch { track: t, distance });
        }
        labels.insert(t, gate);
    }
    Ok(labels)
}

/// End-to-end settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentifyConfig {
    pub protocol: ProtocolConfig,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Completeness {
    Full,
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectedBasis {
    pub basis: QubitBasis,
    /// Candidate the polished basis grew from.
    pub from_candidate: usize,
}

impl Serialize for SelectedBasis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("SelectedBasis", 3)?;
        st.serialize_field("alpha", &complex_pair(self.basis.alpha()))?;
        st.serialize_field("beta", &complex_pair(self.basis.beta()))?;
        st.serialize_field("from_candidate", &self.from_candidate)?;
        st.end()
    }
}

/// Everything the protocol learned about a layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub status: Completeness,
    pub tracks: Vec<TrackStats>,
    pub cnot_tracks: Vec<usize>,
    pub ambiguous: Vec<usize>,
    pub candidates: Vec<CandidateBasis>,
    pub selected: Option<SelectedBasis>,
    pub cnot_pairs: Vec<(usize, usize)>,
    pub gates: BTreeMap<usize, String>,
    pub diagnostics: Vec<String>,
    pub seed: u64,
    pub trials: u64,
    pub shots: Option<u64>,
    pub tau: f64,
    pub version: &'static str,
}

impl ProtocolReport {
    pub fn is_full(&self) -> bool {
        self.status == Completeness::Full
    }

    /// The reconstructed layer, when identification was complete.
    pub fn reconstructed_layer(&self) -> Option<CircuitLayer> {
        let basis = self.selected?.basis;
        let roles = self.roles()?;
        let gates: Vec<Gate> = roles
            .iter()
            .enumerate()
            .filter_map(|(t, r)| match *r {
                TrackRole::Single(gate) => Some(Gate::Single { gate, track: t }),
                TrackRole::Control { target } => Some(Gate::Cnot { control: t, target }),
                TrackRole::Target { .. } => None,
            })
            .collect();
        CircuitLayer::new(roles.len(), &gates, basis, Noise::default()).ok()
    }

    pub fn roles(&self) -> Option<Vec<TrackRole>> {
        let mut roles: Vec<Option<TrackRole>> = vec![None; self.tracks.len()];
        for &(c, t) in &self.cnot_pairs {
            roles[c] = Some(TrackRole::Control { target: t });
            roles[t] = Some(TrackRole::Target { control: c });
        }
        for (t, label) in &self.gates {
            if roles[*t].is_none() {
                roles[*t] = Some(TrackRole::Single(SingleGate::from_label(label)?));
            }
        }
        roles.into_iter().collect()
    }
}

/// Averages of one CNOT role, pooled over the tracks that share it.
#[derive(Clone, Copy, Debug)]
struct RoleCluster {
    x: f64,
    y: f64,
}

/// Splits detected tracks into at most two groups of identical averages.
fn cluster_roles(stats: &[TrackStats], detected: &[usize]) -> Vec<RoleCluster> {
    let point = |t: usize| (stats[t].x_like, stats[t].y_like);
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let tol = 1e-9 + 6.0 * detected.iter().map(|&t| stats[t].max_stderr()).fold(0.0, f64::max);

    let first = point(detected[0]);
    let far = detected
        .iter()
        .map(|&t| point(t))
        .max_by(|a, b| dist(first, *a).total_cmp(&dist(first, *b)))
        .expect("non-empty");
    let mut seeds = vec![first];
    if dist(first, far) > tol {
        seeds.push(far);
    }
    let mut sums = vec![(0.0, 0.0, 0usize); seeds.len()];
    for &t in detected {
        let p = point(t);
        let k = (0..seeds.len())
            .min_by(|&a, &b| dist(seeds[a], p).total_cmp(&dist(seeds[b], p)))
            .expect("non-empty");
        sums[k].0 += p.0;
        sums[k].1 += p.1;
        sums[k].2 += 1;
    }
    sums.iter()
        .map(|(x, y, n)| RoleCluster {
            x: x / *n as f64,
            y: y / *n as f64,
        })
        .collect()
}

struct Explanation {
    basis: QubitBasis,
    from_candidate: usize,
    pairing: Pairing,
    gates: BTreeMap<usize, SingleGate>,
}

fn explain(layer: &CircuitLayer, basis: QubitBasis, from_candidate: usize, detected: &[usize]) -> Result<Explanation> {
    let pairing = pairing_probe(layer, &basis, detected)?;
    let mut in_pair = vec![false; layer.num_tracks()];
    for &(c, t) in &pairing.pairs {
        in_pair[c] = true;
        in_pair[t] = true;
    }
    let singles: Vec<usize> = (0..layer.num_tracks()).filter(|&t| !in_pair[t]).collect();
    let gates = classify_single_qubit_gates(layer, &basis, &singles)?;
    Ok(Explanation {
        basis,
        from_candidate,
        pairing,
        gates,
    })
}

/// Runs the whole protocol: averages, detection, basis recovery, probe-based
/// selection, CNOT pairing and single-gate classification.
pub fn identify_layer(layer: &CircuitLayer, cfg: &IdentifyConfig) -> Result<ProtocolReport> {
    let stats = run_protocol(layer, &cfg.protocol)?;
    let detection = detect_cnot_tracks(&stats, cfg.tau)?;
    let mut report = ProtocolReport {
        status: Completeness::Partial,
        tracks: stats.clone(),
        cnot_tracks: detection.cnot_tracks.clone(),
        ambiguous: detection.ambiguous.clone(),
        candidates: Vec::new(),
        selected: None,
        cnot_pairs: Vec::new(),
        gates: BTreeMap::new(),
        diagnostics: Vec::new(),
        seed: cfg.protocol.seed,
        trials: cfg.protocol.trials,
        shots: cfg.protocol.shots,
        tau: cfg.tau,
        version: env!("CARGO_PKG_VERSION"),
    };
    let detected = &detection.cnot_tracks;
    if detected.is_empty() {
        report
            .diagnostics
            .push("no CNOT detected; the hidden basis cannot be recovered from this layer".into());
        return Ok(report);
    }

    let eps = 10.0 * detected.iter().map(|&t| stats[t].max_stderr()).fold(0.0, f64::max);
    let clusters = cluster_roles(&stats, detected);
    let silent = RoleCluster { x: 1.0, y: 1.0 };
    let hypotheses: Vec<(RoleCluster, RoleCluster)> = match clusters.as_slice() {
        [a, b] => vec![(*a, *b)],
        [a] => vec![(*a, *a), (*a, silent)],
        _ => unreachable!("at most two clusters"),
    };
    for (control, target) in hypotheses {
        let avg = CnotAverages {
            x: control.x,
            x_tilde: target.x,
            y: control.y,
            y_tilde: target.y,
        };
        match recover_basis(&avg, eps) {
            Ok(cands) => {
                for c in cands {
                    if !report.candidates.iter().any(|k| k.basis.amplitude_distance(&c.basis) < 1e-12) {
                        report.candidates.push(c);
                    }
                }
            }
            Err(e) => report.diagnostics.push(format!(
                "recovery from (X, X~, Y, Y~) = ({:.6}, {:.6}, {:.6}, {:.6}) failed: {e}",
                avg.x, avg.x_tilde, avg.y, avg.y_tilde
            )),
        }
    }
    if report.candidates.is_empty() {
        report
            .diagnostics
            .push("no basis candidate is consistent with the noiseless CNOT averages; basis recovery requires noise characterization".into());
        return Ok(report);
    }

    let mut refined: Vec<(QubitBasis, usize)> = Vec::new();
    for (i, c) in report.candidates.iter().enumerate() {
        let b = refine_candidate(layer, &c.basis, detected)?;
        if plus_probe_fidelity(layer, &b, detected)? < PROBE_FIDELITY
            || probe_fidelity(layer, &plus_x(&b), detected)? < PROBE_FIDELITY
        {
            continue;
        }
        if !refined.iter().any(|(k, _)| k.amplitude_distance(&b) < 1e-6) {
            refined.push((b, i));
        }
    }
    if refined.is_empty() {
        report.diagnostics.push(
            "no candidate basis survives the deterministic probes (CNOT outputs are mixed or shifted); \
             basis recovery requires noise characterization"
                .into(),
        );
        return Ok(report);
    }

    let mut explanations = Vec::new();
    for (b, i) in refined {
        match explain(layer, b, i, detected) {
            Ok(e) => explanations.push(e),
            Err(e) => report.diagnostics.push(format!("candidate {i} rejected: {e}")),
        }
    }
    if explanations.is_empty() {
        report
            .diagnostics
            .push("no candidate basis explains every track with gates from {I, H, T, S, CNOT}".into());
        return Ok(report);
    }
    // Descriptions that differ only by reversing every CNOT are physically
    // identical; report the one whose lowest CNOT track is a control.
    let chosen = explanations
        .iter()
        .position(|e| {
            e.pairing
                .pairs
                .iter()
                .flat_map(|&(c, t)| [(c, true), (t, false)])
                .min()
                .is_some_and(|(_, is_control)| is_control)
        })
        .unwrap_or(0);
    for (k, e) in explanations.iter().enumerate() {
        if k != chosen {
            report.diagnostics.push(format!(
                "equivalent description with every CNOT reversed: basis alpha = {}, beta = {} (candidate {})",
                e.basis.alpha(),
                e.basis.beta(),
                e.from_candidate
            ));
        }
    }
    let e = explanations.swap_remove(chosen);
    report.selected = Some(SelectedBasis {
        basis: e.basis,
        from_candidate: e.from_candidate,
    });
    for &(c, t) in &e.pairing.pairs {
        report.gates.insert(c, TrackRole::Control { target: t }.label());
        report.gates.insert(t, TrackRole::Target { control: c }.label());
        for track in [c, t] {
            if !detected.contains(&track) && !report.ambiguous.contains(&track) {
                report.ambiguous.push(track);
                report
                    .diagnostics
                    .push(format!("track {track} is CNOT-involved but its averages stay at 1; found by pairing"));
            }
        }
    }
    report.ambiguous.sort_unstable();
    for (t, g) in &e.gates {
        report.gates.insert(*t, g.label().to_string());
    }
    report.cnot_pairs = e.pairing.pairs;
    report.status = Completeness::Full;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::HaarQubitSample;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close4(a: CnotAverages, b: [f64; 4], tol: f64) {
        for (x, y) in a.as_array().iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    fn one_cnot(basis: QubitBasis) -> CircuitLayer {
        CircuitLayer::new(2, &[Gate::Cnot { control: 0, target: 1 }], basis, Noise::default()).unwrap()
    }

    #[test]
    fn expected_averages_examples() {
        let h = FRAC_1_SQRT_2;
        close4(expected_averages(&QubitBasis::new(c(h, 0.0), c(0.0, h)).unwrap()), [2.0 / 3.0, 1.0, 1.0, 1.0], 1e-12);
        close4(expected_averages(&QubitBasis::computational()), [2.0 / 3.0, 1.0, 1.0, 4.0 / 3.0], 1e-12);
        close4(expected_averages(&QubitBasis::new(c(h, 0.0), c(h, 0.0)).unwrap()), [1.0, 4.0 / 3.0, 4.0 / 3.0, 1.0], 1e-12);
    }

    #[test]
    fn margin_examples() {
        assert!((detectability_margin(&QubitBasis::computational()) - 2.0 / 9.0).abs() < 1e-12);
        let h = FRAC_1_SQRT_2;
        let b = QubitBasis::new(c(h, 0.0), c(0.0, h)).unwrap();
        assert!((detectability_margin(&b) - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn noise_interval_examples() {
        let (lo, hi) = noise_interval(0.2, 0.3).unwrap();
        assert_eq!(((lo * 1000.0).round(), (hi * 1000.0).round()), (813.0, 1187.0));
        let (lo, hi) = noise_interval(0.0, 0.0).unwrap();
        assert!((lo - 2.0 / 3.0).abs() < 1e-15 && (hi - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(noise_interval(1.0, 0.0).unwrap(), (1.0, 1.0));
        assert!(noise_interval(1.5, 0.0).is_err());
    }

    #[test]
    fn single_trial_identity_track_reads_plus_state() {
        let b = QubitBasis::from_polar(0.8, 0.4, -1.2).unwrap();
        let layer = CircuitLayer::new(1, &[], b, Noise::default()).unwrap();
        let out = run_layer(&layer, &HaarQubitSample { theta: 0.0, phi: 0.0 }).unwrap();
        let plus = DensityOperator::from_ket(&b.plus_ket()).unwrap();
        let expected = crate::texture::grand_sum(&plus).unwrap();
        let got = crate::texture::grand_sum(&out[0].reduced_state).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn protocol_is_thread_count_independent() {
        let layer = one_cnot(QubitBasis::from_polar(0.6, 0.3, 2.0).unwrap());
        let run = |threads| {
            run_protocol(
                &layer,
                &ProtocolConfig {
                    trials: 3000,
                    shots: Some(50),
                    seed: 11,
                    threads: Some(threads),
                },
            )
            .unwrap()
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn detection_on_exact_computational_stats() {
        let stats: Vec<TrackStats> = [(2.0 / 3.0, 1.0), (1.0, 4.0 / 3.0), (1.0, 1.0)]
            .iter()
            .enumerate()
            .map(|(track, &(x, y))| TrackStats {
                track,
                x_like: x,
                y_like: y,
                stderr_x: 0.0,
                stderr_y: 0.0,
                trials: 1,
            })
            .collect();
        let d = detect_cnot_tracks(&stats, 0.05).unwrap();
        assert_eq!(d.cnot_tracks, vec![0, 1]);
        assert!(d.ambiguous.is_empty());
        assert!(detect_cnot_tracks(&stats, 0.0).is_err());
    }

    #[test]
    fn recovery_of_degenerate_basis() {
        let avg = CnotAverages {
            x: 2.0 / 3.0,
            x_tilde: 1.0,
            y: 1.0,
            y_tilde: 4.0 / 3.0,
        };
        let cands = recover_basis(&avg, 0.0).unwrap();
        let first = cands[0];
        assert!(!first.swap_applied);
        assert!(first.basis.amplitude_distance(&QubitBasis::computational()) < 1e-9);
    }

    #[test]
    fn recovery_round_trip_on_exact_averages() {
        let mut rng = crate::rng::seeded(3);
        for _ in 0..200 {
            use rand::Rng;
            let b = QubitBasis::from_polar(rng.random_range(0.15..0.98), rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI))
                .unwrap();
            let cands = recover_basis(&expected_averages(&b), 0.0).unwrap();
            assert!(cands.len() <= 4);
            let best = cands.iter().map(|c| c.basis.amplitude_distance(&b)).fold(f64::INFINITY, f64::min);
            // The conjugate pair shares its averages; the true basis is one of them.
            let conj = QubitBasis::new(b.alpha().conj(), b.beta().conj()).unwrap();
            let best_conj = cands.iter().map(|c| c.basis.amplitude_distance(&conj)).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-7 && best_conj < 1e-7, "{b:?}: {cands:?}");
        }
    }

    #[test]
    fn swapped_tuple_is_recovered_by_swapped_branch() {
        let avg = CnotAverages {
            x: 1.0,
            x_tilde: 2.0 / 3.0,
            y: 4.0 / 3.0,
            y_tilde: 1.0,
        };
        let cands = recover_basis(&avg, 0.0).unwrap();
        let swapped: Vec<_> = cands.iter().filter(|c| c.swap_applied).collect();
        assert!(!swapped.is_empty());
        for cand in swapped {
            close4(expected_averages(&cand.basis), avg.swapped().as_array(), 1e-9);
        }
    }

    #[test]
    fn impossible_averages_are_rejected() {
        let avg = CnotAverages {
            x: 1.9,
            x_tilde: 1.9,
            y: 0.1,
            y_tilde: 1.9,
        };
        assert!(matches!(recover_basis(&avg, 1e-3), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn disambiguation_selects_computational() {
        let layer = one_cnot(QubitBasis::computational());
        let cands = recover_basis(&expected_averages(&QubitBasis::computational()), 0.0).unwrap();
        let sel = disambiguate(&layer, &cands, &[0, 1]).unwrap();
        assert!(sel.basis.amplitude_distance(&QubitBasis::computational()) < 1e-9, "{sel:?} {cands:?}");
        for &j in &sel.twins {
            assert!(cands[j].basis.plus_ket().overlap(&plus_x(&sel.basis)) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn phase_flipped_candidate_is_rejected() {
        let b = QubitBasis::from_polar(0.7, 0.5, 1.3).unwrap();
        let layer = one_cnot(b);
        let wrong = QubitBasis::new(b.alpha(), -b.beta()).unwrap();
        assert!(plus_probe_fidelity(&layer, &wrong, &[0, 1]).unwrap() < 1.0 - 1e-3);
        let cand = CandidateBasis {
            basis: wrong,
            sign_choice: (1, 1),
            swap_applied: false,
        };
        assert!(disambiguate(&layer, &[cand], &[0, 1]).is_err());
    }

    #[test]
    fn refinement_recovers_exact_basis() {
        let b = QubitBasis::from_polar(0.45, -0.7, 2.2).unwrap();
        let layer = one_cnot(b);
        let rough = QubitBasis::from_polar(0.47, -0.68, 2.15).unwrap();
        let r = refine_candidate(&layer, &rough, &[0, 1]).unwrap();
        assert!(r.amplitude_distance(&b) < 1e-9);
    }

    #[test]
    fn pairing_examples() {
        let b = QubitBasis::from_polar(0.5, 0.2, -0.9).unwrap();
        let layer = CircuitLayer::new(
            5,
            &[
                Gate::Cnot { control: 3, target: 0 },
                Gate::Cnot { control: 1, target: 4 },
                Gate::Single { gate: SingleGate::H, track: 2 },
            ],
            b,
            Noise::default(),
        )
        .unwrap();
        let p = pairing_probe(&layer, &b, &[1, 3]).unwrap();
        assert_eq!(p.pairs, vec![(1, 4), (3, 0)]);
        assert_eq!(p.probes, 2);
        // Starting from a target: no flip, then its control is searched for.
        let p = pairing_probe(&layer, &b, &[0]).unwrap();
        assert_eq!(p.pairs, vec![(3, 0)]);
        assert!(pairing_probe(&layer, &b, &[2]).is_err());
    }

    #[test]
    fn classification_examples() {
        let b = QubitBasis::from_polar(0.3, 1.0, 0.1).unwrap();
        let gates: Vec<Gate> = SingleGate::ALL
            .iter()
            .enumerate()
            .map(|(track, &gate)| Gate::Single { gate, track })
            .collect();
        let layer = CircuitLayer::new(4, &gates, b, Noise::default()).unwrap();
        let labels = classify_single_qubit_gates(&layer, &b, &[0, 1, 2, 3]).unwrap();
        assert_eq!(labels.values().copied().collect::<Vec<_>>(), SingleGate::ALL.to_vec());
        // A wrong basis makes the gates fall outside the dictionary.
        let wrong = QubitBasis::from_polar(0.5, 1.0, 0.1).unwrap();
        assert!(matches!(classify_single_qubit_gates(&layer, &wrong, &[2]), Err(Error::NoGateMatch { .. })));
    }

    #[test]
    fn twin_describes_same_operation_without_phase_gates() {
        let b = QubitBasis::from_polar(0.6, 0.9, -0.4).unwrap();
        let gates = [Gate::Cnot { control: 0, target: 1 }, Gate::Single { gate: SingleGate::H, track: 2 }];
        let layer = CircuitLayer::new(3, &gates, b, Noise::default()).unwrap();
        let twin = hadamard_twin(&b);
        assert!(are_hadamard_twins(&b, &twin));
        assert!(probe_defect(&layer, &twin, &[0, 1]).unwrap() < 1e-20);
        let reversed = [Gate::Cnot { control: 1, target: 0 }, Gate::Single { gate: SingleGate::H, track: 2 }];
        let twin_layer = CircuitLayer::new(3, &reversed, twin, Noise::default()).unwrap();
        assert!(layer.same_operation_as(&twin_layer, 1e-8));
        let with_t = CircuitLayer::new(3, &[gates[0], Gate::Single { gate: SingleGate::T, track: 2 }], b, Noise::default()).unwrap();
        assert!(classify_single_qubit_gates(&with_t, &twin, &[2]).is_err());
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let mut s = Compensated::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }
}
