//! Single-layer circuits over `{𝟙, H, T, S, CNOT}` in a hidden qubit basis.
//!
//! The layer's gates take their textbook matrices in an unknown basis
//! `|+⟩ = α|1⟩ + β|2⟩`, `|−⟩ = β*|1⟩ − α*|2⟩`. Each run feeds the same input
//! qubit to every track; CNOT tracks evolve jointly and are then reduced.
//!
//! Noise: with probability `p` a run's common input is replaced by `𝟙/2`
//! (so a CNOT pair sees `(1−p)ψ⊗ψ + p𝟙/4`), and with probability `q` a CNOT
//! acts as the identity. Both are applied as exact mixtures.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{ket_in_basis, DensityOperator, HaarQubitSample};
use crate::tensor::{phase_aligned_distance, ComplexMatrix, Ket, C64, ONE, ZERO};
use crate::texture::{grand_sum, grand_sum_fourier};

/// The hidden basis, parametrized by `α = |α|e^{iλ}` and `β = |β|e^{iχ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitBasis {
    alpha: C64,
    beta: C64,
}

impl QubitBasis {
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let n2 = alpha.norm_sqr() + beta.norm_sqr();
        if !n2.is_finite() || (n2 - 1.0).abs() > 1e-12 {
            return Err(Error::field("hidden_basis", format!("|alpha|^2 + |beta|^2 = {n2}, expected 1")));
        }
        Ok(Self { alpha, beta })
    }

    /// Normalizes `(α, β)` before validating.
    pub fn normalized(alpha: C64, beta: C64) -> Result<Self> {
        let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::field("hidden_basis", "zero vector"));
        }
        Self::new(alpha / n, beta / n)
    }

    /// `α = cos η · e^{iλ}`, `β = sin η · e^{iχ}` with `|α| = modulus_alpha`.
    pub fn from_polar(modulus_alpha: f64, lambda: f64, chi: f64) -> Result<Self> {
        let a = modulus_alpha.clamp(0.0, 1.0);
        let b = (1.0 - a * a).max(0.0).sqrt();
        Self::new(C64::from_polar(a, lambda), C64::from_polar(b, chi))
    }

    pub fn computational() -> Self {
        Self { alpha: ONE, beta: ZERO }
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn beta(&self) -> C64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.alpha.arg()
    }

    pub fn chi(&self) -> f64 {
        self.beta.arg()
    }

    pub fn plus_ket(&self) -> Ket {
        Ket::from_amplitudes(vec![self.alpha, self.beta])
    }

    pub fn minus_ket(&self) -> Ket {
        Ket::from_amplitudes(vec![self.beta.conj(), -self.alpha.conj()])
    }

    /// `a|+⟩ + b|−⟩` in computational coordinates.
    pub fn compose(&self, a: C64, b: C64) -> Ket {
        Ket::from_amplitudes(vec![
            a * self.alpha + b * self.beta.conj(),
            a * self.beta - b * self.alpha.conj(),
        ])
    }

    /// Columns `|+⟩, |−⟩`: maps hidden-basis coordinates to computational ones.
    pub fn unitary(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => self.alpha,
            (1, 0) => self.beta,
            (0, 1) => self.beta.conj(),
            _ => -self.alpha.conj(),
        })
    }

    /// Same basis after `α, β → −α, −β`, which leaves every gate unchanged.
    pub fn negated(&self) -> Self {
        Self {
            alpha: -self.alpha,
            beta: -self.beta,
        }
    }

    /// Distance in `(|α|, |cos λ|, |cos χ|)`, the quantities the averages fix.
    /// The cosine of a zero amplitude's phase is undefined and skipped.
    pub fn parameter_distance(&self, other: &QubitBasis) -> f64 {
        let mut d = (self.alpha.norm() - other.alpha.norm()).abs();
        if self.alpha.norm() > 1e-6 && other.alpha.norm() > 1e-6 {
            d = d.max((self.lambda().cos().abs() - other.lambda().cos().abs()).abs());
        }
        if self.beta.norm() > 1e-6 && other.beta.norm() > 1e-6 {
            d = d.max((self.chi().cos().abs() - other.chi().cos().abs()).abs());
        }
        d
    }

    /// Smallest `|(α,β) − s(α',β')|` over the signs `s = ±1`.
    pub fn amplitude_distance(&self, other: &QubitBasis) -> f64 {
        let d = |s: f64| ((self.alpha - other.alpha * s).norm_sqr() + (self.beta - other.beta * s).norm_sqr()).sqrt();
        d(1.0).min(d(-1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SingleGate {
    #[serde(rename = "I", alias = "Identity")]
    Identity,
    H,
    T,
    S,
}

impl SingleGate {
    pub const ALL: [SingleGate; 4] = [SingleGate::Identity, SingleGate::H, SingleGate::T, SingleGate::S];

    pub fn label(&self) -> &'static str {
        match self {
            SingleGate::Identity => "I",
            SingleGate::H => "H",
            SingleGate::T => "T",
            SingleGate::S => "S",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "I" | "Identity" | "1" => Some(SingleGate::Identity),
            "H" => Some(SingleGate::H),
            "T" => Some(SingleGate::T),
            "S" => Some(SingleGate::S),
            _ => None,
        }
    }

    /// Matrix in the gate's own basis.
    pub fn standard_matrix(&self) -> ComplexMatrix {
        let s = FRAC_1_SQRT_2;
        match self {
            SingleGate::Identity => ComplexMatrix::identity(2),
            SingleGate::H => ComplexMatrix::from_fn(2, 2, |i, j| C64::new(if i == 1 && j == 1 { -s } else { s }, 0.0)),
            SingleGate::T => ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => C64::from_polar(1.0, -PI / 8.0),
                (1, 1) => C64::from_polar(1.0, PI / 8.0),
                _ => ZERO,
            }),
            SingleGate::S => ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => ONE,
                (1, 1) => C64::new(0.0, 1.0),
                _ => ZERO,
            }),
        }
    }
}

/// CNOT with the first factor as control.
pub fn cnot_standard() -> ComplexMatrix {
    let perm = [0usize, 1, 3, 2];
    ComplexMatrix::from_fn(4, 4, |i, j| if perm[i] == j { ONE } else { ZERO })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Single(SingleGate),
    Cnot,
}

/// `U_b · U_std · U_b†`, with `U_b` applied to each qubit for the CNOT.
pub fn gate_matrix(kind: GateKind, basis: &QubitBasis) -> ComplexMatrix {
    let ub = basis.unitary();
    match kind {
        GateKind::Single(g) => g.standard_matrix().conjugate_by(&ub).expect("2x2 shapes"),
        GateKind::Cnot => {
            let ub2 = ub.kron(&ub).expect("4x4 fits");
            cnot_standard().conjugate_by(&ub2).expect("4x4 shapes")
        }
    }
}

/// A gate placed on the layer's tracks (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Single { gate: SingleGate, track: usize },
    Cnot { control: usize, target: usize },
}

/// What a track experiences inside the layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TrackRole {
    Single(SingleGate),
    Control { target: usize },
    Target { control: usize },
}

impl TrackRole {
    pub fn is_cnot(&self) -> bool {
        !matches!(self, TrackRole::Single(_))
    }

    pub fn label(&self) -> String {
        match self {
            TrackRole::Single(g) => g.label().to_string(),
            TrackRole::Control { target } => format!("CNOT-control->{target}"),
            TrackRole::Target { control } => format!("CNOT-target<-{control}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Noise {
    pub p: f64,
    pub q: f64,
}

impl Noise {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("noise.p", p), ("noise.q", q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::field(name, format!("{v} outside [0, 1]")));
            }
        }
        Ok(Self { p, q })
    }

    pub fn is_noiseless(&self) -> bool {
        self.p == 0.0 && self.q == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitLayer {
    roles: Vec<TrackRole>,
    hidden_basis: QubitBasis,
    noise: Noise,
    // Per track: its single-qubit gate, or the joint CNOT on control tracks.
    unitaries: Vec<Option<ComplexMatrix>>,
}

impl CircuitLayer {
    /// Tracks not named by any gate carry the identity.
    pub fn new(num_tracks: usize, gates: &[Gate], hidden_basis: QubitBasis, noise: Noise) -> Result<Self> {
        if num_tracks == 0 {
            return Err(Error::field("tracks", "must be positive"));
        }
        let noise = Noise::new(noise.p, noise.q)?;
        let mut roles: Vec<Option<TrackRole>> = vec![None; num_tracks];
        let mut claim = |track: usize, role: TrackRole, field: String| -> Result<()> {
            let slot = roles
                .get_mut(track)
                .ok_or_else(|| Error::field(field.clone(), format!("track {track} outside 0..{num_tracks}")))?;
            if slot.is_some() {
                return Err(Error::field(field, format!("track {track} is already used by another gate")));
            }
            *slot = Some(role);
            Ok(())
        };
        for (k, g) in gates.iter().enumerate() {
            match *g {
                Gate::Single { gate, track } => claim(track, TrackRole::Single(gate), format!("gates[{k}].track"))?,
                Gate::Cnot { control, target } => {
                    if control == target {
                        return Err(Error::field(format!("gates[{k}].target"), "control and target coincide"));
                    }
                    claim(control, TrackRole::Control { target }, format!("gates[{k}].control"))?;
                    claim(target, TrackRole::Target { control }, format!("gates[{k}].target"))?;
                }
            }
        }
        let roles: Vec<TrackRole> = roles
            .into_iter()
            .map(|r| r.unwrap_or(TrackRole::Single(SingleGate::Identity)))
            .collect();
        let cnot = gate_matrix(GateKind::Cnot, &hidden_basis);
        let unitaries = roles
            .iter()
            .map(|r| match *r {
                TrackRole::Single(g) => Some(gate_matrix(GateKind::Single(g), &hidden_basis)),
                TrackRole::Control { .. } => Some(cnot.clone()),
                TrackRole::Target { .. } => None,
            })
            .collect();
        Ok(Self {
            roles,
            hidden_basis,
            noise,
            unitaries,
        })
    }

    pub fn num_tracks(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[TrackRole] {
        &self.roles
    }

    pub fn hidden_basis(&self) -> &QubitBasis {
        &self.hidden_basis
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn cnot_pairs(&self) -> Vec<(usize, usize)> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(c, r)| match r {
                TrackRole::Control { target } => Some((c, *target)),
                _ => None,
            })
            .collect()
    }

    /// Whether both layers act identically on every track, each gate up to a
    /// global phase. A CNOT matches its partner pair in either orientation,
    /// since reversing it is the same operation in a Hadamard-rotated basis.
    pub fn same_operation_as(&self, other: &CircuitLayer, tol: f64) -> bool {
        if self.num_tracks() != other.num_tracks() {
            return false;
        }
        let swap = ComplexMatrix::from_fn(4, 4, |i, j| if [0usize, 2, 1, 3][i] == j { ONE } else { ZERO });
        let close = |a: &ComplexMatrix, b: &ComplexMatrix| phase_aligned_distance(a, b).is_ok_and(|d| d <= tol);
        self.roles.iter().enumerate().all(|(t, role)| match (*role, other.roles[t]) {
            (TrackRole::Single(_), TrackRole::Single(_)) => {
                close(self.unitaries[t].as_ref().unwrap(), other.unitaries[t].as_ref().unwrap())
            }
            (TrackRole::Control { target }, TrackRole::Control { target: o }) if o == target => {
                close(self.unitaries[t].as_ref().unwrap(), other.unitaries[t].as_ref().unwrap())
            }
            (TrackRole::Control { target }, TrackRole::Target { control: o }) if o == target => {
                let reversed = other.unitaries[target].as_ref().unwrap().conjugate_by(&swap).expect("4x4 shapes");
                close(self.unitaries[t].as_ref().unwrap(), &reversed)
            }
            (TrackRole::Target { control }, TrackRole::Target { control: o }) => o == control,
            (TrackRole::Target { control }, TrackRole::Control { target: o }) => o == control,
            _ => false,
        })
    }

    /// Gates in track order, one entry per gate.
    pub fn gates(&self) -> Vec<Gate> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(t, r)| match *r {
                TrackRole::Single(gate) => Some(Gate::Single { gate, track: t }),
                TrackRole::Control { target } => Some(Gate::Cnot { control: t, target }),
                TrackRole::Target { .. } => None,
            })
            .collect()
    }
}

/// Reduced state of one output track.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackOutput {
    pub track: usize,
    pub reduced_state: DensityOperator,
}

fn noisy_input(psi: &Ket, p: f64) -> ComplexMatrix {
    let pure = psi.projector().scale(C64::new(1.0 - p, 0.0));
    &pure + &ComplexMatrix::identity(psi.dim()).scale(C64::new(p / psi.dim() as f64, 0.0))
}

/// Propagates explicit per-track input kets through the layer.
pub fn run_layer_with_inputs(layer: &CircuitLayer, inputs: &[Ket]) -> Result<Vec<TrackOutput>> {
    if inputs.len() != layer.num_tracks() {
        return Err(Error::mismatch(layer.num_tracks(), inputs.len()));
    }
    if let Some(bad) = inputs.iter().find(|k| k.dim() != 2) {
        return Err(Error::mismatch(2, bad.dim()));
    }
    let Noise { p, q } = layer.noise();
    let mut outputs: Vec<Option<DensityOperator>> = vec![None; layer.num_tracks()];
    for (t, role) in layer.roles().iter().enumerate() {
        match *role {
            TrackRole::Single(_) => {
                let u = layer.unitaries[t].as_ref().expect("single tracks carry a gate");
                let out = noisy_input(&inputs[t], p).conjugate_by(u)?;
                outputs[t] = Some(DensityOperator::with_tolerance(out, 1e-9)?);
            }
            TrackRole::Control { target } => {
                let joint_in = noisy_input(&inputs[t].kron(&inputs[target]), p);
                let gate = layer.unitaries[t].as_ref().expect("control tracks carry the CNOT");
                let flipped = joint_in.conjugate_by(gate)?.scale(C64::new(1.0 - q, 0.0));
                let joint_out = &flipped + &joint_in.scale(C64::new(q, 0.0));
                outputs[t] = Some(DensityOperator::with_tolerance(joint_out.partial_trace((2, 2), 0)?, 1e-9)?);
                outputs[target] =
                    Some(DensityOperator::with_tolerance(joint_out.partial_trace((2, 2), 1)?, 1e-9)?);
            }
            TrackRole::Target { .. } => {}
        }
    }
    Ok(outputs
        .into_iter()
        .enumerate()
        .map(|(track, s)| TrackOutput {
            track,
            reduced_state: s.expect("every track has a role"),
        })
        .collect())
}

/// One run: every track receives `cos(θ/2)|+⟩ + e^{iφ} sin(θ/2)|−⟩`.
pub fn run_layer(layer: &CircuitLayer, input: &HaarQubitSample) -> Result<Vec<TrackOutput>> {
    let psi = ket_in_basis(input, layer.hidden_basis());
    run_layer_with_inputs(layer, &vec![psi; layer.num_tracks()])
}

/// Basis in which a grand sum is read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementBasis {
    /// Projects on `{|f₁⟩, |f₂⟩}`.
    Computational,
    /// Projects on `{|1⟩, |2⟩}`.
    Fourier,
}

/// Exact grand sum of a qubit in the requested basis.
pub fn grand_sum_in(rho: &DensityOperator, basis: MeasurementBasis) -> Result<f64> {
    match basis {
        MeasurementBasis::Computational => grand_sum(rho),
        MeasurementBasis::Fourier => grand_sum_fourier(rho),
    }
}

/// Grand sum estimate from `shots` projective measurements: `2 × frequency`
/// of the textureless outcome, whose probability is `Σ/2`.
pub fn sample_grand_sum<R: Rng + ?Sized>(exact: f64, shots: u64, rng: &mut R) -> f64 {
    let p = (exact / 2.0).clamp(0.0, 1.0);
    let hits = Binomial::new(shots, p).expect("probability clamped to [0, 1]").sample(rng);
    2.0 * hits as f64 / shots as f64
}

/// Per-track grand sums, exact when `shots` is `None`.
pub fn measure_grand_sums<R: Rng + ?Sized>(
    outputs: &[TrackOutput],
    basis: MeasurementBasis,
    shots: Option<u64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    outputs
        .iter()
        .map(|o| {
            let exact = grand_sum_in(&o.reduced_state, basis)?;
            Ok(match shots {
                Some(n) if n > 0 => sample_grand_sum(exact, n, rng),
                _ => exact,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::frobenius_distance;

    fn random_basis(seed: u64) -> QubitBasis {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        QubitBasis::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI))
            .unwrap()
    }

    #[test]
    fn computational_gates_match_standard_up_to_relabeling() {
        // With α = 1, β = 0 the hidden basis is {|1⟩, −|2⟩}: the textbook
        // matrices conjugated by Z on each qubit.
        let comp = QubitBasis::computational();
        let z = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => ONE,
            (1, 1) => -ONE,
            _ => ZERO,
        });
        for g in SingleGate::ALL {
            let m = gate_matrix(GateKind::Single(g), &comp);
            let expected = g.standard_matrix().conjugate_by(&z).unwrap();
            assert!(frobenius_distance(&m, &expected).unwrap() < 1e-15);
        }
        let h = gate_matrix(GateKind::Single(SingleGate::H), &comp);
        let h_std = SingleGate::H.standard_matrix();
        assert!((h.get(0, 0) - h_std.get(0, 0)).norm() < 1e-15);
        assert!((h.get(0, 1) + h_std.get(0, 1)).norm() < 1e-15);

        let cn = gate_matrix(GateKind::Cnot, &comp);
        let zz = z.kron(&z).unwrap();
        let expected = cnot_standard().conjugate_by(&zz).unwrap();
        assert!(frobenius_distance(&cn, &expected).unwrap() < 1e-15);
        // Same permutation pattern as the textbook CNOT, with a sign on the flip block.
        for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            assert!((cn.get(i, j).norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn conjugated_gates_are_unitary_and_keep_spectrum() {
        for seed in 0..10 {
            let b = random_basis(seed);
            for kind in [
                GateKind::Single(SingleGate::H),
                GateKind::Single(SingleGate::T),
                GateKind::Single(SingleGate::S),
                GateKind::Cnot,
            ] {
                let u = gate_matrix(kind, &b);
                let n = u.rows();
                let uu = u.matmul(&u.adjoint()).unwrap();
                assert!(frobenius_distance(&uu, &ComplexMatrix::identity(n)).unwrap() < 1e-12);
            }
            // S has eigenvalues {1, i}: trace 1 + i and determinant i.
            let s = gate_matrix(GateKind::Single(SingleGate::S), &b);
            assert!((s.trace() - C64::new(1.0, 1.0)).norm() < 1e-12);
            let det = s.get(0, 0) * s.get(1, 1) - s.get(0, 1) * s.get(1, 0);
            assert!((det - C64::new(0.0, 1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn layer_validation_names_fields() {
        let b = QubitBasis::computational();
        let err = CircuitLayer::new(
            3,
            &[Gate::Cnot { control: 0, target: 1 }, Gate::Cnot { control: 1, target: 2 }],
            b,
            Noise::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("gates[1].control"), "{err}");
        let err = CircuitLayer::new(2, &[Gate::Single { gate: SingleGate::H, track: 5 }], b, Noise::default()).unwrap_err();
        assert!(err.to_string().contains("gates[0].track"), "{err}");
        let err = CircuitLayer::new(2, &[], b, Noise { p: 1.5, q: 0.0 }).unwrap_err();
        assert!(err.to_string().contains("noise.p"), "{err}");
    }

    #[test]
    fn basis_rejects_unnormalized() {
        assert!(QubitBasis::new(ONE, ONE).is_err());
    }

    #[test]
    fn plus_minus_are_orthonormal() {
        let b = random_basis(3);
        assert!(b.plus_ket().inner(&b.minus_ket()).norm() < 1e-15);
        assert!((b.minus_ket().norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shot_estimate_is_bounded() {
        let mut rng = crate::rng::seeded(1);
        for exact in [0.0, 0.7, 2.0] {
            let s = sample_grand_sum(exact, 1000, &mut rng);
            assert!((0.0..=2.0).contains(&s));
        }
        assert_eq!(sample_grand_sum(2.0, 50, &mut rng), 2.0);
    }
}
