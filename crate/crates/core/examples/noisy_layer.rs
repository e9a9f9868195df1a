//! Depolarized inputs and faulty CNOTs: CNOT tracks remain detectable, but
//! the noiseless basis equations no longer hold.
//!
//! ```text
//! cargo run --release --example noisy_layer
//! ```

use texlab::circuit::{CircuitLayer, Gate, Noise, QubitBasis, SingleGate};
use texlab::identify::{identify_layer, noise_interval, IdentifyConfig, ProtocolConfig, DEFAULT_TAU};

fn main() -> texlab::Result<()> {
    let (p, q) = (0.2, 0.3);
    let (lo, hi) = noise_interval(p, q)?;
    println!("noisy averages are confined to [{lo:.3}, {hi:.3}]");

    let layer = CircuitLayer::new(
        4,
        &[
            Gate::Single { gate: SingleGate::H, track: 0 },
            Gate::Cnot { control: 1, target: 2 },
            Gate::Single { gate: SingleGate::Identity, track: 3 },
        ],
        QubitBasis::computational(),
        Noise::new(p, q)?,
    )?;
    let report = identify_layer(
        &layer,
        &IdentifyConfig {
            protocol: ProtocolConfig::new(100_000, 42),
            tau: DEFAULT_TAU,
        },
    )?;
    for s in &report.tracks {
        println!("track {}: X {:.4}  Y {:.4}", s.track, s.x_like, s.y_like);
    }
    println!("CNOT tracks {:?}, status {:?}", report.cnot_tracks, report.status);
    for d in &report.diagnostics {
        println!("  {d}");
    }
    Ok(())
}
