//! Monte Carlo grand-sum averages of a hidden-basis layer against their
//! closed forms.
//!
//! ```text
//! cargo run --release --example layer_averages
//! ```

use texlab::circuit::{CircuitLayer, Gate, Noise, QubitBasis, SingleGate};
use texlab::identify::{detectability_margin, expected_averages, run_protocol, ProtocolConfig};

fn main() -> texlab::Result<()> {
    let basis = QubitBasis::from_polar(0.8, 0.4, 2.1)?;
    let layer = CircuitLayer::new(
        4,
        &[
            Gate::Single { gate: SingleGate::T, track: 0 },
            Gate::Cnot { control: 1, target: 3 },
            Gate::Single { gate: SingleGate::H, track: 2 },
        ],
        basis,
        Noise::default(),
    )?;

    let expected = expected_averages(&basis);
    println!("closed forms: X {:.5}  X~ {:.5}  Y {:.5}  Y~ {:.5}", expected.x, expected.x_tilde, expected.y, expected.y_tilde);
    println!("detectability margin Δ• + Δ⊕ = {:.5} (never below 1/9)", detectability_margin(&basis));

    let stats = run_protocol(&layer, &ProtocolConfig::new(50_000, 1))?;
    println!("track  role                 X          Y");
    for (s, role) in stats.iter().zip(layer.roles()) {
        println!(
            "{:>5}  {:<18} {:.4}±{:.4} {:.4}±{:.4}",
            s.track,
            role.label(),
            s.x_like,
            s.stderr_x,
            s.y_like,
            s.stderr_y
        );
    }
    Ok(())
}
