//! Identifies every gate of an unknown layer from grand-sum statistics alone.
//!
//! ```text
//! cargo run --release --example identify
//! ```

use texlab::identify::{identify_layer, IdentifyConfig, ProtocolConfig, DEFAULT_TAU};
use texlab::io::{parse_layer_spec, random_layer, to_json_string};

const SPEC: &str = r#"{
    "tracks": 4,
    "hidden_basis": {"alpha": [1.0, 0.0], "beta": [0.0, 0.0]},
    "gates": [
        {"kind": "H", "track": 0},
        {"kind": "CNOT", "control": 1, "target": 2},
        {"kind": "I", "track": 3}
    ]
}"#;

fn main() -> texlab::Result<()> {
    let cfg = IdentifyConfig {
        protocol: ProtocolConfig::new(100_000, 42),
        tau: DEFAULT_TAU,
    };

    let layer = parse_layer_spec(SPEC)?;
    let report = identify_layer(&layer, &cfg)?;
    println!("{}", to_json_string(&report)?);

    let hidden = random_layer(7, 2, 2024)?;
    let report = identify_layer(&hidden, &cfg)?;
    let found = report.selected.expect("noiseless layers are fully identified").basis;
    println!("random layer: status {:?}", report.status);
    println!("  true basis  alpha {:.6} beta {:.6}", hidden.hidden_basis().alpha(), hidden.hidden_basis().beta());
    println!("  found basis alpha {:.6} beta {:.6}", found.alpha(), found.beta());
    for (track, gate) in &report.gates {
        println!("  track {track}: {gate}");
    }
    let same = report.reconstructed_layer().is_some_and(|l| l.same_operation_as(&hidden, 1e-6));
    println!("  reconstruction acts identically: {same}");
    for d in &report.diagnostics {
        println!("  note: {d}");
    }
    Ok(())
}
