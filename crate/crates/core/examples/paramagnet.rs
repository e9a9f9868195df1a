//! Averaged rugosity of a coherent spin-1/2 paramagnet versus temperature.
//!
//! ```text
//! cargo run --release --example paramagnet
//! ```

use texlab::paramagnet::{equilibrium_magnetization, rugosity_magnetization_report, ParamagnetConfig, DEFAULT_GRID};

fn main() -> texlab::Result<()> {
    let rows = rugosity_magnetization_report(&DEFAULT_GRID, 256, None)?;
    println!("    x   m/Nμ₀    quadrature  2ln2-ln(1+tanh x)  -ln(1/2+m/2)");
    for r in rows.iter().step_by(2) {
        let m = equilibrium_magnetization(&ParamagnetConfig::new(r.x, 1)?);
        println!(
            "{:5.2}  {:.4}    {:.8}  {:.8}         {:.8}",
            r.x, m, r.rugosity_quadrature, r.alt_closed_form, r.magnetization_closed_form
        );
    }
    let worst = rows.iter().map(|r| r.residual_alt).fold(0.0, f64::max);
    println!("largest residual against 2ln2 - ln(1 + tanh x): {worst:.2e}");
    println!("x = 50: {:.10} (ln 2 = {:.10})", texlab::paramagnet::averaged_rugosity_per_spin(50.0, 256)?, 2f64.ln());
    Ok(())
}
