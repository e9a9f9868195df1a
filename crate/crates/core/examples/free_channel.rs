//! Builds a texture-free channel that turns the maximal state `f₂` into a
//! chosen target, then audits grand-sum monotonicity on random inputs.
//!
//! ```text
//! cargo run --example free_channel
//! ```

use texlab::channels::{audit_channel, build_free_channel, monotonicity_audit};
use texlab::states::{fourier_ket, random_ket, textureless_ket, DensityOperator};
use texlab::texture::grand_sum;

fn main() -> texlab::Result<()> {
    let dim = 4;
    let mut rng = texlab::rng::seeded(11);
    let target = random_ket(dim, &mut rng);
    let channel = build_free_channel(dim, &target)?;
    println!("{} Kraus operators, completeness residual {:.2e}", channel.kraus_ops().len(), channel.completeness_residual());

    let f2 = DensityOperator::from_ket(&fourier_ket(dim, 2)?)?;
    let out = channel.apply(&f2)?;
    println!("f2 -> target fidelity {:.12}", out.fidelity_with_pure(&target)?);
    println!("Σ(f2) = {:.3e}, Σ(Λ f2) = {:.6}", grand_sum(&f2)?, grand_sum(&out)?);

    let f1 = DensityOperator::from_ket(&textureless_ket(dim))?;
    println!("Σ(Λ f1) = {:.12} (D = {dim})", grand_sum(&channel.apply(&f1)?)?);

    let probe = random_ket(dim, &mut rng);
    let a = monotonicity_audit(&channel, &probe)?;
    println!(
        "random state: Σ {:.6} -> {:.6}, predicted gain {:.6}",
        a.sigma_before, a.sigma_after, a.gain_term
    );

    let summary = audit_channel(&channel, 500, 3)?;
    println!(
        "500 random states: min gain {:.3e}, worst identity residual {:.2e}, monotone {:?}",
        summary.min_gain.unwrap_or(f64::NAN),
        summary.max_identity_residual.unwrap_or(f64::NAN),
        summary.monotone
    );
    Ok(())
}
