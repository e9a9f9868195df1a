//! Grand sum and rugosity of a few reference states.
//!
//! ```text
//! cargo run --example texture
//! ```

use texlab::states::{fourier_ket, qubit_from_bloch, textureless_ket, BlochVector, DensityOperator};
use texlab::tensor::{ComplexMatrix, C64};
use texlab::texture::{additivity_check, grand_sum, rugosity, TextureReading};

fn main() -> texlab::Result<()> {
    let f1 = DensityOperator::from_ket(&textureless_ket(4))?;
    let f2 = DensityOperator::from_ket(&fourier_ket(2, 2)?)?;
    let diag = DensityOperator::new(ComplexMatrix::from_fn(3, 3, |i, j| {
        if i == j {
            C64::new([0.2, 0.3, 0.5][i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))?;

    for (name, rho) in [("f1 (D=4)", &f1), ("f2 (D=2)", &f2), ("diagonal qutrit", &diag)] {
        let r = TextureReading::of(rho)?;
        println!(
            "{name:>16}: grand sum {:.6}  rugosity {:.6}  P(f1) {:.6}",
            r.grand_sum, r.rugosity, r.projective_probability
        );
    }

    // Grand sums mix linearly, rugosities do not.
    let a = qubit_from_bloch(BlochVector::new(0.6, 0.2, 0.1)?)?;
    let b = qubit_from_bloch(BlochVector::new(-0.3, 0.5, -0.4)?)?;
    let mix = DensityOperator::mixture(&[(0.3, &a), (0.7, &b)])?;
    println!(
        "mixing: Σ = {:.6} vs 0.3Σa + 0.7Σb = {:.6}",
        grand_sum(&mix)?,
        0.3 * grand_sum(&a)? + 0.7 * grand_sum(&b)?
    );
    println!(
        "mixing: r = {:.6} <= 0.3ra + 0.7rb = {:.6}",
        rugosity(&mix)?,
        0.3 * rugosity(&a)? + 0.7 * rugosity(&b)?
    );

    let (lhs, rhs) = additivity_check(&[a, b, diag])?;
    println!("additivity: r(a⊗b⊗diag) = {lhs:.9}, sum = {rhs:.9}");
    Ok(())
}
