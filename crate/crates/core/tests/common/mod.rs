//! Independent oracles shared by the integration tests.
//!
//! For Haar inputs `E[ψψ† ⊗ ψψ†] = (𝟙 + SWAP)/6`, so exact CNOT output
//! averages follow from one conjugation, with no sampling and no closed forms.

#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64 as C;

type M4 = [[C; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn dagger(a: &M4) -> M4 {
    let mut out = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

/// `(X, X̃, Y, Ỹ)` for a CNOT written in the basis `|+⟩ = (α, β)`.
pub fn oracle(alpha: C, beta: C) -> [f64; 4] {
    noisy_oracle(alpha, beta, 0.0, 0.0)
}

/// Same, with the pair input mixed as `(1−p)ψ⊗ψ + p𝟙/4` and the CNOT
/// skipped with probability `q`.
pub fn noisy_oracle(alpha: C, beta: C, p: f64, q: f64) -> [f64; 4] {
    let u = [[alpha, beta.conj()], [beta, -alpha.conj()]];
    let mut uu = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            uu[i][j] = u[i / 2][j / 2] * u[i % 2][j % 2];
        }
    }
    let mut cnot = [[C::new(0.0, 0.0); 4]; 4];
    for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        cnot[i][j] = C::new(1.0, 0.0);
    }
    let gate = mul(&mul(&uu, &cnot), &dagger(&uu));
    let mut twirl = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        twirl[i][i] += C::new((1.0 - p) / 6.0 + p / 4.0, 0.0);
        let swapped = (i % 2) * 2 + i / 2;
        twirl[i][swapped] += C::new((1.0 - p) / 6.0, 0.0);
    }
    let flipped = mul(&mul(&gate, &twirl), &dagger(&gate));
    let mut out = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = flipped[i][j] * (1.0 - q) + twirl[i][j] * q;
        }
    }
    let mut control = [[C::new(0.0, 0.0); 2]; 2];
    let mut target = [[C::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..2 {
                control[a][b] += out[2 * a + k][2 * b + k];
                target[a][b] += out[2 * k + a][2 * k + b];
            }
        }
    }
    let entry_sum = |m: &[[C; 2]; 2]| (m[0][0] + m[0][1] + m[1][0] + m[1][1]).re;
    [entry_sum(&control), entry_sum(&target), 2.0 * control[0][0].re, 2.0 * target[0][0].re]
}

