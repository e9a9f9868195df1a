//! Dense complex vectors and matrices.
//!
//! Storage is row-major. In tensor products the first factor is the most
//! significant index, so `|i⟩ ⊗ |j⟩` lives at position `i * d2 + j`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance for algebraic identities.
pub const EPS: f64 = 1e-10;

/// Largest row/column count a product may reach.
pub const MAX_DIM: usize = 1 << 10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::mismatch("positive dimensions", format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::mismatch(rows * cols, data.len()));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must share a length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::mismatch("rectangular rows", "ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// `|u⟩⟨v|`.
    pub fn outer(u: &Ket, v: &Ket) -> Self {
        Self::from_fn(u.dim(), v.dim(), |i, j| u.amplitudes()[i] * v.amplitudes()[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row_vecs(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.cols).map(<[C64]>::to_vec).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(C64::conj).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Sum of every entry.
    pub fn entry_sum(&self) -> C64 {
        self.data.iter().sum()
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::mismatch(
                format!("inner dimension {}", self.cols),
                other.rows,
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, u: &Self) -> Result<Self> {
        u.matmul(self)?.matmul(&u.adjoint())
    }

    pub fn apply(&self, ket: &Ket) -> Result<Ket> {
        if self.cols != ket.dim() {
            return Err(Error::mismatch(self.cols, ket.dim()));
        }
        let amps = (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(ket.amplitudes())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(Ket::from_amplitudes(amps))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        if rows > MAX_DIM || cols > MAX_DIM {
            return Err(Error::DimensionOverflow {
                dim: rows.max(cols),
                max: MAX_DIM,
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| {
            self.get(i / other.rows, j / other.cols) * other.get(i % other.rows, j % other.cols)
        }))
    }

    /// Traces out one factor of a bipartite operator on `d1 ⊗ d2`.
    /// `keep = 0` keeps the first (most significant) factor.
    pub fn partial_trace(&self, dims: (usize, usize), keep: usize) -> Result<Self> {
        let (d1, d2) = dims;
        if !self.is_square() || self.rows != d1 * d2 {
            return Err(Error::mismatch(
                format!("{0}x{0}", d1 * d2),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        match keep {
            0 => Ok(Self::from_fn(d1, d1, |i, j| {
                (0..d2).map(|k| self.get(i * d2 + k, j * d2 + k)).sum()
            })),
            1 => Ok(Self::from_fn(d2, d2, |i, j| {
                (0..d1).map(|k| self.get(k * d2 + i, k * d2 + j)).sum()
            })),
            other => Err(Error::mismatch("subsystem 0 or 1", other)),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(C64::norm_sqr).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - self†`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::mismatch(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }
}

/// `√Σ|a_ij − b_ij|²`.
pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok(a.try_sub(b)?.frobenius_norm())
}

/// `min_φ ‖a − e^{iφ} b‖_F`, i.e. distance up to a global phase.
pub fn phase_aligned_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let overlap = b.adjoint().matmul(a)?.trace();
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
    frobenius_distance(a, &b.scale(phase))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.kron(b)
}

pub fn partial_trace(m: &ComplexMatrix, dims: (usize, usize), keep: usize) -> Result<ComplexMatrix> {
    m.partial_trace(dims, keep)
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols) {
            let cells: Vec<String> = row
                .iter()
                .map(|z| format!("{:+.6}{:+.6}i", z.re, z.im))
                .collect();
            writeln!(f, "  {}", cells.join(", "))?;
        }
        write!(f, "]")
    }
}

// Operator forms panic on shape mismatch; use the `try_*` methods for checked access.
impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        self.try_add(rhs).expect("shape mismatch in matrix addition")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        self.try_sub(rhs).expect("shape mismatch in matrix subtraction")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        self.matmul(rhs).expect("shape mismatch in matrix product")
    }
}

/// A column vector of amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    amps: Vec<C64>,
}

impl Ket {
    /// Wraps raw amplitudes without normalizing.
    pub fn from_amplitudes(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    /// Normalizes the given amplitudes; fails on a zero or non-finite vector.
    pub fn normalize(amps: Vec<C64>) -> Result<Self> {
        let ket = Self { amps };
        let n2 = ket.norm_sqr();
        if !(n2.is_finite() && n2 > 0.0) {
            return Err(Error::NotNormalized(n2));
        }
        let inv = 1.0 / n2.sqrt();
        Ok(Self {
            amps: ket.amps.into_iter().map(|z| z * inv).collect(),
        })
    }

    /// Computational basis ket `|index⟩` (0-based).
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::IndexOutOfRange {
                index: index + 1,
                max: dim,
            });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(C64::norm_sqr).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, s: C64) -> Ket {
        Ket {
            amps: self.amps.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Ket) -> Ket {
        Ket {
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn kron(&self, other: &Ket) -> Ket {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ket { amps }
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(self, self)
    }

    /// `|⟨self|other⟩|²` for normalized kets.
    pub fn overlap(&self, other: &Ket) -> f64 {
        self.inner(other).norm_sqr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_kron_identity_is_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(i2.kron(&i2).unwrap(), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_of_basis_projectors() {
        let p1 = Ket::basis(2, 0).unwrap().projector();
        let p2 = Ket::basis(2, 1).unwrap().projector();
        let prod = p1.kron(&p2).unwrap();
        let expected = Ket::basis(4, 1).unwrap().projector();
        assert_eq!(prod, expected);
    }

    #[test]
    fn kron_overflow_is_rejected() {
        let big = ComplexMatrix::identity(64);
        assert!(matches!(
            big.kron(&big),
            Err(Error::DimensionOverflow { dim: 4096, .. })
        ));
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let m = ComplexMatrix::identity(4);
        assert!(m.partial_trace((2, 3), 0).is_err());
        assert!(m.partial_trace((2, 2), 2).is_err());
    }

    #[test]
    fn frobenius_simple_cases() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, 2.0), c(0.5, 0.0)], vec![c(0.0, -1.0), c(3.0, 0.0)]])
            .unwrap();
        assert_eq!(frobenius_distance(&m, &m).unwrap(), 0.0);
        let d = frobenius_distance(&ComplexMatrix::identity(2), &ComplexMatrix::zeros(2, 2)).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(frobenius_distance(&m, &ComplexMatrix::identity(3)).is_err());
    }

    #[test]
    fn non_finite_entries_rejected() {
        let err = ComplexMatrix::new(1, 2, vec![ONE, c(f64::NAN, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn matmul_and_apply_agree() {
        let m = ComplexMatrix::from_rows(&[vec![c(0.0, 1.0), ONE], vec![c(2.0, 0.0), c(0.0, -1.0)]]).unwrap();
        let k = Ket::from_amplitudes(vec![c(1.0, 1.0), c(0.5, 0.0)]);
        let col = ComplexMatrix::new(2, 1, k.amplitudes().to_vec()).unwrap();
        let a = m.apply(&k).unwrap();
        let b = m.matmul(&col).unwrap();
        assert_eq!(a.amplitudes(), b.data());
    }
}
