//! Single-spin operators and the closed-form propagators used by both the
//! MPS engine and the dense reference.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Pauli operator label; `I` is the identity (index 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub fn matrix(self) -> Matrix2<C64> {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => Matrix2::new(l, o, o, l),
            Pauli::X => Matrix2::new(o, l, l, o),
            Pauli::Y => Matrix2::new(o, -i, i, o),
            Pauli::Z => Matrix2::new(l, o, o, -l),
        }
    }
}

impl TryFrom<u8> for Pauli {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Pauli::I),
            1 => Ok(Pauli::X),
            2 => Ok(Pauli::Y),
            3 => Ok(Pauli::Z),
            _ => Err(Error::InvalidPauli(v)),
        }
    }
}

/// Kronecker product of Pauli operators, first entry most significant.
pub fn pauli_string(ops: &[Pauli]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for p in ops {
        let m = p.matrix();
        out = out.kronecker(&m);
    }
    out
}

/// `exp(-i t (gx σ^x + gy σ^y))`.
pub fn field_rotation(gx: f64, gy: f64, t: f64) -> Matrix2<C64> {
    let g = gx.hypot(gy);
    if g == 0.0 {
        return Matrix2::identity();
    }
    let (s, c) = (g * t).sin_cos();
    let nx = gx / g;
    let ny = gy / g;
    // -i sin (nx X + ny Y) = [[0, -i s (nx - i ny)], [-i s (nx + i ny), 0]]
    let off_up = C64::new(0.0, -s) * C64::new(nx, -ny);
    let off_dn = C64::new(0.0, -s) * C64::new(nx, ny);
    Matrix2::new(C64::new(c, 0.0), off_up, off_dn, C64::new(c, 0.0))
}

/// Diagonal of `exp(-i θ σ^z⊗σ^z)` in the basis |00>,|01>,|10>,|11>.
pub fn zz_phases(theta: f64) -> [C64; 4] {
    let plus = C64::from_polar(1.0, -theta);
    let minus = C64::from_polar(1.0, theta);
    [plus, minus, minus, plus]
}

/// `z` eigenvalue of the computational basis state `s` (|0> ↦ +1).
#[inline]
pub fn z_sign(s: usize) -> f64 {
    if s == 0 {
        1.0
    } else {
        -1.0
    }
}
