//! Purity deficits, the target functional `τ_{1j}` and Wootters concurrence.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::mps::{ReducedStates, Rdm};
use crate::pauli::Pauli;
use crate::{Error, Result};

/// `τ = S(ρ_a) + S(ρ_b) − μ S(ρ_{ab}) − Σ_{k≠a,b} α_k S(ρ_k)`.
///
/// Sites are zero-based; the protocol always uses `a = 0`. Penalty sites are
/// the ones with `α_k ≠ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    a: usize,
    b: usize,
    mu: f64,
    alpha: Vec<f64>,
}

impl TargetSpec {
    pub fn new(a: usize, b: usize, mu: f64, alpha: Vec<f64>) -> Result<Self> {
        let n = alpha.len();
        if a == b {
            return Err(Error::InvalidTarget(format!("pair ({a}, {b}) is degenerate")));
        }
        if a >= n || b >= n {
            return Err(Error::InvalidTarget(format!("pair ({a}, {b}) outside a chain of {n}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidTarget(format!("mu = {mu}")));
        }
        if let Some(k) = alpha.iter().position(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidTarget(format!("alpha[{k}] = {}", alpha[k])));
        }
        if alpha[a] != 0.0 || alpha[b] != 0.0 {
            return Err(Error::InvalidTarget("alpha must vanish on the target pair".into()));
        }
        Ok(Self { a, b, mu, alpha })
    }

    /// Target `(0, j)` with `α_k = alpha` on every other site.
    pub fn uniform(n: usize, j: usize, mu: f64, alpha: f64) -> Result<Self> {
        Self::masked(n, j, mu, alpha, &vec![true; n])
    }

    /// Target `(0, j)` with `α_k = alpha` on the sites of `mask` other than
    /// the pair, zero elsewhere.
    pub fn masked(n: usize, j: usize, mu: f64, alpha: f64, mask: &[bool]) -> Result<Self> {
        if mask.len() != n {
            return Err(Error::SizeMismatch(format!("mask of {} for {n} sites", mask.len())));
        }
        let weights = (0..n)
            .map(|k| if k != 0 && k != j && mask[k] { alpha } else { 0.0 })
            .collect();
        Self::new(0, j, mu, weights)
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.a, self.b)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn penalty_sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.alpha.iter().enumerate().filter(|(_, &w)| w != 0.0).map(|(k, _)| k)
    }
}

/// Linear entropy `1 − tr ρ²`.
pub fn purity_deficit(rho: &Rdm) -> f64 {
    1.0 - rho.purity()
}

pub fn tau<R: ReducedStates + ?Sized>(state: &R, target: &TargetSpec) -> Result<f64> {
    if state.num_sites() != target.n() {
        return Err(Error::SizeMismatch(format!(
            "target for {} sites, state has {}",
            target.n(),
            state.num_sites()
        )));
    }
    let (a, b) = target.pair();
    let mut value = purity_deficit(&state.reduced(&[a])?) + purity_deficit(&state.reduced(&[b])?);
    if target.mu != 0.0 {
        value -= target.mu * purity_deficit(&state.reduced(&[a, b])?);
    }
    for k in target.penalty_sites() {
        value -= target.alpha[k] * purity_deficit(&state.reduced(&[k])?);
    }
    Ok(value)
}

fn spin_flip() -> Matrix4<C64> {
    let y = Pauli::Y.matrix();
    y.kronecker(&y)
}

/// Eigenvalues of `ρ` below this fraction of the largest count as round-off.
const RANK_TOLERANCE: f64 = 1e-13;

/// Wootters concurrence of a two-site reduced state.
///
/// Separable states are recognised first from the sign of the determinant
/// of the partial transpose (a two-qubit state is entangled iff it is
/// negative) and get exactly zero. Otherwise the `√μ_i` are the eigenvalues of `(√ρ ρ̃ √ρ)^{1/2}`, obtained here as the
/// singular values of `√ρ (σ^y ⊗ σ^y) √ρ^*`. Eigenvalues of `ρ` at round-off
/// level are clamped to zero so that pure states are exact.
pub fn concurrence(rho: &Rdm) -> Result<f64> {
    if rho.num_sites() != 2 {
        return Err(Error::NotTwoQubit(rho.num_sites()));
    }
    let m: &DMatrix<C64> = rho.matrix();
    let r = Matrix4::from_fn(|i, j| m[(i, j)]);
    if partial_transpose(&r).determinant().re >= 0.0 {
        return Ok(0.0);
    }
    Ok(wootters(&r))
}

/// Transpose on the second qubit.
fn partial_transpose(r: &Matrix4<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| {
        let (a, b) = (i >> 1, i & 1);
        let (c, d) = (j >> 1, j & 1);
        r[(a * 2 + d, c * 2 + b)]
    })
}

fn wootters(r: &Matrix4<C64>) -> f64 {
    let eig = r.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let sqrt_diag = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| {
        if l > RANK_TOLERANCE * top {
            C64::new(l.sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }));
    let sqrt_rho = eig.eigenvectors * sqrt_diag * eig.eigenvectors.adjoint();
    let a = sqrt_rho * spin_flip() * sqrt_rho.conjugate();
    let mut mus: Vec<f64> = a.singular_values().iter().cloned().collect();
    mus.sort_by(|x, y| y.total_cmp(x));
    (mus[0] - mus[1] - mus[2] - mus[3]).clamp(0.0, 1.0)
}

/// Concurrence from the spin-flip spectrum alone, without the separability
/// shortcut.
pub fn concurrence_wootters(rho: &Rdm) -> Result<f64> {
    if rho.num_sites() != 2 {
        return Err(Error::NotTwoQubit(rho.num_sites()));
    }
    let m = rho.matrix();
    Ok(wootters(&Matrix4::from_fn(|i, j| m[(i, j)])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rdm2(m: Matrix4<C64>) -> Rdm {
        Rdm::new(vec![0, 1], DMatrix::from_fn(4, 4, |i, j| m[(i, j)])).unwrap()
    }

    fn projector(v: [C64; 4]) -> Matrix4<C64> {
        let v = nalgebra::Vector4::from(v);
        v * v.adjoint()
    }

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn purity_deficit_values() {
        let plus = Rdm::new(vec![0], DMatrix::from_element(2, 2, r(0.5))).unwrap();
        assert_abs_diff_eq!(purity_deficit(&plus), 0.0, epsilon = 1e-15);
        let mixed = Rdm::new(vec![0], DMatrix::from_diagonal_element(2, 2, r(0.5))).unwrap();
        assert_abs_diff_eq!(purity_deficit(&mixed), 0.5, epsilon = 1e-15);
        let skewed = Rdm::new(vec![0], DMatrix::from_diagonal(&nalgebra::dvector![r(0.75), r(0.25)])).unwrap();
        assert_abs_diff_eq!(purity_deficit(&skewed), 0.375, epsilon = 1e-15);
    }

    #[test]
    fn concurrence_of_standard_states() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = projector([r(h), r(0.0), r(0.0), r(h)]);
        assert_abs_diff_eq!(concurrence(&rdm2(bell)).unwrap(), 1.0, epsilon = 1e-10);
        let product = projector([r(1.0), r(0.0), r(0.0), r(0.0)]);
        assert_abs_diff_eq!(concurrence(&rdm2(product)).unwrap(), 0.0, epsilon = 1e-10);
        let singlet = projector([r(0.0), r(h), r(-h), r(0.0)]);
        assert_abs_diff_eq!(concurrence(&rdm2(singlet)).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn concurrence_rejects_single_site() {
        let one = Rdm::new(vec![3], DMatrix::from_diagonal_element(2, 2, r(0.5))).unwrap();
        assert!(matches!(concurrence(&one), Err(Error::NotTwoQubit(1))));
    }

    #[test]
    fn target_validation() {
        assert!(TargetSpec::uniform(4, 0, 0.0, 1.0).is_err());
        assert!(TargetSpec::uniform(4, 4, 0.0, 1.0).is_err());
        assert!(TargetSpec::uniform(4, 2, -0.1, 1.0).is_err());
        assert!(TargetSpec::new(0, 2, 0.0, vec![0.0, 1.0, 0.5, 1.0]).is_err());
        let t = TargetSpec::uniform(5, 3, 0.2, 1.0).unwrap();
        assert_eq!(t.penalty_sites().collect::<Vec<_>>(), vec![1, 2, 4]);
        let m = TargetSpec::masked(5, 3, 0.0, 1.0, &[true, false, true, true, false]).unwrap();
        assert_eq!(m.alpha(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
