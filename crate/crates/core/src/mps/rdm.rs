use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::pauli::{pauli_string, Pauli};
use crate::{Error, Result};

/// Reduced density matrix of 1 to 3 sites.
///
/// Basis ordering follows `sites` (ascending), first site most significant,
/// `|0>` the `σ^z = +1` state.
#[derive(Clone, Debug)]
pub struct Rdm {
    sites: Vec<usize>,
    matrix: DMatrix<C64>,
}

impl Rdm {
    /// Wraps a matrix, projecting it onto its Hermitian part.
    pub fn new(sites: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        let m = sites.len();
        if !(1..=3).contains(&m) {
            return Err(Error::UnsupportedSiteCount(m));
        }
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDensityMatrix("sites must be strictly ascending".into()));
        }
        let dim = 1usize << m;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::InvalidDensityMatrix(format!(
                "{}x{} matrix for {} sites",
                matrix.nrows(),
                matrix.ncols(),
                m
            )));
        }
        let matrix = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { sites, matrix })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        // ρ Hermitian: tr ρ² = Σ |ρ_ij|²
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `tr(ρ σ^{a_1} ⊗ … ⊗ σ^{a_m})`, one operator per site in `sites` order.
    pub fn pauli_coefficient(&self, ops: &[Pauli]) -> f64 {
        let m = self.sites.len();
        assert_eq!(ops.len(), m);
        let mut flip = 0usize;
        for (k, op) in ops.iter().enumerate() {
            if matches!(op, Pauli::X | Pauli::Y) {
                flip |= 1 << (m - 1 - k);
            }
        }
        // P|x> = phase(x)|x ^ flip>, so tr(ρP) = Σ_x phase(x) ρ[x, x ^ flip]
        let mut acc = C64::new(0.0, 0.0);
        for x in 0..(1usize << m) {
            let mut phase = C64::new(1.0, 0.0);
            for (k, op) in ops.iter().enumerate() {
                let up = (x >> (m - 1 - k)) & 1 == 0;
                match op {
                    Pauli::I | Pauli::X => {}
                    Pauli::Y => phase *= if up { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) },
                    Pauli::Z => {
                        if !up {
                            phase = -phase
                        }
                    }
                }
            }
            acc += phase * self.matrix[(x, x ^ flip)];
        }
        acc.re
    }

    /// Same value through an explicit Pauli-string matrix product.
    pub fn pauli_coefficient_dense(&self, ops: &[Pauli]) -> f64 {
        assert_eq!(ops.len(), self.sites.len());
        (&self.matrix * pauli_string(ops)).trace().re
    }

    /// Full Pauli coefficient table, indexed `Σ_k a_k 4^{m-1-k}`.
    pub fn pauli_table(&self) -> Vec<f64> {
        let m = self.sites.len();
        let mut out = Vec::with_capacity(1 << (2 * m));
        let mut ops = vec![Pauli::I; m];
        for code in 0..(1usize << (2 * m)) {
            for (k, op) in ops.iter_mut().enumerate() {
                *op = Pauli::ALL[(code >> (2 * (m - 1 - k))) & 3];
            }
            out.push(self.pauli_coefficient(&ops));
        }
        out
    }

    /// Checks Hermiticity (1e-12), unit trace (1e-10) and positivity (-1e-9).
    pub fn validate(&self) -> Result<()> {
        let herm = (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(Error::InvalidDensityMatrix(format!("not Hermitian ({herm:e})")));
        }
        if (self.trace() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("trace {}", self.trace())));
        }
        let eig = self.matrix.clone().symmetric_eigenvalues();
        if let Some(min) = eig.iter().cloned().reduce(f64::min) {
            if min < -1e-9 {
                return Err(Error::InvalidDensityMatrix(format!("eigenvalue {min}")));
            }
        }
        Ok(())
    }
}

/// Anything that can hand out reduced density matrices of its sites.
pub trait ReducedStates {
    fn num_sites(&self) -> usize;

    fn reduced(&self, sites: &[usize]) -> Result<Rdm>;
}

/// Sorts and validates a site list for reduced-state extraction.
pub fn checked_sites(sites: &[usize], n: usize) -> Result<Vec<usize>> {
    if !(1..=3).contains(&sites.len()) {
        return Err(Error::UnsupportedSiteCount(sites.len()));
    }
    let mut sorted = sites.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateSite(w[0]));
        }
    }
    if let Some(&s) = sorted.iter().find(|&&s| s >= n) {
        return Err(Error::SiteOutOfRange { site: s, n });
    }
    Ok(sorted)
}

/// Validates a Pauli assignment and returns it sorted by site.
pub fn checked_assignment(ops: &[(usize, Pauli)], n: usize) -> Result<Vec<(usize, Pauli)>> {
    let mut sorted = ops.to_vec();
    sorted.sort_by_key(|&(s, _)| s);
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateSite(w[0].0));
        }
    }
    if let Some(&(s, _)) = sorted.iter().find(|&&(s, _)| s >= n) {
        return Err(Error::SiteOutOfRange { site: s, n });
    }
    let non_identity = sorted.iter().filter(|(_, p)| *p != Pauli::I).count();
    if non_identity > 3 {
        return Err(Error::UnsupportedSiteCount(non_identity));
    }
    Ok(sorted)
}
