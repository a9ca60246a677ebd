//! Matrix product state of a spin-1/2 chain with open boundaries.
//!
//! Each site carries one `D_l × D_r` complex matrix per physical index
//! `s ∈ {0, 1}` (`|0>` is `σ^z = +1`). Time evolution is a second- or
//! fourth-order splitting of the Ising and local-field parts; the Ising part
//! is one sweep of commuting two-site phase gates, each followed by an SVD
//! truncated to at most `max_bond` singular values.

mod env;
mod rdm;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::model::{ChainSpec, ControlFrame};
use crate::pauli::{field_rotation, zz_phases, Pauli};
use crate::{Error, Result};

pub use env::Environments;
pub use rdm::{checked_sites, ReducedStates, Rdm};

/// Singular values with `σ²/Σσ²` below this are always dropped.
pub const RELATIVE_WEIGHT_FLOOR: f64 = 1e-12;

/// Default tolerance on `|<Ψ|Ψ> - 1|` before a step is rejected.
pub const DEFAULT_NORM_TOLERANCE: f64 = 1e-10;

/// Per-site tensor: one matrix per physical index.
pub type SiteTensor = [DMatrix<C64>; 2];

/// Splitting scheme used by [`MpsState::step`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// `e^{-iH_c dt/2} e^{-iH_s dt} e^{-iH_c dt/2}`.
    Strang,
    /// Triple-jump composition of three Strang steps.
    #[default]
    Fourth,
}

#[derive(Clone, Copy)]
enum Sweep {
    Right,
    Left,
}

enum BondGate<'a> {
    Diagonal([C64; 4]),
    Dense(&'a Matrix4<C64>),
}

#[derive(Clone, Debug)]
pub struct MpsState {
    tensors: Vec<SiteTensor>,
    max_bond: usize,
    center: Option<usize>,
    discarded_weight: f64,
    norm_tolerance: f64,
    integrator: Integrator,
    substeps: usize,
    weight_floor: f64,
    last_norm_drift: f64,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

impl MpsState {
    /// Product state `⊗_i (a_i|0> + b_i|1>)`.
    pub fn from_product_state(locals: &[[C64; 2]], max_bond: usize) -> Result<Self> {
        if locals.len() < 2 {
            return Err(Error::ChainTooShort(locals.len()));
        }
        if max_bond == 0 {
            return Err(Error::InvalidBondCap);
        }
        let mut tensors = Vec::with_capacity(locals.len());
        for (site, [a, b]) in locals.iter().enumerate() {
            let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::UnnormalizedLocal { site, norm });
            }
            tensors.push([DMatrix::from_element(1, 1, *a), DMatrix::from_element(1, 1, *b)]);
        }
        Ok(Self {
            tensors,
            max_bond,
            center: Some(0),
            discarded_weight: 0.0,
            norm_tolerance: DEFAULT_NORM_TOLERANCE,
            integrator: Integrator::default(),
            substeps: 1,
            weight_floor: RELATIVE_WEIGHT_FLOOR,
            last_norm_drift: 0.0,
        })
    }

    /// `|+>^{⊗n}`.
    pub fn all_plus(n: usize, max_bond: usize) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_product_state(&vec![[c(h), c(h)]; n], max_bond)
    }

    /// Decomposes a normalized dense state vector (first site most
    /// significant), truncating to `max_bond`.
    pub fn from_dense(n: usize, amplitudes: &[C64], max_bond: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::ChainTooShort(n));
        }
        if max_bond == 0 {
            return Err(Error::InvalidBondCap);
        }
        if amplitudes.len() != 1usize << n {
            return Err(Error::SizeMismatch(format!("{} amplitudes for {n} sites", amplitudes.len())));
        }
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut rest = DMatrix::from_row_slice(1, amplitudes.len(), amplitudes) / c(norm);
        let mut tensors = Vec::with_capacity(n);
        let mut discarded = 0.0;
        for _ in 0..n - 1 {
            let dl = rest.nrows();
            let half = rest.ncols() / 2;
            let m = DMatrix::from_fn(2 * dl, half, |row, col| {
                let (s, a) = (row / dl, row % dl);
                rest[(a, s * half + col)]
            });
            let (u, sv, vt, w) = truncated_svd(m, max_bond, RELATIVE_WEIGHT_FLOOR);
            discarded += w;
            let keep = sv.len();
            tensors.push([u.rows(0, dl).into_owned(), u.rows(dl, dl).into_owned()]);
            let mut next = vt;
            for k in 0..keep {
                next.row_mut(k).scale_mut(sv[k]);
            }
            rest = next;
        }
        tensors.push([rest.columns(0, 1).into_owned(), rest.columns(1, 1).into_owned()]);
        Ok(Self {
            tensors,
            max_bond,
            center: Some(n - 1),
            discarded_weight: discarded,
            norm_tolerance: DEFAULT_NORM_TOLERANCE,
            integrator: Integrator::default(),
            substeps: 1,
            weight_floor: RELATIVE_WEIGHT_FLOOR,
            last_norm_drift: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    pub fn max_bond(&self) -> usize {
        self.max_bond
    }

    /// Orthogonality center, if the state is known to be in mixed canonical form.
    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Accumulated truncated weight `Σ σ²_discarded / Σ σ²` over all SVDs.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn set_integrator(&mut self, integrator: Integrator) {
        self.integrator = integrator;
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Splits every [`step`](Self::step) into `substeps` equal integrator steps.
    pub fn set_substeps(&mut self, substeps: usize) {
        self.substeps = substeps.max(1);
    }

    /// Relative squared-weight floor below which singular values are dropped.
    pub fn set_weight_floor(&mut self, floor: f64) {
        self.weight_floor = floor.max(0.0);
    }

    pub fn set_norm_tolerance(&mut self, tol: f64) {
        self.norm_tolerance = tol;
    }

    /// Largest norm deviation seen before renormalization during the last step.
    pub fn last_norm_drift(&self) -> f64 {
        self.last_norm_drift
    }

    pub fn tensors(&self) -> &[SiteTensor] {
        &self.tensors
    }

    /// Internal bond dimensions `D_1 … D_{n-1}`.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.n() - 1].iter().map(|t| t[0].ncols()).collect()
    }

    pub fn environments(&self) -> Environments<'_> {
        Environments::new(self)
    }

    pub fn norm_squared(&self) -> f64 {
        let mut x = DMatrix::from_element(1, 1, c(1.0));
        for t in &self.tensors {
            x = env::transfer_left(&x, t);
        }
        x[(0, 0)].re
    }

    pub fn expect(&self, ops: &[(usize, Pauli)]) -> Result<f64> {
        self.environments().expect(ops)
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &MpsState) -> Result<C64> {
        if self.n() != other.n() {
            return Err(Error::SizeMismatch(format!("{} vs {} sites", self.n(), other.n())));
        }
        let mut x = DMatrix::from_element(1, 1, c(1.0));
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            x = a[0].adjoint() * (&x * &b[0]) + a[1].adjoint() * (&x * &b[1]);
        }
        Ok(x[(0, 0)])
    }

    /// Dense amplitudes, first site most significant.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut rows: Vec<DMatrix<C64>> = vec![DMatrix::from_element(1, 1, c(1.0))];
        for t in &self.tensors {
            rows = rows.iter().flat_map(|r| [r * &t[0], r * &t[1]]).collect();
        }
        rows.into_iter().map(|r| r[(0, 0)]).collect()
    }

    /// Brings the state into mixed canonical form centred on `site`.
    ///
    /// QR factors carry a non-negative real diagonal, so canonicalizing an
    /// already canonical state leaves it unchanged.
    pub fn canonicalize(&mut self, site: usize) -> Result<()> {
        let n = self.n();
        if site >= n {
            return Err(Error::SiteOutOfRange { site, n });
        }
        let (from_left, from_right) = match self.center {
            Some(c0) => (c0, c0),
            None => (0, n - 1),
        };
        for k in from_left.min(site)..site {
            self.left_orthonormalize(k);
        }
        for k in (site + 1..=from_right.max(site)).rev() {
            self.right_orthonormalize(k);
        }
        self.center = Some(site);
        Ok(())
    }

    fn left_orthonormalize(&mut self, k: usize) {
        let [a0, a1] = &self.tensors[k];
        let dl = a0.nrows();
        let dr = a0.ncols();
        let mut m = DMatrix::zeros(2 * dl, dr);
        m.rows_mut(0, dl).copy_from(a0);
        m.rows_mut(dl, dl).copy_from(a1);
        let qr = m.qr();
        let (mut q, mut r) = (qr.q(), qr.r());
        fix_phases(&mut q, &mut r);
        let kk = q.ncols();
        self.tensors[k] = [q.rows(0, dl).into_owned(), q.rows(dl, dl).into_owned()];
        let next = &mut self.tensors[k + 1];
        for s in 0..2 {
            next[s] = &r.rows(0, kk) * &next[s];
        }
    }

    fn right_orthonormalize(&mut self, k: usize) {
        let [a0, a1] = &self.tensors[k];
        let dl = a0.nrows();
        let dr = a0.ncols();
        // A = L Q with Q row-orthonormal, via QR of the adjoint
        let mut m = DMatrix::zeros(2 * dr, dl);
        m.rows_mut(0, dr).copy_from(&a0.adjoint());
        m.rows_mut(dr, dr).copy_from(&a1.adjoint());
        let qr = m.qr();
        let (mut q, mut r) = (qr.q(), qr.r());
        fix_phases(&mut q, &mut r);
        let kk = q.ncols();
        let q0 = q.rows(0, dr).adjoint();
        let q1 = q.rows(dr, dr).adjoint();
        self.tensors[k] = [q0, q1];
        let l = r.rows(0, kk).adjoint();
        let prev = &mut self.tensors[k - 1];
        for s in 0..2 {
            prev[s] = &prev[s] * &l;
        }
    }

    /// Largest deviation of site `k` from the left-isometry condition.
    pub fn left_isometry_error(&self, k: usize) -> f64 {
        let [a0, a1] = &self.tensors[k];
        let g = a0.adjoint() * a0 + a1.adjoint() * a1;
        identity_error(&g)
    }

    /// Largest deviation of site `k` from the right-isometry condition.
    pub fn right_isometry_error(&self, k: usize) -> f64 {
        let [a0, a1] = &self.tensors[k];
        let g = a0 * a0.adjoint() + a1 * a1.adjoint();
        identity_error(&g)
    }

    /// Applies a one-site unitary; leaves the canonical form intact.
    pub fn apply_single_site(&mut self, site: usize, u: &Matrix2<C64>) -> Result<()> {
        let n = self.n();
        if site >= n {
            return Err(Error::SiteOutOfRange { site, n });
        }
        let [a0, a1] = &self.tensors[site];
        let b0 = a0 * u[(0, 0)] + a1 * u[(0, 1)];
        let b1 = a0 * u[(1, 0)] + a1 * u[(1, 1)];
        self.tensors[site] = [b0, b1];
        Ok(())
    }

    /// Applies a two-site unitary on `(bond, bond + 1)` in basis `s_1 s_2`,
    /// truncating the new bond. The center ends on `bond + 1`.
    pub fn apply_two_site(&mut self, bond: usize, gate: &Matrix4<C64>) -> Result<()> {
        let n = self.n();
        if bond + 1 >= n {
            return Err(Error::SiteOutOfRange { site: bond + 1, n });
        }
        if self.center != Some(bond) && self.center != Some(bond + 1) {
            self.canonicalize(bond)?;
        }
        self.update_bond(bond, BondGate::Dense(gate), Sweep::Right);
        self.check_norm()
    }

    /// One time step `dt` of `H = H_s(chain) + H_c(frame)`.
    pub fn step(&mut self, chain: &ChainSpec, frame: &ControlFrame, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::NonPositiveStep(dt));
        }
        let n = self.n();
        if chain.n() != n || frame.n() != n {
            return Err(Error::SizeMismatch(format!(
                "state has {n} sites, chain {}, frame {}",
                chain.n(),
                frame.n()
            )));
        }
        self.last_norm_drift = 0.0;
        let h = dt / self.substeps as f64;
        for _ in 0..self.substeps {
            match self.integrator {
                Integrator::Strang => {
                    self.field_layer(frame, 0.5 * h);
                    self.zz_layer(chain, h);
                    self.field_layer(frame, 0.5 * h);
                }
                Integrator::Fourth => {
                    let w1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
                    let w0 = 1.0 - 2.0 * w1;
                    self.field_layer(frame, 0.5 * w1 * h);
                    self.zz_layer(chain, w1 * h);
                    self.field_layer(frame, 0.5 * (w1 + w0) * h);
                    self.zz_layer(chain, w0 * h);
                    self.field_layer(frame, 0.5 * (w0 + w1) * h);
                    self.zz_layer(chain, w1 * h);
                    self.field_layer(frame, 0.5 * w1 * h);
                }
            }
        }
        self.check_norm()
    }

    fn check_norm(&self) -> Result<()> {
        if self.last_norm_drift > self.norm_tolerance {
            return Err(Error::NormDrift(self.last_norm_drift));
        }
        Ok(())
    }

    fn field_layer(&mut self, frame: &ControlFrame, t: f64) {
        for (site, &[gx, gy]) in frame.fields.iter().enumerate() {
            if gx != 0.0 || gy != 0.0 {
                let u = field_rotation(gx, gy, t);
                self.apply_single_site(site, &u).expect("site in range");
            }
        }
    }

    fn zz_layer(&mut self, chain: &ChainSpec, t: f64) {
        let n = self.n();
        if self.center != Some(0) && self.center != Some(n - 1) {
            self.canonicalize(0).expect("site in range");
        }
        if self.center == Some(0) {
            for k in 0..n - 1 {
                self.update_bond(k, BondGate::Diagonal(zz_phases(chain.bond(k) * t)), Sweep::Right);
            }
        } else {
            for k in (0..n - 1).rev() {
                self.update_bond(k, BondGate::Diagonal(zz_phases(chain.bond(k) * t)), Sweep::Left);
            }
        }
    }

    fn update_bond(&mut self, k: usize, gate: BondGate<'_>, sweep: Sweep) {
        let (a, b) = (&self.tensors[k], &self.tensors[k + 1]);
        let dl = a[0].nrows();
        let dr = b[0].ncols();
        let prod = [[&a[0] * &b[0], &a[0] * &b[1]], [&a[1] * &b[0], &a[1] * &b[1]]];
        let mut theta = DMatrix::zeros(2 * dl, 2 * dr);
        for s1 in 0..2 {
            for s2 in 0..2 {
                let block = match &gate {
                    BondGate::Diagonal(p) => &prod[s1][s2] * p[2 * s1 + s2],
                    BondGate::Dense(g) => {
                        let mut acc = DMatrix::zeros(dl, dr);
                        for t1 in 0..2 {
                            for t2 in 0..2 {
                                let gc = g[(2 * s1 + s2, 2 * t1 + t2)];
                                if gc.norm_sqr() != 0.0 {
                                    acc += &prod[t1][t2] * gc;
                                }
                            }
                        }
                        acc
                    }
                };
                theta.view_mut((s1 * dl, s2 * dr), (dl, dr)).copy_from(&block);
            }
        }
        let total: f64 = theta.iter().map(|z| z.norm_sqr()).sum();
        self.last_norm_drift = self.last_norm_drift.max((total - 1.0).abs());
        let (u, sv, vt, w) = truncated_svd(theta, self.max_bond, self.weight_floor);
        self.discarded_weight += w;
        let keep = sv.len();
        let mut left = u;
        let mut right = vt;
        match sweep {
            Sweep::Right => {
                for i in 0..keep {
                    right.row_mut(i).scale_mut(sv[i]);
                }
                self.center = Some(k + 1);
            }
            Sweep::Left => {
                for i in 0..keep {
                    left.column_mut(i).scale_mut(sv[i]);
                }
                self.center = Some(k);
            }
        }
        self.tensors[k] = [left.rows(0, dl).into_owned(), left.rows(dl, dl).into_owned()];
        self.tensors[k + 1] = [right.columns(0, dr).into_owned(), right.columns(dr, dr).into_owned()];
    }
}

impl ReducedStates for MpsState {
    fn num_sites(&self) -> usize {
        self.n()
    }

    fn reduced(&self, sites: &[usize]) -> Result<Rdm> {
        self.environments().reduced(sites)
    }
}

fn identity_error(g: &DMatrix<C64>) -> f64 {
    let mut err = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((g[(i, j)] - c(target)).norm());
        }
    }
    err
}

/// Makes the diagonal of `r` real non-negative, compensating in `q`.
fn fix_phases(q: &mut DMatrix<C64>, r: &mut DMatrix<C64>) {
    for i in 0..r.nrows().min(r.ncols()) {
        let d = r[(i, i)];
        let abs = d.norm();
        if abs > 0.0 {
            let phase = d / abs;
            r.row_mut(i).iter_mut().for_each(|z| *z *= phase.conj());
            q.column_mut(i).iter_mut().for_each(|z| *z *= phase);
        }
    }
}

/// SVD sorted by decreasing singular value and truncated to at most `cap`
/// values, dropping relative weights below `floor`.
/// Kept values are renormalized to unit total weight. Returns
/// `(U, σ, V†, discarded relative weight)`.
fn truncated_svd(m: DMatrix<C64>, cap: usize, floor: f64) -> (DMatrix<C64>, Vec<f64>, DMatrix<C64>, f64) {
    let f = faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = f.thin_svd().expect("SVD of a finite matrix");
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let values: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let weights: Vec<f64> = order.iter().map(|&i| values[i].powi(2)).collect();
    let total: f64 = weights.iter().sum();
    let mut keep = 0;
    while keep < cap.min(weights.len())
        && (keep == 0 || weights[keep] >= floor * total)
    {
        keep += 1;
    }
    let kept: f64 = weights[..keep].iter().sum();
    let discarded = if total > 0.0 { 1.0 - kept / total } else { 0.0 };
    let scale = kept.sqrt();
    let sv: Vec<f64> = order[..keep].iter().map(|&i| values[i] / scale).collect();
    let u_k = DMatrix::from_fn(u.nrows(), keep, |r, col| u[(r, order[col])]);
    let vt_k = DMatrix::from_fn(keep, v.nrows(), |row, col| v[(col, order[row])].conj());
    (u_k, sv, vt_k, discarded.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::concurrence;
    use crate::model::ChainRng;
    use crate::oracle::random_unitary;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn scrambled(n: usize, d_max: usize, seed: u64) -> MpsState {
        let mut rng = ChainRng::seed_from_u64(seed);
        let mut s = MpsState::all_plus(n, d_max).unwrap();
        for _ in 0..3 {
            for b in 0..n - 1 {
                let u = random_unitary(4, &mut rng);
                s.apply_two_site(b, &Matrix4::from_fn(|i, j| u[(i, j)])).unwrap();
            }
        }
        s
    }

    #[test]
    fn product_state_expectations() {
        let s = MpsState::all_plus(10, 10).unwrap();
        for i in 0..10 {
            assert_abs_diff_eq!(s.expect(&[(i, Pauli::X)]).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(s.expect(&[(2, Pauli::Z), (3, Pauli::Z)]).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.expect(&[]).unwrap(), 1.0, epsilon = 1e-14);
        let up = [c(1.0), c(0.0)];
        let zz = MpsState::from_product_state(&[up, up], 4).unwrap();
        assert_abs_diff_eq!(zz.expect(&[(0, Pauli::Z)]).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(zz.expect(&[(1, Pauli::Z)]).unwrap(), 1.0, epsilon = 1e-14);
        let three = MpsState::all_plus(3, 4).unwrap();
        assert_abs_diff_eq!(concurrence(&three.reduced(&[0, 1]).unwrap()).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(s.bond_dims(), vec![1; 9]);
    }

    #[test]
    fn construction_errors() {
        let up = [c(1.0), c(0.0)];
        assert!(matches!(MpsState::from_product_state(&[up], 4), Err(Error::ChainTooShort(1))));
        assert!(matches!(
            MpsState::from_product_state(&[up, [c(1.0), c(1.0)]], 4),
            Err(Error::UnnormalizedLocal { site: 1, .. })
        ));
        assert!(matches!(MpsState::all_plus(3, 0), Err(Error::InvalidBondCap)));
    }

    #[test]
    fn rdm_argument_errors() {
        let s = MpsState::all_plus(5, 4).unwrap();
        assert!(matches!(s.reduced(&[1, 1]), Err(Error::DuplicateSite(1))));
        assert!(matches!(s.reduced(&[5]), Err(Error::SiteOutOfRange { site: 5, n: 5 })));
        assert!(matches!(s.reduced(&[0, 1, 2, 3]), Err(Error::UnsupportedSiteCount(4))));
        assert!(matches!(s.reduced(&[]), Err(Error::UnsupportedSiteCount(0))));
    }

    #[test]
    fn two_spin_bell_pair_at_quarter_period() {
        let chain = ChainSpec::uniform(2, 1.0).unwrap();
        let frame = ControlFrame::zero(2, 1.0);
        let mut s = MpsState::all_plus(2, 4).unwrap();
        let steps = 800;
        let dt = std::f64::consts::FRAC_PI_4 / steps as f64;
        for _ in 0..steps {
            s.step(&chain, &frame, dt).unwrap();
        }
        assert_abs_diff_eq!(concurrence(&s.reduced(&[0, 1]).unwrap()).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn rabi_rotation_without_coupling() {
        let chain = ChainSpec::uniform(3, 0.0).unwrap();
        let frame = ControlFrame { fields: vec![[0.7, 0.0], [0.0, 1.3], [2.0, 0.0]], duration: 1e-3 };
        let up = [c(1.0), c(0.0)];
        let mut s = MpsState::from_product_state(&[up, up, up], 4).unwrap();
        let dt = 1e-3;
        for k in 1..=500 {
            s.step(&chain, &frame, dt).unwrap();
            let t = k as f64 * dt;
            for (i, g) in [0.7, 1.3, 2.0].iter().enumerate() {
                assert_abs_diff_eq!(s.expect(&[(i, Pauli::Z)]).unwrap(), (2.0 * g * t).cos(), epsilon = 1e-8);
            }
        }
        // rotation about x moves spin 0 into -y, rotation about y moves spin 1 into +x
        let t: f64 = 0.5;
        assert_abs_diff_eq!(s.expect(&[(0, Pauli::Y)]).unwrap(), -(2.0 * 0.7 * t).sin(), epsilon = 1e-8);
        assert_abs_diff_eq!(s.expect(&[(1, Pauli::X)]).unwrap(), (2.0 * 1.3 * t).sin(), epsilon = 1e-8);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let s0 = scrambled(6, 8, 4);
        let mut s = s0.clone();
        let chain = ChainSpec::uniform(6, 0.0).unwrap();
        for _ in 0..50 {
            s.step(&chain, &ControlFrame::zero(6, 1e-3), 1e-3).unwrap();
        }
        assert_abs_diff_eq!(s.overlap(&s0).unwrap().norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn step_rejects_bad_input() {
        let mut s = MpsState::all_plus(3, 4).unwrap();
        let chain = ChainSpec::uniform(3, 1.0).unwrap();
        let frame = ControlFrame::zero(3, 1e-3);
        assert!(matches!(s.step(&chain, &frame, 0.0), Err(Error::NonPositiveStep(_))));
        assert!(matches!(s.step(&chain, &frame, -1e-3), Err(Error::NonPositiveStep(_))));
        assert!(s.step(&ChainSpec::uniform(4, 1.0).unwrap(), &frame, 1e-3).is_err());
    }

    #[test]
    fn dense_round_trip() {
        let s = scrambled(5, 16, 2);
        let dense = s.to_dense();
        let back = MpsState::from_dense(5, &dense, 16).unwrap();
        assert_abs_diff_eq!(back.overlap(&s).unwrap().norm_sqr(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back.discarded_weight(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn canonical_form_and_idempotence() {
        let mut s = scrambled(7, 8, 9);
        for center in [0, 3, 6, 2] {
            s.canonicalize(center).unwrap();
            for k in 0..center {
                assert!(s.left_isometry_error(k) < 1e-10);
            }
            for k in center + 1..7 {
                assert!(s.right_isometry_error(k) < 1e-10);
            }
            let before = s.clone();
            s.center = None;
            s.canonicalize(center).unwrap();
            for (a, b) in before.tensors().iter().zip(s.tensors()) {
                for p in 0..2 {
                    let diff = (&a[p] - &b[p]).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    assert!(diff < 1e-12, "center {center}: {diff}");
                }
            }
        }
    }

    #[test]
    fn bond_cap_and_truncation_ledger() {
        let mut s = scrambled(8, 3, 1);
        assert!(s.bond_dims().iter().all(|&d| d <= 3));
        assert!(s.discarded_weight() > 0.0);
        let w = s.discarded_weight();
        s.step(&ChainSpec::uniform(8, 1.0).unwrap(), &ControlFrame::zero(8, 1e-2), 1e-2).unwrap();
        assert!(s.discarded_weight() >= w);
        assert_abs_diff_eq!(s.norm_squared(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pair_sweep_matches_single_extraction() {
        let s = scrambled(6, 8, 21);
        let env = s.environments();
        for (k, rho) in env.pair_rdms(1).unwrap().iter().enumerate() {
            let direct = env.reduced(&[1, k + 2]).unwrap();
            let diff = (rho.matrix() - direct.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-13);
        }
    }

    #[test]
    fn truncated_svd_reconstructs_rank_deficient_input() {
        let mut rng = ChainRng::seed_from_u64(11);
        let a = random_unitary(8, &mut rng).columns(0, 2).into_owned();
        let b = random_unitary(8, &mut rng).rows(0, 2).into_owned();
        let m = &a * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.8), c(0.6)])) * &b;
        let (u, sv, vt, w) = truncated_svd(m.clone(), 8, 0.0);
        let mut us = u.clone();
        for (i, s) in sv.iter().enumerate() {
            us.column_mut(i).iter_mut().for_each(|z| *z *= s);
        }
        assert!((us * vt - m).norm() < 1e-12);
        assert!(w.abs() < 1e-15);
        assert!((sv[0] - 0.8).abs() < 1e-12 && (sv[1] - 0.6).abs() < 1e-12);
    }
}
