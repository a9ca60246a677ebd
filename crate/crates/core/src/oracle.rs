//! Dense state-vector reference for small chains.
//!
//! Amplitude index `Σ_k s_k 2^{n-1-k}`: site 0 is the most significant bit.
//! Propagation is a Taylor series on substeps short enough that the series
//! converges to machine precision.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::controller::{assemble_gradient, optimal_fields, FieldGradient, GradientOptions};
use crate::entanglement::{tau, TargetSpec};
use crate::model::{ChainRng, ChainSpec, ControlFrame, PulseSchedule};
use crate::mps::{checked_sites, Integrator, MpsState, ReducedStates, Rdm};
use crate::pauli::{z_sign, Pauli};
use crate::{Error, Result};

pub const MAX_SITES: usize = 12;

/// Default time step of the curvature finite difference.
pub const DEFAULT_DT: f64 = 1e-4;

/// Default field step of the gradient finite difference.
pub const DEFAULT_DG: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct DenseState {
    n: usize,
    amps: Vec<C64>,
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::ChainTooShort(n));
    }
    if n > MAX_SITES {
        return Err(Error::OracleTooLarge { n, max: MAX_SITES });
    }
    Ok(())
}

fn bit(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

fn normalize(v: &mut [C64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in v.iter_mut() {
        *z /= norm;
    }
}

impl DenseState {
    pub fn new(n: usize, amps: Vec<C64>) -> Result<Self> {
        check_size(n)?;
        if amps.len() != 1 << n {
            return Err(Error::SizeMismatch(format!("{} amplitudes for {n} sites", amps.len())));
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDensityMatrix(format!("state norm {norm}")));
        }
        Ok(Self { n, amps })
    }

    pub fn from_product_state(locals: &[[C64; 2]]) -> Result<Self> {
        let n = locals.len();
        check_size(n)?;
        let mut amps = vec![C64::new(1.0, 0.0)];
        for (site, l) in locals.iter().enumerate() {
            let norm = (l[0].norm_sqr() + l[1].norm_sqr()).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::UnnormalizedLocal { site, norm });
            }
            amps = amps.iter().flat_map(|a| [a * l[0], a * l[1]]).collect();
        }
        Ok(Self { n, amps })
    }

    pub fn all_plus(n: usize) -> Result<Self> {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::from_product_state(&vec![[h, h]; n])
    }

    /// Haar-random pure state.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        check_size(n)?;
        let mut amps: Vec<C64> = (0..1usize << n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        normalize(&mut amps);
        Ok(Self { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// `|<self|other>|²`.
    pub fn fidelity(&self, other: &[C64]) -> f64 {
        self.amps.iter().zip(other).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr()
    }

    pub fn apply_single_site(&mut self, site: usize, u: &Matrix2<C64>) -> Result<()> {
        checked_sites(&[site], self.n)?;
        let m = bit(self.n, site);
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | m]);
                self.amps[i] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
                self.amps[i | m] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
            }
        }
        Ok(())
    }

    /// Two-site unitary on `(a, b)`, basis `s_a s_b`.
    pub fn apply_two_site(&mut self, a: usize, b: usize, u: &Matrix4<C64>) -> Result<()> {
        checked_sites(&[a, b], self.n)?;
        let (ma, mb) = (bit(self.n, a), bit(self.n, b));
        for i in 0..self.amps.len() {
            if i & ma == 0 && i & mb == 0 {
                let idx = [i, i | mb, i | ma, i | ma | mb];
                let v = idx.map(|k| self.amps[k]);
                for (r, &k) in idx.iter().enumerate() {
                    self.amps[k] = (0..4).map(|c| u[(r, c)] * v[c]).sum();
                }
            }
        }
        Ok(())
    }

    fn apply_hamiltonian(&self, chain: &ChainSpec, frame: &ControlFrame, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let mut diag = 0.0;
            for k in 0..n - 1 {
                let sk = (i >> (n - 1 - k)) & 1;
                let sk1 = (i >> (n - 2 - k)) & 1;
                diag += chain.bond(k) * z_sign(sk) * z_sign(sk1);
            }
            *o = v[i] * diag;
        }
        for (site, &[gx, gy]) in frame.fields.iter().enumerate() {
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let m = bit(n, site);
            for i in 0..v.len() {
                // X|s> = |1-s>, Y|0> = i|1>, Y|1> = -i|0>
                let j = i ^ m;
                let y_phase = if i & m == 0 { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) };
                out[i] += v[j] * (C64::new(gx, 0.0) + y_phase * gy);
            }
        }
        out
    }

    /// Applies `exp(-i H t)`; `t` may be negative.
    pub fn evolve(&mut self, chain: &ChainSpec, frame: &ControlFrame, t: f64) -> Result<()> {
        if chain.n() != self.n || frame.n() != self.n {
            return Err(Error::SizeMismatch(format!(
                "state has {} sites, chain {}, frame {}",
                self.n,
                chain.n(),
                frame.n()
            )));
        }
        let bound: f64 = chain.couplings().iter().map(|j| j.abs()).sum::<f64>()
            + (0..self.n).map(|i| frame.magnitude(i)).sum::<f64>();
        let substeps = ((t.abs() * bound / 0.5).ceil() as usize).max(1);
        let h = t / substeps as f64;
        for _ in 0..substeps {
            let mut term = self.amps.clone();
            let mut acc = self.amps.clone();
            for k in 1.. {
                let hv = self.apply_hamiltonian(chain, frame, &term);
                let factor = C64::new(0.0, -h / k as f64);
                term = hv.into_iter().map(|z| z * factor).collect();
                let size: f64 = term.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                for (a, b) in acc.iter_mut().zip(&term) {
                    *a += b;
                }
                if size < 1e-17 || k > 60 {
                    break;
                }
            }
            self.amps = acc;
        }
        Ok(())
    }

    /// One control interval `dt > 0`.
    pub fn step(&mut self, chain: &ChainSpec, frame: &ControlFrame, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::NonPositiveStep(dt));
        }
        self.evolve(chain, frame, dt)
    }

    pub fn expect(&self, ops: &[(usize, Pauli)]) -> Result<f64> {
        let mut v = self.clone();
        for &(site, p) in ops {
            checked_sites(&[site], self.n)?;
            v.apply_single_site(site, &p.matrix())?;
        }
        Ok(self.amps.iter().zip(&v.amps).map(|(a, b)| a.conj() * b).sum::<C64>().re)
    }
}

/// `tr_rest |a><b|` on the sorted, validated `sites`.
fn partial_trace(n: usize, a: &[C64], b: &[C64], sites: &[usize]) -> DMatrix<C64> {
    let m = sites.len();
    let dim = 1usize << m;
    let masks: Vec<usize> = sites.iter().map(|&s| bit(n, s)).collect();
    let keep: usize = masks.iter().sum();
    let local = |i: usize| masks.iter().fold(0, |acc, &mk| (acc << 1) | usize::from(i & mk != 0));
    let spread = |t: usize| {
        masks
            .iter()
            .enumerate()
            .filter(|(k, _)| (t >> (m - 1 - k)) & 1 == 1)
            .fold(0, |acc, (_, &mk)| acc | mk)
    };
    let mut rho = DMatrix::zeros(dim, dim);
    for (i, ai) in a.iter().enumerate() {
        let env = i & !keep;
        let row = local(i);
        for t in 0..dim {
            rho[(row, t)] += ai * b[env | spread(t)].conj();
        }
    }
    rho
}

impl ReducedStates for DenseState {
    fn num_sites(&self) -> usize {
        self.n
    }

    fn reduced(&self, sites: &[usize]) -> Result<Rdm> {
        let sites = checked_sites(sites, self.n)?;
        let rho = partial_trace(self.n, &self.amps, &self.amps, &sites);
        Rdm::new(sites, rho)
    }
}

/// Haar-random unitary of dimension `dim` (QR of a complex Gaussian matrix
/// with the phases of `R`'s diagonal removed).
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for i in 0..dim {
        let d = r[(i, i)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            q.column_mut(i).iter_mut().for_each(|z| *z *= phase);
        }
    }
    q
}

fn tau_after(state: &DenseState, chain: &ChainSpec, frame: &ControlFrame, target: &TargetSpec, t: f64) -> Result<f64> {
    let mut s = state.clone();
    s.evolve(chain, frame, t)?;
    tau(&s, target)
}

/// `τ̈ ≈ [τ(δt) − 2τ(0) + τ(−δt)]/δt²` under a constant frame.
pub fn tau_curvature_fd(
    state: &DenseState,
    chain: &ChainSpec,
    frame: &ControlFrame,
    target: &TargetSpec,
    dt: f64,
) -> Result<f64> {
    let plus = tau_after(state, chain, frame, target, dt)?;
    let minus = tau_after(state, chain, frame, target, -dt)?;
    Ok((plus - 2.0 * tau(state, target)? + minus) / (dt * dt))
}

/// `τ̇ ≈ [τ(δt) − τ(−δt)]/2δt` under a constant frame.
pub fn tau_rate_fd(
    state: &DenseState,
    chain: &ChainSpec,
    frame: &ControlFrame,
    target: &TargetSpec,
    dt: f64,
) -> Result<f64> {
    let plus = tau_after(state, chain, frame, target, dt)?;
    let minus = tau_after(state, chain, frame, target, -dt)?;
    Ok((plus - minus) / (2.0 * dt))
}

/// Exact `τ̈` under a constant frame, from `ψ̇ = −iHψ` and `ψ̈ = −H²ψ`:
/// `S̈(ρ) = −2 tr(ρ̇²) − 2 tr(ρ ρ̈)` for every purity term of `τ`.
pub fn tau_curvature_exact(state: &DenseState, chain: &ChainSpec, frame: &ControlFrame, target: &TargetSpec) -> Result<f64> {
    if chain.n() != state.n || frame.n() != state.n || target.n() != state.n {
        return Err(Error::SizeMismatch("state, chain, frame and target sizes differ".into()));
    }
    let psi = &state.amps;
    let h1 = state.apply_hamiltonian(chain, frame, psi);
    let h2 = state.apply_hamiltonian(chain, frame, &h1);
    let dpsi: Vec<C64> = h1.iter().map(|z| z * C64::new(0.0, -1.0)).collect();
    let ddpsi: Vec<C64> = h2.iter().map(|z| -z).collect();
    let s_ddot = |sites: &[usize]| -> f64 {
        let pt = |a: &[C64], b: &[C64]| partial_trace(state.n, a, b, sites);
        let rho = pt(psi, psi);
        let x = pt(&dpsi, psi);
        let rho_dot = &x + x.adjoint();
        let y = pt(&ddpsi, psi);
        let rho_ddot = &y + y.adjoint() + pt(&dpsi, &dpsi) * C64::new(2.0, 0.0);
        -2.0 * ((&rho_dot * &rho_dot).trace().re + (&rho * &rho_ddot).trace().re)
    };
    let (a, b) = target.pair();
    let mut value = s_ddot(&[a]) + s_ddot(&[b]);
    if target.mu() != 0.0 {
        value -= target.mu() * s_ddot(&[a.min(b), a.max(b)]);
    }
    for k in target.penalty_sites() {
        value -= target.alpha()[k] * s_ddot(&[k]);
    }
    Ok(value)
}

/// Central difference of [`tau_curvature_fd`] in one field component
/// (`axis` 0 = x, 1 = y), around zero fields.
pub fn grad_fd(
    state: &DenseState,
    chain: &ChainSpec,
    target: &TargetSpec,
    site: usize,
    axis: usize,
    dg: f64,
    dt: f64,
) -> Result<f64> {
    checked_sites(&[site], state.n())?;
    if axis > 1 {
        return Err(Error::InvalidPauli(axis as u8 + 1));
    }
    let mut up = ControlFrame::zero(state.n(), dt);
    up.fields[site][axis] = dg;
    let mut down = ControlFrame::zero(state.n(), dt);
    down.fields[site][axis] = -dg;
    let plus = tau_curvature_fd(state, chain, &up, target, dt)?;
    let minus = tau_curvature_fd(state, chain, &down, target, dt)?;
    Ok((plus - minus) / (2.0 * dg))
}

/// All components of [`grad_fd`].
pub fn grad_fd_full(
    state: &DenseState,
    chain: &ChainSpec,
    target: &TargetSpec,
    dg: f64,
    dt: f64,
) -> Result<FieldGradient> {
    let mut g = FieldGradient::zeros(state.n());
    for site in 0..state.n() {
        for axis in 0..2 {
            g.components[site][axis] = grad_fd(state, chain, target, site, axis, dg, dt)?;
        }
    }
    Ok(g)
}

/// Result of replaying one pulse on the MPS engine and on the dense reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayComparison {
    pub intervals: usize,
    /// Smallest `|<Ψ_mps|Ψ_dense>|²` over all intervals.
    pub min_fidelity: f64,
    /// Largest entry-wise deviation of any 1-, 2- or 3-site reduced state at
    /// the checkpoints.
    pub max_rdm_deviation: f64,
    pub checkpoints: usize,
}

fn all_subsets(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..n {
        out.push(vec![a]);
        for b in a + 1..n {
            out.push(vec![a, b]);
            for c in b + 1..n {
                out.push(vec![a, b, c]);
            }
        }
    }
    out
}

/// Largest entry-wise deviation between the reduced states of `mps` and
/// `dense` over every subset of 1 to 3 sites.
pub fn max_rdm_deviation(mps: &MpsState, dense: &DenseState) -> Result<f64> {
    let env = mps.environments();
    let mut worst = 0.0f64;
    for sites in all_subsets(dense.n()) {
        let a = env.reduced(&sites)?;
        let b = dense.reduced(&sites)?;
        let d = (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Replays `schedule` from `|+>^{⊗N}` on both engines, comparing fidelity
/// after every interval and all reduced states every `checkpoint_every`
/// intervals and at the end. The MPS side keeps every singular value up to
/// `d_max`.
pub fn compare_replay(
    chain: &ChainSpec,
    schedule: &PulseSchedule,
    d_max: usize,
    integrator: Integrator,
    substeps: usize,
    checkpoint_every: usize,
) -> Result<ReplayComparison> {
    let n = chain.n();
    check_size(n)?;
    let mut mps = MpsState::all_plus(n, d_max)?;
    mps.set_integrator(integrator);
    mps.set_substeps(substeps);
    mps.set_weight_floor(0.0);
    let mut dense = DenseState::all_plus(n)?;
    let mut report = ReplayComparison { intervals: 0, min_fidelity: 1.0, max_rdm_deviation: 0.0, checkpoints: 0 };
    let every = checkpoint_every.max(1);
    let len = schedule.frames.len();
    for (k, frame) in schedule.frames.iter().enumerate() {
        mps.step(chain, frame, frame.duration)?;
        dense.step(chain, frame, frame.duration)?;
        report.min_fidelity = report.min_fidelity.min(dense.fidelity(&mps.to_dense()));
        report.intervals += 1;
        if (k + 1) % every == 0 || k + 1 == len {
            report.max_rdm_deviation = report.max_rdm_deviation.max(max_rdm_deviation(&mps, &dense)?);
            report.checkpoints += 1;
        }
    }
    Ok(report)
}

/// Parameters of the gradient validation suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckConfig {
    /// Chain lengths, used in turn.
    pub sizes: Vec<usize>,
    pub states: usize,
    /// Random competitor frames per state for the argmax test.
    pub frames: usize,
    pub seed: u64,
    pub beta: f64,
    pub mu: f64,
    pub alpha: f64,
    pub dg: f64,
    pub dt: f64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self { sizes: vec![5, 6], states: 100, frames: 1000, seed: 7, beta: 70.0, mu: 0.2, alpha: 1.0, dg: DEFAULT_DG, dt: DEFAULT_DT }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub states: usize,
    /// Smallest cosine similarity between analytic and finite-difference gradients.
    pub min_cosine: f64,
    /// Smallest `τ̈(optimal) − τ̈(random)` over all competitor frames.
    pub min_argmax_margin: f64,
}

/// Random-frame of per-site magnitude `beta`.
pub fn random_frame<R: Rng + ?Sized>(n: usize, beta: f64, duration: f64, rng: &mut R) -> ControlFrame {
    let fields = (0..n)
        .map(|_| {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            [beta * phi.cos(), beta * phi.sin()]
        })
        .collect();
    ControlFrame { fields, duration }
}

/// Collinearity of [`assemble_gradient`] with [`grad_fd_full`] and the
/// argmax property of [`optimal_fields`], on Haar-random states with random
/// couplings in `[0.8, 1.2]` and random targets.
pub fn gradient_check(cfg: &GradientCheckConfig) -> Result<GradientCheckReport> {
    let mut rng = ChainRng::seed_from_u64(cfg.seed);
    let mut report = GradientCheckReport { states: 0, min_cosine: 1.0, min_argmax_margin: f64::INFINITY };
    for k in 0..cfg.states {
        let n = cfg.sizes[k % cfg.sizes.len()];
        let state = DenseState::random(n, &mut rng)?;
        let chain = ChainSpec::new((0..n - 1).map(|_| rng.random_range(0.8..1.2)).collect())?;
        let j = rng.random_range(1..n);
        let target = TargetSpec::uniform(n, j, cfg.mu, cfg.alpha)?;
        let analytic = assemble_gradient(&state, &chain, &target, &vec![true; n], GradientOptions::default())?;
        let fd = grad_fd_full(&state, &chain, &target, cfg.dg, cfg.dt)?;
        report.min_cosine = report.min_cosine.min(analytic.cosine(&fd));
        let best = optimal_fields(&analytic, cfg.beta, cfg.dt)?;
        let best_value = tau_curvature_exact(&state, &chain, &best, &target)?;
        for _ in 0..cfg.frames {
            let other = random_frame(n, cfg.beta, cfg.dt, &mut rng);
            let margin = best_value - tau_curvature_exact(&state, &chain, &other, &target)?;
            report.min_argmax_margin = report.min_argmax_margin.min(margin);
        }
        report.states += 1;
    }
    Ok(report)
}
