use std::cell::RefCell;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::entanglement::TargetSpec;
use crate::model::{ChainRng, ChainSpec, ControlFrame};
use crate::mps::{checked_sites, ReducedStates, Rdm};
use crate::pauli::Pauli;
use crate::{Error, Result};

/// Sites whose gradient norm does not exceed this get no field.
pub const GRADIENT_FLOOR: f64 = 1e-12;

/// Factor turning the single-site expectation-value block into `∂S̈(ρ_i)/∂g`.
pub const SINGLE_SCALE: f64 = -4.0;

/// Factor turning the pair expectation-value block into `∂S̈(ρ_{1j})/∂g`.
pub const PAIR_SCALE: f64 = -2.0;

const AXES: [(Pauli, Pauli); 2] = [(Pauli::X, Pauli::Y), (Pauli::Y, Pauli::X)];

/// Per-site `(∂τ̈/∂g_x, ∂τ̈/∂g_y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGradient {
    pub components: Vec<[f64; 2]>,
}

impl FieldGradient {
    pub fn zeros(n: usize) -> Self {
        Self { components: vec![[0.0; 2]; n] }
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn site_norm(&self, site: usize) -> f64 {
        let [x, y] = self.components[site];
        x.hypot(y)
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|[x, y]| x * x + y * y).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FieldGradient) -> f64 {
        self.components.iter().zip(&other.components).map(|(a, b)| a[0] * b[0] + a[1] * b[1]).sum()
    }

    pub fn cosine(&self, other: &FieldGradient) -> f64 {
        self.dot(other) / (self.norm() * other.norm())
    }

    pub fn add_scaled(&mut self, other: &FieldGradient, w: f64) {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a[0] += w * b[0];
            a[1] += w * b[1];
        }
    }

    pub fn apply_mask(&mut self, mask: &[bool]) {
        for (c, &on) in self.components.iter_mut().zip(mask) {
            if !on {
                *c = [0.0; 2];
            }
        }
    }

    /// Arithmetic mean, summed in slice order.
    pub fn mean(grads: &[FieldGradient]) -> Result<Self> {
        let first = grads.first().ok_or(Error::EmptyEnsemble)?;
        let mut acc = Self::zeros(first.n());
        for g in grads {
            if g.n() != acc.n() {
                return Err(Error::SizeMismatch(format!("gradients of {} and {} sites", acc.n(), g.n())));
            }
            acc.add_scaled(g, 1.0);
        }
        let m = grads.len() as f64;
        for c in acc.components.iter_mut() {
            c[0] /= m;
            c[1] /= m;
        }
        Ok(acc)
    }
}

/// Pauli expectation values backed by reduced states, cached per site set.
pub struct Expectations<'a, R: ReducedStates + ?Sized> {
    states: &'a R,
    cache: RefCell<HashMap<Vec<usize>, Rdm>>,
}

impl<'a, R: ReducedStates + ?Sized> Expectations<'a, R> {
    pub fn new(states: &'a R) -> Self {
        Self { states, cache: RefCell::new(HashMap::new()) }
    }

    pub fn num_sites(&self) -> usize {
        self.states.num_sites()
    }

    /// `<⊗ σ>` over the listed sites; identity entries are dropped.
    pub fn get(&self, ops: &[(usize, Pauli)]) -> Result<f64> {
        let mut ops: Vec<(usize, Pauli)> = ops.iter().copied().filter(|&(_, p)| p != Pauli::I).collect();
        if ops.is_empty() {
            return Ok(1.0);
        }
        ops.sort_by_key(|&(s, _)| s);
        let sites: Vec<usize> = ops.iter().map(|&(s, _)| s).collect();
        let sites = checked_sites(&sites, self.states.num_sites())?;
        let paulis: Vec<Pauli> = ops.iter().map(|&(_, p)| p).collect();
        let mut cache = self.cache.borrow_mut();
        if !cache.contains_key(&sites) {
            let rho = self.states.reduced(&sites)?;
            cache.insert(sites.clone(), rho);
        }
        Ok(cache[&sites].pauli_coefficient(&paulis))
    }
}

/// Gradient evaluation switches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientOptions {
    /// Keep the `ρ^{z,Δ}_{1j} ρ^{θ,z,Δ}_{1,2,j}` product in the site-1 group
    /// of the pair block.
    pub include_delta_term: bool,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self { include_delta_term: true }
    }
}

fn check_chain(n: usize, chain: &ChainSpec, out: &FieldGradient) -> Result<()> {
    if chain.n() != n || out.n() != n {
        return Err(Error::SizeMismatch(format!(
            "state has {n} sites, chain {}, gradient {}",
            chain.n(),
            out.n()
        )));
    }
    Ok(())
}

/// Adds `weight · ∂S̈(ρ_i)/∂g` to `out`.
pub fn grad_purity_curvature_single<R: ReducedStates + ?Sized>(
    ex: &Expectations<'_, R>,
    chain: &ChainSpec,
    i: usize,
    weight: f64,
    out: &mut FieldGradient,
) -> Result<()> {
    let n = ex.num_sites();
    check_chain(n, chain, out)?;
    checked_sites(&[i], n)?;
    let w = weight * SINGLE_SCALE;
    let e = |ops: &[(usize, Pauli)]| ex.get(ops);
    use Pauli::Z;
    for (t, &(th, ph)) in AXES.iter().enumerate() {
        let mut own = 0.0;
        if i > 0 {
            let jl = chain.left_of(i);
            own += jl * (e(&[(i, th)])? * e(&[(i - 1, Z), (i, Z)])? - e(&[(i, Z)])? * e(&[(i - 1, Z), (i, th)])?);
            out.components[i - 1][t] += w
                * jl
                * (e(&[(i, ph)])? * e(&[(i - 1, ph), (i, th)])? - e(&[(i, th)])? * e(&[(i - 1, ph), (i, ph)])?);
        }
        if i + 1 < n {
            let jr = chain.right_of(i);
            own += jr * (e(&[(i, th)])? * e(&[(i, Z), (i + 1, Z)])? - e(&[(i, Z)])? * e(&[(i, th), (i + 1, Z)])?);
            out.components[i + 1][t] += w
                * jr
                * (e(&[(i, ph)])? * e(&[(i, th), (i + 1, ph)])? - e(&[(i, th)])? * e(&[(i, ph), (i + 1, ph)])?);
        }
        out.components[i][t] += w * own;
    }
    Ok(())
}

/// Adds `weight · ∂S̈(ρ_{0j})/∂g` to `out`.
pub fn grad_purity_curvature_pair<R: ReducedStates + ?Sized>(
    ex: &Expectations<'_, R>,
    chain: &ChainSpec,
    j: usize,
    weight: f64,
    options: GradientOptions,
    out: &mut FieldGradient,
) -> Result<()> {
    let n = ex.num_sites();
    check_chain(n, chain, out)?;
    if j == 0 || j >= n {
        return Err(Error::InvalidTarget(format!("pair (0, {j}) in a chain of {n}")));
    }
    let w = weight * PAIR_SCALE;
    let e = |ops: &[(usize, Pauli)]| ex.get(ops);
    use Pauli::Z;
    for (t, &(th, ph)) in AXES.iter().enumerate() {
        for d in Pauli::ALL {
            if j == 1 {
                let j1 = chain.right_of(1);
                if n > 2 {
                    out.components[1][t] += w
                        * j1
                        * (e(&[(0, d), (1, th)])? * e(&[(0, d), (1, Z), (2, Z)])?
                            - e(&[(0, d), (1, Z)])? * e(&[(0, d), (1, th), (2, Z)])?);
                    out.components[2][t] += w
                        * j1
                        * (e(&[(0, d), (1, ph)])? * e(&[(0, d), (1, th), (2, ph)])?
                            - e(&[(0, d), (1, th)])? * e(&[(0, d), (1, ph), (2, ph)])?);
                }
                continue;
            }
            let j0 = chain.bond(0);
            let mut first = e(&[(0, th), (j, d)])? * e(&[(0, Z), (1, Z), (j, d)])?;
            if options.include_delta_term {
                first -= e(&[(0, Z), (j, d)])? * e(&[(0, th), (1, Z), (j, d)])?;
            }
            out.components[0][t] += w * j0 * first;
            out.components[1][t] += w
                * j0
                * (e(&[(0, ph), (j, d)])? * e(&[(0, th), (1, ph), (j, d)])?
                    - e(&[(0, th), (j, d)])? * e(&[(0, ph), (1, ph), (j, d)])?);
            let jl = chain.left_of(j);
            out.components[j - 1][t] += w
                * jl
                * (e(&[(0, d), (j, ph)])? * e(&[(0, d), (j - 1, ph), (j, th)])?
                    - e(&[(0, d), (j, th)])? * e(&[(0, d), (j - 1, ph), (j, ph)])?);
            out.components[j][t] += w
                * jl
                * (e(&[(0, d), (j, th)])? * e(&[(0, d), (j - 1, Z), (j, Z)])?
                    - e(&[(0, d), (j, Z)])? * e(&[(0, d), (j - 1, Z), (j, th)])?);
            if j + 1 < n {
                let jr = chain.right_of(j);
                out.components[j][t] += w
                    * jr
                    * (e(&[(0, d), (j, th)])? * e(&[(0, d), (j, Z), (j + 1, Z)])?
                        - e(&[(0, d), (j, Z)])? * e(&[(0, d), (j, th), (j + 1, Z)])?);
                out.components[j + 1][t] += w
                    * jr
                    * (e(&[(0, d), (j, ph)])? * e(&[(0, d), (j, th), (j + 1, ph)])?
                        - e(&[(0, d), (j, th)])? * e(&[(0, d), (j, ph), (j + 1, ph)])?);
            }
        }
    }
    Ok(())
}

/// `∂τ̈/∂g` for `target`, zeroed outside `mask`.
pub fn assemble_gradient<R: ReducedStates + ?Sized>(
    states: &R,
    chain: &ChainSpec,
    target: &TargetSpec,
    mask: &[bool],
    options: GradientOptions,
) -> Result<FieldGradient> {
    let n = states.num_sites();
    if target.n() != n || mask.len() != n {
        return Err(Error::SizeMismatch(format!(
            "state has {n} sites, target {}, mask {}",
            target.n(),
            mask.len()
        )));
    }
    let ex = Expectations::new(states);
    let (a, b) = target.pair();
    if a != 0 {
        return Err(Error::InvalidTarget(format!("pair ({a}, {b}) must start at site 0")));
    }
    let mut g = FieldGradient::zeros(n);
    grad_purity_curvature_single(&ex, chain, a, 1.0, &mut g)?;
    grad_purity_curvature_single(&ex, chain, b, 1.0, &mut g)?;
    if target.mu() != 0.0 {
        grad_purity_curvature_pair(&ex, chain, b, -target.mu(), options, &mut g)?;
    }
    for k in target.penalty_sites() {
        grad_purity_curvature_single(&ex, chain, k, -target.alpha()[k], &mut g)?;
    }
    g.apply_mask(mask);
    Ok(g)
}

/// Per-site field of magnitude `beta` along the gradient, zero where the
/// gradient norm is at most [`GRADIENT_FLOOR`].
pub fn optimal_fields(grad: &FieldGradient, beta: f64, duration: f64) -> Result<ControlFrame> {
    optimal_fields_with_floor(grad, beta, duration, GRADIENT_FLOOR)
}

pub fn optimal_fields_with_floor(grad: &FieldGradient, beta: f64, duration: f64, floor: f64) -> Result<ControlFrame> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::NonPositiveBeta(beta));
    }
    let fields = grad
        .components
        .iter()
        .map(|&[x, y]| {
            let norm = x.hypot(y);
            if norm > floor {
                [beta * x / norm, beta * y / norm]
            } else {
                [0.0; 2]
            }
        })
        .collect();
    Ok(ControlFrame { fields, duration })
}

/// Seeded frame of magnitude `beta` and pseudo-random direction on every
/// masked-in site; a pure function of `(seed, interval)`.
pub fn symmetry_breaking_frame(mask: &[bool], beta: f64, duration: f64, seed: u64, interval: u64) -> ControlFrame {
    let mut rng = ChainRng::seed_from_u64(seed ^ interval.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let fields = mask
        .iter()
        .map(|&on| {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            if on {
                [beta * phi.cos(), beta * phi.sin()]
            } else {
                [0.0; 2]
            }
        })
        .collect();
    ControlFrame { fields, duration }
}

/// [`optimal_fields_with_floor`], except that a gradient vanishing on every
/// masked-in site yields [`symmetry_breaking_frame`].
#[allow(clippy::too_many_arguments)]
pub fn select_frame(
    grad: &FieldGradient,
    mask: &[bool],
    beta: f64,
    duration: f64,
    floor: f64,
    seed: u64,
    interval: u64,
) -> Result<ControlFrame> {
    let degenerate = (0..grad.n()).all(|i| !mask[i] || grad.site_norm(i) <= floor);
    if degenerate {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::NonPositiveBeta(beta));
        }
        return Ok(symmetry_breaking_frame(mask, beta, duration, seed, interval));
    }
    optimal_fields_with_floor(grad, beta, duration, floor)
}

/// Control mask `{0} ∪ {j−2, …, j+2}` clipped to the chain (zero-based).
pub fn reduced_mask(j: usize, n: usize) -> Result<Vec<bool>> {
    if j == 0 || j >= n {
        return Err(Error::InvalidTarget(format!("target site {j} in a chain of {n}")));
    }
    Ok((0..n).map(|k| k == 0 || (k + 2 >= j && k <= j + 2)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::MpsState;

    #[test]
    fn field_rescaling() {
        let g = FieldGradient { components: vec![[3.0, 4.0], [0.0, 0.0], [1e-13, 0.0]] };
        let f = optimal_fields(&g, 70.0, 1e-3).unwrap();
        assert_eq!(f.fields[0], [42.0, 56.0]);
        assert_eq!(f.fields[1], [0.0, 0.0]);
        assert_eq!(f.fields[2], [0.0, 0.0]);
        assert!(optimal_fields(&g, 0.0, 1e-3).is_err());
        assert!(optimal_fields(&g, -1.0, 1e-3).is_err());
    }

    #[test]
    fn reduced_mask_examples() {
        let on = |m: Vec<bool>| m.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect::<Vec<_>>();
        assert_eq!(on(reduced_mask(4, 40).unwrap()), vec![0, 2, 3, 4, 5, 6]);
        assert_eq!(on(reduced_mask(1, 10).unwrap()), vec![0, 1, 2, 3]);
        assert_eq!(on(reduced_mask(9, 10).unwrap()), vec![0, 7, 8, 9]);
        assert!(reduced_mask(0, 10).is_err());
        assert!(reduced_mask(10, 10).is_err());
    }

    #[test]
    fn product_state_gradient_vanishes() {
        let s = MpsState::all_plus(6, 8).unwrap();
        let env = s.environments();
        let chain = ChainSpec::uniform(6, 1.0).unwrap();
        let target = TargetSpec::uniform(6, 3, 0.2, 1.0).unwrap();
        let g = assemble_gradient(&env, &chain, &target, &[true; 6], GradientOptions::default()).unwrap();
        assert!(g.norm() < 1e-14);
    }

    #[test]
    fn kick_is_deterministic_and_masked() {
        let mask = [true, false, true, true];
        let a = symmetry_breaking_frame(&mask, 70.0, 1e-3, 9, 0);
        let b = symmetry_breaking_frame(&mask, 70.0, 1e-3, 9, 0);
        let c = symmetry_breaking_frame(&mask, 70.0, 1e-3, 9, 1);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.fields[1], [0.0, 0.0]);
        for i in [0, 2, 3] {
            assert!((a.magnitude(i) - 70.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_of_one_is_exact() {
        let g = FieldGradient { components: vec![[0.1, -0.3], [1.0 / 3.0, 7.0]] };
        assert_eq!(FieldGradient::mean(std::slice::from_ref(&g)).unwrap(), g);
        assert!(FieldGradient::mean(&[]).is_err());
    }
}
