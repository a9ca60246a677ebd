use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::rdm::{checked_assignment, checked_sites, ReducedStates, Rdm};
use super::{MpsState, SiteTensor};
use crate::pauli::Pauli;
use crate::Result;

/// Left and right boundary contractions of `<Ψ|Ψ>`, computed once per state
/// and reused for any number of local observables.
///
/// `left[k]` contracts sites `< k` (indexed bra × ket), `right[k]` contracts
/// sites `>= k` (indexed ket × bra).
pub struct Environments<'a> {
    state: &'a MpsState,
    left: Vec<DMatrix<C64>>,
    right: Vec<DMatrix<C64>>,
}

fn one() -> DMatrix<C64> {
    DMatrix::from_element(1, 1, C64::new(1.0, 0.0))
}

/// `Σ_s A[s]† X A[s]`.
pub(crate) fn transfer_left(x: &DMatrix<C64>, a: &SiteTensor) -> DMatrix<C64> {
    let mut out = a[0].adjoint() * (x * &a[0]);
    out += a[1].adjoint() * (x * &a[1]);
    out
}

/// `Σ_s A[s] X A[s]†`.
fn transfer_right(x: &DMatrix<C64>, a: &SiteTensor) -> DMatrix<C64> {
    let mut out = &a[0] * (x * a[0].adjoint());
    out += &a[1] * (x * a[1].adjoint());
    out
}

/// `Σ_{t,s} O[t,s] A[t]† X A[s]`.
fn transfer_op(x: &DMatrix<C64>, a: &SiteTensor, op: Pauli) -> DMatrix<C64> {
    if op == Pauli::I {
        return transfer_left(x, a);
    }
    let m = op.matrix();
    let xa = [x * &a[0], x * &a[1]];
    let mut out = DMatrix::zeros(a[0].ncols(), a[0].ncols());
    for t in 0..2 {
        for s in 0..2 {
            let c = m[(t, s)];
            if c.norm_sqr() != 0.0 {
                out += (a[t].adjoint() * &xa[s]) * c;
            }
        }
    }
    out
}

/// `Σ_ij conj(a_ij) b_ij`.
fn frobenius(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Opens one more site on a set of environments indexed `s * dim + t`.
///
/// Entries are Hermitian pairs (`X[t,s] = X[s,t]†`), so only `s ≤ t` is
/// contracted.
fn open_site(open: &[DMatrix<C64>], dim: usize, a: &SiteTensor) -> Vec<DMatrix<C64>> {
    let dim2 = dim * 2;
    let mut next = vec![DMatrix::zeros(0, 0); dim2 * dim2];
    for s in 0..dim {
        for t in s..dim {
            let x = &open[s * dim + t];
            let xa = [x * &a[0], x * &a[1]];
            for sk in 0..2 {
                for tk in 0..2 {
                    let (row, col) = (s * 2 + sk, t * 2 + tk);
                    if row <= col {
                        next[row * dim2 + col] = a[tk].adjoint() * &xa[sk];
                    }
                }
            }
        }
    }
    for row in 0..dim2 {
        for col in 0..row {
            next[row * dim2 + col] = next[col * dim2 + row].adjoint();
        }
    }
    next
}

/// Closes the environments on a final open site with right boundary `r`:
/// `ρ[(s,s_k),(t,t_k)] = tr(A[t_k]† X[s,t] A[s_k] R)`.
fn close_site(open: &[DMatrix<C64>], dim: usize, a: &SiteTensor, r: &DMatrix<C64>) -> DMatrix<C64> {
    let ar = [&a[0] * r, &a[1] * r];
    let dim2 = dim * 2;
    let mut rho = DMatrix::zeros(dim2, dim2);
    for s in 0..dim {
        for t in 0..dim {
            let x = &open[s * dim + t];
            for sk in 0..2 {
                let m = x * &ar[sk];
                for tk in 0..2 {
                    rho[(s * 2 + sk, t * 2 + tk)] = frobenius(&a[tk], &m);
                }
            }
        }
    }
    rho
}

fn trace_product(x: &DMatrix<C64>, r: &DMatrix<C64>) -> C64 {
    // tr(X R) without forming the product
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..x.nrows() {
        for k in 0..x.ncols() {
            acc += x[(i, k)] * r[(k, i)];
        }
    }
    acc
}

impl<'a> Environments<'a> {
    pub fn new(state: &'a MpsState) -> Self {
        let n = state.n();
        let mut left = Vec::with_capacity(n + 1);
        left.push(one());
        for k in 0..n {
            let next = transfer_left(&left[k], &state.tensors[k]);
            left.push(next);
        }
        let mut right = vec![one(); n + 1];
        for k in (0..n).rev() {
            right[k] = transfer_right(&right[k + 1], &state.tensors[k]);
        }
        Self { state, left, right }
    }

    pub fn norm_squared(&self) -> f64 {
        self.right[0][(0, 0)].re
    }

    /// Complex expectation value of a Pauli string (identity on unlisted sites).
    pub fn expect_complex(&self, ops: &[(usize, Pauli)]) -> Result<C64> {
        let ops = checked_assignment(ops, self.state.n())?;
        let Some(&(first, _)) = ops.first() else {
            return Ok(C64::new(self.norm_squared(), 0.0));
        };
        let last = ops.last().unwrap().0;
        let mut x = self.left[first].clone();
        let mut it = ops.iter().peekable();
        for k in first..=last {
            let op = match it.peek() {
                Some(&&(s, p)) if s == k => {
                    it.next();
                    p
                }
                _ => Pauli::I,
            };
            x = transfer_op(&x, &self.state.tensors[k], op);
        }
        Ok(trace_product(&x, &self.right[last + 1]))
    }

    pub fn expect(&self, ops: &[(usize, Pauli)]) -> Result<f64> {
        Ok(self.expect_complex(ops)?.re)
    }

    /// Two-site reduced states `{anchor, b}` for every `b > anchor`, from a
    /// single left-to-right sweep.
    pub fn pair_rdms(&self, anchor: usize) -> Result<Vec<Rdm>> {
        let n = self.state.n();
        checked_sites(&[anchor], n)?;
        let mut open = open_site(std::slice::from_ref(&self.left[anchor]), 1, &self.state.tensors[anchor]);
        let mut out = Vec::with_capacity(n - anchor - 1);
        for b in anchor + 1..n {
            let t_b = &self.state.tensors[b];
            let rho = close_site(&open, 2, t_b, &self.right[b + 1]);
            out.push(Rdm::new(vec![anchor, b], rho)?);
            if b + 1 < n {
                open[0] = transfer_left(&open[0], t_b);
                open[1] = transfer_left(&open[1], t_b);
                open[2] = open[1].adjoint();
                open[3] = transfer_left(&open[3], t_b);
            }
        }
        Ok(out)
    }
}

impl ReducedStates for Environments<'_> {
    fn num_sites(&self) -> usize {
        self.state.n()
    }

    fn reduced(&self, sites: &[usize]) -> Result<Rdm> {
        let sites = checked_sites(sites, self.state.n())?;
        let first = sites[0];
        let last = *sites.last().unwrap();
        let mut open = vec![self.left[first].clone()];
        let mut dim = 1usize;
        for k in first..last {
            let a = &self.state.tensors[k];
            if sites.contains(&k) {
                open = open_site(&open, dim, a);
                dim *= 2;
            } else {
                for s in 0..dim {
                    for t in s..dim {
                        open[s * dim + t] = transfer_left(&open[s * dim + t], a);
                    }
                    for t in 0..s {
                        open[s * dim + t] = open[t * dim + s].adjoint();
                    }
                }
            }
        }
        let rho = close_site(&open, dim, &self.state.tensors[last], &self.right[last + 1]);
        Rdm::new(sites, rho)
    }
}
