//! The resolvent kernel of the aggregate operator `𝕎f(t) = ∫ W(t,s) f(s) ds`.
//!
//! For `λ‖W‖∞ < 1` the Neumann series gives `(I − λ𝕎)⁻¹ = I + λΓ(λ)` with
//! integral kernel `Γ(t,s,λ) = Σ_{k≥1} λ^{k−1} W_k(t,s)`. Since
//! `0 ≤ W_k ≤ ‖W‖∞^k`, truncating after `K` terms leaves a tail of at most
//! `‖W‖∞ (λ‖W‖∞)^K / (1 − λ‖W‖∞)` in every entry, and `K` is chosen from that
//! bound alone.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graphon::{apply_kernel, kernel_compose, step_approximation, Graphon, StepGraphon};
use crate::grid::{GridSpec, StepProfile};

#[derive(Debug, Clone)]
pub struct ResolventKernel {
    pub grid: GridSpec,
    /// `Γ` at cell pairs; entry `(i,j)` is the kernel value on `cell(i) × cell(j)`.
    pub gamma: DMatrix<f64>,
    pub lambda: f64,
    pub truncation_order: usize,
    /// Upper bound on every entry of the dropped tail `Σ_{k>K} λ^{k−1} W_k`.
    pub tail_bound: f64,
    /// `‖W‖∞` used for the contraction test and the tail bound.
    pub sup_norm: f64,
}

impl ResolventKernel {
    /// `(Γg)(t) = ∫ Γ(t,s,λ) g(s) ds` by cell quadrature.
    pub fn apply(&self, g: &StepProfile) -> Result<StepProfile> {
        if g.len() != self.grid.n_cells() {
            return Err(Error::IncompatibleGrids {
                left: self.grid.n_cells(),
                right: g.len(),
                max_cells: self.grid.n_cells(),
            });
        }
        StepProfile::new(apply_kernel(&self.gamma, g.values()))
    }

    /// Entrywise bound `(1/λ)(1/(1−λ‖W‖∞) − 1) = ‖W‖∞ / (1 − λ‖W‖∞)`, written in
    /// the second form so that it stays finite at `λ = 0`.
    pub fn entry_bound(&self) -> f64 {
        self.sup_norm / (1.0 - self.lambda * self.sup_norm)
    }
}

/// Tail bound `Σ_{k>K} λ^{k−1} w^k` of the Neumann series.
pub fn neumann_tail_bound(lambda: f64, sup_norm: f64, order: usize) -> f64 {
    let q = lambda * sup_norm;
    sup_norm * q.powi(order as i32) / (1.0 - q)
}

/// Smallest truncation order `K ≥ 1` whose tail bound is at most `tol`.
pub fn truncation_order(lambda: f64, sup_norm: f64, tol: f64) -> usize {
    let mut k = 1;
    while neumann_tail_bound(lambda, sup_norm, k) > tol {
        k += 1;
    }
    k
}

pub fn check_contraction(lambda: f64, sup_norm: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda = {lambda} must be >= 0"
        )));
    }
    let product = lambda * sup_norm;
    if product >= 1.0 {
        return Err(Error::ContractionViolated { product });
    }
    Ok(())
}

/// `Σ_{j=0}^{k−1} P^j` by binary splitting:
/// `S_{2m} = S_m + P^m S_m` and `S_{m+1} = I + P S_m`.
fn geometric_sum(p: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = p.nrows();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut sum = identity.clone();
    let mut power = p.clone();
    let bits = usize::BITS - k.leading_zeros();
    for b in (0..bits - 1).rev() {
        let last = b == 0;
        sum = &sum + &power * &sum;
        if !last {
            power = &power * &power;
        }
        if (k >> b) & 1 == 1 {
            sum = &identity + p * &sum;
            if !last {
                power = p * &power;
            }
        }
    }
    sum
}

/// Truncated resolvent kernel at the given grid, accurate to `tol` entrywise.
pub fn resolvent(w: &Graphon, lambda: f64, grid: GridSpec, tol: f64) -> Result<ResolventKernel> {
    let wbar = step_approximation(w, grid.n_cells())?;
    resolvent_of_step(&wbar, w.sup_norm(), lambda, tol)
}

/// Resolvent of an already discretized kernel. `sup_norm` must bound every
/// entry of `wbar`.
pub fn resolvent_of_step(
    wbar: &StepGraphon,
    sup_norm: f64,
    lambda: f64,
    tol: f64,
) -> Result<ResolventKernel> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tol} must be > 0"
        )));
    }
    check_contraction(lambda, sup_norm)?;
    let n = wbar.n();
    let order = truncation_order(lambda, sup_norm, tol);
    // Γ = Σ_{k=1}^{K} λ^{k−1} W_k = W̄ · Σ_{j=0}^{K−1} (λ W̄ / N)^j
    let step = wbar.matrix() * (lambda / n as f64);
    let gamma = wbar.matrix() * geometric_sum(&step, order);
    Ok(ResolventKernel {
        grid: wbar.grid(),
        gamma,
        lambda,
        truncation_order: order,
        tail_bound: neumann_tail_bound(lambda, sup_norm, order),
        sup_norm,
    })
}

/// Term-by-term partial sum `Σ_{k=1}^{K} λ^{k−1} W_k`, one kernel product per
/// term. Slower than [`resolvent`]; kept as an independent route.
pub fn neumann_partial_sum(wbar: &StepGraphon, lambda: f64, order: usize) -> DMatrix<f64> {
    let mut term = wbar.matrix().clone();
    let mut sum = term.clone();
    let mut scale = 1.0;
    for _ in 1..order {
        term = kernel_compose(wbar.matrix(), &term);
        scale *= lambda;
        sum += &term * scale;
    }
    sum
}

/// `(I − λ𝕎) s` on the grid of `wbar`.
pub fn apply_second_kind(wbar: &StepGraphon, lambda: f64, s: &StepProfile) -> Result<StepProfile> {
    if wbar.n() != s.len() {
        return Err(Error::IncompatibleGrids {
            left: wbar.n(),
            right: s.len(),
            max_cells: s.len().max(wbar.n()),
        });
    }
    let ws = apply_kernel(wbar.matrix(), s.values());
    StepProfile::new(
        s.values()
            .iter()
            .zip(ws)
            .map(|(si, wi)| si - lambda * wi)
            .collect(),
    )
}

/// Solves the discretized Fredholm equation `(I − λW̄/N) s = g` by dense LU.
pub fn solve_second_kind(wbar: &StepGraphon, lambda: f64, g: &StepProfile) -> Result<StepProfile> {
    let n = wbar.n();
    if g.len() != n {
        return Err(Error::IncompatibleGrids {
            left: n,
            right: g.len(),
            max_cells: n.max(g.len()),
        });
    }
    let mut a = wbar.matrix() * (-lambda / n as f64);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let rhs = nalgebra::DVector::from_column_slice(g.values());
    let x = a.lu().solve(&rhs).ok_or(Error::Singular)?;
    StepProfile::new(x.as_slice().to_vec())
}
