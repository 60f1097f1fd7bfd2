//! Network games, graphon games, the step embeddings between them, and
//! regret-based ε-Nash certification.
//!
//! A network game on `n` players embeds as a graphon game on the `n`-cell
//! grid: the adjacency matrix becomes the step graphon `W_A`, the player
//! utilities become step parameter profiles `U_v`, and a strategy vector `s`
//! becomes the step profile `f_s`. Network aggregates are normalized by
//! `1/n`, which makes every quantity of the embedded game equal, bit for bit,
//! to the corresponding network quantity.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graphon::{apply_kernel, step_approximation, Graphon, StepGraphon};
use crate::grid::{GridSpec, StepProfile};
use crate::optimize::{golden_section_max, Interval, BEST_RESPONSE_TOLERANCE};
use crate::utility::{AgentUtility, UtilitySpec};

fn check_cap(cap: f64) -> Result<()> {
    if cap > 0.0 && cap.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "strategy cap L = {cap} must be > 0"
        )))
    }
}

/// A graphon game `(W, U)` with common strategy interval `[0, L]`,
/// discretized on a uniform grid.
#[derive(Debug, Clone)]
pub struct GraphonGame {
    graphon: Graphon,
    utilities: UtilitySpec,
    cap: f64,
    grid: GridSpec,
    kernel: StepGraphon,
}

impl GraphonGame {
    /// `utilities` may live on any grid whose resolution divides `grid`'s;
    /// it is refined exactly.
    pub fn new(graphon: Graphon, utilities: UtilitySpec, cap: f64, grid: GridSpec) -> Result<Self> {
        check_cap(cap)?;
        let utilities = if utilities.n_cells() == grid.n_cells() {
            utilities
        } else {
            utilities.refine(grid.n_cells())?
        };
        let kernel = step_approximation(&graphon, grid.n_cells())?;
        Ok(Self {
            graphon,
            utilities,
            cap,
            grid,
            kernel,
        })
    }

    pub fn graphon(&self) -> &Graphon {
        &self.graphon
    }

    pub fn utilities(&self) -> &UtilitySpec {
        &self.utilities
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn strategy_interval(&self) -> Interval {
        Interval::new(0.0, self.cap)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// The graphon's step approximation at the game grid.
    pub fn kernel(&self) -> &StepGraphon {
        &self.kernel
    }

    fn check_profile(&self, f: &StepProfile) -> Result<()> {
        if f.len() != self.grid.n_cells() {
            return Err(Error::IncompatibleGrids {
                left: self.grid.n_cells(),
                right: f.len(),
                max_cells: self.grid.n_cells(),
            });
        }
        f.check_range(0.0, self.cap)
    }

    pub fn aggregate(&self, f: &StepProfile) -> Result<StepProfile> {
        self.check_profile(f)?;
        StepProfile::new(apply_kernel(self.kernel.matrix(), f.values()))
    }

    pub fn regret_profile(&self, f: &StepProfile) -> Result<RegretReport> {
        self.regret_profile_with_tolerance(f, BEST_RESPONSE_TOLERANCE)
    }

    pub fn regret_profile_with_tolerance(&self, f: &StepProfile, tol: f64) -> Result<RegretReport> {
        let e = self.aggregate(f)?;
        RegretReport::compute(&self.utilities, self.cap, f.clone(), e, tol)
    }

    pub fn is_epsilon_nash(&self, f: &StepProfile, eps: f64) -> Result<bool> {
        Ok(is_epsilon_nash_regrets(
            self.regret_profile(f)?.regrets.values(),
            eps,
        ))
    }
}

/// A network game `(I, A, v)` with common strategy interval `[0, L]`.
#[derive(Debug, Clone)]
pub struct NetworkGame {
    adjacency: DMatrix<f64>,
    utilities: UtilitySpec,
    cap: f64,
}

impl NetworkGame {
    /// `utilities` holds one parameter vector `v(i)` per player, stored as
    /// `n`-cell profiles.
    pub fn new(adjacency: DMatrix<f64>, utilities: UtilitySpec, cap: f64) -> Result<Self> {
        check_cap(cap)?;
        // validates shape and the [0, 1] entry range
        let adjacency = StepGraphon::new(adjacency)?.into_matrix();
        if utilities.n_cells() != adjacency.nrows() {
            return Err(Error::InvalidParameter(format!(
                "{} players but {} utility parameter vectors",
                adjacency.nrows(),
                utilities.n_cells()
            )));
        }
        Ok(Self {
            adjacency,
            utilities,
            cap,
        })
    }

    pub fn n_players(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn utilities(&self) -> &UtilitySpec {
        &self.utilities
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn strategy_interval(&self) -> Interval {
        Interval::new(0.0, self.cap)
    }

    fn check_strategy(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.n_players() {
            return Err(Error::InvalidParameter(format!(
                "strategy vector has {} entries for {} players",
                s.len(),
                self.n_players()
            )));
        }
        StepProfile::new(s.to_vec())?.check_range(0.0, self.cap)
    }

    /// `e(i) = (1/n) Σ_j A(i,j) s(j)`.
    pub fn local_aggregate(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_strategy(s)?;
        Ok(apply_kernel(&self.adjacency, s))
    }

    pub fn regrets(&self, s: &[f64]) -> Result<RegretReport> {
        self.regrets_with_tolerance(s, BEST_RESPONSE_TOLERANCE)
    }

    pub fn regrets_with_tolerance(&self, s: &[f64], tol: f64) -> Result<RegretReport> {
        let e = self.local_aggregate(s)?;
        RegretReport::compute(
            &self.utilities,
            self.cap,
            StepProfile::new(s.to_vec())?,
            StepProfile::new(e)?,
            tol,
        )
    }

    pub fn is_epsilon_nash(&self, s: &[f64], eps: f64) -> Result<bool> {
        Ok(is_epsilon_nash_regrets(
            self.regrets(s)?.regrets.values(),
            eps,
        ))
    }

    pub fn embed(&self) -> GraphonGame {
        embed_network(self)
    }
}

/// The graphon game `(W_A, U_v)` on the `n`-cell grid.
pub fn embed_network(g: &NetworkGame) -> GraphonGame {
    let kernel = StepGraphon::new(g.adjacency.clone()).expect("validated at construction");
    GraphonGame {
        graphon: Graphon::Step(kernel.clone()),
        utilities: g.utilities.clone(),
        cap: g.cap,
        grid: kernel.grid(),
        kernel,
    }
}

/// The step profile `f_s` taking value `s(i)` on cell `i`.
pub fn embed_strategy(s: &[f64], interval: Interval) -> Result<StepProfile> {
    let f = StepProfile::new(s.to_vec())?;
    f.check_range(interval.lo, interval.hi)?;
    Ok(f)
}

pub fn network_local_aggregate(g: &NetworkGame, s: &[f64]) -> Result<Vec<f64>> {
    g.local_aggregate(s)
}

/// `max_{a ∈ [0, cap]} u(a, e)` and a maximizer. Closed form where the family
/// has one, golden-section search to `tol` otherwise.
pub fn best_value(u: &AgentUtility, e: f64, cap: f64, tol: f64) -> Result<(f64, f64)> {
    let (a, v) = match u.best_response_set(e, cap) {
        Some(set) => (set.lo, u.value(set.lo, e)),
        None => golden_section_max(|a| u.value(a, e), 0.0, cap, tol),
    };
    if !v.is_finite() {
        return Err(Error::Utility(format!(
            "{u:?} evaluated to {v} at a = {a}, e = {e}"
        )));
    }
    Ok((a, v))
}

/// Per-agent regrets `h(i) = max_a u_i(a, e_i) − u_i(f_i, e_i)` and the
/// certified `ε*`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub strategy: StepProfile,
    pub aggregate: StepProfile,
    /// Regrets clamped at zero.
    pub regrets: StepProfile,
    /// Smallest regret before clamping; never below `−best_response_tolerance`.
    pub min_raw_regret: f64,
    pub epsilon_star: f64,
    pub best_response_tolerance: f64,
}

impl RegretReport {
    pub fn compute(
        utilities: &UtilitySpec,
        cap: f64,
        strategy: StepProfile,
        aggregate: StepProfile,
        tol: f64,
    ) -> Result<Self> {
        let n = strategy.len();
        let mut regrets = Vec::with_capacity(n);
        let mut min_raw = f64::INFINITY;
        for i in 0..n {
            let u = utilities.agent(i)?;
            let (a, e) = (strategy[i], aggregate[i]);
            let (_, best) = best_value(&u, e, cap, tol)?;
            let current = u.value(a, e);
            if !current.is_finite() {
                return Err(Error::Utility(format!(
                    "{u:?} evaluated to {current} at a = {a}, e = {e}"
                )));
            }
            let h = best - current;
            if h < -tol {
                return Err(Error::Utility(format!(
                    "cell {i}: action {a} beats the computed best response by {}; utility is not quasi-concave?",
                    -h
                )));
            }
            min_raw = min_raw.min(h);
            regrets.push(h.max(0.0));
        }
        let epsilon_star = epsilon_star(&regrets)?;
        Ok(Self {
            strategy,
            aggregate,
            regrets: StepProfile::new(regrets)?,
            min_raw_regret: min_raw,
            epsilon_star,
            best_response_tolerance: tol,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.regrets.grid()
    }

    pub fn max_regret(&self) -> f64 {
        self.regrets.max()
    }

    pub fn is_epsilon_nash(&self, eps: f64) -> bool {
        is_epsilon_nash_regrets(self.regrets.values(), eps)
    }

    pub fn summary(&self) -> String {
        format!("epsilon_star={:e}", self.epsilon_star)
    }
}

/// Smallest `ε` such that the agents with regret `≤ ε` have measure at least
/// `1 − ε`, each of the `N` entries carrying measure `1/N`.
///
/// With regrets sorted descending, `r_(1) ≥ … ≥ r_(N)` and `r_(N+1) = 0`, this
/// is `min_k max(k/N, r_(k+1))`: allow the `k` largest regrets to violate.
pub fn epsilon_star(regrets: &[f64]) -> Result<f64> {
    if let Some((index, &value)) = regrets.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeRegret { index, value });
    }
    let n = regrets.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sorted = regrets.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.push(0.0);
    Ok((0..=n)
        .map(|k| (k as f64 / n as f64).max(sorted[k]))
        .fold(f64::INFINITY, f64::min))
}

/// Whether the fraction of entries with regret `≤ eps` is at least `1 − eps`.
pub fn is_epsilon_nash_regrets(regrets: &[f64], eps: f64) -> bool {
    if regrets.is_empty() {
        return true;
    }
    let violators = regrets.iter().filter(|&&h| h > eps).count();
    violators as f64 / regrets.len() as f64 <= eps
}
