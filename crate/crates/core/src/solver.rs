//! Damped best-response iteration for discretized graphon games with
//! quasi-concave scalar utilities.
//!
//! Nothing guarantees convergence in general; a run that exhausts its
//! iteration budget is reported with `converged = false`. For the plateau LQ
//! family with `λ‖W‖∞ < 1` and nearest-point selection, the implied source
//! `f − λ𝕎f` moves towards `[0, 1]` by a factor `1 − d(1 − λ‖W‖∞)` per step,
//! so the iteration converges geometrically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{best_value, GraphonGame, RegretReport};
use crate::graphon::apply_kernel;
use crate::grid::{StepProfile, DEFAULT_MAX_CELLS};
use crate::optimize::{Interval, BEST_RESPONSE_TOLERANCE};

/// How a single action is picked from a multi-valued best response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Projection of the current action onto the best-response set.
    #[default]
    NearestPoint,
    IntervalMidpoint,
    LowerEndpoint,
    UpperEndpoint,
}

impl SelectionRule {
    pub fn select(&self, set: Interval, current: f64) -> f64 {
        match self {
            SelectionRule::NearestPoint => set.project(current),
            SelectionRule::IntervalMidpoint => set.midpoint(),
            SelectionRule::LowerEndpoint => set.lo,
            SelectionRule::UpperEndpoint => set.hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub damping: f64,
    /// Stop once the sup-norm change of one iteration falls to this.
    pub step_tolerance: f64,
    /// Stop once `ε*` of the current profile falls to this.
    pub regret_target: f64,
    pub selection_rule: SelectionRule,
    pub best_response_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            damping: 0.5,
            step_tolerance: 1e-9,
            regret_target: 1e-7,
            selection_rule: SelectionRule::NearestPoint,
            best_response_tolerance: BEST_RESPONSE_TOLERANCE,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping {} must lie in (0, 1]",
                self.damping
            )));
        }
        if !(self.step_tolerance > 0.0)
            || !(self.regret_target > 0.0)
            || !(self.best_response_tolerance > 0.0)
        {
            return Err(Error::InvalidParameter(
                "solver tolerances must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub iterations: usize,
    /// Sup-norm change of each iteration.
    pub step_sizes: Vec<f64>,
    /// `ε*` of the profile entering each iteration.
    pub epsilon_history: Vec<f64>,
    pub final_report: RegretReport,
    pub converged: bool,
}

/// Best-response set of every cell against the aggregate `e`.
fn best_response_sets(game: &GraphonGame, e: &[f64], tol: f64) -> Result<Vec<Interval>> {
    let cap = game.cap();
    e.iter()
        .enumerate()
        .map(|(i, &ei)| {
            let u = game.utilities().agent(i)?;
            Ok(match u.best_response_set(ei, cap) {
                Some(set) => set,
                None => Interval::point(best_value(&u, ei, cap, tol)?.0),
            })
        })
        .collect()
}

fn select_all(sets: &[Interval], f: &StepProfile, rule: SelectionRule) -> Result<StepProfile> {
    StepProfile::new(
        sets.iter()
            .zip(f.values())
            .map(|(set, &fi)| rule.select(*set, fi))
            .collect(),
    )
}

/// One application of the best-response correspondence followed by the
/// selection rule.
pub fn best_response_map(
    game: &GraphonGame,
    f: &StepProfile,
    rule: SelectionRule,
) -> Result<StepProfile> {
    let e = game.aggregate(f)?;
    let sets = best_response_sets(game, e.values(), BEST_RESPONSE_TOLERANCE)?;
    select_all(&sets, f, rule)
}

/// Iterates `f ← (1 − d) f + d · BR(f)` until the step size or `ε*` target is
/// met, or the iteration budget runs out.
pub fn solve(
    game: &GraphonGame,
    f0: &StepProfile,
    cfg: &SolverConfig,
) -> Result<(StepProfile, SolveTrace)> {
    cfg.validate()?;
    let tol = cfg.best_response_tolerance;
    let cap = game.cap();
    let mut f = f0.clone();
    let mut step_sizes = Vec::new();
    let mut epsilon_history = Vec::new();
    let mut converged = false;
    let mut final_report = None;

    for _ in 0..cfg.max_iters {
        let e = game.aggregate(&f)?;
        let report = RegretReport::compute(game.utilities(), cap, f.clone(), e.clone(), tol)?;
        epsilon_history.push(report.epsilon_star);
        if report.epsilon_star <= cfg.regret_target {
            converged = true;
            final_report = Some(report);
            break;
        }
        let sets = best_response_sets(game, e.values(), tol)?;
        let target = select_all(&sets, &f, cfg.selection_rule)?;
        let d = cfg.damping;
        let next: Vec<f64> = f
            .values()
            .iter()
            .zip(target.values())
            .map(|(&a, &b)| ((1.0 - d) * a + d * b).clamp(0.0, cap))
            .collect();
        let step = next
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        step_sizes.push(step);
        f = StepProfile::new(next)?;
        if step <= cfg.step_tolerance {
            converged = true;
            break;
        }
    }

    let final_report = match final_report {
        Some(r) => r,
        None => {
            let e = StepProfile::new(apply_kernel(game.kernel().matrix(), f.values()))?;
            RegretReport::compute(game.utilities(), cap, f.clone(), e, tol)?
        }
    };
    let trace = SolveTrace {
        iterations: step_sizes.len(),
        step_sizes,
        epsilon_history,
        final_report,
        converged,
    };
    Ok((f, trace))
}

/// Distance between two profiles, used as the numerical stand-in for
/// almost-everywhere convergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceMode {
    L1,
    Sup,
    /// Measure of the cells where the profiles differ by more than `δ`.
    ExceedFraction(f64),
}

pub fn profile_distance(f1: &StepProfile, f2: &StepProfile, mode: DistanceMode) -> Result<f64> {
    let (a, b) = f1.align(f2, DEFAULT_MAX_CELLS)?;
    let diffs = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs());
    let n = a.len() as f64;
    Ok(match mode {
        DistanceMode::L1 => diffs.sum::<f64>() / n,
        DistanceMode::Sup => diffs.fold(0.0, f64::max),
        DistanceMode::ExceedFraction(delta) => diffs.filter(|&d| d > delta).count() as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::Graphon;
    use crate::grid::GridSpec;
    use crate::utility::UtilitySpec;

    fn lq_game(w: Graphon, lambda: f64, cap: f64, n: usize) -> GraphonGame {
        let grid = GridSpec::new(n).unwrap();
        GraphonGame::new(w, UtilitySpec::lq_plateau(lambda, grid).unwrap(), cap, grid).unwrap()
    }

    #[test]
    fn nearest_point_projects_onto_plateau() {
        let set = Interval::new(1.0, 2.0);
        assert_eq!(SelectionRule::NearestPoint.select(set, 1.7), 1.7);
        assert_eq!(SelectionRule::NearestPoint.select(set, 0.2), 1.0);
        assert_eq!(SelectionRule::IntervalMidpoint.select(set, 0.2), 1.5);
        assert_eq!(SelectionRule::LowerEndpoint.select(set, 0.2), 1.0);
        assert_eq!(SelectionRule::UpperEndpoint.select(set, 0.2), 2.0);
    }

    #[test]
    fn best_response_against_fixed_aggregate() {
        // W ≡ 1 makes the aggregate the mean of f
        let game = lq_game(Graphon::constant(1.0).unwrap(), 0.5, 10.0, 4);
        let f = StepProfile::new(vec![4.0, 2.5, 3.0, 0.0]).unwrap();
        let e = game.aggregate(&f).unwrap();
        assert_eq!(e.values(), &[2.375; 4]);
        let br = best_response_map(&game, &f, SelectionRule::NearestPoint).unwrap();
        let le = 0.5 * 2.375;
        assert_eq!(br.values(), &[le + 1.0, le + 1.0, le + 1.0, le]);
    }

    #[test]
    fn no_externality_reaches_fixed_point_in_one_step() {
        let game = lq_game(Graphon::constant(0.0).unwrap(), 0.5, 4.0, 8);
        let f0 = StepProfile::from_fn(game.grid(), |t| 4.0 * t);
        let br = best_response_map(&game, &f0, SelectionRule::NearestPoint).unwrap();
        let again = best_response_map(&game, &br, SelectionRule::NearestPoint).unwrap();
        assert_eq!(br, again);
    }

    #[test]
    fn static_game_converges_immediately() {
        let game = lq_game(Graphon::Product, 0.0, 4.0, 16);
        let cfg = SolverConfig {
            damping: 1.0,
            ..Default::default()
        };
        let f0 = StepProfile::from_fn(game.grid(), |t| 4.0 * t);
        let (f, trace) = solve(&game, &f0, &cfg).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations <= 2);
        assert!(f.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let (_, zero) = solve(
            &game,
            &StepProfile::constant(game.grid(), 0.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(zero.iterations, 0);
    }

    #[test]
    fn complete_graphon_gives_constant_aggregate() {
        let game = lq_game(Graphon::constant(1.0).unwrap(), 0.6, 5.0, 32);
        let f0 = StepProfile::from_fn(game.grid(), |t| 5.0 * t);
        let (f, trace) = solve(&game, &f0, &SolverConfig::default()).unwrap();
        assert!(trace.converged);
        let e = game.aggregate(&f).unwrap();
        assert!(e.max() - e.min() < 1e-12);
    }

    #[test]
    fn exhausted_budget_is_not_an_error() {
        let game = lq_game(Graphon::separable_power(0.5).unwrap(), 0.5, 4.0, 16);
        let cfg = SolverConfig {
            max_iters: 1,
            damping: 0.01,
            ..Default::default()
        };
        let (_, trace) = solve(&game, &StepProfile::constant(game.grid(), 4.0), &cfg).unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations, 1);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let game = lq_game(Graphon::Product, 0.5, 4.0, 4);
        let f0 = StepProfile::constant(game.grid(), 0.0);
        for cfg in [
            SolverConfig {
                damping: 0.0,
                ..Default::default()
            },
            SolverConfig {
                damping: 1.5,
                ..Default::default()
            },
            SolverConfig {
                step_tolerance: 0.0,
                ..Default::default()
            },
        ] {
            assert!(solve(&game, &f0, &cfg).is_err());
        }
    }

    #[test]
    fn config_json_uses_defaults() {
        let cfg: SolverConfig =
            serde_json::from_str(r#"{"selection_rule":"upper-endpoint"}"#).unwrap();
        assert_eq!(cfg.selection_rule, SelectionRule::UpperEndpoint);
        assert_eq!(cfg.max_iters, 10_000);
    }

    #[test]
    fn distance_modes() {
        let grid = GridSpec::new(100).unwrap();
        let one = StepProfile::constant(grid, 1.0);
        let zero = StepProfile::constant(grid, 0.0);
        for mode in [
            DistanceMode::L1,
            DistanceMode::Sup,
            DistanceMode::ExceedFraction(0.5),
        ] {
            assert_eq!(profile_distance(&one, &one, mode).unwrap(), 0.0);
            assert_eq!(profile_distance(&one, &zero, mode).unwrap(), 1.0);
        }
        let mut v = one.values().to_vec();
        v[17] += 0.3;
        let bumped = StepProfile::new(v).unwrap();
        assert_eq!(
            profile_distance(&one, &bumped, DistanceMode::ExceedFraction(0.1)).unwrap(),
            0.01
        );
        let coarse = StepProfile::constant(GridSpec::new(3).unwrap(), 1.0);
        assert_eq!(
            profile_distance(&one, &coarse, DistanceMode::Sup).unwrap(),
            0.0
        );
    }
}
