//! Convergence experiments linking finite network games to a graphon game.
//!
//! A target graphon game on a reference grid of `N_ref` cells is approximated
//! by network games whose adjacency matrices are cell averages of the graphon
//! and whose utility parameters are cell averages of the target's. Two
//! experiments run on each size sequence:
//!
//! * **approximation**: the target equilibrium, averaged onto `n` cells, is an
//!   `ε_n`-equilibrium of the `n`-player game with `ε_n` shrinking in `n`;
//! * **limit**: equilibria solved independently in each network game converge
//!   to a profile `f̂` that is itself an equilibrium of the target game.
//!
//! The characterization suite runs both on two unrelated size sequences and
//! checks that they single out the same equilibrium.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{GraphonGame, NetworkGame, RegretReport};
use crate::graphon::{l1_distance, step_approximation, Graphon, StepGraphon};
use crate::grid::{StepProfile, DEFAULT_MAX_CELLS};
use crate::io::{save_profile, GameDescriptor};
use crate::lq::{construct_equilibrium, verify_equilibrium, LqParams, SourceFunction};
use crate::solver::{profile_distance, solve, DistanceMode, SelectionRule, SolverConfig};
use crate::utility::{ParamValue, UtilityDescriptor, UtilityFamily};

pub const DEFAULT_REFERENCE_N: usize = 1024;
pub const DEFAULT_N_LIST: [usize; 6] = [8, 16, 32, 64, 128, 256];
pub const DEFAULT_ALTERNATE_REFERENCE_N: usize = 768;
pub const DEFAULT_ALTERNATE_N_LIST: [usize; 5] = [12, 24, 48, 96, 192];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub reference_n: usize,
    pub n_list: Vec<usize>,
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::InvalidParameter("n_list is empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "n_list {:?} must be strictly increasing",
                self.n_list
            )));
        }
        for &n in &self.n_list {
            if n == 0 || !self.reference_n.is_multiple_of(n) {
                return Err(Error::NotADivisor {
                    size: n,
                    reference: self.reference_n,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EquilibriumSource {
    /// `s_g` from the resolvent kernel; needs plateau LQ utilities with one
    /// common `λ`.
    Resolvent {
        #[serde(default = "unit_source")]
        source: ParamValue,
        #[serde(default = "default_resolvent_tol")]
        tol: f64,
    },
    /// Best-response iteration on the target game from a constant start
    /// (the cap when absent).
    Solver {
        #[serde(default)]
        initial: Option<f64>,
        #[serde(default)]
        config: SolverConfig,
    },
}

fn unit_source() -> ParamValue {
    ParamValue::Scalar(1.0)
}

fn default_resolvent_tol() -> f64 {
    1e-10
}

impl Default for EquilibriumSource {
    fn default() -> Self {
        Self::Resolvent {
            source: unit_source(),
            tol: default_resolvent_tol(),
        }
    }
}

/// How a reference-grid profile becomes an `n`-player strategy vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproximationRule {
    #[default]
    IntervalAveraging,
}

/// Solver used on each network game of the limit experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitSolver {
    /// Constant starting profile; the cap when absent.
    pub initial: Option<f64>,
    pub config: SolverConfig,
}

impl Default for LimitSolver {
    fn default() -> Self {
        Self {
            initial: None,
            config: SolverConfig {
                damping: 1.0,
                step_tolerance: 1e-11,
                regret_target: 1e-14,
                selection_rule: SelectionRule::NearestPoint,
                ..SolverConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Certification tolerance for the target equilibrium.
    pub certification: f64,
    /// Bound on `ε_n` at the largest `n` of the approximation experiment.
    pub final_epsilon: f64,
    /// Bound on the L1 distance between `f̂` and the target equilibrium.
    pub limit_l1: f64,
    /// Bound on `ε*` of `f̂` in the target game.
    pub limit_epsilon: f64,
    /// Threshold `δ` of the exceed-fraction distance.
    pub exceed_delta: f64,
    /// Bound on the L1 distance between the limits of the two sequences.
    pub cross_sequence_l1: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            certification: 1e-6,
            final_epsilon: 0.05,
            limit_l1: 1e-2,
            limit_epsilon: 0.02,
            exceed_delta: 1e-2,
            cross_sequence_l1: 2e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Target game; its `grid_n` is the reference grid of the main sequence.
    pub game: GameDescriptor,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    /// Second size sequence with its own reference grid; `null` disables it.
    #[serde(default = "default_alternate")]
    pub alternate: Option<SequenceSpec>,
    #[serde(default)]
    pub equilibrium: EquilibriumSource,
    #[serde(default)]
    pub approximation: ApproximationRule,
    #[serde(default)]
    pub limit_solver: LimitSolver,
    /// Midpoint samples per cell side when the graphon error is not exact.
    #[serde(default = "default_l1_samples")]
    pub l1_samples: usize,
    #[serde(default)]
    pub output_dir: Option<std::path::PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_n_list() -> Vec<usize> {
    DEFAULT_N_LIST.to_vec()
}

fn default_alternate() -> Option<SequenceSpec> {
    Some(SequenceSpec {
        reference_n: DEFAULT_ALTERNATE_REFERENCE_N,
        n_list: DEFAULT_ALTERNATE_N_LIST.to_vec(),
    })
}

fn default_l1_samples() -> usize {
    4
}

impl ExperimentPlan {
    pub fn new(game: GameDescriptor) -> Self {
        Self {
            game,
            n_list: default_n_list(),
            alternate: default_alternate(),
            equilibrium: EquilibriumSource::default(),
            approximation: ApproximationRule::default(),
            limit_solver: LimitSolver::default(),
            l1_samples: default_l1_samples(),
            output_dir: None,
            tolerances: Tolerances::default(),
        }
    }

    /// `W(t,s) = √(ts)`, plateau LQ with `λ = 1/2`, `L = 4`, source `g ≡ 1`.
    pub fn lq_reference() -> Self {
        let mut params = std::collections::BTreeMap::new();
        params.insert("lambda".to_string(), ParamValue::Scalar(0.5));
        Self::new(GameDescriptor {
            graphon: Graphon::SeparablePower(0.5),
            utility: UtilityDescriptor {
                family: UtilityFamily::LqPlateau,
                params,
            },
            cap: 4.0,
            grid_n: DEFAULT_REFERENCE_N,
        })
    }

    pub fn main_sequence(&self) -> SequenceSpec {
        SequenceSpec {
            reference_n: self.game.grid_n,
            n_list: self.n_list.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.main_sequence().validate()?;
        if let Some(alt) = &self.alternate {
            alt.validate()?;
        }
        self.limit_solver.config.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `‖W_{A_n} − W‖₁`.
    pub w_l1: f64,
    /// Summed L1 distance between averaged and target utility parameters.
    pub u_l1: f64,
    pub profile_l1: f64,
    pub exceed_fraction: f64,
    pub epsilon_n: f64,
}

/// Target game on one reference grid together with its certified equilibrium.
#[derive(Debug, Clone)]
pub struct TargetEquilibrium {
    pub game: GraphonGame,
    pub profile: StepProfile,
    pub report: RegretReport,
}

/// Builds the target game at `reference_n` cells and certifies an equilibrium
/// of it.
pub fn certify_target(plan: &ExperimentPlan, reference_n: usize) -> Result<TargetEquilibrium> {
    let game = GameDescriptor {
        grid_n: reference_n,
        ..plan.game.clone()
    }
    .build()?;
    let grid = game.grid();
    let tol = plan.tolerances.certification;
    match &plan.equilibrium {
        EquilibriumSource::Resolvent {
            source,
            tol: series_tol,
        } => {
            let params = LqParams::from_game(&game)?;
            let g = match source {
                ParamValue::Scalar(v) => StepProfile::constant(grid, *v),
                ParamValue::Profile(values) => {
                    StepProfile::new(values.clone())?.refine(reference_n)?
                }
            };
            let eq = construct_equilibrium(
                game.graphon(),
                &params,
                &SourceFunction::new(g)?,
                *series_tol,
            )?;
            let cert = verify_equilibrium(game.graphon(), &params, &eq.profile, tol)?;
            match cert.report {
                Some(report) if cert.certified => Ok(TargetEquilibrium {
                    game,
                    profile: eq.profile,
                    report,
                }),
                _ => Err(Error::Certification(format!(
                    "{} containment violations, epsilon* = {:?}",
                    cert.violations.len(),
                    cert.report.map(|r| r.epsilon_star)
                ))),
            }
        }
        EquilibriumSource::Solver { initial, config } => {
            let f0 = StepProfile::constant(grid, initial.unwrap_or(game.cap()));
            let (profile, trace) = solve(&game, &f0, config)?;
            let report = trace.final_report;
            if !trace.converged || report.epsilon_star > tol {
                return Err(Error::Certification(format!(
                    "solver stopped after {} iterations with epsilon* = {:e}",
                    trace.iterations, report.epsilon_star
                )));
            }
            Ok(TargetEquilibrium {
                game,
                profile,
                report,
            })
        }
    }
}

/// Network games whose adjacency matrices are the `n`-cell averages of the
/// target graphon and whose utility parameters are the `n`-cell averages of
/// the target's.
pub fn build_network_sequence(game: &GraphonGame, n_list: &[usize]) -> Result<Vec<NetworkGame>> {
    let reference = game.grid().n_cells();
    n_list
        .iter()
        .map(|&n| {
            if n == 0 || !reference.is_multiple_of(n) {
                return Err(Error::NotADivisor { size: n, reference });
            }
            let adjacency = step_approximation(game.graphon(), n)?.into_matrix();
            NetworkGame::new(adjacency, game.utilities().average_to(n)?, game.cap())
        })
        .collect()
}

/// Cell averages of `f` over the `n`-cell partition.
pub fn approximate_profile(f: &StepProfile, n: usize) -> Result<Vec<f64>> {
    Ok(f.average_to(n)?.into_values())
}

fn approximation_errors(
    target: &GraphonGame,
    network: &NetworkGame,
    samples: usize,
) -> Result<(f64, f64)> {
    let adjacency = StepGraphon::new(network.adjacency().clone())?;
    let w_l1 = l1_distance(target.graphon(), &adjacency, samples)?;
    let u_l1 = network
        .utilities()
        .l1_distance(target.utilities(), DEFAULT_MAX_CELLS)?;
    Ok((w_l1, u_l1))
}

/// Rows of the approximation experiment for one size sequence.
pub fn approximation_rows(
    target: &TargetEquilibrium,
    n_list: &[usize],
    plan: &ExperimentPlan,
) -> Result<Vec<ConvergenceRow>> {
    let networks = build_network_sequence(&target.game, n_list)?;
    let delta = plan.tolerances.exceed_delta;
    n_list
        .iter()
        .zip(&networks)
        .map(|(&n, network)| {
            let s = approximate_profile(&target.profile, n)?;
            let epsilon_n = network.regrets(&s)?.epsilon_star;
            let (w_l1, u_l1) = approximation_errors(&target.game, network, plan.l1_samples)?;
            let s = StepProfile::new(s)?;
            Ok(ConvergenceRow {
                n,
                w_l1,
                u_l1,
                profile_l1: profile_distance(&s, &target.profile, DistanceMode::L1)?,
                exceed_fraction: profile_distance(
                    &s,
                    &target.profile,
                    DistanceMode::ExceedFraction(delta),
                )?,
                epsilon_n,
            })
        })
        .collect()
}

/// Approximation experiment on the main sequence of `plan`.
pub fn run_approximation_experiment(plan: &ExperimentPlan) -> Result<Vec<ConvergenceRow>> {
    plan.validate()?;
    let target = certify_target(plan, plan.game.grid_n)?;
    approximation_rows(&target, &plan.n_list, plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSummary {
    /// Distances in these rows are to `f̂`.
    pub rows: Vec<ConvergenceRow>,
    pub skipped: Vec<SkippedRow>,
    /// `‖f̂ − f‖₁` for the target equilibrium `f`.
    pub limit_l1: f64,
    pub limit_exceed_fraction: f64,
    /// `ε*` of `f̂` in the target game.
    pub limit_epsilon: f64,
    /// Largest increase of the row L1 distance from one `n` to the next.
    pub max_l1_increase: f64,
    #[serde(skip)]
    pub limit_profile: StepProfile,
}

/// Limit experiment for one size sequence.
pub fn limit_summary(
    target: &TargetEquilibrium,
    n_list: &[usize],
    plan: &ExperimentPlan,
) -> Result<LimitSummary> {
    let networks = build_network_sequence(&target.game, n_list)?;
    let solver = &plan.limit_solver;
    let mut solved = Vec::new();
    let mut skipped = Vec::new();
    for (&n, network) in n_list.iter().zip(&networks) {
        let game = network.embed();
        let f0 = StepProfile::constant(game.grid(), solver.initial.unwrap_or(game.cap()));
        let (profile, trace) = solve(&game, &f0, &solver.config)?;
        if trace.converged {
            let epsilon_n = network.regrets(profile.values())?.epsilon_star;
            solved.push((n, network, profile, epsilon_n));
        } else {
            skipped.push(SkippedRow {
                n,
                reason: format!(
                    "no convergence in {} iterations (last step {:e})",
                    trace.iterations,
                    trace.step_sizes.last().copied().unwrap_or(f64::NAN)
                ),
            });
        }
    }
    let Some((_, _, last, _)) = solved.last() else {
        return Err(Error::Certification(
            "no network game of the sequence converged".into(),
        ));
    };
    let limit_profile = last.refine(target.game.grid().n_cells())?;

    let delta = plan.tolerances.exceed_delta;
    let mut rows = Vec::with_capacity(solved.len());
    for (n, network, profile, epsilon_n) in &solved {
        let (w_l1, u_l1) = approximation_errors(&target.game, network, plan.l1_samples)?;
        rows.push(ConvergenceRow {
            n: *n,
            w_l1,
            u_l1,
            profile_l1: profile_distance(profile, &limit_profile, DistanceMode::L1)?,
            exceed_fraction: profile_distance(
                profile,
                &limit_profile,
                DistanceMode::ExceedFraction(delta),
            )?,
            epsilon_n: *epsilon_n,
        });
    }
    let max_l1_increase = rows
        .windows(2)
        .map(|w| w[1].profile_l1 - w[0].profile_l1)
        .fold(0.0, f64::max);

    Ok(LimitSummary {
        limit_l1: profile_distance(&limit_profile, &target.profile, DistanceMode::L1)?,
        limit_exceed_fraction: profile_distance(
            &limit_profile,
            &target.profile,
            DistanceMode::ExceedFraction(delta),
        )?,
        limit_epsilon: target.game.regret_profile(&limit_profile)?.epsilon_star,
        rows,
        skipped,
        max_l1_increase,
        limit_profile,
    })
}

/// Limit experiment on the main sequence of `plan`.
pub fn run_limit_experiment(plan: &ExperimentPlan) -> Result<LimitSummary> {
    plan.validate()?;
    let target = certify_target(plan, plan.game.grid_n)?;
    limit_summary(&target, &plan.n_list, plan)
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceReport {
    pub name: String,
    pub reference_n: usize,
    pub n_list: Vec<usize>,
    /// `ε*` of the certified target equilibrium.
    pub target_epsilon: f64,
    pub approximation: Vec<ConvergenceRow>,
    pub limit: LimitSummary,
    #[serde(skip)]
    pub target_profile: StepProfile,
}

/// A reported number and the bound it must not exceed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl ThresholdCheck {
    fn at_most(name: String, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LabReport {
    pub sequences: Vec<SequenceReport>,
    pub cross_sequence_l1: Option<f64>,
    pub thresholds: Vec<ThresholdCheck>,
    pub passed: bool,
}

impl LabReport {
    pub fn failures(&self) -> impl Iterator<Item = &ThresholdCheck> {
        self.thresholds.iter().filter(|t| !t.passed)
    }
}

fn sequence_report(
    plan: &ExperimentPlan,
    name: &str,
    seq: &SequenceSpec,
) -> Result<SequenceReport> {
    let target = certify_target(plan, seq.reference_n)?;
    Ok(SequenceReport {
        name: name.to_string(),
        reference_n: seq.reference_n,
        n_list: seq.n_list.clone(),
        target_epsilon: target.report.epsilon_star,
        approximation: approximation_rows(&target, &seq.n_list, plan)?,
        limit: limit_summary(&target, &seq.n_list, plan)?,
        target_profile: target.profile,
    })
}

fn sequence_thresholds(report: &SequenceReport, tol: &Tolerances) -> Vec<ThresholdCheck> {
    let name = |check: &str| format!("{}.{check}", report.name);
    let rows = &report.approximation;
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    let mut checks = vec![
        ThresholdCheck::at_most(
            name("approximation.final_epsilon"),
            last.epsilon_n,
            tol.final_epsilon,
        ),
        ThresholdCheck::at_most(
            name("approximation.epsilon_trend"),
            last.epsilon_n - first.epsilon_n,
            0.0,
        ),
    ];
    if let Some(row) = rows.iter().find(|r| r.n == report.reference_n) {
        checks.push(ThresholdCheck::at_most(
            name("approximation.full_resolution"),
            (row.epsilon_n - report.target_epsilon).abs(),
            0.0,
        ));
    }
    let limit = &report.limit;
    checks.extend([
        ThresholdCheck::at_most(name("limit.l1"), limit.limit_l1, tol.limit_l1),
        ThresholdCheck::at_most(
            name("limit.epsilon"),
            limit.limit_epsilon,
            tol.limit_epsilon,
        ),
        ThresholdCheck::at_most(name("limit.l1_increase"), limit.max_l1_increase, 0.0),
    ]);
    checks
}

/// Both experiments on the main sequence and, when configured, on the
/// alternate sequence, with the cross-sequence agreement of the limits.
pub fn run_characterization_suite(plan: &ExperimentPlan) -> Result<LabReport> {
    plan.validate()?;
    let mut sequences = vec![sequence_report(plan, "main", &plan.main_sequence())?];
    if let Some(alt) = &plan.alternate {
        sequences.push(sequence_report(plan, "alternate", alt)?);
    }

    let mut thresholds: Vec<ThresholdCheck> = sequences
        .iter()
        .flat_map(|s| sequence_thresholds(s, &plan.tolerances))
        .collect();
    let cross_sequence_l1 = match sequences.as_slice() {
        [a, b] => Some(profile_distance(
            &a.limit.limit_profile,
            &b.limit.limit_profile,
            DistanceMode::L1,
        )?),
        _ => None,
    };
    if let Some(d) = cross_sequence_l1 {
        thresholds.push(ThresholdCheck::at_most(
            "cross_sequence.l1".into(),
            d,
            plan.tolerances.cross_sequence_l1,
        ));
    }
    let passed = thresholds.iter().all(|t| t.passed);
    Ok(LabReport {
        sequences,
        cross_sequence_l1,
        thresholds,
        passed,
    })
}

fn write_rows(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.json`, the convergence tables and the final profiles of
/// every sequence into `dir`.
pub fn write_outputs(report: &LabReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for seq in &report.sequences {
        write_rows(
            &dir.join(format!("{}_approximation.csv", seq.name)),
            &seq.approximation,
        )?;
        write_rows(
            &dir.join(format!("{}_limit.csv", seq.name)),
            &seq.limit.rows,
        )?;
        save_profile(
            &dir.join(format!("{}_target_profile.csv", seq.name)),
            &seq.target_profile,
        )?;
        save_profile(
            &dir.join(format!("{}_limit_profile.csv", seq.name)),
            &seq.limit.limit_profile,
        )?;
    }
    serde_json::to_writer_pretty(File::create(dir.join("summary.json"))?, report)?;
    Ok(())
}
