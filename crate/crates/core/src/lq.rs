//! The plateau linear-quadratic graphon game.
//!
//! Every agent has utility
//!
//! ```text
//!            ⎧ −a²/2 + λea               a < λe
//! u(a, e) =  ⎨ λ²e²/2                    λe ≤ a ≤ λe + 1
//!            ⎩ −(a−1)²/2 + λe(a−1)       a > λe + 1
//! ```
//!
//! on `[0, L]`, so the best response to an aggregate `e` is the whole plateau
//! `[λe, λe+1] ∩ [0, L]`. When `λ‖W‖∞ < 1` and `L` is large enough, every
//! source `g` with values in `[0, 1]` yields the equilibrium
//! `s_g = (I − λ𝕎)⁻¹ g = g + λ Γ g`, and distinct sources yield distinct
//! equilibria.

use crate::error::{Error, Result};
use crate::games::{GraphonGame, RegretReport};
use crate::graphon::{apply_kernel, step_approximation, Graphon};
use crate::grid::StepProfile;
use crate::optimize::Interval;
use crate::resolvent::{check_contraction, resolvent_of_step, solve_second_kind};
use crate::utility::{AgentUtility, UtilityFamily, UtilitySpec};

pub fn plateau_utility(a: f64, e: f64, lambda: f64) -> f64 {
    let le = lambda * e;
    if a < le {
        -0.5 * a * a + le * a
    } else if a <= le + 1.0 {
        0.5 * le * le
    } else {
        -0.5 * (a - 1.0).powi(2) + le * (a - 1.0)
    }
}

pub fn plateau_best_response(e: f64, lambda: f64, cap: f64) -> Interval {
    let le = lambda * e;
    if le + 1.0 < 0.0 {
        Interval::point(0.0)
    } else if cap < le {
        Interval::point(cap)
    } else {
        Interval::new(le.max(0.0), (le + 1.0).min(cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqParams {
    /// Network-effect strength `λ ≥ 0`.
    pub lambda: f64,
    /// Strategy cap `L > 0`.
    pub cap: f64,
}

impl LqParams {
    pub fn new(lambda: f64, cap: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} must be >= 0"
            )));
        }
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::InvalidParameter(format!("L = {cap} must be > 0")));
        }
        Ok(Self { lambda, cap })
    }

    /// Parameters of a game with plateau LQ utilities sharing one `λ`.
    pub fn from_game(game: &GraphonGame) -> Result<Self> {
        let utilities = game.utilities();
        let lambda = match utilities.param("lambda") {
            Some(l) if utilities.family() == UtilityFamily::LqPlateau => l,
            _ => {
                return Err(Error::InvalidParameter(
                    "game utilities are not lq_plateau".into(),
                ))
            }
        };
        if lambda.min() != lambda.max() {
            return Err(Error::InvalidParameter(
                "lambda differs between agents".into(),
            ));
        }
        Self::new(lambda.get(0), game.cap())
    }

    pub fn agent(&self) -> AgentUtility {
        AgentUtility::LqPlateau {
            lambda: self.lambda,
        }
    }

    /// Smallest `L` satisfying both `1/(1−λ‖W‖∞) ≤ L` and
    /// `λ/(1−λ‖W‖∞) + 1 ≤ L`.
    pub fn min_admissible_cap(&self, sup_norm: f64) -> f64 {
        let slack = 1.0 - self.lambda * sup_norm;
        (1.0 / slack).max(self.lambda / slack + 1.0)
    }

    /// Contraction and cap conditions for the resolvent construction.
    pub fn check_admissible(&self, sup_norm: f64) -> Result<()> {
        check_contraction(self.lambda, sup_norm)?;
        let slack = 1.0 - self.lambda * sup_norm;
        let bounds = [
            ("1/(1 - lambda*||W||)", 1.0 / slack),
            ("lambda/(1 - lambda*||W||) + 1", self.lambda / slack + 1.0),
        ];
        for (bound, value) in bounds {
            if self.cap < value {
                return Err(Error::CapTooSmall {
                    cap: self.cap,
                    bound,
                    required: self.min_admissible_cap(sup_norm),
                });
            }
        }
        Ok(())
    }
}

pub fn lq_utility(a: f64, e: f64, params: &LqParams) -> f64 {
    plateau_utility(a, e, params.lambda)
}

pub fn lq_best_response(e: f64, params: &LqParams) -> Interval {
    plateau_best_response(e, params.lambda, params.cap)
}

/// A source function `g` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFunction(StepProfile);

impl SourceFunction {
    pub fn new(g: StepProfile) -> Result<Self> {
        g.check_range(0.0, 1.0)?;
        Ok(Self(g))
    }

    pub fn profile(&self) -> &StepProfile {
        &self.0
    }
}

/// The constructed equilibrium with its numerical provenance.
#[derive(Debug, Clone)]
pub struct LqEquilibrium {
    pub profile: StepProfile,
    pub truncation_order: usize,
    pub tail_bound: f64,
    /// Sup-norm gap between the resolvent route and the direct linear solve.
    pub cross_check_gap: f64,
    pub sup_norm: f64,
}

/// `s_g = g + λ Γ g`, where `Γ` is the truncated resolvent kernel at the
/// resolution of `g`.
pub fn equilibrium_from_source(
    w: &Graphon,
    params: &LqParams,
    g: &SourceFunction,
    tol: f64,
) -> Result<StepProfile> {
    Ok(construct_equilibrium(w, params, g, tol)?.profile)
}

/// As [`equilibrium_from_source`], also solving `(I − λW̄/N) s = g` directly
/// and requiring the two to agree within `10·tol`.
pub fn construct_equilibrium(
    w: &Graphon,
    params: &LqParams,
    g: &SourceFunction,
    tol: f64,
) -> Result<LqEquilibrium> {
    let sup_norm = w.sup_norm();
    params.check_admissible(sup_norm)?;
    let g = g.profile();
    let wbar = step_approximation(w, g.len())?;
    // With ‖g‖∞ ≤ 1, a kernel error δ moves s by at most λδ and the residual
    // of the second-kind equation by at most λ(1 + λ‖W‖∞)δ.
    let amplification = (params.lambda * (1.0 + params.lambda * sup_norm)).max(1.0);
    let kernel = resolvent_of_step(&wbar, sup_norm, params.lambda, tol / amplification)?;
    let gamma_g = apply_kernel(&kernel.gamma, g.values());
    let profile = StepProfile::new(
        g.values()
            .iter()
            .zip(&gamma_g)
            .map(|(gi, ci)| gi + params.lambda * ci)
            .collect(),
    )?;

    let direct = solve_second_kind(&wbar, params.lambda, g)?;
    let gap = sup_distance(&profile, &direct);
    if !(gap <= 10.0 * tol) {
        return Err(Error::CrossCheck {
            gap,
            allowed: 10.0 * tol,
        });
    }

    let upper = 1.0 / (1.0 - params.lambda * sup_norm) + 10.0 * tol;
    if profile.min() < -10.0 * tol || profile.max() > upper {
        return Err(Error::Certification(format!(
            "s_g spans [{}, {}], outside [0, {upper}]",
            profile.min(),
            profile.max()
        )));
    }

    Ok(LqEquilibrium {
        profile,
        truncation_order: kernel.truncation_order,
        tail_bound: kernel.tail_bound,
        cross_check_gap: gap,
        sup_norm,
    })
}

fn sup_distance(a: &StepProfile, b: &StepProfile) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    /// `s(t) ∈ [0, L]`.
    StrategyInInterval,
    /// `0 ≤ λe(t) ≤ λe(t) + 1 ≤ L`.
    AggregateFitsCap,
    /// `s(t) ∈ [λe(t), λe(t) + 1]`.
    StrategyOnPlateau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentViolation {
    pub cell: usize,
    pub relation: Containment,
    pub strategy: f64,
    pub aggregate: f64,
}

#[derive(Debug, Clone)]
pub struct LqCertificate {
    pub aggregate: StepProfile,
    /// Absent when some strategy lies outside `[0, L]`, where regret is
    /// undefined.
    pub report: Option<RegretReport>,
    pub violations: Vec<ContainmentViolation>,
    pub tolerance: f64,
    pub certified: bool,
}

impl LqCertificate {
    pub fn epsilon_star(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.epsilon_star)
    }
}

/// Checks the three equilibrium containments cellwise and computes the regret
/// report. Certified when no containment fails by more than `tol` and
/// `ε* ≤ tol`.
pub fn verify_equilibrium(
    w: &Graphon,
    params: &LqParams,
    s: &StepProfile,
    tol: f64,
) -> Result<LqCertificate> {
    let grid = s.grid();
    let game = GraphonGame::new(
        w.clone(),
        UtilitySpec::lq_plateau(params.lambda, grid)?,
        params.cap,
        grid,
    )?;
    let aggregate = StepProfile::new(apply_kernel(game.kernel().matrix(), s.values()))?;
    let (lambda, cap) = (params.lambda, params.cap);

    let mut violations = Vec::new();
    for i in 0..s.len() {
        let (si, ei) = (s[i], aggregate[i]);
        let le = lambda * ei;
        let mut flag = |relation| {
            violations.push(ContainmentViolation {
                cell: i,
                relation,
                strategy: si,
                aggregate: ei,
            })
        };
        if si < -tol || si > cap + tol {
            flag(Containment::StrategyInInterval);
        }
        if le < -tol || le + 1.0 > cap + tol {
            flag(Containment::AggregateFitsCap);
        }
        if si < le - tol || si > le + 1.0 + tol {
            flag(Containment::StrategyOnPlateau);
        }
    }

    let feasible = s.check_range(0.0, cap).is_ok();
    let report = if feasible {
        Some(game.regret_profile(s)?)
    } else {
        None
    };
    let certified = violations.is_empty() && report.as_ref().is_some_and(|r| r.epsilon_star <= tol);
    Ok(LqCertificate {
        aggregate,
        report,
        violations,
        tolerance: tol,
        certified,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionCheck {
    /// `‖s_{g1} − s_{g2}‖₁`.
    pub distance: f64,
    /// `‖g1 − g2‖₁`.
    pub source_distance: f64,
    /// `‖g1 − g2‖₁ / (1 + λ‖W‖∞)`.
    pub lower_bound: f64,
    pub holds: bool,
}

/// Builds both equilibria and checks
/// `‖s_{g1} − s_{g2}‖₁ ≥ ‖g1 − g2‖₁ / (1 + λ‖W‖∞) − slack`.
///
/// The bound follows from `g = (I − λ𝕎) s_g` and `‖𝕎‖_{L¹→L¹} ≤ ‖W‖∞`.
pub fn injection_check(
    w: &Graphon,
    params: &LqParams,
    g1: &SourceFunction,
    g2: &SourceFunction,
    tol: f64,
) -> Result<InjectionCheck> {
    let s1 = equilibrium_from_source(w, params, g1, tol)?;
    let s2 = equilibrium_from_source(w, params, g2, tol)?;
    if s1.len() != s2.len() {
        return Err(Error::IncompatibleGrids {
            left: s1.len(),
            right: s2.len(),
            max_cells: s1.len().max(s2.len()),
        });
    }
    let l1 = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    };
    let distance = l1(s1.values(), s2.values());
    let source_distance = l1(g1.profile().values(), g2.profile().values());
    let lower_bound = source_distance / (1.0 + params.lambda * w.sup_norm());
    let slack = 10.0 * tol;
    Ok(InjectionCheck {
        distance,
        source_distance,
        lower_bound,
        holds: distance >= lower_bound - slack,
    })
}
