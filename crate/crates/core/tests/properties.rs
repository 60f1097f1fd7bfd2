use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphon_games::games::{embed_strategy, epsilon_star, is_epsilon_nash_regrets, NetworkGame};
use graphon_games::graphon::{
    iterated_kernel, l1_distance, local_aggregate, step_approximation, Graphon, StepGraphon,
};
use graphon_games::grid::{GridSpec, StepProfile};
use graphon_games::lq::{
    construct_equilibrium, injection_check, lq_best_response, lq_utility, verify_equilibrium,
    LqParams, SourceFunction,
};
use graphon_games::optimize::golden_section_max;
use graphon_games::resolvent::{neumann_tail_bound, resolvent_of_step};
use graphon_games::solver::{best_response_map, solve, SelectionRule, SolverConfig};
use graphon_games::utility::{AgentUtility, UtilitySpec};
use graphon_games::GraphonGame;

fn step_graphon(max_n: usize) -> impl Strategy<Value = StepGraphon> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0..=1.0f64, n * n)
            .prop_map(move |v| StepGraphon::from_row_major(n, &v).unwrap())
    })
}

fn graphon_and_profile(max_n: usize, hi: f64) -> impl Strategy<Value = (StepGraphon, StepProfile)> {
    step_graphon(max_n).prop_flat_map(move |w| {
        let n = w.n();
        (
            Just(w),
            prop::collection::vec(0.0..=hi, n).prop_map(|v| StepProfile::new(v).unwrap()),
        )
    })
}

/// `λ ∈ [0, scale/‖W‖∞]`, capped when the graphon is empty.
fn lambda_for(w: &StepGraphon, fraction: f64, scale: f64) -> f64 {
    fraction * scale / w.max_entry().max(1e-3)
}

fn admissible(lambda: f64, sup_norm: f64) -> LqParams {
    let cap = LqParams::new(lambda, 1.0)
        .unwrap()
        .min_admissible_cap(sup_norm);
    LqParams::new(lambda, cap).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn step_aggregate_matches_direct_sum((w, f) in graphon_and_profile(24, 5.0)) {
        let e = local_aggregate(&Graphon::Step(w.clone()), &f).unwrap();
        let n = w.n();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += w.get(i, j) * f[j];
            }
            prop_assert_eq!(e[i].to_bits(), (acc / n as f64).to_bits());
        }
    }

    #[test]
    fn iterated_kernels_stay_within_powers_of_the_sup(w in step_graphon(12), k in 1usize..6) {
        let sup = w.max_entry();
        let wk = iterated_kernel(&Graphon::Step(w.clone()), k, w.grid()).unwrap();
        let bound = sup.powi(k as i32) * (1.0 + 1e-12);
        prop_assert!(wk.matrix().iter().all(|&v| (0.0..=bound).contains(&v)));
    }

    #[test]
    fn resolvent_entries_respect_the_series_bound(w in step_graphon(16), fraction in 0.0..=0.9f64) {
        let lambda = lambda_for(&w, fraction, 1.0);
        let tol = 1e-10;
        let kernel = resolvent_of_step(&w, w.max_entry(), lambda, tol).unwrap();
        let bound = if lambda > 0.0 {
            (1.0 / (1.0 - lambda * w.max_entry()) - 1.0) / lambda
        } else {
            w.max_entry()
        };
        prop_assert!((kernel.entry_bound() - bound).abs() <= 1e-12 * bound.max(1.0));
        prop_assert!(kernel.gamma.iter().all(|&v| v >= 0.0 && v <= bound + tol));
    }

    #[test]
    fn resolvent_satisfies_its_own_equation(w in step_graphon(16), fraction in 0.0..=0.9f64) {
        // Γ − W̄ − λ W̄Γ/N is the first omitted series term
        let lambda = lambda_for(&w, fraction, 1.0);
        let kernel = resolvent_of_step(&w, w.max_entry(), lambda, 1e-9).unwrap();
        let n = w.n() as f64;
        let next = w.matrix() + (w.matrix() * &kernel.gamma) * (lambda / n);
        let gap = (next - &kernel.gamma).abs().max();
        let tail = neumann_tail_bound(lambda, w.max_entry(), kernel.truncation_order);
        prop_assert!(gap <= tail + 1e-12, "gap {} tail {}", gap, tail);
    }

    #[test]
    fn equilibrium_is_a_fixed_point((w, g) in graphon_and_profile(32, 1.0), fraction in 0.0..=0.95f64) {
        let lambda = lambda_for(&w, fraction, 1.0);
        let sup = w.max_entry();
        let tol = 1e-9;
        let params = admissible(lambda, sup);
        let graphon = Graphon::Step(w);
        let eq = construct_equilibrium(&graphon, &params, &SourceFunction::new(g.clone()).unwrap(), tol).unwrap();
        let e = local_aggregate(&graphon, &eq.profile).unwrap();
        for i in 0..g.len() {
            prop_assert!((eq.profile[i] - (lambda * e[i] + g[i])).abs() <= 10.0 * tol);
        }
        prop_assert!(eq.profile.max() <= 1.0 / (1.0 - lambda * sup) + 10.0 * tol);
        let cert = verify_equilibrium(&graphon, &params, &eq.profile, 1e-6).unwrap();
        prop_assert!(cert.certified, "{:?}", cert.violations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn plateau_utility_is_continuous_at_the_kinks(lambda in 0.0..3.0f64, e in 0.0..10.0f64) {
        let params = LqParams::new(lambda, 100.0).unwrap();
        for kink in [lambda * e, lambda * e + 1.0] {
            if kink > 0.0 {
                let below = f64::from_bits(kink.to_bits() - 1);
                let above = f64::from_bits(kink.to_bits() + 1);
                let at = lq_utility(kink, e, &params);
                prop_assert!((lq_utility(below, e, &params) - at).abs() <= 1e-12);
                prop_assert!((lq_utility(above, e, &params) - at).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn golden_section_lands_in_the_best_response(lambda in 0.0..2.0f64, e in 0.0..5.0f64, cap in 0.1..10.0f64) {
        let params = LqParams::new(lambda, cap).unwrap();
        let (a, _) = golden_section_max(|a| lq_utility(a, e, &params), 0.0, cap, 1e-10);
        prop_assert!(lq_best_response(e, &params).contains(a, 1e-6), "a = {} not in {:?}", a, lq_best_response(e, &params));
    }

    #[test]
    fn epsilon_star_is_tight(r in prop::collection::vec(0.0..=1.0f64, 1..=16)) {
        let eps = epsilon_star(&r).unwrap();
        prop_assert!(is_epsilon_nash_regrets(&r, eps));
        let n = r.len() as f64;
        let below = eps - 1.0 / n - 1e-9;
        if below >= 0.0 {
            prop_assert!(!is_epsilon_nash_regrets(&r, below));
        }
        if eps > 0.0 {
            prop_assert!(!is_epsilon_nash_regrets(&r, f64::from_bits(eps.to_bits() - 1)));
        }
    }

    #[test]
    fn epsilon_star_is_monotone_in_each_regret(
        r in prop::collection::vec(0.0..=1.0f64, 1..=16),
        pick in any::<prop::sample::Index>(),
        shrink in 0.0..=1.0f64,
    ) {
        let i = pick.index(r.len());
        let mut lower = r.clone();
        lower[i] *= shrink;
        prop_assert!(epsilon_star(&lower).unwrap() <= epsilon_star(&r).unwrap());
    }
}

fn utilities_strategy(n: usize) -> impl Strategy<Value = UtilitySpec> {
    let lq = prop::collection::vec(0.0..1.0f64, n).prop_map(|l| {
        UtilitySpec::from_agents(
            &l.into_iter()
                .map(|lambda| AgentUtility::LqPlateau { lambda })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    });
    let quadratic = prop::collection::vec((-1.0..3.0f64, -1.0..1.0f64), n).prop_map(|p| {
        UtilitySpec::from_agents(
            &p.into_iter()
                .map(|(bias, weight)| AgentUtility::Quadratic { bias, weight })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    });
    let log = prop::collection::vec((0.0..2.0f64, -0.5..0.5f64, 0.1..2.0f64), n).prop_map(|p| {
        UtilitySpec::from_agents(
            &p.into_iter()
                .map(|(scale, weight, cost)| AgentUtility::LogBenefit {
                    scale,
                    weight,
                    cost,
                })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    });
    prop_oneof![lq, quadratic, log]
}

fn network_game() -> impl Strategy<Value = (NetworkGame, Vec<f64>)> {
    (1usize..=32, 0.5..5.0f64).prop_flat_map(|(n, cap)| {
        (
            prop::collection::vec(0.0..=1.0f64, n * n),
            utilities_strategy(n),
            prop::collection::vec(0.0..=cap, n),
        )
            .prop_map(move |(a, u, s)| {
                (
                    NetworkGame::new(DMatrix::from_row_slice(n, n, &a), u, cap).unwrap(),
                    s,
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_regrets_equal_embedded_regrets((game, s) in network_game()) {
        let network = game.regrets(&s).unwrap();
        let embedded = game.embed();
        let f = embed_strategy(&s, embedded.strategy_interval()).unwrap();
        let graphon = embedded.regret_profile(&f).unwrap();
        prop_assert_eq!(network.aggregate.values(), graphon.aggregate.values());
        prop_assert_eq!(network.regrets.values(), graphon.regrets.values());
        prop_assert_eq!(network.epsilon_star.to_bits(), graphon.epsilon_star.to_bits());
    }

    #[test]
    fn selected_points_are_best_responses((game, s) in network_game(), rule in prop_oneof![
        Just(SelectionRule::NearestPoint),
        Just(SelectionRule::IntervalMidpoint),
        Just(SelectionRule::LowerEndpoint),
        Just(SelectionRule::UpperEndpoint),
    ]) {
        let embedded = game.embed();
        let f = StepProfile::new(s).unwrap();
        let br = best_response_map(&embedded, &f, rule).unwrap();
        prop_assert!(br.check_range(0.0, embedded.cap()).is_ok());
        // every selected action is optimal against the aggregate of f
        let e = embedded.aggregate(&f).unwrap();
        let report = graphon_games::RegretReport::compute(embedded.utilities(), embedded.cap(), br, e, 1e-8).unwrap();
        prop_assert!(report.max_regret() <= 1e-6, "{}", report.max_regret());
    }

    #[test]
    fn damped_iterates_stay_feasible((game, s) in network_game(), damping in 0.05..=1.0f64) {
        let embedded = game.embed();
        let cfg = SolverConfig { max_iters: 25, damping, ..SolverConfig::default() };
        let (f, trace) = solve(&embedded, &StepProfile::new(s).unwrap(), &cfg).unwrap();
        prop_assert!(f.check_range(0.0, embedded.cap()).is_ok());
        if trace.converged && trace.final_report.epsilon_star <= cfg.regret_target {
            prop_assert!(embedded.is_epsilon_nash(&f, cfg.regret_target).unwrap());
        }
    }
}

#[test]
fn step_approximation_error_of_the_product_graphon() {
    let mut last = f64::INFINITY;
    for n in [2, 4, 8, 16, 32, 64, 128, 256] {
        let err = l1_distance(
            &Graphon::Product,
            &step_approximation(&Graphon::Product, n).unwrap(),
            4,
        )
        .unwrap();
        assert!(err <= last, "n = {n}: {err} > {last}");
        last = err;
    }
    assert!(last <= 0.01, "{last}");
}

#[test]
fn step_approximation_error_is_monotone_for_analytic_families() {
    let families = [
        Graphon::Product,
        Graphon::separable_power(0.5).unwrap(),
        Graphon::separable_power(0.2).unwrap(),
        Graphon::separable_power(0.9).unwrap(),
        Graphon::constant(0.4).unwrap(),
    ];
    for w in &families {
        let errs: Vec<f64> = [8, 16, 32, 64, 128]
            .iter()
            .map(|&n| l1_distance(w, &step_approximation(w, n).unwrap(), 4).unwrap())
            .collect();
        assert!(errs.windows(2).all(|p| p[1] <= p[0]), "{w:?}: {errs:?}");
    }
}

#[test]
fn injection_bound_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(2..=32);
        let w = StepGraphon::new(DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>())).unwrap();
        let sup = w.max_entry();
        let params = admissible(rng.gen_range(0.0..0.9) / sup, sup);
        let g1 = StepProfile::new((0..n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let g2 = StepProfile::new((0..n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let check = injection_check(
            &Graphon::Step(w),
            &params,
            &SourceFunction::new(g1).unwrap(),
            &SourceFunction::new(g2).unwrap(),
            1e-10,
        )
        .unwrap();
        assert!(check.holds, "{check:?}");
    }
}

#[test]
fn solver_converges_in_the_contraction_regime() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = SolverConfig::default();
    for _ in 0..20 {
        let n = rng.gen_range(2..=48);
        let w = StepGraphon::new(DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>())).unwrap();
        let sup = w.max_entry();
        let params = admissible(rng.gen_range(0.0..=0.8) / sup, sup);
        let graphon = Graphon::Step(w);
        let grid = GridSpec::new(n).unwrap();
        let game = GraphonGame::new(
            graphon.clone(),
            UtilitySpec::lq_plateau(params.lambda, grid).unwrap(),
            params.cap,
            grid,
        )
        .unwrap();
        // regret grows quadratically above the plateau
        let from_cap = SolverConfig {
            regret_target: 1e-14,
            ..cfg
        };
        for (start, cfg) in [(0.0, cfg), (params.cap, from_cap)] {
            let (f, trace) = solve(&game, &StepProfile::constant(grid, start), &cfg).unwrap();
            assert!(
                trace.converged,
                "start {start}: {} iterations",
                trace.iterations
            );
            let cert = verify_equilibrium(&graphon, &params, &f, 1e-6).unwrap();
            assert!(cert.certified, "start {start}: {:?}", cert.violations);
        }
    }
}
