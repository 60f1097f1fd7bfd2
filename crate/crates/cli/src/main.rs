use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use graphon_games::grid::GridSpec;
use graphon_games::io::{
    load_game, load_graphon, load_profile, parse_profile_arg, save_profile, write_regret_report,
};
use graphon_games::lab::{run_characterization_suite, write_outputs, ExperimentPlan};
use graphon_games::lq::{construct_equilibrium, verify_equilibrium, LqParams, SourceFunction};
use graphon_games::solver::{solve, SolverConfig};
use graphon_games::RegretReport;

/// Equilibria of graphon games and their network approximations.
#[derive(Parser)]
#[command(name = "graphon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plateau linear-quadratic games.
    #[command(subcommand)]
    Lq(LqCommand),
    /// Damped best-response iteration on a game descriptor.
    Solve(SolveArgs),
    /// Convergence experiments.
    #[command(subcommand)]
    Lab(LabCommand),
}

#[derive(Subcommand)]
enum LqCommand {
    /// Builds the equilibrium generated by a source profile.
    Solve(LqSolveArgs),
    /// Certifies a profile as an equilibrium of an LQ game.
    Verify(LqVerifyArgs),
}

#[derive(Args)]
struct LqSolveArgs {
    /// Graphon descriptor (JSON) or step-graphon matrix (CSV).
    #[arg(long)]
    graphon: PathBuf,
    #[arg(long)]
    lambda: f64,
    /// Strategy cap.
    #[arg(long = "L")]
    cap: f64,
    /// Source profile: a CSV/JSON file or `const:<v>`.
    #[arg(long, default_value = "const:1")]
    g: String,
    /// Grid resolution.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LqVerifyArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Optional regret report CSV.
    #[arg(long)]
    regrets: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    game: PathBuf,
    /// Starting profile: a CSV/JSON file or `const:<v>`.
    #[arg(long, default_value = "const:0")]
    init: String,
    /// Solver configuration JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration CSV of step sizes and epsilon*.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Optional regret report CSV of the final profile.
    #[arg(long)]
    regrets: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LabCommand {
    /// Runs both convergence experiments on every sequence of a plan.
    Run(LabRunArgs),
}

#[derive(Args)]
struct LabRunArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Output directory; overrides the plan's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_summary(report: &RegretReport) {
    println!("{}", report.summary());
}

fn save_regrets(path: Option<&Path>, report: &RegretReport) -> Result<()> {
    if let Some(path) = path {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_regret_report(file, report)?;
    }
    Ok(())
}

fn lq_solve(args: &LqSolveArgs) -> Result<ExitCode> {
    let w = load_graphon(&args.graphon)
        .with_context(|| format!("loading {}", args.graphon.display()))?;
    let params = LqParams::new(args.lambda, args.cap)?;
    let g = parse_profile_arg(&args.g, GridSpec::new(args.n)?)?;
    let eq = construct_equilibrium(&w, &params, &SourceFunction::new(g)?, args.tol)?;
    save_profile(&args.out, &eq.profile)?;
    println!(
        "truncation_order={} tail_bound={:e} cross_check_gap={:e}",
        eq.truncation_order, eq.tail_bound, eq.cross_check_gap
    );
    Ok(ExitCode::SUCCESS)
}

fn lq_verify(args: &LqVerifyArgs) -> Result<ExitCode> {
    let game = load_game(&args.game).with_context(|| format!("loading {}", args.game.display()))?;
    let params = LqParams::from_game(&game)?;
    let s = load_profile(&args.profile)?;
    let cert = verify_equilibrium(game.graphon(), &params, &s, args.tol)?;
    for v in &cert.violations {
        println!(
            "violation cell_index={} relation={:?} strategy={} aggregate={}",
            v.cell + 1,
            v.relation,
            v.strategy,
            v.aggregate
        );
    }
    if let Some(report) = &cert.report {
        print_summary(report);
        save_regrets(args.regrets.as_deref(), report)?;
    }
    println!("certified={}", cert.certified);
    Ok(if cert.certified {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn solve_game(args: &SolveArgs) -> Result<ExitCode> {
    let game = load_game(&args.game).with_context(|| format!("loading {}", args.game.display()))?;
    let config: SolverConfig = match &args.config {
        Some(path) => serde_json::from_reader(
            File::open(path).with_context(|| format!("opening {}", path.display()))?,
        )?,
        None => SolverConfig::default(),
    };
    let f0 = parse_profile_arg(&args.init, game.grid())?;
    let (f, trace) = solve(&game, &f0, &config)?;
    save_profile(&args.out, &f)?;
    if let Some(path) = &args.trace {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "iteration,epsilon_star,step_size")?;
        for (k, eps) in trace.epsilon_history.iter().enumerate() {
            match trace.step_sizes.get(k) {
                Some(step) => writeln!(w, "{k},{eps},{step}")?,
                None => writeln!(w, "{k},{eps},")?,
            }
        }
    }
    save_regrets(args.regrets.as_deref(), &trace.final_report)?;
    println!(
        "converged={} iterations={}",
        trace.converged, trace.iterations
    );
    print_summary(&trace.final_report);
    Ok(ExitCode::SUCCESS)
}

fn lab_run(args: &LabRunArgs) -> Result<ExitCode> {
    let plan: ExperimentPlan = serde_json::from_reader(
        File::open(&args.plan).with_context(|| format!("opening {}", args.plan.display()))?,
    )?;
    let Some(out) = args.out.clone().or_else(|| plan.output_dir.clone()) else {
        bail!("no output directory: pass --out or set output_dir in the plan");
    };
    let report = run_characterization_suite(&plan)?;
    write_outputs(&report, &out)?;
    for t in &report.thresholds {
        println!(
            "{} {} = {:e} (<= {:e})",
            if t.passed { "PASS" } else { "FAIL" },
            t.name,
            t.value,
            t.threshold
        );
    }
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Lq(LqCommand::Solve(args)) => lq_solve(args),
        Command::Lq(LqCommand::Verify(args)) => lq_verify(args),
        Command::Solve(args) => solve_game(args),
        Command::Lab(LabCommand::Run(args)) => lab_run(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
