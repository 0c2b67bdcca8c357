use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cubeconf::harness::{parse_bounds, run_experiment, run_oracle_check, sweep, ExperimentOutput, SweepSpec};
use cubeconf::{generate_scenario, plan, LearningParams, Mode, Scenario, ScenarioKind};

/// Lattice cube reconfiguration: learning runs, planning and exact checks.
#[derive(Parser)]
#[command(name = "cubeconf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learning rule until the target is reached or the budget runs out.
    Run(RunArgs),
    /// Build a deterministic motion plan and print it as JSON.
    Plan(PlanArgs),
    /// Compare the exact stationary distribution with the Gibbs distribution.
    Oracle(OracleArgs),
    /// Run a grid of generated scenarios and write a summary CSV.
    Sweep(SweepArgs),
    /// Generate a random scenario file.
    Gen(GenArgs),
}

#[derive(Args)]
struct Source {
    /// Scenario JSON file.
    #[arg(long, conflicts_with_all = ["kind", "agents"])]
    scenario: Option<PathBuf>,
    /// Generate a scenario of this kind (2Dto2D, 2Dto3D, 3Dto2D, 3Dto3D).
    #[arg(long, requires = "agents")]
    kind: Option<ScenarioKind>,
    #[arg(long, requires = "kind")]
    agents: Option<usize>,
}

impl Source {
    fn load(&self, seed: Option<u64>) -> Result<Scenario> {
        match (&self.scenario, self.kind, self.agents) {
            (Some(path), _, _) => {
                Scenario::load(path).with_context(|| format!("loading {}", path.display()))
            }
            (None, Some(kind), Some(n)) => Ok(generate_scenario(kind, n, seed.unwrap_or(0))?),
            _ => bail!("give either --scenario PATH or --kind K --agents N"),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Directory for trace.json, curve.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep every step in the trace, not only accepted moves.
    #[arg(long)]
    full_trace: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    source: Source,
    /// Generator seed when using --kind.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the plan here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    agents: usize,
    /// WxH or WxDxL.
    #[arg(long)]
    bounds: String,
    #[arg(long)]
    tau: f64,
    /// Also write states, matrix and both distributions as JSON.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "2Dto2D,2Dto3D,3Dto2D,3Dto3D")]
    kinds: Vec<ScenarioKind>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
    sizes: Vec<usize>,
    /// Seeds 1..=N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0.001)]
    tau: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: u64,
    #[arg(long, default_value = "global")]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    kind: ScenarioKind,
    #[arg(long)]
    agents: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let scenario = args.source.load(args.seed)?;
    let base = *scenario.params();
    let params = LearningParams {
        tau: args.tau.unwrap_or(base.tau),
        seed: args.seed.unwrap_or(base.seed),
        max_steps: args.max_steps.unwrap_or(base.max_steps),
        mode: args.mode.unwrap_or(base.mode),
    };
    params.validate()?;
    let output = ExperimentOutput { dir: args.out, full_trace: args.full_trace };
    let summary = run_experiment(&scenario, &params, &output)?;
    let brief = serde_json::json!({
        "scenario": scenario.name(),
        "converged": summary.converged,
        "steps_to_converge": summary.steps_to_converge,
        "steps": summary.steps,
        "final_potential": summary.final_potential,
    });
    println!("{}", serde_json::to_string_pretty(&brief)?);
    Ok(if summary.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_plan(args: PlanArgs) -> Result<ExitCode> {
    let scenario = args.source.load(args.seed)?;
    let p = plan(scenario.initial(), scenario.target(), scenario.bounds())?;
    p.validate(scenario.initial(), scenario.target(), scenario.bounds())?;
    let text = format!("{}\n", serde_json::to_string_pretty(&p.to_json())?);
    write_or_print(args.out.as_ref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode> {
    let bounds = parse_bounds(&args.bounds)?;
    let run = run_oracle_check(args.agents, &bounds, args.tau)?;
    if let Some(path) = &args.dump {
        let dump = run.dump()?;
        fs::write(path, serde_json::to_string(&dump)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&run.report)?);
    Ok(if run.report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let spec = SweepSpec {
        kinds: args.kinds,
        sizes: args.sizes,
        seeds: (1..=args.seeds).collect(),
        tau: args.tau,
        max_steps: args.max_steps,
        mode: args.mode,
    };
    let rows = sweep(&spec, Some(&args.out))?;
    let converged = rows.iter().filter(|r| r.converged).count();
    eprintln!("{converged}/{} cells converged; summary in {}", rows.len(), args.out.join("sweep.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let scenario = generate_scenario(args.kind, args.agents, args.seed)?;
    write_or_print(args.out.as_ref(), &scenario.to_json_string())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
