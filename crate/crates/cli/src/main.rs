use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use objsearch::config::{Backend, Config};
use objsearch::planner::Outcome;
use objsearch::sim::{
    convergence_fixture, make_proposer, run_batch_to_dir, run_convergence, run_episode_in_dir, stub_proposer, Manifest,
    Scenario, SimError,
};

/// Goal-directed object search simulator.
#[derive(Parser, Debug)]
#[command(name = "objsearch", version, arg_required_else_help = true)]
struct Cli {
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    show_config: bool,

    /// Configuration file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one episode. Exit 0 when found, 2 when exhausted, 1 on error.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Memory directory from an earlier run (required for experienced kinds).
        #[arg(long)]
        memory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a manifest of scenarios over seeds and write metrics.
    Batch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the proposer convergence harness on a fixed observation.
    Converge {
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long, value_enum, default_value_t = ConvergeBackend::Stub)]
        backend: ConvergeBackend,
        /// Learning blend of the stub proposer.
        #[arg(long, default_value_t = 0.5)]
        blend: f64,
        /// Fixture file for the replay backend.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario file and report.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ConvergeBackend {
    Stub,
    Remote,
    Replay,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn cmd_run(config: &Config, scenario: &Path, memory: Option<&Path>, out: &Path) -> Result<ExitCode> {
    let resolved = Scenario::load(scenario)?.resolve(config)?;
    let output = run_episode_in_dir(&resolved, memory, out)?;
    let t = &output.trace.totals;
    println!(
        "outcome {:?}: path {:.2} m, {} steps, {} proposer calls",
        t.outcome, t.path_length_m, t.steps, t.proposer_calls
    );
    if let Some(msg) = &t.message {
        println!("  {msg}");
    }
    println!("trace written to {}", out.join("trace.jsonl").display());
    Ok(match t.outcome {
        Outcome::Found => ExitCode::SUCCESS,
        Outcome::Exhausted => ExitCode::from(2),
        Outcome::Error => ExitCode::FAILURE,
    })
}

fn cmd_batch(config: &Config, manifest: &Path, out: &Path, jobs: Option<usize>) -> Result<ExitCode> {
    let (m, scenarios) = Manifest::load(manifest)?;
    let report = run_batch_to_dir(&m, &scenarios, config, jobs, out)?;
    println!("{} episodes", report.rows.len());
    for s in &report.summary {
        println!(
            "{:<20} n={:<3} found={:<3} errors={:<3} path {}",
            s.kind.as_str(),
            s.episodes,
            s.found,
            s.errors,
            match (s.path_length_mean, s.path_length_std) {
                (Some(m), Some(sd)) => format!("{m:.2} ± {sd:.2} m"),
                _ => "n/a".into(),
            }
        );
    }
    println!("metrics written to {}", out.join("metrics.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_converge(
    config: &Config,
    iterations: usize,
    backend: ConvergeBackend,
    blend: f64,
    fixture: Option<PathBuf>,
    out: &Path,
) -> Result<ExitCode> {
    if iterations == 0 {
        bail!("--iterations must be at least 1");
    }
    let setup = convergence_fixture(config.criteria);
    let mut proposer = match backend {
        ConvergeBackend::Stub => Box::new(stub_proposer(config.proposer.associations.clone(), blend)),
        ConvergeBackend::Remote => {
            let mut pc = config.proposer.clone();
            pc.backend = Backend::Remote;
            make_proposer(&pc)?
        }
        ConvergeBackend::Replay => {
            let mut pc = config.proposer.clone();
            pc.backend = Backend::Replay;
            pc.fixture = fixture.or(pc.fixture);
            if pc.fixture.is_none() {
                bail!("the replay backend needs --fixture <file>");
            }
            make_proposer(&pc)?
        }
    };
    let report = run_convergence(proposer.as_mut(), &setup, iterations)?;
    report.write_to_dir(out)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |s| format!("{s:.4}"));
    println!(
        "first compliant iteration: {}",
        report
            .first_compliant_iteration
            .map_or("none".to_string(), |i| i.to_string())
    );
    println!(
        "similarity: initial {}, final {}",
        fmt(report.initial_similarity),
        fmt(report.final_similarity)
    );
    println!("curve written to {}", out.join("similarity.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(config: &Config, scenario: &Path) -> Result<ExitCode> {
    let resolved = Scenario::load(scenario)?.resolve(config)?;
    let geom = resolved.truth.geometry();
    println!("{}: ok", scenario.display());
    println!(
        "  map {} m × {} m, {} cells at {} m",
        geom.width_m,
        geom.height_m,
        geom.len(),
        geom.cell_size_m
    );
    println!(
        "  target {:?}, kind {}, start ({:.2}, {:.2})",
        resolved.scenario.target_label,
        resolved.scenario.episode_kind.as_str(),
        resolved.start.position.x,
        resolved.start.position.y
    );
    if !resolved
        .truth
        .objects()
        .iter()
        .any(|o| o.label == resolved.scenario.target_label)
    {
        println!("  note: no object carries the target label; runs will end exhausted");
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let config = load_config(cli.config.as_deref()).context("loading configuration")?;
    if cli.show_config {
        print!("{}", config.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    match cli.command {
        None => bail!("no command given; see --help"),
        Some(Command::Run { scenario, memory, out }) => cmd_run(&config, &scenario, memory.as_deref(), &out),
        Some(Command::Batch { manifest, out, jobs }) => cmd_batch(&config, &manifest, &out, jobs),
        Some(Command::Converge {
            iterations,
            backend,
            blend,
            fixture,
            out,
        }) => cmd_converge(&config, iterations, backend, blend, fixture, &out),
        Some(Command::Validate { scenario }) => cmd_validate(&config, &scenario),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<SimError>(), Some(SimError::MemoryRequired)) {
                eprintln!("hint: pass --memory <dir> pointing at the memory/ folder of an earlier run");
            }
            ExitCode::FAILURE
        }
    }
}
