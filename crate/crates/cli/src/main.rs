mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetsync::pipeline::{self, ComparisonRow, DesignReport, GainsFile, LearnReport};
use hetsync::scenario::load_scenario;
use hetsync::{Error, Gains64, Result, Scenario};

/// Design, learn and simulate optimal output synchronization protocols for
/// leader-follower multi-agent systems.
#[derive(Debug, Parser)]
#[command(name = "hetsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file, or the name of a bundled scenario (`paper_six_agents`)
    scenario: PathBuf,

    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Draw the leader's initial state from this seed instead of `leader.w0`
    #[arg(long)]
    seed: Option<u64>,

    /// Also write an SVG chart of |e_i(t)|
    #[arg(long)]
    svg: bool,

    /// Log progress to stderr
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GainKind {
    Initial,
    Optimal,
}

impl GainKind {
    fn label(self) -> &'static str {
        match self {
            GainKind::Initial => "initial",
            GainKind::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the standing assumptions on plants, leader and graph
    Validate(Common),
    /// Solve regulator equations, build compensator, transform and initial gains
    Design(Common),
    /// Run policy iteration for every agent and write the optimal gains
    Learn(Common),
    /// Simulate the closed-loop network and write a trajectory CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "initial")]
        gains: GainKind,
        /// Use gains from a file written by `design` or `learn`
        #[arg(long)]
        gains_file: Option<PathBuf>,
    },
    /// Compare costs and tracking errors of initial and optimal gains
    Compare(Common),
}

fn prepare(common: &Common) -> Result<Scenario> {
    let level = if common.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    let mut scn = load_scenario(&common.scenario)?;
    if let Some(seed) = common.seed {
        scn.reseed(seed);
    }
    if let Some(seed) = scn.seed {
        log::info!("w0 drawn from seed {seed}: {:?}", scn.leader.w0.as_slice());
    }
    std::fs::create_dir_all(&common.out).map_err(|source| Error::Io { path: common.out.display().to_string(), source })?;
    Ok(scn)
}

fn read_gains(path: &Path, scn: &Scenario) -> Result<Vec<Gains64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let file: GainsFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    file.to_gain_sets(scn)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(c) => {
            let scn = prepare(&c)?;
            let report = pipeline::validate(&scn)?;
            output::write_json(&c.out.join("validation.json"), &report)?;
            for a in &report.agents {
                println!("{:<12} {}", a.name, if a.passed() { "ok" } else { "FAILED" });
            }
            for d in &report.diagnostics {
                println!("  {d}");
            }
            if !report.passed() {
                return Err(Error::InvalidInput("assumption check failed".into()));
            }
            println!("all assumptions hold");
        }
        Command::Design(c) => {
            let scn = prepare(&c)?;
            let d = pipeline::design(&scn)?;
            let report = DesignReport::new(&d);
            output::write_json(&c.out.join("design.json"), &report)?;
            output::write_json(&c.out.join("gains_initial.json"), &report.initial_gains)?;
            for a in &report.agents {
                println!("{:<12} alpha {:>8.4}  regulator residual {:.2e}", a.name, a.alpha, a.regulator_residual);
            }
        }
        Command::Learn(c) => {
            let scn = prepare(&c)?;
            let d = pipeline::design(&scn)?;
            let l = pipeline::learn(&scn, &d)?;
            let report = LearnReport::new(&d, &l);
            output::write_json(&c.out.join("learn.json"), &report)?;
            output::write_json(&c.out.join("gains_optimal.json"), &report.optimal_gains)?;
            for a in &report.agents {
                println!(
                    "{:<12} converged {}  iterations {:>3}  ARE residual {:.2e}",
                    a.name, a.converged, a.iterations, a.are_residual
                );
            }
        }
        Command::Simulate { common: c, gains, gains_file } => {
            let scn = prepare(&c)?;
            let d = pipeline::design(&scn)?;
            let set = match (&gains_file, gains) {
                (Some(path), _) => read_gains(path, &scn)?,
                (None, GainKind::Initial) => d.agents.iter().map(|a| a.initial.clone()).collect(),
                (None, GainKind::Optimal) => pipeline::learn(&scn, &d)?.optimal,
            };
            let traj = pipeline::simulate(&scn, &d, &set)?;
            let label = if gains_file.is_some() { "file" } else { gains.label() };
            let csv_path = c.out.join(format!("trajectory_{label}.csv"));
            output::write_trajectory_csv(&csv_path, &traj)?;
            if c.svg {
                output::write_error_svg(&c.out.join(format!("errors_{label}.svg")), &traj, &format!("{label} gains"))?;
            }
            for m in hetsync::simulator::tracking_metrics(&traj) {
                let settle = m.settle_time.map_or("not settled".to_string(), |t| format!("{t:.3} s"));
                println!("{:<12} tail error {:.3e}  settle {settle}", m.name, m.tail_error);
            }
            println!("wrote {}", csv_path.display());
        }
        Command::Compare(c) => {
            let scn = prepare(&c)?;
            let d = pipeline::design(&scn)?;
            let l = pipeline::learn(&scn, &d)?;
            let rows = pipeline::compare(&scn, &d, &l)?;
            output::write_json(&c.out.join("compare.json"), &rows)?;
            print_comparison(&rows);
            if c.svg {
                let initial: Vec<_> = d.agents.iter().map(|a| a.initial.clone()).collect();
                for (label, set) in [("initial", initial), ("optimal", l.optimal.clone())] {
                    let traj = pipeline::simulate(&scn, &d, &set)?;
                    output::write_error_svg(&c.out.join(format!("errors_{label}.svg")), &traj, &format!("{label} gains"))?;
                }
            }
        }
    }
    Ok(())
}

fn print_comparison(rows: &[ComparisonRow]) {
    println!("{:<12} {:>12} {:>12} {:>12} {:>12}", "agent", "J initial", "J optimal", "tail init", "tail opt");
    for r in rows {
        println!(
            "{:<12} {:>12.6} {:>12.6} {:>12.3e} {:>12.3e}",
            r.name, r.j_initial, r.j_optimal, r.tail_initial, r.tail_optimal
        );
        for w in &r.warnings {
            println!("  warning: {w}");
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
