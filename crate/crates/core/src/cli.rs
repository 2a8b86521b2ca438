//! Command-line front end. Exit status: 0 on success, 1 when planning
//! fails, 2 on bad input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{self, BenchConfig, Template};
use crate::error::Error;
use crate::meter::Meter;
use crate::planner::{plan_loop, Method, Outcome, PlannerConfig, Transcript};
use crate::replay;
use crate::scenario::{LoadedScenario, Scenario};
use crate::sim::{self, Episode};
use crate::timing::TrajectoryRecord;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PLAN_FAILED: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rlp", version, about = "Receding-horizon loop planner for mobile manipulators")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Random seed; defaults to the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with `planner`, `sim` and `generator` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Planning method.
    #[arg(long, global = true, default_value = "rlp", value_parser = parse_method)]
    pub method: Method,
    /// Fall back to the baseline planner when a loop finds nothing.
    #[arg(long, global = true)]
    pub fallback: Option<Switch>,
    /// Worker threads (0 picks one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one planning cycle from the scenario start and print the result.
    Plan {
        scenario: PathBuf,
        /// Write the trajectory JSON here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Execute one closed-loop episode and print its metrics.
    Simulate {
        scenario: PathBuf,
        /// Write the episode with its transcript here.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Standard deviation of the base position error [m].
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Run methods over a scenario suite and write per-episode CSV.
    Bench {
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "rlp,rlp-minus,rlp-mm,rrt")]
        methods: Vec<Method>,
        /// Directory of scenario files; without it a suite is generated.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Size of the generated suite.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Standard deviation of the base position error [m].
        #[arg(long)]
        noise: Option<f64>,
        /// CSV destination; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate scenario files from a template.
    GenScenarios {
        /// tabletop, shelf, corridor or all.
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Summarize a recorded episode and optionally draw it.
    Replay {
        /// Episode or transcript JSON.
        transcript: PathBuf,
        /// Scenario the run used; needed for metrics and drawing.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Write an overhead SVG here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Measure the unit costs of the modeled clock on this machine.
    Calibrate,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

enum Failure {
    Input(Error),
    Planning(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        // The reader went away (e.g. `| head`); nothing left to report.
        Err(Failure::Input(Error::Io(e))) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            EXIT_BAD_INPUT
        }
        Err(Failure::Planning(msg)) => {
            eprintln!("planning failed: {msg}");
            EXIT_PLAN_FAILED
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<BenchConfig, Error> {
    let mut cfg = match &g.config {
        Some(p) => BenchConfig::from_json(&fs::read_to_string(p)?)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = g.fallback {
        cfg.planner.fallback = s == Switch::On;
    }
    Ok(cfg)
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<LoadedScenario, Error> {
    let mut sc = Scenario::read(path)?.load()?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                so.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable value")
}

fn set_noise(cfg: &mut BenchConfig, noise: Option<f64>) -> Result<(), Error> {
    if let Some(s) = noise {
        cfg.sim.base_noise_sigma = s;
        cfg.sim.validate()?;
    }
    Ok(())
}

/// Result of a single planning pass from the scenario start.
#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub scenario_id: String,
    pub method: Method,
    pub outcome: &'static str,
    pub score: Option<f64>,
    pub compute_time: f64,
    pub trajectory: Option<TrajectoryRecord>,
}

impl PlanReport {
    /// True when no trajectory came out and the start did not already satisfy the goal.
    pub fn failed(&self) -> bool {
        self.trajectory.is_none() && self.outcome != "finished"
    }
}

/// Runs one planning loop (or the baseline) from the scenario start.
pub fn plan_once(sc: &LoadedScenario, method: Method, planner: &PlannerConfig) -> PlanReport {
    let planner = method.configure(planner);
    let meter = Meter::default();
    let (outcome, traj, score) = if method == Method::Rrt {
        let t = crate::baseline::plan_baseline(&sc.request(), &sc.start.positions, &planner, sc.seed, &meter);
        (if t.is_some() { "switched" } else { "stopped" }, t.map(|t| t.to_record()), None)
    } else {
        let r = plan_loop(&sc.request(), &planner, sc.seed, None, &sc.start, &meter);
        let name = match r.outcome {
            Outcome::Switched => "switched",
            Outcome::Kept => "kept",
            Outcome::Stopped => "stopped",
            Outcome::Finished => "finished",
        };
        (name, r.trajectory.map(|t| t.to_record()), r.score)
    };
    PlanReport {
        scenario_id: sc.id.clone(),
        method,
        outcome,
        score,
        compute_time: meter.elapsed(),
        trajectory: traj,
    }
}

fn execute(cli: Cli) -> CliResult {
    let g = &cli.global;
    let mut cfg = load_config(g)?;
    if g.threads > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(g.threads).build_global();
    }
    match cli.command {
        Command::Plan { scenario, out } => {
            let sc = load_scenario(&scenario, g.seed)?;
            let report = plan_once(&sc, g.method, &cfg.planner);
            emit(&to_json(&report), out.as_deref())?;
            if report.failed() {
                return Err(Failure::Planning(format!("no valid trajectory for `{}`", sc.id)));
            }
        }
        Command::Simulate { scenario, out, noise } => {
            set_noise(&mut cfg, noise)?;
            let sc = load_scenario(&scenario, g.seed)?;
            let ep = sim::run_episode(&sc, g.method, &cfg.planner, &cfg.sim);
            emit(&to_json(&ep.metrics), None)?;
            if let Some(p) = out {
                fs::write(p, to_json(&ep)).map_err(Error::from)?;
            }
            if !ep.metrics.completed {
                return Err(Failure::Planning(format!("`{}` ended with {:?}", sc.id, ep.metrics.termination)));
            }
        }
        Command::Bench { methods, scenarios, n, noise, out } => {
            set_noise(&mut cfg, noise)?;
            let suite = match scenarios {
                Some(dir) => read_dir_scenarios(&dir)?,
                None => bench::default_suite(n, g.seed.unwrap_or(1), &cfg.generator, &cfg.planner)?,
            };
            let loaded = bench::load_all(&suite)?;
            let result = bench::run_suite(&loaded, &methods, &cfg, g.threads)?;
            match out {
                Some(p) => bench::write_csv(&result, fs::File::create(p).map_err(Error::from)?)?,
                None => bench::write_csv(&result, std::io::stdout().lock())?,
            }
            for a in &result.aggregates {
                eprintln!(
                    "{:<10} n={:<4} completed {:>5.1}%  completion {:>6.2} s  delay {:>6.3} s  duration {:>6.2} s  robustness {:.3}  collisions {:.3}",
                    a.method.name(),
                    a.episodes,
                    100.0 * a.completion_rate,
                    a.motion_completion_time,
                    a.plan_to_motion_delay,
                    a.motion_duration,
                    a.robustness,
                    a.collision_rate
                );
            }
        }
        Command::GenScenarios { template, n, out } => {
            let seed = g.seed.unwrap_or(1);
            let scenarios = if template == "all" {
                bench::default_suite(n, seed, &cfg.generator, &cfg.planner)?
            } else {
                bench::gen_scenarios(Template::parse(&template)?, n, seed, &cfg.generator, &cfg.planner)?
            };
            fs::create_dir_all(&out).map_err(Error::from)?;
            for sc in &scenarios {
                fs::write(out.join(format!("{}.json", sc.id)), sc.to_json()).map_err(Error::from)?;
            }
            eprintln!("wrote {} scenarios to {}", scenarios.len(), out.display());
            if scenarios.len() < n {
                return Err(Failure::Planning(format!("only {} of {n} scenarios could be generated", scenarios.len())));
            }
        }
        Command::Replay { transcript, scenario, svg } => {
            let text = fs::read_to_string(&transcript).map_err(Error::from)?;
            let tr: Transcript = match serde_json::from_str::<Episode>(&text) {
                Ok(ep) => ep.transcript,
                Err(_) => serde_json::from_str(&text).map_err(Error::from)?,
            };
            emit(&replay::summary(&tr), None)?;
            let sc = scenario.map(|p| load_scenario(&p, g.seed)).transpose()?;
            match (&sc, svg) {
                (Some(sc), svg) => {
                    let planner = tr.method.configure(&cfg.planner);
                    let (metrics, _) = sim::evaluate_transcript(sc, &tr, &planner, &cfg.sim);
                    emit(&to_json(&metrics), None)?;
                    if let Some(p) = svg {
                        let m = replay::svg_model(sc, &tr, planner.timing.t_s);
                        fs::write(p, replay::render_svg(&m)).map_err(Error::from)?;
                    }
                }
                (None, Some(_)) => return Err(Error::Config("--svg needs --scenario".into()).into()),
                (None, None) => {}
            }
        }
        Command::Calibrate => {
            let costs = bench::calibrate(g.seed.unwrap_or(1))?;
            emit(&to_json(&costs), None)?;
        }
    }
    Ok(())
}

fn read_dir_scenarios(dir: &Path) -> Result<Vec<Scenario>, Error> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no scenario files in {}", dir.display())));
    }
    paths.iter().map(Scenario::read).collect()
}
