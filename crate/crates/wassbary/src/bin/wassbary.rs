//! Command-line front end: barycenter jobs, multicoupling, warp simulation,
//! consistency experiments, and figure-data emission.
//!
//! Exit codes: 0 success, 2 usage, 3 input parse, 4 numerical, 5 I/O.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use wassbary::barycenter::{barycenter, DescentConfig};
use wassbary::error::Error;
use wassbary::estimation::{
    estimate_population, reference_intensity, run_consistency_experiment, sample_poisson_with,
    sample_warp_with, experiment_rows_to_csv, ExperimentDesign, KernelSpec, WarpFamily,
};
use wassbary::measures::{Compactum, Measure, PointPattern};
use wassbary::registration::multicoupling;
use wassbary::scenarios::{run_scenario, SCENARIOS};
use wassbary::serialize::{
    config_from_json, config_to_json, grid_to_csv, map_to_json, measure_from_json,
    measure_to_json, pattern_to_csv,
};

const EXIT_PARSE: i32 = 3;
const EXIT_NUMERICAL: i32 = 4;
const EXIT_IO: i32 = 5;

#[derive(Parser)]
#[command(name = "wassbary", version, about = "Fréchet means in 2-Wasserstein space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config JSON (descent settings, or the experiment design for `experiment`)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// RNG seed for anything randomized
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: WASSBARY_THREADS, else all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Stopping threshold on the gradient norm
    #[arg(long)]
    tolerance: Option<f64>,
    /// Iteration cap
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Step size in [0,1]
    #[arg(long)]
    tau: Option<f64>,
    /// Fail (exit 4) on non-convergence instead of reporting it
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Barycenter of measure JSON files
    Barycenter {
        #[arg(required = true, value_name = "MEASURE.json")]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Optimal multicoupling of measure JSON files through their barycenter
    Multicouple {
        #[arg(required = true, num_args = 2.., value_name = "MEASURE.json")]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate warped point patterns and run the estimation pipeline on them
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full consistency experiment and write the result table
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate a named figure scenario's data files
    Figures {
        #[arg(value_parser = SCENARIOS)]
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) => EXIT_PARSE,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, e.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(f) = run(cli) {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let common = match &cli.command {
        Command::Barycenter { common, .. }
        | Command::Multicouple { common, .. }
        | Command::Simulate { common }
        | Command::Experiment { common }
        | Command::Figures { common, .. } => common.clone(),
    };
    configure_threads(common.threads)?;
    std::fs::create_dir_all(&common.out)?;
    let started = Instant::now();

    let (name, config_value) = match cli.command {
        Command::Barycenter { inputs, common } => {
            let cfg = descent_config(&common)?;
            let measures = load_measures(&inputs)?;
            let out = barycenter(&measures, &cfg)?;
            write_file(&common.out, "barycenter.json", &measure_to_json(&out.measure))?;
            write_file(&common.out, "trace.csv", &out.trace.to_csv())?;
            for (i, t) in out.maps.iter().enumerate() {
                write_file(&common.out, &format!("map_{i}.json"), &map_to_json(t))?;
            }
            check_convergence(out.trace.converged, common.strict)?;
            ("barycenter", serde_json::from_str(&config_to_json(&cfg)).unwrap())
        }
        Command::Multicouple { inputs, common } => {
            let cfg = descent_config(&common)?;
            let measures = load_measures(&inputs)?;
            let mc = multicoupling(&measures, &cfg)?;
            write_file(&common.out, "barycenter.json", &measure_to_json(&mc.barycenter))?;
            for (i, t) in mc.maps.iter().enumerate() {
                write_file(&common.out, &format!("map_{i}.json"), &map_to_json(t))?;
            }
            write_file(
                &common.out,
                "summary.json",
                &serde_json::to_string_pretty(
                    &serde_json::json!({ "pairwise_cost": mc.pairwise_cost }),
                )
                .unwrap(),
            )?;
            ("multicouple", serde_json::from_str(&config_to_json(&cfg)).unwrap())
        }
        Command::Simulate { common } => {
            let sim = simulate_config(&common)?;
            cmd_simulate(&sim, &common)?;
            ("simulate", serde_json::to_value(&sim).unwrap())
        }
        Command::Experiment { common } => {
            let design = experiment_design(&common)?;
            let rows = run_consistency_experiment(&design)?;
            write_file(&common.out, "results.csv", &experiment_rows_to_csv(&rows))?;
            if common.strict && rows.iter().any(|r| r.status != "ok") {
                return Err(Failure::new(EXIT_NUMERICAL, "some replicates failed; see results.csv"));
            }
            ("experiment", serde_json::to_value(&design).unwrap())
        }
        Command::Figures { scenario, common } => {
            run_scenario(&scenario, common.seed, &common.out)?;
            ("figures", serde_json::json!({ "scenario": scenario }))
        }
    };

    let manifest = serde_json::json!({
        "command": name,
        "config": config_value,
        "seed": common.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_ms": started.elapsed().as_secs_f64() * 1e3,
    });
    write_file(&common.out, "manifest.json", &serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(())
}

fn configure_threads(flag: Option<usize>) -> std::result::Result<(), Failure> {
    let from_env = std::env::var("WASSBARY_THREADS")
        .ok()
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| Failure::new(EXIT_PARSE, format!("WASSBARY_THREADS must be a count, got '{v}'")))
        })
        .transpose()?;
    if let Some(n) = flag.or(from_env) {
        if n == 0 {
            return Err(Failure::new(EXIT_PARSE, "thread count must be ≥ 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(EXIT_NUMERICAL, format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn descent_config(common: &Common) -> std::result::Result<DescentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => config_from_json(&read_input(path)?)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?,
        None => DescentConfig::default(),
    };
    if let Some(t) = common.tolerance {
        cfg.tolerance = t;
    }
    if let Some(n) = common.max_iters {
        cfg.max_iterations = n;
    }
    if let Some(tau) = common.tau {
        cfg.tau = tau;
    }
    cfg.validate()
        .map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    Ok(cfg)
}

fn load_measures(paths: &[PathBuf]) -> std::result::Result<Vec<Measure>, Failure> {
    paths
        .iter()
        .map(|p| {
            measure_from_json(&read_input(p)?)
                .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", p.display())))
        })
        .collect()
}

fn read_input(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> std::result::Result<(), Failure> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn check_convergence(converged: bool, strict: bool) -> std::result::Result<(), Failure> {
    if strict && !converged {
        return Err(Failure::new(
            EXIT_NUMERICAL,
            "iteration did not converge within the configured cap",
        ));
    }
    Ok(())
}

/// Settings for `simulate`, read from --config with per-field defaults.
#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SimulateConfig {
    /// number of warped patterns
    n: usize,
    /// Poisson mean count per pattern
    mean_count: f64,
    warp_amplitude: f64,
    warp_max_frequency: u32,
    grid_cells: usize,
    /// smoothing bandwidth; defaults to the mean_count^{-1/5} rule
    bandwidth: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 20,
            mean_count: 400.0,
            warp_amplitude: 0.9,
            warp_max_frequency: 3,
            grid_cells: 128,
            bandwidth: None,
        }
    }
}

fn simulate_config(common: &Common) -> std::result::Result<SimulateConfig, Failure> {
    match &common.config {
        Some(path) => serde_json::from_str(&read_input(path)?)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display()))),
        None => Ok(SimulateConfig::default()),
    }
}

fn cmd_simulate(sim: &SimulateConfig, common: &Common) -> std::result::Result<(), Failure> {
    let window = Compactum::new(vec![0.0], vec![1.0])?;
    let family = WarpFamily::new(window.clone(), sim.warp_amplitude, sim.warp_max_frequency)?;
    let intensity = Measure::Grid(reference_intensity(sim.grid_cells)?);
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);

    let mut patterns = Vec::with_capacity(sim.n);
    for i in 0..sim.n {
        let warp = sample_warp_with(&family, &mut rng)?;
        let base = sample_poisson_with(&intensity, sim.mean_count, &window, &mut rng)?;
        let warped: std::result::Result<Vec<Vec<f64>>, Error> =
            base.points.iter().map(|x| warp.forward.apply(x)).collect();
        let pattern = PointPattern::new(window.clone(), warped?)?;
        write_file(&common.out, &format!("pattern_{i}.csv"), &pattern_to_csv(&pattern))?;
        write_file(&common.out, &format!("warp_{i}.json"), &map_to_json(&warp.forward))?;
        patterns.push(pattern);
    }

    let bandwidth = sim
        .bandwidth
        .unwrap_or_else(|| sim.mean_count.max(2.0).powf(-0.2));
    let spec = KernelSpec::gaussian(bandwidth)?;
    // --config holds the simulation settings here, so the descent settings
    // come from the flags alone
    let flags_only = Common {
        config: None,
        ..common.clone()
    };
    let cfg = descent_config(&flags_only)?;
    let est = estimate_population(&patterns, &spec, sim.grid_cells, &cfg)?;
    write_file(&common.out, "lambda_hat.csv", &grid_to_csv(&est.lambda_hat))?;
    write_file(&common.out, "trace.csv", &est.trace.to_csv())?;
    for (i, t) in est.maps.iter().enumerate() {
        write_file(&common.out, &format!("map_{i}.json"), &map_to_json(t))?;
    }
    check_convergence(est.trace.converged, common.strict)
}

fn experiment_design(common: &Common) -> std::result::Result<ExperimentDesign, Failure> {
    let mut design = match &common.config {
        Some(path) => serde_json::from_str::<ExperimentDesign>(&read_input(path)?)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?,
        None => ExperimentDesign::default(),
    };
    design.seed = common.seed;
    design
        .validate()
        .map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    Ok(design)
}
