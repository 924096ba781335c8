//! `d2dcache`: simulate, sweep, fit and evaluate the closed-form predictions.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error,
//! 3 completed but outside the regime where the asymptotic forms apply.

mod descriptor;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use d2dcache::caching::{eta, solve_gamma_c, EPSILON_MAX};
use d2dcache::harness::{
    estimate, fit_exponent, sweep_resume, AutoRadius, LibrarySize, MSchedule, Policy, Radius,
    SimConfig, SweepTable,
};
use d2dcache::scheduling::DEFAULT_EXACT_CUTOFF;
use d2dcache::theory::{predicted_el, predicted_r_opt, Regime};
use serde_json::json;

use descriptor::ExperimentDescriptor;

#[derive(Debug, Parser)]
#[command(name = "d2dcache", version, about = "D2D caching link-count simulator and scaling laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Zipf,
    Topk,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate one configuration and print the metrics as JSON.
    Simulate(SimulateArgs),
    /// Run every grid point of a descriptor and write a CSV table.
    Sweep {
        descriptor: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Keep rows already present in the output file.
        #[arg(long)]
        resume: bool,
        /// Overrides the descriptor's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit ln y = a + b ln x over the rows of a sweep CSV.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "n")]
        x: String,
        #[arg(long, default_value = "L_greedy_mean")]
        y: String,
    },
    /// Solve for the caching exponent of the low-reuse construction.
    SolveGammaC {
        #[arg(long, allow_negative_numbers = true)]
        gamma_r: f64,
        #[arg(long, allow_negative_numbers = true)]
        epsilon: f64,
        /// Also evaluate q for this library size.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Evaluate the predicted optimal radius and link-count scaling.
    Predict {
        #[arg(long)]
        gamma_r: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1.5)]
        c: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
    },
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// JSON config file; replaces the individual flags.
    #[arg(long, conflicts_with_all = ["n", "m", "gamma_r", "gamma_c", "policy", "r", "c", "epsilon", "trials", "seed", "exact_cutoff"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    /// A number or `3lnn`.
    #[arg(long, required_unless_present = "config")]
    m: Option<String>,
    #[arg(long, required_unless_present = "config")]
    gamma_r: Option<f64>,
    #[arg(long)]
    gamma_c: Option<f64>,
    #[arg(long, value_enum, default_value = "zipf")]
    policy: PolicyArg,
    /// A number or `auto`.
    #[arg(long, required_unless_present = "config")]
    r: Option<String>,
    /// Constant of the auto radius.
    #[arg(long)]
    c: Option<f64>,
    /// Low-reuse exponent slack of the auto radius.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, required_unless_present = "config")]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_EXACT_CUTOFF)]
    exact_cutoff: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

type Outcome = Result<ExitCode, Failure>;

const WARNED: u8 = 3;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Library errors from bad inputs are usage errors; the rest are runtime.
fn lib(e: d2dcache::Error) -> Failure {
    use d2dcache::Error as E;
    match e {
        E::Io(_) | E::InvariantViolated(_) | E::TooLarge { .. } => runtime(e),
        _ => usage(e),
    }
}

fn finish(warnings: &[String]) -> ExitCode {
    if warnings.is_empty() {
        ExitCode::SUCCESS
    } else {
        for w in warnings {
            eprintln!("warning: {w}");
        }
        ExitCode::from(WARNED)
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON value serializes"));
}

fn load_config(path: &Path) -> Result<SimConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| usage(format!("config field `{}`: {}", e.path(), e.inner())))
}

fn config_from_flags(a: &SimulateArgs) -> Result<SimConfig, Failure> {
    // clap guarantees these are present when --config is absent.
    let m = match a.m.as_deref().unwrap_or_default() {
        "3lnn" => LibrarySize::Schedule(MSchedule::ThreeLnN),
        s => LibrarySize::Fixed(s.parse().map_err(|_| usage(format!("--m: expected a number or 3lnn, got {s:?}")))?),
    };
    let policy = match a.policy {
        PolicyArg::Topk => Policy::Topk,
        PolicyArg::Zipf => Policy::Zipf {
            gamma_c: a.gamma_c.ok_or_else(|| usage("--gamma-c is required with the zipf policy"))?,
        },
    };
    let r = match a.r.as_deref().unwrap_or_default() {
        "auto" => {
            let d = AutoRadius::default();
            Radius::Tuned {
                auto: AutoRadius {
                    c: a.c.unwrap_or(d.c),
                    epsilon: a.epsilon.unwrap_or(d.epsilon),
                },
            }
        }
        s => {
            if a.c.is_some() || a.epsilon.is_some() {
                return Err(usage("--c and --epsilon only apply with --r auto"));
            }
            Radius::Fixed(s.parse().map_err(|_| usage(format!("--r: expected a number or auto, got {s:?}")))?)
        }
    };
    Ok(SimConfig {
        n: a.n.unwrap_or_default(),
        m,
        gamma_r: a.gamma_r.unwrap_or_default(),
        policy,
        r,
        seed: a.seed.unwrap_or_default(),
        trials: a.trials,
        exact_cutoff: a.exact_cutoff,
    })
}

fn simulate(a: &SimulateArgs) -> Outcome {
    let cfg = match &a.config {
        Some(path) => load_config(path)?,
        None => config_from_flags(a)?,
    };
    let res = cfg.resolve().map_err(lib)?;
    let est = estimate(&res.config).map_err(lib)?;
    let report = json!({
        "seed": res.config.seed,
        "config_digest": res.config.digest(),
        "config": res.config,
        "warnings": res.warnings,
        "estimate": est,
    });
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&report).map_err(runtime)?;
        std::fs::write(out, text + "\n").map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    }
    print_json(&report);
    Ok(finish(&res.warnings))
}

fn sweep(descriptor: &Path, seed: u64, resume: bool, out: Option<&Path>) -> Outcome {
    let d = ExperimentDescriptor::load(descriptor).map_err(usage)?;
    let grid = d.expand(seed).map_err(usage)?;
    let mut warnings = Vec::new();
    for cfg in &grid {
        for w in cfg.resolve().map_err(lib)?.warnings {
            warnings.push(format!("n={}: {w}", cfg.n));
        }
    }
    let csv_path = out.map(Path::to_path_buf).unwrap_or_else(|| d.output.clone());
    let json_path = csv_path.with_extension("table.json");
    if csv_path == descriptor || json_path == descriptor {
        return Err(usage("output would overwrite the descriptor"));
    }
    let done = if resume && csv_path.exists() {
        SweepTable::load_csv(&csv_path).map_err(lib)?
    } else {
        SweepTable::default()
    };
    let table = sweep_resume(&grid, &done, |partial| {
        eprintln!("{}: {}/{} rows", d.name, partial.len(), grid.len());
        partial.save_csv(&csv_path)
    })
    .map_err(lib)?;
    // Also covers the case where every row was already present.
    table.save_csv(&csv_path).map_err(lib)?;
    let text = serde_json::to_string_pretty(&table).map_err(runtime)?;
    std::fs::write(&json_path, text + "\n").map_err(|e| runtime(format!("{}: {e}", json_path.display())))?;
    print_json(&json!({
        "name": d.name,
        "seed": seed,
        "rows": table.len(),
        "csv": csv_path,
        "json": json_path,
    }));
    Ok(finish(&warnings))
}

fn fit(csv: &Path, x: &str, y: &str) -> Outcome {
    let file = std::fs::File::open(csv).map_err(|e| usage(format!("{}: {e}", csv.display())))?;
    let table = SweepTable::read_csv(file).map_err(usage)?;
    let f = fit_exponent(&table, x, y).map_err(lib)?;
    print_json(&json!({
        "x": x,
        "y": y,
        "slope": f.slope,
        "slope_se": f.slope_se,
        "intercept": f.intercept,
        "points": f.points,
        "seeds": table.rows.iter().map(|r| r.seed).collect::<std::collections::BTreeSet<_>>(),
    }));
    Ok(ExitCode::SUCCESS)
}

fn solve(gamma_r: f64, epsilon: f64, m: Option<usize>) -> Outcome {
    let eta = eta(gamma_r).map_err(lib)?;
    let eta1 = eta + epsilon;
    let mut warnings = Vec::new();
    if !(epsilon > 0.0 && epsilon < EPSILON_MAX) {
        warnings.push(format!("epsilon {epsilon} outside (0, 1/6)"));
    }
    let mut report = json!({ "gamma_r": gamma_r, "epsilon": epsilon, "eta": eta, "eta1": eta1 });
    match solve_gamma_c(gamma_r, eta1) {
        Ok(sol) => {
            let exponent = eta1 / sol.gamma_c;
            report["gamma_c"] = json!(sol.gamma_c);
            report["q_formula"] = json!(format!("q = ⌈m^(η₁/γ_c)⌉ = ⌈m^{exponent:.6}⌉"));
            if let Some(m) = m {
                let q = ((m as f64).powf(exponent).ceil() as usize).clamp(1, m.max(1));
                report["q"] = json!(q);
            }
        }
        // Outside the regime there may be no root at all; that is the warning.
        Err(e) if !warnings.is_empty() => warnings.push(e.to_string()),
        Err(e) => return Err(lib(e)),
    }
    report["warnings"] = json!(warnings);
    print_json(&report);
    Ok(finish(&warnings))
}

fn predict(gamma_r: f64, n: usize, m: usize, c: f64, epsilon: f64) -> Outcome {
    let regime = Regime::classify(gamma_r, epsilon).map_err(lib)?;
    let r = predicted_r_opt(regime, n, m, c).map_err(lib)?;
    let el = predicted_el(regime, n, m).map_err(lib)?;
    let mut warnings = Vec::new();
    if r.flagged || el.flagged {
        warnings.push(format!("ln ln m <= 1 at m = {m}; the critical form is unreliable"));
    }
    if r.clamped {
        warnings.push("predicted radius exceeds √2 and was clamped".to_string());
    }
    print_json(&json!({
        "regime": regime.name(),
        "eta1": match regime { Regime::LowReuse { eta1 } => Some(eta1), _ => None },
        "r_opt": r,
        "expected_links": el,
        "warnings": warnings,
    }));
    Ok(finish(&warnings))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep { descriptor, seed, resume, out } => sweep(descriptor, *seed, *resume, out.as_deref()),
        Command::Fit { csv, x, y } => fit(csv, x, y),
        Command::SolveGammaC { gamma_r, epsilon, m } => solve(*gamma_r, *epsilon, *m),
        Command::Predict { gamma_r, n, m, c, epsilon } => predict(*gamma_r, *n, *m, *c, *epsilon),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
