//! Command-line runner for floquet-holonomy scenarios and the acceptance
//! suite.
//!
//! Exit status: 0 success, 1 a residual missed its tolerance, 2 invalid
//! input, 3 quasienergy on the branch boundary, 4 level crossing.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use floquet_holonomy::acceptance::{run_acceptance, AcceptanceOptions};
use floquet_holonomy::invariants::Gauge;
use floquet_holonomy::propagator::Method;
use floquet_holonomy::scenario::{builtin, run_scenario, OutputFormat, ScenarioConfig, BUILTIN_SCENARIOS};
use floquet_holonomy::{init_thread_pool_from_env, Error};

#[derive(Parser)]
#[command(name = "floquet-holonomy", version, about = "Floquet decompositions, dynamical invariants and cyclic phases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json (plus CSV traces on request).
    Run(RunArgs),
    /// Run the acceptance suite and print a table of results.
    Check(CheckArgs),
    /// Print the JSON configuration of a built-in scenario.
    Show {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_SCENARIOS))]
        name: String,
    },
}

#[derive(clap::Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["config", "builtin"])))]
struct RunArgs {
    /// Scenario configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a built-in scenario.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(BUILTIN_SCENARIOS))]
    builtin: Option<String>,
    /// Output directory; defaults to output.dir of the config, then out/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override grid.steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the Magnus order.
    #[arg(long, value_parser = ["2", "4"])]
    order: Option<String>,
    /// Restrict to these gauges (repeatable).
    #[arg(long, value_enum)]
    gauge: Vec<GaugeArg>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(clap::Args)]
struct CheckArgs {
    /// Grid size for the fixed-tolerance criteria.
    #[arg(long, default_value_t = 512)]
    steps: usize,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, hide = true)]
    invert_transport_sign: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GaugeArg {
    Floquet,
    Aligned,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Both => OutputFormat::Both,
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ScenarioConfig, Error> {
    let mut cfg = match (&args.config, &args.builtin) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text)?
        }
        (None, Some(name)) => builtin(name).ok_or_else(|| Error::Config(format!("unknown built-in scenario {name}")))?,
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(n) = args.steps {
        cfg.grid.steps = n;
    }
    if let Some(order) = args.order.as_deref() {
        cfg.grid.method = if order == "2" { Method::Magnus2 } else { Method::Magnus4 };
    }
    if !args.gauge.is_empty() {
        cfg.gauges = args
            .gauge
            .iter()
            .map(|g| match g {
                GaugeArg::Floquet => Gauge::Floquet,
                GaugeArg::Aligned => Gauge::Aligned,
            })
            .collect();
        cfg.gauges.dedup();
    }
    if let Some(f) = args.format {
        cfg.output.format = f.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_error_report(dir: &Path, cfg: Option<&ScenarioConfig>, err: &Error) {
    let body = serde_json::json!({
        "config": cfg,
        "error": { "message": err.to_string(), "exit_code": err.exit_code() },
        "passed": false,
    });
    if fs::create_dir_all(dir).is_ok() {
        if let Err(e) = fs::write(dir.join("report.json"), serde_json::to_string_pretty(&body).unwrap_or_default()) {
            log::warn!("cannot write error report: {e}");
        }
    }
}

fn run(args: RunArgs) -> i32 {
    let cfg = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(dir) = &args.out {
                write_error_report(dir, None, &e);
            }
            return e.exit_code();
        }
    };
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&cfg.name));
    let run = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            write_error_report(&dir, Some(&cfg), &e);
            return e.exit_code();
        }
    };
    if let Err(e) = run.write(&dir, cfg.output.format) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let r = &run.report;
    println!("scenario {} (N = {}, {:?})", cfg.name, cfg.grid.steps, cfg.grid.method);
    println!("  quasienergies {:?}", r.floquet.mu);
    for s in &r.subspaces {
        println!(
            "  lambda {:+.6} ({}) gauge {:<8} holonomy phases {:?}",
            s.lambda, s.multiplicity, s.gauge.to_string(), s.holonomy_phases
        );
    }
    println!("  cross-gauge distance {:.3e}", r.cross_gauge_distance);
    for f in &r.failures {
        println!("  FAIL {}: {:.3e} > {:.1e}", f.check, f.value, f.bound);
    }
    println!("  report {}", dir.join("report.json").display());
    println!("  {}", if r.passed { "passed" } else { "failed" });
    r.exit_code()
}

fn check(args: CheckArgs) -> i32 {
    if args.steps < 8 || !args.steps.is_power_of_two() {
        eprintln!("error: --steps must be a power of two >= 8");
        return 2;
    }
    let report =
        run_acceptance(AcceptanceOptions { steps: args.steps, invert_transport_sign: args.invert_transport_sign });
    println!("{report}");
    if let Some(path) = args.json {
        if let Err(e) = fs::write(&path, serde_json::to_string_pretty(&report).unwrap_or_default()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return 2;
        }
    }
    report.exit_code()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let code = match cli.command {
        Command::Run(args) => run(args),
        Command::Check(args) => check(args),
        Command::Show { name } => {
            let cfg = builtin(&name).expect("validated by clap");
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            0
        }
    };
    ExitCode::from(code as u8)
}
