//! `dglab`: configuration-driven bound certification runs.
//!
//! Exit status: 0 when every applicable comparison passes, 2 on a
//! configuration error, 3 on an assumption violation, a failed comparison or
//! a numerical failure.

mod config;
mod examples;
mod output;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, RunConfig};
use run::RunError;

#[derive(Parser)]
#[command(name = "dglab", version, about = "Certified off-diagonal diffusion bounds on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run(Common),
    /// Run a configuration once per value of a parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of t, d, alpha, beta, mu, epsilon, n.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// List the built-in scenarios; with --out, write their configurations.
    Examples {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the standing assumptions on the configured coefficients.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file, or `example:<name>` for a built-in one.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the relative slack of every verdict.
    #[arg(long)]
    slack: Option<f64>,
}

const CONFIG_ERROR: u8 = 2;
const FAILURE: u8 = 3;

impl Common {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match self.config.to_str().and_then(|s| s.strip_prefix("example:")) {
            Some(name) => {
                let e = examples::find(name).ok_or_else(|| ConfigError(format!("no built-in example {name:?}")))?;
                RunConfig::parse(&e.config().to_string())?
            }
            None => RunConfig::load(&self.config)?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(slack) = self.slack {
            if !(slack >= 0.0 && slack.is_finite()) {
                return Err(ConfigError(format!("--slack must be >= 0, got {slack}")));
            }
            cfg.slack = slack;
        }
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| ConfigError(format!("--threads: {e}")))?;
        }
        output::prepare_dir(&self.out)?;
        Ok(cfg)
    }
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("dglab: {e}");
    ExitCode::from(match e {
        RunError::Config(_) => CONFIG_ERROR,
        RunError::Numerical { .. } => FAILURE,
    })
}

fn verdict(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    }
}

fn print_run(r: &run::RunReport) {
    println!("{} ({})", r.name, r.scenario);
    if let Some(a) = &r.assumptions {
        for f in a.failures(false) {
            println!("  assumption violated: {f}");
        }
    }
    for c in &r.comparisons {
        let status = match (c.applicable(), c.pass) {
            (false, _) => "n/a ",
            (true, true) => "pass",
            (true, false) => "FAIL",
        };
        println!(
            "  {status} p={:<3} d={:.4} t-s={:.4e} k={:.3} measured {:.4e} <= bound {:.4e}",
            c.p.as_str(),
            c.d_xy,
            c.t - c.s,
            c.k,
            c.measured_norm,
            c.predicted_bound
        );
    }
    for b in &r.box_doubling {
        println!(
            "  box doubling p={} t={:.4e}: relative change {:.2e} ({})",
            b.p,
            b.t,
            b.relative_change,
            if b.ok { "ok" } else { "too large" }
        );
    }
    for n in &r.notes {
        println!("  note: {n}");
    }
    println!("  overall: {}", if r.overall_pass { "PASS" } else { "FAIL" });
}

fn cmd_run(common: &Common) -> Result<ExitCode, RunError> {
    let cfg = common.load()?;
    let start = Instant::now();
    let report = run::run(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    output::write_json(&common.out, "report.json", &report)?;
    output::write_bounds(&common.out, &[&report], None)?;
    output::write_profiles(&common.out, &report, None)?;
    output::write_json(&common.out, "timing.json", &json!({ "seconds": elapsed }))?;
    print_run(&report);
    Ok(verdict(report.overall_pass))
}

fn cmd_sweep(common: &Common, axis: &str, values: &[f64]) -> Result<ExitCode, RunError> {
    let cfg = common.load()?;
    let start = Instant::now();
    let report = sweep::sweep(&cfg, axis, values)?;
    let elapsed = start.elapsed().as_secs_f64();
    let runs: Vec<&run::RunReport> = report.runs.iter().collect();
    output::write_json(&common.out, "report.json", &report)?;
    output::write_bounds(&common.out, &runs, None)?;
    output::write_bounds(&common.out, &runs, Some((axis, values)))?;
    for (i, r) in report.runs.iter().enumerate() {
        output::write_profiles(&common.out, r, Some(i))?;
    }
    output::write_json(&common.out, "timing.json", &json!({ "seconds": elapsed }))?;
    for r in &report.runs {
        print_run(r);
    }
    Ok(verdict(report.overall_pass))
}

fn cmd_validate(common: &Common) -> Result<ExitCode, RunError> {
    let cfg = common.load()?;
    let report = run::validate(&cfg)?;
    output::write_json(
        &common.out,
        "report.json",
        &json!({ "name": cfg.name, "assumptions": report }),
    )?;
    let failures = report.failures(false);
    for f in &failures {
        println!("assumption violated: {f}");
    }
    println!(
        "{}: assumptions {}",
        cfg.name,
        if failures.is_empty() { "hold" } else { "violated" }
    );
    Ok(verdict(failures.is_empty()))
}

fn cmd_examples(out: Option<&PathBuf>) -> Result<ExitCode, RunError> {
    for e in examples::EXAMPLES {
        println!("{:<16} {}", e.name, e.summary);
        if let Some(dir) = out {
            output::prepare_dir(dir)?;
            output::write_json(dir, &format!("{}.json", e.name), &e.config())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep { common, axis, values } => cmd_sweep(common, axis, values),
        Command::Validate(c) => cmd_validate(c),
        Command::Examples { out } => cmd_examples(out.as_ref()),
    };
    result.unwrap_or_else(fail)
}
