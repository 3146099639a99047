use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use formsim::autopilot::AutopilotMode;
use formsim::output::{self, Summary};
use formsim::scenario::{self, Scenario};
use formsim::sim::{self, ConditionReport, VdotSource};
use formsim::Error;

#[derive(Parser)]
#[command(
    name = "formsim",
    version,
    about = "Two-vessel path-following formation simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check curvature and lookahead conditions of a scenario.
    Validate {
        /// Scenario file, or the name of a built-in preset.
        scenario: String,
    },
    /// Simulate a scenario and write `run.csv` and `summary.json`.
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        vdot: Option<Vdot>,
        /// Run even when the conditions fail.
        #[arg(long)]
        force: bool,
    },
    /// Run once per value of a numeric config field and print a metrics table.
    Sweep {
        scenario: String,
        /// Dotted path into the config, e.g. `mu` or `autopilot.gains.k_psi`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Print JSON rows instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print a built-in scenario as JSON.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(scenario::PRESETS))]
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adaptive,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Vdot {
    Truth,
    Sensor,
}

/// Failure with its exit code.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. } | Error::InvalidConfig(_) | Error::UnknownParameter(_) => 2,
            Error::Io(_) => 2,
            _ => 1,
        };
        Fail(code, e.to_string())
    }
}

fn io_fail(what: &Path, e: std::io::Error) -> Fail {
    Fail(1, format!("{}: {e}", what.display()))
}

fn load(arg: &str) -> Result<Scenario, Fail> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(sc) = scenario::preset(arg) {
            return Ok(sc);
        }
    }
    Scenario::from_file(path).map_err(|e| match e {
        Error::Io(m) => Fail(2, format!("{arg}: {m}")),
        e => Fail::from(e),
    })
}

/// Fixed six decimals without trailing zeros.
fn short(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn print_conditions(c: &ConditionReport) {
    println!("κ_max = {}", short(c.kappa_max));
    println!("Y_min = {}, X_max = {}", short(c.y_min), short(c.x_max));
    println!(
        "Y_min/X_max = {}  [{}]",
        short(c.ratio),
        if c.kappa_ok {
            "ok"
        } else {
            "FAIL: κ_max not below"
        }
    );
    println!(
        "μ bound = {}, μ = {}  [{}]",
        short(c.bound_mu),
        c.mu,
        if c.mu_ok {
            "ok"
        } else {
            "FAIL: μ not above bound"
        }
    );
    for v in &c.violations {
        println!("model: {v}");
    }
}

fn validate(arg: &str) -> Result<(), Fail> {
    let sc = load(arg)?;
    let c = sim::conditions(&sc.config);
    println!("scenario {}", sc.name);
    print_conditions(&c);
    if c.ok() {
        println!("pass");
        Ok(())
    } else {
        println!("fail");
        Err(Fail(1, "conditions not met".into()))
    }
}

fn run(
    arg: &str,
    out: &Path,
    mode: Option<Mode>,
    vdot: Option<Vdot>,
    force: bool,
) -> Result<(), Fail> {
    let mut sc = load(arg)?;
    if let Some(m) = mode {
        sc.config.autopilot.mode = match m {
            Mode::Adaptive => AutopilotMode::Adaptive,
            Mode::Baseline => AutopilotMode::Baseline,
        };
    }
    if let Some(v) = vdot {
        sc.config.vdot = match v {
            Vdot::Truth => VdotSource::Truth,
            Vdot::Sensor => VdotSource::Sensor,
        };
    }
    let cfg = &sc.config;
    let cond = sim::conditions(cfg);
    if !cond.ok() && !force {
        print_conditions(&cond);
        return Err(Fail(
            1,
            "conditions not met; pass --force to run anyway".into(),
        ));
    }
    let log = sim::run_unchecked(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| io_fail(out, e))?;

    let csv_path = out.join("run.csv");
    let f = File::create(&csv_path).map_err(|e| io_fail(&csv_path, e))?;
    let mut w = BufWriter::new(f);
    output::write_csv(&log, &mut w)?;
    w.flush().map_err(|e| io_fail(&csv_path, e))?;

    let metrics = sim::metrics(&log).ok();
    let expected_violations = match (&sc.expected, &metrics) {
        (Some(x), Some(m)) => x.violations(m),
        _ => Vec::new(),
    };
    let mode_name = match cfg.autopilot.mode {
        AutopilotMode::Adaptive => "adaptive",
        AutopilotMode::Baseline => "baseline",
    };
    let vdot_name = match cfg.vdot {
        VdotSource::Truth => "truth",
        VdotSource::Sensor => "sensor",
    };
    let summary = Summary {
        schema: output::OUTPUT_SCHEMA,
        scenario: &sc.name,
        mode: mode_name,
        vdot: vdot_name,
        steps: log.records.len().saturating_sub(1),
        completed: log.failure.is_none(),
        failure: log.failure.as_ref().map(|(k, e)| format!("step {k}: {e}")),
        conditions: &cond,
        metrics: metrics.as_ref(),
        expected_violations,
    };
    let sum_path = out.join("summary.json");
    let f = File::create(&sum_path).map_err(|e| io_fail(&sum_path, e))?;
    output::write_summary(&summary, BufWriter::new(f))?;

    if let Some(m) = &metrics {
        println!(
            "steady crosstrack rms {:.4} m, max |x_pb| {:.4} m, max |y_pb| {:.4} m, max sway {:.3} m/s",
            m.crosstrack_rms, m.steady_max_abs_x, m.steady_max_abs_y, m.max_sway
        );
    }
    for v in &summary.expected_violations {
        println!("expected limit exceeded: {v}");
    }
    match &summary.failure {
        Some(f) => Err(Fail(1, f.clone())),
        None => Ok(()),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
}

fn sweep(arg: &str, param: &str, values: &[String], json: bool) -> Result<(), Fail> {
    let sc = load(arg)?;
    let vals = values
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Fail(2, format!("value `{s}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = scenario::sweep(&sc.config, param, &vals)?;
    if json {
        let text = serde_json::to_string_pretty(&rows).map_err(|e| Fail(1, e.to_string()))?;
        println!("{text}");
    } else {
        println!("value\tcompleted\tconvergence_time\tx_convergence_time\texp_rate_fit\tcrosstrack_rms\tsteady_max_abs_x\tsteady_max_abs_y\tmax_sway");
        for r in &rows {
            let m = r.metrics.as_ref();
            println!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.value,
                r.completed,
                opt(m.and_then(|m| m.convergence_time)),
                opt(m.and_then(|m| m.along_track_convergence_time)),
                opt(m.and_then(|m| m.exp_rate_fit)),
                opt(m.map(|m| m.crosstrack_rms)),
                opt(m.map(|m| m.steady_max_abs_x)),
                opt(m.map(|m| m.steady_max_abs_y)),
                opt(m.map(|m| m.max_sway)),
            );
        }
    }
    for r in rows.iter().filter(|r| !r.completed) {
        eprintln!(
            "{param} = {}: {}",
            r.value,
            r.failure.as_deref().unwrap_or("failed")
        );
    }
    if rows.iter().all(|r| r.completed) {
        Ok(())
    } else {
        Err(Fail(1, "some runs failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Validate { scenario } => validate(scenario),
        Cmd::Run {
            scenario,
            out,
            mode,
            vdot,
            force,
        } => run(scenario, out, *mode, *vdot, *force),
        Cmd::Sweep {
            scenario,
            param,
            values,
            json,
        } => sweep(scenario, param, values, *json),
        Cmd::Preset { name } => {
            println!(
                "{}",
                scenario::preset(name).expect("listed preset").to_json()
            );
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
