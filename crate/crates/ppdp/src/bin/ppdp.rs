use clap::{Parser, Subcommand};
use ppdp::config::{self, BuiltRun, ReferenceKind, RunConfig};
use ppdp::diagnostics::{export_trace, summarize, write_summary};
use ppdp::oracles::{reference_generalized_pd, reference_pdhg};
use ppdp::solver::{solve, Algorithm, Correction, SolveOutput};
use ppdp::{Error, ExitStatus};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Exit code for configuration and I/O problems, as opposed to solver
/// statuses (0 converged, 2 not converged, 3 assumption violation,
/// 4 numerical breakdown).
const EXIT_CONFIG: u8 = 64;

#[derive(Parser)]
#[command(
    name = "ppdp",
    about = "Preconditioned primal-dual saddle-point solver with halfspace projection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the analytic constants and assumption flags of a configuration.
    Validate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Dotted-path overrides, e.g. --override solver.tol=1e-6
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Execute a run and write the trace CSV and summary JSON.
    Run {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Inspect the built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List the preset names.
    List,
    /// Print a preset as a JSON config.
    Show { name: String },
}

fn load_config(
    config_path: &Option<PathBuf>,
    preset_name: &Option<String>,
    overrides: &[String],
) -> Result<RunConfig, Error> {
    let mut raw: serde_json::Value = match (config_path, preset_name) {
        (Some(path), None) => {
            let body = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            serde_json::from_str(&body)
                .map_err(|e| Error::Config(format!("config parse error: {e}")))?
        }
        (None, Some(name)) => {
            serde_json::to_value(config::preset(name)?).map_err(|e| Error::Config(e.to_string()))?
        }
        _ => {
            return Err(Error::Config(
                "exactly one of --config or --preset is required".into(),
            ))
        }
    };
    for assignment in overrides {
        config::apply_override(&mut raw, assignment)?;
    }
    serde_json::from_value(raw).map_err(|e| Error::Config(format!("config error: {e}")))
}

fn out_path(configured: &str) -> PathBuf {
    match std::env::var_os("PPDP_OUT_DIR") {
        Some(dir) => Path::new(&dir).join(
            Path::new(configured)
                .file_name()
                .unwrap_or_else(|| std::ffi::OsStr::new(configured)),
        ),
        None => PathBuf::from(configured),
    }
}

fn print_constants(built: &BuiltRun) -> bool {
    let theta = built.solver.theta_for_flags();
    let t = match built.solver.stepsize {
        ppdp::StepsizeMode::Constant { t } => t,
        ppdp::StepsizeMode::Projection => {
            let base = built.spec.constants(&built.problem.phi, theta, 1.0);
            base.t_lower.max(f64::MIN_POSITIVE)
        }
    };
    let c = built.spec.constants(&built.problem.phi, theta, t);
    println!("instance            {}", built.problem.name);
    println!("L                   {:.12}", c.l);
    println!("gamma               {:.12}", c.gamma);
    println!("mu                  {:.12}", c.mu);
    println!("q                   {:.12}", c.q);
    println!("t_lower             {:.12}", c.t_lower);
    match c.t_upper {
        Some(tu) => println!("t_upper             {tu:.12}"),
        None => println!("t_upper             undefined (mu <= gamma)"),
    }
    println!("flag_resolvent_ok   {}", c.flag_resolvent_ok);
    println!("flag_separation_ok  {}", c.flag_separation_ok);
    println!("flag_D_pd           {}", c.flag_d_pd);
    println!("flag_G_pd           {}", c.flag_g_pd);
    let required = match built.solver.algorithm {
        Algorithm::Projected => c.required_ok(),
        Algorithm::Relaxed => c.flag_resolvent_ok,
    };
    println!(
        "required flags      {}",
        if required { "ok" } else { "VIOLATED" }
    );
    required
}

fn reference_deviation(built: &BuiltRun, output: &SolveOutput) -> Result<Option<f64>, Error> {
    let Some(kind) = built.reference_check else {
        return Ok(None);
    };
    let tau = 1.0 / built.spec.n1().max_entry();
    let sigma = 1.0 / built.spec.n2().max_entry();
    let iters = output.history.len().saturating_sub(1);
    let seq = match kind {
        ReferenceKind::Pdhg => reference_pdhg(
            built.problem.phi.k(),
            &built.problem.f,
            &built.problem.g,
            tau,
            sigma,
            1.0,
            &built.u0,
            iters,
        )?,
        ReferenceKind::GeneralizedPd => {
            let theta_pd = match built.solver.correction {
                Correction::GeneralizedPd { theta_pd, .. } => theta_pd,
                Correction::Identity => 1.0,
            };
            reference_generalized_pd(
                built.problem.phi.k(),
                &built.problem.f,
                &built.problem.g,
                tau,
                sigma,
                theta_pd,
                &built.u0,
                iters,
            )?
        }
    };
    let mut dev: f64 = 0.0;
    for (ours, theirs) in output.history.iter().zip(&seq) {
        let d = ours.sub(theirs).map(|d| {
            d.x.iter()
                .chain(d.y.iter())
                .fold(0.0f64, |acc, v| acc.max(v.abs()))
        })?;
        dev = dev.max(d);
    }
    Ok(Some(dev))
}

fn cmd_validate(built: &BuiltRun) -> ExitCode {
    let ok = print_constants(built);
    if ok || built.solver.allow_unverified {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(ExitStatus::AssumptionViolation.exit_code() as u8)
    }
}

fn cmd_run(built: &BuiltRun) -> Result<ExitCode, Error> {
    let mut output = solve(&built.problem, &built.spec, &built.solver, &built.u0)?;
    output.trace.header.seed = built.seed;

    let deviation = reference_deviation(built, &output)?;
    let summary = summarize(&built.problem, &built.spec, &output, deviation);

    if let Some(path) = &built.output.trace_path {
        export_trace(&output.trace, &out_path(path))?;
    }
    if let Some(path) = &built.output.summary_path {
        write_summary(&summary, &out_path(path))?;
    }

    let status_name = match output.state.status {
        ExitStatus::Converged => "converged",
        ExitStatus::NotConverged => "not_converged",
        ExitStatus::AssumptionViolation => "assumption_violation",
        ExitStatus::NumericalBreakdown => "numerical_breakdown",
    };
    print!(
        "{}: status={status_name} iterations={} final_residual={:.6e}",
        built.problem.name, output.state.k, output.state.residual
    );
    if let Some(dev) = deviation {
        print!(" reference_deviation={dev:.3e}");
    }
    println!();
    for warning in &output.trace.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(ExitCode::from(output.state.status.exit_code() as u8))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Presets { action } => match action {
            PresetAction::List => {
                for name in config::preset_names() {
                    println!("{name}");
                }
                return ExitCode::SUCCESS;
            }
            PresetAction::Show { name } => match config::preset(name) {
                Ok(cfg) => {
                    println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
                    return ExitCode::SUCCESS;
                }
                Err(e) => Err(e),
            },
        },
        Command::Validate {
            config,
            preset,
            overrides,
        } => load_config(config, preset, overrides)
            .and_then(|cfg| config::build(&cfg))
            .map(|built| cmd_validate(&built)),
        Command::Run {
            config,
            preset,
            overrides,
        } => load_config(config, preset, overrides)
            .and_then(|cfg| config::build(&cfg))
            .and_then(|built| cmd_run(&built)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
