use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use uqkit::EvalContext;
use uqkit_cli::actions::{run, CliError};
use uqkit_cli::config::{key_help, load_with, requirements, validate_config, Action, Diagnostic, Override};

#[derive(Parser)]
#[command(
    name = "uqkit",
    version,
    about = "Uncertainty quantification studies described by INI files"
)]
struct Cli {
    /// Worker threads for model evaluations. Results do not depend on it.
    #[arg(long, global = true, env = "UQKIT_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct StudyArgs {
    /// Study configuration file.
    #[arg(long, short)]
    config: PathBuf,

    /// Path of the main result file. Its directory replaces [output] directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Study configuration file. Optional when --variant and --in are given.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Model variant, overriding [model] variant.
    #[arg(long)]
    variant: Option<String>,

    /// Table of input points, overriding [model] input.
    #[arg(long = "in")]
    input: Option<PathBuf>,

    /// Path of the evaluated table. Its directory replaces [output] directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SensitivityArgs {
    #[command(flatten)]
    study: StudyArgs,

    /// Sensitivity method, overriding [sensitivity] method.
    #[arg(long, value_parser = ["morris", "fast", "sobol"])]
    method: Option<String>,
}

#[derive(clap::Args)]
struct ValidateArgs {
    /// Study configuration file.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a design of experiments over the declared inputs.
    Sample(StudyArgs),
    /// Evaluate a benchmark model on a design or on a table of points.
    Model(ModelArgs),
    /// Propagate input uncertainty: mean and standard deviation per depth and time.
    Propagate(StudyArgs),
    /// Fit a polynomial chaos, neural network or kriging surrogate.
    Surrogate(StudyArgs),
    /// Morris, FAST or Sobol sensitivity indices.
    Sensitivity(SensitivityArgs),
    /// Calibrate material parameters against reference values with the simplex.
    Calibrate(StudyArgs),
    /// Multi-objective evolutionary optimisation.
    Optimize(StudyArgs),
    /// Efficient global optimisation with a kriging model.
    Ego(StudyArgs),
    /// Check a configuration and list its problems.
    Validate(ValidateArgs),
}

/// What a subcommand asks for once its flags are folded into overrides.
struct Request {
    action: Action,
    config: Option<PathBuf>,
    overrides: Vec<Override>,
    out: Option<PathBuf>,
}

fn absolute(p: &Path) -> PathBuf {
    std::env::current_dir()
        .map(|d| d.join(p))
        .unwrap_or_else(|_| p.to_path_buf())
}

fn request(cmd: &Cmd) -> Option<Request> {
    let study = |action, a: &StudyArgs| Request {
        action,
        config: Some(a.config.clone()),
        overrides: Vec::new(),
        out: a.out.clone(),
    };
    Some(match cmd {
        Cmd::Sample(a) => study(Action::Sample, a),
        Cmd::Propagate(a) => study(Action::Propagate, a),
        Cmd::Surrogate(a) => study(Action::Surrogate, a),
        Cmd::Calibrate(a) => study(Action::Calibrate, a),
        Cmd::Optimize(a) => study(Action::Optimize, a),
        Cmd::Ego(a) => study(Action::Ego, a),
        Cmd::Sensitivity(a) => {
            let mut r = study(Action::Sensitivity, &a.study);
            if let Some(m) = &a.method {
                r.overrides.push(("sensitivity", "method", m.clone()));
            }
            r
        }
        Cmd::Model(a) => {
            let mut overrides = Vec::new();
            if let Some(v) = &a.variant {
                overrides.push(("model", "variant", v.clone()));
            }
            if let Some(p) = &a.input {
                overrides.push(("model", "input", absolute(p).to_string_lossy().into_owned()));
            }
            Request {
                action: Action::Model,
                config: a.config.clone(),
                overrides,
                out: a.out.clone(),
            }
        }
        Cmd::Validate(_) => return None,
    })
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for action in Action::ALL {
        let help = key_help(action.sections());
        cmd = cmd.mut_subcommand(action.name(), |c| c.after_help(help));
    }
    let all = [
        "inputs",
        "design",
        "dependence",
        "model",
        "surrogate",
        "sensitivity",
        "calibrate",
        "optimize",
        "ego",
        "output",
    ];
    cmd.mut_subcommand("validate", |c| c.after_help(key_help(&all)))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Cmd::Validate(args) = &cli.command {
        let diags = validate_config(&args.config);
        for d in &diags {
            println!("{d}");
        }
        return if diags.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(Vec::new()))
        };
    }
    let req = request(&cli.command).expect("validate handled above");
    if req.config.is_none() && req.overrides.len() < 2 {
        return Err(CliError::Config(vec![Diagnostic::new(
            "model",
            "",
            "without --config both --variant and --in are required",
        )]));
    }
    let (mut study, mut diags) = load_with(req.config.as_deref(), &req.overrides).map_err(CliError::Io)?;
    diags.extend(requirements(&study, req.action));
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }
    let mut primary = None;
    if let Some(out) = &req.out {
        match out.parent().filter(|d| !d.as_os_str().is_empty()) {
            Some(dir) => study.output_dir = absolute(dir),
            None if req.config.is_none() => study.output_dir = absolute(Path::new(".")),
            None => {}
        }
        primary = Some(
            out.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    let ctx = if cli.threads > 1 {
        EvalContext::with_threads(cli.threads)
    } else {
        EvalContext::serial()
    };
    for path in run(req.action, &study, &ctx, primary.as_deref())? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches: ArgMatches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let text = e.to_string();
            if !text.is_empty() {
                eprintln!("{text}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
