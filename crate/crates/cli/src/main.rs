mod args;
mod commands;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// Failures the CLI distinguishes: bad invocations exit with 2, failures
/// after validation with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] lipreg::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let matches = Cli::command().get_matches();
    let subcommand = matches.subcommand_name().unwrap_or_default().to_string();
    match resolve(&matches).and_then(commands::run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => exit_usage(&subcommand, &msg),
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(e.exit_code())
        }
    }
}

/// Prints the message with the subcommand's usage line and exits with 2.
fn exit_usage(subcommand: &str, msg: &str) -> ! {
    let kind = if msg.contains("required") {
        ErrorKind::MissingRequiredArgument
    } else {
        ErrorKind::InvalidValue
    };
    let mut cli = Cli::command();
    cli.build();
    match cli.find_subcommand_mut(subcommand) {
        Some(sub) => sub.error(kind, one_line(msg)).exit(),
        None => cli.error(kind, one_line(msg)).exit(),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds the command from the parsed flags or, with `--config`, from a saved
/// `config_used.json`. Only `--output-dir` may accompany `--config`.
fn resolve(matches: &ArgMatches) -> CliResult<Command> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let command = cli.command;
    let Some(config_path) = command.config_file().cloned() else {
        return Ok(command);
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let definition = Cli::command();
    let flags: Vec<String> = definition
        .find_subcommand(name)
        .expect("parsed subcommand exists")
        .get_arguments()
        .map(|a| a.get_id().to_string())
        .collect();
    let extra: Vec<String> = sub
        .ids()
        .filter(|id| flags.iter().any(|f| f == id.as_str()))
        .filter(|id| !matches!(id.as_str(), "config" | "output_dir"))
        .filter(|id| sub.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .map(|id| format!("--{}", id.as_str().replace('_', "-")))
        .collect();
    if !extra.is_empty() {
        return Err(CliError::Usage(format!(
            "--config cannot be combined with {}",
            extra.join(", ")
        )));
    }
    let output_override = (sub.value_source("output_dir") == Some(ValueSource::CommandLine))
        .then(|| command.output_dir().clone());

    let mut loaded = load_config(&config_path)?;
    if loaded.name() != name {
        return Err(CliError::Usage(format!(
            "{} holds a `{}` configuration, not `{name}`",
            config_path.display(),
            loaded.name()
        )));
    }
    if let Some(dir) = output_override {
        loaded.set_output_dir(dir);
    }
    Ok(loaded)
}

fn load_config(path: &Path) -> CliResult<Command> {
    let text = read_input(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Run(lipreg::Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    })
}

/// Reads a file given on the command line; a missing file is a usage error.
pub fn read_input(path: &Path) -> CliResult<String> {
    require_file(path)?;
    std::fs::read_to_string(path).map_err(|e| lipreg::Error::io(path, e).into())
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("file not found: {}", path.display())))
    }
}

pub fn required<T: Clone>(value: &Option<T>, flag: &str) -> CliResult<T> {
    value
        .clone()
        .ok_or_else(|| CliError::Usage(format!("the following required argument was not provided: {flag}")))
}

pub fn required_path(value: &Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    let p = required(value, flag)?;
    require_file(&p)?;
    Ok(p)
}
