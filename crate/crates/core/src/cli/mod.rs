mod args;
mod commands;
mod manifest;

use std::fmt;

pub use args::Cli;

use args::Command;
use manifest::{Recorder, RunManifest};
use spindoe::config::Config;
use spindoe::Error;

/// Exit status 2 for bad input, 1 for everything the user cannot fix.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence(_) => CliError::Internal(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli, argv: Vec<String>) -> CliResult<()> {
    if let Command::Rerun(r) = &cli.command {
        return rerun(&r.manifest);
    }
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    execute(cli, argv, config, cli.config.as_ref().map(|p| p.display().to_string()))
}

fn execute(cli: &Cli, argv: Vec<String>, config: Config, config_path: Option<String>) -> CliResult<()> {
    let start = std::time::Instant::now();
    let mut rec = Recorder::default();
    let primary = commands::dispatch(cli, &config, &mut rec)?;
    let manifest_path = cli
        .manifest
        .clone()
        .or_else(|| primary.map(|p| manifest::default_path(&p)));
    if let Some(path) = manifest_path {
        let m = RunManifest::new(
            commands::subcommand_name(&cli.command),
            argv,
            cli.seed,
            config,
            config_path,
            rec,
            start.elapsed().as_secs_f64(),
        );
        m.write(&path)?;
    }
    Ok(())
}

fn rerun(path: &std::path::Path) -> CliResult<()> {
    use clap::Parser;
    let m = RunManifest::read(path)?;
    if let Some(cwd) = &m.cwd {
        std::env::set_current_dir(cwd)
            .map_err(|e| CliError::Validation(format!("cannot enter {cwd}: {e}")))?;
    }
    let cli = Cli::try_parse_from(std::iter::once("spindoe".to_string()).chain(m.args.clone()))
        .map_err(|e| CliError::Validation(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(CliError::Validation("manifest records a rerun".into()));
    }
    execute(&cli, m.args.clone(), m.config.clone(), m.config_path.clone())?;
    let mut mismatched = Vec::new();
    for out in &m.outputs {
        let now = manifest::digest_file(std::path::Path::new(&out.path))?;
        if now != out.sha256 {
            mismatched.push(out.path.clone());
        }
    }
    if mismatched.is_empty() {
        println!("reproduced {} output(s)", m.outputs.len());
        Ok(())
    } else {
        Err(CliError::Internal(format!(
            "outputs differ from the manifest: {}",
            mismatched.join(", ")
        )))
    }
}
