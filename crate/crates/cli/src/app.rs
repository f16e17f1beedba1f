//! Argument handling and the top-level run: config layering, output files,
//! replay and exit codes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use crate::commands::{execute, COMMANDS};
use crate::output::{read_sidecar, write_outputs, Report};
use crate::presets;
use crate::{CliError, CliResult, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "fesim",
    version,
    about = "Finite-energy and finite-temperature expectation values from Loschmidt amplitudes",
    after_help = "Commands: ldos, filtered, double-filtered, find-energy, qamc-micro, qamc-canonical, \
                  bounds-check, sign-reconstruct, crosscheck, run, replay <sidecar.json>, presets, show-config.\n\
                  Any config field can be overridden with --key value (lists are comma separated)."
)]
struct Cli {
    /// Command to run.
    command: String,
    /// Start from a figure preset.
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` config file applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path; the JSON sidecar goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// `--key value` overrides, or the sidecar path for `replay`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    rest: Vec<String>,
}

/// Parsed invocation before any work is done.
#[derive(Debug, Clone, PartialEq)]
pub enum Invocation {
    Run { config: RunConfig, out: PathBuf },
    Replay { sidecar: PathBuf, out: Option<PathBuf> },
    ListPresets,
    /// Resolved config text, without running.
    ShowConfig(RunConfig),
    /// Help or version text.
    Print(String),
}

/// Resolves arguments (without the program name) into an invocation.
pub fn parse_invocation<I, T>(args: I) -> CliResult<Invocation>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("fesim")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return Ok(Invocation::Print(e.to_string()))
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let mut preset = cli.preset;
    let mut config_file = cli.config;
    let mut out = cli.out;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut positional = Vec::new();
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(threads) = cli.threads {
        overrides.push(("threads".into(), threads.to_string()));
    }
    let mut rest = cli.rest.into_iter();
    while let Some(arg) = rest.next() {
        let Some(key) = arg.strip_prefix("--") else {
            positional.push(arg);
            continue;
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = rest
                    .next()
                    .ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
                (key.to_string(), v)
            }
        };
        match key.as_str() {
            "preset" => preset = Some(value),
            "config" => config_file = Some(value.into()),
            "out" => out = Some(value.into()),
            _ => overrides.push((key, value)),
        }
    }

    match cli.command.as_str() {
        "presets" => return Ok(Invocation::ListPresets),
        "replay" => {
            let [sidecar] = positional.as_slice() else {
                return Err(CliError::Usage("replay takes exactly one sidecar path".into()));
            };
            if !overrides.is_empty() || preset.is_some() || config_file.is_some() {
                return Err(CliError::Usage("replay takes only --out".into()));
            }
            return Ok(Invocation::Replay {
                sidecar: sidecar.into(),
                out,
            });
        }
        _ => {}
    }
    if let Some(p) = positional.first() {
        return Err(CliError::Usage(format!("unexpected argument {p:?}")));
    }

    let mut config = match &preset {
        Some(name) => presets::preset(name)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &config_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.apply_text(&text)?;
    }
    for (key, value) in &overrides {
        config.set(key, value)?;
    }
    match cli.command.as_str() {
        "show-config" => return Ok(Invocation::ShowConfig(config)),
        "run" => {
            if preset.is_none() && config_file.is_none() {
                return Err(CliError::Usage("run needs --preset or --config".into()));
            }
        }
        cmd if COMMANDS.contains(&cmd) => {
            if preset.is_some() && config.command != cmd {
                return Err(CliError::Usage(format!(
                    "preset {:?} runs {}, not {cmd}",
                    config.preset, config.command
                )));
            }
            config.command = cmd.to_string();
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown command {other:?}; expected one of {}, run, replay, presets, show-config",
                COMMANDS.join(", ")
            )))
        }
    }
    let out = out
        .or_else(|| (!config.out.is_empty()).then(|| PathBuf::from(&config.out)))
        .unwrap_or_else(|| {
            let stem = if config.preset.is_empty() { &config.command } else { &config.preset };
            PathBuf::from(format!("{stem}.csv"))
        });
    Ok(Invocation::Run { config, out })
}

/// Runs a config and writes the CSV and sidecar; returns the report.
pub fn run_to(mut config: RunConfig, out: &Path) -> CliResult<Report> {
    config.out = out.to_string_lossy().into_owned();
    let start = Instant::now();
    let report = execute(&config)?;
    write_outputs(out, &config, &report, start.elapsed().as_secs_f64())?;
    Ok(report)
}

/// Regenerates the CSV described by a sidecar.
pub fn replay(sidecar: &Path, out: Option<&Path>) -> CliResult<Report> {
    let side = read_sidecar(sidecar)?;
    let target = match out {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(&side.config.out),
    };
    run_to(side.config, &target)
}

/// Entry point shared by the binary: returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let outcome = parse_invocation(args).and_then(|inv| match inv {
        Invocation::Print(text) => {
            print!("{text}");
            Ok(0)
        }
        Invocation::ShowConfig(config) => {
            print!("{}", config.to_text());
            Ok(0)
        }
        Invocation::ListPresets => {
            for name in presets::NAMES {
                println!("{name:<6} {}", presets::describe(name).unwrap_or_default());
            }
            Ok(0)
        }
        Invocation::Replay { sidecar, out } => finish(replay(&sidecar, out.as_deref())?, out.as_deref()),
        Invocation::Run { config, out } => finish(run_to(config, &out)?, Some(&out)),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn finish(report: Report, out: Option<&Path>) -> CliResult<i32> {
    for note in &report.notes {
        eprintln!("{note}");
    }
    let code = report.exit_code();
    if let Some(out) = out {
        eprintln!(
            "wrote {} rows to {} (status {})",
            report.table.rows.len(),
            out.display(),
            report.table.status().name()
        );
    }
    Ok(code)
}
