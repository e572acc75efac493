//! `tifl`: dataset synthesis, training, feature extraction, classification
//! and filter visualization from the command line.
//!
//! Every option can come from `--config FILE` (`key=value` lines) or from
//! its `--key` flag; flags win. Exit status is 0 on success, 1 on a usage
//! error and 2 on a runtime error, with a one-line `error:` message.

mod commands;
mod config;

use std::fs;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Arg, ArgMatches, Command};

use commands::SUBCOMMANDS;
use config::{parse_config_text, usage, RunConfig, UsageError};

fn cli() -> Command {
    let mut cmd = Command::new("tifl")
        .about("Transformation-invariant feature learning")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in &SUBCOMMANDS {
        let mut c = Command::new(sub.name).about(sub.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key=value file; flags override its entries"),
        );
        for key in sub.keys {
            let mut help = key.help.to_string();
            if let Some(d) = key.default {
                help.push_str(&format!(" [default: {d}]"));
            } else if key.required {
                help.push_str(" (required)");
            }
            c = c.arg(Arg::new(key.name).long(key.name).value_name("VALUE").help(help));
        }
        cmd = cmd.subcommand(c);
    }
    cmd
}

fn resolve(name: &str, m: &ArgMatches) -> anyhow::Result<RunConfig> {
    let sub = SUBCOMMANDS.iter().find(|s| s.name == name).expect("registered subcommand");
    let file = match m.get_one::<String>("config") {
        Some(p) => match fs::read_to_string(p) {
            Ok(text) => parse_config_text(&text)?,
            Err(e) => return usage(format!("cannot read config {p}: {e}")),
        },
        None => Vec::new(),
    };
    let flags: Vec<(String, String)> = sub
        .keys
        .iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    RunConfig::resolve(name, sub.keys, &file, &flags)
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let (name, sub_matches) = matches.subcommand().expect("subcommand required");
    let mut cfg = match resolve(name, sub_matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            eprintln!("run 'tifl {name} --help' for the accepted options");
            return ExitCode::from(1);
        }
    };
    let sub = SUBCOMMANDS.iter().find(|s| s.name == name).expect("registered subcommand");
    match (sub.run)(&mut cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(2)
        }
    }
}
