//! `pathint`: command-line front end for the path-integral workbench.

mod commands;
mod output;
mod params;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Arg, ArgMatches, Command};
use pathint_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::output::{flatten, to_csv, to_json, Format, Manifest};
use crate::params::{read_config, Params};

/// Default output directory when `--output-dir` is absent.
const OUTPUT_DIR_ENV: &str = "PATHINT_OUTPUT_DIR";

const COMMON: [&str; 5] = ["config", "format", "output", "output-dir", "digits"];

fn cli() -> Command {
    let mut app = Command::new("pathint")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Path-integral quantum mechanics workbench")
        .subcommand_required(true);
    for spec in &commands::COMMANDS {
        let mut sub = Command::new(spec.name).about(spec.about).allow_negative_numbers(true);
        for k in (spec.keys)() {
            assert!(!COMMON.contains(&k.name), "key {} shadows a common option", k.name);
            let help = match k.default {
                Some(d) => format!("{} [default: {d}]", k.help),
                None => k.help.to_string(),
            };
            let mut arg = Arg::new(k.name).long(k.name).value_name("VALUE").help(help);
            if k.name.contains('-') {
                arg = arg.alias(k.name.replace('-', "_"));
            }
            sub = sub.arg(arg);
        }
        sub = sub
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value file; flags override it"))
            .arg(
                Arg::new("format")
                    .long("format")
                    .value_parser(["json", "csv"])
                    .default_value("json")
                    .help("output format"),
            )
            .arg(Arg::new("output").long("output").value_name("PATH").help("output file; default standard output"))
            .arg(
                Arg::new("output-dir")
                    .long("output-dir")
                    .value_name("DIR")
                    .help(format!("directory for output files [env: {OUTPUT_DIR_ENV}]")),
            )
            .arg(
                Arg::new("digits")
                    .long("digits")
                    .value_parser(clap::value_parser!(u8).range(1..=17))
                    .help("significant digits for numbers; default shortest round-trip"),
            );
        app = app.subcommand(sub);
    }
    app
}

#[derive(Serialize)]
struct Artifact<'a> {
    manifest: &'a Manifest,
    result: &'a serde_json::Value,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Structure(_) => "structure",
        Error::Caustic { .. } => "caustic",
        Error::Capacity(_) => "capacity",
        Error::Precondition(_) => "precondition",
        Error::Config(_) => "config",
        Error::Unsupported(_) => "unsupported",
        Error::GridTooSmall { .. } => "grid-too-small",
        Error::Quadrature { .. } => "quadrature",
        Error::Usage(_) => "usage",
        Error::Io(_) => "io",
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(name: &str, m: &ArgMatches) -> Result<(), Error> {
    let spec = commands::find(name).expect("clap only accepts known subcommands");
    let keys = (spec.keys)();
    let file = match m.get_one::<String>("config") {
        Some(path) => read_config(Path::new(path), &keys)?,
        None => BTreeMap::new(),
    };
    let flags: BTreeMap<String, String> = keys
        .iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    let format = match m.get_one::<String>("format").map(String::as_str) {
        Some("csv") => Format::Csv,
        _ => Format::Json,
    };
    let digits = m.get_one::<u8>("digits").map(|d| *d as usize);

    let mut params = Params::new(keys, file, flags);
    let report = (spec.run)(&mut params)?;

    let mut output_args = vec!["--format".to_string(), format.extension().to_string()];
    if let Some(d) = digits {
        output_args.extend(["--digits".to_string(), d.to_string()]);
    }
    let manifest = Manifest::new(name, params.resolved().clone(), output_args, &report);

    let dir = m
        .get_one::<String>("output-dir")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    let target = match (m.get_one::<String>("output"), dir) {
        (Some(out), Some(dir)) => Some(dir.join(out)),
        (Some(out), None) => Some(PathBuf::from(out)),
        (None, Some(dir)) => Some(dir.join(format!("{name}.{}", format.extension()))),
        (None, None) => None,
    };

    let (primary, side) = match format {
        Format::Json => (to_json(&Artifact { manifest: &manifest, result: &report.result }, digits)?, None),
        Format::Csv => {
            let table = report.table.unwrap_or_else(|| flatten(&report.result));
            (to_csv(&table, digits)?, Some(to_json(&manifest, digits)?))
        }
    };
    match target {
        Some(path) => {
            write_bytes(&path, &primary)?;
            if let Some(side) = side {
                let mut side_path = path.clone().into_os_string();
                side_path.push(".manifest.json");
                write_bytes(Path::new(&side_path), &side)?;
            }
        }
        None => {
            std::io::stdout().write_all(&primary)?;
            if let Some(side) = side {
                std::io::stderr().write_all(&side)?;
            }
        }
    }
    Ok(())
}

fn dispatch(argv: Vec<OsString>) -> ExitCode {
    let matches = match cli().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let text = e.to_string();
                    let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
                    fail("usage", first, 2)
                }
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(error_kind(&e), &e.to_string(), if matches!(e, Error::Usage(_)) { 2 } else { 1 }),
    }
}

fn main() -> ExitCode {
    dispatch(std::env::args_os().collect())
}
