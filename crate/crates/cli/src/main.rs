use std::path::PathBuf;
use std::process::ExitCode;

use levysheet_cli::{Command, Invocation};

const USAGE: &str = "\
levysheet — Lévy-sheet Monte Carlo and stochastic heat equation experiments

USAGE:
  levysheet <SUBCOMMAND> [--config <path>] [--threads <k>] [--out <dir>] [--seed <u64>]

SUBCOMMANDS:
  simulate-sheet      sample one sheet per configured epsilon and dump the paths
  approx-field        sample the complex field at the eval points, emit CSV
  verify-convergence  run the full statistical verification suite (exit 0 iff all pass)
  spde-run            white-noise and kernel-driven heat solves, emit marginal CSV
  spde-compare        law-comparison report between the two solution families
  emit-plot-data      long-format CSV of field samples over the epsilon list
  default-config      print the default configuration document

FLAGS:
  --config <path>   JSON experiment configuration (required except default-config)
  --threads <k>     worker pool size (default: all cores; results do not depend on it)
  --out <dir>       output directory override
  --seed <u64>      seed override
  --help            show this help
";

fn parse_args(args: &[String]) -> Result<Invocation, String> {
    let mut it = args.iter();
    let first = it.next().ok_or("missing subcommand")?;
    if first == "--help" || first == "-h" {
        print!("{USAGE}");
        std::process::exit(0);
    }
    let command =
        Command::parse(first).ok_or_else(|| format!("unknown subcommand: {first}"))?;
    let mut inv = Invocation {
        command,
        config_path: None,
        threads: None,
        out: None,
        seed: None,
    };
    while let Some(arg) = it.next() {
        let mut take = |name: &str| -> Result<String, String> {
            it.next()
                .cloned()
                .ok_or_else(|| format!("missing value for {name}"))
        };
        match arg.as_str() {
            "--config" => inv.config_path = Some(PathBuf::from(take("--config")?)),
            "--out" => inv.out = Some(PathBuf::from(take("--out")?)),
            "--threads" => {
                let v = take("--threads")?;
                let k: usize = v
                    .parse()
                    .map_err(|_| format!("invalid --threads value: {v}"))?;
                if k == 0 {
                    return Err("--threads must be >= 1".into());
                }
                inv.threads = Some(k);
            }
            "--seed" => {
                let v = take("--seed")?;
                inv.seed = Some(v.parse().map_err(|_| format!("invalid --seed value: {v}"))?);
            }
            "--help" | "-h" => {
                print!("{USAGE}");
                std::process::exit(0);
            }
            other => return Err(format!("unknown argument: {other}")),
        }
    }
    Ok(inv)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let inv = match parse_args(&args) {
        Ok(inv) => inv,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match levysheet_cli::execute(&inv) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
