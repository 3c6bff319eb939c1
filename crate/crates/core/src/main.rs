use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use toy_core::harness::report::report;
use toy_core::harness::runner::run;
use toy_core::harness::scenario::Scenario;
use toy_core::harness::{expand, oracle, Sweep};

#[derive(Parser)]
#[command(name = "toysim", about = "Deterministic BFT blockchain simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario (or a sweep of scenarios) and write trace and report.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<u64>,
        /// Trace output path; with --sweep, a label is appended per run.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report output path (JSON); printed to stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Evaluate the oracle and exit 1 on any violation.
        #[arg(long)]
        check: bool,
        /// Batch axis `param=a,b,c` or `param=a..b[:step]` over n, f, beta, sigma.
        #[arg(long)]
        sweep: Vec<String>,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("toysim: {msg}");
    ExitCode::from(2)
}

fn with_label(p: &Path, label: &str) -> PathBuf {
    if label.is_empty() {
        return p.to_path_buf();
    }
    let tag = label.replace([',', '='], "_");
    let stem = p
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match p.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    p.with_file_name(name)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let Cmd::Run {
        scenario,
        seed,
        rounds,
        out,
        report: report_path,
        check,
        sweep,
    } = cli.cmd;

    let mut base = match &scenario {
        Some(p) => {
            let text = match fs::read_to_string(p) {
                Ok(t) => t,
                Err(e) => return usage(format!("{}: {e}", p.display())),
            };
            match Scenario::parse(&text) {
                Ok(s) => s,
                Err(e) => return usage(format!("{}: {e}", p.display())),
            }
        }
        None => Scenario::new(4, 1, 0),
    };
    if let Some(s) = seed {
        base.seed = s;
    }
    if let Some(r) = rounds {
        base.rounds = r;
    }
    let sweeps: Vec<Sweep> = match sweep.iter().map(|s| s.parse()).collect() {
        Ok(v) => v,
        Err(e) => return usage(e),
    };
    let runs = match expand(&base, &sweeps) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };

    let mut failed = false;
    for (label, sc) in runs {
        let result = match run(&sc) {
            Ok(r) => r,
            Err(e) => return usage(e),
        };
        let trace = &result.trace;
        if sc.beyond_f {
            eprintln!("toysim: warning: more than f faults configured; oracle disabled");
        }
        if let Some(p) = &out {
            if let Err(e) = fs::write(with_label(p, &label), trace.to_text()) {
                return usage(format!("{}: {e}", p.display()));
            }
        }
        let json = report(trace).to_json();
        match &report_path {
            Some(p) => {
                if let Err(e) = fs::write(with_label(p, &label), json + "\n") {
                    return usage(format!("{}: {e}", p.display()));
                }
            }
            None => {
                if !label.is_empty() {
                    println!("# {label}");
                }
                println!("{json}");
            }
        }
        if check {
            for v in oracle::check(trace) {
                failed = true;
                eprintln!(
                    "{}{v}",
                    if label.is_empty() {
                        String::new()
                    } else {
                        format!("{label}: ")
                    }
                );
            }
        }
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
