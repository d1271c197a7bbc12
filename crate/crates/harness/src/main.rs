use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hedb_core::data::TableSchema;
use hedb_core::query::QueryKind;
use hedb_harness::bench::{self, BenchReport};
use hedb_harness::diff::{self, DiffConfig};

#[derive(Parser)]
#[command(name = "hedb-bench", about = "Operation counts, timings and differential checks for hedb")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operation counts of SELECT, UPDATE and DELETE.
    Ops {
        #[arg(long, default_value_t = 10)]
        rows: usize,
        /// Schema file, one `name:kind:bits` per line. Defaults to three 8-bit columns.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Also write the counts as comma-separated values.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Wall time of encrypted integer products.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        lambdas: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        widths: Vec<usize>,
        /// Also time a recrypt at the smallest lambda and extrapolate a SELECT.
        #[arg(long)]
        recrypt: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Differential run of the encrypted pipeline against the plaintext oracle.
    Diff {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        scenarios: usize,
        #[arg(long, default_value_t = 2)]
        lambda: u32,
        /// Inject one circuit fault by name, e.g. EqFactorXor.
        #[arg(long)]
        fault: Option<String>,
        /// Replay a single scenario seed from a report.
        #[arg(long)]
        only: Option<u64>,
        /// Run the suite once per catalogued fault and check each is caught.
        #[arg(long)]
        mutants: bool,
    },
}

fn load_schema(path: &Path) -> Result<TableSchema> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    TableSchema::parse_lines(name, &text).with_context(|| format!("parsing {}", path.display()))
}

fn write_csv(path: &Option<PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ops { rows, schema, csv } => {
            let schema = match schema {
                Some(p) => load_schema(&p)?,
                None => bench::default_schema(),
            };
            let report = BenchReport {
                ops: bench::bench_ops(&schema, rows)?,
                ..Default::default()
            };
            println!("{}", bench::format_ops(&report.ops, rows, &schema));
            write_csv(&csv, &bench::ops_csv(&report.ops))?;
            Ok(true)
        }
        Command::Timing {
            lambdas,
            widths,
            recrypt,
            seed,
            csv,
        } => {
            let timing = bench::bench_timing(&lambdas, &widths, seed)?;
            println!("{}", bench::format_timing(&timing));
            write_csv(&csv, &bench::timing_csv(&timing))?;
            if recrypt {
                let lambda = lambdas.iter().copied().min().unwrap_or(2);
                let t = bench::bench_recrypt(lambda, seed)?;
                let ops = bench::bench_ops(&bench::default_schema(), 10)?;
                let select = ops
                    .iter()
                    .find(|r| r.kind == QueryKind::Select)
                    .map(|r| r.counts.additions + r.counts.multiplications);
                println!("{}", bench::format_recrypt(&[t], select));
            }
            Ok(timing.iter().all(|r| r.correct))
        }
        Command::Diff {
            seed,
            scenarios,
            lambda,
            fault,
            only,
            mutants,
        } => {
            let fault = match fault {
                Some(name) => match diff::parse_fault(&name) {
                    Some(f) => Some(f),
                    None => bail!("unknown fault {name}"),
                },
                None => None,
            };
            if let Some(s) = only {
                return match diff::replay(seed, s, lambda, fault)? {
                    Ok(()) => {
                        println!("scenario {s}: pass");
                        Ok(true)
                    }
                    Err(m) => {
                        println!("scenario {s}: MISMATCH\n{m}");
                        Ok(false)
                    }
                };
            }
            if mutants {
                let mut all = true;
                for (f, r) in diff::mutation_catalog(seed, scenarios, lambda)? {
                    let caught = !r.passed();
                    all &= caught;
                    println!(
                        "{:<20} {} after {} scenarios",
                        format!("{f:?}"),
                        if caught { "caught" } else { "MISSED" },
                        r.run_count()
                    );
                }
                return Ok(all);
            }
            let mut cfg = DiffConfig::new(seed, scenarios);
            cfg.lambda = lambda;
            cfg.fault = fault;
            let report = diff::differential_run(&cfg)?;
            println!("{}", report.summary());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
