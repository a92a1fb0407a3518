use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use erudite_sim::analytic::reference_table;
use erudite_sim::harness::{self, HarnessError, SweepParam};
use erudite_sim::metrics::MetricsReport;
use erudite_sim::scenario::PathChoice;
use erudite_sim::units::{Bandwidth, Bytes};

#[derive(Parser)]
#[command(name = "erudite-sim", version, about = "CPU-initiated vs GPU-initiated storage access simulator")]
struct Cli {
    /// Output directory for CSV files (overrides ERUDITE_SIM_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the closed-form reference table.
    Analytic {
        /// Memory bandwidth for an extra roofline row, e.g. 1555GB.
        #[arg(long, requires = "elem", value_parser = parse_bw)]
        bw: Option<Bandwidth>,
        /// Element size for the extra row, e.g. 2 or 4B.
        #[arg(long, value_parser = parse_elem)]
        elem: Option<Bytes>,
        /// Peak ops/s; adds the required reuse for the extra row.
        #[arg(long, requires = "bw")]
        peak: Option<u64>,
    },
    /// Run a scenario file (or preset:<name>) to its horizon.
    Simulate {
        scenario: String,
        /// Exit 1 if any expectation in the scenario fails.
        #[arg(long)]
        check: bool,
    },
    /// Run both paths on the same scenario side by side.
    Compare {
        scenario: String,
        #[arg(long)]
        check: bool,
    },
    /// Run one simulation per parameter value.
    Sweep {
        scenario: String,
        #[arg(long)]
        param: SweepParam,
        /// Comma list, or start..end doubling.
        #[arg(long)]
        values: String,
    },
    /// List the built-in presets.
    Presets,
}

fn parse_bw(s: &str) -> Result<Bandwidth, String> {
    s.parse::<u64>()
        .map(Bandwidth)
        .or_else(|_| Bandwidth::parse(s))
        .map_err(|e| e.to_string())
}

fn parse_elem(s: &str) -> Result<Bytes, String> {
    s.parse::<u64>()
        .map(Bytes)
        .or_else(|_| Bytes::parse(s))
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<u8, HarnessError> {
    let out = harness::output_dir(cli.out);
    match cli.cmd {
        Cmd::Analytic { bw, elem, peak } => {
            let table = reference_table();
            let custom = match (bw, elem) {
                (Some(bw), Some(elem)) => harness::custom_analytic(bw, elem, peak)?,
                _ => Vec::new(),
            };
            println!(
                "{:<20} {:<32} {:>14} {:<9} {:>14} {:>9}",
                "quantity", "inputs", "value", "unit", "target", "error"
            );
            for r in &table {
                println!(
                    "{:<20} {:<32} {:>14} {:<9} {:>14} {:>8.3}%",
                    r.quantity,
                    r.inputs,
                    harness::si(r.value),
                    r.unit,
                    harness::si(r.target),
                    r.rel_error() * 100.0
                );
            }
            for r in &custom {
                println!("{:<20} {:<32} {:>14} {:<9}", r.quantity, r.inputs, harness::si(r.value), r.unit);
            }
            let path = harness::write_analytic(&out, &table, &custom)?;
            eprintln!("wrote {}", path.display());
            Ok(0)
        }
        Cmd::Simulate { scenario, check } => {
            let s = harness::resolve_scenario(&scenario)?;
            let outcomes = harness::simulate(&s)?;
            let reports: Vec<&MetricsReport> = outcomes.iter().map(|o| &o.report).collect();
            for r in &reports {
                print_report(r);
            }
            for p in [
                harness::write_metrics(&out, &reports)?,
                harness::write_timeline(&out, &reports)?,
                harness::write_steps(&out, &reports)?,
            ] {
                eprintln!("wrote {}", p.display());
            }
            Ok(expectations(&s, &reports, check))
        }
        Cmd::Compare { scenario, check } => {
            let s = harness::resolve_scenario(&scenario)?;
            if s.path != PathChoice::Both {
                return Err(HarnessError::Config {
                    source_name: scenario,
                    line: None,
                    message: "path: compare needs path = \"both\"".into(),
                });
            }
            let c = harness::compare(&s)?;
            println!("{:<18} {:>16} {:>16}", "metric", "baseline", "erudite");
            for (name, b, e) in harness::compare_rows(&c) {
                println!("{name:<18} {:>16} {:>16}", harness::si(b), harness::si(e));
            }
            println!("{:<18} {:>16} {:>15.2}x", "speedup", "", c.speedup());
            let path = harness::write_compare(&out, &c)?;
            eprintln!("wrote {}", path.display());
            Ok(expectations(&s, &[&c.baseline, &c.erudite], check))
        }
        Cmd::Sweep {
            scenario,
            param,
            values,
        } => {
            let s = harness::resolve_scenario(&scenario)?;
            let values = param.parse_values(&values).map_err(|m| HarnessError::Config {
                source_name: "--values".into(),
                line: None,
                message: m,
            })?;
            let points = harness::sweep(&s, param, &values)?;
            println!(
                "{:>12} {:<9} {:>12} {:>12} {:>12} {:>8}",
                param.name(),
                "path",
                "useful B/s",
                "iops",
                "p50 ns",
                "amp"
            );
            for p in &points {
                let r = &p.report;
                println!(
                    "{:>12} {:<9} {:>12} {:>12} {:>12} {:>8.3}",
                    p.value,
                    r.path,
                    harness::si(r.useful_bandwidth),
                    harness::si(r.iops),
                    r.latency_p50_ns,
                    r.amplification
                );
            }
            let path = harness::write_sweep(&out, param, &points)?;
            eprintln!("wrote {}", path.display());
            Ok(0)
        }
        Cmd::Presets => {
            for (name, _) in harness::PRESETS {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn print_report(r: &MetricsReport) {
    println!("[{}]", r.path);
    for (name, v) in r.scalars() {
        println!("  {name:<18} {}", harness::si(v));
    }
    for s in &r.steps {
        println!("  step {:<20} {:.1} ns", s.name, s.mean_ns);
    }
}

fn expectations(s: &erudite_sim::scenario::Scenario, reports: &[&MetricsReport], check: bool) -> u8 {
    let results = harness::check_expectations(s, reports);
    for r in &results {
        println!("{r}");
    }
    u8::from(check && results.iter().any(|r| !r.pass))
}
