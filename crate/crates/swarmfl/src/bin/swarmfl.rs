//! Batch CLI: run one experiment, run a whole suite, or audit a run
//! directory. All outputs are CSV/JSON-lines files; plotting is left to
//! external tools.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swarmfl::harness::{self, ExperimentConfig, SuiteName};

#[derive(Parser)]
#[command(
    name = "swarmfl",
    version,
    about = "Blockchain-secured federated learning swarm simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its run directory.
    Run {
        /// TOML experiment config; paper defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Output directory for metrics.csv, blocks.jsonl, events.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named experiment suite across seeds.
    Suite {
        /// exp1 | exp2-faulty | exp2-malicious | exp3-smart
        #[arg(long, value_parser = parse_suite)]
        name: SuiteName,
        /// Comma-separated seed list; paper repetition counts when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Base TOML config overriding paper defaults (optional).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a run directory and verify its invariants.
    Audit {
        /// Directory previously written by `run`.
        #[arg(long)]
        run: PathBuf,
    },
}

fn parse_suite(s: &str) -> Result<SuiteName, String> {
    s.parse::<SuiteName>().map_err(|e| e.to_string())
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, swarmfl::Error> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg: ExperimentConfig = toml::from_str(&text)?;
            Ok(cfg)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, swarmfl::Error> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load_config(config.as_ref())?;
            cfg.validate()?;
            let started = std::time::Instant::now();
            let output = harness::run(&cfg, seed)?;
            harness::write_run_dir(&out, &cfg, &output)?;
            let summary = output.summary();
            println!("run seed {seed} finished in {:.1?}", started.elapsed());
            println!("  aggregations:        {}", summary.aggregations);
            println!("  final average loss:  {:.6}", summary.final_loss);
            println!("  shared model loss:   {:.6}", summary.shared_model_loss);
            println!("  tokens honest mean:  {:+.3}", summary.tokens_honest);
            println!("  tokens byz mean:     {:+.3}", summary.tokens_byz);
            println!("  chain bytes:         {}", summary.chain_bytes);
            println!("  bytes/submission:    {:.0}", summary.bytes_per_submission);
            println!("  head:                {}", output.final_head);
            println!("  audit ok:            {}", output.audit.all_ok());
            println!("  wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Suite {
            name,
            seeds,
            config,
            out,
        } => {
            let base = load_config(config.as_ref())?;
            base.validate()?;
            let summary = harness::experiment_suite(name, seeds.as_deref(), &base, &out)?;
            println!("suite {name} complete; summary at {}", summary.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { run } => {
            let checks = harness::audit_run(&run)?;
            let mut ok = true;
            for (label, passed) in &checks {
                println!("{}: {label}", if *passed { "PASS" } else { "FAIL" });
                ok &= passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
