use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fedhql::config::ExperimentConfig;
use fedhql::metrics::{read_csv, summarize, write_csv};
use fedhql::orchestrator::{run_experiment, Mode, TransportKind};
use fedhql::verify;

/// Full-scale CartPole budget per agent.
const FULL_BUDGET: u64 = 2_000_000;

#[derive(Parser)]
#[command(name = "fedhql", version, about = "Federated Q-learning with heterogeneous black-box agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the federated experiment described by a config file.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Override the consensus/disagreement trade-off.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run the same agents independently, without federation.
    Baseline {
        #[command(flatten)]
        common: RunArgs,
    },
    /// Run the built-in self-check suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarise CSV outputs: final max mean return with 80% bootstrap intervals.
    Report {
        /// Directory containing `<condition>_seed<k>.csv` files.
        #[arg(long, default_value = "out")]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Tcp,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated run seeds; defaults to the config's list.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long, value_enum, default_value = "inproc")]
    transport: TransportArg,
    /// Port for the TCP backend (0 picks a free one).
    #[arg(long, default_value_t = 0)]
    tcp_port: u16,
    /// Output directory; FEDHQL_OUT takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full 2e6-interaction budget per agent.
    #[arg(long)]
    full_scale: bool,
}

fn condition_label(mode: Mode, cfg: &ExperimentConfig) -> String {
    match mode {
        Mode::Independent => "baseline".to_string(),
        Mode::Federated => format!("fedhql_lambda{}", cfg.fed.lambda),
    }
}

fn output_dir(args: &RunArgs, cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os("FEDHQL_OUT")
        .map(PathBuf::from)
        .or_else(|| args.out.clone())
        .unwrap_or_else(|| cfg.output_dir.clone())
}

fn execute(args: &RunArgs, lambda: Option<f64>, mode: Mode) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(l) = lambda {
        cfg.fed.lambda = l;
    }
    if let Some(seeds) = &args.seed {
        cfg.seeds.clone_from(seeds);
    }
    if args.full_scale {
        cfg.budget_per_agent = FULL_BUDGET;
    }
    cfg.validate()?;
    let transport = match args.transport {
        TransportArg::Inproc => TransportKind::InProc,
        TransportArg::Tcp => TransportKind::Tcp { port: args.tcp_port },
    };
    let dir = output_dir(args, &cfg);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let label = condition_label(mode, &cfg);
    for &seed in &cfg.seeds {
        let result = run_experiment(&cfg, seed, mode, transport)?;
        let path = dir.join(format!("{label}_seed{seed}.csv"));
        write_csv(BufWriter::new(File::create(&path)?), &result.rows)?;
        let scores = fedhql::metrics::final_scores(&result.rows);
        let system = scores.get("system").copied().unwrap_or(f64::NAN);
        println!(
            "{label} seed {seed}: system max mean return {system:.2}, server steps {}, wrote {}",
            result.ledger.server,
            path.display()
        );
    }
    Ok(())
}

fn report(dir: &Path, seed: u64) -> Result<()> {
    let mut by_condition: BTreeMap<String, Vec<_>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    for path in entries {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((condition, _)) = stem.rsplit_once("_seed") else {
            continue;
        };
        let rows = read_csv(File::open(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        by_condition.entry(condition.to_string()).or_default().push(rows);
    }
    if by_condition.is_empty() {
        bail!("no <condition>_seed<k>.csv files in {}", dir.display());
    }
    println!("condition,agent,runs,mean_max_mean_return,ci80_low,ci80_high");
    for (condition, runs) in &by_condition {
        for line in summarize(condition, runs, seed)? {
            println!(
                "{},{},{},{:.3},{:.3},{:.3}",
                line.condition, line.agent, line.runs, line.mean, line.ci_low, line.ci_high
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { common, lambda } => execute(common, *lambda, Mode::Federated),
        Command::Baseline { common } => execute(common, None, Mode::Independent),
        Command::Verify { seed } => {
            let results = verify::run_all(*seed);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                return ExitCode::FAILURE;
            }
        }
        Command::Report { dir, seed } => report(dir, *seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
