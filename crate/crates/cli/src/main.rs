//! `idtrack`: run single settings, sweep lambda, and check the tree search
//! against the exhaustive oracle.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use idtrack_core::planners::SupportOverflow;
use idtrack_core::simbench::{
    oracle_check, run_sweep, select_lambda, write_csv, Algo, CsvRecord, OracleCheckSpec,
    PlannerSpec, Scenario, SweepRow, SweepSpec,
};
use idtrack_core::SearchConfig;

#[derive(Parser)]
#[command(
    name = "idtrack",
    version,
    about = "Sensor scheduling for intruder tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one lambda and write one CSV row.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Simulate a list of lambdas and write one CSV row per lambda.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, ascending.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
        )]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Also report the best lambda whose average sensor count fits this budget.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Compare the tree search with exhaustive expectimax on small random instances.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 50_000)]
        iterations: usize,
        /// Matches needed to pass; defaults to 90% of the instances, rounded up.
        #[arg(long)]
        required_matches: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    IdTg,
    IdMcts,
    IdGammaMcts,
    QMdp,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::IdTg => Algo::IdTg,
            AlgoArg::IdMcts => Algo::IdMcts,
            AlgoArg::IdGammaMcts => Algo::IdGammaMcts,
            AlgoArg::QMdp => Algo::QMdp,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Preset name (line41, grid8, grid16) or a scenario JSON file.
    #[arg(long)]
    scenario: String,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Coverage level for id_tg.
    #[arg(long, default_value_t = 0.6)]
    gamma: f64,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 15)]
    max_depth: usize,
    #[arg(long, default_value_t = 2.0)]
    uct_c: f64,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    restart_threshold: Option<usize>,
    #[arg(long)]
    no_restart: bool,
    /// Reveal the intruder's position to the planner after every period.
    #[arg(long)]
    reveal_state: bool,
    /// Restrict id_mcts to the most probable positions instead of failing on wide supports.
    #[arg(long)]
    truncate_support: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::load(&self.scenario)
            .with_context(|| format!("loading scenario {}", self.scenario))?;
        if let Some(h) = self.horizon {
            s.horizon = h;
        }
        if let Some(t) = self.restart_threshold {
            s.restart_threshold = t;
        }
        s.restart_enabled &= !self.no_restart;
        s.reveal_state = self.reveal_state;
        s.validate()?;
        Ok(s)
    }

    fn planner(&self) -> PlannerSpec {
        PlannerSpec {
            gamma: self.gamma,
            search: SearchConfig {
                iterations: self.iterations,
                max_depth: self.max_depth,
                uct_c: self.uct_c,
                ..SearchConfig::default()
            },
            overflow: if self.truncate_support {
                SupportOverflow::Truncate
            } else {
                SupportOverflow::Fail
            },
            ..PlannerSpec::new(self.algo.into())
        }
    }

    /// Runs the sweep and writes the CSV.
    fn sweep(&self, lambdas: Vec<f64>, runs: usize) -> Result<Vec<SweepRow>> {
        let scenario = self.scenario()?;
        let mut spec = SweepSpec::new(lambdas, self.planner(), self.seed);
        spec.runs_per_lambda = runs;
        let rows = run_sweep(&scenario, &spec)?;
        let records: Vec<CsvRecord> = rows
            .iter()
            .map(|r| CsvRecord::from_row(&scenario, spec.planner.algo, self.seed, r))
            .collect();
        self.write(&records)?;
        Ok(rows)
    }

    fn write(&self, records: &[CsvRecord]) -> Result<()> {
        if self.out.as_os_str() == "-" {
            write_csv(io::stdout().lock(), records)?;
        } else {
            let file = File::create(&self.out)
                .with_context(|| format!("creating {}", self.out.display()))?;
            let mut out = BufWriter::new(file);
            write_csv(&mut out, records)?;
            out.flush()?;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            common,
            lambda,
            runs,
        } => {
            common.sweep(vec![lambda], runs)?;
        }
        Command::Sweep {
            common,
            lambdas,
            runs,
            budget,
        } => {
            let rows = common.sweep(lambdas, runs)?;
            if let Some(b) = budget {
                let lambda = select_lambda(&rows, b)?;
                eprintln!("best lambda within budget {b}: {lambda}");
            }
        }
        Command::OracleCheck {
            seed,
            instances,
            iterations,
            required_matches,
        } => {
            if instances == 0 {
                bail!("--instances must be at least 1");
            }
            let spec = OracleCheckSpec {
                seed,
                instances,
                iterations,
                required_matches: required_matches.unwrap_or((instances * 9).div_ceil(10)),
                ..OracleCheckSpec::default()
            };
            let report = oracle_check(&spec)?;
            for case in &report.cases {
                println!(
                    "instance {:>2} lambda {:.1}: oracle {:?} value {:.4} | search {:?} estimate {:.4} | {}",
                    case.instance,
                    case.lambda,
                    case.oracle_action,
                    case.oracle_value,
                    case.search_action,
                    case.search_value,
                    if case.matches() { "match" } else { "MISMATCH" }
                );
            }
            println!(
                "{}/{} root actions match, worst relative value error {:.4}",
                report.matches(),
                report.cases.len(),
                report.worst_relative_error()
            );
            if !report.passes() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
