use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edgepool::config::ExperimentConfig;
use edgepool::experiment::{
    fit_and_select, plot_data, read_records, read_summary_csv, run_single, run_sweep, write_plot_data, write_sweep,
    Datasets,
};
use edgepool::Result;

#[derive(Parser)]
#[command(name = "edgepool", version, about = "Edge sub-pool provisioning simulator")]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one (k, lambda_max, seed) point and write its JSON record.
    Run {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Run every configured (k, lambda_max, seed) combination.
    Sweep,
    /// Fit surrogates on a sweep summary and rank pooling policies.
    Select {
        #[arg(long)]
        require_accuracy: f64,
        /// Summary CSV to learn from; defaults to `<out>/summary.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Workload to rank for; defaults to the largest swept value.
        #[arg(long)]
        lambda_max: Option<f64>,
    },
    /// Aggregate a sweep into the CSV series used by the figures.
    PlotData,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();

    match cli.command {
        Command::Run { k, lambda_max, seed } => {
            let data = Datasets::load(&cfg)?;
            let record = run_single(&cfg, &data, k, lambda_max, seed)?;
            let dir = out.join("runs");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(record.file_name());
            std::fs::write(&path, record.to_json()?)?;
            println!(
                "k={k} lambda_max={lambda_max} seed={seed} accuracy={:.4} avg_ru_per_s={:.4} -> {}",
                record.final_accuracy,
                record.cost.average_ru_per_s,
                path.display()
            );
        }
        Command::Sweep => {
            let data = Datasets::load(&cfg)?;
            let result = run_sweep(&cfg, &data)?;
            write_sweep(&out, &result)?;
            println!(
                "{} runs, {} failed -> {}",
                result.records.len(),
                result.failures.len(),
                out.join("summary.csv").display()
            );
            if !result.failures.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Select {
            require_accuracy,
            input,
            lambda_max,
        } => {
            let rows = read_summary_csv(&input.unwrap_or_else(|| out.join("summary.csv")))?;
            let report = fit_and_select(&cfg, &rows, require_accuracy, lambda_max)?;
            print!("{report}");
            if !report.is_feasible() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::PlotData => {
            let rows = read_summary_csv(&out.join("summary.csv"))?;
            let records = read_records(&out.join("runs"))?;
            let dir = out.join("plot-data");
            write_plot_data(&dir, &plot_data(&rows, &records))?;
            println!("plot data -> {}", dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
