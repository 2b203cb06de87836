//! Pipeline front door: ingest, generate, judge, report, mock-serve.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use icalign::config::RunConfig;
use icalign::corpus::{dataset_stats, load_dataset, DatasetKind};
use icalign::report::{ReportOptions, FULL_SCALE_TARGETS};
use icalign::runstore::RunStore;
use std::path::PathBuf;
use std::str::FromStr;

/// Exit code for runs that completed but excluded some pairs.
const EXIT_PARTIAL: i32 = 2;

#[derive(Parser)]
#[command(
    name = "icalign",
    version,
    about = "Measure alignment's effect on response distributions and imitate aligned models in context"
)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "icalign.toml")]
    config: PathBuf,

    /// Run directory name under the configured runs dir.
    #[arg(long, global = true, default_value = "default")]
    run_id: String,

    /// Override the embedding cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a question file and print its summary statistics.
    Ingest {
        /// Dataset schema: conflictingqa or lima_oe.
        #[arg(long)]
        format: String,
        /// Line-delimited question file.
        #[arg(long)]
        path: PathBuf,
    },
    /// Build prompts per strategy and sample models into the run store.
    Generate {
        /// Only run jobs whose strategy is in this comma-separated list.
        #[arg(long)]
        strategies: Option<String>,
        /// Override the demonstration count.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the configured judge protocols over the run store.
    Judge,
    /// Aggregate the run store into CSV tables and figure specs.
    Report {
        /// Comma-separated figure numbers to emit (default 2,3,4).
        #[arg(long, default_value = "2,3,4")]
        figures: String,
        /// Print recorded full-scale reference values next to computed rows.
        #[arg(long)]
        compare_full_scale: bool,
    },
    /// Serve the deterministic mock model/judge/embedding endpoint.
    MockServe {
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Echo prompts back instead of synthesizing responses.
        #[arg(long)]
        echo: bool,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(&cli.config)
        .with_context(|| format!("loading config {}", cli.config.display()))?;
    if let Some(cache_dir) = &cli.cache_dir {
        config.cache_dir = cache_dir.clone();
    }
    Ok(config)
}

/// The frozen copy inside the run directory is the source of truth for
/// judge/report, so flags recorded at generate time (like a strategy
/// filter) carry through. Directory locations stay environmental.
fn effective_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let disk = load_config(cli)?;
    let store = RunStore::open(&disk.runs_dir, &cli.run_id)?;
    if store.config_path().exists() {
        let mut frozen = RunConfig::load(store.config_path())?;
        frozen.runs_dir = disk.runs_dir;
        frozen.cache_dir = disk.cache_dir;
        Ok(frozen)
    } else {
        Ok(disk)
    }
}

fn cmd_ingest(format: &str, path: &PathBuf) -> anyhow::Result<i32> {
    let kind = DatasetKind::from_str(format)?;
    let dataset = load_dataset(path, kind)?;
    let (count, mean_words) = dataset_stats(&dataset)?;
    println!("{count} questions, mean {mean_words:.1} words");
    Ok(0)
}

fn cmd_generate(cli: &Cli, strategies: Option<String>, k: Option<usize>) -> anyhow::Result<i32> {
    let mut config = load_config(cli)?;
    if let Some(filter) = strategies {
        let wanted: Vec<&str> = filter.split(',').map(str::trim).collect();
        config.jobs.retain(|job| wanted.contains(&job.strategy.as_str()));
        if config.jobs.is_empty() {
            bail!("no configured job matches --strategies {filter}");
        }
    }
    if let Some(k) = k {
        config.generate.k = k;
        if k != 3 {
            log::warn!("k = {k} is off the reference recipe (k = 3)");
        }
    }
    let summary = icalign::pipeline::generate(&config, &cli.run_id)?;
    println!(
        "generated {} records across {} jobs (run {})",
        summary.records, summary.jobs, cli.run_id
    );
    Ok(0)
}

fn cmd_judge(cli: &Cli) -> anyhow::Result<i32> {
    let config = effective_config(cli)?;
    let summary = icalign::pipeline::judge(&config, &cli.run_id)?;
    println!(
        "judged {} verdicts, {} parse failures (run {})",
        summary.verdicts, summary.parse_failures, cli.run_id
    );
    Ok(if summary.parse_failures > 0 { EXIT_PARTIAL } else { 0 })
}

fn cmd_report(cli: &Cli, figures: &str, compare_full_scale: bool) -> anyhow::Result<i32> {
    let config = load_config(cli)?;
    let figure_list: Vec<u8> = figures
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u8>().context("bad --figures entry"))
        .collect::<anyhow::Result<_>>()?;
    for figure in &figure_list {
        if !matches!(figure, 2..=4) {
            bail!("unknown figure {figure}; expected 2, 3 or 4");
        }
    }
    let store = RunStore::open(&config.runs_dir, &cli.run_id)?;
    config.freeze_into(&store)?;
    let options = ReportOptions {
        reference_models: config.report.reference_models.clone(),
        reference_sample_index: config.report.reference_sample_index,
        expected_samples: config.sampling.num_samples as usize,
        figure4_bins: config.report.figure4_bins,
        figures: figure_list,
    };
    let summary = icalign::report::write_reports(&store, &options)?;
    for file in &summary.files {
        println!("wrote {}", store.reports_dir().join(file).display());
    }
    if compare_full_scale {
        println!("\nrecorded full-scale reference values (not asserted):");
        for (row, metric, value) in FULL_SCALE_TARGETS {
            println!("  {row:<45} {metric:<15} {value}");
        }
    }
    if summary.exclusions > 0 {
        println!("completed with {} exclusions", summary.exclusions);
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn cmd_mock_serve(port: u16, echo: bool) -> anyhow::Result<i32> {
    let options = icalign::mockserver::MockOptions { echo };
    let handle = icalign::mockserver::spawn_on(port, options)?;
    println!("mock endpoint at {}", handle.base_url());
    println!("press Ctrl-C to stop");
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest { format, path } => cmd_ingest(format, path),
        Command::Generate { strategies, k } => cmd_generate(&cli, strategies.clone(), *k),
        Command::Judge => cmd_judge(&cli),
        Command::Report {
            figures,
            compare_full_scale,
        } => cmd_report(&cli, figures, *compare_full_scale),
        Command::MockServe { port, echo } => cmd_mock_serve(*port, *echo),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
