use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use privlens::experiment::{
    cmd_ablate, cmd_analyze, cmd_evaluate, cmd_extract, cmd_train, exit, table1_layout,
    ExperimentConfig, ExperimentError, ExtractOverrides,
};
use privlens::metrics::MetricsReport;

#[derive(Parser, Debug)]
#[command(name = "privlens", version, about = "Image privacy classification experiments")]
struct Cli {
    /// Experiment config (TOML). Relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for extraction and ablation.
    #[arg(long, global = true, default_value_t = 4)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build privacy_features.csv from the annotation service, detections and scenes.
    Extract {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the configured classifier on the train split.
    Train,
    /// Score a saved model on the configured split (test by default).
    Evaluate {
        /// Defaults to <out-dir>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train and evaluate one model per feature-subset row.
    Ablate {
        /// Use the 15-row layout with these three deep source tags
        /// (comma separated) instead of the config's rows.
        #[arg(long, value_delimiter = ',')]
        table1: Option<Vec<String>>,
    },
    /// Annotation and feature analyses written as JSON and CSV.
    Analyze,
}

fn load_config(cli: &Cli, required: bool) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if required => {
            return Err(ExperimentError::Usage(
                "this command needs --config <FILE>".into(),
            ))
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn print_metrics(label: &str, m: &MetricsReport) {
    println!("{label:<6}{}", MetricsReport::TABLE_HEADER);
    println!("{label:<6}{}", m.table_row());
}

fn run(cli: &Cli) -> Result<i32, ExperimentError> {
    match &cli.command {
        Command::Extract { manifest, output } => {
            let cfg = load_config(cli, false)?;
            let overrides = ExtractOverrides {
                manifest: manifest.clone(),
                output: output.clone(),
            };
            let s = cmd_extract(&cfg, &overrides, cli.workers)?;
            let r = &s.outcome.report;
            println!(
                "extracted {}/{} images ({} imputed, {} cache hits) -> {}",
                r.n_rows,
                r.n_images,
                r.n_imputed,
                s.outcome.cache_hits,
                s.output_path.display()
            );
            for f in &r.failures {
                eprintln!("failed: {}: {}", f.image_id, f.error);
            }
            if s.is_partial() {
                eprintln!("partial extraction; report at {}", s.report_path.display());
                return Ok(exit::PARTIAL);
            }
        }
        Command::Train => {
            let cfg = load_config(cli, true)?;
            let s = cmd_train(&cfg)?;
            println!(
                "trained {} for {} epochs (seed {}) -> {}",
                s.model.kind(),
                s.epochs_run,
                s.seeds.top_level,
                s.model_path.display()
            );
            if let Some(m) = &s.val_metrics {
                print_metrics("val", m);
            }
        }
        Command::Evaluate { model } => {
            let cfg = load_config(cli, true)?;
            let path = model.clone().unwrap_or_else(|| cfg.out_dir.join("model.json"));
            let s = cmd_evaluate(&cfg, &path)?;
            print_metrics(s.split.as_str(), &s.metrics);
        }
        Command::Ablate { table1 } => {
            let mut cfg = load_config(cli, true)?;
            if let Some(tags) = table1 {
                if tags.len() != 3 {
                    return Err(ExperimentError::Usage(
                        "--table1 takes exactly three deep source tags".into(),
                    ));
                }
                cfg.ablation = table1_layout([&tags[0], &tags[1], &tags[2]]);
            }
            let s = cmd_ablate(&cfg, cli.workers)?;
            print!("{}", std::fs::read_to_string(&s.text_path).unwrap_or_default());
            if s.n_failed() > 0 {
                eprintln!("{} of {} rows failed", s.n_failed(), s.rows.len());
                return Ok(exit::PARTIAL);
            }
        }
        Command::Analyze => {
            let cfg = load_config(cli, true)?;
            let s = cmd_analyze(&cfg)?;
            for name in &s.written {
                println!("wrote {name}");
            }
            for (name, reason) in &s.skipped {
                println!("skipped {name}: {reason}");
            }
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
