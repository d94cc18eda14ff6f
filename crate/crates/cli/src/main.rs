use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsm_cli::config::{RunConfig, CONFIG_ENV};
use lsm_cli::{exit_code, pipeline};
use lsm_core::{Error, Result};

#[derive(Parser)]
#[command(name = "lsm", version, about = "Dynamic landslide susceptibility mapping")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set forest.n_trees=200`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as `--set paths.out_dir=...`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Run seed (same as `--set seed=...`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic study area.
    Synth,
    /// Build the labelled sample table from the inventory and layers.
    Featurize,
    /// Train one model per year.
    Train,
    /// Write susceptibility maps.
    Map {
        #[arg(long)]
        year: Option<i32>,
    },
    /// Rank conditioning factors per year.
    Explain {
        #[arg(long)]
        year: Option<i32>,
    },
    /// Refine a susceptibility map with surface deformation.
    Enhance {
        #[arg(long)]
        year: Option<i32>,
    },
    /// Evaluate the models and write the metric report.
    Eval,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut overrides = cli.overrides;
    if let Some(d) = &cli.out_dir {
        overrides.push(format!("paths.out_dir={}", toml_string(&d.to_string_lossy())));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    log::debug!("config hash {}", cfg.hash());
    match cli.command {
        Command::Synth => {
            let p = pipeline::cmd_synth(&cfg)?;
            println!("world written under {}", p.inventory.parent().unwrap_or(&p.inventory).display());
        }
        Command::Featurize => {
            let (s, _) = pipeline::cmd_featurize(&cfg)?;
            println!("{} samples -> {}", s.len(), cfg.samples_path().display());
        }
        Command::Train => {
            for r in pipeline::cmd_train(&cfg)? {
                let route = r.route.map_or("none".to_string(), |r| format!("{r:?}"));
                println!("{}\t{} positives\t{route}", r.year, r.positives);
            }
        }
        Command::Map { year } => {
            for (y, m) in pipeline::cmd_map(&cfg, year)? {
                println!("{y}\t{} valid cells", m.probability.iter().flatten().count());
            }
        }
        Command::Explain { year } => {
            let out = pipeline::cmd_explain(&cfg, year)?;
            for y in &out.years {
                let top = y.ranking.as_ref().map_or_else(
                    || "no data".to_string(),
                    |r| {
                        r.order
                            .iter()
                            .take(cfg.explain.top_k)
                            .map(|&i| lsm_core::Feature::ALL[i].column())
                            .collect::<Vec<_>>()
                            .join(" ")
                    },
                );
                println!("{}\t{}\t{top}", y.year, y.confidence);
            }
        }
        Command::Enhance { year } => {
            let e = pipeline::cmd_enhance(&cfg, year)?;
            println!("level\tinitial\tenhanced");
            for l in 0..5 {
                println!("{l}\t{:.4}\t{:.4}", e.initial[l], e.enhanced[l]);
            }
        }
        Command::Eval => {
            let r = pipeline::cmd_eval(&cfg)?;
            print!("{}", pipeline::metrics_csv(&r));
        }
    }
    Ok(())
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
