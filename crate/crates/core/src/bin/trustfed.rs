use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use trustfed_core::config::AdversarySpec;
use trustfed_core::dataset::{self, write_dataset_csv};
use trustfed_core::federation::{run_strategy, Federation};
use trustfed_core::output::{self, write_atomic};
use trustfed_core::rng::{stream, Purpose};
use trustfed_core::{ExperimentConfig, Result, StrategyKind};

/// Trust-aware federated learning simulator.
#[derive(Parser)]
#[command(name = "trustfed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    /// Flat key/value TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// fedavg_baseline, atsssf_static or atsssf_adaptive.
    #[arg(long, global = true, value_name = "NAME")]
    strategy: Option<StrategyKind>,
    #[arg(long, global = true, value_name = "N")]
    rounds: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    clients: Option<usize>,
    /// COUNT[:BEHAVIOUR[:PARAM]], e.g. 2:label_flip:1.0 or 3:noisy_update:0.5.
    #[arg(long, global = true, value_name = "SPEC")]
    adversaries: Option<AdversarySpec>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// 100 clients x 500 rounds instead of the desk-scale default.
    #[arg(long, global = true)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single strategy.
    Run {
        /// Also dump the final global model as a binary checkpoint.
        #[arg(long)]
        checkpoint: bool,
    },
    /// Run several strategies on the same data and seed.
    Compare {
        #[arg(long, value_delimiter = ',', default_value = "fedavg_baseline,atsssf_static,atsssf_adaptive")]
        strategies: Vec<StrategyKind>,
    },
    /// Write the raw synthetic dataset as CSV.
    ExportDataset,
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig> {
    let mut config = match &o.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if o.full_scale {
        config.set("scale", &Value::String("full".into()))?;
    }
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(s) = o.strategy {
        config.strategy = s;
    }
    if let Some(r) = o.rounds {
        config.rounds = r;
    }
    if let Some(c) = o.clients {
        config.clients = c;
    }
    if let Some(a) = o.adversaries {
        config.adversaries = a;
    }
    if let Some(out) = &o.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(config: &ExperimentConfig, checkpoint: bool) -> Result<()> {
    let fed = Federation::prepare(config)?;
    let out = run_strategy(&fed, config, config.strategy)?;
    let mut written = output::write_run(&config.out_dir, config, &out)?;
    if checkpoint {
        let path = config.out_dir.join("model.bin");
        let mut bytes = Vec::new();
        out.final_params.write_checkpoint(&mut bytes)?;
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    let m = out.report.final_metrics;
    println!(
        "{}: accuracy {:.4}, macro F1 {:.4}, omissions {}, readmissions {}",
        config.strategy, m.accuracy, m.macro_f1, out.report.total_omissions, out.report.total_readmissions
    );
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn compare(config: &ExperimentConfig, strategies: &[StrategyKind]) -> Result<()> {
    if strategies.len() < 2 {
        return Err(trustfed_core::Error::Config {
            key: "strategies".into(),
            reason: "compare needs at least two strategies".into(),
        });
    }
    let fed = Federation::prepare(config)?;
    let outputs = strategies
        .iter()
        .map(|&k| run_strategy(&fed, config, k))
        .collect::<Result<Vec<_>>>()?;
    let written = output::write_comparison(&config.out_dir, config, &outputs)?;
    println!("{:<18} {:>9} {:>9} {:>10} {:>10}", "strategy", "accuracy", "macro_f1", "mean_trust", "omissions");
    for row in output::summary_rows(&outputs) {
        println!(
            "{:<18} {:>9.4} {:>9.4} {:>10.4} {:>10}",
            row.strategy, row.final_accuracy, row.final_macro_f1, row.mean_trust, row.total_omissions
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn export_dataset(config: &ExperimentConfig) -> Result<()> {
    let samples = dataset::generate_dataset(
        &config.dataset.generator(),
        &mut stream(config.seed, Purpose::Dataset, 0, 0),
    )?;
    std::fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join("dataset.csv");
    let tmp = config.out_dir.join("dataset.csv.tmp");
    write_dataset_csv(&samples, BufWriter::new(File::create(&tmp)?))?;
    std::fs::rename(&tmp, &path)?;
    println!(
        "wrote {} ({} samples, sha256 {})",
        path.display(),
        samples.len(),
        dataset::dataset_hash(&samples)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.overrides).and_then(|config| match &cli.command {
        Command::Run { checkpoint } => run(&config, *checkpoint),
        Command::Compare { strategies } => compare(&config, strategies),
        Command::ExportDataset => export_dataset(&config),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
