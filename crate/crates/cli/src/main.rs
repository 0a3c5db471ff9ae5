use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dlga_core::experiment::{
    baseline_stage, discover_stage, meta_stage, run_experiment, run_sweep, solve_stage, train_stage, write_report,
    ExperimentConfig, Report, SweepAxis, Timings, TrainingSummary, PRESET_NAMES,
};
use dlga_core::solvers::Field;
use dlga_core::surrogate::SurrogateNet;

#[derive(Parser)]
#[command(name = "dlga", version, about = "Discover PDEs from data with a neural surrogate and a genetic algorithm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reference problem and write field.bin / field.csv.
    Solve(Common),
    /// Train the surrogate (reuses field.bin from --out when present).
    Train(Common),
    /// Run the GA on meta-data (reuses net.json from --out when present).
    Discover(Common),
    /// Run STRidge over the configured fixed library.
    Baseline(Common),
    /// Run the full pipeline once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `noise` or `data_volume`.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `0,0.01,0.05`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the full pipeline and write report.txt / report.json.
    Report(Common),
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled configuration, e.g. `kdv-desk`.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)
                .with_context(|| format!("unknown preset `{name}`; available: {}", PRESET_NAMES.join(", ")))?,
            (None, None) => bail!("one of --config or --preset is required"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        let dir = cfg
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
        cfg.output_dir = Some(dir.clone());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("config.json"), cfg.to_json()?)?;
        Ok((cfg, dir))
    }
}

fn field(cfg: &ExperimentConfig, dir: &Path) -> Result<Field> {
    let path = dir.join("field.bin");
    if path.exists() {
        return Ok(Field::load(&path)?);
    }
    let field = solve_stage(cfg).context("solve")?;
    field.save(&path)?;
    Ok(field)
}

fn surrogate(cfg: &ExperimentConfig, dir: &Path) -> Result<(SurrogateNet, TrainingSummary)> {
    let net_path = dir.join("net.json");
    let summary_path = dir.join("training.json");
    if net_path.exists() && summary_path.exists() {
        let summary = serde_json::from_str(&fs::read_to_string(&summary_path)?)?;
        return Ok((SurrogateNet::load(&net_path)?, summary));
    }
    let field = field(cfg, dir)?;
    let (net, history) = train_stage(cfg, &field).context("train")?;
    let summary = TrainingSummary::from_history(&history);
    net.save(&net_path)?;
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok((net, summary))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
        Command::Solve(common) => {
            let (cfg, dir) = common.load()?;
            let field = solve_stage(&cfg).context("solve")?;
            field.save(&dir.join("field.bin"))?;
            field.write_csv(&dir.join("field.csv"))?;
            println!("{}: {} x {} points -> {}", cfg.problem.name(), field.nx(), field.nt(), dir.display());
        }
        Command::Train(common) => {
            let (cfg, dir) = common.load()?;
            let field = field(&cfg, &dir)?;
            let (net, history) = train_stage(&cfg, &field).context("train")?;
            let summary = TrainingSummary::from_history(&history);
            net.save(&dir.join("net.json"))?;
            fs::write(dir.join("training.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "{} epochs, best {} (train {:.3e}, validation {:.3e})",
                summary.epochs, summary.best_epoch, summary.train_mse, summary.validation_mse
            );
        }
        Command::Discover(common) => {
            let (cfg, dir) = common.load()?;
            let (net, training) = surrogate(&cfg, &dir)?;
            let data = meta_stage(&cfg, &net).context("meta")?;
            let result = discover_stage(&cfg, &data).context("discover")?;
            fs::write(dir.join("trace.log"), result.trace_log())?;
            let report = Report::new(&cfg, training, &result, None, Timings::default())?;
            write_report(&report, &dir)?;
            print!("{}", report.text());
        }
        Command::Baseline(common) => {
            let (cfg, dir) = common.load()?;
            if cfg.baseline.is_none() {
                bail!("configuration `{}` has no baseline section", cfg.name);
            }
            let (net, _) = surrogate(&cfg, &dir)?;
            let data = meta_stage(&cfg, &net).context("meta")?;
            let baseline = baseline_stage(&cfg, &data).context("baseline")?.expect("baseline section");
            fs::write(dir.join("baseline.json"), serde_json::to_string_pretty(&baseline)?)?;
            println!("{}", baseline.equation.as_deref().unwrap_or("(empty support)"));
            if let Some(m) = baseline.structure_match {
                println!("match: {}", if m { "yes" } else { "no" });
            }
        }
        Command::Report(common) => {
            let (cfg, _) = common.load()?;
            let report = run_experiment(&cfg)?;
            print!("{}", report.text());
        }
        Command::Sweep { common, axis, values } => {
            let (cfg, _) = common.load()?;
            let sweep = run_sweep(&cfg, axis, &values)?;
            print!("{}", sweep.table());
        }
    }
    Ok(())
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
