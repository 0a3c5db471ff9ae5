//! Configuration-driven pipeline: solve, perturb and sample, train the
//! surrogate, generate meta-data, discover with the GA (and optionally the
//! STRidge baseline), then report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{evolve, DiscoveryResult, GaConfig};
use crate::genome::Genome;
use crate::regression::{FixedLibrary, StridgeSweep};
use crate::solvers::{add_noise, sample_training_data, solve_reference_problem, Field, ProblemSpec};
use crate::surrogate::{
    generate_meta_data, train, Activation, GridAxis, MetaDataset, MetaGridSpec, SurrogateNet, TrainConfig,
    TrainHistory,
};

/// Preset names accepted by [`ExperimentConfig::preset`].
pub const PRESET_NAMES: [&str; 8] = [
    "kdv-desk",
    "kdv-paper",
    "wave-desk",
    "wave-paper",
    "burgers-desk",
    "burgers-paper",
    "chaffee-infante-desk",
    "chaffee-infante-paper",
];

const NOISE_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;
const GA_STREAM: u64 = 5;

/// Seed for one pipeline stage, derived from the master seed.
pub fn stage_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Hidden layer widths and activation; the 2-input, 1-output ends are implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl NetSpec {
    pub fn uniform(layers: usize, width: usize, activation: Activation) -> Self {
        Self {
            hidden: vec![width; layers],
            activation,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(2);
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }
}

/// Equation the data was generated from, in canonical module order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub genome: Genome,
    pub coefficients: Vec<f64>,
}

impl TruthSpec {
    fn new(genome: &str, coefficients: &[f64]) -> Self {
        Self {
            genome: genome.parse::<Genome>().expect("preset genome").canonical(),
            coefficients: coefficients.to_vec(),
        }
    }
}

/// Fixed library regressed against `u_t` with STRidge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub library: String,
    #[serde(default)]
    pub sweep: StridgeSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    /// Relative noise level; 0 keeps the data clean.
    pub noise: f64,
    /// Training points drawn from the (noisy) field.
    pub samples: usize,
    pub net: NetSpec,
    /// Its `seed` is replaced by one derived from `seed`.
    pub train: TrainConfig,
    pub meta: MetaGridSpec,
    /// Its `seed` is replaced by one derived from `seed`.
    pub ga: GaConfig,
    #[serde(default)]
    pub baseline: Option<BaselineSpec>,
    #[serde(default)]
    pub truth: Option<TruthSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

fn axis(start: f64, end: f64, count: usize, include_end: bool) -> GridAxis {
    GridAxis {
        start,
        end,
        count,
        include_end,
    }
}

fn desk_train(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        final_learning_rate: 1.5e-4,
        max_epochs,
        batch_size: 64,
        validation_fraction: 0.2,
        patience: max_epochs / 4,
        seed: 0,
    }
}

fn full_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        final_learning_rate: 1e-4,
        max_epochs: 30_000,
        batch_size: 256,
        validation_fraction: 0.2,
        patience: 500,
        seed: 0,
    }
}

fn desk_ga() -> GaConfig {
    GaConfig {
        population_size: 100,
        max_generations: 50,
        epsilon: 2e-2,
        elitism: true,
        ..GaConfig::default()
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let (problem, scale) = name.rsplit_once('-')?;
        let desk = match scale {
            "desk" => true,
            "paper" => false,
            _ => return None,
        };
        let desk_net = NetSpec::uniform(4, 30, Activation::Sin);
        let full_net = NetSpec::uniform(5, 50, Activation::Sin);
        let (ga, train_default) = if desk {
            (desk_ga(), None)
        } else {
            (GaConfig::default(), Some(full_train()))
        };
        let cfg = match problem {
            "kdv" => Self {
                name: name.to_string(),
                problem: ProblemSpec::kdv(),
                noise: 0.0,
                samples: if desk { 20_000 } else { 30_000 },
                net: if desk { desk_net } else { full_net },
                train: train_default.unwrap_or_else(|| desk_train(800)),
                meta: if desk {
                    MetaGridSpec::new(axis(-0.5, 0.5, 100, false), axis(0.0, 1.0, 50, false))
                } else {
                    MetaGridSpec::new(axis(-0.5, 0.5, 1000, false), axis(0.0, 1.0, 200, false))
                },
                ga,
                baseline: None,
                truth: Some(TruthSpec::new("[1],{[0,1],[3]}", &[-1.0, -0.0025])),
                output_dir: None,
                seed: 0,
            },
            "wave" => Self {
                name: name.to_string(),
                problem: ProblemSpec::wave(),
                noise: 0.0,
                samples: 10_000,
                net: if desk { desk_net } else { full_net },
                train: train_default.unwrap_or_else(|| desk_train(800)),
                meta: if desk {
                    MetaGridSpec::new(axis(0.0, 2.0, 100, true), axis(0.0, 5.0, 50, true))
                } else {
                    MetaGridSpec::new(axis(0.0, 2.0, 400, true), axis(0.0, 5.0, 400, true))
                },
                ga,
                baseline: None,
                truth: Some(TruthSpec::new("[2],{[2]}", &[1.0])),
                output_dir: None,
                seed: 0,
            },
            "burgers" => Self {
                name: name.to_string(),
                problem: ProblemSpec::burgers(),
                noise: 0.0,
                samples: 2000,
                net: if desk {
                    desk_net
                } else {
                    NetSpec::uniform(9, 20, Activation::Tanh)
                },
                train: train_default.unwrap_or_else(|| desk_train(3000)),
                meta: if desk {
                    MetaGridSpec::new(axis(-8.0, 8.0, 100, false), axis(0.0, 9.0, 50, false))
                } else {
                    MetaGridSpec::new(axis(-8.0, 8.0, 320, false), axis(0.0, 9.0, 180, false))
                },
                ga,
                baseline: Some(BaselineSpec {
                    library: "burgers".into(),
                    sweep: StridgeSweep::default(),
                }),
                truth: Some(TruthSpec::new("[1],{[0,1],[2]}", &[-1.0, 0.1])),
                output_dir: None,
                seed: 0,
            },
            "chaffee-infante" => Self {
                name: name.to_string(),
                problem: ProblemSpec::chaffee_infante(),
                noise: 0.0,
                samples: 10_000,
                net: if desk { desk_net } else { full_net },
                train: train_default.unwrap_or_else(|| desk_train(800)),
                meta: if desk {
                    MetaGridSpec::new(axis(0.3, 2.0, 100, true), axis(0.2, 0.4, 50, true))
                } else {
                    MetaGridSpec::new(axis(0.3, 2.0, 400, true), axis(0.2, 0.4, 400, true))
                },
                ga,
                baseline: Some(BaselineSpec {
                    library: "chaffee_infante".into(),
                    sweep: StridgeSweep::default(),
                }),
                truth: Some(TruthSpec::new("[1],{[0],[0,0,0],[2]}", &[-1.0, 1.0, 1.0])),
                output_dir: None,
                seed: 0,
            },
            _ => return None,
        };
        Some(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise level must be finite and >= 0, got {}", self.noise)));
        }
        if self.samples == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return Err(Error::Config("network needs at least one non-empty hidden layer".into()));
        }
        self.problem.validate()?;
        self.train.validate()?;
        self.ga.validate()?;
        if self.meta.x.count == 0 || self.meta.t.count == 0 {
            return Err(Error::Config("meta grid axes must have at least one node".into()));
        }
        if self.meta.spatial_order < self.ga.pool.max_spatial_order as usize
            || self.meta.temporal_order < self.ga.pool.max_temporal_order as usize
        {
            return Err(Error::Config(format!(
                "meta grid orders ({}, {}) below gene pool bounds ({}, {})",
                self.meta.spatial_order,
                self.meta.temporal_order,
                self.ga.pool.max_spatial_order,
                self.ga.pool.max_temporal_order
            )));
        }
        if let Some(b) = &self.baseline {
            if FixedLibrary::by_name(&b.library).is_none() {
                return Err(Error::Config(format!("unknown baseline library `{}`", b.library)));
            }
        }
        if let Some(t) = &self.truth {
            if t.coefficients.len() != t.genome.rhs().len() {
                return Err(Error::Config(format!(
                    "truth has {} coefficients for {} modules",
                    t.coefficients.len(),
                    t.genome.rhs().len()
                )));
            }
        }
        Ok(())
    }
}

pub fn solve_stage(cfg: &ExperimentConfig) -> Result<Field> {
    Ok(solve_reference_problem(&cfg.problem)?)
}

/// Perturbs the clean field, samples training points and fits the surrogate.
pub fn train_stage(cfg: &ExperimentConfig, field: &Field) -> Result<(SurrogateNet, TrainHistory)> {
    let noisy;
    let source = if cfg.noise > 0.0 {
        noisy = add_noise(field, cfg.noise, stage_seed(cfg.seed, NOISE_STREAM));
        &noisy
    } else {
        field
    };
    let samples = sample_training_data(source, cfg.samples, stage_seed(cfg.seed, SAMPLE_STREAM))?;
    let net = SurrogateNet::new(&cfg.net.layer_sizes(), cfg.net.activation, stage_seed(cfg.seed, INIT_STREAM))?;
    let train_cfg = TrainConfig {
        seed: stage_seed(cfg.seed, TRAIN_STREAM),
        ..cfg.train.clone()
    };
    Ok(train(&net, &samples, &train_cfg)?)
}

pub fn meta_stage(cfg: &ExperimentConfig, net: &SurrogateNet) -> Result<MetaDataset> {
    Ok(generate_meta_data(net, &cfg.meta)?)
}

pub fn discover_stage(cfg: &ExperimentConfig, data: &MetaDataset) -> Result<DiscoveryResult> {
    let ga = GaConfig {
        seed: stage_seed(cfg.seed, GA_STREAM),
        ..cfg.ga.clone()
    };
    evolve(data, &ga)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub library: String,
    /// `None` when every term was thresholded away.
    pub equation: Option<String>,
    pub genome: Option<Genome>,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub structure_match: Option<bool>,
}

/// STRidge over the configured fixed library; `Ok(None)` without a baseline section.
pub fn baseline_stage(cfg: &ExperimentConfig, data: &MetaDataset) -> Result<Option<BaselineReport>> {
    let Some(spec) = &cfg.baseline else {
        return Ok(None);
    };
    let library = FixedLibrary::by_name(&spec.library)
        .ok_or_else(|| Error::Config(format!("unknown baseline library `{}`", spec.library)))?;
    let columns = library.columns(data)?;
    let target = data
        .temporal(1)
        .ok_or_else(|| Error::Config("meta-data lacks u_t".into()))?;
    let fit = spec.sweep.run(&columns, &DVector::from_column_slice(target))?;
    let terms: Vec<String> = fit.support.iter().map(|&j| library.terms()[j].to_string()).collect();
    let coefficients: Vec<f64> = fit.support.iter().map(|&j| fit.fit.coeffs[j]).collect();
    let genome = library.genome(1, &fit.support);
    let equation = match &genome {
        // Library order differs from canonical module order; render through the genome.
        Some(g) => {
            let ordered: Vec<f64> = g
                .rhs()
                .iter()
                .map(|m| {
                    let j = fit
                        .support
                        .iter()
                        .position(|&j| library.terms()[j].module().as_ref() == Some(m))
                        .expect("support term");
                    coefficients[j]
                })
                .collect();
            Some(g.render(&ordered)?)
        }
        // The constant term has no genome form.
        None if !fit.support.is_empty() => {
            let parts: Vec<String> = coefficients
                .iter()
                .zip(&terms)
                .map(|(c, t): (&f64, &String)| format!("{c:.4e}*{t}"))
                .collect();
            Some(format!("u_t = {}", parts.join(" + ")))
        }
        None => None,
    };
    let structure_match = cfg.truth.as_ref().map(|t| genome.as_ref() == Some(&t.genome));
    Ok(Some(BaselineReport {
        library: spec.library.clone(),
        equation,
        genome,
        terms,
        coefficients,
        structure_match,
    }))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub solve: f64,
    pub train: f64,
    pub meta: f64,
    pub discover: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

impl TrainingSummary {
    pub fn from_history(history: &TrainHistory) -> Self {
        let best = history.best();
        Self {
            epochs: history.epochs.len(),
            best_epoch: history.best_epoch,
            train_mse: best.train_mse,
            validation_mse: best.validation_mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub generation: usize,
    pub genome: Genome,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub problem: String,
    pub seed: u64,
    pub noise: f64,
    pub samples: usize,
    pub equation: String,
    pub genome: Genome,
    pub coefficients: Vec<f64>,
    pub fitness: f64,
    pub mse: f64,
    pub generations: usize,
    pub convergence_generation: usize,
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
    pub truth: Option<Genome>,
    pub structure_match: Option<bool>,
    /// Present only when the structure matches.
    pub relative_errors: Option<Vec<f64>>,
    pub baseline: Option<BaselineReport>,
    pub training: TrainingSummary,
    pub timings: Timings,
}

impl Report {
    pub fn new(
        cfg: &ExperimentConfig,
        training: TrainingSummary,
        result: &DiscoveryResult,
        baseline: Option<BaselineReport>,
        timings: Timings,
    ) -> Result<Self> {
        let best = &result.best;
        let structure_match = cfg.truth.as_ref().map(|t| best.genome.canonical() == t.genome);
        let relative_errors = match (&cfg.truth, structure_match) {
            (Some(t), Some(true)) => Some(
                best.fit
                    .coeffs
                    .iter()
                    .zip(&t.coefficients)
                    .map(|(c, tc)| ((c - tc) / tc).abs())
                    .collect(),
            ),
            _ => None,
        };
        Ok(Self {
            experiment: cfg.name.clone(),
            problem: cfg.problem.name().to_string(),
            seed: cfg.seed,
            noise: cfg.noise,
            samples: cfg.samples,
            equation: best.genome.render(&best.fit.coeffs)?,
            genome: best.genome.clone(),
            coefficients: best.fit.coeffs.clone(),
            fitness: best.fitness,
            mse: best.fit.mse,
            generations: result.trace.len() - 1,
            convergence_generation: result.convergence_generation,
            evaluations: result.evaluations,
            trace: result
                .trace
                .iter()
                .map(|g| TracePoint {
                    generation: g.generation,
                    genome: g.best.genome.clone(),
                    fitness: g.best.fitness,
                })
                .collect(),
            truth: cfg.truth.as_ref().map(|t| t.genome.clone()),
            structure_match,
            relative_errors,
            baseline,
            training,
            timings,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let yes_no = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(out, "experiment   {}", self.experiment);
        let _ = writeln!(out, "problem      {}", self.problem);
        let _ = writeln!(out, "seed         {}", self.seed);
        let _ = writeln!(out, "noise        {}", self.noise);
        let _ = writeln!(out, "samples      {}", self.samples);
        let _ = writeln!(out, "equation     {}", self.equation);
        let _ = writeln!(out, "genome       {}", self.genome);
        let _ = writeln!(out, "fitness      {:.6e}", self.fitness);
        let _ = writeln!(out, "mse          {:.6e}", self.mse);
        let _ = writeln!(
            out,
            "generations  {} (best fixed from {}, {} evaluations)",
            self.generations, self.convergence_generation, self.evaluations
        );
        if let (Some(truth), Some(m)) = (&self.truth, self.structure_match) {
            let _ = writeln!(out, "truth        {}  match: {}", truth, yes_no(m));
        }
        if let Some(errs) = &self.relative_errors {
            let errs: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
            let _ = writeln!(out, "rel. errors  {}", errs.join(" "));
        }
        if let Some(b) = &self.baseline {
            let eq = b.equation.as_deref().unwrap_or("(empty support)");
            let _ = write!(out, "baseline     {} [{}]", eq, b.library);
            if let Some(m) = b.structure_match {
                let _ = write!(out, "  match: {}", yes_no(m));
            }
            out.push('\n');
        }
        let t = &self.training;
        let _ = writeln!(
            out,
            "training     {} epochs, best {} (train {:.3e}, validation {:.3e})",
            t.epochs, t.best_epoch, t.train_mse, t.validation_mse
        );
        let s = &self.timings;
        let _ = writeln!(
            out,
            "timings [s]  solve {:.2}, train {:.2}, meta {:.2}, discover {:.2}, baseline {:.2}",
            s.solve, s.train, s.meta, s.discover, s.baseline
        );
        out.push_str("\ngeneration\tfitness\tgenome\n");
        for p in &self.trace {
            let _ = writeln!(out, "{}\t{:.6e}\t{}", p.generation, p.fitness, p.genome);
        }
        out
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("report.json"), report.to_json()?)?;
    write_file(&dir.join("report.txt"), report.text())
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64();
    out
}

/// Full pipeline. With an output directory, artifacts are written as soon as
/// each stage finishes, so a failing stage leaves the earlier ones on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let field = timed(&mut timings.solve, || solve_stage(cfg)).map_err(|e| e.in_stage("solve"))?;
    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        field.save(&dir.join("field.bin"))?;
    }
    run_with_field(cfg, &field, timings)
}

/// Pipeline from an already solved clean field.
pub fn run_experiment_on(cfg: &ExperimentConfig, field: &Field) -> Result<Report> {
    cfg.validate()?;
    run_with_field(cfg, field, Timings::default())
}

fn run_with_field(cfg: &ExperimentConfig, field: &Field, mut timings: Timings) -> Result<Report> {
    let dir = cfg.output_dir.as_deref();
    if let Some(dir) = dir {
        create_dir(dir)?;
        write_file(&dir.join("config.json"), cfg.to_json()?)?;
    }
    let (net, history) = timed(&mut timings.train, || train_stage(cfg, field)).map_err(|e| e.in_stage("train"))?;
    let training = TrainingSummary::from_history(&history);
    if let Some(dir) = dir {
        net.save(&dir.join("net.json"))?;
        write_file(&dir.join("training.json"), serde_json::to_string_pretty(&training)?)?;
    }
    let data = timed(&mut timings.meta, || meta_stage(cfg, &net)).map_err(|e| e.in_stage("meta"))?;
    let result = timed(&mut timings.discover, || discover_stage(cfg, &data)).map_err(|e| e.in_stage("discover"))?;
    if let Some(dir) = dir {
        write_file(&dir.join("trace.log"), result.trace_log())?;
    }
    let baseline =
        timed(&mut timings.baseline, || baseline_stage(cfg, &data)).map_err(|e| e.in_stage("baseline"))?;
    let report = Report::new(cfg, training, &result, baseline, timings)
        .map_err(|e| e.in_stage("report"))?;
    if let Some(dir) = dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Noise,
    DataVolume,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(SweepAxis::Noise),
            "data_volume" | "data-volume" | "samples" => Ok(SweepAxis::DataVolume),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    /// `base` with the swept value and the row seed applied.
    pub fn apply(self, base: &ExperimentConfig, value: f64, seed: u64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        cfg.seed = seed;
        match self {
            SweepAxis::Noise => cfg.noise = value,
            SweepAxis::DataVolume => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= usize::MAX as f64) {
                    return Err(Error::Config(format!("sample count must be a positive integer, got {value}")));
                }
                cfg.samples = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub report: Option<Report>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub experiment: String,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn table(&self) -> String {
        let header = match self.axis {
            SweepAxis::Noise => "noise",
            SweepAxis::DataVolume => "samples",
        };
        let mut out = format!("{header}\tseed\tmatch\tbaseline\tequation\n");
        let flag = |m: Option<bool>| match m {
            Some(true) => "yes",
            Some(false) => "no",
            None => "-",
        };
        for row in &self.rows {
            match (&row.report, &row.error) {
                (Some(r), _) => {
                    let base = r.baseline.as_ref().and_then(|b| b.structure_match);
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}",
                        row.value,
                        row.seed,
                        flag(r.structure_match),
                        flag(base),
                        r.equation
                    );
                }
                (None, err) => {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t-\t-\tfailed: {}",
                        row.value,
                        row.seed,
                        err.as_deref().unwrap_or("unknown error")
                    );
                }
            }
        }
        out
    }
}

/// One run per value; row `i` uses seed `base.seed + i` and, with an output
/// directory, writes into `row-<i>/`. Row failures are recorded and the sweep
/// continues.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Sweep> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    base.validate()?;
    let field = solve_stage(base).map_err(|e| e.in_stage("solve"))?;
    let mut rows = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let seed = base.seed.wrapping_add(i as u64);
        let outcome = axis.apply(base, value, seed).and_then(|mut cfg| {
            cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(format!("row-{i}")));
            run_experiment_on(&cfg, &field)
        });
        let (report, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(SweepRow {
            value,
            seed,
            report,
            error,
        });
    }
    let sweep = Sweep {
        experiment: base.name.clone(),
        axis,
        rows,
    };
    if let Some(dir) = &base.output_dir {
        create_dir(dir)?;
        write_file(&dir.join("sweep.json"), serde_json::to_string_pretty(&sweep)?)?;
        write_file(&dir.join("sweep.txt"), sweep.table())?;
    }
    Ok(sweep)
}
