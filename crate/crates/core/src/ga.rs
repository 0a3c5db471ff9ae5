//! Genetic search over equation genomes.
//!
//! Each generation pairs the parents twice, crosses every pair, mutates every
//! child, and keeps the fittest half of the children as the next parents.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, RegressionError, Result};
use crate::genome::{GenePool, Genome, TermModule};
use crate::regression::{least_squares, FitResult};
use crate::surrogate::MetaDataset;
use crate::system::ColumnCache;

/// Fitness assigned to genomes whose regression is ill-posed.
pub const SENTINEL_FITNESS: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// `mse + epsilon * var(U_T) * length`: the penalty follows the scale of
    /// each genome's own target column.
    #[default]
    ScaledPenalty,
    /// `mse + epsilon * length`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub crossover_rate: f64,
    /// Per right-hand-side gene.
    pub gene_mutation_rate: f64,
    /// Per genome.
    pub lhs_mutation_rate: f64,
    pub add_module_rate: f64,
    pub delete_module_rate: f64,
    pub epsilon: f64,
    pub fitness_mode: FitnessMode,
    /// Carry the best parent into the child pool before selection.
    pub elitism: bool,
    pub pool: GenePool,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 200,
            max_generations: 100,
            crossover_rate: 0.8,
            gene_mutation_rate: 0.1,
            lhs_mutation_rate: 0.1,
            add_module_rate: 0.3,
            delete_module_rate: 0.3,
            epsilon: 1e-4,
            fitness_mode: FitnessMode::ScaledPenalty,
            elitism: false,
            pool: GenePool::standard(),
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population_size < 4 || self.population_size % 2 != 0 {
            return bad(format!("population size {} must be even and >= 4", self.population_size));
        }
        for (name, p) in [
            ("crossover_rate", self.crossover_rate),
            ("gene_mutation_rate", self.gene_mutation_rate),
            ("lhs_mutation_rate", self.lhs_mutation_rate),
            ("add_module_rate", self.add_module_rate),
            ("delete_module_rate", self.delete_module_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        self.pool.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub genome: Genome,
    pub fit: FitResult,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best: FitnessRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub best: FitnessRecord,
    /// Generation 0 is the random initial population.
    pub trace: Vec<GenerationRecord>,
    /// First generation from which the per-generation best genome stays fixed.
    pub convergence_generation: usize,
    /// Distinct genomes whose fitness was computed.
    pub evaluations: usize,
}

impl DiscoveryResult {
    /// One line per generation: index, genome, fitness, mse, coefficients.
    pub fn trace_log(&self) -> String {
        let mut out = String::new();
        for rec in &self.trace {
            let coeffs: Vec<String> = rec.best.fit.coeffs.iter().map(|c| format!("{c:.6e}")).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6e}\t{:.6e}\t[{}]",
                rec.generation,
                rec.best.genome,
                rec.best.fitness,
                rec.best.fit.mse,
                coeffs.join(", ")
            );
        }
        out
    }
}

/// Swaps module `i` of `a` with module `j` of `b`, without canonicalizing.
pub fn swap_modules(a: &Genome, b: &Genome, i: usize, j: usize) -> (Genome, Genome) {
    let (mut a, mut b) = (a.clone(), b.clone());
    std::mem::swap(&mut a.rhs_mut()[i], &mut b.rhs_mut()[j]);
    (a, b)
}

/// With probability `rate`, swaps one uniformly chosen module of each parent.
pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rate: f64, rng: &mut R) -> (Genome, Genome) {
    if rng.gen::<f64>() < rate {
        let i = rng.gen_range(0..a.rhs().len());
        let j = rng.gen_range(0..b.rhs().len());
        let (a, b) = swap_modules(a, b, i, j);
        (a.canonical(), b.canonical())
    } else {
        (a.clone(), b.clone())
    }
}

/// Lowers gene `k > 0` to `k - 1`; gene 0 jumps to a uniform order in `1..=max_order`.
pub fn mutate_order<R: Rng + ?Sized>(gene: u8, max_order: u8, rng: &mut R) -> u8 {
    if gene > 0 {
        gene - 1
    } else {
        rng.gen_range(1..=max_order.max(1))
    }
}

pub fn add_module(genome: &Genome, module: TermModule) -> Genome {
    let mut g = genome.clone();
    g.rhs_mut().push(module);
    g.canonical()
}

/// Removes module `index` unless it is the only one.
pub fn delete_module(genome: &Genome, index: usize) -> Genome {
    let mut g = genome.clone();
    if g.rhs().len() > 1 {
        g.rhs_mut().remove(index);
    }
    g.canonical()
}

/// Applies every mutation opportunity independently and canonicalizes.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, cfg: &GaConfig, rng: &mut R) -> Genome {
    let pool = &cfg.pool;
    let mut g = genome.clone();
    for module in g.rhs_mut() {
        for gene in module.genes_mut() {
            if rng.gen::<f64>() < cfg.gene_mutation_rate {
                *gene = mutate_order(*gene, pool.max_spatial_order, rng);
            }
        }
    }
    if rng.gen::<f64>() < cfg.add_module_rate {
        let m = pool.random_module(rng);
        g.rhs_mut().push(m);
    }
    if rng.gen::<f64>() < cfg.delete_module_rate && g.rhs().len() > 1 {
        let i = rng.gen_range(0..g.rhs().len());
        g.rhs_mut().remove(i);
    }
    if rng.gen::<f64>() < cfg.lhs_mutation_rate && pool.max_temporal_order > 1 {
        let current = g.lhs();
        let others: Vec<u8> = (1..=pool.max_temporal_order).filter(|&k| k != current).collect();
        g.set_lhs(*others.choose(rng).expect("at least two temporal orders"));
    }
    g.canonical()
}

/// Computes and memoizes fitness over one dataset.
pub struct FitnessEvaluator<'a> {
    data: &'a MetaDataset,
    epsilon: f64,
    mode: FitnessMode,
    columns: ColumnCache,
    target_scale: Vec<f64>,
}

impl<'a> FitnessEvaluator<'a> {
    pub fn new(data: &'a MetaDataset, epsilon: f64, mode: FitnessMode) -> Self {
        let target_scale = (0..=data.max_temporal_order())
            .map(|k| {
                let col = data.temporal(k).expect("order within range");
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            data,
            epsilon,
            mode,
            columns: ColumnCache::new(),
            target_scale,
        }
    }

    pub fn from_config(data: &'a MetaDataset, cfg: &GaConfig) -> Self {
        Self::new(data, cfg.epsilon, cfg.fitness_mode)
    }

    pub fn data(&self) -> &MetaDataset {
        self.data
    }

    /// Fitness of the canonical form of `genome`.
    pub fn evaluate(&self, genome: &Genome) -> Result<FitnessRecord> {
        let genome = genome.canonical();
        let sys = self.columns.build_system(&genome, self.data)?;
        let fit = match least_squares(&sys) {
            Ok(fit) => fit,
            Err(RegressionError::Underdetermined { .. }) => FitResult {
                coeffs: vec![f64::NAN; sys.cols()],
                mse: f64::NAN,
                condition_flag: true,
                condition: f64::INFINITY,
            },
            Err(e) => return Err(e.into()),
        };
        let penalty = match self.mode {
            FitnessMode::ScaledPenalty => self.epsilon * self.target_scale[genome.lhs() as usize],
            FitnessMode::Raw => self.epsilon,
        };
        let fitness = if fit.condition_flag || !fit.mse.is_finite() {
            SENTINEL_FITNESS
        } else {
            fit.mse + penalty * genome.length() as f64
        };
        Ok(FitnessRecord { genome, fit, fitness })
    }
}

/// Fitness of one genome; see [`FitnessEvaluator`] for repeated use.
pub fn fitness(genome: &Genome, data: &MetaDataset, cfg: &GaConfig) -> Result<FitnessRecord> {
    FitnessEvaluator::from_config(data, cfg).evaluate(genome)
}

fn stream_rng(seed: u64, generation: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | index);
    rng
}

fn rank(a: &FitnessRecord, b: &FitnessRecord) -> std::cmp::Ordering {
    a.fitness.total_cmp(&b.fitness).then_with(|| a.genome.cmp(&b.genome))
}

struct Memo<'e, 'a> {
    evaluator: &'e FitnessEvaluator<'a>,
    records: HashMap<Genome, FitnessRecord>,
}

impl Memo<'_, '_> {
    fn evaluate_all(&mut self, genomes: &[Genome]) -> Result<Vec<FitnessRecord>> {
        let mut fresh: Vec<&Genome> = genomes.iter().filter(|g| !self.records.contains_key(*g)).collect();
        fresh.sort();
        fresh.dedup();
        let evaluator = self.evaluator;
        let computed = fresh
            .par_iter()
            .map(|g| evaluator.evaluate(g))
            .collect::<Result<Vec<_>>>()?;
        for rec in computed {
            self.records.insert(rec.genome.clone(), rec);
        }
        Ok(genomes.iter().map(|g| self.records[g].clone()).collect())
    }
}

/// Runs the genetic search on `data`.
pub fn evolve(data: &MetaDataset, cfg: &GaConfig) -> Result<DiscoveryResult> {
    cfg.validate()?;
    if data.max_spatial_order() < cfg.pool.max_spatial_order as usize
        || data.max_temporal_order() < cfg.pool.max_temporal_order as usize
    {
        return Err(Error::Config(format!(
            "gene pool reaches orders ({}, {}) but the dataset holds ({}, {})",
            cfg.pool.max_spatial_order,
            cfg.pool.max_temporal_order,
            data.max_spatial_order(),
            data.max_temporal_order()
        )));
    }
    let evaluator = FitnessEvaluator::from_config(data, cfg);
    let mut memo = Memo {
        evaluator: &evaluator,
        records: HashMap::new(),
    };
    let p = cfg.population_size;

    let mut init_rng = stream_rng(cfg.seed, 0, 0);
    let initial: Vec<Genome> = (0..p).map(|_| cfg.pool.random_genome(&mut init_rng)).collect();
    let mut parents = memo.evaluate_all(&initial)?;
    parents.sort_by(rank);
    let mut trace = vec![GenerationRecord {
        generation: 0,
        best: parents[0].clone(),
    }];

    for generation in 1..=cfg.max_generations {
        let mut shuffle_rng = stream_rng(cfg.seed, generation, u32::MAX as u64);
        let mut pairs = Vec::with_capacity(p);
        for _ in 0..2 {
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(&mut shuffle_rng);
            pairs.extend(order.chunks_exact(2).map(|c| (c[0], c[1])));
        }
        let children: Vec<Genome> = pairs
            .par_iter()
            .enumerate()
            .flat_map_iter(|(k, &(i, j))| {
                let mut rng = stream_rng(cfg.seed, generation, k as u64);
                let (a, b) = crossover(&parents[i].genome, &parents[j].genome, cfg.crossover_rate, &mut rng);
                [mutate(&a, cfg, &mut rng), mutate(&b, cfg, &mut rng)]
            })
            .collect();
        let mut pool = memo.evaluate_all(&children)?;
        if cfg.elitism {
            pool.push(parents[0].clone());
        }
        pool.sort_by(rank);
        pool.truncate(p);
        parents = pool;
        trace.push(GenerationRecord {
            generation,
            best: parents[0].clone(),
        });
    }

    let best = trace
        .iter()
        .map(|r| &r.best)
        .min_by(|a, b| rank(a, b))
        .expect("trace holds generation 0")
        .clone();
    let last = &trace.last().expect("non-empty").best.genome;
    let convergence_generation = trace
        .iter()
        .rposition(|r| &r.best.genome != last)
        .map_or(0, |i| i + 1);
    Ok(DiscoveryResult {
        best,
        trace,
        convergence_generation,
        evaluations: memo.records.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn g(text: &str) -> Genome {
        text.parse().unwrap()
    }

    fn m(genes: &[u8]) -> TermModule {
        TermModule::new(genes.to_vec()).unwrap()
    }

    const DELTA2: f64 = 0.0025;

    /// `d^order/dx^order` of a sum of shifted harmonics.
    fn harmonics(x: f64, t: f64, order: usize) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        [(1.0, PI, 0.0), (0.4, 3.0 * PI, 0.7), (0.15, 5.0 * PI, 1.9)]
            .iter()
            .map(|&(a, k, phase): &(f64, f64, f64)| {
                a * k.powi(order as i32) * (k * x + phase * (1.0 + t) + order as f64 * FRAC_PI_2).sin()
            })
            .sum()
    }

    /// Manufactured jets obeying `u_t = -u u_x - 0.0025 u_xxx` pointwise: the
    /// temporal column is defined by the equation. The u_tt column is an
    /// unrelated harmonic.
    fn kdv_jets(n: usize) -> MetaDataset {
        let mut points = Vec::new();
        let mut spatial = vec![Vec::new(); 5];
        let mut temporal = vec![Vec::new(); 2];
        for i in 0..n {
            let x = -1.0 + 2.0 * i as f64 / n as f64;
            let t = 0.05 * (i % 11) as f64;
            points.push((x, t));
            for (order, col) in spatial.iter_mut().enumerate() {
                col.push(harmonics(x, t, order));
            }
            let (u, ux, uxxx) = (spatial[0][i], spatial[1][i], spatial[3][i]);
            temporal[0].push(-u * ux - DELTA2 * uxxx);
            temporal[1].push((7.0 * x + t).cos());
        }
        MetaDataset::from_columns(points, spatial, temporal).unwrap()
    }

    #[test]
    fn harmonic_columns_are_derivatives() {
        let h = 1e-4;
        for i in 0..50 {
            let (x, t) = (-1.0 + 0.04 * i as f64, 0.01 * i as f64);
            for order in 0..4 {
                let fd = (harmonics(x + h, t, order) - harmonics(x - h, t, order)) / (2.0 * h);
                let exact = harmonics(x, t, order + 1);
                assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "order {order} at {x}");
            }
        }
    }

    #[test]
    fn crossover_worked_example() {
        let (a, b) = swap_modules(&g("[1],{[1],[2]}"), &g("[1],{[1,3],[0,2]}"), 0, 0);
        assert_eq!(a.canonical(), g("[1],{[1,3],[2]}"));
        assert_eq!(b.canonical(), g("[1],{[0,2],[1]}").canonical());
        assert_eq!(b.canonical().to_string(), "[1],{[0,2],[1]}");
    }

    #[test]
    fn zero_rate_crossover_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, b) = (g("[1],{[1],[2]}"), g("[2],{[0,1],[3]}"));
        for _ in 0..100 {
            assert_eq!(crossover(&a, &b, 0.0, &mut rng), (a.clone(), b.clone()));
        }
    }

    #[test]
    fn lhs_never_crosses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (g("[1],{[1],[2]}"), g("[2],{[0,1],[3]}"));
        for _ in 0..100 {
            let (c, d) = crossover(&a, &b, 1.0, &mut rng);
            assert_eq!((c.lhs(), d.lhs()), (1, 2));
        }
    }

    #[test]
    fn mutation_worked_examples() {
        let base = g("[1],{[1,2],[3]}");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut genes: Vec<Vec<u8>> = base.rhs().iter().map(|m| m.genes().to_vec()).collect();
        genes[0][0] = mutate_order(genes[0][0], 3, &mut rng);
        let refs: Vec<&[u8]> = genes.iter().map(|v| v.as_slice()).collect();
        assert_eq!(Genome::from_genes(1, &refs).unwrap().canonical(), g("[1],{[0,2],[3]}"));
        assert_eq!(add_module(&base, m(&[0, 0])), g("[1],{[0,0],[1,2],[3]}"));
        let long = g("[1],{[1,2],[4],[0,1],[3,1]}");
        assert_eq!(delete_module(&long, 3), g("[1],{[0,1],[1,2],[4]}"));
        assert_eq!(delete_module(&g("[1],{[2]}"), 0), g("[1],{[2]}"));
        for _ in 0..100 {
            assert!((1..=3).contains(&mutate_order(0, 3, &mut rng)));
        }
    }

    fn step_config(gene: f64, lhs: f64, add: f64, delete: f64) -> GaConfig {
        GaConfig {
            gene_mutation_rate: gene,
            lhs_mutation_rate: lhs,
            add_module_rate: add,
            delete_module_rate: delete,
            ..GaConfig::default()
        }
    }

    #[test]
    fn mutation_rules_on_many_genomes() {
        let cfg = GaConfig::default();
        let pool = &cfg.pool;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let order_only = step_config(1.0, 0.0, 0.0, 0.0);
        let lhs_only = step_config(0.0, 1.0, 0.0, 0.0);
        let add_only = step_config(0.0, 0.0, 1.0, 0.0);
        let delete_only = step_config(0.0, 0.0, 0.0, 1.0);
        for _ in 0..100_000 {
            let genome = pool.random_genome(&mut rng);
            let mutated = mutate(&genome, &cfg, &mut rng);
            assert!(mutated.is_canonical());
            assert!(pool.admits(&mutated));
            assert!(!mutated.rhs().is_empty());

            // order steps, checked on one module to avoid cross-module dedup
            let single = Genome::new(genome.lhs(), vec![genome.rhs()[0].clone()]).unwrap();
            let stepped = mutate(&single, &order_only, &mut rng);
            let mut expected_low: Vec<u8> = single.rhs()[0].genes().iter().filter(|&&k| k > 0).map(|k| k - 1).collect();
            let zeros = single.rhs()[0].len() - expected_low.len();
            let mut got = stepped.rhs()[0].genes().to_vec();
            for k in expected_low.drain(..) {
                let pos = got.iter().position(|&v| v == k).expect("decremented gene present");
                got.remove(pos);
            }
            assert_eq!(got.len(), zeros);
            assert!(got.iter().all(|&k| (1..=3).contains(&k)));
            assert_eq!(stepped.lhs(), single.lhs());

            let flipped = mutate(&genome, &lhs_only, &mut rng);
            assert_ne!(flipped.lhs(), genome.lhs());
            assert_eq!(flipped.rhs(), genome.rhs());

            let grown = mutate(&genome, &add_only, &mut rng);
            assert!(grown.rhs().len() == genome.rhs().len() + 1 || grown.rhs().len() == genome.rhs().len());
            assert!(genome.rhs().iter().all(|m| grown.rhs().contains(m)));

            let shrunk = mutate(&genome, &delete_only, &mut rng);
            assert_eq!(shrunk.rhs().len(), genome.rhs().len().saturating_sub(1).max(1));
            assert!(shrunk.rhs().iter().all(|m| genome.rhs().contains(m)));
        }
    }

    #[test]
    fn exact_fit_fitness_is_penalty() {
        let data = kdv_jets(100);
        let cfg = GaConfig {
            fitness_mode: FitnessMode::Raw,
            ..GaConfig::default()
        };
        let rec = fitness(&g("[1],{[0,1],[3]}"), &data, &cfg).unwrap();
        assert!(rec.fit.mse < 1e-20);
        assert!((rec.fitness - 3e-4).abs() < 1e-12);
        let ut = data.temporal(1).unwrap();
        let mean = ut.iter().sum::<f64>() / ut.len() as f64;
        let var = ut.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ut.len() as f64;
        let scaled = fitness(&g("[1],{[0,1],[3]}"), &data, &GaConfig::default()).unwrap();
        assert!((scaled.fitness - 3e-4 * var).abs() < 1e-12 * var);
        assert!((rec.fit.coeffs[0] + 1.0).abs() < 1e-8);
        assert!((rec.fit.coeffs[1] + 0.0025).abs() < 1e-10);
    }

    #[test]
    fn penalty_prefers_shorter_genomes() {
        let data = kdv_jets(50);
        let evaluator = FitnessEvaluator::new(&data, 1e-4, FitnessMode::Raw);
        // both genomes contain the generating terms, so both fit with zero residual
        let short = evaluator.evaluate(&g("[1],{[0,1],[3]}")).unwrap();
        let long = evaluator.evaluate(&g("[1],{[0,0],[0,1],[3]}")).unwrap();
        assert!(short.fit.mse < 1e-20 && long.fit.mse < 1e-20);
        assert!(short.fitness < long.fitness);
    }

    #[test]
    fn ill_conditioned_gets_sentinel() {
        let n = 30;
        let col: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        // u and u_x identical: [0] and [1] are collinear
        let data = MetaDataset::from_columns(vec![(0.0, 0.0); n], vec![col.clone(), col.clone()], vec![col]).unwrap();
        let evaluator = FitnessEvaluator::new(&data, 1e-4, FitnessMode::ScaledPenalty);
        assert_eq!(evaluator.evaluate(&g("[1],{[0],[1]}")).unwrap().fitness, SENTINEL_FITNESS);
        assert!(evaluator.evaluate(&g("[1],{[0]}")).unwrap().fitness.is_finite());
    }

    #[test]
    fn true_genome_beats_single_module_genomes() {
        let data = kdv_jets(300);
        let evaluator = FitnessEvaluator::new(&data, 1e-4, FitnessMode::ScaledPenalty);
        let truth = evaluator.evaluate(&g("[1],{[0,1],[3]}")).unwrap();
        let mut count = 0;
        for a in 0..=3u8 {
            for genes in [vec![a]]
                .into_iter()
                .chain((a..=3).map(|b| vec![a, b]))
                .chain((a..=3).flat_map(|b| (b..=3).map(move |c| vec![a, b, c])))
            {
                let rec = evaluator.evaluate(&Genome::new(1, vec![m(&genes)]).unwrap()).unwrap();
                assert!(truth.fitness < rec.fitness, "{} beats truth", rec.genome);
                count += 1;
            }
        }
        assert_eq!(count, 34);
    }

    #[test]
    fn scaling_target_preserves_ranking() {
        let base = kdv_jets(80);
        let c = 7.5;
        let scaled = MetaDataset::from_columns(
            base.points().to_vec(),
            (0..=4).map(|k| base.spatial(k).unwrap().to_vec()).collect(),
            (1..=2).map(|k| base.temporal(k).unwrap().iter().map(|v| v * c).collect()).collect(),
        )
        .unwrap();
        let eps = 1e-3;
        let e1 = FitnessEvaluator::new(&base, eps, FitnessMode::Raw);
        let e2 = FitnessEvaluator::new(&scaled, eps * c * c, FitnessMode::Raw);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let genomes: Vec<Genome> = (0..60).map(|_| GenePool::standard().random_genome(&mut rng)).collect();
        let order = |e: &FitnessEvaluator| {
            let mut v: Vec<(f64, usize)> = genomes
                .iter()
                .enumerate()
                .map(|(i, gn)| (e.evaluate(gn).unwrap().fitness, i))
                .filter(|(f, _)| f.is_finite())
                .collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.into_iter().map(|(f, i)| (i, f)).collect::<Vec<_>>()
        };
        let (o1, o2) = (order(&e1), order(&e2));
        assert_eq!(o1.len(), o2.len());
        for ((i1, f1), (i2, f2)) in o1.iter().zip(&o2) {
            if i1 != i2 {
                // only exact ties may reorder
                assert!((f1 * c * c - f2).abs() <= 1e-9 * f2.abs());
            }
        }
    }

    fn small_config(seed: u64) -> GaConfig {
        GaConfig {
            population_size: 40,
            max_generations: 15,
            seed,
            ..GaConfig::default()
        }
    }

    #[test]
    fn evolve_finds_kdv_equation() {
        let data = kdv_jets(300);
        let cfg = GaConfig {
            max_generations: 30,
            elitism: true,
            ..small_config(7)
        };
        let truth = g("[1],{[0,1],[3]}");
        let exact = fitness(&truth, &data, &cfg).unwrap().fitness;
        for padded in ["[1],{[0,1],[0,3],[3]}", "[1],{[0,1],[1],[3]}"] {
            assert!(exact < fitness(&g(padded), &data, &cfg).unwrap().fitness, "{padded}");
        }
        let result = evolve(&data, &cfg).unwrap();
        assert_eq!(result.best.genome, truth);
        assert_eq!(result.trace.len(), 31);
        let min = result.trace.iter().map(|r| r.best.fitness).fold(f64::INFINITY, f64::min);
        assert_eq!(result.best.fitness, min);
        assert!(result.convergence_generation <= 30);
        assert_eq!(result.trace_log().lines().count(), 31);
    }

    #[test]
    fn evolve_is_deterministic() {
        let data = kdv_jets(100);
        let a = evolve(&data, &small_config(11)).unwrap();
        let b = evolve(&data, &small_config(11)).unwrap();
        assert_eq!(a, b);
        let c = evolve(&data, &small_config(12)).unwrap();
        assert_eq!(c.trace.len(), a.trace.len());
    }

    #[test]
    fn elitism_makes_trace_monotone() {
        let data = kdv_jets(100);
        let cfg = GaConfig {
            elitism: true,
            ..small_config(13)
        };
        let result = evolve(&data, &cfg).unwrap();
        assert!(result.trace.windows(2).all(|w| w[1].best.fitness <= w[0].best.fitness));
    }

    #[test]
    fn zero_generations_reports_initial_best() {
        let data = kdv_jets(60);
        let cfg = GaConfig {
            max_generations: 0,
            ..small_config(3)
        };
        let result = evolve(&data, &cfg).unwrap();
        assert_eq!(result.trace.len(), 1);
        assert_eq!(result.convergence_generation, 0);
        assert_eq!(result.best, result.trace[0].best);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        for cfg in [
            GaConfig { population_size: 5, ..GaConfig::default() },
            GaConfig { population_size: 2, ..GaConfig::default() },
            GaConfig { crossover_rate: 1.5, ..GaConfig::default() },
            GaConfig { epsilon: 0.0, ..GaConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        let shallow = MetaDataset::from_columns(vec![(0.0, 0.0); 4], vec![vec![0.0; 4]; 3], vec![vec![0.0; 4]; 2]).unwrap();
        assert!(matches!(evolve(&shallow, &small_config(0)), Err(Error::Config(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = GaConfig { seed: 42, elitism: true, ..GaConfig::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<GaConfig>(&text).unwrap(), cfg);
        let partial: GaConfig = serde_json::from_str(r#"{"population_size": 100}"#).unwrap();
        assert_eq!(partial.max_generations, 100);
    }

    fn module_multiset(gs: &[&Genome]) -> BTreeMap<TermModule, usize> {
        let mut out = BTreeMap::new();
        for gn in gs {
            for md in gn.rhs() {
                *out.entry(md.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn swap_conserves_module_multiset(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = GenePool::standard();
            let (a, b) = (pool.random_genome(&mut rng), pool.random_genome(&mut rng));
            let i = rng.gen_range(0..a.rhs().len());
            let j = rng.gen_range(0..b.rhs().len());
            let (c, d) = swap_modules(&a, &b, i, j);
            prop_assert_eq!(module_multiset(&[&a, &b]), module_multiset(&[&c, &d]));
            let (cc, dc) = crossover(&a, &b, 1.0, &mut rng);
            let parents = module_multiset(&[&a, &b]);
            prop_assert!(cc.rhs().iter().chain(dc.rhs()).all(|md| parents.contains_key(md)));
            prop_assert!(cc.is_canonical() && dc.is_canonical());
        }
    }
}

