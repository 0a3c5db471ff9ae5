//! Fully-connected surrogate `NN(x, t; theta)`, its training loop, and
//! meta-data generation with derivative jets.
//!
//! Inputs are mapped affinely to `[-1, 1]` per axis and the output is
//! de-standardized inside the network, so both [`SurrogateNet::forward`] and
//! the series propagation work in physical units. Seeding the jet with slope
//! `1 / half_width` applies the input chain rule automatically.

use std::path::Path;

use ndarray::{Array1, Array2, Axis as NdAxis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NetError, SeriesError};
use crate::series::{self, sin_cos_into, tanh_into, TruncatedSeries};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sin,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sin => "sin",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, NetError> {
        match name {
            "sin" => Ok(Activation::Sin),
            "tanh" => Ok(Activation::Tanh),
            other => Err(NetError::UnsupportedActivation(other.to_string())),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sin => z.sin(),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and activation `a = f(z)`.
    #[inline]
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sin => z.cos(),
            Activation::Tanh => 1.0 - a * a,
        }
    }

    fn apply_series(self, z: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match self {
            Activation::Sin => sin_cos_into(z, out, scratch),
            Activation::Tanh => tanh_into(z, out, scratch),
        }
    }
}

/// Input axis of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    T,
}

/// Affine maps applied around the raw network: inputs `(v - center) / half_width`,
/// output `raw * u_scale + u_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_center: f64,
    pub x_half_width: f64,
    pub t_center: f64,
    pub t_half_width: f64,
    pub u_shift: f64,
    pub u_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            x_center: 0.0,
            x_half_width: 1.0,
            t_center: 0.0,
            t_half_width: 1.0,
            u_shift: 0.0,
            u_scale: 1.0,
        }
    }
}

impl Normalization {
    /// Fits input ranges and output mean/std to a sample set.
    pub fn fit(samples: &[Sample]) -> Self {
        let range = |f: fn(&Sample) -> f64| {
            let (lo, hi) = samples
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            let half = 0.5 * (hi - lo);
            (0.5 * (hi + lo), if half > 0.0 { half } else { 1.0 })
        };
        let (x_center, x_half_width) = range(|s| s.x);
        let (t_center, t_half_width) = range(|s| s.t);
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.u).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.u - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            x_center,
            x_half_width,
            t_center,
            t_half_width,
            u_shift: mean,
            u_scale: if std > 0.0 { std } else { 1.0 },
        }
    }
}

/// One observation `u(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub t: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `(out, in)`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Feed-forward network with input width 2 and output width 1. Every layer
/// but the last applies `activation`; the last is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet {
    layer_sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
    normalization: Normalization,
}

fn check_sizes(sizes: &[usize]) -> Result<(), NetError> {
    if sizes.len() < 2 {
        return Err(NetError::Shape("need at least input and output sizes".into()));
    }
    if sizes[0] != 2 {
        return Err(NetError::Shape(format!("input width must be 2, got {}", sizes[0])));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(NetError::Shape(format!(
            "output width must be 1, got {}",
            sizes.last().unwrap()
        )));
    }
    if sizes.contains(&0) {
        return Err(NetError::Shape("layer widths must be positive".into()));
    }
    Ok(())
}

impl SurrogateNet {
    /// Random network with LeCun-uniform weights (`U(-sqrt(3/fan_in), sqrt(3/fan_in))`)
    /// and zero biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self, NetError> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (3.0 / fan_in as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| {
                        rng.gen_range(-limit..limit)
                    }),
                    biases: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            layers,
            normalization: Normalization::default(),
        })
    }

    /// Assembles a network from explicit layers, checking that shapes chain.
    pub fn from_layers(
        layers: Vec<Layer>,
        activation: Activation,
        normalization: Normalization,
    ) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::Shape("no layers".into()));
        }
        let mut sizes = vec![layers[0].weights.ncols()];
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.ncols() != *sizes.last().unwrap() {
                return Err(NetError::Shape(format!(
                    "layer {i} expects {} inputs but previous layer yields {}",
                    layer.weights.ncols(),
                    sizes.last().unwrap()
                )));
            }
            if layer.biases.len() != layer.weights.nrows() {
                return Err(NetError::Shape(format!(
                    "layer {i} has {} biases for {} outputs",
                    layer.biases.len(),
                    layer.weights.nrows()
                )));
            }
            sizes.push(layer.weights.nrows());
        }
        check_sizes(&sizes)?;
        Ok(Self {
            layer_sizes: sizes,
            activation,
            layers,
            normalization,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn set_normalization(&mut self, normalization: Normalization) {
        self.normalization = normalization;
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// `NN(x, t; theta)` in physical units.
    pub fn forward(&self, x: f64, t: f64) -> f64 {
        let n = &self.normalization;
        let mut a = vec![(x - n.x_center) / n.x_half_width, (t - n.t_center) / n.t_half_width];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let z: Vec<f64> = layer
                .weights
                .outer_iter()
                .zip(layer.biases.iter())
                .map(|(row, &b)| {
                    let mut acc = b;
                    for (w, v) in row.iter().zip(&a) {
                        acc += w * v;
                    }
                    if li == last {
                        acc
                    } else {
                        self.activation.apply(acc)
                    }
                })
                .collect();
            a = z;
        }
        a[0] * n.u_scale + n.u_shift
    }

    /// Propagates a degree-`degree` series seeded on `axis` through the
    /// network. The constant coefficient follows the exact operation sequence
    /// of [`forward`](Self::forward), so it matches it bit for bit.
    pub fn propagate_series(&self, x: f64, t: f64, axis: Axis, degree: usize) -> TruncatedSeries {
        let nc = degree + 1;
        let n = &self.normalization;
        let mut a = vec![0.0; 2 * nc];
        a[0] = (x - n.x_center) / n.x_half_width;
        a[nc] = (t - n.t_center) / n.t_half_width;
        if degree > 0 {
            match axis {
                Axis::X => a[1] = 1.0 / n.x_half_width,
                Axis::T => a[nc + 1] = 1.0 / n.t_half_width,
            }
        }
        let mut z = Vec::new();
        let mut scratch = vec![0.0; nc];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let out = layer.weights.nrows();
            z.clear();
            z.resize(out * nc, 0.0);
            for (i, row) in layer.weights.outer_iter().enumerate() {
                let zi = &mut z[i * nc..(i + 1) * nc];
                zi[0] = layer.biases[i];
                for (j, w) in row.iter().enumerate() {
                    let aj = &a[j * nc..(j + 1) * nc];
                    for k in 0..nc {
                        zi[k] += w * aj[k];
                    }
                }
            }
            if li == last {
                std::mem::swap(&mut a, &mut z);
            } else {
                a.clear();
                a.resize(out * nc, 0.0);
                for i in 0..out {
                    self.activation.apply_series(
                        &z[i * nc..(i + 1) * nc],
                        &mut a[i * nc..(i + 1) * nc],
                        &mut scratch,
                    );
                }
            }
        }
        let mut coeffs: Vec<f64> = a[..nc].iter().map(|c| c * n.u_scale).collect();
        coeffs[0] = a[0] * n.u_scale + n.u_shift;
        TruncatedSeries::from_coeffs(coeffs).expect("degree + 1 >= 1 coefficients")
    }

    /// Batch forward on already-normalized inputs of shape `(2, batch)`.
    /// Returns pre-activations and activations per layer (activations[0] is the input).
    fn forward_batch(&self, input: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.dot(acts.last().unwrap());
            z += &layer.biases.view().insert_axis(NdAxis(1));
            let a = if li == last {
                z.clone()
            } else {
                let act = self.activation;
                z.mapv(|v| act.apply(v))
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    /// Mean squared error on normalized targets and its gradient.
    fn loss_and_gradient(&self, input: &Array2<f64>, target: &Array2<f64>) -> (f64, Vec<Layer>) {
        let (pre, acts) = self.forward_batch(input);
        let batch = input.ncols() as f64;
        let residual = acts.last().unwrap() - target;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / batch;
        let mut delta = residual * (2.0 / batch);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for li in (0..self.layers.len()).rev() {
            let gw = delta.dot(&acts[li].t());
            let gb = delta.sum_axis(NdAxis(1));
            if li > 0 {
                let back = self.layers[li].weights.t().dot(&delta);
                let act = self.activation;
                let mut slope = pre[li - 1].clone();
                ndarray::Zip::from(&mut slope)
                    .and(&acts[li])
                    .for_each(|z, &a| *z = act.slope(*z, a));
                delta = back * slope;
            }
            grads.push(Layer {
                weights: gw,
                biases: gb,
            });
        }
        grads.reverse();
        (loss, grads)
    }

    fn normalized_inputs(&self, samples: &[Sample]) -> (Array2<f64>, Array2<f64>) {
        let n = &self.normalization;
        let mut input = Array2::zeros((2, samples.len()));
        let mut target = Array2::zeros((1, samples.len()));
        for (i, s) in samples.iter().enumerate() {
            input[[0, i]] = (s.x - n.x_center) / n.x_half_width;
            input[[1, i]] = (s.t - n.t_center) / n.t_half_width;
            target[[0, i]] = (s.u - n.u_shift) / n.u_scale;
        }
        (input, target)
    }

    pub fn to_json(&self) -> Result<String, Error> {
        let file = NetFile {
            format: NET_FORMAT.to_string(),
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation.name().to_string(),
            weights: self
                .layers
                .iter()
                .map(|l| l.weights.iter().copied().collect())
                .collect(),
            biases: self.layers.iter().map(|l| l.biases.to_vec()).collect(),
            normalization: self.normalization.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let file: NetFile = serde_json::from_str(text)?;
        if file.format != NET_FORMAT {
            return Err(NetError::Shape(format!("unknown net format `{}`", file.format)).into());
        }
        let activation = Activation::from_name(&file.activation)?;
        check_sizes(&file.layer_sizes)?;
        let expected = file.layer_sizes.len() - 1;
        if file.weights.len() != expected || file.biases.len() != expected {
            return Err(NetError::Shape("layer count does not match layer_sizes".into()).into());
        }
        let layers = file
            .layer_sizes
            .windows(2)
            .zip(file.weights.into_iter().zip(file.biases))
            .map(|(w, (weights, biases))| {
                let weights = Array2::from_shape_vec((w[1], w[0]), weights)
                    .map_err(|e| NetError::Shape(e.to_string()))?;
                Ok(Layer {
                    weights,
                    biases: Array1::from(biases),
                })
            })
            .collect::<Result<Vec<_>, NetError>>()?;
        Ok(Self::from_layers(layers, activation, file.normalization)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

const NET_FORMAT: &str = "dlga-surrogate-v1";

/// On-disk layout: weights flattened row-major per layer (`out x in`).
#[derive(Serialize, Deserialize)]
struct NetFile {
    format: String,
    layer_sizes: Vec<usize>,
    activation: String,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate reached at `max_epochs` under exponential decay.
    /// Equal to `learning_rate` disables decay.
    pub final_learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            final_learning_rate: 1e-3,
            max_epochs: 30_000,
            batch_size: 256,
            validation_fraction: 0.2,
            patience: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) || !(self.final_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, batch size and patience must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> EpochLoss {
        self.epochs[self.best_epoch]
    }
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &SurrogateNet) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.len()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, net: &mut SurrogateNet, grads: &[Layer], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let rule = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| rule(p, g, m, v));
            ndarray::Zip::from(&mut layer.biases)
                .and(&g.biases)
                .and(&mut m.biases)
                .and(&mut v.biases)
                .for_each(|p, &g, m, v| rule(p, g, m, v));
        }
    }
}

/// Mini-batch Adam on the squared-error loss with early stopping on a
/// held-out validation split. Returns the parameters of the best
/// validation epoch. Losses in the history are in physical units.
pub fn train(
    net: &SurrogateNet,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<(SurrogateNet, TrainHistory), NetError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(NetError::NoSamples);
    }
    let mut net = net.clone();
    net.normalization = Normalization::fit(samples);
    let unit = net.normalization.u_scale.powi(2);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (samples.len() as f64 * cfg.validation_fraction).round() as usize;
    let (val_idx, train_idx) = if n_val == 0 || n_val == samples.len() {
        (order.clone(), order)
    } else {
        let (v, t) = order.split_at(n_val);
        (v.to_vec(), t.to_vec())
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    let (train_in, train_out) = net.normalized_inputs(&pick(&train_idx));
    let (val_in, val_out) = net.normalized_inputs(&pick(&val_idx));

    let mut adam = Adam::new(&net);
    let mut best = net.clone();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best_val = f64::INFINITY;
    let decay = (cfg.final_learning_rate / cfg.learning_rate).ln() / cfg.max_epochs as f64;
    let mut perm: Vec<usize> = (0..train_idx.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.learning_rate * (decay * epoch as f64).exp();
        perm.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in perm.chunks(cfg.batch_size) {
            let input = train_in.select(NdAxis(1), chunk);
            let target = train_out.select(NdAxis(1), chunk);
            let (loss, grads) = net.loss_and_gradient(&input, &target);
            if !loss.is_finite() {
                return Err(NetError::Divergence { epoch });
            }
            sum += loss * chunk.len() as f64;
            adam.update(&mut net, &grads, lr);
        }
        let (_, acts) = net.forward_batch(&val_in);
        let val_mse = (acts.last().unwrap() - &val_out)
            .iter()
            .map(|r| r * r)
            .sum::<f64>()
            / val_idx.len() as f64;
        if !val_mse.is_finite() {
            return Err(NetError::Divergence { epoch });
        }
        history.epochs.push(EpochLoss {
            train_mse: sum / train_idx.len() as f64 * unit,
            validation_mse: val_mse * unit,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best = net.clone();
            history.best_epoch = epoch;
        } else if epoch - history.best_epoch >= cfg.patience {
            break;
        }
    }
    Ok((best, history))
}

/// One axis of a uniform meta-data grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub start: f64,
    pub end: f64,
    pub count: usize,
    /// `true`: nodes span `[start, end]`; `false`: `[start, end)` with step `(end - start) / count`.
    pub include_end: bool,
}

impl GridAxis {
    pub fn nodes(&self) -> Vec<f64> {
        let div = if self.include_end {
            self.count.saturating_sub(1).max(1)
        } else {
            self.count
        };
        let step = (self.end - self.start) / div as f64;
        (0..self.count).map(|i| self.start + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaGridSpec {
    pub x: GridAxis,
    pub t: GridAxis,
    #[serde(default = "default_spatial_order")]
    pub spatial_order: usize,
    #[serde(default = "default_temporal_order")]
    pub temporal_order: usize,
}

fn default_spatial_order() -> usize {
    4
}

fn default_temporal_order() -> usize {
    2
}

impl MetaGridSpec {
    pub fn new(x: GridAxis, t: GridAxis) -> Self {
        Self {
            x,
            t,
            spatial_order: default_spatial_order(),
            temporal_order: default_temporal_order(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.count * self.t.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Collocation points with derivative columns.
///
/// `spatial[k][i]` holds `d^k u / dx^k` at point `i` (so `spatial[0]` is `u`),
/// `temporal[k - 1][i]` holds `d^k u / dt^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    points: Vec<(f64, f64)>,
    spatial: Vec<Vec<f64>>,
    temporal: Vec<Vec<f64>>,
}

impl MetaDataset {
    /// Builds a dataset from precomputed columns (manufactured solutions, tests).
    pub fn from_columns(
        points: Vec<(f64, f64)>,
        spatial: Vec<Vec<f64>>,
        temporal: Vec<Vec<f64>>,
    ) -> Result<Self, NetError> {
        if points.is_empty() {
            return Err(NetError::EmptyGrid);
        }
        if spatial.is_empty() {
            return Err(NetError::Shape("need at least the u column".into()));
        }
        let n = points.len();
        if spatial.iter().chain(&temporal).any(|c| c.len() != n) {
            return Err(NetError::Shape("derivative columns must match point count".into()));
        }
        Ok(Self {
            points,
            spatial,
            temporal,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn max_spatial_order(&self) -> usize {
        self.spatial.len() - 1
    }

    pub fn max_temporal_order(&self) -> usize {
        self.temporal.len()
    }

    pub fn spatial(&self, order: usize) -> Option<&[f64]> {
        self.spatial.get(order).map(|c| c.as_slice())
    }

    pub fn temporal(&self, order: usize) -> Option<&[f64]> {
        if order == 0 {
            return self.spatial(0);
        }
        self.temporal.get(order - 1).map(|c| c.as_slice())
    }

    /// The jet at point `i`: `u, u_x, .., u_t, ..` in that order.
    pub fn jet(&self, i: usize) -> Vec<f64> {
        self.spatial
            .iter()
            .chain(&self.temporal)
            .map(|c| c[i])
            .collect()
    }

    /// Rows reordered by `perm` (row `i` of the result is row `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let take = |c: &Vec<f64>| perm.iter().map(|&i| c[i]).collect();
        Self {
            points: perm.iter().map(|&i| self.points[i]).collect(),
            spatial: self.spatial.iter().map(take).collect(),
            temporal: self.temporal.iter().map(take).collect(),
        }
    }
}

/// Evaluates spatial and temporal jets of `net` on every node of `grid`
/// (t-major: all x nodes for the first t, then the next t, ...).
pub fn generate_meta_data(net: &SurrogateNet, grid: &MetaGridSpec) -> Result<MetaDataset, NetError> {
    if grid.is_empty() {
        return Err(NetError::EmptyGrid);
    }
    for order in [grid.spatial_order, grid.temporal_order] {
        if order > series::MAX_JET_ORDER {
            return Err(SeriesError::OrderTooHigh {
                requested: order,
                max: series::MAX_JET_ORDER,
            }
            .into());
        }
    }
    let xs = grid.x.nodes();
    let ts = grid.t.nodes();
    let points: Vec<(f64, f64)> = ts
        .iter()
        .flat_map(|&t| xs.iter().map(move |&x| (x, t)))
        .collect();
    let jets: Vec<(Vec<f64>, Vec<f64>)> = points
        .par_iter()
        .map(|&(x, t)| {
            let sx = net.propagate_series(x, t, Axis::X, grid.spatial_order).derivatives();
            let st = net.propagate_series(x, t, Axis::T, grid.temporal_order).derivatives();
            (sx, st)
        })
        .collect();
    let mut spatial = vec![Vec::with_capacity(points.len()); grid.spatial_order + 1];
    let mut temporal = vec![Vec::with_capacity(points.len()); grid.temporal_order];
    for (sx, st) in jets {
        for (col, v) in spatial.iter_mut().zip(sx) {
            col.push(v);
        }
        for (col, v) in temporal.iter_mut().zip(st.into_iter().skip(1)) {
            col.push(v);
        }
    }
    MetaDataset::from_columns(points, spatial, temporal)
}
