use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::metrics::MetricsReport;
use super::{PipelineError, Result};
use crate::featurize::{FeatureAblation, CHANNELS};
use crate::model::{denormalize, forward_centralized, normalize, ModelConfig, ModelParams, Neighbors};
use crate::numerics::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::seed::derive_seed;

const SPLIT_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub ablation: FeatureAblation,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    pub time_budget_secs: f64,
    /// Share of samples held out for validation. With 0 the training
    /// samples double as the validation set.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            ablation: FeatureAblation::default(),
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 200,
            patience: Some(10),
            time_budget_secs: 1800.0,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_dist50: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    TimeBudget,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation median distance.
    pub params: ModelParams,
    pub curve: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_dist50: f64,
    pub initial_val_dist50: f64,
    pub stop: StopReason,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Samples flattened into model-ready form under one feature ablation.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ModelConfig,
    features: Vec<Vec<f64>>,
    neighbors: Vec<Vec<Vec<usize>>>,
    labels: Vec<Vec<Option<[f64; 2]>>>,
}

struct Batch {
    x: Tensor,
    neighbors: Neighbors,
    rows: Vec<usize>,
    targets: Tensor,
}

/// Applies `ablation` and builds communication graphs, optionally with every
/// radius replaced by `r_comm`.
pub fn prepare(
    samples: &[Sample],
    ablation: FeatureAblation,
    config: &ModelConfig,
    r_comm: Option<f64>,
) -> Result<Prepared> {
    let mut out = Prepared { config: config.clone(), features: Vec::new(), neighbors: Vec::new(), labels: Vec::new() };
    for s in samples {
        if s.world.width() != config.width || s.world.height() != config.height {
            return Err(PipelineError::Config(format!(
                "sample map is {}x{}, model expects {}x{}",
                s.world.width(),
                s.world.height(),
                config.width,
                config.height
            )));
        }
        let mut x = Vec::with_capacity(s.agents.len() * CHANNELS * config.width * config.height);
        for (f, a) in s.features.iter().zip(&s.agents) {
            x.extend_from_slice(&ablation.apply(f, a).data);
        }
        out.features.push(x);
        out.neighbors.push(s.graph(r_comm)?.neighbor_lists().to_vec());
        out.labels.push(
            s.labels.iter().map(|l| l.map(|c| normalize([c.x as f64, c.y as f64], config))).collect(),
        );
    }
    Ok(out)
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Block-diagonal batch of the given samples.
    fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let c = &self.config;
        let mut x = Vec::new();
        let mut neighbors = Vec::new();
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        let mut offset = 0;
        for &i in idx {
            x.extend_from_slice(&self.features[i]);
            for nb in &self.neighbors[i] {
                neighbors.push(nb.iter().map(|j| j + offset).collect());
            }
            for (a, l) in self.labels[i].iter().enumerate() {
                if let Some(t) = l {
                    rows.push(offset + a);
                    targets.extend_from_slice(t);
                }
            }
            offset += self.labels[i].len();
        }
        Ok(Batch {
            x: Tensor::new(vec![offset, CHANNELS, c.height, c.width], x)?,
            neighbors: Rc::new(neighbors),
            targets: Tensor::new(vec![rows.len(), 2], targets)?,
            rows,
        })
    }

    /// Normalized predictions per sample and agent.
    pub fn predict(&self, params: &ModelParams, idx: &[usize]) -> Result<Vec<Vec<[f64; 2]>>> {
        let chunks = idx
            .par_chunks(EVAL_BATCH)
            .map(|chunk| {
                let b = self.batch(chunk)?;
                let tape = Tape::new();
                let bound = params.bind(&tape);
                let x = tape.leaf(b.x);
                let y = forward_centralized(&bound, &x, &b.neighbors)?.to_tensor();
                let mut rows = y.data().chunks_exact(2).map(|r| [r[0], r[1]]);
                Ok(chunk.iter().map(|&i| rows.by_ref().take(self.labels[i].len()).collect()).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Distances in cells between predictions and labels, labelled agents only.
    pub fn distances(&self, params: &ModelParams, idx: &[usize]) -> Result<Vec<f64>> {
        let preds = self.predict(params, idx)?;
        let c = &self.config;
        let mut d = Vec::new();
        for (p, &i) in preds.iter().zip(idx) {
            for (xy, l) in p.iter().zip(&self.labels[i]) {
                if let Some(t) = l {
                    let a = denormalize(*xy, c);
                    let b = denormalize(*t, c);
                    d.push(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
                }
            }
        }
        Ok(d)
    }

    pub fn report(&self, params: &ModelParams, idx: &[usize]) -> Result<MetricsReport> {
        Ok(MetricsReport::from_distances(&self.distances(params, idx)?))
    }
}

fn split(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM)));
    let n_val = ((n as f64) * val_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return (idx.clone(), idx);
    }
    let val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    let mut val_sorted = val;
    val_sorted.sort_unstable();
    (train, val_sorted)
}

pub fn train(samples: &[Sample], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(samples, config, |_| {})
}

/// Minibatch Adam on the masked mean squared coordinate error, keeping the
/// parameters with the best validation median distance.
pub fn train_with_progress(
    samples: &[Sample],
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(PipelineError::Config("no training samples".into()));
    }
    if config.batch_size == 0 || !(0.0..1.0).contains(&config.val_fraction) {
        return Err(PipelineError::Config("batch size must be positive and val fraction in [0, 1)".into()));
    }
    let start = Instant::now();
    let data = prepare(samples, config.ablation, &config.model, None)?;
    let (train_idx, val_idx) = split(samples.len(), config.val_fraction, config.seed);

    let mut params = ModelParams::init(config.model.clone(), derive_seed(config.seed, INIT_STREAM))?;
    let mut flat: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let mut adam = AdamState::new(&flat);

    let initial = MetricsReport::from_distances(&data.distances(&params, &val_idx)?).dist_50;
    let mut best = (initial, 0, params.clone());
    let mut curve = Vec::new();
    let mut since_best = 0;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM + epoch as u64)));
        let (mut loss_sum, mut rows) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = data.batch(chunk)?;
            if batch.rows.is_empty() {
                continue;
            }
            let tape = Tape::new();
            let bound = params.bind(&tape);
            let x = tape.leaf(batch.x);
            let y = forward_centralized(&bound, &x, &batch.neighbors)?;
            let picked = y.select_rows(&batch.rows)?;
            let t = tape.leaf(batch.targets);
            let loss = picked.mse_loss(&t)?;
            let lv = loss.value().item();
            if !lv.is_finite() {
                return Err(PipelineError::NonFinite { epoch, batch: bi, loss: lv });
            }
            let mut grads = tape.backward(&loss)?;
            let g: Vec<Tensor> = bound.vars().iter().map(|v| grads.take_or_zeros(v)).collect();
            adam_step(&mut flat, &g, &mut adam, &config.adam);
            params.set_tensors(flat.clone())?;
            loss_sum += lv * batch.rows.len() as f64;
            rows += batch.rows.len();
        }
        let val = MetricsReport::from_distances(&data.distances(&params, &val_idx)?).dist_50;
        let log = EpochLog { epoch, train_loss: loss_sum / rows.max(1) as f64, val_dist50: val };
        progress(&log);
        curve.push(log);
        if val < best.0 {
            best = (val, epoch, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if config.patience.is_some_and(|p| since_best >= p) {
            stop = StopReason::EarlyStop;
            break;
        }
        if start.elapsed().as_secs_f64() >= config.time_budget_secs {
            stop = StopReason::TimeBudget;
            break;
        }
    }
    let (best_val_dist50, best_epoch, params) = best;
    Ok(TrainOutcome {
        params,
        curve,
        best_epoch,
        best_val_dist50,
        initial_val_dist50: initial,
        stop,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}
