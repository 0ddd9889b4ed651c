//! Negative sampling, the self-adversarial loss, sparse Adam and the
//! step-based training loop.
//!
//! ## Random streams
//!
//! All randomness derives from `config.seed` through ChaCha8 streams:
//! stream 0 initialises the parameters, and the sample at global index
//! `step * batch_size + position` uses stream `1 + index`. A sample's
//! positive, corruption side and negatives therefore do not depend on how
//! the batch is split across workers.

mod adam;
mod config;
mod grads;
mod loss;
mod sampling;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::{adam_step, OptimizerState};
pub use config::{NegMode, TrainConfig, CONFIG_KEYS};
pub use grads::Gradients;
pub use loss::{
    adversarial_weights, loss_and_grads, loss_from_distances, loss_value, negative_weights, sigmoid,
    softplus,
};
pub use sampling::{sample_negatives, CorruptSide};

use crate::checkpoint::Checkpoint;
use crate::data::{DatasetBundle, Triple};
use crate::error::{HakeError, Result};
use crate::model::{init_params, Dims, ModelParams};

/// RNG for parameter initialisation.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for the sample at `global_index`.
pub fn sample_rng(seed: u64, global_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(global_index.wrapping_add(1));
    rng
}

/// One training sample: a positive and its negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
}

fn corrupt_side(mode: NegMode, global_index: u64) -> CorruptSide {
    match mode {
        NegMode::Head => CorruptSide::Head,
        NegMode::Tail => CorruptSide::Tail,
        NegMode::Both if global_index % 2 == 0 => CorruptSide::Tail,
        NegMode::Both => CorruptSide::Head,
    }
}

/// Draws the sample at `global_index`: a uniform train positive (with
/// replacement) and `n_neg` corruptions of it.
pub fn draw_sample(bundle: &DatasetBundle, config: &TrainConfig, seed: u64, global_index: u64) -> Sample {
    let mut rng = sample_rng(seed, global_index);
    let positive = bundle.train[rng.gen_range(0..bundle.train.len())];
    let side = corrupt_side(config.neg_mode, global_index);
    let negatives = sample_negatives(&positive, config.n_neg, side, bundle, &mut rng);
    Sample { positive, negatives }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub ms_per_step: f64,
}

impl LogEntry {
    pub fn format(&self, timing: bool) -> String {
        if timing {
            format!("step={} loss={:.6} ms_per_step={:.3}", self.step, self.loss, self.ms_per_step)
        } else {
            format!("step={} loss={:.6}", self.step, self.loss)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub state: OptimizerState,
    pub log: Vec<LogEntry>,
}

/// Knobs that do not affect the result.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Checkpoint directory; `None` writes nothing.
    pub out_dir: Option<PathBuf>,
    /// Worker threads for per-sample gradients; 0 or 1 runs inline.
    pub workers: usize,
}

fn check_trainable(bundle: &DatasetBundle, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if bundle.train.is_empty() {
        return Err(HakeError::Data("training split is empty".into()));
    }
    Ok(())
}

/// Mean loss and gradient over one batch of samples, summed in sample order.
fn batch_loss_and_grads(
    params: &ModelParams,
    samples: &[Sample],
    config: &TrainConfig,
    pool: Option<&rayon::ThreadPool>,
) -> (f64, Gradients) {
    let work = |s: &Sample| loss::loss_and_grads_unchecked(params, &s.positive, &s.negatives, config);
    let per_sample: Vec<(f64, Gradients)> = match pool {
        Some(pool) => pool.install(|| samples.par_iter().map(work).collect()),
        None => samples.iter().map(work).collect(),
    };
    let mut total = Gradients::new();
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        total.merge(g);
    }
    let inv = 1.0 / samples.len() as f64;
    total.scale(inv);
    (loss * inv, total)
}

/// Mean loss of a fixed set of samples.
pub fn mean_loss(params: &ModelParams, samples: &[Sample], config: &TrainConfig) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            loss_value(params, &s.positive, &s.negatives, config, None)
                .expect("samples come from the same bundle")
        })
        .sum();
    total / samples.len() as f64
}

/// A reproducible probe batch drawn from streams disjoint from training.
pub fn probe_batch(bundle: &DatasetBundle, config: &TrainConfig, size: usize) -> Vec<Sample> {
    let probe_seed = config.seed ^ 0x9E37_79B9_7F4A_7C15;
    (0..size as u64)
        .map(|i| draw_sample(bundle, config, probe_seed, i))
        .collect()
}

pub fn train(bundle: &DatasetBundle, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(bundle, config, &TrainOptions::default(), |_| {})
}

/// Runs `max_steps` batches from a fresh initialisation, calling `on_log`
/// every `log_every` steps.
pub fn train_with(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    options: &TrainOptions,
    mut on_log: impl FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    check_trainable(bundle, config)?;
    let dims = Dims {
        entities: bundle.num_entities(),
        relations: bundle.num_relations(),
        k: config.k,
    };
    let mut params = init_params(dims, config, &mut init_rng(config.seed))?;
    let mut state = OptimizerState::new(&params);
    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| HakeError::Config(format!("cannot start worker pool: {e}")))?,
        )
    } else {
        None
    };

    let mut log = Vec::new();
    let mut since_log = Instant::now();
    let batch = config.batch_size as u64;
    for step in 1..=config.max_steps {
        let base = (step as u64 - 1) * batch;
        let samples: Vec<Sample> = (0..batch)
            .map(|pos| draw_sample(bundle, config, config.seed, base + pos))
            .collect();
        let (loss, grads) = batch_loss_and_grads(&params, &samples, config, pool.as_ref());
        if !loss.is_finite() {
            return Err(HakeError::Numeric(format!("loss became {loss} at step {step}")));
        }
        adam_step(&mut params, &mut state, &grads, config)?;

        if step % config.log_every == 0 {
            let entry = LogEntry {
                step,
                loss,
                ms_per_step: since_log.elapsed().as_secs_f64() * 1e3 / config.log_every as f64,
            };
            on_log(&entry);
            log.push(entry);
            since_log = Instant::now();
        }
        if let Some(dir) = &options.out_dir {
            if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step != config.max_steps {
                write_checkpoints(dir, &params, config.seed, step)?;
            }
        }
    }
    if let Some(dir) = &options.out_dir {
        write_checkpoints(dir, &params, config.seed, config.max_steps)?;
    }
    Ok(TrainOutcome { params, state, log })
}

fn write_checkpoints(dir: &Path, params: &ModelParams, seed: u64, step: usize) -> Result<()> {
    let ckpt = Checkpoint {
        params: params.clone(),
        seed,
        step: step as u64,
    };
    ckpt.save(&dir.join(format!("step_{step}.ckpt")))?;
    ckpt.save(&dir.join("latest.ckpt"))
}
