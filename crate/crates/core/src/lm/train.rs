use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Activations, TensorRole, IGNORE};
use super::{perplexity, Checkpoint, Gpt, LmError, Real, TrainConfig};
use crate::corpus::{BatchSampler, BlockStore};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const DROPOUT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogKind {
    Step,
    Checkpoint,
}

/// One training-log line. `step` counts completed optimizer steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub kind: LogKind,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub val_ppl: Option<f64>,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "kind,step,loss,lr,grad_norm,val_ppl";

    pub fn write_csv<W: Write>(rows: &[LogRow], mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }
}

impl fmt::Display for LogRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            LogKind::Step => "step",
            LogKind::Checkpoint => "checkpoint",
        };
        write!(f, "{kind},{},{},{},{},", self.step, self.loss, self.lr, self.grad_norm)?;
        if let Some(p) = self.val_ppl {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest validation perplexity; the earliest wins ties.
    pub best: Checkpoint,
    /// (step, validation perplexity) for every evaluated checkpoint.
    pub checkpoints: Vec<(usize, f64)>,
    pub log: Vec<LogRow>,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f64> {
        self.log
            .iter()
            .filter(|r| r.kind == LogKind::Step)
            .map(|r| r.loss)
            .collect()
    }
}

/// Optimizer state plus reusable buffers; one call to [`Trainer::step`] is
/// one AdamW update on one sampled batch.
#[derive(Debug)]
pub struct Trainer<T> {
    cfg: TrainConfig,
    m: Vec<T>,
    v: Vec<T>,
    grads: Vec<T>,
    decay: Vec<bool>,
    acts: Activations<T>,
    sampler: BatchSampler,
    dropout_rng: ChaCha8Rng,
    ids: Vec<u32>,
    targets: Vec<u32>,
    step: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: &Gpt<T>, blocks: &BlockStore, cfg: &TrainConfig) -> Result<Self, LmError> {
        cfg.validate()?;
        if blocks.is_empty() {
            return Err(LmError::NoBlocks("train on"));
        }
        if blocks.context() > model.config().context {
            return Err(LmError::TooLong {
                len: blocks.context(),
                context: model.config().context,
            });
        }
        if let Some(max) = blocks.max_id() {
            if max as usize >= model.config().vocab_size {
                return Err(LmError::IdOutOfRange {
                    id: max,
                    vocab: model.config().vocab_size,
                });
            }
        }
        let n = model.param_count();
        let mut decay = vec![false; n];
        for t in model.layout().tensors() {
            if t.role == TensorRole::Matrix {
                decay[t.range()].fill(true);
            }
        }
        let sampler = BatchSampler::new(blocks.len(), cfg.batch_size, cfg.seed)
            .map_err(|e| LmError::Config(e.to_string()))?;
        Ok(Self {
            cfg: cfg.clone(),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            grads: vec![T::zero(); n],
            decay,
            acts: Activations::default(),
            sampler,
            dropout_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM),
            ids: Vec::new(),
            targets: Vec::new(),
            step: 0,
        })
    }

    /// Completed steps so far.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Runs one optimizer step and returns its log row.
    pub fn step(&mut self, model: &mut Gpt<T>, blocks: &BlockStore) -> Result<LogRow, LmError> {
        let batch = self.sampler.next().expect("sampler is endless");
        let c = blocks.context();
        let pad = blocks.pad_id();
        self.ids.clear();
        self.targets.clear();
        for &i in &batch {
            let block = blocks.block(i);
            self.ids.extend_from_slice(block);
            self.targets.extend(
                (0..c).map(|t| match block.get(t + 1) {
                    Some(&next) if next != pad => next,
                    _ => IGNORE,
                }),
            );
        }

        let lr = self.cfg.lr_at(self.step);
        model.forward_into(&self.ids, batch.len(), c, &mut self.acts, Some(&mut self.dropout_rng))?;
        let (loss, _) = model.loss(&self.acts, &self.targets);
        model.backward(&self.ids, &self.targets, &self.acts, &mut self.grads);
        let grad_norm = self.grads.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(LmError::NonFinite {
                step: self.step,
                lr,
                grad_norm,
            });
        }
        if self.cfg.grad_clip > 0.0 && grad_norm > self.cfg.grad_clip {
            let s = T::from_f64_lossy(self.cfg.grad_clip / (grad_norm + 1e-6));
            for g in &mut self.grads {
                *g *= s;
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::from_f64_lossy(1.0 - BETA1.powi(t));
        let bc2 = T::from_f64_lossy(1.0 - BETA2.powi(t));
        let (b1, b2) = (T::from_f64_lossy(BETA1), T::from_f64_lossy(BETA2));
        let (one, eps) = (T::one(), T::from_f64_lossy(ADAM_EPS));
        let lr_t = T::from_f64_lossy(lr);
        let wd = T::from_f64_lossy(lr * self.cfg.weight_decay);
        let params = model.params_mut();
        for i in 0..params.len() {
            let g = self.grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            if self.decay[i] {
                params[i] -= wd * params[i];
            }
            params[i] -= lr_t * mhat / (vhat.sqrt() + eps);
        }
        Ok(LogRow {
            kind: LogKind::Step,
            step: self.step,
            loss,
            lr,
            grad_norm,
            val_ppl: None,
        })
    }
}

/// Trains for `cfg.max_steps`, evaluating validation perplexity at every
/// checkpoint step, and returns the best checkpoint with the full log.
///
/// `on_row` sees every log row as it is produced.
pub fn train<T: Real>(
    model: &mut Gpt<T>,
    train_blocks: &BlockStore,
    valid_blocks: &BlockStore,
    cfg: &TrainConfig,
    on_row: &mut dyn FnMut(&LogRow),
) -> Result<TrainOutcome, LmError> {
    train_with_checkpoints(model, train_blocks, valid_blocks, cfg, on_row, &mut |_| Ok(()))
}

/// [`train`], additionally handing every checkpoint snapshot to `on_checkpoint`
/// (for example to write it to disk). An error from the hook stops training.
pub fn train_with_checkpoints<T: Real>(
    model: &mut Gpt<T>,
    train_blocks: &BlockStore,
    valid_blocks: &BlockStore,
    cfg: &TrainConfig,
    on_row: &mut dyn FnMut(&LogRow),
    on_checkpoint: &mut dyn FnMut(&Checkpoint) -> Result<(), LmError>,
) -> Result<TrainOutcome, LmError> {
    if valid_blocks.is_empty() {
        return Err(LmError::NoBlocks("validate on"));
    }
    let mut trainer = Trainer::new(model, train_blocks, cfg)?;
    let mut log = Vec::with_capacity(cfg.max_steps + 8);
    let mut checkpoints = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut next_ckpt = cfg.checkpoint_steps().into_iter().peekable();
    while trainer.steps_done() < cfg.max_steps {
        let row = trainer.step(model, train_blocks)?;
        on_row(&row);
        let step = row.step;
        let (loss, lr) = (row.loss, row.lr);
        log.push(row);
        if next_ckpt.peek() == Some(&step) {
            next_ckpt.next();
            let ppl = perplexity(&*model, valid_blocks)?;
            let ck_row = LogRow {
                kind: LogKind::Checkpoint,
                step,
                loss,
                lr,
                grad_norm: f64::NAN,
                val_ppl: Some(ppl),
            };
            on_row(&ck_row);
            log.push(ck_row);
            checkpoints.push((step, ppl));
            let snap = Checkpoint::snapshot(model, step, ppl);
            on_checkpoint(&snap)?;
            if best.as_ref().is_none_or(|b| ppl < b.validation_perplexity) {
                best = Some(snap);
            }
        }
    }
    Ok(TrainOutcome {
        best: best.expect("final step is always a checkpoint"),
        checkpoints,
        log,
    })
}
