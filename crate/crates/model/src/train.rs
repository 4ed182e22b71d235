use tec_grad::{apply_buffer_updates, Adam, Graph, LrSchedule, ParamStore};

use crate::error::{Error, Result};
use crate::loss::LossBreakdown;
use crate::model::{Example, Model};

/// Smallest batch accepted by [`Trainer::train_step`].
pub const MIN_BATCH: usize = 2;

/// Model, parameters and optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub store: ParamStore,
    pub adam: Adam,
    /// Base seed of the per-step pre-net dropout masks.
    pub dropout_seed: u64,
}

impl Trainer {
    pub fn new(model: Model, seed: u64, schedule: LrSchedule) -> Result<Self> {
        let store = model.init_params(seed)?;
        Ok(Self { model, store, adam: Adam::new(schedule), dropout_seed: seed })
    }

    pub fn from_store(model: Model, store: ParamStore, schedule: LrSchedule) -> Self {
        Self { model, store, adam: Adam::new(schedule), dropout_seed: 0 }
    }

    /// Updates applied so far.
    pub fn steps(&self) -> u64 {
        self.adam.step()
    }

    /// Teacher-forced forward, backward and one Adam update. Batch-norm
    /// running statistics are refreshed from this batch.
    pub fn train_step(&mut self, batch: &[Example]) -> Result<LossBreakdown> {
        if batch.len() < MIN_BATCH {
            return Err(Error::BatchTooSmall(batch.len()));
        }
        let (grads, loss, updates) = {
            let seed = self.dropout_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ self.steps();
            let mut g = Graph::new(&self.store).with_nan_guard(false).with_dropout_seed(seed);
            let (total, loss) = self.model.batch_loss(&mut g, batch)?;
            let grads = g.backward(total)?;
            (grads, loss, g.take_buffer_updates())
        };
        if !loss.is_finite() || !grads.is_finite() {
            let (param, magnitude) = grads.worst().map(|(p, m)| (p.to_string(), m)).unwrap_or_default();
            return Err(Error::NonFiniteLoss { step: self.steps(), param, magnitude });
        }
        self.adam.update(&mut self.store, &grads)?;
        apply_buffer_updates(&mut self.store, updates)?;
        Ok(loss)
    }

    /// Loss of `batch` under the current parameters, without updating anything.
    pub fn evaluate(&self, batch: &[Example], training_mode: bool) -> Result<LossBreakdown> {
        let mut g = Graph::inference(&self.store).with_training(training_mode);
        Ok(self.model.batch_loss(&mut g, batch)?.1)
    }
}
