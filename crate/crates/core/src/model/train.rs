//! Batch loss/gradients and the plain gradient-descent training loop.

use super::net::{Model, PreparedSample};
use super::params::Gradients;
use super::vocab::BOS;
use crate::error::{Error, Result};

/// Decoder input for teacher forcing: BOS followed by the labels shifted
/// right by one.
pub fn decoder_input(labels: &[usize]) -> Vec<usize> {
    let mut input = Vec::with_capacity(labels.len().max(1));
    input.push(BOS);
    input.extend_from_slice(&labels[..labels.len().saturating_sub(1)]);
    input
}

impl Model {
    /// Mean loss over a batch (mean of per-sample mean token losses).
    pub fn batch_loss(&self, batch: &[PreparedSample]) -> Result<f64> {
        let mut total = 0.0;
        for sample in batch {
            let pass = self.forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt))?;
            total += self.loss(&pass, &sample.tgt)?;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean loss and summed-then-averaged gradients over a batch.
    pub fn batch_loss_grads(&self, batch: &[PreparedSample]) -> Result<(f64, Gradients)> {
        let mut total = 0.0;
        let mut grads = self.store.zero_gradients();
        for sample in batch {
            let pass = self.forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt))?;
            let (loss, g) = self.backward(&pass, &sample.tgt)?;
            total += loss;
            grads.accumulate(&g);
        }
        grads.scale(1.0 / batch.len() as f64);
        Ok((total / batch.len() as f64, grads))
    }

    /// Teacher-forced next-token accuracy over a batch.
    pub fn token_accuracy(&self, batch: &[PreparedSample]) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for sample in batch {
            let pass = self.forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt))?;
            for (row, &label) in pass.logits.rows().into_iter().zip(&sample.tgt) {
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                correct += usize::from(argmax == label);
                total += 1;
            }
        }
        Ok(correct as f64 / total as f64)
    }
}

/// Full-batch gradient descent. Returns the per-step loss trace; a non-finite
/// loss aborts with the offending step index.
pub fn train(
    model: &mut Model,
    data: &[PreparedSample],
    steps: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let (loss, grads) = model.batch_loss_grads(data)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::Diverged { step });
        }
        model.store.sgd_step(&grads, lr);
        trace.push(loss);
    }
    Ok(trace)
}
