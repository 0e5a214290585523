use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Straight-through gradient mask `1[0 <= u <= 1]`.
pub fn ste_mask(u: &[f64]) -> Vec<f64> {
    u.iter().map(|&x| ste_gate(x)).collect()
}

#[inline]
pub(crate) fn ste_gate(u: f64) -> f64 {
    if (0.0..=1.0).contains(&u) {
        1.0
    } else {
        0.0
    }
}

/// Spikes emitted by each spiking layer during one mini-batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpikeBuffer {
    layers: Vec<Vec<f64>>,
}

impl SpikeBuffer {
    pub fn new(layers: usize) -> Self {
        SpikeBuffer {
            layers: vec![Vec::new(); layers],
        }
    }

    pub fn collect(&mut self, layer: usize, spikes: &[f64]) {
        self.layers[layer].extend_from_slice(spikes);
    }

    pub fn clear(&mut self) {
        self.layers.iter_mut().for_each(Vec::clear);
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(Vec::is_empty)
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.layers[layer]
    }

    /// `mean(|S|)` of each layer.
    pub fn mean_magnitudes(&self) -> Result<Vec<f64>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.is_empty() {
                    Err(Error::Parameter(format!(
                        "spike buffer of layer {i} is empty"
                    )))
                } else {
                    Ok(s.iter().map(|x| x.abs()).sum::<f64>() / s.len() as f64)
                }
            })
            .collect()
    }
}

/// `(1/L) * sum_l max(0, mean|S_l| - target)`.
pub fn spike_rate_loss(buffers: &SpikeBuffer, target: f64) -> Result<f64> {
    if buffers.layer_count() == 0 {
        return Err(Error::Parameter("no spiking layers buffered".into()));
    }
    let rates = buffers.mean_magnitudes()?;
    Ok(rate_penalty(&rates, target))
}

pub(crate) fn rate_penalty(rates: &[f64], target: f64) -> f64 {
    rates.iter().map(|r| (r - target).max(0.0)).sum::<f64>() / rates.len() as f64
}

/// Gradient of `lambda * L_sr` with respect to each spike's magnitude, per
/// layer: `lambda / (L * count)` above target, exactly zero at or below it.
pub fn rate_penalty_grad(rates: &[f64], counts: &[usize], lambda: f64, target: f64) -> Vec<f64> {
    let layers = rates.len() as f64;
    rates
        .iter()
        .zip(counts)
        .map(|(&r, &n)| {
            if r > target && lambda != 0.0 {
                lambda / (layers * n as f64)
            } else {
                0.0
            }
        })
        .collect()
}

/// Numerically stable `-ln softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Parameter(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cross_entropy: f64,
    pub spike_rate: f64,
    pub total: f64,
}

/// Mean cross-entropy over the batch plus `lambda * L_sr`.
pub fn total_loss(
    logits: &[Vec<f64>],
    labels: &[usize],
    buffers: &SpikeBuffer,
    lambda: f64,
    target: f64,
) -> Result<LossBreakdown> {
    check_len(logits.len(), labels.len(), "labels per logit row")?;
    if logits.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let ce = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| cross_entropy(l, y))
        .sum::<Result<f64>>()?
        / logits.len() as f64;
    let sr = spike_rate_loss(buffers, target)?;
    Ok(LossBreakdown {
        cross_entropy: ce,
        spike_rate: sr,
        total: ce + lambda * sr,
    })
}
