use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use super::network::{argmax, forward_backward, sample_forward, Network};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the spike-rate penalty.
    pub lambda_sr: f64,
    /// Mean spike magnitude tolerated before the penalty applies.
    pub target_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.5,
            lambda_sr: 0.0,
            target_rate: 0.05,
            seed: 0,
            batch_size: 16,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(format!(
                "training.learning_rate must be > 0 (got {})",
                self.learning_rate
            ));
        }
        if !(self.lambda_sr.is_finite() && self.lambda_sr >= 0.0) {
            out.push(format!(
                "training.lambda_sr must be >= 0 (got {})",
                self.lambda_sr
            ));
        }
        if !(0.0..=1.0).contains(&self.target_rate) {
            out.push(format!(
                "training.target_rate must be in [0, 1] (got {})",
                self.target_rate
            ));
        }
        if self.batch_size == 0 {
            out.push("training.batch_size must be >= 1".into());
        }
        out
    }
}

/// Accuracy and per-layer mean spike magnitude over a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub layer_rates: Vec<f64>,
}

pub fn evaluate(net: &Network, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Parameter("cannot evaluate on an empty set".into()));
    }
    let depth = net.hidden.len();
    let mut correct = 0usize;
    let mut sums = vec![0.0; depth];
    let mut counts = vec![0usize; depth];
    for s in samples {
        let c = sample_forward(net, s)?;
        if argmax(&c.logits) == s.label {
            correct += 1;
        }
        for (l, lc) in c.layers.iter().enumerate() {
            for row in &lc.spikes {
                sums[l] += row.iter().map(|x| x.abs()).sum::<f64>();
                counts[l] += row.len();
            }
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / samples.len() as f64,
        layer_rates: sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| s / n as f64)
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss_ce: f64,
    pub loss_sr: f64,
    pub loss_total: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean spike magnitude per hidden layer on the test set.
    pub layer_rates: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Parameters at the epoch with the highest test accuracy.
    pub best: Network,
    pub final_net: Network,
    pub best_accuracy: f64,
    /// 0 when no epoch improved on the initial network.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mini-batch SGD with per-epoch test evaluation, keeping the best network.
pub fn fit(mut net: Network, data: &Dataset, cfg: &TrainConfig) -> Result<FitResult> {
    let bad = cfg.violations();
    if !bad.is_empty() {
        return Err(Error::Parameter(bad.join("; ")));
    }
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Parameter(
            "dataset needs nonempty train and test splits".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut best = net.clone();
    let mut best_accuracy = evaluate(&net, &data.test)?.accuracy;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut ce, mut sr, mut total) = (0.0, 0.0, 0.0);
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let step = forward_backward(&net, &batch, cfg)?;
            if !step.loss.total.is_finite() || !step.grads.is_finite() {
                return Err(Error::TrainingFault {
                    epoch,
                    batch: b,
                    detail: format!(
                        "non-finite loss or gradient (ce {}, sr {}, rates {:?})",
                        step.loss.cross_entropy, step.loss.spike_rate, step.layer_rates
                    ),
                });
            }
            let weight = batch.len() as f64;
            ce += step.loss.cross_entropy * weight;
            sr += step.loss.spike_rate * weight;
            total += step.loss.total * weight;
            correct += step.correct;
            net.sgd_step(&step.grads, cfg.learning_rate);
        }
        let n = data.train.len() as f64;
        let eval = evaluate(&net, &data.test)?;
        if eval.accuracy > best_accuracy {
            best_accuracy = eval.accuracy;
            best_epoch = epoch;
            best = net.clone();
        }
        history.push(EpochRecord {
            epoch,
            loss_ce: ce / n,
            loss_sr: sr / n,
            loss_total: total / n,
            train_accuracy: correct as f64 / n,
            test_accuracy: eval.accuracy,
            layer_rates: eval.layer_rates,
        });
    }
    Ok(FitResult {
        best,
        final_net: net,
        best_accuracy,
        best_epoch,
        history,
    })
}

/// History as CSV, one `rate_l<i>` column per hidden layer.
pub fn write_history<W: Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let layers = history.first().map_or(0, |r| r.layer_rates.len());
    let mut header: Vec<String> = [
        "epoch",
        "loss_ce",
        "loss_sr",
        "loss_total",
        "train_accuracy",
        "test_accuracy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..layers).map(|l| format!("rate_l{l}")));
    w.write_record(&header)?;
    for r in history {
        let mut row = vec![
            r.epoch.to_string(),
            r.loss_ce.to_string(),
            r.loss_sr.to_string(),
            r.loss_total.to_string(),
            r.train_accuracy.to_string(),
            r.test_accuracy.to_string(),
        ];
        row.extend(r.layer_rates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
