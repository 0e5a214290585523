//! Fully connected spiking network and its backpropagation-through-time pass.
//!
//! Layer `l` receives `z_t = W_l a_t + b_l`, where `a_t` is the input current
//! (first layer) or the previous layer's spike amplitudes. The membrane follows
//! the same recurrence as [`crate::neuron`]. A linear readout is applied to the
//! last layer's spikes averaged over time.
//!
//! Backward: the quantizer derivative is replaced by a rectangular surrogate
//! (`1[0 <= u <= 1]` for the shift and uniform grids, `1[|u - 1| <= 1/2]` for
//! the binary and integer baselines). The reset term `-S * V_th` is treated as
//! a constant unless `detach_reset` is off.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::loss::{
    cross_entropy, rate_penalty, rate_penalty_grad, softmax, ste_gate, LossBreakdown, SpikeBuffer,
};
use super::TrainConfig;
use crate::error::{check_len, Error, Result};
use crate::neuron::{NeuronKind, NeuronLayer, NeuronParams, SpikeTensor};

/// Forward spike nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeFunction {
    /// The neuron kind's quantizer.
    #[default]
    Quantized,
    /// `clamp(u / V_th, 0, 1)`; its derivative equals the shift surrogate, so
    /// analytic gradients can be checked against finite differences.
    ClampIdentity,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Non-spiking linear layer on the time-averaged spikes.
    #[default]
    MeanOverTime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayerSpec {
    pub width: usize,
    pub neuron: NeuronParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub hidden: Vec<HiddenLayerSpec>,
    pub classes: usize,
    pub timesteps: usize,
    pub readout: Readout,
    pub detach_reset: bool,
    pub spike_fn: SpikeFunction,
}

impl NetworkSpec {
    /// Same neuron parameters in every hidden layer.
    pub fn uniform(
        input: usize,
        hidden: &[usize],
        classes: usize,
        neuron: NeuronParams,
        timesteps: usize,
    ) -> Self {
        NetworkSpec {
            input,
            hidden: hidden
                .iter()
                .map(|&width| HiddenLayerSpec { width, neuron })
                .collect(),
            classes,
            timesteps,
            readout: Readout::MeanOverTime,
            detach_reset: true,
            spike_fn: SpikeFunction::Quantized,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.hidden.is_empty() {
            out.push("network needs at least one hidden spiking layer".into());
        }
        if self.input == 0 || self.classes == 0 || self.hidden.iter().any(|h| h.width == 0) {
            out.push("network layer widths must be >= 1".into());
        }
        if self.timesteps == 0 {
            out.push("network needs T >= 1".into());
        }
        for h in &self.hidden {
            out.extend(h.neuron.violations());
        }
        out
    }
}

/// Weight matrix (`rows = outputs`, row-major) and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Dense {
            rows,
            cols,
            w: (0..rows * cols)
                .map(|_| rng.random_range(-limit..=limit))
                .collect(),
            b: vec![0.0; rows],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .chunks_exact(self.cols)
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        if i < self.w.len() {
            &mut self.w[i]
        } else {
            &mut self.b[i - self.w.len()]
        }
    }

    fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w.iter().chain(&self.b).copied()
    }

    fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            for (w, &xj) in self.w[i * self.cols..(i + 1) * self.cols].iter_mut().zip(x) {
                *w += gi * xj;
            }
            self.b[i] += gi;
        }
    }

    fn transpose_mul(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            for (o, &w) in out
                .iter_mut()
                .zip(&self.w[i * self.cols..(i + 1) * self.cols])
            {
                *o += gi * w;
            }
        }
        out
    }
}

/// Gradients with the same layout as [`Network`]: hidden layers, then readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    /// Flattened in [`Network::param`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(Dense::params).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(Dense::params)
            .all(f64::is_finite)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub hidden: Vec<Dense>,
    pub readout: Dense,
}

impl Network {
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let bad = spec.violations();
        if !bad.is_empty() {
            return Err(Error::Parameter(bad.join("; ")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = spec.input;
        let mut hidden = Vec::with_capacity(spec.hidden.len());
        for h in &spec.hidden {
            hidden.push(Dense::glorot(h.width, fan_in, &mut rng));
            fan_in = h.width;
        }
        let readout = Dense::glorot(spec.classes, fan_in, &mut rng);
        Ok(Network {
            spec,
            hidden,
            readout,
        })
    }

    /// Network with every weight and bias zero.
    pub fn zeroed(spec: NetworkSpec) -> Result<Self> {
        let mut net = Network::new(spec, 0)?;
        for d in net
            .hidden
            .iter_mut()
            .chain(std::iter::once(&mut net.readout))
        {
            d.w.iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(net)
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain(std::iter::once(&self.readout))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.readout))
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    /// Mutable access to the `i`-th parameter in flattened order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for d in self.layers_mut() {
            if i < d.param_count() {
                return d.param_mut(i);
            }
            i -= d.param_count();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&mut self, i: usize) -> f64 {
        *self.param_mut(i)
    }

    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (d, g) in self.layers_mut().zip(&grads.layers) {
            for (w, gw) in d.w.iter_mut().zip(&g.w) {
                *w -= lr * gw;
            }
            for (b, gb) in d.b.iter_mut().zip(&g.b) {
                *b -= lr * gb;
            }
        }
    }

    fn zero_grads(&self) -> Gradients {
        Gradients {
            layers: self
                .layers()
                .map(|d| Dense::zeros(d.rows, d.cols))
                .collect(),
        }
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        check_len(self.spec.timesteps, sample.inputs.len(), "sample timesteps")?;
        for x in &sample.inputs {
            check_len(self.spec.input, x.len(), "sample input width")?;
        }
        if sample.label >= self.spec.classes {
            return Err(Error::Parameter(format!(
                "label {} out of range for {} classes",
                sample.label, self.spec.classes
            )));
        }
        Ok(())
    }
}

pub(crate) struct LayerCache {
    /// Charged membrane before reset, `T x n`.
    pub(crate) charged: Vec<Vec<f64>>,
    /// Spike amplitudes, `T x n`.
    pub(crate) spikes: Vec<Vec<f64>>,
}

pub(crate) struct SampleCache {
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) mean_spikes: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

fn spike_value(params: &NeuronParams, spike_fn: SpikeFunction, u: f64) -> Result<f64> {
    match spike_fn {
        SpikeFunction::Quantized => Ok(params.fire(u)?.amplitude()),
        SpikeFunction::ClampIdentity => Ok((u / params.v_th).clamp(0.0, 1.0)),
    }
}

/// `ds/du` used by the backward pass.
fn surrogate(params: &NeuronParams, spike_fn: SpikeFunction, u: f64) -> f64 {
    let x = u / params.v_th;
    let gate = match (spike_fn, params.kind) {
        (SpikeFunction::ClampIdentity, _)
        | (SpikeFunction::Quantized, NeuronKind::ShiftLif | NeuronKind::UniformLif) => ste_gate(x),
        (SpikeFunction::Quantized, NeuronKind::Lif | NeuronKind::IntLif) => {
            if (x - 1.0).abs() <= 0.5 {
                1.0
            } else {
                0.0
            }
        }
    };
    gate / params.v_th
}

fn layer_forward(
    dense: &Dense,
    params: &NeuronParams,
    spike_fn: SpikeFunction,
    inputs: &[Vec<f64>],
) -> Result<LayerCache> {
    let n = dense.rows;
    let mut v = vec![params.v_reset; n];
    let mut last = vec![0.0; n];
    let mut charged = Vec::with_capacity(inputs.len());
    let mut spikes = Vec::with_capacity(inputs.len());
    for x in inputs {
        let z = dense.forward(x);
        let mut u_row = Vec::with_capacity(n);
        let mut s_row = Vec::with_capacity(n);
        for i in 0..n {
            let mut u = params.charge(v[i], z[i]);
            if params.kind == NeuronKind::Lif {
                u -= last[i] * params.v_th;
            }
            let s = spike_value(params, spike_fn, u)?;
            if params.kind == NeuronKind::Lif {
                v[i] = u;
                last[i] = s;
            } else {
                v[i] = u - s * params.v_th;
            }
            u_row.push(u);
            s_row.push(s);
        }
        charged.push(u_row);
        spikes.push(s_row);
    }
    Ok(LayerCache { charged, spikes })
}

pub(crate) fn sample_forward(net: &Network, sample: &Sample) -> Result<SampleCache> {
    net.check_sample(sample)?;
    let mut layers: Vec<LayerCache> = Vec::with_capacity(net.hidden.len());
    for (l, (dense, spec)) in net.hidden.iter().zip(&net.spec.hidden).enumerate() {
        let inputs = if l == 0 {
            &sample.inputs
        } else {
            &layers[l - 1].spikes
        };
        let cache = layer_forward(dense, &spec.neuron, net.spec.spike_fn, inputs)?;
        layers.push(cache);
    }
    let last = &layers.last().expect("at least one hidden layer").spikes;
    let t = last.len() as f64;
    let mut mean_spikes = vec![0.0; net.readout.cols];
    for row in last {
        for (m, s) in mean_spikes.iter_mut().zip(row) {
            *m += s;
        }
    }
    mean_spikes.iter_mut().for_each(|m| *m /= t);
    let logits = net.readout.forward(&mean_spikes);
    Ok(SampleCache {
        layers,
        mean_spikes,
        logits,
    })
}

fn sample_backward(
    net: &Network,
    sample: &Sample,
    cache: &SampleCache,
    dlogits: &[f64],
    rate_grad: &[f64],
    grads: &mut Gradients,
) {
    let depth = net.hidden.len();
    let timesteps = net.spec.timesteps;
    grads.layers[depth].add_outer(dlogits, &cache.mean_spikes);
    let from_readout: Vec<f64> = net
        .readout
        .transpose_mul(dlogits)
        .into_iter()
        .map(|g| g / timesteps as f64)
        .collect();
    let mut grad_spikes: Vec<Vec<f64>> = vec![from_readout; timesteps];
    let couple = if net.spec.detach_reset { 0.0 } else { 1.0 };

    for l in (0..depth).rev() {
        let params = &net.spec.hidden[l].neuron;
        let lc = &cache.layers[l];
        let leak = params.leak_factor();
        let n = net.hidden[l].rows;
        let mut grad_z = vec![vec![0.0; n]; timesteps];
        let mut carry = vec![0.0; n];
        for t in (0..timesteps).rev() {
            for i in 0..n {
                let s = lc.spikes[t][i];
                let mut gs = grad_spikes[t][i];
                if s > 0.0 {
                    gs += rate_grad[l];
                }
                let sg = surrogate(params, net.spec.spike_fn, lc.charged[t][i]);
                let through = if params.kind == NeuronKind::Lif {
                    leak - couple * params.v_th * sg
                } else {
                    leak * (1.0 - couple * params.v_th * sg)
                };
                let g = gs * sg + carry[i] * through;
                grad_z[t][i] = g;
                carry[i] = g;
            }
        }
        let prev: &[Vec<f64>] = if l == 0 {
            &sample.inputs
        } else {
            &cache.layers[l - 1].spikes
        };
        for t in 0..timesteps {
            grads.layers[l].add_outer(&grad_z[t], &prev[t]);
        }
        if l > 0 {
            grad_spikes = grad_z
                .iter()
                .map(|g| net.hidden[l].transpose_mul(g))
                .collect();
        }
    }
}

/// Loss, gradients and activity statistics of one mini-batch.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: LossBreakdown,
    pub grads: Gradients,
    /// Spikes collected during the forward pass, per hidden layer.
    pub buffer: SpikeBuffer,
    pub layer_rates: Vec<f64>,
    pub correct: usize,
    /// `lambda * dL_sr / d|s|` applied to each layer's spikes.
    pub rate_grad: Vec<f64>,
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Forward over `T` steps for every sample, then the BPTT reverse pass.
pub fn forward_backward(net: &Network, batch: &[&Sample], cfg: &TrainConfig) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let depth = net.hidden.len();
    let mut buffer = SpikeBuffer::new(depth);
    let caches = batch
        .iter()
        .map(|s| sample_forward(net, s))
        .collect::<Result<Vec<_>>>()?;
    for c in &caches {
        for (l, lc) in c.layers.iter().enumerate() {
            for row in &lc.spikes {
                buffer.collect(l, row);
            }
        }
    }
    let layer_rates = buffer.mean_magnitudes()?;
    let counts: Vec<usize> = (0..depth).map(|l| buffer.layer(l).len()).collect();
    let rate_grad = rate_penalty_grad(&layer_rates, &counts, cfg.lambda_sr, cfg.target_rate);

    let b = batch.len() as f64;
    let mut ce = 0.0;
    let mut correct = 0;
    let mut grads = net.zero_grads();
    for (sample, cache) in batch.iter().zip(&caches) {
        ce += cross_entropy(&cache.logits, sample.label)?;
        if argmax(&cache.logits) == sample.label {
            correct += 1;
        }
        let mut dlogits = softmax(&cache.logits);
        dlogits[sample.label] -= 1.0;
        dlogits.iter_mut().for_each(|g| *g /= b);
        sample_backward(net, sample, cache, &dlogits, &rate_grad, &mut grads);
    }
    let ce = ce / b;
    let sr = rate_penalty(&layer_rates, cfg.target_rate);
    let loss = LossBreakdown {
        cross_entropy: ce,
        spike_rate: sr,
        total: ce + cfg.lambda_sr * sr,
    };
    Ok(StepOutput {
        loss,
        grads,
        buffer,
        layer_rates,
        correct,
        rate_grad,
    })
}

/// Loss only, with the same definition [`forward_backward`] differentiates.
pub fn batch_loss(net: &Network, batch: &[&Sample], cfg: &TrainConfig) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let mut buffer = SpikeBuffer::new(net.hidden.len());
    let mut ce = 0.0;
    for s in batch {
        let c = sample_forward(net, s)?;
        ce += cross_entropy(&c.logits, s.label)?;
        for (l, lc) in c.layers.iter().enumerate() {
            for row in &lc.spikes {
                buffer.collect(l, row);
            }
        }
    }
    let ce = ce / batch.len() as f64;
    let sr = rate_penalty(&buffer.mean_magnitudes()?, cfg.target_rate);
    Ok(LossBreakdown {
        cross_entropy: ce,
        spike_rate: sr,
        total: ce + cfg.lambda_sr * sr,
    })
}

/// Inference run through [`NeuronLayer`]s.
#[derive(Clone, Debug)]
pub struct Simulation {
    /// Per hidden layer, `T x width`.
    pub spikes: Vec<SpikeTensor>,
    /// Per hidden layer, charged membrane values (row-major `T x width`).
    pub membranes: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl Simulation {
    pub fn prediction(&self) -> usize {
        argmax(&self.logits)
    }
}

pub fn simulate(net: &Network, inputs: &[Vec<f64>]) -> Result<Simulation> {
    if net.spec.spike_fn != SpikeFunction::Quantized {
        return Err(Error::Parameter("inference needs quantized spikes".into()));
    }
    check_len(net.spec.timesteps, inputs.len(), "sample timesteps")?;
    let mut current: Vec<Vec<f64>> = inputs.to_vec();
    let mut spikes = Vec::with_capacity(net.hidden.len());
    let mut membranes = Vec::with_capacity(net.hidden.len());
    for (dense, spec) in net.hidden.iter().zip(&net.spec.hidden) {
        let mut layer = NeuronLayer::new(spec.neuron, spec.width)?;
        let mut trace = Vec::with_capacity(inputs.len() * spec.width);
        let mut entries = Vec::with_capacity(inputs.len() * spec.width);
        let mut next = Vec::with_capacity(inputs.len());
        for x in &current {
            check_len(dense.cols, x.len(), "layer input width")?;
            let out = layer.step_recording(&dense.forward(x), &mut trace)?;
            next.push(out.iter().map(|s| s.amplitude()).collect());
            entries.extend(out);
        }
        spikes.push(SpikeTensor::new(inputs.len(), spec.width, entries)?);
        membranes.push(trace);
        current = next;
    }
    let t = current.len() as f64;
    let mut mean = vec![0.0; net.readout.cols];
    for row in &current {
        for (m, s) in mean.iter_mut().zip(row) {
            *m += s;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t);
    Ok(Simulation {
        spikes,
        membranes,
        logits: net.readout.forward(&mean),
    })
}
