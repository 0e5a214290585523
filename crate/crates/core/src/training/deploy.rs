//! Post-training inference with integer weights and the shift-accumulate kernel.
//!
//! The first hidden layer is driven by real-valued input currents and stays a
//! dot product over the quantized weights. Every layer fed by spikes, including
//! the readout, runs through [`shift_accumulate`].

use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::network::{argmax, simulate, Dense, Network, SpikeFunction};
use crate::error::{check_len, Error, Result};
use crate::neuron::{NeuronKind, NeuronLayer};
use crate::synapse_kernel::{quantize_weights, shift_accumulate, FixedPointMatrix, KernelMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeployConfig {
    pub weight_bits: u32,
    pub mode: KernelMode,
}

impl Default for DeployConfig {
    fn default() -> Self {
        DeployConfig {
            weight_bits: 16,
            mode: KernelMode::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeployReport {
    pub weight_bits: u32,
    pub mode: KernelMode,
    /// Fractional bits chosen per layer (hidden layers, then readout).
    pub frac_bits: Vec<u32>,
    pub float_accuracy: f64,
    pub fixed_accuracy: f64,
    /// Fraction of samples where both paths predict the same class.
    pub agreement: f64,
    pub synaptic_visits: u64,
    pub skipped: u64,
}

/// Largest fractional width that still stores every weight and bias of `d`.
fn frac_bits_for(d: &Dense, weight_bits: u32) -> Result<u32> {
    let m = d.w.iter().chain(&d.b).fold(0.0f64, |m, x| m.max(x.abs()));
    if !m.is_finite() {
        return Err(Error::Range("non-finite weight".into()));
    }
    let int_bits = if m == 0.0 {
        0
    } else {
        m.log2().floor() as i64 + 1
    };
    let frac = weight_bits as i64 - 1 - int_bits.max(0);
    if frac < 0 {
        return Err(Error::Range(format!(
            "weights up to {m} do not fit {weight_bits}-bit storage"
        )));
    }
    Ok(frac as u32)
}

struct QuantLayer {
    w: FixedPointMatrix,
    b: Vec<f64>,
}

fn quantize_layer(d: &Dense, weight_bits: u32) -> Result<QuantLayer> {
    let f = frac_bits_for(d, weight_bits)?;
    let w = quantize_weights(&d.w, d.rows, d.cols, f, weight_bits)?;
    let b = quantize_weights(&d.b, d.rows, 1, f, weight_bits)?.to_real();
    Ok(QuantLayer { w, b })
}

/// Compare float inference against integer-weight inference on `samples`.
pub fn evaluate_fixed_point(
    net: &Network,
    samples: &[Sample],
    cfg: &DeployConfig,
) -> Result<DeployReport> {
    if net.spec.spike_fn != SpikeFunction::Quantized
        || net
            .spec
            .hidden
            .iter()
            .any(|h| h.neuron.kind != NeuronKind::ShiftLif)
    {
        return Err(Error::Parameter(
            "fixed-point inference needs quantized ShiftLIF layers".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::Parameter("cannot evaluate on an empty set".into()));
    }
    let layers = net
        .layers()
        .map(|d| quantize_layer(d, cfg.weight_bits))
        .collect::<Result<Vec<_>>>()?;
    let (readout, hidden) = layers.split_last().expect("readout layer");
    let first_real = Dense {
        rows: hidden[0].w.rows(),
        cols: hidden[0].w.cols(),
        w: hidden[0].w.to_real(),
        b: hidden[0].b.clone(),
    };

    let mut visits = 0u64;
    let mut skipped = 0u64;
    let mut correct_float = 0usize;
    let mut correct_fixed = 0usize;
    let mut agree = 0usize;
    for s in samples {
        check_len(net.spec.timesteps, s.inputs.len(), "sample timesteps")?;
        let mut neurons = net
            .spec
            .hidden
            .iter()
            .map(|h| NeuronLayer::new(h.neuron, h.width))
            .collect::<Result<Vec<_>>>()?;
        let mut readout_sum = vec![0i64; readout.w.rows()];
        let mut readout_lsb = 0.0;
        for x in &s.inputs {
            let mut spikes = neurons[0].step(&first_real.forward(x))?;
            for (layer, (q, n)) in hidden.iter().zip(neurons.iter_mut()).enumerate().skip(1) {
                let acc = shift_accumulate(
                    &q.w,
                    &spikes,
                    net.spec.hidden[layer - 1].neuron.precision,
                    cfg.mode,
                )?;
                visits += acc.synaptic_visits;
                skipped += acc.skipped;
                let z: Vec<f64> = acc.values().iter().zip(&q.b).map(|(a, b)| a + b).collect();
                spikes = n.step(&z)?;
            }
            let k = net
                .spec
                .hidden
                .last()
                .expect("hidden layer")
                .neuron
                .precision;
            let acc = shift_accumulate(&readout.w, &spikes, k, cfg.mode)?;
            visits += acc.synaptic_visits;
            skipped += acc.skipped;
            readout_lsb = acc.lsb();
            for (r, a) in readout_sum.iter_mut().zip(acc.sums()) {
                *r += a;
            }
        }
        let t = s.inputs.len() as f64;
        let logits: Vec<f64> = readout_sum
            .iter()
            .zip(&readout.b)
            .map(|(&a, b)| a as f64 * readout_lsb / t + b)
            .collect();
        let fixed = argmax(&logits);
        let float = simulate(net, &s.inputs)?.prediction();
        correct_fixed += usize::from(fixed == s.label);
        correct_float += usize::from(float == s.label);
        agree += usize::from(fixed == float);
    }
    let n = samples.len() as f64;
    Ok(DeployReport {
        weight_bits: cfg.weight_bits,
        mode: cfg.mode,
        frac_bits: layers.iter().map(|q| q.w.frac_bits()).collect(),
        float_accuracy: correct_float as f64 / n,
        fixed_accuracy: correct_fixed as f64 / n,
        agreement: agree as f64 / n,
        synaptic_visits: visits,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::NeuronParams;
    use crate::training::{synth_dataset, NetworkSpec, SynthConfig};

    #[test]
    fn frac_bits_leave_headroom() {
        let d = Dense {
            rows: 1,
            cols: 2,
            w: vec![0.75, -1.5],
            b: vec![0.0],
        };
        assert_eq!(frac_bits_for(&d, 16).unwrap(), 14);
        let d = Dense {
            w: vec![2.0, 0.0],
            ..d
        };
        assert_eq!(frac_bits_for(&d, 16).unwrap(), 13);
    }

    #[test]
    fn wide_weights_track_float_path() {
        let data = synth_dataset(&SynthConfig {
            samples_per_class: 10,
            input_dim: 6,
            ..Default::default()
        })
        .unwrap();
        let spec = NetworkSpec::uniform(6, &[12, 8], 3, NeuronParams::default(), 4);
        let net = Network::new(spec, 5).unwrap();
        let r = evaluate_fixed_point(
            &net,
            &data.train,
            &DeployConfig {
                weight_bits: 30,
                mode: KernelMode::Exact,
            },
        )
        .unwrap();
        assert!(r.agreement >= 0.95, "{r:?}");
        assert_eq!(r.frac_bits.len(), 3);
    }

    #[test]
    fn rejects_non_shift_layers() {
        let spec = NetworkSpec::uniform(2, &[3], 2, NeuronParams::with_kind(NeuronKind::Lif, 0), 4);
        let net = Network::new(spec, 0).unwrap();
        let s = Sample {
            label: 0,
            inputs: vec![vec![0.0; 2]; 4],
        };
        assert!(evaluate_fixed_point(&net, &[s], &DeployConfig::default()).is_err());
    }
}
