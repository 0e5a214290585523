//! Discrete-time spiking neuron layers.
//!
//! All kinds share the same leaky charge `V <- V + (V_reset - V) / tau + X`.
//! They differ in how the charged potential is turned into a spike and how the
//! membrane is reset afterwards:
//!
//! | kind         | spike                                   | reset                     |
//! |--------------|-----------------------------------------|---------------------------|
//! | `Lif`        | `1` iff `u >= V_th`                      | `-s_prev * V_th` next step |
//! | `ShiftLif`   | `q_shift(clamp(V, 0, V_th) / V_th)`     | `V -= S * V_th`           |
//! | `IntLif`     | `q_int(max(V, 0) / V_th)`               | `V -= S * V_th`           |
//! | `UniformLif` | `q_uniform(V / V_th)`                   | `V -= S * V_th`           |
//!
//! The proportional reset acts on the unclamped potential, so charge above
//! threshold is carried to the next step and the potential may go negative.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::quantizer::{q_int, q_shift, q_uniform, LevelSet, ShiftMode, SpikeLevel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    /// Binary leaky integrate-and-fire with soft reset.
    Lif,
    /// Power-of-two multi-level spikes.
    ShiftLif,
    /// Integer multi-level spikes `{0, ..., K + 1}`.
    IntLif,
    /// Evenly spaced multi-level spikes on `[0, 1]`.
    UniformLif,
}

impl NeuronKind {
    pub fn name(&self) -> &'static str {
        match self {
            NeuronKind::Lif => "lif",
            NeuronKind::ShiftLif => "shift_lif",
            NeuronKind::IntLif => "int_lif",
            NeuronKind::UniformLif => "uniform_lif",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronParams {
    pub kind: NeuronKind,
    /// Membrane time constant in steps.
    pub tau: f64,
    pub v_th: f64,
    pub v_reset: f64,
    /// Precision factor `K`; ignored by `Lif`.
    pub precision: u32,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            kind: NeuronKind::ShiftLif,
            tau: 2.0,
            v_th: 1.0,
            v_reset: 0.0,
            precision: 2,
        }
    }
}

impl NeuronParams {
    pub fn with_kind(kind: NeuronKind, precision: u32) -> Self {
        NeuronParams {
            kind,
            precision,
            ..NeuronParams::default()
        }
    }

    /// Every violated invariant, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.tau.is_finite() || self.tau < 1.0 {
            out.push(format!("neuron.tau must be >= 1 (got {})", self.tau));
        }
        if !self.v_th.is_finite() || !self.v_reset.is_finite() || self.v_th <= self.v_reset {
            out.push(format!(
                "neuron.v_th ({}) must exceed neuron.v_reset ({})",
                self.v_th, self.v_reset
            ));
        }
        if self.precision > crate::quantizer::MAX_PRECISION {
            out.push(format!(
                "neuron.precision must be <= {} (got {})",
                crate::quantizer::MAX_PRECISION,
                self.precision
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(v.join("; ")))
        }
    }

    /// Leak factor `1 - 1/tau`.
    pub fn leak_factor(&self) -> f64 {
        1.0 - 1.0 / self.tau
    }

    /// Output alphabet of this neuron kind. Binary LIF uses `{0, 1}`.
    pub fn level_set(&self) -> Result<LevelSet> {
        match self.kind {
            NeuronKind::Lif => LevelSet::int(0),
            NeuronKind::ShiftLif => LevelSet::shift(self.precision, ShiftMode::AlgorithmicClamp),
            NeuronKind::IntLif => LevelSet::int(self.precision),
            NeuronKind::UniformLif => LevelSet::uniform(self.precision),
        }
    }

    /// `V + (V_reset - V) / tau + x`
    #[inline]
    pub fn charge(&self, v: f64, x: f64) -> f64 {
        v + (self.v_reset - v) / self.tau + x
    }

    /// Spike emitted for a charged membrane value `u` (multi-level kinds and LIF).
    pub fn fire(&self, u: f64) -> Result<SpikeLevel> {
        match self.kind {
            NeuronKind::Lif => Ok(if u >= self.v_th {
                SpikeLevel::int(1)
            } else {
                SpikeLevel::ZERO
            }),
            NeuronKind::ShiftLif => q_shift(
                u.clamp(0.0, self.v_th) / self.v_th,
                self.precision,
                ShiftMode::AlgorithmicClamp,
            ),
            NeuronKind::IntLif => q_int(u.max(0.0) / self.v_th, self.precision),
            NeuronKind::UniformLif => q_uniform(u / self.v_th, self.precision),
        }
    }
}

/// Membrane potentials of a layer. `last_spike` carries the previous spike
/// amplitude for the binary LIF, whose reset is applied on the following step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub v: Vec<f64>,
    pub last_spike: Vec<f64>,
}

impl NeuronState {
    pub fn resting(n: usize, params: &NeuronParams) -> Self {
        NeuronState {
            v: vec![params.v_reset; n],
            last_spike: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Spike output of a layer over `timesteps x neurons`, row-major in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeTensor {
    timesteps: usize,
    neurons: usize,
    entries: Vec<SpikeLevel>,
}

impl SpikeTensor {
    pub fn new(timesteps: usize, neurons: usize, entries: Vec<SpikeLevel>) -> Result<Self> {
        check_len(timesteps * neurons, entries.len(), "spike tensor entries")?;
        Ok(SpikeTensor {
            timesteps,
            neurons,
            entries,
        })
    }

    /// Stack tensors of equal width along the time axis.
    pub fn concat_time(parts: &[SpikeTensor]) -> Result<Self> {
        let neurons = parts.first().map_or(0, |p| p.neurons);
        let mut entries = Vec::new();
        let mut timesteps = 0;
        for p in parts {
            check_len(neurons, p.neurons, "concatenated tensor width")?;
            timesteps += p.timesteps;
            entries.extend_from_slice(&p.entries);
        }
        SpikeTensor::new(timesteps, neurons, entries)
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn entries(&self) -> &[SpikeLevel] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, t: usize, n: usize) -> SpikeLevel {
        self.entries[t * self.neurons + n]
    }

    pub fn step(&self, t: usize) -> &[SpikeLevel] {
        &self.entries[t * self.neurons..(t + 1) * self.neurons]
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.entries.iter().map(SpikeLevel::amplitude).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|s| !s.is_zero()).count()
    }
}

fn advance(
    state: &mut NeuronState,
    x: &[f64],
    params: &NeuronParams,
    mut charged: Option<&mut Vec<f64>>,
) -> Result<Vec<SpikeLevel>> {
    check_len(state.len(), x.len(), "input current vector")?;
    check_len(state.len(), state.last_spike.len(), "neuron state")?;
    let mut spikes = Vec::with_capacity(x.len());
    for (i, &xi) in x.iter().enumerate() {
        let mut u = params.charge(state.v[i], xi);
        if params.kind == NeuronKind::Lif {
            u -= state.last_spike[i] * params.v_th;
        }
        if let Some(c) = charged.as_deref_mut() {
            c.push(u);
        }
        let s = params.fire(u)?;
        if params.kind == NeuronKind::Lif {
            state.v[i] = u;
            state.last_spike[i] = s.amplitude();
        } else {
            state.v[i] = u - s.amplitude() * params.v_th;
        }
        spikes.push(s);
    }
    Ok(spikes)
}

fn step_as(
    expect: NeuronKind,
    state: &NeuronState,
    x: &[f64],
    params: &NeuronParams,
) -> Result<(Vec<SpikeLevel>, NeuronState)> {
    if params.kind != expect {
        return Err(Error::Parameter(format!(
            "expected {:?} parameters, got {:?}",
            expect, params.kind
        )));
    }
    let mut next = state.clone();
    let spikes = advance(&mut next, x, params, None)?;
    Ok((spikes, next))
}

/// `u <- u + (V_reset - u)/tau + x - s_prev * V_th`, spike iff `u >= V_th`.
pub fn lif_step(
    state: &NeuronState,
    x: &[f64],
    params: &NeuronParams,
) -> Result<(Vec<SpikeLevel>, NeuronState)> {
    step_as(NeuronKind::Lif, state, x, params)
}

/// Charge, clamp, power-of-two quantize, proportional soft reset.
pub fn shiftlif_step(
    state: &NeuronState,
    x: &[f64],
    params: &NeuronParams,
) -> Result<(Vec<SpikeLevel>, NeuronState)> {
    step_as(NeuronKind::ShiftLif, state, x, params)
}

pub fn intlif_step(
    state: &NeuronState,
    x: &[f64],
    params: &NeuronParams,
) -> Result<(Vec<SpikeLevel>, NeuronState)> {
    step_as(NeuronKind::IntLif, state, x, params)
}

/// A layer of identical neurons with mutable membrane state.
#[derive(Clone, Debug)]
pub struct NeuronLayer {
    params: NeuronParams,
    levels: LevelSet,
    state: NeuronState,
}

impl NeuronLayer {
    pub fn new(params: NeuronParams, neurons: usize) -> Result<Self> {
        params.validate()?;
        if neurons == 0 {
            return Err(Error::Parameter("layer needs at least one neuron".into()));
        }
        Ok(NeuronLayer {
            levels: params.level_set()?,
            state: NeuronState::resting(neurons, &params),
            params,
        })
    }

    pub fn params(&self) -> &NeuronParams {
        &self.params
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn state(&self) -> &NeuronState {
        &self.state
    }

    pub fn neurons(&self) -> usize {
        self.state.len()
    }

    pub fn reset(&mut self) {
        self.state = NeuronState::resting(self.neurons(), &self.params);
    }

    pub fn step(&mut self, x: &[f64]) -> Result<Vec<SpikeLevel>> {
        advance(&mut self.state, x, &self.params, None)
    }

    /// Step and append the charged (pre-reset) membrane values to `trace`.
    pub fn step_recording(&mut self, x: &[f64], trace: &mut Vec<f64>) -> Result<Vec<SpikeLevel>> {
        advance(&mut self.state, x, &self.params, Some(trace))
    }
}

/// Membrane values after charging and before reset, `timesteps x neurons`.
pub type MembraneTrace = Vec<Vec<f64>>;

/// Run `inputs` (one current vector per timestep) from the resting state.
pub fn run_sequence(
    layer: &mut NeuronLayer,
    inputs: &[Vec<f64>],
    record_membrane: bool,
) -> Result<(SpikeTensor, Option<MembraneTrace>)> {
    if inputs.is_empty() {
        return Err(Error::Parameter("sequence needs T >= 1 timesteps".into()));
    }
    layer.reset();
    let n = layer.neurons();
    let mut entries = Vec::with_capacity(inputs.len() * n);
    let mut trace = record_membrane.then(|| Vec::with_capacity(inputs.len()));
    for x in inputs {
        if let Some(tr) = trace.as_mut() {
            let mut row = Vec::with_capacity(n);
            entries.extend(layer.step_recording(x, &mut row)?);
            tr.push(row);
        } else {
            entries.extend(layer.step(x)?);
        }
    }
    Ok((SpikeTensor::new(inputs.len(), n, entries)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: NeuronKind, k: u32) -> NeuronParams {
        NeuronParams::with_kind(kind, k)
    }

    fn one(kind: NeuronKind, k: u32, v: f64, x: f64) -> (f64, f64) {
        let p = params(kind, k);
        let state = NeuronState {
            v: vec![v],
            last_spike: vec![0.0],
        };
        let (s, next) = step_as(kind, &state, &[x], &p).unwrap();
        (s[0].amplitude(), next.v[0])
    }

    #[test]
    fn lif_examples() {
        let p = params(NeuronKind::Lif, 0);
        let (s, st) = lif_step(&NeuronState::resting(1, &p), &[0.0], &p).unwrap();
        assert_eq!((s[0].amplitude(), st.v[0]), (0.0, 0.0));
        let (s, _) = lif_step(&NeuronState::resting(1, &p), &[1.0], &p).unwrap();
        assert_eq!(s[0].amplitude(), 1.0);
    }

    #[test]
    fn lif_subthreshold_drive_never_fires() {
        // steady state x / (1 - lambda) = 0.8 < 1
        let p = params(NeuronKind::Lif, 0);
        let mut layer = NeuronLayer::new(p, 1).unwrap();
        let inputs = vec![vec![0.4]; 100];
        let (spikes, trace) = run_sequence(&mut layer, &inputs, true).unwrap();
        assert_eq!(spikes.nonzero_count(), 0);
        let lambda = p.leak_factor();
        let mut geometric = 0.0;
        for (t, row) in trace.unwrap().iter().enumerate() {
            geometric += 0.4 * lambda.powi(t as i32);
            assert!((row[0] - geometric).abs() < 1e-12);
        }
        assert!((geometric - 0.8).abs() < 1e-12);
    }

    #[test]
    fn shiftlif_examples() {
        assert_eq!(one(NeuronKind::ShiftLif, 2, 0.0, 0.0), (0.0, 0.0));
        assert_eq!(one(NeuronKind::ShiftLif, 2, 0.0, 0.6), (0.5, 0.6 - 0.5));
        // reset acts on the unclamped potential
        assert_eq!(one(NeuronKind::ShiftLif, 2, 0.0, 1.5), (1.0, 0.5));
    }

    #[test]
    fn intlif_examples() {
        assert_eq!(one(NeuronKind::IntLif, 2, 0.0, 0.4), (0.0, 0.4));
        let (s, v) = one(NeuronKind::IntLif, 2, 0.0, 1.6);
        assert_eq!(s, 2.0);
        assert_eq!(v, 1.6 - 2.0);
        assert!(v < 0.0);
    }

    #[test]
    fn intlif_k0_is_binary() {
        let p = params(NeuronKind::IntLif, 0);
        let mut layer = NeuronLayer::new(p, 3).unwrap();
        let inputs: Vec<Vec<f64>> = (0..8).map(|t| vec![0.1 * t as f64, 0.7, 1.4]).collect();
        let (spikes, _) = run_sequence(&mut layer, &inputs, false).unwrap();
        assert!(spikes.amplitudes().iter().all(|&a| a == 0.0 || a == 1.0));
    }

    #[test]
    fn wrong_kind_and_shape_rejected() {
        let p = params(NeuronKind::ShiftLif, 2);
        let st = NeuronState::resting(2, &p);
        assert!(matches!(
            lif_step(&st, &[0.0, 0.0], &p),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            shiftlif_step(&st, &[0.0], &p),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_length_sequence_rejected() {
        let mut layer = NeuronLayer::new(NeuronParams::default(), 2).unwrap();
        assert!(run_sequence(&mut layer, &[], false).is_err());
    }

    #[test]
    fn constant_drive_trace() {
        // Scripted replay of the four-step forward pass, independent of `advance`.
        let mut v: f64 = 0.0;
        let mut expected = Vec::new();
        for _ in 0..4 {
            v = v + (0.0 - v) / 2.0 + 0.3;
            let c = v.clamp(0.0, 1.0);
            let s = if c < 0.125 {
                0.0
            } else {
                let mut level = 1.0;
                while level > c && level > 0.25 {
                    level /= 2.0;
                }
                level
            };
            v -= s;
            expected.push(s);
        }
        assert_eq!(expected, vec![0.25; 4]);
        let mut layer = NeuronLayer::new(params(NeuronKind::ShiftLif, 2), 1).unwrap();
        let (spikes, _) = run_sequence(&mut layer, &vec![vec![0.3]; 4], false).unwrap();
        assert_eq!(spikes.amplitudes(), expected);
    }

    #[test]
    fn saturating_drive_matches_lif() {
        let inputs = vec![vec![2.0, 3.0]; 6];
        let mut lif = NeuronLayer::new(params(NeuronKind::Lif, 0), 2).unwrap();
        let mut shift = NeuronLayer::new(params(NeuronKind::ShiftLif, 0), 2).unwrap();
        let (a, _) = run_sequence(&mut lif, &inputs, false).unwrap();
        let (b, _) = run_sequence(&mut shift, &inputs, false).unwrap();
        assert_eq!(a.amplitudes(), vec![1.0; 12]);
        assert_eq!(a.amplitudes(), b.amplitudes());
    }

    #[test]
    fn params_validation() {
        let mut p = NeuronParams::default();
        assert!(p.validate().is_ok());
        p.tau = 0.5;
        p.v_th = -1.0;
        assert_eq!(p.violations().len(), 2);
    }
}
