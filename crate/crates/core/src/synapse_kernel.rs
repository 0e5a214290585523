//! Multiplier-free synaptic accumulation.
//!
//! With power-of-two spikes `s_j = 2^-k_j`, the product `W_ij * s_j` of an
//! integer weight is a shift. Two shift directions are offered:
//!
//! * [`KernelMode::Lossy`]: `acc_i += W_ij >> k_j`. Arithmetic right shift,
//!   floors toward negative infinity and drops the low `k_j` bits.
//! * [`KernelMode::Exact`]: `acc_i += W_ij << (K - k_j)` into an accumulator
//!   with `K` extra fractional bits, so the result equals the real-valued sum
//!   bit for bit.
//!
//! Zero spikes are never visited.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::neuron::SpikeTensor;
use crate::quantizer::{pow2_neg, LevelCode, SpikeLevel, MAX_PRECISION};

/// Bits available in an [`Accumulator`] lane.
pub const ACCUMULATOR_BITS: u32 = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    #[default]
    Exact,
    Lossy,
}

/// Integer weights sharing one binary point: `value = data / 2^frac_bits`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i32>,
    frac_bits: u32,
    weight_bits: u32,
}

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

impl FixedPointMatrix {
    /// Wrap raw integers, checking each fits in `weight_bits` two's complement bits.
    pub fn from_raw(
        rows: usize,
        cols: usize,
        data: Vec<i32>,
        frac_bits: u32,
        weight_bits: u32,
    ) -> Result<Self> {
        check_len(rows * cols, data.len(), "fixed-point matrix data")?;
        if !(1..=32).contains(&weight_bits) {
            return Err(Error::Parameter(format!(
                "weight width {weight_bits} must be in 1..=32"
            )));
        }
        let lo = -(1i64 << (weight_bits - 1));
        let hi = (1i64 << (weight_bits - 1)) - 1;
        if let Some(bad) = data
            .iter()
            .find(|&&d| i64::from(d) < lo || i64::from(d) > hi)
        {
            return Err(Error::Range(format!(
                "weight {bad} does not fit {weight_bits} bits"
            )));
        }
        Ok(FixedPointMatrix {
            rows,
            cols,
            data,
            frac_bits,
            weight_bits,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn weight_bits(&self) -> u32 {
        self.weight_bits
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.data[row * self.cols + col]
    }

    /// Real values `data / 2^frac_bits` (exact).
    pub fn to_real(&self) -> Vec<f64> {
        let scale = 2f64.powi(-(self.frac_bits as i32));
        self.data.iter().map(|&d| f64::from(d) * scale).collect()
    }

    /// Reject operand sizes whose worst-case sum could overflow the accumulator.
    pub fn check_width(&self, precision: u32, mode: KernelMode) -> Result<()> {
        let guard = match mode {
            KernelMode::Exact => precision,
            KernelMode::Lossy => 0,
        };
        let needed = self.weight_bits + guard + ceil_log2(self.cols) + 1;
        if needed > ACCUMULATOR_BITS {
            return Err(Error::Range(format!(
                "accumulator needs {needed} bits (weights {} + K {guard} + fan-in {}) > {ACCUMULATOR_BITS}",
                self.weight_bits, self.cols
            )));
        }
        Ok(())
    }
}

/// Round real weights to nearest (ties to even) on a `2^-frac_bits` grid.
pub fn quantize_weights(
    w: &[f64],
    rows: usize,
    cols: usize,
    frac_bits: u32,
    weight_bits: u32,
) -> Result<FixedPointMatrix> {
    check_len(rows * cols, w.len(), "real weight matrix")?;
    if !(1..=32).contains(&weight_bits) || frac_bits >= weight_bits {
        return Err(Error::Parameter(format!(
            "need 0 <= frac_bits ({frac_bits}) < weight_bits ({weight_bits}) <= 32"
        )));
    }
    let limit = 2f64.powi((weight_bits - frac_bits - 1) as i32);
    let scale = 2f64.powi(frac_bits as i32);
    let mut data = Vec::with_capacity(w.len());
    for &x in w {
        if !x.is_finite() || x.abs() >= limit {
            return Err(Error::Range(format!(
                "weight {x} outside (-{limit}, {limit}) for {weight_bits}-bit storage with {frac_bits} fractional bits"
            )));
        }
        let q = (x * scale).round_ties_even();
        // |x| < limit can still round up onto the positive bound
        let max = (1i64 << (weight_bits - 1)) - 1;
        data.push((q as i64).clamp(-max - 1, max) as i32);
    }
    FixedPointMatrix::from_raw(rows, cols, data, frac_bits, weight_bits)
}

/// Per-row integer sums and the binary point they are expressed at.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accumulator {
    sums: Vec<i64>,
    frac_bits: u32,
    /// Nonzero spikes times fan-out actually processed.
    pub synaptic_visits: u64,
    /// Zero spikes times fan-out that were skipped.
    pub skipped: u64,
}

impl Accumulator {
    pub fn sums(&self) -> &[i64] {
        &self.sums
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Size of one least significant bit.
    pub fn lsb(&self) -> f64 {
        pow2_neg(self.frac_bits)
    }

    pub fn values(&self) -> Vec<f64> {
        let lsb = self.lsb();
        self.sums.iter().map(|&s| s as f64 * lsb).collect()
    }
}

fn spike_exponent(s: &SpikeLevel, precision: u32) -> Result<Option<u32>> {
    match s.code() {
        LevelCode::Zero => Ok(None),
        LevelCode::Exponent(k) if k <= precision => Ok(Some(k)),
        LevelCode::Exponent(k) => Err(Error::Parameter(format!(
            "spike exponent {k} exceeds precision factor {precision}"
        ))),
        LevelCode::Index(_) => Err(Error::Parameter(
            "shift-accumulate needs power-of-two spikes".into(),
        )),
    }
}

/// `acc_i = sum_j W_ij * 2^-k_j` over nonzero spikes, computed with shifts.
pub fn shift_accumulate(
    w: &FixedPointMatrix,
    spikes: &[SpikeLevel],
    precision: u32,
    mode: KernelMode,
) -> Result<Accumulator> {
    check_len(w.cols, spikes.len(), "spike vector")?;
    if precision > MAX_PRECISION {
        return Err(Error::Parameter(format!(
            "precision factor {precision} exceeds {MAX_PRECISION}"
        )));
    }
    w.check_width(precision, mode)?;
    let mut sums = vec![0i64; w.rows];
    let mut visits = 0u64;
    let mut skipped = 0u64;
    for (j, s) in spikes.iter().enumerate() {
        let Some(k) = spike_exponent(s, precision)? else {
            skipped += w.rows as u64;
            continue;
        };
        visits += w.rows as u64;
        match mode {
            KernelMode::Exact => {
                let up = precision - k;
                for (i, acc) in sums.iter_mut().enumerate() {
                    *acc += i64::from(w.data[i * w.cols + j]) << up;
                }
            }
            KernelMode::Lossy => {
                for (i, acc) in sums.iter_mut().enumerate() {
                    *acc += i64::from(w.data[i * w.cols + j]) >> k;
                }
            }
        }
    }
    let frac_bits = match mode {
        KernelMode::Exact => w.frac_bits + precision,
        KernelMode::Lossy => w.frac_bits,
    };
    Ok(Accumulator {
        sums,
        frac_bits,
        synaptic_visits: visits,
        skipped,
    })
}

/// Dense `x_i = sum_j w_ij * s_j` in floating point.
pub fn float_reference(
    w: &[f64],
    rows: usize,
    cols: usize,
    amplitudes: &[f64],
) -> Result<Vec<f64>> {
    check_len(rows * cols, w.len(), "real weight matrix")?;
    check_len(cols, amplitudes.len(), "spike amplitude vector")?;
    Ok(w.chunks_exact(cols.max(1))
        .take(rows)
        .map(|row| row.iter().zip(amplitudes).map(|(a, b)| a * b).sum())
        .collect())
}

/// Operation counts for driving `fan_out` synapses from each spiking neuron.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub synaptic_visits: u64,
    pub skipped: u64,
    /// Visits whose spike needs a nonzero shift (`k > 0`).
    pub shift_ops: u64,
    pub acc_ops: u64,
}

pub fn op_counter(spikes: &SpikeTensor, fan_out: usize) -> OpCounts {
    let fan_out = fan_out as u64;
    let mut c = OpCounts::default();
    for s in spikes.entries() {
        if s.is_zero() {
            c.skipped += fan_out;
            continue;
        }
        c.synaptic_visits += fan_out;
        c.acc_ops += fan_out;
        if s.exponent().is_some_and(|k| k > 0) {
            c.shift_ops += fan_out;
        }
    }
    c
}
