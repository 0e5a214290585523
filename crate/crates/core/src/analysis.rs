//! Distribution-level comparison of the power-of-two and integer quantizers.
//!
//! Everything here works on empirical frequencies of a [`SampleSet`] of
//! nonnegative membrane values (normalized by threshold). The shift quantizer
//! is always used in [`ShiftMode::FloorAdmissible`] mode, the rule under which
//! `Q_shift(v) <= v` holds.
//!
//! Sums over samples use Neumaier compensated summation so results do not
//! depend on how the samples were partitioned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{pow2_neg, q_int, q_shift, GridKind, LevelSet, ShiftMode};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Synthetic sources of membrane samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SampleDistribution {
    /// Zero-concentrated, density `rate * exp(-rate * x)`.
    Exponential {
        rate: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    PointMass {
        value: f64,
    },
    /// Draw from `first` with probability `weight`, else from `second`.
    Mixture {
        weight: f64,
        first: Box<SampleDistribution>,
        second: Box<SampleDistribution>,
    },
}

impl Default for SampleDistribution {
    fn default() -> Self {
        SampleDistribution::Exponential { rate: 4.0 }
    }
}

impl SampleDistribution {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            SampleDistribution::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    out.push(format!("exponential rate must be > 0 (got {rate})"));
                }
            }
            SampleDistribution::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low >= 0.0 && low < high) {
                    out.push(format!("uniform needs 0 <= low < high (got {low}, {high})"));
                }
            }
            SampleDistribution::PointMass { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    out.push(format!("point mass must be finite and >= 0 (got {value})"));
                }
            }
            SampleDistribution::Mixture {
                weight,
                first,
                second,
            } => {
                if !(0.0..=1.0).contains(weight) {
                    out.push(format!("mixture weight must be in [0, 1] (got {weight})"));
                }
                out.extend(first.violations());
                out.extend(second.violations());
            }
        }
        out
    }

    pub fn describe(&self) -> String {
        match self {
            SampleDistribution::Exponential { rate } => format!("exponential(rate={rate})"),
            SampleDistribution::Uniform { low, high } => format!("uniform({low},{high})"),
            SampleDistribution::PointMass { value } => format!("point_mass({value})"),
            SampleDistribution::Mixture {
                weight,
                first,
                second,
            } => format!(
                "mixture({weight}:{},{})",
                first.describe(),
                second.describe()
            ),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            SampleDistribution::Exponential { rate } => {
                Exp::new(*rate).expect("validated rate").sample(rng)
            }
            SampleDistribution::Uniform { low, high } => Uniform::new(*low, *high)
                .expect("validated bounds")
                .sample(rng),
            SampleDistribution::PointMass { value } => *value,
            SampleDistribution::Mixture {
                weight,
                first,
                second,
            } => {
                if rng.random::<f64>() < *weight {
                    first.draw(rng)
                } else {
                    second.draw(rng)
                }
            }
        }
    }

    /// `n` seeded draws.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(Error::Parameter(v.join("; ")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n).map(|_| self.draw(&mut rng)).collect();
        SampleSet::new(values, format!("{} n={n} seed={seed}", self.describe()))
    }
}

/// Nonempty set of finite, nonnegative samples plus where they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
    source: String,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("sample set is empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "samples must be finite and >= 0 (found {bad})"
            )));
        }
        Ok(SampleSet {
            values,
            source: source.into(),
        })
    }

    /// Membrane values from a recorded trace, negatives clipped to 0 and
    /// divided by the threshold.
    pub fn from_membrane(trace: &[f64], v_th: f64, source: impl Into<String>) -> Result<Self> {
        SampleSet::new(trace.iter().map(|v| v.max(0.0) / v_th).collect(), source)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn frequency(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.values.iter().filter(|&&v| pred(v)).count() as f64 / self.len() as f64
    }
}

fn require_floor(q: &LevelSet) -> Result<()> {
    if q.kind() == GridKind::Shift && q.shift_mode() != ShiftMode::FloorAdmissible {
        return Err(Error::Parameter(
            "analysis needs the floor-admissible shift quantizer".into(),
        ));
    }
    Ok(())
}

fn require_precision(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::Parameter("condition checks need K >= 1".into()));
    }
    Ok(())
}

/// Mean of `|x - Q(x)|` over the samples.
pub fn expected_abs_error(samples: &SampleSet, quantizer: &LevelSet) -> Result<f64> {
    require_floor(quantizer)?;
    let mut acc = CompensatedSum::default();
    for &x in samples.values() {
        acc.add((x - quantizer.quantize(x)?.amplitude()).abs());
    }
    Ok(acc.value() / samples.len() as f64)
}

/// `Delta(v) = |v - Q_int(v)| - (v - Q_shift(v))` and its piecewise lower bound
/// `2^-K 1[2^-K <= v < 1/2] - 1/2 1[3/4 <= v < 1] - K 1[v >= 3/2]`.
pub fn delta_pointwise(v: f64, k: u32) -> Result<(f64, f64)> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Domain(format!(
            "delta needs finite v >= 0 (got {v})"
        )));
    }
    let q_i = q_int(v, k)?.amplitude();
    let q_s = q_shift(v, k, ShiftMode::FloorAdmissible)?.amplitude();
    let delta = (v - q_i).abs() - (v - q_s);
    let bound = if (pow2_neg(k)..0.5).contains(&v) {
        pow2_neg(k)
    } else if (0.75..1.0).contains(&v) {
        -0.5
    } else if v >= 1.5 {
        -f64::from(k)
    } else {
        0.0
    };
    Ok((delta, bound))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftAdvantageCheck {
    /// `2^-K Pr(2^-K <= X < 1/2)`
    pub lhs: f64,
    /// `1/2 Pr(3/4 <= X < 1) + K Pr(X >= 3/2)`
    pub rhs: f64,
    pub condition_holds: bool,
    pub error_shift: f64,
    pub error_int: f64,
    /// `E_int - E_shift` on the same samples.
    pub empirical_gap: f64,
    /// Monte Carlo standard error of the gap (paired differences).
    pub gap_std_error: f64,
}

impl ShiftAdvantageCheck {
    pub fn shift_wins(&self) -> bool {
        self.error_shift < self.error_int
    }
}

/// Sufficient condition for the shift quantizer to have lower mean absolute
/// error, both sides estimated from `samples`.
pub fn shift_advantage_condition(samples: &SampleSet, k: u32) -> Result<ShiftAdvantageCheck> {
    require_precision(k)?;
    let p_low = samples.frequency(|v| v >= pow2_neg(k) && v < 0.5);
    let p_mid = samples.frequency(|v| (0.75..1.0).contains(&v));
    let p_high = samples.frequency(|v| v >= 1.5);
    let lhs = pow2_neg(k) * p_low;
    let rhs = 0.5 * p_mid + f64::from(k) * p_high;

    let n = samples.len() as f64;
    let mut e_shift = CompensatedSum::default();
    let mut e_int = CompensatedSum::default();
    let mut diffs = Vec::with_capacity(samples.len());
    for &x in samples.values() {
        let es = x - q_shift(x, k, ShiftMode::FloorAdmissible)?.amplitude();
        let ei = (x - q_int(x, k)?.amplitude()).abs();
        e_shift.add(es);
        e_int.add(ei);
        diffs.push(ei - es);
    }
    let error_shift = e_shift.value() / n;
    let error_int = e_int.value() / n;
    let mean_diff = diffs.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = if samples.len() > 1 {
        diffs
            .iter()
            .map(|d| (d - mean_diff).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / (n - 1.0)
    } else {
        0.0
    };
    Ok(ShiftAdvantageCheck {
        lhs,
        rhs,
        condition_holds: lhs > rhs,
        error_shift,
        error_int,
        empirical_gap: error_int - error_shift,
        gap_std_error: (var / n).sqrt(),
    })
}

/// Shannon entropy in bits of a probability vector (`0 log 0 = 0`).
pub fn entropy_bits(probs: &[f64]) -> f64 {
    let h = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .collect::<CompensatedSum>()
        .value();
    h.max(0.0)
}

/// Binary entropy `h2(r)`.
pub fn binary_entropy(r: f64) -> f64 {
    entropy_bits(&[r, 1.0 - r])
}

fn normalize(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Empirical distribution of `Q(X)` over the quantizer's levels.
pub fn output_distribution(samples: &SampleSet, quantizer: &LevelSet) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; quantizer.len()];
    for &x in samples.values() {
        counts[quantizer.index_of(&quantizer.quantize(x)?)?] += 1;
    }
    Ok(normalize(&counts))
}

pub fn output_entropy(samples: &SampleSet, quantizer: &LevelSet) -> Result<f64> {
    Ok(entropy_bits(&output_distribution(samples, quantizer)?))
}

/// Bits needed to index `K + 2` levels.
pub fn bit_budget(k: u32) -> u32 {
    let n = k + 2;
    u32::BITS - (n - 1).leading_zeros()
}

/// `H(Q(X)) / ceil(log2(K + 2))`.
pub fn bit_utilization(samples: &SampleSet, quantizer: &LevelSet) -> Result<f64> {
    Ok(output_entropy(samples, quantizer)? / f64::from(bit_budget(quantizer.precision())))
}

/// Chain-rule split of both quantizers' output entropy at `1/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecomposition {
    pub precision: u32,
    /// `Pr(X < 1/2)`
    pub r: f64,
    /// `Pr(1/2 <= X < 1)`
    pub m: f64,
    /// `Pr(X >= 1)`
    pub c: f64,
    /// Dyadic shells below 1/2: `R_0` on `[0, 2^-K)`, then `R_k` on
    /// `[2^-k, 2^-k+1)` for `k = 2..=K`.
    pub shell_dist: Vec<f64>,
    /// `(m, c) / (1 - r)`
    pub upper_shift_dist: [f64; 2],
    /// Rounded integer cells `T_1 .. T_{K+1}` conditional on `X >= 1/2`.
    pub upper_int_dist: Vec<f64>,
    pub h2_r: f64,
    pub h_shell: f64,
    pub h_upper_shift: f64,
    pub h_upper_int: f64,
    pub h_shift_direct: f64,
    pub h_int_direct: f64,
    pub h_shift_chain: f64,
    pub h_int_chain: f64,
    /// `r H(R) + (1 - r) H(V)`
    pub criterion_lhs: f64,
    /// `(1 - r) H(T)`
    pub criterion_rhs: f64,
    pub utilization_shift: f64,
    pub utilization_int: f64,
}

impl EntropyDecomposition {
    pub fn shift_residual(&self) -> f64 {
        (self.h_shift_chain - self.h_shift_direct).abs()
    }

    pub fn int_residual(&self) -> f64 {
        (self.h_int_chain - self.h_int_direct).abs()
    }

    pub fn criterion_holds(&self) -> bool {
        self.criterion_lhs > self.criterion_rhs
    }

    pub fn direct_verdict(&self) -> bool {
        self.utilization_shift > self.utilization_int
    }

    pub fn verdicts_agree(&self) -> bool {
        self.criterion_holds() == self.direct_verdict()
    }
}

/// Shell index of a value below 1/2: 0 for `[0, 2^-K)`, else `k - 1` for
/// `[2^-k, 2^-k+1)`, `k = 2..=K`.
fn shell_slot(v: f64, k: u32) -> usize {
    if v < pow2_neg(k) {
        return 0;
    }
    (2..=k)
        .find(|&e| v >= pow2_neg(e))
        .map(|e| (e - 1) as usize)
        .expect("v in [2^-K, 1/2) lies in some shell")
}

pub fn entropy_decomposition(samples: &SampleSet, k: u32) -> Result<EntropyDecomposition> {
    require_precision(k)?;
    let n = samples.len();
    let mut below = 0usize;
    let mut shells = vec![0usize; k as usize];
    let mut upper = [0usize; 2];
    let mut cells = vec![0usize; k as usize + 1];
    for &v in samples.values() {
        if v < 0.5 {
            below += 1;
            shells[shell_slot(v, k)] += 1;
            continue;
        }
        upper[usize::from(v >= 1.0)] += 1;
        let j = if v >= f64::from(k) + 0.5 {
            k as usize + 1
        } else {
            (1..=k as usize)
                .find(|&j| v < j as f64 + 0.5)
                .expect("v < K + 1/2")
        };
        cells[j - 1] += 1;
    }
    let r = below as f64 / n as f64;
    let m = upper[0] as f64 / n as f64;
    let c = upper[1] as f64 / n as f64;
    let shell_dist = normalize(&shells);
    let upper_dist = normalize(&upper);
    let upper_int_dist = normalize(&cells);

    let h2_r = binary_entropy(r);
    let h_shell = entropy_bits(&shell_dist);
    let h_upper_shift = entropy_bits(&upper_dist);
    let h_upper_int = entropy_bits(&upper_int_dist);

    let shift = LevelSet::shift(k, ShiftMode::FloorAdmissible)?;
    let int = LevelSet::int(k)?;
    let h_shift_direct = output_entropy(samples, &shift)?;
    let h_int_direct = output_entropy(samples, &int)?;
    let criterion_lhs = r * h_shell + (1.0 - r) * h_upper_shift;
    let criterion_rhs = (1.0 - r) * h_upper_int;
    let budget = f64::from(bit_budget(k));

    Ok(EntropyDecomposition {
        precision: k,
        r,
        m,
        c,
        shell_dist,
        upper_shift_dist: [upper_dist[0], upper_dist[1]],
        upper_int_dist,
        h2_r,
        h_shell,
        h_upper_shift,
        h_upper_int,
        h_shift_direct,
        h_int_direct,
        h_shift_chain: h2_r + criterion_lhs,
        h_int_chain: h2_r + criterion_rhs,
        criterion_lhs,
        criterion_rhs,
        utilization_shift: h_shift_direct / budget,
        utilization_int: h_int_direct / budget,
    })
}

/// Normalized occupancy of equal-width bins over `[0, v_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub v_max: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.v_max / self.mass.len() as f64
    }

    /// Index of the most populated bin (first on ties).
    pub fn mode_bin(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        best
    }
}

/// Histogram of membrane values clamped to `[0, v_max]`.
pub fn membrane_histogram(trace: &[f64], bins: usize, v_max: f64) -> Result<Histogram> {
    if trace.is_empty() {
        return Err(Error::Parameter("membrane trace is empty".into()));
    }
    if bins == 0 || v_max.is_nan() || v_max <= 0.0 {
        return Err(Error::Parameter(format!(
            "histogram needs bins >= 1 and v_max > 0 (got {bins}, {v_max})"
        )));
    }
    let mut counts = vec![0usize; bins];
    for &v in trace {
        let x = if v.is_nan() { 0.0 } else { v.clamp(0.0, v_max) };
        let b = ((x / v_max) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    Ok(Histogram {
        v_max,
        mass: normalize(&counts),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerMetrics {
    pub quantizer: GridKind,
    pub expected_abs_error: f64,
    pub entropy: f64,
    pub utilization: f64,
}

/// Everything the analysis computes for one sample set and precision factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub source: String,
    pub precision: u32,
    pub samples: usize,
    pub quantizers: Vec<QuantizerMetrics>,
    pub shift_advantage: Option<ShiftAdvantageCheck>,
    pub entropy_split: Option<EntropyDecomposition>,
    /// Samples where `Delta(v)` fell below its pointwise bound.
    pub delta_bound_violations: usize,
    pub histogram: Histogram,
}

impl AnalysisReport {
    pub fn build(samples: &SampleSet, k: u32, bins: usize, v_max: f64) -> Result<Self> {
        let mut quantizers = Vec::new();
        for q in [
            LevelSet::shift(k, ShiftMode::FloorAdmissible)?,
            LevelSet::int(k)?,
            LevelSet::uniform(k)?,
        ] {
            quantizers.push(QuantizerMetrics {
                quantizer: q.kind(),
                expected_abs_error: expected_abs_error(samples, &q)?,
                entropy: output_entropy(samples, &q)?,
                utilization: bit_utilization(samples, &q)?,
            });
        }
        let mut violations = 0;
        for &v in samples.values() {
            let (d, b) = delta_pointwise(v, k)?;
            if d < b {
                violations += 1;
            }
        }
        let (shift_advantage, entropy_split) = if k >= 1 {
            (
                Some(shift_advantage_condition(samples, k)?),
                Some(entropy_decomposition(samples, k)?),
            )
        } else {
            (None, None)
        };
        Ok(AnalysisReport {
            source: samples.source().to_string(),
            precision: k,
            samples: samples.len(),
            quantizers,
            shift_advantage,
            entropy_split,
            delta_bound_violations: violations,
            histogram: membrane_histogram(samples.values(), bins, v_max)?,
        })
    }

    /// Identity residuals within `tol`, criterion agreeing with the direct
    /// comparison, and no pointwise bound violations.
    pub fn consistent(&self, tol: f64) -> bool {
        let entropy_ok = self.entropy_split.as_ref().is_none_or(|d| {
            d.shift_residual() <= tol && d.int_residual() <= tol && d.verdicts_agree()
        });
        let lemma1_ok = self
            .shift_advantage
            .as_ref()
            .is_none_or(|l| !l.condition_holds || l.shift_wins());
        entropy_ok && lemma1_ok && self.delta_bound_violations == 0
    }
}
