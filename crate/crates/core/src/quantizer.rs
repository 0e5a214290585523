//! Spike-level quantizers.
//!
//! Three output alphabets share the same size `K + 2`:
//!
//! * `Shift`: `{0, 2^-K, ..., 2^-1, 1}`, the power-of-two grid.
//! * `Int`: `{0, 1, ..., K + 1}`, nearest-integer rounding.
//! * `Uniform`: `{0, 1/(K+1), ..., 1}`, evenly spaced levels on `[0, 1]`.
//!
//! The shift quantizer has two decision rules that differ only on the shell
//! `[2^-(K+1), 2^-K)`. [`ShiftMode::AlgorithmicClamp`] clamps the exponent and
//! emits `2^-K` there (the executable forward pass); [`ShiftMode::FloorAdmissible`]
//! emits the largest level not exceeding the input, i.e. `0` there, which is
//! what the error analysis relies on (`Q(v) <= v`).
//!
//! The exponent `ceil(-log2 v)` is read off the IEEE-754 exponent field, never
//! computed with a transcendental `log2`, so exact powers of two always land on
//! their own level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported precision factor. Every shift amplitude `2^-k` with
/// `k <= 30` is an exact `f64`.
pub const MAX_PRECISION: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Shift,
    Int,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Emit `2^-min(k, K)` for every `v >= 2^-(K+1)`.
    #[default]
    AlgorithmicClamp,
    /// Emit `max { s in S : s <= v }`.
    FloorAdmissible,
}

/// Which discrete output a quantizer selected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LevelCode {
    Zero,
    /// Shift grid: amplitude `2^-k`.
    Exponent(u32),
    /// Int / Uniform grid: level `j >= 1`.
    Index(u32),
}

/// A quantizer output: the selected code and the real amplitude it denotes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeLevel {
    code: LevelCode,
    amplitude: f64,
}

impl SpikeLevel {
    pub const ZERO: SpikeLevel = SpikeLevel {
        code: LevelCode::Zero,
        amplitude: 0.0,
    };

    /// Power-of-two spike `2^-k`.
    pub fn shift(k: u32) -> Result<SpikeLevel> {
        check_precision(k)?;
        Ok(SpikeLevel {
            code: LevelCode::Exponent(k),
            amplitude: pow2_neg(k),
        })
    }

    /// Integer-grid spike with amplitude `j`.
    pub fn int(j: u32) -> SpikeLevel {
        if j == 0 {
            return SpikeLevel::ZERO;
        }
        SpikeLevel {
            code: LevelCode::Index(j),
            amplitude: f64::from(j),
        }
    }

    /// Uniform-grid spike with amplitude `j / (k + 1)`.
    pub fn uniform(j: u32, k: u32) -> SpikeLevel {
        if j == 0 {
            return SpikeLevel::ZERO;
        }
        SpikeLevel {
            code: LevelCode::Index(j),
            amplitude: uniform_level(j, k),
        }
    }

    pub fn code(&self) -> LevelCode {
        self.code
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn is_zero(&self) -> bool {
        self.code == LevelCode::Zero
    }

    /// Shift exponent, if this is a nonzero power-of-two spike.
    pub fn exponent(&self) -> Option<u32> {
        match self.code {
            LevelCode::Exponent(k) => Some(k),
            _ => None,
        }
    }
}

/// Exact `2^-k` for `k <= 1022`, built from the exponent field.
#[inline]
pub fn pow2_neg(k: u32) -> f64 {
    debug_assert!(k <= 1022);
    f64::from_bits((1023 - u64::from(k)) << 52)
}

/// `ceil(-log2 v)` for a positive normal `v`, i.e. the `k` with
/// `2^-k <= v < 2^-(k-1)`.
#[inline]
fn neg_log2_ceil(v: f64) -> i64 {
    debug_assert!(v.is_normal() && v > 0.0);
    let biased = ((v.to_bits() >> 52) & 0x7ff) as i64;
    1023 - biased
}

#[inline]
fn uniform_level(j: u32, k: u32) -> f64 {
    f64::from(j) / f64::from(k + 1)
}

fn check_precision(k: u32) -> Result<()> {
    if k > MAX_PRECISION {
        return Err(Error::Parameter(format!(
            "precision factor K={k} exceeds maximum {MAX_PRECISION}"
        )));
    }
    Ok(())
}

fn check_finite(v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("quantizer input {v} is not finite")));
    }
    Ok(())
}

/// Power-of-two quantizer. Inputs are clamped to `[0, 1]` first.
pub fn q_shift(v: f64, k: u32, mode: ShiftMode) -> Result<SpikeLevel> {
    check_precision(k)?;
    check_finite(v)?;
    let v = v.clamp(0.0, 1.0);
    let cutoff = match mode {
        ShiftMode::AlgorithmicClamp => pow2_neg(k + 1),
        ShiftMode::FloorAdmissible => pow2_neg(k),
    };
    if v < cutoff {
        return Ok(SpikeLevel::ZERO);
    }
    // v >= 2^-31 here, so it is normal and the exponent read is exact.
    let exp = neg_log2_ceil(v).clamp(0, i64::from(k)) as u32;
    SpikeLevel::shift(exp)
}

/// Nearest-integer quantizer on `{0, ..., K + 1}`; half-integers round up.
pub fn q_int(v: f64, k: u32) -> Result<SpikeLevel> {
    check_precision(k)?;
    check_finite(v)?;
    if v < 0.0 {
        return Err(Error::Domain(format!("integer quantizer input {v} < 0")));
    }
    let top = k + 1;
    if v >= f64::from(top) {
        return Ok(SpikeLevel::int(top));
    }
    // v < 32 here; v - floor(v) is exact so the half comparison is too.
    let whole = v.floor();
    let mut j = whole as u32;
    if v - whole >= 0.5 {
        j += 1;
    }
    Ok(SpikeLevel::int(j.min(top)))
}

/// Nearest level of `{j / (K + 1)}` after clamping to `[0, 1]`; ties go up.
pub fn q_uniform(v: f64, k: u32) -> Result<SpikeLevel> {
    check_precision(k)?;
    check_finite(v)?;
    let v = v.clamp(0.0, 1.0);
    let n = k + 1;
    let guess = (v * f64::from(n)).floor() as i64;
    let lo = (guess - 1).max(0) as u32;
    let hi = ((guess + 1).max(0) as u32).min(n);
    let mut best = lo;
    let mut best_dist = f64::INFINITY;
    for j in lo..=hi {
        let d = (v - uniform_level(j, k)).abs();
        if d <= best_dist {
            best = j;
            best_dist = d;
        }
    }
    Ok(SpikeLevel::uniform(best, k))
}

/// A quantizer's output alphabet together with its decision rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    kind: GridKind,
    precision: u32,
    shift_mode: ShiftMode,
    levels: Vec<f64>,
}

impl LevelSet {
    pub fn new(kind: GridKind, precision: u32, shift_mode: ShiftMode) -> Result<LevelSet> {
        check_precision(precision)?;
        let k = precision;
        let levels = match kind {
            GridKind::Shift => std::iter::once(0.0)
                .chain((0..=k).rev().map(pow2_neg))
                .collect(),
            GridKind::Int => (0..=k + 1).map(f64::from).collect(),
            GridKind::Uniform => (0..=k + 1).map(|j| uniform_level(j, k)).collect(),
        };
        Ok(LevelSet {
            kind,
            precision,
            shift_mode,
            levels,
        })
    }

    pub fn shift(k: u32, mode: ShiftMode) -> Result<LevelSet> {
        LevelSet::new(GridKind::Shift, k, mode)
    }

    pub fn int(k: u32) -> Result<LevelSet> {
        LevelSet::new(GridKind::Int, k, ShiftMode::default())
    }

    pub fn uniform(k: u32) -> Result<LevelSet> {
        LevelSet::new(GridKind::Uniform, k, ShiftMode::default())
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn shift_mode(&self) -> ShiftMode {
        self.shift_mode
    }

    /// Levels in strictly increasing order, starting at 0.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn quantize(&self, v: f64) -> Result<SpikeLevel> {
        match self.kind {
            GridKind::Shift => q_shift(v, self.precision, self.shift_mode),
            GridKind::Int => q_int(v, self.precision),
            GridKind::Uniform => q_uniform(v, self.precision),
        }
    }

    /// Position of `level` in [`LevelSet::levels`].
    pub fn index_of(&self, level: &SpikeLevel) -> Result<usize> {
        let idx = match (self.kind, level.code) {
            (_, LevelCode::Zero) => 0,
            (GridKind::Shift, LevelCode::Exponent(k)) if k <= self.precision => {
                (self.precision - k + 1) as usize
            }
            (GridKind::Int | GridKind::Uniform, LevelCode::Index(j)) if j <= self.precision + 1 => {
                j as usize
            }
            _ => {
                return Err(Error::Parameter(format!(
                    "{:?} does not belong to a {:?} grid with K={}",
                    level.code, self.kind, self.precision
                )))
            }
        };
        Ok(idx)
    }

    pub fn contains(&self, amplitude: f64) -> bool {
        self.levels.contains(&amplitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amp(l: Result<SpikeLevel>) -> f64 {
        l.unwrap().amplitude()
    }

    #[test]
    fn shift_alphabet_k2() {
        let set = LevelSet::shift(2, ShiftMode::AlgorithmicClamp).unwrap();
        assert_eq!(set.levels(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn shift_alphabet_k7_has_nine_levels() {
        assert_eq!(
            LevelSet::shift(7, ShiftMode::FloorAdmissible)
                .unwrap()
                .len(),
            9
        );
    }

    #[test]
    fn int_k0_is_binary() {
        assert_eq!(LevelSet::int(0).unwrap().levels(), &[0.0, 1.0]);
    }

    #[test]
    fn uniform_alphabet() {
        let set = LevelSet::uniform(2).unwrap();
        assert_eq!(set.levels(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn precision_out_of_range() {
        assert!(matches!(
            LevelSet::shift(31, ShiftMode::AlgorithmicClamp),
            Err(Error::Parameter(_))
        ));
        assert!(q_int(0.3, 31).is_err());
    }

    #[test]
    fn shift_examples() {
        for mode in [ShiftMode::AlgorithmicClamp, ShiftMode::FloorAdmissible] {
            assert_eq!(amp(q_shift(0.6, 2, mode)), 0.5);
            assert_eq!(amp(q_shift(0.0, 2, mode)), 0.0);
            assert_eq!(amp(q_shift(1.0, 2, mode)), 1.0);
            assert_eq!(amp(q_shift(7.5, 2, mode)), 1.0);
            assert_eq!(amp(q_shift(-3.0, 2, mode)), 0.0);
        }
        // The shell [2^-(K+1), 2^-K) is where the two rules disagree.
        assert_eq!(amp(q_shift(0.2, 2, ShiftMode::AlgorithmicClamp)), 0.25);
        assert_eq!(amp(q_shift(0.2, 2, ShiftMode::FloorAdmissible)), 0.0);
        assert_eq!(amp(q_shift(0.125, 2, ShiftMode::AlgorithmicClamp)), 0.25);
        assert_eq!(
            amp(q_shift(0.124_999_999, 2, ShiftMode::AlgorithmicClamp)),
            0.0
        );
    }

    #[test]
    fn shift_powers_of_two_map_to_themselves() {
        for k in 0..=MAX_PRECISION {
            for e in 0..=k {
                let p = pow2_neg(e);
                for mode in [ShiftMode::AlgorithmicClamp, ShiftMode::FloorAdmissible] {
                    let s = q_shift(p, k, mode).unwrap();
                    assert_eq!(s.amplitude(), p);
                    assert_eq!(s.exponent(), Some(e));
                }
                // just below a power of two drops to the next level down
                let below = f64::from_bits(p.to_bits() - 1);
                let s = q_shift(below, k, ShiftMode::FloorAdmissible).unwrap();
                if e < k {
                    assert_eq!(s.amplitude(), pow2_neg(e + 1));
                } else {
                    assert!(s.is_zero());
                }
            }
        }
    }

    #[test]
    fn nan_is_domain_error() {
        assert!(matches!(
            q_shift(f64::NAN, 2, ShiftMode::AlgorithmicClamp),
            Err(Error::Domain(_))
        ));
        assert!(matches!(q_int(f64::NAN, 2), Err(Error::Domain(_))));
        assert!(matches!(q_uniform(f64::NAN, 2), Err(Error::Domain(_))));
        assert!(matches!(q_int(-0.1, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn int_examples() {
        assert_eq!(amp(q_int(0.4, 2)), 0.0);
        assert_eq!(amp(q_int(0.5, 2)), 1.0);
        assert_eq!(amp(q_int(1.49, 2)), 1.0);
        assert_eq!(amp(q_int(1.5, 2)), 2.0);
        assert_eq!(amp(q_int(2.6, 2)), 3.0);
        assert_eq!(amp(q_int(1e9, 2)), 3.0);
        // v + 0.5 would round up to 1.0 here
        assert_eq!(amp(q_int(0.499_999_999_999_999_94, 2)), 0.0);
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(amp(q_uniform(0.0, 2)), 0.0);
        assert_eq!(amp(q_uniform(0.49, 2)), 1.0 / 3.0);
        assert_eq!(amp(q_uniform(1.2, 2)), 1.0);
        assert_eq!(amp(q_uniform(-1.0, 2)), 0.0);
        // tie between 0 and 1/2 rounds up
        assert_eq!(amp(q_uniform(0.25, 1)), 0.5);
    }

    #[test]
    fn index_of_matches_levels() {
        let set = LevelSet::shift(3, ShiftMode::FloorAdmissible).unwrap();
        for (i, &l) in set.levels().iter().enumerate() {
            let s = set.quantize(l).unwrap();
            assert_eq!(set.index_of(&s).unwrap(), i);
        }
        let int = LevelSet::int(3).unwrap();
        assert!(int.index_of(&SpikeLevel::shift(1).unwrap()).is_err());
    }
}
