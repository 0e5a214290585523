//! Brute-force reference implementations. Deliberately naive: they scan the
//! whole alphabet instead of reading exponent bits or using floor arithmetic.
#![allow(dead_code)]

pub fn pow2(k: u32) -> f64 {
    0.5f64.powi(k as i32)
}

/// Largest level of `{0, 2^-K, ..., 1/2, 1}` not above `clamp(v, 0, 1)`.
pub fn shift_floor(v: f64, k: u32) -> f64 {
    let v = v.clamp(0.0, 1.0);
    let mut best = 0.0;
    for e in 0..=k {
        let l = pow2(e);
        if l <= v && l > best {
            best = l;
        }
    }
    best
}

/// Charge-clamp-quantize rule written out step by step: zero below
/// `2^-(K+1)`, else `2^-min(k, K)` with `k` the smallest integer such that
/// `2^-k <= v`.
pub fn shift_algorithmic(v: f64, k: u32) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v < pow2(k + 1) {
        return 0.0;
    }
    let mut e = 0;
    while pow2(e) > v {
        e += 1;
    }
    pow2(e.min(k))
}

/// Nearest of `{0, 1, ..., K+1}`, ties to the larger level.
pub fn int_nearest(v: f64, k: u32) -> f64 {
    let mut best = 0.0;
    let mut dist = f64::INFINITY;
    for j in 0..=k + 1 {
        let d = (v - f64::from(j)).abs();
        if d <= dist {
            best = f64::from(j);
            dist = d;
        }
    }
    best
}

/// Nearest of `{j / (K+1)}` after clamping, ties to the larger level.
pub fn uniform_nearest(v: f64, k: u32) -> f64 {
    let v = v.clamp(0.0, 1.0);
    let mut best = 0.0;
    let mut dist = f64::INFINITY;
    for j in 0..=k + 1 {
        let l = f64::from(j) / f64::from(k + 1);
        let d = (v - l).abs();
        if d <= dist {
            best = l;
            dist = d;
        }
    }
    best
}

/// `sum_j w[r][j] * s[j]` with exact rational arithmetic on dyadic inputs:
/// every weight is `n / 2^f` and every spike `2^-k`, so scaling by
/// `2^(f + K)` turns each product into an integer.
pub fn dyadic_matvec(
    w_raw: &[i32],
    rows: usize,
    cols: usize,
    exps: &[Option<u32>],
    k: u32,
) -> Vec<i128> {
    (0..rows)
        .map(|r| {
            (0..cols)
                .filter_map(|c| {
                    exps[c].map(|e| i128::from(w_raw[r * cols + c]) * (1i128 << (k - e)))
                })
                .sum()
        })
        .collect()
}
