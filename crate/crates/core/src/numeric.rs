//! Log-space combinatorics shared by the state and channel code.

use std::sync::OnceLock;

/// Largest `n` for which `ln n!` is tabulated.
pub const LN_FACTORIAL_MAX: usize = 4096;

static LN_FACTORIAL: OnceLock<Vec<f64>> = OnceLock::new();

fn table() -> &'static [f64] {
    LN_FACTORIAL.get_or_init(|| {
        // Neumaier-compensated running sum of ln i.
        let mut out = Vec::with_capacity(LN_FACTORIAL_MAX + 1);
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        out.push(0.0);
        for i in 1..=LN_FACTORIAL_MAX {
            let term = (i as f64).ln();
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
            out.push(sum + comp);
        }
        out
    })
}

/// `ln n!` from the precomputed table.
///
/// Panics if `n > LN_FACTORIAL_MAX`; callers bound their sector indices well
/// below that.
#[inline]
pub fn ln_factorial(n: usize) -> f64 {
    table()[n]
}

/// `ln C(n, k)`; `-inf` when `k > n`.
#[inline]
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln Σ exp(x_i)` without overflow. Returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}
