//! Occupation-diagonal preselection filters.
//!
//! A filter is a predicate `C(σ, Δ)` on the total photon number σ and the
//! population difference Δ = n_ref − n_⊥ of a Fock component. Because it is
//! diagonal it acts inside each sector independently, keeping the parity
//! support of |Φ_k⟩ and |Φ̄_k⟩. Only predicates symmetric in Δ are accepted;
//! for those the two flavors lose exactly the same weight in every sector.

use std::fmt;

use crate::error::{Error, Result};
use crate::fockspace::{
    gain_tail, gain_weight, gain_weights, ln_sector_norm, sector_term, Flavor, Gain, SectorState, Truncation,
    WeightVector, MAX_SECTOR_LIMIT,
};
use crate::numeric::log_sum_exp;

/// Largest σ probed when checking a custom predicate for symmetry.
const SYMMETRY_PROBE_SIGMA: usize = 2 * MAX_SECTOR_LIMIT + 1;

/// A custom predicate `C(σ, Δ)`.
pub type Predicate = fn(usize, i64) -> bool;

#[derive(Clone, Copy)]
pub enum FilterSpec {
    None,
    /// Keep components with σ − δ_th ≤ |Δ|.
    Corner(u32),
    /// Keep components with |Δ| ≥ δ_th.
    Mdf(u32),
    /// A user predicate; construct through [`FilterSpec::custom`].
    Custom { label: &'static str, predicate: Predicate },
}

impl fmt::Debug for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterSpec::None => write!(f, "None"),
            FilterSpec::Corner(d) => write!(f, "Corner({d})"),
            FilterSpec::Mdf(d) => write!(f, "Mdf({d})"),
            FilterSpec::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

impl PartialEq for FilterSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (FilterSpec::None, FilterSpec::None) => true,
            (FilterSpec::Corner(a), FilterSpec::Corner(b)) => a == b,
            (FilterSpec::Mdf(a), FilterSpec::Mdf(b)) => a == b,
            (FilterSpec::Custom { label: a, predicate: p }, FilterSpec::Custom { label: b, predicate: q }) => {
                a == b && std::ptr::fn_addr_eq(*p, *q)
            }
            _ => false,
        }
    }
}

impl FilterSpec {
    /// Wraps a predicate after checking `C(σ, Δ) = C(σ, −Δ)` for every
    /// reachable (σ, Δ) up to the largest supported sector.
    pub fn custom(label: &'static str, predicate: Predicate) -> Result<Self> {
        for sigma in 0..=SYMMETRY_PROBE_SIGMA {
            let s = sigma as i64;
            let mut delta = -s;
            while delta < 0 {
                if predicate(sigma, delta) != predicate(sigma, -delta) {
                    return Err(Error::InvalidParameter(format!(
                        "filter predicate '{label}' is not symmetric in the population difference (σ={sigma}, Δ={delta})"
                    )));
                }
                delta += 2;
            }
        }
        Ok(FilterSpec::Custom { label, predicate })
    }

    /// Short name used on the command line and in output headers.
    pub fn kind(&self) -> &'static str {
        match self {
            FilterSpec::None => "none",
            FilterSpec::Corner(_) => "corner",
            FilterSpec::Mdf(_) => "mdf",
            FilterSpec::Custom { label, .. } => label,
        }
    }

    pub fn delta_th(&self) -> Option<u32> {
        match self {
            FilterSpec::Corner(d) | FilterSpec::Mdf(d) => Some(*d),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, FilterSpec::None)
    }

    /// `C(σ, Δ)`.
    pub fn accepts(&self, sigma: usize, delta: i64) -> bool {
        let d = delta.unsigned_abs();
        match *self {
            FilterSpec::None => true,
            FilterSpec::Corner(th) => sigma as u64 <= d + th as u64,
            FilterSpec::Mdf(th) => d >= th as u64,
            FilterSpec::Custom { predicate, .. } => predicate(sigma, delta),
        }
    }

    /// Whether |N−m, m_⊥⟩ passes.
    pub fn accepts_component(&self, n_total: usize, m: usize) -> bool {
        self.accepts(n_total, n_total as i64 - 2 * m as i64)
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.delta_th() {
            Some(d) => write!(f, "{}({d})", self.kind()),
            None => write!(f, "{}", self.kind()),
        }
    }
}

/// Projects a sector state onto the accepted components and renormalizes.
///
/// `norm_sq` of the result is the input's `norm_sq` times the surviving
/// squared weight, so for a fresh sector it equals N_k^P / N_k.
pub fn apply_filter(state: &SectorState, filter: &FilterSpec) -> SectorState {
    let n = state.n_total();
    let mut amps: Vec<f64> = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(m, &a)| if filter.accepts_component(n, m) { a } else { 0.0 })
        .collect();
    let kept: f64 = amps.iter().map(|a| a * a).sum();
    let total: f64 = state.amplitudes().iter().map(|a| a * a).sum();
    if kept == 0.0 || total == 0.0 {
        amps.iter_mut().for_each(|a| *a = 0.0);
        return SectorState::from_parts(state.k(), state.flavor(), amps, 0.0);
    }
    let frac = kept / total;
    let scale = kept.sqrt();
    amps.iter_mut().for_each(|a| *a /= scale);
    SectorState::from_parts(state.k(), state.flavor(), amps, state.norm_sq() * frac)
}

/// `ln N_k^P`, or `-inf` when nothing survives.
pub fn ln_filtered_norm(k: usize, flavor: Flavor, filter: &FilterSpec) -> f64 {
    let n = 2 * k + 1;
    let terms: Vec<f64> = (0..=k)
        .filter_map(|j| {
            let (m, ln) = sector_term(k, flavor, j);
            filter.accepts_component(n, m).then_some(2.0 * ln)
        })
        .collect();
    log_sum_exp(terms)
}

/// N_k^P: the squared norm of the filtered, unnormalized sector. Overflows to
/// `inf` past k ≈ 80; use [`ln_filtered_norm`] or [`survival_fraction`] there.
pub fn filtered_norm(k: usize, flavor: Flavor, filter: &FilterSpec) -> f64 {
    ln_filtered_norm(k, flavor, filter).exp()
}

/// N_k^P / N_k.
pub fn survival_fraction(k: usize, flavor: Flavor, filter: &FilterSpec) -> f64 {
    if filter.is_none() {
        return 1.0;
    }
    (ln_filtered_norm(k, flavor, filter) - ln_sector_norm(k)).exp()
}

/// Unnormalized filtered weights β_k² N_k^P/N_k summed until the remaining
/// unfiltered tail is negligible against the accumulated sum.
struct RawWeights {
    raw: Vec<f64>,
    sum: f64,
}

fn raw_weights(gain: &Gain, filter: &FilterSpec, epsilon: f64) -> Result<RawWeights> {
    let mut raw = Vec::new();
    let mut sum = 0.0;
    let mut k = 0;
    loop {
        let r = gain_weight(gain, k) * survival_fraction(k, Flavor::Phi, filter);
        raw.push(r);
        sum += r;
        let tail = gain_tail(gain, k);
        if sum > 0.0 && tail <= 1e-3 * epsilon * sum {
            break;
        }
        if tail < f64::MIN_POSITIVE {
            break;
        }
        if k >= MAX_SECTOR_LIMIT {
            if sum > 0.0 {
                return Err(Error::Capacity {
                    what: "sector k",
                    requested: k + 1,
                    limit: MAX_SECTOR_LIMIT,
                });
            }
            break;
        }
        k += 1;
    }
    if sum.is_nan() || sum <= 0.0 {
        return Err(Error::DegenerateFilter(format!(
            "filter {filter} rejects every sector at g = {}",
            gain.value()
        )));
    }
    Ok(RawWeights { raw, sum })
}

fn normalized(raw: &RawWeights, k_max: usize) -> WeightVector {
    let weights: Vec<f64> = raw.raw.iter().take(k_max + 1).map(|r| r / raw.sum).collect();
    let tail = raw.raw.iter().skip(k_max + 1).map(|r| r / raw.sum).sum::<f64>();
    WeightVector::new(weights, tail)
}

/// (β_k^P)² = β_k² (N_k^P / N_k) / N^P, truncated where the filtered tail
/// drops to the tolerance.
pub fn preselected_weights(gain: &Gain, filter: &FilterSpec, trunc: &Truncation) -> Result<WeightVector> {
    if filter.is_none() {
        return gain_weights(gain, trunc);
    }
    let raw = raw_weights(gain, filter, trunc.epsilon())?;
    // suffix[k] = Σ_{j ≥ k} raw_j, accumulated from the small end
    let mut suffix = vec![0.0; raw.raw.len() + 1];
    for k in (0..raw.raw.len()).rev() {
        suffix[k] = suffix[k + 1] + raw.raw[k];
    }
    let k_max = (0..raw.raw.len())
        .find(|&k| suffix[k + 1] / raw.sum <= trunc.epsilon())
        .unwrap_or(raw.raw.len() - 1);
    if k_max > trunc.max_sector() {
        return Err(Error::Capacity {
            what: "sector k",
            requested: k_max,
            limit: trunc.max_sector(),
        });
    }
    Ok(normalized(&raw, k_max))
}

/// Filtered weights for a fixed sector range, with the rest reported as tail.
pub fn preselected_weights_upto(gain: &Gain, filter: &FilterSpec, k_max: usize, epsilon: f64) -> Result<WeightVector> {
    if k_max > MAX_SECTOR_LIMIT {
        return Err(Error::Capacity {
            what: "sector k",
            requested: k_max,
            limit: MAX_SECTOR_LIMIT,
        });
    }
    if filter.is_none() {
        let weights = (0..=k_max).map(|k| gain_weight(gain, k)).collect();
        return Ok(WeightVector::new(weights, gain_tail(gain, k_max)));
    }
    let mut raw = raw_weights(gain, filter, epsilon)?;
    while raw.raw.len() <= k_max {
        raw.raw.push(0.0);
    }
    Ok(normalized(&raw, k_max))
}

/// Σ_k β_k² N_k^P / N_k: the probability that the ideal filter passes |Φ⟩.
pub fn success_probability(gain: &Gain, filter: &FilterSpec, epsilon: f64) -> Result<f64> {
    if filter.is_none() {
        return Ok(1.0);
    }
    match raw_weights(gain, filter, epsilon) {
        Ok(r) => Ok(r.sum),
        Err(Error::DegenerateFilter(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}
