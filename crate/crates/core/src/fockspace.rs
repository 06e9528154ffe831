//! Fixed-photon-number sectors of the amplified single photon.
//!
//! The amplified state |Φ⟩ seeded by one reference-polarized photon is
//!
//! ```text
//! |Φ⟩ = Σ_k β_k |Φ_k⟩,   |Φ_k⟩ ∝ (a†² + a⊥†²)^k a† |0⟩,
//! β_k² = cosh⁻⁴g · tanh^{2k}g · (1 + k)
//! ```
//!
//! and |Φ̄⟩ is the same with the seed photon in the orthogonal mode. Sector
//! amplitudes are stored indexed by `m`, the number of photons in the ⊥ mode,
//! so a sector with `N = 2k+1` photons has `N + 1` slots and both flavors share
//! one layout. All factorial ratios are evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_binomial, ln_factorial, LN_FACTORIAL_MAX};

pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_MAX_SECTOR: usize = 500;
/// Absolute ceiling for any configured sector cap (bounded by the factorial table).
pub const MAX_SECTOR_LIMIT: usize = (LN_FACTORIAL_MAX - 2) / 2;

/// Parametric amplification gain with cached hyperbolic functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Gain {
    g: f64,
    cosh: f64,
    sinh: f64,
    tanh: f64,
}

impl Gain {
    pub fn new(g: f64) -> Result<Self> {
        if !g.is_finite() || g < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gain must be finite and non-negative, got {g}"
            )));
        }
        Ok(Self {
            g,
            cosh: g.cosh(),
            sinh: g.sinh(),
            tanh: g.tanh(),
        })
    }

    pub fn value(&self) -> f64 {
        self.g
    }

    pub fn cosh(&self) -> f64 {
        self.cosh
    }

    pub fn sinh(&self) -> f64 {
        self.sinh
    }

    pub fn tanh(&self) -> f64 {
        self.tanh
    }
}

impl TryFrom<f64> for Gain {
    type Error = Error;

    fn try_from(g: f64) -> Result<Self> {
        Gain::new(g)
    }
}

impl From<Gain> for f64 {
    fn from(g: Gain) -> f64 {
        g.g
    }
}

/// Sector truncation policy: tail-mass tolerance and a hard cap on `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    epsilon: f64,
    max_sector: usize,
}

impl Truncation {
    pub fn new(epsilon: f64, max_sector: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tail tolerance must lie in (0, 1), got {epsilon}"
            )));
        }
        if max_sector > MAX_SECTOR_LIMIT {
            return Err(Error::Capacity {
                what: "max_sector",
                requested: max_sector,
                limit: MAX_SECTOR_LIMIT,
            });
        }
        Ok(Self {
            epsilon,
            max_sector,
        })
    }

    pub fn with_epsilon(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, DEFAULT_MAX_SECTOR)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn max_sector(&self) -> usize {
        self.max_sector
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_sector: DEFAULT_MAX_SECTOR,
        }
    }
}

/// Which polarization carries the seed photon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    /// Seed in the reference mode: support on even ⊥ occupation.
    Phi,
    /// Seed in the ⊥ mode: support on odd ⊥ occupation.
    PhiBar,
}

/// A pure state with `2k+1` photons spread over two polarization modes.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorState {
    k: usize,
    flavor: Flavor,
    amplitudes: Vec<f64>,
    norm_sq: f64,
}

impl SectorState {
    pub(crate) fn from_parts(k: usize, flavor: Flavor, amplitudes: Vec<f64>, norm_sq: f64) -> Self {
        debug_assert_eq!(amplitudes.len(), 2 * k + 2);
        Self {
            k,
            flavor,
            amplitudes,
            norm_sq,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// Total photon number `N = 2k + 1`.
    pub fn n_total(&self) -> usize {
        2 * self.k + 1
    }

    /// Amplitudes indexed by ⊥-mode occupation `m ∈ 0..=N`.
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Amplitude of |N−m, m_⊥⟩.
    pub fn component(&self, m: usize) -> f64 {
        self.amplitudes.get(m).copied().unwrap_or(0.0)
    }

    /// Squared norm before the last renormalization, relative to the
    /// unfiltered sector (1 for a fresh sector, N_k^P / N_k after a filter).
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// True when a filter removed every component.
    pub fn is_empty(&self) -> bool {
        self.norm_sq == 0.0
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// `ln N_k = ln(4^k k!² (1+k))`.
pub fn ln_sector_norm(k: usize) -> f64 {
    k as f64 * 4f64.ln() + 2.0 * ln_factorial(k) + ((k + 1) as f64).ln()
}

/// Occupation `m` (⊥ photons) and log of the unnormalized amplitude for the
/// `j`-th term of the binomial expansion of `(a†² + a⊥†²)^k` times the seed.
pub(crate) fn sector_term(k: usize, flavor: Flavor, j: usize) -> (usize, f64) {
    match flavor {
        // binom(k,j) sqrt((2j+1)! (2k-2j)!) at |2j+1, (2k-2j)_⊥⟩
        Flavor::Phi => {
            let m = 2 * k - 2 * j;
            let ln = ln_binomial(k, j) + 0.5 * (ln_factorial(2 * j + 1) + ln_factorial(m));
            (m, ln)
        }
        // binom(k,j) sqrt((2j)! (2k+1-2j)!) at |2j, (2k+1-2j)_⊥⟩
        Flavor::PhiBar => {
            let m = 2 * k + 1 - 2 * j;
            let ln = ln_binomial(k, j) + 0.5 * (ln_factorial(2 * j) + ln_factorial(m));
            (m, ln)
        }
    }
}

fn check_sector(k: usize, cap: usize) -> Result<()> {
    if k > cap {
        return Err(Error::Capacity {
            what: "sector k",
            requested: k,
            limit: cap,
        });
    }
    Ok(())
}

/// Normalized sector state |Φ_k⟩ or |Φ̄_k⟩, guarded by the default sector cap.
pub fn sector_state(k: usize, flavor: Flavor) -> Result<SectorState> {
    sector_state_capped(k, flavor, DEFAULT_MAX_SECTOR)
}

pub fn sector_state_capped(k: usize, flavor: Flavor, cap: usize) -> Result<SectorState> {
    check_sector(k, cap.min(MAX_SECTOR_LIMIT))?;
    let ln_norm = ln_sector_norm(k);
    let mut amplitudes = vec![0.0; 2 * k + 2];
    for j in 0..=k {
        let (m, ln) = sector_term(k, flavor, j);
        amplitudes[m] = (0.5 * (2.0 * ln - ln_norm)).exp();
    }
    let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    for a in &mut amplitudes {
        *a /= norm;
    }
    Ok(SectorState::from_parts(k, flavor, amplitudes, 1.0))
}

/// Truncated sector weights with the discarded probability mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    tail_mass: f64,
}

impl WeightVector {
    pub(crate) fn new(weights: Vec<f64>, tail_mass: f64) -> Self {
        Self { weights, tail_mass }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(0.0)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn k_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.tail_mass
    }
}

/// β_k² for the unfiltered amplified photon.
pub fn gain_weight(gain: &Gain, k: usize) -> f64 {
    if k == 0 {
        return gain.cosh().powi(-4);
    }
    let x = gain.tanh() * gain.tanh();
    if x == 0.0 {
        return 0.0;
    }
    (-4.0 * gain.cosh().ln() + k as f64 * x.ln() + ((k + 1) as f64).ln()).exp()
}

/// Σ_{k > k_max} β_k², in closed form: x^{K+1} ((K+2) − (K+1) x) with x = tanh²g.
pub fn gain_tail(gain: &Gain, k_max: usize) -> f64 {
    let x = gain.tanh() * gain.tanh();
    if x == 0.0 {
        return 0.0;
    }
    let kf = k_max as f64;
    let poly = (kf + 2.0) - (kf + 1.0) * x;
    ((kf + 1.0) * x.ln() + poly.ln()).exp()
}

/// β_k² for `k = 0..=k_max`, where `k_max` is the smallest index whose tail
/// mass does not exceed the truncation tolerance.
pub fn gain_weights(gain: &Gain, trunc: &Truncation) -> Result<WeightVector> {
    let mut k_max = 0;
    while gain_tail(gain, k_max) > trunc.epsilon() {
        k_max += 1;
        check_sector(k_max, trunc.max_sector())?;
    }
    gain_weights_upto(gain, k_max)
}

/// β_k² for a fixed sector range.
pub fn gain_weights_upto(gain: &Gain, k_max: usize) -> Result<WeightVector> {
    check_sector(k_max, MAX_SECTOR_LIMIT)?;
    let weights = (0..=k_max).map(|k| gain_weight(gain, k)).collect();
    Ok(WeightVector::new(weights, gain_tail(gain, k_max)))
}

/// Mean total photon number of |Φ⟩: 4 sinh²g + 1.
pub fn mean_photon_number(gain: &Gain) -> f64 {
    4.0 * gain.sinh() * gain.sinh() + 1.0
}

/// Fock amplitude γ_ij of |2i+1, (2j)_⊥⟩ in |Φ⟩:
/// cosh⁻²g (tanh g / 2)^{i+j} √((1+2i)!(2j)!) / (i! j!).
pub fn gamma_amplitude(i: usize, j: usize, gain: &Gain) -> f64 {
    let mut ln = -2.0 * gain.cosh().ln() + 0.5 * (ln_factorial(2 * i + 1) + ln_factorial(2 * j))
        - ln_factorial(i)
        - ln_factorial(j);
    if i + j > 0 {
        let half_t = gain.tanh() / 2.0;
        if half_t == 0.0 {
            return 0.0;
        }
        ln += (i + j) as f64 * half_t.ln();
    }
    ln.exp()
}

/// Mean photon numbers `(⟨n_ref⟩, ⟨n_⊥⟩)` of |Φ⟩, summed over the truncated sectors.
pub fn mode_means(gain: &Gain, trunc: &Truncation) -> Result<(f64, f64)> {
    let w = gain_weights(gain, trunc)?;
    let mut n_ref = 0.0;
    let mut n_perp = 0.0;
    for (k, &wk) in w.weights().iter().enumerate() {
        let s = sector_state_capped(k, Flavor::Phi, trunc.max_sector())?;
        let n = s.n_total();
        for (m, a) in s.amplitudes().iter().enumerate() {
            let p = wk * a * a;
            n_ref += p * (n - m) as f64;
            n_perp += p * m as f64;
        }
    }
    Ok((n_ref, n_perp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn base_sector_is_single_photon() {
        let s = sector_state(0, Flavor::Phi).unwrap();
        assert_eq!(s.amplitudes(), &[1.0, 0.0]);
        let s = sector_state(0, Flavor::PhiBar).unwrap();
        assert_eq!(s.amplitudes(), &[0.0, 1.0]);
    }

    #[test]
    fn first_sector_amplitudes() {
        // (a†² + a⊥†²) a†|0⟩ = √6|3,0⟩ + √2|1,2⟩, N_1 = 8
        let s = sector_state(1, Flavor::Phi).unwrap();
        assert!(close(s.component(0), 3f64.sqrt() / 2.0, 1e-15));
        assert!(close(s.component(2), 0.5, 1e-15));
        assert_eq!(s.component(1), 0.0);
        assert_eq!(s.component(3), 0.0);
        assert!(close(ln_sector_norm(1).exp(), 8.0, 1e-12));

        let s = sector_state(1, Flavor::PhiBar).unwrap();
        assert!(close(s.component(1), 0.5, 1e-15));
        assert!(close(s.component(3), 3f64.sqrt() / 2.0, 1e-15));
    }

    #[test]
    fn sectors_normalized_with_parity_support() {
        for k in [0, 1, 2, 7, 40, 150, 500] {
            for flavor in [Flavor::Phi, Flavor::PhiBar] {
                let s = sector_state(k, flavor).unwrap();
                assert!(close(s.norm(), 1.0, 1e-12), "k={k}");
                for (m, a) in s.amplitudes().iter().enumerate() {
                    let allowed = match flavor {
                        Flavor::Phi => m % 2 == 0,
                        Flavor::PhiBar => m % 2 == 1,
                    };
                    if !allowed {
                        assert_eq!(*a, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn sector_cap_enforced() {
        assert!(matches!(
            sector_state(DEFAULT_MAX_SECTOR + 1, Flavor::Phi),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn zero_gain_weights() {
        let w = gain_weights(&Gain::new(0.0).unwrap(), &Truncation::default()).unwrap();
        assert_eq!(w.weights(), &[1.0]);
        assert_eq!(w.k_max(), 0);
        assert_eq!(w.tail_mass(), 0.0);
    }

    #[test]
    fn first_weight_at_g08() {
        let g = Gain::new(0.8).unwrap();
        let w = gain_weights(&g, &Truncation::default()).unwrap();
        assert!(close(w.weight(0), 0.8f64.cosh().powi(-4), 1e-15));
        assert!(close(w.weight(0), 0.3126, 1e-4));
    }

    #[test]
    fn weights_plus_tail_sum_to_one() {
        for g in [0.01, 0.3, 0.8, 1.1, 1.5, 2.0] {
            let w = gain_weights(&Gain::new(g).unwrap(), &Truncation::default()).unwrap();
            assert!(close(w.total(), 1.0, 1e-12), "g={g} total={}", w.total());
            assert!(w.tail_mass() <= 1e-10);
            assert!(w.k_max() == 0 || gain_tail(&Gain::new(g).unwrap(), w.k_max() - 1) > 1e-10);
        }
    }

    #[test]
    fn huge_gain_hits_capacity() {
        let r = gain_weights(&Gain::new(8.0).unwrap(), &Truncation::default());
        assert!(matches!(r, Err(Error::Capacity { .. })));
    }

    #[test]
    fn mean_photon_numbers() {
        assert!(close(mean_photon_number(&Gain::new(0.0).unwrap()), 1.0, 0.0));
        assert!(close(mean_photon_number(&Gain::new(0.8).unwrap()), 4.15, 0.01));
        assert!(close(mean_photon_number(&Gain::new(1.1).unwrap()), 8.13, 0.01));
    }

    #[test]
    fn gamma_vacuum_gain() {
        assert_eq!(gamma_amplitude(0, 0, &Gain::new(0.0).unwrap()), 1.0);
        assert_eq!(gamma_amplitude(1, 0, &Gain::new(0.0).unwrap()), 0.0);
    }

    #[test]
    fn gamma_matches_sector_decomposition() {
        let g = Gain::new(0.8).unwrap();
        for k in 0..=6usize {
            let s = sector_state(k, Flavor::Phi).unwrap();
            let beta_k = gain_weight(&g, k).sqrt();
            for i in 0..=k {
                let j = k - i;
                // |2i+1, (2j)_⊥⟩ sits at m = 2j
                let from_sector = beta_k * s.component(2 * j);
                assert!(close(from_sector, gamma_amplitude(i, j, &g), 1e-10), "i={i} j={j}");
            }
        }
    }

    #[test]
    fn gamma_normalization() {
        let g = Gain::new(0.8).unwrap();
        let mut sum = 0.0;
        for i in 0..=30 {
            for j in 0..=30 {
                sum += gamma_amplitude(i, j, &g).powi(2);
            }
        }
        assert!(close(sum, 1.0, 1e-8), "sum={sum}");
    }

    #[test]
    fn mode_means_closed_form() {
        for g in [0.2, 0.8, 1.1] {
            let gain = Gain::new(g).unwrap();
            let (n_ref, n_perp) = mode_means(&gain, &Truncation::with_epsilon(1e-14).unwrap()).unwrap();
            let sh2 = gain.sinh().powi(2);
            assert!(close(n_ref, 3.0 * sh2 + 1.0, 1e-8), "g={g} n_ref={n_ref}");
            assert!(close(n_perp, sh2, 1e-8), "g={g} n_perp={n_perp}");
            assert!(close(n_ref + n_perp, mean_photon_number(&gain), 1e-8));
        }
    }

    #[test]
    fn gain_rejects_negative() {
        assert!(Gain::new(-0.1).is_err());
        assert!(Gain::new(f64::NAN).is_err());
    }
}
