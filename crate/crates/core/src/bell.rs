//! Visibility, antivisibility, correlations and the CHSH parameter of the
//! micro–macro state
//!
//! ```text
//! |Ψ⟩ = (|1⟩|Φ̄⟩ − |1⊥⟩|Φ⟩)/√2
//! ```
//!
//! The state decomposes into photon-number sectors, and every quantity
//! below is a weight-averaged sum of per-sector values:
//! V = Σ_k w_k V_k, A = Σ_k w_k A_k.
//!
//! Orientation: the four-term CHSH combination at the standard settings
//! (α = 0, α′ = π/2, β′ = −β) equals −2(V + A). Reports carry the literal
//! four-term value and the oriented `B = 2(V + A)`, whose maximum is positive.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::fockspace::{
    sector_state, sector_state_capped, Flavor, Gain, SectorState, Truncation, WeightVector, MAX_SECTOR_LIMIT,
};
use crate::polarization::{analyzer_ladder, sign_difference_observable, DiagonalObservable, RotationLadder};
use crate::preselect::{apply_filter, preselected_weights, preselected_weights_upto, success_probability, FilterSpec};

/// Tolerance on the agreement between the four-term and two-term forms.
pub const FORM_AGREEMENT_TOL: f64 = 1e-10;

/// Measurement angles. α, α′ act on the single photon, β, β′ on the
/// amplified mode; θ is the preselection basis and is fixed to 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellSettings {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub theta: f64,
}

impl BellSettings {
    /// α = 0, α′ = π/2, β′ = −β.
    pub fn standard(beta: f64) -> Self {
        Self {
            alpha: 0.0,
            alpha_prime: FRAC_PI_2,
            beta,
            beta_prime: -beta,
            theta: 0.0,
        }
    }

    pub fn new(alpha: f64, alpha_prime: f64, beta: f64, beta_prime: f64) -> Result<Self> {
        let s = Self {
            alpha,
            alpha_prime,
            beta,
            beta_prime,
            theta: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("alpha'", self.alpha_prime),
            ("beta", self.beta),
            ("beta'", self.beta_prime),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        if self.theta != 0.0 {
            return Err(Error::InvalidParameter(
                "only the θ = 0 preselection basis is supported".into(),
            ));
        }
        Ok(())
    }

    pub fn is_standard(&self) -> bool {
        self.alpha == 0.0 && self.alpha_prime == FRAC_PI_2 && self.beta_prime == -self.beta
    }
}

/// One sector's contribution at the analyzer angle `β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorResult {
    pub k: usize,
    pub v: f64,
    pub a: f64,
    /// 2(V_k + A_k).
    pub b: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BellReport {
    pub gain: Gain,
    pub filter: FilterSpec,
    pub settings: BellSettings,
    /// Analyzer angle β at which V, A and the sector table are reported.
    pub angle_used: f64,
    pub per_sector: Vec<SectorResult>,
    pub v_total: f64,
    pub a_total: f64,
    /// Oriented Bell parameter, −(four-term combination).
    pub b_total: f64,
    /// E(α,β) + E(α,β′) + E(α′,β) − E(α′,β′) as written.
    pub b_four_term: f64,
    pub b_abs: f64,
    /// Probability mass of the sectors beyond the truncation.
    pub tail_mass: f64,
    /// Probability that the filter passes the amplified state.
    pub success_probability: f64,
}

/// E(α, β) = −cos α · V(β) − sin α · A(β).
pub fn correlation_from(alpha: f64, v: f64, a: f64) -> f64 {
    -alpha.cos() * v - alpha.sin() * a
}

/// Filtered sector pair (|Φ_k^P⟩, |Φ̄_k^P⟩) with its weight.
#[derive(Clone, Debug)]
struct SectorPair {
    k: usize,
    phi: SectorState,
    bar: SectorState,
    weight: f64,
}

/// Sector states and weights for one (gain, filter, truncation), reusable
/// across analyzer angles.
#[derive(Clone, Debug)]
pub struct BellModel {
    gain: Gain,
    filter: FilterSpec,
    sectors: Vec<SectorPair>,
    k_max: usize,
    tail_mass: f64,
    success: f64,
    observable: DiagonalObservable,
}

impl BellModel {
    pub fn new(gain: Gain, filter: FilterSpec, trunc: &Truncation) -> Result<Self> {
        let weights = preselected_weights(&gain, &filter, trunc)?;
        Self::from_weights(gain, filter, &weights, trunc.epsilon(), trunc.max_sector())
    }

    /// Model restricted to sectors `0..=k_max` regardless of tail mass.
    pub fn with_sector_range(gain: Gain, filter: FilterSpec, k_max: usize, epsilon: f64) -> Result<Self> {
        let weights = preselected_weights_upto(&gain, &filter, k_max, epsilon)?;
        Self::from_weights(gain, filter, &weights, epsilon, MAX_SECTOR_LIMIT)
    }

    fn from_weights(gain: Gain, filter: FilterSpec, weights: &WeightVector, epsilon: f64, cap: usize) -> Result<Self> {
        let mut sectors = Vec::with_capacity(weights.weights().len());
        for (k, &weight) in weights.weights().iter().enumerate() {
            let phi = apply_filter(&sector_state_capped(k, Flavor::Phi, cap)?, &filter);
            let bar = apply_filter(&sector_state_capped(k, Flavor::PhiBar, cap)?, &filter);
            if phi.is_empty() || bar.is_empty() {
                continue;
            }
            sectors.push(SectorPair { k, phi, bar, weight });
        }
        let success = success_probability(&gain, &filter, epsilon)?;
        Ok(Self {
            gain,
            filter,
            sectors,
            k_max: weights.k_max(),
            tail_mass: weights.tail_mass(),
            success,
            observable: sign_difference_observable(),
        })
    }

    pub fn gain(&self) -> Gain {
        self.gain
    }

    pub fn filter(&self) -> FilterSpec {
        self.filter
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn success_probability(&self) -> f64 {
        self.success
    }

    /// Per-sector (V_k, A_k) at analyzer angle `beta`, in increasing k.
    pub fn sector_values(&self, beta: f64) -> Vec<SectorResult> {
        let mut ladder = analyzer_ladder(beta);
        self.sectors
            .iter()
            .map(|p| {
                let (v, a) = sector_va(&mut ladder, &p.phi, &p.bar, &self.observable);
                SectorResult {
                    k: p.k,
                    v,
                    a,
                    b: 2.0 * (v + a),
                    weight: p.weight,
                }
            })
            .collect()
    }

    /// Weighted totals (V, A) at `beta`.
    pub fn totals(&self, beta: f64) -> (f64, f64) {
        totals_of(&self.sector_values(beta))
    }

    /// V(β) + A(β).
    pub fn objective(&self, beta: f64) -> f64 {
        let (v, a) = self.totals(beta);
        v + a
    }

    pub fn correlation(&self, alpha: f64, beta: f64) -> f64 {
        let (v, a) = self.totals(beta);
        correlation_from(alpha, v, a)
    }

    pub fn report(&self, settings: &BellSettings) -> Result<BellReport> {
        settings.validate()?;
        let at_beta = self.sector_values(settings.beta);
        let at_beta_p = self.sector_values(settings.beta_prime);
        let (v, a) = totals_of(&at_beta);
        let (vp, ap) = totals_of(&at_beta_p);
        let four = four_term(settings, (v, a), (vp, ap));
        let b_total = -four;
        if settings.is_standard() {
            let two_term = 2.0 * (v + a);
            if (two_term - b_total).abs() > FORM_AGREEMENT_TOL {
                return Err(Error::Inconsistent(format!(
                    "two-term B = {two_term} disagrees with four-term B = {b_total}"
                )));
            }
            for (s, sp) in at_beta.iter().zip(&at_beta_p) {
                let b4 = -four_term(settings, (s.v, s.a), (sp.v, sp.a));
                if (b4 - s.b).abs() > FORM_AGREEMENT_TOL {
                    return Err(Error::Inconsistent(format!(
                        "sector {}: two-term B_k = {} disagrees with four-term B_k = {b4}",
                        s.k, s.b
                    )));
                }
            }
        }
        Ok(BellReport {
            gain: self.gain,
            filter: self.filter,
            settings: *settings,
            angle_used: settings.beta,
            per_sector: at_beta,
            v_total: v,
            a_total: a,
            b_total,
            b_four_term: four,
            b_abs: four.abs(),
            tail_mass: self.tail_mass,
            success_probability: self.success,
        })
    }
}

fn totals_of(rows: &[SectorResult]) -> (f64, f64) {
    rows.iter()
        .fold((0.0, 0.0), |(v, a), s| (v + s.weight * s.v, a + s.weight * s.a))
}

fn four_term(s: &BellSettings, (v, a): (f64, f64), (vp, ap): (f64, f64)) -> f64 {
    correlation_from(s.alpha, v, a) + correlation_from(s.alpha, vp, ap) + correlation_from(s.alpha_prime, v, a)
        - correlation_from(s.alpha_prime, vp, ap)
}

/// Advances the ladder to the sector's level and evaluates
/// (⟨Φ|O|Φ⟩, ⟨Φ̄|O|Φ⟩).
fn sector_va(
    ladder: &mut RotationLadder,
    phi: &SectorState,
    bar: &SectorState,
    obs: &DiagonalObservable,
) -> (f64, f64) {
    ladder.advance_to(phi.n_total());
    let rp = ladder.apply(phi.amplitudes());
    let rb = ladder.apply(bar.amplitudes());
    (obs.bilinear(&rp, &rp), obs.bilinear(&rb, &rp))
}

fn filtered_pair(k: usize, filter: &FilterSpec) -> Result<(SectorState, SectorState)> {
    let phi = apply_filter(&sector_state(k, Flavor::Phi)?, filter);
    let bar = apply_filter(&sector_state(k, Flavor::PhiBar)?, filter);
    if phi.is_empty() || bar.is_empty() {
        return Err(Error::UndefinedVisibility(k));
    }
    Ok((phi, bar))
}

fn sector_pair_values(k: usize, angle: f64, filter: &FilterSpec) -> Result<(f64, f64)> {
    let (phi, bar) = filtered_pair(k, filter)?;
    let mut ladder = analyzer_ladder(angle);
    Ok(sector_va(&mut ladder, &phi, &bar, &sign_difference_observable()))
}

/// V_k(angle) = ⟨Φ_k^P| O(angle) |Φ_k^P⟩.
pub fn sector_visibility(k: usize, angle: f64, filter: &FilterSpec) -> Result<f64> {
    Ok(sector_pair_values(k, angle, filter)?.0)
}

/// A_k(angle) = ⟨Φ̄_k^P| O(angle) |Φ_k^P⟩.
pub fn sector_antivisibility(k: usize, angle: f64, filter: &FilterSpec) -> Result<f64> {
    Ok(sector_pair_values(k, angle, filter)?.1)
}

/// B_k = 2(V_k + A_k), checked against the four-term form at standard settings.
pub fn sector_bell(k: usize, angle: f64, filter: &FilterSpec) -> Result<f64> {
    let (v, a) = sector_pair_values(k, angle, filter)?;
    let (vp, ap) = sector_pair_values(k, -angle, filter)?;
    let b = 2.0 * (v + a);
    let b4 = -four_term(&BellSettings::standard(angle), (v, a), (vp, ap));
    if (b - b4).abs() > 1e-12 {
        return Err(Error::Inconsistent(format!(
            "sector {k}: two-term B_k = {b} disagrees with four-term B_k = {b4}"
        )));
    }
    Ok(b)
}

/// E(α, β) with weight-summed V and A.
pub fn correlation(alpha: f64, beta: f64, gain: Gain, filter: FilterSpec, trunc: &Truncation) -> Result<f64> {
    Ok(BellModel::new(gain, filter, trunc)?.correlation(alpha, beta))
}

pub fn bell_parameter(settings: &BellSettings, gain: Gain, filter: FilterSpec, trunc: &Truncation) -> Result<BellReport> {
    BellModel::new(gain, filter, trunc)?.report(settings)
}
