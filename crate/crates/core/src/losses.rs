//! Photon loss on the corner-filtered micro–macro state.
//!
//! With the tightest corner filter every sector of the amplified state
//! collapses to its extremal component, giving the N11N superposition
//!
//! ```text
//! |Ψ_P⟩ = Σ_k c_k (|1⟩|0, N_⊥⟩ − |1⊥⟩|N, 0_⊥⟩)/√2,   N = 2k+1,
//! ```
//!
//! with c_k² the filtered sector weights. Each optical mode then passes
//! through an independent pure-loss channel (a beam splitter to an
//! unobserved environment); λ_A acts on both polarizations of the single
//! photon, λ_B on both polarizations of the amplified mode. All amplitudes
//! are real, so the density matrix is real symmetric and stored sparsely.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fockspace::{Gain, Truncation};
use crate::numeric::ln_binomial;
use crate::optimize::{maximize_scalar, GRID_POINTS};
use crate::polarization::{analyzer_ladder, sign_difference_observable, ExtremalLadder};
use crate::preselect::{preselected_weights, FilterSpec};

/// State of the single-photon (micro) side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Micro {
    Vacuum,
    /// One photon in the reference polarization.
    Ref,
    /// One photon in the orthogonal polarization.
    Perp,
}

impl Micro {
    fn index(self) -> usize {
        match self {
            Micro::Vacuum => 0,
            Micro::Ref => 1,
            Micro::Perp => 2,
        }
    }
}

/// Joint basis vector |micro⟩ ⊗ |n_ref, n_perp⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointKet {
    pub micro: Micro,
    pub n_ref: usize,
    pub n_perp: usize,
}

impl JointKet {
    pub fn new(micro: Micro, n_ref: usize, n_perp: usize) -> Self {
        Self { micro, n_ref, n_perp }
    }

    pub fn macro_photons(&self) -> usize {
        self.n_ref + self.n_perp
    }
}

/// A real pure state in the joint basis.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPureState {
    components: Vec<(JointKet, f64)>,
}

impl JointPureState {
    pub fn components(&self) -> &[(JointKet, f64)] {
        &self.components
    }

    pub fn amplitude(&self, ket: &JointKet) -> f64 {
        self.components
            .iter()
            .find(|(k, _)| k == ket)
            .map(|(_, a)| *a)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|(_, a)| a * a).sum::<f64>().sqrt()
    }

    pub fn max_macro_photons(&self) -> usize {
        self.components.iter().map(|(k, _)| k.macro_photons()).max().unwrap_or(0)
    }
}

/// The corner(0)-filtered joint state, truncated where the filtered sector
/// tail drops below the tolerance and renormalized.
pub fn n11n_state(gain: &Gain, trunc: &Truncation) -> Result<JointPureState> {
    let w = preselected_weights(gain, &FilterSpec::Corner(0), trunc)?;
    let kept: f64 = w.weights().iter().sum();
    let mut components = Vec::with_capacity(2 * w.weights().len());
    let inv = (2.0 * kept).sqrt().recip();
    for (k, &wk) in w.weights().iter().enumerate() {
        let n = 2 * k + 1;
        let c = wk.sqrt() * inv;
        components.push((JointKet::new(Micro::Ref, 0, n), c));
        components.push((JointKet::new(Micro::Perp, n, 0), -c));
    }
    Ok(JointPureState { components })
}

/// Loss fractions on the micro side (λ_A) and the macro side (λ_B).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    lambda_a: f64,
    lambda_b: f64,
}

impl LossParams {
    pub fn new(lambda_a: f64, lambda_b: f64) -> Result<Self> {
        for (name, l) in [("lambda_a", lambda_a), ("lambda_b", lambda_b)] {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {l}")));
            }
        }
        Ok(Self { lambda_a, lambda_b })
    }

    pub fn lossless() -> Self {
        Self {
            lambda_a: 0.0,
            lambda_b: 0.0,
        }
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }
}

/// How the micro-side analyzer scores an empty (vacuum) outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VacuumConvention {
    /// The single-photon observable has no vacuum component: contributes 0.
    #[default]
    OperatorAsWritten,
    /// No click is recorded as outcome −1.
    AssignMinusOne,
}

impl VacuumConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            VacuumConvention::OperatorAsWritten => "operator-as-written",
            VacuumConvention::AssignMinusOne => "assign-minus-one",
        }
    }

    fn vacuum_value(&self) -> f64 {
        match self {
            VacuumConvention::OperatorAsWritten => 0.0,
            VacuumConvention::AssignMinusOne => -1.0,
        }
    }
}

impl fmt::Display for VacuumConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VacuumConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operator-as-written" | "operator" => Ok(VacuumConvention::OperatorAsWritten),
            "assign-minus-one" | "minus-one" => Ok(VacuumConvention::AssignMinusOne),
            _ => Err(Error::InvalidParameter(format!("unknown vacuum convention '{s}'"))),
        }
    }
}

type Entry = ((JointKet, JointKet), f64);

/// Real symmetric density matrix on {vac, 1, 1⊥} ⊗ two-mode Fock space,
/// with at most `cutoff` photons in the macro modes.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoModeDensityMatrix {
    cutoff: usize,
    /// Sorted by key, no duplicate keys, no explicit zeros.
    entries: Vec<Entry>,
}

impl TwoModeDensityMatrix {
    pub fn from_pure(state: &JointPureState, cutoff: usize) -> Result<Self> {
        let needed = state.max_macro_photons();
        if needed > cutoff {
            return Err(Error::Capacity {
                what: "macro photon number",
                requested: needed,
                limit: cutoff,
            });
        }
        let mut entries = Vec::with_capacity(state.components.len().pow(2));
        for &(ket, a) in &state.components {
            for &(bra, b) in &state.components {
                entries.push(((ket, bra), a * b));
            }
        }
        Ok(Self {
            cutoff,
            entries: merge(entries),
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ket: &JointKet, bra: &JointKet) -> f64 {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(&(*ket, *bra)))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.entries.iter().filter(|((k, b), _)| k == b).map(|(_, v)| v).sum()
    }

    /// max |ρ_ij − ρ_ji|.
    pub fn hermiticity_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|((k, b), v)| (v - self.get(b, k)).abs())
            .fold(0.0, f64::max)
    }

    /// Distinct basis vectors carrying any entry, sorted.
    pub fn support(&self) -> Vec<JointKet> {
        let mut s: Vec<JointKet> = self.entries.iter().flat_map(|((k, b), _)| [*k, *b]).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Sorts by key and sums duplicates in a fixed order.
fn merge(mut entries: Vec<Entry>) -> Vec<Entry> {
    entries.sort_by_key(|a| a.0);
    let mut out: Vec<Entry> = Vec::with_capacity(entries.len());
    for (key, v) in entries {
        match out.last_mut() {
            Some((k, acc)) if *k == key => *acc += v,
            _ => out.push((key, v)),
        }
    }
    out.retain(|(_, v)| *v != 0.0);
    out
}

/// Terms of the pure-loss channel acting on |n⟩⟨n′| of one mode:
/// Σ_l √(C(n,l) C(n′,l)) η^{(n+n′)/2 − l} λ^l |n−l⟩⟨n′−l|.
fn loss_terms(n: usize, np: usize, lambda: f64) -> Vec<(usize, usize, f64)> {
    if lambda == 0.0 {
        return vec![(n, np, 1.0)];
    }
    let eta = 1.0 - lambda;
    if eta == 0.0 {
        return if n == np { vec![(0, 0, 1.0)] } else { vec![] };
    }
    let (ln_eta, ln_lambda) = (eta.ln(), lambda.ln());
    (0..=n.min(np))
        .map(|l| {
            let ln = 0.5 * (ln_binomial(n, l) + ln_binomial(np, l))
                + ((n + np) as f64 / 2.0 - l as f64) * ln_eta
                + l as f64 * ln_lambda;
            (n - l, np - l, ln.exp())
        })
        .collect()
}

fn micro_occupation(m: Micro) -> (usize, usize) {
    match m {
        Micro::Vacuum => (0, 0),
        Micro::Ref => (1, 0),
        Micro::Perp => (0, 1),
    }
}

fn micro_from(h: usize, v: usize) -> Micro {
    match (h, v) {
        (0, 0) => Micro::Vacuum,
        (1, 0) => Micro::Ref,
        (0, 1) => Micro::Perp,
        _ => unreachable!("loss never raises the micro occupation"),
    }
}

#[derive(Clone, Copy)]
enum Mode {
    MicroRef,
    MicroPerp,
    MacroRef,
    MacroPerp,
}

fn occupation(k: &JointKet, mode: Mode) -> usize {
    match mode {
        Mode::MicroRef => micro_occupation(k.micro).0,
        Mode::MicroPerp => micro_occupation(k.micro).1,
        Mode::MacroRef => k.n_ref,
        Mode::MacroPerp => k.n_perp,
    }
}

fn with_occupation(k: &JointKet, mode: Mode, n: usize) -> JointKet {
    let (h, v) = micro_occupation(k.micro);
    match mode {
        Mode::MicroRef => JointKet::new(micro_from(n, v), k.n_ref, k.n_perp),
        Mode::MicroPerp => JointKet::new(micro_from(h, n), k.n_ref, k.n_perp),
        Mode::MacroRef => JointKet::new(k.micro, n, k.n_perp),
        Mode::MacroPerp => JointKet::new(k.micro, k.n_ref, n),
    }
}

fn lose_on_mode(rho: &TwoModeDensityMatrix, mode: Mode, lambda: f64) -> TwoModeDensityMatrix {
    if lambda == 0.0 {
        return rho.clone();
    }
    let mut out = Vec::with_capacity(rho.entries.len() * 2);
    for &((ket, bra), v) in &rho.entries {
        for (n, np, c) in loss_terms(occupation(&ket, mode), occupation(&bra, mode), lambda) {
            out.push(((with_occupation(&ket, mode, n), with_occupation(&bra, mode, np)), v * c));
        }
    }
    TwoModeDensityMatrix {
        cutoff: rho.cutoff,
        entries: merge(out),
    }
}

/// Independent pure-loss channels on all four optical modes.
pub fn apply_loss(rho: &TwoModeDensityMatrix, params: &LossParams) -> Result<TwoModeDensityMatrix> {
    let occupied = rho
        .entries
        .iter()
        .map(|((k, b), _)| k.macro_photons().max(b.macro_photons()))
        .max()
        .unwrap_or(0);
    if occupied > rho.cutoff {
        return Err(Error::Capacity {
            what: "macro photon number",
            requested: occupied,
            limit: rho.cutoff,
        });
    }
    let mut out = lose_on_mode(rho, Mode::MicroRef, params.lambda_a);
    out = lose_on_mode(&out, Mode::MicroPerp, params.lambda_a);
    out = lose_on_mode(&out, Mode::MacroRef, params.lambda_b);
    out = lose_on_mode(&out, Mode::MacroPerp, params.lambda_b);
    Ok(out)
}

/// ρ entries that the block-diagonal macro observable can see, grouped by
/// macro photon number.
#[derive(Clone, Debug)]
pub struct CorrelationKernel {
    /// (N, micro ket, micro bra, m ket, m bra, value), sorted by N.
    terms: Vec<(usize, usize, usize, usize, usize, f64)>,
    convention: VacuumConvention,
    extremal_only: bool,
}

impl CorrelationKernel {
    pub fn new(rho: &TwoModeDensityMatrix, convention: VacuumConvention) -> Self {
        let mut terms: Vec<_> = rho
            .entries
            .iter()
            .filter(|((k, b), _)| k.macro_photons() == b.macro_photons())
            .map(|((k, b), v)| (k.macro_photons(), k.micro.index(), b.micro.index(), k.n_perp, b.n_perp, *v))
            .collect();
        terms.sort_by_key(|a| (a.0, a.1, a.2, a.3, a.4));
        let extremal_only = terms
            .iter()
            .all(|&(n, _, _, m, mp, _)| (m == 0 || m == n) && (mp == 0 || mp == n));
        Self {
            terms,
            convention,
            extremal_only,
        }
    }

    /// T[μ][μ′] = Σ ρ[(μ, n), (μ′, n′)] ⟨n′|O^(M)(β)|n⟩.
    fn macro_traces(&self, beta: f64) -> [[f64; 3]; 3] {
        if self.extremal_only {
            self.macro_traces_extremal(beta)
        } else {
            self.macro_traces_ladder(beta)
        }
    }

    fn macro_traces_ladder(&self, beta: f64) -> [[f64; 3]; 3] {
        let obs = sign_difference_observable();
        let mut ladder = analyzer_ladder(beta);
        let mut t = [[0.0; 3]; 3];
        for &(n, mu, mup, m, mp, v) in &self.terms {
            ladder.advance_to(n);
            let r = ladder.current();
            let d = n + 1;
            let mut o = 0.0;
            for w in 0..d {
                o += obs.value(n - w, w) * r[w * d + m] * r[w * d + mp];
            }
            t[mu][mup] += v * o;
        }
        t
    }

    /// Same contraction when every macro ket is |N,0⟩ or |0,N⟩: only the two
    /// extremal columns of each rotation are needed.
    fn macro_traces_extremal(&self, beta: f64) -> [[f64; 3]; 3] {
        let obs = sign_difference_observable();
        let mut t = [[0.0; 3]; 3];
        let mut ladder = ExtremalLadder::new(-beta);
        for &(n, mu, mup, m, mp, v) in &self.terms {
            ladder.advance_to(n);
            let col = |i: usize| if i == 0 { ladder.first() } else { ladder.last() };
            let (a, b) = (col(m), col(mp));
            let o: f64 = (0..=n).map(|w| obs.value(n - w, w) * a[w] * b[w]).sum();
            t[mu][mup] += v * o;
        }
        t
    }

    /// Evaluates with the general rotation ladder even when the fast path applies.
    pub fn correlation_via_ladder(&self, alpha: f64, beta: f64) -> f64 {
        contract(&self.macro_traces_ladder(beta), alpha, self.convention)
    }

    /// E(α, β) = Tr[ρ O^(m)(α) ⊗ O^(M)(β)].
    pub fn correlation(&self, alpha: f64, beta: f64) -> f64 {
        let t = self.macro_traces(beta);
        contract(&t, alpha, self.convention)
    }

    /// Oriented CHSH value −[E(0,β) + E(0,−β) + E(π/2,β) − E(π/2,−β)] and
    /// the four correlations in that order.
    pub fn standard_bell(&self, beta: f64) -> (f64, [f64; 4]) {
        let t = self.macro_traces(beta);
        let tp = self.macro_traces(-beta);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let e = [
            contract(&t, 0.0, self.convention),
            contract(&tp, 0.0, self.convention),
            contract(&t, half_pi, self.convention),
            contract(&tp, half_pi, self.convention),
        ];
        (-(e[0] + e[1] + e[2] - e[3]), e)
    }
}

/// Σ_{μ,μ′} O^(m)(α)[μ′][μ] T[μ][μ′] over the basis (vac, 1, 1⊥).
fn contract(t: &[[f64; 3]; 3], alpha: f64, convention: VacuumConvention) -> f64 {
    let (c, s) = (alpha.cos(), alpha.sin());
    let om = [[convention.vacuum_value(), 0.0, 0.0], [0.0, c, s], [0.0, s, -c]];
    let mut e = 0.0;
    for mu in 0..3 {
        for mup in 0..3 {
            e += om[mup][mu] * t[mu][mup];
        }
    }
    e
}

/// How the analyzer angle is chosen at each loss point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaPolicy {
    /// Maximize B over β at every point.
    Reoptimize,
    /// Use this angle everywhere.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub gain: f64,
    pub params: LossParams,
    pub convention: VacuumConvention,
    pub beta_used: f64,
    /// Oriented Bell parameter.
    pub b: f64,
    /// E(0,β), E(0,β′), E(π/2,β), E(π/2,β′) with β′ = −β.
    pub correlations: [f64; 4],
    pub tail_mass: f64,
}

/// Lossless density matrix of the filtered state, shared across loss points.
#[derive(Clone, Debug)]
pub struct LossModel {
    gain: Gain,
    rho: TwoModeDensityMatrix,
    tail_mass: f64,
    /// Analyzer angle maximizing the lossless B.
    lossless_beta: f64,
}

impl LossModel {
    pub fn new(gain: Gain, trunc: &Truncation) -> Result<Self> {
        let state = n11n_state(&gain, trunc)?;
        let w = preselected_weights(&gain, &FilterSpec::Corner(0), trunc)?;
        let rho = TwoModeDensityMatrix::from_pure(&state, state.max_macro_photons())?;
        let kernel = CorrelationKernel::new(&rho, VacuumConvention::OperatorAsWritten);
        let (lossless_beta, _) = maximize_scalar(
            |b| kernel.standard_bell(b).0,
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            GRID_POINTS,
        )?;
        Ok(Self {
            gain,
            rho,
            tail_mass: w.tail_mass(),
            lossless_beta,
        })
    }

    pub fn density_matrix(&self) -> &TwoModeDensityMatrix {
        &self.rho
    }

    pub fn lossless_beta(&self) -> f64 {
        self.lossless_beta
    }

    pub fn evaluate(&self, params: LossParams, convention: VacuumConvention, policy: BetaPolicy) -> Result<LossReport> {
        let rho = apply_loss(&self.rho, &params)?;
        let kernel = CorrelationKernel::new(&rho, convention);
        let beta = match policy {
            BetaPolicy::Fixed(b) => b,
            BetaPolicy::Reoptimize => {
                match maximize_scalar(
                    |b| kernel.standard_bell(b).0,
                    -std::f64::consts::FRAC_PI_2,
                    std::f64::consts::FRAC_PI_2,
                    GRID_POINTS,
                ) {
                    Ok((b, _)) => b,
                    Err(Error::NoOptimum) => self.lossless_beta,
                    Err(e) => return Err(e),
                }
            }
        };
        let (b, correlations) = kernel.standard_bell(beta);
        Ok(LossReport {
            gain: self.gain.value(),
            params,
            convention,
            beta_used: beta,
            b,
            correlations,
            tail_mass: self.tail_mass,
        })
    }
}

pub fn bell_with_losses(
    gain: Gain,
    params: LossParams,
    convention: VacuumConvention,
    trunc: &Truncation,
    policy: BetaPolicy,
) -> Result<LossReport> {
    LossModel::new(gain, trunc)?.evaluate(params, convention, policy)
}

/// Evaluates every (λ_A, λ_B) pair, λ_A outermost, in parallel with ordered output.
pub fn loss_grid(
    model: &LossModel,
    lambdas_a: &[f64],
    lambdas_b: &[f64],
    convention: VacuumConvention,
    policy: BetaPolicy,
) -> Result<Vec<LossReport>> {
    let pairs: Vec<(f64, f64)> = lambdas_a
        .iter()
        .flat_map(|&a| lambdas_b.iter().map(move |&b| (a, b)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(a, b)| model.evaluate(LossParams::new(a, b)?, convention, policy))
        .collect()
}
