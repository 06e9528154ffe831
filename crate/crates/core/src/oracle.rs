//! Reference evaluators built on exact rational arithmetic.
//!
//! Combinatorial constants, squared amplitudes and normalizations are exact
//! [`BigRational`]s. Square roots and trigonometric values are dyadic
//! rationals accurate to 2^-[`PRECISION_BITS`] (≈ 77 decimal digits), so
//! every result is correct far beyond double precision before the final
//! conversion to `f64`.
//!
//! These routines deliberately share no code path with the production
//! modules apart from the filter predicate: rotations are expanded as
//! explicit multinomials, and the closed-form sector sums are transcribed
//! term by term. Sizes are capped at [`MAX_ORACLE_PHOTONS`] photons.
//!
//! The closed-form sums use the rotated basis a_β† = c a† + s a⊥†,
//! a_β⊥† = s a† − c a⊥† with (c, s) = (cos β/2, sin β/2); the production
//! analyzer at angle β corresponds to these sums evaluated at −β.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::fockspace::Flavor;
use crate::preselect::FilterSpec;

pub const PRECISION_BITS: u32 = 256;
/// Largest sector handled (N = 11, k = 5).
pub const MAX_ORACLE_PHOTONS: usize = 11;

fn big(n: u64) -> BigInt {
    BigInt::from(n)
}

fn factorial(n: usize) -> BigInt {
    (1..=n as u64).fold(BigInt::one(), |acc, i| acc * big(i))
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn rat(n: BigInt) -> BigRational {
    BigRational::from_integer(n)
}

/// Exact rational value of an `f64`.
pub fn from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn scale() -> BigInt {
    BigInt::one() << PRECISION_BITS
}

/// Rounds to the nearest multiple of 2^-PRECISION_BITS.
fn round(x: &BigRational) -> BigRational {
    let s = scale();
    let scaled = x * rat(s.clone());
    let r = (scaled + BigRational::new(BigInt::one(), big(2))).floor().to_integer();
    BigRational::new(r, s)
}

/// √x for x ≥ 0, truncated to 2^-PRECISION_BITS.
pub fn sqrt(x: &BigRational) -> BigRational {
    assert!(!x.is_negative(), "square root of a negative number");
    let s = scale();
    let n = (x.numer() * &s * &s) / x.denom();
    let root = n.to_biguint().expect("non-negative").sqrt();
    BigRational::new(BigInt::from(root), s)
}

/// (cos x, sin x) from Taylor series in exact arithmetic, rounded to the
/// working precision. Arguments are reduced to |x| ≤ π/4 by halving.
pub fn cos_sin(x: f64) -> (BigRational, BigRational) {
    let mut halvings = 0;
    let mut y = from_f64(x);
    let quarter = BigRational::new(big(3), big(4));
    while y.abs() > quarter {
        y /= rat(big(2));
        halvings += 1;
    }
    let eps = BigRational::new(BigInt::one(), scale() << 16u32);
    let (mut c, mut s) = (BigRational::zero(), BigRational::zero());
    let mut term = BigRational::one();
    let mut n = 0u64;
    loop {
        match n % 4 {
            0 => c += &term,
            1 => s += &term,
            2 => c -= &term,
            _ => s -= &term,
        }
        n += 1;
        term = round(&(&term * &y / rat(big(n))));
        if term.abs() < eps {
            break;
        }
    }
    for _ in 0..halvings {
        let (c2, s2) = (&c * &c - &s * &s, rat(big(2)) * &s * &c);
        c = round(&c2);
        s = round(&s2);
    }
    (c, s)
}

/// Powers x^0 ..= x^n, rounded.
fn powers(x: &BigRational, n: usize) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(BigRational::one());
    for i in 1..=n {
        let next = round(&(&out[i - 1] * x));
        out.push(next);
    }
    out
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_ORACLE_PHOTONS {
        return Err(Error::Capacity {
            what: "oracle photon number",
            requested: n,
            limit: MAX_ORACLE_PHOTONS,
        });
    }
    Ok(())
}

/// Squared norm N_k^P of the filtered, unnormalized sector, exactly.
pub fn filtered_norm_exact(k: usize, flavor: Flavor, filter: &FilterSpec) -> BigInt {
    let n = 2 * k + 1;
    (0..=k)
        .filter_map(|j| {
            let (m, term) = exact_term(k, flavor, j);
            filter.accepts_component(n, m).then(|| {
                let b = binomial(k, j);
                &b * &b * term
            })
        })
        .fold(BigInt::zero(), |a, b| a + b)
}

/// (⊥ occupation, product of factorials under the square root) for term j.
fn exact_term(k: usize, flavor: Flavor, j: usize) -> (usize, BigInt) {
    match flavor {
        Flavor::Phi => (2 * k - 2 * j, factorial(2 * j + 1) * factorial(2 * k - 2 * j)),
        Flavor::PhiBar => (2 * k + 1 - 2 * j, factorial(2 * j) * factorial(2 * k + 1 - 2 * j)),
    }
}

/// Exact squared amplitudes of the normalized, filtered sector, indexed by
/// ⊥ occupation. All zero when nothing survives.
pub fn sector_probabilities(k: usize, flavor: Flavor, filter: &FilterSpec) -> Vec<BigRational> {
    let n = 2 * k + 1;
    let norm = filtered_norm_exact(k, flavor, filter);
    let mut out = vec![BigRational::zero(); n + 1];
    if norm.is_zero() {
        return out;
    }
    for j in 0..=k {
        let (m, term) = exact_term(k, flavor, j);
        if filter.accepts_component(n, m) {
            let b = binomial(k, j);
            out[m] = BigRational::new(&b * &b * term, norm.clone());
        }
    }
    out
}

/// Amplitudes (all non-negative) of the normalized, filtered sector.
pub fn sector_amplitudes(k: usize, flavor: Flavor, filter: &FilterSpec) -> Vec<BigRational> {
    sector_probabilities(k, flavor, filter).iter().map(sqrt).collect()
}

/// Real matrix on one N-photon sector, indexed by ⊥ occupation.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSectorOperator {
    n_total: usize,
    entries: Vec<BigRational>,
}

impl DenseSectorOperator {
    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn dim(&self) -> usize {
        self.n_total + 1
    }

    pub fn get(&self, row: usize, col: usize) -> &BigRational {
        &self.entries[row * self.dim() + col]
    }

    pub fn trace(&self) -> BigRational {
        (0..self.dim()).fold(BigRational::zero(), |acc, i| acc + self.get(i, i))
    }

    /// ⟨bra| O |ket⟩.
    pub fn expectation(&self, bra: &[BigRational], ket: &[BigRational]) -> Result<BigRational> {
        let d = self.dim();
        if bra.len() != d || ket.len() != d {
            return Err(Error::DimensionMismatch(bra.len().max(ket.len()), d));
        }
        let mut acc = BigRational::zero();
        for (i, b) in bra.iter().enumerate() {
            if b.is_zero() {
                continue;
            }
            for (j, k) in ket.iter().enumerate() {
                if !k.is_zero() {
                    acc += b * self.get(i, j) * k;
                }
            }
        }
        Ok(acc)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(to_f64).collect()
    }
}

/// The analyzer basis vector |u, w⟩ at `angle`, expanded as
/// (c a† + s a⊥†)^u (−s a† + c a⊥†)^w / √(u! w!) |0⟩ with
/// (c, s) = (cos(−angle/2), sin(−angle/2)), in reference-basis coordinates.
fn analyzer_vector(u: usize, w: usize, c: &[BigRational], s: &[BigRational], neg_s: &[BigRational]) -> Vec<BigRational> {
    let n = u + w;
    // coefficient of a†^{n-q} a⊥†^{q}
    let mut coef = vec![BigRational::zero(); n + 1];
    for i in 0..=u {
        // i factors of a⊥† from the first bracket
        let first = rat(binomial(u, i)) * &c[u - i] * &s[i];
        for l in 0..=w {
            // l factors of a⊥† from the second bracket
            let second = rat(binomial(w, l)) * &neg_s[w - l] * &c[l];
            coef[i + l] += &first * &second;
        }
    }
    let uw = rat(factorial(u) * factorial(w));
    coef.iter()
        .enumerate()
        .map(|(q, a)| {
            if a.is_zero() {
                return BigRational::zero();
            }
            let ratio = rat(factorial(n - q) * factorial(q)) / &uw;
            round(&(a * sqrt(&ratio)))
        })
        .collect()
}

/// O(angle) = Σ_{u+w=N} condition(u, w) |u, w⟩⟨u, w| in the analyzer basis,
/// built from explicit multinomial expansions.
pub fn dense_observable(n: usize, angle: f64, condition: fn(usize, usize) -> i32) -> Result<DenseSectorOperator> {
    guard(n)?;
    let (c, s) = cos_sin(-angle / 2.0);
    let neg = -s.clone();
    let (cp, sp, np) = (powers(&c, n), powers(&s, n), powers(&neg, n));
    let d = n + 1;
    let mut entries = vec![BigRational::zero(); d * d];
    for w in 0..=n {
        let u = n - w;
        let sign = condition(u, w);
        if sign == 0 {
            continue;
        }
        let v = analyzer_vector(u, w, &cp, &sp, &np);
        let sgn = rat(BigInt::from(sign));
        for i in 0..d {
            if v[i].is_zero() {
                continue;
            }
            for j in 0..d {
                entries[i * d + j] += &sgn * &v[i] * &v[j];
            }
        }
    }
    Ok(DenseSectorOperator { n_total: n, entries })
}

/// +1 if u ≥ w else −1.
pub fn sign_condition(u: usize, w: usize) -> i32 {
    if u >= w {
        1
    } else {
        -1
    }
}

/// (V_k, A_k) at `angle` for the filtered sector pair via the dense observable.
pub fn dense_visibility_pair(k: usize, angle: f64, filter: &FilterSpec) -> Result<(f64, f64)> {
    let n = 2 * k + 1;
    let op = dense_observable(n, angle, sign_condition)?;
    let phi = sector_amplitudes(k, Flavor::Phi, filter);
    let bar = sector_amplitudes(k, Flavor::PhiBar, filter);
    if phi.iter().all(|a| a.is_zero()) || bar.iter().all(|a| a.is_zero()) {
        return Err(Error::UndefinedVisibility(k));
    }
    Ok((to_f64(&op.expectation(&phi, &phi)?), to_f64(&op.expectation(&bar, &phi)?)))
}

/// Inner braced sum of the closed forms for one analyzer outcome (u, w):
/// Σ_j b_j f_j Σ_{m,n} C(u,m) C(w,n) (−1)^n c^{u−m} s^m s^{w−n} c^n δ_{q_j, m+n}.
fn braced_sum(
    k: usize,
    flavor: Flavor,
    filter: &FilterSpec,
    u: usize,
    w: usize,
    c: &[BigRational],
    s: &[BigRational],
) -> BigRational {
    let total = 2 * k + 1;
    let mut acc = BigRational::zero();
    for j in 0..=k {
        let (q, fact) = exact_term(k, flavor, j);
        // the filter sees σ = 2k+1 and Δ = (2k+1−q) − q
        if !filter.accepts(total, total as i64 - 2 * q as i64) {
            continue;
        }
        let weight = rat(binomial(k, j) * fact);
        let mut inner = BigRational::zero();
        for m in 0..=u.min(q) {
            let n = q - m;
            if n > w {
                continue;
            }
            let sign = if n % 2 == 1 { -BigRational::one() } else { BigRational::one() };
            inner += sign
                * rat(binomial(u, m) * binomial(w, n))
                * &c[u - m]
                * &s[m]
                * &s[w - n]
                * &c[n];
        }
        acc += weight * inner;
    }
    acc
}

fn closed_form_pair(k: usize, beta: f64, filter: &FilterSpec, normalization: &BigInt) -> Result<(f64, f64)> {
    let n = 2 * k + 1;
    guard(n)?;
    if normalization.is_zero() {
        return Err(Error::UndefinedVisibility(k));
    }
    let (c, s) = cos_sin(beta / 2.0);
    let (cp, sp) = (powers(&c, n), powers(&s, n));
    let mut v = BigRational::zero();
    let mut a = BigRational::zero();
    for u in 0..=n {
        let w = n - u;
        let sign = if u >= w { BigRational::one() } else { -BigRational::one() };
        let den = rat(factorial(u) * factorial(w));
        let phi = braced_sum(k, Flavor::Phi, filter, u, w, &cp, &sp);
        let bar = braced_sum(k, Flavor::PhiBar, filter, u, w, &cp, &sp);
        v += &sign * &phi * &phi / &den;
        // u − w = 0 cannot occur for odd N, so the strict split matches
        a += &sign * &phi * &bar / &den;
    }
    let norm = rat(normalization.clone());
    Ok((to_f64(&(v / &norm)), to_f64(&(a / norm))))
}

/// Unfiltered closed-form sums for (V_k, A_k), normalized by N_k.
pub fn closed_form_pair_unfiltered(k: usize, beta: f64) -> Result<(f64, f64)> {
    let nk = filtered_norm_exact(k, Flavor::Phi, &FilterSpec::None);
    closed_form_pair(k, beta, &FilterSpec::None, &nk)
}

/// Filtered closed-form sums for (V_k^P, A_k^P), normalized by N_k^P.
pub fn closed_form_pair_filtered(k: usize, beta: f64, filter: &FilterSpec) -> Result<(f64, f64)> {
    let nkp = filtered_norm_exact(k, Flavor::Phi, filter);
    closed_form_pair(k, beta, filter, &nkp)
}

/// (β_k^P)² for k = 0..=k_max from the product form
/// C_g^{-4} (T_g/2)^{2k} N_k^P / (k!² N^P), with N^P summed until an
/// upper bound on the remaining terms falls below 1e-30 of the sum.
pub fn preselected_weights_exact(g: f64, filter: &FilterSpec, k_max: usize) -> Result<Vec<f64>> {
    const K_LIMIT: usize = 2000;
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::InvalidParameter(format!("oracle weights need g > 0, got {g}")));
    }
    let t = from_f64(g.tanh());
    let t2 = &t * &t;
    let x = &t2 / rat(big(4));
    let cg4 = {
        let c = from_f64(g.cosh());
        let c2 = &c * &c;
        &c2 * &c2
    };
    let eps = BigRational::new(BigInt::one(), BigInt::from(10u32).pow(30));
    let one_minus = BigRational::one() - &t2;
    let mut facts = vec![BigInt::one()];
    let mut terms: Vec<BigRational> = Vec::new();
    let mut sum = BigRational::zero();
    let mut xk = BigRational::one();
    // t^{2k+2}
    let mut t_next = t2.clone();
    for k in 0..=K_LIMIT {
        if k > 0 {
            xk = round(&(&xk * &x));
            t_next = round(&(&t_next * &t2));
        }
        while facts.len() < 2 * k + 2 {
            let i = facts.len();
            let next = &facts[i - 1] * big(i as u64);
            facts.push(next);
        }
        let nkp = norm_with_table(k, Flavor::Phi, filter, &facts);
        let term = &xk * rat(nkp) / (rat(&facts[k] * &facts[k]) * &cg4);
        sum += &term;
        terms.push(term);
        // Σ_{j>k} (1+j) t^{2j} ≤ (k+2) t^{2k+2} / (1 − t²)², an upper bound on the unfiltered remainder
        let bound = &t_next * rat(big(k as u64 + 2)) / (&one_minus * &one_minus);
        if k >= k_max && !sum.is_zero() && bound < &eps * &sum {
            return Ok(terms.iter().take(k_max + 1).map(|t| to_f64(&(t / &sum))).collect());
        }
    }
    if sum.is_zero() {
        return Err(Error::DegenerateFilter(format!("filter {filter} passes nothing")));
    }
    Err(Error::Capacity {
        what: "oracle weight sum",
        requested: K_LIMIT + 1,
        limit: K_LIMIT,
    })
}

fn norm_with_table(k: usize, flavor: Flavor, filter: &FilterSpec, facts: &[BigInt]) -> BigInt {
    let n = 2 * k + 1;
    let mut acc = BigInt::zero();
    for j in 0..=k {
        let (m, p) = match flavor {
            Flavor::Phi => (2 * k - 2 * j, 2 * j + 1),
            Flavor::PhiBar => (2 * k + 1 - 2 * j, 2 * j),
        };
        if filter.accepts_component(n, m) {
            let b = &facts[k] / (&facts[j] * &facts[k - j]);
            acc += &b * &b * &facts[p] * &facts[m];
        }
    }
    acc
}

/// Which symmetries were observed and which the parity predicates promise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParityReport {
    /// V(−β) = V(β) on the grid.
    pub v_even: bool,
    /// A(−β) = −A(β) on the grid.
    pub a_odd: bool,
    /// A(−β) = A(β) on the grid.
    pub a_even: bool,
    /// ξ has support on a single parity class of j.
    pub v_even_predicted: bool,
    /// ξ and ξ̄ sit on single, opposite parity classes.
    pub a_odd_predicted: bool,
    /// ξ and ξ̄ sit on the same single parity class, or ξ = ±ξ̄ (−1)^j.
    pub a_even_predicted: bool,
}

impl ParityReport {
    /// Every predicted symmetry was observed.
    pub fn consistent(&self) -> bool {
        (!self.v_even_predicted || self.v_even)
            && (!self.a_odd_predicted || self.a_odd)
            && (!self.a_even_predicted || self.a_even)
    }
}

/// Parity classes occupied by a coefficient list: (any even j, any odd j).
fn parity_support(xs: &[f64]) -> (bool, bool) {
    let even = xs.iter().step_by(2).any(|x| *x != 0.0);
    let odd = xs.iter().skip(1).step_by(2).any(|x| *x != 0.0);
    (even, odd)
}

fn single_class(s: (bool, bool)) -> Option<bool> {
    match s {
        (true, false) => Some(false),
        (false, true) => Some(true),
        (false, false) => Some(false),
        _ => None,
    }
}

/// Dense sign observables on an 11-point grid over [−π/2, π/2] for one N.
pub struct ParityChecker {
    n: usize,
    grid: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

pub const PARITY_GRID: usize = 11;

impl ParityChecker {
    pub fn new(n: usize) -> Result<Self> {
        guard(n)?;
        let grid = (0..PARITY_GRID)
            .map(|i| {
                let b = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / (PARITY_GRID - 1) as f64;
                let plus = dense_observable(n, b, sign_condition).map(|o| o.to_f64());
                let minus = dense_observable(n, -b, sign_condition).map(|o| o.to_f64());
                Ok((b, plus?, minus?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, grid })
    }

    /// Tests V(±β) and A(±β) for coefficient lists ξ, ξ̄ indexed by ⊥ occupation.
    pub fn check(&self, xi: &[f64], xi_bar: &[f64]) -> Result<ParityReport> {
        let d = self.n + 1;
        if xi.len() != d || xi_bar.len() != d {
            return Err(Error::DimensionMismatch(xi.len().max(xi_bar.len()), d));
        }
        let form = |o: &[f64], x: &[f64], y: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += x[i] * o[i * d + j] * y[j];
                }
            }
            acc
        };
        let scale = xi.iter().chain(xi_bar).map(|x| x * x).sum::<f64>().max(1.0);
        let tol = 1e-12 * scale;
        let (mut v_even, mut a_odd, mut a_even) = (true, true, true);
        for (_, plus, minus) in &self.grid {
            let (vp, vm) = (form(plus, xi, xi), form(minus, xi, xi));
            let (ap, am) = (form(plus, xi_bar, xi), form(minus, xi_bar, xi));
            v_even &= (vp - vm).abs() <= tol;
            a_odd &= (ap + am).abs() <= tol;
            a_even &= (ap - am).abs() <= tol;
        }
        let (sx, sb) = (single_class(parity_support(xi)), single_class(parity_support(xi_bar)));
        let v_even_predicted = sx.is_some();
        let a_odd_predicted = matches!((sx, sb), (Some(a), Some(b)) if a != b);
        let twisted = |sign: f64| {
            xi.iter()
                .zip(xi_bar)
                .enumerate()
                .all(|(j, (x, y))| *x == sign * if j % 2 == 0 { *y } else { -*y })
        };
        let a_even_predicted = matches!((sx, sb), (Some(a), Some(b)) if a == b) || twisted(1.0) || twisted(-1.0);
        Ok(ParityReport {
            v_even,
            a_odd,
            a_even,
            v_even_predicted,
            a_odd_predicted,
            a_even_predicted,
        })
    }
}

/// One-shot form of [`ParityChecker::check`] for sector size `n`.
pub fn check_parity_symmetry(xi: &[f64], xi_bar: &[f64], n: usize) -> Result<ParityReport> {
    ParityChecker::new(n)?.check(xi, xi_bar)
}
