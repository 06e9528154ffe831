//! Polarization rotations inside a fixed-photon-number sector, plus the
//! micro and macro observables.
//!
//! `rotation_matrix(N, θ)` maps amplitudes in the reference basis
//! |N−m, m_⊥⟩ to amplitudes in the rotated basis |u_θ, w_θ⊥⟩ built from
//!
//! ```text
//! a_θ†  =  cos(θ/2) a† + sin(θ/2) a⊥†
//! a_θ⊥† = −sin(θ/2) a† + cos(θ/2) a⊥†
//! ```
//!
//! Rows are indexed by `w` (rotated ⊥ count, `u = N − w`), columns by `m`.
//!
//! The macro-mode analyzer set to β measures in the basis reached by
//! `rotation_matrix(N, −β)`. With that orientation the single-photon sector
//! gives V₀(β) = cos β and A₀(β) = −sin β, so the CHSH optimum of the
//! two-photon singlet sits at β = −π/4.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fockspace::SectorState;

/// Real orthogonal matrix of size (N+1)×(N+1), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationMatrix {
    n_total: usize,
    angle: f64,
    entries: Vec<f64>,
}

impl RotationMatrix {
    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn dim(&self) -> usize {
        self.n_total + 1
    }

    /// ⟨N−w_θ, w_θ⊥ | N−m, m_⊥⟩.
    pub fn get(&self, w: usize, m: usize) -> f64 {
        self.entries[w * self.dim() + m]
    }

    pub fn row(&self, w: usize) -> &[f64] {
        let d = self.dim();
        &self.entries[w * d..(w + 1) * d]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(v.len(), self.dim()));
        }
        Ok(apply_rows(&self.entries, self.dim(), v))
    }

    /// Matrix product `self · other` (same sector).
    pub fn compose(&self, other: &RotationMatrix) -> Result<RotationMatrix> {
        if self.n_total != other.n_total {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        let d = self.dim();
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for l in 0..d {
                let a = self.entries[i * d + l];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    entries[i * d + j] += a * other.entries[l * d + j];
                }
            }
        }
        Ok(RotationMatrix {
            n_total: self.n_total,
            angle: self.angle + other.angle,
            entries,
        })
    }

    /// max |R Rᵀ − I| entrywise.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

fn apply_rows(rows: &[f64], dim: usize, v: &[f64]) -> Vec<f64> {
    rows.chunks_exact(dim)
        .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Rotation matrices for N = 0, 1, 2, … built one level at a time.
///
/// Level N follows from level N−1 through
///
/// ```text
/// N |u,w⟩_θ = √u a_θ† |u−1,w⟩_θ + √w a_θ⊥† |u,w−1⟩_θ
/// ```
///
/// which averages two orthonormal parents with weights u/N and w/N and stays
/// well conditioned at several hundred photons. Only the current level is
/// kept, so memory is O(N²).
#[derive(Clone, Debug)]
pub struct RotationLadder {
    angle: f64,
    c: f64,
    s: f64,
    n: usize,
    current: Vec<f64>,
    scratch: Vec<f64>,
    sqrt: Vec<f64>,
}

const PARALLEL_LEVEL: usize = 96;

impl RotationLadder {
    pub fn new(angle: f64) -> Self {
        Self {
            angle,
            c: (angle / 2.0).cos(),
            s: (angle / 2.0).sin(),
            n: 0,
            current: vec![1.0],
            scratch: Vec::new(),
            sqrt: vec![0.0, 1.0],
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn level(&self) -> usize {
        self.n
    }

    /// Row-major (N+1)×(N+1) matrix of the current level.
    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        apply_rows(&self.current, self.n + 1, v)
    }

    pub fn to_matrix(&self) -> RotationMatrix {
        RotationMatrix {
            n_total: self.n,
            angle: self.angle,
            entries: self.current.clone(),
        }
    }

    pub fn advance_to(&mut self, n: usize) {
        while self.n < n {
            self.advance();
        }
    }

    pub fn advance(&mut self) {
        let n = self.n + 1;
        while self.sqrt.len() <= n {
            let i = self.sqrt.len();
            self.sqrt.push((i as f64).sqrt());
        }
        let dim = n + 1;
        let prev_dim = n;
        self.scratch.clear();
        self.scratch.resize(dim * dim, 0.0);
        let prev = &self.current;
        let sq = &self.sqrt;
        let (c, s) = (self.c, self.s);
        let inv_n = 1.0 / n as f64;

        let build_row = |w: usize, row: &mut [f64]| {
            let u = n - w;
            // a_θ† = c a† + s a⊥† acting on parent (u−1, w): row w of level N−1
            if u > 0 {
                let parent = &prev[w * prev_dim..(w + 1) * prev_dim];
                let f = sq[u] * inv_n;
                accumulate(row, parent, f * c, f * s, sq, n);
            }
            // a_θ⊥† = −s a† + c a⊥† acting on parent (u, w−1): row w−1 of level N−1
            if w > 0 {
                let parent = &prev[(w - 1) * prev_dim..w * prev_dim];
                let f = sq[w] * inv_n;
                accumulate(row, parent, -f * s, f * c, sq, n);
            }
        };

        if n >= PARALLEL_LEVEL {
            self.scratch
                .par_chunks_exact_mut(dim)
                .enumerate()
                .for_each(|(w, row)| build_row(w, row));
        } else {
            self.scratch
                .chunks_exact_mut(dim)
                .enumerate()
                .for_each(|(w, row)| build_row(w, row));
        }
        std::mem::swap(&mut self.current, &mut self.scratch);
        self.n = n;
    }
}

/// row += ref_coef · a†(parent) + perp_coef · a⊥†(parent), parent at level n−1.
#[inline]
fn accumulate(row: &mut [f64], parent: &[f64], ref_coef: f64, perp_coef: f64, sq: &[f64], n: usize) {
    // a† on |n−1−m, m⟩ gives √(n−m) |n−m, m⟩
    if ref_coef != 0.0 {
        for m in 0..n {
            row[m] += ref_coef * sq[n - m] * parent[m];
        }
    }
    // a⊥† on |n−m, m−1⟩ gives √m |n−m, m⟩
    if perp_coef != 0.0 {
        for m in 1..=n {
            row[m] += perp_coef * sq[m] * parent[m - 1];
        }
    }
}

pub fn rotation_matrix(n_total: usize, angle: f64) -> RotationMatrix {
    let mut ladder = RotationLadder::new(angle);
    ladder.advance_to(n_total);
    ladder.to_matrix()
}

/// Column of `rotation_matrix(n, angle)` for |N, 0_⊥⟩ (`all_perp = false`)
/// or |0, N_⊥⟩ (`all_perp = true`), in O(N) from the binomial expansion of
/// a† = c a_θ† − s a_θ⊥† and a⊥† = s a_θ† + c a_θ⊥†.
pub fn extremal_column(n: usize, angle: f64, all_perp: bool) -> Vec<f64> {
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    // coefficient of a_θ† and of a_θ⊥† in the created mode
    let (p, q) = if all_perp { (s, c) } else { (c, -s) };
    (0..=n)
        .map(|w| {
            let u = n - w;
            let mag = |x: f64, e: usize| if e == 0 { 1.0 } else { x.abs().powi(e as i32) };
            let base = mag(p, u) * mag(q, w);
            if base == 0.0 {
                return 0.0;
            }
            let sign = if (p < 0.0 && u % 2 == 1) ^ (q < 0.0 && w % 2 == 1) { -1.0 } else { 1.0 };
            // √C(n,w) from log space; the powers stay in linear space to keep full precision near 1
            sign * base * (0.5 * crate::numeric::ln_binomial(n, w)).exp()
        })
        .collect()
}

/// The two extremal columns of `rotation_matrix(N, angle)` for N = 0, 1, …,
/// advanced one level at a time by a† = c a_θ† − s a_θ⊥† and
/// a⊥† = s a_θ† + c a_θ⊥†, each step costing O(N).
#[derive(Clone, Debug)]
pub struct ExtremalLadder {
    c: f64,
    s: f64,
    n: usize,
    first: Vec<f64>,
    last: Vec<f64>,
    sqrt: Vec<f64>,
}

impl ExtremalLadder {
    pub fn new(angle: f64) -> Self {
        Self {
            c: (angle / 2.0).cos(),
            s: (angle / 2.0).sin(),
            n: 0,
            first: vec![1.0],
            last: vec![1.0],
            sqrt: vec![0.0, 1.0],
        }
    }

    pub fn level(&self) -> usize {
        self.n
    }

    /// Column for |N, 0_⊥⟩.
    pub fn first(&self) -> &[f64] {
        &self.first
    }

    /// Column for |0, N_⊥⟩.
    pub fn last(&self) -> &[f64] {
        &self.last
    }

    pub fn advance_to(&mut self, n: usize) {
        while self.n < n {
            self.advance();
        }
    }

    pub fn advance(&mut self) {
        let n = self.n + 1;
        while self.sqrt.len() <= n {
            let i = self.sqrt.len();
            self.sqrt.push((i as f64).sqrt());
        }
        let inv = 1.0 / self.sqrt[n];
        let step = |v: &[f64], p: f64, q: f64, sq: &[f64]| -> Vec<f64> {
            // (p a_θ† + q a_θ⊥†) on level n−1, then / √n
            (0..=n)
                .map(|w| {
                    let u = n - w;
                    let mut x = 0.0;
                    if w < n {
                        x += p * sq[u] * v[w];
                    }
                    if w > 0 {
                        x += q * sq[w] * v[w - 1];
                    }
                    x * inv
                })
                .collect()
        };
        self.first = step(&self.first, self.c, -self.s, &self.sqrt);
        self.last = step(&self.last, self.s, self.c, &self.sqrt);
        self.n = n;
    }
}

/// Ladder for the macro analyzer set to `angle` (see module docs).
pub fn analyzer_ladder(angle: f64) -> RotationLadder {
    RotationLadder::new(-angle)
}

/// The state's amplitudes in the `angle`-rotated basis.
pub fn rotate(state: &SectorState, angle: f64) -> SectorState {
    let r = rotation_matrix(state.n_total(), angle);
    let amps = apply_rows(&r.entries, r.dim(), state.amplitudes());
    SectorState::from_parts(state.k(), state.flavor(), amps, state.norm_sq())
}

/// ⟨bra| O^(m)(α) |ket⟩ for single-photon states given as (|1⟩, |1_⊥⟩) amplitudes, with
/// O^(m)(α) = cos α (|1⟩⟨1| − |1⊥⟩⟨1⊥|) + sin α (|1⟩⟨1⊥| + |1⊥⟩⟨1|).
pub fn micro_expectation(bra: [f64; 2], ket: [f64; 2], angle: f64) -> f64 {
    let (c, s) = (angle.cos(), angle.sin());
    c * (bra[0] * ket[0] - bra[1] * ket[1]) + s * (bra[0] * ket[1] + bra[1] * ket[0])
}

/// A two-valued observable diagonal in the analyzer basis |u, w⟩.
#[derive(Clone, Copy, Debug)]
pub struct DiagonalObservable {
    label: &'static str,
    assign: fn(usize, usize) -> f64,
}

impl DiagonalObservable {
    pub fn new(label: &'static str, assign: fn(usize, usize) -> f64) -> Self {
        Self { label, assign }
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    /// Outcome (±1) assigned to |u_β, w_β⊥⟩.
    #[inline]
    pub fn value(&self, u: usize, w: usize) -> f64 {
        (self.assign)(u, w)
    }

    /// Sum of assigned values over the N-photon sector.
    pub fn trace_on(&self, n_total: usize) -> f64 {
        (0..=n_total).map(|w| self.value(n_total - w, w)).sum()
    }

    /// Σ_w value(N−w, w) x_w y_w for vectors already in the analyzer basis.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() - 1;
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(w, (a, b))| self.value(n - w, w) * a * b)
            .sum()
    }
}

/// +1 when the analyzer's reference mode holds at least as many photons as
/// its orthogonal mode, −1 otherwise.
pub fn sign_difference_observable() -> DiagonalObservable {
    fn assign(u: usize, w: usize) -> f64 {
        if u >= w {
            1.0
        } else {
            -1.0
        }
    }
    DiagonalObservable::new("sign(u-w)", assign)
}

/// ⟨bra| O^(M)(angle) |ket⟩ for two states of the same sector.
pub fn observable_expectation(
    bra: &SectorState,
    ket: &SectorState,
    obs: &DiagonalObservable,
    angle: f64,
) -> Result<f64> {
    if bra.n_total() != ket.n_total() {
        return Err(Error::DimensionMismatch(bra.n_total(), ket.n_total()));
    }
    let mut ladder = analyzer_ladder(angle);
    ladder.advance_to(bra.n_total());
    let rb = ladder.apply(bra.amplitudes());
    let rk = ladder.apply(ket.amplitudes());
    Ok(obs.bilinear(&rb, &rk))
}
