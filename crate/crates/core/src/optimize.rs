//! Analyzer-angle optimization and gain sweeps.
//!
//! The standard-settings objective V(β) + A(β) is maximized over
//! β ∈ [−π/2, π/2] by a 129-point grid followed by golden-section
//! refinement around the best grid point. Grid points and gain rows run in
//! parallel and are collected in order, so results do not depend on the
//! thread count.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::bell::{correlation_from, BellModel, BellSettings};
use crate::error::{Error, Result};
use crate::fockspace::{Gain, Truncation};
use crate::preselect::FilterSpec;

pub const GRID_POINTS: usize = 129;
pub const ANGLE_TOL: f64 = 1e-6;
/// Objective spread below which the landscape counts as flat.
const FLAT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    pub beta: f64,
    pub v: f64,
    pub a: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleScan {
    pub grid: Vec<ScanPoint>,
    pub beta_opt: f64,
    pub objective_opt: f64,
}

/// `n` evenly spaced points from `lo` to `hi`, both included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluates V, A and V + A on `n` points spanning [−π/2, π/2].
pub fn scan_angles(model: &BellModel, n: usize) -> Vec<ScanPoint> {
    linspace(-FRAC_PI_2, FRAC_PI_2, n)
        .into_par_iter()
        .map(|beta| {
            let (v, a) = model.totals(beta);
            ScanPoint {
                beta,
                v,
                a,
                objective: v + a,
            }
        })
        .collect()
}

/// Golden-section maximization of a unimodal function on [lo, hi].
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Grid argmax with ties resolved toward the non-positive half-range.
fn grid_argmax(betas: &[f64], values: &[f64]) -> Result<usize> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if (hi - lo).is_nan() || hi - lo <= FLAT_TOL {
        return Err(Error::NoOptimum);
    }
    let key = |b: f64| if b <= 0.0 { -b } else { PI + b };
    Ok((0..betas.len())
        .filter(|&i| values[i] >= hi - FLAT_TOL)
        .min_by(|&i, &j| key(betas[i]).total_cmp(&key(betas[j])))
        .expect("grid is non-empty"))
}

/// Grid search on `points` samples of [lo, hi], then golden-section
/// refinement between the neighbours of the best sample.
pub fn maximize_scalar(f: impl Fn(f64) -> f64 + Sync, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)> {
    let betas = linspace(lo, hi, points.max(3));
    let values: Vec<f64> = betas.par_iter().map(|&b| f(b)).collect();
    let best = grid_argmax(&betas, &values)?;
    refine(&f, &betas, values[best], best)
}

fn refine(f: &impl Fn(f64) -> f64, betas: &[f64], best_value: f64, best: usize) -> Result<(f64, f64)> {
    let lo = betas[best.saturating_sub(1)];
    let hi = betas[(best + 1).min(betas.len() - 1)];
    let (x, fx) = golden_section_max(f, lo, hi, ANGLE_TOL);
    Ok(if fx >= best_value { (x, fx) } else { (betas[best], best_value) })
}

/// Maximizes V(β) + A(β) for an existing model.
pub fn optimal_angle_for(model: &BellModel) -> Result<AngleScan> {
    let grid = scan_angles(model, GRID_POINTS);
    let betas: Vec<f64> = grid.iter().map(|p| p.beta).collect();
    let values: Vec<f64> = grid.iter().map(|p| p.objective).collect();
    let best = grid_argmax(&betas, &values)?;
    let (beta_opt, objective_opt) = refine(&|b| model.objective(b), &betas, values[best], best)?;
    Ok(AngleScan {
        grid,
        beta_opt,
        objective_opt,
    })
}

pub fn optimal_angle(gain: Gain, filter: FilterSpec, trunc: &Truncation) -> Result<AngleScan> {
    optimal_angle_for(&BellModel::new(gain, filter, trunc)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainRow {
    pub g: f64,
    pub beta_opt: f64,
    /// 2(V + A) at β_opt.
    pub b: f64,
    pub v: f64,
    pub a: f64,
    pub tail_mass: f64,
}

pub fn scan_gain(g_min: f64, g_max: f64, steps: usize, filter: FilterSpec, trunc: &Truncation) -> Result<Vec<GainRow>> {
    if !(g_min >= 0.0 && g_min < g_max && g_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gain range must satisfy 0 <= g_min < g_max, got [{g_min}, {g_max}]"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("steps must be at least 2, got {steps}")));
    }
    linspace(g_min, g_max, steps)
        .into_par_iter()
        .map(|g| {
            let model = BellModel::new(Gain::new(g)?, filter, trunc)?;
            let scan = optimal_angle_for(&model)?;
            let (v, a) = model.totals(scan.beta_opt);
            Ok(GainRow {
                g,
                beta_opt: scan.beta_opt,
                b: 2.0 * (v + a),
                v,
                a,
                tail_mass: model.tail_mass(),
            })
        })
        .collect()
}

/// Result of the opt-in optimization over all four CHSH angles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourAngleOptimum {
    pub settings: BellSettings,
    /// Oriented Bell parameter at `settings`.
    pub b: f64,
}

/// For fixed (β, β′) the micro angles are optimal in closed form:
/// B = |(V+V′, A+A′)| + |(V−V′, A−A′)|.
fn best_alphas(va: (f64, f64), vap: (f64, f64)) -> (f64, f64, f64) {
    let (v, a) = va;
    let (vp, ap) = vap;
    let (x1, y1) = (v + vp, a + ap);
    let (x2, y2) = (v - vp, a - ap);
    let b = x1.hypot(y1) + x2.hypot(y2);
    // −E(α,·) = cos α V + sin α A, so α aligns with (V, A) combinations.
    (y1.atan2(x1), y2.atan2(x2), b)
}

/// Maximizes the oriented CHSH value over α, α′, β, β′.
pub fn optimize_all_angles(model: &BellModel) -> Result<FourAngleOptimum> {
    const COARSE: usize = 65;
    let betas = linspace(-PI, PI, COARSE);
    let va: Vec<(f64, f64)> = betas.par_iter().map(|&b| model.totals(b)).collect();
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..COARSE {
        for j in 0..COARSE {
            let (_, _, b) = best_alphas(va[i], va[j]);
            if b > best.2 {
                best = (i, j, b);
            }
        }
    }
    let step = betas[1] - betas[0];
    let (mut beta, mut beta_p) = (betas[best.0], betas[best.1]);
    let mut value = best.2;
    let mut width = step;
    for _ in 0..60 {
        let fixed_p = model.totals(beta_p);
        let (nb, _) = golden_section_max(|b| best_alphas(model.totals(b), fixed_p).2, beta - width, beta + width, ANGLE_TOL);
        let fixed = model.totals(nb);
        let (nbp, nv) = golden_section_max(|bp| best_alphas(fixed, model.totals(bp)).2, beta_p - width, beta_p + width, ANGLE_TOL);
        let moved = (nb - beta).abs().max((nbp - beta_p).abs());
        if nv >= value {
            beta = nb;
            beta_p = nbp;
            value = nv;
        }
        if moved < ANGLE_TOL {
            break;
        }
        width = (width * 0.7).max(4.0 * ANGLE_TOL);
    }
    let (alpha, alpha_p, b) = best_alphas(model.totals(beta), model.totals(beta_p));
    let settings = BellSettings::new(alpha, alpha_p, beta, beta_p)?;
    // Cross-check the closed-form α optimum against the literal correlations.
    let (v, a) = model.totals(beta);
    let (vp, ap) = model.totals(beta_p);
    let four = correlation_from(alpha, v, a) + correlation_from(alpha, vp, ap) + correlation_from(alpha_p, v, a)
        - correlation_from(alpha_p, vp, ap);
    if (-four - b).abs() > 1e-9 {
        return Err(Error::Inconsistent(format!(
            "four-angle optimum {b} disagrees with direct evaluation {}",
            -four
        )));
    }
    Ok(FourAngleOptimum { settings, b })
}
