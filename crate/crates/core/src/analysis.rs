//! Audits of the ε → 0 limit: windowed Young-measure statistics, localisation
//! of oscillations, the slope lower bound and the trajectory convergence study.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{run_cahn_hilliard, run_stefan, SolverConfig, Trajectory};
use crate::energy;
use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpectralWorkspace};
use crate::potential::{Interval, PotentialModel};
use crate::preparation::prepare_recovery;

pub const DEFAULT_WINDOWS: usize = 32;
pub const DEFAULT_BINS: usize = 64;

/// Per-window value histograms of the finest field of a sequence.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalYoungMeasure {
    pub windows: usize,
    pub bins: usize,
    /// Histogram range `[-M, M]` with `M` the largest sup norm in the sequence.
    pub bound: f64,
    /// Smallest interval holding the values of each window.
    pub support_per_window: Vec<Interval>,
    /// `windows × bins` masses; each row sums to 1.
    pub hist: Vec<Vec<f64>>,
    /// Mean value of the samples falling in each bin (bin centre when empty).
    pub nodes: Vec<Vec<f64>>,
}

impl EmpiricalYoungMeasure {
    pub fn bin_width(&self) -> f64 {
        2.0 * self.bound / self.bins as f64
    }

    /// `μ_w(f) = Σ_b mass_b f(node_b)`.
    pub fn moment(&self, window: usize, f: impl Fn(f64) -> f64) -> f64 {
        self.hist[window]
            .iter()
            .zip(&self.nodes[window])
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, v)| m * f(*v))
            .sum()
    }

    pub fn moments(&self, f: impl Fn(f64) -> f64 + Copy) -> Vec<f64> {
        (0..self.windows).map(|w| self.moment(w, f)).collect()
    }

    pub fn mean(&self, window: usize) -> f64 {
        self.moment(window, |v| v)
    }

    pub fn variance(&self, window: usize) -> f64 {
        let m = self.mean(window);
        self.moment(window, |v| (v - m) * (v - m))
    }

    pub fn occupied_bins(&self, window: usize) -> usize {
        self.hist[window].iter().filter(|&&m| m > 0.0).count()
    }

    /// Mass of window `w` on values satisfying `pred`.
    pub fn mass_where(&self, window: usize, pred: impl Fn(f64) -> bool) -> f64 {
        self.hist[window]
            .iter()
            .zip(&self.nodes[window])
            .filter(|(_, v)| pred(**v))
            .map(|(m, _)| m)
            .sum()
    }

    /// For each field of the sequence, the largest window discrepancy between
    /// the average of `f(u)` and `μ(f)`; a decreasing sequence indicates
    /// convergence towards the measure.
    pub fn trend(&self, fields: &[PeriodicField], f: impl Fn(f64) -> f64 + Copy) -> Vec<f64> {
        fields
            .iter()
            .map(|u| {
                let len = u.n() / self.windows;
                (0..self.windows)
                    .map(|w| {
                        let avg = u.values()[w * len..(w + 1) * len].iter().map(|&v| f(v)).sum::<f64>() / len as f64;
                        (avg - self.moment(w, f)).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Histograms of the last (finest ε) field of `fields`.
pub fn young_measure(fields: &[PeriodicField], windows: usize, bins: usize) -> Result<EmpiricalYoungMeasure> {
    let finest = fields
        .last()
        .ok_or_else(|| Error::invalid("young_measure needs at least one field"))?;
    let n = finest.n();
    if fields.iter().any(|f| f.n() != n) {
        return Err(Error::invalid("all fields must share the grid size"));
    }
    if windows == 0 || n % windows != 0 {
        return Err(Error::invalid(format!("window count {windows} must divide n = {n}")));
    }
    if bins == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    let bound = fields
        .iter()
        .map(|f| f.linf_norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let len = n / windows;
    let width = 2.0 * bound / bins as f64;
    let mut hist = vec![vec![0.0; bins]; windows];
    let mut nodes = vec![vec![0.0; bins]; windows];
    let mut support_per_window = Vec::with_capacity(windows);
    for w in 0..windows {
        let vals = &finest.values()[w * len..(w + 1) * len];
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for &v in vals {
            let b = (((v + bound) / width).floor().max(0.0) as usize).min(bins - 1);
            sums[b] += v;
            counts[b] += 1;
        }
        for b in 0..bins {
            hist[w][b] = counts[b] as f64 / len as f64;
            nodes[w][b] = if counts[b] > 0 {
                sums[b] / counts[b] as f64
            } else {
                -bound + (b as f64 + 0.5) * width
            };
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        support_per_window.push(Interval::new(lo, hi));
    }
    Ok(EmpiricalYoungMeasure {
        windows,
        bins,
        bound,
        support_per_window,
        hist,
        nodes,
    })
}

/// Warning when a window holds fewer than 8 periods of a microstructure of
/// the given wavelength.
pub fn window_resolution_warning(windows: usize, wavelength: f64) -> Option<String> {
    let periods = 1.0 / (windows as f64 * wavelength);
    (periods < 8.0).then(|| {
        format!("each of the {windows} windows holds only {periods:.2} periods of wavelength {wavelength:.4}; histograms are not representative")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowClass {
    NearDirac,
    SigmaGSupported,
    Violation,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowVerdict {
    pub window: usize,
    pub class: WindowClass,
    pub variance: f64,
    /// Mass within `closure(Σ_G)` dilated by the tolerance.
    pub sigma_g_mass: f64,
    /// `|μ(W**') - avg W**'(limit)|` over the window.
    pub envelope_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyReport {
    pub tol: f64,
    pub windows: Vec<WindowVerdict>,
    /// `(window, magnitude, description)`.
    pub violations: Vec<(usize, f64, String)>,
}

/// Mass fraction above which a window counts as supported in `closure(Σ_G)`.
pub const SUPPORT_MASS: f64 = 0.99;

impl DichotomyReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    /// Mass-weighted share of all windows lying in the dilated `closure(Σ_G)`.
    pub fn total_sigma_g_mass(&self) -> f64 {
        self.windows.iter().map(|w| w.sigma_g_mass).sum::<f64>() / self.windows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window,class,variance,sigma_g_mass,envelope_mismatch\n");
        for w in &self.windows {
            let class = match w.class {
                WindowClass::NearDirac => "near_dirac",
                WindowClass::SigmaGSupported => "sigma_g",
                WindowClass::Violation => "violation",
            };
            let _ = writeln!(
                out,
                "{},{class},{:.16e},{:.16e},{:.16e}",
                w.window, w.variance, w.sigma_g_mass, w.envelope_mismatch
            );
        }
        out
    }
}

/// Each window must be near-Dirac (variance ≤ `tol`) or carry at least
/// [`SUPPORT_MASS`] of its mass within `tol` of `closure(Σ_G)`, and must
/// satisfy `|μ(W**') - W**'(limit)| ≤ tol`.
pub fn audit_support_dichotomy(
    model: &PotentialModel,
    eym: &EmpiricalYoungMeasure,
    limit: &PeriodicField,
    tol: f64,
) -> Result<DichotomyReport> {
    if !limit.n().is_multiple_of(eym.windows) {
        return Err(Error::invalid("limit grid is incompatible with the window count"));
    }
    let len = limit.n() / eym.windows;
    let mut windows = Vec::with_capacity(eym.windows);
    let mut violations = Vec::new();
    for w in 0..eym.windows {
        let variance = eym.variance(w);
        let sigma_g_mass = eym.mass_where(w, |v| model.dist_to_sigma_g(v) <= tol);
        let mu = eym.moment(w, |v| model.envelope_derivative_clamped(v));
        let limit_avg = limit.values()[w * len..(w + 1) * len]
            .iter()
            .map(|&v| model.envelope_derivative_clamped(v))
            .sum::<f64>()
            / len as f64;
        let envelope_mismatch = (mu - limit_avg).abs();
        let class = if variance <= tol {
            WindowClass::NearDirac
        } else if sigma_g_mass >= SUPPORT_MASS {
            WindowClass::SigmaGSupported
        } else {
            WindowClass::Violation
        };
        if class == WindowClass::Violation {
            violations.push((
                w,
                variance,
                format!(
                    "variance {variance:.3e} with only {:.4} of the mass near closure(Σ_G)",
                    sigma_g_mass
                ),
            ));
        }
        if envelope_mismatch > tol {
            violations.push((
                w,
                envelope_mismatch,
                format!("|μ(W**') - W**'(u)| = {envelope_mismatch:.3e}"),
            ));
        }
        windows.push(WindowVerdict {
            window: w,
            class,
            variance,
            sigma_g_mass,
            envelope_mismatch,
        });
    }
    Ok(DichotomyReport {
        tol,
        windows,
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    /// `μ(l W') - μ(l) μ(W')` per window.
    pub excess: Vec<f64>,
    pub max_positive_excess: f64,
}

/// `μ(l W') ≤ μ(l) μ(W')` per window, for nondecreasing `l`.
pub fn audit_correlation(
    model: &PotentialModel,
    eym: &EmpiricalYoungMeasure,
    l: impl Fn(f64) -> f64 + Copy,
) -> Result<CorrelationReport> {
    const SAMPLES: usize = 1000;
    let m = eym.bound;
    let mut prev = l(-m);
    for i in 1..=SAMPLES {
        let cur = l(-m + 2.0 * m * i as f64 / SAMPLES as f64);
        if cur < prev - 1e-12 * (1.0 + prev.abs()) {
            return Err(Error::invalid("test function l is not nondecreasing on [-M, M]"));
        }
        prev = cur;
    }
    let excess: Vec<f64> = (0..eym.windows)
        .map(|w| eym.moment(w, |v| l(v) * model.d1(v)) - eym.moment(w, l) * eym.moment(w, |v| model.d1(v)))
        .collect();
    let max_positive_excess = excess.iter().copied().fold(0.0, f64::max);
    Ok(CorrelationReport {
        excess,
        max_positive_excess,
    })
}

/// Discrete critical points: sign changes of the centred difference, with
/// plateaus collapsed to their midpoint.
pub fn critical_points(f: &PeriodicField) -> Vec<usize> {
    let n = f.n();
    let v = f.values();
    let scale = 1e-13 * (1.0 + f.linf_norm());
    let sign: Vec<i8> = (0..n)
        .map(|j| {
            let d = v[(j + 1) % n] - v[(j + n - 1) % n];
            if d > scale {
                1
            } else if d < -scale {
                -1
            } else {
                0
            }
        })
        .collect();
    let nonzero: Vec<usize> = (0..n).filter(|&j| sign[j] != 0).collect();
    if nonzero.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &j) in nonzero.iter().enumerate() {
        let k = nonzero[(i + 1) % nonzero.len()];
        if sign[j] == sign[k] {
            continue;
        }
        let span = (k + n - j) % n;
        let span = if span == 0 { n } else { span };
        // extremum between j and k; ties resolved to the middle of the tied run
        let maximum = sign[j] > 0;
        let idx = |s: usize| (j + s) % n;
        let better = |a: f64, b: f64| if maximum { a > b } else { a < b };
        let mut best = v[idx(0)];
        for s in 1..=span {
            if better(v[idx(s)], best) {
                best = v[idx(s)];
            }
        }
        let tied: Vec<usize> = (0..=span).filter(|&s| v[idx(s)] == best).collect();
        out.push(idx(tied[tied.len() / 2]));
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn cyclic_cells(a: usize, b: usize, n: usize) -> usize {
    let d = (a + n - b) % n;
    d.min(n - d)
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationViolation {
    pub x: f64,
    pub y: f64,
    pub jump: f64,
    /// Largest `dist(f, Σ_G)` between the two critical points.
    pub excursion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub eps: f64,
    pub e: f64,
    pub delta: f64,
    pub slope_eps: f64,
    /// Whether `slope_eps ≤ C` for the supplied critical-slope bound.
    pub within_slope_bound: Option<bool>,
    pub criticals: usize,
    pub pairs_checked: usize,
    pub violations: Vec<OscillationViolation>,
}

impl OscillationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For critical points `x, y` with `|x - y| ≤ delta`: either every value
/// between them lies in `Σ_G^e`, or `|f(y) - f(x)| < e`.
pub fn oscillation_audit(
    model: &PotentialModel,
    f: &PeriodicField,
    eps: f64,
    e: f64,
    delta: f64,
    slope_bound: Option<f64>,
) -> Result<OscillationReport> {
    if !(e > 0.0 && delta > 0.0) {
        return Err(Error::invalid("e and delta must be positive"));
    }
    let ws = SpectralWorkspace::new(f.n())?;
    let slope_eps = energy::slope_eps(model, &ws, f, eps)?;
    let n = f.n();
    let v = f.values();
    let reach = (delta / f.spacing()).floor() as usize;
    let crit = critical_points(f);
    let mut pairs_checked = 0;
    let mut violations = Vec::new();
    for (i, &x) in crit.iter().enumerate() {
        for &y in &crit[i + 1..] {
            let cells = cyclic_cells(x, y, n);
            if cells > reach {
                continue;
            }
            pairs_checked += 1;
            let jump = (v[y] - v[x]).abs();
            if jump < e {
                continue;
            }
            // walk the shorter arc from x to y
            let forward = (y + n - x) % n == cells;
            let excursion = (0..=cells)
                .map(|s| if forward { (x + s) % n } else { (x + n - s) % n })
                .map(|j| model.dist_to_sigma_g(v[j]))
                .fold(0.0, f64::max);
            if excursion >= e {
                violations.push(OscillationViolation {
                    x: f.x(x),
                    y: f.x(y),
                    jump,
                    excursion,
                });
            }
        }
    }
    Ok(OscillationReport {
        eps,
        e,
        delta,
        slope_eps,
        within_slope_bound: slope_bound.map(|c| slope_eps <= c),
        criticals: crit.len(),
        pairs_checked,
        violations,
    })
}

/// Largest ε of a sweep below which every audited field is clean.
pub fn empirical_eps0(results: &[(f64, bool)]) -> Option<f64> {
    let mut sorted = results.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let clean = sorted.iter().take_while(|r| r.1).count();
    (clean > 0).then(|| sorted[clean - 1].0)
}

#[derive(Debug, Clone, Serialize)]
pub struct NeighborhoodReport {
    pub e: f64,
    pub window: f64,
    /// Points with `dist(f(x), Σ_G) ≥ 2e`.
    pub qualifying: usize,
    /// Largest `δ'` such that `dist(f(y), Σ_G) ≥ e` whenever `|y - x| < δ'`
    /// for all qualifying `x`; infinite when nothing constrains it.
    pub largest_delta: f64,
    /// Qualifying points with a bad neighbour closer than `window`.
    pub violations: Vec<f64>,
}

impl NeighborhoodReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn neighborhood_audit(
    model: &PotentialModel,
    f: &PeriodicField,
    e: f64,
    window: f64,
) -> Result<NeighborhoodReport> {
    if !(e > 0.0) {
        return Err(Error::invalid("e must be positive"));
    }
    let n = f.n();
    let h = f.spacing();
    let dist: Vec<f64> = f.values().iter().map(|&v| model.dist_to_sigma_g(v)).collect();
    let bad: Vec<bool> = dist.iter().map(|&d| d < e).collect();
    // cyclic distance (in cells) to the nearest bad point
    let mut near = vec![usize::MAX; n];
    if bad.iter().any(|&b| b) {
        let mut last = None;
        for pass in 0..2 {
            for j in 0..n {
                if bad[j] {
                    last = Some(j + pass * n);
                }
                if let Some(l) = last {
                    near[j] = near[j].min(j + pass * n - l);
                }
            }
        }
        let mut next = None;
        for pass in (0..2).rev() {
            for j in (0..n).rev() {
                if bad[j] {
                    next = Some(j + pass * n);
                }
                if let Some(k) = next {
                    near[j] = near[j].min(k - (j + pass * n));
                }
            }
        }
    }
    let mut qualifying = 0;
    let mut largest_delta = f64::INFINITY;
    let mut violations = Vec::new();
    for j in 0..n {
        if dist[j] < 2.0 * e {
            continue;
        }
        qualifying += 1;
        if near[j] != usize::MAX {
            let d = near[j] as f64 * h;
            largest_delta = largest_delta.min(d);
            if d < window {
                violations.push(f.x(j));
            }
        }
    }
    Ok(NeighborhoodReport {
        e,
        window,
        qualifying,
        largest_delta,
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LiminfRow {
    pub eps: f64,
    pub slope_eps: f64,
    pub energy_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaLiminfTable {
    pub slope_star: f64,
    pub tol: f64,
    pub rows: Vec<LiminfRow>,
}

impl GammaLiminfTable {
    pub fn min_slope_eps(&self) -> f64 {
        self.rows.iter().map(|r| r.slope_eps).fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self) -> bool {
        self.min_slope_eps() >= self.slope_star - self.tol
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,slope_eps,slope_star,tol,energy_gap\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.eps, r.slope_eps, self.slope_star, self.tol, r.energy_gap
            );
        }
        out
    }
}

/// Slopes of the recovery sequence of `target` against `|∇F**|(target)`.
///
/// The discretisation slack is twice the gap between the finite-difference
/// and spectral evaluations of `‖(W**'(target))_x‖`, plus the hull spacing
/// times the Lipschitz constant of `W**'` on the target's range.
pub fn gamma_liminf_probe(
    model: &PotentialModel,
    target: &PeriodicField,
    eps_list: &[f64],
) -> Result<GammaLiminfTable> {
    check_eps_list(eps_list)?;
    let ws = SpectralWorkspace::new(target.n())?;
    let slope_star = energy::slope_star(model, target);
    let g = target.map(|v| model.envelope_derivative_clamped(v));
    let spectral = ws.derivative(&g, 1)?.l2_norm();
    let lip = model.envelope_lipschitz_on(target.min(), target.max());
    let tol = 2.0 * (spectral - slope_star).abs() + model.hull_spacing() * lip;
    let f_star = energy::energy_star(model, target);
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let ws = SpectralWorkspace::new(target.n())?;
            let u = prepare_recovery(model, target, eps)?;
            Ok(LiminfRow {
                eps,
                slope_eps: energy::slope_eps(model, &ws, &u, eps)?,
                energy_gap: energy::energy_eps(model, &ws, &u, eps)? - f_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaLiminfTable { slope_star, tol, rows })
}

pub fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::invalid("eps list is empty"));
    }
    if eps_list.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::invalid("every eps must lie in (0, 1]"));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("eps list must be strictly decreasing"));
    }
    Ok(())
}

pub const CHECKPOINTS: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `sup_t ‖u_ε(t) - u(t)‖₋₁` over the comparison times.
    pub sup_hminus1: f64,
    /// `∫₀ᵀ (|∇F_ε|(u_ε) - |∇F**|(u))² dt`.
    pub slope_l2t: f64,
    /// `|F_ε(u_ε(t_i)) - F**(u(t_i))|` at `t_i = i T / 5`.
    pub energy_err: [f64; CHECKPOINTS],
    pub runtime_s: f64,
    /// Largest `‖u_ε(t)‖_∞` over the comparison times.
    pub linf: f64,
    /// Largest `F_ε + |∇F_ε|` along the run.
    pub energy_slope_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConvergenceVerdict {
    pub hminus1_decreasing: bool,
    pub slope_decreasing: bool,
    pub energy_decreasing: bool,
}

impl ConvergenceVerdict {
    pub fn pass(&self) -> bool {
        self.hminus1_decreasing && self.slope_decreasing && self.energy_decreasing
    }
}

/// Decreasing down the column, with at most one inversion of at most 10%.
pub fn decreasing_with_tolerance(column: &[f64]) -> bool {
    let mut inversions = 0;
    for w in column.windows(2) {
        if w[1] >= w[0] {
            inversions += 1;
            if inversions > 1 || w[1] > 1.1 * w[0] {
                return false;
            }
        }
    }
    true
}

impl ConvergenceTable {
    pub const CSV_HEADER: &'static str =
        "eps,sup_hminus1,slope_l2t,energy_err_t1,energy_err_t2,energy_err_t3,energy_err_t4,energy_err_t5,runtime_s";

    pub fn to_csv(&self, with_runtime: bool) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:.16e},{:.16e},{:.16e}", r.eps, r.sup_hminus1, r.slope_l2t);
            for e in r.energy_err {
                let _ = write!(out, ",{e:.16e}");
            }
            if with_runtime {
                let _ = writeln!(out, ",{:.3}", r.runtime_s);
            } else {
                out.push_str(",\n");
            }
        }
        out
    }

    pub fn column(&self, f: impl Fn(&ConvergenceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// Errors at or below `floor` count as converged and need not decrease.
    pub fn verdict(&self, floor: f64) -> ConvergenceVerdict {
        let trend = |col: Vec<f64>| col.iter().all(|&v| v <= floor) || decreasing_with_tolerance(&col);
        ConvergenceVerdict {
            hminus1_decreasing: trend(self.column(|r| r.sup_hminus1)),
            slope_decreasing: trend(self.column(|r| r.slope_l2t)),
            energy_decreasing: (0..CHECKPOINTS).all(|i| trend(self.column(|r| r.energy_err[i]))),
        }
    }
}

/// Default step of the study. Both schemes are first order and their
/// step errors differ (the stabilization term acts only on the Cahn-Hilliard
/// side), so the step must sit well below the ε-effects being compared. Near
/// times where the signed energy error changes sign the margin is smallest;
/// at `1e-5` the energy checkpoints of the sinusoid study are step-dominated.
pub const STUDY_TAU: f64 = 2.5e-7;

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub t_end: f64,
    /// Step for every Cahn-Hilliard run; `None` uses [`STUDY_TAU`], capped by
    /// the ε-dependent default.
    pub tau_ch: Option<f64>,
    /// `None` uses [`STUDY_TAU`].
    pub tau_stefan: Option<f64>,
    /// Number of equally spaced comparison times after 0.
    pub comparisons: usize,
    pub nonlinear_tol: f64,
    pub nonlinear_max_iter: usize,
}

impl StudyConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            tau_ch: None,
            tau_stefan: None,
            comparisons: 100,
            nonlinear_tol: 1e-10,
            nonlinear_max_iter: 50,
        }
    }
}

/// Solver settings whose step divides the comparison interval.
fn aligned(t_end: f64, comparisons: usize, tau: f64, base: SolverConfig) -> SolverConfig {
    let interval = t_end / comparisons as f64;
    let stride = ((interval / tau) - 1e-9).ceil().max(1.0) as usize;
    SolverConfig {
        tau: interval / stride as f64,
        t_end,
        snapshot_stride: stride,
        ..base
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub table: ConvergenceTable,
    pub stefan: Trajectory,
    /// Chemical potential `w_ε` at `T`, one per ε.
    pub chem_pot: Vec<PeriodicField>,
}

/// Cahn-Hilliard runs from the recovery data of `target` for every ε,
/// compared with the relaxed flow from `target`.
pub fn convergence_study(
    model: &PotentialModel,
    target: &PeriodicField,
    eps_list: &[f64],
    cfg: &StudyConfig,
) -> Result<ConvergenceStudy> {
    check_eps_list(eps_list)?;
    if !(cfg.t_end > 0.0) || cfg.comparisons == 0 {
        return Err(Error::invalid("study needs t_end > 0 and at least one comparison time"));
    }
    let base = SolverConfig {
        nonlinear_tol: cfg.nonlinear_tol,
        nonlinear_max_iter: cfg.nonlinear_max_iter,
        ..SolverConfig::stefan(cfg.t_end)
    };
    let stefan_cfg = aligned(
        cfg.t_end,
        cfg.comparisons,
        cfg.tau_stefan.unwrap_or(STUDY_TAU),
        base.clone(),
    );

    enum Job {
        Stefan,
        Ch(f64),
    }
    let jobs: Vec<Job> = std::iter::once(Job::Stefan)
        .chain(eps_list.iter().map(|&e| Job::Ch(e)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let traj = match *job {
                Job::Stefan => run_stefan(model, target, &stefan_cfg)?,
                Job::Ch(eps) => {
                    let u0 = prepare_recovery(model, target, eps)?;
                    let tau = cfg
                        .tau_ch
                        .unwrap_or_else(|| STUDY_TAU.min(crate::dynamics::default_ch_tau(eps)));
                    let c = aligned(cfg.t_end, cfg.comparisons, tau, base.clone());
                    run_cahn_hilliard(model, &u0, eps, &c)?
                }
            };
            Ok((traj, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (stefan, _) = results.remove(0);
    let ws = SpectralWorkspace::new(target.n())?;

    let mut rows = Vec::with_capacity(eps_list.len());
    let mut chem_pot = Vec::with_capacity(eps_list.len());
    for (&eps, (traj, runtime_s)) in eps_list.iter().zip(results) {
        let mut sup_hminus1: f64 = 0.0;
        let mut linf: f64 = 0.0;
        for (u_eps, u) in traj.snapshots.iter().zip(&stefan.snapshots) {
            sup_hminus1 = sup_hminus1.max(ws.h_minus1_norm(&u_eps.sub(u)?)?);
            linf = linf.max(u_eps.linf_norm());
        }
        let slope_l2t = traj
            .ledger
            .windows(2)
            .map(|w| {
                let d = w[1].slope2.sqrt() - stefan.slope_at(w[1].t);
                (w[1].t - w[0].t) * d * d
            })
            .sum();
        let mut energy_err = [0.0; CHECKPOINTS];
        for (i, e) in energy_err.iter_mut().enumerate() {
            let t = cfg.t_end * (i + 1) as f64 / CHECKPOINTS as f64;
            *e = (traj.energy_at(t) - stefan.energy_at(t)).abs();
        }
        let energy_slope_bound = traj
            .ledger
            .iter()
            .map(|r| r.energy + r.slope2.sqrt())
            .fold(0.0, f64::max);
        chem_pot.push(energy::chemical_potential(model, &ws, traj.last(), eps)?);
        rows.push(ConvergenceRow {
            eps,
            sup_hminus1,
            slope_l2t,
            energy_err,
            runtime_s,
            linf,
            energy_slope_bound,
        });
    }
    Ok(ConvergenceStudy {
        table: ConvergenceTable { rows },
        stefan,
        chem_pot,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinfAudit {
    pub bounds: Vec<f64>,
    pub max: f64,
    pub median: f64,
    /// Last bound ≤ 1.1 × median.
    pub no_growth: bool,
}

pub fn linf_audit(bounds: &[f64]) -> LinfAudit {
    let mut sorted = bounds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let last = bounds.last().copied().unwrap_or(0.0);
    LinfAudit {
        bounds: bounds.to_vec(),
        max: sorted.last().copied().unwrap_or(0.0),
        median,
        no_growth: last <= 1.1 * median,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChemicalPotentialAudit {
    pub h1_norms: Vec<f64>,
    /// `‖w_{ε_{i+1}} - w_{ε_i}‖_{L²}`.
    pub increments: Vec<f64>,
    /// Increments over the last three ε decrease.
    pub cauchy: bool,
}

pub fn chemical_potential_audit(chem_pot: &[PeriodicField]) -> Result<ChemicalPotentialAudit> {
    let mut h1_norms = Vec::with_capacity(chem_pot.len());
    for w in chem_pot {
        let ws = SpectralWorkspace::new(w.n())?;
        let wx = ws.derivative(w, 1)?;
        h1_norms.push((w.l2_norm().powi(2) + wx.l2_norm().powi(2)).sqrt());
    }
    let increments = chem_pot
        .windows(2)
        .map(|p| Ok(p[1].sub(&p[0])?.l2_norm()))
        .collect::<Result<Vec<f64>>>()?;
    let cauchy = increments.len() < 2 || {
        let k = increments.len();
        increments[k - 1] < increments[k - 2]
    };
    Ok(ChemicalPotentialAudit {
        h1_norms,
        increments,
        cauchy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preparation::wrinkle;
    use std::f64::consts::PI;

    fn dw() -> PotentialModel {
        PotentialModel::double_well()
    }

    fn square(n: usize, periods: usize) -> PeriodicField {
        PeriodicField::from_fn(n, |x| if (x * periods as f64).fract() < 0.5 { 1.0 } else { -1.0 }).unwrap()
    }

    #[test]
    fn young_measure_of_a_constant_is_dirac() {
        let f = PeriodicField::constant(256, 0.7).unwrap();
        let m = young_measure(&[f], 32, 64).unwrap();
        for w in 0..32 {
            assert_eq!(m.occupied_bins(w), 1);
            assert!((m.hist[w].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(m.variance(w).abs() < 1e-20);
            assert!((m.mean(w) - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn young_measure_of_a_square_wave_has_two_atoms() {
        let m = young_measure(&[square(1024, 64)], 16, 64).unwrap();
        assert_eq!(m.bound, 1.0);
        for w in 0..16 {
            assert_eq!(m.occupied_bins(w), 2);
            assert!((m.mass_where(w, |v| v == 1.0) - 0.5).abs() < 1e-12);
            assert!((m.mass_where(w, |v| v == -1.0) - 0.5).abs() < 1e-12);
            assert!(m.support_per_window[w] == Interval::new(-1.0, 1.0));
        }
    }

    #[test]
    fn first_moment_is_the_window_mean() {
        let f = PeriodicField::from_fn(512, |x| 1.3 * (2.0 * PI * x).sin() + 0.2 * (14.0 * PI * x).cos()).unwrap();
        let m = young_measure(std::slice::from_ref(&f), 32, 64).unwrap();
        for w in 0..32 {
            let avg = f.values()[w * 16..(w + 1) * 16].iter().sum::<f64>() / 16.0;
            assert!((m.mean(w) - avg).abs() < 1e-14);
            let s = m.support_per_window[w];
            assert!(s.lo >= -m.bound && s.hi <= m.bound);
        }
        assert!(m.trend(&[f], |v| v)[0] < 1e-14);
    }

    #[test]
    fn young_measure_rejects_bad_shapes() {
        let f = PeriodicField::constant(64, 0.0).unwrap();
        assert!(young_measure(&[], 8, 8).is_err());
        assert!(young_measure(std::slice::from_ref(&f), 7, 8).is_err());
        assert!(young_measure(&[f.clone(), PeriodicField::constant(32, 0.0).unwrap()], 8, 8).is_err());
        assert!(window_resolution_warning(32, 0.1).is_some());
        assert!(window_resolution_warning(4, 0.01).is_none());
    }

    #[test]
    fn dichotomy_on_canonical_data() {
        let p = dw();
        let zero = PeriodicField::constant(1024, 0.0).unwrap();
        let fields: Vec<PeriodicField> = [0.01, 0.001]
            .iter()
            .map(|&e| prepare_recovery(&p, &zero, e).unwrap())
            .collect();
        let m = young_measure(&fields, 8, 64).unwrap();
        let r = audit_support_dichotomy(&p, &m, &zero, 0.05).unwrap();
        assert!(r.pass(), "{:?}", r.violations);
        assert!(r.total_sigma_g_mass() >= 0.99);

        let smooth = PeriodicField::from_fn(1024, |x| 1.6 + 0.3 * (2.0 * PI * x).sin()).unwrap();
        let m = young_measure(std::slice::from_ref(&smooth), 32, 64).unwrap();
        let r = audit_support_dichotomy(&p, &m, &smooth, 0.05).unwrap();
        assert!(r.pass());
        assert!(r
            .windows
            .iter()
            .all(|w| w.class == WindowClass::NearDirac && w.variance <= 1e-3));
    }

    #[test]
    fn dichotomy_flags_oscillation_outside_sigma_g() {
        let p = dw();
        let f = PeriodicField::from_fn(512, |x| if (x * 64.0).fract() < 0.5 { 1.4 } else { 2.2 }).unwrap();
        let m = young_measure(&[f], 8, 64).unwrap();
        let limit = PeriodicField::constant(512, 1.8).unwrap();
        let r = audit_support_dichotomy(&p, &m, &limit, 0.05).unwrap();
        assert!(r.windows.iter().all(|w| w.class == WindowClass::Violation));
        assert!(!r.pass());
    }

    #[test]
    fn correlation_excess_vanishes_on_exact_cases() {
        let p = dw();
        let dirac = young_measure(&[PeriodicField::constant(64, 1.7).unwrap()], 8, 16).unwrap();
        assert!(audit_correlation(&p, &dirac, |v| v).unwrap().max_positive_excess.abs() < 1e-12);
        let two = young_measure(&[square(256, 32)], 8, 16).unwrap();
        assert!(audit_correlation(&p, &two, |v| v).unwrap().max_positive_excess < 1e-12);
        let wiggle = young_measure(
            &[PeriodicField::from_fn(256, |x| (20.0 * PI * x).sin()).unwrap()],
            8,
            16,
        )
        .unwrap();
        assert!(
            audit_correlation(&p, &wiggle, |_| 3.0)
                .unwrap()
                .max_positive_excess
                .abs()
                < 1e-12
        );
        assert!(audit_correlation(&p, &wiggle, |v| -v).is_err());
    }

    #[test]
    fn critical_points_of_simple_fields() {
        let s = PeriodicField::from_fn(64, |x| (2.0 * PI * x).sin()).unwrap();
        assert_eq!(critical_points(&s), vec![16, 48]);
        assert!(critical_points(&PeriodicField::constant(32, 1.0).unwrap()).is_empty());
        let sq = square(64, 2);
        assert_eq!(critical_points(&sq).len(), 4);
    }

    #[test]
    fn oscillation_audit_cases() {
        let p = dw();
        let small = PeriodicField::from_fn(512, |x| {
            1.6 + 0.3 * (2.0 * PI * x).sin() + 0.005 * (64.0 * PI * x).sin()
        })
        .unwrap();
        assert!(oscillation_audit(&p, &small, 0.05, 0.05, 0.05, None).unwrap().pass());

        let wr = prepare_recovery(&p, &PeriodicField::constant(512, 0.0).unwrap(), 0.01).unwrap();
        let r = oscillation_audit(&p, &wr, 0.01, 0.05, 0.2, Some(1e6)).unwrap();
        assert!(r.pass() && r.pairs_checked > 0);
        assert_eq!(r.within_slope_bound, Some(true));

        let saw = PeriodicField::from_fn(512, |x| 1.2 + 1.2 * (x * 32.0).fract()).unwrap();
        let r = oscillation_audit(&p, &saw, 0.05, 0.05, 0.05, None).unwrap();
        assert!(!r.pass());
        assert!(r.violations.iter().all(|v| v.jump >= 0.05));
    }

    #[test]
    fn eps0_from_a_sweep() {
        assert_eq!(empirical_eps0(&[(0.1, false), (0.05, true), (0.025, true)]), Some(0.05));
        assert_eq!(empirical_eps0(&[(0.1, true), (0.05, false)]), None);
    }

    #[test]
    fn neighborhood_cases() {
        let p = dw();
        let plateau = PeriodicField::from_fn(256, |x| 1.6 + 0.3 * (2.0 * PI * x).cos()).unwrap();
        let r = neighborhood_audit(&p, &plateau, 0.05, 0.1).unwrap();
        assert_eq!(r.qualifying, 256);
        assert!(r.largest_delta.is_infinite() && r.pass());

        let wr = prepare_recovery(&p, &PeriodicField::constant(256, 0.0).unwrap(), 0.01).unwrap();
        let r = neighborhood_audit(&p, &wr, 0.05, 0.1).unwrap();
        assert_eq!(r.qualifying, 0);

        // plateau at 1.5 on [0.1, 0.4) with buffers at 1.08 of width 0.1, wrinkled Σ_G values after
        let base = PeriodicField::from_fn(512, |x| match x {
            x if x < 0.1 => 1.08,
            x if x < 0.4 => 1.5,
            x if x < 0.5 => 1.08,
            _ => 0.2,
        })
        .unwrap();
        let w = wrinkle(&p, &base, Interval::new(0.5, 1.0), 0.005).unwrap();
        let r = neighborhood_audit(&p, &w.field, 0.05, 0.05).unwrap();
        assert!((r.largest_delta - 0.1).abs() <= 2.0 / 512.0, "{}", r.largest_delta);
        assert!(r.pass());
        assert!(!neighborhood_audit(&p, &w.field, 0.05, 0.2).unwrap().pass());
    }

    #[test]
    fn liminf_probe_cases() {
        let p = dw();
        let c = PeriodicField::constant(256, 0.3).unwrap();
        let t = gamma_liminf_probe(&p, &c, &[0.04, 0.02]).unwrap();
        assert_eq!(t.slope_star, 0.0);
        assert!(t.holds());

        let smooth = PeriodicField::from_fn(512, |x| 1.6 + 0.3 * (2.0 * PI * x).sin()).unwrap();
        let t = gamma_liminf_probe(&p, &smooth, &[0.04, 0.02, 0.01]).unwrap();
        assert!(t.holds());
        assert!(t.tol < 0.05 * (1.0 + t.slope_star));
        let gaps: Vec<f64> = t.rows.iter().map(|r| r.slope_eps - t.slope_star).collect();
        // O(ε²): halving ε quarters the gap
        for g in gaps.windows(2) {
            assert!((g[0] / g[1] - 4.0).abs() < 0.2, "{gaps:?}");
        }
        assert!(gamma_liminf_probe(&p, &smooth, &[0.01, 0.02]).is_err());
    }

    #[test]
    fn column_trend_rule() {
        assert!(decreasing_with_tolerance(&[3.0, 2.0, 1.0]));
        assert!(decreasing_with_tolerance(&[3.0, 2.0, 2.1, 1.0]));
        assert!(!decreasing_with_tolerance(&[3.0, 2.0, 2.5]));
        assert!(!decreasing_with_tolerance(&[3.0, 3.1, 2.0, 2.1]));
    }

    #[test]
    fn study_of_a_constant_target_is_stationary() {
        let p = dw();
        let c = PeriodicField::constant(64, 1.5).unwrap();
        let mut cfg = StudyConfig::new(1e-3);
        cfg.comparisons = 10;
        let s = convergence_study(&p, &c, &[0.1, 0.05], &cfg).unwrap();
        for r in &s.table.rows {
            assert!(r.sup_hminus1 < 1e-12 && r.slope_l2t < 1e-20);
            assert!(r.energy_err.iter().all(|&e| e < 1e-12));
        }
        assert!(s.table.verdict(1e-10).pass());
        let csv = s.table.to_csv(false);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn linf_and_chemical_potential_audits() {
        let a = linf_audit(&[1.9, 1.91, 1.9]);
        assert!(a.no_growth && a.max == 1.91);
        assert!(!linf_audit(&[1.0, 1.0, 2.0]).no_growth);
        let w: Vec<PeriodicField> = [0.3, 0.1, 0.05]
            .iter()
            .map(|&d| PeriodicField::from_fn(64, |x| (2.0 * PI * x).sin() * (1.0 + d)).unwrap())
            .collect();
        let c = chemical_potential_audit(&w).unwrap();
        assert!(c.cauchy && c.increments.len() == 2);
    }
}
