//! Well-prepared initial data and wrinkled microstructures.
//!
//! Inside every maximal run of grid cells whose target values lie in one
//! component `(a, b)` of `Σ_G`, the target is replaced by a two-phase profile
//! alternating between `a` and `b` with wavelength `ε^{1/2}` and linear
//! transitions of width `ε^{3/4}`. Each period carries the lever-rule fraction
//! of the target over that period, and samples are exact cell averages of the
//! piecewise-linear profile, so the discrete mass is preserved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::potential::{Interval, PotentialModel};

/// Exponents of the microstructure scales `λ_ε = ε^p`, `δ_ε = ε^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub wavelength_exponent: f64,
    pub transition_exponent: f64,
}

impl Default for Scales {
    fn default() -> Self {
        Self {
            wavelength_exponent: 0.5,
            transition_exponent: 0.75,
        }
    }
}

impl Scales {
    fn validate(&self) -> Result<()> {
        let (p, q) = (self.wavelength_exponent, self.transition_exponent);
        if !(p > 0.0 && q > p && q < 1.0) {
            return Err(Error::invalid(format!(
                "scale exponents must satisfy 0 < wavelength ({p}) < transition ({q}) < 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RegionMode {
    Keep,
    TwoPhase {
        a: f64,
        b: f64,
        /// Phase placed at both ends of every period.
        edge: f64,
        periods: usize,
        /// Volume fraction of `a` over the region (lever rule).
        lambda: f64,
        /// Fraction of the inner phase in each period.
        period_fractions: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRegion {
    pub first_cell: usize,
    pub cells: usize,
    /// Arc of the torus covered, `[lo, hi]` with `hi` possibly above 1 on wrap-around.
    pub arc: Interval,
    pub target_mean: f64,
    pub mode: RegionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    pub target: Vec<f64>,
    pub eps: f64,
    pub scales: Scales,
    pub lambda_osc: f64,
    pub delta_trans: f64,
    pub regions: Vec<PlannedRegion>,
    /// Constant added to the largest two-phase region to restore the mean.
    pub mass_correction: f64,
    pub warnings: Vec<String>,
}

impl RecoveryPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan is plain data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "recovery plan".into(),
            message: e.to_string(),
        })
    }

    pub fn two_phase_regions(&self) -> impl Iterator<Item = &PlannedRegion> {
        self.regions
            .iter()
            .filter(|r| matches!(r.mode, RegionMode::TwoPhase { .. }))
    }
}

/// Recovery sequence member `u₀_ε` for `target`.
pub fn prepare_recovery(model: &PotentialModel, target: &PeriodicField, eps: f64) -> Result<PeriodicField> {
    Ok(plan_recovery(model, target, eps, Scales::default())?.0)
}

pub fn plan_recovery(
    model: &PotentialModel,
    target: &PeriodicField,
    eps: f64,
    scales: Scales,
) -> Result<(PeriodicField, RecoveryPlan)> {
    let mask = vec![true; target.n()];
    fill(model, target, eps, scales, &mask)
}

#[derive(Debug, Clone)]
pub struct Wrinkled {
    pub field: PeriodicField,
    pub plan: RecoveryPlan,
    /// True when `region ∩ {base ∈ Σ_G}` contains no grid point.
    pub empty: bool,
}

/// Two-phase oscillation inside `region ∩ {base ∈ Σ_G}`. `region` is an arc
/// of the torus; `lo > hi` wraps through 0.
pub fn wrinkle(model: &PotentialModel, base: &PeriodicField, region: Interval, eps: f64) -> Result<Wrinkled> {
    wrinkle_with(model, base, region, eps, Scales::default())
}

pub fn wrinkle_with(
    model: &PotentialModel,
    base: &PeriodicField,
    region: Interval,
    eps: f64,
    scales: Scales,
) -> Result<Wrinkled> {
    if !(0.0..=1.0).contains(&region.lo) || !(0.0..=1.0).contains(&region.hi) {
        return Err(Error::invalid(format!(
            "region [{}, {}] must lie in [0, 1]",
            region.lo, region.hi
        )));
    }
    let mask: Vec<bool> = (0..base.n())
        .map(|j| {
            let x = base.x(j);
            let inside = if region.lo <= region.hi {
                region.lo <= x && x < region.hi
            } else {
                x >= region.lo || x < region.hi
            };
            inside && model.in_sigma_g(base.values()[j])
        })
        .collect();
    let empty = !mask.iter().any(|&m| m);
    let (field, plan) = fill(model, base, eps, scales, &mask)?;
    Ok(Wrinkled { field, plan, empty })
}

/// Maximal cyclic runs of equal labels; a single run covering the torus is
/// reported as starting at cell 0.
fn cyclic_runs(labels: &[Option<usize>]) -> Vec<(usize, usize, Option<usize>)> {
    let n = labels.len();
    let start = (0..n).find(|&j| labels[j] != labels[(j + n - 1) % n]);
    let Some(start) = start else {
        return vec![(0, n, labels[0])];
    };
    let mut runs = Vec::new();
    let mut first = start;
    let mut len = 1;
    for step in 1..n {
        let j = (start + step) % n;
        if labels[j] == labels[first] {
            len += 1;
        } else {
            runs.push((first, len, labels[first]));
            first = j;
            len = 1;
        }
    }
    runs.push((first, len, labels[first]));
    runs
}

fn fill(
    model: &PotentialModel,
    target: &PeriodicField,
    eps: f64,
    scales: Scales,
    mask: &[bool],
) -> Result<(PeriodicField, RecoveryPlan)> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    scales.validate()?;
    model.check_domain(target.min())?;
    model.check_domain(target.max())?;

    let n = target.n();
    let h = target.spacing();
    let t = target.values();
    let lambda_osc = eps.powf(scales.wavelength_exponent);
    let delta_trans = eps.powf(scales.transition_exponent);
    let labels: Vec<Option<usize>> = (0..n)
        .map(|j| {
            if !mask[j] {
                return None;
            }
            model.sigma_g().iter().position(|s| s.contains_open(t[j]))
        })
        .collect();

    let mut out = t.to_vec();
    let mut regions = Vec::new();
    let mut warnings = Vec::new();
    for (first, cells, label) in cyclic_runs(&labels) {
        let local: Vec<f64> = (0..cells).map(|i| t[(first + i) % n]).collect();
        let target_mean = local.iter().sum::<f64>() / cells as f64;
        let lo = (first as f64 - 0.5) * h;
        let arc = Interval::new(lo, lo + cells as f64 * h);
        let length = cells as f64 * h;
        let mode = match label {
            None => RegionMode::Keep,
            Some(_) if length < lambda_osc => {
                warnings.push(format!(
                    "region [{:.6}, {:.6}] is shorter than one wavelength {lambda_osc:.6}; left unmodified",
                    arc.lo, arc.hi
                ));
                RegionMode::Keep
            }
            Some(c) => {
                let s = model.sigma_g()[c];
                let whole = cells == n;
                let outside = if whole { s.lo } else { t[(first + n - 1) % n] };
                let (edge, inner) = if (outside - s.lo).abs() <= (outside - s.hi).abs() {
                    (s.lo, s.hi)
                } else {
                    (s.hi, s.lo)
                };
                let profile = TwoPhaseProfile::build(&local, h, lambda_osc, delta_trans, edge, inner);
                for (i, v) in profile.cell_averages(cells, h).into_iter().enumerate() {
                    out[(first + i) % n] = v;
                }
                let inner_fraction = profile.inner_fraction();
                let lambda = if inner == s.lo {
                    inner_fraction
                } else {
                    1.0 - inner_fraction
                };
                RegionMode::TwoPhase {
                    a: s.lo,
                    b: s.hi,
                    edge,
                    periods: profile.fractions.len(),
                    lambda,
                    period_fractions: profile.fractions,
                }
            }
        };
        regions.push(PlannedRegion {
            first_cell: first,
            cells,
            arc,
            target_mean,
            mode,
        });
    }

    // restore the mean on the largest two-phase region
    let drift = target.mean() - out.iter().sum::<f64>() / n as f64;
    let mut mass_correction = 0.0;
    if let Some(r) = regions
        .iter()
        .filter(|r| matches!(r.mode, RegionMode::TwoPhase { .. }))
        .max_by_key(|r| r.cells)
    {
        mass_correction = drift * n as f64 / r.cells as f64;
        for i in 0..r.cells {
            out[(r.first_cell + i) % n] += mass_correction;
        }
    }

    let field = PeriodicField::new(out)?;
    let plan = RecoveryPlan {
        target: t.to_vec(),
        eps,
        scales,
        lambda_osc,
        delta_trans,
        regions,
        mass_correction,
        warnings,
    };
    Ok((field, plan))
}

/// Piecewise-linear two-phase profile on `[0, L]`, stored as knots with
/// cumulative integrals.
struct TwoPhaseProfile {
    knots: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
    fractions: Vec<f64>,
    period: f64,
}

impl TwoPhaseProfile {
    fn build(local: &[f64], h: f64, wavelength: f64, delta: f64, edge: f64, inner: f64) -> Self {
        let length = local.len() as f64 * h;
        let periods = ((length / wavelength).round() as usize).max(1);
        let period = length / periods as f64;

        let mut knots = vec![(0.0, edge)];
        let mut fractions = Vec::with_capacity(periods);
        for p in 0..periods {
            let s0 = p as f64 * period;
            let mean = integrate_cells(local, h, s0, s0 + period) / period;
            let theta = ((mean - edge) / (inner - edge)).clamp(0.0, 1.0);
            fractions.push(theta);
            let w = theta * period;
            let d = delta.min(w).min(period - w);
            let c0 = s0 + 0.5 * (period - w);
            let c1 = s0 + 0.5 * (period + w);
            knots.push((c0 - 0.5 * d, edge));
            knots.push((c0 + 0.5 * d, inner));
            knots.push((c1 - 0.5 * d, inner));
            knots.push((c1 + 0.5 * d, edge));
        }
        knots.push((length, edge));

        let mut cumulative = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in knots.windows(2) {
            acc += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
            cumulative.push(acc);
        }
        Self {
            knots,
            cumulative,
            fractions,
            period,
        }
    }

    /// `∫₀^s` of the profile.
    fn antiderivative(&self, s: f64) -> f64 {
        let i = self.knots.partition_point(|k| k.0 <= s).clamp(1, self.knots.len() - 1) - 1;
        let (s0, v0) = self.knots[i];
        let (s1, v1) = self.knots[i + 1];
        let ds = s - s0;
        let slope = if s1 > s0 { (v1 - v0) / (s1 - s0) } else { 0.0 };
        self.cumulative[i] + ds * v0 + 0.5 * slope * ds * ds
    }

    fn cell_averages(&self, cells: usize, h: f64) -> Vec<f64> {
        (0..cells)
            .map(|i| (self.antiderivative((i + 1) as f64 * h) - self.antiderivative(i as f64 * h)) / h)
            .collect()
    }

    fn inner_fraction(&self) -> f64 {
        self.fractions.iter().sum::<f64>() * self.period / (self.period * self.fractions.len() as f64)
    }
}

/// Integral over `[s0, s1]` of the cellwise-constant function with values `local`.
fn integrate_cells(local: &[f64], h: f64, s0: f64, s1: f64) -> f64 {
    let first = ((s0 / h).floor() as usize).min(local.len() - 1);
    let mut total = 0.0;
    for (i, &v) in local.iter().enumerate().skip(first) {
        let lo = i as f64 * h;
        if lo >= s1 {
            break;
        }
        let overlap = (lo + h).min(s1) - lo.max(s0);
        if overlap > 0.0 {
            total += overlap * v;
        }
    }
    total
}

/// Sets of grid cells on the torus, as arcs `[lo, hi]` (hi may exceed 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSet {
    pub arcs: Vec<Interval>,
    pub cells: usize,
}

impl CellSet {
    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    pub fn measure(&self) -> f64 {
        self.arcs.iter().map(|a| a.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionClassification {
    /// `{x : f(x) ∉ closure(Σ_G)}`.
    pub omega: CellSet,
    /// `C_i = {x : f(x) ∈ closure(Σ_i)}`, one per component of `Σ_G`.
    pub components: Vec<CellSet>,
    /// `(i, j, dist(C_i, C_j))` for non-empty pairs.
    pub distances: Vec<(usize, usize, f64)>,
}

/// Membership tolerance for the closure of `Σ_G`.
const CLOSURE_TOL: f64 = 1e-10;

pub fn classify_regions(model: &PotentialModel, f: &PeriodicField) -> RegionClassification {
    let n = f.n();
    let h = f.spacing();
    let labels: Vec<Option<usize>> = f
        .values()
        .iter()
        .map(|&v| model.sigma_g_component(v, CLOSURE_TOL))
        .collect();
    let k = model.sigma_g().len();
    let mut omega = CellSet {
        arcs: Vec::new(),
        cells: 0,
    };
    let mut components = vec![
        CellSet {
            arcs: Vec::new(),
            cells: 0
        };
        k
    ];
    for (first, cells, label) in cyclic_runs(&labels) {
        let lo = (first as f64 - 0.5) * h;
        let arc = if cells == n {
            Interval::new(0.0, 1.0)
        } else {
            Interval::new(lo, lo + cells as f64 * h)
        };
        let set = match label {
            None => &mut omega,
            Some(i) => &mut components[i],
        };
        set.arcs.push(arc);
        set.cells += cells;
    }
    let mut distances = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if components[i].is_empty() || components[j].is_empty() {
                continue;
            }
            let d = components[i]
                .arcs
                .iter()
                .flat_map(|a| components[j].arcs.iter().map(move |b| arc_distance(a, b)))
                .fold(f64::INFINITY, f64::min);
            distances.push((i, j, d));
        }
    }
    RegionClassification {
        omega,
        components,
        distances,
    }
}

fn arc_distance(a: &Interval, b: &Interval) -> f64 {
    let mut best = f64::INFINITY;
    for shift in [-1.0, 0.0, 1.0] {
        let (lo, hi) = (b.lo + shift, b.hi + shift);
        let gap = if hi < a.lo {
            a.lo - hi
        } else if lo > a.hi {
            lo - a.hi
        } else {
            0.0
        };
        best = best.min(gap);
    }
    best
}
