//! The potential `W`, its convex envelope `W**`, the unstable sets and the
//! concavity defect functions `ψ` and `ω`.
//!
//! The envelope is tabulated once, at construction, as the lower convex hull of
//! uniform samples of `W` over a bounded hull domain. Hull edges that skip
//! samples lying strictly above them are the affine pieces of `W**`; their
//! open spans are the components of the global unstable set `Σ_G`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_HULL_SAMPLES: usize = 4096;
pub const MIN_HULL_SAMPLES: usize = 64;
const PSI_SCAN: usize = 1024;
const OMEGA_PSI_SCAN: usize = 128;
pub const OMEGA_GRID: usize = 512;
const COLLINEAR_RUN: usize = 8;
const COLLINEAR_TOL: f64 = 1e-13;

/// An interval of the real line. Whether the endpoints belong to it depends on
/// the query used.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains_open(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }

    pub fn contains_closed(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn dilate(&self, rho: f64) -> Interval {
        Interval::new(self.lo - rho, self.hi + rho)
    }

    /// Distance from `v` to the interval (zero inside).
    pub fn dist(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }
}

/// A maximal affine piece of `W**`: `W**(v) = value_lo + slope (v - lo)` on
/// `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSegment {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub value_lo: f64,
}

impl AffineSegment {
    pub fn value(&self, v: f64) -> f64 {
        self.value_lo + self.slope * (v - self.lo)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }
}

/// Lower convex hull of sorted samples.
#[derive(Debug, Clone)]
pub struct Envelope {
    /// Hull vertices `(v, W**(v))`.
    pub hull_nodes: Vec<(f64, f64)>,
    /// Hull edges lying strictly below the sampled function in their interior.
    pub affine_segments: Vec<AffineSegment>,
}

/// Monotone-chain lower hull. Edges that skip samples whose gap above the edge
/// exceeds `gap_tol` are reported as affine segments.
pub fn convex_envelope_with_tol(samples: &[(f64, f64)], gap_tol: f64) -> Result<Envelope> {
    if samples.len() < 3 {
        return Err(Error::invalid(format!(
            "convex envelope needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::invalid("samples must be strictly increasing in v"));
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<usize> = Vec::with_capacity(samples.len());
    for (i, &p) in samples.iter().enumerate() {
        while hull.len() >= 2 {
            let o = samples[hull[hull.len() - 2]];
            let a = samples[hull[hull.len() - 1]];
            if cross(o, a, p) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }

    let mut affine_segments = Vec::new();
    for w in hull.windows(2) {
        let (i, j) = (w[0], w[1]);
        if j <= i + 1 {
            continue;
        }
        let (vi, wi) = samples[i];
        let (vj, wj) = samples[j];
        let slope = (wj - wi) / (vj - vi);
        let gap = |k: usize| samples[k].1 - (wi + slope * (samples[k].0 - vi));
        // samples touching the edge split it into separate components
        let mut start = i;
        let mut widest = f64::NEG_INFINITY;
        for k in i + 1..=j {
            let g = if k == j { 0.0 } else { gap(k) };
            if g > gap_tol {
                widest = widest.max(g);
                continue;
            }
            if widest > gap_tol {
                let lo = samples[start].0;
                affine_segments.push(AffineSegment {
                    lo,
                    hi: samples[k].0,
                    slope,
                    value_lo: wi + slope * (lo - vi),
                });
            }
            start = k;
            widest = f64::NEG_INFINITY;
        }
    }
    Ok(Envelope {
        hull_nodes: hull.iter().map(|&i| samples[i]).collect(),
        affine_segments,
    })
}

/// [`convex_envelope_with_tol`] with the default gap tolerance
/// `1e-10 (1 + max W)`.
pub fn convex_envelope(samples: &[(f64, f64)]) -> Result<Envelope> {
    let wmax = samples.iter().map(|s| s.1.abs()).fold(0.0f64, f64::max);
    convex_envelope_with_tol(samples, 1e-10 * (1.0 + wmax))
}

/// A potential together with its tabulated envelope and unstable sets.
///
/// Immutable after construction; cheap to clone (closures are shared).
#[derive(Clone)]
pub struct PotentialModel {
    name: String,
    w: ScalarFn,
    d1: ScalarFn,
    d2: ScalarFn,
    hull_domain: Interval,
    samples: Vec<(f64, f64)>,
    envelope: Envelope,
    sigma_g: Vec<Interval>,
    sigma_l: Vec<Interval>,
    growth_constant: f64,
    growth_warning: bool,
}

impl std::fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PotentialModel")
            .field("name", &self.name)
            .field("hull_domain", &self.hull_domain)
            .field("sigma_g", &self.sigma_g)
            .field("sigma_l", &self.sigma_l)
            .finish()
    }
}

impl PotentialModel {
    /// `W(v) = (1 - v²)² / 4`, tabulated on `[-3, 3]`.
    pub fn double_well() -> Self {
        Self::build(
            "double_well",
            Arc::new(|v: f64| {
                let a = 1.0 - v * v;
                0.25 * a * a
            }),
            Arc::new(|v: f64| v * v * v - v),
            Arc::new(|v: f64| 3.0 * v * v - 1.0),
            Interval::new(-3.0, 3.0),
            DEFAULT_HULL_SAMPLES,
        )
        .expect("double-well tabulation is valid")
    }

    /// Tabulate a user-supplied `W` with derivatives `d1 = W'`, `d2 = W''`.
    pub fn custom(
        name: impl Into<String>,
        w: ScalarFn,
        d1: ScalarFn,
        d2: ScalarFn,
        hull_domain: Interval,
        n_hull: usize,
    ) -> Result<Self> {
        Self::build(name, w, d1, d2, hull_domain, n_hull)
    }

    /// `W(v) = Σ c_i v^i` with exact derivatives.
    pub fn polynomial(coefficients: &[f64], hull_domain: Interval, n_hull: usize) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Potential("empty coefficient list".into()));
        }
        let c0: Vec<f64> = coefficients.to_vec();
        let c1: Vec<f64> = c0.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
        let c2: Vec<f64> = c1.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
        let horner =
            |c: Vec<f64>| -> ScalarFn { Arc::new(move |v: f64| c.iter().rev().fold(0.0, |acc, &ci| acc * v + ci)) };
        Self::build("polynomial", horner(c0), horner(c1), horner(c2), hull_domain, n_hull)
    }

    fn build(
        name: impl Into<String>,
        w: ScalarFn,
        d1: ScalarFn,
        d2: ScalarFn,
        hull_domain: Interval,
        n_hull: usize,
    ) -> Result<Self> {
        if !(hull_domain.lo.is_finite() && hull_domain.hi.is_finite()) || hull_domain.is_empty() {
            return Err(Error::Potential(format!(
                "degenerate hull domain [{}, {}]",
                hull_domain.lo, hull_domain.hi
            )));
        }
        if n_hull < MIN_HULL_SAMPLES {
            return Err(Error::Potential(format!(
                "n_hull = {n_hull} is below the minimum {MIN_HULL_SAMPLES}"
            )));
        }
        let span = hull_domain.len();
        let denom = (n_hull - 1) as f64;
        let samples: Vec<(f64, f64)> = (0..n_hull)
            .map(|i| {
                let v = hull_domain.lo + span * i as f64 / denom;
                (v, w(v))
            })
            .collect();
        if let Some(&(v, wv)) = samples.iter().find(|s| !s.1.is_finite()) {
            return Err(Error::Potential(format!("W({v}) = {wv} is not finite")));
        }
        let left_grows = samples[0].1 > samples[1].1;
        let right_grows = samples[n_hull - 1].1 > samples[n_hull - 2].1;
        if !(left_grows && right_grows) {
            return Err(Error::Potential(format!(
                "W is not coercive on [{}, {}]: it does not increase towards {}",
                hull_domain.lo,
                hull_domain.hi,
                match (left_grows, right_grows) {
                    (false, false) => "either end",
                    (false, true) => "the left end",
                    _ => "the right end",
                }
            )));
        }
        let mut run = 0;
        for k in 1..n_hull - 1 {
            let dd = samples[k + 1].1 - 2.0 * samples[k].1 + samples[k - 1].1;
            if dd.abs() <= COLLINEAR_TOL {
                run += 1;
                // `run` zero second differences span `run + 2` collinear points.
                if run + 2 >= COLLINEAR_RUN {
                    return Err(Error::Potential(format!(
                        "W is affine near v = {} ({COLLINEAR_RUN} collinear samples)",
                        samples[k].0
                    )));
                }
            } else {
                run = 0;
            }
        }

        let envelope = convex_envelope(&samples)?;
        let sigma_g = envelope
            .affine_segments
            .iter()
            .map(|s| Interval::new(s.lo, s.hi))
            .collect();
        let sigma_l = negative_runs(&*d2, &samples);

        let ratios: Vec<f64> = samples
            .iter()
            .map(|&(v, wv)| d1(v).abs() / (1.0 + wv.max(0.0)))
            .collect();
        let growth_constant = ratios.iter().copied().fold(0.0, f64::max);
        let last = ratios.len() - 1;
        let growth_warning = (ratios[0] >= growth_constant && ratios[0] > ratios[1])
            || (ratios[last] >= growth_constant && ratios[last] > ratios[last - 1]);

        Ok(Self {
            name: name.into(),
            w,
            d1,
            d2,
            hull_domain,
            samples,
            envelope,
            sigma_g,
            sigma_l,
            growth_constant,
            growth_warning,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.w)(v)
    }

    pub fn d1(&self, v: f64) -> f64 {
        (self.d1)(v)
    }

    pub fn d2(&self, v: f64) -> f64 {
        (self.d2)(v)
    }

    pub fn hull_domain(&self) -> Interval {
        self.hull_domain
    }

    pub fn hull_spacing(&self) -> f64 {
        self.hull_domain.len() / (self.samples.len() - 1) as f64
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn hull_nodes(&self) -> &[(f64, f64)] {
        &self.envelope.hull_nodes
    }

    pub fn affine_segments(&self) -> &[AffineSegment] {
        &self.envelope.affine_segments
    }

    /// Components `Σ_1, …, Σ_ℓ` of the global unstable set (open intervals).
    pub fn sigma_g(&self) -> &[Interval] {
        &self.sigma_g
    }

    /// Components of the spinodal set `{W'' < 0}`.
    pub fn sigma_l(&self) -> &[Interval] {
        &self.sigma_l
    }

    /// Largest sampled `|W'| / (1 + W)`.
    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    /// Set when `|W'| / (1 + W)` peaks at a tabulation end and still grows
    /// outward there, i.e. the sampled range cannot confirm the growth bound.
    pub fn growth_warning(&self) -> bool {
        self.growth_warning
    }

    pub fn in_domain(&self, v: f64) -> bool {
        self.hull_domain.contains_closed(v)
    }

    pub fn check_domain(&self, v: f64) -> Result<()> {
        if self.in_domain(v) {
            Ok(())
        } else {
            Err(Error::OutsideHull {
                value: v,
                lo: self.hull_domain.lo,
                hi: self.hull_domain.hi,
            })
        }
    }

    fn segment(&self, v: f64) -> Option<&AffineSegment> {
        self.envelope.affine_segments.iter().find(|s| s.contains(v))
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.hull_domain.lo, self.hull_domain.hi)
    }

    /// `W**(v)`; arguments outside the hull domain are clamped.
    pub fn envelope(&self, v: f64) -> f64 {
        let v = self.clamp(v);
        match self.segment(v) {
            Some(s) => s.value(v),
            None => self.eval(v),
        }
    }

    /// `W**'(v)`, or an error outside the hull domain.
    pub fn envelope_derivative(&self, v: f64) -> Result<f64> {
        self.check_domain(v)?;
        Ok(self.envelope_derivative_clamped(v))
    }

    /// `W**'(v)` with the argument clamped to the hull domain.
    pub fn envelope_derivative_clamped(&self, v: f64) -> f64 {
        let v = self.clamp(v);
        match self.segment(v) {
            Some(s) => s.slope,
            None => self.d1(v),
        }
    }

    /// Generalised second derivative of `W**` (zero on affine pieces).
    pub fn envelope_second_derivative(&self, v: f64) -> f64 {
        let v = self.clamp(v);
        match self.segment(v) {
            Some(_) => 0.0,
            None => self.d2(v).max(0.0),
        }
    }

    pub fn in_sigma_g(&self, v: f64) -> bool {
        self.sigma_g.iter().any(|s| s.contains_open(v))
    }

    pub fn dist_to_sigma_g(&self, v: f64) -> f64 {
        self.sigma_g.iter().map(|s| s.dist(v)).fold(f64::INFINITY, f64::min)
    }

    /// Index of the component whose closure (dilated by `tol`) contains `v`.
    pub fn sigma_g_component(&self, v: f64, tol: f64) -> Option<usize> {
        self.sigma_g.iter().position(|s| s.dilate(tol).contains_closed(v))
    }

    /// `Σ_G^ρ = {dist(·, Σ_G) < ρ}` as disjoint open intervals.
    pub fn sigma_g_dilated(&self, rho: f64) -> Vec<Interval> {
        let mut out: Vec<Interval> = Vec::new();
        for s in &self.sigma_g {
            let d = s.dilate(rho);
            match out.last_mut() {
                Some(last) if d.lo <= last.hi => last.hi = last.hi.max(d.hi),
                _ => out.push(d),
            }
        }
        out
    }

    pub fn in_sigma_g_dilated(&self, v: f64, rho: f64) -> bool {
        self.dist_to_sigma_g(v) < rho
    }

    /// Largest `W''` over `[lo, hi]` (sampled, endpoints included).
    pub fn max_d2_on(&self, lo: f64, hi: f64) -> f64 {
        const N: usize = 2048;
        (0..=N)
            .map(|i| self.d2(lo + (hi - lo) * i as f64 / N as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lipschitz constant of `W**'` over `[lo, hi]`.
    pub fn envelope_lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        const N: usize = 2048;
        (0..=N)
            .map(|i| self.envelope_second_derivative(lo + (hi - lo) * i as f64 / N as f64))
            .fold(0.0, f64::max)
    }

    /// Secant slope `(W(b) - W(a)) / (b - a)`.
    pub fn chord_slope(&self, a: f64, b: f64) -> f64 {
        (self.eval(b) - self.eval(a)) / (b - a)
    }

    /// Concavity defect
    /// `ψ(a, b) = max_{c ∈ [a, b]} [W(a) - W(c) + s (c - a)]`, `s` the chord slope.
    pub fn psi(&self, a: f64, b: f64) -> Result<f64> {
        if !(a < b) {
            return Err(Error::invalid(format!("psi needs a < b, got a = {a}, b = {b}")));
        }
        self.check_domain(a)?;
        self.check_domain(b)?;
        Ok(self.psi_scan(a, b, PSI_SCAN))
    }

    fn psi_scan(&self, a: f64, b: f64, n_scan: usize) -> f64 {
        let wa = self.eval(a);
        let s = (self.eval(b) - wa) / (b - a);
        let bracket = |c: f64| wa - self.eval(c) + s * (c - a);
        let step = (b - a) / n_scan as f64;
        let (mut best_i, mut best) = (0usize, 0.0f64);
        for i in 1..=n_scan {
            let g = bracket(a + step * i as f64);
            if g > best {
                best = g;
                best_i = i;
            }
        }
        if best_i == 0 {
            return 0.0;
        }
        let lo = a + step * (best_i as f64 - 1.0);
        let hi = (a + step * (best_i as f64 + 1.0)).min(b);
        best.max(golden_max(&bracket, lo, hi, 1e-12)).max(0.0)
    }

    /// `ω(ρ) = inf ψ(a, b)` over `[a, b] ⊆ [-M, M]` with `b - a ≥ ρ` and
    /// `[a, b] ⊄ Σ_G^ρ`; `+∞` when no interval qualifies.
    pub fn omega(&self, rho: f64, m: f64) -> Result<f64> {
        Ok(self.omega_curve(&[rho], m)?[0])
    }

    /// [`omega`](Self::omega) on several `ρ` values sharing one `ψ` table.
    pub fn omega_curve(&self, rhos: &[f64], m: f64) -> Result<Vec<f64>> {
        if !(m > 0.0) || rhos.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::invalid("omega needs rho > 0 and M > 0"));
        }
        self.check_domain(-m)?;
        self.check_domain(m)?;
        let rho_min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
        let grid: Vec<f64> = (0..OMEGA_GRID)
            .map(|i| -m + 2.0 * m * i as f64 / (OMEGA_GRID - 1) as f64)
            .collect();
        let len_tol = 1e-12 * m;
        // table[i] holds ψ(grid[i], grid[j]) for all admissible-length j > i.
        let table: Vec<Vec<(usize, f64)>> = (0..OMEGA_GRID)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..OMEGA_GRID)
                    .filter(|&j| grid[j] - grid[i] >= rho_min - len_tol)
                    .map(|j| (j, self.psi_scan(grid[i], grid[j], OMEGA_PSI_SCAN)))
                    .collect()
            })
            .collect();
        Ok(rhos
            .iter()
            .map(|&rho| {
                let dilated = self.sigma_g_dilated(rho);
                let mut best = f64::INFINITY;
                for (i, row) in table.iter().enumerate() {
                    let a = grid[i];
                    for &(j, psi) in row {
                        let b = grid[j];
                        if b - a < rho - len_tol {
                            continue;
                        }
                        let contained = dilated.iter().any(|d| d.lo < a && b < d.hi);
                        if !contained && psi < best {
                            best = psi;
                        }
                    }
                }
                best
            })
            .collect())
    }

    /// Envelope table rows `(v, W, W**, W**', in_sigma_G)` at the hull samples.
    pub fn envelope_table_csv(&self) -> String {
        let mut out = String::from("v,W,W_env,W_env_prime,in_sigma_G\n");
        for &(v, wv) in &self.samples {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                v,
                wv,
                self.envelope(v),
                self.envelope_derivative_clamped(v),
                u8::from(self.in_sigma_g(v))
            );
        }
        out
    }

    /// Plain-text listing of the unstable sets.
    pub fn sets_listing(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "potential = {}", self.name);
        let _ = writeln!(
            out,
            "hull_domain = [{:.16e}, {:.16e}]",
            self.hull_domain.lo, self.hull_domain.hi
        );
        let _ = writeln!(out, "hull_samples = {}", self.samples.len());
        let _ = writeln!(out, "growth_constant = {:.6e}", self.growth_constant);
        let _ = writeln!(out, "growth_warning = {}", self.growth_warning);
        let _ = writeln!(out, "[sigma_G] components = {}", self.sigma_g.len());
        for (i, (s, seg)) in self.sigma_g.iter().zip(self.affine_segments()).enumerate() {
            let _ = writeln!(
                out,
                "sigma_{} = ({:.16e}, {:.16e}) slope = {:.16e}",
                i + 1,
                s.lo,
                s.hi,
                seg.slope
            );
        }
        let _ = writeln!(out, "[sigma_L] components = {}", self.sigma_l.len());
        for (i, s) in self.sigma_l.iter().enumerate() {
            let _ = writeln!(out, "spinodal_{} = ({:.16e}, {:.16e})", i + 1, s.lo, s.hi);
        }
        out
    }
}

/// Runs of `d2 < 0` over the sample grid, endpoints refined by bisection.
fn negative_runs(d2: &(dyn Fn(f64) -> f64 + Send + Sync), samples: &[(f64, f64)]) -> Vec<Interval> {
    let bisect = |mut neg: f64, mut pos: f64| {
        for _ in 0..80 {
            let mid = 0.5 * (neg + pos);
            if d2(mid) < 0.0 {
                neg = mid;
            } else {
                pos = mid;
            }
        }
        0.5 * (neg + pos)
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for (k, &(v, _)) in samples.iter().enumerate() {
        let negative = d2(v) < 0.0;
        match (negative, start) {
            (true, None) => {
                start = Some(if k == 0 { v } else { bisect(v, samples[k - 1].0) });
            }
            (false, Some(lo)) => {
                out.push(Interval::new(lo, bisect(samples[k - 1].0, v)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(lo) = start {
        out.push(Interval::new(lo, samples[samples.len() - 1].0));
    }
    out
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
fn golden_max(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn asymmetric() -> PotentialModel {
        PotentialModel::custom(
            "asym",
            Arc::new(|v: f64| 0.25 * (1.0 - v * v).powi(2) + 0.1 * v),
            Arc::new(|v: f64| v * v * v - v + 0.1),
            Arc::new(|v: f64| 3.0 * v * v - 1.0),
            Interval::new(-3.0, 3.0),
            4096,
        )
        .unwrap()
    }

    #[test]
    fn double_well_basics() {
        let p = PotentialModel::double_well();
        assert_eq!(p.eval(0.0), 0.25);
        assert_eq!(p.sigma_g().len(), 1);
        let cell = p.hull_spacing();
        let s = p.sigma_g()[0];
        assert!((s.lo + 1.0).abs() <= cell && (s.hi - 1.0).abs() <= cell);
        assert_eq!(p.sigma_l().len(), 1);
        let l = p.sigma_l()[0];
        let r = 1.0 / 3f64.sqrt();
        assert!((l.lo + r).abs() < 1e-12 && (l.hi - r).abs() < 1e-12);
        assert!(!p.growth_warning());
    }

    #[test]
    fn sigma_l_matches_sign_scan() {
        let p = PotentialModel::double_well();
        let l = p.sigma_l()[0];
        // independent scan of W'' on a 10^6 grid
        let n = 1_000_000;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=n {
            let v = -3.0 + 6.0 * i as f64 / n as f64;
            if 3.0 * v * v - 1.0 < 0.0 {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert!((l.lo - lo).abs() < 1e-5 && (l.hi - hi).abs() < 1e-5);
        for comp in p.sigma_l() {
            assert!(p.sigma_g().iter().any(|g| g.lo <= comp.lo && comp.hi <= g.hi));
        }
    }

    #[test]
    fn convex_potential_has_no_unstable_set() {
        let p = PotentialModel::custom(
            "square",
            Arc::new(|v: f64| v * v),
            Arc::new(|v: f64| 2.0 * v),
            Arc::new(|_| 2.0),
            Interval::new(-3.0, 3.0),
            1024,
        )
        .unwrap();
        assert!(p.sigma_g().is_empty());
        assert!(p.affine_segments().is_empty());
        for &(v, w) in p.samples() {
            assert_eq!(p.envelope(v), w);
        }
    }

    #[test]
    fn custom_double_well_matches_analytic() {
        let p = PotentialModel::double_well();
        let q = PotentialModel::polynomial(&[0.25, 0.0, -0.5, 0.0, 0.25], Interval::new(-3.0, 3.0), 4096).unwrap();
        let cell = p.hull_spacing();
        assert_eq!(q.sigma_g().len(), 1);
        assert!((q.sigma_g()[0].lo - p.sigma_g()[0].lo).abs() <= cell);
        assert!((q.sigma_g()[0].hi - p.sigma_g()[0].hi).abs() <= cell);
    }

    #[test]
    fn asymmetric_well_single_component() {
        let p = asymmetric();
        assert_eq!(p.sigma_g().len(), 1);
        // oracle: common tangent W'(a) = W'(b) = (W(b) - W(a)) / (b - a) by Newton
        let w = |v: f64| 0.25 * (1.0 - v * v).powi(2) + 0.1 * v;
        let dw = |v: f64| v * v * v - v + 0.1;
        let f = |a: f64, b: f64| [dw(a) - dw(b), dw(a) * (b - a) - (w(b) - w(a))];
        let (mut a, mut b) = (-1.0, 1.0);
        for _ in 0..50 {
            let h = 1e-7;
            let r = f(a, b);
            let ra = f(a + h, b);
            let rb = f(a, b + h);
            let j = [
                [(ra[0] - r[0]) / h, (rb[0] - r[0]) / h],
                [(ra[1] - r[1]) / h, (rb[1] - r[1]) / h],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            a -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            b -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        }
        let cell = p.hull_spacing();
        let g = p.sigma_g()[0];
        assert!((g.lo - a).abs() <= cell, "{} vs {a}", g.lo);
        assert!((g.hi - b).abs() <= cell, "{} vs {b}", g.hi);
        assert!((p.affine_segments()[0].slope - dw(a)).abs() < 1e-5);
    }

    #[test]
    fn builder_rejections() {
        let dom = Interval::new(-3.0, 3.0);
        let lin = || -> (ScalarFn, ScalarFn, ScalarFn) {
            (
                Arc::new(|v: f64| -v * v),
                Arc::new(|v: f64| -2.0 * v),
                Arc::new(|_| -2.0),
            )
        };
        let (w, d1, d2) = lin();
        assert!(matches!(
            PotentialModel::custom("neg", w, d1, d2, dom, 256),
            Err(Error::Potential(_))
        ));
        let (w, d1, d2) = lin();
        assert!(PotentialModel::custom("x", w, d1, d2, Interval::new(1.0, 1.0), 256).is_err());
        let (w, d1, d2) = lin();
        assert!(PotentialModel::custom("x", w, d1, d2, dom, 32).is_err());
        // W = |v| + 1 is affine on each side
        let res = PotentialModel::custom(
            "abs",
            Arc::new(|v: f64| v.abs() + 1.0),
            Arc::new(|v: f64| v.signum()),
            Arc::new(|_| 0.0),
            dom,
            256,
        );
        assert!(matches!(res, Err(Error::Potential(msg)) if msg.contains("affine")));
    }

    #[test]
    fn convex_envelope_cases() {
        let n = 4096;
        let dw: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v = -3.0 + 6.0 * i as f64 / (n - 1) as f64;
                (v, 0.25 * (1.0 - v * v).powi(2))
            })
            .collect();
        let env = convex_envelope(&dw).unwrap();
        assert_eq!(env.affine_segments.len(), 1);
        let seg = env.affine_segments[0];
        assert!(seg.slope.abs() < 1e-12);
        assert!(seg.value(0.0).abs() < 1e-8);
        let sq: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, (i * i) as f64)).collect();
        assert!(convex_envelope(&sq).unwrap().affine_segments.is_empty());
        assert!(convex_envelope(&sq[..2]).is_err());
        assert!(env.hull_nodes.windows(2).all(|w| w[0].0 < w[1].0));
        // a touching interior sample splits the edge in two
        let tw: Vec<(f64, f64)> = (0..=40)
            .map(|i| {
                let v = -2.0 + 0.1 * i as f64;
                (v, v * v * (v * v - 1.0).powi(2))
            })
            .collect();
        let split = convex_envelope(&tw).unwrap();
        assert_eq!(split.affine_segments.len(), 2);
    }

    #[test]
    fn envelope_derivative_values() {
        let p = PotentialModel::double_well();
        assert_eq!(p.envelope_derivative(0.0).unwrap().abs(), 0.0);
        assert_eq!(p.envelope_derivative(2.0).unwrap(), 6.0);
        assert!(matches!(p.envelope_derivative(3.5), Err(Error::OutsideHull { .. })));
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=6000 {
            let v = -3.0 + i as f64 * 1e-3;
            let d = p.envelope_derivative(v).unwrap();
            assert!(d >= prev - 1e-12);
            prev = d;
        }
    }

    fn brute_psi(w: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let s = (w(b) - w(a)) / (b - a);
        (0..=n)
            .map(|i| {
                let c = a + (b - a) * i as f64 / n as f64;
                w(a) - w(c) + s * (c - a)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn psi_values() {
        let p = PotentialModel::double_well();
        let w = |v: f64| 0.25 * (1.0 - v * v).powi(2);
        let oracle = brute_psi(w, 1.0, 2.0, 100_000);
        let got = p.psi(1.0, 2.0).unwrap();
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
        assert!((got - 0.746).abs() < 1e-3);
        assert!(p.psi(-0.4, 0.4).unwrap() <= 1e-12);
        assert!(p.psi(1.0, 1.0).is_err());
        assert!(p.psi(2.0, 1.0).is_err());
    }

    #[test]
    fn psi_reversed_parameterisation() {
        // same bracket, parameterised from b backwards: c = b - t (b - a)
        let p = PotentialModel::double_well();
        let w = |v: f64| 0.25 * (1.0 - v * v).powi(2);
        for &(a, b) in &[(-2.0, -0.5), (0.3, 1.7), (-1.2, 2.5)] {
            let s = (w(b) - w(a)) / (b - a);
            let n = 200_000;
            let rev = (0..=n)
                .map(|i| {
                    let c = b - (b - a) * i as f64 / n as f64;
                    w(a) - w(c) + s * (c - a)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let fwd = p.psi(a, b).unwrap();
            assert!(fwd >= rev - 1e-10 && fwd - rev < 1e-8, "{fwd} vs {rev}");
        }
    }

    #[test]
    fn omega_values() {
        let p = PotentialModel::double_well();
        assert_eq!(p.omega(4.5, 2.0).unwrap(), f64::INFINITY);
        let o = p.omega_curve(&[0.1, 0.5, 1.0], 2.0).unwrap();
        assert!(o.iter().all(|&x| x > 0.0 && x.is_finite()));
        assert!(o[0] <= o[1] && o[1] <= o[2]);
        assert!(p.omega(0.0, 2.0).is_err());
        assert!(p.omega(0.1, -1.0).is_err());
    }

    #[test]
    fn envelope_properties_on_random_points() {
        use rand::{Rng, SeedableRng};
        let p = asymmetric();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let v: f64 = rng.gen_range(-3.0..3.0);
            assert!(p.envelope(v) <= p.eval(v) + 1e-12);
        }
        let vals: Vec<f64> = p.samples().iter().map(|&(v, _)| p.envelope(v)).collect();
        for k in 1..vals.len() - 1 {
            assert!(vals[k + 1] - 2.0 * vals[k] + vals[k - 1] >= -1e-12);
        }
        let eta = 1e-10 * (1.0 + p.samples().iter().map(|s| s.1).fold(0.0, f64::max));
        let cell = p.hull_spacing();
        for &(v, w) in p.samples() {
            let gap = w - p.envelope(v);
            let inside = p.in_sigma_g(v);
            let near_edge = p
                .sigma_g()
                .iter()
                .any(|s| (v - s.lo).abs() <= cell || (v - s.hi).abs() <= cell);
            if !near_edge {
                assert_eq!(gap > eta, inside, "v = {v}");
            }
        }
    }

    proptest! {
        #[test]
        fn psi_nonnegative(a in -2.9f64..2.9, len in 1e-3f64..2.0) {
            let p = PotentialModel::double_well();
            let b = (a + len).min(3.0);
            prop_assert!(p.psi(a, b).unwrap() >= 0.0);
        }
    }
}
