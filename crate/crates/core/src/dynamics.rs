//! The two H⁻¹ gradient flows and their dissipation ledgers.
//!
//! * Cahn-Hilliard `u_t = (W'(u) - ε² u_xx)_xx`, advanced by a first-order
//!   stabilised semi-implicit scheme that is diagonal in Fourier space.
//! * The relaxed flow `u_t = (W**'(u))_xx`, advanced by minimizing movements:
//!   each step minimises `F**(v) + ‖v - uⁿ‖²₋₁ / 2τ` over fields of the same
//!   mass.
//!
//! Every step appends a [`LedgerRecord`] so the energy identity
//! `F(u₀) = F(u(t)) + ½∫‖∂ₜu‖²₋₁ + ½∫|∇F|²` can be checked at the discrete level.

use std::fmt::Write as _;

use rustfft::num_complex::Complex64;

use crate::energy;
use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpectralWorkspace};
use crate::potential::PotentialModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub t_end: f64,
    /// Stabilisation constant for the Cahn-Hilliard scheme; `None` selects
    /// `max W''` over the attained range widened by one on each side.
    pub stabilization: Option<f64>,
    pub snapshot_stride: usize,
    pub nonlinear_tol: f64,
    pub nonlinear_max_iter: usize,
}

impl SolverConfig {
    /// `τ = min(1e-5, 1e-2 ε²)`.
    pub fn cahn_hilliard(eps: f64, t_end: f64) -> Self {
        Self {
            tau: default_ch_tau(eps),
            t_end,
            stabilization: None,
            snapshot_stride: 100,
            nonlinear_tol: 1e-10,
            nonlinear_max_iter: 50,
        }
    }

    pub fn stefan(t_end: f64) -> Self {
        Self {
            tau: 1e-5,
            t_end,
            stabilization: None,
            snapshot_stride: 100,
            nonlinear_tol: 1e-10,
            nonlinear_max_iter: 50,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if let Some(s) = self.stabilization {
            if !(s >= 0.0) {
                return Err(Error::invalid(format!("stabilization must be >= 0, got {s}")));
            }
        }
        if self.snapshot_stride == 0 {
            return Err(Error::invalid("snapshot_stride must be at least 1"));
        }
        if !(self.nonlinear_tol > 0.0) || self.nonlinear_max_iter == 0 {
            return Err(Error::invalid("nonlinear_tol and nonlinear_max_iter must be positive"));
        }
        Ok(())
    }

    /// Number of steps and the effective step `t_end / steps`.
    fn schedule(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.tau);
        }
        let steps = ((self.t_end / self.tau) - 1e-9).ceil().max(1.0) as usize;
        (steps, self.t_end / steps as f64)
    }
}

pub fn default_ch_tau(eps: f64) -> f64 {
    1e-5f64.min(1e-2 * eps * eps)
}

/// One step of the dissipation ledger, recorded at the end of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRecord {
    pub t: f64,
    /// Energy of the state at `t`.
    pub energy: f64,
    /// `‖(uⁿ⁺¹ - uⁿ)/τ‖²₋₁` of the step ending at `t` (0 for the initial record).
    pub dtnorm2: f64,
    /// Squared slope of the state at `t`.
    pub slope2: f64,
    /// `|F(u₀) - F(u(t)) - ½Σ τ dtnorm2 - ½Σ τ slope2|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    CahnHilliard,
    Stefan,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: FlowKind,
    /// `ε` of the Cahn-Hilliard run, 0 for the relaxed flow.
    pub eps: f64,
    pub tau: f64,
    pub t_end: f64,
    pub mass: f64,
    pub stabilization: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<PeriodicField>,
    pub ledger: Vec<LedgerRecord>,
    /// Largest `|mean(uⁿ) - m|` seen over all steps.
    pub max_mass_drift: f64,
    /// Largest per-step energy increase (positive part).
    pub max_energy_increase: f64,
    pub newton_iterations: usize,
}

impl Trajectory {
    fn new(kind: FlowKind, eps: f64, tau: f64, t_end: f64, u0: &PeriodicField) -> Self {
        Self {
            kind,
            eps,
            tau,
            t_end,
            mass: u0.mean(),
            stabilization: 0.0,
            times: vec![0.0],
            snapshots: vec![u0.clone()],
            ledger: Vec::new(),
            max_mass_drift: 0.0,
            max_energy_increase: 0.0,
            newton_iterations: 0,
        }
    }

    pub fn initial(&self) -> &PeriodicField {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &PeriodicField {
        self.snapshots.last().expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial time")
    }

    /// Snapshot whose time is closest to `t`.
    pub fn snapshot_near(&self, t: f64) -> (f64, &PeriodicField) {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (self.times[i], &self.snapshots[i])
    }

    /// Ledger energy linearly interpolated at `t`.
    pub fn energy_at(&self, t: f64) -> f64 {
        interpolate(&self.ledger, t, |r| r.energy)
    }

    /// Ledger slope `sqrt(slope2)` linearly interpolated at `t`.
    pub fn slope_at(&self, t: f64) -> f64 {
        interpolate(&self.ledger, t, |r| r.slope2.sqrt())
    }

    /// `|F(u₀) - F(u(t)) - ½∫‖∂ₜu‖²₋₁ - ½∫|∇F|²|` from the ledger sums, at the
    /// last ledger time not after `t`.
    pub fn dissipation_residual(&self, t: f64) -> Result<f64> {
        if t > self.t_end * (1.0 + 1e-12) + 1e-15 || t < 0.0 {
            return Err(Error::invalid(format!("t = {t} lies outside [0, {}]", self.t_end)));
        }
        let idx = self
            .ledger
            .iter()
            .rposition(|r| r.t <= t * (1.0 + 1e-12) + 1e-15)
            .unwrap_or(0);
        Ok(self.ledger[idx].residual)
    }

    pub const LEDGER_HEADER: &'static str = "t,F,dtnorm2,slope2,residual";

    pub fn ledger_csv(&self) -> String {
        let mut out = String::with_capacity(96 * (self.ledger.len() + 1));
        out.push_str(Self::LEDGER_HEADER);
        out.push('\n');
        for r in &self.ledger {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.energy, r.dtnorm2, r.slope2, r.residual
            );
        }
        out
    }
}

fn interpolate(ledger: &[LedgerRecord], t: f64, f: impl Fn(&LedgerRecord) -> f64) -> f64 {
    match ledger.iter().position(|r| r.t >= t) {
        None => ledger.last().map(&f).unwrap_or(f64::NAN),
        Some(0) => f(&ledger[0]),
        Some(i) => {
            let (a, b) = (&ledger[i - 1], &ledger[i]);
            let s = (t - a.t) / (b.t - a.t);
            (1.0 - s) * f(a) + s * f(b)
        }
    }
}

/// Running sums behind [`LedgerRecord::residual`].
struct LedgerAccumulator {
    f0: f64,
    dt_integral: f64,
    slope_integral: f64,
}

impl LedgerAccumulator {
    fn start(traj: &mut Trajectory, energy: f64, slope2: f64) -> Self {
        traj.ledger.push(LedgerRecord {
            t: 0.0,
            energy,
            dtnorm2: 0.0,
            slope2,
            residual: 0.0,
        });
        Self {
            f0: energy,
            dt_integral: 0.0,
            slope_integral: 0.0,
        }
    }

    fn push(&mut self, traj: &mut Trajectory, t: f64, tau: f64, energy: f64, dtnorm2: f64, slope2: f64) {
        self.dt_integral += tau * dtnorm2;
        self.slope_integral += tau * slope2;
        let residual = (self.f0 - energy - 0.5 * self.dt_integral - 0.5 * self.slope_integral).abs();
        traj.ledger.push(LedgerRecord {
            t,
            energy,
            dtnorm2,
            slope2,
            residual,
        });
    }
}

fn check_range(model: &PotentialModel, u: &PeriodicField) -> std::result::Result<(), String> {
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err("non-finite value (overflow)".into());
    }
    let (lo, hi) = (u.min(), u.max());
    if !(model.in_domain(lo) && model.in_domain(hi)) {
        let d = model.hull_domain();
        return Err(format!(
            "range [{lo}, {hi}] leaves the hull domain [{}, {}]",
            d.lo, d.hi
        ));
    }
    Ok(())
}

fn auto_stabilization(model: &PotentialModel, u: &PeriodicField) -> f64 {
    model.max_d2_on(u.min() - 1.0, u.max() + 1.0).max(0.0)
}

/// Cahn-Hilliard flow from `u0`. Per Fourier mode `k` (physical wavenumber):
/// `(1 + τε²k⁴ + τSk²) ûⁿ⁺¹ = ûⁿ - τk² W'(uⁿ)^ + τSk² ûⁿ`.
pub fn run_cahn_hilliard(
    model: &PotentialModel,
    u0: &PeriodicField,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    check_range(model, u0).map_err(Error::invalid)?;
    let required = auto_stabilization(model, u0);
    let mut s = match cfg.stabilization {
        Some(s) if s < required => {
            return Err(Error::invalid(format!(
                "stabilization {s} is below max W'' = {required} on the initial range"
            )))
        }
        Some(s) => s,
        None => required,
    };
    let (steps, tau) = cfg.schedule();
    let ws = SpectralWorkspace::new(u0.n())?;
    let n = u0.n();
    let ks = ws.wavenumbers().to_vec();
    let nyq = ws.nyquist();
    let eps2 = eps * eps;

    let mut traj = Trajectory::new(FlowKind::CahnHilliard, eps, tau, cfg.t_end, u0);
    let m = traj.mass;
    let (mut range_lo, mut range_hi) = (u0.min(), u0.max());

    let mut u = u0.clone();
    let mut u_hat = ws.forward(u.values());
    let mut nl_hat = ws.forward(&u.values().iter().map(|&v| model.d1(v)).collect::<Vec<_>>());

    let energy_of = |u: &PeriodicField, u_hat: &[Complex64]| -> f64 {
        let grad: f64 = u_hat.iter().zip(&ks).map(|(c, k)| k * k * c.norm_sqr()).sum();
        0.5 * eps2 * grad + u.values().iter().map(|&v| model.eval(v)).sum::<f64>() / n as f64
    };
    let slope2_of = |u_hat: &[Complex64], nl_hat: &[Complex64]| -> f64 {
        (1..n)
            .filter(|&j| j != nyq)
            .map(|j| {
                let k2 = ks[j] * ks[j];
                k2 * (nl_hat[j] + u_hat[j] * (eps2 * k2)).norm_sqr()
            })
            .sum()
    };

    let mut energy = energy_of(&u, &u_hat);
    let mut acc = LedgerAccumulator::start(&mut traj, energy, slope2_of(&u_hat, &nl_hat));
    let mut new_hat = vec![Complex64::new(0.0, 0.0); n];

    for step in 1..=steps {
        let t = step as f64 * tau;
        new_hat[0] = u_hat[0];
        for j in 1..n {
            let k2 = ks[j] * ks[j];
            let denom = 1.0 + tau * eps2 * k2 * k2 + tau * s * k2;
            new_hat[j] = (u_hat[j] * (1.0 + tau * s * k2) - nl_hat[j] * (tau * k2)) / denom;
        }
        let u_new = PeriodicField::new(ws.backward(&new_hat))?;
        if let Err(reason) = check_range(model, &u_new) {
            return Err(abort("cahn-hilliard", t, reason, traj, &u));
        }
        let nl_new = ws.forward(&u_new.values().iter().map(|&v| model.d1(v)).collect::<Vec<_>>());
        let energy_new = energy_of(&u_new, &new_hat);
        let increase = energy_new - energy;
        traj.max_energy_increase = traj.max_energy_increase.max(increase);
        if increase > 1e-10 * (1.0 + energy.abs()) {
            return Err(abort(
                "cahn-hilliard",
                t,
                format!("energy increased by {increase:e}; stabilization S = {s} is too small"),
                traj,
                &u,
            ));
        }
        let dtnorm2 = ws.h_minus1_norm_sq_modes(
            &new_hat
                .iter()
                .zip(&u_hat)
                .map(|(a, b)| (a - b) / tau)
                .collect::<Vec<_>>(),
        );
        let slope2 = slope2_of(&new_hat, &nl_new);
        acc.push(&mut traj, t, tau, energy_new, dtnorm2, slope2);
        traj.max_mass_drift = traj.max_mass_drift.max((u_new.mean() - m).abs());

        let (lo, hi) = (u_new.min(), u_new.max());
        if lo < range_lo || hi > range_hi {
            range_lo = range_lo.min(lo);
            range_hi = range_hi.max(hi);
            if cfg.stabilization.is_none() {
                s = s.max(model.max_d2_on(range_lo - 1.0, range_hi + 1.0));
            }
        }

        u = u_new;
        std::mem::swap(&mut u_hat, &mut new_hat);
        nl_hat = nl_new;
        energy = energy_new;
        if step % cfg.snapshot_stride == 0 || step == steps {
            traj.times.push(t);
            traj.snapshots.push(u.clone());
        }
    }
    traj.stabilization = s;
    Ok(traj)
}

fn abort(solver: &'static str, t: f64, reason: String, mut traj: Trajectory, last_valid: &PeriodicField) -> Error {
    let t_last = traj.ledger.last().map(|r| r.t).unwrap_or(0.0);
    if traj.final_time() < t_last {
        traj.times.push(t_last);
        traj.snapshots.push(last_valid.clone());
    }
    Error::SolverAbort {
        solver,
        t,
        reason,
        partial: Box::new(traj),
    }
}

/// Relaxed flow of `F**` by minimizing movements.
pub fn run_stefan(model: &PotentialModel, u0: &PeriodicField, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_range(model, u0).map_err(Error::invalid)?;
    let (steps, tau) = cfg.schedule();
    let ws = SpectralWorkspace::new(u0.n())?;
    let mut traj = Trajectory::new(FlowKind::Stefan, 0.0, tau, cfg.t_end, u0);
    let m = traj.mass;
    let mut u = u0.clone();
    let mut energy = energy::energy_star(model, &u);
    let mut acc = LedgerAccumulator::start(&mut traj, energy, energy::slope_star(model, &u).powi(2));
    let stepper = MinimizingMovement {
        model,
        ws: &ws,
        tau,
        tol: cfg.nonlinear_tol,
        max_iter: cfg.nonlinear_max_iter,
    };

    for step in 1..=steps {
        let t = step as f64 * tau;
        let (v, iterations) = match stepper.solve(&u) {
            Ok(ok) => ok,
            Err(StepFailure::NonConvergence { residual, iterations }) => {
                return Err(Error::NonConvergence {
                    t,
                    residual,
                    iterations,
                    partial: Box::new(traj),
                })
            }
            Err(StepFailure::Range(reason)) => return Err(abort("stefan", t, reason, traj, &u)),
        };
        traj.newton_iterations += iterations;
        let energy_new = energy::energy_star(model, &v);
        traj.max_energy_increase = traj.max_energy_increase.max(energy_new - energy);
        let diff = v.sub(&u)?.scale(1.0 / tau);
        let dtnorm2 = ws.h_minus1_norm(&diff)?.powi(2);
        let slope2 = energy::slope_star(model, &v).powi(2);
        acc.push(&mut traj, t, tau, energy_new, dtnorm2, slope2);
        traj.max_mass_drift = traj.max_mass_drift.max((v.mean() - m).abs());
        u = v;
        energy = energy_new;
        if step % cfg.snapshot_stride == 0 || step == steps {
            traj.times.push(t);
            traj.snapshots.push(u.clone());
        }
    }
    Ok(traj)
}

enum StepFailure {
    NonConvergence { residual: f64, iterations: usize },
    Range(String),
}

/// One implicit step `argmin_v F**(v) + ‖v - uⁿ‖²₋₁ / 2τ`.
///
/// The optimality system `v - uⁿ - τ (W**'(v))_xx = 0` is solved by a
/// semismooth Newton method whose linear systems
/// `(diag W**''(v) + τ⁻¹(-∂ₓₓ)⁻¹) δ = -∇Φ` are symmetric positive definite on
/// mean-free fields and are solved by conjugate gradients preconditioned with
/// the constant-coefficient operator. Steps are globalised by backtracking on
/// `Φ`, falling back to a damped fixed-point update.
struct MinimizingMovement<'a> {
    model: &'a PotentialModel,
    ws: &'a SpectralWorkspace,
    tau: f64,
    tol: f64,
    max_iter: usize,
}

impl MinimizingMovement<'_> {
    fn inv_laplacian(&self, x: &[f64]) -> Vec<f64> {
        let mut modes = self.ws.forward(x);
        modes[0] = Complex64::new(0.0, 0.0);
        for (c, k) in modes.iter_mut().zip(self.ws.wavenumbers()).skip(1) {
            *c /= k * k;
        }
        self.ws.backward(&modes)
    }

    fn objective(&self, v: &[f64], u: &[f64]) -> f64 {
        let n = v.len() as f64;
        let d: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
        let hd = self.inv_laplacian(&d);
        let quad: f64 = d.iter().zip(&hd).map(|(a, b)| a * b).sum::<f64>() / n;
        v.iter().map(|&x| self.model.envelope(x)).sum::<f64>() / n + quad / (2.0 * self.tau)
    }

    /// L² gradient of `Φ` on mean-free variations, and `‖v - u - τ g_xx‖₋₁`.
    fn gradient(&self, v: &[f64], u: &[f64]) -> (Vec<f64>, f64) {
        let n = v.len();
        let g: Vec<f64> = v.iter().map(|&x| self.model.envelope_derivative_clamped(x)).collect();
        let d: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
        let hd = self.inv_laplacian(&d);
        let mut grad: Vec<f64> = g.iter().zip(&hd).map(|(a, b)| a + b / self.tau).collect();
        let mean = grad.iter().sum::<f64>() / n as f64;
        grad.iter_mut().for_each(|x| *x -= mean);
        // R = v - u - τ g_xx = τ (-∂ₓₓ) grad, so ‖R‖²₋₁ = τ² Σ k² |grad^_k|².
        let modes = self.ws.forward(&grad);
        let r2: f64 = modes
            .iter()
            .zip(self.ws.wavenumbers())
            .skip(1)
            .map(|(c, k)| k * k * c.norm_sqr())
            .sum();
        (grad, self.tau * r2.sqrt())
    }

    fn solve(&self, u_field: &PeriodicField) -> std::result::Result<(PeriodicField, usize), StepFailure> {
        let u = u_field.values();
        let n = u.len();
        let mut v = u.to_vec();
        let (mut grad, mut res) = self.gradient(&v, u);
        let mut iterations = 0;
        while res > self.tol {
            if iterations >= self.max_iter {
                return Err(StepFailure::NonConvergence {
                    residual: res,
                    iterations,
                });
            }
            iterations += 1;
            let curvature: Vec<f64> = v.iter().map(|&x| self.model.envelope_second_derivative(x)).collect();
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let delta = self.newton_direction(&curvature, &rhs);
            let slope: f64 = grad.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            let phi = self.objective(&v, u);

            let mut accepted = None;
            if slope < 0.0 {
                let mut alpha = 1.0;
                for _ in 0..30 {
                    let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
                    let (g_trial, r_trial) = self.gradient(&trial, u);
                    let phi_trial = self.objective(&trial, u);
                    if phi_trial <= phi + 1e-4 * alpha * slope || r_trial < (1.0 - 1e-4 * alpha) * res {
                        accepted = Some((trial, g_trial, r_trial));
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            let (trial, g_trial, r_trial) = match accepted {
                Some(a) => a,
                None => {
                    // damped fixed point v ← v - ½ τ (-∂ₓₓ) ∇Φ
                    let mut modes = self.ws.forward(&grad);
                    for (c, k) in modes.iter_mut().zip(self.ws.wavenumbers()) {
                        *c *= 0.5 * self.tau * k * k;
                    }
                    let step = self.ws.backward(&modes);
                    let trial: Vec<f64> = v.iter().zip(&step).map(|(a, s)| a - s).collect();
                    let (g, r) = self.gradient(&trial, u);
                    (trial, g, r)
                }
            };
            v = trial;
            grad = g_trial;
            res = r_trial;
            if v.iter().any(|x| !x.is_finite() || !self.model.in_domain(*x)) {
                let field = PeriodicField::new(v.clone()).expect("same grid");
                return Err(StepFailure::Range(
                    check_range(self.model, &field).err().unwrap_or_default(),
                ));
            }
        }
        Ok((PeriodicField::new(v).expect("same grid"), iterations))
    }

    /// Preconditioned CG for `(diag a + τ⁻¹ K⁻¹) δ = rhs` on mean-free fields.
    fn newton_direction(&self, a: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let inv_tau = 1.0 / self.tau;
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let project = |x: &mut Vec<f64>| {
            let mean = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= mean);
        };
        let apply = |x: &[f64]| -> Vec<f64> {
            let hx = self.inv_laplacian(x);
            let mut out: Vec<f64> = x
                .iter()
                .zip(a)
                .zip(&hx)
                .map(|((xi, ai), hi)| ai * xi + inv_tau * hi)
                .collect();
            project(&mut out);
            out
        };
        let a_ref = a.iter().sum::<f64>() / n as f64;
        let precondition = |r: &[f64]| -> Vec<f64> {
            let mut modes = self.ws.forward(r);
            modes[0] = Complex64::new(0.0, 0.0);
            for (c, k) in modes.iter_mut().zip(self.ws.wavenumbers()).skip(1) {
                *c /= a_ref + inv_tau / (k * k);
            }
            self.ws.backward(&modes)
        };

        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        project(&mut r);
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let r0 = rz.abs().sqrt();
        if r0 == 0.0 {
            return x;
        }
        for _ in 0..500 {
            let ap = apply(&p);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
            z = precondition(&r);
            let rz_new = dot(&r, &z);
            if rz_new.abs().sqrt() <= 1e-12 * r0 {
                break;
            }
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        x
    }
}
