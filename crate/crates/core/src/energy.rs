//! Energies, chemical potential and slopes.
//!
//! `F_ε(v) = ∫ ε² v_x²/2 + W(v)`, `F**(v) = ∫ W**(v)`,
//! `|∇F_ε|(v) = ‖(W'(v) - ε² v_xx)_x‖_{L²}` and `|∇F**|(v) = ‖(W**'(v))_x‖_{L²}`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpectralWorkspace};
use crate::potential::PotentialModel;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

/// `∫ |f_x|²` from the Fourier side.
pub(crate) fn dirichlet_energy(ws: &SpectralWorkspace, f: &PeriodicField) -> Result<f64> {
    let modes = ws.modes(f)?;
    Ok(modes
        .iter()
        .zip(ws.wavenumbers())
        .map(|(c, k)| k * k * c.norm_sqr())
        .sum())
}

pub fn energy_eps(model: &PotentialModel, ws: &SpectralWorkspace, f: &PeriodicField, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let gradient = 0.5 * eps * eps * dirichlet_energy(ws, f)?;
    let potential = f.values().iter().map(|&v| model.eval(v)).sum::<f64>() / f.n() as f64;
    Ok(gradient + potential)
}

/// `∫ W**(f)`. Values outside the hull domain are clamped; see
/// [`range_excursion`].
pub fn energy_star(model: &PotentialModel, f: &PeriodicField) -> f64 {
    f.values().iter().map(|&v| model.envelope(v)).sum::<f64>() / f.n() as f64
}

/// True when some sample leaves the tabulated hull domain.
pub fn range_excursion(model: &PotentialModel, f: &PeriodicField) -> bool {
    !(model.in_domain(f.min()) && model.in_domain(f.max()))
}

/// `w_ε = W'(f) - ε² f_xx`.
pub fn chemical_potential(
    model: &PotentialModel,
    ws: &SpectralWorkspace,
    f: &PeriodicField,
    eps: f64,
) -> Result<PeriodicField> {
    check_eps(eps)?;
    let fxx = ws.derivative(f, 2)?;
    f.zip_with(&fxx, |v, d| model.d1(v) - eps * eps * d)
}

/// `‖(w_ε)_x‖_{L²}` with the derivative taken spectrally.
pub fn slope_eps(model: &PotentialModel, ws: &SpectralWorkspace, f: &PeriodicField, eps: f64) -> Result<f64> {
    let w = chemical_potential(model, ws, f, eps)?;
    Ok(ws.derivative(&w, 1)?.l2_norm())
}

/// The same slope through the dual form `‖(w_ε)_xx‖_{-1}`.
pub fn slope_eps_dual(model: &PotentialModel, ws: &SpectralWorkspace, f: &PeriodicField, eps: f64) -> Result<f64> {
    let w = chemical_potential(model, ws, f, eps)?;
    ws.h_minus1_norm(&ws.derivative(&w, 2)?)
}

/// Centred difference `(g_{j+1} - g_{j-1}) / 2h` on the periodic grid.
pub fn centered_difference(g: &PeriodicField) -> PeriodicField {
    let n = g.n();
    let v = g.values();
    let inv = 0.5 * n as f64;
    let out = (0..n).map(|j| (v[(j + 1) % n] - v[(j + n - 1) % n]) * inv).collect();
    PeriodicField::new(out).expect("same grid")
}

/// `‖(W**'(f))_x‖_{L²}` by centred differences of `W**'(f_j)`.
pub fn slope_star(model: &PotentialModel, f: &PeriodicField) -> f64 {
    let g = f.map(|v| model.envelope_derivative_clamped(v));
    centered_difference(&g).l2_norm()
}

/// Everything the functional layer knows about one field.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub eps: f64,
    pub f_eps: f64,
    pub f_star: f64,
    pub slope_eps: f64,
    pub slope_star: f64,
    pub chem_pot: PeriodicField,
    pub mass: f64,
    /// Spectral energy fraction in `|k| > n/4`; large values flag
    /// under-resolved fields whose discrete slope is not meaningful.
    pub high_mode_fraction: f64,
    pub range_excursion: bool,
}

impl EnergyReport {
    pub fn evaluate(model: &PotentialModel, ws: &SpectralWorkspace, f: &PeriodicField, eps: f64) -> Result<Self> {
        let chem_pot = chemical_potential(model, ws, f, eps)?;
        let slope_eps = ws.derivative(&chem_pot, 1)?.l2_norm();
        Ok(Self {
            eps,
            f_eps: energy_eps(model, ws, f, eps)?,
            f_star: energy_star(model, f),
            slope_eps,
            slope_star: slope_star(model, f),
            chem_pot,
            mass: f.mean(),
            high_mode_fraction: ws.high_mode_fraction(f)?,
            range_excursion: range_excursion(model, f),
        })
    }

    pub const CSV_HEADER: &'static str = "eps,F_eps,F_star,slope_eps,slope_star,mass";

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.eps, self.f_eps, self.f_star, self.slope_eps, self.slope_star, self.mass
        );
        s
    }
}
