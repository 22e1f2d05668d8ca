//! Periodic grid functions on the unit torus and their spectral calculus.
//!
//! A [`PeriodicField`] samples a function at `x_j = j / n`, `j = 0..n`. All
//! integrals are trapezoid sums (the arithmetic mean of the samples, since the
//! torus has unit length), and derivatives and negative Sobolev norms are
//! computed through a [`SpectralWorkspace`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MIN_GRID: usize = 16;
pub const DEFAULT_GRID: usize = 512;

/// Uniform samples of a function on `T = R/Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    values: Vec<f64>,
}

impl PeriodicField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_grid(values.len())?;
        Ok(Self { values })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_grid(n)?;
        let h = 1.0 / n as f64;
        Ok(Self {
            values: (0..n).map(|j| f(j as f64 * h)).collect(),
        })
    }

    pub fn constant(n: usize, m: f64) -> Result<Self> {
        Self::from_fn(n, |_| m)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise image `g(f(x_j))`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> PeriodicField {
        PeriodicField {
            values: self.values.iter().map(|&v| g(v)).collect(),
        }
    }

    /// `∫_T f dx`, i.e. the mass `m` of the field.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Shift by a constant so that the mean becomes `m`.
    pub fn set_mean(&self, m: f64) -> PeriodicField {
        let shift = m - self.mean();
        self.map(|v| v + shift)
    }

    pub fn sub(&self, other: &PeriodicField) -> Result<PeriodicField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &PeriodicField) -> Result<PeriodicField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> PeriodicField {
        self.map(|v| c * v)
    }

    pub fn zip_with(&self, other: &PeriodicField, f: impl Fn(f64, f64) -> f64) -> Result<PeriodicField> {
        if self.n() != other.n() {
            return Err(Error::GridMismatch(self.n(), other.n()));
        }
        Ok(PeriodicField {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// CSV dump: a `# n=<n> m=<m>` header followed by `x,value` rows with 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(48 * self.n());
        let _ = writeln!(out, "# n={} m={:.16e}", self.n(), self.mean());
        for (j, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.x(j), v);
        }
        out
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            message: format!("line {line}: {message}"),
        };
        let mut declared_n = None;
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    if let Some(n) = tok.strip_prefix("n=") {
                        declared_n = Some(
                            n.parse::<usize>()
                                .map_err(|e| parse_err(i + 1, format!("bad n: {e}")))?,
                        );
                    }
                }
                continue;
            }
            let mut cols = line.split(',');
            let _x = cols.next();
            let v = cols
                .next()
                .ok_or_else(|| parse_err(i + 1, "expected `x,value`".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(i + 1, format!("bad value: {e}")))?;
            values.push(v);
        }
        if let Some(n) = declared_n {
            if n != values.len() {
                return Err(parse_err(
                    0,
                    format!("header declares n={n} but {} rows found", values.len()),
                ));
            }
        }
        Self::new(values)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text, &path.display().to_string())
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n < MIN_GRID || !n.is_power_of_two() {
        return Err(Error::GridSize(n));
    }
    Ok(())
}

/// FFT plans and the physical wavenumber table `2πk` for one grid size.
///
/// Fourier coefficients are normalised as `f̂_k = (1/n) Σ_j f_j e^{-2πikj/n}`
/// so that `f̂_0` is the mean.
#[derive(Clone)]
pub struct SpectralWorkspace {
    n: usize,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralWorkspace").field("n", &self.n).finish()
    }
}

impl SpectralWorkspace {
    pub fn new(n: usize) -> Result<Self> {
        check_grid(n)?;
        let mut planner = FftPlanner::new();
        let half = (n / 2) as i64;
        let wavenumbers = (0..n as i64)
            .map(|j| {
                let k = if j <= half { j } else { j - n as i64 };
                2.0 * PI * k as f64
            })
            .collect();
        Ok(Self {
            n,
            wavenumbers,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `2πk` for each FFT slot; the Nyquist slot carries `+πn`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(Error::GridMismatch(self.n, n));
        }
        Ok(())
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n);
        let scale = 1.0 / self.n as f64;
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v * scale, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse of [`forward`](Self::forward); the imaginary part is dropped.
    pub fn backward(&self, modes: &[Complex64]) -> Vec<f64> {
        debug_assert_eq!(modes.len(), self.n);
        let mut buf = modes.to_vec();
        self.inverse.process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    pub fn modes(&self, f: &PeriodicField) -> Result<Vec<Complex64>> {
        self.check(f.n())?;
        Ok(self.forward(f.values()))
    }

    /// Spectral derivative of order 1..=4. The Nyquist mode is dropped for odd
    /// orders so the result stays real.
    pub fn derivative(&self, f: &PeriodicField, order: usize) -> Result<PeriodicField> {
        if !(1..=4).contains(&order) {
            return Err(Error::DerivativeOrder(order));
        }
        let mut modes = self.modes(f)?;
        self.differentiate_modes(&mut modes, order);
        PeriodicField::new(self.backward(&modes))
    }

    pub(crate) fn differentiate_modes(&self, modes: &mut [Complex64], order: usize) {
        let i_pow = match order % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        for (c, &k) in modes.iter_mut().zip(&self.wavenumbers) {
            *c *= i_pow * k.powi(order as i32);
        }
        if order % 2 == 1 {
            modes[self.nyquist()] = Complex64::new(0.0, 0.0);
        }
    }

    /// `( Σ_{k≠0} |f̂_k|² / (2πk)² )^{1/2}`: the norm of the mean-free part.
    pub fn h_minus1_norm(&self, f: &PeriodicField) -> Result<f64> {
        let modes = self.modes(f)?;
        Ok(self.h_minus1_norm_sq_modes(&modes).sqrt())
    }

    pub(crate) fn h_minus1_norm_sq_modes(&self, modes: &[Complex64]) -> f64 {
        modes
            .iter()
            .zip(&self.wavenumbers)
            .skip(1)
            .map(|(c, &k)| c.norm_sqr() / (k * k))
            .sum()
    }

    /// Mean-zero solution `φ` of `-φ_xx = f - mean(f)`.
    pub fn inverse_laplacian(&self, f: &PeriodicField) -> Result<PeriodicField> {
        let mut modes = self.modes(f)?;
        modes[0] = Complex64::new(0.0, 0.0);
        for (c, &k) in modes.iter_mut().zip(&self.wavenumbers).skip(1) {
            *c /= k * k;
        }
        PeriodicField::new(self.backward(&modes))
    }

    /// L² norm computed from the Fourier side (Parseval).
    pub fn l2_norm_modes(&self, f: &PeriodicField) -> Result<f64> {
        let modes = self.modes(f)?;
        Ok(modes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
    }

    /// Fraction of the mean-free spectral energy carried by `|k| > n/4`.
    pub fn high_mode_fraction(&self, f: &PeriodicField) -> Result<f64> {
        let modes = self.modes(f)?;
        let cutoff = self.n / 4;
        let (mut high, mut total) = (0.0, 0.0);
        for (j, c) in modes.iter().enumerate().skip(1) {
            let idx = j.min(self.n - j);
            let e = c.norm_sqr();
            total += e;
            if idx > cutoff {
                high += e;
            }
        }
        Ok(if total > 0.0 { high / total } else { 0.0 })
    }
}

/// Convenience wrapper building a one-off workspace.
pub fn h_minus1_norm(f: &PeriodicField) -> Result<f64> {
    SpectralWorkspace::new(f.n())?.h_minus1_norm(f)
}

pub fn derivative(f: &PeriodicField, order: usize) -> Result<PeriodicField> {
    SpectralWorkspace::new(f.n())?.derivative(f, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(n: usize) -> PeriodicField {
        PeriodicField::from_fn(n, |x| (2.0 * PI * x).sin()).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> PeriodicField {
        PeriodicField::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(PeriodicField::constant(8, 0.0), Err(Error::GridSize(8))));
        assert!(matches!(PeriodicField::constant(100, 0.0), Err(Error::GridSize(100))));
        assert!(SpectralWorkspace::new(24).is_err());
    }

    #[test]
    fn h_minus1_of_constant_and_sine() {
        let c = PeriodicField::constant(64, 3.0).unwrap();
        assert_eq!(h_minus1_norm(&c).unwrap(), 0.0);
        let s = sine(256);
        let norm = h_minus1_norm(&s).unwrap();
        assert_relative_eq!(norm * norm, 1.0 / (8.0 * PI * PI), max_relative = 1e-12);
        let scaled = h_minus1_norm(&s.scale(-3.0)).unwrap();
        assert_relative_eq!(scaled, 3.0 * norm, max_relative = 1e-12);
    }

    #[test]
    fn derivatives_of_sine() {
        let ws = SpectralWorkspace::new(256).unwrap();
        let s = sine(256);
        let d1 = ws.derivative(&s, 1).unwrap();
        let d4 = ws.derivative(&s, 4).unwrap();
        let k = 2.0 * PI;
        for j in 0..256 {
            let x = s.x(j);
            assert!((d1.values()[j] - k * (k * x).cos()).abs() < 1e-10);
            assert!((d4.values()[j] - k.powi(4) * (k * x).sin()).abs() < 1e-12 * (PI * 256.0).powi(4));
        }
        let c = PeriodicField::constant(32, 1.5).unwrap();
        let d2 = derivative(&c, 2).unwrap();
        assert!(d2.linf_norm() < 1e-14);
        assert!(matches!(ws.derivative(&s, 5), Err(Error::DerivativeOrder(5))));
        assert!(matches!(ws.derivative(&s, 0), Err(Error::DerivativeOrder(0))));
    }

    #[test]
    fn derivative_has_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ws = SpectralWorkspace::new(128).unwrap();
        let f = random_field(&mut rng, 128);
        for order in 1..=4 {
            let d = ws.derivative(&f, order).unwrap();
            assert!(d.mean().abs() < 1e-14 * d.linf_norm());
        }
    }

    #[test]
    fn plain_norms_and_mean_shift() {
        let s = sine(128);
        assert_relative_eq!(s.l2_norm().powi(2), 0.5, epsilon = 1e-14);
        assert_eq!(PeriodicField::constant(16, 3.0).unwrap().linf_norm(), 3.0);
        let shifted = s.set_mean(2.0);
        for j in 0..128 {
            assert!((shifted.values()[j] - (2.0 + s.values()[j])).abs() < 1e-14);
        }
    }

    #[test]
    fn norm_comparison_duality_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ws = SpectralWorkspace::new(64).unwrap();
        for _ in 0..100 {
            let f = random_field(&mut rng, 64);
            let f0 = f.set_mean(0.0);
            let hm1 = ws.h_minus1_norm(&f0).unwrap();
            assert!(hm1 <= f0.l2_norm() / (2.0 * PI) + 1e-14);

            let phi = ws.inverse_laplacian(&f0).unwrap();
            let pairing: f64 = f0.values().iter().zip(phi.values()).map(|(a, b)| a * b).sum::<f64>() / 64.0;
            assert!((pairing - hm1 * hm1).abs() < 1e-10);

            assert!((ws.l2_norm_modes(&f).unwrap() - f.l2_norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_error_on_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ws = SpectralWorkspace::new(512).unwrap();
        let f = random_field(&mut rng, 512);
        let back = ws.backward(&ws.forward(f.values()));
        let err = f
            .values()
            .iter()
            .zip(&back)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-12 * f.linf_norm());
    }

    #[test]
    fn csv_dump_reads_back() {
        let s = sine(32).set_mean(0.25);
        let text = s.to_csv();
        assert!(text.starts_with("# n=32 m="));
        let back = PeriodicField::from_csv(&text, "mem").unwrap();
        assert_eq!(back, s);
        assert!(PeriodicField::from_csv("# n=16\n0,1\n", "mem").is_err());
        assert!(PeriodicField::from_csv("0,abc\n", "mem").is_err());
    }
}
