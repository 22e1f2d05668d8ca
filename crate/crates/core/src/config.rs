//! Experiment configuration: sectioned `key = value` files.
//!
//! ```ini
//! [potential]
//! kind = double_well
//!
//! [grid]
//! n = 512
//!
//! [run]
//! eps_list = 0.1, 0.05, 0.025
//! t_end = 0.01
//!
//! [target]
//! kind = sinusoid
//! m = 1.6
//! amplitude = 0.3
//! wavenumber = 1
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::Ini;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{PeriodicField, DEFAULT_GRID};
use crate::potential::{Interval, PotentialModel, DEFAULT_HULL_SAMPLES};
use crate::preparation::Scales;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    DoubleWell,
    Polynomial {
        coefficients: Vec<f64>,
        domain: Interval,
        hull_samples: usize,
    },
    /// Polynomial coefficients read from a text file (whitespace or comma separated).
    File {
        path: PathBuf,
        domain: Interval,
        hull_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Constant {
        m: f64,
    },
    Sinusoid {
        m: f64,
        amplitude: f64,
        wavenumber: u32,
    },
    /// `(start, value)` pieces, starts increasing from 0.
    Piecewise {
        pieces: Vec<(f64, f64)>,
    },
    File {
        path: PathBuf,
    },
    /// Smooth random field `m + amplitude · Σ_k c_k cos(2πkx + φ_k)`, normalised to sup 1.
    Random {
        m: f64,
        amplitude: f64,
        modes: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreparationSpec {
    None,
    Recovery,
    Wrinkle { region: Interval },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditSpec {
    pub windows: usize,
    pub bins: usize,
    pub tol: f64,
    pub e: f64,
    pub delta: f64,
    pub neighborhood_window: f64,
    pub slope_bound: Option<f64>,
    pub dichotomy: bool,
    pub correlation: bool,
    pub oscillation: bool,
    pub neighborhood: bool,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self {
            windows: 32,
            bins: 64,
            tol: 0.05,
            e: 0.05,
            delta: 0.05,
            neighborhood_window: 0.01,
            slope_bound: None,
            dichotomy: true,
            correlation: true,
            oscillation: true,
            neighborhood: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub n: usize,
    pub eps_list: Vec<f64>,
    /// Cahn-Hilliard step; `None` picks `min(1e-5, 1e-2 ε²)` per ε.
    pub tau: Option<f64>,
    /// Relaxed-flow step; `None` picks `1e-5` for single runs and the study
    /// default inside sweeps.
    pub tau_stefan: Option<f64>,
    pub t_end: f64,
    pub stabilization: Option<f64>,
    pub snapshot_stride: usize,
    pub comparisons: usize,
    pub nonlinear_tol: f64,
    pub nonlinear_max_iter: usize,
    pub target: TargetSpec,
    pub preparation: PreparationSpec,
    pub scales: Scales,
    pub audit: AuditSpec,
    pub output: Option<PathBuf>,
    pub seed: u64,
    /// Directory of the config file, for resolving relative paths.
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::DoubleWell,
            n: DEFAULT_GRID,
            eps_list: vec![0.1, 0.05, 0.025],
            tau: None,
            tau_stefan: None,
            t_end: 0.01,
            stabilization: None,
            snapshot_stride: 100,
            comparisons: 100,
            nonlinear_tol: 1e-10,
            nonlinear_max_iter: 50,
            target: TargetSpec::Sinusoid {
                m: 1.6,
                amplitude: 0.3,
                wavenumber: 1,
            },
            preparation: PreparationSpec::Recovery,
            scales: Scales::default(),
            audit: AuditSpec::default(),
            output: None,
            seed: 0,
            base_dir: PathBuf::from("."),
        }
    }
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("potential", &["kind", "coefficients", "path", "domain", "hull_samples"]),
    ("grid", &["n"]),
    (
        "run",
        &[
            "eps_list",
            "tau",
            "tau_stefan",
            "t_end",
            "stabilization",
            "snapshot_stride",
            "comparisons",
            "nonlinear_tol",
            "nonlinear_max_iter",
        ],
    ),
    (
        "target",
        &["kind", "m", "amplitude", "wavenumber", "pieces", "path", "modes"],
    ),
    (
        "preparation",
        &["mode", "region", "wavelength_exponent", "transition_exponent"],
    ),
    (
        "audit",
        &[
            "windows",
            "bins",
            "tol",
            "e",
            "delta",
            "neighborhood_window",
            "slope_bound",
            "dichotomy",
            "correlation",
            "oscillation",
            "neighborhood",
        ],
    ),
    ("output", &["dir"]),
    ("rng", &["seed"]),
];

/// Raw sections plus line numbers of every `key =` for diagnostics.
struct Source<'a> {
    ini: &'a Ini,
    origin: String,
    lines: BTreeMap<(String, String), usize>,
}

impl Source<'_> {
    fn locate(&self, section: &str, key: &str) -> String {
        match self.lines.get(&(section.to_string(), key.to_string())) {
            Some(line) => format!("{}:{line} [{section}] {key}", self.origin),
            None => format!("{} [{section}] {key}", self.origin),
        }
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|s| s.get(key)).map(str::trim)
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::config(
                    self.locate(section, key),
                    format!("cannot parse {v:?} as {}", std::any::type_name::<T>()),
                )
            }),
        }
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.raw(section, key) else {
            return Ok(None);
        };
        v.split([',', ' ', '\t'])
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::config(self.locate(section, key), format!("cannot parse {s:?} as a number")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn interval(&self, section: &str, key: &str) -> Result<Option<Interval>> {
        match self.list(section, key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some(Interval::new(v[0], v[1]))),
            Some(_) => Err(Error::config(
                self.locate(section, key),
                "expected two numbers `lo, hi`",
            )),
        }
    }

    fn fail(&self, section: &str, key: &str, message: impl Into<String>) -> Error {
        Error::config(self.locate(section, key), message)
    }
}

fn key_lines(text: &str) -> BTreeMap<(String, String), usize> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
        } else if let Some((key, _)) = line.split_once('=') {
            out.entry((section.clone(), key.trim().to_string())).or_insert(i + 1);
        }
    }
    out
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            location: Some(path.display().to_string()),
            message: format!("cannot read config: {e}"),
        })?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, &path.display().to_string(), &base)
    }

    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config {
            location: Some(format!("{origin}:{}", e.line)),
            message: e.msg.to_string(),
        })?;
        let src = Source {
            ini: &ini,
            origin: origin.to_string(),
            lines: key_lines(text),
        };
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(src.fail("", key, "key outside of any section"));
                }
                continue;
            };
            let Some((_, keys)) = KNOWN_KEYS.iter().find(|(s, _)| *s == section) else {
                return Err(Error::config(format!("{origin} [{section}]"), "unknown section"));
            };
            for (key, _) in props.iter() {
                if !keys.contains(&key) {
                    return Err(src.fail(section, key, "unknown key"));
                }
            }
        }

        let d = ExperimentConfig::default();
        let domain = src.interval("potential", "domain")?.unwrap_or(Interval::new(-3.0, 3.0));
        let hull_samples = src.parse("potential", "hull_samples")?.unwrap_or(DEFAULT_HULL_SAMPLES);
        let potential = match src.raw("potential", "kind").unwrap_or("double_well") {
            "double_well" => PotentialSpec::DoubleWell,
            "polynomial" => PotentialSpec::Polynomial {
                coefficients: src
                    .list("potential", "coefficients")?
                    .ok_or_else(|| src.fail("potential", "coefficients", "required for kind = polynomial"))?,
                domain,
                hull_samples,
            },
            "file" => PotentialSpec::File {
                path: base_dir.join(
                    src.raw("potential", "path")
                        .ok_or_else(|| src.fail("potential", "path", "required for kind = file"))?,
                ),
                domain,
                hull_samples,
            },
            other => {
                return Err(src.fail(
                    "potential",
                    "kind",
                    format!("unknown potential {other:?} (expected double_well, polynomial or file)"),
                ))
            }
        };

        let m = src.parse("target", "m")?.unwrap_or(0.0);
        let amplitude = src.parse("target", "amplitude")?.unwrap_or(0.3);
        let target = match src.raw("target", "kind").unwrap_or("sinusoid") {
            "constant" => TargetSpec::Constant { m },
            "sinusoid" => TargetSpec::Sinusoid {
                m: src.parse("target", "m")?.unwrap_or(1.6),
                amplitude,
                wavenumber: src.parse("target", "wavenumber")?.unwrap_or(1),
            },
            "piecewise" => {
                let raw = src
                    .raw("target", "pieces")
                    .ok_or_else(|| src.fail("target", "pieces", "required for kind = piecewise"))?;
                let pieces = raw
                    .split(',')
                    .map(|p| {
                        let (s, v) = p
                            .split_once(':')
                            .ok_or_else(|| src.fail("target", "pieces", format!("expected start:value, got {p:?}")))?;
                        let parse = |x: &str| {
                            x.trim()
                                .parse::<f64>()
                                .map_err(|_| src.fail("target", "pieces", format!("cannot parse {x:?}")))
                        };
                        Ok((parse(s)?, parse(v)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TargetSpec::Piecewise { pieces }
            }
            "file" => TargetSpec::File {
                path: base_dir.join(
                    src.raw("target", "path")
                        .ok_or_else(|| src.fail("target", "path", "required for kind = file"))?,
                ),
            },
            "random" => TargetSpec::Random {
                m,
                amplitude,
                modes: src.parse("target", "modes")?.unwrap_or(4),
            },
            other => {
                return Err(src.fail(
                    "target",
                    "kind",
                    format!("unknown target {other:?} (expected constant, sinusoid, piecewise, file or random)"),
                ))
            }
        };

        let preparation = match src.raw("preparation", "mode").unwrap_or("recovery") {
            "none" => PreparationSpec::None,
            "recovery" => PreparationSpec::Recovery,
            "wrinkle" => PreparationSpec::Wrinkle {
                region: src
                    .interval("preparation", "region")?
                    .ok_or_else(|| src.fail("preparation", "region", "required for mode = wrinkle"))?,
            },
            other => {
                return Err(src.fail(
                    "preparation",
                    "mode",
                    format!("unknown mode {other:?} (expected none, recovery or wrinkle)"),
                ))
            }
        };
        let scales = Scales {
            wavelength_exponent: src
                .parse("preparation", "wavelength_exponent")?
                .unwrap_or(d.scales.wavelength_exponent),
            transition_exponent: src
                .parse("preparation", "transition_exponent")?
                .unwrap_or(d.scales.transition_exponent),
        };

        let da = AuditSpec::default();
        let audit = AuditSpec {
            windows: src.parse("audit", "windows")?.unwrap_or(da.windows),
            bins: src.parse("audit", "bins")?.unwrap_or(da.bins),
            tol: src.parse("audit", "tol")?.unwrap_or(da.tol),
            e: src.parse("audit", "e")?.unwrap_or(da.e),
            delta: src.parse("audit", "delta")?.unwrap_or(da.delta),
            neighborhood_window: src
                .parse("audit", "neighborhood_window")?
                .unwrap_or(da.neighborhood_window),
            slope_bound: src.parse("audit", "slope_bound")?,
            dichotomy: src.parse("audit", "dichotomy")?.unwrap_or(da.dichotomy),
            correlation: src.parse("audit", "correlation")?.unwrap_or(da.correlation),
            oscillation: src.parse("audit", "oscillation")?.unwrap_or(da.oscillation),
            neighborhood: src.parse("audit", "neighborhood")?.unwrap_or(da.neighborhood),
        };

        let cfg = ExperimentConfig {
            potential,
            n: src.parse("grid", "n")?.unwrap_or(d.n),
            eps_list: src.list("run", "eps_list")?.unwrap_or(d.eps_list),
            tau: src.parse("run", "tau")?,
            tau_stefan: src.parse("run", "tau_stefan")?,
            t_end: src.parse("run", "t_end")?.unwrap_or(d.t_end),
            stabilization: src.parse("run", "stabilization")?,
            snapshot_stride: src.parse("run", "snapshot_stride")?.unwrap_or(d.snapshot_stride),
            comparisons: src.parse("run", "comparisons")?.unwrap_or(d.comparisons),
            nonlinear_tol: src.parse("run", "nonlinear_tol")?.unwrap_or(d.nonlinear_tol),
            nonlinear_max_iter: src.parse("run", "nonlinear_max_iter")?.unwrap_or(d.nonlinear_max_iter),
            target,
            preparation,
            scales,
            audit,
            output: src.raw("output", "dir").map(|p| base_dir.join(p)),
            seed: src.parse("rng", "seed")?.unwrap_or(d.seed),
            base_dir: base_dir.to_path_buf(),
        };
        cfg.validate_with(&src)?;
        Ok(cfg)
    }

    fn validate_with(&self, src: &Source) -> Result<()> {
        let fail = |s: &str, k: &str, m: String| Err(src.fail(s, k, m));
        if !self.n.is_power_of_two() || self.n < crate::field::MIN_GRID {
            return fail(
                "grid",
                "n",
                format!("n = {} must be a power of two and at least 16", self.n),
            );
        }
        if self.eps_list.is_empty() {
            return fail("run", "eps_list", "at least one eps is required".into());
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return fail("run", "eps_list", "every eps must lie in (0, 1]".into());
        }
        if self.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
            return fail("run", "eps_list", "eps_list must be strictly decreasing".into());
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return fail("run", "tau", format!("tau must be positive, got {t}"));
            }
        }
        if let Some(t) = self.tau_stefan {
            if !(t > 0.0) {
                return fail("run", "tau_stefan", format!("tau_stefan must be positive, got {t}"));
            }
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return fail("run", "t_end", "t_end must be positive".into());
        }
        if let Some(s) = self.stabilization {
            if !(s >= 0.0) {
                return fail("run", "stabilization", "stabilization must be non-negative".into());
            }
        }
        if self.snapshot_stride == 0 {
            return fail("run", "snapshot_stride", "snapshot_stride must be at least 1".into());
        }
        if self.comparisons == 0 {
            return fail("run", "comparisons", "comparisons must be at least 1".into());
        }
        if !(self.nonlinear_tol > 0.0) || self.nonlinear_max_iter == 0 {
            return fail(
                "run",
                "nonlinear_tol",
                "nonlinear solver limits must be positive".into(),
            );
        }
        if let PotentialSpec::Polynomial { domain, .. } | PotentialSpec::File { domain, .. } = &self.potential {
            if domain.is_empty() {
                return fail("potential", "domain", "domain must satisfy lo < hi".into());
            }
        }
        match &self.target {
            TargetSpec::Piecewise { pieces } => {
                if pieces.is_empty() || pieces[0].0 != 0.0 {
                    return fail("target", "pieces", "the first piece must start at 0".into());
                }
                if pieces.windows(2).any(|w| !(w[1].0 > w[0].0)) || pieces.iter().any(|p| p.0 >= 1.0) {
                    return fail("target", "pieces", "piece starts must increase within [0, 1)".into());
                }
            }
            TargetSpec::Sinusoid { wavenumber, .. } if *wavenumber == 0 => {
                return fail("target", "wavenumber", "wavenumber must be at least 1".into());
            }
            TargetSpec::Random { modes, .. } if *modes == 0 => {
                return fail("target", "modes", "modes must be at least 1".into());
            }
            _ => {}
        }
        if let PreparationSpec::Wrinkle { region } = &self.preparation {
            if !(0.0..=1.0).contains(&region.lo) || !(0.0..=1.0).contains(&region.hi) {
                return fail("preparation", "region", "region endpoints must lie in [0, 1]".into());
            }
        }
        let s = self.scales;
        if !(s.wavelength_exponent > 0.0
            && s.transition_exponent > s.wavelength_exponent
            && s.transition_exponent < 1.0)
        {
            return fail(
                "preparation",
                "transition_exponent",
                "exponents must satisfy 0 < wavelength < transition < 1".into(),
            );
        }
        let a = &self.audit;
        if a.windows == 0 || !self.n.is_multiple_of(a.windows) {
            return fail(
                "audit",
                "windows",
                format!("windows = {} must divide n = {}", a.windows, self.n),
            );
        }
        if a.bins == 0 {
            return fail("audit", "bins", "bins must be positive".into());
        }
        for (key, v) in [
            ("tol", a.tol),
            ("e", a.e),
            ("delta", a.delta),
            ("neighborhood_window", a.neighborhood_window),
        ] {
            if !(v > 0.0) {
                return fail("audit", key, format!("{key} must be positive"));
            }
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.eps_list.windows(2).any(|w| (w[0] / w[1] - 2.0).abs() > 1e-9) {
            out.push("eps_list is not geometric with ratio 2; trends may be irregular".into());
        }
        out
    }

    pub fn build_potential(&self) -> Result<PotentialModel> {
        match &self.potential {
            PotentialSpec::DoubleWell => Ok(PotentialModel::double_well()),
            PotentialSpec::Polynomial {
                coefficients,
                domain,
                hull_samples,
            } => PotentialModel::polynomial(coefficients, *domain, *hull_samples),
            PotentialSpec::File {
                path,
                domain,
                hull_samples,
            } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                let coefficients = text
                    .lines()
                    .map(|l| l.split('#').next().unwrap_or(""))
                    .flat_map(|l| l.split([',', ' ', '\t']))
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| Error::Parse {
                            path: path.display().to_string(),
                            message: format!("cannot parse coefficient {s:?}"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                PotentialModel::polynomial(&coefficients, *domain, *hull_samples)
            }
        }
    }

    pub fn build_target(&self) -> Result<PeriodicField> {
        let n = self.n;
        match &self.target {
            TargetSpec::Constant { m } => PeriodicField::constant(n, *m),
            TargetSpec::Sinusoid {
                m,
                amplitude,
                wavenumber,
            } => {
                let k = 2.0 * PI * *wavenumber as f64;
                PeriodicField::from_fn(n, |x| m + amplitude * (k * x).sin())
            }
            TargetSpec::Piecewise { pieces } => PeriodicField::from_fn(n, |x| {
                pieces
                    .iter()
                    .rev()
                    .find(|p| x >= p.0)
                    .map(|p| p.1)
                    .unwrap_or(pieces[0].1)
            }),
            TargetSpec::File { path } => {
                let f = PeriodicField::read_csv(path)?;
                if f.n() != n {
                    return Err(Error::GridMismatch(f.n(), n));
                }
                Ok(f)
            }
            TargetSpec::Random { m, amplitude, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let terms: Vec<(f64, f64, f64)> = (1..=*modes)
                    .map(|k| {
                        (
                            k as f64,
                            rng.gen_range(-1.0..1.0) / k as f64,
                            rng.gen_range(0.0..2.0 * PI),
                        )
                    })
                    .collect();
                let raw = PeriodicField::from_fn(n, |x| {
                    terms.iter().map(|(k, c, phi)| c * (2.0 * PI * k * x + phi).cos()).sum()
                })?;
                let scale = raw.linf_norm().max(f64::MIN_POSITIVE);
                Ok(raw.map(|v| m + amplitude * v / scale))
            }
        }
    }

    /// Canonical text of the resolved configuration.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let path = |p: &Path| p.display().to_string();
        let _ = writeln!(out, "# schema_version = {SCHEMA_VERSION}\n");
        out.push_str("[potential]\n");
        match &self.potential {
            PotentialSpec::DoubleWell => out.push_str("kind = double_well\n"),
            PotentialSpec::Polynomial {
                coefficients,
                domain,
                hull_samples,
            } => {
                let _ = writeln!(
                    out,
                    "kind = polynomial\ncoefficients = {}\ndomain = {:?}, {:?}\nhull_samples = {hull_samples}",
                    list(coefficients),
                    domain.lo,
                    domain.hi
                );
            }
            PotentialSpec::File {
                path: p,
                domain,
                hull_samples,
            } => {
                let _ = writeln!(
                    out,
                    "kind = file\npath = {}\ndomain = {:?}, {:?}\nhull_samples = {hull_samples}",
                    path(p),
                    domain.lo,
                    domain.hi
                );
            }
        }
        let _ = writeln!(out, "\n[grid]\nn = {}\n", self.n);
        let _ = writeln!(out, "[run]\neps_list = {}", list(&self.eps_list));
        if let Some(t) = self.tau {
            let _ = writeln!(out, "tau = {t:?}");
        }
        if let Some(t) = self.tau_stefan {
            let _ = writeln!(out, "tau_stefan = {t:?}");
        }
        let _ = writeln!(out, "t_end = {:?}", self.t_end);
        if let Some(s) = self.stabilization {
            let _ = writeln!(out, "stabilization = {s:?}");
        }
        let _ = writeln!(
            out,
            "snapshot_stride = {}\ncomparisons = {}\nnonlinear_tol = {:?}\nnonlinear_max_iter = {}\n",
            self.snapshot_stride, self.comparisons, self.nonlinear_tol, self.nonlinear_max_iter
        );
        out.push_str("[target]\n");
        match &self.target {
            TargetSpec::Constant { m } => {
                let _ = writeln!(out, "kind = constant\nm = {m:?}");
            }
            TargetSpec::Sinusoid {
                m,
                amplitude,
                wavenumber,
            } => {
                let _ = writeln!(
                    out,
                    "kind = sinusoid\nm = {m:?}\namplitude = {amplitude:?}\nwavenumber = {wavenumber}"
                );
            }
            TargetSpec::Piecewise { pieces } => {
                let p = pieces
                    .iter()
                    .map(|(s, v)| format!("{s:?}:{v:?}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(out, "kind = piecewise\npieces = {p}");
            }
            TargetSpec::File { path: p } => {
                let _ = writeln!(out, "kind = file\npath = {}", path(p));
            }
            TargetSpec::Random { m, amplitude, modes } => {
                let _ = writeln!(
                    out,
                    "kind = random\nm = {m:?}\namplitude = {amplitude:?}\nmodes = {modes}"
                );
            }
        }
        out.push_str("\n[preparation]\n");
        match &self.preparation {
            PreparationSpec::None => out.push_str("mode = none\n"),
            PreparationSpec::Recovery => out.push_str("mode = recovery\n"),
            PreparationSpec::Wrinkle { region } => {
                let _ = writeln!(out, "mode = wrinkle\nregion = {:?}, {:?}", region.lo, region.hi);
            }
        }
        let _ = writeln!(
            out,
            "wavelength_exponent = {:?}\ntransition_exponent = {:?}\n",
            self.scales.wavelength_exponent, self.scales.transition_exponent
        );
        let a = &self.audit;
        let _ = writeln!(
            out,
            "[audit]\nwindows = {}\nbins = {}\ntol = {:?}\ne = {:?}\ndelta = {:?}\nneighborhood_window = {:?}",
            a.windows, a.bins, a.tol, a.e, a.delta, a.neighborhood_window
        );
        if let Some(c) = a.slope_bound {
            let _ = writeln!(out, "slope_bound = {c:?}");
        }
        let _ = writeln!(
            out,
            "dichotomy = {}\ncorrelation = {}\noscillation = {}\nneighborhood = {}\n",
            a.dichotomy, a.correlation, a.oscillation, a.neighborhood
        );
        let _ = writeln!(out, "[rng]\nseed = {}", self.seed);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, "test.ini", Path::new("."))
    }

    #[test]
    fn defaults_from_an_empty_file() {
        let c = parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(c.warnings().is_empty());
    }

    #[test]
    fn full_config_round_trips_through_its_canonical_text() {
        let text = "\
[potential]
kind = polynomial
coefficients = 0.25, 0, -0.5, 0, 0.25
domain = -3, 3
hull_samples = 2048

[grid]
n = 256

[run]
eps_list = 0.04, 0.02, 0.01
tau = 1e-6
t_end = 0.002

[target]
kind = piecewise
pieces = 0:0.2, 0.5:1.5

[preparation]
mode = wrinkle
region = 0.1, 0.4

[audit]
windows = 16
slope_bound = 50

[rng]
seed = 9
";
        let c = parse(text).unwrap();
        assert_eq!(c.n, 256);
        assert_eq!(c.tau, Some(1e-6));
        assert_eq!(c.seed, 9);
        assert_eq!(
            c.target,
            TargetSpec::Piecewise {
                pieces: vec![(0.0, 0.2), (0.5, 1.5)]
            }
        );
        let again = parse(&c.to_ini()).unwrap();
        assert_eq!(again, c);
        assert!(c.build_potential().unwrap().sigma_g().len() == 1);
        let t = c.build_target().unwrap();
        assert_eq!(t.values()[0], 0.2);
        assert_eq!(t.values()[200], 1.5);
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let err = parse("[grid]\nn = 100\n").unwrap_err().to_string();
        assert!(err.contains("test.ini:2") && err.contains("[grid] n"), "{err}");

        let err = parse("[run]\nt_end = 0.1\neps_list = 0.01, 0.02\n")
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("test.ini:3") && err.contains("strictly decreasing"),
            "{err}"
        );

        let err = parse("[run]\nepslist = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("unknown key"), "{err}");

        let err = parse("[grid]\nn = abc\n").unwrap_err().to_string();
        assert!(err.contains("cannot parse"), "{err}");

        assert!(parse("[nope]\nx = 1\n").is_err());
        assert!(parse("[target]\nkind = blob\n").is_err());
        assert!(parse("[preparation]\nmode = wrinkle\n").is_err());
        assert!(parse("[audit]\nwindows = 48\n").is_err());
        assert!(parse("[target]\nkind = piecewise\npieces = 0.1:1\n").is_err());
    }

    #[test]
    fn random_targets_follow_the_seed() {
        let text = "[target]\nkind = random\nm = 0.2\namplitude = 0.5\n";
        let mut a = parse(text).unwrap();
        let b = parse(text).unwrap();
        assert_eq!(a.build_target().unwrap(), b.build_target().unwrap());
        let f = a.build_target().unwrap();
        assert!((f.linf_norm() - 0.7).abs() < 0.5);
        assert!((f.max() - f.min()) <= 1.0 + 1e-12);
        a.seed = 1;
        assert_ne!(a.build_target().unwrap(), f);
    }

    #[test]
    fn non_geometric_eps_list_warns() {
        let c = parse("[run]\neps_list = 0.1, 0.03\n").unwrap();
        assert_eq!(c.warnings().len(), 1);
    }
}
