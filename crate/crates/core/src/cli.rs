//! Command-line experiment driver.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{self, StudyConfig};
use crate::config::{ExperimentConfig, PreparationSpec, SCHEMA_VERSION};
use crate::dynamics::{self, SolverConfig, Trajectory};
use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpectralWorkspace};
use crate::potential::PotentialModel;
use crate::preparation::{plan_recovery, wrinkle_with, RecoveryPlan};

#[derive(Debug, Parser)]
#[command(
    name = "chlab",
    version,
    about = "Sharp-interface limit experiments for 1-D Cahn-Hilliard"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// RNG seed (overrides `[rng] seed`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Envelope table and unstable sets of the potential.
    Potential(Common),
    /// Cahn-Hilliard runs for every eps.
    RunCh(Common),
    /// Relaxed (Stefan) flow from the target.
    RunStefan(Common),
    /// Convergence study over eps.
    Sweep(Common),
    /// Young-measure and oscillation audits on prepared data.
    Audit(Common),
    /// Write prepared initial data for every eps.
    Prepare(Common),
}

/// Outcome of a subcommand that completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::OutputExists(_) | Error::Potential(_) => 2,
        Error::Io(err) if err.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

pub fn run(command: Command) -> Result<Outcome> {
    let (common, kind) = match &command {
        Command::Potential(c) => (c, "potential"),
        Command::RunCh(c) => (c, "run-ch"),
        Command::RunStefan(c) => (c, "run-stefan"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Audit(c) => (c, "audit"),
        Command::Prepare(c) => (c, "prepare"),
    };
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config {
            location: None,
            message: "no output directory: pass --out or set [output] dir".into(),
        })?;
    // everything that can fail on bad input is resolved before touching the disk
    let model = cfg.build_potential()?;
    let target = cfg.build_target()?;
    prepare_output(&out, common.force)?;
    fs::write(out.join("config.ini"), cfg.to_ini())?;
    fs::write(out.join("SCHEMA_VERSION"), format!("{SCHEMA_VERSION}\n"))?;
    let ctx = Context {
        cfg: &cfg,
        model: &model,
        target: &target,
        out: &out,
    };
    let mut summary = Summary::new(kind);
    for w in cfg.warnings() {
        summary.note(format!("warning: {w}"));
    }
    let result = match command {
        Command::Potential(_) => ctx.potential(&mut summary),
        Command::RunCh(_) => ctx.run_ch(&mut summary),
        Command::RunStefan(_) => ctx.run_stefan(&mut summary),
        Command::Sweep(_) => ctx.sweep(&mut summary),
        Command::Audit(_) => ctx.audit(&mut summary),
        Command::Prepare(_) => ctx.prepare(&mut summary),
    };
    if let Err(e) = &result {
        summary.check("completed", false, e.to_string());
    }
    fs::write(out.join("summary.txt"), summary.render())?;
    print!("{}", summary.render());
    result?;
    Ok(summary.outcome())
}

fn prepare_output(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        let non_empty = fs::read_dir(out)?.next().is_some();
        if non_empty && !force {
            return Err(Error::OutputExists(out.display().to_string()));
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

struct Summary {
    lines: Vec<String>,
    failed: bool,
}

impl Summary {
    fn new(kind: &str) -> Self {
        Self {
            lines: vec![format!("chlab {kind}")],
            failed: false,
        }
    }

    fn note(&mut self, line: String) {
        self.lines.push(line);
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.failed |= !ok;
        self.lines
            .push(format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
    }

    fn outcome(&self) -> Outcome {
        if self.failed {
            Outcome::Fail
        } else {
            Outcome::Pass
        }
    }

    fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        let _ = write!(s, "\nOVERALL {}\n", if self.failed { "FAIL" } else { "PASS" });
        s
    }
}

fn eps_tag(eps: f64) -> String {
    format!("eps_{eps}")
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a PotentialModel,
    target: &'a PeriodicField,
    out: &'a Path,
}

impl Context<'_> {
    fn initial_data(&self, eps: f64) -> Result<(PeriodicField, Option<RecoveryPlan>)> {
        match &self.cfg.preparation {
            PreparationSpec::None => Ok((self.target.clone(), None)),
            PreparationSpec::Recovery => {
                let (f, plan) = plan_recovery(self.model, self.target, eps, self.cfg.scales)?;
                Ok((f, Some(plan)))
            }
            PreparationSpec::Wrinkle { region } => {
                let w = wrinkle_with(self.model, self.target, *region, eps, self.cfg.scales)?;
                Ok((w.field, Some(w.plan)))
            }
        }
    }

    fn solver(&self, eps: Option<f64>) -> SolverConfig {
        let c = self.cfg;
        let tau = match eps {
            Some(e) => c.tau.unwrap_or_else(|| dynamics::default_ch_tau(e)),
            None => c.tau_stefan.unwrap_or(SolverConfig::stefan(c.t_end).tau),
        };
        SolverConfig {
            tau,
            t_end: c.t_end,
            stabilization: c.stabilization,
            snapshot_stride: c.snapshot_stride,
            nonlinear_tol: c.nonlinear_tol,
            nonlinear_max_iter: c.nonlinear_max_iter,
        }
    }

    fn potential(&self, summary: &mut Summary) -> Result<()> {
        let m = self.model;
        fs::write(self.out.join("envelope.csv"), m.envelope_table_csv())?;
        fs::write(self.out.join("sets.txt"), m.sets_listing())?;
        summary.note(format!("hull spacing {:e}", m.hull_spacing()));
        summary.note(format!("growth constant {:.6e}", m.growth_constant()));
        if m.growth_warning() {
            summary.note("warning: |W'|/(1+W) still grows at the edge of the hull domain".into());
        }
        summary.check(
            "sigma_g",
            !m.sigma_g().is_empty(),
            format!("{} component(s)", m.sigma_g().len()),
        );
        Ok(())
    }

    fn write_trajectory(&self, dir: &Path, traj: &Trajectory) -> Result<()> {
        fs::create_dir_all(dir.join("snapshots"))?;
        fs::write(dir.join("ledger.csv"), traj.ledger_csv())?;
        for (i, (t, s)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
            fs::write(
                dir.join("snapshots").join(format!("snapshot_{i:05}.csv")),
                format!("# t={t:.16e}\n{}", s.to_csv()),
            )?;
        }
        Ok(())
    }

    fn trajectory_checks(&self, summary: &mut Summary, label: &str, traj: &Trajectory) {
        summary.check(
            &format!("{label} mass"),
            traj.max_mass_drift <= 1e-12,
            format!("max |mean - m| = {:.3e}", traj.max_mass_drift),
        );
        summary.note(format!(
            "{label} dissipation residual at T: {:.6e}",
            traj.ledger.last().map(|r| r.residual).unwrap_or(0.0)
        ));
    }

    fn run_ch(&self, summary: &mut Summary) -> Result<()> {
        let results: Vec<(f64, Result<Trajectory>)> = self
            .cfg
            .eps_list
            .par_iter()
            .map(|&eps| {
                let r = self
                    .initial_data(eps)
                    .and_then(|(u0, _)| dynamics::run_cahn_hilliard(self.model, &u0, eps, &self.solver(Some(eps))));
                (eps, r)
            })
            .collect();
        for (eps, r) in results {
            let dir = self.out.join(eps_tag(eps));
            match r {
                Ok(traj) => {
                    self.write_trajectory(&dir, &traj)?;
                    self.trajectory_checks(summary, &eps_tag(eps), &traj);
                    summary.check(
                        &format!("{} energy", eps_tag(eps)),
                        traj.max_energy_increase <= 1e-10 * (1.0 + traj.ledger[0].energy.abs()),
                        format!("max step increase {:.3e}", traj.max_energy_increase),
                    );
                }
                Err(Error::SolverAbort { partial, reason, t, .. }) => {
                    self.write_trajectory(&dir, &partial)?;
                    summary.check(&eps_tag(eps), false, format!("aborted at t = {t}: {reason}"));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn run_stefan(&self, summary: &mut Summary) -> Result<()> {
        let dir = self.out.join("stefan");
        match dynamics::run_stefan(self.model, self.target, &self.solver(None)) {
            Ok(traj) => {
                self.write_trajectory(&dir, &traj)?;
                self.trajectory_checks(summary, "stefan", &traj);
                summary.note(format!("newton iterations {}", traj.newton_iterations));
            }
            Err(Error::SolverAbort { partial, reason, t, .. }) => {
                self.write_trajectory(&dir, &partial)?;
                summary.check("stefan", false, format!("aborted at t = {t}: {reason}"));
            }
            Err(Error::NonConvergence {
                partial, residual, t, ..
            }) => {
                self.write_trajectory(&dir, &partial)?;
                summary.check(
                    "stefan",
                    false,
                    format!("no convergence at t = {t}, residual {residual:.3e}"),
                );
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn sweep(&self, summary: &mut Summary) -> Result<()> {
        let c = self.cfg;
        let study_cfg = StudyConfig {
            t_end: c.t_end,
            tau_ch: c.tau,
            tau_stefan: c.tau_stefan,
            comparisons: c.comparisons,
            nonlinear_tol: c.nonlinear_tol,
            nonlinear_max_iter: c.nonlinear_max_iter,
        };
        let study = analysis::convergence_study(self.model, self.target, &c.eps_list, &study_cfg)?;
        fs::write(self.out.join("convergence.csv"), study.table.to_csv(true))?;
        let floor = 10.0 * c.nonlinear_tol;
        let v = study.table.verdict(floor);
        summary.check(
            "sup_hminus1 decreasing",
            v.hminus1_decreasing,
            column(&study.table, |r| r.sup_hminus1),
        );
        summary.check(
            "slope_l2t decreasing",
            v.slope_decreasing,
            column(&study.table, |r| r.slope_l2t),
        );
        summary.check(
            "energy checkpoints decreasing",
            v.energy_decreasing,
            column(&study.table, |r| r.energy_err[4]),
        );

        let linf = analysis::linf_audit(&study.table.column(|r| r.linf));
        summary.check(
            "uniform sup bound",
            linf.no_growth,
            format!("bounds {:?}, median {:.6}", linf.bounds, linf.median),
        );
        let bounds = study.table.column(|r| r.energy_slope_bound);
        summary.note(format!("max F_eps + slope_eps along runs: {bounds:?}"));
        let chem = analysis::chemical_potential_audit(&study.chem_pot)?;
        summary.note(format!("chemical potential H1 norms {:?}", chem.h1_norms));
        summary.check(
            "chemical potential Cauchy",
            chem.cauchy,
            format!("increments {:?}", chem.increments),
        );

        let probe = analysis::gamma_liminf_probe(self.model, self.target, &c.eps_list)?;
        fs::write(self.out.join("liminf.csv"), probe.to_csv())?;
        summary.check(
            "slope liminf",
            probe.holds(),
            format!(
                "min slope_eps {:.6e} vs slope_star {:.6e} - tol {:.3e}",
                probe.min_slope_eps(),
                probe.slope_star,
                probe.tol
            ),
        );
        Ok(())
    }

    fn audit(&self, summary: &mut Summary) -> Result<()> {
        let c = self.cfg;
        let a = &c.audit;
        let fields = c
            .eps_list
            .par_iter()
            .map(|&eps| Ok(self.initial_data(eps)?.0))
            .collect::<Result<Vec<PeriodicField>>>()?;
        let finest_eps = *c.eps_list.last().expect("validated non-empty");
        if let Some(w) = analysis::window_resolution_warning(a.windows, finest_eps.powf(c.scales.wavelength_exponent)) {
            summary.note(format!("warning: {w}"));
        }
        let eym = analysis::young_measure(&fields, a.windows, a.bins)?;
        let mut ym = String::from("window,bin,mass,node\n");
        for w in 0..eym.windows {
            for b in 0..eym.bins {
                if eym.hist[w][b] > 0.0 {
                    let _ = writeln!(ym, "{w},{b},{:.16e},{:.16e}", eym.hist[w][b], eym.nodes[w][b]);
                }
            }
        }
        fs::write(self.out.join("young_measure.csv"), ym)?;
        let trend = eym.trend(&fields, |v| v);
        summary.note(format!("window-mean discrepancy per eps: {trend:?}"));

        if a.dichotomy {
            let r = analysis::audit_support_dichotomy(self.model, &eym, self.target, a.tol)?;
            fs::write(self.out.join("dichotomy.csv"), r.to_csv())?;
            summary.check(
                "support dichotomy",
                r.pass(),
                format!(
                    "{} violation(s), Σ_G mass {:.6}",
                    r.violations.len(),
                    r.total_sigma_g_mass()
                ),
            );
        }
        if a.correlation {
            let r = analysis::audit_correlation(self.model, &eym, |v| v)?;
            let mut csv = String::from("window,excess\n");
            for (w, e) in r.excess.iter().enumerate() {
                let _ = writeln!(csv, "{w},{e:.16e}");
            }
            fs::write(self.out.join("correlation.csv"), csv)?;
            summary.note(format!("correlation max positive excess {:.6e}", r.max_positive_excess));
        }
        if a.oscillation {
            let mut csv = String::from("eps,criticals,pairs,violations,slope_eps\n");
            let mut clean = Vec::new();
            for (&eps, f) in c.eps_list.iter().zip(&fields) {
                let r = analysis::oscillation_audit(self.model, f, eps, a.e, a.delta, a.slope_bound)?;
                let _ = writeln!(
                    csv,
                    "{eps},{},{},{},{:.16e}",
                    r.criticals,
                    r.pairs_checked,
                    r.violations.len(),
                    r.slope_eps
                );
                clean.push((eps, r.pass()));
            }
            fs::write(self.out.join("oscillation.csv"), csv)?;
            let finest_clean = clean.last().map(|c| c.1).unwrap_or(true);
            let eps0 = analysis::empirical_eps0(&clean);
            summary.check(
                "oscillation localisation",
                finest_clean,
                format!("clean below eps = {eps0:?}"),
            );
        }
        if a.neighborhood {
            let f = fields.last().expect("validated non-empty");
            let r = analysis::neighborhood_audit(self.model, f, a.e, a.neighborhood_window)?;
            fs::write(
                self.out.join("neighborhood.csv"),
                format!(
                    "e,window,qualifying,largest_delta,violations\n{},{},{},{:.16e},{}\n",
                    r.e,
                    r.window,
                    r.qualifying,
                    r.largest_delta,
                    r.violations.len()
                ),
            )?;
            summary.check(
                "neighborhood",
                r.pass(),
                format!("largest admissible delta' {:.6e}", r.largest_delta),
            );
        }
        Ok(())
    }

    fn prepare(&self, summary: &mut Summary) -> Result<()> {
        let ws = SpectralWorkspace::new(self.cfg.n)?;
        let mut energies = String::from(EnergyReport::CSV_HEADER);
        energies.push('\n');
        for &eps in &self.cfg.eps_list {
            let (f, plan) = self.initial_data(eps)?;
            fs::write(self.out.join(format!("prepared_{}.csv", eps_tag(eps))), f.to_csv())?;
            if let Some(plan) = plan {
                fs::write(self.out.join(format!("plan_{}.json", eps_tag(eps))), plan.to_json())?;
                for w in &plan.warnings {
                    summary.note(format!("warning ({}): {w}", eps_tag(eps)));
                }
            }
            let report = EnergyReport::evaluate(self.model, &ws, &f, eps)?;
            energies.push_str(&report.csv_row());
            energies.push('\n');
            summary.check(
                &format!("{} mass", eps_tag(eps)),
                (f.mean() - self.target.mean()).abs() <= 1e-10,
                format!("mean {:.16e}", f.mean()),
            );
        }
        fs::write(self.out.join("energies.csv"), energies)?;
        Ok(())
    }
}

fn column(t: &analysis::ConvergenceTable, f: impl Fn(&analysis::ConvergenceRow) -> f64) -> String {
    let v: Vec<String> = t.rows.iter().map(|r| format!("{:.3e}", f(r))).collect();
    v.join(" > ")
}
