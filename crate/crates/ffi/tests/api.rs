use std::f64::consts::PI;
use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use chlab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(chlab_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn field(values: &[f64]) -> *mut ChlabField {
    let mut f = ptr::null_mut();
    assert_eq!(
        unsafe { chlab_field_new(values.as_ptr(), values.len(), &mut f) },
        ChlabStatus::Ok
    );
    f
}

fn sinusoid(n: usize, m: f64, a: f64) -> Vec<f64> {
    (0..n).map(|j| m + a * (2.0 * PI * j as f64 / n as f64).sin()).collect()
}

#[test]
fn potential_queries() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(chlab_potential_double_well(&mut p), ChlabStatus::Ok);
        let mut w = 0.0;
        assert_eq!(chlab_potential_eval(p, 0.0, &mut w), ChlabStatus::Ok);
        assert_eq!(w, 0.25);
        assert_eq!(chlab_potential_envelope(p, 0.0, &mut w), ChlabStatus::Ok);
        assert!(w.abs() < 1e-12);
        let mut count = 0;
        assert_eq!(chlab_potential_sigma_g_count(p, &mut count), ChlabStatus::Ok);
        assert_eq!(count, 1);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(chlab_potential_sigma_g(p, 0, &mut lo, &mut hi), ChlabStatus::Ok);
        assert!((lo + 1.0).abs() < 2e-3 && (hi - 1.0).abs() < 2e-3);
        assert_eq!(
            chlab_potential_sigma_g(p, 1, &mut lo, &mut hi),
            ChlabStatus::IndexOutOfRange
        );
        assert_eq!(chlab_potential_psi(p, 1.0, 2.0, &mut w), ChlabStatus::Ok);
        assert!((w - 0.7462124).abs() < 1e-6);
        assert_eq!(chlab_potential_psi(p, 2.0, 1.0, &mut w), ChlabStatus::InvalidArgument);
        assert!(last_error().contains("psi"));
        assert_eq!(chlab_potential_omega(p, 0.5, 2.0, &mut w), ChlabStatus::Ok);
        assert!(w > 0.0);
        assert_eq!(
            chlab_potential_envelope_derivative(p, 9.0, &mut w),
            ChlabStatus::OutsideHull
        );
        chlab_potential_free(p);

        let coeffs = [0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0];
        assert_eq!(
            chlab_potential_polynomial(coeffs.as_ptr(), coeffs.len(), -2.0, 2.0, 4097, &mut p),
            ChlabStatus::Ok
        );
        assert_eq!(chlab_potential_sigma_g_count(p, &mut count), ChlabStatus::Ok);
        assert_eq!(count, 2);
        chlab_potential_free(p);
        let bad = [0.0, 1.0];
        assert_eq!(
            chlab_potential_polynomial(bad.as_ptr(), 2, -2.0, 2.0, 4097, &mut p),
            ChlabStatus::Potential
        );
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(chlab_potential_double_well(ptr::null_mut()), ChlabStatus::NullPointer);
        let mut w = 0.0;
        assert_eq!(chlab_potential_eval(ptr::null(), 0.0, &mut w), ChlabStatus::NullPointer);
        assert_eq!(chlab_field_len(ptr::null()), 0);
        chlab_field_free(ptr::null_mut());
        chlab_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn fields_energies_and_recovery() {
    unsafe {
        let mut p = ptr::null_mut();
        chlab_potential_double_well(&mut p);
        let f = field(&sinusoid(256, 0.0, 1.0));
        assert_eq!(chlab_field_len(f), 256);
        let mut v = 0.0;
        assert_eq!(chlab_h_minus1_norm(f, &mut v), ChlabStatus::Ok);
        assert!((v * v - 1.0 / (8.0 * PI * PI)).abs() < 1e-14);
        assert_eq!(chlab_energy_star(p, f, &mut v), ChlabStatus::Ok);
        assert!(v.abs() < 1e-12);
        assert_eq!(chlab_energy_eps(p, f, 0.1, &mut v), ChlabStatus::Ok);
        assert!(v > 0.0);
        assert_eq!(chlab_slope_eps(p, f, 0.1, &mut v), ChlabStatus::Ok);
        assert!(v > 0.0);
        assert_eq!(chlab_slope_star(p, f, &mut v), ChlabStatus::Ok);

        let mut small = [0.0; 4];
        assert_eq!(
            chlab_field_values(f, small.as_mut_ptr(), 4),
            ChlabStatus::InvalidArgument
        );
        let zero = field(&[0.0; 512]);
        let mut prepared = ptr::null_mut();
        assert_eq!(chlab_prepare_recovery(p, zero, 0.01, &mut prepared), ChlabStatus::Ok);
        let mut out = vec![0.0; 512];
        assert_eq!(chlab_field_values(prepared, out.as_mut_ptr(), 512), ChlabStatus::Ok);
        assert!(out.iter().sum::<f64>().abs() / 512.0 < 1e-12);
        assert!(out.iter().any(|&x| x > 0.99) && out.iter().any(|&x| x < -0.99));

        let mut bad = ptr::null_mut();
        assert_eq!(chlab_field_new(out.as_ptr(), 100, &mut bad), ChlabStatus::GridSize);
        for h in [f, zero, prepared] {
            chlab_field_free(h);
        }
        chlab_potential_free(p);
    }
}

#[test]
fn runs_and_ledgers() {
    unsafe {
        let mut p = ptr::null_mut();
        chlab_potential_double_well(&mut p);
        let u0 = field(&sinusoid(128, 1.6, 0.3));
        let mut cfg = chlab_solver_config_cahn_hilliard(0.1, 1e-3);
        assert!(cfg.stabilization < 0.0);
        cfg.snapshot_stride = 10;
        let mut tr = ptr::null_mut();
        assert_eq!(chlab_run_cahn_hilliard(p, u0, 0.1, &cfg, &mut tr), ChlabStatus::Ok);
        let steps = (1e-3 / cfg.tau).round() as usize;
        assert_eq!(chlab_trajectory_ledger_len(tr), steps + 1);
        let mut first = ChlabLedgerRecord::default();
        let mut last = ChlabLedgerRecord::default();
        assert_eq!(chlab_trajectory_ledger(tr, 0, &mut first), ChlabStatus::Ok);
        assert_eq!(chlab_trajectory_ledger(tr, steps, &mut last), ChlabStatus::Ok);
        assert!(last.energy < first.energy && first.t == 0.0);
        assert_eq!(
            chlab_trajectory_ledger(tr, steps + 1, &mut last),
            ChlabStatus::IndexOutOfRange
        );
        let count = chlab_trajectory_snapshot_count(tr);
        assert_eq!(count, steps / 10 + 1);
        let (mut t, mut snap) = (0.0, ptr::null_mut());
        assert_eq!(
            chlab_trajectory_snapshot(tr, count - 1, &mut t, &mut snap),
            ChlabStatus::Ok
        );
        assert!((t - 1e-3).abs() < 1e-12);
        chlab_field_free(snap);
        let mut r = 0.0;
        assert_eq!(chlab_trajectory_dissipation_residual(tr, 1e-3, &mut r), ChlabStatus::Ok);
        let dissipated = first.energy - last.energy;
        assert!(r < 0.05 * dissipated, "residual {r:e} vs dissipated {dissipated:e}");
        chlab_trajectory_free(tr);

        let cfg = chlab_solver_config_stefan(1e-3);
        assert_eq!(chlab_run_stefan(p, u0, &cfg, &mut tr), ChlabStatus::Ok);
        assert!(chlab_trajectory_ledger_len(tr) > 1);
        chlab_trajectory_free(tr);

        let bad = ChlabSolverConfig { tau: -1.0, ..cfg };
        assert_eq!(chlab_run_stefan(p, u0, &bad, &mut tr), ChlabStatus::InvalidArgument);
        assert!(tr.is_null());
        chlab_field_free(u0);
        chlab_potential_free(p);
    }
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    assert!(include.join("chlab.h").is_file(), "header not generated");
    let Ok(cc) = which("cc") else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let lib_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/debug");
    let staticlib = lib_dir.join("libchlab_ffi.a");
    let tmp = std::env::temp_dir().join(format!("chlab_smoke_{}", std::process::id()));
    if !staticlib.is_file() {
        // header check only
        let st = Command::new(&cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(&include)
            .arg(manifest.join("tests/smoke.c"))
            .status()
            .unwrap();
        assert!(st.success());
        return;
    }
    let st = Command::new(&cc)
        .args(["-std=c11", "-D_DEFAULT_SOURCE", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(manifest.join("tests/smoke.c"))
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&tmp)
        .status()
        .unwrap();
    assert!(st.success(), "C compile failed");
    let out = Command::new(&tmp).output().unwrap();
    let _ = std::fs::remove_file(&tmp);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("sigma_g"));
}

fn which(name: &str) -> Result<PathBuf, ()> {
    std::env::var_os("PATH")
        .and_then(|paths| {
            std::env::split_paths(&paths)
                .map(|d| d.join(name))
                .find(|p| p.is_file())
        })
        .ok_or(())
}
