use std::f64::consts::PI;

use chlab::{run_cahn_hilliard, run_stefan, PeriodicField, PotentialModel, SolverConfig};

/// Explicit centred scheme for `u_t = (W'(u))_xx` with `W' = v³ - v`.
fn explicit_oracle(u0: &PeriodicField, t_end: f64, dt: f64) -> PeriodicField {
    let n = u0.n();
    let h2 = (1.0 / n as f64).powi(2);
    let steps = (t_end / dt).round() as usize;
    let mut u = u0.values().to_vec();
    let mut g = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for (gj, &v) in g.iter_mut().zip(&u) {
            *gj = v * v * v - v;
        }
        for j in 0..n {
            next[j] = u[j] + dt * (g[(j + 1) % n] - 2.0 * g[j] + g[(j + n - 1) % n]) / h2;
        }
        std::mem::swap(&mut u, &mut next);
    }
    PeriodicField::new(u).unwrap()
}

#[test]
fn stefan_agrees_with_explicit_oracle_on_convex_data() {
    let p = PotentialModel::double_well();
    let u0 = PeriodicField::from_fn(512, |x| 1.6 + 0.3 * (2.0 * PI * x).sin()).unwrap();
    let t_end = 0.005;
    let tr = run_stefan(&p, &u0, &SolverConfig::stefan(t_end).with_tau(1e-6)).unwrap();
    let oracle = explicit_oracle(&u0, t_end, 1e-8);
    let diff = tr.last().sub(&oracle).unwrap().l2_norm();
    assert!(diff <= 1e-4, "L2 difference {diff:.3e}");
}

#[test]
fn cahn_hilliard_approaches_the_relaxed_flow_on_convex_data() {
    let p = PotentialModel::double_well();
    let u0 = PeriodicField::from_fn(256, |x| 1.6 + 0.3 * (2.0 * PI * x).sin()).unwrap();
    let t_end = 2e-3;
    let st = run_stefan(&p, &u0, &SolverConfig::stefan(t_end).with_tau(1e-6)).unwrap();
    let mut diffs = Vec::new();
    for eps in [0.1, 0.05, 0.025] {
        let ch = run_cahn_hilliard(&p, &u0, eps, &SolverConfig::cahn_hilliard(eps, t_end).with_tau(1e-6)).unwrap();
        diffs.push(ch.last().sub(st.last()).unwrap().l2_norm());
    }
    // the ε²k⁴ term dominates: each halving of ε cuts the gap by about four
    for w in diffs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.0..5.0).contains(&r), "{diffs:?}");
    }
}

#[test]
fn too_small_stabilization_is_rejected() {
    let p = PotentialModel::double_well();
    let u0 = PeriodicField::from_fn(64, |x| 1.5 + 0.2 * (2.0 * PI * x).sin()).unwrap();
    let cfg = SolverConfig {
        stabilization: Some(0.0),
        ..SolverConfig::cahn_hilliard(0.1, 1e-3)
    };
    match run_cahn_hilliard(&p, &u0, 0.1, &cfg) {
        Err(chlab::Error::InvalidArgument(msg)) => assert!(msg.contains("stabilization"), "{msg}"),
        other => panic!("expected rejection of a too small stabilization, got {other:?}"),
    }
}
