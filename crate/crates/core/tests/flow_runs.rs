use krflow_core::estimates::{MonitorConfig, MonitorSuite};
use krflow_core::oracles::solve_homogeneous;
use krflow_core::*;

fn homogeneous_error(dt: f64, t_end: f64) -> f64 {
    let bg = Background::new(Scenario::homogeneous(1, 2.0, 1.0), 8).unwrap();
    let cfg = IntegratorConfig {
        fixed_dt: Some(dt),
        ..Default::default()
    };
    let it = Integrator::new(&bg, cfg).unwrap();
    let s = it.advance_to(it.initial_state().unwrap(), t_end).unwrap();
    let exact = solve_homogeneous(2.0, 1.0, 0.0, 1, &[t_end]).unwrap().u[0];
    s.u.values().iter().map(|u| (u - exact).abs()).fold(0.0, f64::max)
}

#[test]
fn homogeneous_matches_oracle() {
    let bg = Background::new(Scenario::homogeneous(1, 2.0, 1.0), 8).unwrap();
    let it = Integrator::new(&bg, IntegratorConfig::default()).unwrap();
    let schedule = [0.0, 0.5, 1.0, 2.0, 5.0];
    let oracle = solve_homogeneous(2.0, 1.0, 0.0, 1, &schedule).unwrap();
    let mut k = 0;
    it.run(&schedule, |snap| {
        let err = snap.state.u.map(|u| u - oracle.u[k]).sup_norm();
        assert!(err < 1e-6, "t = {}: {err}", snap.state.t);
        let derr = snap.state.udot.map(|u| u - oracle.udot[k]).sup_norm();
        assert!(derr < 1e-6, "t = {}: {derr}", snap.state.t);
        k += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(k, schedule.len());
}

#[test]
fn rk4_is_fourth_order() {
    let (e1, e2) = (homogeneous_error(0.1, 1.0), homogeneous_error(0.05, 1.0));
    let ratio = e1 / e2;
    assert!((14.0..=18.0).contains(&ratio), "ratio {ratio} ({e1:e} / {e2:e})");
}

#[test]
fn runs_are_bit_identical() {
    let go = || {
        let bg = Background::new(Scenario::generic_ample(1, 11), 16).unwrap();
        let it = Integrator::new(&bg, IntegratorConfig::default()).unwrap();
        let mut suite = MonitorSuite::new(&bg, MonitorConfig::default()).unwrap();
        let out = it.run(&[0.0, 0.5, 1.0], |s| suite.observe(s)).unwrap();
        (out.final_state, serde_json::to_string(&suite.finish()).unwrap())
    };
    let (a, ra) = go();
    let (b, rb) = go();
    assert_eq!(a.step_count, b.step_count);
    for (x, y) in a.u.values().iter().zip(b.u.values()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert_eq!(ra, rb);
}

#[test]
fn checkpoint_resume_continues_the_run() {
    let bg = Background::new(Scenario::generic_ample(1, 2), 16).unwrap();
    let cfg = IntegratorConfig {
        fixed_dt: Some(0.01),
        ..Default::default()
    };
    let it = Integrator::new(&bg, cfg).unwrap();
    let mid = it.advance_to(it.initial_state().unwrap(), 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.krfl");
    Checkpoint { t: mid.t, u: mid.u.clone() }.write(&path).unwrap();
    let back = Checkpoint::read(&path).unwrap();
    let resumed = FlowState::from_potential(&bg, back.t, back.u).unwrap();
    let a = it.advance_to(mid, 1.0).unwrap();
    let b = it.advance_to(resumed, 1.0).unwrap();
    assert_eq!(a.u, b.u);
}

#[test]
fn catalog_runs_pass_max_principle_certificates() {
    for s in background::builtin_scenarios(1, 3).unwrap() {
        let name = s.name.clone();
        let bg = Background::new(s, 16).unwrap();
        let it = Integrator::new(&bg, IntegratorConfig::default()).unwrap();
        let mut suite = MonitorSuite::new(&bg, MonitorConfig::default()).unwrap();
        let stop = it.stop_time().min(2.0);
        let schedule: Vec<f64> = (0..=8).map(|k| stop * k as f64 / 8.0).collect();
        it.run(&schedule, |snap| suite.observe(snap)).unwrap();
        let report = suite.finish();
        for c in ["u_upper", "udot_decay", "volume_decay"] {
            let cert = report.certificate(c).unwrap();
            assert!(cert.passed, "{name}: {cert:?}");
        }
    }
}
