use taskqp::catalog;
use taskqp::plant::{steady_state, ServoParams};
use taskqp::sim::{batch_run, run_scenario, run_with_metrics, Scenario};
use taskqp::Error;

fn csv_bytes(s: &Scenario) -> Vec<u8> {
    let log = run_scenario(s).unwrap();
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    out
}

#[test]
fn runs_are_byte_identical() {
    let s = catalog::get("fig7-fb").unwrap();
    assert_eq!(csv_bytes(&s), csv_bytes(&s));
}

#[test]
fn batch_keeps_order_and_matches_single_runs() {
    assert!(batch_run(&[]).is_empty());
    let list = vec![catalog::fig4(10.0), catalog::fig8(1.0), catalog::fig10(true)];
    let out = batch_run(&list);
    assert_eq!(out.len(), list.len());
    for ((name, m), s) in out.iter().zip(&list) {
        assert_eq!(name, &s.name);
        let (_, single) = run_with_metrics(s).unwrap();
        assert_eq!(m.as_ref().unwrap(), &single);
    }
}

#[test]
fn integral_feedback_beats_open_loop_offset() {
    let s = catalog::fig8(1.0);
    let (log, m) = run_with_metrics(&s).unwrap();
    assert!(!m.instability_flag);
    let (q_ss, _) = steady_state(&ServoParams::SYSTEM_1, 1.0, 0.0, 5.0).unwrap();
    let offset = (q_ss - 1.0).abs();
    let e = log.column("joint.e_0").unwrap();
    let last = e[e.len() - 1].abs();
    assert!(last < 0.1 * offset, "terminal error {last} vs offset {offset}");
}

#[test]
fn feedforward_barrier_keeps_desired_state_inside() {
    let (_, m) = run_with_metrics(&catalog::get("fig7-ffwd").unwrap()).unwrap();
    let b = m.barrier("limit").unwrap();
    assert!(b.min_h_d >= -1e-6, "min h_d {}", b.min_h_d);
    assert_eq!(m.qp_failures, 0);
}

#[test]
fn recbf_overshoot_shrinks_with_integral_ratio() {
    let (_, ffwd) = run_with_metrics(&catalog::get("fig7-ffwd").unwrap()).unwrap();
    let ffwd = ffwd.barrier("limit").unwrap().overshoot;
    let overshoot = |eps: f64| {
        let (_, m) = run_with_metrics(&catalog::fig12(eps)).unwrap();
        assert!(!m.instability_flag, "eps {eps}");
        m.barrier("limit").unwrap().overshoot
    };
    let (o2, o5) = (overshoot(2.0), overshoot(5.0));
    assert!(o2 < ffwd, "eps 2: {o2} vs feedforward {ffwd}");
    assert!(o5 <= o2);
    assert!(o5 < 1e-9, "eps 5: {o5}");
}

#[test]
fn halfplane_recbf_scenario_stays_stable() {
    let s = catalog::get("planar-halfplane-recbf").unwrap();
    let (_, m) = run_with_metrics(&s).unwrap();
    assert!(!m.instability_flag);
    assert_eq!(m.qp_failures, 0);
    // Torque pushes drive the end effector past the planes; the violation
    // must stay bounded well inside the activation distance.
    for b in &m.barriers {
        assert!(b.overshoot < 0.02, "{} overshoot {}", b.name, b.overshoot);
    }
}

#[test]
fn unknown_key_is_a_parse_error() {
    let mut text = catalog::fig4(10.0).to_toml().unwrap();
    text.push_str("\nbogus = 1\n");
    assert!(matches!(Scenario::from_toml(&text), Err(Error::Parse(_))));
}

#[test]
fn wrong_schema_version_is_rejected() {
    let text = catalog::fig4(10.0)
        .to_toml()
        .unwrap()
        .replace("schema_version = 1", "schema_version = 99");
    assert!(Scenario::from_toml(&text).is_err());
}

#[test]
fn non_hurwitz_task_gains_are_rejected() {
    let mut s = catalog::fig4(10.0);
    s.tasks[0].kd = vec![-1.0];
    assert!(s.validate().is_err());
    assert!(run_scenario(&s).is_err());
}

#[test]
fn catalog_round_trips_through_toml() {
    for s in catalog::all() {
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
