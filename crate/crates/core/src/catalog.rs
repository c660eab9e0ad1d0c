//! Built-in scenarios: the 1-DoF benchmark runs, the planar gain ramp and
//! half-plane runs, and the nominal comparison run.

use crate::control::{BarrierGains, TaskLaw};
use crate::error::{Error, Result};
use crate::kinematics::BarrierForm;
use crate::plant::{ServoParams, DEFAULT_BLOWUP_CAP};
use crate::sim::{
    Activation, BarrierConfig, BarrierMode, Disturbance, GainRamp, MetricsConfig, PostureConfig, RobotConfig, Scenario,
    SetPoint, TaskConfig, TaskMapConfig, SCHEMA_VERSION,
};

/// Integral ratios of the System 1 sweep.
pub const FIG8_EPS: [f64; 4] = [0.01, 0.1, 1.0, 2.0];
/// Integral ratios of the System 2 barrier sweep.
pub const FIG12_EPS: [f64; 4] = [0.02, 0.2, 2.0, 5.0];
/// Barrier pole used on System 2.
pub const BARRIER_POLE: f64 = -40.0;
/// Joint limit of the System 2 runs, rad.
pub const Q_MAX: f64 = 3.0;

fn base(name: &str, description: &str, joints: Vec<ServoParams>, q0: Vec<f64>, t_end: f64) -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        description: description.to_string(),
        dt_control: 1e-3,
        t_end,
        plant_substeps: 10,
        blowup_cap: DEFAULT_BLOWUP_CAP,
        log_every: 1,
        metrics: MetricsConfig::default(),
        robot: RobotConfig {
            joints,
            link_lengths: None,
            q0,
            qd0: None,
            perfect_tracking: false,
            accel_limit: None,
        },
        posture: PostureConfig::default(),
        tasks: Vec::new(),
        barriers: Vec::new(),
        disturbances: Vec::new(),
        gain_ramp: None,
    }
}

fn joint_task(law: TaskLaw, ks: f64, kd: f64, ki: f64, q_ref: f64) -> TaskConfig {
    TaskConfig {
        name: "joint".into(),
        map: TaskMapConfig::Joint { joint: 0 },
        law,
        ks: vec![ks],
        kd: vec![kd],
        ki: if ki == 0.0 { Vec::new() } else { vec![ki] },
        weight: 1.0,
        setpoints: vec![SetPoint { t: 0.0, value: vec![q_ref] }],
    }
}

fn torque(joint: usize, start: f64, duration: Option<f64>, torque: f64) -> Disturbance {
    Disturbance { joint, start, duration, torque }
}

/// Output feedback on System 1 toward 1 rad, no disturbance.
pub fn fig4(ks: f64) -> Scenario {
    let name = if ks <= 10.0 { "fig4-left" } else { "fig4-right" };
    let mut s = base(
        name,
        "System 1, output feedback, Kd = 2√Ks, set-point 1 rad",
        vec![ServoParams::SYSTEM_1],
        vec![0.0],
        10.0,
    );
    s.tasks.push(joint_task(TaskLaw::OutputFeedback, ks, 2.0 * ks.sqrt(), 0.0, 1.0));
    s
}

/// Heterogeneous feedback on System 1 under a constant 5 N·m load.
pub fn fig8(eps: f64) -> Scenario {
    let kd = 2.0 * 30f64.sqrt();
    let mut s = base(
        &format!("fig8-eps-{eps}"),
        "System 1, heterogeneous feedback Ks = 30, Kd = 2√30, Ki = ε·Kd, τ_l = 5 N·m",
        vec![ServoParams::SYSTEM_1],
        vec![0.0],
        10.0,
    );
    s.tasks.push(joint_task(TaskLaw::Heterogeneous, 30.0, kd, eps * kd, 1.0));
    s.disturbances.push(torque(0, 0.0, None, 5.0));
    s
}

/// Load step at t = 10 s with the stiff (a) or compliant (b) gain split.
pub fn fig10(compliant: bool) -> Scenario {
    let r = 30f64.sqrt();
    let (name, law, kd, ki) = if compliant {
        ("fig10-b", TaskLaw::NegativeDamping, -1.8 * r, 3.2 * r)
    } else {
        ("fig10-a", TaskLaw::Heterogeneous, 2.0 * r, 2.0 * r)
    };
    let mut s = base(
        name,
        "System 1, set-point 1 rad, 5 N·m load step at t = 10 s",
        vec![ServoParams::SYSTEM_1],
        vec![0.0],
        15.0,
    );
    s.tasks.push(joint_task(law, 30.0, kd, ki, 1.0));
    s.disturbances.push(torque(0, 10.0, None, 5.0));
    s
}

fn system2_barrier(name: &str, description: &str, mode: BarrierMode, ki: f64) -> Scenario {
    let r = 10f64.sqrt();
    let mut s = base(name, description, vec![ServoParams::SYSTEM_2], vec![0.0], 15.0);
    s.tasks.push(joint_task(TaskLaw::OutputFeedback, 10.0, 2.0 * r, 0.0, 5.0));
    let gains = BarrierGains::repeated_pole(BARRIER_POLE, ki).expect("negative pole");
    s.barriers.push(BarrierConfig {
        name: "limit".into(),
        form: BarrierForm::JointUpper { joint: 0, max: Q_MAX },
        mode,
        gains,
        activation: Activation::Below(4.0),
    });
    s.disturbances.push(torque(0, 0.0, None, 5.0));
    s
}

/// Joint limit 3 rad on System 2 with the set-point beyond it.
pub fn fig7(feedback: bool) -> Scenario {
    if feedback {
        system2_barrier(
            "fig7-fb",
            "System 2, ECBF on measured state, q ≤ 3 rad, set-point 5 rad, τ_l = 5 N·m",
            BarrierMode::FeedbackEcbf,
            0.0,
        )
    } else {
        system2_barrier(
            "fig7-ffwd",
            "System 2, ECBF on desired state, q ≤ 3 rad, set-point 5 rad, τ_l = 5 N·m",
            BarrierMode::FeedforwardEcbf,
            0.0,
        )
    }
}

/// Robust barrier on System 2 with Ki_h = ε·Kd_h.
pub fn fig12(eps: f64) -> Scenario {
    system2_barrier(
        &format!("fig12-eps-{eps}"),
        "System 2, robust ECBF Ki_h = ε·Kd_h, q ≤ 3 rad, set-point 5 rad, τ_l = 5 N·m",
        BarrierMode::Recbf,
        eps * -2.0 * BARRIER_POLE,
    )
}

/// Two-link chain on lightly damped servos; the end effector alternates
/// between two set-points while Ks grows by 50 per episode.
pub fn planar_gain_ramp(heterogeneous: bool) -> Scenario {
    let (name, law, ki_per_kd) = if heterogeneous {
        ("planar-gain-ramp-hetero", TaskLaw::Heterogeneous, 1.0)
    } else {
        ("planar-gain-ramp-output", TaskLaw::OutputFeedback, 0.0)
    };
    let episodes = 15;
    let episode_length = 5.0;
    let q0 = vec![0.3, 1.2];
    let mut s = base(
        name,
        "Two-link chain, underdamped servos, Cartesian set-point, Ks ramped by 50 per episode",
        vec![ServoParams::UNDERDAMPED; 2],
        q0,
        episodes as f64 * episode_length,
    );
    s.robot.link_lengths = Some(vec![0.5, 0.4]);
    let home = crate::kinematics::PlanarChain::new(vec![0.5, 0.4])
        .expect("valid chain")
        .fk(&nalgebra::DVector::from_column_slice(&s.robot.q0));
    let setpoints = (0..episodes)
        .map(|k| SetPoint {
            t: k as f64 * episode_length,
            value: vec![home.x, home.y + if k % 2 == 0 { 0.1 } else { -0.1 }],
        })
        .collect();
    s.tasks.push(TaskConfig {
        name: "ee".into(),
        map: TaskMapConfig::EndEffector,
        law,
        ks: vec![100.0],
        kd: vec![20.0],
        ki: if heterogeneous { vec![20.0] } else { Vec::new() },
        weight: 1.0,
        setpoints,
    });
    s.posture = PostureConfig { weight: 1e-4, kp: 0.0, kv: 1.0, q_ref: None };
    s.gain_ramp = Some(GainRamp {
        task: 0,
        ks_start: 100.0,
        ks_step: 50.0,
        episode_length,
        episodes,
        kd_per_sqrt_ks: 2.0,
        ki_per_kd,
    });
    s
}

/// End effector kept inside a 7 cm × 10 cm rectangle by four robust
/// half-plane barriers while joint torques push it around.
pub fn planar_halfplane_recbf() -> Scenario {
    let q0 = vec![0.3, 1.2];
    let lengths = vec![0.5, 0.4];
    let home = crate::kinematics::PlanarChain::new(lengths.clone())
        .expect("valid chain")
        .fk(&nalgebra::DVector::from_column_slice(&q0));
    let mut s = base(
        "planar-halfplane-recbf",
        "Two-link chain, end effector confined to x ∈ [−2, 5] cm, y ∈ [−5, 5] cm around home by robust barriers",
        vec![ServoParams::UNDERDAMPED; 2],
        q0,
        12.0,
    );
    s.robot.link_lengths = Some(lengths);
    let ks: f64 = 400.0;
    let gains = BarrierGains { ks, kd: -1.2 * ks.sqrt(), ki: 8.4 * ks.sqrt() };
    let sides = [
        ("x-max", [-1.0, 0.0], home.x + 0.05),
        ("x-min", [1.0, 0.0], -(home.x - 0.02)),
        ("y-max", [0.0, -1.0], home.y + 0.05),
        ("y-min", [0.0, 1.0], -(home.y - 0.05)),
    ];
    for (name, normal, offset) in sides {
        s.barriers.push(BarrierConfig {
            name: name.into(),
            form: BarrierForm::HalfPlane { normal, offset },
            mode: BarrierMode::Recbf,
            gains,
            activation: Activation::Below(0.04),
        });
    }
    // a task pulling outside the box keeps the barriers engaged
    s.tasks.push(TaskConfig {
        name: "ee".into(),
        map: TaskMapConfig::EndEffector,
        law: TaskLaw::Heterogeneous,
        ks: vec![100.0],
        kd: vec![20.0],
        ki: vec![20.0],
        weight: 1.0,
        setpoints: vec![
            SetPoint { t: 0.0, value: vec![home.x + 0.1, home.y] },
            SetPoint { t: 6.0, value: vec![home.x, home.y - 0.1] },
        ],
    });
    s.posture = PostureConfig { weight: 1e-4, kp: 0.0, kv: 1.0, q_ref: None };
    s.disturbances = vec![
        torque(0, 2.0, None, 3.0),
        torque(1, 3.0, Some(0.1), -20.0),
        torque(0, 8.0, Some(0.1), 20.0),
        torque(1, 9.0, None, 2.0),
    ];
    s
}

/// Nominal 1-DoF run (perfect tracking) with the desired-side barrier held
/// at equality from the given barrier state.
pub fn comparison_lemma(h0: f64, h_dot0: f64) -> Scenario {
    let mut s = base(
        "comparison-lemma",
        "Exact tracking, desired-side ECBF with poles at −4 held active, set-point beyond the limit",
        vec![ServoParams::SYSTEM_1],
        vec![Q_MAX - h0],
        1.0,
    );
    s.dt_control = 1e-6;
    s.log_every = 1000;
    s.metrics = MetricsConfig { window: 0.25, ..MetricsConfig::default() };
    s.robot.perfect_tracking = true;
    s.robot.qd0 = Some(vec![-h_dot0]);
    let r = 10f64.sqrt();
    s.tasks.push(joint_task(TaskLaw::OutputFeedback, 10.0, 2.0 * r, 0.0, 5.0));
    s.barriers.push(BarrierConfig {
        name: "limit".into(),
        form: BarrierForm::JointUpper { joint: 0, max: Q_MAX },
        mode: BarrierMode::FeedforwardEcbf,
        gains: BarrierGains::repeated_pole(-4.0, 0.0).expect("negative pole"),
        activation: Activation::Always,
    });
    s
}

/// Every built-in, in catalog order.
pub fn all() -> Vec<Scenario> {
    let mut v = vec![fig4(10.0), fig4(30.0), fig7(false), fig7(true)];
    v.extend(FIG8_EPS.iter().map(|&e| fig8(e)));
    v.push(fig10(false));
    v.push(fig10(true));
    v.extend(FIG12_EPS.iter().map(|&e| fig12(e)));
    v.push(planar_gain_ramp(false));
    v.push(planar_gain_ramp(true));
    v.push(planar_halfplane_recbf());
    v.push(comparison_lemma(0.5, 0.0));
    v
}

pub fn names() -> Vec<String> {
    all().into_iter().map(|s| s.name).collect()
}

pub fn get(name: &str) -> Result<Scenario> {
    all()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("no built-in scenario named {name:?}")))
}
