//! Closed-loop engine: task and barrier states on both the measured and
//! desired sides, QP, double integrator, servo plant, log.

mod log;
mod metrics;
mod scenario;

pub use log::{format_float, EpisodeSpan, Event, EventKind, SimLog};
pub use metrics::{compute_metrics, oscillation_index, settling_time, BarrierMetrics, EpisodeMetrics, Metrics, SUSTAINED};
pub use scenario::{
    Activation, BarrierConfig, BarrierMode, Disturbance, GainRamp, MetricsConfig, PostureConfig, RobotConfig, Scenario, SetPoint,
    TaskConfig, TaskMapConfig, SCHEMA_VERSION,
};

use nalgebra::{DMatrix, DVector};

use crate::control::{
    ecbf_row_feedback, ecbf_row_feedforward, first_order_row, mu_heterogeneous, mu_output_feedback, posture_feedback, recbf_row,
    BarrierPsi, ConstraintRow, TaskLaw, TaskPsi,
};
use crate::error::{Error, Result};
use crate::kinematics::{barrier_state, condition_number, BarrierState, TaskMap};
use crate::model::{integrate_desired, DesiredState, RobotState};
use crate::plant::step_plant;
use crate::qp::{assemble, task_slack, ActiveSetSolver, PostureTerm, TaskTerm};

/// Jacobians worse conditioned than this are counted in the log.
pub const CONDITION_WARNING: f64 = 1e8;

const MAX_STORED_EVENTS: usize = 100;

struct Columns {
    names: Vec<String>,
    error: Vec<usize>,
    barrier: Vec<(String, usize, usize)>,
}

fn columns(s: &Scenario, maps: &[TaskMap]) -> Columns {
    let mut names = vec!["t".to_string()];
    for prefix in ["q_hat", "qd_hat", "q_d", "qd_d", "u", "tau"] {
        for j in 0..s.dof() {
            names.push(format!("{prefix}_{j}"));
        }
    }
    let mut error = Vec::new();
    for (t, map) in s.tasks.iter().zip(maps) {
        for field in ["e", "e_dot", "e_d", "e_dot_d", "mu", "slack"] {
            for c in 0..map.dim() {
                if field == "e" {
                    error.push(names.len());
                }
                names.push(format!("{}.{field}_{c}", t.name));
            }
        }
    }
    let mut barrier = Vec::new();
    for b in &s.barriers {
        let h = names.len();
        for field in ["h", "h_dot", "h_d", "h_dot_d", "active"] {
            names.push(format!("{}.{field}", b.name));
        }
        barrier.push((b.name.clone(), h, h + 2));
    }
    names.push("kkt_residual".into());
    names.push("qp_status".into());
    Columns { names, error, barrier }
}

/// Runs one scenario to `t_end` or to a plant blow-up. Errors only for
/// invalid scenarios; blow-ups and QP failures are recorded in the log.
pub fn run_scenario(s: &Scenario) -> Result<SimLog> {
    s.validate()?;
    let n = s.dof();
    let dt = s.dt_control;
    let chain = s.chain()?;
    let maps: Vec<TaskMap> = s.tasks.iter().map(|t| t.task_map(chain.as_ref())).collect::<Result<_>>()?;

    let fixed_gains: Vec<_> = s.tasks.iter().zip(&maps).map(|(t, m)| t.gains(m.dim())).collect::<Result<_>>()?;
    let ramped = |i: usize| s.gain_ramp.as_ref().filter(|r| r.task == i);

    let cols = columns(s, &maps);
    let mut log = SimLog::new(&s.name, dt * s.log_every as f64, cols.names, s.t_end);
    log.error_columns = cols.error;
    log.barrier_columns = cols.barrier;

    let q0 = DVector::from_column_slice(&s.robot.q0);
    let qd0 = s.robot.qd0.as_ref().map_or_else(|| DVector::zeros(n), |v| DVector::from_column_slice(v));
    let mut x = RobotState::new(q0.clone(), qd0)?;
    let mut xd = DesiredState::from(&x);
    let q_post = s.posture.q_ref.as_ref().map_or(q0, |v| DVector::from_column_slice(v));
    let mut u_prev = DVector::zeros(n);
    let mut solver = ActiveSetSolver::new();
    let steps = s.steps();
    let mut row = Vec::with_capacity(log.columns.len());

    for k in 0..steps {
        let t = k as f64 * dt;
        let tau = s.disturbance(t);
        let record = k % s.log_every == 0;
        if record {
            if let Some(r) = &s.gain_ramp {
                let ep = r.episode_at(t);
                if log.episodes.last().map_or(true, |e| e.index != ep) {
                    let rows = log.len();
                    if let Some(last) = log.episodes.last_mut() {
                        last.end_row = rows;
                    }
                    log.episodes.push(EpisodeSpan { index: ep, ks: r.ks(ep), first_row: log.len(), end_row: usize::MAX });
                }
            }
        }

        // tasks
        let mut terms = Vec::with_capacity(s.tasks.len());
        let mut task_cols: Vec<[DVector<f64>; 5]> = Vec::with_capacity(s.tasks.len());
        for (i, (tc, map)) in s.tasks.iter().zip(&maps).enumerate() {
            let m = map.dim();
            let refs = tc.reference(t);
            let meas = crate::kinematics::task_state(map, &refs, &x.q_hat, &x.qd_hat)?;
            let des = crate::kinematics::task_state(map, &refs, &xd.q_d, &xd.qd_d)?;
            let g = match ramped(i) {
                Some(r) => r.gains(r.episode_at(t), m),
                None => fixed_gains[i].clone(),
            };
            let mu = match tc.law {
                TaskLaw::OutputFeedback => mu_output_feedback(&g.ks, &g.kd, &meas),
                TaskLaw::Feedforward => mu_output_feedback(&g.ks, &g.kd, &des),
                TaskLaw::Heterogeneous | TaskLaw::NegativeDamping => mu_heterogeneous(&g, &TaskPsi::new(&meas, &des)),
            };
            let j = map.jacobian(&xd.q_d);
            if matches!(map, TaskMap::EndEffector(_)) && condition_number(&j) > CONDITION_WARNING {
                log.ill_conditioned_steps += 1;
            }
            let jdot_alpha = map.jacobian_dot(&xd.q_d, &xd.qd_d) * &xd.qd_d;
            let r = jdot_alpha - &refs.s_ddot - &mu;
            let phi = (&meas.e - &des.e).amax().max((&meas.e_dot - &des.e_dot).amax());
            log.eta_phi_max = log.eta_phi_max.max(phi);
            terms.push(TaskTerm { j, r, weight: tc.weight });
            task_cols.push([meas.e, meas.e_dot, des.e, des.e_dot, mu]);
        }

        // barriers
        let mut rows: Vec<ConstraintRow> = Vec::new();
        let mut barrier_cols = Vec::with_capacity(s.barriers.len());
        for b in &s.barriers {
            let c = chain.as_ref();
            let (meas, des) = if b.form.relative_degree() == 2 {
                (barrier_state(&b.form, c, &x.q_hat, &x.qd_hat)?, barrier_state(&b.form, c, &xd.q_d, &xd.qd_d)?)
            } else {
                (
                    BarrierState { h: b.form.value(c, &x.q_hat, &x.qd_hat)?, h_dot: f64::NAN },
                    BarrierState { h: b.form.value(c, &xd.q_d, &xd.qd_d)?, h_dot: f64::NAN },
                )
            };
            let fed_back = match b.mode {
                BarrierMode::FeedforwardEcbf => des.h,
                BarrierMode::FeedbackEcbf | BarrierMode::Recbf => meas.h,
            };
            let active = match b.activation {
                Activation::Always => true,
                Activation::Below(x) => fed_back <= x,
            };
            if active {
                let jh = b.form.jacobian(c, &xd.q_d)?;
                let row = if b.form.relative_degree() == 1 {
                    first_order_row(b.gains.ks, fed_back, &jh)
                } else {
                    let jhd = b.form.jacobian_dot(c, &xd.q_d, &xd.qd_d)?;
                    match b.mode {
                        BarrierMode::FeedforwardEcbf => ecbf_row_feedforward(&b.gains, &des, &jh, &jhd, &xd.qd_d),
                        BarrierMode::FeedbackEcbf => ecbf_row_feedback(&b.gains, &meas, &jh, &jhd, &xd.qd_d),
                        BarrierMode::Recbf => {
                            let psi = BarrierPsi { h: meas.h, h_dot: meas.h_dot, h_dot_d: des.h_dot };
                            recbf_row(&b.gains, &psi, &jh, &jhd, &xd.qd_d)?
                        }
                    }
                };
                rows.push(row);
            }
            barrier_cols.push([meas.h, meas.h_dot, des.h, des.h_dot, if active { 1.0 } else { 0.0 }]);
        }
        if let Some(lim) = s.robot.accel_limit {
            for j in 0..n {
                let mut a = DVector::zeros(n);
                a[j] = 1.0;
                rows.push(ConstraintRow { a: a.clone(), b: lim });
                rows.push(ConstraintRow { a: -a, b: lim });
            }
        }

        let posture = PostureTerm {
            s: DMatrix::identity(n, n),
            kappa: posture_feedback(s.posture.kp, s.posture.kv, &x, &q_post)?,
            weight: s.posture.weight,
        };
        let problem = assemble(&terms, Some(&posture), &rows)?;
        let (u, active_set, kkt, status) = match solver.solve(&problem) {
            Ok(sol) => (sol.u, sol.active_set, sol.kkt_residual, 0.0),
            Err(e @ (Error::Infeasible { .. } | Error::NotConverged(_))) => {
                log.qp_failures += 1;
                if log.events.len() < MAX_STORED_EVENTS {
                    let kind = match e {
                        Error::Infeasible { rows } => EventKind::QpInfeasible { rows },
                        _ => EventKind::QpNotConverged,
                    };
                    log.events.push(Event { step: k, t, kind });
                }
                (u_prev.clone(), Vec::new(), f64::NAN, 1.0)
            }
            Err(e) => return Err(e),
        };
        if kkt.is_finite() {
            log.max_kkt_residual = log.max_kkt_residual.max(kkt);
        }
        let slack = task_slack(&terms, &u);
        for d in &slack {
            log.max_slack = log.max_slack.max(d.amax());
        }

        if record {
            row.clear();
            row.push(t);
            for v in [&x.q_hat, &x.qd_hat, &xd.q_d, &xd.qd_d, &u, &tau] {
                row.extend(v.iter());
            }
            for (tc, d) in task_cols.iter().zip(&slack) {
                for v in tc {
                    row.extend(v.iter());
                }
                row.extend(d.iter());
            }
            for bc in &barrier_cols {
                row.extend(bc);
            }
            row.push(kkt);
            row.push(status);
            log.push(&row, active_set);
        }

        xd = integrate_desired(&xd, &u, dt)?;
        u_prev = u;
        if s.robot.perfect_tracking {
            x = RobotState::from(&xd);
            continue;
        }
        match step_plant(&s.robot.joints, &x, &xd, &tau, dt, s.plant_substeps, s.blowup_cap) {
            Ok(next) => x = next,
            Err(Error::BlowUp(norm)) => {
                log.events.push(Event { step: k, t: t + dt, kind: EventKind::BlowUp { norm } });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let rows = log.len();
    if let Some(last) = log.episodes.last_mut() {
        last.end_row = rows;
    }
    Ok(log)
}

/// Runs a scenario and summarizes it with its own metrics settings.
pub fn run_with_metrics(s: &Scenario) -> Result<(SimLog, Metrics)> {
    let log = run_scenario(s)?;
    let m = compute_metrics(&log, &s.metrics)?;
    Ok((log, m))
}

/// Runs scenarios on worker threads; results keep the input order and a
/// failing scenario does not affect the others.
pub fn batch_run(scenarios: &[Scenario]) -> Vec<(String, Result<Metrics>)> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|s| scope.spawn(move || run_with_metrics(s).map(|(_, m)| m)))
            .collect();
        scenarios
            .iter()
            .zip(handles)
            .map(|(s, h)| {
                let r = h.join().unwrap_or_else(|_| Err(Error::Config(format!("scenario {} panicked", s.name))));
                (s.name.clone(), r)
            })
            .collect()
    })
}
