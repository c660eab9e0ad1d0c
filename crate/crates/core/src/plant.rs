//! Per-joint servo plant: the robot's low-level position/velocity controller
//! driving a DC motor, seen from above as a second-order linear system
//!
//! ```text
//! q̈ = a1 q + a2 q̇ + a3 q_d + a4 q̇_d + a5 τ_l
//! ```
//!
//! The controller never sees these parameters.

use nalgebra::{Complex, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::model::{DesiredState, RobotState};

pub type PlantState = RobotState;

pub const DEFAULT_BLOWUP_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
}

/// PD servo gains (b1, b2) and motor constants (b3, b4, b5).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
}

impl ServoParams {
    /// The stiffer-looking but slower benchmark joint.
    pub const SYSTEM_1: ServoParams = ServoParams {
        a1: -376.5977,
        a2: -158.5073,
        a3: 376.5977,
        a4: 2.8245,
        a5: 4.7034,
    };

    pub const SYSTEM_2: ServoParams = ServoParams {
        a1: -2380.6356,
        a2: -173.5712,
        a3: 2380.6356,
        a4: 17.8884,
        a5: 4.7034,
    };

    /// Lightly damped joint standing in for structural flexibility:
    /// natural frequency 60 rad/s, damping ratio 0.3, half of the damping
    /// fed forward from the commanded velocity.
    pub const UNDERDAMPED: ServoParams = ServoParams {
        a1: -3600.0,
        a2: -36.0,
        a3: 3600.0,
        a4: 18.0,
        a5: 4.7034,
    };

    pub fn homogeneous(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, self.a1, self.a2)
    }

    pub fn eigenvalues(&self) -> [Complex<f64>; 2] {
        let tr = self.a2;
        let det = -self.a1;
        let disc = Complex::new(tr * tr / 4.0 - det, 0.0).sqrt();
        [tr / 2.0 + disc, tr / 2.0 - disc]
    }

    /// Decay rate of the slowest homogeneous mode, 1/s.
    pub fn slowest_rate(&self) -> f64 {
        let [l1, l2] = self.eigenvalues();
        (-l1.re).min(-l2.re)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("servo parameters", [self.a1, self.a2, self.a3, self.a4, self.a5])?;
        if (self.a3 + self.a1).abs() > 1e-9 * self.a1.abs().max(1.0) {
            return Err(Error::InvalidParam(format!(
                "servo requires a3 = -a1, got a1 = {}, a3 = {}",
                self.a1, self.a3
            )));
        }
        if !(self.a1 < 0.0 && self.a2 < 0.0) {
            return Err(Error::NotHurwitz(format!(
                "servo matrix [[0,1],[{}, {}]] (need a1 < 0 and a2 < 0)",
                self.a1, self.a2
            )));
        }
        Ok(())
    }

    fn accel(&self, q: f64, v: f64, q_d: f64, v_d: f64, tau: f64) -> f64 {
        self.a1 * q + self.a2 * v + self.a3 * q_d + self.a4 * v_d + self.a5 * tau
    }
}

impl MotorParams {
    /// b3 is not identifiable from the five plant coefficients; both
    /// benchmark joints use b3 = 1, which makes b4 = 155.6828 for both.
    pub const SYSTEM_1: MotorParams = MotorParams {
        b1: 376.5977,
        b2: 2.8245,
        b3: 1.0,
        b4: 155.6828,
        b5: 4.7034,
    };

    pub const SYSTEM_2: MotorParams = MotorParams {
        b1: 2380.6356,
        b2: 17.8884,
        b3: 1.0,
        b4: 155.6828,
        b5: 4.7034,
    };
}

pub fn servo_from_motor(m: &MotorParams) -> Result<ServoParams> {
    ensure_finite("motor parameters", [m.b1, m.b2, m.b3, m.b4, m.b5])?;
    if m.b3 <= 0.0 || m.b4 < 0.0 {
        return Err(Error::InvalidParam(format!(
            "motor requires b3 > 0 and b4 >= 0, got b3 = {}, b4 = {}",
            m.b3, m.b4
        )));
    }
    let a1 = -m.b1 * m.b3;
    let p = ServoParams {
        a1,
        a2: -m.b2 * m.b3 - m.b4,
        a3: -a1,
        a4: m.b2 * m.b3,
        a5: m.b3 * m.b5,
    };
    p.validate()?;
    Ok(p)
}

/// Fixed point of one joint for a held command: `q̂_ss` solves
/// `0 = a1 q̂ + a3 q_d + a4 q̇_d + a5 τ_l` with `q̇̂_ss = 0`.
pub fn steady_state(p: &ServoParams, q_d: f64, qd_d: f64, tau_l: f64) -> Result<(f64, f64)> {
    if p.a1 == 0.0 {
        return Err(Error::InvalidParam("steady state needs a1 != 0".into()));
    }
    Ok((-(p.a3 * q_d + p.a4 * qd_d + p.a5 * tau_l) / p.a1, 0.0))
}

/// Advance every joint by `dt` with classic RK4, `substeps` stages of
/// `dt / substeps`, holding `cmd` and `tau_l` constant.
pub fn step_plant(
    joints: &[ServoParams],
    s: &PlantState,
    cmd: &DesiredState,
    tau_l: &DVector<f64>,
    dt: f64,
    substeps: usize,
    blowup_cap: f64,
) -> Result<PlantState> {
    ensure_dim("plant joints", joints.len(), s.dof())?;
    ensure_dim("plant command", joints.len(), cmd.dof())?;
    ensure_dim("plant disturbance", joints.len(), tau_l.len())?;
    if !(dt > 0.0) || substeps == 0 {
        return Err(Error::InvalidParam(format!(
            "plant step needs dt > 0 and substeps >= 1, got dt = {dt}, substeps = {substeps}"
        )));
    }
    let h = dt / substeps as f64;
    let mut out = s.clone();
    let mut worst = 0.0f64;
    for (i, p) in joints.iter().enumerate() {
        let (qd, vd, tau) = (cmd.q_d[i], cmd.qd_d[i], tau_l[i]);
        let f = |q: f64, v: f64| (v, p.accel(q, v, qd, vd, tau));
        let (mut q, mut v) = (s.q_hat[i], s.qd_hat[i]);
        for _ in 0..substeps {
            let k1 = f(q, v);
            let k2 = f(q + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = f(q + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = f(q + h * k3.0, v + h * k3.1);
            q += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        out.q_hat[i] = q;
        out.qd_hat[i] = v;
        worst = worst.max(q.abs()).max(v.abs());
        if !q.is_finite() || !v.is_finite() {
            worst = f64::INFINITY;
        }
    }
    if worst > blowup_cap {
        return Err(Error::BlowUp(worst));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn one(q: f64, v: f64) -> RobotState {
        RobotState::new(dvector![q], dvector![v]).unwrap()
    }

    fn cmd(q: f64, v: f64) -> DesiredState {
        DesiredState::new(dvector![q], dvector![v]).unwrap()
    }

    fn run(p: ServoParams, x0: RobotState, c: &DesiredState, tau: f64, t: f64, dt: f64, sub: usize) -> RobotState {
        let mut x = x0;
        for _ in 0..(t / dt).round() as usize {
            x = step_plant(&[p], &x, c, &dvector![tau], dt, sub, DEFAULT_BLOWUP_CAP).unwrap();
        }
        x
    }

    #[test]
    fn unit_motor() {
        let m = MotorParams { b1: 1.0, b2: 1.0, b3: 1.0, b4: 1.0, b5: 1.0 };
        let p = servo_from_motor(&m).unwrap();
        assert_eq!((p.a1, p.a2, p.a3, p.a4, p.a5), (-1.0, -2.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn motor_presets_reproduce_table() {
        for (m, a) in [
            (MotorParams::SYSTEM_1, ServoParams::SYSTEM_1),
            (MotorParams::SYSTEM_2, ServoParams::SYSTEM_2),
        ] {
            let p = servo_from_motor(&m).unwrap();
            for (x, y) in [(p.a1, a.a1), (p.a2, a.a2), (p.a3, a.a3), (p.a4, a.a4), (p.a5, a.a5)] {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn motor_rejections() {
        let bad = MotorParams { b1: -1.0, b2: 1.0, b3: 1.0, b4: 1.0, b5: 1.0 };
        assert!(matches!(servo_from_motor(&bad), Err(Error::NotHurwitz(_))));
        let bad = MotorParams { b1: 1.0, b2: 1.0, b3: 0.0, b4: 1.0, b5: 1.0 };
        assert!(matches!(servo_from_motor(&bad), Err(Error::InvalidParam(_))));
        let mut p = ServoParams::SYSTEM_1;
        p.a3 = 1.0;
        assert!(p.validate().is_err());
        assert!(ServoParams::UNDERDAMPED.validate().is_ok());
    }

    #[test]
    fn steady_state_values() {
        let (q, v) = steady_state(&ServoParams::SYSTEM_1, 1.0, 0.0, 0.0).unwrap();
        assert!((q - 1.0).abs() < 1e-15 && v == 0.0);
        // the quoted values are rounded; the exact offsets are a5·τ/|a1|
        let (q, _) = steady_state(&ServoParams::SYSTEM_1, 1.0, 0.0, 5.0).unwrap();
        assert!((q - 1.062447).abs() < 2e-6, "{q}");
        assert!((q - (1.0 + 5.0 * 4.7034 / 376.5977)).abs() < 1e-15);
        let (q, _) = steady_state(&ServoParams::SYSTEM_2, 3.0, 0.0, 5.0).unwrap();
        assert!((q - 3.0098787).abs() < 5e-7, "{q}");
        assert!((q - (3.0 + 5.0 * 4.7034 / 2380.6356)).abs() < 1e-15);
        let mut p = ServoParams::SYSTEM_1;
        p.a1 = 0.0;
        assert!(steady_state(&p, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn equilibrium_is_preserved() {
        let p = ServoParams::SYSTEM_2;
        let x = one(0.7, 0.0);
        let y = run(p, x.clone(), &cmd(0.7, 0.0), 0.0, 0.5, 1e-3, 10);
        assert!((y.q_hat[0] - 0.7).abs() < 1e-10 && y.qd_hat[0].abs() < 1e-10);
    }

    #[test]
    fn converges_to_steady_state() {
        // ten slowest time constants shrink the initial offset by e⁻¹⁰
        for (p, qd) in [(ServoParams::SYSTEM_1, 1.0), (ServoParams::SYSTEM_2, 3.0), (ServoParams::UNDERDAMPED, -0.5)] {
            let horizon = 10.0 / p.slowest_rate();
            let (qs, _) = steady_state(&p, qd, 0.0, 5.0).unwrap();
            let y = run(p, one(qs - 0.01, 0.0), &cmd(qd, 0.0), 5.0, horizon, 1e-3, 10);
            assert!((y.q_hat[0] - qs).abs() < 1e-6, "{} vs {qs}", y.q_hat[0]);
            let y = run(p, one(0.0, 0.0), &cmd(qd, 0.0), 5.0, horizon, 1e-3, 10);
            assert!((y.q_hat[0] - qs).abs() < 2.0 * (-10f64).exp() * qs.abs(), "{} vs {qs}", y.q_hat[0]);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = ServoParams::SYSTEM_2;
        let c = cmd(1.0, 0.5);
        let reference = run(p, one(0.0, 0.0), &c, 2.0, 0.05, 0.05, 4000);
        let err = |sub| {
            let y = run(p, one(0.0, 0.0), &c, 2.0, 0.05, 0.05, sub);
            (y.q_hat[0] - reference.q_hat[0]).abs() + (y.qd_hat[0] - reference.qd_hat[0]).abs()
        };
        for sub in [8, 16, 32] {
            let ratio = err(sub) / err(2 * sub);
            assert!(ratio >= 8.0, "substeps {sub}: ratio {ratio}");
        }
    }

    #[test]
    fn blow_up_is_flagged() {
        let p = ServoParams::SYSTEM_1;
        let r = step_plant(&[p], &one(2e6, 0.0), &cmd(0.0, 0.0), &dvector![0.0], 1e-3, 1, DEFAULT_BLOWUP_CAP);
        assert!(matches!(r, Err(Error::BlowUp(_))));
    }

    proptest! {
        #[test]
        fn superposition(q1 in -2.0..2.0f64, v1 in -2.0..2.0f64, t1 in -5.0..5.0f64,
                         q2 in -2.0..2.0f64, v2 in -2.0..2.0f64, t2 in -5.0..5.0f64,
                         x0 in -1.0..1.0f64) {
            let p = ServoParams::SYSTEM_1;
            let go = |c: DesiredState, tau: f64| run(p, one(x0, 0.3), &c, tau, 0.05, 1e-3, 4);
            let a = go(cmd(q1, v1), t1);
            let b = go(cmd(q2, v2), t2);
            let ab = go(cmd(q1 + q2, v1 + v2), t1 + t2);
            let z = go(cmd(0.0, 0.0), 0.0);
            prop_assert!((ab.q_hat[0] - (a.q_hat[0] + b.q_hat[0] - z.q_hat[0])).abs() < 1e-10);
            prop_assert!((ab.qd_hat[0] - (a.qd_hat[0] + b.qd_hat[0] - z.qd_hat[0])).abs() < 1e-9);
        }
    }
}
