//! Robot-side and controller-side joint states.
//!
//! For a fixed-base robot the full state is just the actuated joints, so the
//! robot-state error and the joint-dynamics error are the same vector.

use nalgebra::DVector;

use crate::error::{ensure_dim, ensure_finite, Result};

/// Measured joint positions (rad) and velocities (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q_hat: DVector<f64>,
    pub qd_hat: DVector<f64>,
}

/// Integrator-side joint positions and velocities sent to the servos.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredState {
    pub q_d: DVector<f64>,
    pub qd_d: DVector<f64>,
}

/// Stacked `[q̂ − q_d; q̇̂ − q̇_d]`, length 2n.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingError {
    pub phi: DVector<f64>,
}

impl RobotState {
    pub fn new(q_hat: DVector<f64>, qd_hat: DVector<f64>) -> Result<Self> {
        ensure_dim("robot state", q_hat.len(), qd_hat.len())?;
        ensure_finite("robot state", q_hat.iter().chain(qd_hat.iter()).copied())?;
        Ok(Self { q_hat, qd_hat })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q_hat: DVector::zeros(n),
            qd_hat: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q_hat.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q_hat.iter().chain(self.qd_hat.iter()).all(|x| x.is_finite())
    }
}

impl DesiredState {
    pub fn new(q_d: DVector<f64>, qd_d: DVector<f64>) -> Result<Self> {
        ensure_dim("desired state", q_d.len(), qd_d.len())?;
        ensure_finite("desired state", q_d.iter().chain(qd_d.iter()).copied())?;
        Ok(Self { q_d, qd_d })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q_d: DVector::zeros(n),
            qd_d: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q_d.len()
    }
}

impl From<&RobotState> for DesiredState {
    fn from(s: &RobotState) -> Self {
        Self {
            q_d: s.q_hat.clone(),
            qd_d: s.qd_hat.clone(),
        }
    }
}

impl From<&DesiredState> for RobotState {
    fn from(s: &DesiredState) -> Self {
        Self {
            q_hat: s.q_d.clone(),
            qd_hat: s.qd_d.clone(),
        }
    }
}

/// Exact zero-order-hold step of the double integrator `q̈_d = u`.
pub fn integrate_desired(state: &DesiredState, u: &DVector<f64>, dt: f64) -> Result<DesiredState> {
    ensure_dim("desired acceleration", u.len(), state.dof())?;
    ensure_finite("desired acceleration", u.iter().copied())?;
    ensure_finite("time step", [dt])?;
    if dt <= 0.0 {
        return Err(crate::Error::InvalidParam(format!("dt must be positive, got {dt}")));
    }
    let q_d = &state.q_d + &state.qd_d * dt + u * (0.5 * dt * dt);
    let qd_d = &state.qd_d + u * dt;
    Ok(DesiredState { q_d, qd_d })
}

pub fn tracking_error(actual: &RobotState, desired: &DesiredState) -> Result<TrackingError> {
    ensure_dim("tracking error", actual.dof(), desired.dof())?;
    let n = actual.dof();
    let mut phi = DVector::zeros(2 * n);
    for i in 0..n {
        phi[i] = actual.q_hat[i] - desired.q_d[i];
        phi[n + i] = actual.qd_hat[i] - desired.qd_d[i];
    }
    Ok(TrackingError { phi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn des(q: f64, v: f64) -> DesiredState {
        DesiredState::new(dvector![q], dvector![v]).unwrap()
    }

    #[test]
    fn zoh_examples() {
        let s = integrate_desired(&des(0.0, 0.0), &dvector![1.0], 0.1).unwrap();
        assert!((s.q_d[0] - 0.005).abs() < 1e-15 && (s.qd_d[0] - 0.1).abs() < 1e-15);

        let s = integrate_desired(&des(1.0, 0.0), &dvector![0.0], 0.5).unwrap();
        assert_eq!((s.q_d[0], s.qd_d[0]), (1.0, 0.0));

        let s = integrate_desired(&des(0.0, 2.0), &dvector![-4.0], 1.0).unwrap();
        assert_eq!((s.q_d[0], s.qd_d[0]), (0.0, -2.0));
    }

    #[test]
    fn zoh_rejects_bad_input() {
        assert!(integrate_desired(&des(0.0, 0.0), &dvector![f64::NAN], 0.1).is_err());
        assert!(integrate_desired(&des(0.0, 0.0), &dvector![1.0], 0.0).is_err());
        assert!(integrate_desired(&des(0.0, 0.0), &dvector![1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn error_examples() {
        let a = RobotState::new(dvector![1.1], dvector![0.0]).unwrap();
        let e = tracking_error(&a, &des(1.0, 0.0)).unwrap();
        assert!((e.phi[0] - 0.1).abs() < 1e-15 && e.phi[1] == 0.0);

        let same = tracking_error(&a, &DesiredState::from(&a)).unwrap();
        assert!(same.phi.iter().all(|&x| x == 0.0));

        let a = RobotState::new(dvector![0.0, 0.0], dvector![1.0, -1.0]).unwrap();
        let e = tracking_error(&a, &DesiredState::zeros(2)).unwrap();
        assert_eq!(e.phi, dvector![0.0, 0.0, 1.0, -1.0]);

        assert!(tracking_error(&a, &DesiredState::zeros(3)).is_err());
    }

    proptest! {
        #[test]
        fn n_steps_equal_one_long_step(q in -5.0..5.0f64, v in -5.0..5.0f64, u in -20.0..20.0f64,
                                       dt in 1e-4..0.1f64, n in 1usize..50) {
            let mut s = des(q, v);
            for _ in 0..n {
                s = integrate_desired(&s, &dvector![u], dt).unwrap();
            }
            let one = integrate_desired(&des(q, v), &dvector![u], dt * n as f64).unwrap();
            let scale = 1.0 + q.abs() + v.abs() + u.abs();
            prop_assert!((s.q_d[0] - one.q_d[0]).abs() <= 1e-12 * scale * n as f64);
            prop_assert!((s.qd_d[0] - one.qd_d[0]).abs() <= 1e-12 * scale * n as f64);
        }

        #[test]
        fn error_is_antisymmetric(a in proptest::collection::vec(-10.0..10.0f64, 4),
                                  b in proptest::collection::vec(-10.0..10.0f64, 4)) {
            let ra = RobotState::new(dvector![a[0], a[1]], dvector![a[2], a[3]]).unwrap();
            let rb = RobotState::new(dvector![b[0], b[1]], dvector![b[2], b[3]]).unwrap();
            let ab = tracking_error(&ra, &DesiredState::from(&rb)).unwrap();
            let ba = tracking_error(&rb, &DesiredState::from(&ra)).unwrap();
            prop_assert_eq!(ab.phi, -ba.phi);
        }
    }
}
