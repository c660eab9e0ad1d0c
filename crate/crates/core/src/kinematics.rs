//! Task maps and barrier functions on planar serial chains.
//!
//! Every output is evaluated twice per control step: on the measured state
//! and on the desired state. The controller mixes the two.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Revolute planar chain with its base at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarChain {
    pub link_lengths: Vec<f64>,
}

impl PlanarChain {
    pub fn new(link_lengths: Vec<f64>) -> Result<Self> {
        if link_lengths.is_empty() || link_lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParam(format!("link lengths must be positive: {link_lengths:?}")));
        }
        Ok(Self { link_lengths })
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    /// Cumulative joint angles q₁+…+qᵢ.
    fn angles(&self, q: &DVector<f64>) -> Vec<f64> {
        q.iter()
            .scan(0.0, |acc, &qi| {
                *acc += qi;
                Some(*acc)
            })
            .collect()
    }

    pub fn fk(&self, q: &DVector<f64>) -> Vector2<f64> {
        let th = self.angles(q);
        self.link_lengths
            .iter()
            .zip(&th)
            .fold(Vector2::zeros(), |p, (l, t)| p + Vector2::new(l * t.cos(), l * t.sin()))
    }

    /// 2×n Jacobian of [`fk`](Self::fk).
    pub fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let th = self.angles(q);
        let mut j = DMatrix::zeros(2, n);
        // column k collects links k..n, all of which rotate with joint k
        for k in 0..n {
            for i in k..n {
                let l = self.link_lengths[i];
                j[(0, k)] -= l * th[i].sin();
                j[(1, k)] += l * th[i].cos();
            }
        }
        j
    }

    /// Time derivative of the Jacobian along joint velocity `qd`.
    pub fn jacobian_dot(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let th = self.angles(q);
        let thd = self.angles(qd);
        let mut jd = DMatrix::zeros(2, n);
        for k in 0..n {
            for i in k..n {
                let l = self.link_lengths[i];
                jd[(0, k)] -= l * th[i].cos() * thd[i];
                jd[(1, k)] -= l * th[i].sin() * thd[i];
            }
        }
        jd
    }
}

/// What a task regulates.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskMap {
    /// s(q) = q_i.
    Joint(usize),
    /// s(q) = end-effector position of the chain.
    EndEffector(PlanarChain),
}

impl TaskMap {
    pub fn dim(&self) -> usize {
        match self {
            TaskMap::Joint(_) => 1,
            TaskMap::EndEffector(_) => 2,
        }
    }

    pub fn value(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            TaskMap::Joint(i) => DVector::from_element(1, q[*i]),
            TaskMap::EndEffector(c) => {
                let p = c.fk(q);
                DVector::from_column_slice(p.as_slice())
            }
        }
    }

    pub fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match self {
            TaskMap::Joint(i) => {
                let mut j = DMatrix::zeros(1, q.len());
                j[(0, *i)] = 1.0;
                j
            }
            TaskMap::EndEffector(c) => c.jacobian(q),
        }
    }

    pub fn jacobian_dot(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DMatrix<f64> {
        match self {
            TaskMap::Joint(_) => DMatrix::zeros(1, q.len()),
            TaskMap::EndEffector(c) => c.jacobian_dot(q, qd),
        }
    }
}

/// Reference sample `(s_ref, ṡ_ref, s̈_ref)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRef {
    pub s: DVector<f64>,
    pub s_dot: DVector<f64>,
    pub s_ddot: DVector<f64>,
}

impl TaskRef {
    pub fn constant(s: DVector<f64>) -> Self {
        let m = s.len();
        Self {
            s,
            s_dot: DVector::zeros(m),
            s_ddot: DVector::zeros(m),
        }
    }
}

/// Task output state `(e, ė)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub e: DVector<f64>,
    pub e_dot: DVector<f64>,
}

/// `e = s(q) − s_ref`, `ė = J(q) q̇ − ṡ_ref`. Called with the measured state
/// for the feedback path and with the desired state for the feedforward one.
pub fn task_state(map: &TaskMap, refs: &TaskRef, q: &DVector<f64>, qd: &DVector<f64>) -> Result<TaskState> {
    ensure_dim("task reference", refs.s.len(), map.dim())?;
    ensure_dim("task state", q.len(), qd.len())?;
    let e = map.value(q) - &refs.s;
    let e_dot = map.jacobian(q) * qd - &refs.s_dot;
    Ok(TaskState { e, e_dot })
}

/// Barrier value and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierState {
    pub h: f64,
    pub h_dot: f64,
}

/// Supported barrier functions; `h ≥ 0` is the safe set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierForm {
    /// h = max − q_i.
    JointUpper { joint: usize, max: f64 },
    /// h = q_i − min.
    JointLower { joint: usize, min: f64 },
    /// h = max − q̇_i. Relative degree one in the desired acceleration.
    VelocityUpper { joint: usize, max: f64 },
    /// h = q̇_i − min.
    VelocityLower { joint: usize, min: f64 },
    /// h = nᵀ fk(q) + offset on the chain's end effector.
    HalfPlane { normal: [f64; 2], offset: f64 },
}

impl BarrierForm {
    /// Relative degree of h with respect to the desired acceleration.
    pub fn relative_degree(&self) -> usize {
        match self {
            BarrierForm::VelocityUpper { .. } | BarrierForm::VelocityLower { .. } => 1,
            _ => 2,
        }
    }

    pub fn check(&self, n: usize, chain: Option<&PlanarChain>) -> Result<()> {
        match self {
            BarrierForm::JointUpper { joint, .. }
            | BarrierForm::JointLower { joint, .. }
            | BarrierForm::VelocityUpper { joint, .. }
            | BarrierForm::VelocityLower { joint, .. } => {
                if *joint >= n {
                    return Err(Error::UnsupportedBarrier(format!("joint {joint} out of range for {n} joints")));
                }
            }
            BarrierForm::HalfPlane { normal, .. } => {
                if chain.is_none() {
                    return Err(Error::UnsupportedBarrier("half-plane barrier needs a planar chain".into()));
                }
                let norm = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::UnsupportedBarrier(format!("degenerate normal {normal:?}")));
                }
            }
        }
        Ok(())
    }

    /// h(q, q̇).
    pub fn value(&self, chain: Option<&PlanarChain>, q: &DVector<f64>, qd: &DVector<f64>) -> Result<f64> {
        self.check(q.len(), chain)?;
        Ok(match self {
            BarrierForm::JointUpper { joint, max } => max - q[*joint],
            BarrierForm::JointLower { joint, min } => q[*joint] - min,
            BarrierForm::VelocityUpper { joint, max } => max - qd[*joint],
            BarrierForm::VelocityLower { joint, min } => qd[*joint] - min,
            BarrierForm::HalfPlane { normal, offset } => {
                let p = chain.expect("checked").fk(q);
                normal[0] * p.x + normal[1] * p.y + offset
            }
        })
    }

    /// Row multiplying the acceleration in the highest derivative of h:
    /// ∂h/∂q for position barriers, ∂h/∂q̇ for velocity barriers.
    pub fn jacobian(&self, chain: Option<&PlanarChain>, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(q.len(), chain)?;
        let mut j = DVector::zeros(q.len());
        match self {
            BarrierForm::JointUpper { joint, .. } | BarrierForm::VelocityUpper { joint, .. } => j[*joint] = -1.0,
            BarrierForm::JointLower { joint, .. } | BarrierForm::VelocityLower { joint, .. } => j[*joint] = 1.0,
            BarrierForm::HalfPlane { normal, .. } => {
                let jc = chain.expect("checked").jacobian(q);
                j = jc.transpose() * Vector2::new(normal[0], normal[1]);
            }
        }
        Ok(j)
    }

    /// Time derivative of [`jacobian`](Self::jacobian); zero for the affine forms.
    pub fn jacobian_dot(&self, chain: Option<&PlanarChain>, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(q.len(), chain)?;
        Ok(match self {
            BarrierForm::HalfPlane { normal, .. } => {
                let jd = chain.expect("checked").jacobian_dot(q, qd);
                jd.transpose() * Vector2::new(normal[0], normal[1])
            }
            _ => DVector::zeros(q.len()),
        })
    }
}

/// `(h, ḣ)` with `ḣ = J^h q̇` for the relative-degree-two forms.
///
/// Velocity barriers are rejected here: their rate depends on the
/// acceleration, so their constraint rows are built from h alone.
pub fn barrier_state(
    form: &BarrierForm,
    chain: Option<&PlanarChain>,
    q: &DVector<f64>,
    qd: &DVector<f64>,
) -> Result<BarrierState> {
    if form.relative_degree() != 2 {
        return Err(Error::UnsupportedBarrier(format!(
            "{form:?} has relative degree one, no (h, ḣ) state"
        )));
    }
    let h = form.value(chain, q, qd)?;
    let h_dot = form.jacobian(chain, q)?.dot(qd);
    Ok(BarrierState { h, h_dot })
}

/// Condition number from singular values; infinite when rank deficient.
pub fn condition_number(j: &DMatrix<f64>) -> f64 {
    let sv = j.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use std::f64::consts::FRAC_PI_2;

    fn two() -> PlanarChain {
        PlanarChain::new(vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn fk_examples() {
        let c = two();
        assert!((c.fk(&dvector![0.0, 0.0]) - Vector2::new(2.0, 0.0)).norm() < 1e-15);
        assert!((c.fk(&dvector![FRAC_PI_2, 0.0]) - Vector2::new(0.0, 2.0)).norm() < 1e-15);
        assert!((c.fk(&dvector![FRAC_PI_2, -FRAC_PI_2]) - Vector2::new(1.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let c = two();
        let j = c.jacobian(&dvector![0.0, 0.0]);
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 1.0]));
        let q = dvector![0.4, -1.1];
        assert_eq!(c.jacobian(&q) * DVector::zeros(2), DVector::zeros(2));
        assert_eq!(c.jacobian_dot(&q, &DVector::zeros(2)), DMatrix::zeros(2, 2));
    }

    #[test]
    fn invalid_chain() {
        assert!(PlanarChain::new(vec![1.0, 0.0]).is_err());
        assert!(PlanarChain::new(vec![]).is_err());
    }

    #[test]
    fn joint_task_is_identity() {
        let m = TaskMap::Joint(0);
        let q = dvector![0.3];
        assert_eq!(m.jacobian(&q), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(m.jacobian_dot(&q, &dvector![2.0]), DMatrix::zeros(1, 1));
    }

    #[test]
    fn task_state_examples() {
        let m = TaskMap::Joint(0);
        let r = TaskRef::constant(dvector![1.0]);
        let s = task_state(&m, &r, &dvector![1.0], &dvector![0.0]).unwrap();
        assert_eq!((s.e[0], s.e_dot[0]), (0.0, 0.0));
        let s = task_state(&m, &r, &dvector![0.5], &dvector![0.0]).unwrap();
        assert_eq!((s.e[0], s.e_dot[0]), (-0.5, 0.0));

        let m = TaskMap::EndEffector(two());
        let r = TaskRef::constant(dvector![2.0, 0.0]);
        let s = task_state(&m, &r, &dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
        assert!(s.e.norm() < 1e-15);
        assert!((s.e_dot - dvector![0.0, 2.0]).norm() < 1e-15);
    }

    #[test]
    fn barrier_examples() {
        let f = BarrierForm::JointUpper { joint: 0, max: 3.0 };
        let b = barrier_state(&f, None, &dvector![2.5], &dvector![0.1]).unwrap();
        assert!((b.h - 0.5).abs() < 1e-15 && (b.h_dot + 0.1).abs() < 1e-15);

        let c = two();
        let f = BarrierForm::HalfPlane { normal: [-1.0, 0.0], offset: 1.5 };
        let q = dvector![FRAC_PI_2, -FRAC_PI_2];
        let b = barrier_state(&f, Some(&c), &q, &dvector![0.0, 0.0]).unwrap();
        assert!((b.h - 0.5).abs() < 1e-15);

        assert!(matches!(barrier_state(&f, None, &q, &q), Err(Error::UnsupportedBarrier(_))));
        let v = BarrierForm::VelocityUpper { joint: 0, max: 1.0 };
        assert!(barrier_state(&v, None, &dvector![0.0], &dvector![0.0]).is_err());
        assert!((v.value(None, &dvector![0.0], &dvector![0.25]).unwrap() - 0.75).abs() < 1e-15);
        let out = BarrierForm::JointLower { joint: 3, min: 0.0 };
        assert!(out.check(2, None).is_err());
    }

    #[test]
    fn desired_and_measured_barriers_coincide_without_error() {
        let c = two();
        let f = BarrierForm::HalfPlane { normal: [0.6, 0.8], offset: -0.2 };
        let q = dvector![0.3, 0.9];
        let v = dvector![-0.5, 1.5];
        let a = barrier_state(&f, Some(&c), &q, &v).unwrap();
        let b = barrier_state(&f, Some(&c), &q.clone(), &v.clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn output_error_is_first_order_in_tracking_error() {
        // η(x) − η(x_d) − (∂η/∂x)·φ shrinks quadratically with φ
        let c = PlanarChain::new(vec![0.7, 0.5, 0.3]).unwrap();
        let map = TaskMap::EndEffector(c.clone());
        let qd = dvector![0.2, 0.8, -0.4];
        let vd = dvector![0.5, -0.3, 0.9];
        let dq = dvector![0.3, -0.2, 0.5];
        let dv = dvector![-0.4, 0.6, 0.1];
        let eta = |q: &DVector<f64>, v: &DVector<f64>| {
            let mut out = DVector::zeros(4);
            out.rows_mut(0, 2).copy_from(&map.value(q));
            out.rows_mut(2, 2).copy_from(&(map.jacobian(q) * v));
            out
        };
        let remainder = |s: f64| {
            let q = &qd + &dq * s;
            let v = &vd + &dv * s;
            let j = c.jacobian(&qd);
            // ∂(Jv)/∂q · δq equals J̇ evaluated with δq as the velocity, applied to v
            let lin_pos = &j * &dq * s;
            let lin_vel = c.jacobian_dot(&qd, &(&dq * s)) * &vd + &j * (&dv * s);
            let mut lin = DVector::zeros(4);
            lin.rows_mut(0, 2).copy_from(&lin_pos);
            lin.rows_mut(2, 2).copy_from(&lin_vel);
            (eta(&q, &v) - eta(&qd, &vd) - lin).norm()
        };
        let r1 = remainder(1e-2);
        let r2 = remainder(5e-3);
        assert!((r1 / r2 - 4.0).abs() < 0.2, "ratio {}", r1 / r2);
    }
}
