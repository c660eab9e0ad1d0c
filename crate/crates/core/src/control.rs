//! Feedback laws, barrier constraint rows and the Lyapunov tools used to
//! check gains.
//!
//! All rows use the QP's `a·u ≤ b` convention. Gain matrices are diagonal and
//! stored as their diagonals.

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::kinematics::{BarrierState, TaskState};
use crate::model::RobotState;

/// How a task turns its output states into the commanded task acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskLaw {
    /// μ = −Ks e − Kd ė on the measured state.
    OutputFeedback,
    /// μ = −Ks e_d − Kd ė_d on the desired state only.
    Feedforward,
    /// μ = −Ks e − Kd ė − Ki ė_d.
    Heterogeneous,
    /// Same formula with Kd < 0 and Kd + Ki > 0 (compliant variant).
    NegativeDamping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGains {
    pub ks: DVector<f64>,
    pub kd: DVector<f64>,
    pub ki: DVector<f64>,
}

impl TaskGains {
    pub fn new(ks: DVector<f64>, kd: DVector<f64>, ki: DVector<f64>) -> Result<Self> {
        ensure_dim("task gains Kd", kd.len(), ks.len())?;
        ensure_dim("task gains Ki", ki.len(), ks.len())?;
        ensure_finite("task gains", ks.iter().chain(kd.iter()).chain(ki.iter()).copied())?;
        Ok(Self { ks, kd, ki })
    }

    /// Uniform gains on an m-dimensional task.
    pub fn uniform(m: usize, ks: f64, kd: f64, ki: f64) -> Self {
        Self {
            ks: DVector::from_element(m, ks),
            kd: DVector::from_element(m, kd),
            ki: DVector::from_element(m, ki),
        }
    }

    pub fn dim(&self) -> usize {
        self.ks.len()
    }

    /// Diagonal of Kd + Ki, the damping seen by the nominal closed loop.
    pub fn kd_eff(&self) -> DVector<f64> {
        &self.kd + &self.ki
    }

    /// Rejects gain sets the chosen law cannot use.
    pub fn validate(&self, law: TaskLaw) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.ks.iter().any(|&k| k < 0.0) || self.ki.iter().any(|&k| k < 0.0) {
            return bad(format!("Ks and Ki must be non-negative: Ks = {:?}, Ki = {:?}", self.ks.as_slice(), self.ki.as_slice()));
        }
        match law {
            TaskLaw::OutputFeedback | TaskLaw::Feedforward => {
                if self.ki.iter().any(|&k| k != 0.0) {
                    return bad(format!("{law:?} takes no integral gain"));
                }
            }
            TaskLaw::Heterogeneous => {
                if self.ki.iter().any(|&k| k <= 0.0) || self.ks.iter().any(|&k| k <= 0.0) {
                    return bad("heterogeneous feedback needs Ks > 0 and Ki > 0".into());
                }
            }
            TaskLaw::NegativeDamping => {
                if self.kd.iter().any(|&k| k >= 0.0) {
                    return bad("negative-damping feedback needs Kd < 0".into());
                }
            }
        }
        let report = check_hurwitz(self.ks.as_slice(), self.kd_eff().as_slice());
        if !report.hurwitz {
            return Err(Error::NotHurwitz(format!(
                "task closed loop with Ks = {:?}, Kd + Ki = {:?}",
                self.ks.as_slice(),
                self.kd_eff().as_slice()
            )));
        }
        Ok(())
    }
}

/// ψ = (e, ė, ė_d): measured error and rate plus the desired-side rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPsi {
    pub e: DVector<f64>,
    pub e_dot: DVector<f64>,
    pub e_dot_d: DVector<f64>,
}

impl TaskPsi {
    pub fn new(measured: &TaskState, desired: &TaskState) -> Self {
        Self {
            e: measured.e.clone(),
            e_dot: measured.e_dot.clone(),
            e_dot_d: desired.e_dot.clone(),
        }
    }
}

pub fn mu_output_feedback(ks: &DVector<f64>, kd: &DVector<f64>, eta: &TaskState) -> DVector<f64> {
    -(ks.component_mul(&eta.e) + kd.component_mul(&eta.e_dot))
}

pub fn mu_heterogeneous(g: &TaskGains, psi: &TaskPsi) -> DVector<f64> {
    -(g.ks.component_mul(&psi.e) + g.kd.component_mul(&psi.e_dot) + g.ki.component_mul(&psi.e_dot_d))
}

/// Barrier gains `(Ks_h, Kd_h, Ki_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierGains {
    pub ks: f64,
    pub kd: f64,
    #[serde(default)]
    pub ki: f64,
}

impl BarrierGains {
    /// Places both nominal poles at `lambda < 0`: Ks_h = λ², Kd_h = −2λ.
    pub fn repeated_pole(lambda: f64, ki: f64) -> Result<Self> {
        if !(lambda < 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParam(format!("pole must be negative, got {lambda}")));
        }
        Ok(Self {
            ks: lambda * lambda,
            kd: -2.0 * lambda,
            ki,
        })
    }

    pub fn kd_eff(&self) -> f64 {
        self.kd + self.ki
    }

    /// Poles of the nominal barrier dynamics `ḧ + (Kd_h + Ki_h) ḣ + Ks_h h = 0`.
    pub fn poles(&self) -> [Complex<f64>; 2] {
        companion_eigenvalues(self.ks, self.kd_eff())
    }

    /// Barrier dynamics must have real negative poles.
    pub fn validate(&self) -> Result<()> {
        ensure_finite("barrier gains", [self.ks, self.kd, self.ki])?;
        if self.ki < 0.0 {
            return Err(Error::InvalidParam(format!("Ki_h must be non-negative, got {}", self.ki)));
        }
        let [p1, p2] = self.poles();
        if self.ks <= 0.0 || self.kd_eff() <= 0.0 || p1.im != 0.0 || p2.im != 0.0 {
            return Err(Error::NotHurwitz(format!(
                "barrier poles {p1}, {p2} are not real negative (Ks_h = {}, Kd_h + Ki_h = {})",
                self.ks,
                self.kd_eff()
            )));
        }
        Ok(())
    }

    /// Slowest nominal pole (closest to zero).
    pub fn slowest_pole(&self) -> f64 {
        let [p1, p2] = self.poles();
        p1.re.max(p2.re)
    }

    /// Sufficient check that the nominal barrier response from `(h, ḣ)`
    /// never crosses zero: `ḣ ≥ λ h` with λ the slowest pole.
    pub fn admissible_start(&self, h: f64, h_dot: f64) -> bool {
        h >= 0.0 && h_dot >= self.slowest_pole() * h
    }
}

/// ψ^h = (h, ḣ, ḣ_d).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierPsi {
    pub h: f64,
    pub h_dot: f64,
    pub h_dot_d: f64,
}

/// One inequality `a·u ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub a: DVector<f64>,
    pub b: f64,
}

fn barrier_row(j_h_d: &DVector<f64>, jdot_h_d: &DVector<f64>, alpha_d: &DVector<f64>, feedback: f64) -> ConstraintRow {
    ConstraintRow {
        a: -j_h_d,
        b: jdot_h_d.dot(alpha_d) + feedback,
    }
}

/// `−J^h_d u ≤ J̇^h_d α_d + Ks_h h_d + Kd_h ḣ_d` (desired-side states).
pub fn ecbf_row_feedforward(
    g: &BarrierGains,
    desired: &BarrierState,
    j_h_d: &DVector<f64>,
    jdot_h_d: &DVector<f64>,
    alpha_d: &DVector<f64>,
) -> ConstraintRow {
    barrier_row(j_h_d, jdot_h_d, alpha_d, g.ks * desired.h + g.kd * desired.h_dot)
}

/// Same row with the measured `(h, ḣ)`.
pub fn ecbf_row_feedback(
    g: &BarrierGains,
    measured: &BarrierState,
    j_h_d: &DVector<f64>,
    jdot_h_d: &DVector<f64>,
    alpha_d: &DVector<f64>,
) -> ConstraintRow {
    barrier_row(j_h_d, jdot_h_d, alpha_d, g.ks * measured.h + g.kd * measured.h_dot)
}

/// `−J^h_d u ≤ J̇^h_d α_d + Ks_h h + Kd_h ḣ + Ki_h ḣ_d`.
pub fn recbf_row(
    g: &BarrierGains,
    psi: &BarrierPsi,
    j_h_d: &DVector<f64>,
    jdot_h_d: &DVector<f64>,
    alpha_d: &DVector<f64>,
) -> Result<ConstraintRow> {
    if !(g.ki >= 0.0) {
        return Err(Error::InvalidParam(format!("Ki_h must be non-negative, got {}", g.ki)));
    }
    Ok(barrier_row(
        j_h_d,
        jdot_h_d,
        alpha_d,
        g.ks * psi.h + g.kd * psi.h_dot + g.ki * psi.h_dot_d,
    ))
}

/// Row for a relative-degree-one barrier: `−J^h u ≤ k h`.
pub fn first_order_row(k: f64, h: f64, j_h: &DVector<f64>) -> ConstraintRow {
    ConstraintRow { a: -j_h, b: k * h }
}

pub fn companion(ks: f64, kd_eff: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -ks, -kd_eff)
}

fn companion_eigenvalues(ks: f64, kd_eff: f64) -> [Complex<f64>; 2] {
    let disc = kd_eff * kd_eff / 4.0 - ks;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [Complex::new(-kd_eff / 2.0 + r, 0.0), Complex::new(-kd_eff / 2.0 - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [Complex::new(-kd_eff / 2.0, r), Complex::new(-kd_eff / 2.0, -r)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HurwitzReport {
    /// Two eigenvalues per task coordinate.
    pub eigenvalues: Vec<Complex<f64>>,
    pub hurwitz: bool,
}

/// Eigenvalues of `[[0, 1], [−ks, −kd_eff]]` for every coordinate.
pub fn check_hurwitz(ks: &[f64], kd_eff: &[f64]) -> HurwitzReport {
    let mut eigenvalues = Vec::with_capacity(2 * ks.len());
    let mut hurwitz = ks.len() == kd_eff.len();
    for (&k, &d) in ks.iter().zip(kd_eff) {
        eigenvalues.extend(companion_eigenvalues(k, d));
        hurwitz &= k > 0.0 && d > 0.0;
    }
    HurwitzReport { eigenvalues, hurwitz }
}

/// Solves `F̌ᵀP + PF̌ = −ki·I` for the companion `F̌` in closed form.
pub fn are_solve(ks: f64, kd_eff: f64, ki: f64) -> Result<Matrix2<f64>> {
    ensure_finite("Lyapunov inputs", [ks, kd_eff, ki])?;
    if !(ks > 0.0 && kd_eff > 0.0) {
        return Err(Error::NotHurwitz(format!("companion matrix with ks = {ks}, kd_eff = {kd_eff}")));
    }
    let p12 = ki / (2.0 * ks);
    let p22 = (ki + 2.0 * p12) / (2.0 * kd_eff);
    let p11 = kd_eff * p12 + ks * p22;
    Ok(Matrix2::new(p11, p12, p12, p22))
}

/// Block P for a full task, state ordered `[e; ė]`.
pub fn are_solve_task(g: &TaskGains) -> Result<DMatrix<f64>> {
    let m = g.dim();
    let kde = g.kd_eff();
    let mut p = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        let b = are_solve(g.ks[i], kde[i], g.ki[i])?;
        p[(i, i)] = b[(0, 0)];
        p[(i, m + i)] = b[(0, 1)];
        p[(m + i, i)] = b[(1, 0)];
        p[(m + i, m + i)] = b[(1, 1)];
    }
    Ok(p)
}

/// Nominal closed-loop matrix `A − B[Ks, Kd + Ki]` for a task, ordered `[e; ė]`.
pub fn closed_loop_matrix(g: &TaskGains) -> DMatrix<f64> {
    let m = g.dim();
    let kde = g.kd_eff();
    let mut f = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        f[(i, m + i)] = 1.0;
        f[(m + i, i)] = -g.ks[i];
        f[(m + i, m + i)] = -kde[i];
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Radius beyond which V strictly decreases.
    pub threshold: f64,
    /// ϱ for tasks, σ for barriers.
    pub ultimate_bound: f64,
    pub margin_ok: bool,
}

fn sym_eig_range(p: &DMatrix<f64>) -> (f64, f64) {
    let ev = p.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

fn margin_from_parts(
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    eigenvalues: Vec<Complex<f64>>,
    k_norm: f64,
    ki_min: f64,
    eta_phi_inf: f64,
    theta: f64,
    target: Option<f64>,
) -> Result<StabilityReport> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParam(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(eta_phi_inf >= 0.0 && eta_phi_inf.is_finite()) {
        return Err(Error::InvalidParam(format!("disturbance bound must be finite and non-negative, got {eta_phi_inf}")));
    }
    if !(ki_min > 0.0) {
        return Err(Error::InvalidParam("robustness margin needs a positive integral gain".into()));
    }
    let (lmin, lmax) = sym_eig_range(&p);
    let threshold = 2.0 * lmax * k_norm * eta_phi_inf / (theta * ki_min);
    let ultimate_bound = (lmax / lmin).sqrt() * threshold;
    let margin_ok = target.map_or(true, |r| ultimate_bound <= r);
    Ok(StabilityReport {
        p,
        q,
        eigenvalues,
        threshold,
        ultimate_bound,
        margin_ok,
    })
}

/// Ultimate-bound analysis of the heterogeneous task law against a bound on
/// the output discrepancy ‖η_φ‖∞. `target` is the residual-set radius the
/// caller wants to certify.
pub fn robustness_margin(
    g: &TaskGains,
    p: &DMatrix<f64>,
    eta_phi_inf: f64,
    theta: f64,
    target: Option<f64>,
) -> Result<StabilityReport> {
    let m = g.dim();
    ensure_dim("Lyapunov matrix", p.nrows(), 2 * m)?;
    let k_norm = (0..m)
        .map(|i| g.ks[i].hypot(g.kd[i]))
        .fold(0.0, f64::max);
    let ki_min = g.ki.min();
    let mut q = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        q[(i, i)] = g.ki[i];
        q[(m + i, m + i)] = g.ki[i];
    }
    let eig = check_hurwitz(g.ks.as_slice(), g.kd_eff().as_slice()).eigenvalues;
    margin_from_parts(p.clone(), q, eig, k_norm, ki_min, eta_phi_inf, theta, target)
}

/// Same analysis for one barrier; the bound is σ around the safe set.
pub fn barrier_margin(g: &BarrierGains, eta_phi_inf: f64, theta: f64, target: Option<f64>) -> Result<StabilityReport> {
    let p = are_solve(g.ks, g.kd_eff(), g.ki)?;
    let p = DMatrix::from_column_slice(2, 2, p.as_slice());
    let q = DMatrix::from_diagonal_element(2, 2, g.ki);
    margin_from_parts(
        p,
        q,
        g.poles().to_vec(),
        g.ks.hypot(g.kd),
        g.ki,
        eta_phi_inf,
        theta,
        target,
    )
}

pub fn lyapunov_value(p: &DMatrix<f64>, eta: &DVector<f64>) -> f64 {
    0.5 * eta.dot(&(p * eta))
}

/// κ(x̂) = Kp (q̂ − q_post) + Kv q̇̂, the joint-space term of the posture task.
pub fn posture_feedback(kp: f64, kv: f64, state: &RobotState, q_post: &DVector<f64>) -> Result<DVector<f64>> {
    ensure_dim("posture reference", q_post.len(), state.dof())?;
    Ok((&state.q_hat - q_post) * kp + &state.qd_hat * kv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn ts(e: f64, ed: f64) -> TaskState {
        TaskState { e: dvector![e], e_dot: dvector![ed] }
    }

    #[test]
    fn output_feedback_examples() {
        let r10 = 10f64.sqrt();
        let r30 = 30f64.sqrt();
        assert_eq!(mu_output_feedback(&dvector![10.0], &dvector![2.0 * r10], &ts(1.0, 0.0))[0], -10.0);
        assert_eq!(mu_output_feedback(&dvector![10.0], &dvector![2.0 * r10], &ts(0.0, 0.0))[0], 0.0);
        assert_eq!(mu_output_feedback(&dvector![30.0], &dvector![2.0 * r30], &ts(0.0, 1.0))[0], -2.0 * r30);
    }

    #[test]
    fn heterogeneous_examples() {
        let r30 = 30f64.sqrt();
        let g = TaskGains::uniform(1, 30.0, 2.0 * r30, 2.0 * r30);
        let psi = TaskPsi { e: dvector![1.0], e_dot: dvector![0.0], e_dot_d: dvector![0.0] };
        assert_eq!(mu_heterogeneous(&g, &psi)[0], -30.0);

        let g = TaskGains::uniform(1, 30.0, -1.8 * r30, 3.2 * r30);
        let v = 0.37;
        let psi = TaskPsi { e: dvector![0.0], e_dot: dvector![v], e_dot_d: dvector![v] };
        assert!((mu_heterogeneous(&g, &psi)[0] + 1.4 * r30 * v).abs() < 1e-12);
        g.validate(TaskLaw::NegativeDamping).unwrap();
    }

    #[test]
    fn gain_validation() {
        let r = 10f64.sqrt();
        TaskGains::uniform(1, 10.0, 2.0 * r, 0.0).validate(TaskLaw::OutputFeedback).unwrap();
        let e = TaskGains::uniform(1, 10.0, 2.0 * r, 0.0).validate(TaskLaw::Heterogeneous);
        assert!(matches!(e, Err(Error::InvalidParam(_))));
        let e = TaskGains::uniform(1, 1.0, 0.0, 0.0).validate(TaskLaw::OutputFeedback);
        assert!(matches!(e, Err(Error::NotHurwitz(_))));
        let e = TaskGains::uniform(1, 30.0, -3.0, 2.0).validate(TaskLaw::NegativeDamping);
        assert!(matches!(e, Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn hurwitz_examples() {
        let r = 10f64.sqrt();
        let h = check_hurwitz(&[10.0], &[2.0 * r]);
        assert!(h.hurwitz);
        for ev in &h.eigenvalues {
            assert!((ev.re + r).abs() < 1e-7 && ev.im.abs() < 1e-7, "{ev}");
        }
        let h = check_hurwitz(&[1.0], &[0.0]);
        assert!(!h.hurwitz);
        assert!(h.eigenvalues.iter().all(|ev| ev.re == 0.0 && ev.im.abs() == 1.0));
        let r30 = 30f64.sqrt();
        assert!(check_hurwitz(&[30.0], &[(-1.8 + 3.2) * r30]).hurwitz);
    }

    #[test]
    fn ecbf_feedforward_example() {
        let g = BarrierGains { ks: 4.0, kd: 4.0, ki: 0.0 };
        let j = dvector![-1.0];
        let zero = dvector![0.0];
        let row = ecbf_row_feedforward(&g, &BarrierState { h: 0.5, h_dot: 0.0 }, &j, &zero, &zero);
        assert_eq!((row.a[0], row.b), (1.0, 2.0));
        let row = ecbf_row_feedforward(&g, &BarrierState { h: 0.0, h_dot: 0.0 }, &j, &zero, &zero);
        assert_eq!(row.b, 0.0);
        let g3 = BarrierGains { ks: 12.0, kd: 12.0, ki: 0.0 };
        let bs = BarrierState { h: 0.3, h_dot: -0.2 };
        let row3 = ecbf_row_feedforward(&g3, &bs, &j, &zero, &zero);
        let row1 = ecbf_row_feedforward(&g, &bs, &j, &zero, &zero);
        assert!((row3.b - 3.0 * row1.b).abs() < 1e-15);
    }

    #[test]
    fn ecbf_feedback_examples() {
        let g = BarrierGains::repeated_pole(-40.0, 0.0).unwrap();
        let j = dvector![-1.0];
        let zero = dvector![0.0];
        let hd = BarrierState { h: 0.2, h_dot: 0.0 };
        let h = BarrierState { h: 0.2 - 0.00988, h_dot: 0.0 };
        let a = ecbf_row_feedforward(&g, &hd, &j, &zero, &zero);
        let b = ecbf_row_feedback(&g, &h, &j, &zero, &zero);
        assert!((b.b - a.b - g.ks * -0.00988).abs() < 1e-12);
        let c = ecbf_row_feedback(&g, &BarrierState { h: -0.01, h_dot: 0.0 }, &j, &zero, &zero);
        assert!(c.b < 0.0);
    }

    #[test]
    fn recbf_examples() {
        let ks: f64 = 400.0;
        let g = BarrierGains { ks, kd: -1.2 * ks.sqrt(), ki: 8.4 * ks.sqrt() };
        let j = dvector![0.3, -0.7];
        let zero = dvector![0.0, 0.0];
        let v = 0.05;
        let row = recbf_row(&g, &BarrierPsi { h: 0.0, h_dot: v, h_dot_d: v }, &j, &zero, &zero).unwrap();
        assert!((row.b + 7.2 * ks.sqrt() * -v).abs() < 1e-12);

        let jd = dvector![0.1, 0.2];
        let alpha = dvector![1.0, -3.0];
        let row = recbf_row(&g, &BarrierPsi { h: 0.0, h_dot: 0.0, h_dot_d: 0.0 }, &j, &jd, &alpha).unwrap();
        assert_eq!(row.b, jd.dot(&alpha));

        let neg = BarrierGains { ki: -1.0, ..g };
        assert!(recbf_row(&neg, &BarrierPsi { h: 0.0, h_dot: 0.0, h_dot_d: 0.0 }, &j, &jd, &alpha).is_err());
    }

    #[test]
    fn barrier_gain_synthesis() {
        let g = BarrierGains::repeated_pole(-4.0, 0.0).unwrap();
        assert_eq!((g.ks, g.kd), (16.0, 8.0));
        g.validate().unwrap();
        assert!(g.admissible_start(1.0, -3.0));
        assert!(!g.admissible_start(1.0, -5.0));
        assert!(BarrierGains::repeated_pole(1.0, 0.0).is_err());
        assert!(BarrierGains { ks: 100.0, kd: 1.0, ki: 0.0 }.validate().is_err());
    }

    #[test]
    fn lyapunov_hand_case() {
        let p = are_solve(1.0, 2.0, 1.0).unwrap();
        let expected = Matrix2::new(1.5, 0.5, 0.5, 0.5);
        assert!((p - expected).abs().max() < 1e-12);
        let f = companion(1.0, 2.0);
        let res = f.transpose() * p + p * f + Matrix2::identity();
        assert!(res.abs().max() < 1e-12);
        assert!(are_solve(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn lyapunov_scales_with_q() {
        let p = are_solve(3.0, 1.5, 0.7).unwrap();
        let p2 = are_solve(3.0, 1.5, 2.1).unwrap();
        assert!((p2 - p * 3.0).abs().max() < 1e-12);
    }

    #[test]
    fn margin_examples() {
        let g = TaskGains::uniform(1, 1.0, 1.0, 1.0);
        let p = are_solve_task(&g).unwrap();
        let r = robustness_margin(&g, &p, 0.0, 0.5, None).unwrap();
        assert_eq!((r.threshold, r.ultimate_bound), (0.0, 0.0));

        let r = robustness_margin(&g, &p, 1.0, 0.5, None).unwrap();
        let lmax = p.clone().symmetric_eigenvalues().max();
        assert!((r.threshold - 2.0 * lmax * 2f64.sqrt() * 2.0).abs() < 1e-12);
        assert!(robustness_margin(&g, &p, 1.0, 1.0, None).is_err());
        assert!(robustness_margin(&g, &p, 1.0, 0.0, None).is_err());
        let tight = robustness_margin(&g, &p, 1.0, 0.5, Some(1e-3)).unwrap();
        assert!(!tight.margin_ok);

        let b = BarrierGains { ks: 16.0, kd: 4.0, ki: 4.0 };
        let s = barrier_margin(&b, 0.01, 0.5, None).unwrap();
        assert!(s.ultimate_bound > 0.0 && s.ultimate_bound.is_finite());
    }

    #[test]
    fn posture_examples() {
        let s = RobotState::new(dvector![0.2], dvector![0.0]).unwrap();
        assert_eq!(posture_feedback(1.0, 0.0, &s, &dvector![0.0]).unwrap()[0], 0.2);
        assert_eq!(posture_feedback(3.0, 2.0, &s, &dvector![0.2]).unwrap()[0], 0.0);
    }
}
