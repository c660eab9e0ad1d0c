//! Weighted multi-task QP over the desired joint acceleration and a dense
//! dual active-set solver (Goldfarb–Idnani) for it.
//!
//! ```text
//! min_u  Σ_j w_j ‖J_j u + r_j‖² + w₀ ‖S u + κ‖²   s.t.  A u ≤ b
//! ```
//!
//! written as `½ uᵀHu + gᵀu` after dropping the constant and the factor 2.

use nalgebra::{DMatrix, DVector};

use crate::control::ConstraintRow;
use crate::error::{ensure_dim, ensure_finite, Error, Result};

pub const EPS_REG: f64 = 1e-9;

/// Strictly convex QP `min ½uᵀHu + gᵀu  s.t.  A u ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// One least-squares task `w ‖J u + r‖²`, with `r = J̇_d α_d − s̈_ref − μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTerm {
    pub j: DMatrix<f64>,
    pub r: DVector<f64>,
    pub weight: f64,
}

/// Regularizing joint-space task `w₀ ‖S u + κ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostureTerm {
    pub s: DMatrix<f64>,
    pub kappa: DVector<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    /// Indices of rows holding with equality, ascending.
    pub active_set: Vec<usize>,
    /// One multiplier per inequality row, zero for inactive rows.
    pub duals: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = g.len();
        ensure_dim("QP Hessian rows", h.nrows(), n)?;
        ensure_dim("QP Hessian cols", h.ncols(), n)?;
        ensure_dim("QP constraint cols", a.ncols(), n)?;
        ensure_dim("QP constraint rows", a.nrows(), b.len())?;
        ensure_finite("QP data", h.iter().chain(g.iter()).chain(a.iter()).chain(b.iter()).copied())?;
        Ok(Self { h, g, a, b })
    }

    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self> {
        let n = g.len();
        Self::new(h, g, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g.dot(u)
    }

    /// Appends rows, keeping the existing ones in place.
    pub fn with_rows(&self, rows: &[ConstraintRow]) -> Result<Self> {
        let n = self.dim();
        let k = self.rows();
        let mut a = DMatrix::zeros(k + rows.len(), n);
        let mut b = DVector::zeros(k + rows.len());
        a.rows_mut(0, k).copy_from(&self.a);
        b.rows_mut(0, k).copy_from(&self.b);
        for (i, r) in rows.iter().enumerate() {
            ensure_dim("constraint row", r.a.len(), n)?;
            a.row_mut(k + i).copy_from(&r.a.transpose());
            b[k + i] = r.b;
        }
        Self::new(self.h.clone(), self.g.clone(), a, b)
    }
}

/// Builds the weighted QP; rows are copied in order.
pub fn assemble(tasks: &[TaskTerm], posture: Option<&PostureTerm>, rows: &[ConstraintRow]) -> Result<QpProblem> {
    assemble_with_reg(tasks, posture, rows, EPS_REG)
}

pub fn assemble_with_reg(
    tasks: &[TaskTerm],
    posture: Option<&PostureTerm>,
    rows: &[ConstraintRow],
    eps_reg: f64,
) -> Result<QpProblem> {
    let n = tasks
        .first()
        .map(|t| t.j.ncols())
        .or_else(|| posture.map(|p| p.s.ncols()))
        .ok_or_else(|| Error::InvalidParam("QP needs at least one task or a posture term".into()))?;
    if let Some(p) = posture {
        if !(p.weight > 0.0) {
            return Err(Error::InvalidParam(format!("posture weight must be positive, got {}", p.weight)));
        }
    }
    if tasks.iter().any(|t| !(t.weight >= 0.0)) {
        return Err(Error::InvalidParam("task weights must be non-negative".into()));
    }
    if posture.is_none() && tasks.iter().all(|t| t.weight == 0.0) {
        return Err(Error::InvalidParam("all QP weights are zero".into()));
    }
    let mut h = DMatrix::from_diagonal_element(n, n, eps_reg);
    let mut g = DVector::zeros(n);
    for t in tasks {
        ensure_dim("task Jacobian", t.j.ncols(), n)?;
        ensure_dim("task residual", t.r.len(), t.j.nrows())?;
        let jt = t.j.transpose();
        h += &jt * &t.j * t.weight;
        g += &jt * &t.r * t.weight;
    }
    if let Some(p) = posture {
        ensure_dim("posture selection", p.s.ncols(), n)?;
        ensure_dim("posture feedback", p.kappa.len(), p.s.nrows())?;
        let st = p.s.transpose();
        h += &st * &p.s * p.weight;
        g += &st * &p.kappa * p.weight;
    }
    // symmetrize against round-off from the products
    let h = (&h + h.transpose()) * 0.5;
    QpProblem::new(h, g, DMatrix::zeros(0, n), DVector::zeros(0))?.with_rows(rows)
}

/// Achieved task residuals `δ_j = J_j u + r_j`.
pub fn task_slack(tasks: &[TaskTerm], u: &DVector<f64>) -> Vec<DVector<f64>> {
    tasks.iter().map(|t| &t.j * u + &t.r).collect()
}

/// Largest of the stationarity, primal, dual and complementarity residuals.
pub fn kkt_residual(p: &QpProblem, u: &DVector<f64>, duals: &DVector<f64>) -> f64 {
    let stat = &p.h * u + &p.g + p.a.transpose() * duals;
    let slack = &p.a * u - &p.b;
    let stationarity = stat.amax();
    let primal = slack.iter().fold(0.0f64, |m, &s| m.max(s));
    let dual = duals.iter().fold(0.0f64, |m, &l| m.max(-l));
    let comp = slack.iter().zip(duals.iter()).fold(0.0f64, |m, (s, l)| m.max((s * l).abs()));
    stationarity.max(primal).max(dual).max(comp)
}

/// Solves the equality-constrained KKT system for the rows in `set`.
/// Returns `None` when the system is singular.
pub fn solve_equality_kkt(p: &QpProblem, set: &[usize], rhs_u: &DVector<f64>, rhs_c: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = p.dim();
    let m = set.len();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&p.h);
    for (c, &i) in set.iter().enumerate() {
        for j in 0..n {
            k[(n + c, j)] = p.a[(i, j)];
            k[(j, n + c)] = p.a[(i, j)];
        }
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(rhs_u);
    rhs.rows_mut(n, m).copy_from(rhs_c);
    let lu = k.full_piv_lu();
    if !lu.is_invertible() {
        return None;
    }
    let x = lu.solve(&rhs)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((x.rows(0, n).into_owned(), x.rows(n, m).into_owned()))
}

/// Dense dual active-set solver holding the previous active set as a warm start.
#[derive(Debug, Clone, Default)]
pub struct ActiveSetSolver {
    warm: Vec<usize>,
    pub max_iterations: Option<usize>,
}

impl ActiveSetSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn warm_set(&self) -> &[usize] {
        &self.warm
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    /// Solves `p`, starting from the active set of the previous call. The warm
    /// set is cleared on failure.
    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution> {
        let warm = std::mem::take(&mut self.warm);
        let sol = solve_with(p, Some(&warm), self.max_iterations)?;
        self.warm = sol.active_set.clone();
        Ok(sol)
    }
}

pub fn solve(p: &QpProblem, warm_start: Option<&[usize]>) -> Result<QpSolution> {
    solve_with(p, warm_start, None)
}

/// Valid dual-feasible start from a warm set: the equality-constrained
/// minimizer with all multipliers non-negative.
fn warm_point(p: &QpProblem, warm: &[usize]) -> Option<(DVector<f64>, Vec<usize>, Vec<f64>)> {
    let k = p.rows();
    let mut set: Vec<usize> = warm.iter().copied().filter(|&i| i < k).collect();
    set.sort_unstable();
    set.dedup();
    if set.is_empty() || set.len() > p.dim() {
        return None;
    }
    let rhs_c = DVector::from_iterator(set.len(), set.iter().map(|&i| p.b[i]));
    let (u, lam) = solve_equality_kkt(p, &set, &(-&p.g), &rhs_c)?;
    if lam.iter().any(|&l| l < 0.0) {
        return None;
    }
    Some((u, set, lam.iter().copied().collect()))
}

fn solve_with(p: &QpProblem, warm_start: Option<&[usize]>, max_iterations: Option<usize>) -> Result<QpSolution> {
    let n = p.dim();
    let k = p.rows();
    let cap = max_iterations.unwrap_or(10 * (n + k) + 50);

    let (mut u, mut active, mut lam) = match warm_start.and_then(|w| warm_point(p, w)) {
        Some(start) => start,
        None => {
            let (u, _) = solve_equality_kkt(p, &[], &(-&p.g), &DVector::zeros(0))
                .ok_or_else(|| Error::InvalidParam("QP Hessian is singular".into()))?;
            (u, Vec::new(), Vec::new())
        }
    };

    let row_scale: Vec<f64> = (0..k).map(|i| 1.0 + p.a.row(i).amax() + p.b[i].abs()).collect();
    let mut iterations = 0;
    loop {
        // most violated inactive row, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..k {
            if active.contains(&i) {
                continue;
            }
            let s = (p.a.row(i) * &u)[0] - p.b[i];
            let tol = 1e-12 * row_scale[i] * (1.0 + u.amax());
            if s > tol && pick.map_or(true, |(_, best)| s > best) {
                pick = Some((i, s));
            }
        }
        let Some((np, _)) = pick else { break };

        let a_p = p.a.row(np).transpose();
        let mut lam_p = 0.0;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::NotConverged(cap));
            }
            let (z, r) = solve_equality_kkt(p, &active, &(-&a_p), &DVector::zeros(active.len()))
                .ok_or_else(|| Error::InvalidParam("singular KKT system in active-set step".into()))?;

            // largest dual step before an active multiplier hits zero
            let mut t_dual = f64::INFINITY;
            let mut drop = None;
            for (c, &rc) in r.iter().enumerate() {
                if rc < 0.0 {
                    let t = lam[c] / -rc;
                    if t < t_dual {
                        t_dual = t;
                        drop = Some(c);
                    }
                }
            }
            let curvature = -a_p.dot(&z);
            let z_small = z.amax() <= 1e-13 * (1.0 + a_p.amax());
            let s_p = a_p.dot(&u) - p.b[np];
            let t_primal = if z_small || curvature <= 0.0 { f64::INFINITY } else { s_p.max(0.0) / curvature };

            if t_primal.is_infinite() && t_dual.is_infinite() {
                // a_p is a non-negative combination of the active rows with
                // a contradictory right-hand side: a Farkas certificate.
                let mut rows: Vec<usize> = vec![np];
                for (c, &rc) in r.iter().enumerate() {
                    if rc.abs() > 1e-12 {
                        rows.push(active[c]);
                    }
                }
                rows.sort_unstable();
                return Err(Error::Infeasible { rows });
            }

            let t = t_primal.min(t_dual);
            if !z_small {
                u += &z * t;
            }
            for (c, l) in lam.iter_mut().enumerate() {
                *l += t * r[c];
            }
            lam_p += t;

            if t_primal <= t_dual {
                active.push(np);
                lam.push(lam_p);
                break;
            }
            let c = drop.expect("finite dual step has a blocking row");
            active.remove(c);
            lam.remove(c);
        }
    }

    let mut duals = DVector::zeros(k);
    for (c, &i) in active.iter().enumerate() {
        duals[i] = lam[c].max(0.0);
    }
    let mut active_set = active;
    active_set.sort_unstable();
    let kkt = kkt_residual(p, &u, &duals);
    Ok(QpSolution {
        u,
        active_set,
        duals,
        kkt_residual: kkt,
        iterations,
    })
}
