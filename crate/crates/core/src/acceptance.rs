//! Acceptance criteria as runnable checks. Each check returns a verdict
//! with the measured quantities, so the CLI and the test target print the
//! same table.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog;
use crate::control::{
    are_solve, companion, ecbf_row_feedback, mu_heterogeneous, mu_output_feedback, recbf_row, BarrierGains, BarrierPsi,
    TaskGains, TaskPsi,
};
use crate::kinematics::{BarrierState, PlanarChain, TaskState};
use crate::qp::{self, QpProblem};
use crate::sim::{run_with_metrics, Metrics, SimLog, SUSTAINED};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    OneDof,
    QpOracle,
    Analysis,
    Planar,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["1dof", "qp-oracle", "analysis", "planar", "all"];

    pub fn criteria(self) -> Vec<u8> {
        match self {
            Suite::OneDof => vec![1, 2, 3, 4, 5, 11],
            Suite::QpOracle => vec![6],
            Suite::Analysis => vec![7, 8, 9],
            Suite::Planar => vec![10],
            Suite::All => (1..=11).collect(),
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1dof" => Ok(Suite::OneDof),
            "qp-oracle" => Ok(Suite::QpOracle),
            "analysis" => Ok(Suite::Analysis),
            "planar" => Ok(Suite::Planar),
            "all" => Ok(Suite::All),
            other => Err(format!("unknown suite {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] C{:02} {:<44} {:>7.2} s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub fn run_suite(suite: Suite) -> Vec<Verdict> {
    suite.criteria().into_iter().map(run_criterion).collect()
}

type Check = fn() -> (bool, String);

fn table(id: u8) -> (&'static str, Option<f64>, Check) {
    match id {
        1 => ("1-DoF output-feedback stability split", Some(5.0), c01_output_feedback),
        2 => ("heterogeneous feedback gain sweep", Some(10.0), c02_heterogeneous_sweep),
        3 => ("compliance variant under load step", None, c03_compliance),
        4 => ("ECBF feedforward vs feedback", Some(10.0), c04_ecbf_modes),
        5 => ("robust ECBF sweep", Some(10.0), c05_recbf_sweep),
        6 => ("QP solver vs enumeration oracle", Some(60.0), c06_qp_oracle),
        7 => ("Lyapunov equation suite", Some(5.0), c07_lyapunov),
        8 => ("recovery identities", None, c08_recovery),
        9 => ("kinematics finite differences", None, c09_kinematics),
        10 => ("planar gain-ramp ordering", None, c10_gain_ramp),
        11 => ("comparison-lemma bound", None, c11_comparison),
        _ => panic!("no criterion {id}"),
    }
}

pub fn run_criterion(id: u8) -> Verdict {
    let (title, budget, check) = table(id);
    let start = Instant::now();
    let (ok, mut detail) = check();
    let elapsed = start.elapsed();
    let budget = budget.map(Duration::from_secs_f64);
    let in_budget = budget.map_or(true, |b| elapsed < b);
    if !in_budget {
        detail.push_str(&format!("; over budget {:.0} s", budget.unwrap().as_secs_f64()));
    }
    Verdict {
        id,
        title,
        passed: ok && in_budget,
        detail,
        elapsed,
        budget,
    }
}

fn run(s: &crate::sim::Scenario) -> Result<(SimLog, Metrics), String> {
    run_with_metrics(s).map_err(|e| format!("{}: {e}", s.name))
}

macro_rules! tryc {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(msg) => return (false, msg),
        }
    };
}

fn c01_output_feedback() -> (bool, String) {
    let (_, low) = tryc!(run(&catalog::fig4(10.0)));
    let (log, high) = tryc!(run(&catalog::fig4(30.0)));
    let t_last = log.times().last().copied().unwrap_or(0.0);
    let ok = low.steady_state_error <= 0.02
        && low.oscillation_index < 0.5
        && !low.instability_flag
        && high.instability_flag
        && t_last <= 10.0;
    (
        ok,
        format!(
            "K1: |e(10 s)| = {:.2e}, osc = {:.3}; K2: unstable = {}, osc = {:.3}",
            low.steady_state_error, low.oscillation_index, high.instability_flag, high.oscillation_index
        ),
    )
}

fn final_offset(log: &SimLog, q_ref: f64) -> f64 {
    (log.column("q_hat_0").and_then(|q| q.last()).copied().unwrap_or(f64::NAN) - q_ref).abs()
}

fn c02_heterogeneous_sweep() -> (bool, String) {
    let (_, m001) = tryc!(run(&catalog::fig8(0.01)));
    let (l1, m1) = tryc!(run(&catalog::fig8(1.0)));
    let (l2, m2) = tryc!(run(&catalog::fig8(2.0)));
    let (o1, o2) = (final_offset(&l1, 1.0), final_offset(&l2, 1.0));
    let ok = m001.oscillation_index >= SUSTAINED
        && !m1.instability_flag
        && !m2.instability_flag
        && o1 <= 0.07
        && o2 <= 0.07
        && m2.settling_time > m1.settling_time;
    (
        ok,
        format!(
            "ε=0.01 osc = {:.3}; ε=1 |q−q_ref| = {o1:.2e}, settle = {:.3} s; ε=2 |q−q_ref| = {o2:.2e}, settle = {:.3} s",
            m001.oscillation_index, m1.settling_time, m2.settling_time
        ),
    )
}

/// Uncentred correlation of q̇_d and q̇̂ over `[t0, t0 + span)`.
pub fn onset_correlation(log: &SimLog, t0: f64, span: f64) -> f64 {
    let (Some(vd), Some(v)) = (log.column("qd_d_0"), log.column("qd_hat_0")) else {
        return f64::NAN;
    };
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (i, &t) in log.times().iter().enumerate() {
        if t >= t0 - 1e-12 && t < t0 + span - 1e-12 {
            xy += vd[i] * v[i];
            xx += vd[i] * vd[i];
            yy += v[i] * v[i];
        }
    }
    xy / (xx * yy).sqrt()
}

fn c03_compliance() -> (bool, String) {
    let (la, _) = tryc!(run(&catalog::fig10(false)));
    let (lb, mb) = tryc!(run(&catalog::fig10(true)));
    let ca = onset_correlation(&la, 10.0, 0.5);
    let cb = onset_correlation(&lb, 10.0, 0.5);
    // q̇_d must die out again after the transient
    let onset = peak_abs(&lb, "qd_d_0", 10.0, 11.0);
    let tail = peak_abs(&lb, "qd_d_0", 14.0, 15.0);
    let ok = cb > 0.0 && ca < 0.0 && tail < onset && !mb.instability_flag;
    (
        ok,
        format!("corr(q̇_d, q̇): (a) = {ca:.3}, (b) = {cb:.3}; (b) peak |q̇_d| {onset:.3} after onset, {tail:.3} in the last second"),
    )
}

fn peak_abs(log: &SimLog, column: &str, t0: f64, t1: f64) -> f64 {
    let Some(x) = log.column(column) else { return f64::NAN };
    log.times()
        .iter()
        .zip(x)
        .filter(|(&t, _)| t >= t0 && t < t1)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()))
}

fn tail_overshoot(log: &SimLog, window: f64) -> f64 {
    let h = log.column("limit.h").unwrap_or(&[]);
    let n = ((window / log.dt).round() as usize).min(h.len());
    h[h.len() - n..].iter().fold(0.0f64, |m, &x| m.max(-x))
}

fn c04_ecbf_modes() -> (bool, String) {
    let (lf, mf) = tryc!(run(&catalog::fig7(false)));
    let (_, mb) = tryc!(run(&catalog::fig7(true)));
    let steady = tail_overshoot(&lf, 2.5);
    let min_hd = mf.barrier("limit").map_or(f64::NAN, |b| b.min_h_d);
    let ok = (0.008..=0.012).contains(&steady) && min_hd >= -1e-6 && mb.oscillation_index >= SUSTAINED;
    (
        ok,
        format!(
            "feedforward: max(−h) = {steady:.5} rad, min h_d = {min_hd:.1e}; feedback: osc = {:.3}",
            mb.oscillation_index
        ),
    )
}

fn c05_recbf_sweep() -> (bool, String) {
    let (_, m002) = tryc!(run(&catalog::fig12(0.02)));
    let (_, m2) = tryc!(run(&catalog::fig12(2.0)));
    let (_, m5) = tryc!(run(&catalog::fig12(5.0)));
    let tb = |m: &Metrics| m.barrier("limit").and_then(|b| b.time_to_boundary).unwrap_or(f64::INFINITY);
    let (tb2, tb5) = (tb(&m2), tb(&m5));
    let ok = m002.oscillation_index >= SUSTAINED
        && m2.oscillation_index < SUSTAINED
        && !m2.instability_flag
        && m2.overshoot_beyond_boundary <= 0.02
        && m5.oscillation_index < SUSTAINED
        && !m5.instability_flag
        && tb5.is_finite()
        && tb5 > tb2;
    (
        ok,
        format!(
            "ε=0.02 osc = {:.3}; ε=2 osc = {:.3}, max(−h) = {:.4}, t_b = {tb2:.3} s; ε=5 osc = {:.3}, t_b = {tb5:.3} s",
            m002.oscillation_index, m2.oscillation_index, m2.overshoot_beyond_boundary, m5.oscillation_index
        ),
    )
}

/// Brute-force reference for small QPs: every subset of at most n rows is
/// tried as the active set, and the feasible candidate with non-negative
/// multipliers and the lowest objective wins.
pub mod oracle {
    use nalgebra::{DMatrix, DVector};

    use crate::qp::QpProblem;

    fn kkt(p: &QpProblem, set: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = p.h.nrows();
        let m = set.len();
        let mut k = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = p.h[(i, j)];
            }
            rhs[i] = -p.g[i];
        }
        for (c, &r) in set.iter().enumerate() {
            for j in 0..n {
                k[(n + c, j)] = p.a[(r, j)];
                k[(j, n + c)] = p.a[(r, j)];
            }
            rhs[n + c] = p.b[r];
        }
        let x = k.lu().solve(&rhs)?;
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((x.rows(0, n).into_owned(), x.rows(n, m).into_owned()))
    }

    /// `(u*, multipliers per row)`, or `None` when no subset qualifies.
    pub fn solve(p: &QpProblem, tol: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = p.h.nrows();
        let k = p.b.len();
        let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
        for mask in 0u32..(1 << k) {
            let set: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            if set.len() > n {
                continue;
            }
            let Some((u, lam)) = kkt(p, &set) else { continue };
            if lam.iter().any(|&l| l < -tol) {
                continue;
            }
            if (0..k).any(|i| (p.a.row(i) * &u)[0] - p.b[i] > tol) {
                continue;
            }
            let f = 0.5 * u.dot(&(&p.h * &u)) + p.g.dot(&u);
            if best.as_ref().map_or(true, |b| f < b.0 - 1e-14) {
                let mut duals = DVector::zeros(k);
                for (c, &i) in set.iter().enumerate() {
                    duals[i] = lam[c];
                }
                best = Some((f, u, duals));
            }
        }
        best.map(|(_, u, d)| (u, d))
    }
}

/// Random strictly convex QP with a known feasible point.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.gen_range(1..=6);
    let k = rng.gen_range(0..=8);
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let a = DMatrix::from_fn(k, n, |_, _| rng.gen_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let b = &a * &x0 + DVector::from_fn(k, |_, _| rng.gen_range(0.0..1.0));
    QpProblem::new(h, g, a, b).expect("consistent dimensions")
}

fn c06_qp_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_diff, mut worst_kkt, mut active) = (0.0f64, 0.0f64, 0usize);
    for i in 0..100 {
        let p = random_qp(&mut rng);
        let sol = match qp::solve(&p, None) {
            Ok(s) => s,
            Err(e) => return (false, format!("problem {i}: solver error {e}")),
        };
        let Some((u, _)) = oracle::solve(&p, 1e-9) else {
            return (false, format!("problem {i}: oracle found no KKT point"));
        };
        worst_diff = worst_diff.max((&sol.u - &u).amax());
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        active += sol.active_set.len();
    }
    (
        worst_diff <= 1e-8 && worst_kkt <= 1e-8,
        format!("100 problems, {active} active rows total; max |u − u_oracle| = {worst_diff:.1e}, max KKT = {worst_kkt:.1e}"),
    )
}

fn c07_lyapunov() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut sym, mut res, mut lmin) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..50 {
        let ks = rng.gen_range(0.1..100.0);
        let kd = rng.gen_range(0.1..50.0);
        let ki = rng.gen_range(0.01..50.0);
        let p = match are_solve(ks, kd, ki) {
            Ok(p) => p,
            Err(e) => return (false, e.to_string()),
        };
        let f = companion(ks, kd);
        sym = sym.max((p - p.transpose()).abs().max());
        res = res.max((f.transpose() * p + p * f + Matrix2::identity() * ki).abs().max());
        lmin = lmin.min(p.symmetric_eigenvalues().min());
    }
    let hand = are_solve(1.0, 2.0, 1.0).map(|p| (p - Matrix2::new(1.5, 0.5, 0.5, 0.5)).abs().max());
    let hand = hand.unwrap_or(f64::INFINITY);
    (
        sym <= 1e-12 && lmin > 0.0 && res <= 1e-10 && hand <= 1e-12,
        format!("50 triples: symmetry {sym:.1e}, residual {res:.1e}, min λ(P) = {lmin:.2e}; hand case error {hand:.1e}"),
    )
}

fn c08_recovery() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut r = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let m = 1 + (r(0.0, 3.0) as usize);
        let v = |r: &mut dyn FnMut(f64, f64) -> f64| DVector::from_fn(m, |_, _| r(-5.0, 5.0));
        let ks = DVector::from_fn(m, |_, _| r(0.0, 100.0));
        let kd = DVector::from_fn(m, |_, _| r(-20.0, 20.0));
        let e = v(&mut r);
        let e_dot = v(&mut r);
        let e_dot_d = v(&mut r);
        let g = TaskGains { ks: ks.clone(), kd: kd.clone(), ki: DVector::zeros(m) };
        let het = mu_heterogeneous(&g, &TaskPsi { e: e.clone(), e_dot: e_dot.clone(), e_dot_d });
        let out = mu_output_feedback(&ks, &kd, &TaskState { e, e_dot });
        mismatches += usize::from(het != out);

        let bg = BarrierGains { ks: r(0.0, 100.0), kd: r(-20.0, 20.0), ki: 0.0 };
        let (h, h_dot, h_dot_d) = (r(-1.0, 1.0), r(-1.0, 1.0), r(-1.0, 1.0));
        let n = 1 + (r(0.0, 3.0) as usize);
        let jh = DVector::from_fn(n, |_, _| r(-1.0, 1.0));
        let jhd = DVector::from_fn(n, |_, _| r(-1.0, 1.0));
        let alpha = DVector::from_fn(n, |_, _| r(-1.0, 1.0));
        let a = recbf_row(&bg, &BarrierPsi { h, h_dot, h_dot_d }, &jh, &jhd, &alpha);
        let b = ecbf_row_feedback(&bg, &BarrierState { h, h_dot }, &jh, &jhd, &alpha);
        mismatches += usize::from(a.as_ref() != Ok(&b));
    }
    (mismatches == 0, format!("1000 task + 1000 barrier draws, {mismatches} mismatches"))
}

fn c09_kinematics() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut wj, mut wjd) = (0.0f64, 0.0f64);
    for links in [2usize, 3] {
        for _ in 0..200 {
            let chain = PlanarChain::new((0..links).map(|_| rng.gen_range(0.2..1.5)).collect()).expect("positive lengths");
            let q = DVector::from_fn(links, |_, _| rng.gen_range(-3.14..3.14));
            let qd = DVector::from_fn(links, |_, _| rng.gen_range(-2.0..2.0));
            let dir = DVector::from_fn(links, |_, _| rng.gen_range(-1.0..1.0));
            let dir = &dir / dir.norm();
            let eps = 1e-7;
            let fd = (chain.fk(&(&q + &dir * eps)) - chain.fk(&q)) / eps;
            let jv: DVector<f64> = chain.jacobian(&q) * &dir;
            let jd = Vector2::new(jv[0], jv[1]);
            wj = wj.max((fd - jd).norm());
            let fd_dot = (chain.jacobian(&(&q + &qd * eps)) - chain.jacobian(&q)) / eps;
            wjd = wjd.max((fd_dot - chain.jacobian_dot(&q, &qd)).abs().max());
        }
    }
    (
        wj <= 1e-6 && wjd <= 1e-5,
        format!("400 configurations: Jacobian error {wj:.1e}, derivative error {wjd:.1e}"),
    )
}

fn c10_gain_ramp() -> (bool, String) {
    let out = catalog::planar_gain_ramp(false);
    let het = catalog::planar_gain_ramp(true);
    let (_, mo) = tryc!(run(&out));
    let (_, mh) = tryc!(run(&het));
    let episodes = het.gain_ramp.as_ref().map_or(0, |r| r.episodes);
    let first = mo.first_unstable_episode().map(|e| (e.index, e.ks));
    let het_clean = !mh.instability_flag && mh.episodes.len() == episodes && mh.episodes.iter().all(|e| !e.instability_flag);
    let ok = first.is_some() && het_clean;
    let worst_het = mh.episodes.iter().map(|e| e.oscillation_index).fold(0.0, f64::max);
    (
        ok,
        format!(
            "output feedback first flagged at {}; heterogeneous {} of {episodes} episodes clean, worst osc = {worst_het:.3}",
            first.map_or("none".to_string(), |(i, ks)| format!("episode {i} (Ks = {ks})")),
            mh.episodes.iter().filter(|e| !e.instability_flag).count(),
        ),
    )
}

/// Nominal barrier response `[1 0]·exp(F̌ t)·(h₀, ḣ₀)`.
pub fn comparison_bound(g: &BarrierGains, h0: f64, h_dot0: f64, t: f64) -> f64 {
    let f = companion(g.ks, g.kd_eff()) * t;
    (f.exp() * Vector2::new(h0, h_dot0))[0]
}

fn c11_comparison() -> (bool, String) {
    let starts = [(0.5, 0.0), (1.0, -3.0)];
    let runs: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = starts
            .iter()
            .map(|&(h0, h_dot0)| scope.spawn(move || run(&catalog::comparison_lemma(h0, h_dot0))))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("run panicked".into()))).collect()
    });
    let mut worst = f64::INFINITY;
    let mut samples = 0;
    let mut inactive = 0;
    for ((h0, h_dot0), r) in starts.into_iter().zip(runs) {
        let (log, _) = tryc!(r);
        let g = catalog::comparison_lemma(h0, h_dot0).barriers[0].gains;
        let (Some(hd), Some(act)) = (log.column("limit.h_d"), log.column("limit.active")) else {
            return (false, "missing barrier columns".into());
        };
        for (i, &t) in log.times().iter().enumerate() {
            worst = worst.min(hd[i] - comparison_bound(&g, h0, h_dot0, t));
            inactive += usize::from(act[i] != 1.0 || !log.active_sets[i].contains(&0));
            samples += 1;
        }
    }
    (
        worst >= -1e-6 && inactive == 0,
        format!("{samples} samples, min(h_d − bound) = {worst:.2e}, steps with the row not binding: {inactive}"),
    )
}
