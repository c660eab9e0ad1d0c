//! Scalar summaries of a run.

use serde::{Deserialize, Serialize};

use super::log::SimLog;
use super::scenario::MetricsConfig;
use crate::error::{Error, Result};

/// Index at or above which an oscillation counts as sustained.
pub const SUSTAINED: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierMetrics {
    pub name: String,
    /// max(0, max −h).
    pub overshoot: f64,
    pub min_h: f64,
    pub min_h_d: f64,
    /// First time h drops to the boundary band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_to_boundary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub index: usize,
    pub ks: f64,
    pub oscillation_index: f64,
    pub instability_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    /// Simulated time actually covered, s.
    pub duration: f64,
    pub settling_time: f64,
    pub steady_state_error: f64,
    pub overshoot_beyond_boundary: f64,
    pub oscillation_index: f64,
    pub instability_flag: bool,
    pub blow_up: bool,
    pub qp_failures: usize,
    pub max_kkt_residual: f64,
    /// Largest task residual δ left by the QP.
    pub max_slack: f64,
    /// Running max of the measured-vs-desired output discrepancy.
    pub eta_phi_max: f64,
    pub ill_conditioned_steps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub barriers: Vec<BarrierMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub episodes: Vec<EpisodeMetrics>,
}

impl Metrics {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn barrier(&self, name: &str) -> Option<&BarrierMetrics> {
        self.barriers.iter().find(|b| b.name == name)
    }

    pub fn first_unstable_episode(&self) -> Option<&EpisodeMetrics> {
        self.episodes.iter().find(|e| e.instability_flag)
    }
}

fn peak_to_peak(xs: &[f64]) -> f64 {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// Peak-to-peak over the last `n` samples divided by that of the `n` before;
/// zero when the last window is quieter than `noise_floor`. `None` when the
/// signal is shorter than two windows.
pub fn oscillation_index(signal: &[f64], n: usize, noise_floor: f64) -> Option<f64> {
    if n == 0 || signal.len() < 2 * n {
        return None;
    }
    let len = signal.len();
    let last = peak_to_peak(&signal[len - n..]);
    if !last.is_finite() {
        return Some(f64::INFINITY);
    }
    if last < noise_floor {
        return Some(0.0);
    }
    let prev = peak_to_peak(&signal[len - 2 * n..len - n]);
    Some(last / prev.max(f64::MIN_POSITIVE))
}

/// Time after which the signal stays within `band` of its final value.
pub fn settling_time(t: &[f64], signal: &[f64], band: f64) -> f64 {
    let Some(&last) = signal.last() else { return 0.0 };
    match signal.iter().rposition(|x| (x - last).abs() > band) {
        None => t.first().copied().unwrap_or(0.0),
        Some(i) => t.get(i + 1).copied().unwrap_or(t[i]),
    }
}

pub fn compute_metrics(log: &SimLog, cfg: &MetricsConfig) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::InvalidParam("metrics need a non-empty log".into()));
    }
    let blow_up = log.blow_up().is_some();
    let t = log.times();
    let n = (cfg.window / log.dt).round() as usize;
    let duration = t[t.len() - 1] + log.dt;

    let monitored: Vec<usize> = log
        .error_columns
        .iter()
        .copied()
        .chain(log.barrier_columns.iter().map(|b| b.1))
        .collect();

    let mut osc = 0.0f64;
    for &c in &monitored {
        match oscillation_index(&log.data[c], n, cfg.noise_floor) {
            Some(x) => osc = osc.max(x),
            None if blow_up => osc = f64::INFINITY,
            None => {
                return Err(Error::InvalidParam(format!(
                    "oscillation window {} s needs a log of at least {} s, got {duration} s",
                    cfg.window,
                    2.0 * cfg.window
                )))
            }
        }
    }

    let mut settling = 0.0f64;
    let mut steady = 0.0f64;
    for &c in &log.error_columns {
        settling = settling.max(settling_time(t, &log.data[c], cfg.settle_band));
        steady = steady.max(log.data[c].last().copied().unwrap_or(0.0).abs());
    }

    let barriers: Vec<BarrierMetrics> = log
        .barrier_columns
        .iter()
        .map(|(name, hc, hdc)| {
            let h = &log.data[*hc];
            let min_h = h.iter().copied().fold(f64::INFINITY, f64::min);
            BarrierMetrics {
                name: name.clone(),
                overshoot: (-min_h).max(0.0),
                min_h,
                min_h_d: log.data[*hdc].iter().copied().fold(f64::INFINITY, f64::min),
                time_to_boundary: h.iter().position(|&x| x <= cfg.boundary_band).map(|i| t[i]),
            }
        })
        .collect();
    let overshoot = barriers.iter().map(|b| b.overshoot).fold(0.0, f64::max);

    let blow_row = log.blow_up().map(|_| log.len());
    let episodes: Vec<EpisodeMetrics> = log
        .episodes
        .iter()
        .map(|ep| {
            let blown = blow_up && blow_row.map_or(false, |r| r <= ep.end_row);
            let mut o = 0.0f64;
            for &c in &monitored {
                let end = ep.end_row.min(log.len());
                let x = oscillation_index(&log.data[c][ep.first_row..end], n, cfg.noise_floor)
                    .unwrap_or(if blown { f64::INFINITY } else { 0.0 });
                o = o.max(x);
            }
            EpisodeMetrics {
                index: ep.index,
                ks: ep.ks,
                oscillation_index: o,
                instability_flag: blown || o >= SUSTAINED,
            }
        })
        .collect();

    let instability_flag = blow_up || osc >= SUSTAINED || episodes.iter().any(|e| e.instability_flag);
    Ok(Metrics {
        scenario: log.scenario.clone(),
        duration,
        settling_time: settling,
        steady_state_error: steady,
        overshoot_beyond_boundary: overshoot,
        oscillation_index: osc,
        instability_flag,
        blow_up,
        qp_failures: log.qp_failures,
        max_kkt_residual: log.max_kkt_residual,
        max_slack: log.max_slack,
        eta_phi_max: log.eta_phi_max,
        ill_conditioned_steps: log.ill_conditioned_steps,
        barriers,
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_of(signal: &[f64], dt: f64) -> SimLog {
        let mut log = SimLog::new("test", dt, vec!["t".into(), "e".into()], dt * signal.len() as f64);
        for (i, &x) in signal.iter().enumerate() {
            log.push(&[i as f64 * dt, x], vec![]);
        }
        log.error_columns = vec![1];
        log
    }

    #[test]
    fn constant_signal() {
        let log = log_of(&vec![0.0; 1000], 0.01);
        let m = compute_metrics(&log, &MetricsConfig::default()).unwrap();
        assert_eq!(m.settling_time, 0.0);
        assert_eq!(m.oscillation_index, 0.0);
        assert!(!m.instability_flag);
    }

    #[test]
    fn pure_sine_is_sustained() {
        // period 0.5 s divides the 2.5 s window
        let s: Vec<f64> = (0..1000).map(|i| (2.0 * std::f64::consts::PI * 2.0 * i as f64 * 0.01).sin()).collect();
        let log = log_of(&s, 0.01);
        let m = compute_metrics(&log, &MetricsConfig::default()).unwrap();
        assert!((m.oscillation_index - 1.0).abs() < 1e-9, "{}", m.oscillation_index);
        assert!(m.instability_flag);
    }

    #[test]
    fn decaying_signal() {
        let s: Vec<f64> = (0..1000).map(|i| (-(i as f64) * 0.01).exp() * (10.0 * i as f64 * 0.01).cos()).collect();
        let m = compute_metrics(&log_of(&s, 0.01), &MetricsConfig::default()).unwrap();
        assert!(m.oscillation_index < 0.2 && !m.instability_flag);
        assert!(m.settling_time > 0.0 && m.settling_time < 10.0);
    }

    #[test]
    fn window_longer_than_log() {
        let log = log_of(&vec![0.0; 100], 0.01);
        assert!(compute_metrics(&log, &MetricsConfig::default()).is_err());
        let empty = log_of(&[], 0.01);
        assert!(compute_metrics(&empty, &MetricsConfig::default()).is_err());
    }

    #[test]
    fn settling_definition() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(settling_time(&t, &[1.0, 0.5, 0.01, 0.0], 0.02), 2.0);
        assert_eq!(settling_time(&t, &[0.0; 4], 0.02), 0.0);
    }
}
