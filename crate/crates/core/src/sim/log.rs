//! Time-series log of a run and its CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    BlowUp { norm: f64 },
    QpInfeasible { rows: Vec<usize> },
    QpNotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Episode boundaries of a gain ramp, by logged row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpan {
    pub index: usize,
    pub ks: f64,
    pub first_row: usize,
    /// One past the last row.
    pub end_row: usize,
}

/// Column-major log sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub dt: f64,
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
    pub active_sets: Vec<Vec<usize>>,
    pub events: Vec<Event>,
    /// Columns holding measured task error components.
    pub error_columns: Vec<usize>,
    /// `(name, h column, h_d column)` per barrier.
    pub barrier_columns: Vec<(String, usize, usize)>,
    pub episodes: Vec<EpisodeSpan>,
    /// Running max of ‖η(x) − η_d(x_d)‖∞ over all tasks.
    pub eta_phi_max: f64,
    pub max_kkt_residual: f64,
    pub max_slack: f64,
    pub qp_failures: usize,
    pub ill_conditioned_steps: usize,
    /// Configured horizon; the log is shorter after a blow-up.
    pub t_end: f64,
}

impl SimLog {
    pub fn new(scenario: &str, dt: f64, columns: Vec<String>, t_end: f64) -> Self {
        let data = vec![Vec::new(); columns.len()];
        Self {
            scenario: scenario.to_string(),
            dt,
            columns,
            data,
            active_sets: Vec::new(),
            events: Vec::new(),
            error_columns: Vec::new(),
            barrier_columns: Vec::new(),
            episodes: Vec::new(),
            eta_phi_max: 0.0,
            max_kkt_residual: 0.0,
            max_slack: 0.0,
            qp_failures: 0,
            ill_conditioned_steps: 0,
            t_end,
        }
    }

    pub fn len(&self) -> usize {
        self.active_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, row: &[f64], active: Vec<usize>) {
        debug_assert_eq!(row.len(), self.columns.len());
        for (c, &v) in self.data.iter_mut().zip(row) {
            c.push(v);
        }
        self.active_sets.push(active);
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.index(name).map(|i| self.data[i].as_slice())
    }

    pub fn times(&self) -> &[f64] {
        &self.data[0]
    }

    pub fn blow_up(&self) -> Option<&Event> {
        self.events.iter().find(|e| matches!(e.kind, EventKind::BlowUp { .. }))
    }

    /// CSV with a fixed header; floats carry 17 significant digits and the
    /// active set is a `;`-separated list of row indices.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        header.push("active_set");
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for r in 0..self.len() {
            record.clear();
            record.extend(self.data.iter().map(|c| format_float(c[r])));
            record.push(
                self.active_sets[r]
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut log = SimLog::new("x", 0.1, vec!["t".into(), "y".into()], 0.2);
        log.push(&[0.0, 1.0 / 3.0], vec![]);
        log.push(&[0.1, f64::NAN], vec![0, 2]);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,y,active_set");
        assert_eq!(lines[1], "0.0000000000000000e0,3.3333333333333331e-1,");
        assert_eq!(lines[2], "1.0000000000000001e-1,NaN,0;2");
        let back: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }
}
