//! Declarative scenario description. Serialized as TOML; every field maps
//! one-to-one onto the engine's inputs and unknown keys are rejected.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::{BarrierGains, TaskGains, TaskLaw};
use crate::error::{Error, Result};
use crate::kinematics::{BarrierForm, PlanarChain, TaskMap, TaskRef};
use crate::plant::{ServoParams, DEFAULT_BLOWUP_CAP};

pub const SCHEMA_VERSION: u32 = 1;

fn default_substeps() -> usize {
    10
}
fn default_cap() -> f64 {
    DEFAULT_BLOWUP_CAP
}
fn default_one() -> usize {
    1
}
fn default_weight() -> f64 {
    1.0
}
fn is_false(b: &bool) -> bool {
    !*b
}
fn is_one(n: &usize) -> bool {
    *n == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Control period, s.
    pub dt_control: f64,
    /// Horizon, s.
    pub t_end: f64,
    /// RK4 stages per control period.
    #[serde(default = "default_substeps")]
    pub plant_substeps: usize,
    /// Any |state entry| above this stops the run as a blow-up.
    #[serde(default = "default_cap")]
    pub blowup_cap: f64,
    /// Keep one logged row every `log_every` control steps.
    #[serde(default = "default_one", skip_serializing_if = "is_one")]
    pub log_every: usize,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub robot: RobotConfig,
    #[serde(default)]
    pub posture: PostureConfig,
    #[serde(default)]
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub barriers: Vec<BarrierConfig>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_ramp: Option<GainRamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    /// One servo per joint.
    pub joints: Vec<ServoParams>,
    /// Planar chain link lengths, m. Required by end-effector tasks and
    /// half-plane barriers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_lengths: Option<Vec<f64>>,
    /// Initial joint positions, rad. The desired state starts here too.
    pub q0: Vec<f64>,
    /// Initial joint velocities, rad/s; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qd0: Option<Vec<f64>>,
    /// Replace the servos by exact tracking (q̂ = q_d), for nominal checks.
    #[serde(default, skip_serializing_if = "is_false")]
    pub perfect_tracking: bool,
    /// Optional |u_i| bound, rad/s², added as two rows per joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostureConfig {
    pub weight: f64,
    /// Stiffness on q̂ − q_post, s⁻².
    #[serde(default)]
    pub kp: f64,
    /// Damping on q̇̂, s⁻¹.
    #[serde(default)]
    pub kv: f64,
    /// Posture reference, rad; the initial configuration when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_ref: Option<Vec<f64>>,
}

impl Default for PostureConfig {
    fn default() -> Self {
        Self {
            weight: 1e-6,
            kp: 0.0,
            kv: 0.0,
            q_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskMapConfig {
    Joint { joint: usize },
    EndEffector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetPoint {
    /// Switch time, s.
    pub t: f64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub map: TaskMapConfig,
    pub law: TaskLaw,
    /// Diagonal gains, one entry per task coordinate (or a single entry
    /// applied to all of them).
    pub ks: Vec<f64>,
    pub kd: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ki: Vec<f64>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Piecewise-constant reference, sorted by time.
    pub setpoints: Vec<SetPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    /// Desired-side states only.
    FeedforwardEcbf,
    /// Measured states only.
    FeedbackEcbf,
    /// Measured states plus the desired-side rate with gain Ki_h.
    Recbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Always,
    /// Row inserted when the fed-back h is at or below this value.
    Below(f64),
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Below(4.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub name: String,
    pub form: BarrierForm,
    pub mode: BarrierMode,
    pub gains: BarrierGains,
    #[serde(default)]
    pub activation: Activation,
}

/// Constant joint torque from `start` for `duration` seconds (forever when
/// absent). Overlapping entries add up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub joint: usize,
    pub start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// N·m.
    pub torque: f64,
}

/// Stepwise stiffness schedule for one task: during episode k,
/// Ks = ks_start + k·ks_step, Kd = kd_per_sqrt_ks·√Ks and Ki = ki_per_kd·Kd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainRamp {
    pub task: usize,
    pub ks_start: f64,
    pub ks_step: f64,
    /// s.
    pub episode_length: f64,
    pub episodes: usize,
    pub kd_per_sqrt_ks: f64,
    #[serde(default)]
    pub ki_per_kd: f64,
}

impl GainRamp {
    pub fn ks(&self, episode: usize) -> f64 {
        self.ks_start + self.ks_step * episode as f64
    }

    pub fn episode_at(&self, t: f64) -> usize {
        ((t / self.episode_length + 1e-9).floor().max(0.0) as usize).min(self.episodes - 1)
    }

    pub fn gains(&self, episode: usize, m: usize) -> TaskGains {
        let ks = self.ks(episode);
        let kd = self.kd_per_sqrt_ks * ks.sqrt();
        TaskGains::uniform(m, ks, kd, self.ki_per_kd * kd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Oscillation window, s.
    pub window: f64,
    /// Peak-to-peak amplitude below which a signal counts as settled.
    pub noise_floor: f64,
    /// Settling band around the final value.
    pub settle_band: f64,
    /// h at or below this counts as having reached the boundary.
    pub boundary_band: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window: 2.5,
            noise_floor: 1e-4,
            settle_band: 0.02,
            boundary_band: 0.01,
        }
    }
}

fn cfg<T>(msg: String) -> Result<T> {
    Err(Error::Config(msg))
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        cfg(format!("{field} must be positive and finite, got {x}"))
    }
}

fn broadcast(field: &str, v: &[f64], m: usize) -> Result<DVector<f64>> {
    match v.len() {
        0 => Ok(DVector::zeros(m)),
        1 => Ok(DVector::from_element(m, v[0])),
        l if l == m => Ok(DVector::from_column_slice(v)),
        l => cfg(format!("{field} has {l} entries, task has {m} coordinates")),
    }
}

impl TaskConfig {
    pub fn task_map(&self, chain: Option<&PlanarChain>) -> Result<TaskMap> {
        match &self.map {
            TaskMapConfig::Joint { joint } => Ok(TaskMap::Joint(*joint)),
            TaskMapConfig::EndEffector => chain
                .cloned()
                .map(TaskMap::EndEffector)
                .ok_or_else(|| Error::Config(format!("task {}: end_effector map needs robot.link_lengths", self.name))),
        }
    }

    pub fn gains(&self, m: usize) -> Result<TaskGains> {
        let ks = broadcast(&format!("tasks.{}.ks", self.name), &self.ks, m)?;
        let kd = broadcast(&format!("tasks.{}.kd", self.name), &self.kd, m)?;
        let ki = broadcast(&format!("tasks.{}.ki", self.name), &self.ki, m)?;
        TaskGains::new(ks, kd, ki)
    }

    /// Reference in force at time t.
    pub fn reference(&self, t: f64) -> TaskRef {
        let sp = self
            .setpoints
            .iter()
            .rev()
            .find(|s| s.t <= t)
            .unwrap_or(&self.setpoints[0]);
        TaskRef::constant(DVector::from_column_slice(&sp.value))
    }
}

impl Scenario {
    pub fn dof(&self) -> usize {
        self.robot.joints.len()
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt_control).round() as usize
    }

    pub fn chain(&self) -> Result<Option<PlanarChain>> {
        self.robot
            .link_lengths
            .as_ref()
            .map(|l| PlanarChain::new(l.clone()))
            .transpose()
    }

    pub fn disturbance(&self, t: f64) -> DVector<f64> {
        let mut tau = DVector::zeros(self.dof());
        for d in &self.disturbances {
            let on = t >= d.start && d.duration.map_or(true, |len| t < d.start + len);
            if on {
                tau[d.joint] += d.torque;
            }
        }
        tau
    }

    /// Gains of task `i` at time t, after the ramp if one drives it.
    pub fn task_gains_at(&self, i: usize, m: usize, t: f64) -> Result<TaskGains> {
        match &self.gain_ramp {
            Some(r) if r.task == i => Ok(r.gains(r.episode_at(t), m)),
            _ => self.tasks[i].gains(m),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses and validates a scenario document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                s.schema_version
            )));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("schema_version must be {SCHEMA_VERSION}")));
        }
        positive("dt_control", self.dt_control)?;
        positive("t_end", self.t_end)?;
        if self.t_end < self.dt_control {
            return cfg(format!("t_end {} is shorter than one control period", self.t_end));
        }
        if self.plant_substeps == 0 {
            return cfg("plant_substeps must be at least 1".into());
        }
        if self.log_every == 0 {
            return cfg("log_every must be at least 1".into());
        }
        positive("blowup_cap", self.blowup_cap)?;
        positive("metrics.window", self.metrics.window)?;
        positive("metrics.noise_floor", self.metrics.noise_floor)?;
        positive("metrics.settle_band", self.metrics.settle_band)?;
        if !(self.metrics.boundary_band >= 0.0) {
            return cfg("metrics.boundary_band must be non-negative".into());
        }

        let n = self.dof();
        if n == 0 {
            return cfg("robot.joints is empty".into());
        }
        for (i, j) in self.robot.joints.iter().enumerate() {
            j.validate().map_err(|e| match e {
                Error::NotHurwitz(m) => Error::NotHurwitz(format!("robot.joints[{i}]: {m}")),
                other => Error::Config(format!("robot.joints[{i}]: {other}")),
            })?;
        }
        if self.robot.q0.len() != n {
            return cfg(format!("robot.q0 has {} entries for {n} joints", self.robot.q0.len()));
        }
        if let Some(v) = &self.robot.qd0 {
            if v.len() != n {
                return cfg(format!("robot.qd0 has {} entries for {n} joints", v.len()));
            }
        }
        if self.robot.q0.iter().chain(self.robot.qd0.iter().flatten()).any(|x| !x.is_finite()) {
            return cfg("robot initial state must be finite".into());
        }
        if let Some(l) = &self.robot.link_lengths {
            if l.len() != n {
                return cfg(format!("robot.link_lengths has {} entries for {n} joints", l.len()));
            }
        }
        if let Some(a) = self.robot.accel_limit {
            positive("robot.accel_limit", a)?;
        }
        let chain = self.chain().map_err(|e| Error::Config(format!("robot.link_lengths: {e}")))?;

        positive("posture.weight", self.posture.weight)?;
        if let Some(q) = &self.posture.q_ref {
            if q.len() != n {
                return cfg(format!("posture.q_ref has {} entries for {n} joints", q.len()));
            }
        }

        let mut names = std::collections::HashSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if !names.insert(t.name.as_str()) {
                return cfg(format!("duplicate task/barrier name {:?}", t.name));
            }
            if let TaskMapConfig::Joint { joint } = t.map {
                if joint >= n {
                    return cfg(format!("tasks[{i}].map.joint {joint} out of range"));
                }
            }
            let map = t.task_map(chain.as_ref())?;
            let m = map.dim();
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return cfg(format!("tasks[{i}].weight must be non-negative"));
            }
            if t.setpoints.is_empty() {
                return cfg(format!("tasks[{i}].setpoints is empty"));
            }
            for (k, sp) in t.setpoints.iter().enumerate() {
                if sp.value.len() != m {
                    return cfg(format!("tasks[{i}].setpoints[{k}] has {} values, task has {m}", sp.value.len()));
                }
                if k > 0 && !(sp.t >= t.setpoints[k - 1].t) {
                    return cfg(format!("tasks[{i}].setpoints not sorted by time at index {k}"));
                }
            }
            let ramped = self.gain_ramp.as_ref().filter(|r| r.task == i);
            match ramped {
                Some(r) => {
                    if r.episodes == 0 {
                        return cfg("gain_ramp.episodes must be at least 1".into());
                    }
                    positive("gain_ramp.episode_length", r.episode_length)?;
                    for k in 0..r.episodes {
                        r.gains(k, m)
                            .validate(t.law)
                            .map_err(|e| with_context(e, &format!("gain_ramp episode {k}")))?;
                    }
                }
                None => t.gains(m)?.validate(t.law).map_err(|e| with_context(e, &format!("tasks[{i}]")))?,
            }
        }
        if let Some(r) = &self.gain_ramp {
            if r.task >= self.tasks.len() {
                return cfg(format!("gain_ramp.task {} out of range", r.task));
            }
        }

        for (i, b) in self.barriers.iter().enumerate() {
            if !names.insert(b.name.as_str()) {
                return cfg(format!("duplicate task/barrier name {:?}", b.name));
            }
            b.form.check(n, chain.as_ref()).map_err(|e| with_context(e, &format!("barriers[{i}].form")))?;
            let ctx = format!("barriers[{i}].gains");
            if b.form.relative_degree() == 1 {
                if b.mode == BarrierMode::Recbf {
                    return Err(Error::UnsupportedBarrier(format!(
                        "barriers[{i}]: recbf mode needs a relative-degree-two barrier"
                    )));
                }
                positive(&format!("{ctx}.ks"), b.gains.ks)?;
                continue;
            }
            b.gains.validate().map_err(|e| with_context(e, &ctx))?;
            match b.mode {
                BarrierMode::Recbf if !(b.gains.ki > 0.0) => {
                    return cfg(format!("{ctx}.ki must be positive in recbf mode"));
                }
                BarrierMode::FeedforwardEcbf | BarrierMode::FeedbackEcbf if b.gains.ki != 0.0 => {
                    return cfg(format!("{ctx}.ki is only used in recbf mode"));
                }
                _ => {}
            }
            if let Activation::Below(x) = b.activation {
                if !x.is_finite() {
                    return cfg(format!("barriers[{i}].activation must be finite"));
                }
            }
        }

        for (i, d) in self.disturbances.iter().enumerate() {
            if d.joint >= n {
                return cfg(format!("disturbances[{i}].joint {} out of range", d.joint));
            }
            if !(d.start.is_finite() && d.torque.is_finite()) {
                return cfg(format!("disturbances[{i}] must be finite"));
            }
            if let Some(len) = d.duration {
                positive(&format!("disturbances[{i}].duration"), len)?;
            }
            if i > 0 && !(d.start >= self.disturbances[i - 1].start) {
                return cfg(format!("disturbances not sorted by start time at index {i}"));
            }
        }
        Ok(())
    }
}

fn with_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::NotHurwitz(m) => Error::NotHurwitz(format!("{ctx}: {m}")),
        Error::UnsupportedBarrier(m) => Error::UnsupportedBarrier(format!("{ctx}: {m}")),
        Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
        other => Error::Config(format!("{ctx}: {other}")),
    }
}
