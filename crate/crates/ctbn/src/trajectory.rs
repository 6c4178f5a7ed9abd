//! Piecewise-constant sample paths on [0, T] and the evidence that
//! constrains them.
//!
//! A component trajectory is an initial state plus an ordered list of
//! (time, new_state) transitions; the path is right-continuous. Evidence
//! per component is a set of point observations (time, state) and
//! interval observations (start, end, state).

use crate::model::CtbnModel;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("component {component}: transition times not strictly increasing at index {index}")]
    TimesNotIncreasing { component: usize, index: usize },
    #[error("component {component}: transition {index} does not change state")]
    NoStateChange { component: usize, index: usize },
    #[error("component {component}: state {state} out of range (d = {d})")]
    StateOutOfRange { component: usize, state: usize, d: usize },
    #[error("component {component}: transition time {time} outside ({lo}, {hi})")]
    TimeOutOfBounds { component: usize, time: f64, lo: f64, hi: f64 },
    #[error("joint trajectory has {found} components, model has {expected}")]
    ComponentCountMismatch { found: usize, expected: usize },
    #[error("component trajectories disagree on time bounds")]
    BoundsMismatch,
    #[error("component {component}: evidence time {time} outside [0, {horizon}]")]
    EvidenceTimeOutOfBounds { component: usize, time: f64, horizon: f64 },
    #[error("component {component}: interval evidence overlaps near t = {time}")]
    OverlappingIntervals { component: usize, time: f64 },
    #[error(
        "component {component}: point observation at t = {time} contradicts interval evidence"
    )]
    PointIntervalConflict { component: usize, time: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("evidence file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Trajectory of a single component on `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTrajectory {
    pub component: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub initial_state: usize,
    /// Ordered (time, new_state); times strictly inside (t_start, t_end).
    pub transitions: Vec<(f64, usize)>,
}

impl ComponentTrajectory {
    pub fn constant(component: usize, t_start: f64, t_end: f64, state: usize) -> Self {
        ComponentTrajectory { component, t_start, t_end, initial_state: state, transitions: vec![] }
    }

    /// State at time `t`, right-continuous.
    pub fn state_at(&self, t: f64) -> usize {
        let mut s = self.initial_state;
        for &(tau, next) in &self.transitions {
            if tau <= t {
                s = next;
            } else {
                break;
            }
        }
        s
    }

    /// Left limit of the state at `t`.
    pub fn state_before(&self, t: f64) -> usize {
        let mut s = self.initial_state;
        for &(tau, next) in &self.transitions {
            if tau < t {
                s = next;
            } else {
                break;
            }
        }
        s
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    /// Constant pieces as (start, end, state), covering [t_start, t_end].
    pub fn segments(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.transitions.len() + 1);
        let mut t = self.t_start;
        let mut s = self.initial_state;
        for &(tau, next) in &self.transitions {
            out.push((t, tau, s));
            t = tau;
            s = next;
        }
        out.push((t, self.t_end, s));
        out
    }

    pub fn validate(&self, d: usize) -> Result<(), TrajectoryError> {
        let c = self.component;
        if self.initial_state >= d {
            return Err(TrajectoryError::StateOutOfRange { component: c, state: self.initial_state, d });
        }
        let mut prev_t = self.t_start;
        let mut prev_s = self.initial_state;
        for (k, &(tau, s)) in self.transitions.iter().enumerate() {
            if s >= d {
                return Err(TrajectoryError::StateOutOfRange { component: c, state: s, d });
            }
            if !(tau > self.t_start && tau < self.t_end) {
                return Err(TrajectoryError::TimeOutOfBounds {
                    component: c,
                    time: tau,
                    lo: self.t_start,
                    hi: self.t_end,
                });
            }
            if tau <= prev_t && k > 0 {
                return Err(TrajectoryError::TimesNotIncreasing { component: c, index: k });
            }
            if s == prev_s {
                return Err(TrajectoryError::NoStateChange { component: c, index: k });
            }
            prev_t = tau;
            prev_s = s;
        }
        Ok(())
    }
}

/// One trajectory per component on a common [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub horizon: f64,
    pub components: Vec<ComponentTrajectory>,
}

impl JointTrajectory {
    pub fn state_at(&self, t: f64) -> Vec<usize> {
        self.components.iter().map(|c| c.state_at(t)).collect()
    }

    pub fn state_before(&self, t: f64) -> Vec<usize> {
        self.components.iter().map(|c| c.state_before(t)).collect()
    }

    pub fn validate(&self, model: &CtbnModel) -> Result<(), TrajectoryError> {
        if self.components.len() != model.num_components() {
            return Err(TrajectoryError::ComponentCountMismatch {
                found: self.components.len(),
                expected: model.num_components(),
            });
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.t_start != 0.0 || c.t_end != self.horizon {
                return Err(TrajectoryError::BoundsMismatch);
            }
            c.validate(model.state_size(i))?;
        }
        Ok(())
    }

    /// Dumps the trajectory as CSV: a comment header carrying T and seed,
    /// then rows (component, time, new_state). Initial states appear as
    /// time-0 rows.
    pub fn write_csv(&self, w: &mut impl Write, seed: u64) -> std::io::Result<()> {
        writeln!(w, "# T={} seed={}", self.horizon, seed)?;
        writeln!(w, "component,time,new_state")?;
        for c in &self.components {
            writeln!(w, "{},{},{}", c.component, c.t_start, c.initial_state)?;
            for &(tau, s) in &c.transitions {
                writeln!(w, "{},{},{}", c.component, tau, s)?;
            }
        }
        Ok(())
    }
}

/// Observations for a single component.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ComponentEvidence {
    /// (time, state)
    #[serde(default)]
    pub points: Vec<(f64, usize)>,
    /// (start, end, state): the component is pinned to `state` on the
    /// closed interval.
    #[serde(default)]
    pub intervals: Vec<(f64, f64, usize)>,
}

impl ComponentEvidence {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.intervals.is_empty()
    }
}

/// Point and interval observations, one entry per component.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Evidence {
    pub components: Vec<ComponentEvidence>,
}

impl Evidence {
    pub fn empty(m: usize) -> Self {
        Evidence { components: vec![ComponentEvidence::default(); m] }
    }

    /// Endpoint evidence: every component observed at 0 and T.
    pub fn endpoints(start: &[usize], end: &[usize], horizon: f64) -> Self {
        Evidence {
            components: start
                .iter()
                .zip(end)
                .map(|(&s, &e)| ComponentEvidence {
                    points: vec![(0.0, s), (horizon, e)],
                    intervals: vec![],
                })
                .collect(),
        }
    }

    pub fn validate(&self, model: &CtbnModel, horizon: f64) -> Result<(), TrajectoryError> {
        if self.components.len() != model.num_components() {
            return Err(TrajectoryError::ComponentCountMismatch {
                found: self.components.len(),
                expected: model.num_components(),
            });
        }
        for (i, ev) in self.components.iter().enumerate() {
            let d = model.state_size(i);
            for &(t, s) in &ev.points {
                if !(0.0..=horizon).contains(&t) {
                    return Err(TrajectoryError::EvidenceTimeOutOfBounds {
                        component: i,
                        time: t,
                        horizon,
                    });
                }
                if s >= d {
                    return Err(TrajectoryError::StateOutOfRange { component: i, state: s, d });
                }
            }
            let mut ivs = ev.intervals.clone();
            ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prev_end = f64::NEG_INFINITY;
            for &(s0, s1, s) in &ivs {
                if !(0.0..=horizon).contains(&s0) || !(0.0..=horizon).contains(&s1) || s1 < s0 {
                    return Err(TrajectoryError::EvidenceTimeOutOfBounds {
                        component: i,
                        time: s0,
                        horizon,
                    });
                }
                if s >= d {
                    return Err(TrajectoryError::StateOutOfRange { component: i, state: s, d });
                }
                if s0 < prev_end {
                    return Err(TrajectoryError::OverlappingIntervals { component: i, time: s0 });
                }
                prev_end = s1;
            }
            for &(t, s) in &ev.points {
                for &(s0, s1, iv_state) in &ivs {
                    if t >= s0 && t <= s1 && s != iv_state {
                        return Err(TrajectoryError::PointIntervalConflict {
                            component: i,
                            time: t,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// True when the trajectory satisfies every observation exactly.
    pub fn is_satisfied_by(&self, joint: &JointTrajectory) -> bool {
        for (ev, traj) in self.components.iter().zip(&joint.components) {
            for &(t, s) in &ev.points {
                let observed = if t >= joint.horizon { traj.state_at(joint.horizon) } else { traj.state_at(t) };
                if observed != s {
                    return false;
                }
            }
            for &(s0, s1, s) in &ev.intervals {
                if traj.state_at(s0) != s || traj.state_before(s1) != s {
                    return false;
                }
                if traj.transitions.iter().any(|&(tau, _)| tau > s0 && tau < s1) {
                    return false;
                }
            }
        }
        true
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("evidence serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrajectoryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
