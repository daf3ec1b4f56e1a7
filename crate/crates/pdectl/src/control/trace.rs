//! Ordered log of predictor, force-estimator and solver invocations emitted
//! by an execution scheme, with the closed-form counting laws it must obey.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    /// Midpoint prediction over `scale` steps, producing the observation at
    /// time index `time`.
    Op { scale: usize, time: usize },
    /// Force estimation for step `time`.
    Cfe { time: usize },
    /// Solver advance from `time` to `time + 1`.
    Solver { time: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemeTrace {
    events: Vec<TraceEvent>,
}

impl SchemeTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_op(&mut self, scale: usize, time: usize) {
        self.events.push(TraceEvent::Op { scale, time });
    }

    pub fn push_cfe(&mut self, time: usize) {
        self.events.push(TraceEvent::Cfe { time });
    }

    pub fn push_solver(&mut self, time: usize) {
        self.events.push(TraceEvent::Solver { time });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    /// (predictor, estimator, solver) event totals.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for e in &self.events {
            match e {
                TraceEvent::Op { .. } => c.0 += 1,
                TraceEvent::Cfe { .. } => c.1 += 1,
                TraceEvent::Solver { .. } => c.2 += 1,
            }
        }
        c
    }

    /// How many predictor calls ran at each scale.
    pub fn op_scale_counts(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut m = std::collections::BTreeMap::new();
        for e in &self.events {
            if let TraceEvent::Op { scale, .. } = e {
                *m.entry(*scale).or_insert(0) += 1;
            }
        }
        m
    }

    /// Structural validity: solver times strictly increasing from zero, and
    /// every estimator call immediately followed by its solver step.
    pub fn validate(&self) -> Result<()> {
        let mut expected_solver = 0usize;
        let mut i = 0;
        while i < self.events.len() {
            match self.events[i] {
                TraceEvent::Cfe { time } => {
                    if time != expected_solver {
                        return Err(Error::Config(format!(
                            "estimator at time {time}, expected {expected_solver}"
                        )));
                    }
                    match self.events.get(i + 1) {
                        Some(TraceEvent::Solver { time: t }) if *t == time => {}
                        other => {
                            return Err(Error::Config(format!(
                                "estimator at {time} not followed by its solver step: {other:?}"
                            )))
                        }
                    }
                    expected_solver += 1;
                    i += 2;
                }
                TraceEvent::Solver { time } => {
                    return Err(Error::Config(format!(
                        "solver step {time} without estimator"
                    )));
                }
                TraceEvent::Op { .. } => i += 1,
            }
        }
        Ok(())
    }

    /// Index of the last solver event before position `at`, if any.
    pub fn last_solver_before(&self, at: usize) -> Option<usize> {
        self.events[..at]
            .iter()
            .rev()
            .find_map(|e| match e {
                TraceEvent::Solver { time } => Some(*time),
                _ => None,
            })
    }

    /// Line-oriented export, one `EVENT kind time scale` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match e {
                TraceEvent::Op { scale, time } => {
                    writeln!(out, "EVENT OP {time} {scale}").unwrap()
                }
                TraceEvent::Cfe { time } => writeln!(out, "EVENT CFE {time} 0").unwrap(),
                TraceEvent::Solver { time } => writeln!(out, "EVENT SOLVER {time} 0").unwrap(),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut trace = Self::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "EVENT" {
                return Err(Error::Format(format!("bad trace line {}: {line}", ln + 1)));
            }
            let time: usize = parts[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad time on line {}", ln + 1)))?;
            let scale: usize = parts[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad scale on line {}", ln + 1)))?;
            match parts[1] {
                "OP" => trace.push_op(scale, time),
                "CFE" => trace.push_cfe(time),
                "SOLVER" => trace.push_solver(time),
                other => return Err(Error::Format(format!("unknown event kind {other}"))),
            }
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut t = SchemeTrace::new();
        t.push_op(8, 4);
        t.push_cfe(0);
        t.push_solver(0);
        let text = t.to_text();
        assert_eq!(text, "EVENT OP 4 8\nEVENT CFE 0 0\nEVENT SOLVER 0 0\n");
        assert_eq!(SchemeTrace::from_text(&text).unwrap(), t);
    }

    #[test]
    fn validation_catches_orphan_solver_and_order() {
        let mut t = SchemeTrace::new();
        t.push_solver(0);
        assert!(t.validate().is_err());

        let mut t = SchemeTrace::new();
        t.push_cfe(1);
        t.push_solver(1);
        assert!(t.validate().is_err(), "must start at time zero");

        let mut t = SchemeTrace::new();
        t.push_cfe(0);
        t.push_solver(0);
        t.push_op(2, 1);
        t.push_cfe(1);
        t.push_solver(1);
        assert!(t.validate().is_ok());
    }
}
