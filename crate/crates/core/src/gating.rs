//! Per-stream pipeline: frames drive the lattice, energy feeds the detector,
//! and events become forwarded intervals.

use serde::{Deserialize, Serialize};

use crate::drive::{Drive, ProbabilityFrame};
use crate::energy_detector::{total_energy, DetectorConfig, DriftDetector, DriftEvent, EnergyTrace, TraceRow};
use crate::error::{OwmError, Result};
use crate::frequency_map::{FrequencyMap, MapConfig};
use crate::grid::Field;
use crate::lattice::{Boundary, Lattice, LatticeConfig, LatticeState, UpdateScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    #[serde(flatten)]
    pub map: MapConfig,
    #[serde(flatten)]
    pub detector: DetectorConfig,
    pub window_seconds: f64,
    pub stride_seconds: f64,
    pub boundary: Boundary,
    pub update_scheme: UpdateScheme,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            map: MapConfig::default(),
            detector: DetectorConfig::default(),
            window_seconds: 4.0,
            stride_seconds: 1.0,
            boundary: Boundary::Periodic,
            update_scheme: UpdateScheme::Staggered,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.detector.validate()?;
        if !(self.stride_seconds > 0.0 && self.window_seconds >= self.stride_seconds) {
            return Err(OwmError::config("need window_seconds >= stride_seconds > 0"));
        }
        self.steps_per_frame().map(|_| ())
    }

    /// Lattice steps per frame: `stride / dt`, which must be a whole number.
    pub fn steps_per_frame(&self) -> Result<usize> {
        let ratio = self.stride_seconds / self.map.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(OwmError::config(format!(
                "stride_seconds ({}) must be a whole multiple of dt ({})",
                self.stride_seconds, self.map.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Forwarded interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub start: f64,
    pub end: f64,
    pub event: DriftEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub total_duration: f64,
    pub forwarded_duration: f64,
    pub time_sent_ratio: f64,
    pub event_count: usize,
    pub frames_processed: usize,
}

/// Length of the union of `[start, end)` intervals after clipping to `[0, total]`.
pub fn union_length(intervals: &[(f64, f64)], total: f64) -> f64 {
    let mut clipped: Vec<(f64, f64)> = intervals
        .iter()
        .map(|&(s, e)| (s.max(0.0), e.min(total)))
        .filter(|(s, e)| e > s)
        .collect();
    clipped.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut length = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (s, e) in clipped {
        current = match current {
            Some((cs, ce)) if s <= ce => Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                length += ce - cs;
                Some((s, e))
            }
            None => Some((s, e)),
        };
    }
    if let Some((cs, ce)) = current {
        length += ce - cs;
    }
    length
}

/// Forwarded interval for an event at `event_time`: the `window` seconds
/// ending there, clipped at zero. `None` when the clipped interval is empty.
pub fn gate_interval(event_time: f64, window: f64) -> Option<(f64, f64)> {
    let start = (event_time - window).max(0.0);
    (event_time > start).then_some((start, event_time))
}

/// Union-of-intervals metrics. A non-positive `total` yields a zero ratio.
pub fn compute_metrics(decisions: &[GateDecision], total: f64, frames_processed: usize) -> SessionMetrics {
    let intervals: Vec<(f64, f64)> = decisions.iter().map(|d| (d.start, d.end)).collect();
    let forwarded = if total > 0.0 { union_length(&intervals, total) } else { 0.0 };
    SessionMetrics {
        total_duration: total.max(0.0),
        forwarded_duration: forwarded,
        time_sent_ratio: if total > 0.0 { (forwarded / total).clamp(0.0, 1.0) } else { 0.0 },
        event_count: decisions.len(),
        frames_processed,
    }
}

/// Per-frame output of a session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResult {
    pub row: TraceRow,
    pub event: Option<DriftEvent>,
    pub decision: Option<GateDecision>,
}

/// One stream's hidden state and detector.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    map: FrequencyMap,
    drive: Drive,
    lattice: Lattice,
    state: LatticeState,
    detector: DriftDetector,
    source: Field,
    last_time: Option<f64>,
    frames_seen: usize,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let map = FrequencyMap::build(&cfg.map)?;
        Self::with_map(cfg, map)
    }

    /// Reuses an already built map, which must match `cfg.map`.
    pub fn with_map(cfg: SessionConfig, map: FrequencyMap) -> Result<Self> {
        cfg.validate()?;
        if map.config() != &cfg.map {
            return Err(OwmError::config("frequency map was built from a different configuration"));
        }
        let drive = Drive::new(&map, cfg.steps_per_frame()?)?;
        let lattice = Lattice::new(
            LatticeConfig::from_map(&map)
                .with_boundary(cfg.boundary)
                .with_scheme(cfg.update_scheme),
        )?;
        let g = map.grid_size();
        Ok(Self {
            detector: DriftDetector::new(cfg.detector)?,
            state: lattice.zero_state(),
            source: Field::zeros(g),
            lattice,
            drive,
            map,
            cfg,
            last_time: None,
            frames_seen: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn map(&self) -> &FrequencyMap {
        &self.map
    }

    pub fn state(&self) -> &LatticeState {
        &self.state
    }

    pub fn energy(&self) -> f64 {
        total_energy(&self.state)
    }

    /// Frames offered so far, including rejected ones.
    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn last_time(&self) -> Option<f64> {
        self.last_time
    }

    pub fn push_frame(&mut self, frame: &ProbabilityFrame) -> Result<FrameResult> {
        self.push_frame_observed(frame, |_| {})
    }

    /// Processes one frame, calling `observe` after every lattice step.
    ///
    /// Out-of-order timestamps are a [`OwmError::NonMonotoneTime`]; invalid
    /// probabilities are rejected without touching the state.
    pub fn push_frame_observed(
        &mut self,
        frame: &ProbabilityFrame,
        mut observe: impl FnMut(&LatticeState),
    ) -> Result<FrameResult> {
        let index = self.frames_seen;
        if let Some(prev) = self.last_time {
            if !(frame.t > prev) {
                return Err(OwmError::NonMonotoneTime {
                    previous: prev,
                    current: frame.t,
                });
            }
        }
        if frame.t.is_finite() {
            self.last_time = Some(frame.t);
        }
        self.frames_seen += 1;
        frame.validate(self.map.num_categories(), index)?;

        for _ in 0..self.drive.steps_per_frame {
            self.drive
                .fill_source(&frame.probs, self.state.time_steps, &mut self.source)?;
            self.lattice.step(&mut self.state, &self.source)?;
            observe(&self.state);
        }
        let energy = total_energy(&self.state);
        let (metric, outcome) = self
            .detector
            .observe_energy(frame.t, energy, self.cfg.stride_seconds)?;
        let decision = outcome.event.and_then(|event| {
            gate_interval(event.frame_time, self.cfg.window_seconds).map(|(start, end)| GateDecision {
                start,
                end,
                event,
            })
        });
        Ok(FrameResult {
            row: TraceRow {
                frame_time: frame.t,
                energy,
                metric,
                threshold: outcome.threshold,
                candidate: outcome.candidate,
                event: outcome.event.is_some(),
            },
            event: outcome.event,
            decision,
        })
    }

    /// Stream length used for metrics: last timestamp plus one stride.
    pub fn total_duration(&self) -> f64 {
        self.last_time.map_or(0.0, |t| t + self.cfg.stride_seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFrame {
    pub index: usize,
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub events: Vec<DriftEvent>,
    pub decisions: Vec<GateDecision>,
    pub metrics: SessionMetrics,
    pub trace: EnergyTrace,
    pub skipped: Vec<SkippedFrame>,
}

/// Errors confined to one frame, which a stream skips and reports.
pub fn is_frame_error(e: &OwmError) -> bool {
    matches!(
        e,
        OwmError::ProbabilityRange { .. } | OwmError::FrameLength { .. } | OwmError::Contract(_)
    )
}

/// Runs a whole stream through a fresh session. Invalid frames are skipped and
/// reported; ordering violations and numerical failures abort.
pub fn process_stream<'a>(
    frames: impl IntoIterator<Item = &'a ProbabilityFrame>,
    cfg: &SessionConfig,
) -> Result<StreamReport> {
    let mut session = Session::new(cfg.clone())?;
    run_session(&mut session, frames)
}

/// Like [`process_stream`] but on an existing session.
pub fn run_session<'a>(
    session: &mut Session,
    frames: impl IntoIterator<Item = &'a ProbabilityFrame>,
) -> Result<StreamReport> {
    let mut events = Vec::new();
    let mut decisions = Vec::new();
    let mut trace = EnergyTrace::default();
    let mut skipped = Vec::new();
    for frame in frames {
        let index = session.frames_seen();
        match session.push_frame(frame) {
            Ok(r) => {
                trace.push(r.row);
                events.extend(r.event);
                decisions.extend(r.decision);
            }
            Err(e) if is_frame_error(&e) => skipped.push(SkippedFrame {
                index,
                t: frame.t,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let metrics = compute_metrics(&decisions, session.total_duration(), trace.len());
    Ok(StreamReport {
        events,
        decisions,
        metrics,
        trace,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(start: f64, end: f64) -> GateDecision {
        GateDecision {
            start,
            end,
            event: DriftEvent {
                frame_time: end,
                frame_index: 0,
                metric: 1.0,
                threshold: 0.0,
            },
        }
    }

    #[test]
    fn metrics_examples() {
        let m = compute_metrics(&[decision(0.0, 4.0), decision(2.0, 6.0)], 10.0, 10);
        assert_eq!(m.forwarded_duration, 6.0);
        assert_eq!(m.time_sent_ratio, 0.6);
        assert_eq!(m.event_count, 2);
        assert_eq!(compute_metrics(&[], 10.0, 10).time_sent_ratio, 0.0);
        let all = compute_metrics(&[decision(0.0, 7.0), decision(5.0, 10.0)], 10.0, 10);
        assert_eq!(all.time_sent_ratio, 1.0);
    }

    #[test]
    fn union_clips_and_merges() {
        assert_eq!(union_length(&[(-3.0, 1.0), (8.0, 15.0)], 10.0), 3.0);
        assert_eq!(union_length(&[(1.0, 2.0), (2.0, 3.0), (5.0, 6.0)], 10.0), 3.0);
        assert_eq!(union_length(&[(1.0, 5.0), (2.0, 3.0)], 10.0), 4.0);
    }

    #[test]
    fn empty_stream() {
        let r = process_stream(&[], &SessionConfig::default()).unwrap();
        assert!(r.events.is_empty() && r.decisions.is_empty());
        assert_eq!(r.metrics.time_sent_ratio, 0.0);
        assert_eq!(r.metrics.frames_processed, 0);
    }

    #[test]
    fn steps_per_frame_from_stride() {
        assert_eq!(SessionConfig::default().steps_per_frame().unwrap(), 100);
        let bad = SessionConfig {
            stride_seconds: 0.015,
            window_seconds: 4.0,
            ..SessionConfig::default()
        };
        assert!(bad.validate().is_err());
        let short_window = SessionConfig {
            window_seconds: 0.5,
            ..SessionConfig::default()
        };
        assert!(short_window.validate().is_err());
    }

    #[test]
    fn invalid_frames_are_skipped_and_order_is_enforced() {
        let cfg = SessionConfig::default();
        let good = |t: f64| ProbabilityFrame::new(t, vec![0.1; 527]);
        let mut bad = good(1.0);
        bad.probs[3] = 1.5;
        let frames = vec![good(0.0), bad, good(2.0)];
        let r = process_stream(&frames, &cfg).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].index, 1);
        assert_eq!(r.trace.len(), 2);
        assert_eq!(r.metrics.total_duration, 3.0);

        let frames = vec![good(0.0), good(2.0), good(1.0)];
        assert!(matches!(
            process_stream(&frames, &cfg),
            Err(OwmError::NonMonotoneTime { .. })
        ));
    }

    #[test]
    fn decision_window_ends_at_event() {
        assert_eq!(gate_interval(49.0, 4.0), Some((45.0, 49.0)));
        assert_eq!(gate_interval(2.0, 4.0), Some((0.0, 2.0)));
        assert_eq!(gate_interval(0.0, 4.0), None);
    }
}
