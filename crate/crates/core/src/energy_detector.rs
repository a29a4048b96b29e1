//! Lattice energy, drift metric, adaptive threshold and the persistence /
//! cooldown event filter.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{OwmError, Result};
use crate::lattice::LatticeState;

/// `E = 1/2 * sum(p^2 + vx^2 + vy^2)`.
pub fn total_energy(state: &LatticeState) -> f64 {
    let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    0.5 * (sq(state.p.as_slice()) + sq(state.vx.as_slice()) + sq(state.vy.as_slice()))
}

/// Absolute energy change per second between consecutive frames; zero on the
/// first frame.
pub fn drift_metric(prev_energy: Option<f64>, curr_energy: f64, frame_dt: f64) -> f64 {
    match prev_energy {
        Some(prev) => (curr_energy - prev).abs() / frame_dt,
        None => 0.0,
    }
}

/// Threshold over a window of metric values, oldest first.
pub fn threshold_of(values: &[f64], alpha: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.1
    };
    if n < 5 {
        return mean + 1.5 * std;
    }
    let trend = if n >= 3 { least_squares_slope(values).abs() / (std + 1e-8) } else { 0.0 };
    mean + 2.0 * std * (1.0 + alpha * trend)
}

/// Slope of the least-squares line through `(i, values[i])`.
pub fn least_squares_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Rolling window of the last `W` metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveThreshold {
    window: usize,
    alpha: f64,
    buffer: VecDeque<f64>,
}

impl AdaptiveThreshold {
    pub fn new(window: usize, alpha: f64) -> Self {
        Self {
            window: window.max(1),
            alpha,
            buffer: VecDeque::with_capacity(window.max(1)),
        }
    }

    /// Pushes `value` (evicting beyond `W`) and returns the updated threshold.
    pub fn update(&mut self, value: f64) -> f64 {
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(value);
        threshold_of(self.buffer.make_contiguous(), self.alpha)
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.buffer.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// `W`.
    pub threshold_window: usize,
    pub trend_alpha: f64,
    /// `P`.
    pub persistence: usize,
    /// Minimum frame gap between events (exclusive).
    pub cooldown: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold_window: 20,
            trend_alpha: 0.2,
            persistence: 3,
            cooldown: 3,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_window == 0 || self.persistence == 0 {
            return Err(OwmError::config("threshold_window and persistence must be at least 1"));
        }
        if !(self.trend_alpha.is_finite() && self.trend_alpha >= 0.0) {
            return Err(OwmError::config("trend_alpha must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub frame_time: f64,
    /// 0-based index of the confirming frame within the processed stream.
    pub frame_index: usize,
    pub metric: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub frame_time: f64,
    pub energy: f64,
    pub metric: f64,
    pub threshold: f64,
    pub candidate: bool,
    pub event: bool,
}

/// Append-only per-frame record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub rows: Vec<TraceRow>,
}

impl EnergyTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Outcome of feeding one frame to the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub candidate: bool,
    pub threshold: f64,
    pub event: Option<DriftEvent>,
}

/// Persistence vote over the last `P` candidates plus the event cooldown.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceFilter {
    persistence: usize,
    cooldown: usize,
    buffer: VecDeque<bool>,
    last_event_frame: Option<usize>,
}

impl PersistenceFilter {
    pub fn new(persistence: usize, cooldown: usize) -> Self {
        let persistence = persistence.max(1);
        Self {
            persistence,
            cooldown,
            buffer: VecDeque::with_capacity(persistence),
            last_event_frame: None,
        }
    }

    /// Records the candidate flag of frame `frame` and reports whether an
    /// event fires there. Firing clears the buffer.
    pub fn push(&mut self, frame: usize, candidate: bool) -> bool {
        if self.buffer.len() == self.persistence {
            self.buffer.pop_front();
        }
        self.buffer.push_back(candidate);
        if self.buffer.len() < self.persistence {
            return false;
        }
        let hits = self.buffer.iter().filter(|&&c| c).count();
        let ratio = hits as f64 / self.persistence as f64;
        let cooled = self
            .last_event_frame
            .is_none_or(|last| frame.saturating_sub(last) > self.cooldown);
        if ratio >= 0.5 && cooled {
            self.last_event_frame = Some(frame);
            self.buffer.clear();
            true
        } else {
            false
        }
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn last_event_frame(&self) -> Option<usize> {
        self.last_event_frame
    }
}

#[derive(Debug, Clone)]
pub struct DriftDetector {
    cfg: DetectorConfig,
    threshold: AdaptiveThreshold,
    filter: PersistenceFilter,
    prev_energy: Option<f64>,
    last_time: Option<f64>,
    frames_seen: usize,
}

impl DriftDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            threshold: AdaptiveThreshold::new(cfg.threshold_window, cfg.trend_alpha),
            filter: PersistenceFilter::new(cfg.persistence, cfg.cooldown),
            prev_energy: None,
            last_time: None,
            frames_seen: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Feeds one metric value; the frame index is the count of frames seen so far.
    pub fn detect_frame(&mut self, frame_time: f64, metric: f64) -> Result<FrameOutcome> {
        if let Some(prev) = self.last_time {
            if !(frame_time > prev) {
                return Err(OwmError::NonMonotoneTime {
                    previous: prev,
                    current: frame_time,
                });
            }
        }
        self.last_time = Some(frame_time);
        let frame = self.frames_seen;
        self.frames_seen += 1;

        let threshold = self.threshold.update(metric);
        let candidate = metric > threshold;
        let event = self.filter.push(frame, candidate).then_some(DriftEvent {
            frame_time,
            frame_index: frame,
            metric,
            threshold,
        });
        Ok(FrameOutcome {
            candidate,
            threshold,
            event,
        })
    }

    /// Derives the metric from a new energy sample, then runs [`Self::detect_frame`].
    pub fn observe_energy(&mut self, frame_time: f64, energy: f64, frame_dt: f64) -> Result<(f64, FrameOutcome)> {
        let metric = drift_metric(self.prev_energy, energy, frame_dt);
        let outcome = self.detect_frame(frame_time, metric)?;
        self.prev_energy = Some(energy);
        Ok((metric, outcome))
    }
}

/// Runs the detector over a metric sequence at 1 s spacing and returns the
/// frame indices of emitted events.
pub fn event_indices(metrics: &[f64], cfg: DetectorConfig) -> Result<Vec<usize>> {
    let mut det = DriftDetector::new(cfg)?;
    let mut out = Vec::new();
    for (i, &m) in metrics.iter().enumerate() {
        if let Some(e) = det.detect_frame(i as f64, m)?.event {
            out.push(e.frame_index);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;

    #[test]
    fn energy_examples() {
        assert_eq!(total_energy(&LatticeState::zeros(4)), 0.0);
        let mut s = LatticeState::zeros(2);
        s.p = Field::filled(2, 1.0);
        assert_eq!(total_energy(&s), 2.0);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(drift_metric(Some(2.0), 5.0, 1.0), 3.0);
        assert_eq!(drift_metric(Some(4.0), 4.0, 1.0), 0.0);
        assert_eq!(drift_metric(None, 4.0, 1.0), 0.0);
        assert_eq!(drift_metric(Some(5.0), 2.0, 0.5), 6.0);
    }

    #[test]
    fn threshold_examples() {
        let mut t = AdaptiveThreshold::new(20, 0.2);
        assert!((t.update(1.0) - 1.15).abs() < 1e-15);

        let mut t = AdaptiveThreshold::new(20, 0.2);
        let mut last = 0.0;
        for _ in 0..5 {
            last = t.update(2.0);
        }
        assert_eq!(last, 2.0);

        assert_eq!(threshold_of(&[0.0; 5], 0.2), 0.0);
    }

    #[test]
    fn threshold_window_is_bounded() {
        let mut t = AdaptiveThreshold::new(4, 0.2);
        for v in 0..10 {
            t.update(v as f64);
        }
        assert_eq!(t.values().collect::<Vec<_>>(), vec![6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn slope_of_line() {
        assert!((least_squares_slope(&[1.0, 3.0, 5.0, 7.0]) - 2.0).abs() < 1e-15);
        assert_eq!(least_squares_slope(&[4.0]), 0.0);
    }

    fn filter_events(candidates: &[u8]) -> Vec<usize> {
        let mut f = PersistenceFilter::new(3, 3);
        (0..candidates.len()).filter(|&i| f.push(i, candidates[i] == 1)).collect()
    }

    #[test]
    fn persistence_examples() {
        assert_eq!(filter_events(&[1, 1, 1]), vec![2]);
        assert_eq!(filter_events(&[0, 0, 1]), Vec::<usize>::new());
        assert_eq!(filter_events(&[0, 0, 1, 0, 0, 1, 0]), Vec::<usize>::new());
        assert_eq!(filter_events(&[1, 0, 1]), vec![2]);
    }

    #[test]
    fn cooldown_and_refill() {
        let mut f = PersistenceFilter::new(3, 3);
        assert!(!f.push(0, true) && !f.push(1, true) && f.push(2, true));
        assert_eq!(f.buffered(), 0);
        assert_eq!(filter_events(&[1; 14]), vec![2, 6, 10]);
    }

    /// After a run of zero metrics, each new spike that dwarfs all earlier
    /// values is a candidate and a zero never is.
    #[test]
    fn detector_candidates_follow_spikes() {
        let mut det = DriftDetector::new(DetectorConfig::default()).unwrap();
        let mut t = 0.0;
        for _ in 0..10 {
            let out = det.detect_frame(t, 0.0).unwrap();
            assert!(!out.candidate && out.event.is_none());
            t += 1.0;
        }
        let mut big = 1.0;
        let mut events = Vec::new();
        for _ in 0..8 {
            big *= 1e6;
            let out = det.detect_frame(t, big).unwrap();
            assert!(out.candidate);
            if let Some(e) = out.event {
                assert!(e.metric > e.threshold);
                events.push(e.frame_index);
            }
            t += 1.0;
        }
        // the buffer already holds a zero from the warm-up, so two spikes suffice
        assert_eq!(events, vec![11, 15]);
    }

    #[test]
    fn rejects_non_monotone_time() {
        let mut det = DriftDetector::new(DetectorConfig::default()).unwrap();
        det.detect_frame(1.0, 0.0).unwrap();
        assert!(matches!(
            det.detect_frame(1.0, 0.0),
            Err(OwmError::NonMonotoneTime { .. })
        ));
    }

    #[test]
    fn observe_energy_uses_first_difference() {
        let mut det = DriftDetector::new(DetectorConfig::default()).unwrap();
        let (m0, _) = det.observe_energy(0.0, 3.0, 1.0).unwrap();
        let (m1, _) = det.observe_energy(1.0, 7.5, 1.0).unwrap();
        assert_eq!((m0, m1), (0.0, 4.5));
    }
}
