//! Spectral analysis of recorded p-field activity.

use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::drive::ProbabilityFrame;
use crate::error::{OwmError, Result};
use crate::gating::Session;
use crate::lattice::LatticeState;

/// Snapshots of `p`, each row-major `G * G`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecording {
    pub grid_size: usize,
    pub sample_dt: f64,
    pub samples: Vec<Vec<f64>>,
}

impl FieldRecording {
    pub fn new(grid_size: usize, sample_dt: f64) -> Self {
        Self {
            grid_size,
            sample_dt,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, snapshot: &[f64]) -> Result<()> {
        let cells = self.grid_size * self.grid_size;
        if snapshot.len() != cells {
            return Err(OwmError::Shape {
                what: "snapshot",
                expected: cells,
                actual: snapshot.len(),
            });
        }
        self.samples.push(snapshot.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time series of one cell.
    pub fn series(&self, cell: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[cell]).collect()
    }
}

/// Step observer that keeps every `n`-th p-field.
#[derive(Debug, Clone)]
pub struct FieldRecorder {
    every_n_steps: usize,
    counter: usize,
    recording: FieldRecording,
}

impl FieldRecorder {
    pub fn new(grid_size: usize, dt: f64, every_n_steps: usize) -> Result<Self> {
        if every_n_steps == 0 {
            return Err(OwmError::config("every_n_steps must be at least 1"));
        }
        Ok(Self {
            every_n_steps,
            counter: 0,
            recording: FieldRecording::new(grid_size, dt * every_n_steps as f64),
        })
    }

    pub fn observe(&mut self, state: &LatticeState) {
        self.counter += 1;
        if self.counter.is_multiple_of(self.every_n_steps) {
            self.recording.samples.push(state.p.as_slice().to_vec());
        }
    }

    pub fn finish(self) -> FieldRecording {
        self.recording
    }
}

/// Feeds `frames` to `session`, recording `p` every `every_n_steps` steps.
/// Invalid frames abort, since a recording with holes has no uniform cadence.
pub fn record_pfield(session: &mut Session, frames: &[ProbabilityFrame], every_n_steps: usize) -> Result<FieldRecording> {
    let mut rec = FieldRecorder::new(session.map().grid_size(), session.config().map.dt, every_n_steps)?;
    for frame in frames {
        session.push_frame_observed(frame, |s| rec.observe(s))?;
    }
    Ok(rec.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Theta,
    Alpha,
    Beta,
    Gamma,
    None,
}

impl Band {
    /// theta [4,8), alpha [8,12), beta [13,30), gamma [30,50]; anything else is `None`.
    pub fn classify(hz: f64) -> Band {
        match hz {
            f if (4.0..8.0).contains(&f) => Band::Theta,
            f if (8.0..12.0).contains(&f) => Band::Alpha,
            f if (13.0..30.0).contains(&f) => Band::Beta,
            f if (30.0..=50.0).contains(&f) => Band::Gamma,
            _ => Band::None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
            Band::None => "none",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyReport {
    pub grid_size: usize,
    pub sample_dt: f64,
    pub variance: Vec<f64>,
    /// Variance level at the requested percentile; cells must exceed it.
    pub cutoff: f64,
    pub mask: Vec<bool>,
    /// `None` for masked cells.
    pub dominant: Vec<Option<f64>>,
    /// `None` for masked cells.
    pub bands: Vec<Option<Band>>,
}

impl FrequencyReport {
    pub fn retained(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.sample_dt
    }

    pub fn band_counts(&self) -> [(Band, usize); 5] {
        let mut out = [Band::Theta, Band::Alpha, Band::Beta, Band::Gamma, Band::None].map(|b| (b, 0));
        for b in self.bands.iter().flatten() {
            if let Some(slot) = out.iter_mut().find(|(k, _)| k == b) {
                slot.1 += 1;
            }
        }
        out
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

fn variance(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Dominant frequency of one series: argmax of `|FFT|` over bins `1..=n/2`
/// after mean removal, without padding.
pub fn dominant_frequency(series: &[f64], sample_dt: f64, planner: &mut FftPlanner<f64>) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(OwmError::InsufficientData { needed: 4, got: n });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let mut best = (1, f64::NEG_INFINITY);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let mag = c.norm_sqr();
        if mag > best.1 {
            best = (k, mag);
        }
    }
    Ok(best.0 as f64 / (n as f64 * sample_dt))
}

/// Per-cell dominant frequencies over cells whose variance exceeds the given
/// percentile of all cell variances.
pub fn dominant_frequency_map(rec: &FieldRecording, variance_percentile: f64) -> Result<FrequencyReport> {
    let n = rec.len();
    if n < 4 {
        return Err(OwmError::InsufficientData { needed: 4, got: n });
    }
    if !(rec.sample_dt > 0.0) {
        return Err(OwmError::config("sample_dt must be positive"));
    }
    let cells = rec.grid_size * rec.grid_size;
    let series: Vec<Vec<f64>> = (0..cells).map(|c| rec.series(c)).collect();
    let var: Vec<f64> = series.iter().map(|s| variance(s)).collect();
    let cutoff = percentile(&var, variance_percentile);
    let mask: Vec<bool> = var.iter().map(|&v| v > cutoff).collect();
    let mut planner = FftPlanner::new();
    let mut dominant = vec![None; cells];
    let mut bands = vec![None; cells];
    for c in (0..cells).filter(|&c| mask[c]) {
        let f = dominant_frequency(&series[c], rec.sample_dt, &mut planner)?;
        dominant[c] = Some(f);
        bands[c] = Some(Band::classify(f));
    }
    Ok(FrequencyReport {
        grid_size: rec.grid_size,
        sample_dt: rec.sample_dt,
        variance: var,
        cutoff,
        mask,
        dominant,
        bands,
    })
}

/// Frequency estimate from sign changes of the mean-removed series.
pub fn zero_crossing_frequency(series: &[f64], sample_dt: f64) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let crossings = series
        .windows(2)
        .filter(|w| (w[0] - mean).signum() != (w[1] - mean).signum())
        .count();
    crossings as f64 / (2.0 * (n - 1) as f64 * sample_dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn tone_recording(hz: f64, sample_dt: f64, samples: usize, grid: usize) -> FieldRecording {
        let mut rec = FieldRecording::new(grid, sample_dt);
        for k in 0..samples {
            let t = k as f64 * sample_dt;
            let mut snap = vec![0.0; grid * grid];
            snap[0] = (TAU * hz * t).sin();
            rec.push(&snap).unwrap();
        }
        rec
    }

    #[test]
    fn pure_tone_is_recovered() {
        let rec = tone_recording(20.0, 0.01, 1000, 2);
        let rep = dominant_frequency_map(&rec, 75.0).unwrap();
        assert_eq!(rep.retained(), 1);
        let f = rep.dominant[0].unwrap();
        assert!((f - 20.0).abs() <= 0.1, "{f}");
        assert_eq!(rep.bands[0], Some(Band::Beta));
        assert_eq!(rep.bands[1], None);
    }

    #[test]
    fn silent_recording_masks_everything() {
        let mut rec = FieldRecording::new(3, 0.01);
        for _ in 0..10 {
            rec.push(&[0.0; 9]).unwrap();
        }
        let rep = dominant_frequency_map(&rec, 75.0).unwrap();
        assert_eq!(rep.retained(), 0);
        assert!(rep.dominant.iter().all(Option::is_none));
    }

    #[test]
    fn too_few_samples() {
        let rec = tone_recording(1.0, 0.01, 3, 2);
        assert!(matches!(
            dominant_frequency_map(&rec, 75.0),
            Err(OwmError::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn band_edges() {
        assert_eq!(Band::classify(25.0), Band::Beta);
        assert_eq!(Band::classify(3.99), Band::None);
        assert_eq!(Band::classify(4.0), Band::Theta);
        assert_eq!(Band::classify(12.5), Band::None);
        assert_eq!(Band::classify(30.0), Band::Gamma);
        assert_eq!(Band::classify(50.0), Band::Gamma);
        assert_eq!(Band::classify(50.1), Band::None);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 75.0), 4.0);
        assert_eq!(percentile(&[0.0, 10.0], 75.0), 7.5);
    }

    #[test]
    fn nyquist_tone_stays_in_range() {
        let rec = tone_recording(49.95, 0.01, 1000, 1);
        let f = dominant_frequency(&rec.series(0), 0.01, &mut FftPlanner::new()).unwrap();
        assert!(f <= 50.0);
    }

    #[test]
    fn zero_crossings_match_tone() {
        let rec = tone_recording(7.3, 0.001, 10_000, 1);
        let f = zero_crossing_frequency(&rec.series(0), 0.001);
        assert!((f - 7.3).abs() < 0.1, "{f}");
    }

    #[test]
    fn recorder_cadence() {
        let mut r = FieldRecorder::new(2, 0.01, 100).unwrap();
        let s = LatticeState::zeros(2);
        for _ in 0..1000 {
            r.observe(&s);
        }
        let rec = r.finish();
        assert_eq!(rec.len(), 10);
        assert_eq!(rec.sample_dt, 1.0);
    }
}
