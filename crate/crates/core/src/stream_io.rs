//! Frame ingestion, synthetic scenarios, and result serialization.
//!
//! Frames travel as line-delimited JSON objects `{"t": <seconds>, "probs": [...]}`.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::drive::ProbabilityFrame;
use crate::energy_detector::{DriftEvent, EnergyTrace};
use crate::error::{OwmError, Result};
use crate::gating::{GateDecision, SessionMetrics, SkippedFrame};
use crate::grid::Field;
use crate::spectral::FrequencyReport;

/// Streaming frame parser. Checks JSON structure, vector length and time
/// order; probability ranges are left to the consumer so a session can skip
/// and report bad frames without losing the rest of the stream.
pub struct FrameReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    expected_len: Option<usize>,
    last_t: Option<f64>,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(reader: R, expected_len: Option<usize>) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            expected_len,
            last_t: None,
        }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<ProbabilityFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

impl<R> FrameReader<R> {
    fn parse(&mut self, line: &str) -> Result<ProbabilityFrame> {
        let line_no = self.line_no;
        let err = |message: String| OwmError::Parse { line: line_no, message };
        let frame: ProbabilityFrame = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if let Some(n) = self.expected_len {
            if frame.probs.len() != n {
                return Err(err(format!("expected {n} probabilities, got {}", frame.probs.len())));
            }
        }
        if !frame.t.is_finite() {
            return Err(err("timestamp is not finite".into()));
        }
        if let Some(prev) = self.last_t {
            if !(frame.t > prev) {
                return Err(err(format!("timestamp {} does not follow {prev}", frame.t)));
            }
        }
        self.last_t = Some(frame.t);
        Ok(frame)
    }
}

/// Reads a whole frame stream; the first structural error is fatal.
pub fn read_frames(reader: impl BufRead, expected_len: Option<usize>) -> Result<Vec<ProbabilityFrame>> {
    FrameReader::new(reader, expected_len).collect()
}

pub fn write_frames<'a>(mut w: impl Write, frames: impl IntoIterator<Item = &'a ProbabilityFrame>) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut w, f).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Stationary,
    StepDrift,
    SubcategorySwap,
    TransientPause,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Stationary,
        ScenarioKind::StepDrift,
        ScenarioKind::SubcategorySwap,
        ScenarioKind::TransientPause,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Stationary => "stationary",
            ScenarioKind::StepDrift => "step_drift",
            ScenarioKind::SubcategorySwap => "subcategory_swap",
            ScenarioKind::TransientPause => "transient_pause",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = OwmError;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| OwmError::Config(format!("unknown scenario kind '{s}'")))
    }
}

/// A labeled synthetic probability stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub kind: ScenarioKind,
    pub num_categories: usize,
    pub duration_frames: usize,
    pub change_frame: usize,
    /// `(category, weight)` pairs active before the change.
    pub background: Vec<(usize, f64)>,
    /// `(category, weight)` pairs introduced by the change.
    pub foreground: Vec<(usize, f64)>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub stride_seconds: f64,
    /// Pause start, in frames after `change_frame` (pause scenarios only).
    pub pause_offset: usize,
    /// Pause length in frames, at most 2.
    pub pause_frames: usize,
}

impl SyntheticScenario {
    /// Reference configuration: 60 one-second frames, change at frame 30,
    /// 0.8 mass on category 0 before and on category 251 after, noise 0.01.
    pub fn reference(kind: ScenarioKind) -> Self {
        let foreground = match kind {
            ScenarioKind::SubcategorySwap => vec![(251, 0.8), (343, 0.1)],
            _ => vec![(251, 0.8)],
        };
        Self {
            kind,
            num_categories: 527,
            duration_frames: 60,
            change_frame: 30,
            background: vec![(0, 0.8)],
            foreground,
            noise_sigma: 0.01,
            seed: 0,
            stride_seconds: 1.0,
            pause_offset: 15,
            pause_frames: 2,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_frames(mut self, duration_frames: usize) -> Self {
        self.duration_frames = duration_frames;
        self
    }

    /// Adapts the scenario to another stream length and category count: the
    /// change moves to the middle, the pause to the middle of the second half,
    /// and foreground categories wrap into range without landing on a
    /// background category. The reference scenario is a fixed point.
    pub fn fit(mut self, num_categories: usize, duration_frames: usize) -> Self {
        self.duration_frames = duration_frames;
        self.change_frame = duration_frames / 2;
        self.pause_offset = self.pause_offset.min((duration_frames - self.change_frame) / 2);
        if num_categories != self.num_categories && num_categories > 0 {
            let taken: Vec<usize> = self.background.iter().map(|&(i, _)| i % num_categories).collect();
            for (i, _) in self.background.iter_mut() {
                *i %= num_categories;
            }
            let mut used = taken;
            for (i, _) in self.foreground.iter_mut() {
                let mut j = *i % num_categories;
                for _ in 0..num_categories {
                    if !used.contains(&j) {
                        break;
                    }
                    j = (j + 1) % num_categories;
                }
                used.push(j);
                *i = j;
            }
        }
        self.num_categories = num_categories;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OwmError::Config(m));
        if self.kind != ScenarioKind::Stationary && self.change_frame >= self.duration_frames {
            return bad(format!(
                "change_frame {} must be below duration_frames {}",
                self.change_frame, self.duration_frames
            ));
        }
        for &(i, w) in self.background.iter().chain(&self.foreground) {
            if i >= self.num_categories {
                return bad(format!("category {i} out of range for {} categories", self.num_categories));
            }
            if !(0.0..=1.0).contains(&w) {
                return bad(format!("weight {w} for category {i} outside [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative".into());
        }
        if !(self.stride_seconds > 0.0) {
            return bad("stride_seconds must be positive".into());
        }
        if self.kind == ScenarioKind::SubcategorySwap && self.foreground.len() < 2 {
            return bad("subcategory_swap needs two foreground categories".into());
        }
        if self.kind == ScenarioKind::TransientPause && !(1..=2).contains(&self.pause_frames) {
            return bad("transient_pause needs a pause of 1 or 2 frames".into());
        }
        Ok(())
    }

    /// Frames `[start, end)` of the pause, if any.
    pub fn pause_range(&self) -> Option<(usize, usize)> {
        (self.kind == ScenarioKind::TransientPause).then(|| {
            let start = self.change_frame + self.pause_offset;
            (start, (start + self.pause_frames).min(self.duration_frames))
        })
    }

    /// Noise-free probabilities of frame `k`.
    pub fn clean_frame(&self, k: usize) -> Vec<f64> {
        let mut probs = vec![0.0; self.num_categories];
        let set = |probs: &mut Vec<f64>, pairs: &[(usize, f64)]| {
            for &(i, w) in pairs {
                probs[i] = w;
            }
        };
        let after = k >= self.change_frame;
        match self.kind {
            ScenarioKind::Stationary => set(&mut probs, &self.background),
            ScenarioKind::StepDrift => set(&mut probs, if after { &self.foreground } else { &self.background }),
            ScenarioKind::TransientPause => {
                let paused = self.pause_range().is_some_and(|(s, e)| (s..e).contains(&k));
                if !after {
                    set(&mut probs, &self.background);
                } else if !paused {
                    set(&mut probs, &self.foreground);
                }
            }
            ScenarioKind::SubcategorySwap => {
                set(&mut probs, &self.background);
                let mut fg = self.foreground.clone();
                if after {
                    let (w0, w1) = (fg[0].1, fg[1].1);
                    fg[0].1 = w1;
                    fg[1].1 = w0;
                }
                set(&mut probs, &fg);
            }
        }
        probs
    }

    /// Ground-truth annotations for the sidecar file.
    pub fn truth(&self) -> ScenarioTruth {
        let change = (self.kind != ScenarioKind::Stationary).then_some(self.change_frame);
        ScenarioTruth {
            kind: self.kind,
            duration_frames: self.duration_frames,
            change_frame: change,
            change_time: change.map(|c| c as f64 * self.stride_seconds),
            pause: self.pause_range(),
            scenario: self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub kind: ScenarioKind,
    pub duration_frames: usize,
    pub change_frame: Option<usize>,
    pub change_time: Option<f64>,
    pub pause: Option<(usize, usize)>,
    pub scenario: SyntheticScenario,
}

/// Deterministic frames for `s`. Noise is drawn for every category of every
/// frame in a fixed order, so scenarios that differ only in kind share noise.
pub fn generate_scenario(s: &SyntheticScenario) -> Result<Vec<ProbabilityFrame>> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let normal = Normal::new(0.0, s.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| OwmError::Config(e.to_string()))?;
    let mut frames = Vec::with_capacity(s.duration_frames);
    for k in 0..s.duration_frames {
        let mut probs = s.clean_frame(k);
        for p in probs.iter_mut() {
            let noise = normal.sample(&mut rng);
            if s.noise_sigma > 0.0 {
                *p = (*p + noise).clamp(0.0, 1.0);
            }
        }
        frames.push(ProbabilityFrame::new(k as f64 * s.stride_seconds, probs));
    }
    Ok(frames)
}

/// `1/2 * sum |a - b|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub frame_index: usize,
    pub metric: f64,
    pub threshold: f64,
}

impl From<&DriftEvent> for EventRecord {
    fn from(e: &DriftEvent) -> Self {
        Self {
            t: e.frame_time,
            frame_index: e.frame_index,
            metric: e.metric,
            threshold: e.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub start: f64,
    pub end: f64,
    pub t: f64,
}

impl From<&GateDecision> for DecisionRecord {
    fn from(d: &GateDecision) -> Self {
        Self {
            start: d.start,
            end: d.end,
            t: d.event.frame_time,
        }
    }
}

fn write_json_line(w: &mut (impl Write + ?Sized), value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_event(w: &mut (impl Write + ?Sized), e: &DriftEvent) -> Result<()> {
    write_json_line(w, &EventRecord::from(e))
}

pub fn write_events<'a>(mut w: impl Write, events: impl IntoIterator<Item = &'a DriftEvent>) -> Result<()> {
    for e in events {
        write_event(&mut w, e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(reader: impl BufRead) -> Result<Vec<EventRecord>> {
    read_json_lines(reader)
}

pub fn write_decision(w: &mut (impl Write + ?Sized), d: &GateDecision) -> Result<()> {
    write_json_line(w, &DecisionRecord::from(d))
}

pub fn write_decisions<'a>(mut w: impl Write, decisions: impl IntoIterator<Item = &'a GateDecision>) -> Result<()> {
    for d in decisions {
        write_decision(&mut w, d)?;
    }
    w.flush()?;
    Ok(())
}

fn read_json_lines<T: for<'de> Deserialize<'de>>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| OwmError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub const TRACE_HEADER: &str = "frame_time,energy,metric,threshold,candidate,event";

pub fn write_trace_header(w: &mut (impl Write + ?Sized)) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    Ok(())
}

pub fn write_trace_row(w: &mut (impl Write + ?Sized), r: &crate::energy_detector::TraceRow) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{}",
        r.frame_time, r.energy, r.metric, r.threshold, r.candidate as u8, r.event as u8
    )?;
    Ok(())
}

pub fn write_trace(mut w: impl Write, trace: &EnergyTrace) -> Result<()> {
    write_trace_header(&mut w)?;
    for r in &trace.rows {
        write_trace_row(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

/// Session summary record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub total_duration: f64,
    pub forwarded_duration: f64,
    pub time_sent_ratio: f64,
    pub event_count: usize,
    pub frames_processed: usize,
    pub frames_skipped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedFrame>,
}

impl ReportRecord {
    pub fn new(m: &SessionMetrics, skipped: &[SkippedFrame]) -> Self {
        Self {
            total_duration: m.total_duration,
            forwarded_duration: m.forwarded_duration,
            time_sent_ratio: m.time_sent_ratio,
            event_count: m.event_count,
            frames_processed: m.frames_processed,
            frames_skipped: skipped.len(),
            skipped: skipped.to_vec(),
        }
    }
}

pub fn write_report(mut w: impl Write, m: &SessionMetrics, skipped: &[SkippedFrame]) -> Result<()> {
    write_json_line(&mut w, &ReportRecord::new(m, skipped))?;
    w.flush()?;
    Ok(())
}

/// CSV with header `x,y,dominant_hz,band,retained`; masked cells leave the
/// frequency and band empty.
pub fn write_frequency_report(mut w: impl Write, rep: &FrequencyReport) -> Result<()> {
    writeln!(w, "x,y,dominant_hz,band,retained")?;
    let g = rep.grid_size;
    for x in 0..g {
        for y in 0..g {
            let i = x * g + y;
            let hz = rep.dominant[i].map(|f| f.to_string()).unwrap_or_default();
            let band = rep.bands[i].map(|b| b.as_str()).unwrap_or("");
            writeln!(w, "{x},{y},{hz},{band},{}", rep.mask[i] as u8)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Row-major field as one value per line.
pub fn write_field_csv(mut w: impl Write, field: &Field) -> Result<()> {
    for v in field.as_slice() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Row-major field as little-endian `f64`s.
pub fn write_field_binary(mut w: impl Write, field: &Field) -> Result<()> {
    for v in field.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_binary(mut r: impl Read, grid_size: usize) -> Result<Field> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(OwmError::Contract("binary field length is not a multiple of 8 bytes".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Field::from_vec(grid_size, data)
}
