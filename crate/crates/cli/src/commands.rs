use std::io::{BufRead, Write};

use anyhow::{bail, Context, Result};

use owm_core::gating::{is_frame_error, FrameResult, SkippedFrame};
use owm_core::lattice::measure_throughput;
use owm_core::spectral::{dominant_frequency_map, FieldRecorder};
use owm_core::stream_io::{
    generate_scenario, write_decision, write_event, write_frames, write_frequency_report, write_report,
    write_trace_header, write_trace_row, FrameReader,
};
use owm_core::verify::run_suite;
use owm_core::{compute_metrics, FrequencyMap, GateDecision, ScenarioKind, Session, SessionConfig, SyntheticScenario, UpdateScheme};

use crate::io::{open_input, run_parallel, Target, STDIO};

pub struct StreamOptions<'a> {
    pub inputs: &'a [String],
    pub output: Option<&'a str>,
    pub config: &'a SessionConfig,
}

struct StreamSummary {
    decisions: Vec<GateDecision>,
    skipped: Vec<SkippedFrame>,
    processed: usize,
    total_duration: f64,
}

/// Feeds frames to `session` as they are read, skipping and reporting
/// frames that fail validation.
fn drive_stream(
    input: &str,
    reader: impl BufRead,
    session: &mut Session,
    mut on_frame: impl FnMut(&FrameResult) -> Result<()>,
) -> Result<StreamSummary> {
    let mut decisions = Vec::new();
    let mut skipped = Vec::new();
    let mut processed = 0;
    for frame in FrameReader::new(reader, None) {
        let frame = frame.with_context(|| format!("reading {input}"))?;
        let index = session.frames_seen();
        match session.push_frame(&frame) {
            Ok(r) => {
                processed += 1;
                decisions.extend(r.decision);
                on_frame(&r)?;
            }
            Err(e) if is_frame_error(&e) => {
                eprintln!("warning: {input}: skipped frame {index}: {e}");
                skipped.push(SkippedFrame {
                    index,
                    t: frame.t,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e).with_context(|| format!("processing {input} at frame {index}")),
        }
    }
    Ok(StreamSummary {
        decisions,
        skipped,
        processed,
        total_duration: session.total_duration(),
    })
}

fn new_session(cfg: &SessionConfig, map: &FrequencyMap) -> Result<Session> {
    Ok(Session::with_map(cfg.clone(), map.clone())?)
}

pub fn detect(opts: &StreamOptions, trace: Option<&str>) -> Result<()> {
    let map = FrequencyMap::build(&opts.config.map)?;
    run_parallel(opts.inputs, |input, multi| {
        let events = Target::resolve(opts.output, input, multi, "events.jsonl", Target::Stdout)?;
        let trace = match trace {
            Some(t) => Some(Target::resolve(Some(t), input, multi, "trace.csv", Target::Stdout)?),
            None => None,
        };
        let mut session = new_session(opts.config, &map)?;
        let reader = open_input(input)?;
        let (trace_bytes, event_bytes) = events.write_with(|ev| {
            let (_, tb) = match &trace {
                Some(t) => t.write_with(|tw| {
                    write_trace_header(tw)?;
                    drive_stream(input, reader, &mut session, |r| {
                        write_trace_row(tw, &r.row)?;
                        if let Some(e) = &r.event {
                            write_event(ev, e)?;
                        }
                        Ok(())
                    })
                })?,
                None => (
                    drive_stream(input, reader, &mut session, |r| {
                        if let Some(e) = &r.event {
                            write_event(ev, e)?;
                        }
                        Ok(())
                    })?,
                    Vec::new(),
                ),
            };
            Ok(tb)
        })?;
        let mut out = event_bytes;
        out.extend(trace_bytes);
        Ok(out)
    })
}

pub fn gate(opts: &StreamOptions, report: Option<&str>) -> Result<()> {
    let map = FrequencyMap::build(&opts.config.map)?;
    run_parallel(opts.inputs, |input, multi| {
        let decisions = Target::resolve(opts.output, input, multi, "decisions.jsonl", Target::Stdout)?;
        let report_target = Target::resolve(report, input, multi, "report.json", Target::Stderr)?;
        let mut session = new_session(opts.config, &map)?;
        let reader = open_input(input)?;
        let (summary, mut out) = decisions.write_with(|w| {
            drive_stream(input, reader, &mut session, |r| {
                if let Some(d) = &r.decision {
                    write_decision(w, d)?;
                }
                Ok(())
            })
        })?;
        let metrics = compute_metrics(&summary.decisions, summary.total_duration, summary.processed);
        let (_, report_bytes) = report_target.write_with(|w| Ok(write_report(w, &metrics, &summary.skipped)?))?;
        out.extend(report_bytes);
        Ok(out)
    })
}

pub struct SpectrumOptions {
    pub start_frame: usize,
    pub window_frames: usize,
    pub every_n_steps: usize,
    pub percentile: f64,
}

pub fn spectrum(opts: &StreamOptions, window: &SpectrumOptions) -> Result<()> {
    if window.window_frames == 0 {
        bail!("the analysis window needs at least one frame");
    }
    let map = FrequencyMap::build(&opts.config.map)?;
    run_parallel(opts.inputs, |input, multi| {
        let target = Target::resolve(opts.output, input, multi, "spectrum.csv", Target::Stdout)?;
        let mut session = new_session(opts.config, &map)?;
        let mut recorder = FieldRecorder::new(map.grid_size(), opts.config.map.dt, window.every_n_steps)?;
        let end = window.start_frame + window.window_frames;
        let mut recorded = 0;
        for frame in FrameReader::new(open_input(input)?, None) {
            let frame = frame.with_context(|| format!("reading {input}"))?;
            let index = session.frames_seen();
            if index >= end {
                break;
            }
            let result = if index >= window.start_frame {
                session.push_frame_observed(&frame, |s| recorder.observe(s))
            } else {
                session.push_frame(&frame)
            };
            match result {
                Ok(_) => recorded += usize::from(index >= window.start_frame),
                Err(e) if is_frame_error(&e) && index < window.start_frame => {
                    eprintln!("warning: {input}: skipped frame {index}: {e}");
                }
                Err(e) => return Err(e).with_context(|| format!("processing {input} at frame {index}")),
            }
        }
        if recorded == 0 {
            bail!("no frames inside the analysis window starting at frame {}", window.start_frame);
        }
        let recording = recorder.finish();
        let report = dominant_frequency_map(&recording, window.percentile)?;
        let counts: Vec<String> = report
            .band_counts()
            .iter()
            .map(|(b, n)| format!("{}={n}", b.as_str()))
            .collect();
        eprintln!(
            "{input}: {} snapshots, retained {}/{} cells, nyquist {} Hz, bands {}",
            recording.len(),
            report.retained(),
            report.mask.len(),
            report.nyquist(),
            counts.join(" ")
        );
        let ((), bytes) = target.write_with(|w| Ok(write_frequency_report(w, &report)?))?;
        Ok(bytes)
    })
}

pub fn simulate(
    cfg: &SessionConfig,
    kind: ScenarioKind,
    seed: u64,
    frames: Option<usize>,
    output: Option<&str>,
    truth: Option<&str>,
) -> Result<()> {
    let reference = SyntheticScenario::reference(kind);
    let length = frames.unwrap_or(reference.duration_frames);
    let mut scenario = reference.with_seed(seed).fit(cfg.map.num_categories, length);
    scenario.stride_seconds = cfg.stride_seconds;
    let data = generate_scenario(&scenario)?;

    let output = output.unwrap_or(STDIO);
    let target = if output == STDIO {
        Target::Stdout
    } else {
        Target::File(output.into())
    };
    target.write_with(|w| Ok(write_frames(w, &data)?))?;

    let truth_target = match (truth, output) {
        (Some(STDIO), _) => Target::Stdout,
        (Some(path), _) => Target::File(path.into()),
        (None, STDIO) => Target::Stderr,
        (None, path) => Target::File(format!("{path}.truth.json").into()),
    };
    truth_target.write_with(|w| {
        serde_json::to_writer_pretty(&mut *w, &scenario.truth())?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(())
}

/// Returns whether every check passed.
pub fn verify(cfg: &SessionConfig, out: &mut impl Write) -> Result<bool> {
    let checks = run_suite();
    writeln!(out, "check\tresult\tseconds\tmeasured")?;
    for c in &checks {
        writeln!(
            out,
            "{}\t{}\t{:.3}\t{}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.seconds,
            c.measured
        )?;
    }
    writeln!(out)?;
    let map = FrequencyMap::build(&cfg.map)?;
    writeln!(out, "{}", map.summary())?;
    Ok(checks.iter().all(|c| c.passed))
}

pub fn bench(grids: &[usize], steps: u64, scheme: UpdateScheme, out: &mut impl Write) -> Result<()> {
    writeln!(out, "grid\tsteps\tseconds\tsteps_per_sec\trealtime_x")?;
    for &g in grids {
        let t = measure_throughput(g, steps, scheme)?;
        writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.0}\t{:.1}",
            t.grid_size,
            t.steps,
            t.seconds,
            t.steps_per_second,
            t.steps_per_second / 100.0
        )?;
    }
    Ok(())
}
