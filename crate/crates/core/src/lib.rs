//! Oscillatory working memory: a damped velocity-pressure wave lattice driven
//! by frequency-multiplexed category probabilities, with energy-based drift
//! detection and segment gating.
//!
//! Pipeline per frame: [`drive`] turns probabilities into a source field,
//! [`lattice`] integrates it, [`energy_detector`] turns lattice energy into
//! drift events, and [`gating`] converts events into forwarded intervals.
//! [`spectral`] analyses recorded p-fields and [`oracles`] holds independent
//! numerical checks.

// negated float comparisons are how NaN inputs fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod drive;
pub mod energy_detector;
pub mod error;
pub mod frequency_map;
pub mod gating;
pub mod grid;
pub mod lattice;
pub mod oracles;
pub mod spectral;
pub mod stream_io;
pub mod verify;

pub use config::{load_config, parse_config};
pub use drive::{Drive, ProbabilityFrame};
pub use energy_detector::{
    total_energy, DetectorConfig, DriftDetector, DriftEvent, EnergyTrace, FrameOutcome, TraceRow,
};
pub use error::{OwmError, Result};
pub use frequency_map::{FrequencyMap, MapConfig, MapSummary};
pub use gating::{
    compute_metrics, process_stream, GateDecision, Session, SessionConfig, SessionMetrics, StreamReport,
};
pub use grid::Field;
pub use lattice::{Boundary, Lattice, LatticeConfig, LatticeState, UpdateScheme};
pub use spectral::{Band, FieldRecording, FrequencyReport};
pub use stream_io::{ScenarioKind, SyntheticScenario};
