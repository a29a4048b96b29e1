//! Fixtures shared by the benchmarks.

use owm_core::stream_io::generate_scenario;
use owm_core::{Field, FrequencyMap, Lattice, LatticeConfig, LatticeState, MapConfig, ProbabilityFrame, ScenarioKind, SyntheticScenario};

/// Lattice on the default map geometry resized to `grid_size`, with a fixed
/// non-trivial source and a state warmed up for a few steps.
pub fn lattice_fixture(grid_size: usize) -> (Lattice, LatticeState, Field) {
    let map = FrequencyMap::build(&MapConfig {
        grid_size,
        ..MapConfig::default()
    })
    .expect("default map builds at any supported grid size");
    let mut lattice = Lattice::new(LatticeConfig::from_map(&map)).expect("default lattice is valid");
    let mut state = lattice.zero_state();
    let source = Field::from_fn(grid_size, |x, y| ((x * 5 + y * 3) % 13) as f64 / 13.0 - 0.5);
    lattice.run(&mut state, &source, 32).expect("warm-up stays finite");
    (lattice, state, source)
}

/// Reference step-drift frames.
pub fn reference_frames() -> Vec<ProbabilityFrame> {
    generate_scenario(&SyntheticScenario::reference(ScenarioKind::StepDrift)).expect("reference scenario is valid")
}
