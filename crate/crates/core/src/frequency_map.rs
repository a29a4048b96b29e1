//! Carrier frequencies, wave speeds, and spatial parcels for each category.
//!
//! Category `i` gets a carrier `f_i` spread uniformly over `[f_min, f_max]`, a
//! wave speed obtained by inverting the lattice's local resonance relation at
//! `f_i`, and a contiguous run of cells in row-major order. The assembled speed
//! field is piecewise constant over parcels.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{OwmError, Result};
use crate::grid::Field;

/// Lower clamp on any assigned wave speed; also used for unassigned cells.
pub const MIN_WAVE_SPEED: f64 = 0.1;
/// Fraction of `c_max` the upper clamp allows.
pub const SPEED_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub num_categories: usize,
    pub grid_size: usize,
    pub dt: f64,
    pub dx: f64,
    pub k_p: f64,
    pub k_v: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            num_categories: 527,
            grid_size: 64,
            dt: 0.01,
            dx: 1.0,
            k_p: 10.0,
            k_v: 10.0,
            f_min: 51.0,
            f_max: 1200.0,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_categories < 2 {
            return Err(OwmError::config("num_categories must be at least 2"));
        }
        if self.grid_size < 2 {
            return Err(OwmError::config("grid_size must be at least 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(OwmError::config("dt must be positive"));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(OwmError::config("dx must be positive"));
        }
        if !(self.k_p >= 0.0 && self.k_v >= 0.0) {
            return Err(OwmError::config("damping rates must be non-negative"));
        }
        if !(self.f_min < self.f_max) || !self.f_max.is_finite() {
            return Err(OwmError::config("f_min must be below f_max"));
        }
        let nyquist = self.nyquist();
        if !(self.f_min > nyquist) {
            return Err(OwmError::config(format!(
                "f_min = {} Hz must exceed the step-clock Nyquist frequency {} Hz",
                self.f_min, nyquist
            )));
        }
        Ok(())
    }

    /// `1 / (2 dt)`.
    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt
    }

    /// `sqrt((1 + dt k_p)(1 + dt k_v))`.
    pub fn damping_factor(&self) -> f64 {
        ((1.0 + self.dt * self.k_p) * (1.0 + self.dt * self.k_v)).sqrt()
    }

    /// Speed bound before the safety factor.
    pub fn c_max(&self) -> f64 {
        self.dx / (self.dt * SQRT_2) * self.damping_factor()
    }

    pub fn cells(&self) -> usize {
        self.grid_size * self.grid_size
    }
}

/// Uniformly spaced carriers `f_i = f_min + i (f_max - f_min) / (C - 1)`.
pub fn assign_frequencies(cfg: &MapConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let c = cfg.num_categories;
    let step = (cfg.f_max - cfg.f_min) / (c - 1) as f64;
    let mut freqs: Vec<f64> = (0..c).map(|i| cfg.f_min + i as f64 * step).collect();
    // pin the endpoint exactly; the product above can round off by an ulp
    freqs[c - 1] = cfg.f_max;
    Ok(freqs)
}

/// Unclamped speed whose local resonance matches `f`.
pub fn raw_wave_speed(f: f64, cfg: &MapConfig) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(OwmError::Domain(format!("carrier frequency must be positive, got {f}")));
    }
    let cycles = f * cfg.dt;
    if (cycles - 0.5).rem_euclid(1.0) == 0.0 {
        return Err(OwmError::TangentPole {
            frequency: f,
            cycles_per_step: cycles,
        });
    }
    Ok((PI * cycles).tan() * cfg.damping_factor() / (cfg.dt * SQRT_2))
}

/// Clamped wave speed for carrier `f`: `max(min(raw, 0.9 c_max), 0.1)`.
pub fn wave_speed_for_frequency(f: f64, cfg: &MapConfig) -> Result<f64> {
    let raw = raw_wave_speed(f, cfg)?;
    Ok(raw.min(SPEED_SAFETY * cfg.c_max()).max(MIN_WAVE_SPEED))
}

/// Splits the `G^2` row-major cells into `C` contiguous parcels; the first
/// `G^2 mod C` parcels get one extra cell.
pub fn allocate_parcels(cfg: &MapConfig) -> Result<Vec<Range<usize>>> {
    cfg.validate()?;
    let cells = cfg.cells();
    let c = cfg.num_categories;
    let base = cells / c;
    let rem = cells % c;
    let mut parcels = Vec::with_capacity(c);
    let mut start = 0;
    for i in 0..c {
        let len = if i < rem { base + 1 } else { base };
        parcels.push(start..start + len);
        start += len;
    }
    Ok(parcels)
}

/// Paints each parcel with its speed. Cells no parcel covers get
/// [`MIN_WAVE_SPEED`].
pub fn build_speed_field(speeds: &[f64], parcels: &[Range<usize>], grid_size: usize) -> Result<Field> {
    if speeds.len() != parcels.len() {
        return Err(OwmError::Shape {
            what: "speed list",
            expected: parcels.len(),
            actual: speeds.len(),
        });
    }
    let mut field = Field::filled(grid_size, MIN_WAVE_SPEED);
    let cells = field.as_mut_slice();
    for (range, &c) in parcels.iter().zip(speeds) {
        if range.end > cells.len() {
            return Err(OwmError::Contract(format!(
                "parcel {range:?} exceeds the {}-cell grid",
                cells.len()
            )));
        }
        cells[range.clone()].fill(c);
    }
    Ok(field)
}

/// Two-valued stripe perturbation `delta c^2(x, y) = +-A` depending on `y` only,
/// with period `G / mode_sep` cells.
///
/// The square wave is sampled at cell centres `y + 1/2`; a cell is positive when
/// its centre falls in the first half of its period. The sign is decided in
/// integer arithmetic so it never depends on rounding.
pub fn build_striped_field(grid_size: usize, amplitude: f64, baseline: f64, mode_sep: usize) -> Result<Field> {
    if grid_size < 2 {
        return Err(OwmError::config("grid_size must be at least 2"));
    }
    if mode_sep < 1 {
        return Err(OwmError::config("mode separation q0 must be at least 1"));
    }
    if !(baseline - amplitude.abs() > 0.0) {
        return Err(OwmError::config(format!(
            "squared speed baseline {baseline} minus amplitude {amplitude} must stay positive"
        )));
    }
    let profile = stripe_profile(grid_size, amplitude, mode_sep);
    Ok(Field::from_fn(grid_size, |_, y| profile[y]))
}

/// One period-`n / mode_sep` square wave of height `+-amplitude` over `n`
/// samples taken at centres `j + 1/2`.
pub fn stripe_profile(n: usize, amplitude: f64, mode_sep: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            // phase of the sample centre in units of 1/(2n) of a period
            let phase = ((2 * j + 1) * mode_sep) % (2 * n);
            if phase < n {
                amplitude
            } else {
                -amplitude
            }
        })
        .collect()
}

/// Speed field `c = sqrt(baseline + delta c^2)` for a striped perturbation.
pub fn striped_speed_field(grid_size: usize, amplitude: f64, baseline: f64, mode_sep: usize) -> Result<Field> {
    let mut field = build_striped_field(grid_size, amplitude, baseline, mode_sep)?;
    field
        .as_mut_slice()
        .iter_mut()
        .for_each(|d| *d = (baseline + *d).sqrt());
    Ok(field)
}

/// Immutable per-category assignment plus the assembled speed field.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap {
    pub frequencies: Vec<f64>,
    pub speeds: Vec<f64>,
    pub parcels: Vec<Range<usize>>,
    pub speed_field: Field,
    pub c_max: f64,
    config: MapConfig,
}

impl FrequencyMap {
    pub fn build(cfg: &MapConfig) -> Result<Self> {
        let frequencies = assign_frequencies(cfg)?;
        let speeds = frequencies
            .iter()
            .map(|&f| wave_speed_for_frequency(f, cfg))
            .collect::<Result<Vec<_>>>()?;
        let parcels = allocate_parcels(cfg)?;
        let speed_field = build_speed_field(&speeds, &parcels, cfg.grid_size)?;
        Ok(Self {
            frequencies,
            speeds,
            parcels,
            speed_field,
            c_max: cfg.c_max(),
            config: cfg.clone(),
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn num_categories(&self) -> usize {
        self.frequencies.len()
    }

    pub fn grid_size(&self) -> usize {
        self.config.grid_size
    }

    pub fn unassigned_cells(&self) -> usize {
        let assigned: usize = self.parcels.iter().map(|r| r.len()).sum();
        self.config.cells() - assigned
    }

    pub fn summary(&self) -> MapSummary {
        let mut histogram = BTreeMap::new();
        for r in &self.parcels {
            *histogram.entry(r.len()).or_insert(0) += 1;
        }
        MapSummary {
            num_categories: self.num_categories(),
            grid_size: self.grid_size(),
            f_first: self.frequencies[0],
            f_last: *self.frequencies.last().expect("at least two categories"),
            mean_spacing: (self.frequencies[self.frequencies.len() - 1] - self.frequencies[0])
                / (self.frequencies.len() - 1) as f64,
            c_max: self.c_max,
            speed_min: self.speed_field.min(),
            speed_max: self.speed_field.max(),
            parcel_sizes: histogram,
            unassigned_cells: self.unassigned_cells(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    pub num_categories: usize,
    pub grid_size: usize,
    pub f_first: f64,
    pub f_last: f64,
    pub mean_spacing: f64,
    pub c_max: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// parcel size -> number of parcels with that size
    pub parcel_sizes: BTreeMap<usize, usize>,
    pub unassigned_cells: usize,
}

impl fmt::Display for MapSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "categories\t{}", self.num_categories)?;
        writeln!(f, "grid_size\t{}", self.grid_size)?;
        writeln!(f, "f_first_hz\t{:.4}", self.f_first)?;
        writeln!(f, "f_last_hz\t{:.4}", self.f_last)?;
        writeln!(f, "f_spacing_hz\t{:.6}", self.mean_spacing)?;
        writeln!(f, "c_max\t{:.6}", self.c_max)?;
        writeln!(f, "speed_min\t{:.6}", self.speed_min)?;
        writeln!(f, "speed_max\t{:.6}", self.speed_max)?;
        for (size, count) in &self.parcel_sizes {
            writeln!(f, "parcel_size\t{size}\t{count}")?;
        }
        write!(f, "unassigned_cells\t{}", self.unassigned_cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_carriers_span_range() {
        let f = assign_frequencies(&MapConfig::default()).unwrap();
        assert_eq!(f.len(), 527);
        assert_eq!(f[0], 51.0);
        assert_eq!(f[526], 1200.0);
        assert_relative_eq!(f[1] - f[0], 1149.0 / 526.0, epsilon = 1e-12);
        assert!((f[1] - f[0] - 2.1844).abs() < 1e-4);
        assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn c_max_default() {
        let cfg = MapConfig::default();
        assert!((cfg.c_max() - 77.7817).abs() < 1e-4);
    }

    #[test]
    fn speed_at_quarter_cycle_hits_upper_clamp() {
        // tan(pi/4) = 1 makes raw == c_max exactly when dx = 1
        let cfg = MapConfig::default();
        let raw = raw_wave_speed(25.0, &cfg).unwrap();
        assert_relative_eq!(raw, cfg.c_max(), max_relative = 1e-12);
        let c = wave_speed_for_frequency(25.0, &cfg).unwrap();
        assert_relative_eq!(c, 0.9 * cfg.c_max(), max_relative = 1e-12);
        assert!((c - 70.0035).abs() < 1e-4);
    }

    #[test]
    fn speed_past_pole_hits_lower_clamp() {
        let cfg = MapConfig::default();
        assert!(raw_wave_speed(51.0, &cfg).unwrap() < 0.0);
        assert_eq!(wave_speed_for_frequency(51.0, &cfg).unwrap(), 0.1);
    }

    #[test]
    fn exact_pole_is_rejected() {
        let cfg = MapConfig::default();
        let err = wave_speed_for_frequency(50.0, &cfg).unwrap_err();
        assert!(matches!(err, OwmError::TangentPole { .. }));
        assert!(matches!(
            wave_speed_for_frequency(150.0, &cfg),
            Err(OwmError::TangentPole { .. })
        ));
        // near, but not on, the pole: the clamp absorbs it
        assert_eq!(wave_speed_for_frequency(49.999, &cfg).unwrap(), 0.9 * cfg.c_max());
    }

    #[test]
    fn default_parcels() {
        let cfg = MapConfig::default();
        let p = allocate_parcels(&cfg).unwrap();
        assert_eq!(cfg.cells() / 527, 7);
        assert_eq!(cfg.cells() % 527, 407);
        assert_eq!(p[0].len(), 8);
        assert_eq!(p[406].len(), 8);
        assert_eq!(p[407].len(), 7);
        assert_eq!(p[526].len(), 7);
        assert_eq!(p[526].end, 4096);
        assert!(p.windows(2).all(|w| w[0].end == w[1].start));
    }

    #[test]
    fn tiny_even_split() {
        let cfg = MapConfig {
            num_categories: 2,
            grid_size: 2,
            f_min: 60.0,
            f_max: 70.0,
            ..MapConfig::default()
        };
        assert_eq!(allocate_parcels(&cfg).unwrap(), vec![0..2, 2..4]);
        let field = build_speed_field(&[3.0, 5.0], &[0..2, 2..4], 2).unwrap();
        assert_eq!(field.as_slice(), &[3.0, 3.0, 5.0, 5.0]);
        assert_eq!(field.get(0, 1), 3.0);
        assert_eq!(field.get(1, 0), 5.0);
    }

    #[test]
    fn uncovered_cells_get_lower_clamp() {
        let field = build_speed_field(&[2.0], std::slice::from_ref(&(0..3)), 2).unwrap();
        assert_eq!(field.as_slice(), &[2.0, 2.0, 2.0, MIN_WAVE_SPEED]);
    }

    #[test]
    fn default_map_bounds_and_first_parcel() {
        let map = FrequencyMap::build(&MapConfig::default()).unwrap();
        assert!(map.speed_field.min() >= 0.1);
        assert!(map.speed_field.max() <= 70.0036);
        for cell in map.parcels[0].clone() {
            assert_eq!(map.speed_field.as_slice()[cell], 0.1);
        }
        assert_eq!(map.unassigned_cells(), 0);
    }

    #[test]
    fn invalid_configs() {
        let at_nyquist = MapConfig {
            f_min: 50.0,
            ..MapConfig::default()
        };
        assert!(at_nyquist.validate().is_err());
        let one_category = MapConfig {
            num_categories: 1,
            ..MapConfig::default()
        };
        assert!(FrequencyMap::build(&one_category).is_err());
        let negative_damping = MapConfig {
            k_p: -1.0,
            ..MapConfig::default()
        };
        assert!(negative_damping.validate().is_err());
    }

    #[test]
    fn stripes_four_cells_one_period() {
        let f = build_striped_field(4, 1.0, 4.0, 1).unwrap();
        for x in 0..4 {
            let row: Vec<f64> = (0..4).map(|y| f.get(x, y)).collect();
            assert_eq!(row, vec![1.0, 1.0, -1.0, -1.0]);
        }
    }

    #[test]
    fn stripes_period_two_alternate() {
        let f = build_striped_field(8, 0.5, 1.0, 4).unwrap();
        let row: Vec<f64> = (0..8).map(|y| f.get(3, y)).collect();
        assert_eq!(row, vec![0.5, -0.5, 0.5, -0.5, 0.5, -0.5, 0.5, -0.5]);
    }

    #[test]
    fn stripes_period_one_is_constant() {
        // a single-cell period cannot alternate under cell-centre sampling
        let f = build_striped_field(6, 1.0, 2.0, 6).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == f.as_slice()[0]));
    }

    #[test]
    fn stripes_zero_amplitude_and_errors() {
        let f = build_striped_field(5, 0.0, 1.0, 2).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
        assert!(build_striped_field(4, 2.0, 2.0, 1).is_err());
        assert!(build_striped_field(4, 1.0, 2.0, 0).is_err());
    }
}
