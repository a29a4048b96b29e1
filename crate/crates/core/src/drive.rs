//! Probability frames to per-step source fields.

use std::f64::consts::TAU;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{OwmError, Result};
use crate::frequency_map::FrequencyMap;
use crate::grid::Field;

/// One timestamped vector of category probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityFrame {
    pub t: f64,
    pub probs: Vec<f64>,
}

impl ProbabilityFrame {
    pub fn new(t: f64, probs: Vec<f64>) -> Self {
        Self { t, probs }
    }

    /// All-zero frame with `num_categories` entries.
    pub fn silent(t: f64, num_categories: usize) -> Self {
        Self::new(t, vec![0.0; num_categories])
    }

    /// Checks length and the `[0, 1]` range; `frame` is used for reporting.
    pub fn validate(&self, num_categories: usize, frame: usize) -> Result<()> {
        if !self.t.is_finite() {
            return Err(OwmError::Contract(format!("frame {frame}: timestamp is not finite")));
        }
        if self.probs.len() != num_categories {
            return Err(OwmError::FrameLength {
                frame,
                expected: num_categories,
                actual: self.probs.len(),
            });
        }
        if let Some((category, &value)) = self
            .probs
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(OwmError::ProbabilityRange { frame, category, value });
        }
        Ok(())
    }
}

/// Carrier bank for one frequency map.
#[derive(Debug, Clone)]
pub struct Drive {
    /// `f_i * dt`: cycles advanced per step.
    cycles_per_step: Vec<f64>,
    parcels: Vec<Range<usize>>,
    grid_size: usize,
    pub steps_per_frame: usize,
}

impl Drive {
    pub fn new(map: &FrequencyMap, steps_per_frame: usize) -> Result<Self> {
        if steps_per_frame == 0 {
            return Err(OwmError::config("steps_per_frame must be at least 1"));
        }
        let dt = map.config().dt;
        Ok(Self {
            cycles_per_step: map.frequencies.iter().map(|f| f * dt).collect(),
            parcels: map.parcels.clone(),
            grid_size: map.grid_size(),
            steps_per_frame,
        })
    }

    pub fn num_categories(&self) -> usize {
        self.cycles_per_step.len()
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// `sin(2 pi f_i n dt)`. The phase is reduced modulo one cycle before the
    /// sine so integer-period carriers evaluate to exactly zero.
    #[inline]
    pub fn carrier(&self, category: usize, step: u64) -> f64 {
        let cycles = (self.cycles_per_step[category] * step as f64).fract();
        if cycles == 0.0 {
            0.0
        } else {
            (TAU * cycles).sin()
        }
    }

    /// Writes `S(x, y)` for step `n` into `out`. Cells outside every parcel are zero.
    pub fn fill_source(&self, probs: &[f64], step: u64, out: &mut Field) -> Result<()> {
        if probs.len() != self.num_categories() {
            return Err(OwmError::Shape {
                what: "probabilities",
                expected: self.num_categories(),
                actual: probs.len(),
            });
        }
        if out.size() != self.grid_size {
            return Err(OwmError::Shape {
                what: "source",
                expected: self.grid_size * self.grid_size,
                actual: out.len(),
            });
        }
        let data = out.as_mut_slice();
        let mut covered = 0;
        for (i, parcel) in self.parcels.iter().enumerate() {
            let a = probs[i];
            let value = if a == 0.0 { 0.0 } else { a * self.carrier(i, step) };
            data[parcel.clone()].fill(value);
            covered = covered.max(parcel.end);
        }
        data[covered..].fill(0.0);
        Ok(())
    }

    /// Validates `frame` and returns its source field at step `n`.
    pub fn build_source(&self, frame: &ProbabilityFrame, step: u64) -> Result<Field> {
        frame.validate(self.num_categories(), 0)?;
        let mut out = Field::zeros(self.grid_size);
        self.fill_source(&frame.probs, step, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency_map::MapConfig;

    fn default_drive() -> (FrequencyMap, Drive) {
        let map = FrequencyMap::build(&MapConfig::default()).unwrap();
        let drive = Drive::new(&map, 100).unwrap();
        (map, drive)
    }

    #[test]
    fn silence_gives_zero_field() {
        let (_, drive) = default_drive();
        let s = drive.build_source(&ProbabilityFrame::silent(0.0, 527), 37).unwrap();
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_category_fills_only_its_parcel() {
        let (map, drive) = default_drive();
        let j = 300;
        let mut probs = vec![0.0; 527];
        probs[j] = 1.0;
        let n = 123;
        let s = drive.build_source(&ProbabilityFrame::new(1.0, probs), n).unwrap();
        let want = (TAU * (map.frequencies[j] * 0.01 * n as f64).fract()).sin();
        assert!(want.abs() > 1e-3);
        for (i, &v) in s.as_slice().iter().enumerate() {
            if map.parcels[j].contains(&i) {
                assert_eq!(v, want);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn integer_period_carrier_is_silent_on_step_clock() {
        let cfg = MapConfig {
            num_categories: 2,
            grid_size: 2,
            f_min: 100.0,
            f_max: 200.0,
            ..MapConfig::default()
        };
        let map = FrequencyMap::build(&cfg).unwrap();
        let drive = Drive::new(&map, 100).unwrap();
        for n in 0..1000 {
            assert_eq!(drive.carrier(0, n), 0.0);
            assert_eq!(drive.carrier(1, n), 0.0);
        }
    }

    #[test]
    fn source_is_linear_in_probabilities() {
        let (_, drive) = default_drive();
        let a: Vec<f64> = (0..527).map(|i| ((i * 37) % 101) as f64 / 200.0).collect();
        let b: Vec<f64> = (0..527).map(|i| ((i * 13) % 53) as f64 / 200.0).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (mut sa, mut sb, mut sab) = (Field::zeros(64), Field::zeros(64), Field::zeros(64));
        drive.fill_source(&a, 77, &mut sa).unwrap();
        drive.fill_source(&b, 77, &mut sb).unwrap();
        drive.fill_source(&ab, 77, &mut sab).unwrap();
        for i in 0..64 * 64 {
            let sum = sa.as_slice()[i] + sb.as_slice()[i];
            assert!((sab.as_slice()[i] - sum).abs() < 1e-15);
        }
    }

    #[test]
    fn uncovered_cells_stay_zero() {
        let cfg = MapConfig {
            num_categories: 3,
            grid_size: 2,
            f_min: 60.0,
            f_max: 90.0,
            ..MapConfig::default()
        };
        let map = FrequencyMap::build(&cfg).unwrap();
        let drive = Drive::new(&map, 1).unwrap();
        let mut out = Field::filled(2, 9.0);
        drive.fill_source(&[1.0, 1.0, 1.0], 3, &mut out).unwrap();
        let covered = map.parcels.last().unwrap().end;
        assert!(out.as_slice()[covered..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_validation() {
        let f = ProbabilityFrame::new(0.0, vec![0.5, 1.2, 0.0]);
        assert!(matches!(
            f.validate(3, 7),
            Err(OwmError::ProbabilityRange { frame: 7, category: 1, .. })
        ));
        assert!(matches!(
            f.validate(4, 2),
            Err(OwmError::FrameLength { expected: 4, actual: 3, .. })
        ));
        let nan = ProbabilityFrame::new(0.0, vec![f64::NAN]);
        assert!(nan.validate(1, 0).is_err());
        assert!(Drive::new(&FrequencyMap::build(&MapConfig::default()).unwrap(), 0).is_err());
    }
}
