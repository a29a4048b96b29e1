//! Damped velocity-pressure wave lattice.
//!
//! The state is a pressure-like field `p` on cell centres and a velocity field
//! `(vx, vy)` on the forward faces of each cell. Spatial operators are the
//! staggered first-order pair: the gradient is a forward difference and the
//! divergence a backward difference, so that under periodic boundaries
//! `sum(v . grad p) == -sum(p div v)` holds exactly.
//!
//! Two time integrators are provided:
//!
//! * [`UpdateScheme::Staggered`] (default): velocity first from `p(t)`, then
//!   pressure from the new velocity, with damping applied as division by
//!   `1 + dt k`. Its stability limit is `c dt / dx < ~1/sqrt(2)`, which is what
//!   the clamped speeds of the default frequency map are designed against.
//! * [`UpdateScheme::Simultaneous`]: both fields read time-`t` values and
//!   damping multiplies by `1 - dt k`. Kept for comparison; it is only stable
//!   for small `c dt / dx` and diverges on the default speed field.
//!
//! In both schemes the source enters the pressure update as `+ dt S`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{OwmError, Result};
use crate::frequency_map::{FrequencyMap, MapConfig};
use crate::grid::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    /// No flux through the outer walls.
    ZeroFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScheme {
    #[default]
    Staggered,
    Simultaneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    /// Wave speed `c(x, y)`.
    pub speed_field: Field,
    pub k_p: f64,
    pub k_v: f64,
    pub dt: f64,
    pub dx: f64,
    pub boundary: Boundary,
    pub scheme: UpdateScheme,
}

impl LatticeConfig {
    /// Periodic, staggered lattice.
    pub fn new(speed_field: Field, k_p: f64, k_v: f64, dt: f64, dx: f64) -> Self {
        Self {
            speed_field,
            k_p,
            k_v,
            dt,
            dx,
            boundary: Boundary::Periodic,
            scheme: UpdateScheme::Staggered,
        }
    }

    pub fn uniform(grid_size: usize, speed: f64, k_p: f64, k_v: f64, dt: f64) -> Self {
        Self::new(Field::filled(grid_size, speed), k_p, k_v, dt, 1.0)
    }

    pub fn from_map(map: &FrequencyMap) -> Self {
        let cfg: &MapConfig = map.config();
        Self::new(map.speed_field.clone(), cfg.k_p, cfg.k_v, cfg.dt, cfg.dx)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_scheme(mut self, scheme: UpdateScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn grid_size(&self) -> usize {
        self.speed_field.size()
    }

    pub fn max_speed(&self) -> f64 {
        self.speed_field.max_abs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size() < 2 {
            return Err(OwmError::config("lattice needs at least a 2x2 grid"));
        }
        if !(self.dt > 0.0 && self.dx > 0.0) {
            return Err(OwmError::config("dt and dx must be positive"));
        }
        if !(self.k_p >= 0.0 && self.k_v >= 0.0) {
            return Err(OwmError::config("damping rates must be non-negative"));
        }
        if !self.speed_field.is_finite() {
            return Err(OwmError::config("speed field contains non-finite values"));
        }
        Ok(())
    }

    /// Per-step coefficients `(a_p, b_p, a_v, b_v)` such that
    /// `p' = a_p p - b_p c^2 div v + dt S` and `v' = a_v v - b_v grad p`,
    /// with the differences taken unscaled (no `1/dx`).
    fn coefficients(&self) -> (f64, f64, f64, f64) {
        let r = self.dt / self.dx;
        match self.scheme {
            UpdateScheme::Staggered => {
                let ap = 1.0 / (1.0 + self.dt * self.k_p);
                let av = 1.0 / (1.0 + self.dt * self.k_v);
                (ap, ap * r, av, av * r)
            }
            UpdateScheme::Simultaneous => (1.0 - self.dt * self.k_p, r, 1.0 - self.dt * self.k_v, r),
        }
    }
}

/// Hidden state of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub p: Field,
    pub vx: Field,
    pub vy: Field,
    /// Steps taken since the last reset; drives the carrier phase.
    pub time_steps: u64,
}

impl LatticeState {
    pub fn zeros(grid_size: usize) -> Self {
        Self {
            p: Field::zeros(grid_size),
            vx: Field::zeros(grid_size),
            vy: Field::zeros(grid_size),
            time_steps: 0,
        }
    }

    pub fn grid_size(&self) -> usize {
        self.p.size()
    }

    pub fn reset(&mut self) {
        self.p.fill(0.0);
        self.vx.fill(0.0);
        self.vy.fill(0.0);
        self.time_steps = 0;
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Forward-difference gradient `(dp/dx, dp/dy)` on cell faces.
pub fn gradient(p: &Field, boundary: Boundary, dx: f64) -> (Field, Field) {
    let g = p.size();
    let mut gx = Field::zeros(g);
    let mut gy = Field::zeros(g);
    for x in 0..g {
        for y in 0..g {
            let here = p.get(x, y);
            let east = match (x + 1 < g, boundary) {
                (true, _) => Some(p.get(x + 1, y)),
                (false, Boundary::Periodic) => Some(p.get(0, y)),
                (false, Boundary::ZeroFlux) => None,
            };
            let north = match (y + 1 < g, boundary) {
                (true, _) => Some(p.get(x, y + 1)),
                (false, Boundary::Periodic) => Some(p.get(x, 0)),
                (false, Boundary::ZeroFlux) => None,
            };
            gx.set(x, y, east.map_or(0.0, |e| (e - here) / dx));
            gy.set(x, y, north.map_or(0.0, |n| (n - here) / dx));
        }
    }
    (gx, gy)
}

/// Backward-difference divergence of a face-centred vector field.
pub fn divergence(vx: &Field, vy: &Field, boundary: Boundary, dx: f64) -> Field {
    let g = vx.size();
    let mut out = Field::zeros(g);
    for x in 0..g {
        for y in 0..g {
            let west = match (x > 0, boundary) {
                (true, _) => vx.get(x - 1, y),
                (false, Boundary::Periodic) => vx.get(g - 1, y),
                (false, Boundary::ZeroFlux) => 0.0,
            };
            let south = match (y > 0, boundary) {
                (true, _) => vy.get(x, y - 1),
                (false, Boundary::Periodic) => vy.get(x, g - 1),
                (false, Boundary::ZeroFlux) => 0.0,
            };
            out.set(x, y, (vx.get(x, y) - west + vy.get(x, y) - south) / dx);
        }
    }
    out
}

/// Stepper bound to one configuration. Owns the `c^2` cache and a scratch
/// buffer; the state itself is passed in so many streams can share nothing
/// but the configuration.
#[derive(Debug, Clone)]
pub struct Lattice {
    cfg: LatticeConfig,
    c2: Vec<f64>,
    scratch: Vec<f64>,
    coeffs: (f64, f64, f64, f64),
}

impl Lattice {
    pub fn new(cfg: LatticeConfig) -> Result<Self> {
        cfg.validate()?;
        let c2 = cfg.speed_field.as_slice().iter().map(|c| c * c).collect();
        let n = cfg.speed_field.len();
        let coeffs = cfg.coefficients();
        Ok(Self {
            cfg,
            c2,
            scratch: vec![0.0; n],
            coeffs,
        })
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.cfg
    }

    pub fn grid_size(&self) -> usize {
        self.cfg.grid_size()
    }

    pub fn zero_state(&self) -> LatticeState {
        LatticeState::zeros(self.grid_size())
    }

    /// Advances `state` by one time step under `source`.
    pub fn step(&mut self, state: &mut LatticeState, source: &Field) -> Result<()> {
        let g = self.grid_size();
        for (what, f) in [("p", &state.p), ("vx", &state.vx), ("vy", &state.vy), ("source", source)] {
            if f.size() != g {
                return Err(OwmError::Shape {
                    what,
                    expected: g * g,
                    actual: f.len(),
                });
            }
        }
        let (ap, bp, av, bv) = self.coeffs;
        let periodic = self.cfg.boundary == Boundary::Periodic;
        let dt = self.cfg.dt;
        let check = match self.cfg.scheme {
            UpdateScheme::Staggered => {
                let cv = update_velocity(
                    state.p.as_slice(),
                    state.vx.as_mut_slice(),
                    state.vy.as_mut_slice(),
                    g,
                    av,
                    bv,
                    periodic,
                );
                let p = state.p.as_mut_slice();
                self.scratch.copy_from_slice(p);
                let cp = update_pressure(
                    &self.scratch,
                    p,
                    state.vx.as_slice(),
                    state.vy.as_slice(),
                    &self.c2,
                    source.as_slice(),
                    g,
                    (ap, bp, dt),
                    periodic,
                );
                cv + cp
            }
            UpdateScheme::Simultaneous => {
                let cp = update_pressure(
                    state.p.as_slice(),
                    &mut self.scratch,
                    state.vx.as_slice(),
                    state.vy.as_slice(),
                    &self.c2,
                    source.as_slice(),
                    g,
                    (ap, bp, dt),
                    periodic,
                );
                let cv = update_velocity(
                    state.p.as_slice(),
                    state.vx.as_mut_slice(),
                    state.vy.as_mut_slice(),
                    g,
                    av,
                    bv,
                    periodic,
                );
                state.p.as_mut_slice().copy_from_slice(&self.scratch);
                cv + cp
            }
        };
        state.time_steps += 1;
        if !check.is_finite() {
            return Err(OwmError::Instability {
                step: state.time_steps,
            });
        }
        Ok(())
    }

    /// Runs `steps` steps with a fixed source.
    pub fn run(&mut self, state: &mut LatticeState, source: &Field, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(state, source)?;
        }
        Ok(())
    }
}

/// `v' = a v - b grad p` in place; returns a finiteness checksum.
#[inline]
fn update_velocity(p: &[f64], vx: &mut [f64], vy: &mut [f64], g: usize, a: f64, b: f64, periodic: bool) -> f64 {
    let mut acc = 0.0;
    for x in 0..g {
        let row = x * g;
        let east_row = if x + 1 < g {
            Some(row + g)
        } else if periodic {
            Some(0)
        } else {
            None
        };
        let pr = &p[row..row + g];
        let vxr = &mut vx[row..row + g];
        match east_row {
            Some(er) => {
                let pe = &p[er..er + g];
                for ((v, &pc), &pn) in vxr.iter_mut().zip(pr).zip(pe) {
                    *v = a * *v - b * (pn - pc);
                    acc += *v;
                }
            }
            None => {
                for v in vxr.iter_mut() {
                    *v *= a;
                    acc += *v;
                }
            }
        }
        let vyr = &mut vy[row..row + g];
        for y in 0..g - 1 {
            vyr[y] = a * vyr[y] - b * (pr[y + 1] - pr[y]);
            acc += vyr[y];
        }
        let last = g - 1;
        vyr[last] = if periodic {
            a * vyr[last] - b * (pr[0] - pr[last])
        } else {
            a * vyr[last]
        };
        acc += vyr[last];
    }
    acc
}

/// `p_out = a p_in - b c^2 div v + dt S`; returns a finiteness checksum.
#[allow(clippy::too_many_arguments)]
#[inline]
fn update_pressure(
    p_in: &[f64],
    p_out: &mut [f64],
    vx: &[f64],
    vy: &[f64],
    c2: &[f64],
    s: &[f64],
    g: usize,
    (a, b, dt): (f64, f64, f64),
    periodic: bool,
) -> f64 {
    let mut acc = 0.0;
    for x in 0..g {
        let row = x * g;
        let west_row = if x > 0 {
            Some(row - g)
        } else if periodic {
            Some((g - 1) * g)
        } else {
            None
        };
        let vxr = &vx[row..row + g];
        let vyr = &vy[row..row + g];
        let pin = &p_in[row..row + g];
        let pout = &mut p_out[row..row + g];
        let c2r = &c2[row..row + g];
        let sr = &s[row..row + g];
        let south0 = if periodic { vyr[g - 1] } else { 0.0 };
        for y in 0..g {
            let west = match west_row {
                Some(wr) => vx[wr + y],
                None => 0.0,
            };
            let south = if y > 0 { vyr[y - 1] } else { south0 };
            let div = vxr[y] - west + vyr[y] - south;
            let v = a * pin[y] - b * c2r[y] * div + dt * sr[y];
            pout[y] = v;
            acc += v;
        }
    }
    acc
}

/// Steps-per-second measurement on the default map geometry at `grid_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub grid_size: usize,
    pub steps: u64,
    pub seconds: f64,
    pub steps_per_second: f64,
}

/// Times `steps` single-threaded lattice steps on a `grid_size` lattice whose
/// speed field comes from the default frequency map resized to that grid.
pub fn measure_throughput(grid_size: usize, steps: u64, scheme: UpdateScheme) -> Result<Throughput> {
    let map = FrequencyMap::build(&MapConfig {
        grid_size,
        ..MapConfig::default()
    })?;
    let mut lattice = Lattice::new(LatticeConfig::from_map(&map).with_scheme(scheme))?;
    let mut state = lattice.zero_state();
    let source = Field::from_fn(grid_size, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0);
    // warm caches before timing
    lattice.run(&mut state, &source, 16)?;
    let start = Instant::now();
    for _ in 0..steps {
        lattice.step(&mut state, &source)?;
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(Throughput {
        grid_size,
        steps,
        seconds,
        steps_per_second: steps as f64 / seconds.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy_detector::total_energy;

    /// Reference step assembled from the public operators.
    fn reference_step(cfg: &LatticeConfig, s: &LatticeState, src: &Field) -> LatticeState {
        let g = cfg.grid_size();
        let c2 = |i: usize| cfg.speed_field.as_slice()[i].powi(2);
        let (gx, gy) = gradient(&s.p, cfg.boundary, cfg.dx);
        match cfg.scheme {
            UpdateScheme::Simultaneous => {
                let div = divergence(&s.vx, &s.vy, cfg.boundary, cfg.dx);
                let mut out = LatticeState::zeros(g);
                for i in 0..g * g {
                    out.p.as_mut_slice()[i] = (1.0 - cfg.dt * cfg.k_p) * s.p.as_slice()[i]
                        - cfg.dt * c2(i) * div.as_slice()[i]
                        + cfg.dt * src.as_slice()[i];
                    out.vx.as_mut_slice()[i] =
                        (1.0 - cfg.dt * cfg.k_v) * s.vx.as_slice()[i] - cfg.dt * gx.as_slice()[i];
                    out.vy.as_mut_slice()[i] =
                        (1.0 - cfg.dt * cfg.k_v) * s.vy.as_slice()[i] - cfg.dt * gy.as_slice()[i];
                }
                out.time_steps = s.time_steps + 1;
                out
            }
            UpdateScheme::Staggered => {
                let mut out = LatticeState::zeros(g);
                for i in 0..g * g {
                    out.vx.as_mut_slice()[i] =
                        (s.vx.as_slice()[i] - cfg.dt * gx.as_slice()[i]) / (1.0 + cfg.dt * cfg.k_v);
                    out.vy.as_mut_slice()[i] =
                        (s.vy.as_slice()[i] - cfg.dt * gy.as_slice()[i]) / (1.0 + cfg.dt * cfg.k_v);
                }
                let div = divergence(&out.vx, &out.vy, cfg.boundary, cfg.dx);
                for i in 0..g * g {
                    out.p.as_mut_slice()[i] = (s.p.as_slice()[i] - cfg.dt * c2(i) * div.as_slice()[i])
                        / (1.0 + cfg.dt * cfg.k_p)
                        + cfg.dt * src.as_slice()[i];
                }
                out.time_steps = s.time_steps + 1;
                out
            }
        }
    }

    fn seeded_field(g: usize, seed: u64) -> Field {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Field::from_fn(g, |_, _| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn fast_step_matches_operator_composition() {
        for scheme in [UpdateScheme::Staggered, UpdateScheme::Simultaneous] {
            for boundary in [Boundary::Periodic, Boundary::ZeroFlux] {
                let g = 7;
                let speeds = Field::from_fn(g, |x, y| 0.5 + 0.1 * ((x + 2 * y) % 5) as f64);
                let cfg = LatticeConfig::new(speeds, 2.0, 3.0, 0.05, 1.5)
                    .with_scheme(scheme)
                    .with_boundary(boundary);
                let mut lat = Lattice::new(cfg.clone()).unwrap();
                let mut state = LatticeState {
                    p: seeded_field(g, 1),
                    vx: seeded_field(g, 2),
                    vy: seeded_field(g, 3),
                    time_steps: 4,
                };
                let src = seeded_field(g, 9);
                let expected = reference_step(&cfg, &state, &src);
                lat.step(&mut state, &src).unwrap();
                for (a, b) in [(&state.p, &expected.p), (&state.vx, &expected.vx), (&state.vy, &expected.vy)] {
                    for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
                        assert!((u - v).abs() < 1e-14, "{scheme:?} {boundary:?}: {u} vs {v}");
                    }
                }
                assert_eq!(state.time_steps, 5);
            }
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let mut lat = Lattice::new(LatticeConfig::uniform(8, 1.0, 1.0, 1.0, 0.01)).unwrap();
        let mut s = lat.zero_state();
        lat.run(&mut s, &Field::zeros(8), 50).unwrap();
        assert_eq!(s, LatticeState { time_steps: 50, ..LatticeState::zeros(8) });
    }

    #[test]
    fn impulse_lands_only_in_pressure() {
        for scheme in [UpdateScheme::Staggered, UpdateScheme::Simultaneous] {
            let dt = 0.01;
            let mut lat = Lattice::new(LatticeConfig::uniform(6, 3.0, 10.0, 10.0, dt).with_scheme(scheme)).unwrap();
            let mut s = lat.zero_state();
            let mut src = Field::zeros(6);
            src.set(2, 3, 5.0);
            lat.step(&mut s, &src).unwrap();
            for x in 0..6 {
                for y in 0..6 {
                    let want = if (x, y) == (2, 3) { dt * 5.0 } else { 0.0 };
                    assert_eq!(s.p.get(x, y), want);
                }
            }
            assert!(s.vx.as_slice().iter().chain(s.vy.as_slice()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn reset_is_idempotent() {
        let mut s = LatticeState {
            p: seeded_field(5, 4),
            vx: seeded_field(5, 5),
            vy: seeded_field(5, 6),
            time_steps: 17,
        };
        s.reset();
        let once = s.clone();
        s.reset();
        assert_eq!(s, once);
        assert_eq!(s, LatticeState::zeros(5));
        assert_eq!(total_energy(&s), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut lat = Lattice::new(LatticeConfig::uniform(4, 1.0, 0.0, 0.0, 0.01)).unwrap();
        let mut s = lat.zero_state();
        let err = lat.step(&mut s, &Field::zeros(5)).unwrap_err();
        assert!(matches!(err, OwmError::Shape { what: "source", .. }));
    }

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let g = 9;
        let p = seeded_field(g, 11);
        let vx = seeded_field(g, 12);
        let vy = seeded_field(g, 13);
        let (gx, gy) = gradient(&p, Boundary::Periodic, 0.7);
        let div = divergence(&vx, &vy, Boundary::Periodic, 0.7);
        let lhs: f64 = (0..g * g)
            .map(|i| vx.as_slice()[i] * gx.as_slice()[i] + vy.as_slice()[i] * gy.as_slice()[i])
            .sum();
        let rhs: f64 = -(0..g * g).map(|i| p.as_slice()[i] * div.as_slice()[i]).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_scheme_diverges_on_default_map() {
        let map = FrequencyMap::build(&MapConfig::default()).unwrap();
        let mut lat = Lattice::new(LatticeConfig::from_map(&map).with_scheme(UpdateScheme::Simultaneous)).unwrap();
        let mut s = lat.zero_state();
        let src = seeded_field(64, 3);
        let err = lat.run(&mut s, &src, 5_000).unwrap_err();
        assert!(matches!(err, OwmError::Instability { .. }));
    }
}
