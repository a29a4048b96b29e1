//! Fixtures that run the oracles on reference setups, and a combined
//! pass/fail suite for the command line.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::time::Instant;

use crate::error::Result;
use crate::frequency_map::{build_striped_field, striped_speed_field, FrequencyMap, MapConfig, SPEED_SAFETY};
use crate::grid::Field;
use crate::lattice::{measure_throughput, LatticeConfig, UpdateScheme};
use crate::oracles::{
    energy_balance_residual, local_resonance_frequency, max_coupling_term, modal_coupling_matrix, mode_wavenumber_sq,
    phase_lag_check, record_trajectory, reflection_coefficient, second_order_residual, stability_check,
    stripe_fourier_coefficient, stripe_optimality_probe, square_wave_profile, FourierSymbol, Mode,
};

/// Gaussian blob of width `width` cells centred on the grid, oscillating at `hz`.
pub fn blob_source(grid_size: usize, width: f64, hz: f64) -> impl FnMut(f64) -> Field {
    let centre = (grid_size as f64 - 1.0) / 2.0;
    let shape = Field::from_fn(grid_size, |x, y| {
        let r2 = (x as f64 - centre).powi(2) + (y as f64 - centre).powi(2);
        (-r2 / (2.0 * width * width)).exp()
    });
    move |t| {
        let mut s = shape.clone();
        s.scale((TAU * hz * t).sin());
        s
    }
}

/// A residual measured at `dt` and at `dt / 2` over the same duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub coarse: f64,
    pub fine: f64,
}

impl Convergence {
    pub fn ratio(&self) -> f64 {
        self.coarse / self.fine
    }
}

/// Reference dynamics for the residual oracles: 16x16 periodic lattice,
/// `k_p = k_v = 1`, blob source at 1 Hz, `steps` steps of `dt`.
pub fn reference_lattice(speed: Field, dt: f64) -> LatticeConfig {
    LatticeConfig::new(speed, 1.0, 1.0, dt, 1.0)
}

/// Striped speed field used for the energy balance: `c^2 = 1 +- 0.5` with two periods.
pub fn striped_reference_speed() -> Field {
    striped_speed_field(16, 0.5, 1.0, 2).expect("valid stripe parameters")
}

pub fn energy_balance_convergence(speed: &Field, dt: f64, steps: usize) -> Result<Convergence> {
    let run = |dt: f64, steps: usize| -> Result<f64> {
        let traj = record_trajectory(reference_lattice(speed.clone(), dt), steps, blob_source(speed.size(), 2.0, 1.0))?;
        Ok(energy_balance_residual(&traj)?.normalized_max)
    };
    Ok(Convergence {
        coarse: run(dt, steps)?,
        fine: run(dt / 2.0, steps * 2)?,
    })
}

/// Second-order residual convergence plus the largest `grad c^2` coupling
/// term seen on the coarse run.
pub fn second_order_convergence(speed: &Field, dt: f64, steps: usize) -> Result<(Convergence, f64)> {
    let mut coupling = 0.0;
    let mut run = |dt: f64, steps: usize| -> Result<f64> {
        let traj = record_trajectory(reference_lattice(speed.clone(), dt), steps, blob_source(speed.size(), 2.0, 1.0))?;
        coupling = f64::max(coupling, max_coupling_term(&traj));
        Ok(second_order_residual(&traj)?.normalized_max)
    };
    let coarse = run(dt, steps)?;
    let fine = run(dt / 2.0, steps * 2)?;
    Ok((Convergence { coarse, fine }, coupling))
}

/// Largest relative gap between the closed-form resonance and the
/// eigen-decomposition over an `n x n` grid of speeds in `[0.1, 70]` and
/// wavenumber magnitudes in `(0, pi sqrt 2]`.
pub fn eigen_grid_max_error(n: usize, k_p: f64, k_v: f64, dt: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        let c = 0.1 + (70.0 - 0.1) * i as f64 / (n - 1).max(1) as f64;
        for j in 1..=n {
            let xi = PI * SQRT_2 * j as f64 / n as f64;
            let closed = local_resonance_frequency(c, k_p, k_v, dt, xi);
            let eig = FourierSymbol::new(c, k_p, k_v, dt, xi / SQRT_2, xi / SQRT_2).eigen_frequency(dt);
            worst = worst.max((closed - eig).abs() / closed.abs());
        }
    }
    worst
}

/// Bragg coupling on a `G x G` stripe grid: returns `(measured, predicted)`
/// for the `(m, n) -> (m, n + q0)` entry together with the largest cross-`m` entry.
pub fn bragg_coupling(grid_size: usize, amplitude: f64, q0: usize, m: i64, n: i64) -> Result<(f64, f64, f64)> {
    let stripes = build_striped_field(grid_size, amplitude, 1.0 + amplitude.abs(), q0)?;
    let q = q0 as i64;
    let modes: Vec<Mode> = (m - 1..=m + 1).flat_map(|mm| [(mm, n), (mm, n + q), (mm, n - q)]).collect();
    let mc = modal_coupling_matrix(&stripes, &modes, 1.0);
    let measured = mc.get((m, n), (m, n + q)).expect("mode present").norm();
    let predicted = mode_wavenumber_sq((m, n + q), grid_size as f64) * 2.0 * amplitude.abs() / PI;
    Ok((measured, predicted, mc.max_cross_m()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
    pub seconds: f64,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, measured) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name,
        passed,
        measured,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every oracle on its reference setup, plus the 64x64 throughput floor.
pub fn run_suite() -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("frequency_map", || {
        let map = FrequencyMap::build(&MapConfig::default())?;
        let s = map.summary();
        let hist_ok = s.parcel_sizes.get(&8) == Some(&407) && s.parcel_sizes.get(&7) == Some(&120);
        let ok = s.f_first == 51.0
            && s.f_last == 1200.0
            && (s.c_max - 77.7817).abs() < 1e-4
            && s.speed_min >= 0.1
            && s.speed_max <= SPEED_SAFETY * s.c_max
            && s.speed_max <= 70.0035 + 1e-4
            && hist_ok;
        Ok((ok, format!("c_max={:.6} speed=[{:.6}, {:.6}] spacing={:.6}", s.c_max, s.speed_min, s.speed_max, s.mean_spacing)))
    }));
    out.push(check("eigenfrequency", || {
        let err = eigen_grid_max_error(20, 10.0, 10.0, 0.01);
        Ok((err <= 1e-9, format!("max_rel_err={err:.3e}")))
    }));
    out.push(check("stability", || {
        let map = FrequencyMap::build(&MapConfig::default())?;
        let cfg = LatticeConfig::from_map(&map);
        let stable = stability_check(&cfg, map.grid_size());
        let mut fast = cfg.clone();
        fast.speed_field.scale(10.0);
        let unstable = stability_check(&fast, map.grid_size());
        let simultaneous = stability_check(&cfg.with_scheme(UpdateScheme::Simultaneous), map.grid_size());
        Ok((
            stable.is_stable() && !unstable.is_stable(),
            format!(
                "default_radius={:.6} x10_radius={:.4} simultaneous_radius={:.6}",
                stable.radius(),
                unstable.radius(),
                simultaneous.radius()
            ),
        ))
    }));
    out.push(check("energy_balance", || {
        let c = energy_balance_convergence(&striped_reference_speed(), 0.01, 500)?;
        Ok((
            c.coarse.is_finite() && c.ratio() >= 1.8,
            format!("residual={:.3e} halved_dt={:.3e} ratio={:.3}", c.coarse, c.fine, c.ratio()),
        ))
    }));
    out.push(check("second_order", || {
        let (c, coupling) = second_order_convergence(&Field::filled(16, 2.0), 0.01, 500)?;
        Ok((
            c.coarse.is_finite() && c.ratio() >= 1.8 && coupling <= 1e-12,
            format!("residual={:.3e} halved_dt={:.3e} ratio={:.3} coupling={coupling:.1e}", c.coarse, c.fine, c.ratio()),
        ))
    }));
    out.push(check("reflection", || {
        let same = reflection_coefficient(3.0, 3.0)?;
        let r = reflection_coefficient(0.9, 0.1)?;
        let anti = reflection_coefficient(0.3, 1.7)? == -reflection_coefficient(1.7, 0.3)?;
        Ok((same == 0.0 && r.abs() == 0.8 && anti, format!("R(c,c)={same} |R(0.9,0.1)|={}", r.abs())))
    }));
    out.push(check("fourier_optimality", || {
        let sq = stripe_fourier_coefficient(&square_wave_profile(10_000, 1.0, 2), 2)?.norm();
        let probe = stripe_optimality_probe(1.0, 2, 1000, 7, 10_000)?;
        let (measured, predicted, cross) = bragg_coupling(128, 0.5, 2, 1, 1)?;
        let rel = (measured - predicted).abs() / predicted;
        Ok((
            (sq - 2.0 / PI).abs() < 1e-3 && probe.violations == 0 && cross <= 1e-10 && rel < 1e-3,
            format!(
                "square={sq:.6} bound={:.6} probe_max={:.6} bragg_rel_err={rel:.2e} cross_m={cross:.1e}",
                probe.bound, probe.max_observed
            ),
        ))
    }));
    out.push(check("phase_lag", || {
        let r = phase_lag_check(16, 20.0, 1.0, 0.01, 1)?;
        Ok((
            r.sign_flips(),
            format!(
                "resonance={:.3}Hz phase_below={:.3} phase_above={:.3}",
                r.resonance_hz, r.below.phase, r.above.phase
            ),
        ))
    }));
    out.push(check("throughput", || {
        let t = measure_throughput(64, 5_000, UpdateScheme::Staggered)?;
        Ok((
            t.steps_per_second >= 10_000.0,
            format!("grid={} steps_per_sec={:.0}", t.grid_size, t.steps_per_second),
        ))
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_peaks_at_centre() {
        let mut src = blob_source(5, 1.0, 1.0);
        let s = src(0.25);
        assert!((s.get(2, 2) - 1.0).abs() < 1e-12);
        assert!(s.get(0, 0) < s.get(1, 1));
    }

    #[test]
    fn eigen_grid_is_tight() {
        assert!(eigen_grid_max_error(5, 10.0, 10.0, 0.01) < 1e-9);
    }
}
