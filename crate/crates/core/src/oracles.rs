//! Independent numerical checks of the lattice's closed-form properties.
//!
//! Nothing here is used by the pipeline; these functions recompute known
//! results by a second route (eigen-decomposition, brute-force sums, direct
//! integration) so the fast paths can be validated against them.

use std::f64::consts::{PI, TAU};

use nalgebra::{Complex, DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{OwmError, Result};
use crate::frequency_map::stripe_profile;
use crate::grid::Field;
use crate::lattice::{divergence, gradient, Boundary, Lattice, LatticeConfig, LatticeState, UpdateScheme};

type C64 = Complex<f64>;

fn i_unit() -> C64 {
    C64::new(0.0, 1.0)
}

/// Eigenvalues of a complex 3x3 matrix from its Schur form.
pub fn eigenvalues3(m: &Matrix3<C64>) -> [C64; 3] {
    let (_, t) = m.schur().unpack();
    [t[(0, 0)], t[(1, 1)], t[(2, 2)]]
}

/// Fourier symbol of the implicitly damped update with continuous derivatives
/// (`d/dx -> i xi`), as used for the local resonance relation.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSymbol {
    pub xi_x: f64,
    pub xi_y: f64,
    pub matrix: Matrix3<C64>,
}

impl FourierSymbol {
    pub fn new(c: f64, k_p: f64, k_v: f64, dt: f64, xi_x: f64, xi_y: f64) -> Self {
        let a = 1.0 / (1.0 + dt * k_p);
        let b = 1.0 / (1.0 + dt * k_v);
        let i = i_unit();
        let r = |v: f64| C64::new(v, 0.0);
        let matrix = Matrix3::new(
            r(a),
            -i * (a * c * c * dt * xi_x),
            -i * (a * c * c * dt * xi_y),
            -i * (b * dt * xi_x),
            r(b),
            r(0.0),
            -i * (b * dt * xi_y),
            r(0.0),
            r(b),
        );
        Self { xi_x, xi_y, matrix }
    }

    pub fn eigenvalues(&self) -> [C64; 3] {
        eigenvalues3(&self.matrix)
    }

    /// The eigenvalue with the largest imaginary magnitude (the oscillatory pair).
    pub fn oscillatory_eigenvalue(&self) -> C64 {
        let ev = self.eigenvalues();
        *ev.iter()
            .max_by(|a, b| a.im.abs().total_cmp(&b.im.abs()))
            .expect("three eigenvalues")
    }

    /// `|arg lambda| / (pi dt)`, the same convention as
    /// [`local_resonance_frequency`].
    pub fn eigen_frequency(&self, dt: f64) -> f64 {
        self.oscillatory_eigenvalue().arg().abs() / (PI * dt)
    }
}

/// Closed-form local characteristic frequency
/// `(1/(pi dt)) atan(2 c dt xi / (sqrt(ap av) (1/ap + 1/av)))`, with
/// `ap = 1 + dt k_p` and `av = 1 + dt k_v`.
pub fn local_resonance_frequency(c: f64, k_p: f64, k_v: f64, dt: f64, xi_mag: f64) -> f64 {
    let ap = 1.0 + dt * k_p;
    let av = 1.0 + dt * k_v;
    let arg = 2.0 * c * dt * xi_mag / ((ap * av).sqrt() * (1.0 / ap + 1.0 / av));
    arg.atan() / (PI * dt)
}

/// Amplification matrix of one lattice step for the spatial mode
/// `exp(i (xi_x x + xi_y y))`, using the lattice's own difference operators.
#[allow(clippy::too_many_arguments)]
pub fn scheme_symbol(scheme: UpdateScheme, c: f64, k_p: f64, k_v: f64, dt: f64, dx: f64, xi_x: f64, xi_y: f64) -> Matrix3<C64> {
    let i = i_unit();
    let one = C64::new(1.0, 0.0);
    let fwd = |xi: f64| ((i * xi).exp() - one) / dx;
    let bwd = |xi: f64| (one - (-i * xi).exp()) / dx;
    let (gx, gy, bx, by) = (fwd(xi_x), fwd(xi_y), bwd(xi_x), bwd(xi_y));
    let c2 = c * c;
    let z = C64::new(0.0, 0.0);
    match scheme {
        UpdateScheme::Simultaneous => {
            let ap = one * (1.0 - dt * k_p);
            let av = one * (1.0 - dt * k_v);
            Matrix3::new(ap, -bx * (dt * c2), -by * (dt * c2), -gx * dt, av, z, -gy * dt, z, av)
        }
        UpdateScheme::Staggered => {
            let a = 1.0 / (1.0 + dt * k_p);
            let b = 1.0 / (1.0 + dt * k_v);
            // div applied to the freshly updated velocity; bx*gx + by*gy <= 0
            let s = bx * gx + by * gy;
            Matrix3::new(
                (one + s * (b * dt * dt * c2)) * a,
                -bx * (a * b * dt * c2),
                -by * (a * b * dt * c2),
                -gx * (b * dt),
                one * b,
                z,
                -gy * (b * dt),
                z,
                one * b,
            )
        }
    }
}

/// Radius treated as neutrally stable (round-off allowance on the unit circle).
pub const STABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StabilityCertificate {
    Stable { max_radius: f64, speed: f64 },
    Unstable { xi_x: f64, xi_y: f64, radius: f64, speed: f64 },
}

impl StabilityCertificate {
    pub fn is_stable(&self) -> bool {
        matches!(self, StabilityCertificate::Stable { .. })
    }

    pub fn radius(&self) -> f64 {
        match *self {
            StabilityCertificate::Stable { max_radius, .. } => max_radius,
            StabilityCertificate::Unstable { radius, .. } => radius,
        }
    }
}

/// Sweeps the step's amplification matrix over the `n x n` discrete
/// wavenumbers `2 pi j / n` at the field's maximum speed.
pub fn stability_check(cfg: &LatticeConfig, wavenumber_samples: usize) -> StabilityCertificate {
    let n = wavenumber_samples.max(1);
    let speed = cfg.max_speed();
    let mut worst = (0.0, 0.0, 0.0f64);
    for jx in 0..n {
        for jy in 0..n {
            let xi_x = TAU * jx as f64 / n as f64;
            let xi_y = TAU * jy as f64 / n as f64;
            let m = scheme_symbol(cfg.scheme, speed, cfg.k_p, cfg.k_v, cfg.dt, cfg.dx, xi_x, xi_y);
            let radius = eigenvalues3(&m).iter().map(|l| l.norm()).fold(0.0, f64::max);
            if radius > worst.2 {
                worst = (xi_x, xi_y, radius);
            }
        }
    }
    if worst.2 <= 1.0 + STABILITY_TOLERANCE {
        StabilityCertificate::Stable {
            max_radius: worst.2,
            speed,
        }
    } else {
        StabilityCertificate::Unstable {
            xi_x: worst.0,
            xi_y: worst.1,
            radius: worst.2,
            speed,
        }
    }
}

/// A stepped run with its sources. `sources[n]` is applied on the step from
/// `states[n]` to `states[n + 1]`; one extra source is kept past the end so
/// centred time differences of `S` exist at every interior step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: LatticeConfig,
    pub states: Vec<LatticeState>,
    pub sources: Vec<Field>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Steps `cfg` from rest for `steps` steps with `source(t)` evaluated at `t = n dt`.
pub fn record_trajectory(cfg: LatticeConfig, steps: usize, mut source: impl FnMut(f64) -> Field) -> Result<Trajectory> {
    let mut lattice = Lattice::new(cfg.clone())?;
    let mut state = lattice.zero_state();
    let mut states = Vec::with_capacity(steps + 1);
    let mut sources = Vec::with_capacity(steps + 1);
    states.push(state.clone());
    for n in 0..=steps {
        let s = source(n as f64 * cfg.dt);
        if n < steps {
            lattice.step(&mut state, &s)?;
            states.push(state.clone());
        }
        sources.push(s);
    }
    Ok(Trajectory {
        config: cfg,
        states,
        sources,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    #[serde(skip)]
    pub series: Vec<f64>,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// Scale used for normalization.
    pub scale: f64,
    pub normalized_max: f64,
    pub normalized_mean: f64,
}

impl ResidualReport {
    fn from_series(series: Vec<f64>, scale: f64) -> Self {
        let max_abs = series.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
        let mean_abs = if series.is_empty() {
            0.0
        } else {
            series.iter().map(|r| r.abs()).sum::<f64>() / series.len() as f64
        };
        let norm = |v: f64| if scale > 0.0 { v / scale } else { v };
        Self {
            max_abs,
            mean_abs,
            scale,
            normalized_max: norm(max_abs),
            normalized_mean: norm(mean_abs),
            series,
        }
    }
}

fn energy(s: &LatticeState) -> f64 {
    let sq = |f: &Field| f.as_slice().iter().map(|v| v * v).sum::<f64>();
    0.5 * (sq(&s.p) + sq(&s.vx) + sq(&s.vy))
}

/// Right-hand side of the energy law
/// `dE/dt = sum[p S - k_p p^2 - k_v |v|^2 - (c^2 - 1) p div v]` at one state.
pub fn energy_rate(cfg: &LatticeConfig, s: &LatticeState, source: &Field) -> f64 {
    let div = divergence(&s.vx, &s.vy, cfg.boundary, cfg.dx);
    let mut total = 0.0;
    for i in 0..s.p.len() {
        let p = s.p.as_slice()[i];
        let c = cfg.speed_field.as_slice()[i];
        let v2 = s.vx.as_slice()[i].powi(2) + s.vy.as_slice()[i].powi(2);
        total += p * source.as_slice()[i] - cfg.k_p * p * p - cfg.k_v * v2 - (c * c - 1.0) * p * div.as_slice()[i];
    }
    total
}

/// `(E_{n+1} - E_n)/dt - RHS(n)` for every step, normalized by `max E`.
pub fn energy_balance_residual(traj: &Trajectory) -> Result<ResidualReport> {
    if traj.config.boundary != Boundary::Periodic {
        return Err(OwmError::Contract("energy balance requires periodic boundaries".into()));
    }
    if traj.states.len() < 3 {
        return Err(OwmError::InsufficientData {
            needed: 3,
            got: traj.states.len(),
        });
    }
    let dt = traj.config.dt;
    let energies: Vec<f64> = traj.states.iter().map(energy).collect();
    let series = (0..traj.steps())
        .map(|n| (energies[n + 1] - energies[n]) / dt - energy_rate(&traj.config, &traj.states[n], &traj.sources[n]))
        .collect();
    let scale = energies.iter().fold(0.0, |m: f64, e| m.max(*e));
    Ok(ResidualReport::from_series(series, scale))
}

/// Terms of the second-order form at one interior step, summed in quadrature
/// over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrderTerms {
    pub lhs_norm: f64,
    pub residual_norm: f64,
    /// Largest magnitude of the `(k_v v + grad p) . grad c^2` term.
    pub coupling_max: f64,
}

/// Both sides of
/// `p_tt + (k_p + k_v) p_t + k_p k_v p = div(c^2 grad p) + (k_v v + grad p) . grad c^2 + k_v S + S_t`
/// evaluated with centred time differences and the lattice's difference operators.
pub fn second_order_terms(traj: &Trajectory, n: usize) -> SecondOrderTerms {
    let cfg = &traj.config;
    let (dt, dx) = (cfg.dt, cfg.dx);
    let (prev, cur, next) = (&traj.states[n - 1], &traj.states[n], &traj.states[n + 1]);
    let gamma = cfg.k_p + cfg.k_v;
    let mu = cfg.k_p * cfg.k_v;
    let c2 = Field::from_vec(
        cfg.speed_field.size(),
        cfg.speed_field.as_slice().iter().map(|c| c * c).collect(),
    )
    .expect("same shape");
    let (px, py) = gradient(&cur.p, cfg.boundary, dx);
    let mut fx = px.clone();
    let mut fy = py.clone();
    for i in 0..fx.len() {
        fx.as_mut_slice()[i] *= c2.as_slice()[i];
        fy.as_mut_slice()[i] *= c2.as_slice()[i];
    }
    let flux_div = divergence(&fx, &fy, cfg.boundary, dx);
    let (cx, cy) = gradient(&c2, cfg.boundary, dx);
    let (mut lhs_sq, mut res_sq, mut coupling_max) = (0.0, 0.0, 0.0f64);
    for i in 0..cur.p.len() {
        let (pm, p0, pp) = (prev.p.as_slice()[i], cur.p.as_slice()[i], next.p.as_slice()[i]);
        let lhs = (pp - 2.0 * p0 + pm) / (dt * dt) + gamma * (pp - pm) / (2.0 * dt) + mu * p0;
        let coupling = (cfg.k_v * cur.vx.as_slice()[i] + px.as_slice()[i]) * cx.as_slice()[i]
            + (cfg.k_v * cur.vy.as_slice()[i] + py.as_slice()[i]) * cy.as_slice()[i];
        let s_t = (traj.sources[n + 1].as_slice()[i] - traj.sources[n - 1].as_slice()[i]) / (2.0 * dt);
        let rhs = flux_div.as_slice()[i] + coupling + cfg.k_v * traj.sources[n].as_slice()[i] + s_t;
        lhs_sq += lhs * lhs;
        res_sq += (lhs - rhs).powi(2);
        coupling_max = coupling_max.max(coupling.abs());
    }
    SecondOrderTerms {
        lhs_norm: lhs_sq.sqrt(),
        residual_norm: res_sq.sqrt(),
        coupling_max,
    }
}

/// Residual of the second-order form at every interior step, normalized by
/// the largest left-hand side.
pub fn second_order_residual(traj: &Trajectory) -> Result<ResidualReport> {
    if traj.states.len() < 3 {
        return Err(OwmError::InsufficientData {
            needed: 3,
            got: traj.states.len(),
        });
    }
    let terms: Vec<SecondOrderTerms> = (1..traj.steps()).map(|n| second_order_terms(traj, n)).collect();
    let scale = terms.iter().fold(0.0, |m: f64, t| m.max(t.lhs_norm));
    Ok(ResidualReport::from_series(
        terms.iter().map(|t| t.residual_norm).collect(),
        scale,
    ))
}

/// Largest `(k_v v + grad p) . grad c^2` term over a trajectory.
pub fn max_coupling_term(traj: &Trajectory) -> f64 {
    (1..traj.steps())
        .map(|n| second_order_terms(traj, n).coupling_max)
        .fold(0.0, f64::max)
}

/// Interface reflection `(c2 - c1) / (c1 + c2)`.
pub fn reflection_coefficient(c1: f64, c2: f64) -> Result<f64> {
    let sum = c1 + c2;
    if !(sum > 0.0) {
        return Err(OwmError::Domain(format!("reflection needs c1 + c2 > 0, got {sum}")));
    }
    Ok((c2 - c1) / sum)
}

/// Rectangle-rule `(1/N) sum f_j exp(i 2 pi q j / N)` over one period.
pub fn stripe_fourier_coefficient(profile: &[f64], q: usize) -> Result<C64> {
    let n = profile.len();
    let needed = (4 * q).max(1);
    if n < needed {
        return Err(OwmError::InsufficientData { needed, got: n });
    }
    let step = TAU * q as f64 / n as f64;
    let sum = profile
        .iter()
        .enumerate()
        .fold(C64::new(0.0, 0.0), |acc, (j, &f)| acc + C64::from_polar(f, step * j as f64));
    Ok(sum / n as f64)
}

/// Bragg square wave: `+-A` with `q0` periods over `n` samples.
pub fn square_wave_profile(n: usize, amplitude: f64, q0: usize) -> Vec<f64> {
    stripe_profile(n, amplitude, q0)
}

/// Mode `(m, n)` on a periodic `G x G` grid.
pub type Mode = (i64, i64);

#[derive(Debug, Clone, PartialEq)]
pub struct ModalCoupling {
    pub modes: Vec<Mode>,
    /// `coupling[(a, b)]` couples mode `modes[a]` to `modes[b]`.
    pub coupling: DMatrix<C64>,
    /// x-averaged stripe coefficients `V_q`, `q = 0..G`.
    pub fourier_coeffs: Vec<C64>,
}

impl ModalCoupling {
    pub fn get(&self, from: Mode, to: Mode) -> Option<C64> {
        let a = self.modes.iter().position(|&m| m == from)?;
        let b = self.modes.iter().position(|&m| m == to)?;
        Some(self.coupling[(a, b)])
    }

    /// Largest `|C|` between modes with different `m`.
    pub fn max_cross_m(&self) -> f64 {
        let mut worst = 0.0f64;
        for (a, ma) in self.modes.iter().enumerate() {
            for (b, mb) in self.modes.iter().enumerate() {
                if ma.0 != mb.0 {
                    worst = worst.max(self.coupling[(a, b)].norm());
                }
            }
        }
        worst
    }
}

/// Squared wavenumber of mode `(m, n)` on a square of side `length`.
pub fn mode_wavenumber_sq(mode: Mode, length: f64) -> f64 {
    let k = TAU / length;
    k * k * ((mode.0 * mode.0 + mode.1 * mode.1) as f64)
}

/// `C[(m,n),(m',n')] = k^2_{m',n'} (1/G^2) sum delta_c2(x,y) exp(i 2 pi ((m-m') x + (n-n') y) / G)`
/// by direct summation over the grid.
pub fn modal_coupling_matrix(delta_c2: &Field, modes: &[Mode], dx: f64) -> ModalCoupling {
    let g = delta_c2.size();
    let gi = g as i64;
    let twiddle: Vec<C64> = (0..g).map(|k| C64::from_polar(1.0, TAU * k as f64 / g as f64)).collect();
    let norm = 1.0 / (g * g) as f64;
    let overlap = |dm: i64, dn: i64| -> C64 {
        let (dm, dn) = (dm.rem_euclid(gi) as usize, dn.rem_euclid(gi) as usize);
        let mut acc = C64::new(0.0, 0.0);
        for x in 0..g {
            for y in 0..g {
                let v = delta_c2.get(x, y);
                if v != 0.0 {
                    acc += twiddle[(dm * x + dn * y) % g] * v;
                }
            }
        }
        acc * norm
    };
    let mut cache = std::collections::HashMap::new();
    let length = g as f64 * dx;
    let k = modes.len();
    let mut coupling = DMatrix::from_element(k, k, C64::new(0.0, 0.0));
    for (a, &(m, n)) in modes.iter().enumerate() {
        for (b, &(m2, n2)) in modes.iter().enumerate() {
            let key = ((m - m2).rem_euclid(gi), (n - n2).rem_euclid(gi));
            let o = *cache.entry(key).or_insert_with(|| overlap(key.0, key.1));
            coupling[(a, b)] = o * mode_wavenumber_sq((m2, n2), length);
        }
    }
    let fourier_coeffs = (0..g as i64).map(|q| overlap(0, q)).collect();
    ModalCoupling {
        modes: modes.to_vec(),
        coupling,
        fourier_coeffs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub trials: usize,
    pub bound: f64,
    pub max_observed: f64,
    pub square_wave: f64,
    pub violations: usize,
}

/// Samples `trials` random profiles bounded by `amplitude` (random Fourier
/// mixtures, rescaled and clipped) and records the largest `|V_q0|`.
pub fn stripe_optimality_probe(amplitude: f64, q0: usize, trials: usize, seed: u64, samples: usize) -> Result<OptimalityReport> {
    let bound = 2.0 * amplitude.abs() / PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_observed = 0.0f64;
    let mut violations = 0;
    let mut profile = vec![0.0; samples];
    for _ in 0..trials {
        let harmonics = rng.random_range(1..=8);
        let comps: Vec<(f64, f64, f64)> = (0..harmonics)
            .map(|h| {
                // always include the target harmonic once, others at random
                let q = if h == 0 { q0 } else { rng.random_range(1..=4 * q0.max(1) + 8) };
                (q as f64, rng.random_range(-1.0..1.0), rng.random_range(0.0..TAU))
            })
            .collect();
        for (j, slot) in profile.iter_mut().enumerate() {
            let y = (j as f64 + 0.5) / samples as f64;
            *slot = comps.iter().map(|(q, a, ph)| a * (TAU * q * y + ph).cos()).sum();
        }
        let peak = profile.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let gain = if peak > 0.0 {
            rng.random_range(0.5..20.0) * amplitude.abs() / peak
        } else {
            0.0
        };
        for v in profile.iter_mut() {
            *v = (*v * gain).clamp(-amplitude.abs(), amplitude.abs());
        }
        let coeff = stripe_fourier_coefficient(&profile, q0)?.norm();
        if coeff > bound + 1e-6 {
            violations += 1;
        }
        max_observed = max_observed.max(coeff);
    }
    let square_wave = stripe_fourier_coefficient(&square_wave_profile(samples, amplitude, q0), q0)?.norm();
    Ok(OptimalityReport {
        trials,
        bound,
        max_observed,
        square_wave,
        violations,
    })
}

/// Steady-state phase of a driven lattice mode relative to the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseMeasurement {
    pub drive_hz: f64,
    /// Radians; positive means the pressure response leads the drive.
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseLagReport {
    pub resonance_hz: f64,
    pub below: PhaseMeasurement,
    pub above: PhaseMeasurement,
}

impl PhaseLagReport {
    /// The response leads below resonance and lags above it.
    pub fn sign_flips(&self) -> bool {
        self.below.phase > 0.0 && self.above.phase < 0.0
    }
}

/// Drives a homogeneous periodic lattice with `cos(xi x) sin(w t)` and returns
/// the lock-in phase of the `cos(xi x)` component of `p` relative to the drive.
pub fn driven_mode_phase(cfg: &LatticeConfig, mode: usize, drive_hz: f64, settle_s: f64, measure_s: f64) -> Result<f64> {
    let g = cfg.grid_size();
    let xi = TAU * mode as f64 / g as f64;
    let shape: Vec<f64> = (0..g).map(|x| (xi * x as f64).cos()).collect();
    let mut lattice = Lattice::new(cfg.clone())?;
    let mut state = lattice.zero_state();
    let mut src = Field::zeros(g);
    let w = TAU * drive_hz;
    let settle = (settle_s / cfg.dt).round() as usize;
    let measure = (measure_s / cfg.dt).round() as usize;
    let (mut in_phase, mut quadrature) = (0.0, 0.0);
    for n in 0..settle + measure {
        let t = n as f64 * cfg.dt;
        let s = (w * t).sin();
        for (x, &sx) in shape.iter().enumerate() {
            for y in 0..g {
                src.set(x, y, sx * s);
            }
        }
        lattice.step(&mut state, &src)?;
        if n >= settle {
            // p after this step belongs to t + dt
            let t1 = t + cfg.dt;
            let amp: f64 = (0..g)
                .map(|x| shape[x] * (0..g).map(|y| state.p.get(x, y)).sum::<f64>())
                .sum();
            in_phase += amp * (w * t1).sin();
            quadrature += amp * (w * t1).cos();
        }
    }
    Ok(quadrature.atan2(in_phase))
}

/// Phase of the mode response at half and twice its resonance frequency on a
/// lightly damped homogeneous lattice (`k_v = 0`). The angular resonance is
/// `theta / dt` with `theta` from the closed-form relation at the lattice
/// wavenumber `2 sin(xi/2)/dx`.
pub fn phase_lag_check(grid_size: usize, speed: f64, k_p: f64, dt: f64, mode: usize) -> Result<PhaseLagReport> {
    let cfg = LatticeConfig::uniform(grid_size, speed, k_p, 0.0, dt);
    let xi = TAU * mode as f64 / grid_size as f64;
    let xi_eff = 2.0 * (xi / 2.0).sin() / cfg.dx;
    // f = theta / (pi dt) and w = theta / dt, so the resonance in Hz is f / 2
    let resonance_hz = local_resonance_frequency(speed, k_p, 0.0, dt, xi_eff) / 2.0;
    let period = 1.0 / resonance_hz;
    let settle = 12.0 / k_p.max(1e-3) + 4.0 * period;
    let measure = 40.0 * period;
    let below_hz = 0.5 * resonance_hz;
    let above_hz = 2.0 * resonance_hz;
    Ok(PhaseLagReport {
        resonance_hz,
        below: PhaseMeasurement {
            drive_hz: below_hz,
            phase: driven_mode_phase(&cfg, mode, below_hz, settle, measure)?,
        },
        above: PhaseMeasurement {
            drive_hz: above_hz,
            phase: driven_mode_phase(&cfg, mode, above_hz, settle, measure)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency_map::{build_striped_field, FrequencyMap, MapConfig};

    #[test]
    fn resonance_at_zero_wavenumber() {
        assert_eq!(local_resonance_frequency(10.0, 10.0, 10.0, 0.01, 0.0), 0.0);
    }

    #[test]
    fn balanced_damping_gives_conjugate_pair() {
        let sym = FourierSymbol::new(30.0, 10.0, 10.0, 0.01, 0.7, 1.1);
        let ev = sym.eigenvalues();
        let mut complex: Vec<C64> = ev.iter().copied().filter(|l| l.im.abs() > 1e-9).collect();
        assert_eq!(complex.len(), 2);
        complex.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((complex[0].re - 1.0 / 1.1).abs() < 1e-12);
        assert!((complex[1].re - 1.0 / 1.1).abs() < 1e-12);
        assert!((complex[0].im + complex[1].im).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_eigen_decomposition() {
        for &c in &[0.1, 5.0, 70.0] {
            for &xi in &[0.05, 1.0, 4.4] {
                let f = local_resonance_frequency(c, 10.0, 10.0, 0.01, xi);
                let e = FourierSymbol::new(c, 10.0, 10.0, 0.01, xi / 2f64.sqrt(), xi / 2f64.sqrt()).eigen_frequency(0.01);
                assert!((f - e).abs() <= 1e-9 * f, "c={c} xi={xi}: {f} vs {e}");
            }
        }
    }

    #[test]
    fn stability_examples() {
        let map = FrequencyMap::build(&MapConfig::default()).unwrap();
        let cfg = LatticeConfig::from_map(&map);
        assert!(stability_check(&cfg, 64).is_stable());

        let mut fast = cfg.clone();
        fast.speed_field.scale(10.0);
        assert!(!stability_check(&fast, 64).is_stable());

        let still = LatticeConfig::uniform(8, 0.0, 10.0, 10.0, 0.01);
        let cert = stability_check(&still, 8);
        assert!(cert.is_stable());
        // the symbol is defective here (repeated eigenvalue with a Jordan
        // block), so the computed eigenvalues carry O(sqrt(eps)) error
        assert!((cert.radius() - 1.0 / 1.1).abs() < 1e-8, "{cert:?}");

        let simultaneous = cfg.with_scheme(UpdateScheme::Simultaneous);
        assert!(!stability_check(&simultaneous, 64).is_stable());
    }

    #[test]
    fn symbol_matches_lattice_step() {
        // a single Fourier mode must be scaled exactly by the symbol
        let g = 8;
        for scheme in [UpdateScheme::Staggered, UpdateScheme::Simultaneous] {
            let cfg = LatticeConfig::uniform(g, 2.0, 3.0, 1.5, 0.05).with_scheme(scheme);
            let (jx, jy) = (1usize, 3usize);
            let (xx, xy) = (TAU * jx as f64 / g as f64, TAU * jy as f64 / g as f64);
            let sym = scheme_symbol(scheme, 2.0, 3.0, 1.5, 0.05, 1.0, xx, xy);
            let h0 = [C64::new(0.3, 0.1), C64::new(-0.2, 0.4), C64::new(0.5, -0.6)];
            let wave = |x: usize, y: usize| C64::from_polar(1.0, xx * x as f64 + xy * y as f64);
            let re_field = |k: usize| Field::from_fn(g, |x, y| (h0[k] * wave(x, y)).re);
            let mut state = LatticeState {
                p: re_field(0),
                vx: re_field(1),
                vy: re_field(2),
                time_steps: 0,
            };
            Lattice::new(cfg).unwrap().step(&mut state, &Field::zeros(g)).unwrap();
            let h1: Vec<C64> = (0..3).map(|r| (0..3).map(|k| sym[(r, k)] * h0[k]).sum()).collect();
            for x in 0..g {
                for y in 0..g {
                    let w = wave(x, y);
                    assert!((state.p.get(x, y) - (h1[0] * w).re).abs() < 1e-12);
                    assert!((state.vx.get(x, y) - (h1[1] * w).re).abs() < 1e-12);
                    assert!((state.vy.get(x, y) - (h1[2] * w).re).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_trajectory_has_zero_residuals() {
        let cfg = LatticeConfig::uniform(6, 1.0, 1.0, 1.0, 0.01);
        let traj = record_trajectory(cfg, 20, |_| Field::zeros(6)).unwrap();
        assert_eq!(energy_balance_residual(&traj).unwrap().max_abs, 0.0);
        assert_eq!(second_order_residual(&traj).unwrap().max_abs, 0.0);
    }

    #[test]
    fn energy_balance_rejects_zero_flux() {
        let cfg = LatticeConfig::uniform(6, 1.0, 1.0, 1.0, 0.01).with_boundary(Boundary::ZeroFlux);
        let traj = record_trajectory(cfg, 5, |_| Field::zeros(6)).unwrap();
        assert!(matches!(energy_balance_residual(&traj), Err(OwmError::Contract(_))));
    }

    #[test]
    fn reflection_examples() {
        assert_eq!(reflection_coefficient(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(reflection_coefficient(0.0, 5.0).unwrap(), 1.0);
        assert_eq!(reflection_coefficient(0.9, 0.1).unwrap(), -0.8);
        assert!(reflection_coefficient(0.0, 0.0).is_err());
    }

    #[test]
    fn fourier_examples() {
        let sq = square_wave_profile(10_000, 1.0, 3);
        let v = stripe_fourier_coefficient(&sq, 3).unwrap().norm();
        assert!((v - 2.0 / PI).abs() < 1e-3);
        assert!(stripe_fourier_coefficient(&sq, 6).unwrap().norm() < 1e-3);
        assert!(stripe_fourier_coefficient(&vec![0.7; 100], 2).unwrap().norm() < 1e-15);
        assert!(matches!(
            stripe_fourier_coefficient(&[1.0; 7], 2),
            Err(OwmError::InsufficientData { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn coupling_examples() {
        let g = 32;
        let stripes = build_striped_field(g, 0.5, 1.0, 2).unwrap();
        let modes: Vec<Mode> = (-1..=1).flat_map(|m| (0..4).map(move |n| (m, n))).collect();
        let mc = modal_coupling_matrix(&stripes, &modes, 1.0);
        assert!(mc.max_cross_m() < 1e-10);
        let zero = modal_coupling_matrix(&Field::zeros(g), &modes, 1.0);
        assert!(zero.coupling.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn probe_with_zero_amplitude() {
        let r = stripe_optimality_probe(0.0, 2, 5, 1, 1000).unwrap();
        assert_eq!(r.max_observed, 0.0);
        assert_eq!(r.square_wave, 0.0);
    }

    #[test]
    fn phase_flips_across_resonance() {
        let r = phase_lag_check(16, 20.0, 1.0, 0.01, 1).unwrap();
        assert!(r.sign_flips(), "{r:?}");
    }
}
