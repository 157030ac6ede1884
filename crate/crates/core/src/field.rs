//! Stochastic Ginzburg-Landau field for the zigzag amplitude:
//!
//! `psi_tt - h(x)^2 psi_xx + eta psi_t + delta(x, t) psi + 2 A(x) psi^3 = eps(t)`
//!
//! discretized with central differences on a uniform grid and integrated with
//! the same half-kick / drift / OU / half-kick splitting as the ion chain.
//! The Langevin force on node `j` is scaled by `1 / sqrt(rho_j dx)`, which makes
//! the continuum noise correlator independent of the grid spacing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defects::{self, DefectCensus, Window, DEFAULT_FLOOR_FRACTION};
use crate::dynamics::{DynamicsError, LangevinParams, QuenchSchedule, RunOptions};
use crate::equilibrium::{self, ChainProfile, EquilibriumError};
use crate::rng::NoiseStream;

/// Fraction of the half-length at which the trapped field is clamped to zero.
pub const CLAMP_FRACTION: f64 = 0.95;
/// Largest grid the counter-addressed noise stream can serve per step.
pub const MAX_NODES: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid spacing {dx} exceeds the smallest lattice spacing {min_spacing}")]
    Resolution { dx: f64, min_spacing: f64 },
    #[error("CFL violation: dt * max(h) / dx = {courant} must stay below 0.5")]
    Cfl { courant: f64 },
    #[error("grid of {0} nodes is outside the supported range")]
    GridSize(usize),
    #[error("non-finite field value at node {node}, step {step}")]
    NonFinite { step: u64, node: usize },
    #[error("field stop rule not satisfied after {steps} steps (t = {t}, <|psi|> = {mean_abs:e}, needed {needed:e})")]
    Timeout {
        steps: u64,
        t: f64,
        mean_abs: f64,
        needed: f64,
    },
    #[error("no node reaches the ordered phase at nu_t^2 = {0}")]
    NoOrderedRegion(f64),
    #[error("only {0} nodes above the amplitude floor; defect count is indeterminate")]
    Indeterminate(usize),
    #[error("relaxation did not converge (residual {0:e})")]
    NotConverged(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Ring: node `M - 1` neighbours node 0.
    Periodic,
    /// End nodes pinned to zero.
    Clamped,
}

/// Coefficients of the field equation tabulated on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlCoefficients {
    pub grid: Vec<f64>,
    pub dx: f64,
    /// Linear mass density `m n(x)`.
    pub rho: Vec<f64>,
    /// Perturbation speed `omega0(x) a(x) sqrt(ln 2)`.
    pub h: Vec<f64>,
    /// Quartic coefficient `A(x)`.
    pub quartic: Vec<f64>,
    /// Local critical frequency squared; `delta = nu_t^2 - nu_c_sq`.
    pub nu_c_sq: Vec<f64>,
    pub boundary: Boundary,
}

impl GlCoefficients {
    /// Uniform ring of `nodes` grid points at spacing `dx`, for a chain of
    /// lattice spacing `a`.
    pub fn homogeneous(a: f64, nodes: usize, dx: f64) -> Result<GlCoefficients, FieldError> {
        if !(3..=MAX_NODES).contains(&nodes) {
            return Err(FieldError::GridSize(nodes));
        }
        if !(dx > 0.0 && dx <= a) {
            return Err(FieldError::Resolution { dx, min_spacing: a });
        }
        Ok(GlCoefficients {
            grid: (0..nodes).map(|j| j as f64 * dx).collect(),
            dx,
            rho: vec![1.0 / a; nodes],
            h: vec![equilibrium::perturbation_speed(a); nodes],
            quartic: vec![equilibrium::quartic_coefficient(a); nodes],
            nu_c_sq: vec![4.0 / (a * a * a); nodes],
            boundary: Boundary::Periodic,
        })
    }

    /// Trapped chain in the local density approximation, on `[-0.95 L, 0.95 L]`
    /// with clamped ends. `dx` defaults to half the central spacing.
    pub fn trapped(profile: &ChainProfile, dx: Option<f64>) -> Result<GlCoefficients, FieldError> {
        let a0 = profile.central_spacing;
        let dx = dx.unwrap_or(0.5 * a0);
        if !(dx > 0.0 && dx <= a0) {
            return Err(FieldError::Resolution { dx, min_spacing: a0 });
        }
        let edge = CLAMP_FRACTION * profile.half_length;
        let half = (edge / dx).floor() as usize;
        let nodes = 2 * half + 1;
        if !(3..=MAX_NODES).contains(&nodes) {
            return Err(FieldError::GridSize(nodes));
        }
        let grid: Vec<f64> = (0..nodes).map(|j| (j as f64 - half as f64) * dx).collect();
        let mut rho = Vec::with_capacity(nodes);
        let mut h = Vec::with_capacity(nodes);
        let mut quartic = Vec::with_capacity(nodes);
        let mut nu_c_sq = Vec::with_capacity(nodes);
        for &x in &grid {
            let a = profile.local_spacing(x)?;
            rho.push(1.0 / a);
            h.push(equilibrium::perturbation_speed(a));
            quartic.push(equilibrium::quartic_coefficient(a));
            nu_c_sq.push(profile.local_critical_freq_sq(x)?);
        }
        Ok(GlCoefficients {
            grid,
            dx,
            rho,
            h,
            quartic,
            nu_c_sq,
            boundary: Boundary::Clamped,
        })
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn delta(&self, j: usize, nu_t_sq: f64) -> f64 {
        nu_t_sq - self.nu_c_sq[j]
    }

    /// `sqrt(-delta / 2A)` at node `j`, zero in the disordered phase.
    pub fn stationary_amplitude(&self, j: usize, nu_t_sq: f64) -> f64 {
        let d = self.delta(j, nu_t_sq);
        if d >= 0.0 {
            0.0
        } else {
            (-d / (2.0 * self.quartic[j])).sqrt()
        }
    }

    /// `dt max(h) / dx`.
    pub fn courant(&self, dt: f64) -> f64 {
        dt * self.h.iter().cloned().fold(0.0, f64::max) / self.dx
    }

    pub fn check_cfl(&self, dt: f64) -> Result<(), FieldError> {
        let courant = self.courant(dt);
        if courant < 0.5 {
            Ok(())
        } else {
            Err(FieldError::Cfl { courant })
        }
    }

    /// Nodes in the ordered phase at `nu_t_sq`: the whole ring, or the central
    /// run of trapped nodes with `nu_c^2 > nu_t^2`.
    pub fn ordered_nodes(&self, nu_t_sq: f64) -> Result<Window, FieldError> {
        let m = self.nodes();
        match self.boundary {
            Boundary::Periodic => {
                if self.nu_c_sq[0] > nu_t_sq {
                    Ok(Window::new(0, m))
                } else {
                    Err(FieldError::NoOrderedRegion(nu_t_sq))
                }
            }
            Boundary::Clamped => {
                let centre = m / 2;
                if self.nu_c_sq[centre] <= nu_t_sq {
                    return Err(FieldError::NoOrderedRegion(nu_t_sq));
                }
                let mut start = centre;
                while start > 1 && self.nu_c_sq[start - 1] > nu_t_sq {
                    start -= 1;
                }
                let mut end = centre + 1;
                while end + 1 < m && self.nu_c_sq[end] > nu_t_sq {
                    end += 1;
                }
                Ok(Window::new(start, end))
            }
        }
    }

    /// Discrete energy per unit `rho dx`: kinetic, gradient and Landau terms.
    /// Conserved by the noise-free undamped dynamics when `rho` and `h` are
    /// uniform.
    pub fn energy(&self, state: &FieldState, nu_t_sq: f64) -> f64 {
        let m = self.nodes();
        let mut e = 0.0;
        for j in 0..m {
            let w = self.rho[j] * self.dx;
            let p = state.psi[j];
            let d = self.delta(j, nu_t_sq);
            e += w * (0.5 * state.dpsi[j] * state.dpsi[j] + 0.5 * d * p * p + 0.5 * self.quartic[j] * p.powi(4));
            let next = match (self.boundary, j + 1 < m) {
                (_, true) => Some(j + 1),
                (Boundary::Periodic, false) => Some(0),
                (Boundary::Clamped, false) => None,
            };
            if let Some(k) = next {
                let g = (state.psi[k] - p) / self.dx;
                e += w * 0.5 * self.h[j] * self.h[j] * g * g;
            }
        }
        e
    }

    /// Acceleration of every node; pinned ends get zero.
    pub fn accelerations(&self, psi: &[f64], nu_t_sq: f64, out: &mut [f64]) {
        let m = psi.len();
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let local = |j: usize, left: f64, right: f64| {
            let p = psi[j];
            self.h[j] * self.h[j] * (left - 2.0 * p + right) * inv_dx2
                - (nu_t_sq - self.nu_c_sq[j]) * p
                - 2.0 * self.quartic[j] * p * p * p
        };
        for j in 1..m - 1 {
            out[j] = local(j, psi[j - 1], psi[j + 1]);
        }
        match self.boundary {
            Boundary::Periodic => {
                out[0] = local(0, psi[m - 1], psi[1]);
                out[m - 1] = local(m - 1, psi[m - 2], psi[0]);
            }
            Boundary::Clamped => {
                out[0] = 0.0;
                out[m - 1] = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub boundary: Boundary,
}

impl FieldState {
    pub fn zeros(t: f64, nodes: usize, boundary: Boundary) -> FieldState {
        FieldState {
            t,
            psi: vec![0.0; nodes],
            dpsi: vec![0.0; nodes],
            boundary,
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

/// Splitting integrator for the field, with cached accelerations.
#[derive(Debug, Clone)]
pub struct FieldIntegrator {
    dt: f64,
    decay: f64,
    /// Per-node noise standard deviation.
    sigma: Vec<f64>,
    acc: Vec<f64>,
    cached: Option<(f64, f64)>,
    steps: u64,
}

impl FieldIntegrator {
    pub fn new(coeffs: &GlCoefficients, params: &LangevinParams) -> Result<FieldIntegrator, FieldError> {
        coeffs.check_cfl(params.dt)?;
        let (decay, sigma) = params.ou_coefficients(params.dt);
        let mut node_sigma: Vec<f64> = coeffs
            .rho
            .iter()
            .map(|r| sigma / (r * coeffs.dx).sqrt())
            .collect();
        if coeffs.boundary == Boundary::Clamped {
            let m = node_sigma.len();
            node_sigma[0] = 0.0;
            node_sigma[m - 1] = 0.0;
        }
        Ok(FieldIntegrator {
            dt: params.dt,
            decay,
            sigma: node_sigma,
            acc: vec![0.0; coeffs.nodes()],
            cached: None,
            steps: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn invalidate(&mut self) {
        self.cached = None;
    }

    /// One step with `nu_t^2` going from `nu_now` to `nu_next`.
    pub fn advance(
        &mut self,
        state: &mut FieldState,
        coeffs: &GlCoefficients,
        nu_now: f64,
        nu_next: f64,
        noise: &mut NoiseStream,
    ) -> Result<(), FieldError> {
        let step = self.steps;
        if self.cached != Some((state.t, nu_now)) {
            coeffs.accelerations(&state.psi, nu_now, &mut self.acc);
        }
        let dt = self.dt;
        let half = 0.5 * dt;
        for ((p, v), a) in state.psi.iter_mut().zip(state.dpsi.iter_mut()).zip(&self.acc) {
            *v += half * a;
            *p += dt * *v;
        }
        if self.sigma.iter().any(|&s| s > 0.0) {
            noise.begin_step(step);
            for (v, s) in state.dpsi.iter_mut().zip(&self.sigma) {
                *v = self.decay * *v + s * noise.normal();
            }
        } else {
            for v in state.dpsi.iter_mut() {
                *v *= self.decay;
            }
        }
        if state.boundary == Boundary::Clamped {
            let m = state.psi.len();
            state.dpsi[0] = 0.0;
            state.dpsi[m - 1] = 0.0;
        }
        state.t += dt;
        self.steps += 1;
        coeffs.accelerations(&state.psi, nu_next, &mut self.acc);
        for (v, a) in state.dpsi.iter_mut().zip(&self.acc) {
            *v += half * a;
        }
        if let Some(node) = (0..state.psi.len()).find(|&j| !(state.psi[j].is_finite() && state.dpsi[j].is_finite())) {
            self.cached = None;
            return Err(FieldError::NonFinite { step, node });
        }
        self.cached = Some((state.t, nu_next));
        Ok(())
    }
}

/// Single step of `state` under `schedule`, numbered `step_index` for the
/// noise stream.
pub fn step_field(
    state: &FieldState,
    coeffs: &GlCoefficients,
    schedule: &QuenchSchedule,
    params: &LangevinParams,
    noise: &mut NoiseStream,
    step_index: u64,
) -> Result<FieldState, FieldError> {
    schedule.transverse_frequency_sq(state.t)?;
    let mut integ = FieldIntegrator::new(coeffs, params)?;
    integ.steps = step_index;
    let mut next = state.clone();
    let now = schedule.clamped(next.t);
    let after = schedule.clamped(next.t + params.dt);
    integ.advance(&mut next, coeffs, now, after, noise)?;
    Ok(next)
}

/// Noise-free damped relaxation at fixed `nu_t_sq` from a uniform seed of
/// amplitude `seed` on the interior nodes.
pub fn relax_field(
    coeffs: &GlCoefficients,
    nu_t_sq: f64,
    seed: f64,
    tol: f64,
) -> Result<FieldState, FieldError> {
    let m = coeffs.nodes();
    let h_max = coeffs.h.iter().cloned().fold(0.0, f64::max);
    let stiff = (4.0 * h_max * h_max / (coeffs.dx * coeffs.dx)
        + coeffs
            .nu_c_sq
            .iter()
            .map(|c| (nu_t_sq - c).abs())
            .fold(0.0, f64::max))
    .sqrt();
    let dt = 0.2 / stiff;
    let eta = 2.0 * coeffs
        .nu_c_sq
        .iter()
        .map(|c| (c - nu_t_sq).abs().sqrt())
        .fold(0.0, f64::max)
        .max(1e-3);
    let params = LangevinParams {
        eta,
        noise_amp: 0.0,
        dt,
        seed: 0,
    };
    let mut integ = FieldIntegrator::new(coeffs, &params)?;
    let mut noise = NoiseStream::new(0);
    let mut state = FieldState::zeros(0.0, m, coeffs.boundary);
    for j in 0..m {
        state.psi[j] = seed;
    }
    if coeffs.boundary == Boundary::Clamped {
        state.psi[0] = 0.0;
        state.psi[m - 1] = 0.0;
    }
    let mut acc = vec![0.0; m];
    let max_steps = 50_000_000u64;
    let mut residual = f64::INFINITY;
    while integ.steps() < max_steps {
        for _ in 0..100 {
            integ.advance(&mut state, coeffs, nu_t_sq, nu_t_sq, &mut noise)?;
        }
        coeffs.accelerations(&state.psi, nu_t_sq, &mut acc);
        residual = acc
            .iter()
            .chain(&state.dpsi)
            .fold(0.0, |r: f64, v| r.max(v.abs()));
        if residual < tol {
            return Ok(state);
        }
    }
    Err(FieldError::NotConverged(residual))
}

/// Mean of `|psi|` over `window`.
pub fn mean_abs_field(psi: &[f64], window: Window) -> f64 {
    defects::mean_abs_transverse(psi, window)
}

/// Sign changes of the field in `window`, with an amplitude floor defaulting
/// to a tenth of the window mean of `|psi|`. The whole ring is counted with
/// periodic wrap-around. The density is per unit length (grid spacing `dx`).
pub fn count_field_defects(
    psi: &[f64],
    window: Window,
    boundary: Boundary,
    dx: f64,
    floor: Option<f64>,
) -> Result<DefectCensus, FieldError> {
    let floor = floor.unwrap_or_else(|| DEFAULT_FLOOR_FRACTION * mean_abs_field(psi, window));
    let s = defects::signs(&psi[window.range()], floor);
    let nonzero = s.iter().filter(|&&v| v != 0).count();
    if nonzero < 2 {
        return Err(FieldError::Indeterminate(nonzero));
    }
    let periodic = boundary == Boundary::Periodic && window.start == 0 && window.end == psi.len();
    let found = defects::sign_changes(&s, window.start, periodic);
    Ok(DefectCensus {
        window,
        density: found.len() as f64 / (window.len() as f64 * dx),
        defects: found,
    })
}

/// Stop rule of a field quench: `t >= min_time` and the window mean of
/// `|psi|` at least `target_fraction * reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStopRule {
    pub target_fraction: f64,
    pub reference: f64,
    pub min_time: f64,
    pub window: Window,
}

impl FieldStopRule {
    pub fn threshold(&self) -> f64 {
        self.target_fraction * self.reference
    }

    pub fn should_stop(&self, state: &FieldState) -> bool {
        state.t >= self.min_time && mean_abs_field(&state.psi, self.window) >= self.threshold()
    }
}

/// Stop rule for the ordered region of the final trap, with the reference
/// taken from the noise-free relaxed field.
pub fn field_stop_rule(
    coeffs: &GlCoefficients,
    schedule: &QuenchSchedule,
    target_fraction: f64,
) -> Result<FieldStopRule, FieldError> {
    let final_sq = schedule.final_sq();
    let window = coeffs.ordered_nodes(final_sq)?;
    let reference = match coeffs.boundary {
        Boundary::Periodic => coeffs.stationary_amplitude(0, final_sq),
        Boundary::Clamped => {
            let seed = 0.5 * coeffs.stationary_amplitude(coeffs.nodes() / 2, final_sq);
            let relaxed = relax_field(coeffs, final_sq, seed, 1e-9)?;
            mean_abs_field(&relaxed.psi, window)
        }
    };
    Ok(FieldStopRule {
        target_fraction,
        reference,
        min_time: schedule.tau_q,
        window,
    })
}

#[derive(Debug, Clone)]
pub struct FieldOutcome {
    pub state: FieldState,
    pub steps: u64,
    pub census: DefectCensus,
    pub snapshots: Vec<FieldState>,
}

/// One field realization: zero field at `t = -tau_q` (optionally held at the
/// initial confinement for `10 / eta` with noise on first), ramped through the
/// schedule until `stop` fires, then counted over the stop rule's window.
pub fn run_field_quench(
    coeffs: &GlCoefficients,
    schedule: &QuenchSchedule,
    params: &LangevinParams,
    stop: &FieldStopRule,
    opts: &RunOptions,
) -> Result<FieldOutcome, FieldError> {
    params.validate(schedule.initial_sq().max(0.0).sqrt())?;
    let mut integ = FieldIntegrator::new(coeffs, params)?;
    let mut noise = NoiseStream::new(params.seed);
    let stride = opts.snapshot_stride.unwrap_or(0);
    let mut snapshots = Vec::new();
    let hold_steps = if opts.thermalize && params.eta > 0.0 {
        (10.0 / params.eta / params.dt).ceil() as u64
    } else {
        0
    };
    let mut state = FieldState::zeros(
        schedule.t_start() - hold_steps as f64 * params.dt,
        coeffs.nodes(),
        coeffs.boundary,
    );
    if stride > 0 {
        snapshots.push(state.clone());
    }
    let nu_hold = schedule.initial_sq();
    for _ in 0..hold_steps {
        integ.advance(&mut state, coeffs, nu_hold, nu_hold, &mut noise)?;
        if stride > 0 && integ.steps() % stride == 0 {
            snapshots.push(state.clone());
        }
    }
    state.t = schedule.t_start();
    integ.invalidate();
    let check = opts.stop_check_stride.max(1);
    loop {
        if state.t >= stop.min_time && integ.steps() % check == 0 && stop.should_stop(&state) {
            break;
        }
        if integ.steps() >= opts.max_steps {
            return Err(FieldError::Timeout {
                steps: integ.steps(),
                t: state.t,
                mean_abs: mean_abs_field(&state.psi, stop.window),
                needed: stop.threshold(),
            });
        }
        let now = schedule.clamped(state.t);
        let next = schedule.clamped(state.t + integ.dt());
        integ.advance(&mut state, coeffs, now, next, &mut noise)?;
        if stride > 0 && integ.steps() % stride == 0 {
            snapshots.push(state.clone());
        }
    }
    if stride > 0 && snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(state.clone());
    }
    let census = count_field_defects(&state.psi, stop.window, coeffs.boundary, coeffs.dx, None)?;
    Ok(FieldOutcome {
        steps: integ.steps(),
        state,
        census,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_ground_state;
    use proptest::prelude::*;

    fn quiet(eta: f64, dt: f64) -> LangevinParams {
        LangevinParams {
            eta,
            noise_amp: 0.0,
            dt,
            seed: 0,
        }
    }

    fn run_fixed(coeffs: &GlCoefficients, state: &mut FieldState, nu_sq: f64, params: &LangevinParams, steps: usize) {
        let mut integ = FieldIntegrator::new(coeffs, params).unwrap();
        let mut noise = NoiseStream::new(params.seed);
        for _ in 0..steps {
            integ.advance(state, coeffs, nu_sq, nu_sq, &mut noise).unwrap();
        }
    }

    #[test]
    fn homogeneous_coefficients() {
        let c = GlCoefficients::homogeneous(1.0, 16, 0.5).unwrap();
        assert!((c.h[0] - 0.832_554_611_157_697_7).abs() < 1e-12);
        // 93 zeta(5) / 32 with zeta(5) = 1.0369277551433699
        assert!((c.quartic[3] - 3.013_571_288_385_419).abs() < 1e-12);
        assert!(c.h.iter().all(|&v| v == c.h[0]));
        assert_eq!(c.nu_c_sq[7], 4.0);
        assert!(GlCoefficients::homogeneous(1.0, 16, 1.5).is_err());
    }

    #[test]
    fn trapped_front_at_final_time() {
        let p = solve_ground_state(50).unwrap();
        let c = GlCoefficients::trapped(&p, None).unwrap();
        assert_eq!(c.boundary, Boundary::Clamped);
        assert!((c.dx - 0.5 * p.central_spacing).abs() < 1e-15);
        assert!(c.grid[c.nodes() - 1] <= CLAMP_FRACTION * p.half_length);
        let s = QuenchSchedule::new(p.nu_c0_sq, 0.4 * p.nu_c0_sq, 10.0).unwrap();
        let nu = s.transverse_frequency_sq(s.tau_q).unwrap();
        for j in 0..c.nodes() - 1 {
            let (d0, d1) = (c.delta(j, nu), c.delta(j + 1, nu));
            if d0.signum() != d1.signum() {
                let crit = c.nu_c_sq[j].min(c.nu_c_sq[j + 1])..=c.nu_c_sq[j].max(c.nu_c_sq[j + 1]);
                assert!(crit.contains(&(p.nu_c0_sq - s.delta0)));
            }
        }
        let w = c.ordered_nodes(nu).unwrap();
        assert!(w.range().all(|j| c.delta(j, nu) < 0.0));
        assert!(c.delta(w.start - 1, nu) >= 0.0 && c.delta(w.end, nu) >= 0.0);
    }

    #[test]
    fn cfl_is_enforced() {
        let c = GlCoefficients::homogeneous(1.0, 32, 0.5).unwrap();
        assert!(matches!(FieldIntegrator::new(&c, &quiet(1.0, 0.31)), Err(FieldError::Cfl { .. })));
        assert!(FieldIntegrator::new(&c, &quiet(1.0, 0.29)).is_ok());
    }

    #[test]
    fn disordered_phase_decays() {
        let c = GlCoefficients::homogeneous(1.0, 64, 0.5).unwrap();
        let mut s = FieldState::zeros(0.0, 64, Boundary::Periodic);
        for (j, p) in s.psi.iter_mut().enumerate() {
            *p = 0.01 * (j as f64 * 0.3).sin();
        }
        run_fixed(&c, &mut s, 5.0, &quiet(1.0, 0.02), 5000);
        assert!(s.psi.iter().all(|p| p.abs() < 1e-8));
    }

    #[test]
    fn ordered_phase_saturates_to_stationary_amplitude() {
        let c = GlCoefficients::homogeneous(1.0, 64, 0.5).unwrap();
        let nu = 3.0;
        let target = c.stationary_amplitude(0, nu);
        assert!((target - (1.0 / (2.0 * c.quartic[0])).sqrt()).abs() < 1e-15);
        let relaxed = relax_field(&c, nu, 1e-3, 1e-10).unwrap();
        for p in &relaxed.psi {
            assert!((p / target - 1.0).abs() < 1e-6);
        }
        let negative = relax_field(&c, nu, -1e-3, 1e-10).unwrap();
        assert!((negative.psi[5] / target + 1.0).abs() < 1e-6);
    }

    #[test]
    fn undamped_energy_is_conserved() {
        let c = GlCoefficients::homogeneous(1.0, 128, 0.5).unwrap();
        let mut s = FieldState::zeros(0.0, 128, Boundary::Periodic);
        for j in 0..128 {
            let x = j as f64 * c.dx;
            s.psi[j] = 0.3 * (2.0 * std::f64::consts::PI * x / 64.0).sin() + 0.05 * (x * 0.7).cos();
        }
        let nu = 3.5;
        let e0 = c.energy(&s, nu);
        let mut worst: f64 = 0.0;
        let params = quiet(0.0, 0.01);
        let mut integ = FieldIntegrator::new(&c, &params).unwrap();
        let mut noise = NoiseStream::new(0);
        for _ in 0..10_000 {
            integ.advance(&mut s, &c, nu, nu, &mut noise).unwrap();
            worst = worst.max((c.energy(&s, nu) - e0).abs());
        }
        assert!(worst < 1e-4 * e0.abs(), "drift {worst} of {e0}");
    }

    #[test]
    fn small_waves_travel_at_h() {
        let m = 2000;
        let c = GlCoefficients::homogeneous(1.0, m, 0.25).unwrap();
        let nu = c.nu_c_sq[0];
        let (x0, w) = (100.0, 8.0);
        let mut s = FieldState::zeros(0.0, m, Boundary::Periodic);
        let h = c.h[0];
        for j in 0..m {
            let u = (c.grid[j] - x0) / w;
            let g = 1e-4 * (-u * u).exp();
            s.psi[j] = g;
            // right-moving: psi_t = -h psi_x
            s.dpsi[j] = h * 2.0 * u / w * g;
        }
        let centroid = |s: &FieldState| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..m {
                let e = s.psi[j] * s.psi[j];
                num += c.grid[j] * e;
                den += e;
            }
            num / den
        };
        let start = centroid(&s);
        let dt = 0.05;
        let steps = 4000;
        run_fixed(&c, &mut s, nu, &quiet(0.0, dt), steps);
        let speed = (centroid(&s) - start) / (dt * steps as f64);
        assert!((speed / h - 1.0).abs() < 0.02, "speed {speed} vs {h}");
    }

    fn pinned_decay_length(delta: f64) -> f64 {
        let m = 400;
        let c = GlCoefficients::homogeneous(1.0, m, 0.25).unwrap();
        let nu = c.nu_c_sq[0] + delta;
        let params = quiet(2.0, 0.02);
        let mut integ = FieldIntegrator::new(&c, &params).unwrap();
        let mut noise = NoiseStream::new(0);
        let mut s = FieldState::zeros(0.0, m, Boundary::Periodic);
        let centre = m / 2;
        for _ in 0..40_000 {
            s.psi[centre] = 1e-3;
            s.dpsi[centre] = 0.0;
            integ.invalidate();
            integ.advance(&mut s, &c, nu, nu, &mut noise).unwrap();
        }
        s.psi[centre] = 1e-3;
        // least-squares slope of ln psi over the decaying tail
        let pts: Vec<(f64, f64)> = (4..40)
            .map(|k| (k as f64 * c.dx, s.psi[centre + k].ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxx / sxy
    }

    #[test]
    fn static_perturbation_decay_length_scales_as_inverse_sqrt_delta() {
        let l1 = pinned_decay_length(0.04);
        let l2 = pinned_decay_length(0.16);
        assert!((l1 / l2 / 2.0 - 1.0).abs() < 0.05, "{l1} {l2}");
        let h = equilibrium::perturbation_speed(1.0);
        assert!((l1 / (h / 0.2) - 1.0).abs() < 0.05, "{l1}");
    }

    #[test]
    fn field_quench_is_deterministic_and_counts_even_on_ring() {
        let c = GlCoefficients::homogeneous(1.0, 400, 0.5).unwrap();
        let sched = QuenchSchedule::new(4.0, 1.0, 5.0).unwrap();
        let stop = field_stop_rule(&c, &sched, 0.9).unwrap();
        assert_eq!(stop.window, Window::new(0, 400));
        let params = LangevinParams {
            eta: 1.0,
            noise_amp: 0.05,
            dt: 0.02,
            seed: 11,
        };
        let a = run_field_quench(&c, &sched, &params, &stop, &RunOptions::default()).unwrap();
        let b = run_field_quench(&c, &sched, &params, &stop, &RunOptions::default()).unwrap();
        assert_eq!(a.state.psi, b.state.psi);
        assert!(a.census.count() > 0);
        assert_eq!(a.census.count() % 2, 0);
        assert_eq!(a.census.net_charge(), 0);
        assert!(a.state.t >= sched.tau_q);
    }

    #[test]
    fn adiabatic_field_quench_has_no_defects() {
        let c = GlCoefficients::homogeneous(1.0, 16, 0.5).unwrap();
        let sched = QuenchSchedule::new(4.0, 1.0, 5000.0).unwrap();
        let stop = field_stop_rule(&c, &sched, 0.9).unwrap();
        let params = LangevinParams {
            eta: 1.0,
            noise_amp: 0.01,
            dt: 0.04,
            seed: 3,
        };
        let out = run_field_quench(&c, &sched, &params, &stop, &RunOptions::default()).unwrap();
        assert_eq!(out.census.count(), 0, "{:?}", out.state.psi);
    }

    #[test]
    fn trapped_field_relaxes_inside_ordered_region() {
        let p = solve_ground_state(50).unwrap();
        let c = GlCoefficients::trapped(&p, None).unwrap();
        let nu = 0.8 * p.nu_c0_sq;
        let relaxed = relax_field(&c, nu, 0.01, 1e-9).unwrap();
        let mid = c.nodes() / 2;
        let target = c.stationary_amplitude(mid, nu);
        assert!((relaxed.psi[mid] / target - 1.0).abs() < 0.05);
        assert_eq!(relaxed.psi[0], 0.0);
    }

    proptest! {
        #[test]
        fn ring_sign_changes_are_even(vals in proptest::collection::vec(-1.0f64..1.0, 3..60)) {
            let n = vals.len();
            match count_field_defects(&vals, Window::new(0, n), Boundary::Periodic, 1.0, None) {
                Ok(c) => {
                    prop_assert_eq!(c.count() % 2, 0);
                    prop_assert_eq!(c.net_charge(), 0);
                }
                Err(FieldError::Indeterminate(k)) => prop_assert!(k < 2),
                Err(e) => panic!("{e}"),
            }
        }
    }
}
