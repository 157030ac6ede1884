//! Damped, noise-driven integration of the ion chain under a linear quench of
//! the transverse confinement.
//!
//! Each step is split as half-kick, drift, exact Ornstein-Uhlenbeck update of
//! the velocities (friction + Langevin force), half-kick. The OU substep is
//! exact for any `eta * dt`, so heavy damping does not force a smaller step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defects::StopRule;
use crate::equilibrium::ChainProfile;
use crate::model::{self, IonState, ModelError};
use crate::rng::NoiseStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("time {t} precedes the start of the quench at {start}")]
    BeforeStart { t: f64, start: f64 },
    #[error("invalid quench schedule: {0}")]
    Schedule(String),
    #[error("invalid Langevin parameters: {0}")]
    Params(String),
    #[error("integration failed at step {step}: {source}")]
    Integration {
        step: u64,
        #[source]
        source: ModelError,
    },
    #[error(
        "stop rule not satisfied after {steps} steps (t = {t}, <|y|> = {mean_abs:e}, needed {needed:e})"
    )]
    Timeout {
        steps: u64,
        t: f64,
        mean_abs: f64,
        needed: f64,
    },
}

/// `nu_t^2(t) = nu_c0^2 - delta0 t / tau_q` on `[-tau_q, tau_q]`, held at
/// `nu_c0^2 - delta0` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSchedule {
    /// Reference squared frequency crossed at t = 0.
    pub nu_c0_sq: f64,
    pub delta0: f64,
    pub tau_q: f64,
}

impl QuenchSchedule {
    pub fn new(nu_c0_sq: f64, delta0: f64, tau_q: f64) -> Result<QuenchSchedule, DynamicsError> {
        if !(delta0 > 0.0 && delta0.is_finite()) {
            return Err(DynamicsError::Schedule(format!("delta0 must be positive, got {delta0}")));
        }
        if !(tau_q > 0.0 && tau_q.is_finite()) {
            return Err(DynamicsError::Schedule(format!("tau_q must be positive, got {tau_q}")));
        }
        if !(nu_c0_sq > 0.0 && nu_c0_sq.is_finite()) {
            return Err(DynamicsError::Schedule(format!(
                "reference frequency must be positive, got {nu_c0_sq}"
            )));
        }
        if nu_c0_sq - delta0 < 0.0 {
            log::warn!(
                "quench ends at negative nu_t^2 = {}: the trap is deconfining",
                nu_c0_sq - delta0
            );
        }
        Ok(QuenchSchedule {
            nu_c0_sq,
            delta0,
            tau_q,
        })
    }

    pub fn t_start(&self) -> f64 {
        -self.tau_q
    }

    pub fn t_end(&self) -> f64 {
        self.tau_q
    }

    pub fn initial_sq(&self) -> f64 {
        self.nu_c0_sq + self.delta0
    }

    pub fn final_sq(&self) -> f64 {
        self.nu_c0_sq - self.delta0
    }

    pub fn transverse_frequency_sq(&self, t: f64) -> Result<f64, DynamicsError> {
        if t < self.t_start() {
            return Err(DynamicsError::BeforeStart {
                t,
                start: self.t_start(),
            });
        }
        Ok(self.clamped(t))
    }

    /// Same as [`transverse_frequency_sq`](Self::transverse_frequency_sq) but
    /// holding the initial value before the ramp (pre-quench equilibration).
    pub fn clamped(&self, t: f64) -> f64 {
        let s = t.clamp(-self.tau_q, self.tau_q);
        self.nu_c0_sq - self.delta0 * s / self.tau_q
    }

    /// `delta(x, t) = nu_t^2(t) - nu_c^2(x)`.
    pub fn local_delta(&self, profile: &ChainProfile, x: f64, t: f64) -> Result<f64, DynamicsError> {
        Ok(self.transverse_frequency_sq(t)? - profile.critical_freq_sq_profile(x))
    }
}

/// Damping, Langevin force and timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinParams {
    /// Damping rate eta (nu).
    pub eta: f64,
    /// White-noise strength: `<eps(t) eps(t')> = noise_amp^2 delta(t - t')`
    /// per coordinate (m l0 nu^2).
    pub noise_amp: f64,
    pub dt: f64,
    pub seed: u64,
}

impl LangevinParams {
    /// Timestep resolving the fastest transverse oscillation and the damping:
    /// `dt nu_t <= 0.01`, `dt eta <= 0.05`, `dt nu <= 0.01`.
    pub fn default_dt(nu_t_max: f64, eta: f64) -> f64 {
        let mut dt: f64 = 0.01;
        if nu_t_max > 0.0 {
            dt = dt.min(0.01 / nu_t_max);
        }
        if eta > 0.0 {
            dt = dt.min(0.05 / eta);
        }
        dt
    }

    /// `k_B T = eps^2 / (2 m eta)`; infinite without damping.
    pub fn temperature(&self) -> f64 {
        if self.eta > 0.0 {
            self.noise_amp * self.noise_amp / (2.0 * self.eta)
        } else if self.noise_amp == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Checks `dt * max(eta, nu_t_max) < 0.1` and basic sanity.
    pub fn validate(&self, nu_t_max: f64) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Params(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.eta >= 0.0) || !(self.noise_amp >= 0.0) {
            return Err(DynamicsError::Params("eta and noise_amp must be non-negative".into()));
        }
        let fastest = self.eta.max(nu_t_max).max(1.0);
        if self.dt * fastest >= 0.1 {
            return Err(DynamicsError::Params(format!(
                "dt = {} too large: dt * max(eta, nu_t) = {} must stay below 0.1",
                self.dt,
                self.dt * fastest
            )));
        }
        Ok(())
    }

    /// Velocity decay factor and noise standard deviation of one OU substep.
    pub fn ou_coefficients(&self, dt: f64) -> (f64, f64) {
        let decay = (-self.eta * dt).exp();
        let var = if self.eta > 0.0 {
            self.noise_amp * self.noise_amp * (-(-2.0 * self.eta * dt).exp_m1()) / (2.0 * self.eta)
        } else {
            self.noise_amp * self.noise_amp * dt
        };
        (decay, var.sqrt())
    }
}

/// Splitting integrator with a cached force evaluation.
#[derive(Debug, Clone)]
pub struct LangevinIntegrator {
    dt: f64,
    decay: f64,
    sigma: f64,
    fx: Vec<f64>,
    fy: Vec<f64>,
    /// (time, nu_t^2) at which the cached forces were evaluated.
    cached: Option<(f64, f64)>,
    steps: u64,
}

impl LangevinIntegrator {
    pub fn new(params: &LangevinParams, n_ions: usize) -> LangevinIntegrator {
        let (decay, sigma) = params.ou_coefficients(params.dt);
        LangevinIntegrator {
            dt: params.dt,
            decay,
            sigma,
            fx: vec![0.0; n_ions],
            fy: vec![0.0; n_ions],
            cached: None,
            steps: 0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps taken; also the RNG step counter of the next step.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Forget cached forces, e.g. after editing the state by hand.
    pub fn invalidate(&mut self) {
        self.cached = None;
    }

    /// Advances `state` by one step, the transverse confinement going from
    /// `nu_now` at `state.t` to `nu_next` at `state.t + dt`.
    pub fn advance(
        &mut self,
        state: &mut IonState,
        nu_now: f64,
        nu_next: f64,
        noise: &mut NoiseStream,
    ) -> Result<(), DynamicsError> {
        let step = self.steps;
        let wrap = |source| DynamicsError::Integration { step, source };
        let n = state.x.len();
        if self.cached != Some((state.t, nu_now)) {
            model::forces_into(&state.x, &state.y, nu_now, &mut self.fx, &mut self.fy)
                .map_err(wrap)?;
        }
        let dt = self.dt;
        let half = 0.5 * dt;
        for i in 0..n {
            state.vx[i] += half * self.fx[i];
            state.vy[i] += half * self.fy[i];
            state.x[i] += dt * state.vx[i];
            state.y[i] += dt * state.vy[i];
        }
        if self.sigma > 0.0 {
            noise.begin_step(step);
            for v in state.vx.iter_mut() {
                *v = self.decay * *v + self.sigma * noise.normal();
            }
            for v in state.vy.iter_mut() {
                *v = self.decay * *v + self.sigma * noise.normal();
            }
        } else if self.decay != 1.0 {
            for v in state.vx.iter_mut().chain(state.vy.iter_mut()) {
                *v *= self.decay;
            }
        }
        state.t += dt;
        self.steps += 1;
        for i in 1..n {
            if !(state.x[i] > state.x[i - 1]) {
                let source = if state.x[i].is_finite() && state.x[i - 1].is_finite() {
                    ModelError::OrderViolation(i - 1, i)
                } else {
                    ModelError::NonFinite(i)
                };
                self.cached = None;
                return Err(wrap(source));
            }
        }
        model::forces_into(&state.x, &state.y, nu_next, &mut self.fx, &mut self.fy).map_err(wrap)?;
        for i in 0..n {
            state.vx[i] += half * self.fx[i];
            state.vy[i] += half * self.fy[i];
        }
        if !state.y.iter().chain(&state.vx).chain(&state.vy).all(|v| v.is_finite()) {
            self.cached = None;
            let i = (0..n)
                .find(|&i| !(state.y[i].is_finite() && state.vx[i].is_finite() && state.vy[i].is_finite()))
                .unwrap_or(0);
            return Err(wrap(ModelError::NonFinite(i)));
        }
        self.cached = Some((state.t, nu_next));
        Ok(())
    }

    /// One step following `schedule`.
    pub fn advance_scheduled(
        &mut self,
        state: &mut IonState,
        schedule: &QuenchSchedule,
        noise: &mut NoiseStream,
    ) -> Result<(), DynamicsError> {
        let now = schedule.clamped(state.t);
        let next = schedule.clamped(state.t + self.dt);
        self.advance(state, now, next, noise)
    }
}

/// Convenience single step: returns the advanced state.
pub fn step(
    state: &IonState,
    schedule: &QuenchSchedule,
    params: &LangevinParams,
    noise: &mut NoiseStream,
    step_index: u64,
) -> Result<IonState, DynamicsError> {
    schedule.transverse_frequency_sq(state.t)?;
    let mut integ = LangevinIntegrator::new(params, state.len());
    integ.steps = step_index;
    let mut next = state.clone();
    integ.advance_scheduled(&mut next, schedule, noise)?;
    Ok(next)
}

/// Options of a quench run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Hold the initial confinement for `10 / eta` with noise on before the ramp.
    pub thermalize: bool,
    pub max_steps: u64,
    /// Keep a snapshot every `stride` steps (plus the initial and final state).
    pub snapshot_stride: Option<u64>,
    /// How often the stop rule is evaluated once it can fire.
    pub stop_check_stride: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            thermalize: true,
            max_steps: 50_000_000,
            snapshot_stride: None,
            stop_check_stride: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuenchOutcome {
    pub state: IonState,
    pub steps: u64,
    pub snapshots: Vec<IonState>,
}

/// Runs one realization: the linear ground state at rest at `t = -tau_q`
/// (optionally equilibrated first), ramped through the schedule until `stop`
/// fires.
pub fn run_quench(
    profile: &ChainProfile,
    schedule: &QuenchSchedule,
    params: &LangevinParams,
    stop: &StopRule,
    opts: &RunOptions,
) -> Result<QuenchOutcome, DynamicsError> {
    params.validate(schedule.initial_sq().max(0.0).sqrt())?;
    let n = profile.n_ions();
    let mut integ = LangevinIntegrator::new(params, n);
    let mut noise = NoiseStream::new(params.seed);
    let mut snapshots = Vec::new();
    let stride = opts.snapshot_stride.unwrap_or(0);

    let hold_steps = if opts.thermalize && params.eta > 0.0 {
        (10.0 / params.eta / params.dt).ceil() as u64
    } else {
        0
    };
    let mut state = profile.ground_state(schedule.t_start() - hold_steps as f64 * params.dt);
    if stride > 0 {
        snapshots.push(state.clone());
    }
    let nu_hold = schedule.initial_sq();
    for _ in 0..hold_steps {
        integ.advance(&mut state, nu_hold, nu_hold, &mut noise)?;
        if stride > 0 && integ.steps().is_multiple_of(stride) {
            snapshots.push(state.clone());
        }
    }
    // remove roundoff drift so that the ramp starts exactly at t_start
    state.t = schedule.t_start();
    integ.invalidate();

    let check = opts.stop_check_stride.max(1);
    loop {
        if state.t >= stop.min_time && integ.steps().is_multiple_of(check) && stop.should_stop(&state) {
            break;
        }
        if integ.steps() >= opts.max_steps {
            return Err(DynamicsError::Timeout {
                steps: integ.steps(),
                t: state.t,
                mean_abs: stop.current(&state),
                needed: stop.threshold(),
            });
        }
        integ.advance_scheduled(&mut state, schedule, &mut noise)?;
        if stride > 0 && integ.steps().is_multiple_of(stride) {
            snapshots.push(state.clone());
        }
    }
    if stride > 0 && snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(state.clone());
    }
    Ok(QuenchOutcome {
        steps: integ.steps(),
        state,
        snapshots,
    })
}
