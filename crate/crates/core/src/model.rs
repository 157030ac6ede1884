//! Simulation units, ion state and the trap + Coulomb potential.
//!
//! Everything is expressed in units where the ion mass, the ion charge and the
//! axial trap frequency are 1. The length unit `l0` then satisfies
//! `l0^3 = Q^2 / (m nu^2) = 1`, times are in `1/nu`, energies in `m l0^2 nu^2`.
//! The chain lives in the (x, y) plane: the z direction is taken to be frozen
//! by a much stiffer confinement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pair separation below which two ions are considered coincident.
pub const COINCIDENCE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("ions {i} and {j} coincide (separation {separation:e} l0)")]
    Coincident { i: usize, j: usize, separation: f64 },
    #[error("a chain needs at least 2 ions, got {0}")]
    TooFewIons(usize),
    #[error("state arrays have inconsistent lengths")]
    ShapeMismatch,
    #[error("non-finite coordinate at ion {0}")]
    NonFinite(usize),
    #[error("axial order violated between ions {0} and {1}")]
    OrderViolation(usize, usize),
}

/// Physical unit system. The simulation always runs with all three set to 1;
/// the struct exists so that results can be converted back at I/O boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    /// Ion mass (kg).
    pub mass: f64,
    /// Ion charge in Gaussian-like units, so that `charge^2 / r` is an energy.
    pub charge: f64,
    /// Axial trap frequency (rad/s).
    pub axial_frequency: f64,
}

impl Units {
    /// The dimensionless unit system used internally.
    pub const SIMULATION: Units = Units {
        mass: 1.0,
        charge: 1.0,
        axial_frequency: 1.0,
    };

    /// `l0 = (Q^2 / (m nu^2))^(1/3)`.
    pub fn length_unit(&self) -> f64 {
        (self.charge * self.charge / (self.mass * self.axial_frequency * self.axial_frequency))
            .cbrt()
    }

    pub fn time_unit(&self) -> f64 {
        1.0 / self.axial_frequency
    }

    pub fn energy_unit(&self) -> f64 {
        let l0 = self.length_unit();
        self.mass * l0 * l0 * self.axial_frequency * self.axial_frequency
    }

    pub fn to_physical_length(&self, x: f64) -> f64 {
        x * self.length_unit()
    }

    pub fn to_physical_time(&self, t: f64) -> f64 {
        t * self.time_unit()
    }

    pub fn to_physical_frequency(&self, w: f64) -> f64 {
        w * self.axial_frequency
    }
}

/// Positions and velocities of the ions, stored as separate coordinate arrays.
/// Ion identity is chain order: `x` must stay strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonState {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl IonState {
    /// Ions at rest at the given axial positions, on the trap axis.
    pub fn at_rest(t: f64, x: Vec<f64>) -> IonState {
        let n = x.len();
        IonState {
            t,
            x,
            y: vec![0.0; n],
            vx: vec![0.0; n],
            vy: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.x.len();
        if n < 2 {
            return Err(ModelError::TooFewIons(n));
        }
        if self.y.len() != n || self.vx.len() != n || self.vy.len() != n {
            return Err(ModelError::ShapeMismatch);
        }
        for i in 0..n {
            if !(self.x[i].is_finite()
                && self.y[i].is_finite()
                && self.vx[i].is_finite()
                && self.vy[i].is_finite())
            {
                return Err(ModelError::NonFinite(i));
            }
        }
        check_axial_order(&self.x)
    }

    /// Kinetic energy `1/2 m sum v^2`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self
            .vx
            .iter()
            .zip(&self.vy)
            .map(|(vx, vy)| vx * vx + vy * vy)
            .sum::<f64>()
    }
}

pub fn check_axial_order(x: &[f64]) -> Result<(), ModelError> {
    for i in 1..x.len() {
        if x[i] <= x[i - 1] {
            return Err(ModelError::OrderViolation(i - 1, i));
        }
    }
    Ok(())
}

/// Trap + ensemble parameters of one quench protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Quench amplitude `delta0` (nu^2). The transverse frequency starts at
    /// `nu_c0^2 + delta0` and ends at `nu_c0^2 - delta0`.
    pub delta0: f64,
    /// Quench half-duration (1/nu).
    pub tau_q: f64,
    /// Damping rate (nu).
    pub eta: f64,
    /// Langevin force amplitude (m l0 nu^2).
    pub noise_amp: f64,
    pub n_ions: usize,
    /// Number of central ions in which defects are counted.
    pub n_central: usize,
}

impl TrapConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta0 > 0.0) {
            return Err(format!("delta0 must be positive, got {}", self.delta0));
        }
        if !(self.tau_q > 0.0) {
            return Err(format!("tau_q must be positive, got {}", self.tau_q));
        }
        if !(self.eta >= 0.0) {
            return Err(format!("eta must be non-negative, got {}", self.eta));
        }
        if !(self.noise_amp >= 0.0) {
            return Err(format!("noise_amp must be non-negative, got {}", self.noise_amp));
        }
        if self.n_ions < 2 {
            return Err(format!("n_ions must be at least 2, got {}", self.n_ions));
        }
        if self.n_central == 0 || self.n_central > self.n_ions {
            return Err(format!(
                "n_central must lie in 1..={}, got {}",
                self.n_ions, self.n_central
            ));
        }
        Ok(())
    }

    /// Squared transverse frequency at the start of the ramp.
    pub fn initial_transverse_sq(&self, nu_c0_sq: f64) -> f64 {
        nu_c0_sq + self.delta0
    }
}

/// Potential energy: harmonic trap plus pairwise Coulomb repulsion.
pub fn potential_energy(x: &[f64], y: &[f64], nu_t_sq: f64) -> Result<f64, ModelError> {
    let n = x.len();
    if y.len() != n {
        return Err(ModelError::ShapeMismatch);
    }
    let mut trap = 0.0;
    for i in 0..n {
        trap += x[i] * x[i] + nu_t_sq * y[i] * y[i];
    }
    let mut coulomb = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            let r = (dx * dx + dy * dy).sqrt();
            if !(r >= COINCIDENCE_THRESHOLD) {
                return Err(ModelError::Coincident { i, j, separation: r });
            }
            coulomb += 1.0 / r;
        }
    }
    Ok(0.5 * trap + coulomb)
}

/// Writes `-grad V` into `fx`, `fy`.
///
/// Single pass over pairs `i < j`, each Coulomb pair contributing equal and
/// opposite forces.
pub fn forces_into(
    x: &[f64],
    y: &[f64],
    nu_t_sq: f64,
    fx: &mut [f64],
    fy: &mut [f64],
) -> Result<(), ModelError> {
    let n = x.len();
    if y.len() != n || fx.len() != n || fy.len() != n {
        return Err(ModelError::ShapeMismatch);
    }
    // For an axially ordered chain every pair is at least as far apart as the
    // closest axial neighbours, so one O(N) check covers all pairs.
    let ordered_and_separated = x
        .windows(2)
        .all(|w| w[1] - w[0] >= COINCIDENCE_THRESHOLD);
    if !ordered_and_separated {
        check_separations(x, y)?;
    }
    for i in 0..n {
        fx[i] = -x[i];
        fy[i] = -nu_t_sq * y[i];
    }
    let mut px = [0.0f64; 64];
    let mut py = [0.0f64; 64];
    let mut heap_px = Vec::new();
    let mut heap_py = Vec::new();
    let (px, py): (&mut [f64], &mut [f64]) = if n <= 64 {
        (&mut px[..], &mut py[..])
    } else {
        heap_px.resize(n, 0.0);
        heap_py.resize(n, 0.0);
        (&mut heap_px[..], &mut heap_py[..])
    };
    for i in 0..n {
        let (xi, yi) = (x[i], y[i]);
        let rest = n - i - 1;
        let (fx_head, fx_tail) = fx.split_at_mut(i + 1);
        let (fy_head, fy_tail) = fy.split_at_mut(i + 1);
        let px = &mut px[..rest];
        let py = &mut py[..rest];
        for ((((xj, yj), (fxj, fyj)), pxk), pyk) in x[i + 1..]
            .iter()
            .zip(&y[i + 1..])
            .zip(fx_tail.iter_mut().zip(fy_tail.iter_mut()))
            .zip(px.iter_mut())
            .zip(py.iter_mut())
        {
            let dx = xi - xj;
            let dy = yi - yj;
            let r2 = dx * dx + dy * dy;
            let inv_r3 = 1.0 / (r2 * r2.sqrt());
            *pxk = dx * inv_r3;
            *pyk = dy * inv_r3;
            *fxj -= *pxk;
            *fyj -= *pyk;
        }
        fx_head[i] += lane_sum(px);
        fy_head[i] += lane_sum(py);
    }
    Ok(())
}

/// Sum with four independent accumulators (vectorizes; fixed order).
#[inline]
fn lane_sum(v: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = v.chunks_exact(4);
    let tail = chunks.remainder();
    for c in chunks {
        acc[0] += c[0];
        acc[1] += c[1];
        acc[2] += c[2];
        acc[3] += c[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for t in tail {
        s += t;
    }
    s
}

fn check_separations(x: &[f64], y: &[f64]) -> Result<(), ModelError> {
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if !(dx * dx + dy * dy >= COINCIDENCE_THRESHOLD * COINCIDENCE_THRESHOLD) {
                return Err(closest_pair(x, y));
            }
        }
    }
    Ok(())
}

fn closest_pair(x: &[f64], y: &[f64]) -> ModelError {
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let r = (x[i] - x[j]).hypot(y[i] - y[j]);
            // NaN separations are reported as coincident as well.
            if !(r >= best.2) {
                best = (i, j, r);
            }
        }
    }
    ModelError::Coincident {
        i: best.0,
        j: best.1,
        separation: best.2,
    }
}

/// Convenience wrapper returning freshly allocated force arrays.
pub fn forces(state: &IonState, nu_t_sq: f64) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let n = state.len();
    let mut fx = vec![0.0; n];
    let mut fy = vec![0.0; n];
    forces_into(&state.x, &state.y, nu_t_sq, &mut fx, &mut fy)?;
    Ok((fx, fy))
}

/// Potential energy of a state.
pub fn state_potential_energy(state: &IonState, nu_t_sq: f64) -> Result<f64, ModelError> {
    potential_energy(&state.x, &state.y, nu_t_sq)
}
