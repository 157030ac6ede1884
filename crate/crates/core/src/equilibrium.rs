//! Linear-chain ground states, the local density profile and the critical
//! transverse frequencies derived from it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, check_axial_order, IonState, ModelError};

/// Riemann zeta(3).
pub const ZETA_3: f64 = 1.202_056_903_159_594_3;
/// Riemann zeta(5).
pub const ZETA_5: f64 = 1.036_927_755_143_37;

pub const PROFILE_FORMAT_VERSION: u32 = 1;

const GROUND_STATE_TOL: f64 = 1e-10;
const GROUND_STATE_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("a chain needs at least 2 ions, got {0}")]
    TooFewIons(usize),
    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("position {x} lies outside the chain (half-length {half_length})")]
    OutsideChain { x: f64, half_length: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unsupported chain profile version {0}")]
    Version(u32),
}

/// Equilibrium data of the linear chain, with the local-density description
/// anchored at the solved central spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainProfile {
    pub version: u32,
    /// Axial equilibrium positions, ascending (l0).
    pub positions: Vec<f64>,
    /// Half-length of the parabolic density profile fitted to the ions.
    #[serde(rename = "L")]
    pub half_length: f64,
    /// Central nearest-neighbour spacing a(0).
    #[serde(rename = "a0")]
    pub central_spacing: f64,
    /// `sqrt(Q^2 / (m a0^3))`.
    pub omega0: f64,
    /// `4 Q^2 / (m a0^3)`.
    pub nu_c0_sq: f64,
}

impl ChainProfile {
    pub fn from_positions(positions: Vec<f64>) -> Result<ChainProfile, EquilibriumError> {
        let n = positions.len();
        if n < 2 {
            return Err(EquilibriumError::TooFewIons(n));
        }
        check_axial_order(&positions)?;
        let half_length = fit_half_length(&positions);
        let central_spacing = central_gap(&positions);
        Ok(ChainProfile {
            version: PROFILE_FORMAT_VERSION,
            positions,
            half_length,
            central_spacing,
            omega0: omega0(central_spacing),
            nu_c0_sq: 4.0 / central_spacing.powi(3),
        })
    }

    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(s: &str) -> Result<ChainProfile, Box<dyn std::error::Error>> {
        let p: ChainProfile = serde_json::from_str(s)?;
        if p.version != PROFILE_FORMAT_VERSION {
            return Err(Box::new(EquilibriumError::Version(p.version)));
        }
        Ok(p)
    }

    fn scaled_inside(&self, x: f64) -> Result<f64, EquilibriumError> {
        let s = x / self.half_length;
        if !(s.abs() < 1.0) {
            return Err(EquilibriumError::OutsideChain {
                x,
                half_length: self.half_length,
            });
        }
        Ok(s)
    }

    /// Local spacing `a(x) = a0 / (1 - (x/L)^2)`: the parabolic density
    /// profile normalised to the solved central spacing.
    pub fn local_spacing(&self, x: f64) -> Result<f64, EquilibriumError> {
        let s = self.scaled_inside(x)?;
        Ok(self.central_spacing / (1.0 - s * s))
    }

    /// `4 Q^2 / (m a(x)^3)`.
    pub fn local_critical_freq_sq(&self, x: f64) -> Result<f64, EquilibriumError> {
        Ok(4.0 / self.local_spacing(x)?.powi(3))
    }

    /// Closed form `nu_c0^2 (1 - (x/L)^2)^3`; zero at and beyond the chain ends.
    pub fn critical_freq_sq_profile(&self, x: f64) -> f64 {
        let s = x / self.half_length;
        let w = (1.0 - s * s).max(0.0);
        self.nu_c0_sq * w * w * w
    }

    pub fn local_omega0(&self, x: f64) -> Result<f64, EquilibriumError> {
        Ok(omega0(self.local_spacing(x)?))
    }

    pub fn local_quartic_coefficient(&self, x: f64) -> Result<f64, EquilibriumError> {
        Ok(quartic_coefficient(self.local_spacing(x)?))
    }

    pub fn local_perturbation_speed(&self, x: f64) -> Result<f64, EquilibriumError> {
        Ok(perturbation_speed(self.local_spacing(x)?))
    }

    /// The linear chain at rest.
    pub fn ground_state(&self, t: f64) -> IonState {
        IonState::at_rest(t, self.positions.clone())
    }
}

/// Least-squares fit of the parabolic cumulative count
/// `N/2 (1 + 3X/2 - X^3/2)`, `X = x/L`, to the ion ranks `i + 1/2`.
///
/// The outermost ion sits well inside this `L`: the real chain is flatter than
/// a parabola near the ends, and pinning `L` to the last ion overestimates the
/// central density by ~20% at N = 50.
pub fn fit_half_length(positions: &[f64]) -> f64 {
    let n = positions.len() as f64;
    let outer = positions
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let mut l = 1.2 * outer;
    for _ in 0..100 {
        let mut jtj = 0.0;
        let mut jtr = 0.0;
        for (i, &x) in positions.iter().enumerate() {
            let s = x / l;
            let (model, ds) = if s.abs() < 1.0 {
                (0.5 * n * (1.0 + 1.5 * s - 0.5 * s * s * s), 0.75 * n * (1.0 - s * s))
            } else if s > 0.0 {
                (n, 0.0)
            } else {
                (0.0, 0.0)
            };
            let r = model - (i as f64 + 0.5);
            let j = ds * (-s / l);
            jtj += j * j;
            jtr += j * r;
        }
        if jtj == 0.0 {
            break;
        }
        let step = -jtr / jtj;
        let next = (l + step).max(0.5 * l);
        let done = (next - l).abs() <= 1e-14 * l;
        l = next;
        if done {
            break;
        }
    }
    l
}

fn central_gap(positions: &[f64]) -> f64 {
    let n = positions.len();
    if n == 2 {
        return positions[1] - positions[0];
    }
    let m = n / 2;
    if n.is_multiple_of(2) {
        // the gap straddling x = 0
        positions[m] - positions[m - 1]
    } else {
        0.5 * ((positions[m] - positions[m - 1]) + (positions[m + 1] - positions[m]))
    }
}

/// `omega0(a) = sqrt(Q^2 / (m a^3))`.
pub fn omega0(a: f64) -> f64 {
    a.powf(-1.5)
}

/// Quartic Landau coefficient `(93 zeta(5) / 32) omega0^2 / a^2`.
pub fn quartic_coefficient(a: f64) -> f64 {
    93.0 * ZETA_5 / 32.0 * omega0(a).powi(2) / (a * a)
}

/// Transverse perturbation speed `h = omega0 a sqrt(log 2)`.
pub fn perturbation_speed(a: f64) -> f64 {
    omega0(a) * a * std::f64::consts::LN_2.sqrt()
}

/// Parabolic local-density profile `n(x) = 3N/(4L) (1 - x^2/L^2)`.
pub fn local_density(x: f64, n_ions: usize, half_length: f64) -> Result<f64, EquilibriumError> {
    let s = x / half_length;
    if !(s.abs() < 1.0) {
        return Err(EquilibriumError::OutsideChain { x, half_length });
    }
    Ok(0.75 * n_ions as f64 / half_length * (1.0 - s * s))
}

/// Finite-size estimate of the critical transverse frequency,
/// `3 N nu / (4 sqrt(ln N))`. Requires `n_ions >= 2`.
pub fn critical_frequency_finite_n(n_ions: usize) -> f64 {
    debug_assert!(n_ions >= 2);
    critical_frequency_finite_n_real(n_ions as f64)
}

pub fn critical_frequency_finite_n_real(n: f64) -> f64 {
    0.75 * n / n.ln().sqrt()
}

/// Critical transverse frequency of the infinite uniform chain of spacing
/// `a`, `omega0 sqrt(7 zeta(3) / 2)`.
pub fn thermodynamic_critical_frequency(a: f64) -> f64 {
    omega0(a) * (3.5 * ZETA_3).sqrt()
}

/// Stationary zigzag amplitude `sqrt(-delta(x) / (2 A(x)))`, or zero where
/// the chain is locally linear.
pub fn stationary_zigzag_amplitude(
    profile: &ChainProfile,
    x: f64,
    nu_t_sq: f64,
) -> Result<f64, EquilibriumError> {
    let delta = nu_t_sq - profile.local_critical_freq_sq(x)?;
    if delta >= 0.0 {
        return Ok(0.0);
    }
    Ok((-delta / (2.0 * profile.local_quartic_coefficient(x)?)).sqrt())
}

/// Same as [`stationary_zigzag_amplitude`] for a uniform chain of spacing `a`
/// with critical frequency `4 omega0(a)^2`.
pub fn uniform_zigzag_amplitude(a: f64, nu_t_sq: f64) -> f64 {
    let delta = nu_t_sq - 4.0 * omega0(a).powi(2);
    if delta >= 0.0 {
        0.0
    } else {
        (-delta / (2.0 * quartic_coefficient(a))).sqrt()
    }
}

fn axial_energy(x: &[f64]) -> f64 {
    let n = x.len();
    let mut e = 0.0;
    for i in 0..n {
        e += 0.5 * x[i] * x[i];
        for j in i + 1..n {
            e += 1.0 / (x[j] - x[i]);
        }
    }
    e
}

fn axial_gradient_and_hessian(x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
    let n = x.len();
    h.fill(0.0);
    for i in 0..n {
        g[i] = x[i];
        h[(i, i)] = 1.0;
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = x[j] - x[i];
            let inv2 = 1.0 / (d * d);
            // d/dx_i (1/(x_j - x_i)) = +1/d^2
            g[i] += inv2;
            g[j] -= inv2;
            let c = 2.0 * inv2 / d;
            h[(i, i)] += c;
            h[(j, j)] += c;
            h[(i, j)] -= c;
            h[(j, i)] -= c;
        }
    }
}

/// Half-length estimate used for the uniform starting guess.
fn initial_half_length(n: usize) -> f64 {
    if n == 2 {
        return 0.25f64.cbrt();
    }
    let nf = n as f64;
    (3.0 * nf * nf.ln()).cbrt()
}

/// Ground state of the linear chain by damped Newton iteration on the axial
/// coordinates (ions on the axis), from a uniform symmetric start.
pub fn solve_ground_state(n_ions: usize) -> Result<ChainProfile, EquilibriumError> {
    if n_ions < 2 {
        return Err(EquilibriumError::TooFewIons(n_ions));
    }
    let half = initial_half_length(n_ions);
    let mut x: Vec<f64> = (0..n_ions)
        .map(|i| -half + 2.0 * half * i as f64 / (n_ions - 1) as f64)
        .collect();
    let mut g = DVector::zeros(n_ions);
    let mut h = DMatrix::zeros(n_ions, n_ions);
    let mut energy = axial_energy(&x);
    let mut gnorm = f64::INFINITY;
    for _ in 0..GROUND_STATE_MAX_ITER {
        axial_gradient_and_hessian(&x, &mut g, &mut h);
        gnorm = g.norm();
        if gnorm < GROUND_STATE_TOL {
            return ChainProfile::from_positions(symmetrized(x));
        }
        let chol = h
            .clone()
            .cholesky()
            .expect("axial Hessian of an ordered chain is positive definite");
        let step = chol.solve(&(-&g));
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            if check_axial_order(&trial).is_ok() {
                let e = axial_energy(&trial);
                // close to the minimum the energy change drops below roundoff
                if e <= energy || alpha * step.norm() < 1e-9 {
                    x = trial;
                    energy = e;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(EquilibriumError::NotConverged {
                    iterations: GROUND_STATE_MAX_ITER,
                    gradient_norm: gnorm,
                });
            }
        }
    }
    Err(EquilibriumError::NotConverged {
        iterations: GROUND_STATE_MAX_ITER,
        gradient_norm: gnorm,
    })
}

// Averages mirror pairs; the potential is even, so this only removes roundoff.
fn symmetrized(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.len();
    for i in 0..n / 2 {
        let s = 0.5 * (x[n - 1 - i] - x[i]);
        x[i] = -s;
        x[n - 1 - i] = s;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    x
}

/// Outcome of a damped relaxation in the (x, y) plane.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub state: IonState,
    pub iterations: usize,
    pub max_force: f64,
}

/// Noise-free damped relaxation (FIRE) at fixed transverse frequency,
/// starting from `start` and stopping once every force component is below
/// `tol`.
pub fn relax(
    start: &IonState,
    nu_t_sq: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Relaxation, EquilibriumError> {
    start.validate()?;
    let n = start.len();
    let mut s = start.clone();
    s.vx.iter_mut().for_each(|v| *v = 0.0);
    s.vy.iter_mut().for_each(|v| *v = 0.0);
    let mut fx = vec![0.0; n];
    let mut fy = vec![0.0; n];
    model::forces_into(&s.x, &s.y, nu_t_sq, &mut fx, &mut fy)?;

    let dt_max = 0.5 / (nu_t_sq.abs().sqrt().max(1.0) + 3.0 * omega0(min_gap(&s.x)));
    let mut dt = 0.2 * dt_max;
    let mut alpha = 0.1;
    let mut since_negative = 0usize;
    let mut max_force = f64::INFINITY;

    for it in 0..max_iter {
        max_force = fx.iter().chain(&fy).fold(0.0f64, |m, f| m.max(f.abs()));
        if max_force < tol {
            return Ok(Relaxation {
                state: s,
                iterations: it,
                max_force,
            });
        }
        let power: f64 = (0..n).map(|i| fx[i] * s.vx[i] + fy[i] * s.vy[i]).sum();
        let vnorm = (0..n).map(|i| s.vx[i].powi(2) + s.vy[i].powi(2)).sum::<f64>().sqrt();
        let fnorm = (0..n).map(|i| fx[i].powi(2) + fy[i].powi(2)).sum::<f64>().sqrt();
        if power > 0.0 {
            for i in 0..n {
                s.vx[i] = (1.0 - alpha) * s.vx[i] + alpha * vnorm * fx[i] / fnorm;
                s.vy[i] = (1.0 - alpha) * s.vy[i] + alpha * vnorm * fy[i] / fnorm;
            }
            since_negative += 1;
            if since_negative > 5 {
                dt = (dt * 1.1).min(dt_max);
                alpha *= 0.99;
            }
        } else {
            since_negative = 0;
            dt *= 0.5;
            alpha = 0.1;
            s.vx.iter_mut().for_each(|v| *v = 0.0);
            s.vy.iter_mut().for_each(|v| *v = 0.0);
        }
        // semi-implicit Euler
        let prev = (s.x.clone(), s.y.clone());
        for i in 0..n {
            s.vx[i] += dt * fx[i];
            s.vy[i] += dt * fy[i];
            s.x[i] += dt * s.vx[i];
            s.y[i] += dt * s.vy[i];
        }
        let ok = check_axial_order(&s.x).is_ok()
            && model::forces_into(&s.x, &s.y, nu_t_sq, &mut fx, &mut fy).is_ok();
        if !ok {
            s.x = prev.0;
            s.y = prev.1;
            s.vx.iter_mut().for_each(|v| *v = 0.0);
            s.vy.iter_mut().for_each(|v| *v = 0.0);
            dt *= 0.5;
            model::forces_into(&s.x, &s.y, nu_t_sq, &mut fx, &mut fy)?;
        }
    }
    Err(EquilibriumError::NotConverged {
        iterations: max_iter,
        gradient_norm: max_force,
    })
}

fn min_gap(x: &[f64]) -> f64 {
    x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Relaxed zigzag in a trap of squared transverse frequency `nu_t_sq`,
/// seeded by a staggered displacement of amplitude `seed_amp` on the linear
/// chain.
pub fn relax_zigzag(
    profile: &ChainProfile,
    nu_t_sq: f64,
    seed_amp: f64,
) -> Result<IonState, EquilibriumError> {
    let mut start = profile.ground_state(0.0);
    for (i, y) in start.y.iter_mut().enumerate() {
        *y = if i % 2 == 0 { seed_amp } else { -seed_amp };
    }
    Ok(relax(&start, nu_t_sq, 1e-9, 2_000_000)?.state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_ions_analytic() {
        let p = solve_ground_state(2).unwrap();
        let u = 0.25f64.cbrt();
        assert!((p.positions[1] - u).abs() < 1e-12);
        assert!((p.positions[0] + u).abs() < 1e-12);
        assert!((u - 0.62996).abs() < 1e-5);
    }

    #[test]
    fn three_ions_analytic() {
        // stationarity of the outer ion: u = 1/u^2 + 1/(2u)^2 => u^3 = 5/4
        let p = solve_ground_state(3).unwrap();
        let u = 1.25f64.cbrt();
        assert!((p.positions[2] - u).abs() < 1e-10, "{:?} vs {u}", p.positions);
        assert_eq!(p.positions[1], 0.0);
        assert!((u - 1.0772).abs() < 1e-4);
    }

    #[test]
    fn too_few_ions() {
        assert_eq!(solve_ground_state(1), Err(EquilibriumError::TooFewIons(1)));
    }

    #[test]
    fn ground_state_is_symmetric_with_growing_gaps() {
        let p = solve_ground_state(50).unwrap();
        let x = &p.positions;
        for i in 0..25 {
            assert!((x[i] + x[49 - i]).abs() < 1e-8);
        }
        let gaps: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        for i in 25..gaps.len() {
            assert!(gaps[i] > gaps[i - 1], "gap {i}");
        }
        assert!(p.half_length > x[49]);
        assert!((p.nu_c0_sq - 4.0 / p.central_spacing.powi(3)).abs() < 1e-12 * p.nu_c0_sq);
    }

    #[test]
    fn ground_state_is_deterministic() {
        let a = solve_ground_state(31).unwrap();
        let b = solve_ground_state(31).unwrap();
        assert!(a.positions.iter().zip(&b.positions).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn ground_state_is_a_local_minimum() {
        use rand::{Rng, SeedableRng};
        let p = solve_ground_state(20).unwrap();
        let e0 = model::potential_energy(&p.positions, &[0.0; 20], 5.0 * p.nu_c0_sq).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = p.positions.iter().map(|x| x + rng.random_range(-1e-4..1e-4)).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1e-4..1e-4)).collect();
            let e = model::potential_energy(&x, &y, 5.0 * p.nu_c0_sq).unwrap();
            assert!(e >= e0);
        }
    }

    #[test]
    fn central_spacing_conventions() {
        let even = [-3.0, -1.5, -0.5, 0.5, 1.5, 3.0];
        assert_eq!(central_gap(&even), 1.0);
        let odd = [-2.5, -1.0, 0.0, 1.0, 2.5];
        assert_eq!(central_gap(&odd), 1.0);
    }

    #[test]
    fn density_formula() {
        let (n, l) = (50, 8.0);
        assert!((local_density(0.0, n, l).unwrap() - 37.5 / 8.0).abs() < 1e-14);
        assert!((local_density(4.0, n, l).unwrap() - 37.5 / 8.0 * 0.75).abs() < 1e-14);
        assert!(local_density(8.0, n, l).is_err());
        assert!(local_density(-9.0, n, l).is_err());
    }

    #[test]
    fn density_matches_solved_chain() {
        let p = solve_ground_state(50).unwrap();
        let n0 = local_density(0.0, 50, p.half_length).unwrap();
        let empirical = 1.0 / p.central_spacing;
        assert!((n0 / empirical - 1.0).abs() < 0.05, "{n0} vs {empirical}");
    }

    #[test]
    fn finite_n_critical_frequency() {
        let v = critical_frequency_finite_n(50);
        assert!((v - 18.96).abs() < 0.01, "{v}");
        let e = std::f64::consts::E;
        assert!((critical_frequency_finite_n_real(e) - 0.75 * e).abs() < 1e-14);
    }

    #[test]
    fn finite_n_agrees_with_solved_chain() {
        let p = solve_ground_state(50).unwrap();
        let from_chain = p.nu_c0_sq.sqrt();
        let formula = critical_frequency_finite_n(50);
        assert!((formula / from_chain - 1.0).abs() < 0.15, "{formula} vs {from_chain}");
    }

    #[test]
    fn local_critical_frequency_forms_agree() {
        use rand::{Rng, SeedableRng};
        let p = solve_ground_state(50).unwrap();
        assert!((p.local_critical_freq_sq(0.0).unwrap() - p.nu_c0_sq).abs() < 1e-12 * p.nu_c0_sq);
        let half = 0.5 * p.half_length;
        let expected = p.nu_c0_sq * 0.75f64.powi(3);
        assert!((p.local_critical_freq_sq(half).unwrap() / expected - 1.0).abs() < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let x = rng.random_range(-0.999..0.999) * p.half_length;
            let a = p.local_critical_freq_sq(x).unwrap();
            let b = p.critical_freq_sq_profile(x);
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        assert!(p.local_critical_freq_sq(p.half_length).is_err());
        // decreasing in |x|
        let mut last = f64::INFINITY;
        for k in 0..100 {
            let v = p.critical_freq_sq_profile(k as f64 / 100.0 * p.half_length);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn thermodynamic_constant() {
        let v = thermodynamic_critical_frequency(1.0);
        assert!((v - 2.051).abs() < 5e-4, "{v}");
        let ratio = thermodynamic_critical_frequency(0.5) / v;
        assert!((ratio - 2f64.powf(1.5)).abs() < 1e-12);
    }

    /// zeta(s) by direct summation with an Euler-Maclaurin tail.
    fn zeta_series(s: f64) -> f64 {
        let n = 10_000u32;
        let mut sum = 0.0;
        for k in (1..=n).rev() {
            sum += (k as f64).powf(-s);
        }
        let nf = n as f64;
        sum + nf.powf(1.0 - s) / (s - 1.0) - 0.5 * nf.powf(-s) + s / 12.0 * nf.powf(-s - 1.0)
    }

    #[test]
    fn zeta_constants_match_series() {
        assert!((zeta_series(3.0) - ZETA_3).abs() < 1e-12);
        assert!((zeta_series(5.0) - ZETA_5).abs() < 1e-12);
        let c = (3.5 * zeta_series(3.0)).sqrt();
        assert!((c - (3.5 * ZETA_3).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn stationary_amplitude_edge_cases() {
        let p = solve_ground_state(50).unwrap();
        assert_eq!(stationary_zigzag_amplitude(&p, 0.0, p.nu_c0_sq).unwrap(), 0.0);
        assert_eq!(stationary_zigzag_amplitude(&p, 0.0, 2.0 * p.nu_c0_sq).unwrap(), 0.0);
        let a4 = quartic_coefficient(p.central_spacing);
        let nu = p.nu_c0_sq - 2.0 * a4 * 0.01;
        let amp = stationary_zigzag_amplitude(&p, 0.0, nu).unwrap();
        assert!((amp - 0.1).abs() < 1e-12);
        assert!(stationary_zigzag_amplitude(&p, 2.0 * p.half_length, nu).is_err());
    }

    #[test]
    fn profile_json_fields() {
        let p = solve_ground_state(4).unwrap();
        let json = p.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["positions", "L", "a0", "omega0", "nu_c0_sq", "version"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(ChainProfile::from_json(&json).unwrap(), p);
    }

    #[test]
    fn zigzag_relaxation_converges() {
        let p = solve_ground_state(12).unwrap();
        let nu = 0.8 * p.nu_c0_sq;
        let z = relax_zigzag(&p, nu, 0.05).unwrap();
        let (fx, fy) = model::forces(&z, nu).unwrap();
        assert!(fx.iter().chain(&fy).all(|f| f.abs() < 1e-9));
        assert!(z.y[5].abs() > 1e-3);
        assert!(z.y[5] * z.y[6] < 0.0);
    }
}
