//! Kink/antikink detection, the central counting window and the stop rule.
//!
//! A defect is a slip of the staggered phase `s_i = (-1)^i sign(y_i)` between
//! neighbouring ions. Ions closer to the axis than an amplitude floor get
//! `s_i = 0` and are bridged over, so an ion sitting in a kink core does not
//! split one defect into two.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{self, ChainProfile, EquilibriumError};
use crate::model::IonState;

/// Default amplitude floor relative to the current window mean of `|y|`.
pub const DEFAULT_FLOOR_FRACTION: f64 = 0.1;
pub const DEFAULT_TARGET_FRACTION: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DefectError {
    #[error("final squared frequency {final_sq} does not cross the central critical value {nu_c0_sq}")]
    QuenchTooShallow { final_sq: f64, nu_c0_sq: f64 },
    #[error("no ion reaches the zigzag phase at nu_t^2 = {0}")]
    NoZigzagRegion(f64),
    #[error("window of {requested} ions requested but only {available} reach the zigzag phase")]
    WindowTooWide { requested: usize, available: usize },
    #[error("only {0} ions above the amplitude floor; defect count is indeterminate")]
    Indeterminate(usize),
    #[error("invalid stop rule: {0}")]
    StopRule(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// Half-open range of ion indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Window {
        assert!(start <= end);
        Window { start, end }
    }

    /// The `len` centermost of `n` sites.
    pub fn centered(n: usize, len: usize) -> Window {
        assert!(len <= n);
        let start = (n - len) / 2;
        Window {
            start,
            end: start + len,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// A domain wall between sites `bond` and `bond + 1` (or bridged around
/// there), with topological charge +1 or -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub bond: usize,
    pub charge: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectCensus {
    pub window: Window,
    pub defects: Vec<Defect>,
    /// Defects per ion in the window.
    pub density: f64,
}

impl DefectCensus {
    pub fn count(&self) -> usize {
        self.defects.len()
    }

    pub fn net_charge(&self) -> i32 {
        self.defects.iter().map(|d| d.charge as i32).sum()
    }

    /// Charges as a string of `+`/`-`, left to right.
    pub fn charge_string(&self) -> String {
        self.defects
            .iter()
            .map(|d| if d.charge > 0 { '+' } else { '-' })
            .collect()
    }
}

/// The `n_central` centermost ions, all of which must reach the zigzag phase
/// in an adiabatic transition to `final_sq`.
pub fn central_window(
    profile: &ChainProfile,
    final_sq: f64,
    n_central: usize,
) -> Result<Window, DefectError> {
    if final_sq >= profile.nu_c0_sq {
        return Err(DefectError::QuenchTooShallow {
            final_sq,
            nu_c0_sq: profile.nu_c0_sq,
        });
    }
    let available = zigzag_ion_count(profile, final_sq);
    if available == 0 {
        return Err(DefectError::NoZigzagRegion(final_sq));
    }
    if n_central > available || n_central == 0 {
        return Err(DefectError::WindowTooWide {
            requested: n_central,
            available,
        });
    }
    Ok(Window::centered(profile.n_ions(), n_central))
}

/// Number of ions with `nu_c^2(x_i) > final_sq`.
pub fn zigzag_ion_count(profile: &ChainProfile, final_sq: f64) -> usize {
    profile
        .positions
        .iter()
        .filter(|&&x| profile.critical_freq_sq_profile(x) > final_sq)
        .count()
}

/// Mean of `|y_i|` over the window.
pub fn mean_abs_transverse(y: &[f64], window: Window) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    y[window.range()].iter().map(|v| v.abs()).sum::<f64>() / window.len() as f64
}

fn sign_above(v: f64, floor: f64) -> i8 {
    if v.abs() < floor {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// `s_i = (-1)^i sign(y_i)` for `|y_i| >= floor`, else 0, over the window.
/// The parity uses the absolute ion index.
pub fn staggered_signs(y: &[f64], window: Window, floor: f64) -> Vec<i8> {
    window
        .range()
        .map(|i| {
            let s = sign_above(y[i], floor);
            if i % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .collect()
}

/// Plain signs above the floor (field values, no staggering).
pub fn signs(values: &[f64], floor: f64) -> Vec<i8> {
    values.iter().map(|&v| sign_above(v, floor)).collect()
}

/// Sign changes between consecutive nonzero entries. `offset` is the absolute
/// index of `signs[0]`. A change from -1 to +1 (left to right) has charge +1.
/// With `periodic`, the wrap-around pair is compared too and its defect is
/// reported at the last bond of the ring.
pub fn sign_changes(signs: &[i8], offset: usize, periodic: bool) -> Vec<Defect> {
    let nonzero: Vec<usize> = (0..signs.len()).filter(|&i| signs[i] != 0).collect();
    let mut out = Vec::new();
    for w in nonzero.windows(2) {
        let (a, b) = (w[0], w[1]);
        if signs[a] != signs[b] {
            out.push(Defect {
                bond: offset + (a + b - 1) / 2,
                charge: if signs[b] > 0 { 1 } else { -1 },
            });
        }
    }
    if periodic && nonzero.len() >= 2 {
        let (a, b) = (nonzero[nonzero.len() - 1], nonzero[0]);
        if signs[a] != signs[b] {
            let span = b + signs.len() - a;
            let bond = (a + (span - 1) / 2) % signs.len();
            out.push(Defect {
                bond: offset + bond,
                charge: if signs[b] > 0 { 1 } else { -1 },
            });
        }
    }
    out
}

/// Counts kinks and antikinks in the window. `floor` defaults to
/// [`DEFAULT_FLOOR_FRACTION`] times the current window mean of `|y|`.
pub fn count_defects(
    y: &[f64],
    window: Window,
    floor: Option<f64>,
) -> Result<DefectCensus, DefectError> {
    let floor = floor.unwrap_or_else(|| DEFAULT_FLOOR_FRACTION * mean_abs_transverse(y, window));
    let s = staggered_signs(y, window, floor);
    let nonzero = s.iter().filter(|&&v| v != 0).count();
    if nonzero < 2 {
        return Err(DefectError::Indeterminate(nonzero));
    }
    let defects = sign_changes(&s, window.start, false);
    Ok(DefectCensus {
        window,
        density: defects.len() as f64 / window.len() as f64,
        defects,
    })
}

/// Fires once `t >= min_time` and the window mean of `|y|` reaches
/// `target_fraction * reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub target_fraction: f64,
    pub reference: f64,
    pub min_time: f64,
    pub window: Window,
}

impl StopRule {
    pub fn new(
        target_fraction: f64,
        reference: f64,
        min_time: f64,
        window: Window,
    ) -> Result<StopRule, DefectError> {
        if !(target_fraction > 0.0 && target_fraction < 1.0) {
            return Err(DefectError::StopRule(format!(
                "target fraction must lie in (0, 1), got {target_fraction}"
            )));
        }
        if !(reference >= 0.0 && reference.is_finite()) {
            return Err(DefectError::StopRule(format!("bad reference amplitude {reference}")));
        }
        Ok(StopRule {
            target_fraction,
            reference,
            min_time,
            window,
        })
    }

    /// Fires at `t >= min_time` regardless of the configuration.
    pub fn at_time(min_time: f64) -> StopRule {
        StopRule {
            target_fraction: DEFAULT_TARGET_FRACTION,
            reference: 0.0,
            min_time,
            window: Window::new(0, 0),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.target_fraction * self.reference
    }

    pub fn current(&self, state: &IonState) -> f64 {
        mean_abs_transverse(&state.y, self.window)
    }

    pub fn should_stop(&self, state: &IonState) -> bool {
        state.t >= self.min_time && self.current(state) >= self.threshold()
    }
}

/// Zigzag ground state of the final trap, obtained by noise-free damped
/// relaxation from a staggered seed, and its window mean of `|y|`.
pub fn zigzag_reference(
    profile: &ChainProfile,
    final_sq: f64,
    window: Window,
) -> Result<(f64, IonState), DefectError> {
    let centre = equilibrium::stationary_zigzag_amplitude(profile, 0.0, final_sq)?;
    let seed = if centre > 0.0 {
        0.5 * centre
    } else {
        0.05 * profile.central_spacing
    };
    let state = equilibrium::relax_zigzag(profile, final_sq, seed)?;
    Ok((mean_abs_transverse(&state.y, window), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_ground_state;
    use proptest::prelude::*;

    fn zigzag(n: usize, b: f64) -> Vec<f64> {
        (0..n).map(|i| if i % 2 == 0 { b } else { -b }).collect()
    }

    #[test]
    fn window_of_thirty_in_fifty() {
        let p = solve_ground_state(50).unwrap();
        let final_sq = 0.4 * p.nu_c0_sq;
        let w = central_window(&p, final_sq, 30).unwrap();
        // 1-based 11..=40
        assert_eq!((w.start + 1, w.end), (11, 40));
        for i in w.range() {
            assert!(p.critical_freq_sq_profile(p.positions[i]) > final_sq);
        }
    }

    #[test]
    fn shallow_quenches_are_rejected() {
        let p = solve_ground_state(50).unwrap();
        assert!(matches!(
            central_window(&p, p.nu_c0_sq, 2),
            Err(DefectError::QuenchTooShallow { .. })
        ));
        assert!(matches!(
            central_window(&p, p.nu_c0_sq * (1.0 - 1e-9), 2),
            Err(DefectError::NoZigzagRegion(_))
        ));
        assert!(matches!(
            central_window(&p, 0.95 * p.nu_c0_sq, 30),
            Err(DefectError::WindowTooWide { requested: 30, .. })
        ));
    }

    #[test]
    fn mean_abs_examples() {
        let w = Window::new(0, 6);
        assert_eq!(mean_abs_transverse(&[0.0; 6], w), 0.0);
        assert!((mean_abs_transverse(&zigzag(6, 0.3), w) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn perfect_zigzag_has_uniform_signs() {
        let y = zigzag(10, 0.2);
        let s = staggered_signs(&y, Window::new(0, 10), 0.01);
        assert!(s.iter().all(|&v| v == s[0]));
        let c = count_defects(&y, Window::new(0, 10), None).unwrap();
        assert_eq!(c.count(), 0);
        assert_eq!(c.density, 0.0);
    }

    #[test]
    fn single_kink() {
        let b = 1.0;
        let y = [b, -b, -b, b, -b, b];
        let s = staggered_signs(&y, Window::new(0, 6), 0.1);
        assert_eq!(s, vec![1, 1, -1, -1, -1, -1]);
        let c = count_defects(&y, Window::new(0, 6), Some(0.1)).unwrap();
        assert_eq!(c.defects, vec![Defect { bond: 1, charge: -1 }]);
    }

    #[test]
    fn kink_antikink_pair() {
        let y = [-1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        let c = count_defects(&y, Window::new(0, 8), Some(0.1)).unwrap();
        assert_eq!(c.count(), 2);
        assert_eq!(c.defects[0].charge, 1);
        assert_eq!(c.defects[1].charge, -1);
        assert_eq!(c.charge_string(), "+-");
        assert_eq!(c.density, 0.25);
    }

    #[test]
    fn zeros_are_bridged() {
        // kink core ion on the axis
        let y = [1.0, -1.0, 1.0, 0.001, -1.0, 1.0];
        let c = count_defects(&y, Window::new(0, 6), Some(0.1)).unwrap();
        assert_eq!(c.count(), 1);
        assert_eq!(c.defects[0].bond, 2);
        let y = [1.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            count_defects(&y, Window::new(2, 6), Some(0.1)),
            Err(DefectError::Indeterminate(0))
        ));
    }

    #[test]
    fn thermal_jitter_is_not_counted() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let b = 0.05;
        let noise = Normal::new(0.0, 0.05 * b).unwrap();
        for _ in 0..100 {
            let y: Vec<f64> = zigzag(30, b).iter().map(|v| v + noise.sample(&mut rng)).collect();
            assert_eq!(count_defects(&y, Window::new(0, 30), None).unwrap().count(), 0);
        }
    }

    #[test]
    fn ring_sign_changes_are_even() {
        let s = [1, 1, -1, 0, -1, 1, 1, 0, -1];
        let d = sign_changes(&s, 0, true);
        assert_eq!(d.len(), 4);
        assert_eq!(d.len() % 2, 0);
        // wrap-around defect between index 8 and index 0
        assert_eq!(d[3].charge, 1);
    }

    #[test]
    fn stop_rule_examples() {
        let w = Window::new(0, 4);
        let rule = StopRule::new(0.9, 0.5, 1.0, w).unwrap();
        let mut s = IonState::at_rest(2.0, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(!rule.should_stop(&s));
        s.y = zigzag(4, 0.5);
        assert!(rule.should_stop(&s));
        s.t = 0.5;
        assert!(!rule.should_stop(&s));
        assert!(StopRule::new(1.0, 0.5, 0.0, w).is_err());
        assert!(StopRule::new(0.0, 0.5, 0.0, w).is_err());
    }

    fn arb_config() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![-1.0..-0.05f64, 0.05..1.0f64, Just(0.0)],
            4..40,
        )
    }

    proptest! {
        #[test]
        fn global_flip_flips_charges(y in arb_config()) {
            let w = Window::new(0, y.len());
            let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
            let a = count_defects(&y, w, Some(0.01));
            let b = count_defects(&flipped, w, Some(0.01));
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.count(), b.count());
                    for (p, q) in a.defects.iter().zip(&b.defects) {
                        prop_assert_eq!(p.charge, -q.charge);
                    }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "flip changed determinacy"),
            }
        }

        #[test]
        fn charges_alternate_and_net_charge_is_bounded(y in arb_config()) {
            let w = Window::new(0, y.len());
            if let Ok(c) = count_defects(&y, w, Some(0.01)) {
                for p in c.defects.windows(2) {
                    prop_assert_eq!(p[0].charge, -p[1].charge);
                }
                prop_assert!(c.net_charge().abs() <= 1);
                prop_assert!(c.defects.iter().all(|d| w.contains(d.bond)));
            }
        }

        #[test]
        fn index_offset_parity_is_irrelevant(y in arb_config()) {
            // shifting the whole chain by one site flips every staggered sign
            let mut shifted = vec![0.3];
            shifted.extend_from_slice(&y);
            let a = count_defects(&y, Window::new(0, y.len()), Some(0.01));
            let b = count_defects(&shifted, Window::new(1, y.len() + 1), Some(0.01));
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.count(), b.count());
            }
        }

        #[test]
        fn raising_the_floor_never_adds_defects(y in arb_config(), lo in 0.0..0.5f64, extra in 0.0..0.5f64) {
            let w = Window::new(0, y.len());
            if let (Ok(a), Ok(b)) = (count_defects(&y, w, Some(lo + 1e-9)), count_defects(&y, w, Some(lo + extra + 1e-9))) {
                prop_assert!(b.count() <= a.count());
            }
        }
    }
}
