//! Closed-form Kibble-Zurek estimates for the homogeneous and the trapped
//! chain: front velocity, freeze-out scales and defect densities.
//!
//! The undefined microscopic length `xi0` entering the causality amplitudes is
//! taken as 1 in simulation units.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::ChainProfile;

/// Regime margin below which a warning is emitted.
pub const REGIME_MARGIN_WARN: f64 = 3.0;
/// Formation half-width above which the small-`X*` trapped estimate is flagged.
pub const X_STAR_WARN: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("scaled position {0} outside (0, 1); the front velocity diverges at the centre")]
    Domain(f64),
    #[error(
        "{requested} regime does not hold: overdamped margin eta/sqrt(delta(0,t_hat)) = {overdamped:.3}, \
         underdamped margin delta0/(eta^3 tau_q) = {underdamped:.3}"
    )]
    AmbiguousRegime {
        requested: Regime,
        overdamped: f64,
        underdamped: f64,
    },
    #[error("invalid quench parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Overdamped,
    Underdamped,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Overdamped => "overdamped",
            Regime::Underdamped => "underdamped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Homogeneous,
    Trapped,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Geometry::Homogeneous => "homogeneous",
            Geometry::Trapped => "trapped",
        })
    }
}

/// Exponent of `d ~ tau_q^(-exponent)`.
pub fn predicted_exponent(regime: Regime, geometry: Geometry) -> f64 {
    match (geometry, regime) {
        (Geometry::Trapped, Regime::Overdamped) => 1.0,
        (Geometry::Trapped, Regime::Underdamped) => 4.0 / 3.0,
        (Geometry::Homogeneous, Regime::Overdamped) => 0.25,
        (Geometry::Homogeneous, Regime::Underdamped) => 1.0 / 3.0,
    }
}

/// Chain scales entering the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainScales {
    /// Central spacing.
    pub a: f64,
    pub omega0: f64,
    pub half_length: f64,
    pub nu_c0_sq: f64,
}

impl ChainScales {
    pub fn from_profile(p: &ChainProfile) -> ChainScales {
        ChainScales {
            a: p.central_spacing,
            omega0: p.omega0,
            half_length: p.half_length,
            nu_c0_sq: p.nu_c0_sq,
        }
    }

    /// Uniform chain of spacing `a` (no trap length).
    pub fn uniform(a: f64) -> ChainScales {
        let omega0 = a.powf(-1.5);
        ChainScales {
            a,
            omega0,
            half_length: f64::INFINITY,
            nu_c0_sq: 4.0 * omega0 * omega0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quench {
    pub delta0: f64,
    pub tau_q: f64,
    pub eta: f64,
}

impl Quench {
    fn check(&self) -> Result<(), PredictError> {
        if self.delta0 > 0.0 && self.tau_q > 0.0 && self.eta >= 0.0 {
            Ok(())
        } else {
            Err(PredictError::Params(format!(
                "need delta0 > 0, tau_q > 0, eta >= 0; got {self:?}"
            )))
        }
    }

    /// `eta / sqrt(delta(0, t_hat))` with the overdamped freeze-out time; the
    /// regime holds when this is large.
    pub fn overdamped_margin(&self) -> f64 {
        self.eta / (self.eta * self.delta0 / self.tau_q).powf(0.25)
    }

    /// `delta0 / (eta^3 tau_q)`; the regime holds when this is large. Equal to
    /// the inverse fourth power of the overdamped margin.
    pub fn underdamped_margin(&self) -> f64 {
        self.delta0 / (self.eta.powi(3) * self.tau_q)
    }

    pub fn margin(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Overdamped => self.overdamped_margin(),
            Regime::Underdamped => self.underdamped_margin(),
        }
    }

    /// The regime whose margin reaches [`REGIME_MARGIN_WARN`].
    pub fn classify(&self) -> Result<Regime, PredictError> {
        self.check()?;
        let over = self.overdamped_margin();
        let under = self.underdamped_margin();
        if over >= REGIME_MARGIN_WARN {
            Ok(Regime::Overdamped)
        } else if under >= REGIME_MARGIN_WARN {
            Ok(Regime::Underdamped)
        } else {
            let requested = if over >= under {
                Regime::Overdamped
            } else {
                Regime::Underdamped
            };
            Err(PredictError::AmbiguousRegime {
                requested,
                overdamped: over,
                underdamped: under,
            })
        }
    }
}

/// Speed of the locus `delta(x, t) = 0` at scaled position `X = x / L`.
pub fn front_velocity(x_scaled: f64, scales: &ChainScales, q: &Quench) -> Result<f64, PredictError> {
    let x = x_scaled.abs();
    if !(x > 0.0 && x < 1.0) {
        return Err(PredictError::Domain(x_scaled));
    }
    let s = 1.0 - x * x;
    Ok(scales.half_length * q.delta0 / (6.0 * scales.nu_c0_sq * q.tau_q) / (x * s * s))
}

/// Freeze-out time, correlation length and perturbation speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeOut {
    pub regime: Regime,
    pub t_hat: f64,
    pub xi_hat: f64,
    pub v_hat: f64,
    /// Margin of the regime inequality.
    pub margin: f64,
}

pub fn freeze_out(regime: Regime, q: &Quench, a: f64, omega0: f64) -> Result<FreezeOut, PredictError> {
    q.check()?;
    let margin = q.margin(regime);
    if !(margin >= 1.0) {
        return Err(PredictError::AmbiguousRegime {
            requested: regime,
            overdamped: q.overdamped_margin(),
            underdamped: q.underdamped_margin(),
        });
    }
    if margin < REGIME_MARGIN_WARN {
        log::warn!("{regime} regime holds only by a factor {margin:.2}");
    }
    let scale = a * omega0;
    let (t_hat, xi_hat, v_hat) = match regime {
        Regime::Overdamped => (
            (q.eta * q.tau_q / q.delta0).sqrt(),
            scale * (q.eta * q.delta0 / q.tau_q).powf(-0.25),
            scale * (q.delta0 / (q.eta.powi(3) * q.tau_q)).sqrt(),
        ),
        Regime::Underdamped => (
            (q.tau_q / q.delta0).cbrt(),
            scale * (q.tau_q / q.delta0).cbrt(),
            scale,
        ),
    };
    Ok(FreezeOut {
        regime,
        t_hat,
        xi_hat,
        v_hat,
        margin,
    })
}

/// Causality amplitude `A` of `v_F / v_hat = A / (|X| (1 - X^2)^2)`.
pub fn causality_amplitude(regime: Regime, scales: &ChainScales, q: &Quench) -> f64 {
    let base = scales.half_length / (6.0 * scales.nu_c0_sq * scales.a * scales.omega0);
    match regime {
        Regime::Overdamped => base * (q.eta * q.delta0 / q.tau_q).powf(0.75),
        Regime::Underdamped => base * q.delta0 / q.tau_q,
    }
}

/// `v_F / v_hat` at scaled position `X`.
pub fn causality_ratio(regime: Regime, scales: &ChainScales, q: &Quench, x_scaled: f64) -> Result<f64, PredictError> {
    let x = x_scaled.abs();
    if !(x > 0.0 && x < 1.0) {
        return Err(PredictError::Domain(x_scaled));
    }
    let s = 1.0 - x * x;
    Ok(causality_amplitude(regime, scales, q) / (x * s * s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub regime: Regime,
    pub geometry: Geometry,
    /// Defects per unit length.
    pub density: f64,
    /// Half-width `|X*|` of the region where defects form (trapped only).
    pub x_star: Option<f64>,
    pub freeze_out: FreezeOut,
    pub warnings: Vec<String>,
}

pub fn predicted_density(
    regime: Regime,
    geometry: Geometry,
    q: &Quench,
    scales: &ChainScales,
) -> Result<Prediction, PredictError> {
    let fo = freeze_out(regime, q, scales.a, scales.omega0)?;
    let mut warnings = Vec::new();
    if fo.margin < REGIME_MARGIN_WARN {
        warnings.push(format!("{regime} regime margin only {:.2}", fo.margin));
    }
    let scale = scales.a * scales.omega0;
    let (density, x_star) = match geometry {
        Geometry::Homogeneous => {
            let d = match regime {
                Regime::Overdamped => (q.delta0 * q.eta / q.tau_q).powf(0.25) / scale,
                Regime::Underdamped => (q.delta0 / q.tau_q).cbrt() / scale,
            };
            (d, None)
        }
        Geometry::Trapped => {
            let pre = scales.half_length / (3.0 * scales.nu_c0_sq * scale * scale);
            let d = match regime {
                Regime::Overdamped => pre * q.eta * q.delta0 / q.tau_q,
                Regime::Underdamped => pre * (q.delta0 / q.tau_q).powf(4.0 / 3.0),
            };
            let x_star = causality_amplitude(regime, scales, q);
            if x_star > X_STAR_WARN {
                warnings.push(format!("formation region |X*| = {x_star:.3} is not small"));
            }
            (d, Some(x_star))
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Prediction {
        regime,
        geometry,
        density,
        x_star,
        freeze_out: fo,
        warnings,
    })
}
