//! Flat key-value run configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predict::{Geometry, Regime};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Ion-resolved Langevin dynamics.
    #[default]
    Particles,
    /// Stochastic Ginzburg-Landau field.
    Field,
}

/// Every tunable of a run. Keys missing from the file take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelKind,
    pub n_ions: usize,
    /// Ions in the central counting window.
    pub n_central: usize,
    /// Quench amplitude in nu^2; overrides `delta0_fraction` when set.
    pub delta0: Option<f64>,
    /// Quench amplitude relative to the central critical value nu_c0^2.
    pub delta0_fraction: f64,
    /// Squared transverse frequency reached at t = 0; the central critical
    /// value when absent.
    pub crossing_sq: Option<f64>,
    /// Half-duration of a single quench.
    pub tau_q: f64,
    pub eta: f64,
    pub noise_amp: f64,
    /// Timestep; derived from the fastest rate when absent.
    pub dt: Option<f64>,
    /// Hold the initial confinement for 10/eta with noise before the ramp.
    pub thermalize: bool,
    pub max_steps: u64,
    pub target_fraction: f64,
    /// Amplitude floor of the defect detector relative to the window mean.
    pub floor_fraction: f64,
    pub snapshot_stride: Option<u64>,
    pub master_seed: Option<u64>,
    /// Grid point and realization addressed by a single quench, so that any
    /// sweep realization can be replayed.
    pub grid_index: u64,
    pub realization: u64,
    /// Explicit quench-time grid; generated from `tau_q_min`, `tau_q_max`
    /// and `points_per_decade` when empty.
    pub tau_q_grid: Vec<f64>,
    pub tau_q_min: Option<f64>,
    pub tau_q_max: Option<f64>,
    pub points_per_decade: f64,
    pub realizations: usize,
    pub workers: usize,
    pub fit_min: Option<f64>,
    pub fit_max: Option<f64>,
    /// Regime used for the comparison with the closed-form exponent;
    /// classified from the parameters when absent.
    pub regime: Option<Regime>,
    pub tolerance: f64,
    pub field_geometry: Geometry,
    /// Ring size in nodes (homogeneous field only).
    pub field_nodes: usize,
    /// Grid spacing of the field; half the lattice spacing when absent.
    pub field_dx: Option<f64>,
    /// Lattice spacing of the homogeneous ring.
    pub field_spacing: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: ModelKind::Particles,
            n_ions: 50,
            n_central: 30,
            delta0: None,
            delta0_fraction: 0.5,
            crossing_sq: None,
            tau_q: 20.0,
            eta: 100.0,
            noise_amp: 0.05,
            dt: None,
            thermalize: true,
            max_steps: 50_000_000,
            target_fraction: 0.9,
            floor_fraction: 0.1,
            snapshot_stride: None,
            master_seed: None,
            grid_index: 0,
            realization: 0,
            tau_q_grid: Vec::new(),
            tau_q_min: None,
            tau_q_max: None,
            points_per_decade: 8.0,
            realizations: 200,
            workers: 1,
            fit_min: None,
            fit_max: None,
            regime: None,
            tolerance: 0.2,
            field_geometry: Geometry::Homogeneous,
            field_nodes: 2000,
            field_dx: None,
            field_spacing: 1.0,
        }
    }
}

/// Every configuration key, in declaration order.
pub const KEYS: &[&str] = &[
    "model",
    "n_ions",
    "n_central",
    "delta0",
    "delta0_fraction",
    "crossing_sq",
    "tau_q",
    "eta",
    "noise_amp",
    "dt",
    "thermalize",
    "max_steps",
    "target_fraction",
    "floor_fraction",
    "snapshot_stride",
    "master_seed",
    "grid_index",
    "realization",
    "tau_q_grid",
    "tau_q_min",
    "tau_q_max",
    "points_per_decade",
    "realizations",
    "workers",
    "fit_min",
    "fit_max",
    "regime",
    "tolerance",
    "field_geometry",
    "field_nodes",
    "field_dx",
    "field_spacing",
];

/// Parses a command-line value as a TOML value: numbers, booleans and
/// arrays as written, anything else as a string. A bare comma-separated list
/// becomes an array.
fn override_value(raw: &str) -> toml::Value {
    let parse = |text: &str| {
        toml::from_str::<toml::Table>(&format!("v = {text}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
    };
    parse(raw)
        .or_else(|| if raw.contains(',') { parse(&format!("[{raw}]")) } else { None })
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Config {
    /// Reads `path` (if any) and applies `key = value` overrides on top.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Config, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                text.parse::<toml::Table>()?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::Invalid(format!("unknown key {key}")));
            }
            let mut value = override_value(raw);
            if key == "tau_q_grid" && !value.is_array() {
                value = toml::Value::Array(vec![value]);
            }
            table.insert(key.clone(), value);
        }
        Ok(Config::deserialize(table)?)
    }

    pub fn from_toml_str(s: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(s)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Absolute quench amplitude given the central critical value.
    pub fn delta0_for(&self, nu_c0_sq: f64) -> f64 {
        self.delta0.unwrap_or(self.delta0_fraction * nu_c0_sq)
    }

    /// Quench-time grid, strictly increasing.
    pub fn grid(&self) -> Result<Vec<f64>, ConfigError> {
        let grid = if !self.tau_q_grid.is_empty() {
            self.tau_q_grid.clone()
        } else {
            match (self.tau_q_min, self.tau_q_max) {
                (Some(lo), Some(hi)) => log_grid(lo, hi, self.points_per_decade)?,
                _ => {
                    return Err(ConfigError::Invalid(
                        "sweep needs tau_q_grid or both tau_q_min and tau_q_max".into(),
                    ))
                }
            }
        };
        if grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(ConfigError::Invalid("quench times must be positive".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid("tau_q_grid must be strictly increasing".into()));
        }
        Ok(grid)
    }

    /// Checks the parameters shared by every subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.model == ModelKind::Particles || self.field_geometry == Geometry::Trapped {
            if self.n_ions < 2 {
                return bad(format!("n_ions must be at least 2, got {}", self.n_ions));
            }
            if self.model == ModelKind::Particles && !(self.n_central > 0 && self.n_central <= self.n_ions) {
                return bad(format!("need 0 < n_central <= n_ions, got {}", self.n_central));
            }
        }
        if let Some(d) = self.delta0 {
            if !(d > 0.0) {
                return bad(format!("delta0 must be positive, got {d}"));
            }
        } else if !(self.delta0_fraction > 0.0) {
            return bad(format!("delta0_fraction must be positive, got {}", self.delta0_fraction));
        }
        if !(self.tau_q > 0.0) {
            return bad(format!("tau_q must be positive, got {}", self.tau_q));
        }
        if !(self.eta >= 0.0) || !(self.noise_amp >= 0.0) {
            return bad("eta and noise_amp must be non-negative".into());
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return bad(format!("target_fraction must lie in (0, 1), got {}", self.target_fraction));
        }
        if !(self.floor_fraction > 0.0) {
            return bad(format!("floor_fraction must be positive, got {}", self.floor_fraction));
        }
        if self.snapshot_stride == Some(0) {
            return bad("snapshot_stride must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.field_spacing > 0.0) {
            return bad("field_spacing must be positive".into());
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive".into());
        }
        Ok(())
    }

    /// Additional requirements of an ensemble sweep.
    pub fn validate_sweep(&self) -> Result<Vec<f64>, ConfigError> {
        self.validate()?;
        if self.master_seed.is_none() {
            return Err(ConfigError::Invalid("a sweep requires master_seed".into()));
        }
        if self.realizations < 2 {
            return Err(ConfigError::Invalid(format!(
                "realizations must be at least 2, got {}",
                self.realizations
            )));
        }
        if let (Some(lo), Some(hi)) = (self.fit_min, self.fit_max) {
            if lo > hi {
                return Err(ConfigError::Invalid("fit_min exceeds fit_max".into()));
            }
        }
        self.grid()
    }
}

/// Log-spaced grid from `lo` to `hi` inclusive with the given density.
pub fn log_grid(lo: f64, hi: f64, per_decade: f64) -> Result<Vec<f64>, ConfigError> {
    if !(lo > 0.0 && hi > lo && per_decade > 0.0) {
        return Err(ConfigError::Invalid(format!(
            "bad grid bounds: tau_q_min = {lo}, tau_q_max = {hi}, points_per_decade = {per_decade}"
        )));
    }
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade).round().max(1.0) as usize;
    Ok((0..=steps)
        .map(|k| {
            if k == steps {
                hi
            } else {
                lo * 10f64.powf(decades * k as f64 / steps as f64)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back = Config::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = Config::from_toml_str("eta = 10.0\nmaster_seed = 7\nregime = \"underdamped\"").unwrap();
        assert_eq!(c.eta, 10.0);
        assert_eq!(c.master_seed, Some(7));
        assert_eq!(c.regime, Some(Regime::Underdamped));
        assert_eq!(c.n_ions, 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::from_toml_str("etta = 1.0"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn sweep_requires_seed_and_grid() {
        let mut c = Config {
            tau_q_grid: vec![1.0, 2.0],
            ..Config::default()
        };
        assert!(c.validate_sweep().is_err());
        c.master_seed = Some(1);
        assert_eq!(c.validate_sweep().unwrap(), vec![1.0, 2.0]);
        c.tau_q_grid = vec![2.0, 1.0];
        assert!(c.validate_sweep().is_err());
        c.tau_q_grid.clear();
        assert!(c.validate_sweep().is_err());
    }

    #[test]
    fn keys_cover_every_field() {
        let full = Config {
            delta0: Some(1.0),
            crossing_sq: Some(1.0),
            dt: Some(1.0),
            snapshot_stride: Some(1),
            master_seed: Some(1),
            tau_q_min: Some(1.0),
            tau_q_max: Some(2.0),
            fit_min: Some(1.0),
            fit_max: Some(2.0),
            regime: Some(Regime::Overdamped),
            field_dx: Some(0.5),
            ..Config::default()
        };
        let table: toml::Table = toml::from_str(&full.to_toml_string()).unwrap();
        let mut keys: Vec<&str> = table.keys().map(String::as_str).collect();
        keys.sort();
        let mut expected = KEYS.to_vec();
        expected.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn overrides_replace_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "eta = 10.0\nrealizations = 5\n").unwrap();
        let set = |k: &str, v: &str| (k.to_string(), v.to_string());
        let c = Config::resolve(
            Some(&path),
            &[
                set("eta", "20"),
                set("tau_q_grid", "1,2.5,4"),
                set("model", "field"),
                set("thermalize", "false"),
                set("master_seed", "12"),
            ],
        )
        .unwrap();
        assert_eq!(c.eta, 20.0);
        assert_eq!(c.realizations, 5);
        assert_eq!(c.tau_q_grid, vec![1.0, 2.5, 4.0]);
        assert_eq!(c.model, ModelKind::Field);
        assert!(!c.thermalize);
        assert_eq!(c.master_seed, Some(12));
        let single = Config::resolve(None, &[set("tau_q_grid", "3")]).unwrap();
        assert_eq!(single.tau_q_grid, vec![3.0]);
        assert!(Config::resolve(None, &[set("bogus", "1")]).is_err());
        assert!(Config::resolve(None, &[set("eta", "fast")]).is_err());
    }

    #[test]
    fn generated_grid() {
        let g = log_grid(10.0, 100.0, 8.0).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 10.0);
        assert_eq!(g[8], 100.0);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
        assert!(log_grid(10.0, 5.0, 8.0).is_err());
    }

    #[test]
    fn invalid_values() {
        let bad = [
            Config { n_central: 60, ..Config::default() },
            Config { delta0: Some(-1.0), ..Config::default() },
            Config { target_fraction: 1.0, ..Config::default() },
            Config { workers: 0, ..Config::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert!(Config::default().validate().is_ok());
    }
}
