//! Ensemble sweeps over quench times, aggregation and power-law fits.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError, ModelKind};
use crate::defects::{self, DefectCensus, DefectError, StopRule, Window};
use crate::dynamics::{DynamicsError, LangevinParams, QuenchSchedule, RunOptions};
use crate::equilibrium::{self, ChainProfile, EquilibriumError};
use crate::field::{self, FieldError, FieldStopRule, GlCoefficients};
use crate::io::{self, CensusRow, IoError};
use crate::predict::{self, Geometry, Quench, Regime};
use crate::rng::realization_seed;

/// Largest tolerated fraction of failed realizations at any grid point.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;
/// Relative growth per grid step below which fast-quench rows count as saturated.
pub const SATURATION_GROWTH: f64 = 0.1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("{excluded} of {total} realizations failed at tau_Q = {tau_q}")]
    DataQuality {
        tau_q: f64,
        excluded: usize,
        total: usize,
    },
    #[error("power-law fit needs at least 3 rows with nonzero density, got {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<EquilibriumError> for HarnessError {
    fn from(e: EquilibriumError) -> Self {
        HarnessError::Setup(e.to_string())
    }
}

impl From<DefectError> for HarnessError {
    fn from(e: DefectError) -> Self {
        HarnessError::Setup(e.to_string())
    }
}

impl From<FieldError> for HarnessError {
    fn from(e: FieldError) -> Self {
        HarnessError::Setup(e.to_string())
    }
}

impl From<DynamicsError> for HarnessError {
    fn from(e: DynamicsError) -> Self {
        HarnessError::Setup(e.to_string())
    }
}

/// Physical setup shared by all realizations of a configuration.
#[derive(Debug, Clone)]
pub enum Setup {
    Particles {
        profile: ChainProfile,
        window: Window,
        /// Window mean of `|y|` in the relaxed final zigzag.
        reference: f64,
    },
    Field {
        coeffs: GlCoefficients,
        window: Window,
        reference: f64,
    },
}

/// Resolved quench: setup plus the parameters derived from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: Config,
    pub setup: Setup,
    /// Critical value of the model at the centre.
    pub nu_c0_sq: f64,
    /// Squared frequency crossed at t = 0.
    pub crossing_sq: f64,
    pub delta0: f64,
    pub dt: f64,
}

impl Experiment {
    pub fn new(config: &Config) -> Result<Experiment, HarnessError> {
        config.validate()?;
        let (setup, nu_c0_sq, delta0) = match config.model {
            ModelKind::Particles => {
                let profile = equilibrium::solve_ground_state(config.n_ions)?;
                let nu_c0_sq = profile.nu_c0_sq;
                let delta0 = config.delta0_for(nu_c0_sq);
                let final_sq = config.crossing_sq.unwrap_or(nu_c0_sq) - delta0;
                let (window, reference) = if final_sq >= nu_c0_sq {
                    // no ion would reach the zigzag phase adiabatically
                    (Window::new(profile.n_ions() / 2, profile.n_ions() / 2), 0.0)
                } else {
                    let window = defects::central_window(&profile, final_sq, config.n_central)?;
                    (window, defects::zigzag_reference(&profile, final_sq, window)?.0)
                };
                (
                    Setup::Particles {
                        profile,
                        window,
                        reference,
                    },
                    nu_c0_sq,
                    delta0,
                )
            }
            ModelKind::Field => {
                let coeffs = match config.field_geometry {
                    Geometry::Homogeneous => {
                        let a = config.field_spacing;
                        GlCoefficients::homogeneous(a, config.field_nodes, config.field_dx.unwrap_or(0.5 * a))?
                    }
                    Geometry::Trapped => {
                        let profile = equilibrium::solve_ground_state(config.n_ions)?;
                        GlCoefficients::trapped(&profile, config.field_dx)?
                    }
                };
                let nu_c0_sq = coeffs.nu_c_sq[coeffs.nodes() / 2];
                let delta0 = config.delta0_for(nu_c0_sq);
                // the stop rule only depends on the final confinement
                let probe = QuenchSchedule::new(config.crossing_sq.unwrap_or(nu_c0_sq), delta0, 1.0)?;
                let stop = field::field_stop_rule(&coeffs, &probe, config.target_fraction)?;
                (
                    Setup::Field {
                        coeffs,
                        window: stop.window,
                        reference: stop.reference,
                    },
                    nu_c0_sq,
                    delta0,
                )
            }
        };
        let crossing_sq = config.crossing_sq.unwrap_or(nu_c0_sq);
        let nu_max = (crossing_sq + delta0).sqrt();
        let dt = config
            .dt
            .unwrap_or_else(|| field_aware_dt(&setup, LangevinParams::default_dt(nu_max, config.eta)));
        Ok(Experiment {
            config: config.clone(),
            setup,
            nu_c0_sq,
            crossing_sq,
            delta0,
            dt,
        })
    }

    pub fn geometry(&self) -> Geometry {
        match &self.setup {
            Setup::Particles { .. } => Geometry::Trapped,
            Setup::Field { coeffs, .. } => match coeffs.boundary {
                field::Boundary::Periodic => Geometry::Homogeneous,
                field::Boundary::Clamped => Geometry::Trapped,
            },
        }
    }

    pub fn window(&self) -> Window {
        match &self.setup {
            Setup::Particles { window, .. } | Setup::Field { window, .. } => *window,
        }
    }

    pub fn reference(&self) -> f64 {
        match &self.setup {
            Setup::Particles { reference, .. } | Setup::Field { reference, .. } => *reference,
        }
    }

    pub fn schedule(&self, tau_q: f64) -> Result<QuenchSchedule, HarnessError> {
        Ok(QuenchSchedule::new(self.crossing_sq, self.delta0, tau_q)?)
    }

    pub fn params(&self, seed: u64) -> LangevinParams {
        LangevinParams {
            eta: self.config.eta,
            noise_amp: self.config.noise_amp,
            dt: self.dt,
            seed,
        }
    }

    pub fn run_options(&self, snapshots: bool) -> RunOptions {
        RunOptions {
            thermalize: self.config.thermalize,
            max_steps: self.config.max_steps,
            snapshot_stride: if snapshots { self.config.snapshot_stride } else { None },
            ..RunOptions::default()
        }
    }

    /// One realization with the given seed; the census plus snapshots if
    /// requested.
    pub fn realize(&self, tau_q: f64, seed: u64, snapshots: bool) -> Result<Realization, String> {
        let schedule = self.schedule(tau_q).map_err(|e| e.to_string())?;
        let params = self.params(seed);
        let opts = self.run_options(snapshots);
        match &self.setup {
            Setup::Particles {
                profile,
                window,
                reference,
            } => {
                let stop = if window.is_empty() {
                    StopRule::at_time(tau_q)
                } else {
                    StopRule::new(self.config.target_fraction, *reference, tau_q, *window).map_err(|e| e.to_string())?
                };
                let out = crate::dynamics::run_quench(profile, &schedule, &params, &stop, &opts)
                    .map_err(|e| e.to_string())?;
                let census = if window.is_empty() {
                    DefectCensus {
                        window: *window,
                        defects: Vec::new(),
                        density: 0.0,
                    }
                } else {
                    let floor = self.config.floor_fraction * defects::mean_abs_transverse(&out.state.y, *window);
                    defects::count_defects(&out.state.y, *window, Some(floor)).map_err(|e| e.to_string())?
                };
                Ok(Realization {
                    census,
                    steps: out.steps,
                    ions: out.snapshots,
                    fields: Vec::new(),
                    final_ions: Some(out.state),
                })
            }
            Setup::Field {
                coeffs,
                window,
                reference,
            } => {
                let stop = FieldStopRule {
                    target_fraction: self.config.target_fraction,
                    reference: *reference,
                    min_time: tau_q,
                    window: *window,
                };
                let out = field::run_field_quench(coeffs, &schedule, &params, &stop, &opts)
                    .map_err(|e| e.to_string())?;
                let floor = self.config.floor_fraction * field::mean_abs_field(&out.state.psi, *window);
                let census = field::count_field_defects(&out.state.psi, *window, coeffs.boundary, coeffs.dx, Some(floor))
                    .map_err(|e| e.to_string())?;
                let mut fields = out.snapshots;
                if fields.is_empty() {
                    fields.push(out.state);
                }
                Ok(Realization {
                    census,
                    steps: out.steps,
                    ions: Vec::new(),
                    fields,
                    final_ions: None,
                })
            }
        }
    }

    /// Closed-form comparison regime: configured, or classified at the
    /// geometric mean of the grid.
    pub fn regime(&self, grid: &[f64]) -> Result<Regime, predict::PredictError> {
        if let Some(r) = self.config.regime {
            return Ok(r);
        }
        let tau = grid.iter().map(|t| t.ln()).sum::<f64>() / grid.len().max(1) as f64;
        Quench {
            delta0: self.delta0,
            tau_q: tau.exp(),
            eta: self.config.eta,
        }
        .classify()
    }
}

/// The particle timestep rule, further capped by the field's CFL bound.
fn field_aware_dt(setup: &Setup, dt: f64) -> f64 {
    match setup {
        Setup::Particles { .. } => dt,
        Setup::Field { coeffs, .. } => {
            let cfl = 0.25 * coeffs.dx / coeffs.h.iter().cloned().fold(0.0, f64::max);
            dt.min(cfl)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub census: DefectCensus,
    pub steps: u64,
    pub ions: Vec<crate::model::IonState>,
    pub fields: Vec<field::FieldState>,
    pub final_ions: Option<crate::model::IonState>,
}

/// Outcome of one `(grid point, realization)` task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub grid_index: usize,
    pub realization: usize,
    pub tau_q: f64,
    pub outcome: Result<RecordCensus, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordCensus {
    pub n_defects: usize,
    pub density: f64,
    pub charges: String,
    pub steps: u64,
}

impl Record {
    pub fn id(&self) -> String {
        format!("{}-{}", self.grid_index, self.realization)
    }
}

/// Aggregate of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(rename = "tau_Q")]
    pub tau_q: f64,
    pub mean_density: f64,
    pub std_error: f64,
    pub n_valid: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Slope of `ln d` against `ln(1 / tau_Q)`.
    pub exponent: f64,
    pub intercept: f64,
    /// Pearson correlation of the fitted pairs.
    pub r: f64,
    pub used: Vec<f64>,
    /// Rows in the window left out for zero density.
    pub zero_rows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub rows: Vec<Row>,
    pub fit: Option<PowerLawFit>,
    pub fit_error: Option<String>,
    pub fit_window: (Option<f64>, Option<f64>),
    pub saturated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub regime: Regime,
    pub geometry: Geometry,
    pub predicted: f64,
    pub fitted: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub grid: Vec<f64>,
    pub records: Vec<Record>,
    pub result: ScalingResult,
    pub comparison: Option<Comparison>,
    pub comparison_note: Option<String>,
    pub experiment: Experiment,
}

impl SweepOutput {
    /// Fails when a grid point lost more than [`MAX_EXCLUDED_FRACTION`] of its
    /// realizations.
    pub fn check_quality(&self) -> Result<(), HarnessError> {
        for row in &self.result.rows {
            let total = row.n_valid + row.n_excluded;
            if row.n_excluded as f64 > MAX_EXCLUDED_FRACTION * total as f64 {
                return Err(HarnessError::DataQuality {
                    tau_q: row.tau_q,
                    excluded: row.n_excluded,
                    total,
                });
            }
        }
        Ok(())
    }

    pub fn census_rows(&self) -> Vec<CensusRow> {
        let eta = self.experiment.config.eta;
        self.records
            .iter()
            .filter_map(|r| {
                r.outcome.as_ref().ok().map(|c| CensusRow {
                    realization_id: r.id(),
                    tau_q: r.tau_q,
                    eta,
                    n_defects: c.n_defects,
                    density: c.density,
                    charges: c.charges.clone(),
                })
            })
            .collect()
    }

    pub fn raw_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut buf = Vec::new();
        io::write_census(&mut buf, &self.census_rows())?;
        Ok(buf)
    }

    pub fn aggregate_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        for row in &self.result.rows {
            wr.serialize(row).map_err(IoError::from)?;
        }
        Ok(wr.into_inner().map_err(|e| IoError::from(e.into_error()))?)
    }

    /// Excluded realizations with their error messages.
    pub fn exclusions(&self) -> Vec<(String, String)> {
        self.records
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| (r.id(), e.clone())))
            .collect()
    }

    pub fn summary(&self) -> serde_json::Value {
        let exp = &self.experiment;
        serde_json::json!({
            "code_version": env!("CARGO_PKG_VERSION"),
            "model": exp.config.model,
            "geometry": exp.geometry(),
            "nu_c0_sq": exp.nu_c0_sq,
            "delta0": exp.delta0,
            "dt": exp.dt,
            "window": [exp.window().start, exp.window().end],
            "reference_amplitude": exp.reference(),
            "tau_q_grid": self.grid,
            "rows": self.result.rows,
            "fit": self.result.fit,
            "fit_error": self.result.fit_error,
            "fit_window": self.result.fit_window,
            "saturated_rows": self.result.saturated,
            "comparison": self.comparison,
            "comparison_note": self.comparison_note,
            "exclusions": self.exclusions(),
            "config": exp.config,
        })
    }

    /// Writes `raw.csv`, `aggregate.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|source| HarnessError::Write {
                path: path.display().to_string(),
                source,
            })
        };
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Write {
            path: dir.display().to_string(),
            source,
        })?;
        write("raw.csv", &self.raw_csv()?)?;
        write("aggregate.csv", &self.aggregate_csv()?)?;
        let mut summary = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        summary.push('\n');
        write("summary.json", summary.as_bytes())
    }
}

/// Runs every realization of the sweep on `workers` threads. Results are
/// collected in task order, so the output does not depend on scheduling.
/// Failed realizations are kept as exclusions; see
/// [`SweepOutput::check_quality`].
pub fn run_sweep_unchecked(config: &Config, workers: usize) -> Result<SweepOutput, HarnessError> {
    let grid = config.validate_sweep()?;
    let master = config.master_seed.expect("validated");
    let exp = Experiment::new(config)?;
    for &tau in &grid {
        exp.schedule(tau)?;
    }
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..config.realizations).map(move |r| (g, r)))
        .collect();
    let run = |&(g, r): &(usize, usize)| {
        let tau_q = grid[g];
        let seed = realization_seed(master, g as u64, r as u64);
        let outcome = exp.realize(tau_q, seed, false).map(|out| RecordCensus {
            n_defects: out.census.count(),
            density: out.census.density,
            charges: out.census.charge_string(),
            steps: out.steps,
        });
        if let Err(e) = &outcome {
            log::warn!("realization {g}-{r} at tau_Q = {tau_q} excluded: {e}");
        }
        Record {
            grid_index: g,
            realization: r,
            tau_q,
            outcome,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let records: Vec<Record> = pool.install(|| tasks.par_iter().map(run).collect());

    let rows = aggregate(&grid, &records);
    let window = (config.fit_min, config.fit_max);
    let (fit, fit_error) = match fit_power_law(&rows, window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let saturated = saturation_guard(&rows);
    let result = ScalingResult {
        rows,
        fit,
        fit_error,
        fit_window: window,
        saturated,
    };
    let (comparison, comparison_note) = match (&result.fit, exp.regime(&grid)) {
        (Some(_), Ok(regime)) => (
            Some(compare_to_prediction(&result, regime, exp.geometry(), config.tolerance).expect("fit present")),
            None,
        ),
        (None, _) => (None, Some("no fit".to_string())),
        (_, Err(e)) => (None, Some(e.to_string())),
    };
    Ok(SweepOutput {
        grid,
        records,
        result,
        comparison,
        comparison_note,
        experiment: exp,
    })
}

/// [`run_sweep_unchecked`] followed by the exclusion check.
pub fn run_sweep(config: &Config, workers: usize) -> Result<SweepOutput, HarnessError> {
    let out = run_sweep_unchecked(config, workers)?;
    out.check_quality()?;
    Ok(out)
}

/// Mean density, standard error (sample sd / sqrt n) and counts per grid point.
pub fn aggregate(grid: &[f64], records: &[Record]) -> Vec<Row> {
    let mut rows: Vec<Row> = grid
        .iter()
        .enumerate()
        .map(|(g, &tau_q)| {
            let mine = records.iter().filter(|r| r.grid_index == g);
            let vals: Vec<f64> = mine
                .clone()
                .filter_map(|r| r.outcome.as_ref().ok().map(|c| c.density))
                .collect();
            let n_excluded = mine.filter(|r| r.outcome.is_err()).count();
            let (mean, se) = mean_and_error(&vals);
            Row {
                tau_q,
                mean_density: mean,
                std_error: se,
                n_valid: vals.len(),
                n_excluded,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.tau_q.total_cmp(&b.tau_q));
    rows
}

/// Mean and standard error of the mean; NaN where undefined.
pub fn mean_and_error(vals: &[f64]) -> (f64, f64) {
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Least squares of `ln d` against `ln(1 / tau_Q)` over rows inside the
/// optional `(min, max)` window of quench times. Zero-density rows are left
/// out and reported.
pub fn fit_power_law(rows: &[Row], window: (Option<f64>, Option<f64>)) -> Result<PowerLawFit, HarnessError> {
    let inside = |t: f64| window.0.is_none_or(|lo| t >= lo) && window.1.is_none_or(|hi| t <= hi);
    let selected: Vec<&Row> = rows.iter().filter(|r| inside(r.tau_q)).collect();
    let zero_rows: Vec<f64> = selected
        .iter()
        .filter(|r| !(r.mean_density > 0.0))
        .map(|r| r.tau_q)
        .collect();
    let pts: Vec<(f64, f64)> = selected
        .iter()
        .filter(|r| r.mean_density > 0.0)
        .map(|r| (-r.tau_q.ln(), r.mean_density.ln()))
        .collect();
    if !zero_rows.is_empty() {
        log::info!("fit skips zero-density rows at tau_Q = {zero_rows:?}");
    }
    if pts.len() < 3 {
        return Err(HarnessError::InsufficientData(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let exponent = sxy / sxx;
    let r = if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 1.0 };
    Ok(PowerLawFit {
        exponent,
        intercept: my - exponent * mx,
        r: r.clamp(-1.0, 1.0),
        used: selected
            .iter()
            .filter(|r| r.mean_density > 0.0)
            .map(|r| r.tau_q)
            .collect(),
        zero_rows,
    })
}

/// Quench times of fast-quench rows where the density has stopped growing
/// (less than 10% increase over the next slower row), scanning from the
/// fastest quench. Needs at least 5 rows; never applied automatically.
pub fn saturation_guard(rows: &[Row]) -> Vec<f64> {
    if rows.len() < 5 {
        return Vec::new();
    }
    let mut flagged = Vec::new();
    for w in rows.windows(2) {
        let (fast, slow) = (&w[0], &w[1]);
        if fast.mean_density < (1.0 + SATURATION_GROWTH) * slow.mean_density {
            flagged.push(fast.tau_q);
        } else {
            break;
        }
    }
    flagged
}

/// Fitted against closed-form exponent.
pub fn compare_to_prediction(
    result: &ScalingResult,
    regime: Regime,
    geometry: Geometry,
    tolerance: f64,
) -> Option<Comparison> {
    let fit = result.fit.as_ref()?;
    let predicted = predict::predicted_exponent(regime, geometry);
    let deviation = (fit.exponent - predicted).abs();
    Some(Comparison {
        regime,
        geometry,
        predicted,
        fitted: fit.exponent,
        deviation,
        tolerance,
        pass: deviation <= tolerance,
    })
}

/// Re-fits an aggregate CSV as written by [`SweepOutput::write_to`].
pub fn read_rows(path: &Path) -> Result<Vec<Row>, HarnessError> {
    let mut rd = csv::Reader::from_path(path).map_err(IoError::from)?;
    let mut rows: Vec<Row> = rd
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(IoError::from)?;
    rows.sort_by(|a, b| a.tau_q.total_cmp(&b.tau_q));
    Ok(rows)
}
