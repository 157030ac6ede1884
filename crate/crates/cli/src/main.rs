use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use thiserror::Error;

use zigzag_core::config::{Config, ConfigError, KEYS};
use zigzag_core::equilibrium;
use zigzag_core::harness::{self, Experiment, HarnessError, Setup};
use zigzag_core::io::{self as zio, CensusRow};
use zigzag_core::predict::{self, ChainScales, Geometry, Quench};
use zigzag_core::rng::realization_seed;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{0}")]
    Run(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Harness(HarnessError::Config(_)) => 2,
            CliError::Harness(HarnessError::DataQuality { .. }) => 3,
            _ => 1,
        }
    }
}

fn cli() -> Command {
    let mut cmd = Command::new("zigzag")
        .about("Linear-to-zigzag quenches of trapped-ion chains: simulation, defect statistics and scaling fits")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("TOML configuration; every key can be overridden by the flag of the same name"),
        )
        .subcommand(
            Command::new("ground-state")
                .about("Solve the linear chain and print its profile as JSON")
                .arg(out_arg("Write the profile to FILE instead of stdout")),
        )
        .subcommand(
            Command::new("quench")
                .about("Run one realization and report its defect census")
                .arg(out_arg("Write the snapshot table to FILE (needs snapshot_stride)")),
        )
        .subcommand(
            Command::new("sweep")
                .about("Run the ensemble over the quench-time grid; writes raw.csv, aggregate.csv, summary.json")
                .arg(
                    Arg::new("out")
                        .long("out")
                        .short('o')
                        .value_name("DIR")
                        .default_value("sweep-out")
                        .value_parser(clap::value_parser!(PathBuf)),
                ),
        )
        .subcommand(Command::new("predict").about("Print the closed-form scaling estimates for the configuration"))
        .subcommand(
            Command::new("fit")
                .about("Fit a power law to an aggregate CSV")
                .arg(
                    Arg::new("aggregate")
                        .required(true)
                        .value_name("CSV")
                        .value_parser(clap::value_parser!(PathBuf)),
                ),
        );
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .global(true)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .allow_hyphen_values(true)
                .help_heading("Configuration overrides"),
        );
    }
    cmd
}

fn out_arg(help: &'static str) -> Arg {
    Arg::new("out")
        .long("out")
        .short('o')
        .value_name("FILE")
        .value_parser(clap::value_parser!(PathBuf))
        .help(help)
}

fn resolve_config(m: &ArgMatches, validate: bool) -> Result<Config, CliError> {
    let path = m.get_one::<PathBuf>("config");
    let overrides: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    let cfg = Config::resolve(path.map(PathBuf::as_path), &overrides)?;
    if validate {
        cfg.validate()?;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn ground_state(cfg: &Config, out: Option<&PathBuf>) -> Result<(), CliError> {
    let profile = equilibrium::solve_ground_state(cfg.n_ions).map_err(|e| CliError::Run(e.to_string()))?;
    let json = profile.to_json();
    match out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{json}").map_err(|source| CliError::Write {
                path: path.display().to_string(),
                source,
            })?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn quench(cfg: &Config, out: Option<&PathBuf>) -> Result<(), CliError> {
    let exp = Experiment::new(cfg)?;
    let master = cfg.master_seed.unwrap_or(0);
    let seed = realization_seed(master, cfg.grid_index, cfg.realization);
    let run = exp
        .realize(cfg.tau_q, seed, out.is_some())
        .map_err(CliError::Run)?;
    if let Some(path) = out {
        let w = create(path)?;
        let res = match &exp.setup {
            Setup::Particles { .. } => {
                let mut snaps = run.ions.clone();
                if snaps.is_empty() {
                    snaps.extend(run.final_ions.clone());
                }
                zio::write_ion_snapshots(w, &snaps)
            }
            Setup::Field { coeffs, .. } => zio::write_field_snapshots(w, &run.fields, coeffs.dx),
        };
        res.map_err(|e| CliError::Run(e.to_string()))?;
    }
    let row = CensusRow::new(
        format!("{}-{}", cfg.grid_index, cfg.realization),
        cfg.tau_q,
        cfg.eta,
        &run.census,
    );
    let report = serde_json::json!({
        "census": row,
        "steps": run.steps,
        "window": [run.census.window.start, run.census.window.end],
        "bonds": run.census.defects.iter().map(|d| d.bond).collect::<Vec<_>>(),
        "seed": seed,
        "dt": exp.dt,
        "delta0": exp.delta0,
        "reference_amplitude": exp.reference(),
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn sweep(cfg: &Config, dir: &Path) -> Result<(), CliError> {
    let out = harness::run_sweep_unchecked(cfg, cfg.workers)?;
    out.write_to(dir)?;
    for row in &out.result.rows {
        println!(
            "tau_Q = {:<10.4} d = {:.6e} +- {:.2e}  (n = {}, excluded {})",
            row.tau_q, row.mean_density, row.std_error, row.n_valid, row.n_excluded
        );
    }
    match &out.result.fit {
        Some(f) => println!("exponent = {:.4}  intercept = {:.4}  r = {:.4}", f.exponent, f.intercept, f.r),
        None => println!("no fit: {}", out.result.fit_error.as_deref().unwrap_or("")),
    }
    if !out.result.saturated.is_empty() {
        println!("saturated fast-quench rows (consider fit_min): {:?}", out.result.saturated);
    }
    if let Some(c) = &out.comparison {
        println!(
            "{} {}: predicted {:.4}, deviation {:.4} ({} at tolerance {})",
            c.geometry,
            c.regime,
            c.predicted,
            c.deviation,
            if c.pass { "pass" } else { "fail" },
            c.tolerance
        );
    }
    println!("outputs in {}", dir.display());
    out.check_quality()?;
    Ok(())
}

fn predict_report(cfg: &Config) -> Result<(), CliError> {
    let (scales, geometry) = if cfg.model == zigzag_core::config::ModelKind::Field
        && cfg.field_geometry == Geometry::Homogeneous
    {
        (ChainScales::uniform(cfg.field_spacing), Geometry::Homogeneous)
    } else {
        let p = equilibrium::solve_ground_state(cfg.n_ions).map_err(|e| CliError::Run(e.to_string()))?;
        (ChainScales::from_profile(&p), Geometry::Trapped)
    };
    let q = Quench {
        delta0: cfg.delta0_for(scales.nu_c0_sq),
        tau_q: cfg.tau_q,
        eta: cfg.eta,
    };
    let kv = |k: &str, v: String| println!("{k:<28} = {v}");
    kv("geometry", geometry.to_string());
    kv("a", format!("{:.8}", scales.a));
    kv("omega0", format!("{:.8}", scales.omega0));
    kv("half_length", format!("{:.8}", scales.half_length));
    kv("nu_c0_sq", format!("{:.8}", scales.nu_c0_sq));
    kv("delta0", format!("{:.8}", q.delta0));
    kv("tau_q", format!("{}", q.tau_q));
    kv("eta", format!("{}", q.eta));
    kv("overdamped_margin", format!("{:.6}", q.overdamped_margin()));
    kv("underdamped_margin", format!("{:.6}", q.underdamped_margin()));
    let regime = match cfg.regime {
        Some(r) => r,
        None => match q.classify() {
            Ok(r) => r,
            Err(e) => {
                kv("regime", format!("ambiguous ({e})"));
                return Ok(());
            }
        },
    };
    kv("regime", regime.to_string());
    let p = predict::predicted_density(regime, geometry, &q, &scales).map_err(|e| CliError::Run(e.to_string()))?;
    kv("t_hat", format!("{:.8}", p.freeze_out.t_hat));
    kv("xi_hat", format!("{:.8}", p.freeze_out.xi_hat));
    kv("v_hat", format!("{:.8}", p.freeze_out.v_hat));
    kv("density", format!("{:.8e}", p.density));
    kv("exponent", format!("{:.6}", predict::predicted_exponent(regime, geometry)));
    if let Some(x) = p.x_star {
        kv("x_star", format!("{x:.8}"));
        for xs in [0.1, 0.25, 0.5] {
            let v = predict::front_velocity(xs, &scales, &q).map_err(|e| CliError::Run(e.to_string()))?;
            let r = predict::causality_ratio(regime, &scales, &q, xs).map_err(|e| CliError::Run(e.to_string()))?;
            kv(&format!("front_velocity(X={xs})"), format!("{v:.8}"));
            kv(&format!("causality_ratio(X={xs})"), format!("{r:.8}"));
        }
        if geometry == Geometry::Trapped && cfg.model == zigzag_core::config::ModelKind::Particles {
            kv("defects_per_spacing", format!("{:.8e}", p.density * scales.a));
        }
    }
    for w in &p.warnings {
        kv("warning", w.clone());
    }
    Ok(())
}

fn fit(cfg: &Config, path: &Path) -> Result<(), CliError> {
    let rows = harness::read_rows(path)?;
    let f = harness::fit_power_law(&rows, (cfg.fit_min, cfg.fit_max))?;
    println!("exponent  = {:.6}", f.exponent);
    println!("intercept = {:.6}", f.intercept);
    println!("r         = {:.6}", f.r);
    println!("rows used = {:?}", f.used);
    if !f.zero_rows.is_empty() {
        println!("zero rows = {:?}", f.zero_rows);
    }
    let sat = harness::saturation_guard(&rows);
    if !sat.is_empty() {
        println!("saturated = {sat:?}");
    }
    if let Some(regime) = cfg.regime {
        let geometry = if cfg.model == zigzag_core::config::ModelKind::Field {
            cfg.field_geometry
        } else {
            Geometry::Trapped
        };
        let predicted = predict::predicted_exponent(regime, geometry);
        let dev = (f.exponent - predicted).abs();
        println!(
            "{geometry} {regime}: predicted {predicted:.4}, deviation {dev:.4} ({})",
            if dev <= cfg.tolerance { "pass" } else { "fail" }
        );
    }
    Ok(())
}

fn run(m: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = resolve_config(sub, !matches!(name, "ground-state" | "fit"))?;
    match name {
        "ground-state" => ground_state(&cfg, sub.get_one("out")),
        "quench" => quench(&cfg, sub.get_one("out")),
        "sweep" => sweep(&cfg, sub.get_one::<PathBuf>("out").expect("defaulted")),
        "predict" => predict_report(&cfg),
        "fit" => fit(&cfg, sub.get_one::<PathBuf>("aggregate").expect("required")),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
