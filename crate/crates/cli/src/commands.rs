//! The five subcommands, callable without going through argument parsing.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parksim::engine::Scenario;
use parksim::geo::Projection;
use parksim::metrics::{self, AggregateResult, BoundRow, Format};
use parksim::par::Execution;
use parksim::population::{self, Commuter};
use parksim::schedule;
use parksim::sweep::{self, Cell, Settings};
use parksim::traveltime::{self, SpeedModel, TravelTimeMatrix, TravelTimeProvider};

use crate::config::{Config, ConfigError, TravelTimeSpec, Window};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Value {
        key: key.into(),
        message: message.into(),
    })
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn projection(cfg: &Config) -> Result<Option<Projection>, CliError> {
    cfg.anchor
        .map(|(lon, lat)| Projection::new(lon, lat).map_err(|e| config_err("anchor_lon", e.to_string())))
        .transpose()
}

/// Commuters after loading or generating and applying location noise,
/// with the projection used.
pub fn prepare_population(cfg: &Config) -> Result<(Vec<Commuter>, Projection), CliError> {
    let min_sep = cfg.synthetic.min_separation;
    let (pop, proj) = match &cfg.population {
        Some(path) => {
            let loaded = population::load_csv(path, projection(cfg)?, min_sep)
                .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            (loaded.commuters, loaded.projection)
        }
        None => {
            let pop = population::generate_synthetic(&cfg.synthetic).map_err(|e| match e {
                population::PopulationError::Params(m) => config_err("population", m),
                other => runtime(other),
            })?;
            let proj = match projection(cfg)? {
                Some(p) => p,
                None => Projection::new(0.0, 0.0).map_err(runtime)?,
            };
            (pop, proj)
        }
    };
    let (pop, _) = population::apply_location_noise(&pop, cfg.location_noise, cfg.synthetic.seed, min_sep);
    Ok((pop, proj))
}

pub fn travel_times(cfg: &Config, pop: &[Commuter], proj: &Projection) -> Result<TravelTimeProvider, CliError> {
    let calibrated = || SpeedModel::calibrate(pop, traveltime::TARGET_MORNING_S, traveltime::TARGET_EVENING_S);
    let explicit = || match (cfg.speed_morning, cfg.speed_evening) {
        (Some(m), Some(e)) => SpeedModel::new(m, e).map(Some).map_err(|e| config_err("speed_morning", e.to_string())),
        (None, None) => Ok(None),
        _ => Err(config_err("speed_morning", "set both speed_morning and speed_evening")),
    };
    Ok(match cfg.travel_time {
        TravelTimeSpec::Calibrated => TravelTimeProvider::Speed(calibrated()),
        TravelTimeSpec::Speed => {
            TravelTimeProvider::Speed(explicit()?.ok_or_else(|| config_err("travel_time", "speed needs speed_morning and speed_evening"))?)
        }
        TravelTimeSpec::Matrix => {
            let (Some(nodes), Some(edges)) = (&cfg.matrix_nodes, &cfg.matrix_edges) else {
                return Err(config_err("travel_time", "matrix needs matrix_nodes and matrix_edges"));
            };
            let fallback = explicit()?.unwrap_or_else(calibrated);
            TravelTimeProvider::Matrix(TravelTimeMatrix::load(nodes, edges, proj, fallback).map_err(runtime)?)
        }
    })
}

fn settings(cfg: &Config, pop: &[Commuter], proj: &Projection) -> Result<Settings, CliError> {
    let mut s = Settings::new(cfg.seed, Arc::new(travel_times(cfg, pop, proj)?));
    s.n_days = cfg.n_days;
    s.n_replications = cfg.n_replications;
    s.bound = cfg.bound;
    if cfg.t_w.contains(&Window::Empirical) {
        let path = cfg
            .departures
            .as_ref()
            .ok_or_else(|| config_err("t_w", "`empirical` needs a departures file"))?;
        let dist = schedule::load_empirical_distribution(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        s.empirical = Some(Arc::new(dist));
    }
    Ok(s)
}

fn execution(cfg: &Config) -> Execution {
    cfg.workers.map_or_else(Execution::from_env, Execution::with_workers)
}

fn window_value(w: Window) -> Option<f64> {
    match w {
        Window::Uniform(s) => Some(s),
        Window::Empirical => None,
    }
}

/// Cells of the Cartesian sweep described by `cfg`.
pub fn sweep_cells(cfg: &Config) -> Vec<Cell> {
    let scenarios = cfg
        .scenarios
        .clone()
        .unwrap_or_else(|| vec![Scenario::S2, Scenario::S3, Scenario::S4]);
    let mut cells = Vec::new();
    for &scenario in &scenarios {
        let radii = cfg.r_max.clone().unwrap_or_else(|| sweep::default_r_values(scenario));
        let adoptions = match scenario {
            Scenario::S1 => vec![1.0],
            _ => cfg.adoption.clone().unwrap_or_else(|| sweep::default_adoptions(scenario)),
        };
        let caps = match scenario {
            Scenario::S1 => vec![None],
            _ => cfg.cap.clone(),
        };
        for &r_max in &radii {
            for &w in &cfg.t_w {
                for &adoption in &adoptions {
                    for &cap in &caps {
                        cells.push(Cell {
                            scenario,
                            r_max,
                            t_w: window_value(w),
                            adoption,
                            cap,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn single<T: Copy>(key: &str, values: Option<&[T]>, default: T) -> Result<T, CliError> {
    match values {
        None => Ok(default),
        Some([v]) => Ok(*v),
        Some(_) => Err(config_err(key, "`run` takes a single value; use `sweep` for lists")),
    }
}

/// The one cell a `run` executes.
pub fn run_cell(cfg: &Config) -> Result<Cell, CliError> {
    let scenario = single("scenario", cfg.scenarios.as_deref(), Scenario::S3)?;
    Ok(Cell {
        scenario,
        r_max: single("r_max", cfg.r_max.as_deref(), 500.0)?,
        t_w: window_value(single("t_w", Some(&cfg.t_w), Window::Uniform(3600.0))?),
        adoption: match scenario {
            Scenario::S1 => 1.0,
            _ => single("adoption", cfg.adoption.as_deref(), 1.0)?,
        },
        cap: single("cap", Some(&cfg.cap), None)?,
    })
}

fn out_path(cfg: &Config, stem: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        PathBuf::from(match cfg.format {
            Format::Csv => format!("{stem}.csv"),
            Format::Json => format!("{stem}.json"),
        })
    })
}

/// Path of the effective-config sidecar written next to CSV results.
pub fn config_sidecar(results: &Path) -> PathBuf {
    let mut name = results.as_os_str().to_owned();
    name.push(".config");
    PathBuf::from(name)
}

fn echo_map(cfg: &Config, out: &Path) -> BTreeMap<String, String> {
    let mut c = cfg.clone();
    c.out = Some(out.to_path_buf());
    c.echo().into_iter().collect()
}

fn write_sidecar(cfg: &Config, out: &Path) -> Result<(), CliError> {
    if cfg.format == Format::Csv {
        let mut c = cfg.clone();
        c.out = Some(out.to_path_buf());
        fs::write(config_sidecar(out), c.echo_text()).map_err(runtime)?;
    }
    Ok(())
}

fn execute(cfg: &Config, cells: &[Cell], stem: &str) -> Result<(PathBuf, Vec<AggregateResult>), CliError> {
    let (pop, proj) = prepare_population(cfg)?;
    if pop.is_empty() {
        return Err(runtime("population is empty"));
    }
    let settings = settings(cfg, &pop, &proj)?;
    let results = sweep::run_cells(cells, &pop, &settings, execution(cfg)).map_err(|e| match e {
        sweep::SweepError::Cell(m) => config_err("cell", m),
        other => runtime(other),
    })?;
    let out = out_path(cfg, stem);
    metrics::write_results(&results, &echo_map(cfg, &out), cfg.format, &out).map_err(runtime)?;
    write_sidecar(cfg, &out)?;
    Ok((out, results))
}

/// Writes a synthetic population CSV to `out`.
pub fn cmd_generate(cfg: &Config, out: &Path) -> Result<usize, CliError> {
    let pop = population::generate_synthetic(&cfg.synthetic).map_err(|e| match e {
        population::PopulationError::Params(m) => config_err("population", m),
        other => runtime(other),
    })?;
    let proj = match projection(cfg)? {
        Some(p) => p,
        None => Projection::new(0.0, 0.0).map_err(runtime)?,
    };
    let file = File::create(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    population::write_csv(BufWriter::new(file), &pop, &proj).map_err(runtime)?;
    Ok(pop.len())
}

/// Runs one cell with its full replication set.
pub fn cmd_run(cfg: &Config) -> Result<(PathBuf, Vec<AggregateResult>), CliError> {
    let cell = run_cell(cfg)?;
    let mut resolved = cfg.clone();
    resolved.scenarios = Some(vec![cell.scenario]);
    resolved.r_max = Some(vec![cell.r_max]);
    resolved.adoption = Some(vec![cell.adoption]);
    execute(&resolved, &[cell], "results")
}

/// Runs the Cartesian sweep.
pub fn cmd_sweep(cfg: &Config) -> Result<(PathBuf, Vec<AggregateResult>), CliError> {
    let cells = sweep_cells(cfg);
    if cells.is_empty() {
        return Err(config_err("scenario", "sweep has no cells"));
    }
    execute(cfg, &cells, "sweep")
}

/// Instantaneous-travel bound per r_max.
pub fn cmd_bound(cfg: &Config) -> Result<(PathBuf, Vec<BoundRow>), CliError> {
    let (pop, proj) = prepare_population(cfg)?;
    let mut settings = settings(cfg, &pop, &proj)?;
    settings.bound = true;
    let radii = cfg.r_max.clone().unwrap_or_else(|| sweep::default_r_values(Scenario::S3));
    let rates = cfg.adoption.clone().unwrap_or_else(|| vec![1.0]);
    let exec = execution(cfg);
    let mut rows = Vec::new();
    for &rate in &rates {
        let n_users = sweep::adopters(&pop, rate, &settings, 0).len();
        for (r_max, st) in sweep::bound_table(&radii, rate, &pop, &settings, exec).map_err(runtime)? {
            rows.push(BoundRow {
                r_max_m: r_max,
                adoption: rate,
                replications: settings.n_replications,
                n_users,
                bound_np_mean: st.mean,
                bound_np_std: st.std,
                bound_np_min: st.min,
                bound_np_max: st.max,
            });
        }
    }
    let out = out_path(cfg, "bound");
    metrics::write_bounds(&rows, &echo_map(cfg, &out), cfg.format, &out).map_err(runtime)?;
    write_sidecar(cfg, &out)?;
    Ok((out, rows))
}

/// Renders SVG figures from a results CSV.
pub fn cmd_plot(results: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rows = metrics::read_csv(results).map_err(|e| runtime(format!("{}: {e}", results.display())))?;
    metrics::plot::render_plots(&rows, out_dir).map_err(runtime)
}
