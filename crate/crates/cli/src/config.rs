//! Plain-text run configuration: one `key = value` per line, `#` comments.
//!
//! List-valued keys take comma-separated values; `r_max` also accepts
//! `start..end:step`. Durations accept an `s`, `m` or `h` suffix.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use parksim::engine::Scenario;
use parksim::metrics::Format;
use parksim::population::{PopulationParams, LOCATION_NOISE_M};

/// Keys accepted in a config file.
pub const KEYS: [&str; 30] = [
    "seed",
    "n_days",
    "n_replications",
    "scenario",
    "r_max",
    "t_w",
    "adoption",
    "cap",
    "bound",
    "population",
    "anchor_lon",
    "anchor_lat",
    "n_commuters",
    "home_clusters",
    "work_clusters",
    "cluster_sigma",
    "region_extent",
    "imbalance",
    "population_seed",
    "min_separation",
    "location_noise",
    "travel_time",
    "speed_morning",
    "speed_evening",
    "matrix_nodes",
    "matrix_edges",
    "departures",
    "workers",
    "format",
    "out",
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`; valid keys: {}", KEYS.join(", "))]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.into(),
        message: message.into(),
    }
}

/// Departure model selected by one `t_w` entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    Uniform(f64),
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TravelTimeSpec {
    /// Constant speeds fitted to the reference mean trip times.
    Calibrated,
    /// `speed_morning` / `speed_evening`.
    Speed,
    /// Travel-time matrix, speed fallback.
    Matrix,
}

/// Everything a command needs. `None` list fields fall back to per-command
/// defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub n_days: usize,
    pub n_replications: usize,
    pub scenarios: Option<Vec<Scenario>>,
    pub r_max: Option<Vec<f64>>,
    pub t_w: Vec<Window>,
    pub adoption: Option<Vec<f64>>,
    pub cap: Vec<Option<usize>>,
    pub bound: bool,
    pub population: Option<PathBuf>,
    pub anchor: Option<(f64, f64)>,
    pub synthetic: PopulationParams,
    pub location_noise: f64,
    pub travel_time: TravelTimeSpec,
    pub speed_morning: Option<f64>,
    pub speed_evening: Option<f64>,
    pub matrix_nodes: Option<PathBuf>,
    pub matrix_edges: Option<PathBuf>,
    pub departures: Option<PathBuf>,
    pub workers: Option<usize>,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            n_days: parksim::engine::DEFAULT_DAYS,
            n_replications: parksim::sweep::SWEEP_REPLICATIONS,
            scenarios: None,
            r_max: None,
            t_w: vec![Window::Uniform(3600.0)],
            adoption: None,
            cap: vec![None],
            bound: true,
            population: None,
            anchor: None,
            synthetic: PopulationParams::default(),
            location_noise: LOCATION_NOISE_M,
            travel_time: TravelTimeSpec::Calibrated,
            speed_morning: None,
            speed_evening: None,
            matrix_nodes: None,
            matrix_edges: None,
            departures: None,
            workers: None,
            format: Format::Csv,
            out: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e: T::Err| bad(key, format!("`{}`: {e}", v.trim())))
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(bad(key, "empty list"));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(bad(key, format!("expected true or false, got `{other}`"))),
    }
}

/// Seconds from `900`, `900s`, `15m` or `0.25h`.
pub fn parse_duration(key: &str, v: &str) -> Result<f64, ConfigError> {
    let v = v.trim();
    let (num, scale) = match v.char_indices().last() {
        Some((i, 's')) => (&v[..i], 1.0),
        Some((i, 'm')) => (&v[..i], 60.0),
        Some((i, 'h')) => (&v[..i], 3600.0),
        _ => (v, 1.0),
    };
    let x: f64 = parse_num(key, num)?;
    let secs = x * scale;
    if !(secs > 0.0 && secs.is_finite()) {
        return Err(bad(key, format!("duration must be positive, got `{v}`")));
    }
    Ok(secs)
}

pub fn parse_windows(key: &str, v: &str) -> Result<Vec<Window>, ConfigError> {
    parse_list(key, v, |s| {
        if s.eq_ignore_ascii_case("empirical") {
            Ok(Window::Empirical)
        } else {
            parse_duration(key, s).map(Window::Uniform)
        }
    })
}

/// Meters from a list that may contain `start..end:step` ranges.
pub fn parse_radii(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    for item in parse_list(key, v, |s| Ok(s.to_string()))? {
        if let Some((range, step)) = item.split_once("..") {
            let (end, step) = step.split_once(':').ok_or_else(|| bad(key, "range needs `:step`"))?;
            let start: f64 = parse_num(key, range)?;
            let end: f64 = parse_num(key, end)?;
            let step: f64 = parse_num(key, step)?;
            if !(step > 0.0) || end < start {
                return Err(bad(key, format!("bad range `{item}`")));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            out.extend((0..=n).map(|i| start + i as f64 * step));
        } else {
            out.push(parse_num(key, &item)?);
        }
    }
    if let Some(r) = out.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(bad(key, format!("radius must be positive, got {r}")));
    }
    Ok(out)
}

pub fn parse_scenarios(key: &str, v: &str) -> Result<Vec<Scenario>, ConfigError> {
    parse_list(key, v, |s| s.parse().map_err(|e: String| bad(key, e)))
}

pub fn parse_adoptions(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    let rates = parse_list(key, v, |s| parse_num::<f64>(key, s))?;
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(bad(key, format!("rate must be in (0, 1], got {r}")));
    }
    Ok(rates)
}

pub fn parse_caps(key: &str, v: &str) -> Result<Vec<Option<usize>>, ConfigError> {
    parse_list(key, v, |s| {
        if s.eq_ignore_ascii_case("none") {
            return Ok(None);
        }
        match parse_num::<usize>(key, s)? {
            0 => Err(bad(key, "cap must be at least 1")),
            c => Ok(Some(c)),
        }
    })
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let path = || (!v.eq_ignore_ascii_case("none")).then(|| PathBuf::from(v));
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "n_days" => {
                self.n_days = parse_num(key, v)?;
                if self.n_days == 0 {
                    return Err(bad(key, "must be at least 1"));
                }
            }
            "n_replications" => {
                self.n_replications = parse_num(key, v)?;
                if self.n_replications == 0 {
                    return Err(bad(key, "must be at least 1"));
                }
            }
            "scenario" => self.scenarios = Some(parse_scenarios(key, v)?),
            "r_max" => self.r_max = Some(parse_radii(key, v)?),
            "t_w" => self.t_w = parse_windows(key, v)?,
            "adoption" => self.adoption = Some(parse_adoptions(key, v)?),
            "cap" => self.cap = parse_caps(key, v)?,
            "bound" => self.bound = parse_bool(key, v)?,
            "population" => self.population = path(),
            "anchor_lon" => self.anchor = Some((parse_num(key, v)?, self.anchor.map_or(0.0, |a| a.1))),
            "anchor_lat" => self.anchor = Some((self.anchor.map_or(0.0, |a| a.0), parse_num(key, v)?)),
            "n_commuters" => self.synthetic.n_commuters = parse_num(key, v)?,
            "home_clusters" => self.synthetic.n_home_clusters = parse_num(key, v)?,
            "work_clusters" => self.synthetic.n_work_clusters = parse_num(key, v)?,
            "cluster_sigma" => self.synthetic.cluster_sigma = parse_num(key, v)?,
            "region_extent" => self.synthetic.region_extent = parse_num(key, v)?,
            "imbalance" => self.synthetic.imbalance = parse_num(key, v)?,
            "population_seed" => self.synthetic.seed = parse_num(key, v)?,
            "min_separation" => self.synthetic.min_separation = parse_num(key, v)?,
            "location_noise" => {
                self.location_noise = parse_num(key, v)?;
                if !(self.location_noise >= 0.0 && self.location_noise.is_finite()) {
                    return Err(bad(key, "must be a non-negative number of meters"));
                }
            }
            "travel_time" => {
                self.travel_time = match v.to_ascii_lowercase().as_str() {
                    "calibrated" => TravelTimeSpec::Calibrated,
                    "speed" => TravelTimeSpec::Speed,
                    "matrix" => TravelTimeSpec::Matrix,
                    other => return Err(bad(key, format!("expected calibrated, speed or matrix, got `{other}`"))),
                }
            }
            "speed_morning" => self.speed_morning = Some(parse_num(key, v)?),
            "speed_evening" => self.speed_evening = Some(parse_num(key, v)?),
            "matrix_nodes" => self.matrix_nodes = path(),
            "matrix_edges" => self.matrix_edges = path(),
            "departures" => self.departures = path(),
            "workers" => self.workers = Some(parse_num(key, v)?),
            "format" => self.format = v.parse().map_err(|e: String| bad(key, e))?,
            "out" => self.out = path(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// The effective configuration as `key = value` lines, in [`KEYS`]
    /// order. `workers` is left out so results do not depend on pool width.
    pub fn echo(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(", ");
        let opt = |v: &Option<PathBuf>| v.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut out = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("seed", self.seed.to_string());
        put("n_days", self.n_days.to_string());
        put("n_replications", self.n_replications.to_string());
        put(
            "scenario",
            self.scenarios
                .as_ref()
                .map_or("default".into(), |s| join(s.iter().map(|s| s.to_string().to_lowercase()).collect())),
        );
        put(
            "r_max",
            self.r_max
                .as_ref()
                .map_or("default".into(), |r| join(r.iter().map(|r| r.to_string()).collect())),
        );
        put(
            "t_w",
            join(
                self.t_w
                    .iter()
                    .map(|w| match w {
                        Window::Uniform(s) => format!("{s}s"),
                        Window::Empirical => "empirical".into(),
                    })
                    .collect(),
            ),
        );
        put(
            "adoption",
            self.adoption
                .as_ref()
                .map_or("default".into(), |a| join(a.iter().map(|a| a.to_string()).collect())),
        );
        put(
            "cap",
            join(self.cap.iter().map(|c| c.map_or("none".into(), |c| c.to_string())).collect()),
        );
        put("bound", self.bound.to_string());
        put("population", opt(&self.population));
        if let Some((lon, lat)) = self.anchor {
            put("anchor_lon", lon.to_string());
            put("anchor_lat", lat.to_string());
        }
        if self.population.is_none() {
            let s = &self.synthetic;
            put("n_commuters", s.n_commuters.to_string());
            put("home_clusters", s.n_home_clusters.to_string());
            put("work_clusters", s.n_work_clusters.to_string());
            put("cluster_sigma", s.cluster_sigma.to_string());
            put("region_extent", s.region_extent.to_string());
            put("imbalance", s.imbalance.to_string());
            put("population_seed", s.seed.to_string());
        }
        put("min_separation", self.synthetic.min_separation.to_string());
        put("location_noise", self.location_noise.to_string());
        put(
            "travel_time",
            match self.travel_time {
                TravelTimeSpec::Calibrated => "calibrated",
                TravelTimeSpec::Speed => "speed",
                TravelTimeSpec::Matrix => "matrix",
            }
            .into(),
        );
        if let Some(v) = self.speed_morning {
            put("speed_morning", v.to_string());
        }
        if let Some(v) = self.speed_evening {
            put("speed_evening", v.to_string());
        }
        if self.travel_time == TravelTimeSpec::Matrix {
            put("matrix_nodes", opt(&self.matrix_nodes));
            put("matrix_edges", opt(&self.matrix_edges));
        }
        put("departures", opt(&self.departures));
        put(
            "format",
            match self.format {
                Format::Csv => "csv",
                Format::Json => "json",
            }
            .into(),
        );
        put("out", opt(&self.out));
        out
    }

    pub fn echo_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.echo() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
