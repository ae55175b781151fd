//! Replication aggregation, relative metrics and result serialization.

mod histogram;
pub mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RunResult, Scenario};

pub use histogram::{LegHistogram, LEG_BIN_M};

/// Results CSV header. The first fifteen columns are the stable interface;
/// the trailing ones carry the city-wide adoption normalization and extra
/// spread information.
pub const CSV_HEADER: [&str; 19] = [
    "scenario",
    "r_max_m",
    "t_w_s",
    "adoption",
    "replications",
    "np_mean",
    "np_std",
    "nc_mean",
    "nc_std",
    "np_rel_s1",
    "nc_rel",
    "extra_vmt_rel",
    "bound_np_mean",
    "cap",
    "overflow_legs_mean",
    "np_rel_city",
    "bound_np_max",
    "n_users",
    "n_population",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty replication set")]
    Empty,
    #[error("replications mix scenarios or populations")]
    Heterogeneous,
    #[error("baseline has no parking demand")]
    Baseline,
    #[error("results file: {0}")]
    Csv(#[from] csv::Error),
    #[error("results file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sample statistics (std uses the n-1 denominator; 0 for one sample).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Stat { mean, std, min, max })
    }

    /// Coefficient of variation, `std / mean`.
    pub fn cv(&self) -> f64 {
        if self.mean != 0.0 {
            self.std / self.mean.abs()
        } else {
            0.0
        }
    }
}

/// Coordinates of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub scenario: Scenario,
    pub r_max: f64,
    /// `None` for an empirical departure distribution.
    pub t_w: Option<f64>,
    pub adoption: f64,
    pub cap: Option<usize>,
}

/// One replication's outcome as seen by the aggregator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub run: RunResult,
    /// Instantaneous-travel parking bound for the same commuters.
    pub bound: Option<usize>,
    /// Size of the full population the adopters were drawn from.
    pub population: usize,
}

impl Replication {
    /// Parking relative to the whole city, non-adopters keeping two private
    /// spots each.
    pub fn parking_rel_city(&self) -> f64 {
        if self.population == 0 {
            return 0.0;
        }
        let non_adopters = self.population.saturating_sub(self.run.n_users);
        (self.run.n_parking + 2 * non_adopters) as f64 / (2 * self.population) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub key: CellKey,
    pub replications: usize,
    pub n_users: usize,
    pub n_population: usize,
    pub np: Stat,
    pub nc: Stat,
    /// N_P / (2 N_U), adopters only.
    pub np_rel_s1: Stat,
    /// Whole-city relative parking, see [`Replication::parking_rel_city`].
    pub np_rel_city: Stat,
    pub nc_rel: Stat,
    /// Final-day extra VMT over final-day base VMT.
    pub extra_vmt_rel: Stat,
    pub bound_np: Option<Stat>,
    pub overflow_legs: Stat,
    pub leg_histogram: LegHistogram,
    /// Replication means of N_P / (2 N_U) for each day.
    pub daily_np_rel: Vec<f64>,
    /// Replication means of the daily extra VMT ratio.
    pub daily_extra_vmt_rel: Vec<f64>,
}

/// Exact sample statistics over `reps`, which must share scenario and
/// population size.
pub fn aggregate(key: CellKey, reps: &[Replication]) -> Result<AggregateResult, MetricsError> {
    let first = reps.first().ok_or(MetricsError::Empty)?;
    if reps
        .iter()
        .any(|r| r.run.scenario != first.run.scenario || r.population != first.population)
    {
        return Err(MetricsError::Heterogeneous);
    }
    let stat = |f: &dyn Fn(&Replication) -> f64| {
        let v: Vec<f64> = reps.iter().map(f).collect();
        Stat::of(&v).expect("non-empty")
    };
    let bounds: Vec<f64> = reps.iter().filter_map(|r| r.bound.map(|b| b as f64)).collect();
    let mut hist = LegHistogram::new();
    for r in reps {
        hist.merge(&r.run.leg_histogram());
    }
    let n_days = reps.iter().map(|r| r.run.days.len()).min().unwrap_or(0);
    let daily = |f: &dyn Fn(&RunResult, usize) -> f64| -> Vec<f64> {
        (0..n_days)
            .map(|d| reps.iter().map(|r| f(&r.run, d)).sum::<f64>() / reps.len() as f64)
            .collect()
    };
    let users = first.run.n_users.max(1) as f64;
    Ok(AggregateResult {
        key,
        replications: reps.len(),
        n_users: first.run.n_users,
        n_population: first.population,
        np: stat(&|r| r.run.n_parking as f64),
        nc: stat(&|r| r.run.n_cars as f64),
        np_rel_s1: stat(&|r| r.run.parking_rel_s1()),
        np_rel_city: stat(&|r| r.parking_rel_city()),
        nc_rel: stat(&|r| r.run.cars_rel()),
        extra_vmt_rel: stat(&|r| r.run.extra_vmt_rel()),
        bound_np: Stat::of(&bounds),
        overflow_legs: stat(&|r| r.run.overflow_legs() as f64),
        leg_histogram: hist,
        daily_np_rel: daily(&|r, d| r.days[d].n_parking as f64 / (2.0 * users)),
        daily_extra_vmt_rel: daily(&|r, d| {
            let day = &r.days[d];
            if day.base_vmt > 0.0 {
                day.extra_vmt / day.base_vmt
            } else {
                0.0
            }
        }),
    })
}

/// Reference for relative parking figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// Private parking: `2 N_U`.
    S1,
    /// Mean N_P of a shared-parking (S2) run on the same commuters,
    /// conventionally at `r_max = 500 m`.
    S2 { np_mean: f64 },
}

pub fn relative_parking(agg: &AggregateResult, baseline: Baseline) -> Result<f64, MetricsError> {
    let denom = match baseline {
        Baseline::S1 => 2.0 * agg.n_users as f64,
        Baseline::S2 { np_mean } => np_mean,
    };
    if denom > 0.0 {
        Ok(agg.np.mean / denom)
    } else {
        Err(MetricsError::Baseline)
    }
}

/// Flat row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub r_max_m: f64,
    pub t_w_s: Option<f64>,
    pub adoption: f64,
    pub replications: usize,
    pub np_mean: f64,
    pub np_std: f64,
    pub nc_mean: f64,
    pub nc_std: f64,
    pub np_rel_s1: f64,
    pub nc_rel: f64,
    pub extra_vmt_rel: f64,
    pub bound_np_mean: Option<f64>,
    pub cap: Option<usize>,
    pub overflow_legs_mean: f64,
    pub np_rel_city: f64,
    pub bound_np_max: Option<f64>,
    pub n_users: usize,
    pub n_population: usize,
}

impl From<&AggregateResult> for ResultRow {
    fn from(a: &AggregateResult) -> Self {
        ResultRow {
            scenario: a.key.scenario,
            r_max_m: a.key.r_max,
            t_w_s: a.key.t_w,
            adoption: a.key.adoption,
            replications: a.replications,
            np_mean: a.np.mean,
            np_std: a.np.std,
            nc_mean: a.nc.mean,
            nc_std: a.nc.std,
            np_rel_s1: a.np_rel_s1.mean,
            nc_rel: a.nc_rel.mean,
            extra_vmt_rel: a.extra_vmt_rel.mean,
            bound_np_mean: a.bound_np.map(|b| b.mean),
            cap: a.key.cap,
            overflow_legs_mean: a.overflow_legs.mean,
            np_rel_city: a.np_rel_city.mean,
            bound_np_max: a.bound_np.map(|b| b.max),
            n_users: a.n_users,
            n_population: a.n_population,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

pub fn write_csv<W: Write>(out: W, results: &[AggregateResult]) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for a in results {
        w.serialize(ResultRow::from(a))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>, MetricsError> {
    parse_csv(File::open(path)?)
}

pub fn parse_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct JsonResults<'a, C: Serialize> {
    config: &'a C,
    cells: &'a [AggregateResult],
}

/// Writes `results` to `path`; JSON output embeds `config`.
pub fn write_results<C: Serialize>(
    results: &[AggregateResult],
    config: &C,
    format: Format,
    path: impl AsRef<Path>,
) -> Result<(), MetricsError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(&mut out, results)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &JsonResults { config, cells: results })?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row of the bound table written by the `bound` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub r_max_m: f64,
    pub adoption: f64,
    pub replications: usize,
    pub n_users: usize,
    pub bound_np_mean: f64,
    pub bound_np_std: f64,
    pub bound_np_min: f64,
    pub bound_np_max: f64,
}

#[derive(Debug, Serialize)]
struct JsonBounds<'a, C: Serialize> {
    config: &'a C,
    bounds: &'a [BoundRow],
}

pub fn write_bounds<C: Serialize>(
    rows: &[BoundRow],
    config: &C,
    format: Format,
    path: impl AsRef<Path>,
) -> Result<(), MetricsError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in rows {
                w.serialize(r)?;
            }
            if rows.is_empty() {
                w.write_record(["r_max_m", "adoption", "replications", "n_users", "bound_np_mean", "bound_np_std", "bound_np_min", "bound_np_max"])?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &JsonBounds { config, bounds: rows })?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::DayResult;
    use proptest::prelude::*;

    fn rep(np: usize, nc: usize, users: usize, pop: usize) -> Replication {
        let mut day = DayResult {
            n_parking: np,
            n_cars: nc,
            base_vmt: 1000.0,
            extra_vmt: 10.0,
            ..DayResult::default()
        };
        day.leg_histogram.add(10.0);
        Replication {
            run: RunResult {
                scenario: Scenario::S3,
                n_users: users,
                days: vec![day],
                n_parking: np,
                n_cars: nc,
            },
            bound: Some(np / 2),
            population: pop,
        }
    }

    fn key() -> CellKey {
        CellKey {
            scenario: Scenario::S3,
            r_max: 500.0,
            t_w: Some(3600.0),
            adoption: 1.0,
            cap: None,
        }
    }

    #[test]
    fn single_replication_has_zero_std() {
        let a = aggregate(key(), &[rep(10, 5, 10, 10)]).unwrap();
        assert_eq!(a.np.std, 0.0);
        assert_eq!(a.np.mean, 10.0);
    }

    #[test]
    fn two_replications_stats() {
        let a = aggregate(key(), &[rep(10, 5, 10, 10), rep(20, 5, 10, 10)]).unwrap();
        assert_eq!(a.np.mean, 15.0);
        assert!((a.np.std - 7.0710678118654755).abs() < 1e-12);
        assert_eq!((a.np.min, a.np.max), (10.0, 20.0));
        assert_eq!(a.leg_histogram.total(), 2);
        assert_eq!(a.bound_np.unwrap().mean, 7.5);
    }

    #[test]
    fn empty_and_mixed_sets_rejected() {
        assert!(matches!(aggregate(key(), &[]), Err(MetricsError::Empty)));
        assert!(matches!(
            aggregate(key(), &[rep(1, 1, 1, 1), rep(1, 1, 1, 2)]),
            Err(MetricsError::Heterogeneous)
        ));
    }

    #[test]
    fn relative_parking_against_s1() {
        let full = aggregate(key(), &[rep(20, 10, 10, 10)]).unwrap();
        assert_eq!(relative_parking(&full, Baseline::S1).unwrap(), 1.0);
        let half = aggregate(key(), &[rep(10, 10, 10, 10)]).unwrap();
        assert_eq!(relative_parking(&half, Baseline::S1).unwrap(), 0.5);
        assert!(relative_parking(&half, Baseline::S2 { np_mean: 0.0 }).is_err());
    }

    #[test]
    fn city_normalization_counts_non_adopters() {
        // 100 commuters, 25 adopters needing 30 spots: (30 + 150) / 200.
        let a = aggregate(key(), &[rep(30, 20, 25, 100)]).unwrap();
        assert!((a.np_rel_city.mean - 0.9).abs() < 1e-12);
        assert!((a.np_rel_s1.mean - 0.6).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let mut a = aggregate(key(), &[rep(13, 7, 11, 17), rep(17, 8, 11, 17)]).unwrap();
        a.key.r_max = 1.0 / 3.0;
        let mut b = a.clone();
        b.key.t_w = None;
        b.key.cap = Some(42);
        b.bound_np = None;
        let mut buf = Vec::new();
        write_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "scenario,r_max_m,t_w_s,adoption,replications,np_mean,np_std,nc_mean,nc_std,np_rel_s1,nc_rel,extra_vmt_rel,bound_np_mean,cap,overflow_legs_mean"
        ));
        let rows = parse_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![ResultRow::from(&a), ResultRow::from(&b)]);
    }

    proptest! {
        #[test]
        fn s2_baseline_identity(np in 1usize..10_000, s2 in 1usize..10_000, users in 1usize..5_000) {
            let agg = aggregate(key(), &[rep(np, 1, users, users)]).unwrap();
            let s2_agg = aggregate(key(), &[rep(s2, 1, users, users)]).unwrap();
            let vs_s1 = relative_parking(&agg, Baseline::S1).unwrap();
            let s2_vs_s1 = relative_parking(&s2_agg, Baseline::S1).unwrap();
            let vs_s2 = relative_parking(&agg, Baseline::S2 { np_mean: s2_agg.np.mean }).unwrap();
            prop_assert!((vs_s2 - vs_s1 / s2_vs_s1).abs() <= 1e-12 * vs_s2.max(1.0));
        }
    }
}
