//! Replication harness: runs every (cell, replication) pair on the worker
//! pool and aggregates per cell.
//!
//! Replication `r` of every cell uses the same seed stream, so cells differ
//! only by their parameters. A sweep therefore equals the union of its
//! cells run one at a time.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{self, EngineError, Scenario, ScenarioConfig};
use crate::metrics::{self, AggregateResult, CellKey, MetricsError, Replication};
use crate::par::Execution;
use crate::population::{self, Commuter};
use crate::rng::{self, Stream};
use crate::schedule::DepartureDistribution;
use crate::traveltime::TravelTimeProvider;

/// Default number of replications per sweep cell.
pub const SWEEP_REPLICATIONS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid cell: {0}")]
    Cell(String),
}

/// One point of a sweep. `t_w == None` selects the empirical departure
/// distribution held by [`Settings`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: Scenario,
    pub r_max: f64,
    pub t_w: Option<f64>,
    pub adoption: f64,
    pub cap: Option<usize>,
}

impl Cell {
    pub fn key(&self) -> CellKey {
        CellKey {
            scenario: self.scenario,
            r_max: self.r_max,
            t_w: self.t_w,
            adoption: self.adoption,
            cap: self.cap,
        }
    }
}

/// Settings shared by all cells.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub n_days: usize,
    pub n_replications: usize,
    pub travel_times: Arc<TravelTimeProvider>,
    pub empirical: Option<Arc<DepartureDistribution>>,
    /// Whether to compute the instantaneous-travel bound per replication.
    pub bound: bool,
}

impl Settings {
    pub fn new(seed: u64, travel_times: Arc<TravelTimeProvider>) -> Self {
        Settings {
            seed,
            n_days: engine::DEFAULT_DAYS,
            n_replications: SWEEP_REPLICATIONS,
            travel_times,
            empirical: None,
            bound: true,
        }
    }

    pub fn replication_seed(&self, r: usize) -> u64 {
        rng::derive(self.seed, Stream::Replication, r as u64)
    }

    fn departure(&self, t_w: Option<f64>) -> Result<DepartureDistribution, SweepError> {
        match t_w {
            Some(t) => DepartureDistribution::uniform(t).map_err(|e| SweepError::Cell(e.to_string())),
            None => self
                .empirical
                .as_deref()
                .cloned()
                .ok_or_else(|| SweepError::Cell("empirical departures requested but none loaded".into())),
        }
    }

    /// Engine configuration of replication `r` of `cell`.
    pub fn scenario_config(&self, cell: &Cell, r: usize) -> Result<ScenarioConfig, SweepError> {
        let mut cfg = ScenarioConfig::new(cell.scenario, cell.r_max, self.travel_times.clone());
        cfg.departure = self.departure(cell.t_w)?;
        cfg.n_days = self.n_days;
        cfg.n_replications = self.n_replications;
        cfg.seed = self.replication_seed(r);
        cfg.adoption_rate = cell.adoption;
        cfg.parking_cap = cell.cap;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Adopters of replication `r` for `rate`.
pub fn adopters(pop: &[Commuter], rate: f64, settings: &Settings, r: usize) -> Vec<Commuter> {
    population::sample_adoption(pop, rate, settings.replication_seed(r)).0
}

/// Runs one replication of one cell, without the bound.
pub fn run_replication(cell: &Cell, pop: &[Commuter], settings: &Settings, r: usize) -> Result<Replication, SweepError> {
    let cfg = settings.scenario_config(cell, r)?;
    let users = if cell.scenario == Scenario::S1 {
        pop.to_vec()
    } else {
        adopters(pop, cell.adoption, settings, r)
    };
    let run = match cell.scenario {
        Scenario::S1 => engine::run_scenario1(&users),
        _ if cell.cap.is_some() => engine::run_capped(&cfg, &users)?,
        _ => engine::run_multi_day(&cfg, &users)?,
    };
    Ok(Replication {
        run,
        bound: None,
        population: pop.len(),
    })
}

fn check_cell(cell: &Cell) -> Result<(), SweepError> {
    if !(cell.adoption > 0.0 && cell.adoption <= 1.0) {
        return Err(SweepError::Cell(format!("adoption must be in (0, 1], got {}", cell.adoption)));
    }
    if cell.scenario == Scenario::S1 && cell.adoption != 1.0 {
        return Err(SweepError::Cell("scenario S1 has no adoption rate".into()));
    }
    if cell.scenario == Scenario::S1 && cell.cap.is_some() {
        return Err(SweepError::Cell("scenario S1 cannot be capped".into()));
    }
    Ok(())
}

/// Runs and aggregates every cell. Output order follows `cells`.
pub fn run_cells(
    cells: &[Cell],
    pop: &[Commuter],
    settings: &Settings,
    exec: Execution,
) -> Result<Vec<AggregateResult>, SweepError> {
    for c in cells {
        check_cell(c)?;
        settings.scenario_config(c, 0)?;
    }
    let reps = settings.n_replications.max(1);

    // Bounds depend only on (r_max, adoption, replication); compute each once.
    let mut bound_jobs: BTreeMap<(u64, u64, usize), Option<usize>> = BTreeMap::new();
    if settings.bound {
        for c in cells {
            for r in 0..reps {
                bound_jobs.insert((c.r_max.to_bits(), c.adoption.to_bits(), r), None);
            }
        }
    }
    let keys: Vec<_> = bound_jobs.keys().copied().collect();
    let bounds = exec.map(keys.clone(), |(r_bits, a_bits, r)| {
        let users = adopters(pop, f64::from_bits(a_bits), settings, r);
        engine::compute_lower_bound(&users, f64::from_bits(r_bits), settings.replication_seed(r))
    });
    for (k, b) in keys.into_iter().zip(bounds) {
        bound_jobs.insert(k, Some(b?));
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let results = exec.map(jobs, |(i, r)| run_replication(&cells[i], pop, settings, r));
    let mut per_cell: Vec<Vec<Replication>> = vec![Vec::with_capacity(reps); cells.len()];
    for (idx, res) in results.into_iter().enumerate() {
        let (i, r) = (idx / reps, idx % reps);
        let mut rep = res?;
        let c = &cells[i];
        rep.bound = bound_jobs
            .get(&(c.r_max.to_bits(), c.adoption.to_bits(), r))
            .copied()
            .flatten();
        per_cell[i].push(rep);
    }
    cells
        .iter()
        .zip(per_cell)
        .map(|(c, reps)| Ok(metrics::aggregate(c.key(), &reps)?))
        .collect()
}

/// Mean and max of the bound per r_max at adoption `rate`.
pub fn bound_table(
    r_values: &[f64],
    rate: f64,
    pop: &[Commuter],
    settings: &Settings,
    exec: Execution,
) -> Result<Vec<(f64, metrics::Stat)>, SweepError> {
    let reps = settings.n_replications.max(1);
    let jobs: Vec<(usize, usize)> = (0..r_values.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let out = exec.map(jobs, |(i, r)| {
        let users = adopters(pop, rate, settings, r);
        engine::compute_lower_bound(&users, r_values[i], settings.replication_seed(r)).map(|b| b as f64)
    });
    let mut values = vec![Vec::with_capacity(reps); r_values.len()];
    for (idx, v) in out.into_iter().enumerate() {
        values[idx / reps].push(v?);
    }
    Ok(r_values
        .iter()
        .zip(values)
        .map(|(&r, v)| (r, metrics::Stat::of(&v).expect("at least one replication")))
        .collect())
}

/// Default r_max values (meters) swept for `scenario`.
pub fn default_r_values(scenario: Scenario) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=15).map(|i| i as f64 * 100.0).collect();
    if scenario == Scenario::S4 {
        v.extend([2000.0, 3000.0, 4000.0, 5000.0, 7500.0, 10_000.0]);
    }
    v
}

/// Default adoption rates swept for `scenario`.
pub fn default_adoptions(scenario: Scenario) -> Vec<f64> {
    match scenario {
        Scenario::S3 | Scenario::S4 => vec![0.1, 0.25, 0.5, 1.0],
        _ => vec![1.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::PopulationParams;
    use crate::traveltime::SpeedModel;

    fn setup(n: usize) -> (Vec<Commuter>, Settings) {
        let pop = population::generate_synthetic(&PopulationParams {
            n_commuters: n,
            region_extent: 8000.0,
            cluster_sigma: 600.0,
            ..PopulationParams::default()
        })
        .unwrap();
        let mut s = Settings::new(7, Arc::new(TravelTimeProvider::Speed(SpeedModel::default())));
        s.n_days = 3;
        s.n_replications = 3;
        (pop, s)
    }

    fn cell(scenario: Scenario, r_max: f64) -> Cell {
        Cell {
            scenario,
            r_max,
            t_w: Some(3600.0),
            adoption: 1.0,
            cap: None,
        }
    }

    #[test]
    fn sweep_is_union_of_cells() {
        let (pop, s) = setup(150);
        let cells = [cell(Scenario::S2, 300.0), cell(Scenario::S3, 300.0), cell(Scenario::S4, 900.0)];
        let all = run_cells(&cells, &pop, &s, Execution::Parallel { workers: 2 }).unwrap();
        for (c, agg) in cells.iter().zip(&all) {
            let one = run_cells(std::slice::from_ref(c), &pop, &s, Execution::Sequential).unwrap();
            assert_eq!(&one[0], agg);
        }
    }

    #[test]
    fn bound_attached_and_table_agrees() {
        let (pop, s) = setup(120);
        let agg = run_cells(&[cell(Scenario::S3, 400.0)], &pop, &s, Execution::Sequential).unwrap();
        let b = agg[0].bound_np.unwrap();
        let table = bound_table(&[400.0], 1.0, &pop, &s, Execution::Sequential).unwrap();
        assert_eq!(table[0].1, b);
    }

    #[test]
    fn rejects_bad_cells() {
        let (pop, s) = setup(20);
        let mut c = cell(Scenario::S3, 300.0);
        c.adoption = 0.0;
        assert!(run_cells(&[c], &pop, &s, Execution::Sequential).is_err());
        let mut c = cell(Scenario::S3, 300.0);
        c.t_w = None;
        assert!(matches!(run_cells(&[c], &pop, &s, Execution::Sequential), Err(SweepError::Cell(_))));
    }

    #[test]
    fn default_lists() {
        assert_eq!(default_r_values(Scenario::S2).len(), 15);
        assert_eq!(*default_r_values(Scenario::S4).last().unwrap(), 10_000.0);
        assert_eq!(default_adoptions(Scenario::S2), vec![1.0]);
    }
}
