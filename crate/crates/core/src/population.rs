//! Commuter populations: synthetic generation, CSV ingestion, location noise
//! and adoption subsampling.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{dist, GeoError, GeoPoint, Projection};
use crate::rng::{self, Stream};

/// Default minimum home-work separation, meters.
pub const MIN_SEPARATION_M: f64 = 1000.0;

/// Default standard deviation of the location noise, meters.
pub const LOCATION_NOISE_M: f64 = 166.0;

const MAX_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("invalid population parameters: {0}")]
    Params(String),
    #[error("commuter {index}: no home/work pair at least {min_separation} m apart after {MAX_RETRIES} draws")]
    Degenerate { index: usize, min_separation: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Commuter {
    pub id: u64,
    pub home: GeoPoint,
    pub work: GeoPoint,
}

impl Commuter {
    pub fn commute_distance(&self) -> f64 {
        dist(self.home, self.work)
    }
}

/// Knobs for the synthetic Gaussian-mixture city.
///
/// Homes are drawn from `n_home_clusters` clusters spread over a square of
/// side `region_extent` centred on the origin. Workplaces come from two
/// families: a fraction `imbalance` from central clusters inside the middle
/// fifth of the region, the rest from clusters that sit on home-cluster
/// centres. `imbalance = 0` gives balanced flows; `1` sends everyone to the
/// centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub n_commuters: usize,
    pub n_home_clusters: usize,
    pub n_work_clusters: usize,
    pub cluster_sigma: f64,
    pub region_extent: f64,
    pub imbalance: f64,
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams {
            n_commuters: 50_000,
            n_home_clusters: 24,
            n_work_clusters: 8,
            cluster_sigma: 300.0,
            region_extent: 10_000.0,
            imbalance: 0.4,
            min_separation: MIN_SEPARATION_M,
            seed: 1,
        }
    }
}

impl PopulationParams {
    pub fn validate(&self) -> Result<(), PopulationError> {
        let bad = |m: &str| Err(PopulationError::Params(m.to_string()));
        if self.n_commuters > 0 && (self.n_home_clusters == 0 || self.n_work_clusters == 0) {
            return bad("cluster counts must be at least 1");
        }
        if !(self.cluster_sigma > 0.0 && self.cluster_sigma.is_finite()) {
            return bad("cluster_sigma must be positive");
        }
        if !(self.region_extent > 0.0 && self.region_extent < 1.0e7) {
            return bad("region_extent must be in (0, 1e7) m");
        }
        if !(0.0..=1.0).contains(&self.imbalance) {
            return bad("imbalance must be in [0, 1]");
        }
        if !(self.min_separation >= 0.0) {
            return bad("min_separation must be non-negative");
        }
        Ok(())
    }
}

/// Generates `params.n_commuters` commuters; deterministic in `params.seed`.
pub fn generate_synthetic(params: &PopulationParams) -> Result<Vec<Commuter>, PopulationError> {
    params.validate()?;
    if params.n_commuters == 0 {
        return Ok(Vec::new());
    }
    let mut rng = rng::rng(rng::derive(params.seed, Stream::Population, 0));
    let half = params.region_extent / 2.0;
    let homes: Vec<GeoPoint> = (0..params.n_home_clusters)
        .map(|_| GeoPoint::new(rng.random_range(-half..half), rng.random_range(-half..half)))
        .collect();
    let central_half = params.region_extent / 10.0;
    let central: Vec<GeoPoint> = (0..params.n_work_clusters)
        .map(|_| {
            GeoPoint::new(
                rng.random_range(-central_half..central_half),
                rng.random_range(-central_half..central_half),
            )
        })
        .collect();
    let spread = Normal::new(0.0, params.cluster_sigma).expect("sigma validated");

    let mut out = Vec::with_capacity(params.n_commuters);
    for i in 0..params.n_commuters {
        let mut found = None;
        for _ in 0..MAX_RETRIES {
            let hc = homes[rng.random_range(0..homes.len())];
            let wc = if rng.random::<f64>() < params.imbalance {
                central[rng.random_range(0..central.len())]
            } else {
                homes[rng.random_range(0..homes.len())]
            };
            let home = GeoPoint::new(hc.x + spread.sample(&mut rng), hc.y + spread.sample(&mut rng));
            let work = GeoPoint::new(wc.x + spread.sample(&mut rng), wc.y + spread.sample(&mut rng));
            if dist(home, work) >= params.min_separation {
                found = Some((home, work));
                break;
            }
        }
        let (home, work) = found.ok_or(PopulationError::Degenerate {
            index: i,
            min_separation: params.min_separation,
        })?;
        out.push(Commuter {
            id: i as u64,
            home,
            work,
        });
    }
    Ok(out)
}

/// A population read from disk.
#[derive(Debug, Clone)]
pub struct LoadedPopulation {
    pub commuters: Vec<Commuter>,
    /// Rows rejected by the separation filter.
    pub dropped: usize,
    pub projection: Projection,
}

#[derive(Debug, Deserialize)]
struct Row {
    id: u64,
    home_lon: f64,
    home_lat: f64,
    work_lon: f64,
    work_lat: f64,
}

const HEADER: [&str; 5] = ["id", "home_lon", "home_lat", "work_lon", "work_lat"];

/// Reads `id,home_lon,home_lat,work_lon,work_lat` rows.
///
/// Without an explicit `projection`, the file's coordinate centroid is used
/// as the anchor.
pub fn load_csv(
    path: impl AsRef<Path>,
    projection: Option<Projection>,
    min_separation: f64,
) -> Result<LoadedPopulation, PopulationError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&text, projection, min_separation)
}

pub fn parse_csv(
    text: &str,
    projection: Option<Projection>,
    min_separation: f64,
) -> Result<LoadedPopulation, PopulationError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: u64, message: String| PopulationError::Parse { line, message };

    let mut rows = Vec::new();
    if !text.trim().is_empty() {
        let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(parse_err(1, format!("expected header `{}`", HEADER.join(","))));
        }
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let row: Row = record
                .deserialize(Some(&csv::StringRecord::from(HEADER.to_vec())))
                .map_err(|e| parse_err(line, e.to_string()))?;
            rows.push((line, row));
        }
    }

    let projection = match projection {
        Some(p) => p,
        None if rows.is_empty() => Projection::new(0.0, 0.0)?,
        None => {
            let n = (2 * rows.len()) as f64;
            let lon = rows.iter().map(|(_, r)| r.home_lon + r.work_lon).sum::<f64>() / n;
            let lat = rows.iter().map(|(_, r)| r.home_lat + r.work_lat).sum::<f64>() / n;
            Projection::new(lon, lat)?
        }
    };

    let mut seen = HashSet::with_capacity(rows.len());
    let mut commuters = Vec::with_capacity(rows.len());
    let mut dropped = 0;
    for (line, r) in rows {
        if !seen.insert(r.id) {
            return Err(parse_err(line, format!("duplicate id {}", r.id)));
        }
        let geo = |e: GeoError| parse_err(line, e.to_string());
        let home = projection.project(r.home_lon, r.home_lat).map_err(geo)?;
        let work = projection.project(r.work_lon, r.work_lat).map_err(geo)?;
        if dist(home, work) < min_separation {
            dropped += 1;
            continue;
        }
        commuters.push(Commuter { id: r.id, home, work });
    }
    Ok(LoadedPopulation {
        commuters,
        dropped,
        projection,
    })
}

/// Writes commuters in the ingestion format, unprojecting with `projection`.
pub fn write_csv<W: std::io::Write>(
    out: W,
    commuters: &[Commuter],
    projection: &Projection,
) -> Result<(), PopulationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(csv_io)?;
    for c in commuters {
        let (hl, ha) = projection.unproject(c.home);
        let (wl, wa) = projection.unproject(c.work);
        w.write_record([
            c.id.to_string(),
            hl.to_string(),
            ha.to_string(),
            wl.to_string(),
            wa.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> PopulationError {
    PopulationError::Io(std::io::Error::other(e))
}

/// Perturbs every coordinate with N(0, sigma²) noise. Commuters that end up
/// closer than `min_separation` are dropped; the count is returned.
pub fn apply_location_noise(
    pop: &[Commuter],
    sigma: f64,
    seed: u64,
    min_separation: f64,
) -> (Vec<Commuter>, usize) {
    if sigma <= 0.0 {
        let kept: Vec<_> = pop
            .iter()
            .copied()
            .filter(|c| c.commute_distance() >= min_separation)
            .collect();
        let dropped = pop.len() - kept.len();
        return (kept, dropped);
    }
    let mut rng = rng::rng(rng::derive(seed, Stream::Noise, 0));
    let noise = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut kept = Vec::with_capacity(pop.len());
    for c in pop {
        let mut jitter = |p: GeoPoint| GeoPoint::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng));
        let moved = Commuter {
            id: c.id,
            home: jitter(c.home),
            work: jitter(c.work),
        };
        if moved.commute_distance() >= min_separation {
            kept.push(moved);
        }
    }
    let dropped = pop.len() - kept.len();
    (kept, dropped)
}

/// Splits `pop` into a uniformly random set of `round(rate * |pop|)`
/// adopters and the remaining non-adopters, both in input order.
pub fn sample_adoption(pop: &[Commuter], rate: f64, seed: u64) -> (Vec<Commuter>, Vec<Commuter>) {
    let rate = rate.clamp(0.0, 1.0);
    let k = (rate * pop.len() as f64).round() as usize;
    if k == pop.len() {
        return (pop.to_vec(), Vec::new());
    }
    let mut rng = rng::rng(rng::derive(seed, Stream::Adoption, 0));
    let mut chosen = vec![false; pop.len()];
    for i in index::sample(&mut rng, pop.len(), k) {
        chosen[i] = true;
    }
    let mut adopters = Vec::with_capacity(k);
    let mut rest = Vec::with_capacity(pop.len() - k);
    for (c, pick) in pop.iter().zip(chosen) {
        if pick {
            adopters.push(*c);
        } else {
            rest.push(*c);
        }
    }
    (adopters, rest)
}
