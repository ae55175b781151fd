//! Directed, time-of-day-dependent travel times.
//!
//! Two providers: a constant-speed model (one speed per period), and an
//! intersection matrix where each trip end snaps to its nearest node and the
//! matrix cell for the period gives the time. Missing matrix cells fall back
//! to the speed model and are counted.

use rustc_hash::FxHashMap as HashMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{dist, GeoPoint, Projection};
use crate::population::Commuter;
use crate::spatial_index::ResourcePool;

/// Mean home-to-work trip time the default speed model is calibrated to, seconds.
pub const TARGET_MORNING_S: f64 = 1199.0;
/// Mean work-to-home trip time the default speed model is calibrated to, seconds.
pub const TARGET_EVENING_S: f64 = 1027.0;

#[derive(Debug, Error)]
pub enum TravelTimeError {
    #[error("travel-time matrix has no nodes")]
    NoNodes,
    #[error("{file} line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error("speeds must be positive, got morning {0} m/s, evening {1} m/s")]
    Speed(f64, f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    Morning,
    Evening,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedModel {
    pub speed_morning: f64,
    pub speed_evening: f64,
}

impl Default for SpeedModel {
    /// Speeds giving the target mean times for a 12 km mean commute.
    fn default() -> Self {
        SpeedModel {
            speed_morning: 12_000.0 / TARGET_MORNING_S,
            speed_evening: 12_000.0 / TARGET_EVENING_S,
        }
    }
}

impl SpeedModel {
    pub fn new(speed_morning: f64, speed_evening: f64) -> Result<Self, TravelTimeError> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        if ok(speed_morning) && ok(speed_evening) {
            Ok(SpeedModel {
                speed_morning,
                speed_evening,
            })
        } else {
            Err(TravelTimeError::Speed(speed_morning, speed_evening))
        }
    }

    /// Speeds that make the mean commute time of `commuters` hit the given
    /// per-period targets. Falls back to the default for an empty population.
    pub fn calibrate(commuters: &[Commuter], target_morning: f64, target_evening: f64) -> Self {
        if commuters.is_empty() {
            return SpeedModel::default();
        }
        let mean = commuters.iter().map(Commuter::commute_distance).sum::<f64>() / commuters.len() as f64;
        SpeedModel::new(mean / target_morning, mean / target_evening).unwrap_or_default()
    }

    pub fn speed(&self, period: Period) -> f64 {
        match period {
            Period::Morning => self.speed_morning,
            Period::Evening => self.speed_evening,
        }
    }

    pub fn travel_time(&self, o: GeoPoint, d: GeoPoint, period: Period) -> f64 {
        dist(o, d) / self.speed(period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelTime {
    pub seconds: f64,
    /// The matrix had no cell for this pair and the speed model answered.
    pub fallback: bool,
}

/// Sparse intersection-to-intersection travel times for the two periods.
#[derive(Debug, Clone)]
pub struct TravelTimeMatrix {
    nodes: Vec<GeoPoint>,
    node_ids: Vec<u64>,
    index: ResourcePool,
    times: HashMap<(u32, u32), (f64, f64)>,
    fallback: SpeedModel,
}

impl TravelTimeMatrix {
    /// `cells` maps node-index pairs to `(seconds_morning, seconds_evening)`.
    /// Diagonal cells are always zero.
    pub fn new(
        nodes: Vec<(u64, GeoPoint)>,
        cells: impl IntoIterator<Item = ((usize, usize), (f64, f64))>,
        fallback: SpeedModel,
    ) -> Result<Self, TravelTimeError> {
        if nodes.is_empty() {
            return Err(TravelTimeError::NoNodes);
        }
        let (node_ids, nodes): (Vec<u64>, Vec<GeoPoint>) = nodes.into_iter().unzip();
        let mut index = ResourcePool::new(node_cell_size(&nodes));
        for (i, p) in nodes.iter().enumerate() {
            index.insert(i as u64, *p).expect("indices are unique");
        }
        let times = cells
            .into_iter()
            .filter(|((a, b), _)| a != b)
            .map(|((a, b), t)| ((a as u32, b as u32), t))
            .collect();
        Ok(TravelTimeMatrix {
            nodes,
            node_ids,
            index,
            times,
            fallback,
        })
    }

    /// Loads `node_id,lon,lat` and `from_id,to_id,seconds_morning,seconds_evening`
    /// files. Edges naming unknown nodes or negative times are parse errors.
    pub fn load(
        nodes_path: impl AsRef<Path>,
        edges_path: impl AsRef<Path>,
        projection: &Projection,
        fallback: SpeedModel,
    ) -> Result<Self, TravelTimeError> {
        let nodes_name = nodes_path.as_ref().display().to_string();
        let edges_name = edges_path.as_ref().display().to_string();

        #[derive(Deserialize)]
        struct NodeRow {
            node_id: u64,
            lon: f64,
            lat: f64,
        }
        #[derive(Deserialize)]
        struct EdgeRow {
            from_id: u64,
            to_id: u64,
            seconds_morning: f64,
            seconds_evening: f64,
        }

        let mut nodes = Vec::new();
        let mut by_id = HashMap::default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(File::open(nodes_path)?);
        for rec in rdr.deserialize::<NodeRow>() {
            let rec = rec.map_err(|e| csv_err(&nodes_name, e))?;
            let line = nodes.len() as u64 + 2;
            let p = projection.project(rec.lon, rec.lat).map_err(|e| TravelTimeError::Parse {
                file: nodes_name.clone(),
                line,
                message: e.to_string(),
            })?;
            if by_id.insert(rec.node_id, nodes.len()).is_some() {
                return Err(TravelTimeError::Parse {
                    file: nodes_name,
                    line,
                    message: format!("duplicate node id {}", rec.node_id),
                });
            }
            nodes.push((rec.node_id, p));
        }

        let mut cells = Vec::new();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(File::open(edges_path)?);
        for (i, rec) in rdr.deserialize::<EdgeRow>().enumerate() {
            let rec = rec.map_err(|e| csv_err(&edges_name, e))?;
            let line = i as u64 + 2;
            let bad = |message: String| TravelTimeError::Parse {
                file: edges_name.clone(),
                line,
                message,
            };
            let from = *by_id
                .get(&rec.from_id)
                .ok_or_else(|| bad(format!("unknown node {}", rec.from_id)))?;
            let to = *by_id
                .get(&rec.to_id)
                .ok_or_else(|| bad(format!("unknown node {}", rec.to_id)))?;
            if !(rec.seconds_morning >= 0.0 && rec.seconds_evening >= 0.0) {
                return Err(bad("travel times must be non-negative".into()));
            }
            cells.push(((from, to), (rec.seconds_morning, rec.seconds_evening)));
        }
        TravelTimeMatrix::new(nodes, cells, fallback)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> GeoPoint {
        self.nodes[i]
    }

    pub fn node_id(&self, i: usize) -> u64 {
        self.node_ids[i]
    }

    /// Index of the closest node; ties go to the lowest index.
    pub fn nearest_node(&self, p: GeoPoint) -> usize {
        self.index
            .nearest(p)
            .map(|n| n.id as usize)
            .expect("matrix always has nodes")
    }

    /// Cell lookup by node indices; `None` when the pair is missing.
    pub fn cell(&self, from: usize, to: usize, period: Period) -> Option<f64> {
        if from == to {
            return Some(0.0);
        }
        self.times
            .get(&(from as u32, to as u32))
            .map(|&(m, e)| match period {
                Period::Morning => m,
                Period::Evening => e,
            })
    }

    pub fn travel_time(&self, o: GeoPoint, d: GeoPoint, period: Period) -> TravelTime {
        match self.cell(self.nearest_node(o), self.nearest_node(d), period) {
            Some(seconds) => TravelTime {
                seconds,
                fallback: false,
            },
            None => TravelTime {
                seconds: self.fallback.travel_time(o, d, period),
                fallback: true,
            },
        }
    }

    pub fn fallback_model(&self) -> &SpeedModel {
        &self.fallback
    }
}

fn csv_err(file: &str, e: csv::Error) -> TravelTimeError {
    TravelTimeError::Parse {
        file: file.to_string(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

/// Cell edge giving a few nodes per cell on average.
fn node_cell_size(nodes: &[GeoPoint]) -> f64 {
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in nodes {
        lo_x = lo_x.min(p.x);
        hi_x = hi_x.max(p.x);
        lo_y = lo_y.min(p.y);
        hi_y = hi_y.max(p.y);
    }
    let area = ((hi_x - lo_x) * (hi_y - lo_y)).max(1.0);
    (area * 4.0 / nodes.len() as f64).sqrt().clamp(10.0, 5000.0)
}

/// Where trip times come from.
#[derive(Debug, Clone)]
pub enum TravelTimeProvider {
    Speed(SpeedModel),
    Matrix(TravelTimeMatrix),
}

impl TravelTimeProvider {
    pub fn travel_time(&self, o: GeoPoint, d: GeoPoint, period: Period) -> TravelTime {
        match self {
            TravelTimeProvider::Speed(m) => TravelTime {
                seconds: m.travel_time(o, d, period),
                fallback: false,
            },
            TravelTimeProvider::Matrix(m) => m.travel_time(o, d, period),
        }
    }

    /// Model used for the short legs between trip ends and parking.
    pub fn leg_model(&self) -> &SpeedModel {
        match self {
            TravelTimeProvider::Speed(m) => m,
            TravelTimeProvider::Matrix(m) => m.fallback_model(),
        }
    }
}
