//! Scenario runners.
//!
//! * S1: private cars, private parking. Counted analytically.
//! * S2: private cars, shared parking. Every car starts the first day in an
//!   occupied spot at its owner's home; departures free spots, arrivals claim
//!   the nearest free spot within `r_max` or create a new one.
//! * S3/S4: shared cars (walked to / self-driving). The city starts empty.
//!   Departures claim the nearest available car within `r_max` or
//!   materialize a car together with the spot it was parked in; arrivals
//!   claim the nearest free spot within `r_max` or create one.
//!
//! Between a trip's Start and End the vehicle is in transit: it holds no
//! spot and cannot be claimed. State carries over from one day to the next.
//!
//! Resource ids are handed out sequentially in creation order (spots and
//! cars have separate counters; S2 home spots take the commuters' positions
//! in the input slice). Nearest-resource ties resolve to the lowest id, so a
//! run is fully determined by its inputs and seeds.

use rustc_hash::FxHashMap as HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{dist, GeoPoint};
use crate::metrics::LegHistogram;
use crate::population::Commuter;
use crate::rng::{self, Stream};
use crate::schedule::{self, DepartureDistribution, EventKind, Leg, Trip, TripEvent};
use crate::spatial_index::{default_cell_size, Nearest, PoolError, ResourceId, ResourcePool};
use crate::traveltime::{SpeedModel, TravelTimeProvider};

/// Default number of consecutive simulated days.
pub const DEFAULT_DAYS: usize = 30;
/// Default number of replications per configuration.
pub const DEFAULT_REPLICATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("spatial index: {0}")]
    Pool(#[from] PoolError),
    #[error("event references unknown commuter {0}")]
    UnknownCommuter(u64),
    #[error("commuter {commuter}: {message}")]
    Vehicle { commuter: u64, message: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Private cars, private parking.
    S1,
    /// Private cars, shared parking.
    S2,
    /// Shared cars, shared parking.
    S3,
    /// Shared self-driving cars, shared parking.
    S4,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4];

    pub fn is_shared(self) -> bool {
        matches!(self, Scenario::S3 | Scenario::S4)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
            Scenario::S4 => "S4",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().trim_start_matches('#') {
            "S1" | "1" => Ok(Scenario::S1),
            "S2" | "2" => Ok(Scenario::S2),
            "S3" | "3" => Ok(Scenario::S3),
            "S4" | "4" => Ok(Scenario::S4),
            other => Err(format!("unknown scenario `{other}` (expected S1..S4)")),
        }
    }
}

/// How resources are claimed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimPolicy {
    /// Claims require `distance < r_max`.
    pub r_max: f64,
    /// Upper bound on parking spaces. Once reached, a failed radius search
    /// falls back to the globally nearest free resource.
    pub parking_cap: Option<usize>,
    /// Speeds for the short legs between trip ends and claimed resources.
    pub leg_speed: SpeedModel,
}

impl ClaimPolicy {
    pub fn new(r_max: f64) -> Self {
        ClaimPolicy {
            r_max,
            parking_cap: None,
            leg_speed: SpeedModel::default(),
        }
    }

    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.parking_cap = cap;
        self
    }

    fn at_cap(&self, n_parking: usize) -> bool {
        self.parking_cap.is_some_and(|cap| n_parking >= cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Vehicle {
    Parked { spot: ResourceId, at: GeoPoint },
    Driving,
}

/// Everything carried from one event (and one day) to the next.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub n_parking: usize,
    pub n_cars: usize,
    /// L_P: free parking spots.
    pub free_parking: ResourcePool,
    /// L_C: parked, unclaimed shared cars (S3/S4).
    pub available_cars: ResourcePool,
    /// Private vehicles by commuter id (S2).
    vehicles: HashMap<u64, Vehicle>,
    /// Spot occupied by each parked shared car.
    car_spot: HashMap<ResourceId, ResourceId>,
    /// Car carrying each trip in flight, keyed by (commuter, leg).
    in_flight: HashMap<(u64, Leg), ResourceId>,
    occupied_spots: usize,
    in_transit: usize,
    next_spot: ResourceId,
    next_car: ResourceId,
}

/// A conservation check that failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation(pub String);

impl WorldState {
    fn empty(cell_size: f64) -> Self {
        WorldState {
            n_parking: 0,
            n_cars: 0,
            free_parking: ResourcePool::new(cell_size),
            available_cars: ResourcePool::new(cell_size),
            vehicles: HashMap::default(),
            car_spot: HashMap::default(),
            in_flight: HashMap::default(),
            occupied_spots: 0,
            in_transit: 0,
            next_spot: 0,
            next_car: 0,
        }
    }

    /// S3/S4 start: no cars, no parking.
    pub fn new_shared(r_max: f64) -> Self {
        Self::empty(default_cell_size(r_max))
    }

    /// S2 start: each commuter's car occupies a spot at home.
    pub fn new_private(commuters: &[Commuter], r_max: f64) -> Self {
        let mut s = Self::empty(default_cell_size(r_max));
        s.vehicles.reserve(commuters.len());
        for c in commuters {
            let spot = s.new_spot_id();
            s.vehicles.insert(c.id, Vehicle::Parked { spot, at: c.home });
        }
        s.n_parking = commuters.len();
        s.n_cars = commuters.len();
        s.occupied_spots = commuters.len();
        s
    }

    fn new_spot_id(&mut self) -> ResourceId {
        let id = self.next_spot;
        self.next_spot += 1;
        id
    }

    fn new_car_id(&mut self) -> ResourceId {
        let id = self.next_car;
        self.next_car += 1;
        id
    }

    pub fn occupied_spots(&self) -> usize {
        self.occupied_spots
    }

    pub fn cars_in_transit(&self) -> usize {
        self.in_transit
    }

    /// Counter-level conservation: O(1), cheap enough to call after every event.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let fail = |m: String| Err(InvariantViolation(m));
        if self.n_parking != self.free_parking.len() + self.occupied_spots {
            return fail(format!(
                "n_parking {} != free {} + occupied {}",
                self.n_parking,
                self.free_parking.len(),
                self.occupied_spots
            ));
        }
        let parked_cars = if self.vehicles.is_empty() {
            self.available_cars.len()
        } else {
            self.occupied_spots
        };
        if self.n_cars != parked_cars + self.in_transit {
            return fail(format!(
                "n_cars {} != parked {} + in transit {}",
                self.n_cars, parked_cars, self.in_transit
            ));
        }
        if self.vehicles.is_empty() && self.available_cars.len() != self.occupied_spots {
            return fail(format!(
                "available cars {} != occupied spots {}",
                self.available_cars.len(),
                self.occupied_spots
            ));
        }
        Ok(())
    }

    /// Full recount of every resource, O(n).
    pub fn audit(&self) -> Result<(), InvariantViolation> {
        self.check_invariants()?;
        let fail = |m: String| Err(InvariantViolation(m));
        if self.vehicles.is_empty() {
            if self.car_spot.len() != self.available_cars.len() {
                return fail("parked-car spot map disagrees with L_C".into());
            }
            for (car, spot) in &self.car_spot {
                if !self.available_cars.contains(*car) {
                    return fail(format!("car {car} has a spot but is not available"));
                }
                if self.free_parking.contains(*spot) {
                    return fail(format!("spot {spot} is both occupied and free"));
                }
            }
            if self.in_flight.len() != self.in_transit {
                return fail("in-flight map disagrees with transit counter".into());
            }
        } else {
            let mut parked = 0;
            let mut driving = 0;
            for v in self.vehicles.values() {
                match v {
                    Vehicle::Parked { spot, .. } => {
                        parked += 1;
                        if self.free_parking.contains(*spot) {
                            return fail(format!("spot {spot} is both occupied and free"));
                        }
                    }
                    Vehicle::Driving => driving += 1,
                }
            }
            if parked != self.occupied_spots || driving != self.in_transit {
                return fail(format!(
                    "recount parked {parked} driving {driving} vs counters {} {}",
                    self.occupied_spots, self.in_transit
                ));
            }
            if self.n_cars != self.vehicles.len() {
                return fail("private fleet size changed".into());
            }
        }
        Ok(())
    }

    /// Claims the nearest item of `pool` within the radius, or, when at the
    /// parking cap, the globally nearest one.
    fn claim(
        pool: &mut ResourcePool,
        at: GeoPoint,
        policy: &ClaimPolicy,
        n_parking: usize,
        overflow: &mut usize,
    ) -> Result<Option<Nearest>, PoolError> {
        let mut found = pool.nearest_within(at, policy.r_max);
        if found.is_none() && policy.at_cap(n_parking) {
            found = pool.nearest(at);
            if found.is_some() {
                *overflow += 1;
            }
        }
        if let Some(n) = found {
            pool.remove(n.id)?;
        }
        Ok(found)
    }
}

/// Hook invoked after every processed event.
pub trait Observer {
    fn after_event(&mut self, state: &WorldState, event: &TripEvent);
}

/// Observer that does nothing.
pub struct NoObserver;

impl Observer for NoObserver {
    #[inline]
    fn after_event(&mut self, _: &WorldState, _: &TripEvent) {}
}

impl<F: FnMut(&WorldState, &TripEvent)> Observer for F {
    fn after_event(&mut self, state: &WorldState, event: &TripEvent) {
        self(state, event)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DayResult {
    pub day_index: usize,
    pub n_parking: usize,
    pub n_cars: usize,
    /// Sum of home-work trip lengths, meters.
    pub base_vmt: f64,
    /// Sum of claim-leg lengths, meters.
    pub extra_vmt: f64,
    /// Claim-leg travel time at leg speeds, seconds.
    pub extra_time_s: f64,
    pub clamp_count: usize,
    pub fallback_count: usize,
    pub leg_histogram: LegHistogram,
    /// Claims resolved beyond `r_max` because the parking cap was reached.
    pub cap_overflow_legs: usize,
    /// Times parking grew past the cap because nothing was free anywhere.
    pub cap_breaches: usize,
}

impl DayResult {
    fn claim_leg(&mut self, d: f64, policy: &ClaimPolicy, leg: Leg) {
        self.extra_vmt += d;
        self.extra_time_s += d / policy.leg_speed.speed(leg.period());
        self.leg_histogram.add(d);
    }
}

fn base_leg(day: &mut DayResult, trip: &Trip) {
    day.base_vmt += dist(trip.origin, trip.destination);
}

/// S2 for one day of `events`.
pub fn run_day_private(
    events: &[TripEvent],
    state: &mut WorldState,
    policy: &ClaimPolicy,
    observer: &mut impl Observer,
) -> Result<DayResult, EngineError> {
    let mut day = DayResult::default();
    for e in events {
        let cid = e.trip.commuter_id;
        let vehicle = state
            .vehicles
            .get_mut(&cid)
            .ok_or(EngineError::UnknownCommuter(cid))?;
        match e.kind {
            EventKind::Start => {
                let Vehicle::Parked { spot, at } = *vehicle else {
                    return Err(EngineError::Vehicle {
                        commuter: cid,
                        message: "trip starts while the car is already driving",
                    });
                };
                *vehicle = Vehicle::Driving;
                state.free_parking.insert(spot, at)?;
                state.occupied_spots -= 1;
                state.in_transit += 1;
            }
            EventKind::End => {
                if *vehicle != Vehicle::Driving {
                    return Err(EngineError::Vehicle {
                        commuter: cid,
                        message: "trip ends while the car is parked",
                    });
                }
                base_leg(&mut day, &e.trip);
                let dest = e.trip.destination;
                let claimed = WorldState::claim(
                    &mut state.free_parking,
                    dest,
                    policy,
                    state.n_parking,
                    &mut day.cap_overflow_legs,
                )?;
                let parked = match claimed {
                    Some(n) => {
                        day.claim_leg(n.distance, policy, e.trip.leg);
                        Vehicle::Parked { spot: n.id, at: n.location }
                    }
                    None => {
                        if policy.at_cap(state.n_parking) {
                            day.cap_breaches += 1;
                        }
                        state.n_parking += 1;
                        day.claim_leg(0.0, policy, e.trip.leg);
                        let spot = state.new_spot_id();
                        Vehicle::Parked { spot, at: dest }
                    }
                };
                state.vehicles.insert(cid, parked);
                state.occupied_spots += 1;
                state.in_transit -= 1;
            }
        }
        observer.after_event(state, e);
    }
    day.n_parking = state.n_parking;
    day.n_cars = state.n_cars;
    Ok(day)
}

/// S3/S4 for one day of `events`.
pub fn run_day_shared(
    events: &[TripEvent],
    state: &mut WorldState,
    policy: &ClaimPolicy,
    observer: &mut impl Observer,
) -> Result<DayResult, EngineError> {
    let mut day = DayResult::default();
    for e in events {
        let key = (e.trip.commuter_id, e.trip.leg);
        match e.kind {
            EventKind::Start => {
                let origin = e.trip.origin;
                let claimed = WorldState::claim(
                    &mut state.available_cars,
                    origin,
                    policy,
                    state.n_parking,
                    &mut day.cap_overflow_legs,
                )?;
                let car = match claimed {
                    Some(n) => {
                        let spot = state
                            .car_spot
                            .remove(&n.id)
                            .expect("every available car occupies a spot");
                        state.free_parking.insert(spot, n.location)?;
                        state.occupied_spots -= 1;
                        day.claim_leg(n.distance, policy, e.trip.leg);
                        n.id
                    }
                    None => {
                        if policy.at_cap(state.n_parking) {
                            day.cap_breaches += 1;
                        }
                        state.n_cars += 1;
                        state.n_parking += 1;
                        let spot = state.new_spot_id();
                        state.free_parking.insert(spot, origin)?;
                        day.claim_leg(0.0, policy, e.trip.leg);
                        state.new_car_id()
                    }
                };
                if state.in_flight.insert(key, car).is_some() {
                    return Err(EngineError::Vehicle {
                        commuter: key.0,
                        message: "trip started twice",
                    });
                }
                state.in_transit += 1;
            }
            EventKind::End => {
                let car = state.in_flight.remove(&key).ok_or(EngineError::Vehicle {
                    commuter: key.0,
                    message: "trip ends without having started",
                })?;
                state.in_transit -= 1;
                base_leg(&mut day, &e.trip);
                let dest = e.trip.destination;
                let claimed = WorldState::claim(
                    &mut state.free_parking,
                    dest,
                    policy,
                    state.n_parking,
                    &mut day.cap_overflow_legs,
                )?;
                let (spot, at) = match claimed {
                    Some(n) => {
                        day.claim_leg(n.distance, policy, e.trip.leg);
                        (n.id, n.location)
                    }
                    None => {
                        if policy.at_cap(state.n_parking) {
                            day.cap_breaches += 1;
                        }
                        state.n_parking += 1;
                        day.claim_leg(0.0, policy, e.trip.leg);
                        (state.new_spot_id(), dest)
                    }
                };
                state.available_cars.insert(car, at)?;
                state.car_spot.insert(car, spot);
                state.occupied_spots += 1;
            }
        }
        observer.after_event(state, e);
    }
    day.n_parking = state.n_parking;
    day.n_cars = state.n_cars;
    Ok(day)
}

/// One replication's configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub r_max: f64,
    pub departure: DepartureDistribution,
    pub n_days: usize,
    pub n_replications: usize,
    pub seed: u64,
    pub adoption_rate: f64,
    pub parking_cap: Option<usize>,
    pub travel_times: Arc<TravelTimeProvider>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, r_max: f64, travel_times: Arc<TravelTimeProvider>) -> Self {
        ScenarioConfig {
            scenario,
            r_max,
            departure: DepartureDistribution::default(),
            n_days: DEFAULT_DAYS,
            n_replications: DEFAULT_REPLICATIONS,
            seed: 0,
            adoption_rate: 1.0,
            parking_cap: None,
            travel_times,
        }
    }

    pub fn policy(&self) -> ClaimPolicy {
        ClaimPolicy {
            r_max: self.r_max,
            parking_cap: self.parking_cap,
            leg_speed: *self.travel_times.leg_model(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.scenario != Scenario::S1 && !(self.r_max > 0.0) {
            return Err(EngineError::Config(format!("r_max must be positive, got {}", self.r_max)));
        }
        if self.n_days == 0 {
            return Err(EngineError::Config("n_days must be at least 1".into()));
        }
        if self.parking_cap == Some(0) {
            return Err(EngineError::Config("parking cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one multi-day replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scenario: Scenario,
    pub n_users: usize,
    pub days: Vec<DayResult>,
    pub n_parking: usize,
    pub n_cars: usize,
}

impl RunResult {
    pub fn last_day(&self) -> Option<&DayResult> {
        self.days.last()
    }

    /// N_P relative to private parking (2 spots per user).
    pub fn parking_rel_s1(&self) -> f64 {
        ratio(self.n_parking as f64, 2.0 * self.n_users as f64)
    }

    /// N_C relative to one car per user.
    pub fn cars_rel(&self) -> f64 {
        ratio(self.n_cars as f64, self.n_users as f64)
    }

    /// Extra over base distance on the final day.
    pub fn extra_vmt_rel(&self) -> f64 {
        self.last_day().map_or(0.0, |d| ratio(d.extra_vmt, d.base_vmt))
    }

    pub fn overflow_legs(&self) -> usize {
        self.days.iter().map(|d| d.cap_overflow_legs).sum()
    }

    pub fn cap_breaches(&self) -> usize {
        self.days.iter().map(|d| d.cap_breaches).sum()
    }

    pub fn leg_histogram(&self) -> LegHistogram {
        let mut h = LegHistogram::new();
        for d in &self.days {
            h.merge(&d.leg_histogram);
        }
        h
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Private cars, private parking: two spots and one car per commuter.
pub fn run_scenario1(commuters: &[Commuter]) -> RunResult {
    RunResult {
        scenario: Scenario::S1,
        n_users: commuters.len(),
        days: vec![scenario1_day(commuters, 0)],
        n_parking: 2 * commuters.len(),
        n_cars: commuters.len(),
    }
}

fn scenario1_day(commuters: &[Commuter], day_index: usize) -> DayResult {
    DayResult {
        day_index,
        n_parking: 2 * commuters.len(),
        n_cars: commuters.len(),
        base_vmt: 2.0 * commuters.iter().map(Commuter::commute_distance).sum::<f64>(),
        ..DayResult::default()
    }
}

/// Runs `config.n_days` consecutive days over a warm state.
pub fn run_multi_day(config: &ScenarioConfig, commuters: &[Commuter]) -> Result<RunResult, EngineError> {
    run_multi_day_observed(config, commuters, &mut NoObserver)
}

pub fn run_multi_day_observed(
    config: &ScenarioConfig,
    commuters: &[Commuter],
    observer: &mut impl Observer,
) -> Result<RunResult, EngineError> {
    config.validate()?;
    if config.scenario == Scenario::S1 {
        let day = scenario1_day(commuters, 0);
        return Ok(RunResult {
            scenario: Scenario::S1,
            n_users: commuters.len(),
            days: (0..config.n_days)
                .map(|i| DayResult {
                    day_index: i,
                    ..day.clone()
                })
                .collect(),
            n_parking: 2 * commuters.len(),
            n_cars: commuters.len(),
        });
    }
    let policy = config.policy();
    let mut state = match config.scenario {
        Scenario::S2 => WorldState::new_private(commuters, config.r_max),
        _ => WorldState::new_shared(config.r_max),
    };
    let mut days = Vec::with_capacity(config.n_days);
    for d in 0..config.n_days {
        let sched = schedule::generate_day_events(
            commuters,
            &config.departure,
            &config.travel_times,
            rng::derive(config.seed, Stream::Day, d as u64),
        );
        let mut day = match config.scenario {
            Scenario::S2 => run_day_private(&sched.events, &mut state, &policy, observer)?,
            _ => run_day_shared(&sched.events, &mut state, &policy, observer)?,
        };
        day.day_index = d;
        day.clamp_count = sched.clamp_count;
        day.fallback_count = sched.fallback_count;
        days.push(day);
    }
    Ok(RunResult {
        scenario: config.scenario,
        n_users: commuters.len(),
        days,
        n_parking: state.n_parking,
        n_cars: state.n_cars,
    })
}

/// Multi-day run with a hard parking cap.
pub fn run_capped(config: &ScenarioConfig, commuters: &[Commuter]) -> Result<RunResult, EngineError> {
    if config.parking_cap.is_none() {
        return Err(EngineError::Config("capped run needs a parking cap".into()));
    }
    run_multi_day(config, commuters)
}

/// The 2N trips of one day with zero duration, in a seeded random order.
pub fn instantaneous_events(commuters: &[Commuter], seed: u64) -> Vec<TripEvent> {
    let mut trips: Vec<Trip> = commuters
        .iter()
        .flat_map(|c| {
            [(c.home, c.work, Leg::HomeToWork), (c.work, c.home, Leg::WorkToHome)].map(|(o, d, leg)| Trip {
                commuter_id: c.id,
                origin: o,
                destination: d,
                depart: 0.0,
                arrive: 0.0,
                leg,
            })
        })
        .collect();
    let mut rng = rng::rng(rng::derive(seed, Stream::Bound, 0));
    trips.shuffle(&mut rng);
    trips
        .into_iter()
        .enumerate()
        .flat_map(|(i, mut t)| {
            t.depart = i as f64;
            t.arrive = i as f64;
            [TripEvent::start(t), TripEvent::end(t)]
        })
        .collect()
}

/// Parking needed by the shared model when travel is instantaneous and the
/// day's trips arrive in random order: the part of parking demand due only
/// to the spatial layout of origins and destinations.
pub fn compute_lower_bound(commuters: &[Commuter], r_max: f64, seed: u64) -> Result<usize, EngineError> {
    let events = instantaneous_events(commuters, seed);
    let mut state = WorldState::new_shared(r_max);
    run_day_shared(&events, &mut state, &ClaimPolicy::new(r_max), &mut NoObserver)?;
    Ok(state.n_parking)
}
