//! Test helpers: a brute-force reimplementation of the two day runners over
//! plain vectors, and the calibrated synthetic city used by the acceptance
//! suite.

#![allow(dead_code)]

use parksim::population::{self, Commuter, PopulationParams};
use parksim::schedule::{EventKind, Leg, TripEvent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutcome {
    pub n_parking: usize,
    pub n_cars: usize,
    pub extra_vmt: f64,
}

fn d(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1)).sqrt()
}

/// Index in `items` of the closest entry strictly within `r`, lowest id on ties.
fn nearest(items: &[(u64, (f64, f64))], p: (f64, f64), r: f64) -> Option<usize> {
    let mut best: Option<(f64, u64, usize)> = None;
    for (i, &(id, q)) in items.iter().enumerate() {
        let dq = d(p, q);
        if dq >= r {
            continue;
        }
        if best.is_none_or(|(bd, bid, _)| dq < bd || (dq == bd && id < bid)) {
            best = Some((dq, id, i));
        }
    }
    best.map(|b| b.2)
}

fn xy(p: parksim::geo::GeoPoint) -> (f64, f64) {
    (p.x, p.y)
}

/// Shared parking with private cars; everyone starts parked at home.
pub fn private_day(commuters: &[Commuter], events: &[TripEvent], r_max: f64) -> OracleOutcome {
    // (commuter id, spot id, location); None while driving.
    let mut parked: Vec<(u64, Option<(u64, (f64, f64))>)> = commuters
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id, Some((i as u64, xy(c.home)))))
        .collect();
    let mut free: Vec<(u64, (f64, f64))> = Vec::new();
    let mut next_spot = commuters.len() as u64;
    let mut n_parking = commuters.len();
    let mut extra = 0.0;
    for e in events {
        let slot = parked
            .iter_mut()
            .find(|(id, _)| *id == e.trip.commuter_id)
            .expect("known commuter");
        match e.kind {
            EventKind::Start => {
                let spot = slot.1.take().expect("parked before leaving");
                free.push(spot);
            }
            EventKind::End => {
                let dest = xy(e.trip.destination);
                slot.1 = Some(match nearest(&free, dest, r_max) {
                    Some(i) => {
                        let s = free.remove(i);
                        extra += d(dest, s.1);
                        s
                    }
                    None => {
                        n_parking += 1;
                        extra += 0.0;
                        next_spot += 1;
                        (next_spot - 1, dest)
                    }
                });
            }
        }
    }
    OracleOutcome {
        n_parking,
        n_cars: commuters.len(),
        extra_vmt: extra,
    }
}

/// Shared cars with shared parking, starting from nothing.
pub fn shared_day(events: &[TripEvent], r_max: f64) -> OracleOutcome {
    let mut free: Vec<(u64, (f64, f64))> = Vec::new();
    // Available cars with the spot each one occupies.
    let mut cars: Vec<(u64, (f64, f64))> = Vec::new();
    let mut car_spot: Vec<(u64, u64)> = Vec::new();
    let mut driving: Vec<((u64, Leg), u64)> = Vec::new();
    let (mut n_parking, mut n_cars) = (0usize, 0usize);
    let (mut next_spot, mut next_car) = (0u64, 0u64);
    let mut extra = 0.0;
    for e in events {
        let key = (e.trip.commuter_id, e.trip.leg);
        match e.kind {
            EventKind::Start => {
                let origin = xy(e.trip.origin);
                let car = match nearest(&cars, origin, r_max) {
                    Some(i) => {
                        let (car, at) = cars.remove(i);
                        let j = car_spot.iter().position(|(c, _)| *c == car).unwrap();
                        let (_, spot) = car_spot.remove(j);
                        free.push((spot, at));
                        extra += d(origin, at);
                        car
                    }
                    None => {
                        n_cars += 1;
                        n_parking += 1;
                        free.push((next_spot, origin));
                        next_spot += 1;
                        next_car += 1;
                        next_car - 1
                    }
                };
                driving.push((key, car));
            }
            EventKind::End => {
                let i = driving.iter().position(|(k, _)| *k == key).expect("trip started");
                let (_, car) = driving.remove(i);
                let dest = xy(e.trip.destination);
                let (spot, at) = match nearest(&free, dest, r_max) {
                    Some(i) => {
                        let s = free.remove(i);
                        extra += d(dest, s.1);
                        s
                    }
                    None => {
                        n_parking += 1;
                        next_spot += 1;
                        (next_spot - 1, dest)
                    }
                };
                cars.push((car, at));
                car_spot.push((car, spot));
            }
        }
    }
    OracleOutcome {
        n_parking,
        n_cars,
        extra_vmt: extra,
    }
}

/// Commuters in the acceptance city.
pub const CITY_COMMUTERS: usize = 20_000;

/// The default synthetic city at `n` commuters, with location noise.
pub fn city(n: usize) -> Vec<Commuter> {
    let params = PopulationParams {
        n_commuters: n,
        ..PopulationParams::default()
    };
    let pop = population::generate_synthetic(&params).expect("default parameters are valid");
    population::apply_location_noise(&pop, population::LOCATION_NOISE_M, params.seed, params.min_separation).0
}
