mod common;

use std::sync::Arc;

use parksim::engine::{
    compute_lower_bound, instantaneous_events, run_capped, run_day_private, run_day_shared, run_multi_day,
    ClaimPolicy, NoObserver, Scenario, ScenarioConfig, WorldState,
};
use parksim::geo::GeoPoint;
use parksim::population::Commuter;
use parksim::rng;
use parksim::schedule::{generate_day_events, DepartureDistribution, Leg, Trip, TripEvent};
use parksim::traveltime::{SpeedModel, TravelTimeProvider, TARGET_EVENING_S, TARGET_MORNING_S};
use rand::Rng;

fn commuter(id: u64, home: (f64, f64), work: (f64, f64)) -> Commuter {
    Commuter {
        id,
        home: GeoPoint::new(home.0, home.1),
        work: GeoPoint::new(work.0, work.1),
    }
}

fn random_instance(rng: &mut impl Rng, max_n: u64) -> (Vec<Commuter>, f64, DepartureDistribution) {
    let n = rng.random_range(1..=max_n);
    let mut p = || GeoPoint::new(rng.random_range(0.0..4000.0), rng.random_range(0.0..4000.0));
    let pop = (0..n)
        .map(|id| Commuter {
            id,
            home: p(),
            work: p(),
        })
        .collect();
    let r = rng.random_range(20.0..4000.0);
    let t_w = rng.random_range(60.0..3.0 * 3600.0);
    (pop, r, DepartureDistribution::uniform(t_w).unwrap())
}

fn speed() -> TravelTimeProvider {
    TravelTimeProvider::Speed(SpeedModel::new(5.0, 6.0).unwrap())
}

#[test]
fn engine_matches_linear_scan_oracle() {
    let mut rng = rng::rng(2024);
    for i in 0..500 {
        let (pop, r, dist) = random_instance(&mut rng, 10);
        let events = generate_day_events(&pop, &dist, &speed(), i).events;
        let policy = ClaimPolicy::new(r);

        let mut s = WorldState::new_private(&pop, r);
        let day = run_day_private(&events, &mut s, &policy, &mut NoObserver).unwrap();
        let o = common::private_day(&pop, &events, r);
        assert_eq!((s.n_parking, s.n_cars, day.extra_vmt), (o.n_parking, o.n_cars, o.extra_vmt), "S2 instance {i}");

        let mut s = WorldState::new_shared(r);
        let day = run_day_shared(&events, &mut s, &policy, &mut NoObserver).unwrap();
        let o = common::shared_day(&events, r);
        assert_eq!((s.n_parking, s.n_cars, day.extra_vmt), (o.n_parking, o.n_cars, o.extra_vmt), "S3 instance {i}");
    }
}

#[test]
fn shared_fleet_can_exceed_users() {
    // Claims are greedy, so a car parked at someone's work can be taken away
    // by a neighbour, and its driver needs a new one in the evening.
    let mut rng = rng::rng(77);
    let mut over = 0;
    for i in 0..3000 {
        let (pop, r, dist) = random_instance(&mut rng, 4);
        let events = generate_day_events(&pop, &dist, &speed(), i).events;
        let o = common::shared_day(&events, r);
        let mut s = WorldState::new_shared(r);
        run_day_shared(&events, &mut s, &ClaimPolicy::new(r), &mut NoObserver).unwrap();
        assert_eq!(s.n_cars, o.n_cars);
        assert!(s.n_cars <= s.n_parking);
        over += (s.n_cars > pop.len()) as usize;
    }
    assert!(over > 0);
}

#[test]
fn parking_can_exceed_twice_the_fleet() {
    let a = commuter(0, (0.0, 0.0), (5000.0, 0.0));
    let b = commuter(1, (5100.0, 0.0), (10_000.0, 5000.0));
    let trip = |c: &Commuter, depart: f64, arrive: f64| Trip {
        commuter_id: c.id,
        origin: c.home,
        destination: c.work,
        depart,
        arrive,
        leg: Leg::HomeToWork,
    };
    let (ta, tb) = (trip(&a, 0.0, 1000.0), trip(&b, 2000.0, 3000.0));
    let events = [TripEvent::start(ta), TripEvent::end(ta), TripEvent::start(tb), TripEvent::end(tb)];
    let mut s = WorldState::new_shared(500.0);
    let day = run_day_shared(&events, &mut s, &ClaimPolicy::new(500.0), &mut NoObserver).unwrap();
    assert_eq!((s.n_cars, s.n_parking), (1, 3));
    assert_eq!(day.extra_vmt, 100.0);
}

fn two_commuter_reuse() -> Vec<Commuter> {
    vec![commuter(0, (0.0, 0.0), (5000.0, 0.0)), commuter(1, (5000.0, 0.0), (10_000.0, 0.0))]
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn bound_over_all_trip_orders() {
    let pop = two_commuter_reuse();
    let r = 1000.0;
    let trips: Vec<Trip> = pop
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
    let mut counts = [0usize; 5];
    for order in permutations(4) {
        let events: Vec<TripEvent> = order
            .iter()
            .enumerate()
            .flat_map(|(i, &j)| {
                let mut t = trips[j];
                t.depart = i as f64;
                t.arrive = i as f64;
                [TripEvent::start(t), TripEvent::end(t)]
            })
            .collect();
        counts[common::shared_day(&events, r).n_parking] += 1;
    }
    // A third of the orders chain the two trips through the shared point.
    assert_eq!(counts, [0, 0, 0, 8, 16]);

    let mut seen = [0usize; 5];
    for seed in 0..600 {
        seen[compute_lower_bound(&pop, r, seed).unwrap()] += 1;
    }
    assert_eq!(seen[0] + seen[1] + seen[2], 0);
    let share = seen[3] as f64 / 600.0;
    assert!((share - 1.0 / 3.0).abs() < 0.07, "share of 3 = {share}");
}

#[test]
fn bound_is_oracle_on_shuffled_trips() {
    let mut rng = rng::rng(8);
    for seed in 0..100 {
        let (pop, r, _) = random_instance(&mut rng, 10);
        let events = instantaneous_events(&pop, seed);
        assert_eq!(compute_lower_bound(&pop, r, seed).unwrap(), common::shared_day(&events, r).n_parking);
    }
}

#[test]
fn bound_below_final_parking_per_seed_pair() {
    let pop = common::city(1500);
    let tt = Arc::new(TravelTimeProvider::Speed(SpeedModel::calibrate(&pop, TARGET_MORNING_S, TARGET_EVENING_S)));
    for r in [200.0, 800.0, 3000.0] {
        for scenario in [Scenario::S2, Scenario::S3] {
            let mut cfg = ScenarioConfig::new(scenario, r, tt.clone());
            cfg.n_days = 5;
            for seed in 0..4 {
                cfg.seed = seed;
                let run = run_multi_day(&cfg, &pop).unwrap();
                assert!(compute_lower_bound(&pop, r, seed).unwrap() <= run.n_parking);
            }
        }
    }
}

fn small_city_config(scenario: Scenario, r: f64, n: usize) -> (Vec<Commuter>, ScenarioConfig) {
    let pop = common::city(n);
    let tt = Arc::new(TravelTimeProvider::Speed(SpeedModel::calibrate(&pop, TARGET_MORNING_S, TARGET_EVENING_S)));
    (pop, ScenarioConfig::new(scenario, r, tt))
}

#[test]
fn capped_runs() {
    let (pop, mut cfg) = small_city_config(Scenario::S3, 400.0, 1500);
    cfg.n_days = 8;
    cfg.seed = 3;
    let free = run_multi_day(&cfg, &pop).unwrap();

    cfg.parking_cap = Some(usize::MAX);
    let huge = run_capped(&cfg, &pop).unwrap();
    assert_eq!(huge, free);

    cfg.parking_cap = Some(free.n_parking);
    let at = run_capped(&cfg, &pop).unwrap();
    assert_eq!(at, free);
    assert_eq!(at.overflow_legs(), 0);

    cfg.parking_cap = Some(free.n_parking * 9 / 10);
    let tight = run_capped(&cfg, &pop).unwrap();
    let total = |r: &parksim::engine::RunResult| r.days.iter().map(|d| d.extra_vmt).sum::<f64>();
    assert!(total(&tight) > total(&free));
    assert!(tight.overflow_legs() > 0);
    assert!(tight.n_parking <= free.n_parking * 9 / 10 + tight.cap_breaches());

    cfg.parking_cap = None;
    assert!(run_capped(&cfg, &pop).is_err());
}

#[test]
fn daily_extra_vmt_trends_down() {
    let (pop, mut cfg) = small_city_config(Scenario::S3, 500.0, 1000);
    let reps = 100;
    let mut mean = vec![0.0; 30];
    for r in 0..reps {
        cfg.seed = rng::derive(5, rng::Stream::Replication, r);
        let run = run_multi_day(&cfg, &pop).unwrap();
        for (m, d) in mean.iter_mut().zip(&run.days) {
            *m += d.extra_vmt / reps as f64;
        }
    }
    let n = mean.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = mean.iter().sum::<f64>() / n;
    let slope = mean.iter().enumerate().map(|(i, y)| (i as f64 - xbar) * (y - ybar)).sum::<f64>()
        / mean.iter().enumerate().map(|(i, _)| (i as f64 - xbar).powi(2)).sum::<f64>();
    assert!(slope <= 0.0, "slope {slope}");
}

#[test]
fn mean_parking_non_increasing_in_radius() {
    let (pop, mut cfg) = small_city_config(Scenario::S3, 100.0, 2000);
    cfg.n_days = 5;
    let mut prev = f64::INFINITY;
    for r in [100.0, 300.0, 600.0, 1200.0] {
        cfg.r_max = r;
        let mut sum = 0.0;
        for rep in 0..20 {
            cfg.seed = rng::derive(1, rng::Stream::Replication, rep);
            sum += run_multi_day(&cfg, &pop).unwrap().n_parking as f64;
        }
        let mean = sum / 20.0;
        assert!(mean <= prev, "r {r}: {mean} > {prev}");
        prev = mean;
    }
}

#[test]
fn runs_are_deterministic() {
    for scenario in [Scenario::S2, Scenario::S4] {
        let (pop, mut cfg) = small_city_config(scenario, 700.0, 800);
        cfg.n_days = 4;
        cfg.seed = 99;
        assert_eq!(run_multi_day(&cfg, &pop).unwrap(), run_multi_day(&cfg, &pop).unwrap());
    }
}

#[test]
fn tiny_radius_gives_one_car_each() {
    let (pop, mut cfg) = small_city_config(Scenario::S3, 1e-6, 500);
    cfg.n_days = 1;
    let run = run_multi_day(&cfg, &pop).unwrap();
    assert_eq!(run.n_cars, pop.len());
    assert_eq!(run.n_parking, 2 * pop.len());
}
