//! Daily trip schedules.
//!
//! Each commuter makes one home-to-work trip in the morning and one
//! work-to-home trip in the evening. Departure times are drawn per day; the
//! resulting Start/End events are sorted into a strict total order that the
//! engine consumes sequentially.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::population::Commuter;
use crate::rng::{self, SimRng};
use crate::traveltime::{Period, TravelTimeProvider};

pub const HOUR_S: f64 = 3600.0;
/// Morning window opens at 07:00.
pub const MORNING_START_S: f64 = 7.0 * HOUR_S;
/// Evening window opens at 16:00.
pub const EVENING_START_S: f64 = 16.0 * HOUR_S;
/// Gap enforced when an evening departure would precede the morning arrival.
pub const CLAMP_GAP_S: f64 = 60.0;
const NOON_S: f64 = 12.0 * HOUR_S;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("departure distribution: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Leg {
    HomeToWork,
    WorkToHome,
}

impl Leg {
    pub fn period(self) -> Period {
        match self {
            Leg::HomeToWork => Period::Morning,
            Leg::WorkToHome => Period::Evening,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub commuter_id: u64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub depart: f64,
    pub arrive: f64,
    pub leg: Leg,
}

/// `Start` sorts before `End` at equal timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripEvent {
    pub time: f64,
    pub kind: EventKind,
    pub trip: Trip,
}

impl TripEvent {
    pub fn start(trip: Trip) -> Self {
        TripEvent {
            time: trip.depart,
            kind: EventKind::Start,
            trip,
        }
    }

    pub fn end(trip: Trip) -> Self {
        TripEvent {
            time: trip.arrive,
            kind: EventKind::End,
            trip,
        }
    }

    /// Unique per (commuter, leg, kind) within a day.
    pub fn sequence_key(&self) -> u64 {
        self.trip.commuter_id * 4 + (self.trip.leg as u64) * 2 + self.kind as u64
    }

    /// Where the event happens: trip origin for a start, destination for an end.
    pub fn location(&self) -> GeoPoint {
        match self.kind {
            EventKind::Start => self.trip.origin,
            EventKind::End => self.trip.destination,
        }
    }

    /// Processing order: time, then Start before End, then commuter id, then leg.
    pub fn order(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.trip.commuter_id.cmp(&other.trip.commuter_id))
            .then(self.trip.leg.cmp(&other.trip.leg))
    }
}

/// Piecewise-uniform departure histogram for one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureHistogram {
    /// `(bin_start, bin_end, cumulative_probability_at_end)`.
    bins: Vec<(f64, f64, f64)>,
}

impl DepartureHistogram {
    /// `bins` holds `(start, end, probability)`; probabilities are normalized.
    /// Returns the histogram and whether normalization changed the mass.
    pub fn new(mut bins: Vec<(f64, f64, f64)>) -> Result<(Self, bool), ScheduleError> {
        if bins.is_empty() {
            return Err(ScheduleError::Invalid("no bins".into()));
        }
        for &(s, e, p) in &bins {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(ScheduleError::Invalid(format!("negative or non-finite probability {p}")));
            }
            if !(e > s) {
                return Err(ScheduleError::Invalid(format!("empty bin [{s}, {e})")));
            }
        }
        bins.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = bins.iter().map(|b| b.2).sum();
        if !(total > 0.0) {
            return Err(ScheduleError::Invalid("probabilities sum to zero".into()));
        }
        let renormalized = (total - 1.0).abs() > 1e-9;
        let mut acc = 0.0;
        let bins = bins
            .into_iter()
            .map(|(s, e, p)| {
                acc += p / total;
                (s, e, acc)
            })
            .collect();
        Ok((DepartureHistogram { bins }, renormalized))
    }

    /// Inverse-CDF bin choice, uniform within the bin.
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random();
        let i = self.bins.partition_point(|b| b.2 <= u).min(self.bins.len() - 1);
        let (s, e, _) = self.bins[i];
        rng.random_range(s..e)
    }

    pub fn bins(&self) -> &[(f64, f64, f64)] {
        &self.bins
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDeparture {
    pub morning: DepartureHistogram,
    pub evening: DepartureHistogram,
    /// Periods whose probabilities did not sum to one and were rescaled.
    pub renormalized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DepartureDistribution {
    UniformWindow {
        t_w: f64,
        morning_start: f64,
        evening_start: f64,
    },
    Empirical(EmpiricalDeparture),
}

impl DepartureDistribution {
    /// Uniform windows of length `t_w` opening at 07:00 and 16:00.
    pub fn uniform(t_w: f64) -> Result<Self, ScheduleError> {
        if !(t_w > 0.0 && t_w.is_finite()) {
            return Err(ScheduleError::Invalid(format!("t_W must be positive, got {t_w}")));
        }
        Ok(DepartureDistribution::UniformWindow {
            t_w,
            morning_start: MORNING_START_S,
            evening_start: EVENING_START_S,
        })
    }

    /// Window length in seconds, when the distribution is a uniform window.
    pub fn window(&self) -> Option<f64> {
        match self {
            DepartureDistribution::UniformWindow { t_w, .. } => Some(*t_w),
            DepartureDistribution::Empirical(_) => None,
        }
    }

    pub fn sample(&self, period: Period, rng: &mut SimRng) -> f64 {
        match self {
            DepartureDistribution::UniformWindow {
                t_w,
                morning_start,
                evening_start,
            } => {
                let start = match period {
                    Period::Morning => *morning_start,
                    Period::Evening => *evening_start,
                };
                start + rng.random_range(0.0..*t_w)
            }
            DepartureDistribution::Empirical(e) => match period {
                Period::Morning => e.morning.sample(rng),
                Period::Evening => e.evening.sample(rng),
            },
        }
    }
}

impl Default for DepartureDistribution {
    fn default() -> Self {
        DepartureDistribution::uniform(HOUR_S).expect("one hour is a valid window")
    }
}

/// Reads `seconds_bin_start,probability[,seconds_bin_end]` rows.
///
/// Bins starting before noon form the morning histogram, the rest the
/// evening one. Without an explicit end, a bin runs to the next bin start in
/// its period; the last bin reuses the preceding width (one hour if alone).
pub fn load_empirical_distribution(path: impl AsRef<Path>) -> Result<DepartureDistribution, ScheduleError> {
    parse_empirical_distribution(&fs::read_to_string(path)?)
}

pub fn parse_empirical_distribution(text: &str) -> Result<DepartureDistribution, ScheduleError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| ScheduleError::Parse { line: 1, message: e.to_string() })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "seconds_bin_start" || cols[1] != "probability" {
        return Err(ScheduleError::Parse {
            line: 1,
            message: "expected header `seconds_bin_start,probability[,seconds_bin_end]`".into(),
        });
    }
    let mut morning = Vec::new();
    let mut evening = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ScheduleError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<Option<f64>, ScheduleError> {
            match rec.get(i).filter(|s| !s.is_empty()) {
                None => Ok(None),
                Some(s) => s.parse::<f64>().map(Some).map_err(|e| ScheduleError::Parse {
                    line,
                    message: format!("column {}: {e}", i + 1),
                }),
            }
        };
        let missing = || ScheduleError::Parse { line, message: "missing value".into() };
        let start = num(0)?.ok_or_else(missing)?;
        let p = num(1)?.ok_or_else(missing)?;
        let end = num(2)?;
        if !(p >= 0.0) {
            return Err(ScheduleError::Parse { line, message: format!("negative probability {p}") });
        }
        let bucket = if start < NOON_S { &mut morning } else { &mut evening };
        bucket.push((start, end, p));
    }
    if morning.is_empty() && evening.is_empty() {
        return Err(ScheduleError::Parse { line: 1, message: "no bins".into() });
    }
    let mut renormalized = 0;
    let mut build = |mut raw: Vec<(f64, Option<f64>, f64)>, name: &str| {
        if raw.is_empty() {
            return Err(ScheduleError::Invalid(format!("no {name} bins")));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut bins = Vec::with_capacity(raw.len());
        let mut last_width = HOUR_S;
        for i in 0..raw.len() {
            let (s, e, p) = raw[i];
            let end = e.unwrap_or_else(|| raw.get(i + 1).map_or(s + last_width, |n| n.0));
            last_width = end - s;
            bins.push((s, end, p));
        }
        let (h, changed) = DepartureHistogram::new(bins)?;
        renormalized += changed as usize;
        Ok(h)
    };
    let morning = build(morning, "morning")?;
    let evening = build(evening, "evening")?;
    Ok(DepartureDistribution::Empirical(EmpiricalDeparture {
        morning,
        evening,
        renormalized,
    }))
}

/// One day's events plus bookkeeping counters.
#[derive(Debug, Clone, Default)]
pub struct DaySchedule {
    pub events: Vec<TripEvent>,
    pub clamp_count: usize,
    pub fallback_count: usize,
}

/// Draws both trips for every commuter and returns the ordered event list.
pub fn generate_day_events(
    commuters: &[Commuter],
    departures: &DepartureDistribution,
    travel_times: &TravelTimeProvider,
    day_seed: u64,
) -> DaySchedule {
    let mut rng = rng::rng(day_seed);
    let mut out = DaySchedule {
        events: Vec::with_capacity(commuters.len() * 4),
        ..DaySchedule::default()
    };
    for c in commuters {
        let m_depart = departures.sample(Period::Morning, &mut rng);
        let mut e_depart = departures.sample(Period::Evening, &mut rng);
        let m_time = travel_times.travel_time(c.home, c.work, Period::Morning);
        let e_time = travel_times.travel_time(c.work, c.home, Period::Evening);
        out.fallback_count += m_time.fallback as usize + e_time.fallback as usize;

        let m_arrive = m_depart + m_time.seconds;
        // `<=`: at equal times Start sorts first, which would reorder this commuter's legs.
        if e_depart <= m_arrive {
            e_depart = m_arrive + CLAMP_GAP_S;
            out.clamp_count += 1;
        }
        let morning = Trip {
            commuter_id: c.id,
            origin: c.home,
            destination: c.work,
            depart: m_depart,
            arrive: m_arrive,
            leg: Leg::HomeToWork,
        };
        let evening = Trip {
            commuter_id: c.id,
            origin: c.work,
            destination: c.home,
            depart: e_depart,
            arrive: e_depart + e_time.seconds,
            leg: Leg::WorkToHome,
        };
        out.events.extend([
            TripEvent::start(morning),
            TripEvent::end(morning),
            TripEvent::start(evening),
            TripEvent::end(evening),
        ]);
    }
    out.events.sort_unstable_by(TripEvent::order);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traveltime::SpeedModel;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn commuter(id: u64, hx: f64, wx: f64) -> Commuter {
        Commuter {
            id,
            home: GeoPoint::new(hx, 0.0),
            work: GeoPoint::new(wx, 0.0),
        }
    }

    fn speed(v: f64) -> TravelTimeProvider {
        TravelTimeProvider::Speed(SpeedModel::new(v, v).unwrap())
    }

    #[test]
    fn single_commuter_event_order() {
        let day = generate_day_events(&[commuter(0, 0.0, 10_000.0)], &DepartureDistribution::default(), &speed(10.0), 3);
        let kinds: Vec<_> = day.events.iter().map(|e| (e.kind, e.trip.leg)).collect();
        assert_eq!(
            kinds,
            vec![
                (EventKind::Start, Leg::HomeToWork),
                (EventKind::End, Leg::HomeToWork),
                (EventKind::Start, Leg::WorkToHome),
                (EventKind::End, Leg::WorkToHome),
            ]
        );
        let t: Vec<f64> = day.events.iter().map(|e| e.time).collect();
        assert!(t[0] < t[1] && t[1] <= t[2] && t[2] < t[3]);
        assert_eq!(t[1] - t[0], 1000.0);
        assert!((MORNING_START_S..MORNING_START_S + HOUR_S).contains(&t[0]));
        assert!((EVENING_START_S..EVENING_START_S + HOUR_S).contains(&t[2]));
    }

    #[test]
    fn four_events_per_commuter() {
        let pop: Vec<_> = (0..300).map(|i| commuter(i, 0.0, 2000.0 + i as f64)).collect();
        let day = generate_day_events(&pop, &DepartureDistribution::default(), &speed(10.0), 9);
        assert_eq!(day.events.len(), 1200);
        let mut per: HashMap<u64, Vec<u64>> = HashMap::new();
        for e in &day.events {
            per.entry(e.trip.commuter_id).or_default().push(e.sequence_key() % 4);
        }
        for keys in per.values() {
            let mut k = keys.clone();
            k.sort();
            assert_eq!(k, vec![0, 1, 2, 3]);
        }
        for w in day.events.windows(2) {
            assert_eq!(w[0].order(&w[1]), Ordering::Less);
        }
    }

    #[test]
    fn same_seed_same_events() {
        let pop: Vec<_> = (0..50).map(|i| commuter(i, 0.0, 5000.0)).collect();
        let d = DepartureDistribution::default();
        let a = generate_day_events(&pop, &d, &speed(10.0), 77);
        let b = generate_day_events(&pop, &d, &speed(10.0), 77);
        assert_eq!(a.events, b.events);
        let c = generate_day_events(&pop, &d, &speed(10.0), 78);
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn departures_uniform_over_window() {
        // Kolmogorov-Smirnov against U(07:00, 08:00); 1.628 / sqrt(n) is the
        // asymptotic critical value at alpha = 0.01.
        let pop: Vec<_> = (0..20_000).map(|i| commuter(i, 0.0, 5000.0)).collect();
        let day = generate_day_events(&pop, &DepartureDistribution::default(), &speed(10.0), 5);
        let mut dep: Vec<f64> = day
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Start && e.trip.leg == Leg::HomeToWork)
            .map(|e| (e.time - MORNING_START_S) / HOUR_S)
            .collect();
        dep.sort_by(f64::total_cmp);
        let n = dep.len() as f64;
        let d = dep
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
            .fold(0.0, f64::max);
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn long_trips_are_clamped() {
        // 100 km at 1 m/s arrives long after the evening window.
        let pop = vec![commuter(0, 0.0, 100_000.0)];
        let day = generate_day_events(&pop, &DepartureDistribution::default(), &speed(1.0), 1);
        assert_eq!(day.clamp_count, 1);
        let e = &day.events;
        assert_eq!(e[2].kind, EventKind::Start);
        assert_eq!(e[2].time, e[1].time + CLAMP_GAP_S);
    }

    #[test]
    fn empirical_single_bin() {
        let d = parse_empirical_distribution(
            "seconds_bin_start,probability\n25200,1\n57600,1\n",
        )
        .unwrap();
        let mut rng = rng::rng(4);
        for _ in 0..1000 {
            let t = d.sample(Period::Morning, &mut rng);
            assert!((25_200.0..28_800.0).contains(&t));
        }
    }

    #[test]
    fn empirical_two_equal_bins() {
        let d = parse_empirical_distribution(
            "seconds_bin_start,probability\n25200,0.5\n27000,0.5\n57600,1\n",
        )
        .unwrap();
        let mut rng = rng::rng(8);
        let n = 20_000;
        let early = (0..n)
            .filter(|_| d.sample(Period::Morning, &mut rng) < 27_000.0)
            .count() as f64;
        // 4 sigma of Binomial(n, 1/2).
        assert!((early / n as f64 - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn empirical_renormalizes_and_rejects() {
        match parse_empirical_distribution("seconds_bin_start,probability\n25200,2\n57600,3\n").unwrap() {
            DepartureDistribution::Empirical(e) => {
                assert_eq!(e.renormalized, 2);
                assert_eq!(e.morning.bins()[0].2, 1.0);
            }
            _ => unreachable!(),
        }
        assert!(parse_empirical_distribution("seconds_bin_start,probability\n").is_err());
        assert!(parse_empirical_distribution("").is_err());
        assert!(matches!(
            parse_empirical_distribution("seconds_bin_start,probability\n25200,-1\n57600,1\n"),
            Err(ScheduleError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empirical_explicit_end_column() {
        let d = parse_empirical_distribution(
            "seconds_bin_start,probability,seconds_bin_end\n25200,1,25800\n57600,1,58200\n",
        )
        .unwrap();
        let mut rng = rng::rng(1);
        for _ in 0..200 {
            assert!((57_600.0..58_200.0).contains(&d.sample(Period::Evening, &mut rng)));
        }
    }

    fn event() -> impl Strategy<Value = TripEvent> {
        (0u8..4, 0u64..3, prop::bool::ANY, prop::bool::ANY).prop_map(|(t, id, end, evening)| {
            let trip = Trip {
                commuter_id: id,
                origin: GeoPoint::default(),
                destination: GeoPoint::default(),
                depart: t as f64,
                arrive: t as f64,
                leg: if evening { Leg::WorkToHome } else { Leg::HomeToWork },
            };
            if end { TripEvent::end(trip) } else { TripEvent::start(trip) }
        })
    }

    proptest! {
        #[test]
        fn order_is_strict_total(a in event(), b in event(), c in event()) {
            prop_assert_eq!(a.order(&b), b.order(&a).reverse());
            if a.order(&b) == Ordering::Equal {
                prop_assert_eq!(a.sequence_key(), b.sequence_key());
            }
            if a.order(&b) == Ordering::Less && b.order(&c) == Ordering::Less {
                prop_assert_eq!(a.order(&c), Ordering::Less);
            }
        }
    }
}
