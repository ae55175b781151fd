//! Discrete-event estimation of parking-space and fleet-size requirements
//! for home-work commuting under private, shared-parking, shared-car and
//! shared self-driving scenarios.

pub mod geo;
pub mod par;
pub mod rng;
pub mod spatial_index;
pub mod population;
pub mod schedule;
pub mod traveltime;
pub mod engine;
pub mod metrics;
pub mod sweep;
