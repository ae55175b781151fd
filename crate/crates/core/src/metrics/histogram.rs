use serde::{Deserialize, Serialize};

/// Bin width of the claim-leg distance histogram, meters.
pub const LEG_BIN_M: f64 = 25.0;

/// Fixed-width histogram of claim-leg distances (walking or empty-vehicle
/// legs). Newly materialized resources count as zero-length legs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LegHistogram {
    counts: Vec<u64>,
}

impl LegHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bin_width(&self) -> f64 {
        LEG_BIN_M
    }

    pub fn add(&mut self, distance: f64) {
        let bin = (distance.max(0.0) / LEG_BIN_M) as usize;
        if bin >= self.counts.len() {
            self.counts.resize(bin + 1, 0);
        }
        self.counts[bin] += 1;
    }

    pub fn merge(&mut self, other: &LegHistogram) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `(bin_lower_edge_m, count)` for non-empty bins.
    pub fn nonzero(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as f64 * LEG_BIN_M, c))
    }
}
