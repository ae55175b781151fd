//! Dynamic nearest-available-resource index.
//!
//! A [`ResourcePool`] holds free parking spots or available cars. Items live
//! in a uniform grid keyed by integer cell coordinates; queries expand rings
//! of cells outward from the query cell and stop as soon as no unvisited
//! cell can hold a closer qualifying item. When the ring walk would touch
//! more cells than there are items, the query scans the items directly.

use rustc_hash::FxHashMap as HashMap;

use thiserror::Error;

use crate::geo::{dist, GeoPoint};

pub type ResourceId = u64;

pub const MIN_CELL_SIZE_M: f64 = 25.0;
pub const MAX_CELL_SIZE_M: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PoolError {
    #[error("resource {0} is already in the pool")]
    Duplicate(ResourceId),
    #[error("resource {0} is not in the pool")]
    Missing(ResourceId),
}

/// Result of a nearest-item query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub id: ResourceId,
    pub location: GeoPoint,
    pub distance: f64,
}

impl Nearest {
    /// `(distance, id)` ordering: closer wins, equal distances go to the lower id.
    #[inline]
    fn beats(&self, distance: f64, id: ResourceId) -> bool {
        distance < self.distance || (distance == self.distance && id < self.id)
    }
}

type CellKey = (i32, i32);

#[derive(Debug, Clone, Copy)]
struct Entry {
    id: ResourceId,
    location: GeoPoint,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    cell: CellKey,
    in_cell: usize,
    in_items: usize,
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    min_x: i32,
    max_x: i32,
    min_y: i32,
    max_y: i32,
}

impl Bounds {
    fn point(c: CellKey) -> Self {
        Bounds {
            min_x: c.0,
            max_x: c.0,
            min_y: c.1,
            max_y: c.1,
        }
    }

    fn grow(&mut self, c: CellKey) {
        self.min_x = self.min_x.min(c.0);
        self.max_x = self.max_x.max(c.0);
        self.min_y = self.min_y.min(c.1);
        self.max_y = self.max_y.max(c.1);
    }

    /// Ring radius beyond which no occupied cell can exist around `c`.
    fn reach(&self, c: CellKey) -> i64 {
        let dx = (c.0 as i64 - self.min_x as i64)
            .abs()
            .max((self.max_x as i64 - c.0 as i64).abs());
        let dy = (c.1 as i64 - self.min_y as i64)
            .abs()
            .max((self.max_y as i64 - c.1 as i64).abs());
        dx.max(dy)
    }
}

/// Grid-backed set of located resources (L_P or L_C in the engine).
#[derive(Debug, Clone)]
pub struct ResourcePool {
    cell_size: f64,
    cells: HashMap<CellKey, Vec<Entry>>,
    slots: HashMap<ResourceId, Slot>,
    items: Vec<Entry>,
    // Occupied-cell hull; only grows, which keeps it a valid over-approximation.
    bounds: Option<Bounds>,
}

impl ResourcePool {
    /// Creates an empty pool.
    ///
    /// # Panics
    /// If `cell_size` is not a positive finite number.
    pub fn new(cell_size: f64) -> Self {
        assert!(
            cell_size.is_finite() && cell_size > 0.0,
            "cell size must be positive, got {cell_size}"
        );
        ResourcePool {
            cell_size,
            cells: HashMap::default(),
            slots: HashMap::default(),
            items: Vec::new(),
            bounds: None,
        }
    }

    /// Pool tuned for queries of radius `r_max`: cells of `r_max / 4`,
    /// clamped to `[25 m, 500 m]`.
    pub fn for_radius(r_max: f64) -> Self {
        Self::new(default_cell_size(r_max))
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, id: ResourceId) -> bool {
        self.slots.contains_key(&id)
    }

    pub fn location(&self, id: ResourceId) -> Option<GeoPoint> {
        self.slots.get(&id).map(|s| self.items[s.in_items].location)
    }

    /// Iterates over `(id, location)` in unspecified order.
    pub fn iter(&self) -> impl Iterator<Item = (ResourceId, GeoPoint)> + '_ {
        self.items.iter().map(|e| (e.id, e.location))
    }

    #[inline]
    fn cell_of(&self, p: GeoPoint) -> CellKey {
        (
            (p.x / self.cell_size).floor() as i32,
            (p.y / self.cell_size).floor() as i32,
        )
    }

    pub fn insert(&mut self, id: ResourceId, location: GeoPoint) -> Result<(), PoolError> {
        if self.slots.contains_key(&id) {
            return Err(PoolError::Duplicate(id));
        }
        let cell = self.cell_of(location);
        let entry = Entry { id, location };
        let bucket = self.cells.entry(cell).or_default();
        bucket.push(entry);
        let slot = Slot {
            cell,
            in_cell: bucket.len() - 1,
            in_items: self.items.len(),
        };
        self.items.push(entry);
        self.slots.insert(id, slot);
        match &mut self.bounds {
            Some(b) => b.grow(cell),
            None => self.bounds = Some(Bounds::point(cell)),
        }
        Ok(())
    }

    /// Removes `id`, returning its location.
    pub fn remove(&mut self, id: ResourceId) -> Result<GeoPoint, PoolError> {
        let slot = self.slots.remove(&id).ok_or(PoolError::Missing(id))?;

        let bucket = self
            .cells
            .get_mut(&slot.cell)
            .expect("slot points at an existing cell");
        let removed = bucket.swap_remove(slot.in_cell);
        if let Some(moved) = bucket.get(slot.in_cell) {
            self.slots
                .get_mut(&moved.id)
                .expect("moved entry is indexed")
                .in_cell = slot.in_cell;
        }
        if bucket.is_empty() {
            self.cells.remove(&slot.cell);
        }

        self.items.swap_remove(slot.in_items);
        if let Some(moved) = self.items.get(slot.in_items) {
            self.slots
                .get_mut(&moved.id)
                .expect("moved entry is indexed")
                .in_items = slot.in_items;
        }
        if self.items.is_empty() {
            self.bounds = None;
        }
        Ok(removed.location)
    }

    /// Closest item with `distance < r_max`, ties to the lowest id.
    pub fn nearest_within(&self, p: GeoPoint, r_max: f64) -> Option<Nearest> {
        let bounds = self.bounds?;
        if !(r_max > 0.0) {
            return None;
        }
        let center = self.cell_of(p);
        let mut max_ring = bounds.reach(center);
        if r_max.is_finite() {
            max_ring = max_ring.min((r_max / self.cell_size).ceil() as i64 + 1);
        }
        let side = 2 * max_ring as u128 + 1;
        if side * side > 2 * self.items.len() as u128 + 16 {
            return self.scan_within(p, r_max);
        }
        self.ring_within(p, center, r_max, max_ring, bounds)
    }

    /// Closest item regardless of distance.
    pub fn nearest(&self, p: GeoPoint) -> Option<Nearest> {
        self.nearest_within(p, f64::INFINITY)
    }

    fn scan_within(&self, p: GeoPoint, r_max: f64) -> Option<Nearest> {
        let mut best: Option<Nearest> = None;
        for e in &self.items {
            consider(&mut best, p, e, r_max);
        }
        best
    }

    fn ring_within(
        &self,
        p: GeoPoint,
        center: CellKey,
        r_max: f64,
        max_ring: i64,
        bounds: Bounds,
    ) -> Option<Nearest> {
        let (cx, cy) = (center.0 as i64, center.1 as i64);
        let cs = self.cell_size;
        let mut best: Option<Nearest> = None;

        for k in 0..=max_ring {
            if k > 0 {
                // Distance from p to the outside of the (2k-1)^2 block already scanned.
                let inner = (k - 1) as f64;
                let left = p.x - (cx as f64 - inner) * cs;
                let right = (cx as f64 + inner + 1.0) * cs - p.x;
                let down = p.y - (cy as f64 - inner) * cs;
                let up = (cy as f64 + inner + 1.0) * cs - p.y;
                let lower = left.min(right).min(down).min(up).max(0.0);
                if lower >= r_max {
                    break;
                }
                if let Some(b) = &best {
                    if lower > b.distance {
                        break;
                    }
                }
            }
            let x_lo = (cx - k).max(bounds.min_x as i64);
            let x_hi = (cx + k).min(bounds.max_x as i64);
            let y_lo = (cy - k).max(bounds.min_y as i64);
            let y_hi = (cy + k).min(bounds.max_y as i64);
            for y in y_lo..=y_hi {
                let edge_row = y == cy - k || y == cy + k;
                if edge_row {
                    for x in x_lo..=x_hi {
                        self.scan_cell((x as i32, y as i32), p, r_max, &mut best);
                    }
                } else {
                    for x in [cx - k, cx + k] {
                        if x >= x_lo && x <= x_hi {
                            self.scan_cell((x as i32, y as i32), p, r_max, &mut best);
                        }
                        if k == 0 {
                            break;
                        }
                    }
                }
            }
        }
        best
    }

    #[inline]
    fn scan_cell(&self, key: CellKey, p: GeoPoint, r_max: f64, best: &mut Option<Nearest>) {
        if let Some(bucket) = self.cells.get(&key) {
            for e in bucket {
                consider(best, p, e, r_max);
            }
        }
    }
}

#[inline]
fn consider(best: &mut Option<Nearest>, p: GeoPoint, e: &Entry, r_max: f64) {
    let d = dist(p, e.location);
    if d >= r_max {
        return;
    }
    let better = match best {
        None => true,
        Some(b) => b.beats(d, e.id),
    };
    if better {
        *best = Some(Nearest {
            id: e.id,
            location: e.location,
            distance: d,
        });
    }
}

/// `r_max / 4` clamped to `[MIN_CELL_SIZE_M, MAX_CELL_SIZE_M]`.
pub fn default_cell_size(r_max: f64) -> f64 {
    if r_max.is_finite() {
        (r_max / 4.0).clamp(MIN_CELL_SIZE_M, MAX_CELL_SIZE_M)
    } else {
        MAX_CELL_SIZE_M
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn oracle(items: &[(ResourceId, GeoPoint)], p: GeoPoint, r_max: f64) -> Option<(ResourceId, f64)> {
        let mut best: Option<(ResourceId, f64)> = None;
        for &(id, q) in items {
            let d = dist(p, q);
            if d < r_max {
                match best {
                    Some((bid, bd)) if bd < d || (bd == d && bid < id) => {}
                    _ => best = Some((id, d)),
                }
            }
        }
        best
    }

    #[test]
    fn empty_pool_finds_nothing() {
        let pool = ResourcePool::new(100.0);
        assert!(pool.nearest_within(GeoPoint::new(0.0, 0.0), 1e6).is_none());
        assert!(pool.nearest(GeoPoint::new(0.0, 0.0)).is_none());
    }

    #[test]
    fn insert_remove_counts() {
        let mut pool = ResourcePool::new(100.0);
        pool.insert(1, GeoPoint::new(5.0, 5.0)).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.remove(1).unwrap(), GeoPoint::new(5.0, 5.0));
        assert_eq!(pool.len(), 0);
        assert!(pool.nearest_within(GeoPoint::new(5.0, 5.0), 10.0).is_none());
    }

    #[test]
    fn duplicate_and_missing_ids_are_errors() {
        let mut pool = ResourcePool::new(100.0);
        pool.insert(3, GeoPoint::new(0.0, 0.0)).unwrap();
        assert_eq!(pool.insert(3, GeoPoint::new(1.0, 0.0)), Err(PoolError::Duplicate(3)));
        assert_eq!(pool.remove(4), Err(PoolError::Missing(4)));
    }

    #[test]
    fn picks_the_closer_item() {
        let mut pool = ResourcePool::new(100.0);
        pool.insert(1, GeoPoint::new(100.0, 0.0)).unwrap();
        pool.insert(2, GeoPoint::new(50.0, 0.0)).unwrap();
        let n = pool.nearest_within(GeoPoint::new(0.0, 0.0), 200.0).unwrap();
        assert_eq!((n.id, n.distance), (2, 50.0));
    }

    #[test]
    fn radius_is_strict() {
        let mut pool = ResourcePool::new(100.0);
        pool.insert(1, GeoPoint::new(300.0, 400.0)).unwrap();
        let o = GeoPoint::new(0.0, 0.0);
        assert!(pool.nearest_within(o, 500.0).is_none());
        assert_eq!(pool.nearest_within(o, 500.000001).unwrap().id, 1);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let mut pool = ResourcePool::new(50.0);
        pool.insert(9, GeoPoint::new(-120.0, 0.0)).unwrap();
        pool.insert(4, GeoPoint::new(0.0, 120.0)).unwrap();
        pool.insert(7, GeoPoint::new(120.0, 0.0)).unwrap();
        let n = pool.nearest_within(GeoPoint::new(0.0, 0.0), 1000.0).unwrap();
        assert_eq!(n.id, 4);
    }

    #[test]
    fn ten_thousand_inserts_retrievable() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pool = ResourcePool::new(250.0);
        let mut pts = Vec::new();
        for id in 0..10_000u64 {
            let p = GeoPoint::new(rng.random_range(-2e4..2e4), rng.random_range(-2e4..2e4));
            pool.insert(id, p).unwrap();
            pts.push(p);
        }
        assert_eq!(pool.len(), 10_000);
        for (id, p) in pts.iter().enumerate() {
            assert_eq!(pool.location(id as u64), Some(*p));
            let n = pool.nearest_within(*p, 1.0).unwrap();
            assert_eq!(n.distance, 0.0);
        }
    }

    #[test]
    fn matches_linear_scan_with_churn() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut pool = ResourcePool::new(200.0);
        let mut live: Vec<(ResourceId, GeoPoint)> = Vec::new();
        // Coarse lattice coordinates make exact distance ties common.
        let lattice = |rng: &mut rand_chacha::ChaCha8Rng| {
            GeoPoint::new(
                rng.random_range(-40..40) as f64 * 50.0,
                rng.random_range(-40..40) as f64 * 50.0,
            )
        };
        for id in 0..1000u64 {
            let p = lattice(&mut rng);
            pool.insert(id, p).unwrap();
            live.push((id, p));
        }
        for step in 0..1000 {
            let q = lattice(&mut rng);
            let r = rng.random_range(1.0..3000.0);
            let got = pool.nearest_within(q, r).map(|n| (n.id, n.distance));
            assert_eq!(got, oracle(&live, q, r), "query {step}");
            if step % 2 == 0 && !live.is_empty() {
                let i = rng.random_range(0..live.len());
                let (id, _) = live.swap_remove(i);
                pool.remove(id).unwrap();
            } else {
                let id = 10_000 + step as u64;
                let p = lattice(&mut rng);
                pool.insert(id, p).unwrap();
                live.push((id, p));
            }
        }
    }

    proptest! {
        #[test]
        fn agrees_with_oracle(
            pts in proptest::collection::vec((-3000.0..3000.0f64, -3000.0..3000.0f64), 0..200),
            q in (-4000.0..4000.0f64, -4000.0..4000.0f64),
            r in prop_oneof![1.0..5000.0f64, Just(f64::INFINITY)],
            cell in 30.0..1500.0f64,
        ) {
            let mut pool = ResourcePool::new(cell);
            let items: Vec<_> = pts.iter().enumerate()
                .map(|(i, &(x, y))| (i as u64, GeoPoint::new(x, y)))
                .collect();
            for &(id, p) in &items {
                pool.insert(id, p).unwrap();
            }
            let q = GeoPoint::new(q.0, q.1);
            let got = pool.nearest_within(q, r).map(|n| (n.id, n.distance));
            prop_assert_eq!(got, oracle(&items, q, r));
        }
    }
}
