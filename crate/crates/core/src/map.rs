//! The 2-D "normal usage" map.
//!
//! Each state's training projections are binned on a square grid; the
//! state's hot-spot is the smallest set of densest cells holding a given
//! share of its points. The map is the union of all hot-spots, and a window
//! whose projection lands outside it counts as a crossing.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnv::Fnv64;
use crate::pca::Point2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_c1: f64,
    pub max_c1: f64,
    pub min_c2: f64,
    pub max_c2: f64,
    pub cells_per_axis: usize,
}

impl GridSpec {
    pub fn new(min_c1: f64, max_c1: f64, min_c2: f64, max_c2: f64, cells_per_axis: usize) -> Result<Self> {
        let g = GridSpec { min_c1, max_c1, min_c2, max_c2, cells_per_axis };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let bounds = [self.min_c1, self.max_c1, self.min_c2, self.max_c2];
        if bounds.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !(self.max_c1 > self.min_c1 && self.max_c2 > self.min_c2) {
            return Err(Error::InvalidParameter { name: "grid", reason: "max must exceed min on both axes" });
        }
        if self.cells_per_axis < 8 {
            return Err(Error::InvalidParameter { name: "cells_per_axis", reason: "must be at least 8" });
        }
        Ok(())
    }

    fn axis_cell(&self, v: f64, lo: f64, hi: f64) -> Option<usize> {
        if !(lo..=hi).contains(&v) {
            return None;
        }
        let n = self.cells_per_axis;
        let idx = libm::floor((v - lo) / (hi - lo) * n as f64) as usize;
        // The upper edge belongs to the last cell.
        Some(idx.min(n - 1))
    }

    /// `(column, row)` of the cell holding `p`, or `None` outside the box.
    pub fn cell_of(&self, p: &Point2D) -> Option<(usize, usize)> {
        let col = self.axis_cell(p.c1, self.min_c1, self.max_c1)?;
        let row = self.axis_cell(p.c2, self.min_c2, self.max_c2)?;
        Some((col, row))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2D {
        let n = self.cells_per_axis as f64;
        Point2D::new(
            self.min_c1 + (col as f64 + 0.5) * (self.max_c1 - self.min_c1) / n,
            self.min_c2 + (row as f64 + 0.5) * (self.max_c2 - self.min_c2) / n,
        )
    }
}

/// Row-major boolean grid; rows run along `c2`, columns along `c1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    cells_per_axis: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(cells_per_axis: usize) -> Self {
        Mask { cells_per_axis, bits: alloc::vec![false; cells_per_axis * cells_per_axis] }
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.cells_per_axis + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.cells_per_axis + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `(column, row)` of every set cell in row-major order.
    pub fn set_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.cells_per_axis;
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i % n, i / n))
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask {
            cells_per_axis: self.cells_per_axis,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Grows the mask by one cell in all eight directions.
    pub fn dilate(&self) -> Mask {
        let n = self.cells_per_axis as isize;
        let mut out = self.clone();
        for (col, row) in self.set_cells() {
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (c, r) = (col as isize + dc, row as isize + dr);
                    if (0..n).contains(&c) && (0..n).contains(&r) {
                        out.set(c as usize, r as usize, true);
                    }
                }
            }
        }
        out
    }

    /// Run-length encoding: comma-separated `bit:length` runs in row-major order,
    /// e.g. `0:120,1:3,0:9877`.
    pub fn to_rle(&self) -> String {
        let mut out = String::new();
        let mut iter = self.bits.iter().peekable();
        while let Some(&bit) = iter.next() {
            let mut len = 1usize;
            while iter.peek() == Some(&&bit) {
                iter.next();
                len += 1;
            }
            if !out.is_empty() {
                out.push(',');
            }
            let _ = write!(out, "{}:{}", bit as u8, len);
        }
        out
    }

    pub fn from_rle(cells_per_axis: usize, rle: &str) -> Result<Mask> {
        let total = cells_per_axis * cells_per_axis;
        let mut bits = Vec::with_capacity(total);
        for run in rle.split(',').filter(|r| !r.is_empty()) {
            let (bit, len) = run.split_once(':').ok_or_else(|| Error::MalformedMask(alloc::format!("run `{run}`")))?;
            let bit = match bit.trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::MalformedMask(alloc::format!("bit `{other}`"))),
            };
            let len: usize =
                len.trim().parse().map_err(|_| Error::MalformedMask(alloc::format!("length in `{run}`")))?;
            if bits.len() + len > total {
                return Err(Error::MalformedMask(alloc::format!("more than {total} cells")));
            }
            bits.resize(bits.len() + len, bit);
        }
        if bits.len() != total {
            return Err(Error::MalformedMask(alloc::format!("{} cells, expected {total}", bits.len())));
        }
        Ok(Mask { cells_per_axis, bits })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    pub cells_per_axis: usize,
    /// Share of each state's points its hot-spot must hold, in `(0, 1]`.
    pub mass_quantile: f64,
    /// Bounding-box padding per side, as a fraction of the data span.
    pub margin_fraction: f64,
    /// Grow the final union mask by one cell.
    pub dilate: bool,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions { cells_per_axis: 100, mass_quantile: 0.95, margin_fraction: 0.05, dilate: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsageMap {
    grid: GridSpec,
    mask: Mask,
    per_device_masks: BTreeMap<String, Mask>,
    mass_quantile: f64,
    dilated: bool,
    model_id: Option<u64>,
}

impl UsageMap {
    /// Reassembles a map, checking that `mask` is the (optionally dilated)
    /// union of the per-device masks.
    pub fn from_parts(
        grid: GridSpec,
        per_device_masks: BTreeMap<String, Mask>,
        mask: Mask,
        mass_quantile: f64,
        dilated: bool,
        model_id: Option<u64>,
    ) -> Result<Self> {
        grid.validate()?;
        if !(mass_quantile > 0.0 && mass_quantile <= 1.0) {
            return Err(Error::InvalidParameter { name: "mass_quantile", reason: "must be in (0, 1]" });
        }
        let n = grid.cells_per_axis;
        if mask.cells_per_axis != n || per_device_masks.values().any(|m| m.cells_per_axis != n) {
            return Err(Error::MalformedMask(String::from("mask size differs from grid")));
        }
        let union = union_of(n, &per_device_masks, dilated);
        if union != mask {
            return Err(Error::MalformedMask(String::from("mask is not the union of the per-device masks")));
        }
        if mask.count() == 0 {
            return Err(Error::MalformedMask(String::from("map has no cells")));
        }
        Ok(UsageMap { grid, mask, per_device_masks, mass_quantile, dilated, model_id })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn per_device_masks(&self) -> &BTreeMap<String, Mask> {
        &self.per_device_masks
    }

    pub fn mass_quantile(&self) -> f64 {
        self.mass_quantile
    }

    pub fn dilated(&self) -> bool {
        self.dilated
    }

    /// Id of the PCA model whose projections the map was built from.
    pub fn model_id(&self) -> Option<u64> {
        self.model_id
    }

    pub fn bind_model(&mut self, model_id: u64) {
        self.model_id = Some(model_id);
    }

    pub fn contains(&self, p: &Point2D) -> Result<bool> {
        if !p.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(self.grid.cell_of(p).is_some_and(|(col, row)| self.mask.get(col, row)))
    }

    pub fn kept_cell_centers(&self) -> Vec<Point2D> {
        self.mask.set_cells().map(|(c, r)| self.grid.cell_center(c, r)).collect()
    }

    pub fn id(&self) -> u64 {
        let mut h = Fnv64::new();
        h.bytes(b"map-v1");
        let g = &self.grid;
        h.f64(g.min_c1).f64(g.max_c1).f64(g.min_c2).f64(g.max_c2).u64(g.cells_per_axis as u64);
        h.f64(self.mass_quantile).u64(self.dilated as u64).u64(self.model_id.unwrap_or(0));
        for (label, m) in &self.per_device_masks {
            h.bytes(label.as_bytes()).bytes(&[0]).bytes(m.to_rle().as_bytes());
        }
        h.finish()
    }
}

fn union_of(n: usize, masks: &BTreeMap<String, Mask>, dilate: bool) -> Mask {
    let union = masks.values().fold(Mask::empty(n), |acc, m| acc.union(m));
    if dilate {
        union.dilate()
    } else {
        union
    }
}

fn padded(lo: f64, hi: f64, margin: f64) -> (f64, f64) {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let pad = margin * (hi - lo);
    (lo - pad, hi + pad)
}

/// Densest cells holding at least `quantile` of the points; all cells tied
/// at the cut-off count are kept.
fn hot_spot(grid: &GridSpec, points: &[Point2D], quantile: f64) -> Mask {
    let n = grid.cells_per_axis;
    let mut counts = alloc::vec![0usize; n * n];
    for p in points {
        if let Some((col, row)) = grid.cell_of(p) {
            counts[row * n + col] += 1;
        }
    }
    let mut levels: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    let target = quantile * points.len() as f64;
    let mut cumulative = 0usize;
    let mut cutoff = 1;
    for &c in &levels {
        cumulative += c;
        cutoff = c;
        if cumulative as f64 >= target {
            break;
        }
    }
    Mask { cells_per_axis: n, bits: counts.iter().map(|&c| c > 0 && c >= cutoff).collect() }
}

pub fn build_map(projections: &BTreeMap<String, Vec<Point2D>>, options: &MapOptions) -> Result<UsageMap> {
    if !(options.mass_quantile > 0.0 && options.mass_quantile <= 1.0) {
        return Err(Error::InvalidParameter { name: "mass_quantile", reason: "must be in (0, 1]" });
    }
    if !(options.margin_fraction.is_finite() && options.margin_fraction >= 0.0) {
        return Err(Error::InvalidParameter { name: "margin_fraction", reason: "must be finite and non-negative" });
    }
    if options.cells_per_axis < 8 {
        return Err(Error::InvalidParameter { name: "cells_per_axis", reason: "must be at least 8" });
    }
    if projections.is_empty() {
        return Err(Error::Empty);
    }
    let (mut lo1, mut hi1, mut lo2, mut hi2) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (label, points) in projections {
        if points.is_empty() {
            return Err(Error::NoProjections(label.clone()));
        }
        if points.len() < options.cells_per_axis {
            return Err(Error::TooShort { needed: options.cells_per_axis, got: points.len() });
        }
        for p in points {
            if !p.is_finite() {
                return Err(Error::NonFinite);
            }
            lo1 = lo1.min(p.c1);
            hi1 = hi1.max(p.c1);
            lo2 = lo2.min(p.c2);
            hi2 = hi2.max(p.c2);
        }
    }
    let (min_c1, max_c1) = padded(lo1, hi1, options.margin_fraction);
    let (min_c2, max_c2) = padded(lo2, hi2, options.margin_fraction);
    let grid = GridSpec::new(min_c1, max_c1, min_c2, max_c2, options.cells_per_axis)?;

    let per_device_masks: BTreeMap<String, Mask> = projections
        .iter()
        .map(|(label, points)| (label.clone(), hot_spot(&grid, points, options.mass_quantile)))
        .collect();
    let mask = union_of(grid.cells_per_axis, &per_device_masks, options.dilate);
    Ok(UsageMap { grid, mask, per_device_masks, mass_quantile: options.mass_quantile, dilated: options.dilate, model_id: None })
}

/// Points whose projection is not inside the map; non-finite points count as outside.
pub fn count_outside(map: &UsageMap, points: &[Point2D]) -> usize {
    points.iter().filter(|p| !map.contains(p).unwrap_or(false)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_cluster(rng: &mut ChaCha8Rng, center: (f64, f64), sd: f64, n: usize) -> Vec<Point2D> {
        // Box-Muller keeps this independent of rand_distr.
        (0..n)
            .map(|_| {
                let (u1, u2): (f64, f64) = (rng.random_range(1e-12..1.0), rng.random());
                let r = libm::sqrt(-2.0 * libm::log(u1)) * sd;
                let t = 2.0 * core::f64::consts::PI * u2;
                Point2D::new(center.0 + r * libm::cos(t), center.1 + r * libm::sin(t))
            })
            .collect()
    }

    fn two_clusters(seed: u64) -> BTreeMap<String, Vec<Point2D>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BTreeMap::from([
            ("iron".to_string(), gaussian_cluster(&mut rng, (0.0, 0.0), 1.0, 400)),
            ("dryer".to_string(), gaussian_cluster(&mut rng, (10.0, 5.0), 0.5, 300)),
        ])
    }

    #[test]
    fn cluster_centroid_is_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cluster = gaussian_cluster(&mut rng, (3.0, -2.0), 0.3, 2000);
        // A few distant points stretch the box so the cluster is not the whole grid.
        let mut pts = cluster.clone();
        pts.extend([Point2D::new(-10.0, -10.0), Point2D::new(10.0, 10.0)]);
        let map = build_map(&BTreeMap::from([("iron".to_string(), pts)]), &MapOptions { cells_per_axis: 40, ..MapOptions::default() }).unwrap();
        let mean = cluster.iter().fold((0.0, 0.0), |a, p| (a.0 + p.c1, a.1 + p.c2));
        let centroid = Point2D::new(mean.0 / 2000.0, mean.1 / 2000.0);
        assert!(map.contains(&centroid).unwrap());
        assert!(!map.contains(&Point2D::new(-9.0, 9.0)).unwrap());
    }

    #[test]
    fn full_mass_keeps_every_occupied_cell() {
        let projections = two_clusters(1);
        let map = build_map(&projections, &MapOptions { mass_quantile: 1.0, cells_per_axis: 30, ..MapOptions::default() }).unwrap();
        for pts in projections.values() {
            assert!(pts.iter().all(|p| map.contains(p).unwrap()));
            assert_eq!(count_outside(&map, pts), 0);
        }
        // An in-box cell nobody visited stays out.
        let g = map.grid();
        let empty = (0..g.cells_per_axis)
            .flat_map(|r| (0..g.cells_per_axis).map(move |c| (c, r)))
            .find(|&(c, r)| !map.mask().get(c, r))
            .unwrap();
        assert!(!map.contains(&g.cell_center(empty.0, empty.1)).unwrap());
    }

    #[test]
    fn upper_corner_maps_to_last_cell() {
        let mut pts: Vec<Point2D> = (0..10).map(|i| Point2D::new(i as f64, i as f64 * 0.5)).collect();
        pts.push(Point2D::new(9.0, 4.5));
        let map = build_map(
            &BTreeMap::from([("a".to_string(), pts)]),
            &MapOptions { cells_per_axis: 8, margin_fraction: 0.0, mass_quantile: 1.0, dilate: false },
        )
        .unwrap();
        assert_eq!(map.grid().cell_of(&Point2D::new(9.0, 4.5)), Some((7, 7)));
        assert!(map.contains(&Point2D::new(9.0, 4.5)).unwrap());
        assert_eq!(map.grid().cell_of(&Point2D::new(9.0 + 1e-9, 4.5)), None);
    }

    #[test]
    fn outside_box_and_non_finite() {
        let map = build_map(&two_clusters(2), &MapOptions::default()).unwrap();
        assert!(!map.contains(&Point2D::new(1e6, 0.0)).unwrap());
        assert_eq!(map.contains(&Point2D::new(f64::NAN, 0.0)), Err(Error::NonFinite));
        assert_eq!(count_outside(&map, &[Point2D::new(f64::INFINITY, 0.0)]), 1);
    }

    #[test]
    fn rejects_bad_input() {
        let mut p = two_clusters(3);
        p.insert("press".into(), vec![]);
        assert_eq!(build_map(&p, &MapOptions::default()), Err(Error::NoProjections("press".into())));
        let p = two_clusters(3);
        assert!(build_map(&p, &MapOptions { mass_quantile: 0.0, ..MapOptions::default() }).is_err());
        assert!(build_map(&p, &MapOptions { cells_per_axis: 4, ..MapOptions::default() }).is_err());
    }

    #[test]
    fn union_and_dilation() {
        let p = two_clusters(5);
        let plain = build_map(&p, &MapOptions::default()).unwrap();
        let union = plain.per_device_masks().values().fold(Mask::empty(100), |a, m| a.union(m));
        assert_eq!(&union, plain.mask());
        let grown = build_map(&p, &MapOptions { dilate: true, ..MapOptions::default() }).unwrap();
        assert!(grown.mask().count() > plain.mask().count());
        assert!(plain.mask().set_cells().all(|(c, r)| grown.mask().get(c, r)));
    }

    #[test]
    fn degenerate_axis_gets_unit_width() {
        let pts: Vec<Point2D> = (0..20).map(|i| Point2D::new(i as f64, 2.0)).collect();
        let map = build_map(&BTreeMap::from([("a".to_string(), pts.clone())]), &MapOptions { cells_per_axis: 10, mass_quantile: 1.0, ..MapOptions::default() }).unwrap();
        assert!(map.grid().max_c2 > map.grid().min_c2);
        assert_eq!(count_outside(&map, &pts), 0);
    }

    #[test]
    fn rle_round_trip_and_errors() {
        let map = build_map(&two_clusters(6), &MapOptions::default()).unwrap();
        let rle = map.mask().to_rle();
        assert_eq!(Mask::from_rle(100, &rle).unwrap(), *map.mask());
        assert_eq!(Mask::from_rle(2, "0:1,1:2,0:1").unwrap().count(), 2);
        assert!(Mask::from_rle(2, "0:5").is_err());
        assert!(Mask::from_rle(2, "0:3").is_err());
        assert!(Mask::from_rle(2, "2:4").is_err());
        assert!(Mask::from_rle(2, "1-4").is_err());
    }

    #[test]
    fn from_parts_checks_union() {
        let map = build_map(&two_clusters(7), &MapOptions::default()).unwrap();
        let rebuilt = UsageMap::from_parts(*map.grid(), map.per_device_masks().clone(), map.mask().clone(), 0.95, false, None).unwrap();
        assert_eq!(rebuilt, map);
        assert!(UsageMap::from_parts(*map.grid(), map.per_device_masks().clone(), Mask::empty(100), 0.95, false, None).is_err());
    }

    #[test]
    fn model_binding_changes_id() {
        let mut map = build_map(&two_clusters(8), &MapOptions::default()).unwrap();
        let before = map.id();
        map.bind_model(42);
        assert_eq!(map.model_id(), Some(42));
        assert_ne!(before, map.id());
    }

    proptest! {
        #[test]
        fn raising_quantile_only_adds_cells(seed in 0u64..1000, q1 in 0.05f64..1.0, dq in 0.0f64..0.5) {
            let p = two_clusters(seed);
            let q2 = (q1 + dq).min(1.0);
            let lo = build_map(&p, &MapOptions { mass_quantile: q1, ..MapOptions::default() }).unwrap();
            let hi = build_map(&p, &MapOptions { mass_quantile: q2, ..MapOptions::default() }).unwrap();
            for (label, m) in lo.per_device_masks() {
                let h = &hi.per_device_masks()[label];
                prop_assert!(m.set_cells().all(|(c, r)| h.get(c, r)));
            }
        }

        #[test]
        fn count_is_additive(seed in 0u64..1000, split in 0usize..200) {
            let p = two_clusters(seed);
            let map = build_map(&p, &MapOptions { mass_quantile: 0.8, ..MapOptions::default() }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let pts = gaussian_cluster(&mut rng, (5.0, 2.0), 4.0, 200);
            let (a, b) = pts.split_at(split);
            prop_assert_eq!(count_outside(&map, &pts), count_outside(&map, a) + count_outside(&map, b));
            let direct = pts.iter().filter(|p| !map.contains(p).unwrap()).count();
            prop_assert_eq!(count_outside(&map, &pts), direct);
        }
    }
}
