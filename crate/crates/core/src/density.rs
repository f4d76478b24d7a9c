//! Grid densities over projected coordinates and their signed differences.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Fraction of a cell's mass that stays in the cell when smoothing.
pub const HALO_CENTER: f64 = 0.7;
/// Mass each of the 24 cells around a smoothed cell receives.
pub const HALO_NEIGHBOR: f64 = 0.0125;

pub const DEFAULT_RESOLUTION: (usize, usize) = (40, 40);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    /// Bounding box of `points` padded by `pad` times its width and height.
    ///
    /// A degenerate axis is widened to unit length around its midpoint.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>, pad: f64) -> Option<Extent> {
        let mut e: Option<Extent> = None;
        for p in points {
            let cur = e.get_or_insert(Extent {
                x_min: p[0],
                x_max: p[0],
                y_min: p[1],
                y_max: p[1],
            });
            cur.x_min = cur.x_min.min(p[0]);
            cur.x_max = cur.x_max.max(p[0]);
            cur.y_min = cur.y_min.min(p[1]);
            cur.y_max = cur.y_max.max(p[1]);
        }
        let mut e = e?;
        for (lo, hi) in [(&mut e.x_min, &mut e.x_max), (&mut e.y_min, &mut e.y_max)] {
            if *hi - *lo <= 0.0 {
                let mid = 0.5 * (*lo + *hi);
                *lo = mid - 0.5;
                *hi = mid + 0.5;
            }
            let w = *hi - *lo;
            *lo -= pad * w;
            *hi += pad * w;
        }
        Some(e)
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidArgument(format!("degenerate grid extent {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    /// `(rows, cols)`; rows run along y, columns along x.
    pub resolution: (usize, usize),
    pub extent: Extent,
    /// Row-major cell values.
    pub values: Vec<f64>,
    pub sample_count: usize,
    pub smoothed: bool,
}

impl DensityGrid {
    pub fn zeros(resolution: (usize, usize), extent: Extent) -> Self {
        DensityGrid {
            resolution,
            extent,
            values: vec![0.0; resolution.0 * resolution.1],
            sample_count: 0,
            smoothed: false,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.resolution.1 + col]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn bin(v: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    let t = (v - lo) / (hi - lo) * n as f64;
    // a point on an interior edge sits at an integer t; ceil-1 sends it to the
    // lower cell, and the max edge maps to the last cell
    let idx = if t <= 0.0 { 0 } else { (t.ceil() as usize).saturating_sub(1) };
    Some(idx.min(n - 1))
}

/// Bins points into a grid of normalized counts `n / N`.
///
/// Points outside `extent` are not counted in `N`.
pub fn rasterize(points: &[[f64; 2]], extent: Extent, resolution: (usize, usize)) -> Result<DensityGrid> {
    extent.validate()?;
    let (rows, cols) = resolution;
    if rows < 2 || cols < 2 {
        return Err(CoreError::InvalidArgument("grid resolution must be at least 2x2".into()));
    }
    let mut counts = vec![0usize; rows * cols];
    let mut n = 0usize;
    for p in points {
        let (Some(c), Some(r)) = (
            bin(p[0], extent.x_min, extent.x_max, cols),
            bin(p[1], extent.y_min, extent.y_max, rows),
        ) else {
            continue;
        };
        counts[r * cols + c] += 1;
        n += 1;
    }
    let mut grid = DensityGrid::zeros(resolution, extent);
    grid.sample_count = n;
    if n > 0 {
        for (v, c) in grid.values.iter_mut().zip(&counts) {
            *v = *c as f64 / n as f64;
        }
    }
    Ok(grid)
}

/// Spreads 30% of every cell's mass evenly over its 5×5 neighbourhood.
/// Mass that would land outside the grid is dropped.
pub fn halo_smooth(grid: &DensityGrid) -> DensityGrid {
    let (rows, cols) = grid.resolution;
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let m = grid.values[r * cols + c];
            if m == 0.0 {
                continue;
            }
            for dr in -2i64..=2 {
                for dc in -2i64..=2 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                        continue;
                    }
                    let share = if dr == 0 && dc == 0 { HALO_CENTER } else { HALO_NEIGHBOR };
                    out[rr as usize * cols + cc as usize] += share * m;
                }
            }
        }
    }
    DensityGrid {
        resolution: grid.resolution,
        extent: grid.extent,
        values: out,
        sample_count: grid.sample_count,
        smoothed: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffMetadata {
    pub smoothed: bool,
    pub newer_count: usize,
    pub older_count: usize,
}

/// Signed cellwise difference; positive cells are denser in `newer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDiff {
    pub resolution: (usize, usize),
    pub extent: Extent,
    pub values: Vec<f64>,
    pub metadata: DiffMetadata,
}

pub fn density_diff(newer: &DensityGrid, older: &DensityGrid) -> Result<DensityDiff> {
    if newer.resolution != older.resolution || newer.extent != older.extent {
        return Err(CoreError::InvalidArgument(
            "density grids differ in resolution or extent".into(),
        ));
    }
    if newer.smoothed != older.smoothed {
        return Err(CoreError::InvalidArgument(
            "cannot diff a smoothed grid against a raw one".into(),
        ));
    }
    Ok(DensityDiff {
        resolution: newer.resolution,
        extent: newer.extent,
        values: newer.values.iter().zip(&older.values).map(|(a, b)| a - b).collect(),
        metadata: DiffMetadata {
            smoothed: newer.smoothed,
            newer_count: newer.sample_count,
            older_count: older.sample_count,
        },
    })
}

/// Rasterizes two point batches over their shared padded extent and diffs them.
pub fn diff_batches(
    newer: &[[f64; 2]],
    older: &[[f64; 2]],
    resolution: (usize, usize),
    smooth: bool,
) -> Result<DensityDiff> {
    let extent = Extent::around(newer.iter().chain(older), 0.05)
        .ok_or_else(|| CoreError::InvalidArgument("both batches are empty".into()))?;
    let mut a = rasterize(newer, extent, resolution)?;
    let mut b = rasterize(older, extent, resolution)?;
    if smooth {
        a = halo_smooth(&a);
        b = halo_smooth(&b);
    }
    density_diff(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> Extent {
        Extent {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    #[test]
    fn quadrants_split_evenly() {
        let pts = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
        let g = rasterize(&pts, unit(), (2, 2)).unwrap();
        assert_eq!(g.values, vec![0.25; 4]);
    }

    #[test]
    fn single_cell_gets_everything() {
        let g = rasterize(&[[0.1, 0.1], [0.2, 0.15]], unit(), (4, 4)).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        assert_eq!(g.total(), 1.0);
    }

    #[test]
    fn edge_ties_go_to_lower_cell() {
        let g = rasterize(&[[0.5, 0.2], [1.0, 1.0], [0.0, 0.0]], unit(), (2, 2)).unwrap();
        assert_eq!(g.get(0, 0), 2.0 / 3.0);
        assert_eq!(g.get(1, 1), 1.0 / 3.0);
        assert_eq!(g.total(), 1.0);
    }

    #[test]
    fn empty_input_is_zero_grid() {
        let g = rasterize(&[], unit(), (3, 3)).unwrap();
        assert_eq!(g.sample_count, 0);
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn interior_halo() {
        let mut g = DensityGrid::zeros((7, 7), unit());
        g.values[3 * 7 + 3] = 1.0;
        let s = halo_smooth(&g);
        assert_eq!(s.get(3, 3), 0.7);
        for r in 1..6 {
            for c in 1..6 {
                if (r, c) != (3, 3) {
                    assert!((s.get(r, c) - 0.0125).abs() < 1e-15);
                }
            }
        }
        assert!((s.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_halo_loses_mass() {
        let mut g = DensityGrid::zeros((6, 6), unit());
        g.values[0] = 1.0;
        let s = halo_smooth(&g);
        assert_eq!(s.get(0, 0), 0.7);
        // 3x3 in-bounds block minus the centre
        assert!((s.total() - (0.7 + 8.0 * 0.0125)).abs() < 1e-12);
        assert!(s.total() < 1.0);
    }

    #[test]
    fn zero_grid_smooths_to_zero() {
        let g = DensityGrid::zeros((5, 5), unit());
        assert!(halo_smooth(&g).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diff_signs() {
        let left = rasterize(&[[0.1, 0.5]], unit(), (2, 2)).unwrap();
        let right = rasterize(&[[0.9, 0.5]], unit(), (2, 2)).unwrap();
        let d = density_diff(&left, &right).unwrap();
        assert!(d.values[0] > 0.0 && d.values[1] < 0.0);
        let same = density_diff(&left, &left).unwrap();
        assert!(same.values.iter().all(|v| *v == 0.0));
        let other = rasterize(&[], unit(), (3, 3)).unwrap();
        assert!(density_diff(&left, &other).is_err());
    }

    fn points() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| [a, b]), 1..200)
    }

    proptest! {
        #[test]
        fn rasterize_conserves_mass(pts in points()) {
            let g = rasterize(&pts, unit(), (9, 7)).unwrap();
            let counts: usize = g.values.iter().map(|v| (v * pts.len() as f64).round() as usize).sum();
            prop_assert_eq!(counts, pts.len());
            prop_assert!((g.total() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn raw_diff_sums_to_zero_and_is_antisymmetric(a in points(), b in points()) {
            let e = unit();
            let ga = rasterize(&a, e, (6, 6)).unwrap();
            let gb = rasterize(&b, e, (6, 6)).unwrap();
            let ab = density_diff(&ga, &gb).unwrap();
            let ba = density_diff(&gb, &ga).unwrap();
            for (x, y) in ab.values.iter().zip(&ba.values) {
                prop_assert_eq!(*x, -*y);
            }
            prop_assert!(ab.values.iter().sum::<f64>().abs() < 1e-12);
        }

        #[test]
        fn smoothing_is_linear(a in points(), b in points(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
            let e = unit();
            let ga = rasterize(&a, e, (8, 8)).unwrap();
            let gb = rasterize(&b, e, (8, 8)).unwrap();
            let mut mix = ga.clone();
            for (m, (x, y)) in mix.values.iter_mut().zip(ga.values.iter().zip(&gb.values)) {
                *m = s * x + t * y;
            }
            let lhs = halo_smooth(&mix);
            let (sa, sb) = (halo_smooth(&ga), halo_smooth(&gb));
            for i in 0..lhs.values.len() {
                prop_assert!((lhs.values[i] - (s * sa.values[i] + t * sb.values[i])).abs() < 1e-12);
            }
        }
    }
}
