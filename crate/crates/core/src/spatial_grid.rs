//! Uniform hash grid over 3D points for inclusive radius queries.

use std::collections::HashMap;

use crate::geometry::Vec3;

type CellKey = [i64; 3];

/// Grid of item indices keyed by `floor(position / cell_size)`.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cell_size: f64,
    cells: HashMap<CellKey, Vec<usize>>,
    positions: Vec<Vec3>,
}

impl SpatialGrid {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && cell_size.is_finite(), "cell size must be positive");
        Self { cell_size, cells: HashMap::new(), positions: Vec::new() }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn key(&self, p: &Vec3) -> CellKey {
        [
            (p.x / self.cell_size).floor() as i64,
            (p.y / self.cell_size).floor() as i64,
            (p.z / self.cell_size).floor() as i64,
        ]
    }

    /// Inserts a position and returns its index (insertion order).
    pub fn insert(&mut self, p: Vec3) -> usize {
        let idx = self.positions.len();
        self.cells.entry(self.key(&p)).or_default().push(idx);
        self.positions.push(p);
        idx
    }

    pub fn position(&self, idx: usize) -> Vec3 {
        self.positions[idx]
    }

    /// Indices with `|p - center| <= radius`, ascending.
    pub fn query(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        if self.positions.is_empty() || radius.is_nan() || radius < 0.0 {
            return Vec::new();
        }
        // Pad the cell range so points sitting on a cell boundary are never lost
        // to rounding in `center +/- radius`.
        let pad = radius * 1e-9 + 1e-9;
        let lo = self.key(&center.add_scalar(-(radius + pad)));
        let hi = self.key(&center.add_scalar(radius + pad));
        let span = (0..3).map(|a| (hi[a] - lo[a] + 1) as u128).product::<u128>();

        let mut out: Vec<usize> = if span > self.cells.len() as u128 {
            (0..self.positions.len()).filter(|&i| within(&self.positions[i], center, radius)).collect()
        } else {
            let mut found = Vec::new();
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        if let Some(ids) = self.cells.get(&[x, y, z]) {
                            found.extend(ids.iter().copied().filter(|&i| within(&self.positions[i], center, radius)));
                        }
                    }
                }
            }
            found
        };
        out.sort_unstable();
        out
    }

    /// Number of indexed entries across all cells.
    pub fn indexed_count(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }
}

#[inline]
pub fn within(p: &Vec3, center: &Vec3, radius: f64) -> bool {
    (p - center).norm() <= radius
}
