//! Uniform hyper-cube grid over the (optionally projected) state space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CELLS_PER_DIM: usize = 10;

pub type Cell = Vec<i64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GridRepr", into = "GridRepr")]
pub struct GridGeometry {
    pub lower: Vec<f64>,
    pub width: Vec<f64>,
    pub cells_per_dim: usize,
    /// Occupied cells in lexicographic order; the position is the state id.
    pub occupied: Vec<Cell>,
    index: HashMap<Cell, usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct GridRepr {
    lower: Vec<f64>,
    width: Vec<f64>,
    cells_per_dim: usize,
    occupied: Vec<Cell>,
}

impl From<GridRepr> for GridGeometry {
    fn from(r: GridRepr) -> Self {
        GridGeometry::new(r.lower, r.width, r.cells_per_dim, r.occupied)
    }
}

impl From<GridGeometry> for GridRepr {
    fn from(g: GridGeometry) -> Self {
        GridRepr {
            lower: g.lower,
            width: g.width,
            cells_per_dim: g.cells_per_dim,
            occupied: g.occupied,
        }
    }
}

impl GridGeometry {
    pub fn new(lower: Vec<f64>, width: Vec<f64>, cells_per_dim: usize, mut occupied: Vec<Cell>) -> Self {
        occupied.sort();
        occupied.dedup();
        let mut g = GridGeometry {
            lower,
            width,
            cells_per_dim,
            occupied,
            index: HashMap::new(),
        };
        g.rebuild_index();
        g
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self
            .occupied
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn state_count(&self) -> usize {
        self.occupied.len()
    }

    /// Cell containing `v`. Points inside the fitted bounds are clamped to
    /// the last cell on the upper edge; points outside get indices beyond
    /// `0..cells_per_dim`.
    pub fn cell_of(&self, v: &[f64]) -> Cell {
        let top = self.cells_per_dim as i64 - 1;
        v.iter()
            .zip(self.lower.iter().zip(&self.width))
            .map(|(x, (lo, w))| {
                let raw = ((x - lo) / w).floor();
                let idx = if raw.is_finite() { raw as i64 } else { i64::MAX };
                let upper = lo + w * self.cells_per_dim as f64;
                if idx == top + 1 && *x <= upper {
                    top
                } else {
                    idx
                }
            })
            .collect()
    }

    pub fn state_of_cell(&self, cell: &[i64]) -> Option<usize> {
        self.index.get(cell).copied()
    }

    /// Center of a cell, for display.
    pub fn cell_center(&self, cell: &[i64]) -> Vec<f64> {
        cell.iter()
            .zip(self.lower.iter().zip(&self.width))
            .map(|(&i, (lo, w))| lo + (i as f64 + 0.5) * w)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.width.len() {
            return Err(Error::invalid("grid bounds and widths must have equal positive length"));
        }
        if self.cells_per_dim == 0 {
            return Err(Error::invalid("grid needs at least one cell per dimension"));
        }
        if self.width.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("grid cell widths must be positive"));
        }
        if self.occupied.iter().any(|c| c.len() != self.dim()) {
            return Err(Error::invalid("occupied cell of wrong dimension"));
        }
        Ok(())
    }
}

/// Bounds from the per-dimension min/max of `points`; every cell holding a
/// point becomes a state.
pub fn fit_grid(points: &[Vec<f64>], cells_per_dim: usize) -> Result<GridGeometry> {
    let d = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("grid fit needs at least one point"))?;
    if cells_per_dim == 0 {
        return Err(Error::invalid("grid needs at least one cell per dimension"));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                context: "grid fit input".into(),
                expected: d,
                actual: p.len(),
            });
        }
        crate::error::check_finite(p, || "grid fit input".into())?;
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let width = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| {
            let w = (h - l) / cells_per_dim as f64;
            if w > 0.0 {
                w
            } else {
                1.0
            }
        })
        .collect();
    let mut g = GridGeometry::new(lo, width, cells_per_dim, vec![]);
    let occupied = points.iter().map(|p| g.cell_of(p)).collect();
    g = GridGeometry::new(g.lower, g.width, cells_per_dim, occupied);
    Ok(g)
}
