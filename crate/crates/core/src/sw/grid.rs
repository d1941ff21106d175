use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cell-centred grid on `[x_min, x_max] × [y_min, y_max]`.
///
/// Node `(i, j)` (zero-based, `i` along x) sits at `(x_min + iΔx, y_min + jΔy)`
/// with `Δx = (x_max - x_min)/N_x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwGrid {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SwGrid {
    pub fn new(nx: usize, ny: usize, x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        let g = SwGrid {
            nx,
            ny,
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square cells of side `delta` with the origin at zero.
    pub fn uniform(nx: usize, ny: usize, delta: f64) -> Result<Self> {
        Self::new(nx, ny, (0.0, nx as f64 * delta), (0.0, ny as f64 * delta))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidConfig("grid needs at least one cell per direction".into()));
        }
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(Error::InvalidConfig("grid bounds must satisfy min < max".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat index of node `(i, j)` inside one state block.
    pub fn flat(&self, i: usize, j: usize) -> usize {
        j + self.ny * i
    }
}

/// Cell-centred scalar field with a one-cell ghost layer, stored
/// column-major over `(N_y + 2) × (N_x + 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl GridField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        GridField {
            nx,
            ny,
            data: vec![0.0; (nx + 2) * (ny + 2)],
        }
    }

    /// Interior values from a column-major `N_y × N_x` slice; ghosts are zero.
    pub fn from_interior(nx: usize, ny: usize, values: &[f64]) -> Result<Self> {
        crate::error::check_len("grid field", nx * ny, values.len())?;
        let mut f = Self::zeros(nx, ny);
        for i in 0..nx {
            let col = f.column_offset(i as isize);
            f.data[col + 1..col + 1 + ny].copy_from_slice(&values[i * ny..(i + 1) * ny]);
        }
        Ok(f)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    fn column_offset(&self, i: isize) -> usize {
        (i + 1) as usize * (self.ny + 2)
    }

    /// Index into the padded storage; `i ∈ [-1, N_x]`, `j ∈ [-1, N_y]`.
    #[inline]
    pub fn idx(&self, i: isize, j: isize) -> usize {
        self.column_offset(i) + (j + 1) as usize
    }

    #[inline]
    pub fn get(&self, i: isize, j: isize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: isize, j: isize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn padded(&self) -> &[f64] {
        &self.data
    }

    pub fn interior(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for i in 0..self.nx {
            let col = self.column_offset(i as isize);
            out.extend_from_slice(&self.data[col + 1..col + 1 + self.ny]);
        }
        out
    }

    pub fn interior_iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nx).flat_map(move |i| (0..self.ny).map(move |j| self.get(i as isize, j as isize)))
    }

    pub fn sum_interior(&self) -> f64 {
        self.interior_iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_cell_sizes() {
        let g = SwGrid::new(4, 2, (10.0, 30.0), (-1.0, 1.0)).unwrap();
        assert_eq!(g.dx(), 5.0);
        assert_eq!(g.dy(), 1.0);
        assert_eq!(g.x(0), 10.0);
        assert_eq!(g.y(1), 0.0);
        assert!(SwGrid::new(4, 2, (30.0, 10.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn interior_round_trip() {
        let vals: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let f = GridField::from_interior(4, 3, &vals).unwrap();
        assert_eq!(f.interior(), vals);
        assert_eq!(f.get(1, 2), 5.0);
        assert_eq!(f.get(-1, 0), 0.0);
    }
}
