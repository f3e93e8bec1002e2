//! Phase-space lattices.
//!
//! The spatial lattice is the periodic unit interval split into `N_x` cells,
//! with node `i` at `x_i = i·Δx`. Lookups wrap modulo `N_x`, which is
//! equivalent to whole-line indexing for 1-periodic data.
//!
//! The velocity lattice is the uniform cube `{−J,…,J}³·Δv`. The node count
//! per axis is always odd so `v = 0` is a node and the lattice is symmetric
//! under `v → −v`. Distribution values are stored row-major with the spatial
//! index outermost, then `j₁, j₂, j₃` (j₃ fastest).

use crate::error::{Error, Result};

/// Periodic spatial lattice on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    n_cells: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::NonPositiveDimension {
                name: "n_cells",
                value: n_cells as f64,
            });
        }
        Ok(Self {
            n_cells,
            dx: 1.0 / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Length of the periodic domain.
    pub fn period(&self) -> f64 {
        1.0
    }

    /// Coordinate of node `i` (no wrapping).
    pub fn x(&self, i: i64) -> f64 {
        i as f64 * self.dx
    }

    pub fn wrap(&self, i: i64) -> usize {
        wrap_index(i, self)
    }
}

/// Uniform velocity lattice `{−J,…,J}³·Δv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid {
    j_half: usize,
    dv: f64,
}

impl VelocityGrid {
    pub fn new(j_half: usize, dv: f64) -> Result<Self> {
        if j_half < 1 {
            return Err(Error::NonPositiveDimension {
                name: "j_half",
                value: j_half as f64,
            });
        }
        if !(dv > 0.0 && dv.is_finite()) {
            return Err(Error::NonPositiveDimension {
                name: "dv",
                value: dv,
            });
        }
        Ok(Self { j_half, dv })
    }

    pub fn j_half(&self) -> usize {
        self.j_half
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    /// Node count along one axis, `2J+1`.
    pub fn n_per_axis(&self) -> usize {
        2 * self.j_half + 1
    }

    /// Total node count, `(2J+1)³`.
    pub fn n_nodes(&self) -> usize {
        self.n_per_axis().pow(3)
    }

    pub fn v_max(&self) -> f64 {
        self.j_half as f64 * self.dv
    }

    /// Velocity of axis position `k ∈ [0, 2J]`, i.e. of lattice index `k − J`.
    pub fn axis_value(&self, k: usize) -> f64 {
        (k as i64 - self.j_half as i64) as f64 * self.dv
    }

    pub fn axis_values(&self) -> Vec<f64> {
        (0..self.n_per_axis()).map(|k| self.axis_value(k)).collect()
    }

    /// Flat index of signed lattice index `(j₁, j₂, j₃)`, or `None` outside the box.
    pub fn flat_index(&self, j: [i64; 3]) -> Option<usize> {
        let half = self.j_half as i64;
        let n = self.n_per_axis();
        let mut flat = 0;
        for ja in j {
            if ja.abs() > half {
                return None;
            }
            flat = flat * n + (ja + half) as usize;
        }
        Some(flat)
    }

    /// Signed lattice index of a flat index.
    pub fn lattice_index(&self, flat: usize) -> [i64; 3] {
        let n = self.n_per_axis();
        let half = self.j_half as i64;
        [
            (flat / (n * n)) as i64 - half,
            ((flat / n) % n) as i64 - half,
            (flat % n) as i64 - half,
        ]
    }

    /// Velocity of the node at a flat index.
    pub fn node(&self, flat: usize) -> [f64; 3] {
        let j = self.lattice_index(flat);
        [
            j[0] as f64 * self.dv,
            j[1] as f64 * self.dv,
            j[2] as f64 * self.dv,
        ]
    }

    /// Flat index of `−v_j`.
    pub fn mirror(&self, flat: usize) -> usize {
        self.n_nodes() - 1 - flat
    }

    /// `(1+|v_j|)^q` for every node, in storage order.
    pub fn weights(&self, q: f64) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|flat| {
                let [a, b, c] = self.node(flat);
                (1.0 + (a * a + b * b + c * c).sqrt()).powf(q)
            })
            .collect()
    }
}

/// Builds both lattices; `Δx = 1/n_cells`, `v_max = j_half·dv`.
pub fn make_grids(n_cells: usize, j_half: usize, dv: f64) -> Result<(SpatialGrid, VelocityGrid)> {
    Ok((SpatialGrid::new(n_cells)?, VelocityGrid::new(j_half, dv)?))
}

/// Maps any integer node index onto `[0, N_x)`.
pub fn wrap_index(i: i64, grid: &SpatialGrid) -> usize {
    i.rem_euclid(grid.n_cells as i64) as usize
}

/// Velocity cell volume `Δv³`.
pub fn cell_volume(velocity: &VelocityGrid) -> f64 {
    velocity.dv * velocity.dv * velocity.dv
}

/// Discrete distribution `f^n_{i,j}` on the phase lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionGrid {
    spatial: SpatialGrid,
    velocity: VelocityGrid,
    values: Vec<f64>,
    time_index: usize,
}

/// Relative size of negative entries tolerated as roundoff.
pub const NEGATIVITY_ALLOWANCE: f64 = 1e-14;

impl DistributionGrid {
    pub fn zeros(spatial: SpatialGrid, velocity: VelocityGrid) -> Self {
        Self {
            values: vec![0.0; spatial.n_cells() * velocity.n_nodes()],
            spatial,
            velocity,
            time_index: 0,
        }
    }

    /// Wraps existing values after checking length, finiteness and sign.
    pub fn from_values(
        spatial: SpatialGrid,
        velocity: VelocityGrid,
        values: Vec<f64>,
        time_index: usize,
    ) -> Result<Self> {
        let expected = spatial.n_cells() * velocity.n_nodes();
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        let grid = Self {
            spatial,
            velocity,
            values,
            time_index,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Samples `f(x_i, v_j)` at every lattice node.
    pub fn from_fn(
        spatial: SpatialGrid,
        velocity: VelocityGrid,
        f: impl Fn(f64, [f64; 3]) -> f64 + Sync,
    ) -> Self {
        use rayon::prelude::*;
        let mut grid = Self::zeros(spatial, velocity);
        let n_v = velocity.n_nodes();
        grid.values
            .par_chunks_mut(n_v)
            .enumerate()
            .for_each(|(i, cell)| {
                let x = spatial.x(i as i64);
                for (flat, value) in cell.iter_mut().enumerate() {
                    *value = f(x, velocity.node(flat));
                }
            });
        grid
    }

    /// Checks the storage invariants: all values finite, negatives only at roundoff level.
    pub fn validate(&self) -> Result<()> {
        let mut max_abs = 0.0_f64;
        for (index, &value) in self.values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteInput { index, value });
            }
            max_abs = max_abs.max(value.abs());
        }
        let allowance = NEGATIVITY_ALLOWANCE * max_abs;
        if let Some((index, &value)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, &v)| v < -allowance)
        {
            return Err(Error::NegativeDensity {
                index,
                value,
                allowance,
            });
        }
        Ok(())
    }

    pub fn spatial(&self) -> &SpatialGrid {
        &self.spatial
    }

    pub fn velocity(&self) -> &VelocityGrid {
        &self.velocity
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn set_time_index(&mut self, n: usize) {
        self.time_index = n;
    }

    /// Velocity block of spatial cell `i` (wrapped).
    pub fn cell(&self, i: i64) -> &[f64] {
        let n_v = self.velocity.n_nodes();
        let i = self.spatial.wrap(i);
        &self.values[i * n_v..(i + 1) * n_v]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        let n_v = self.velocity.n_nodes();
        &mut self.values[i * n_v..(i + 1) * n_v]
    }

    pub fn get(&self, i: i64, flat: usize) -> f64 {
        self.cell(i)[flat]
    }

    /// True when both grids live on the same lattices.
    pub fn same_shape(&self, other: &DistributionGrid) -> bool {
        self.spatial == other.spatial && self.velocity == other.velocity
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }
}
