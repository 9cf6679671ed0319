use serde::{Deserialize, Serialize};

use crate::error::{PnlError, Result};

/// Default cap on the number of grid nodes a single grid may hold.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 26;

/// Boundary treatment of a box domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Nodes sit on both faces of every axis; boundary values are prescribed.
    Dirichlet,
    /// The box is a torus; node `cells` is identified with node `0`.
    Periodic,
}

/// Structured grid on a box `origin + [0, extent]`.
///
/// Dirichlet grids carry `cells + 1` nodes per axis (both faces included);
/// periodic grids carry `cells` nodes per axis. Nodes are numbered row-major
/// with the first axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    extent: Vec<f64>,
    cells: Vec<usize>,
    origin: Vec<f64>,
    boundary: Boundary,
}

impl GridSpec {
    pub fn new(extent: Vec<f64>, cells: Vec<usize>, boundary: Boundary) -> Result<Self> {
        Self::with_budget(extent, cells, boundary, DEFAULT_NODE_BUDGET)
    }

    /// Unit hypercube `[0,1]^n` with `cells` cells per axis.
    pub fn unit(n: usize, cells: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![1.0; n], vec![cells; n], boundary)
    }

    pub fn with_budget(
        extent: Vec<f64>,
        cells: Vec<usize>,
        boundary: Boundary,
        node_budget: usize,
    ) -> Result<Self> {
        if extent.is_empty() {
            return Err(PnlError::InvalidGrid("dimension must be at least 1".into()));
        }
        if extent.len() != cells.len() {
            return Err(PnlError::InvalidGrid(format!(
                "extent has {} axes but cells has {}",
                extent.len(),
                cells.len()
            )));
        }
        if let Some(e) = extent.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(PnlError::InvalidGrid(format!("extent {e} must be positive and finite")));
        }
        if let Some(c) = cells.iter().find(|c| **c < 4) {
            return Err(PnlError::InvalidGrid(format!("{c} cells on an axis; at least 4 required")));
        }
        let origin = vec![0.0; extent.len()];
        let grid = GridSpec { extent, cells, origin, boundary };
        let nodes =
            (0..grid.dim()).try_fold(1usize, |acc, k| acc.checked_mul(grid.nodes_on_axis(k)));
        match nodes {
            Some(total) if total <= node_budget => Ok(grid),
            Some(total) => Err(PnlError::InvalidGrid(format!(
                "{total} nodes exceed the node budget {node_budget}"
            ))),
            None => Err(PnlError::InvalidGrid("node count overflows usize".into())),
        }
    }

    /// Dirichlet sub-box spanning node ranges `lo[k]..=hi[k]` of this grid.
    ///
    /// Used for restricted results (difference quotients near a Dirichlet
    /// boundary); bypasses the minimum cell count.
    pub(crate) fn window(&self, lo: &[usize], hi: &[usize]) -> GridSpec {
        let dim = self.dim();
        let mut extent = Vec::with_capacity(dim);
        let mut cells = Vec::with_capacity(dim);
        let mut origin = Vec::with_capacity(dim);
        for k in 0..dim {
            let h = self.spacing(k);
            let c = hi[k] - lo[k];
            cells.push(c);
            extent.push(c as f64 * h);
            origin.push(self.origin[k] + lo[k] as f64 * h);
        }
        GridSpec { extent, cells, origin, boundary: Boundary::Dirichlet }
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        // A window with zero cells keeps the parent spacing meaningless; guard it.
        if self.cells[axis] == 0 {
            return 0.0;
        }
        self.extent[axis] / self.cells[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.spacing(k)).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn nodes_on_axis(&self, axis: usize) -> usize {
        match self.boundary {
            Boundary::Dirichlet => self.cells[axis] + 1,
            Boundary::Periodic => self.cells[axis],
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        (0..self.dim()).map(|k| self.nodes_on_axis(k)).collect()
    }

    pub fn node_count(&self) -> usize {
        (0..self.dim()).map(|k| self.nodes_on_axis(k)).product()
    }

    /// Row-major strides (first axis slowest).
    pub fn strides(&self) -> Vec<usize> {
        let dim = self.dim();
        let mut strides = vec![1; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.nodes_on_axis(k + 1);
        }
        strides
    }

    pub fn stride(&self, axis: usize) -> usize {
        ((axis + 1)..self.dim()).map(|k| self.nodes_on_axis(k)).product()
    }

    pub fn multi_index(&self, node: usize, out: &mut [usize]) {
        let mut rest = node;
        for k in (0..self.dim()).rev() {
            let m = self.nodes_on_axis(k);
            out[k] = rest % m;
            rest /= m;
        }
    }

    pub fn index_of(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .fold(0, |acc, (k, &i)| acc * self.nodes_on_axis(k) + i)
    }

    /// Index along `axis` of `node`.
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.stride(axis)) % self.nodes_on_axis(axis)
    }

    pub fn coord(&self, node: usize, out: &mut [f64]) {
        let mut rest = node;
        for k in (0..self.dim()).rev() {
            let m = self.nodes_on_axis(k);
            let i = rest % m;
            rest /= m;
            out[k] = self.origin[k] + i as f64 * self.spacing(k);
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coord(node, &mut x);
        x
    }

    /// Node reached from `node` by `shift` steps along `axis`; wraps on periodic
    /// grids, `None` when it leaves a Dirichlet grid.
    pub fn neighbor(&self, node: usize, axis: usize, shift: isize) -> Option<usize> {
        let m = self.nodes_on_axis(axis) as isize;
        let stride = self.stride(axis);
        let i = ((node / stride) % m as usize) as isize;
        let j = i + shift;
        let j = match self.boundary {
            Boundary::Periodic => j.rem_euclid(m),
            Boundary::Dirichlet if (0..m).contains(&j) => j,
            Boundary::Dirichlet => return None,
        };
        Some((node as isize + (j - i) * stride as isize) as usize)
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        if self.is_periodic() {
            return false;
        }
        (0..self.dim()).any(|k| {
            let i = self.axis_index(node, k);
            i == 0 || i == self.cells[k]
        })
    }

    /// Quadrature weight of a node: the volume of its dual cell inside the box.
    pub fn weight(&self, node: usize) -> f64 {
        let mut w = 1.0;
        for k in 0..self.dim() {
            let h = self.spacing(k);
            match self.boundary {
                Boundary::Periodic => w *= h,
                Boundary::Dirichlet => {
                    let i = self.axis_index(node, k);
                    if self.cells[k] == 0 {
                        continue;
                    }
                    w *= if i == 0 || i == self.cells[k] { 0.5 * h } else { h };
                }
            }
        }
        w
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.node_count()).map(|i| self.weight(i)).collect()
    }

    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    /// Same node layout and geometry (ignores nothing).
    pub fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Box of node indices `lo[k] .. hi[k]` (exclusive upper end) inside a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl Region {
    pub fn full(grid: &GridSpec) -> Self {
        Region { lo: vec![0; grid.dim()], hi: grid.shape() }
    }

    /// Interior box leaving `margin` (fraction of the node count) on each side
    /// of every axis.
    pub fn interior(grid: &GridSpec, margin: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) {
            return Err(PnlError::InvalidRegion(format!("margin {margin} outside [0, 0.5)")));
        }
        let shape = grid.shape();
        let mut lo = Vec::with_capacity(shape.len());
        let mut hi = Vec::with_capacity(shape.len());
        for &m in &shape {
            let cut = (margin * m as f64).ceil() as usize;
            lo.push(cut);
            hi.push(m - cut);
        }
        let region = Region { lo, hi };
        region.validate(grid)?;
        Ok(region)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.lo.len() != grid.dim() || self.hi.len() != grid.dim() {
            return Err(PnlError::InvalidRegion("region dimension differs from grid".into()));
        }
        for k in 0..grid.dim() {
            if self.lo[k] >= self.hi[k] || self.hi[k] > grid.nodes_on_axis(k) {
                return Err(PnlError::InvalidRegion(format!(
                    "axis {k}: range {}..{} outside 0..{}",
                    self.lo[k],
                    self.hi[k],
                    grid.nodes_on_axis(k)
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, grid: &GridSpec, node: usize) -> bool {
        (0..grid.dim()).all(|k| {
            let i = grid.axis_index(node, k);
            i >= self.lo[k] && i < self.hi[k]
        })
    }

    pub fn width(&self, axis: usize) -> usize {
        self.hi[axis] - self.lo[axis]
    }

    /// Node indices of the region in row-major order.
    pub fn nodes(&self, grid: &GridSpec) -> Vec<usize> {
        (0..grid.node_count()).filter(|&i| self.contains(grid, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_bad_grids() {
        assert!(GridSpec::new(vec![1.0], vec![3], Boundary::Periodic).is_err());
        assert!(GridSpec::new(vec![0.0], vec![8], Boundary::Periodic).is_err());
        assert!(GridSpec::new(vec![1.0, 1.0], vec![8], Boundary::Periodic).is_err());
        assert!(GridSpec::with_budget(vec![1.0; 2], vec![64; 2], Boundary::Periodic, 100).is_err());
    }

    #[test]
    fn node_layout() {
        let g = GridSpec::new(vec![1.0, 2.0], vec![4, 8], Boundary::Dirichlet).unwrap();
        assert_eq!(g.shape(), vec![5, 9]);
        assert_eq!(g.strides(), vec![9, 1]);
        let node = g.index_of(&[2, 3]);
        assert_eq!(g.coords(node), vec![0.5, 0.75]);
        assert_eq!(g.neighbor(node, 0, 2), Some(g.index_of(&[4, 3])));
        assert_eq!(g.neighbor(node, 0, 3), None);
        let p = GridSpec::unit(2, 4, Boundary::Periodic).unwrap();
        assert_eq!(p.neighbor(p.index_of(&[3, 0]), 0, 1), Some(p.index_of(&[0, 0])));
        assert_eq!(p.neighbor(p.index_of(&[0, 0]), 1, -1), Some(p.index_of(&[0, 3])));
    }

    #[test]
    fn weights_sum_to_volume() {
        for b in [Boundary::Dirichlet, Boundary::Periodic] {
            let g = GridSpec::new(vec![1.0, 3.0], vec![6, 5], b).unwrap();
            let total: f64 = g.weights().iter().sum();
            assert!((total - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_region() {
        let g = GridSpec::unit(2, 20, Boundary::Periodic).unwrap();
        let r = Region::interior(&g, 0.1).unwrap();
        assert_eq!(r.lo, vec![2, 2]);
        assert_eq!(r.hi, vec![18, 18]);
        assert_eq!(r.nodes(&g).len(), 256);
        assert!(Region::interior(&g, 0.5).is_err());
    }
}
