use crate::error::{PnlError, Result};

use super::grid::GridSpec;

/// `R^N`-valued grid function. Values are stored node-major: the entry for
/// node `i`, component `a` lives at `i * N + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(PnlError::ShapeMismatch("a field needs at least one component".into()));
        }
        let expected = grid.node_count() * components;
        if values.len() != expected {
            return Err(PnlError::ShapeMismatch(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(PnlError::NonFinite(format!(
                "value at node {}, component {}",
                pos / components,
                pos % components
            )));
        }
        Ok(Field { grid, components, values })
    }

    /// Construction without the finiteness scan, for values produced by
    /// operators on finite inputs.
    pub(crate) fn from_parts(grid: GridSpec, components: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count() * components);
        Field { grid, components, values }
    }

    pub fn zeros(grid: &GridSpec, components: usize) -> Self {
        let len = grid.node_count() * components;
        Field::from_parts(grid.clone(), components, vec![0.0; len])
    }

    pub fn constant(grid: &GridSpec, value: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.node_count() * value.len());
        for _ in 0..grid.node_count() {
            values.extend_from_slice(value);
        }
        Field::new(grid.clone(), value.len(), values)
    }

    /// Samples `f(x)` at every node; `f` writes the `N` components into `out`.
    pub fn from_fn<F>(grid: &GridSpec, components: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut values = vec![0.0; grid.node_count() * components];
        let mut x = vec![0.0; grid.dim()];
        for (node, chunk) in values.chunks_mut(components).enumerate() {
            grid.coord(node, &mut x);
            f(&x, chunk);
        }
        Field::new(grid.clone(), components, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    pub fn get(&self, node: usize, component: usize) -> f64 {
        self.values[node * self.components + component]
    }

    /// Euclidean norm of the value at `node`.
    pub fn pointwise_norm(&self, node: usize) -> f64 {
        self.at(node).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.node_count()).map(|i| self.pointwise_norm(i)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn compatible(&self, other: &Field) -> bool {
        self.components == other.components && self.grid == other.grid
    }

    fn ensure_compatible(&self, other: &Field) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(PnlError::ShapeMismatch("fields live on different grids or widths".into()))
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        let values = self.values.iter().map(|v| c * v).collect();
        Field::from_parts(self.grid.clone(), self.components, values)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.ensure_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field::from_parts(self.grid.clone(), self.components, values))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.ensure_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field::from_parts(self.grid.clone(), self.components, values))
    }

    /// Pointwise product of two scalar-per-component fields of equal width.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.ensure_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(Field::from_parts(self.grid.clone(), self.components, values))
    }

    /// Keeps only component `a`.
    pub fn component(&self, a: usize) -> Field {
        let values = self.values.iter().skip(a).step_by(self.components).copied().collect();
        Field::from_parts(self.grid.clone(), 1, values)
    }
}

/// Time-indexed sequence of fields sharing one grid and width.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    frames: Vec<Field>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, frames: Vec<Field>) -> Result<Self> {
        if frames.len() < 2 || times.len() != frames.len() {
            return Err(PnlError::InvalidInput(format!(
                "a trajectory needs at least two frames with matching times ({} times, {} frames)",
                times.len(),
                frames.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !times.iter().all(|t| t.is_finite()) {
            return Err(PnlError::InvalidInput("times must be finite and strictly increasing".into()));
        }
        if frames.iter().any(|f| !f.compatible(&frames[0])) {
            return Err(PnlError::ShapeMismatch("frames differ in grid or width".into()));
        }
        Ok(Trajectory { times, frames })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Field {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &Field {
        self.frames.last().expect("trajectory holds at least two frames")
    }

    pub fn grid(&self) -> &GridSpec {
        self.frames[0].grid()
    }

    pub fn components(&self) -> usize {
        self.frames[0].components()
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn step_sizes(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn scaled(&self, c: f64) -> Trajectory {
        Trajectory { times: self.times.clone(), frames: self.frames.iter().map(|f| f.scaled(c)).collect() }
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<Field>) {
        (self.times, self.frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::grid::Boundary;

    #[test]
    fn rejects_non_finite_values() {
        let g = GridSpec::unit(1, 4, Boundary::Periodic).unwrap();
        let err = Field::new(g.clone(), 1, vec![0.0, f64::NAN, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, PnlError::NonFinite(_)));
        assert!(Field::new(g.clone(), 1, vec![0.0; 3]).is_err());
        assert!(Field::new(g, 0, vec![]).is_err());
    }

    #[test]
    fn trajectory_invariants() {
        let g = GridSpec::unit(1, 4, Boundary::Periodic).unwrap();
        let f = Field::zeros(&g, 1);
        assert!(Trajectory::new(vec![0.0], vec![f.clone()]).is_err());
        assert!(Trajectory::new(vec![0.0, 0.0], vec![f.clone(), f.clone()]).is_err());
        let wide = Field::zeros(&g, 2);
        assert!(Trajectory::new(vec![0.0, 1.0], vec![f.clone(), wide]).is_err());
        let t = Trajectory::new(vec![0.0, 0.5, 1.5], vec![f.clone(), f.clone(), f]).unwrap();
        assert_eq!(t.step_sizes(), vec![0.5, 1.0]);
    }
}
