//! Matrix-free assembly of the divergence-form drift operator
//! `u -> div(M Du)` with face-centred coefficients.
//!
//! The face between a node and its successor along axis `i` carries the
//! flux `F_i = sum_c M_{(i,a),c} G_c`, where `G` is the face gradient: the
//! forward difference along `i` and, for `j != i`, the mean of the central
//! differences at the two end nodes. The operator is the backward difference
//! of the face fluxes. With `M = I` this reproduces the compact Laplacian of
//! [`crate::field::laplacian`] bit for bit at every interior node.

use crate::coefficients::CoefficientModel;
use crate::error::{PnlError, Result};
use crate::field::{Field, GridSpec};

const NONE: usize = usize::MAX;

/// Assembled drift operator for one coefficient state.
#[derive(Debug, Clone)]
pub struct DriftOperator {
    grid: GridSpec,
    n: usize,
    nc: usize,
    d: usize,
    h: Vec<f64>,
    /// Successor and predecessor along each axis, `node * n + i`; `NONE`
    /// where the grid ends.
    up: Vec<usize>,
    down: Vec<usize>,
    boundary: Vec<bool>,
    /// Face blocks, `((node * n + i) * nc + a) * d + c`.
    blocks: Vec<f64>,
    /// Aligned parts `M_{(i,a),(i,b)} / h_i`, `(face * nc + a) * nc + b`;
    /// empty when cross terms are present.
    aligned: Vec<f64>,
    inv_h: Vec<f64>,
    /// Constant flux part of a linearized nonlinear drift, `(node * n + i) * nc + a`.
    offset: Option<Vec<f64>>,
    has_cross: bool,
    symmetric: bool,
}

impl DriftOperator {
    /// Assembles `div(D_z A Du)` with `D_z A` frozen at `(x_face, t, u, Du)`.
    /// For linear models `state` is ignored; for nonlinear ones it is the
    /// linearization point and the affine remainder
    /// `A(z) - D_z A z` is kept as a constant flux.
    pub fn assemble(grid: &GridSpec, model: &CoefficientModel, t: f64, state: Option<&[f64]>) -> Result<Self> {
        let n = grid.dim();
        let nc = model.components();
        if model.dim() != n {
            return Err(PnlError::ShapeMismatch(format!(
                "model dimension {} differs from grid dimension {n}",
                model.dim()
            )));
        }
        let d = n * nc;
        let nodes = grid.node_count();
        let mut up = vec![NONE; nodes * n];
        let mut down = vec![NONE; nodes * n];
        for node in 0..nodes {
            for i in 0..n {
                up[node * n + i] = grid.neighbor(node, i, 1).unwrap_or(NONE);
                down[node * n + i] = grid.neighbor(node, i, -1).unwrap_or(NONE);
            }
        }
        let boundary = (0..nodes).map(|k| grid.is_boundary_node(k)).collect();
        let mut op = DriftOperator {
            grid: grid.clone(),
            n,
            nc,
            d,
            h: grid.spacings(),
            up,
            down,
            boundary,
            blocks: vec![0.0; nodes * n * nc * d],
            aligned: Vec::new(),
            inv_h: grid.spacings().iter().map(|h| 1.0 / h).collect(),
            offset: None,
            has_cross: false,
            symmetric: true,
        };
        let nonlinear = !model.is_linear();
        let state = match (nonlinear, state) {
            (true, Some(s)) if s.len() == nodes * nc => Some(s),
            (true, _) => {
                return Err(PnlError::InvalidInput("a nonlinear drift needs the current state".into()));
            }
            (false, _) => None,
        };
        let mut offset = if nonlinear { vec![0.0; nodes * n * nc] } else { Vec::new() };
        let mut x = vec![0.0; n];
        let mut jm = vec![0.0; d * d];
        let mut uf = vec![0.0; nc];
        let mut zf = vec![0.0; d];
        let mut af = vec![0.0; d];
        for node in 0..nodes {
            for i in 0..n {
                let nb = op.up[node * n + i];
                if nb == NONE {
                    continue;
                }
                grid.coord(node, &mut x);
                x[i] += 0.5 * op.h[i];
                match state {
                    None => model.jacobian_into(&x, t, &uf, &zf, &mut jm),
                    Some(s) => {
                        for a in 0..nc {
                            uf[a] = 0.5 * (s[node * nc + a] + s[nb * nc + a]);
                        }
                        op.face_gradient(s, node, i, &mut zf);
                        model.jacobian_into(&x, t, &uf, &zf, &mut jm);
                        model.eval_into(&x, t, &uf, &zf, &mut af);
                        for a in 0..nc {
                            let r = i * nc + a;
                            let lin: f64 = (0..d).map(|c| jm[r * d + c] * zf[c]).sum();
                            offset[(node * n + i) * nc + a] = af[r] - lin;
                        }
                    }
                }
                let base = (node * n + i) * nc * d;
                for a in 0..nc {
                    let r = i * nc + a;
                    op.blocks[base + a * d..base + (a + 1) * d].copy_from_slice(&jm[r * d..(r + 1) * d]);
                }
            }
        }
        if op.blocks.iter().any(|v| !v.is_finite()) || offset.iter().any(|v| !v.is_finite()) {
            return Err(PnlError::ModelEvaluation(format!("{} produced non-finite face coefficients", model.name())));
        }
        op.has_cross = op.scan_cross();
        op.symmetric = !op.has_cross && op.scan_symmetric();
        if !op.has_cross {
            op.aligned = op.aligned_blocks();
        }
        if nonlinear {
            op.offset = Some(offset);
        }
        Ok(op)
    }

    fn scan_cross(&self) -> bool {
        let (n, nc, d) = (self.n, self.nc, self.d);
        (0..self.grid.node_count() * n).any(|face| {
            let i = face % n;
            (0..nc).any(|a| {
                let row = &self.blocks[(face * nc + a) * d..(face * nc + a + 1) * d];
                row.iter().enumerate().any(|(c, v)| c / nc != i && *v != 0.0)
            })
        })
    }

    fn scan_symmetric(&self) -> bool {
        let (n, nc, d) = (self.n, self.nc, self.d);
        (0..self.grid.node_count() * n).all(|face| {
            let i = face % n;
            let b = |a: usize, c: usize| self.blocks[(face * nc + a) * d + i * nc + c];
            (0..nc).all(|a| (0..a).all(|c| b(a, c) == b(c, a)))
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.nc
    }

    /// No coupling between different gradient directions and symmetric
    /// component blocks; then `-L` is symmetric positive semi-definite.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn has_cross_terms(&self) -> bool {
        self.has_cross
    }

    pub fn is_affine(&self) -> bool {
        self.offset.is_some()
    }

    fn aligned_blocks(&self) -> Vec<f64> {
        let (n, nc, d) = (self.n, self.nc, self.d);
        let faces = self.grid.node_count() * n;
        let mut out = vec![0.0; faces * nc * nc];
        for face in 0..faces {
            let i = face % n;
            for a in 0..nc {
                for b in 0..nc {
                    out[(face * nc + a) * nc + b] = self.blocks[(face * nc + a) * d + i * nc + b] * self.inv_h[i];
                }
            }
        }
        out
    }

    /// Difference `(x[hi] - x[lo]) / width` used for the direction-`j`
    /// derivative at `node`: central inside, one-sided where the grid ends.
    fn central(&self, node: usize, j: usize) -> (usize, usize, f64) {
        let (u, w) = (self.up[node * self.n + j], self.down[node * self.n + j]);
        match (w == NONE, u == NONE) {
            (false, false) => (w, u, 2.0 * self.h[j]),
            (true, false) => (node, u, self.h[j]),
            (false, true) => (w, node, self.h[j]),
            (true, true) => (node, node, 1.0),
        }
    }

    fn face_gradient(&self, x: &[f64], node: usize, i: usize, g: &mut [f64]) {
        let (n, nc) = (self.n, self.nc);
        let nb = self.up[node * n + i];
        for j in 0..n {
            if j == i {
                for a in 0..nc {
                    g[i * nc + a] = (x[nb * nc + a] - x[node * nc + a]) / self.h[i];
                }
            } else {
                let (l0, h0, w0) = self.central(node, j);
                let (l1, h1, w1) = self.central(nb, j);
                for a in 0..nc {
                    let c0 = (x[h0 * nc + a] - x[l0 * nc + a]) / w0;
                    let c1 = (x[h1 * nc + a] - x[l1 * nc + a]) / w1;
                    g[j * nc + a] = 0.5 * (c0 + c1);
                }
            }
        }
    }

    /// Face fluxes of `x` into `flux` (`(node * n + i) * nc + a`).
    fn fluxes(&self, x: &[f64], flux: &mut [f64]) {
        if !self.has_cross {
            self.aligned_fluxes(x, flux);
            return;
        }
        let (n, nc, d) = (self.n, self.nc, self.d);
        let mut g = vec![0.0; d];
        for node in 0..self.grid.node_count() {
            for i in 0..n {
                let face = node * n + i;
                let nb = self.up[face];
                if nb == NONE {
                    flux[face * nc..(face + 1) * nc].fill(0.0);
                    continue;
                }
                self.face_gradient(x, node, i, &mut g);
                for a in 0..nc {
                    let row = &self.blocks[(face * nc + a) * d..(face * nc + a + 1) * d];
                    flux[face * nc + a] = row.iter().zip(&g).map(|(m, gc)| m * gc).sum();
                }
            }
        }
    }

    fn aligned_fluxes(&self, x: &[f64], flux: &mut [f64]) {
        let (n, nc) = (self.n, self.nc);
        let nodes = self.grid.node_count();
        let blocks = &self.aligned;
        if nc == 1 {
            for node in 0..nodes {
                let xn = x[node];
                for i in 0..n {
                    let face = node * n + i;
                    let nb = self.up[face];
                    flux[face] = if nb == NONE { 0.0 } else { blocks[face] * (x[nb] - xn) };
                }
            }
            return;
        }
        for node in 0..nodes {
            let xn = &x[node * nc..(node + 1) * nc];
            for i in 0..n {
                let face = node * n + i;
                let nb = self.up[face];
                let f = &mut flux[face * nc..(face + 1) * nc];
                if nb == NONE {
                    f.fill(0.0);
                    continue;
                }
                let xb = &x[nb * nc..(nb + 1) * nc];
                let blk = &blocks[face * nc * nc..(face + 1) * nc * nc];
                for (a, fa) in f.iter_mut().enumerate() {
                    let row = &blk[a * nc..(a + 1) * nc];
                    let mut acc = 0.0;
                    for b in 0..nc {
                        acc += row[b] * (xb[b] - xn[b]);
                    }
                    *fa = acc;
                }
            }
        }
    }

    /// Backward difference of face values; zero rows at Dirichlet boundary nodes.
    fn divergence_of(&self, flux: &[f64], out: &mut [f64]) {
        let (n, nc) = (self.n, self.nc);
        if nc == 1 {
            for (node, o) in out.iter_mut().enumerate() {
                if self.boundary[node] {
                    *o = 0.0;
                    continue;
                }
                let mut acc = 0.0;
                for i in 0..n {
                    let face = node * n + i;
                    acc += (flux[face] - flux[self.down[face] * n + i]) * self.inv_h[i];
                }
                *o = acc;
            }
            return;
        }
        for node in 0..self.grid.node_count() {
            let o = &mut out[node * nc..(node + 1) * nc];
            o.fill(0.0);
            if self.boundary[node] {
                continue;
            }
            for i in 0..n {
                let face = node * n + i;
                let prev = self.down[face] * n + i;
                let ih = self.inv_h[i];
                let here = &flux[face * nc..(face + 1) * nc];
                let there = &flux[prev * nc..(prev + 1) * nc];
                for a in 0..nc {
                    o[a] += (here[a] - there[a]) * ih;
                }
            }
        }
    }

    /// `out = L x` (linear part only). `flux` is scratch of length `nodes * n * nc`.
    pub(crate) fn apply_with(&self, x: &[f64], out: &mut [f64], flux: &mut [f64]) {
        self.fluxes(x, flux);
        self.divergence_of(flux, out);
    }

    pub(crate) fn flux_len(&self) -> usize {
        self.grid.node_count() * self.n * self.nc
    }

    /// `div` of the constant flux of a linearized nonlinear drift.
    pub(crate) fn offset_divergence(&self, out: &mut [f64]) -> bool {
        match &self.offset {
            Some(off) => {
                self.divergence_of(off, out);
                true
            }
            None => false,
        }
    }

    /// Diagonal of `L` from the aligned coefficients; cross-direction
    /// contributions are omitted (they only enter through one-sided rows).
    pub(crate) fn diagonal(&self) -> Vec<f64> {
        let (n, nc, d) = (self.n, self.nc, self.d);
        let mut diag = vec![0.0; self.grid.node_count() * nc];
        for node in 0..self.grid.node_count() {
            if self.boundary[node] {
                continue;
            }
            for i in 0..n {
                let face = node * n + i;
                let prev = self.down[face] * n + i;
                let h2 = self.h[i] * self.h[i];
                for a in 0..nc {
                    let c = i * nc + a;
                    let here = self.blocks[(face * nc + a) * d + c];
                    let there = self.blocks[(prev * nc + a) * d + c];
                    diag[node * nc + a] -= (here + there) / h2;
                }
            }
        }
        diag
    }

    /// `L f` including the constant flux, as a field.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        if !f.grid().same_as(&self.grid) || f.components() != self.nc {
            return Err(PnlError::ShapeMismatch("field does not match the operator".into()));
        }
        let mut flux = vec![0.0; self.flux_len()];
        let mut out = vec![0.0; f.values().len()];
        self.apply_with(f.values(), &mut out, &mut flux);
        if let Some(off) = &self.offset {
            let mut extra = vec![0.0; out.len()];
            self.divergence_of(off, &mut extra);
            out.iter_mut().zip(&extra).for_each(|(o, e)| *o += e);
        }
        Field::new(self.grid.clone(), self.nc, out)
    }

    /// Discrete bilinear form `sum_faces vol F_i(v) (phi(x + h e_i) - phi(x)) / h_i`
    /// for the linear part, which equals `-<L v, phi>` whenever `phi` vanishes
    /// on and next to Dirichlet boundaries.
    pub fn bilinear(&self, v: &[f64], phi: &[f64], flux: &mut [f64]) -> f64 {
        let (n, nc) = (self.n, self.nc);
        self.fluxes(v, flux);
        let vol: f64 = self.h.iter().product();
        let mut acc = 0.0;
        for node in 0..self.grid.node_count() {
            for i in 0..n {
                let face = node * n + i;
                let nb = self.up[face];
                if nb == NONE {
                    continue;
                }
                for a in 0..nc {
                    acc += flux[face * nc + a] * (phi[nb * nc + a] - phi[node * nc + a]) / self.h[i];
                }
            }
        }
        acc * vol
    }
}
