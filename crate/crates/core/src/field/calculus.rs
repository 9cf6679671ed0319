//! Discrete calculus on structured grids.
//!
//! `gradient` and `divergence` form a staggered pair: the gradient takes
//! forward differences (second-order accurate at the face midpoints) and the
//! divergence takes backward differences, so `divergence(gradient(f))` is the
//! compact `2n+1` point Laplacian and sums of divergences vanish on periodic
//! grids. `central_gradient` is the node-centred alternative. On Dirichlet
//! grids the stencils turn one-sided at the boundary nodes.
//!
//! Gradient fields carry `n * N` components laid out as `i * N + a` for
//! `D_i u^a`.

use crate::error::{PnlError, Result};

use super::grid::{Boundary, GridSpec};
use super::types::Field;

/// Calls `f(node, i)` for every node, `i` being its index along `axis`.
pub(crate) fn for_each_on_axis(grid: &GridSpec, axis: usize, mut f: impl FnMut(usize, usize)) {
    let stride = grid.stride(axis);
    let m = grid.nodes_on_axis(axis);
    let (mut i, mut c) = (0, 0);
    for node in 0..grid.node_count() {
        f(node, i);
        c += 1;
        if c == stride {
            c = 0;
            i += 1;
            if i == m {
                i = 0;
            }
        }
    }
}

/// Forward-difference gradient.
pub fn gradient(f: &Field) -> Field {
    let grid = f.grid();
    let n = grid.dim();
    let nc = f.components();
    let width = n * nc;
    let mut out = vec![0.0; grid.node_count() * width];
    let v = f.values();
    for axis in 0..n {
        let stride = grid.stride(axis);
        let m = grid.nodes_on_axis(axis);
        let ih = 1.0 / grid.spacing(axis);
        for_each_on_axis(grid, axis, |node, i| {
            let (lo, hi) = match grid.boundary() {
                Boundary::Periodic => (node, if i + 1 == m { node + stride - m * stride } else { node + stride }),
                Boundary::Dirichlet if m < 2 => return,
                Boundary::Dirichlet if i + 1 == m => (node - stride, node),
                Boundary::Dirichlet => (node, node + stride),
            };
            for a in 0..nc {
                out[node * width + axis * nc + a] = (v[hi * nc + a] - v[lo * nc + a]) * ih;
            }
        });
    }
    Field::from_parts(grid.clone(), width, out)
}

/// Backward-difference divergence of an `n * N` component field.
pub fn divergence(g: &Field) -> Result<Field> {
    let grid = g.grid();
    let n = grid.dim();
    if g.components() % n != 0 {
        return Err(PnlError::ShapeMismatch(format!(
            "divergence needs a multiple of n = {n} components, got {}",
            g.components()
        )));
    }
    let width = g.components();
    let nc = width / n;
    let v = g.values();
    let mut out = vec![0.0; grid.node_count() * nc];
    for axis in 0..n {
        let stride = grid.stride(axis);
        let m = grid.nodes_on_axis(axis);
        let ih = 1.0 / grid.spacing(axis);
        for_each_on_axis(grid, axis, |node, i| {
            let (lo, hi) = match grid.boundary() {
                Boundary::Periodic => (if i == 0 { node + (m - 1) * stride } else { node - stride }, node),
                Boundary::Dirichlet if m < 2 => return,
                Boundary::Dirichlet if i == 0 => (node, node + stride),
                Boundary::Dirichlet => (node - stride, node),
            };
            for a in 0..nc {
                let c = axis * nc + a;
                out[node * nc + a] += (v[hi * width + c] - v[lo * width + c]) * ih;
            }
        });
    }
    Ok(Field::from_parts(grid.clone(), nc, out))
}

/// Compact second-difference Laplacian; second-order one-sided rows at
/// Dirichlet boundary nodes.
pub fn laplacian(f: &Field) -> Field {
    let grid = f.grid();
    let nc = f.components();
    let v = f.values();
    let mut out = vec![0.0; grid.node_count() * nc];
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        let m = grid.nodes_on_axis(axis);
        let h = grid.spacing(axis);
        let h2 = h * h;
        let ih = 1.0 / h;
        for_each_on_axis(grid, axis, |node, i| {
            for a in 0..nc {
                let at = |j: usize| v[j * nc + a];
                let value = match grid.boundary() {
                    Boundary::Periodic => {
                        let up = if i + 1 == m { node + stride - m * stride } else { node + stride };
                        let down = if i == 0 { node + (m - 1) * stride } else { node - stride };
                        ((at(up) - at(node)) * ih - (at(node) - at(down)) * ih) * ih
                    }
                    Boundary::Dirichlet if i > 0 && i + 1 < m => {
                        ((at(node + stride) - at(node)) * ih - (at(node) - at(node - stride)) * ih) * ih
                    }
                    Boundary::Dirichlet => {
                        let step = |k: usize| if i == 0 { node + k * stride } else { node - k * stride };
                        match m {
                            0..=2 => 0.0,
                            3 => (at(step(0)) - 2.0 * at(step(1)) + at(step(2))) / h2,
                            _ => {
                                (2.0 * at(step(0)) - 5.0 * at(step(1)) + 4.0 * at(step(2)) - at(step(3)))
                                    / h2
                            }
                        }
                    }
                };
                out[node * nc + a] += value;
            }
        });
    }
    Field::from_parts(grid.clone(), nc, out)
}

/// Node-centred gradient: central differences, second-order one-sided rows at
/// Dirichlet boundary nodes.
pub fn central_gradient(f: &Field) -> Field {
    let width = f.grid().dim() * f.components();
    let mut out = vec![0.0; f.node_count() * width];
    central_gradient_into(f.grid(), f.components(), f.values(), &mut out);
    Field::from_parts(f.grid().clone(), width, out)
}

/// [`central_gradient`] on raw node-major values.
pub(crate) fn central_gradient_into(grid: &GridSpec, nc: usize, v: &[f64], out: &mut [f64]) {
    let n = grid.dim();
    let width = n * nc;
    let periodic = grid.is_periodic();
    for axis in 0..n {
        let stride = grid.stride(axis);
        let m = grid.nodes_on_axis(axis);
        let h = grid.spacing(axis);
        let inv = 1.0 / (2.0 * h);
        for base in (0..grid.node_count()).step_by(m * stride) {
            for i in 0..m {
                let here = base + i * stride;
                if !periodic && (i == 0 || i + 1 == m) {
                    let sign = if i == 0 { 1.0 } else { -1.0 };
                    let step = |k: usize| if i == 0 { here + k * stride } else { here - k * stride };
                    for k in 0..stride {
                        for a in 0..nc {
                            let at = |j: usize| v[(j + k) * nc + a];
                            out[(here + k) * width + axis * nc + a] = match m {
                                0 | 1 => 0.0,
                                2 => sign * (at(step(1)) - at(step(0))) / h,
                                _ => sign * (-3.0 * at(step(0)) + 4.0 * at(step(1)) - at(step(2))) / (2.0 * h),
                            };
                        }
                    }
                    continue;
                }
                let up = if i + 1 == m { base } else { here + stride };
                let down = if i == 0 { base + (m - 1) * stride } else { here - stride };
                for k in 0..stride {
                    let o = (here + k) * width + axis * nc;
                    for a in 0..nc {
                        out[o + a] = (v[(up + k) * nc + a] - v[(down + k) * nc + a]) * inv;
                    }
                }
            }
        }
    }
}

/// Integer node shift corresponding to a physical step `h` along `axis`.
pub fn shift_for(grid: &GridSpec, axis: usize, h: f64) -> Result<isize> {
    if axis >= grid.dim() {
        return Err(PnlError::InvalidShift(format!("axis {axis} out of range")));
    }
    if h == 0.0 || !h.is_finite() {
        return Err(PnlError::InvalidShift(format!("step {h} must be nonzero and finite")));
    }
    if h.abs() >= grid.extent()[axis] {
        return Err(PnlError::InvalidShift(format!(
            "|h| = {} not smaller than the extent {}",
            h.abs(),
            grid.extent()[axis]
        )));
    }
    let ratio = h / grid.spacing(axis);
    let s = ratio.round();
    if (ratio - s).abs() > 1e-9 * s.abs().max(1.0) {
        return Err(PnlError::InvalidShift(format!(
            "h = {h} is not a multiple of the spacing {}",
            grid.spacing(axis)
        )));
    }
    Ok(s as isize)
}

/// Difference quotient `(f(x + h e_k) - f(x)) / h`.
///
/// On periodic grids the result lives on the full grid. On Dirichlet grids it
/// is returned on the sub-box where both `x` and `x + h e_k` are nodes.
pub fn diff_quotient(f: &Field, axis: usize, h: f64) -> Result<Field> {
    let grid = f.grid();
    let s = shift_for(grid, axis, h)?;
    let nc = f.components();
    let v = f.values();
    match grid.boundary() {
        Boundary::Periodic => {
            let mut out = vec![0.0; v.len()];
            for node in 0..grid.node_count() {
                let there = grid.neighbor(node, axis, s).expect("periodic neighbour exists");
                for a in 0..nc {
                    out[node * nc + a] = (v[there * nc + a] - v[node * nc + a]) / h;
                }
            }
            Ok(Field::from_parts(grid.clone(), nc, out))
        }
        Boundary::Dirichlet => {
            let shape = grid.shape();
            let mut lo = vec![0usize; grid.dim()];
            let mut hi: Vec<usize> = shape.iter().map(|m| m - 1).collect();
            if s > 0 {
                hi[axis] -= s as usize;
            } else {
                lo[axis] += s.unsigned_abs();
            }
            let window = grid.window(&lo, &hi);
            let mut out = Vec::with_capacity(window.node_count() * nc);
            let mut idx = vec![0usize; grid.dim()];
            for wnode in 0..window.node_count() {
                window.multi_index(wnode, &mut idx);
                for (k, i) in idx.iter_mut().enumerate() {
                    *i += lo[k];
                }
                let node = grid.index_of(&idx);
                let there = grid.neighbor(node, axis, s).expect("window keeps the shift inside");
                for a in 0..nc {
                    out.push((v[there * nc + a] - v[node * nc + a]) / h);
                }
            }
            Ok(Field::from_parts(window, nc, out))
        }
    }
}

/// Exponent `q = p (n + m) / n` of the parabolic embedding of `V^{m,p}`.
pub fn embedding_exponent(m: f64, p: f64, n: usize) -> f64 {
    p * (n as f64 + m) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn field(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Field {
        Field::from_fn(grid, 1, |x, out| out[0] = f(x)).unwrap()
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        for b in [Boundary::Dirichlet, Boundary::Periodic] {
            let g = GridSpec::unit(2, 8, b).unwrap();
            let f = Field::constant(&g, &[3.0, -1.0]).unwrap();
            assert!(gradient(&f).values().iter().all(|v| *v == 0.0));
            assert!(central_gradient(&f).values().iter().all(|v| *v == 0.0));
            assert!(laplacian(&f).values().iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn gradient_of_affine_is_exact() {
        let g = GridSpec::new(vec![2.0, 1.0], vec![8, 5], Boundary::Dirichlet).unwrap();
        let f = field(&g, |x| 3.0 * x[0] - 2.0 * x[1]);
        for grad in [gradient(&f), central_gradient(&f)] {
            for node in 0..g.node_count() {
                assert_relative_eq!(grad.get(node, 0), 3.0, epsilon = 1e-12);
                assert_relative_eq!(grad.get(node, 1), -2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_eigenfunction_factor() {
        let g = GridSpec::unit(1, 32, Boundary::Periodic).unwrap();
        let h = g.spacing(0);
        let f = field(&g, |x| (2.0 * PI * x[0]).sin());
        let lap = laplacian(&f);
        let factor = -(2.0 / (h * h)) * (1.0 - (2.0 * PI * h).cos());
        for node in 0..g.node_count() {
            assert_relative_eq!(lap.get(node, 0), factor * f.get(node, 0), epsilon = 1e-9);
        }
        assert!((factor + 4.0 * PI * PI).abs() < 4.0 * PI * PI * (PI * h).powi(2));
    }

    #[test]
    fn div_grad_is_laplacian_on_periodic_grids() {
        let g = GridSpec::new(vec![1.0, 2.0], vec![8, 6], Boundary::Periodic).unwrap();
        let f = Field::from_fn(&g, 2, |x, out| {
            out[0] = (x[0] * 7.0).sin() * x[1].cos();
            out[1] = (x[0] + x[1]).exp();
        })
        .unwrap();
        let dg = divergence(&gradient(&f)).unwrap();
        assert_eq!(dg.values(), laplacian(&f).values());
    }

    #[test]
    fn periodic_divergence_sums_to_zero() {
        let g = GridSpec::unit(2, 10, Boundary::Periodic).unwrap();
        let vec_field = Field::from_fn(&g, 4, |x, out| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = ((k + 1) as f64 * x[0]).sin() + x[1] * x[1] * k as f64;
            }
        })
        .unwrap();
        let div = divergence(&vec_field).unwrap();
        for a in 0..2 {
            let s: f64 = (0..g.node_count()).map(|i| div.get(i, a)).sum();
            assert!(s.abs() < 1e-10, "sum {s}");
        }
    }

    #[test]
    fn divergence_rejects_bad_width() {
        let g = GridSpec::unit(2, 4, Boundary::Periodic).unwrap();
        assert!(divergence(&Field::zeros(&g, 3)).is_err());
    }

    #[test]
    fn diff_quotient_examples() {
        let g = GridSpec::unit(2, 16, Boundary::Dirichlet).unwrap();
        let h = g.spacing(0);
        let x1 = field(&g, |x| x[0]);
        for s in [1.0, 3.0, -2.0] {
            let q = diff_quotient(&x1, 0, s * h).unwrap();
            assert!(q.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert_eq!(q.grid().shape()[0], 17 - s.abs() as usize);
        }
        let sq = field(&g, |x| x[0] * x[0]);
        let q = diff_quotient(&sq, 0, 2.0 * h).unwrap();
        let wg = q.grid().clone();
        for node in 0..wg.node_count() {
            let x = wg.coords(node);
            assert_relative_eq!(q.get(node, 0), 2.0 * x[0] + 2.0 * h, epsilon = 1e-12);
        }
        let c = Field::constant(&g, &[4.0]).unwrap();
        assert!(diff_quotient(&c, 1, -h).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diff_quotient_rejects_bad_shifts() {
        let g = GridSpec::unit(1, 8, Boundary::Periodic).unwrap();
        let f = Field::zeros(&g, 1);
        assert!(matches!(diff_quotient(&f, 0, 0.0), Err(PnlError::InvalidShift(_))));
        assert!(matches!(diff_quotient(&f, 0, 1.0), Err(PnlError::InvalidShift(_))));
        assert!(matches!(diff_quotient(&f, 0, 0.1), Err(PnlError::InvalidShift(_))));
        assert!(diff_quotient(&f, 0, 0.125).is_ok());
    }

    #[test]
    fn embedding_exponent_examples() {
        assert_eq!(embedding_exponent(2.0, 2.0, 2), 4.0);
        assert_eq!(embedding_exponent(2.0, 2.0, 4), 3.0);
        for n in 1..6 {
            for p in [1.0, 2.5, 7.0] {
                assert!(embedding_exponent(p, p, n) > p);
            }
        }
    }
}
