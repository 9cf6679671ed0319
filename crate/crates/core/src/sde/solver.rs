//! Jacobi-preconditioned Krylov solvers for matrix-free operators.

use serde::Serialize;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&mut self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    /// `|b - A x| / |b|` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
/// `inv_diag` holds the inverse Jacobi diagonal; `x` is the initial guess.
pub fn cg<A: LinearOperator>(
    op: &mut A,
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> SolveStats {
    let len = op.dim();
    let bnorm = norm(b);
    let mut stats = SolveStats { method: Method::Cg, iterations: 0, relative_residual: 0.0, converged: true };
    if bnorm == 0.0 {
        x.fill(0.0);
        return stats;
    }
    let mut r = vec![0.0; len];
    op.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; len];
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / bnorm;
    while res > tol && stats.iterations < max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..len {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        stats.iterations += 1;
        res = norm(&r) / bnorm;
        if res <= tol {
            break;
        }
        for k in 0..len {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..len {
            p[k] = z[k] + beta * p[k];
        }
    }
    stats.relative_residual = res;
    stats.converged = res <= tol;
    stats
}

/// Right-preconditioned BiCGSTAB for general nonsingular `A`.
pub fn bicgstab<A: LinearOperator>(
    op: &mut A,
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> SolveStats {
    let len = op.dim();
    let bnorm = norm(b);
    let mut stats = SolveStats { method: Method::BiCgStab, iterations: 0, relative_residual: 0.0, converged: true };
    if bnorm == 0.0 {
        x.fill(0.0);
        return stats;
    }
    let mut r = vec![0.0; len];
    op.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; len];
    let mut p = vec![0.0; len];
    let mut y = vec![0.0; len];
    let mut s = vec![0.0; len];
    let mut zs = vec![0.0; len];
    let mut t = vec![0.0; len];
    let mut res = norm(&r) / bnorm;
    while res > tol && stats.iterations < max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..len {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
            y[k] = p[k] * inv_diag[k];
        }
        op.apply(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        for k in 0..len {
            s[k] = r[k] - alpha * v[k];
        }
        stats.iterations += 1;
        if norm(&s) / bnorm <= tol {
            for k in 0..len {
                x[k] += alpha * y[k];
            }
            r.copy_from_slice(&s);
            res = norm(&r) / bnorm;
            break;
        }
        for k in 0..len {
            zs[k] = s[k] * inv_diag[k];
        }
        op.apply(&zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..len {
            x[k] += alpha * y[k] + omega * zs[k];
            r[k] = s[k] - omega * t[k];
        }
        res = norm(&r) / bnorm;
    }
    stats.relative_residual = res;
    stats.converged = res <= tol;
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tridiagonal `[-a, 2 + c, -b]` test matrix.
    struct Tri {
        n: usize,
        a: f64,
        b: f64,
        c: f64,
    }

    impl LinearOperator for Tri {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply(&mut self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                let mut v = (2.0 + self.c) * x[i];
                if i > 0 {
                    v -= self.a * x[i - 1];
                }
                if i + 1 < self.n {
                    v -= self.b * x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    fn check(op: &mut Tri, x: &[f64], b: &[f64]) {
        let mut y = vec![0.0; x.len()];
        op.apply(x, &mut y);
        let err: f64 = y.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-9 * norm(b));
    }

    #[test]
    fn cg_solves_spd() {
        let mut op = Tri { n: 200, a: 1.0, b: 1.0, c: 0.1 };
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut x = vec![0.0; 200];
        let st = cg(&mut op, &vec![1.0 / 2.1; 200], &b, &mut x, 1e-12, 2000);
        assert!(st.converged);
        check(&mut op, &x, &b);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let mut op = Tri { n: 150, a: 1.3, b: 0.6, c: 0.5 };
        let b: Vec<f64> = (0..150).map(|i| 1.0 + (i as f64).cos()).collect();
        let mut x = vec![0.0; 150];
        let st = bicgstab(&mut op, &vec![1.0 / 2.5; 150], &b, &mut x, 1e-12, 1500);
        assert!(st.converged, "{st:?}");
        check(&mut op, &x, &b);
    }

    #[test]
    fn zero_rhs() {
        let mut op = Tri { n: 4, a: 1.0, b: 1.0, c: 0.0 };
        let mut x = vec![1.0; 4];
        let st = cg(&mut op, &[0.5; 4], &[0.0; 4], &mut x, 1e-10, 40);
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(st.iterations, 0);
    }
}
