//! Symmetric Dirichlet operator on a disk grid and the Krylov solvers used by Newton.

use crate::grid::{DiskGrid, Link};

/// Cut arms shorter than this fraction of `h` are lengthened to it.
const MIN_ARM: f64 = 1e-6;

const NONE: u32 = u32::MAX;

/// `-Δ_h` with the symmetric ghost-point closure: a cut arm of length `θh`
/// ending on the circle contributes `(u_P - g) / (θ h^2)` to the diagonal row,
/// full arms the usual `(u_P - u_Q) / h^2`.
#[derive(Clone, Debug)]
pub struct DirichletOperator {
    inv_h2: f64,
    diag: Vec<f64>,
    neighbours: Vec<[u32; 4]>,
    /// Row-wise coefficients `1 / (θ h^2)` of the boundary crossings, as `(crossing, coefficient)`.
    cut: Vec<Vec<(usize, f64)>>,
}

impl DirichletOperator {
    pub fn new(grid: &DiskGrid) -> Self {
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let m = grid.domain().len();
        let mut diag = vec![0.0; m];
        let mut neighbours = vec![[NONE; 4]; m];
        let mut cut = vec![Vec::new(); m];
        for (row, &idx) in grid.domain().iter().enumerate() {
            for (d, link) in grid.links(idx).iter().enumerate() {
                match *link {
                    Link::Node(k) => {
                        diag[row] += inv_h2;
                        neighbours[row][d] =
                            grid.unknown_index(k).expect("linked node is in the domain") as u32;
                    }
                    Link::Boundary { crossing, frac } => {
                        let c = inv_h2 / frac.max(MIN_ARM);
                        diag[row] += c;
                        cut[row].push((crossing, c));
                    }
                }
            }
        }
        DirichletOperator {
            inv_h2,
            diag,
            neighbours,
            cut,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn inv_h2(&self) -> f64 {
        self.inv_h2
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `y = A x` for the homogeneous operator.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (row, out) in y.iter_mut().enumerate() {
            let mut acc = self.diag[row] * x[row];
            for &k in &self.neighbours[row] {
                if k != NONE {
                    acc -= self.inv_h2 * x[k as usize];
                }
            }
            *out = acc;
        }
    }

    /// Boundary contribution `b` such that `-Δ_h u = A u - b`.
    pub fn boundary_rhs(&self, g: &[f64]) -> Vec<f64> {
        self.cut
            .iter()
            .map(|row| row.iter().map(|&(c, coef)| coef * g[c]).sum())
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a Krylov solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final residual estimate relative to the initial one.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for SPD `A`, starting from `x`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: &[f64],
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> KrylovStats {
    let m = b.len();
    let mut r = vec![0.0; m];
    apply(x, &mut r);
    for i in 0..m {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(precond).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let r0 = dot(&r, &r).sqrt();
    if r0 == 0.0 {
        return KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut ap = vec![0.0; m];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / r0;
        if rel <= rtol {
            return KrylovStats {
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        for i in 0..m {
            z[i] = r[i] / precond[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    KrylovStats {
        iterations: max_iter,
        relative_residual: rel,
        converged: false,
    }
}

/// Preconditioned MINRES for symmetric (possibly indefinite) `A` with a
/// positive diagonal preconditioner; solves `A x = b` from `x = 0`.
///
/// The stopping test uses the preconditioned residual norm.
pub fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: &[f64],
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> (Vec<f64>, KrylovStats) {
    let m = b.len();
    let mut x = vec![0.0; m];
    let mut r1 = b.to_vec();
    let mut y: Vec<f64> = r1.iter().zip(precond).map(|(r, d)| r / d).collect();
    let beta1 = dot(&r1, &y).sqrt();
    if beta1 == 0.0 {
        return (
            x,
            KrylovStats {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = vec![0.0; m];
    let mut w2 = vec![0.0; m];
    let mut v = vec![0.0; m];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..m {
            v[i] = s * y[i];
        }
        apply(&v, &mut y);
        if it >= 2 {
            let f = beta / oldb;
            for i in 0..m {
                y[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for i in 0..m {
            y[i] -= f * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        for i in 0..m {
            y[i] = r2[i] / precond[i];
        }
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        for i in 0..m {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        rel = phibar / beta1;
        if rel <= rtol || beta == 0.0 {
            return (
                x,
                KrylovStats {
                    iterations: it,
                    relative_residual: rel,
                    converged: true,
                },
            );
        }
    }
    (
        x,
        KrylovStats {
            iterations: max_iter,
            relative_residual: rel,
            converged: false,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(shift: f64) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            let m = x.len();
            for i in 0..m {
                let mut v = (2.0 - shift) * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < m {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let m = 50;
        let b: Vec<f64> = (0..m).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; m];
        let st = pcg(tridiag(0.0), &vec![2.0; m], &b, &mut x, 1e-12, 500);
        assert!(st.converged);
        let mut ax = vec![0.0; m];
        tridiag(0.0)(&x, &mut ax);
        let err = ax
            .iter()
            .zip(&b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let m = 60;
        let b: Vec<f64> = (0..m).map(|i| 1.0 + (i as f64).cos()).collect();
        // Shifting by 1 moves half of the spectrum below zero.
        let (x, st) = minres(tridiag(1.0), &vec![1.0; m], &b, 1e-12, 2000);
        assert!(st.converged, "{st:?}");
        let mut ax = vec![0.0; m];
        tridiag(1.0)(&x, &mut ax);
        let err = ax
            .iter()
            .zip(&b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }
}
