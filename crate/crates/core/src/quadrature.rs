//! Adaptive Gauss–Kronrod quadrature on intervals and on disks in polar coordinates.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::Point;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

/// Integral value with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Nodes and weights of the composite 15-point Kronrod rule on `[a, b]`.
pub(crate) fn kronrod_rule(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let width = (b - a) / panels as f64;
    let hl = 0.5 * width;
    let mut rule = Vec::with_capacity(15 * panels);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * width;
        rule.push((c, WGK[7] * hl));
        for k in 0..7 {
            rule.push((c - hl * XGK[k], WGK[k] * hl));
            rule.push((c + hl * XGK[k], WGK[k] * hl));
        }
    }
    rule
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_k = kron.abs();
    let mut fv = [0.0; 14];
    for k in 0..7 {
        let dx = hl * XGK[k];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv[2 * k] = f1;
        fv[2 * k + 1] = f2;
        kron += WGK[k] * (f1 + f2);
        abs_k += WGK[k] * (f1.abs() + f2.abs());
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut asc = WGK[7] * (fc - mean).abs();
    for k in 0..7 {
        asc += WGK[k] * ((fv[2 * k] - mean).abs() + (fv[2 * k + 1] - mean).abs());
    }
    let result = kron * hl;
    let res_asc = asc * hl.abs();
    let res_abs = abs_k * hl.abs();
    let mut err = ((kron - gauss) * hl).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7–K15 integration of `f` over `[points[0], points[last]]`.
///
/// Interior entries of `points` are used as initial breakpoints; they need not be sorted.
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], settings: &QuadSettings) -> Estimate {
    let mut pts: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * a.abs().max(b.abs()));
    if pts.len() < 2 {
        return Estimate {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let mut heap = BinaryHeap::with_capacity(pts.len() * 2);
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in pts.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let limit = settings.max_intervals.max(heap.len());
    let mut converged = false;
    loop {
        let tol = settings.abs_tol.max(settings.rel_tol * total.abs());
        if total_err <= tol {
            converged = true;
            break;
        }
        if heap.len() >= limit {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted at machine resolution.
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed accumulated cancellation from the running totals.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Estimate {
        value,
        error,
        converged,
    }
}

/// Levels of geometric grading placed around each hint.
const GRADING_LEVELS: i32 = 36;

fn graded_breaks(centre: f64, scale: f64, lo: f64, hi: f64, out: &mut Vec<f64>) {
    if centre >= lo && centre <= hi {
        out.push(centre);
    }
    let mut d = scale;
    for _ in 0..GRADING_LEVELS {
        for x in [centre - d, centre + d] {
            if x > lo && x < hi {
                out.push(x);
            }
        }
        d *= 0.5;
    }
}

/// Integral of `f` over the annulus `rho_min <= |x| <= rho_max`, in polar coordinates.
///
/// `hints` are points where the integrand may be sharply peaked or vanish
/// (blow-up centres, weight zeros); radial and angular breakpoints are
/// graded geometrically toward each of them and toward the origin.
pub fn polar_integral<F>(
    f: F,
    rho_min: f64,
    rho_max: f64,
    hints: &[Point],
    settings: &QuadSettings,
) -> Estimate
where
    F: Fn(Point) -> f64,
{
    if rho_max <= rho_min {
        return Estimate {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let mut radial = vec![rho_min, rho_max];
    graded_breaks(0.0, rho_max, rho_min, rho_max, &mut radial);
    let polar_hints: Vec<(f64, f64)> = hints
        .iter()
        .map(|p| (p[0].hypot(p[1]), p[1].atan2(p[0])))
        .collect();
    for &(r, _) in &polar_hints {
        if r > 0.0 {
            graded_breaks(
                r,
                r.max(rho_max - rho_min) * 0.5,
                rho_min,
                rho_max,
                &mut radial,
            );
        }
    }

    let inner = QuadSettings {
        abs_tol: settings.abs_tol / (2.0 * PI * rho_max.max(1.0)),
        rel_tol: settings.rel_tol * 0.1,
        max_intervals: settings.max_intervals,
    };
    let inner_flag = std::cell::Cell::new(true);
    let ring = |rho: f64| -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        let mut angles = Vec::with_capacity(16);
        for k in 0..=8 {
            angles.push(-PI + k as f64 * PI / 4.0);
        }
        for &(r, th) in &polar_hints {
            if r == 0.0 {
                continue;
            }
            let gap = (rho - r).abs();
            if gap < rho {
                let scale = (gap / rho).max(1e-13);
                // Angular grading around the hint direction, wrapped into (-pi, pi].
                let mut d = scale;
                angles.push(th);
                while d < PI {
                    for a in [th - d, th + d] {
                        let w = (a + PI).rem_euclid(2.0 * PI) - PI;
                        angles.push(w);
                    }
                    d *= 2.0;
                }
            }
        }
        let est = integrate(|t: f64| f([rho * t.cos(), rho * t.sin()]), &angles, &inner);
        if !est.converged {
            inner_flag.set(false);
        }
        rho * est.value
    };
    let mut out = integrate(ring, &radial, settings);
    out.converged &= inner_flag.get();
    out
}

/// Integral of `f` over the disk `B_rho`.
pub fn disk_integral<F>(f: F, rho: f64, hints: &[Point], settings: &QuadSettings) -> Estimate
where
    F: Fn(Point) -> f64,
{
    polar_integral(f, 0.0, rho, hints, settings)
}

/// Periodic trapezoidal rule on the circle of radius `rho`: returns `∮ f dσ`.
pub fn circle_trapezoid<F: Fn(Point) -> f64>(f: F, rho: f64, samples: usize) -> f64 {
    let m = samples.max(1);
    let dt = 2.0 * PI / m as f64;
    let sum: f64 = (0..m)
        .map(|k| {
            let t = k as f64 * dt;
            f([rho * t.cos(), rho * t.sin()])
        })
        .sum();
    sum * dt * rho
}
