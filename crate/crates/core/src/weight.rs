//! Singular weights `W(x) = prod |x - p_j|^(2 alpha_j) h(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point;

/// Poles `p_j` with integer multiplicities `alpha_j >= 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoleConfig {
    poles: Vec<Point>,
    multiplicities: Vec<u32>,
}

impl PoleConfig {
    pub fn new(poles: Vec<Point>, multiplicities: Vec<u32>) -> Result<Self> {
        if poles.len() != multiplicities.len() {
            return Err(Error::Config(format!(
                "{} poles but {} multiplicities",
                poles.len(),
                multiplicities.len()
            )));
        }
        if let Some(j) = multiplicities.iter().position(|&a| a == 0) {
            return Err(Error::Config(format!(
                "multiplicity of pole {j} must be a positive integer"
            )));
        }
        for (j, p) in poles.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::Config(format!("pole {j} is not finite")));
            }
            for (l, q) in poles.iter().enumerate().skip(j + 1) {
                if p == q {
                    return Err(Error::Config(format!(
                        "poles {j} and {l} coincide at ({}, {}); poles must be pairwise distinct",
                        p[0], p[1]
                    )));
                }
            }
        }
        Ok(PoleConfig {
            poles,
            multiplicities,
        })
    }

    pub fn empty() -> Self {
        PoleConfig::default()
    }

    /// A single pole of multiplicity `alpha` at the origin (`alpha = 0` gives no pole).
    pub fn at_origin(alpha: u32) -> Self {
        if alpha == 0 {
            return PoleConfig::empty();
        }
        PoleConfig {
            poles: vec![[0.0, 0.0]],
            multiplicities: vec![alpha],
        }
    }

    pub fn poles(&self) -> &[Point] {
        &self.poles
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    /// `alpha = sum_j alpha_j`.
    pub fn total_multiplicity(&self) -> u32 {
        self.multiplicities.iter().sum()
    }

    /// Whether the configuration can model collapsing zeroes (`s >= 2`).
    pub fn is_collapsing_model(&self) -> bool {
        self.poles.len() >= 2
    }

    pub fn iter(&self) -> impl Iterator<Item = (Point, u32)> + '_ {
        self.poles
            .iter()
            .copied()
            .zip(self.multiplicities.iter().copied())
    }

    /// `prod_j |x - p_j|^(2 alpha_j)`.
    pub fn product(&self, x: Point) -> f64 {
        self.iter()
            .map(|(p, a)| dist2(x, p).powi(a as i32))
            .product()
    }

    /// `sum_j 2 alpha_j ln|x - p_j|`.
    pub fn log_product(&self, x: Point) -> f64 {
        self.iter().map(|(p, a)| a as f64 * dist2(x, p).ln()).sum()
    }

    /// Gradient of `sum_j 2 alpha_j ln|x - p_j|`.
    pub fn log_gradient(&self, x: Point) -> Point {
        let mut g = [0.0, 0.0];
        for (p, a) in self.iter() {
            let d = [x[0] - p[0], x[1] - p[1]];
            let r2 = d[0] * d[0] + d[1] * d[1];
            g[0] += 2.0 * a as f64 * d[0] / r2;
            g[1] += 2.0 * a as f64 * d[1] / r2;
        }
        g
    }

    /// Poles divided by `tau`: `q_j = p_j / tau`.
    pub fn scaled(&self, tau: f64) -> PoleConfig {
        PoleConfig {
            poles: self
                .poles
                .iter()
                .map(|p| [p[0] / tau, p[1] / tau])
                .collect(),
            multiplicities: self.multiplicities.clone(),
        }
    }

    /// Same poles reordered by nondecreasing modulus (stable in the original order).
    pub fn sorted_by_modulus(&self) -> PoleConfig {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| modulus(self.poles[a]).total_cmp(&modulus(self.poles[b])));
        PoleConfig {
            poles: order.iter().map(|&j| self.poles[j]).collect(),
            multiplicities: order.iter().map(|&j| self.multiplicities[j]).collect(),
        }
    }

    /// `max_j |p_j|`, zero when there are no poles.
    pub fn max_modulus(&self) -> f64 {
        self.poles.iter().map(|&p| modulus(p)).fold(0.0, f64::max)
    }
}

pub(crate) fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

pub(crate) fn modulus(p: Point) -> f64 {
    p[0].hypot(p[1])
}

/// The smooth positive factor `h` of a weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothFactor {
    Constant {
        value: f64,
    },
    /// `1 + amplitude * sin(k . x)`; requires `|amplitude| < 1`.
    Wave {
        amplitude: f64,
        wavevector: [f64; 2],
    },
    /// `inner(scale * x)`.
    Dilated {
        inner: Box<SmoothFactor>,
        scale: f64,
    },
}

impl Default for SmoothFactor {
    fn default() -> Self {
        SmoothFactor::Constant { value: 1.0 }
    }
}

impl SmoothFactor {
    pub fn value(&self, x: Point) -> f64 {
        match self {
            SmoothFactor::Constant { value } => *value,
            SmoothFactor::Wave {
                amplitude,
                wavevector,
            } => 1.0 + amplitude * (wavevector[0] * x[0] + wavevector[1] * x[1]).sin(),
            SmoothFactor::Dilated { inner, scale } => inner.value([scale * x[0], scale * x[1]]),
        }
    }

    pub fn gradient(&self, x: Point) -> Point {
        match self {
            SmoothFactor::Constant { .. } => [0.0, 0.0],
            SmoothFactor::Wave {
                amplitude,
                wavevector,
            } => {
                let c = amplitude * (wavevector[0] * x[0] + wavevector[1] * x[1]).cos();
                [c * wavevector[0], c * wavevector[1]]
            }
            SmoothFactor::Dilated { inner, scale } => {
                let g = inner.gradient([scale * x[0], scale * x[1]]);
                [scale * g[0], scale * g[1]]
            }
        }
    }

    /// Analytic bounds `(a, b, A)` with `a <= h <= b` and `|grad h| <= A`.
    pub fn bounds(&self) -> (f64, f64, f64) {
        match self {
            SmoothFactor::Constant { value } => (*value, *value, 0.0),
            SmoothFactor::Wave {
                amplitude,
                wavevector,
            } => {
                let a = amplitude.abs();
                (1.0 - a, 1.0 + a, a * wavevector[0].hypot(wavevector[1]))
            }
            SmoothFactor::Dilated { inner, scale } => {
                let (a, b, g) = inner.bounds();
                (a, b, g * scale.abs())
            }
        }
    }

    pub fn dilated(&self, scale: f64) -> SmoothFactor {
        match self {
            SmoothFactor::Constant { .. } => self.clone(),
            _ => SmoothFactor::Dilated {
                inner: Box::new(self.clone()),
                scale,
            },
        }
    }
}

/// Probe resolution used to verify the bounds of `h`.
const PROBE: usize = 64;

/// `W(x) = prod_j |x - p_j|^(2 alpha_j) h(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    poles: PoleConfig,
    smooth: SmoothFactor,
    lower: f64,
    upper: f64,
    gradient_bound: f64,
}

impl WeightSpec {
    /// Builds the weight and checks `0 < a <= h <= b` on a 64 x 64 probe grid over `B_probe_radius`.
    pub fn new(poles: PoleConfig, smooth: SmoothFactor, probe_radius: f64) -> Result<Self> {
        let (lower, upper, gradient_bound) = smooth.bounds();
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(Error::Config(format!(
                "smooth factor bounds must satisfy 0 < a <= b, got a = {lower}, b = {upper}"
            )));
        }
        let step = 2.0 * probe_radius / (PROBE - 1) as f64;
        for j in 0..PROBE {
            for i in 0..PROBE {
                let x = [
                    -probe_radius + i as f64 * step,
                    -probe_radius + j as f64 * step,
                ];
                if x[0].hypot(x[1]) > probe_radius {
                    continue;
                }
                let v = smooth.value(x);
                let slack = 1e-12 * upper;
                if !(v >= lower - slack && v <= upper + slack) {
                    return Err(Error::Config(format!(
                        "smooth factor {v} at ({}, {}) violates bounds [{lower}, {upper}]",
                        x[0], x[1]
                    )));
                }
            }
        }
        Ok(WeightSpec {
            poles,
            smooth,
            lower,
            upper,
            gradient_bound,
        })
    }

    /// `W = prod |x - p_j|^(2 alpha_j)` with `h = 1`.
    pub fn pure(poles: PoleConfig) -> Self {
        WeightSpec {
            poles,
            smooth: SmoothFactor::default(),
            lower: 1.0,
            upper: 1.0,
            gradient_bound: 0.0,
        }
    }

    /// Constant weight `W = c` with no poles; `c = 1e-300` is the near-linear sentinel.
    pub fn constant(c: f64) -> Result<Self> {
        WeightSpec::new(
            PoleConfig::empty(),
            SmoothFactor::Constant { value: c },
            1.0,
        )
    }

    pub fn poles(&self) -> &PoleConfig {
        &self.poles
    }

    pub fn smooth(&self) -> &SmoothFactor {
        &self.smooth
    }

    pub fn bounds(&self) -> (f64, f64, f64) {
        (self.lower, self.upper, self.gradient_bound)
    }

    pub fn value(&self, x: Point) -> f64 {
        self.poles.product(x) * self.smooth.value(x)
    }

    pub fn at_origin(&self) -> f64 {
        self.value([0.0, 0.0])
    }

    /// `x . grad W / W`, the radial log-derivative used by Pohozaev area terms.
    pub fn radial_log_derivative(&self, x: Point) -> f64 {
        let gp = self.poles.log_gradient(x);
        let gh = self.smooth.gradient(x);
        let hv = self.smooth.value(x);
        x[0] * (gp[0] + gh[0] / hv) + x[1] * (gp[1] + gh[1] / hv)
    }

    /// Part of [`WeightSpec::radial_log_derivative`] coming from `h` alone: `x . grad h / h`.
    pub fn smooth_radial_log_derivative(&self, x: Point) -> f64 {
        let gh = self.smooth.gradient(x);
        (x[0] * gh[0] + x[1] * gh[1]) / self.smooth.value(x)
    }

    /// Weight seen by `x -> f(tau x)`: poles `p_j / tau` and `h(tau x)`.
    pub fn rescaled(&self, tau: f64) -> WeightSpec {
        WeightSpec {
            poles: self.poles.scaled(tau),
            smooth: self.smooth.dilated(tau),
            lower: self.lower,
            upper: self.upper,
            gradient_bound: self.gradient_bound * tau.abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_and_zero_multiplicity() {
        assert!(PoleConfig::new(vec![[0.1, 0.0], [0.1, 0.0]], vec![1, 1]).is_err());
        assert!(PoleConfig::new(vec![[0.1, 0.0]], vec![0]).is_err());
        assert!(PoleConfig::new(vec![[0.1, 0.0]], vec![1, 2]).is_err());
        let ok = PoleConfig::new(vec![[0.1, 0.0], [-0.1, 0.0]], vec![1, 2]).unwrap();
        assert_eq!(ok.total_multiplicity(), 3);
        assert!(ok.is_collapsing_model());
    }

    #[test]
    fn weight_vanishes_at_poles_and_is_nonnegative() {
        let cfg = PoleConfig::new(vec![[0.2, 0.0], [0.0, -0.3]], vec![1, 2]).unwrap();
        let w = WeightSpec::pure(cfg);
        assert_eq!(w.value([0.2, 0.0]), 0.0);
        assert!(w.value([0.5, 0.5]) > 0.0);
        let expected = 0.04 * 0.09f64.powi(2);
        assert!((w.at_origin() - expected).abs() < 1e-16);
    }

    #[test]
    fn wave_factor_bounds_are_checked() {
        let h = SmoothFactor::Wave {
            amplitude: 0.5,
            wavevector: [3.0, 1.0],
        };
        let w = WeightSpec::new(PoleConfig::empty(), h, 1.0).unwrap();
        assert_eq!(w.bounds().0, 0.5);
        let bad = SmoothFactor::Wave {
            amplitude: 1.5,
            wavevector: [1.0, 0.0],
        };
        assert!(WeightSpec::new(PoleConfig::empty(), bad, 1.0).is_err());
    }

    #[test]
    fn rescaled_weight_matches_change_of_variables() {
        let cfg = PoleConfig::new(vec![[0.02, 0.01], [-0.03, 0.0]], vec![1, 2]).unwrap();
        let h = SmoothFactor::Wave {
            amplitude: 0.3,
            wavevector: [2.0, -1.0],
        };
        let w = WeightSpec::new(cfg, h, 1.0).unwrap();
        let tau = 0.05;
        let w1 = w.rescaled(tau);
        let alpha = w.poles().total_multiplicity() as i32;
        for x in [[0.3, 0.7], [-1.2, 0.4], [5.0, -3.0]] {
            let lhs = w.value([tau * x[0], tau * x[1]]);
            let rhs = tau.powi(2 * alpha) * w1.value(x);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        }
    }

    #[test]
    fn radial_log_derivative_matches_finite_difference() {
        let cfg = PoleConfig::new(vec![[0.2, 0.1]], vec![2]).unwrap();
        let h = SmoothFactor::Wave {
            amplitude: 0.2,
            wavevector: [1.0, 2.0],
        };
        let w = WeightSpec::new(cfg, h, 1.0).unwrap();
        let x = [0.4, -0.3];
        let t = 1e-6;
        let fd = (w.value([x[0] * (1.0 + t), x[1] * (1.0 + t)]).ln()
            - w.value([x[0] * (1.0 - t), x[1] * (1.0 - t)]).ln())
            / (2.0 * t);
        assert!((fd - w.radial_log_derivative(x)).abs() < 1e-7);
    }
}
