//! Exact solutions of `-Δξ = prod |x - p_j|^(2 alpha_j) e^ξ` and collapsing families of them.

use std::f64::consts::LN_2;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ClosedForm, ScalarField};
use crate::grid::{DiskGrid, Point};
use crate::poly::Polynomial;
use crate::weight::{modulus, PoleConfig, WeightSpec};

/// Largest admissible degree of a developing map.
pub const MAX_DEGREE: usize = 64;

/// Grids produced by [`rescale`] never exceed this multiple of the original radius.
pub const RESCALE_RADIUS_CAP: f64 = 1e3;

/// `ln(1 + a^2)` from `ln a`, without overflow for huge `a`.
pub(crate) fn ln1p_sq_from_log(ln_a: f64) -> f64 {
    if ln_a < 0.0 {
        (2.0 * ln_a).exp().ln_1p()
    } else {
        2.0 * ln_a + (-2.0 * ln_a).exp().ln_1p()
    }
}

fn complex(p: Point) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// `u = ln(8 (1+alpha)^2 lambda^2 / (1 + lambda^2 |x - c|^(2(1+alpha)))^2)`,
/// solving `-Δu = |x - c|^(2 alpha) e^u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialBubble {
    pub alpha: u32,
    pub lambda: f64,
    #[serde(default)]
    pub center: Point,
}

impl RadialBubble {
    pub fn new(alpha: u32, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "bubble amplitude must be positive, got {lambda}"
            )));
        }
        Ok(RadialBubble {
            alpha,
            lambda,
            center: [0.0, 0.0],
        })
    }

    pub fn centered_at(self, center: Point) -> Self {
        RadialBubble { center, ..self }
    }

    /// The weight `|x - c|^(2 alpha)` this bubble solves against.
    pub fn weight(&self) -> WeightSpec {
        let poles = if self.alpha == 0 {
            PoleConfig::empty()
        } else {
            PoleConfig::new(vec![self.center], vec![self.alpha]).expect("single pole is valid")
        };
        WeightSpec::pure(poles)
    }

    /// `8 pi (1 + alpha)`.
    pub fn plane_mass(&self) -> f64 {
        8.0 * std::f64::consts::PI * (1.0 + self.alpha as f64)
    }

    pub fn peak(&self) -> f64 {
        let a1 = 1.0 + self.alpha as f64;
        3.0 * LN_2 + 2.0 * (a1 * self.lambda).ln()
    }

    /// Radius enclosing half of the plane mass: `lambda^(-1/(1+alpha))`.
    pub fn half_mass_radius(&self) -> f64 {
        self.lambda.powf(-1.0 / (1.0 + self.alpha as f64))
    }
}

impl ClosedForm for RadialBubble {
    fn value(&self, x: Point) -> f64 {
        let a1 = 1.0 + self.alpha as f64;
        let rho = (x[0] - self.center[0]).hypot(x[1] - self.center[1]);
        let tail = if rho == 0.0 {
            0.0
        } else {
            ln1p_sq_from_log(self.lambda.ln() + a1 * rho.ln())
        };
        self.peak() - 2.0 * tail
    }

    fn gradient(&self, x: Point) -> Point {
        let a1 = 1.0 + self.alpha as f64;
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let r2 = d[0] * d[0] + d[1] * d[1];
        if r2 == 0.0 {
            return [0.0, 0.0];
        }
        // a^2 / (1 + a^2) with a = lambda rho^(1+alpha).
        let ln_a2 = 2.0 * (self.lambda.ln() + 0.5 * a1 * r2.ln());
        let frac = 1.0 / (1.0 + (-ln_a2).exp());
        let s = -4.0 * a1 * frac / r2;
        [s * d[0], s * d[1]]
    }

    fn hints(&self) -> Vec<Point> {
        vec![self.center]
    }

    fn describe(&self) -> String {
        format!(
            "radial bubble alpha={} lambda={} center=({}, {})",
            self.alpha, self.lambda, self.center[0], self.center[1]
        )
    }
}

/// The flat bubble `ln(e^{xi0} / (1 + (e^{xi0} / 8) w0 |x|^2)^2)`, solving `-ΔU = w0 e^U`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleProfile {
    pub peak: f64,
    pub w0: f64,
}

impl BubbleProfile {
    /// `e^{peak} w0`, the inverse square of the core radius up to the factor 8.
    pub fn concentration(&self) -> f64 {
        (self.peak + self.w0.ln()).exp()
    }
}

impl ClosedForm for BubbleProfile {
    fn value(&self, x: Point) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return self.peak;
        }
        // ln a with a^2 = (e^peak / 8) w0 |x|^2.
        let ln_a = 0.5 * (self.peak + self.w0.ln() - 3.0 * LN_2 + r2.ln());
        self.peak - 2.0 * ln1p_sq_from_log(ln_a)
    }

    fn gradient(&self, x: Point) -> Point {
        let c = self.concentration() / 8.0;
        let r2 = x[0] * x[0] + x[1] * x[1];
        let s = -4.0 * c / (1.0 + c * r2);
        [s * x[0], s * x[1]]
    }

    fn hints(&self) -> Vec<Point> {
        vec![[0.0, 0.0]]
    }

    fn describe(&self) -> String {
        format!("bubble profile peak={} w0={}", self.peak, self.w0)
    }
}

/// `F` with `F' = prod (z - p_j)^(alpha_j)` and `F(0) = 0`.
pub fn polynomial_primitive(cfg: &PoleConfig) -> Result<Polynomial> {
    let degree = 1 + cfg.total_multiplicity() as usize;
    if degree > MAX_DEGREE {
        return Err(Error::Config(format!(
            "developing map degree {degree} exceeds {MAX_DEGREE}"
        )));
    }
    let roots: Vec<(Complex64, u32)> = cfg.iter().map(|(p, a)| (complex(p), a)).collect();
    Ok(Polynomial::from_roots(&roots).primitive())
}

/// How the shift `c` of a developing map is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// `c = F(anchor)`: the blow-up sits at the anchor.
    Anchor(Point),
    /// Explicit complex shift `c`.
    Shift(Point),
}

impl Default for Centering {
    fn default() -> Self {
        Centering::Anchor([0.0, 0.0])
    }
}

/// Polynomial developing map data `(F, lambda, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevelopingMap {
    poles: PoleConfig,
    derivative: Polynomial,
    primitive: Polynomial,
    lambda: f64,
    shift: Complex64,
    centering: Centering,
}

/// Probe points for the product-form check of `F'`.
const PRODUCT_PROBES: [Point; 8] = [
    [0.31, -0.72],
    [-0.55, 0.18],
    [0.93, 0.41],
    [-0.08, -0.96],
    [0.62, 0.67],
    [-0.81, -0.37],
    [0.12, 0.05],
    [-0.44, 0.88],
];

impl DevelopingMap {
    pub fn new(poles: PoleConfig, lambda: f64, centering: Centering) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "developing map amplitude must be positive, got {lambda}"
            )));
        }
        let primitive = polynomial_primitive(&poles)?;
        let derivative = primitive.derivative();
        let scale = poles.max_modulus().max(1e-3);
        for p in PRODUCT_PROBES {
            let z = complex([p[0] * 2.0 * scale, p[1] * 2.0 * scale]);
            let product: Complex64 = poles
                .iter()
                .map(|(q, a)| (z - complex(q)).powu(a))
                .product();
            let expanded = derivative.eval(z);
            if (expanded - product).norm() > 1e-10 * product.norm().max(f64::MIN_POSITIVE) {
                return Err(Error::Config(format!(
                    "expanded derivative {expanded} disagrees with product form {product} at {z}"
                )));
            }
        }
        let shift = match centering {
            Centering::Anchor(a) => primitive.eval(complex(a)),
            Centering::Shift(c) => complex(c),
        };
        Ok(DevelopingMap {
            poles,
            derivative,
            primitive,
            lambda,
            shift,
            centering,
        })
    }

    pub fn poles(&self) -> &PoleConfig {
        &self.poles
    }

    pub fn primitive(&self) -> &Polynomial {
        &self.primitive
    }

    pub fn derivative(&self) -> &Polynomial {
        &self.derivative
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn shift(&self) -> Complex64 {
        self.shift
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    /// `d = deg F = 1 + sum alpha_j`.
    pub fn degree(&self) -> usize {
        self.primitive.degree()
    }

    /// `8 pi d`.
    pub fn plane_mass(&self) -> f64 {
        8.0 * std::f64::consts::PI * self.degree() as f64
    }

    pub fn weight(&self) -> WeightSpec {
        WeightSpec::pure(self.poles.clone())
    }

    /// Preimages of the blow-up: roots of `F - c`.
    pub fn preimages(&self) -> Vec<Point> {
        self.primitive
            .shifted(self.shift)
            .roots()
            .into_iter()
            .map(|z| [z.re, z.im])
            .collect()
    }

    /// `F(z) - c`, evaluated around the anchor to avoid cancellation.
    fn offset(&self, z: Complex64) -> Complex64 {
        match self.centering {
            Centering::Anchor([0.0, 0.0]) => self.primitive.eval(z),
            _ => self.primitive.eval(z) - self.shift,
        }
    }
}

/// `ξ = ln(8 lambda^2 / (1 + |lambda (F(z) - c)|^2)^2)`.
#[derive(Clone, Debug)]
pub struct DevelopingMapField {
    map: DevelopingMap,
    hints: Vec<Point>,
}

impl DevelopingMapField {
    pub fn new(map: DevelopingMap) -> Self {
        let mut hints = map.preimages();
        hints.extend_from_slice(map.poles.poles());
        hints.push([0.0, 0.0]);
        DevelopingMapField { map, hints }
    }

    pub fn map(&self) -> &DevelopingMap {
        &self.map
    }
}

impl ClosedForm for DevelopingMapField {
    fn value(&self, x: Point) -> f64 {
        let lam = self.map.lambda;
        let w = self.map.offset(complex(x));
        let norm = w.norm();
        let tail = if norm == 0.0 {
            0.0
        } else {
            ln1p_sq_from_log(lam.ln() + norm.ln())
        };
        3.0 * LN_2 + 2.0 * lam.ln() - 2.0 * tail
    }

    fn gradient(&self, x: Point) -> Point {
        let lam = self.map.lambda;
        let z = complex(x);
        let w = self.map.offset(z) * lam;
        let dw = self.map.derivative.eval(z) * lam;
        let n2 = w.norm_sqr();
        // conj(w) / (1 + |w|^2), rewritten for |w| > 1.
        let q = if n2 <= 1.0 {
            w.conj() / (1.0 + n2)
        } else {
            w.inv() / (1.0 + 1.0 / n2)
        };
        let g = q * dw * -4.0;
        [g.re, -g.im]
    }

    fn hints(&self) -> Vec<Point> {
        self.hints.clone()
    }

    fn describe(&self) -> String {
        format!(
            "developing map degree={} lambda={} poles={:?}",
            self.map.degree(),
            self.map.lambda,
            self.map.poles.poles()
        )
    }
}

/// The exact field generated by a developing map.
pub fn developing_map_field(grid: Arc<DiskGrid>, map: &DevelopingMap) -> Result<ScalarField> {
    ScalarField::from_closed_form(grid, Arc::new(DevelopingMapField::new(map.clone())))
}

/// The exact radial bubble on `grid`.
pub fn radial_bubble(grid: Arc<DiskGrid>, alpha: u32, lambda: f64) -> Result<ScalarField> {
    ScalarField::from_closed_form(grid, Arc::new(RadialBubble::new(alpha, lambda)?))
}

/// `x -> inner(x - shift)`.
#[derive(Clone, Debug)]
pub struct Translated {
    pub inner: Arc<dyn ClosedForm>,
    pub shift: Point,
}

impl ClosedForm for Translated {
    fn value(&self, x: Point) -> f64 {
        self.inner
            .value([x[0] - self.shift[0], x[1] - self.shift[1]])
    }

    fn gradient(&self, x: Point) -> Point {
        self.inner
            .gradient([x[0] - self.shift[0], x[1] - self.shift[1]])
    }

    fn hints(&self) -> Vec<Point> {
        self.inner
            .hints()
            .into_iter()
            .map(|p| [p[0] + self.shift[0], p[1] + self.shift[1]])
            .collect()
    }

    fn describe(&self) -> String {
        format!(
            "{} translated by ({}, {})",
            self.inner.describe(),
            self.shift[0],
            self.shift[1]
        )
    }
}

/// `x -> inner(tau x) + offset`.
#[derive(Clone, Debug)]
pub struct Rescaled {
    pub inner: Arc<dyn ClosedForm>,
    pub tau: f64,
    pub offset: f64,
}

impl ClosedForm for Rescaled {
    fn value(&self, x: Point) -> f64 {
        self.inner.value([self.tau * x[0], self.tau * x[1]]) + self.offset
    }

    fn gradient(&self, x: Point) -> Point {
        let g = self.inner.gradient([self.tau * x[0], self.tau * x[1]]);
        [self.tau * g[0], self.tau * g[1]]
    }

    fn hints(&self) -> Vec<Point> {
        self.inner
            .hints()
            .into_iter()
            .map(|p| [p[0] / self.tau, p[1] / self.tau])
            .collect()
    }

    fn describe(&self) -> String {
        format!("{} rescaled by tau={}", self.inner.describe(), self.tau)
    }
}

/// `phi(x) = f(tau x) + 2 (alpha + 1) ln tau` on the disk of radius `min(r / tau, 1e3 r)`.
pub fn rescale(f: &ScalarField, tau: f64, alpha: u32) -> Result<ScalarField> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!(
            "rescaling factor must lie in (0, 1], got {tau}"
        )));
    }
    let r = f.grid().radius();
    let radius = (r / tau).min(RESCALE_RADIUS_CAP * r);
    let grid = DiskGrid::shared(radius, f.grid().n())?;
    let offset = 2.0 * (alpha as f64 + 1.0) * tau.ln();
    match f.closed_form() {
        Some(c) => ScalarField::from_closed_form(
            grid,
            Arc::new(Rescaled {
                inner: c.clone(),
                tau,
                offset,
            }),
        ),
        None => ScalarField::from_fn(grid, |x| f.eval([tau * x[0], tau * x[1]]) + offset),
    }
}

/// `u = f + sum_j 2 alpha_j ln|x - p_j|`.
#[derive(Clone, Debug)]
pub struct SingularPart {
    pub inner: Arc<dyn ClosedForm>,
    pub poles: PoleConfig,
}

impl ClosedForm for SingularPart {
    fn value(&self, x: Point) -> f64 {
        self.inner.value(x) + self.poles.log_product(x)
    }

    fn gradient(&self, x: Point) -> Point {
        let g = self.inner.gradient(x);
        let l = self.poles.log_gradient(x);
        [g[0] + l[0], g[1] + l[1]]
    }

    fn hints(&self) -> Vec<Point> {
        let mut h = self.inner.hints();
        h.extend_from_slice(self.poles.poles());
        h
    }

    fn describe(&self) -> String {
        format!("{} with singular part", self.inner.describe())
    }
}

/// A reconstructed singular solution and the nodes excluded from norms.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub field: ScalarField,
    /// Domain nodes that coincide with a pole (value `-inf`).
    pub excluded: Vec<usize>,
}

/// `u = f + sum_j 2 alpha_j ln|x - p_j|`, flagging nodes that sit on a pole.
pub fn singular_part_reconstruct(f: &ScalarField, cfg: &PoleConfig) -> Result<Reconstruction> {
    let field = match f.closed_form() {
        Some(c) => ScalarField::from_closed_form(
            f.grid().clone(),
            Arc::new(SingularPart {
                inner: c.clone(),
                poles: cfg.clone(),
            }),
        )?,
        None => f.map(|x, v| v + cfg.log_product(x))?,
    };
    let excluded = f
        .grid()
        .domain()
        .iter()
        .copied()
        .filter(|&i| field.value(i) == f64::NEG_INFINITY)
        .collect();
    Ok(Reconstruction { field, excluded })
}

/// Amplitude growth along a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum LambdaSchedule {
    /// `lambda_k = lambda0 k^gamma`.
    Power { lambda0: f64, gamma: f64 },
    /// `lambda_k = lambda0 ratio^k`.
    Geometric { lambda0: f64, ratio: f64 },
    /// Explicit values for `k = 1..K`.
    List { values: Vec<f64> },
}

impl LambdaSchedule {
    pub fn at(&self, k: usize) -> Option<f64> {
        match self {
            LambdaSchedule::Power { lambda0, gamma } => Some(lambda0 * (k as f64).powf(*gamma)),
            LambdaSchedule::Geometric { lambda0, ratio } => Some(lambda0 * ratio.powi(k as i32)),
            LambdaSchedule::List { values } => values.get(k.wrapping_sub(1)).copied(),
        }
    }
}

/// Construction rule `p_{j,k} = c_j k^(-e_j) d_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyRule {
    pub exponents: Vec<f64>,
    pub directions: Vec<Point>,
    pub multiplicities: Vec<u32>,
    /// Moduli prefactors `c_j` (default 1).
    #[serde(default)]
    pub coefficients: Vec<f64>,
    pub lambda: LambdaSchedule,
    #[serde(rename = "k_max")]
    pub k: usize,
    #[serde(default)]
    pub centering: Centering,
}

/// One index `k` of a collapsing family.
#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub k: usize,
    /// Poles sorted by nondecreasing modulus.
    pub poles: PoleConfig,
    /// `tau_k = max_j |p_{j,k}|` (zero when there are no poles).
    pub tau: f64,
    pub lambda: f64,
    pub map: DevelopingMap,
}

impl FamilyMember {
    pub fn weight(&self) -> WeightSpec {
        self.map.weight()
    }

    pub fn field(&self, grid: Arc<DiskGrid>) -> Result<ScalarField> {
        developing_map_field(grid, &self.map)
    }

    /// `q_{j,k} = p_{j,k} / tau_k`.
    pub fn normalized_poles(&self) -> Vec<Point> {
        self.poles
            .poles()
            .iter()
            .map(|p| [p[0] / self.tau, p[1] / self.tau])
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct CollapsingFamily {
    pub rule: FamilyRule,
    pub members: Vec<FamilyMember>,
}

impl CollapsingFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.tau).collect()
    }

    /// Pole positions per k, sorted by modulus.
    pub fn pole_tracks(&self) -> Vec<Vec<Point>> {
        self.members
            .iter()
            .map(|m| m.poles.poles().to_vec())
            .collect()
    }

    /// Pole positions per k in rule order, so that index `j` follows the
    /// same pole along the family even when moduli cross.
    pub fn identity_tracks(&self) -> Vec<Vec<Point>> {
        self.members
            .iter()
            .map(|m| self.rule.poles_at(m.k))
            .collect()
    }

    pub fn ks(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.k).collect()
    }
}

impl FamilyRule {
    /// `p_{j,k}` in rule order.
    pub fn poles_at(&self, k: usize) -> Vec<Point> {
        let kf = k as f64;
        (0..self.exponents.len())
            .map(|j| {
                let c = self.coefficients.get(j).copied().unwrap_or(1.0);
                let m = c * kf.powf(-self.exponents[j]);
                [m * self.directions[j][0], m * self.directions[j][1]]
            })
            .collect()
    }
}

/// Builds the family `k = 1..K` from a rule.
pub fn make_family(rule: &FamilyRule) -> Result<CollapsingFamily> {
    let s = rule.exponents.len();
    if rule.directions.len() != s || rule.multiplicities.len() != s {
        return Err(Error::Config(format!(
            "exponents, directions and multiplicities must have equal length ({}, {}, {})",
            s,
            rule.directions.len(),
            rule.multiplicities.len()
        )));
    }
    if !rule.coefficients.is_empty() && rule.coefficients.len() != s {
        return Err(Error::Config(format!(
            "expected {s} coefficients, got {}",
            rule.coefficients.len()
        )));
    }
    if rule.k < 4 {
        return Err(Error::Config(format!(
            "family needs K >= 4, got {}",
            rule.k
        )));
    }
    if let Some(e) = rule.exponents.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Config(format!(
            "scale exponents must be positive, got {e}"
        )));
    }
    if let Some(d) = rule
        .directions
        .iter()
        .find(|d| (modulus(**d) - 1.0).abs() > 1e-9)
    {
        return Err(Error::Config(format!(
            "directions must be unit vectors, got ({}, {})",
            d[0], d[1]
        )));
    }
    if let Some(c) = rule.coefficients.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::Config(format!(
            "pole coefficients must be positive, got {c}"
        )));
    }
    let mut members = Vec::with_capacity(rule.k);
    for k in 1..=rule.k {
        let poles = rule.poles_at(k);
        let cfg = PoleConfig::new(poles, rule.multiplicities.clone())
            .map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("at k = {k}: {msg}")),
                other => other,
            })?
            .sorted_by_modulus();
        let lambda = rule
            .lambda
            .at(k)
            .ok_or_else(|| Error::Config(format!("lambda schedule has no value for k = {k}")))?;
        let map = DevelopingMap::new(cfg.clone(), lambda, rule.centering)?;
        members.push(FamilyMember {
            k,
            tau: cfg.max_modulus(),
            poles: cfg,
            lambda,
            map,
        });
    }
    for w in members.windows(2) {
        if s > 0 && !(w[1].tau < w[0].tau) {
            return Err(Error::Config(format!(
                "tau_k must decrease strictly, but tau_{} = {} and tau_{} = {}",
                w[0].k, w[0].tau, w[1].k, w[1].tau
            )));
        }
        if !(w[1].lambda >= w[0].lambda) {
            return Err(Error::Config(format!(
                "lambda schedule must be nondecreasing, but lambda_{} = {} > lambda_{} = {}",
                w[0].k, w[0].lambda, w[1].k, w[1].lambda
            )));
        }
    }
    Ok(CollapsingFamily {
        rule: rule.clone(),
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bubble_peak_and_gradient() {
        let b = RadialBubble::new(1, 10.0).unwrap();
        assert!((b.value([0.0, 0.0]) - (8.0f64 * 4.0 * 100.0).ln()).abs() < 1e-13);
        let x = [0.3, -0.2];
        let t = 1e-6;
        let fd = (b.value([x[0] + t, x[1]]) - b.value([x[0] - t, x[1]])) / (2.0 * t);
        assert!((fd - b.gradient(x)[0]).abs() < 1e-6);
    }

    #[test]
    fn bubble_value_survives_huge_arguments() {
        let b = RadialBubble::new(2, 1e100).unwrap();
        let v = b.value([1e50, 0.0]);
        assert!(v.is_finite());
    }

    #[test]
    fn bubble_profile_is_a_scaled_radial_bubble() {
        let p = BubbleProfile { peak: 3.0, w0: 0.2 };
        let lam = (p.concentration() / 8.0).sqrt();
        let b = RadialBubble::new(0, lam).unwrap();
        for x in [[0.0, 0.0], [0.1, 0.3], [0.8, -0.5]] {
            assert!((p.value(x) - (b.value(x) - p.w0.ln())).abs() < 1e-12);
            let (g, gb) = (p.gradient(x), b.gradient(x));
            assert!((g[0] - gb[0]).abs() < 1e-10 && (g[1] - gb[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn primitive_examples() {
        let f = polynomial_primitive(&PoleConfig::at_origin(1)).unwrap();
        assert_eq!(f.degree(), 2);
        assert!((f.coeffs()[2].re - 0.5).abs() < 1e-15);
        let big = PoleConfig::new(vec![[0.1, 0.0]], vec![64]).unwrap();
        assert!(polynomial_primitive(&big).is_err());
    }

    #[test]
    fn developing_map_reduces_to_bubble_without_poles() {
        let m = DevelopingMap::new(PoleConfig::empty(), 7.0, Centering::default()).unwrap();
        let f = DevelopingMapField::new(m);
        let b = RadialBubble::new(0, 7.0).unwrap();
        for x in [[0.0, 0.0], [0.2, 0.1], [-0.9, 0.3]] {
            assert!((f.value(x) - b.value(x)).abs() < 1e-12);
            let (g1, g2) = (f.gradient(x), b.gradient(x));
            assert!((g1[0] - g2[0]).abs() < 1e-10 && (g1[1] - g2[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn developing_map_gradient_matches_finite_differences() {
        let cfg = PoleConfig::new(vec![[0.3, 0.1], [-0.2, 0.0]], vec![1, 2]).unwrap();
        let m = DevelopingMap::new(cfg, 3.0, Centering::Anchor([0.05, 0.0])).unwrap();
        let f = DevelopingMapField::new(m);
        let x = [0.4, -0.35];
        let t = 1e-6;
        let g = f.gradient(x);
        let gx = (f.value([x[0] + t, x[1]]) - f.value([x[0] - t, x[1]])) / (2.0 * t);
        let gy = (f.value([x[0], x[1] + t]) - f.value([x[0], x[1] - t])) / (2.0 * t);
        assert!(
            (g[0] - gx).abs() < 1e-6 && (g[1] - gy).abs() < 1e-6,
            "{g:?} vs {gx} {gy}"
        );
    }

    #[test]
    fn family_rule_single_scale() {
        let rule = FamilyRule {
            exponents: vec![2.0, 2.0],
            directions: vec![[1.0, 0.0], [-1.0, 0.0]],
            multiplicities: vec![1, 1],
            coefficients: vec![],
            lambda: LambdaSchedule::Power {
                lambda0: 10.0,
                gamma: 1.0,
            },
            k: 6,
            centering: Centering::default(),
        };
        let fam = make_family(&rule).unwrap();
        for m in &fam.members {
            assert!((m.tau - (m.k as f64).powi(-2)).abs() < 1e-15);
            for q in m.normalized_poles() {
                assert!((modulus(q) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn family_rejects_coinciding_poles() {
        let rule = FamilyRule {
            exponents: vec![1.0, 1.0],
            directions: vec![[1.0, 0.0], [1.0, 0.0]],
            multiplicities: vec![1, 1],
            coefficients: vec![],
            lambda: LambdaSchedule::Geometric {
                lambda0: 1.0,
                ratio: 10.0,
            },
            k: 4,
            centering: Centering::default(),
        };
        let err = make_family(&rule).unwrap_err().to_string();
        assert!(err.contains("pairwise distinct"), "{err}");
    }

    #[test]
    fn rescale_identity_and_peak_shift() {
        let g = DiskGrid::shared(1.0, 33).unwrap();
        let f = radial_bubble(g, 1, 5.0).unwrap();
        let same = rescale(&f, 1.0, 1).unwrap();
        for &i in f.grid().domain() {
            assert_eq!(same.value(i), f.value(i));
        }
        let tau: f64 = 0.1;
        let phi = rescale(&f, tau, 1).unwrap();
        let o = phi.grid().origin();
        assert!((phi.value(o) - (f.value(f.grid().origin()) + 4.0 * tau.ln())).abs() < 1e-13);
        assert!(rescale(&f, 0.0, 1).is_err());
    }
}
