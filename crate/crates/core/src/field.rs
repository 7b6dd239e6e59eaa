//! Scalar fields sampled on a [`DiskGrid`], optionally backed by a closed form.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiskGrid, Link, Point};

/// An analytic field that can be evaluated anywhere in its domain.
pub trait ClosedForm: Send + Sync + fmt::Debug {
    fn value(&self, x: Point) -> f64;

    fn gradient(&self, x: Point) -> Point;

    /// Points where the field concentrates or the weight vanishes; quadrature grades toward them.
    fn hints(&self) -> Vec<Point> {
        Vec::new()
    }

    fn describe(&self) -> String;
}

/// `f = c`. `c = -inf` is the empty field (`e^f = 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant(pub f64);

impl ClosedForm for Constant {
    fn value(&self, _: Point) -> f64 {
        self.0
    }

    fn gradient(&self, _: Point) -> Point {
        [0.0, 0.0]
    }

    fn describe(&self) -> String {
        format!("constant {}", self.0)
    }
}

type ValueFn = dyn Fn(Point) -> f64 + Send + Sync;
type GradientFn = dyn Fn(Point) -> Point + Send + Sync;

/// A closed form assembled from a value and a gradient callback.
#[derive(Clone)]
pub struct Analytic {
    name: String,
    value: Arc<ValueFn>,
    gradient: Arc<GradientFn>,
    hints: Vec<Point>,
}

impl Analytic {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Point) -> Point + Send + Sync + 'static,
    ) -> Self {
        Analytic {
            name: name.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hints: Vec::new(),
        }
    }

    pub fn with_hints(mut self, hints: Vec<Point>) -> Self {
        self.hints = hints;
        self
    }
}

impl fmt::Debug for Analytic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Analytic")
            .field("name", &self.name)
            .finish()
    }
}

impl ClosedForm for Analytic {
    fn value(&self, x: Point) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: Point) -> Point {
        (self.gradient)(x)
    }

    fn hints(&self) -> Vec<Point> {
        self.hints.clone()
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// Values at the domain nodes of a grid (`NaN` elsewhere), values at the
/// boundary crossings when known, and an optional closed form.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<DiskGrid>,
    values: Vec<f64>,
    boundary: Option<Vec<f64>>,
    closed: Option<Arc<dyn ClosedForm>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("radius", &self.grid.radius())
            .field("n", &self.grid.n())
            .field("closed", &self.closed)
            .finish()
    }
}

fn admissible(v: f64) -> bool {
    !v.is_nan() && v != f64::INFINITY
}

impl ScalarField {
    /// Samples a closed form at every domain node and boundary crossing.
    pub fn from_closed_form(grid: Arc<DiskGrid>, closed: Arc<dyn ClosedForm>) -> Result<Self> {
        let cf = closed.clone();
        let mut field = Self::sample(grid, move |x| cf.value(x))?;
        field.closed = Some(closed);
        Ok(field)
    }

    /// Samples `f` without keeping it as a closed form.
    pub fn from_fn(grid: Arc<DiskGrid>, f: impl Fn(Point) -> f64 + Sync) -> Result<Self> {
        Self::sample(grid, f)
    }

    fn sample(grid: Arc<DiskGrid>, f: impl Fn(Point) -> f64 + Sync) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        let sampled: Vec<f64> = grid
            .domain()
            .par_iter()
            .map(|&idx| f(grid.point(idx)))
            .collect();
        for (&idx, v) in grid.domain().iter().zip(sampled) {
            values[idx] = v;
        }
        let boundary: Vec<f64> = grid.crossings().par_iter().map(|c| f(c.point)).collect();
        Self::from_values(grid, values, Some(boundary))
    }

    /// Wraps raw node values (`n * n`, row-major; exterior entries are ignored).
    pub fn from_values(
        grid: Arc<DiskGrid>,
        mut values: Vec<f64>,
        boundary: Option<Vec<f64>>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Data(format!(
                "expected {} node values, got {}",
                grid.len(),
                values.len()
            )));
        }
        for (idx, v) in values.iter_mut().enumerate() {
            if !grid.kind(idx).in_domain() {
                *v = f64::NAN;
            } else if !admissible(*v) {
                let p = grid.point(idx);
                return Err(Error::Data(format!(
                    "field value {v} at node ({}, {}) is not admissible",
                    p[0], p[1]
                )));
            }
        }
        if let Some(b) = &boundary {
            if b.len() != grid.crossings().len() {
                return Err(Error::Data(format!(
                    "expected {} boundary values, got {}",
                    grid.crossings().len(),
                    b.len()
                )));
            }
            if let Some(v) = b.iter().find(|v| !admissible(**v)) {
                return Err(Error::Data(format!("boundary value {v} is not admissible")));
            }
        }
        Ok(ScalarField {
            grid,
            values,
            boundary,
            closed: None,
        })
    }

    pub fn constant(grid: Arc<DiskGrid>, c: f64) -> Result<Self> {
        Self::from_closed_form(grid, Arc::new(Constant(c)))
    }

    /// The `-inf` sentinel field: `e^f` vanishes identically.
    pub fn empty(grid: Arc<DiskGrid>) -> Self {
        Self::constant(grid, f64::NEG_INFINITY).expect("constant field is admissible")
    }

    pub fn grid(&self) -> &Arc<DiskGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn boundary(&self) -> Option<&[f64]> {
        self.boundary.as_deref()
    }

    pub fn closed_form(&self) -> Option<&Arc<dyn ClosedForm>> {
        self.closed.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.closed.is_some()
    }

    /// Drops the closed form, keeping only samples.
    pub fn sampled(&self) -> ScalarField {
        ScalarField {
            closed: None,
            ..self.clone()
        }
    }

    pub fn describe(&self) -> String {
        match &self.closed {
            Some(c) => c.describe(),
            None => "sampled".to_string(),
        }
    }

    /// Value at an arbitrary point of the closed disk; `NaN` outside it.
    pub fn eval(&self, x: Point) -> f64 {
        if let Some(c) = &self.closed {
            return c.value(x);
        }
        if x[0].hypot(x[1]) > self.grid.radius() * (1.0 + 1e-12) {
            return f64::NAN;
        }
        interpolate(&self.grid, &self.values, self.boundary.as_deref(), x)
    }

    /// Gradient at an arbitrary point; sampled fields interpolate nodal gradients.
    pub fn gradient_at(&self, x: Point) -> Point {
        if let Some(c) = &self.closed {
            return c.gradient(x);
        }
        let g = self.node_gradients();
        gradient_from_nodes(&self.grid, &g, x)
    }

    /// Gradient at every domain node (`NaN` elsewhere), using unequal arms at cut nodes.
    pub fn node_gradients(&self) -> Vec<Point> {
        let grid = &self.grid;
        let h = grid.spacing();
        let mut out = vec![[f64::NAN; 2]; grid.len()];
        for &idx in grid.domain() {
            let fp = self.values[idx];
            let links = grid.links(idx);
            let mut g = [0.0; 2];
            for (axis, gk) in g.iter_mut().enumerate() {
                let plus = self.arm(links[2 * axis], h);
                let minus = self.arm(links[2 * axis + 1], h);
                *gk = match (plus, minus) {
                    (Some((a, fr)), Some((b, fl))) => {
                        (b * b * (fr - fp) + a * a * (fp - fl)) / (a * b * (a + b))
                    }
                    (Some((a, fr)), None) => (fr - fp) / a,
                    (None, Some((b, fl))) => (fp - fl) / b,
                    (None, None) => 0.0,
                };
            }
            out[idx] = g;
        }
        out
    }

    /// Arm length and end value for a stencil link; `None` if the end value is unknown.
    pub(crate) fn arm(&self, link: Link, h: f64) -> Option<(f64, f64)> {
        match link {
            Link::Node(k) => Some((h, self.values[k])),
            Link::Boundary { crossing, frac } => {
                self.boundary.as_ref().map(|b| (frac * h, b[crossing]))
            }
        }
    }

    /// Applies `op` pointwise to node and boundary values; the closed form is dropped.
    pub fn map(&self, op: impl Fn(Point, f64) -> f64) -> Result<ScalarField> {
        let mut values = self.values.clone();
        for &idx in self.grid.domain() {
            values[idx] = op(self.grid.point(idx), values[idx]);
        }
        let boundary = self.boundary.as_ref().map(|b| {
            b.iter()
                .zip(self.grid.crossings())
                .map(|(&v, c)| op(c.point, v))
                .collect()
        });
        ScalarField::from_values(self.grid.clone(), values, boundary)
    }

    /// Re-samples this field on another grid covering a disk no larger than its own.
    pub fn resample(&self, grid: Arc<DiskGrid>) -> Result<ScalarField> {
        if grid.radius() > self.grid.radius() * (1.0 + 1e-12) && self.closed.is_none() {
            return Err(Error::Domain(format!(
                "cannot resample a field of radius {} onto radius {}",
                self.grid.radius(),
                grid.radius()
            )));
        }
        match &self.closed {
            Some(c) => ScalarField::from_closed_form(grid, c.clone()),
            None => ScalarField::from_fn(grid, |x| self.eval(x)),
        }
    }

    /// Largest node value and its index.
    pub fn max_node(&self) -> (usize, f64) {
        self.grid
            .domain()
            .iter()
            .map(|&i| (i, self.values[i]))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, c| {
                if c.1 > best.1 {
                    c
                } else {
                    best
                }
            })
    }

    /// Writes `<stem>.csv` (kind, index, x, y, value) and `<stem>.json` (header).
    pub fn write(&self, stem: &Path) -> Result<()> {
        let header = FieldHeader {
            radius: self.grid.radius(),
            n: self.grid.n(),
            generator: self.describe(),
            has_boundary: self.boundary.is_some(),
        };
        let json = File::create(stem.with_extension("json"))?;
        serde_json::to_writer_pretty(BufWriter::new(json), &header)?;
        let mut w =
            csv::Writer::from_writer(BufWriter::new(File::create(stem.with_extension("csv"))?));
        for &idx in self.grid.domain() {
            let p = self.grid.point(idx);
            w.serialize(FieldRow {
                kind: RowKind::Node,
                index: idx,
                x: p[0],
                y: p[1],
                value: self.values[idx],
            })
            .map_err(csv_error)?;
        }
        if let Some(b) = &self.boundary {
            for (k, c) in self.grid.crossings().iter().enumerate() {
                w.serialize(FieldRow {
                    kind: RowKind::Crossing,
                    index: k,
                    x: c.point[0],
                    y: c.point[1],
                    value: b[k],
                })
                .map_err(csv_error)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`ScalarField::write`]; the result is sampled only.
    pub fn read(stem: &Path) -> Result<ScalarField> {
        let header: FieldHeader =
            serde_json::from_reader(BufReader::new(File::open(stem.with_extension("json"))?))?;
        let grid = DiskGrid::shared(header.radius, header.n)?;
        let mut values = vec![f64::NAN; grid.len()];
        let mut boundary = header
            .has_boundary
            .then(|| vec![f64::NAN; grid.crossings().len()]);
        let mut r =
            csv::Reader::from_reader(BufReader::new(File::open(stem.with_extension("csv"))?));
        for row in r.deserialize::<FieldRow>() {
            let row = row.map_err(csv_error)?;
            let slot = match (row.kind, boundary.as_mut()) {
                (RowKind::Node, _) => values.get_mut(row.index),
                (RowKind::Crossing, Some(b)) => b.get_mut(row.index),
                (RowKind::Crossing, None) => None,
            };
            match slot {
                Some(s) => *s = row.value,
                None => {
                    return Err(Error::Data(format!(
                        "row index {} out of range for this grid",
                        row.index
                    )))
                }
            }
        }
        if let Some(&idx) = grid.domain().iter().find(|&&i| values[i].is_nan()) {
            return Err(Error::Data(format!("missing value for node {idx}")));
        }
        ScalarField::from_values(grid, values, boundary)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FieldHeader {
    radius: f64,
    n: usize,
    generator: String,
    has_boundary: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RowKind {
    Node,
    Crossing,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct FieldRow {
    kind: RowKind,
    index: usize,
    x: f64,
    y: f64,
    value: f64,
}

/// Lower-left cell corner of `x` and the four corner indices, if they all lie on the grid.
fn cell_of(grid: &DiskGrid, x: Point) -> Option<([usize; 4], f64, f64)> {
    let h = grid.spacing();
    let r = grid.radius();
    let n = grid.n();
    let fx = (x[0] + r) / h;
    let fy = (x[1] + r) / h;
    if fx < 0.0 || fy < 0.0 {
        return None;
    }
    let i0 = (fx.floor() as usize).min(n - 2);
    let j0 = (fy.floor() as usize).min(n - 2);
    let corners = [
        grid.index(i0, j0),
        grid.index(i0 + 1, j0),
        grid.index(i0, j0 + 1),
        grid.index(i0 + 1, j0 + 1),
    ];
    Some((corners, fx - i0 as f64, fy - j0 as f64))
}

/// Bilinear interpolation where the enclosing cell lies in the domain, otherwise
/// a least-squares linear fit to nearby nodes and boundary crossings.
pub(crate) fn interpolate(
    grid: &DiskGrid,
    values: &[f64],
    boundary: Option<&[f64]>,
    x: Point,
) -> f64 {
    if let Some((c, s, t)) = cell_of(grid, x) {
        if c.iter().all(|&k| grid.kind(k).in_domain()) {
            let weights = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
            // Zero-weight corners are skipped so node values (and -inf) pass through exactly.
            return weights
                .iter()
                .zip(c)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, k)| w * values[k])
                .sum();
        }
    }
    let mut samples = Vec::with_capacity(24);
    collect_nearby(grid, x, |idx, p| samples.push((p, values[idx])));
    if let Some(b) = boundary {
        let reach = 1.5 * grid.spacing();
        for (k, c) in grid.crossings().iter().enumerate() {
            if (c.point[0] - x[0]).hypot(c.point[1] - x[1]) <= reach {
                samples.push((c.point, b[k]));
            }
        }
    }
    linear_fit(&samples, x)
}

pub(crate) fn gradient_from_nodes(grid: &DiskGrid, g: &[Point], x: Point) -> Point {
    let mut out = [0.0; 2];
    for (axis, o) in out.iter_mut().enumerate() {
        let comp: Vec<f64> = g.iter().map(|v| v[axis]).collect();
        *o = interpolate(grid, &comp, None, x);
    }
    out
}

fn collect_nearby(grid: &DiskGrid, x: Point, mut push: impl FnMut(usize, Point)) {
    let h = grid.spacing();
    let reach = 1.5 * h;
    let n = grid.n() as i64;
    let ci = ((x[0] + grid.radius()) / h).round() as i64;
    let cj = ((x[1] + grid.radius()) / h).round() as i64;
    for j in (cj - 2).max(0)..=(cj + 2).min(n - 1) {
        for i in (ci - 2).max(0)..=(ci + 2).min(n - 1) {
            let idx = grid.index(i as usize, j as usize);
            if !grid.kind(idx).in_domain() {
                continue;
            }
            let p = grid.point(idx);
            if (p[0] - x[0]).hypot(p[1] - x[1]) <= reach {
                push(idx, p);
            }
        }
    }
}

/// Value at `x` of the least-squares plane through `samples`.
fn linear_fit(samples: &[(Point, f64)], x: Point) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    if samples.iter().any(|s| s.1 == f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    if samples.len() < 3 {
        return samples
            .iter()
            .min_by(|a, b| {
                let da = (a.0[0] - x[0]).hypot(a.0[1] - x[1]);
                let db = (b.0[0] - x[0]).hypot(b.0[1] - x[1]);
                da.total_cmp(&db)
            })
            .map(|s| s.1)
            .unwrap_or(f64::NAN);
    }
    // Normal equations in coordinates centred at x: f ≈ c0 + c1 dx + c2 dy.
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for &(p, v) in samples {
        let phi = [1.0, p[0] - x[0], p[1] - x[1]];
        for a in 0..3 {
            rhs[a] += phi[a] * v;
            for b in 0..3 {
                m[a][b] += phi[a] * phi[b];
            }
        }
    }
    match solve3(m, rhs) {
        Some(c) => c[0],
        None => samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64,
    }
}

pub(crate) fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if d.abs() <= 1e-14 * scale.powi(3) {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut a = m;
        for row in 0..3 {
            a[row][k] = r[row];
        }
        *o = det(a) / d;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> Analytic {
        Analytic::new(
            "quadratic",
            |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1],
            |x| [2.0 + 0.5 * x[1], -1.0 + 0.5 * x[0]],
        )
    }

    #[test]
    fn closed_form_samples_match_nodes() {
        let g = DiskGrid::shared(1.0, 33).unwrap();
        let cf: Arc<dyn ClosedForm> = Arc::new(quadratic());
        let f = ScalarField::from_closed_form(g.clone(), cf.clone()).unwrap();
        for &idx in g.domain() {
            assert_eq!(f.value(idx), cf.value(g.point(idx)));
        }
        assert!(f.value(0).is_nan());
    }

    #[test]
    fn node_gradients_exact_on_quadratics() {
        let g = DiskGrid::shared(1.0, 41).unwrap();
        let q = quadratic();
        let f = ScalarField::from_fn(g.clone(), |x| q.value(x)).unwrap();
        for (idx, gr) in f.node_gradients().iter().enumerate() {
            if !g.kind(idx).in_domain() {
                continue;
            }
            let e = q.gradient(g.point(idx));
            assert!((gr[0] - e[0]).abs() < 1e-11 && (gr[1] - e[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn interpolation_is_exact_on_affine_fields() {
        let g = DiskGrid::shared(1.0, 33).unwrap();
        let f = ScalarField::from_fn(g, |x| 3.0 - x[0] + 4.0 * x[1]).unwrap();
        for x in [[0.1, 0.2], [0.97, 0.1], [-0.5, -0.84], [0.0, 0.999]] {
            let e = 3.0 - x[0] + 4.0 * x[1];
            assert!((f.eval(x) - e).abs() < 1e-12, "{x:?}");
        }
        assert!(f.eval([1.2, 0.0]).is_nan());
    }

    #[test]
    fn rejects_bad_values() {
        let g = DiskGrid::shared(1.0, 33).unwrap();
        let mut v = vec![0.0; g.len()];
        v[g.origin()] = f64::NAN;
        assert!(ScalarField::from_values(g.clone(), v, None).is_err());
        assert!(ScalarField::from_values(g, vec![0.0; 3], None).is_err());
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = DiskGrid::shared(0.7, 33).unwrap();
        let f =
            ScalarField::from_fn(g.clone(), |x| (x[0] * 3.1).sin() * 1e-7 + x[1].exp()).unwrap();
        let stem = dir.path().join("k001");
        f.write(&stem).unwrap();
        let back = ScalarField::read(&stem).unwrap();
        for &idx in g.domain() {
            assert_eq!(back.value(idx), f.value(idx));
        }
        assert_eq!(back.boundary().unwrap(), f.boundary().unwrap());
    }
}
