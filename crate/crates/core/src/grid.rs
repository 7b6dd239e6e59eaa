//! Cartesian grids on a disk with Shortley–Weller boundary links.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the plane.
pub type Point = [f64; 2];

/// Smallest admissible number of points per axis.
pub const MIN_POINTS: usize = 33;

/// Unit steps for the four stencil directions: +x, -x, +y, -y.
pub const DIRECTIONS: [[i64; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    /// All four neighbours lie strictly inside the disk.
    Interior,
    /// Inside the disk, with at least one arm cut by the circle.
    BoundaryAdjacent,
    /// On or outside the circle.
    Exterior,
}

impl NodeKind {
    pub fn in_domain(self) -> bool {
        self != NodeKind::Exterior
    }
}

/// Where a stencil arm ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Link {
    Node(usize),
    /// Arm cut by the circle at `frac * h` from the node.
    Boundary {
        crossing: usize,
        frac: f64,
    },
}

/// Intersection of a stencil arm with the boundary circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub node: usize,
    pub direction: usize,
    pub frac: f64,
    pub point: Point,
}

/// Uniform `n x n` grid covering `[-r, r]^2`, restricted to the open disk `B_r`.
#[derive(Debug)]
pub struct DiskGrid {
    radius: f64,
    n: usize,
    h: f64,
    kinds: Vec<NodeKind>,
    links: Vec<[Link; 4]>,
    crossings: Vec<Crossing>,
    domain: Vec<usize>,
    unknown: Vec<usize>,
}

impl DiskGrid {
    pub fn new(radius: f64, n: usize) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::Config(format!(
                "grid too coarse: n = {n} < {MIN_POINTS}"
            )));
        }
        Self::build(radius, n)
    }

    pub fn shared(radius: f64, n: usize) -> Result<Arc<Self>> {
        Self::new(radius, n).map(Arc::new)
    }

    /// Builds a grid without the resolution floor (used for coarse Richardson companions).
    pub(crate) fn build(radius: f64, n: usize) -> Result<Self> {
        if n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid size must be odd so the origin is a node, got n = {n}"
            )));
        }
        if n < 5 {
            return Err(Error::Config(format!("grid size {n} is degenerate")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!(
                "grid radius must be positive, got {radius}"
            )));
        }
        let h = 2.0 * radius / (n - 1) as f64;
        let r2 = radius * radius;
        let coord = |i: usize| -radius + i as f64 * h;
        // Nodes within a relative 1e-12 of the circle count as boundary points.
        let inside = |i: usize, j: usize| {
            let (x, y) = (coord(i), coord(j));
            x * x + y * y < r2 * (1.0 - 1e-12)
        };

        let total = n * n;
        let mut kinds = vec![NodeKind::Exterior; total];
        let mut links = vec![[Link::Node(0); 4]; total];
        let mut crossings = Vec::new();
        let mut domain = Vec::new();
        let mut unknown = vec![usize::MAX; total];

        for j in 0..n {
            for i in 0..n {
                if !inside(i, j) {
                    continue;
                }
                let idx = j * n + i;
                let p = [coord(i), coord(j)];
                let mut cut = false;
                for (d, step) in DIRECTIONS.iter().enumerate() {
                    let ni = i as i64 + step[0];
                    let nj = j as i64 + step[1];
                    let neighbour_inside = ni >= 0
                        && nj >= 0
                        && (ni as usize) < n
                        && (nj as usize) < n
                        && inside(ni as usize, nj as usize);
                    if neighbour_inside {
                        links[idx][d] = Link::Node(nj as usize * n + ni as usize);
                    } else {
                        cut = true;
                        let e = [step[0] as f64, step[1] as f64];
                        let pe = p[0] * e[0] + p[1] * e[1];
                        let c = p[0] * p[0] + p[1] * p[1] - r2;
                        let t = (-pe + (pe * pe - c).sqrt()).clamp(f64::MIN_POSITIVE, h);
                        let frac = t / h;
                        links[idx][d] = Link::Boundary {
                            crossing: crossings.len(),
                            frac,
                        };
                        crossings.push(Crossing {
                            node: idx,
                            direction: d,
                            frac,
                            point: [p[0] + t * e[0], p[1] + t * e[1]],
                        });
                    }
                }
                kinds[idx] = if cut {
                    NodeKind::BoundaryAdjacent
                } else {
                    NodeKind::Interior
                };
                unknown[idx] = domain.len();
                domain.push(idx);
            }
        }

        Ok(DiskGrid {
            radius,
            n,
            h,
            kinds,
            links,
            crossings,
            domain,
            unknown,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn links(&self, idx: usize) -> &[Link; 4] {
        &self.links[idx]
    }

    pub fn crossings(&self) -> &[Crossing] {
        &self.crossings
    }

    /// Domain (interior and boundary-adjacent) node indices, row-major.
    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    /// Position of a domain node in [`DiskGrid::domain`], `None` for exterior nodes.
    pub fn unknown_index(&self, idx: usize) -> Option<usize> {
        let u = self.unknown[idx];
        (u != usize::MAX).then_some(u)
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn point(&self, idx: usize) -> Point {
        let (i, j) = self.ij(idx);
        [
            -self.radius + i as f64 * self.h,
            -self.radius + j as f64 * self.h,
        ]
    }

    pub fn origin(&self) -> usize {
        let c = (self.n - 1) / 2;
        self.index(c, c)
    }

    /// Node whose cell contains `x` (clamped to the grid square).
    pub fn nearest_node(&self, x: Point) -> usize {
        let to_index = |v: f64| {
            let k = ((v + self.radius) / self.h).round();
            k.clamp(0.0, (self.n - 1) as f64) as usize
        };
        self.index(to_index(x[0]), to_index(x[1]))
    }

    /// Quadrature weights `(node, area)` for the disk `B_rho`.
    ///
    /// Each domain node receives the exact area of its cell inside `B_rho`;
    /// cell area belonging to exterior nodes is handed to the nearest domain
    /// neighbour so that the weights sum to `pi rho^2` up to round-off.
    pub fn disk_weights(&self, rho: f64) -> Result<Vec<(usize, f64)>> {
        if !(rho >= 0.0) || rho > self.radius * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "integration radius {rho} exceeds grid radius {}",
                self.radius
            )));
        }
        let rho = rho.min(self.radius);
        if rho == 0.0 {
            return Ok(Vec::new());
        }
        let h = self.h;
        let span = ((rho + h) / h).ceil() as i64;
        let c = ((self.n - 1) / 2) as i64;
        let lo = (c - span).max(0) as usize;
        let hi = ((c + span) as usize).min(self.n - 1);
        let mut acc = vec![0.0; self.n * self.n];
        let mut touched = Vec::new();
        for j in lo..=hi {
            for i in lo..=hi {
                let idx = self.index(i, j);
                let p = self.point(idx);
                let a = cell_disk_area(p, h, rho);
                if a <= 0.0 {
                    continue;
                }
                let target = if self.kinds[idx].in_domain() {
                    Some(idx)
                } else {
                    self.inward_domain_neighbour(idx)
                };
                if let Some(t) = target {
                    if acc[t] == 0.0 {
                        touched.push(t);
                    }
                    acc[t] += a;
                }
            }
        }
        touched.sort_unstable();
        Ok(touched.into_iter().map(|t| (t, acc[t])).collect())
    }

    /// Quadrature weights for the annulus `B_outer \ B_inner`.
    pub fn annulus_weights(&self, annulus: &AnnulusSpec) -> Result<Vec<(usize, f64)>> {
        let outer = self.disk_weights(annulus.outer)?;
        let inner = self.disk_weights(annulus.inner)?;
        let mut acc = vec![0.0; self.n * self.n];
        for (i, w) in &outer {
            acc[*i] += w;
        }
        for (i, w) in &inner {
            acc[*i] -= w;
        }
        Ok(outer
            .into_iter()
            .map(|(i, _)| (i, acc[i]))
            .filter(|(_, w)| *w > 0.0)
            .collect())
    }

    fn inward_domain_neighbour(&self, idx: usize) -> Option<usize> {
        let (i, j) = self.ij(idx);
        let mut best: Option<(f64, usize)> = None;
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= self.n as i64 || nj >= self.n as i64 {
                    continue;
                }
                let k = self.index(ni as usize, nj as usize);
                if !self.kinds[k].in_domain() {
                    continue;
                }
                let p = self.point(k);
                let d = (p[0] - self.point(idx)[0]).hypot(p[1] - self.point(idx)[1]);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
        }
        best.map(|(_, k)| k)
    }
}

/// Inner and outer radius of an annulus `B_outer \ B_inner`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub inner: f64,
    pub outer: f64,
}

impl AnnulusSpec {
    pub fn new(inner: f64, outer: f64, grid_radius: f64) -> Result<Self> {
        if !(0.0 <= inner && inner < outer && outer <= grid_radius * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "annulus requires 0 <= inner < outer <= {grid_radius}, got ({inner}, {outer})"
            )));
        }
        Ok(AnnulusSpec { inner, outer })
    }
}

/// Exact area of the square cell of side `h` centred at `c`, intersected with `B_rho`.
pub fn cell_disk_area(c: Point, h: f64, rho: f64) -> f64 {
    let half = 0.5 * h;
    rect_disk_area(c[0] - half, c[0] + half, c[1] - half, c[1] + half, rho)
}

/// Exact area of `[x0, x1] x [y0, y1]` intersected with the disk of radius `rho` at the origin.
pub fn rect_disk_area(x0: f64, x1: f64, y0: f64, y1: f64, rho: f64) -> f64 {
    let a = x0.max(-rho);
    let b = x1.min(rho);
    if a >= b {
        return 0.0;
    }
    let r2 = rho * rho;
    let chord = |x: f64| (r2 - x * x).max(0.0).sqrt();
    // Antiderivative of the half-chord.
    let prim = |x: f64| {
        let x = x.clamp(-rho, rho);
        0.5 * (x * chord(x) + r2 * (x / rho).clamp(-1.0, 1.0).asin())
    };

    let mut breaks = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < rho {
            let x = chord(y);
            for cand in [-x, x] {
                if cand > a && cand < b {
                    breaks.push(cand);
                }
            }
        }
    }
    breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());

    let mut area = 0.0;
    for w in breaks.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l {
            continue;
        }
        let s = chord(0.5 * (l + r));
        let upper_is_chord = s <= y1;
        let lower_is_chord = -s >= y0;
        let upper = if upper_is_chord { s } else { y1 };
        let lower = if lower_is_chord { -s } else { y0 };
        if upper <= lower {
            continue;
        }
        let chord_int = prim(r) - prim(l);
        let width = r - l;
        let up = if upper_is_chord {
            chord_int
        } else {
            y1 * width
        };
        let down = if lower_is_chord {
            -chord_int
        } else {
            y0 * width
        };
        area += up - down;
    }
    area.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_even_grids() {
        assert!(DiskGrid::new(1.0, 31).is_err());
        assert!(DiskGrid::new(1.0, 34).is_err());
        assert!(DiskGrid::new(0.0, 33).is_err());
    }

    #[test]
    fn origin_is_an_interior_node() {
        let g = DiskGrid::new(1.0, 33).unwrap();
        let o = g.origin();
        assert_eq!(g.point(o), [0.0, 0.0]);
        assert_eq!(g.kind(o), NodeKind::Interior);
    }

    #[test]
    fn interior_nodes_have_domain_neighbours() {
        let g = DiskGrid::new(1.3, 65).unwrap();
        for &idx in g.domain() {
            for link in g.links(idx) {
                match (g.kind(idx), link) {
                    (NodeKind::Interior, Link::Node(k)) => assert!(g.kind(*k).in_domain()),
                    (NodeKind::Interior, Link::Boundary { .. }) => panic!("interior node is cut"),
                    (_, Link::Boundary { frac, .. }) => assert!(*frac > 0.0 && *frac <= 1.0),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn crossings_lie_on_circle() {
        let g = DiskGrid::new(2.0, 41).unwrap();
        for c in g.crossings() {
            let r = c.point[0].hypot(c.point[1]);
            assert!((r - 2.0).abs() < 1e-12, "crossing off circle: {r}");
        }
    }

    #[test]
    fn rect_area_matches_known_cases() {
        // Full disk inside a large square.
        let a = rect_disk_area(-2.0, 2.0, -2.0, 2.0, 1.0);
        assert!((a - std::f64::consts::PI).abs() < 1e-14);
        // Quarter disk.
        let q = rect_disk_area(0.0, 2.0, 0.0, 2.0, 1.0);
        assert!((q - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
        // Square fully inside.
        assert!((rect_disk_area(-0.1, 0.1, 0.2, 0.3, 1.0) - 0.02).abs() < 1e-15);
        // Disjoint.
        assert_eq!(rect_disk_area(1.5, 2.0, 0.0, 1.0, 1.0), 0.0);
        // Half strip above y = 0.5 with |x| <= 1: segment area.
        let seg = rect_disk_area(-1.0, 1.0, 0.5, 1.0, 1.0);
        let theta = 2.0 * (0.5f64).acos();
        let exact = 0.5 * (theta - theta.sin());
        assert!((seg - exact).abs() < 1e-13, "{seg} vs {exact}");
    }

    #[test]
    fn disk_weights_sum_to_disk_area() {
        let g = DiskGrid::new(1.0, 65).unwrap();
        for rho in [0.05, 0.3, 0.77, 1.0] {
            let total: f64 = g.disk_weights(rho).unwrap().iter().map(|(_, w)| w).sum();
            let exact = std::f64::consts::PI * rho * rho;
            assert!(
                (total - exact).abs() < 1e-12 * exact.max(1.0),
                "rho={rho}: {total} vs {exact}"
            );
        }
        assert!(g.disk_weights(1.5).is_err());
    }

    #[test]
    fn annulus_spec_validates() {
        assert!(AnnulusSpec::new(0.2, 0.1, 1.0).is_err());
        assert!(AnnulusSpec::new(0.0, 1.1, 1.0).is_err());
        assert!(AnnulusSpec::new(0.0, 1.0, 1.0).is_ok());
    }
}
