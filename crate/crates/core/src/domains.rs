//! Bounded domains in one and two dimensions: membership, boundary
//! distance, volume, lattice grids and the erosion/dilation sequences that
//! approximate a domain from inside and outside.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature::composite_gauss;

/// A point in at most two dimensions. One-dimensional domains only read
/// the first coordinate.
pub type Point = [f64; 2];

fn point(x: &[f64]) -> Point {
    match x {
        [] => [0.0, 0.0],
        [a] => [*a, 0.0],
        [a, b, ..] => [*a, *b],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Interval { lo: f64, hi: f64 },
    Rectangle { lo: Point, hi: Point },
    Disk { center: Point, radius: f64 },
    /// Simple polygon, vertices stored counterclockwise.
    Polygon { vertices: Vec<Point> },
    /// `{x in base : dist(x, boundary) > radius}`
    Eroded { base: Box<Domain>, radius: f64 },
    /// `{x : dist(x, closure of base) < radius}`
    Dilated { base: Box<Domain>, radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    shape: Shape,
    exact_volume: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    pub error_estimate: f64,
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!("interval ({lo}, {hi}) is empty or unbounded")));
        }
        Ok(Self { shape: Shape::Interval { lo, hi }, exact_volume: Some(hi - lo) })
    }

    pub fn rectangle(lo: Point, hi: Point) -> Result<Self> {
        if !(lo.iter().chain(&hi).all(|v| v.is_finite()) && lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(Error::Domain(format!("rectangle {lo:?}..{hi:?} is degenerate")));
        }
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        Ok(Self { shape: Shape::Rectangle { lo, hi }, exact_volume: Some(area) })
    }

    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && center.iter().all(|v| v.is_finite())) {
            return Err(Error::Domain(format!("disk radius {radius} must be positive")));
        }
        Ok(Self { shape: Shape::Disk { center, radius }, exact_volume: Some(PI * radius * radius) })
    }

    /// Builds a simple polygon. Orientation is normalised to
    /// counterclockwise; self-intersecting input is rejected.
    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        let mut vertices = vertices;
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::Domain("polygon needs at least three vertices".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("polygon has non-finite vertices".into()));
        }
        let signed = shoelace(&vertices);
        if signed.abs() < 1e-14 {
            return Err(Error::Domain("polygon has zero area".into()));
        }
        if signed < 0.0 {
            vertices.reverse();
        }
        if !is_simple(&vertices) {
            return Err(Error::Domain("polygon is not simple".into()));
        }
        Ok(Self { shape: Shape::Polygon { vertices }, exact_volume: Some(signed.abs()) })
    }

    /// The L-shaped hexagon (0,0),(2,0),(2,1),(1,1),(1,2),(0,2) of area 3.
    pub fn l_shape() -> Self {
        Self::polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]])
            .expect("builtin L-shape is a simple polygon")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn exact_volume(&self) -> Option<f64> {
        self.exact_volume
    }

    pub fn dimension(&self) -> usize {
        match &self.shape {
            Shape::Interval { .. } => 1,
            Shape::Eroded { base, .. } | Shape::Dilated { base, .. } => base.dimension(),
            _ => 2,
        }
    }

    /// Signed distance: negative inside, positive outside, zero on the
    /// boundary. Exact for the base shapes; erosions and dilations shift
    /// the level set of their base.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let p = point(x);
        match &self.shape {
            Shape::Interval { lo, hi } => (lo - p[0]).max(p[0] - hi),
            Shape::Rectangle { lo, hi } => {
                let qx = (lo[0] - p[0]).max(p[0] - hi[0]);
                let qy = (lo[1] - p[1]).max(p[1] - hi[1]);
                if qx <= 0.0 && qy <= 0.0 {
                    qx.max(qy)
                } else {
                    qx.max(0.0).hypot(qy.max(0.0))
                }
            }
            Shape::Disk { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) - radius,
            Shape::Polygon { vertices } => {
                let d = polygon_edge_distance(vertices, p);
                if d == 0.0 {
                    0.0
                } else if point_in_polygon(vertices, p) {
                    -d
                } else {
                    d
                }
            }
            Shape::Eroded { base, radius } => base.signed_distance(x) + radius,
            Shape::Dilated { base, radius } => base.signed_distance(x) - radius,
        }
    }

    /// Membership in the open set.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// `dist(x, boundary)`.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).abs()
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        match &self.shape {
            Shape::Interval { lo, hi } => ([*lo, 0.0], [*hi, 0.0]),
            Shape::Rectangle { lo, hi } => (*lo, *hi),
            Shape::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Shape::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
            Shape::Eroded { base, .. } => base.bounding_box(),
            Shape::Dilated { base, radius } => {
                let (lo, hi) = base.bounding_box();
                let dim = self.dimension();
                let mut lo = lo;
                let mut hi = hi;
                for k in 0..dim {
                    lo[k] -= radius;
                    hi[k] += radius;
                }
                (lo, hi)
            }
        }
    }

    /// Diameter of the bounding box.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    /// Boundary measure (2 for an interval), when known in closed form.
    pub fn perimeter(&self) -> Option<f64> {
        match &self.shape {
            Shape::Interval { .. } => Some(2.0),
            Shape::Rectangle { lo, hi } => Some(2.0 * (hi[0] - lo[0] + hi[1] - lo[1])),
            Shape::Disk { radius, .. } => Some(2.0 * PI * radius),
            Shape::Polygon { vertices } => Some(
                (0..vertices.len())
                    .map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % vertices.len()];
                        (b[0] - a[0]).hypot(b[1] - a[1])
                    })
                    .sum(),
            ),
            _ => None,
        }
    }

    /// Volume, in closed form where available and otherwise by cell
    /// counting on a `resolution`-per-axis grid with subsampled boundary
    /// cells. The error estimate is the change from the half-resolution
    /// count.
    pub fn volume(&self, resolution: usize) -> VolumeEstimate {
        if let Some(v) = self.exact_volume {
            return VolumeEstimate { value: v, error_estimate: 0.0 };
        }
        let resolution = resolution.max(2);
        let fine = self.cell_count_volume(resolution);
        let coarse = self.cell_count_volume(resolution / 2);
        VolumeEstimate { value: fine, error_estimate: (fine - coarse).abs() }
    }

    fn cell_count_volume(&self, resolution: usize) -> f64 {
        self.cell_rule(resolution).iter().map(|(_, w)| w).sum()
    }

    /// Cell-based quadrature: interior cells contribute their centre,
    /// boundary cells a subsampled set of points.
    fn cell_rule(&self, resolution: usize) -> Vec<(Point, f64)> {
        const SUB: usize = 8;
        let dim = self.dimension();
        let (lo, hi) = self.bounding_box();
        let n_axis = |k: usize| if k < dim { resolution } else { 1 };
        let width = |k: usize| if k < dim { (hi[k] - lo[k]) / resolution as f64 } else { 1.0 };
        let (w0, w1) = (width(0), width(1));
        let cell = w0 * w1;
        let half_diag = if dim == 1 { 0.5 * w0 } else { 0.5 * w0.hypot(w1) };
        let mut out = Vec::new();
        for i in 0..n_axis(0) {
            for j in 0..n_axis(1) {
                let c = [lo[0] + (i as f64 + 0.5) * w0, if dim == 1 { 0.0 } else { lo[1] + (j as f64 + 0.5) * w1 }];
                let sd = self.signed_distance(&c);
                if sd < -half_diag {
                    out.push((c, cell));
                } else if sd <= half_diag {
                    let sub_j = if dim == 1 { 1 } else { SUB };
                    let w = cell / (SUB * sub_j) as f64;
                    for a in 0..SUB {
                        for b in 0..sub_j {
                            let p = [
                                c[0] + ((a as f64 + 0.5) / SUB as f64 - 0.5) * w0,
                                if dim == 1 { 0.0 } else { c[1] + ((b as f64 + 0.5) / SUB as f64 - 0.5) * w1 },
                            ];
                            if self.contains(&p) {
                                out.push((p, w));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Quadrature rule `(point, weight)` over the domain. Closed shapes use
    /// composite Gauss rules with `resolution` panels per direction;
    /// erosions and dilations fall back to cell counting.
    pub fn quadrature_rule(&self, resolution: usize) -> Vec<(Point, f64)> {
        let resolution = resolution.max(1);
        const ORDER: usize = 4;
        match &self.shape {
            Shape::Interval { lo, hi } => composite_gauss(*lo, *hi, resolution, 8)
                .into_iter()
                .map(|(x, w)| ([x, 0.0], w))
                .collect(),
            Shape::Rectangle { lo, hi } => {
                let xs = composite_gauss(lo[0], hi[0], resolution, ORDER);
                let ys = composite_gauss(lo[1], hi[1], resolution, ORDER);
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for &(x, wx) in &xs {
                    for &(y, wy) in &ys {
                        out.push(([x, y], wx * wy));
                    }
                }
                out
            }
            Shape::Disk { center, radius } => {
                let rs = composite_gauss(0.0, *radius, resolution, ORDER);
                let n_theta = 4 * resolution.max(2);
                let dtheta = 2.0 * PI / n_theta as f64;
                let mut out = Vec::with_capacity(rs.len() * n_theta);
                for &(r, wr) in &rs {
                    for k in 0..n_theta {
                        let t = k as f64 * dtheta;
                        out.push(([center[0] + r * t.cos(), center[1] + r * t.sin()], wr * r * dtheta));
                    }
                }
                out
            }
            Shape::Polygon { vertices } => {
                let us = composite_gauss(0.0, 1.0, resolution, ORDER);
                let mut out = Vec::new();
                for [a, b, c] in ear_clip(vertices) {
                    let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                    // collapsed square: x = a + u (b - a) + u w (c - b)
                    for &(u, wu) in &us {
                        for &(w, ww) in &us {
                            let p = [
                                a[0] + u * (b[0] - a[0]) + u * w * (c[0] - b[0]),
                                a[1] + u * (b[1] - a[1]) + u * w * (c[1] - b[1]),
                            ];
                            out.push((p, wu * ww * u * area2.abs()));
                        }
                    }
                }
                out
            }
            Shape::Eroded { .. } | Shape::Dilated { .. } => self.cell_rule(resolution),
        }
    }

    /// Inner approximant `V_j = {x in Omega : dist(x, boundary) > 1/j}`.
    pub fn inner_approx(&self, j: usize) -> Result<Domain> {
        if j == 0 {
            return Err(Error::InvalidParameter("inner approximation index must be >= 1".into()));
        }
        let r = 1.0 / j as f64;
        let empty = || Error::EmptyErosion { radius: r };
        match &self.shape {
            Shape::Interval { lo, hi } => Domain::interval(lo + r, hi - r).map_err(|_| empty()),
            Shape::Disk { center, radius } if *radius > r => Domain::disk(*center, radius - r),
            Shape::Disk { .. } => Err(empty()),
            Shape::Rectangle { lo, hi } => {
                Domain::rectangle([lo[0] + r, lo[1] + r], [hi[0] - r, hi[1] - r]).map_err(|_| empty())
            }
            _ => {
                let eroded = Domain {
                    shape: Shape::Eroded { base: Box::new(self.clone()), radius: r },
                    exact_volume: None,
                };
                if eroded.has_interior_point() {
                    Ok(eroded)
                } else {
                    Err(empty())
                }
            }
        }
    }

    /// Outer approximant `{x : dist(x, closure) < 1/k}`.
    pub fn outer_approx(&self, k: usize) -> Result<Domain> {
        if k == 0 {
            return Err(Error::InvalidParameter("outer approximation index must be >= 1".into()));
        }
        let r = 1.0 / k as f64;
        match &self.shape {
            Shape::Interval { lo, hi } => Domain::interval(lo - r, hi + r),
            Shape::Disk { center, radius } => Domain::disk(*center, radius + r),
            _ => {
                // Steiner formula holds for convex sets
                let exact_volume = match &self.shape {
                    Shape::Rectangle { .. } => {
                        Some(self.exact_volume.unwrap() + self.perimeter().unwrap() * r + PI * r * r)
                    }
                    _ => None,
                };
                Ok(Domain { shape: Shape::Dilated { base: Box::new(self.clone()), radius: r }, exact_volume })
            }
        }
    }

    fn has_interior_point(&self) -> bool {
        let (lo, hi) = self.bounding_box();
        let dim = self.dimension();
        let n = 256;
        let n1 = if dim == 1 { 1 } else { n };
        (0..n).any(|i| {
            (0..n1).any(|j| {
                let x = lo[0] + (i as f64 + 0.5) / n as f64 * (hi[0] - lo[0]);
                let y = if dim == 1 { 0.0 } else { lo[1] + (j as f64 + 0.5) / n as f64 * (hi[1] - lo[1]) };
                self.contains(&[x, y])
            })
        })
    }

    /// All lattice points of `(h Z)^n` strictly inside the domain.
    pub fn grid(&self, h: f64) -> Result<Grid> {
        Grid::new(self, h)
    }

    /// Compact human-readable description, used in output metadata.
    pub fn describe(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Interval { lo, hi } => write!(f, "interval:{lo},{hi}"),
            Shape::Rectangle { lo, hi } => write!(f, "rectangle:{},{},{},{}", lo[0], lo[1], hi[0], hi[1]),
            Shape::Disk { center, radius } => write!(f, "disk:{},{},{}", center[0], center[1], radius),
            Shape::Polygon { vertices } => {
                let parts: Vec<String> = vertices.iter().map(|v| format!("{},{}", v[0], v[1])).collect();
                write!(f, "polygon:{}", parts.join(";"))
            }
            Shape::Eroded { base, radius } => write!(f, "erode({base};{radius})"),
            Shape::Dilated { base, radius } => write!(f, "dilate({base};{radius})"),
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    /// Parses `interval:lo,hi`, `rectangle:x0,y0,x1,y1`, `disk:cx,cy,r`,
    /// `polygon:x,y;x,y;...` or `lshape`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = |text: &str| -> Result<Vec<f64>> {
            text.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number '{t}' in domain spec '{s}'")))
                })
                .collect()
        };
        let arity = |v: &[f64], n: usize| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!("domain '{name}' expects {n} numbers, got {}", v.len())))
            }
        };
        match name.trim() {
            "interval" => {
                let v = nums(args)?;
                arity(&v, 2)?;
                Domain::interval(v[0], v[1])
            }
            "rectangle" => {
                let v = nums(args)?;
                arity(&v, 4)?;
                Domain::rectangle([v[0], v[1]], [v[2], v[3]])
            }
            "disk" => {
                let v = nums(args)?;
                arity(&v, 3)?;
                Domain::disk([v[0], v[1]], v[2])
            }
            "polygon" => {
                let vertices = args
                    .split(';')
                    .filter(|t| !t.trim().is_empty())
                    .map(|pair| {
                        let v = nums(pair)?;
                        arity(&v, 2)?;
                        Ok([v[0], v[1]])
                    })
                    .collect::<Result<Vec<_>>>()?;
                Domain::polygon(vertices)
            }
            "lshape" => Ok(Domain::l_shape()),
            other => Err(Error::Config(format!("unknown domain shape '{other}'"))),
        }
    }
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point, b: Point, p: Point, d: f64| {
        d == 0.0
            && p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn is_simple(v: &[Point]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn segment_distance(a: Point, b: Point, p: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn polygon_edge_distance(v: &[Point], p: Point) -> f64 {
    (0..v.len()).map(|i| segment_distance(v[i], v[(i + 1) % v.len()], p)).fold(f64::INFINITY, f64::min)
}

/// Crossing-number test; boundary points are handled by the caller.
fn point_in_polygon(v: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = v.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Ear-clipping triangulation of a simple counterclockwise polygon.
fn ear_clip(vertices: &[Point]) -> Vec<[Point; 3]> {
    let mut idx: Vec<usize> = (0..vertices.len()).collect();
    let mut out = Vec::with_capacity(vertices.len().saturating_sub(2));
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (vertices[ia], vertices[ib], vertices[ic]);
            if cross(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&q| {
                if q == ia || q == ib || q == ic {
                    return false;
                }
                let p = vertices[q];
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if !blocked {
                out.push([a, b, c]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // collinear leftovers; drop a zero-area vertex
            idx.remove(0);
        }
    }
    if idx.len() == 3 {
        out.push([vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]]);
    }
    out
}

/// Interior lattice nodes of a domain.
#[derive(Clone, Debug)]
pub struct Grid {
    h: f64,
    dim: usize,
    lattice: Vec<[i64; 2]>,
    points: Vec<Point>,
    index: HashMap<[i64; 2], usize>,
}

impl Grid {
    /// Lattice points with `dist(x, boundary)` above a relative round-off
    /// margin, in lexicographic order of lattice coordinates.
    pub fn new(domain: &Domain, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid spacing h = {h} must be positive")));
        }
        let dim = domain.dimension();
        let (lo, hi) = domain.bounding_box();
        let range = |k: usize| -> (i64, i64) {
            if k < dim {
                ((lo[k] / h).ceil() as i64, (hi[k] / h).floor() as i64)
            } else {
                (0, 0)
            }
        };
        let (r0, r1) = (range(0), range(1));
        let margin = 1e-9 * h;
        let mut lattice = Vec::new();
        let mut points = Vec::new();
        for i in r0.0..=r0.1 {
            for j in r1.0..=r1.1 {
                let p = [i as f64 * h, j as f64 * h];
                if domain.signed_distance(&p) < -margin {
                    lattice.push([i, j]);
                    points.push(p);
                }
            }
        }
        if lattice.is_empty() {
            return Err(Error::EmptyGrid { h });
        }
        let index = lattice.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        Ok(Self { h, dim, lattice, points, index })
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn lattice(&self) -> &[[i64; 2]] {
        &self.lattice
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Coordinates of node `i`, truncated to the grid dimension.
    pub fn coords(&self, i: usize) -> &[f64] {
        &self.points[i][..self.dim]
    }

    pub fn index_of(&self, lattice: [i64; 2]) -> Option<usize> {
        self.index.get(&lattice).copied()
    }

    /// Largest coordinate span of the node set in lattice units.
    pub fn lattice_diameter(&self) -> usize {
        (0..self.dim)
            .map(|k| {
                let lo = self.lattice.iter().map(|l| l[k]).min().unwrap_or(0);
                let hi = self.lattice.iter().map(|l| l[k]).max().unwrap_or(0);
                (hi - lo) as usize
            })
            .max()
            .unwrap_or(0)
    }

    /// Node indices of `sub` inside `self`, or `None` if `sub` has a node
    /// that `self` lacks (or the spacings differ).
    pub fn embedding_of(&self, sub: &Grid) -> Option<Vec<usize>> {
        if sub.h != self.h || sub.dim != self.dim {
            return None;
        }
        sub.lattice.iter().map(|l| self.index_of(*l)).collect()
    }

    /// Principal-submatrix mask selecting the nodes of `sub`.
    pub fn mask_of(&self, sub: &Grid) -> Option<Vec<bool>> {
        let idx = self.embedding_of(sub)?;
        let mut mask = vec![false; self.len()];
        for i in idx {
            mask[i] = true;
        }
        Some(mask)
    }

    /// CSV with header `index,x[,y]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.dim == 1 { "index,x\n" } else { "index,x,y\n" });
        for (i, p) in self.points.iter().enumerate() {
            if self.dim == 1 {
                out.push_str(&format!("{i},{}\n", p[0]));
            } else {
                out.push_str(&format!("{i},{},{}\n", p[0], p[1]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l_shape() -> Domain {
        Domain::l_shape()
    }

    #[test]
    fn membership_examples() {
        let disk = Domain::disk([0.0, 0.0], 1.0).unwrap();
        assert!(disk.contains(&[0.0, 0.0]));
        assert!(!disk.contains(&[1.0, 0.0]));
        assert!(!l_shape().contains(&[1.5, 1.5]));
        assert!(l_shape().contains(&[0.5, 1.5]));
        assert!(!l_shape().contains(&[2.0, 0.5]));
    }

    #[test]
    fn boundary_distance_examples() {
        let interval = Domain::interval(0.0, PI).unwrap();
        assert_eq!(interval.boundary_distance(&[1.0]), 1.0);
        let disk = Domain::disk([0.0, 0.0], 1.0).unwrap();
        assert_eq!(disk.boundary_distance(&[0.5, 0.0]), 0.5);
        assert!((l_shape().boundary_distance(&[0.5, 0.5]) - 0.5).abs() < 1e-15);
        // nearest boundary feature is the reentrant corner
        let p = [0.9, 0.9];
        assert!((l_shape().boundary_distance(&p) - 0.1f64.hypot(0.1)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_volumes() {
        assert_eq!(Domain::disk([0.0, 0.0], 1.0).unwrap().volume(4).value, PI);
        let l = l_shape().volume(4);
        assert_eq!((l.value, l.error_estimate), (3.0, 0.0));
        assert_eq!(Domain::interval(0.0, PI).unwrap().volume(2).value, PI);
    }

    #[test]
    fn polygon_orientation_and_validation() {
        let cw = Domain::polygon(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        match cw.shape() {
            Shape::Polygon { vertices } => assert!(shoelace(vertices) > 0.0),
            _ => unreachable!(),
        }
        let bowtie = Domain::polygon(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(bowtie.is_err());
        assert!(Domain::polygon(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn polygon_quadrature_reproduces_area_and_moments() {
        let l = l_shape();
        let rule = l.quadrature_rule(2);
        let area: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((area - 3.0).abs() < 1e-12);
        // first moment: centroid of the L-shape is (5/6, 5/6)
        let mx: f64 = rule.iter().map(|(p, w)| w * p[0]).sum();
        assert!((mx / 3.0 - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn disk_quadrature_integrates_radial_polynomial() {
        let disk = Domain::disk([0.3, -0.2], 1.5).unwrap();
        let rule = disk.quadrature_rule(3);
        let r2: f64 = rule
            .iter()
            .map(|(p, w)| w * ((p[0] - 0.3).powi(2) + (p[1] + 0.2).powi(2)))
            .sum();
        assert!((r2 - PI * 1.5f64.powi(4) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn inner_and_outer_examples() {
        let interval = Domain::interval(0.0, PI).unwrap();
        assert_eq!(interval.inner_approx(2).unwrap(), Domain::interval(0.5, PI - 0.5).unwrap());
        assert_eq!(interval.outer_approx(2).unwrap(), Domain::interval(-0.5, PI + 0.5).unwrap());
        let disk = Domain::disk([0.0, 0.0], 1.0).unwrap();
        assert_eq!(disk.inner_approx(4).unwrap(), Domain::disk([0.0, 0.0], 0.75).unwrap());
        assert_eq!(disk.outer_approx(4).unwrap(), Domain::disk([0.0, 0.0], 1.25).unwrap());

        let square = Domain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let rounded = square.outer_approx(10).unwrap();
        let expected = 1.0 + 4.0 * 0.1 + PI * 0.01;
        assert!((rounded.volume(2).value - expected).abs() < 1e-14);
        // cell counting agrees with the Steiner value
        assert!((rounded.cell_count_volume(800) - expected).abs() < 1e-4);
    }

    #[test]
    fn l_shape_erosion_volume_bound() {
        let inner = l_shape().inner_approx(10).unwrap();
        let v = inner.volume(400);
        assert!(v.value > 3.0 - 0.8 && v.value < 3.0, "{v:?}");
        assert!(3.0 - v.value <= l_shape().perimeter().unwrap() * 0.1);
        assert!(v.error_estimate < 1e-2);
        assert!(l_shape().inner_approx(1).is_err());
        assert!(Domain::interval(0.0, 1.0).unwrap().inner_approx(2).is_err());
    }

    #[test]
    fn grid_examples() {
        let g = Domain::interval(0.0, 1.0).unwrap().grid(0.25).unwrap();
        let xs: Vec<f64> = (0..g.len()).map(|i| g.coords(i)[0]).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75]);

        let disk = Domain::disk([0.0, 0.0], 1.0).unwrap();
        assert_eq!(disk.grid(0.5).unwrap().len(), 9);

        assert_eq!(Domain::interval(0.0, PI).unwrap().grid(PI / 8.0).unwrap().len(), 7);
        assert_eq!(Domain::interval(0.0, PI).unwrap().grid(PI / 2049.0).unwrap().len(), 2048);

        let small = Domain::disk([1.5, 1.5], 0.4).unwrap();
        assert!(matches!(small.grid(1.0), Err(Error::EmptyGrid { .. })));
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let g = l_shape().grid(0.25).unwrap();
        assert!(g.lattice().windows(2).all(|w| w[0] < w[1]));
        assert!((0..g.len()).all(|i| l_shape().contains(g.coords(i))));
    }

    #[test]
    fn parse_specs() {
        let d: Domain = "interval:0,2.5".parse().unwrap();
        assert_eq!(d, Domain::interval(0.0, 2.5).unwrap());
        let p: Domain = "polygon:0,0;2,0;2,1;1,1;1,2;0,2".parse().unwrap();
        assert_eq!(p, l_shape());
        assert!("disk:0,0".parse::<Domain>().is_err());
        assert!("sphere:1".parse::<Domain>().is_err());
        let round: Domain = l_shape().to_string().parse().unwrap();
        assert_eq!(round, l_shape());
    }
}
