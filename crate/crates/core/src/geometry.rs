//! Level sets of grid fields and distances between interfaces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field2D, Grid2D};
use crate::reaction::Zeros;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("level set is empty")]
    EmptyLevelSet,
    #[error("reference curve is not closed")]
    OpenCurve,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

pub type Point = [f64; 2];

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Distance from `p` to the segment `[a, b]`.
#[inline]
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

/// An ordered polyline; closed polylines repeat no point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Point>,
    pub closed: bool,
}

impl Polyline {
    pub fn segment_count(&self) -> usize {
        match (self.closed, self.points.len()) {
            (_, 0) | (_, 1) => 0,
            (true, n) => n,
            (false, n) => n - 1,
        }
    }

    pub fn segment(&self, k: usize) -> (Point, Point) {
        let n = self.points.len();
        (self.points[k], self.points[(k + 1) % n])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..self.segment_count()).map(move |k| self.segment(k))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| norm(sub(b, a))).sum()
    }

    /// Signed (shoelace) area; positive for counterclockwise loops.
    pub fn signed_area(&self) -> f64 {
        if !self.closed {
            return 0.0;
        }
        0.5 * self
            .segments()
            .map(|(a, b)| a[0] * b[1] - b[0] * a[1])
            .sum::<f64>()
    }

    /// Vertex average.
    pub fn centroid(&self) -> Point {
        let n = self.points.len() as f64;
        let s = self
            .points
            .iter()
            .fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        [s[0] / n, s[1] / n]
    }

    /// Mean distance from the vertices to their centroid.
    pub fn mean_radius(&self) -> f64 {
        let c = self.centroid();
        self.points.iter().map(|&p| norm(sub(p, c))).sum::<f64>() / self.points.len() as f64
    }

    /// Radius of the circle with the enclosed area.
    pub fn area_radius(&self) -> f64 {
        (self.signed_area().abs() / std::f64::consts::PI).sqrt()
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.segments() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if x > p[0] {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Points spaced at most `spacing` apart along the polyline, including
    /// every vertex.
    pub fn resample(&self, spacing: f64) -> Vec<Point> {
        let mut out = Vec::new();
        for (a, b) in self.segments() {
            let len = norm(sub(b, a));
            let k = (len / spacing).ceil().max(1.0) as usize;
            for s in 0..k {
                let t = s as f64 / k as f64;
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        if !self.closed {
            if let Some(&last) = self.points.last() {
                out.push(last);
            }
        }
        if out.is_empty() {
            out.extend_from_slice(&self.points);
        }
        out
    }

    /// Unit normal at vertex `k` from the neighbouring vertices, rotated
    /// clockwise from the tangent (outward for counterclockwise loops).
    pub fn vertex_normal(&self, k: usize) -> Point {
        let n = self.points.len();
        let (prev, next) = if self.closed {
            (self.points[(k + n - 1) % n], self.points[(k + 1) % n])
        } else {
            (
                self.points[k.saturating_sub(1)],
                self.points[(k + 1).min(n - 1)],
            )
        };
        let t = sub(next, prev);
        let l = norm(t);
        if l == 0.0 {
            return [0.0, 0.0];
        }
        [t[1] / l, -t[0] / l]
    }

    /// A counterclockwise circle with `n` vertices.
    pub fn circle(center: Point, radius: f64, n: usize) -> Self {
        let points = (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            })
            .collect();
        Polyline {
            points,
            closed: true,
        }
    }
}

/// Marching-squares output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub level: f64,
    pub segments: Vec<[Point; 2]>,
    pub loops: Vec<Polyline>,
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty() && self.loops.iter().all(|l| l.points.is_empty())
    }

    /// A level set made of given polylines (for reference curves).
    pub fn from_polylines(level: f64, loops: Vec<Polyline>) -> Self {
        let segments = loops
            .iter()
            .flat_map(|l| l.segments().map(|(a, b)| [a, b]).collect::<Vec<_>>())
            .collect();
        LevelSet {
            level,
            segments,
            loops,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.loops.iter().map(Polyline::length).sum()
    }

    pub fn distance(&self, p: Point) -> f64 {
        self.segments
            .iter()
            .map(|s| point_segment_distance(p, s[0], s[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// The longest loop.
    pub fn main_loop(&self) -> Option<&Polyline> {
        self.loops
            .iter()
            .max_by(|a, b| a.length().partial_cmp(&b.length()).unwrap())
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(GeometryError::EmptyLevelSet)
        } else {
            Ok(())
        }
    }

    /// Rows `(loop_id, x, y)`.
    pub fn rows(&self) -> Vec<(usize, f64, f64)> {
        self.loops
            .iter()
            .enumerate()
            .flat_map(|(id, l)| l.points.iter().map(move |p| (id, p[0], p[1])))
            .collect()
    }
}

/// Edge identifier: `(0, i, j)` is the horizontal edge from node `(i, j)`
/// to `(i + 1, j)`, `(1, i, j)` the vertical edge from `(i, j)` to `(i, j + 1)`.
type EdgeKey = (u8, usize, usize);

/// Marching squares with linear edge interpolation. Saddle cells are
/// resolved by comparing the cell average with the level.
pub fn extract_level_set(field: &Field2D, level: f64) -> LevelSet {
    let g = &field.grid;
    let mut points: HashMap<EdgeKey, Point> = HashMap::new();
    let mut seg_keys: Vec<(EdgeKey, EdgeKey)> = Vec::new();

    let edge_point = |key: EdgeKey| -> Point {
        let (dir, i, j) = key;
        let (a, b, pa, pb) = if dir == 0 {
            (
                field.at(i, j),
                field.at(i + 1, j),
                [g.x(i), g.y(j)],
                [g.x(i + 1), g.y(j)],
            )
        } else {
            (
                field.at(i, j),
                field.at(i, j + 1),
                [g.x(i), g.y(j)],
                [g.x(i), g.y(j + 1)],
            )
        };
        let t = (level - a) / (b - a);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    };

    for j in 0..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let v = [
                field.at(i, j),
                field.at(i + 1, j),
                field.at(i + 1, j + 1),
                field.at(i, j + 1),
            ];
            let up = [v[0] >= level, v[1] >= level, v[2] >= level, v[3] >= level];
            let bottom: EdgeKey = (0, i, j);
            let right: EdgeKey = (1, i + 1, j);
            let top: EdgeKey = (0, i, j + 1);
            let left: EdgeKey = (1, i, j);
            let crosses = [
                up[0] != up[1],
                up[1] != up[2],
                up[3] != up[2],
                up[0] != up[3],
            ];
            let edges = [bottom, right, top, left];
            let count = crosses.iter().filter(|&&c| c).count();
            let mut pairs: Vec<(EdgeKey, EdgeKey)> = Vec::new();
            if count == 2 {
                let mut it = (0..4).filter(|&k| crosses[k]).map(|k| edges[k]);
                pairs.push((it.next().unwrap(), it.next().unwrap()));
            } else if count == 4 {
                let center_up = 0.25 * (v[0] + v[1] + v[2] + v[3]) >= level;
                // Corners sharing the center's side are joined through it;
                // the other two corners are cut off individually.
                let isolate_v1_v3 = up[0] == center_up;
                if isolate_v1_v3 {
                    pairs.push((bottom, right));
                    pairs.push((left, top));
                } else {
                    pairs.push((bottom, left));
                    pairs.push((right, top));
                }
            }
            for (a, b) in pairs {
                points.entry(a).or_insert_with(|| edge_point(a));
                points.entry(b).or_insert_with(|| edge_point(b));
                seg_keys.push((a, b));
            }
        }
    }

    let segments: Vec<[Point; 2]> = seg_keys
        .iter()
        .map(|(a, b)| [points[a], points[b]])
        .collect();
    let loops = join_segments(&seg_keys, &points);
    LevelSet {
        level,
        segments,
        loops,
    }
}

/// Chains segments sharing edge keys into polylines; closed loops are
/// oriented counterclockwise.
fn join_segments(
    seg_keys: &[(EdgeKey, EdgeKey)],
    points: &HashMap<EdgeKey, Point>,
) -> Vec<Polyline> {
    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in seg_keys.iter().enumerate() {
        incident.entry(*a).or_default().push(s);
        incident.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; seg_keys.len()];
    let mut loops = Vec::new();
    // Deterministic order: walk segments in creation order.
    for start in 0..seg_keys.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = seg_keys[start];
        // Extend forward from b.
        let mut forward = vec![a, b];
        let mut closed = false;
        let mut cur = b;
        loop {
            let next = incident[&cur].iter().copied().find(|&s| !used[s]);
            match next {
                Some(s) => {
                    used[s] = true;
                    let (p, q) = seg_keys[s];
                    let other = if p == cur { q } else { p };
                    if other == a {
                        closed = true;
                        break;
                    }
                    forward.push(other);
                    cur = other;
                }
                None => break,
            }
        }
        if !closed {
            // Extend backward from a.
            let mut backward = Vec::new();
            let mut cur = a;
            while let Some(s) = incident[&cur].iter().copied().find(|&s| !used[s]) {
                used[s] = true;
                let (p, q) = seg_keys[s];
                let other = if p == cur { q } else { p };
                backward.push(other);
                cur = other;
            }
            backward.reverse();
            backward.extend(forward);
            forward = backward;
        }
        let mut poly = Polyline {
            points: forward.iter().map(|k| points[k]).collect(),
            closed,
        };
        if closed && poly.signed_area() < 0.0 {
            poly.points.reverse();
        }
        loops.push(poly);
    }
    loops
}

/// Signed distance on grid nodes; negative where the sign source is below
/// the level.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl SignedDistanceField {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Largest `||grad d| - 1|` by central differences over interior nodes
    /// whose distance to the interface exceeds `min_dist` and for which
    /// `keep(x, y)` holds.
    pub fn eikonal_residual(&self, min_dist: f64, keep: impl Fn(f64, f64) -> bool) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                if self.at(i, j).abs() < min_dist || !keep(g.x(i), g.y(j)) {
                    continue;
                }
                let dx = (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * g.h);
                let dy = (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * g.h);
                worst = worst.max((dx.hypot(dy) - 1.0).abs());
            }
        }
        worst
    }
}

/// Brute-force point-to-segment distance with the sign of
/// `sign_source - level`.
pub fn signed_distance(
    target: &LevelSet,
    grid: Grid2D,
    sign_source: &Field2D,
) -> Result<SignedDistanceField> {
    target.require_nonempty()?;
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = [grid.x(i), grid.y(j)];
            let d = target.distance(p);
            let s = sign_source.sample(p[0], p[1]) - target.level;
            values.push(if s < 0.0 { -d } else { d });
        }
    }
    Ok(SignedDistanceField { grid, values })
}

/// Segments bucketed on a square grid of cell size `reach`, for distance
/// queries that only matter within `reach` of the curve.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    reach: f64,
    origin: Point,
    buckets: HashMap<(i64, i64), Vec<[Point; 2]>>,
}

impl SegmentIndex {
    pub fn new(target: &LevelSet, reach: f64) -> Result<Self> {
        target.require_nonempty()?;
        if !(reach > 0.0) {
            return Err(GeometryError::InvalidArgument(
                "reach must be positive".into(),
            ));
        }
        let origin = target.segments[0][0];
        let mut buckets: HashMap<(i64, i64), Vec<[Point; 2]>> = HashMap::new();
        for seg in &target.segments {
            let cell = |p: Point| {
                (
                    ((p[0] - origin[0]) / reach).floor() as i64,
                    ((p[1] - origin[1]) / reach).floor() as i64,
                )
            };
            let (a, b) = (cell(seg[0]), cell(seg[1]));
            for cx in a.0.min(b.0)..=a.0.max(b.0) {
                for cy in a.1.min(b.1)..=a.1.max(b.1) {
                    buckets.entry((cx, cy)).or_default().push(*seg);
                }
            }
        }
        Ok(SegmentIndex {
            reach,
            origin,
            buckets,
        })
    }

    /// Distance to the curve if it is at most `reach`.
    pub fn distance_within(&self, p: Point) -> Option<f64> {
        let cx = ((p[0] - self.origin[0]) / self.reach).floor() as i64;
        let cy = ((p[1] - self.origin[1]) / self.reach).floor() as i64;
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(segs) = self.buckets.get(&(cx + dx, cy + dy)) {
                    for s in segs {
                        best = best.min(point_segment_distance(p, s[0], s[1]));
                    }
                }
            }
        }
        (best <= self.reach).then_some(best)
    }
}

/// Transition-layer measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerWidth {
    /// Largest extent of `{a_- + eta <= u <= a_+ - eta}` along the normal.
    pub max_width: f64,
    pub mean_width: f64,
    /// `area({a_- + eta <= u <= a_+ - eta}) / length(level set)`.
    pub area_width: f64,
}

/// Measures the transition layer around `level_set`. Normals come from the
/// extracted polyline and are sampled every `h / 4` out to `reach`.
pub fn layer_width(
    field: &Field2D,
    eta: f64,
    level_set: &LevelSet,
    zeros: Zeros,
    reach: f64,
) -> Result<LayerWidth> {
    level_set.require_nonempty()?;
    if !(eta > 0.0 && eta < zeros.eta0()) {
        return Err(GeometryError::InvalidArgument(format!(
            "eta must lie in (0, {})",
            zeros.eta0()
        )));
    }
    let lo = zeros.minus + eta;
    let hi = zeros.plus - eta;
    let g = &field.grid;
    let step = g.h / 4.0;
    let n_steps = (reach / step).ceil() as usize;
    let inside = |p: Point| p[0] >= g.x0 && p[0] <= g.x_max() && p[1] >= g.y0 && p[1] <= g.y_max();

    let mut widths = Vec::new();
    for poly in &level_set.loops {
        for k in 0..poly.points.len() {
            let p = poly.points[k];
            let mut n = poly.vertex_normal(k);
            if n == [0.0, 0.0] {
                continue;
            }
            // Orient the normal towards the plus phase.
            let probe = |s: f64| field.sample(p[0] + s * n[0], p[1] + s * n[1]);
            if probe(g.h) < probe(-g.h) {
                n = [-n[0], -n[1]];
            }
            let probe = |s: f64| field.sample(p[0] + s * n[0], p[1] + s * n[1]);
            let at = |s: f64| [p[0] + s * n[0], p[1] + s * n[1]];
            // Walk towards the plus phase until u exceeds hi.
            let mut s_plus = None;
            let mut prev = probe(0.0);
            for m in 1..=n_steps {
                let s = m as f64 * step;
                if !inside(at(s)) {
                    break;
                }
                let v = probe(s);
                if v > hi {
                    let t = if v != prev {
                        (hi - prev) / (v - prev)
                    } else {
                        1.0
                    };
                    s_plus = Some(s - step + t * step);
                    break;
                }
                prev = v;
            }
            let mut s_minus = None;
            let mut prev = probe(0.0);
            for m in 1..=n_steps {
                let s = -(m as f64) * step;
                if !inside(at(s)) {
                    break;
                }
                let v = probe(s);
                if v < lo {
                    let t = if v != prev {
                        (prev - lo) / (prev - v)
                    } else {
                        1.0
                    };
                    s_minus = Some(s + step - t * step);
                    break;
                }
                prev = v;
            }
            if let (Some(sp), Some(sm)) = (s_plus, s_minus) {
                widths.push(sp - sm);
            }
        }
    }
    if widths.is_empty() {
        return Err(GeometryError::EmptyLevelSet);
    }
    let max_width = widths.iter().copied().fold(0.0, f64::max);
    let mean_width = widths.iter().sum::<f64>() / widths.len() as f64;
    let count = field.u.iter().filter(|&&v| v >= lo && v <= hi).count();
    let area = count as f64 * g.h * g.h;
    Ok(LayerWidth {
        max_width,
        mean_width,
        area_width: area / level_set.total_length(),
    })
}

/// Largest distance from a node of `{a_- + eta <= u <= a_+ - eta}` to `curve`.
pub fn transition_distance(
    field: &Field2D,
    eta: f64,
    zeros: Zeros,
    curve: &LevelSet,
) -> Result<f64> {
    curve.require_nonempty()?;
    let lo = zeros.minus + eta;
    let hi = zeros.plus - eta;
    let g = &field.grid;
    let mut worst: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = field.at(i, j);
            if v >= lo && v <= hi {
                worst = worst.max(curve.distance([g.x(i), g.y(j)]));
            }
        }
    }
    Ok(worst)
}

/// Symmetric Hausdorff distance with both sets resampled at `spacing`.
pub fn hausdorff(a: &LevelSet, b: &LevelSet, spacing: f64) -> Result<f64> {
    a.require_nonempty()?;
    b.require_nonempty()?;
    let one_way = |from: &LevelSet, to: &LevelSet| -> f64 {
        from.loops
            .iter()
            .flat_map(|l| l.resample(spacing))
            .map(|p| to.distance(p))
            .fold(0.0, f64::max)
    };
    Ok(one_way(a, b).max(one_way(b, a)))
}

/// `||u - Phi||_{L^2}` with `Phi = a_-` inside the closed reference curve and
/// `a_+` outside, by the node trapezoid rule.
pub fn l2_step_distance(field: &Field2D, reference: &LevelSet, zeros: Zeros) -> Result<f64> {
    reference.require_nonempty()?;
    if reference.loops.iter().any(|l| !l.closed) {
        return Err(GeometryError::OpenCurve);
    }
    let g = &field.grid;
    let mut acc = 0.0;
    for j in 0..g.ny {
        let wy = if j == 0 || j == g.ny - 1 { 0.5 } else { 1.0 };
        for i in 0..g.nx {
            let wx = if i == 0 || i == g.nx - 1 { 0.5 } else { 1.0 };
            let p = [g.x(i), g.y(j)];
            let inside = reference.loops.iter().filter(|l| l.contains(p)).count() % 2 == 1;
            let phi = if inside { zeros.minus } else { zeros.plus };
            acc += wx * wy * (field.at(i, j) - phi).powi(2);
        }
    }
    Ok((acc * g.h * g.h).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_field_gives_vertical_line() {
        let g = Grid2D::unit_square(33).unwrap();
        let f = Field2D::from_fn(g, |x, _| x);
        let ls = extract_level_set(&f, 0.51);
        assert_eq!(ls.loops.len(), 1);
        assert!(!ls.loops[0].closed);
        assert!((ls.total_length() - 1.0).abs() < 1e-12);
        for s in &ls.segments {
            assert!((s[0][0] - 0.51).abs() < 1e-12);
        }
        let total: usize = ls.loops.iter().map(Polyline::segment_count).sum();
        assert_eq!(total, ls.segments.len());
    }

    #[test]
    fn constant_field_is_empty() {
        let g = Grid2D::unit_square(17).unwrap();
        let f = Field2D::from_fn(g, |_, _| 1.0);
        let ls = extract_level_set(&f, 0.0);
        assert!(ls.is_empty());
        assert_eq!(
            signed_distance(&ls, g, &f).unwrap_err(),
            GeometryError::EmptyLevelSet
        );
    }

    #[test]
    fn saddle_uses_cell_average() {
        let g = Grid2D::new(16, 16, 1.0, 0.0, 0.0).unwrap();
        // Checkerboard corners around cell (0,0) with a positive average.
        let f = Field2D::from_fn(g, |x, y| {
            if (x < 0.5 && y < 0.5) || (x > 0.5 && y > 0.5) {
                1.0
            } else if x < 1.5 && y < 1.5 {
                -0.5
            } else {
                1.0
            }
        });
        let ls = extract_level_set(&f, 0.0);
        // Center above: the two below corners are cut off individually.
        let cell: Vec<_> = ls
            .segments
            .iter()
            .filter(|s| s.iter().all(|p| p[0] <= 1.0 && p[1] <= 1.0))
            .collect();
        assert_eq!(cell.len(), 2);
    }

    #[test]
    fn hausdorff_of_concentric_circles() {
        let a = LevelSet::from_polylines(0.0, vec![Polyline::circle([0.5, 0.5], 0.3, 400)]);
        let b = LevelSet::from_polylines(0.0, vec![Polyline::circle([0.5, 0.5], 0.35, 400)]);
        assert!(hausdorff(&a, &a, 0.002).unwrap() < 1e-12);
        assert!((hausdorff(&a, &b, 0.002).unwrap() - 0.05).abs() < 1e-3);
    }

    #[test]
    fn segment_index_matches_brute_force_within_reach() {
        let ls = LevelSet::from_polylines(0.0, vec![Polyline::circle([0.5, 0.5], 0.3, 300)]);
        let index = SegmentIndex::new(&ls, 0.05).unwrap();
        for k in 0..400 {
            let p = [0.1 + 0.002 * k as f64, 0.47];
            let brute = ls.distance(p);
            match index.distance_within(p) {
                Some(d) => assert!((d - brute).abs() < 1e-15),
                None => assert!(brute > 0.05),
            }
        }
    }

    #[test]
    fn point_in_polygon_and_area() {
        let c = Polyline::circle([0.0, 0.0], 1.0, 1000);
        assert!(c.contains([0.1, 0.2]));
        assert!(!c.contains([1.1, 0.0]));
        assert!((c.signed_area() - std::f64::consts::PI).abs() < 1e-4);
    }

    #[test]
    fn exact_step_has_zero_l2_distance() {
        let g = Grid2D::unit_square(65).unwrap();
        let circle = Polyline::circle([0.5, 0.5], 0.3, 2000);
        let reference = LevelSet::from_polylines(0.0, vec![circle.clone()]);
        let zeros = Zeros {
            minus: -1.0,
            mid: 0.0,
            plus: 1.0,
        };
        let step = Field2D::from_fn(g, |x, y| if circle.contains([x, y]) { -1.0 } else { 1.0 });
        assert_eq!(l2_step_distance(&step, &reference, zeros).unwrap(), 0.0);
        let open = LevelSet::from_polylines(
            0.0,
            vec![Polyline {
                points: vec![[0.0, 0.0], [1.0, 1.0]],
                closed: false,
            }],
        );
        assert_eq!(
            l2_step_distance(&step, &open, zeros).unwrap_err(),
            GeometryError::OpenCurve
        );
    }
}
