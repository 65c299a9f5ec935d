//! Sharp-interface reference dynamics: the curvature SPDE in the Gauss-map
//! parametrization, forced curve shortening by marker tracking, the radius
//! SDE for circles and stopping-time monitoring.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, LevelSet, Point, Polyline};
use crate::noise::MildNoisePath;
use crate::wave::{SpeedCurve, WaveError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("curvature lost positivity at t = {time}")]
    ConvexityLost { time: f64 },
    #[error("front curve self-intersects")]
    SelfIntersection,
    #[error("front curve collapsed (area {area})")]
    Collapse { area: f64 },
    #[error("time step {dt} exceeds the stability bound {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("non-convex segment at marker {index}")]
    NonConvexSegment { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Wave(#[from] WaveError),
}

pub type Result<T> = std::result::Result<T, FlowError>;

/// A strictly convex closed curve given by its curvature as a function of
/// the normal angle on a uniform grid of `[0, 2 pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussMapCurve {
    pub kappa: Vec<f64>,
    /// The point whose outward normal is `(1, 0)`.
    pub base_point: Point,
    pub time: f64,
}

impl GaussMapCurve {
    pub fn new(kappa: Vec<f64>, base_point: Point) -> Result<Self> {
        if kappa.len() < 8 {
            return Err(FlowError::InvalidArgument(
                "need at least 8 angle nodes".into(),
            ));
        }
        if kappa.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
            return Err(FlowError::ConvexityLost { time: 0.0 });
        }
        Ok(GaussMapCurve {
            kappa,
            base_point,
            time: 0.0,
        })
    }

    pub fn from_fn(n: usize, base_point: Point, g: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 2.0 * PI / n as f64;
        GaussMapCurve::new((0..n).map(|k| g(k as f64 * h)).collect(), base_point)
    }

    /// A circle of radius `radius` centered at `center`.
    pub fn circle(n: usize, center: Point, radius: f64) -> Result<Self> {
        GaussMapCurve::from_fn(n, [center[0] + radius, center[1]], |_| 1.0 / radius)
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn h_theta(&self) -> f64 {
        2.0 * PI / self.kappa.len() as f64
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.h_theta()
    }

    pub fn max_kappa(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_kappa(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max kappa / min kappa`, equal to 1 exactly for circles.
    pub fn roundness(&self) -> f64 {
        self.max_kappa() / self.min_kappa()
    }

    /// Largest stable step, `0.1 h_theta^2 / (max kappa)^2`.
    pub fn max_dt(&self) -> f64 {
        0.1 * self.h_theta().powi(2) / self.max_kappa().powi(2)
    }

    /// `max_theta max(kappa, 1 / kappa, |kappa_theta|)`.
    pub fn kappa_bar(&self) -> f64 {
        let n = self.kappa.len();
        let h = self.h_theta();
        (0..n)
            .map(|k| {
                let kt = (self.kappa[(k + 1) % n] - self.kappa[(k + n - 1) % n]) / (2.0 * h);
                self.kappa[k].max(1.0 / self.kappa[k]).max(kt.abs())
            })
            .fold(0.0, f64::max)
    }
}

fn kappa_drift(kappa: &[f64], h: f64, out: &mut [f64]) {
    let n = kappa.len();
    let inv_h2 = 1.0 / (h * h);
    for k in 0..n {
        let km = kappa[(k + n - 1) % n];
        let kp = kappa[(k + 1) % n];
        let c = kappa[k];
        out[k] = c * c * (kp - 2.0 * c + km) * inv_h2 + c * c * c;
    }
}

/// One Stratonovich-Heun step of `d kappa = (kappa^2 kappa_thth + kappa^3) dt
/// + coef kappa^2 o dW`.
pub fn step_kappa_spde(
    curve: &GaussMapCurve,
    dt: f64,
    coef: f64,
    dw: f64,
) -> Result<GaussMapCurve> {
    let max = curve.max_dt();
    if dt > max * (1.0 + 1e-12) {
        return Err(FlowError::StepTooLarge { dt, max });
    }
    let n = curve.len();
    let h = curve.h_theta();
    let k0 = &curve.kappa;
    let mut d0 = vec![0.0; n];
    kappa_drift(k0, h, &mut d0);
    let pred: Vec<f64> = (0..n)
        .map(|k| k0[k] + dt * d0[k] + coef * k0[k] * k0[k] * dw)
        .collect();
    let mut d1 = vec![0.0; n];
    kappa_drift(&pred, h, &mut d1);
    let time = curve.time + dt;
    let kappa: Vec<f64> = (0..n)
        .map(|k| {
            let g = 0.5 * coef * (k0[k] * k0[k] + pred[k] * pred[k]);
            k0[k] + 0.5 * dt * (d0[k] + d1[k]) + g * dw
        })
        .collect();
    if kappa.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
        return Err(FlowError::ConvexityLost { time });
    }
    Ok(GaussMapCurve {
        kappa,
        base_point: curve.base_point,
        time,
    })
}

/// Reconstruction of a convex curve from its Gauss-map curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub curve: FrontCurve,
    /// `|closed integral of (1/kappa) e^{i theta}| / closed integral of 1/kappa`.
    pub closure_defect: f64,
}

/// `x(theta) = x(0) + int_0^theta (1/kappa) (-sin, cos)`, with the
/// antiderivative computed spectrally; the closure defect (zero mode of the
/// integrand) is removed, which spreads it linearly over the markers.
pub fn reconstruct_curve(curve: &GaussMapCurve) -> Result<Reconstruction> {
    if curve.kappa.iter().any(|&k| !(k > 0.0)) {
        return Err(FlowError::ConvexityLost { time: curve.time });
    }
    let n = curve.len();
    let h = curve.h_theta();
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|k| {
            let th = k as f64 * h;
            Complex::new(-th.sin(), th.cos()) / curve.kappa[k]
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let total_length: f64 = curve.kappa.iter().map(|k| h / k).sum();
    let closure_defect = (buf[0] * h).norm() / total_length;
    // Antiderivative mode by mode; the Nyquist mode has no consistent
    // antiderivative on the grid and is dropped.
    let mut anti = vec![Complex::new(0.0, 0.0); n];
    for (m, slot) in anti.iter_mut().enumerate() {
        let freq = if m <= n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        };
        if freq == 0 || (n % 2 == 0 && m == n / 2) {
            continue;
        }
        *slot = buf[m] / Complex::new(0.0, freq as f64);
    }
    planner.plan_fft_inverse(n).process(&mut anti);
    let scale = 1.0 / n as f64;
    let x0 = anti[0] * scale;
    let points = anti
        .iter()
        .map(|z| {
            let d = *z * scale - x0;
            [curve.base_point[0] + d.re, curve.base_point[1] + d.im]
        })
        .collect();
    Ok(Reconstruction {
        curve: FrontCurve::new(points)?,
        closure_defect,
    })
}

/// A closed counterclockwise polyline of markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontCurve {
    pub points: Vec<Point>,
    pub steps: usize,
}

/// Curvature of the circle through five points by the algebraic (Kasa) fit,
/// signed positive when the center lies to the left of `p[4] - p[0]`.
pub fn five_point_curvature(p: &[Point; 5]) -> f64 {
    let c = p[2];
    let scale = ((p[4][0] - p[0][0]).hypot(p[4][1] - p[0][1]) / 4.0).max(f64::MIN_POSITIVE);
    // Normal equations for x^2 + y^2 + D x + E y + F = 0 in scaled local
    // coordinates.
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for q in p {
        let x = (q[0] - c[0]) / scale;
        let y = (q[1] - c[1]) / scale;
        let row = [x, y, 1.0];
        let rhs = -(x * x + y * y);
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            b[i] += row[i] * rhs;
        }
    }
    let Some([d, e, f]) = solve3(a, b) else {
        return 0.0;
    };
    let r2 = 0.25 * (d * d + e * e) - f;
    if !(r2 > 0.0) || !r2.is_finite() {
        return 0.0;
    }
    let kappa = 1.0 / (r2.sqrt() * scale);
    let center = [-0.5 * d, -0.5 * e];
    let t = [p[4][0] - p[0][0], p[4][1] - p[0][1]];
    let left = -t[1] * center[0] + t[0] * center[1];
    if left >= 0.0 {
        kappa
    } else {
        -kappa
    }
}

/// Signed curvature of the circle through three points, positive for left
/// turns.
pub fn three_point_curvature(a: Point, b: Point, c: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let bc = [c[0] - b[0], c[1] - b[1]];
    let ac = [c[0] - a[0], c[1] - a[1]];
    let cross = ab[0] * bc[1] - ab[1] * bc[0];
    let denom = ab[0].hypot(ab[1]) * bc[0].hypot(bc[1]) * ac[0].hypot(ac[1]);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let norm = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    for col in 0..3 {
        let piv =
            (col..3).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= 1e-13 * norm {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let m = a[r][col] / a[col][col];
            for k in col..3 {
                a[r][k] -= m * a[col][k];
            }
            b[r] -= m * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

impl FrontCurve {
    /// Orients the markers counterclockwise.
    pub fn new(mut points: Vec<Point>) -> Result<Self> {
        if points.len() < 5 {
            return Err(FlowError::InvalidArgument("need at least 5 markers".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidArgument("non-finite marker".into()));
        }
        let poly = Polyline {
            points: points.clone(),
            closed: true,
        };
        if poly.signed_area() < 0.0 {
            points.reverse();
        }
        Ok(FrontCurve { points, steps: 0 })
    }

    pub fn circle(center: Point, radius: f64, n: usize) -> Result<Self> {
        FrontCurve::new(Polyline::circle(center, radius, n).points)
    }

    pub fn from_polyline(poly: &Polyline) -> Result<Self> {
        if !poly.closed {
            return Err(FlowError::InvalidArgument("front curves are closed".into()));
        }
        FrontCurve::new(poly.points.clone())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn polyline(&self) -> Polyline {
        Polyline {
            points: self.points.clone(),
            closed: true,
        }
    }

    pub fn to_level_set(&self, level: f64) -> LevelSet {
        LevelSet::from_polylines(level, vec![self.polyline()])
    }

    pub fn area(&self) -> f64 {
        self.polyline().signed_area()
    }

    pub fn length(&self) -> f64 {
        self.polyline().length()
    }

    /// Mean marker spacing.
    pub fn spacing(&self) -> f64 {
        self.length() / self.points.len() as f64
    }

    fn neighbour(&self, k: usize, offset: isize) -> Point {
        let n = self.points.len() as isize;
        self.points[((k as isize + offset).rem_euclid(n)) as usize]
    }

    pub fn curvature(&self, k: usize) -> f64 {
        five_point_curvature(&[
            self.neighbour(k, -2),
            self.neighbour(k, -1),
            self.points[k],
            self.neighbour(k, 1),
            self.neighbour(k, 2),
        ])
    }

    /// Circumcircle curvature of the marker and its two neighbours; this is
    /// the estimate used to move markers.
    pub fn motion_curvature(&self, k: usize) -> f64 {
        three_point_curvature(self.neighbour(k, -1), self.points[k], self.neighbour(k, 1))
    }

    pub fn curvatures(&self) -> Vec<f64> {
        (0..self.points.len()).map(|k| self.curvature(k)).collect()
    }

    /// Unit inward normal (left of the tangent).
    pub fn inward_normal(&self, k: usize) -> Point {
        let a = self.neighbour(k, -1);
        let b = self.neighbour(k, 1);
        let t = [b[0] - a[0], b[1] - a[1]];
        let l = t[0].hypot(t[1]);
        [-t[1] / l, t[0] / l]
    }

    /// Pairwise test of non-adjacent segments.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (self.points[j], self.points[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Uniform arclength redistribution keeping marker 0 and the marker count.
    pub fn redistribute(&mut self) {
        let n = self.points.len();
        let mut cum = vec![0.0; n + 1];
        for k in 0..n {
            let a = self.points[k];
            let b = self.points[(k + 1) % n];
            cum[k + 1] = cum[k] + (b[0] - a[0]).hypot(b[1] - a[1]);
        }
        let total = cum[n];
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        for m in 0..n {
            let s = total * m as f64 / n as f64;
            while seg + 1 < n && cum[seg + 1] <= s {
                seg += 1;
            }
            let a = self.points[seg];
            let b = self.points[(seg + 1) % n];
            let len = cum[seg + 1] - cum[seg];
            let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
        self.points = out;
    }

    /// Mean distance from the markers to their centroid.
    pub fn mean_radius(&self) -> f64 {
        self.polyline().mean_radius()
    }
}

/// Markers per redistribution.
pub const REDISTRIBUTE_EVERY: usize = 10;

/// One explicit step of `V = kappa + forcing` (inward normal velocity).
pub fn step_front(curve: &FrontCurve, dt: f64, forcing: f64) -> Result<FrontCurve> {
    if !forcing.is_finite() {
        return Err(FlowError::InvalidArgument("forcing must be finite".into()));
    }
    let h = curve.spacing();
    let max = 0.1 * h * h;
    if dt > max * (1.0 + 1e-12) {
        return Err(FlowError::StepTooLarge { dt, max });
    }
    let points = (0..curve.len())
        .map(|k| {
            let v = curve.motion_curvature(k) + forcing;
            let n = curve.inward_normal(k);
            let p = curve.points[k];
            [p[0] + dt * v * n[0], p[1] + dt * v * n[1]]
        })
        .collect();
    let mut next = FrontCurve {
        points,
        steps: curve.steps + 1,
    };
    if next.steps % REDISTRIBUTE_EVERY == 0 {
        next.redistribute();
    }
    let area = next.area();
    if area < (3.0 * h).powi(2) {
        return Err(FlowError::Collapse { area });
    }
    if !next.is_simple() {
        return Err(FlowError::SelfIntersection);
    }
    Ok(next)
}

/// `-c(eps xi(t + time_offset)) / eps` from one shared noise path.
#[derive(Debug, Clone)]
pub struct FlowForcing {
    pub eps: f64,
    pub noise: Arc<MildNoisePath>,
    pub speed: Arc<SpeedCurve>,
    pub time_offset: f64,
}

impl FlowForcing {
    pub fn new(eps: f64, noise: Arc<MildNoisePath>, speed: Arc<SpeedCurve>) -> Self {
        FlowForcing {
            eps,
            noise,
            speed,
            time_offset: 0.0,
        }
    }

    /// The same forcing read `offset` later in the noise path.
    pub fn shifted(&self, offset: f64) -> Self {
        FlowForcing {
            time_offset: self.time_offset + offset,
            ..self.clone()
        }
    }

    pub fn xi(&self, t: f64) -> f64 {
        if self.noise.is_off() {
            0.0
        } else {
            self.noise.xi(t + self.time_offset)
        }
    }

    pub fn xi_dot(&self, t: f64) -> f64 {
        if self.noise.is_off() {
            0.0
        } else {
            self.noise.xi_dot(t + self.time_offset)
        }
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.speed.forcing(self.eps, self.xi(t))?)
    }
}

/// What drives the radius SDE.
#[derive(Debug, Clone, Copy)]
pub enum RadiusDrive<'a> {
    Off,
    /// `dR = (-1/R - forcing(t)) dt`.
    Forcing(&'a FlowForcing),
    /// `dR = -dt/R - coef dW_n`, one increment per step.
    Brownian {
        increments: &'a [f64],
        coef: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusPath {
    pub dt: f64,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    /// Time at which `R` fell below the extinction guard.
    pub extinct_at: Option<f64>,
}

impl RadiusPath {
    pub fn last(&self) -> f64 {
        *self.r.last().unwrap()
    }

    /// Linear interpolation in time; `None` past the end of the path.
    pub fn at(&self, t: f64) -> Option<f64> {
        let s = t / self.dt;
        let i = s.floor() as usize;
        if i + 1 >= self.r.len() {
            return (i + 1 == self.r.len() && (s - i as f64).abs() < 1e-9).then(|| self.last());
        }
        let w = s - i as f64;
        Some((1.0 - w) * self.r[i] + w * self.r[i + 1])
    }
}

/// Extinction guard `10 sqrt(dt)`.
pub fn extinction_guard(dt: f64) -> f64 {
    10.0 * dt.sqrt()
}

/// Euler-Maruyama for the circle radius under `V = 1/R + forcing`.
pub fn radius_sde(r0: f64, drive: RadiusDrive<'_>, dt: f64, t_end: f64) -> Result<RadiusPath> {
    if !(r0 > 0.0) || !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(FlowError::InvalidArgument(
            "need r0 > 0, dt > 0, t_end >= 0".into(),
        ));
    }
    let steps = (t_end / dt).round() as usize;
    if let RadiusDrive::Brownian { increments, .. } = drive {
        if increments.len() < steps {
            return Err(FlowError::InvalidArgument(format!(
                "{} increments for {steps} steps",
                increments.len()
            )));
        }
    }
    let guard = extinction_guard(dt);
    let mut t = vec![0.0];
    let mut r = vec![r0];
    let mut extinct_at = None;
    let mut rr = r0;
    for n in 0..steps {
        let tn = n as f64 * dt;
        rr += match drive {
            RadiusDrive::Off => -dt / rr,
            RadiusDrive::Forcing(f) => dt * (-1.0 / rr - f.at(tn)?),
            RadiusDrive::Brownian { increments, coef } => -dt / rr - coef * increments[n],
        };
        t.push(tn + dt);
        r.push(rr);
        if rr < guard {
            extinct_at = Some(tn + dt);
            break;
        }
    }
    Ok(RadiusPath {
        dt,
        t,
        r,
        extinct_at,
    })
}

/// Which clause stopped the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopClause {
    Curvature,
    Boundary,
}

/// Axis-aligned domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn unit() -> Self {
        Rect {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub fn boundary_distance(&self, p: Point) -> f64 {
        (p[0] - self.x0)
            .min(self.x1 - p[0])
            .min(p[1] - self.y0)
            .min(self.y1 - p[1])
    }
}

/// First time `kappa_bar > N` or the curve comes within `1/N` of the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingMonitor {
    pub n_threshold: f64,
    pub times: Vec<f64>,
    pub kappa_bar: Vec<f64>,
    pub boundary_distance: Vec<f64>,
    pub triggered_at: Option<f64>,
    pub clause: Option<StopClause>,
}

impl StoppingMonitor {
    pub fn new(n_threshold: f64) -> Self {
        StoppingMonitor {
            n_threshold,
            times: Vec::new(),
            kappa_bar: Vec::new(),
            boundary_distance: Vec::new(),
            triggered_at: None,
            clause: None,
        }
    }

    /// Records one observation; returns true once triggered.
    pub fn observe(&mut self, t: f64, kappa_bar: f64, boundary_distance: f64) -> bool {
        self.times.push(t);
        self.kappa_bar.push(kappa_bar);
        self.boundary_distance.push(boundary_distance);
        if self.triggered_at.is_none() {
            if kappa_bar > self.n_threshold {
                self.triggered_at = Some(t);
                self.clause = Some(StopClause::Curvature);
            } else if boundary_distance < 1.0 / self.n_threshold {
                self.triggered_at = Some(t);
                self.clause = Some(StopClause::Boundary);
            }
        }
        self.triggered_at.is_some()
    }
}

/// `kappa_bar` of a marker curve. `d kappa / d theta = kappa_s / kappa` by the
/// chain rule `d theta / d s = kappa`.
pub fn front_kappa_bar(curve: &FrontCurve) -> Result<f64> {
    let kappa = curve.curvatures();
    let n = kappa.len();
    if let Some(index) = kappa.iter().position(|&k| k <= 0.0) {
        return Err(FlowError::NonConvexSegment { index });
    }
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let a = curve.neighbour(k, -1);
        let b = curve.neighbour(k, 1);
        let ds = (b[0] - a[0]).hypot(b[1] - a[1]);
        let ks = (kappa[(k + 1) % n] - kappa[(k + n - 1) % n]) / ds;
        worst = worst
            .max(kappa[k])
            .max(1.0 / kappa[k])
            .max((ks / kappa[k]).abs());
    }
    Ok(worst)
}

pub fn front_boundary_distance(curve: &FrontCurve, domain: Rect) -> f64 {
    curve
        .points
        .iter()
        .map(|&p| domain.boundary_distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Runs the monitor over a recorded history of `(t, curve)`.
pub fn monitor_stopping(
    history: &[(f64, FrontCurve)],
    domain: Rect,
    n_threshold: f64,
) -> Result<StoppingMonitor> {
    if history.is_empty() {
        return Err(FlowError::InvalidArgument("empty curve history".into()));
    }
    let mut monitor = StoppingMonitor::new(n_threshold);
    for (t, curve) in history {
        let kb = front_kappa_bar(curve)?;
        monitor.observe(*t, kb, front_boundary_distance(curve, domain));
    }
    Ok(monitor)
}

/// Distance from `p` to a closed marker curve.
pub fn front_distance(curve: &FrontCurve, p: Point) -> f64 {
    let n = curve.points.len();
    (0..n)
        .map(|k| point_segment_distance(p, curve.points[k], curve.points[(k + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curvature_blows_up_like_closed_form() {
        let mut c = GaussMapCurve::circle(64, [0.0, 0.0], 1.0).unwrap();
        let dt = 1e-5;
        for _ in 0..25_000 {
            c = step_kappa_spde(&c, dt, 0.0, 0.0).unwrap();
        }
        assert!((c.time - 0.25).abs() < 1e-9);
        for &k in &c.kappa {
            assert!((k - 2f64.sqrt()).abs() < 1e-4, "{k}");
        }
    }

    #[test]
    fn reconstruct_circles() {
        let c = GaussMapCurve::circle(512, [0.0, 0.0], 1.0).unwrap();
        let rec = reconstruct_curve(&c).unwrap();
        for p in &rec.curve.points {
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-6);
        }
        let half = GaussMapCurve::circle(512, [0.3, 0.2], 0.5).unwrap();
        let rec = reconstruct_curve(&half).unwrap();
        for p in &rec.curve.points {
            assert!(((p[0] - 0.3).hypot(p[1] - 0.2) - 0.5).abs() < 1e-9);
        }
        assert!(rec.closure_defect < 1e-12);
    }

    #[test]
    fn perturbed_curve_closes_and_reestimates_curvature() {
        let c = GaussMapCurve::from_fn(512, [1.0, 0.0], |t| 1.0 + 0.1 * (2.0 * t).cos()).unwrap();
        let rec = reconstruct_curve(&c).unwrap();
        assert!(rec.closure_defect < 1e-6);
        let est = rec.curve.curvatures();
        let worst = est
            .iter()
            .zip(&c.kappa)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn five_point_fit_exact_on_circle() {
        let pts: Vec<Point> = (0..5)
            .map(|k| {
                let th = 0.3 + 0.05 * k as f64;
                [2.0 + 0.7 * th.cos(), -1.0 + 0.7 * th.sin()]
            })
            .collect();
        let k = five_point_curvature(&[pts[0], pts[1], pts[2], pts[3], pts[4]]);
        assert!((k - 1.0 / 0.7).abs() < 1e-6);
        let line = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]];
        assert_eq!(five_point_curvature(&line), 0.0);
    }

    #[test]
    fn shrinking_circle_front() {
        let mut c = FrontCurve::circle([0.5, 0.5], 0.5, 128).unwrap();
        let dt = 1e-5;
        for _ in 0..5000 {
            c = step_front(&c, dt, 0.0).unwrap();
        }
        assert!(
            (c.mean_radius() - 0.15f64.sqrt()).abs() < 1e-3,
            "{} {}",
            c.mean_radius(),
            c.curvature(0)
        );
    }

    #[test]
    fn radius_sde_closed_forms() {
        let p = radius_sde(0.4, RadiusDrive::Off, 1e-6, 0.05).unwrap();
        assert!((p.last() - 0.06f64.sqrt()).abs() < 1e-4);
        let p = radius_sde(1.0, RadiusDrive::Off, 1e-5, 1.0).unwrap();
        assert!((p.extinct_at.unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn monitor_triggers_on_curvature() {
        let mut m = StoppingMonitor::new(10.0);
        assert!(!m.observe(0.0, 5.0, 0.3));
        assert!(m.observe(0.1, 11.0, 0.3));
        assert!(m.observe(0.2, 1.0, 0.3));
        assert_eq!(m.triggered_at, Some(0.1));
        assert_eq!(m.clause, Some(StopClause::Curvature));
    }

    #[test]
    fn self_intersection_detected() {
        let bow = FrontCurve {
            points: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [-0.5, 0.5]],
            steps: 0,
        };
        assert!(!bow.is_simple());
        assert!(FrontCurve::circle([0.0, 0.0], 1.0, 50).unwrap().is_simple());
    }
}
