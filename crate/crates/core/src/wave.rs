//! Traveling waves `m'' + c m' + f(m) + delta = 0`, `m(-inf) = a_-(delta)`,
//! `m(+inf) = a_+(delta)`, `m(0) = a(delta)`.
//!
//! The speed is found by two-sided shooting in the phase plane: one branch
//! leaves `a_-(delta)` along its unstable eigendirection, the other arrives
//! at `a_+(delta)` along its stable one (integrated backwards), and the
//! slopes of both branches are compared on the plane `m = a(delta)`. The
//! mismatch is strictly decreasing in `c`, so bisection on `c` converges to
//! the unique connection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::hermite;
use crate::reaction::{shifted_zeros, Bistable, ReactionError, Zeros};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("f + {delta} is not bistable: {source}")]
    NotBistable {
        delta: f64,
        #[source]
        source: ReactionError,
    },
    #[error("speed bisection failed to bracket a connection for delta = {delta}")]
    NoConnection { delta: f64 },
    #[error("delta {delta} outside the calibrated range [-{max}, {max}]")]
    OutOfCalibratedRange { delta: f64, max: f64 },
    #[error("nonlinearity is not balanced: integral of f between the stable zeros is {0:e}")]
    UnbalancedNonlinearity(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, WaveError>;

/// Default profile spacing; keeps the second-order residual near 1e-7.
pub const DEFAULT_DZ: f64 = 0.0025;
/// Distance from the saddle at which the shooting branches start.
const SADDLE_OFFSET: f64 = 1e-10;
/// Boundary mismatch required by the domain-enlargement loop.
const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub delta: f64,
    pub c: f64,
    /// Grid is `z_j = z_min + j dz`, symmetric about 0 and containing 0.
    pub z_min: f64,
    pub dz: f64,
    pub m: Vec<f64>,
    pub mz: Vec<f64>,
    /// `m_zz = -c m_z - f(m) - delta`, from the equation.
    pub mzz: Vec<f64>,
    pub a_minus_delta: f64,
    pub a_delta: f64,
    pub a_plus_delta: f64,
    /// Fitted rate in `|a_+(delta) - m(z)| <= C e^{-lambda z}`, `z >= 0`.
    pub lambda_fit: f64,
    /// Smallest `C` for the fitted `lambda` over the right half of the grid.
    pub tail_const: f64,
    /// Linearized decay rates at `a_-(delta)` (growth for `z -> -inf`) and
    /// `a_+(delta)` (decay for `z -> +inf`), both positive.
    pub rate_minus: f64,
    pub rate_plus: f64,
}

impl WaveProfile {
    pub fn z_max(&self) -> f64 {
        self.z_min + (self.m.len() - 1) as f64 * self.dz
    }

    pub fn z_grid(&self) -> Vec<f64> {
        (0..self.m.len())
            .map(|j| self.z_min + j as f64 * self.dz)
            .collect()
    }

    /// Index of the node `z = 0`.
    pub fn zero_index(&self) -> usize {
        (-self.z_min / self.dz).round() as usize
    }

    /// `(m, m_z)` at any `z`; outside the grid the linearized exponential
    /// tails are used.
    pub fn eval(&self, z: f64) -> (f64, f64) {
        let n = self.m.len();
        if z <= self.z_min {
            let gap = self.m[0] - self.a_minus_delta;
            let e = (self.rate_minus * (z - self.z_min)).exp();
            return (self.a_minus_delta + gap * e, self.rate_minus * gap * e);
        }
        let z_max = self.z_max();
        if z >= z_max {
            let gap = self.a_plus_delta - self.m[n - 1];
            let e = (-self.rate_plus * (z - z_max)).exp();
            return (self.a_plus_delta - gap * e, self.rate_plus * gap * e);
        }
        let s = (z - self.z_min) / self.dz;
        let i = (s.floor() as usize).min(n - 2);
        let x = s - i as f64;
        let m = hermite(
            self.m[i],
            self.m[i + 1],
            self.mz[i] * self.dz,
            self.mz[i + 1] * self.dz,
            x,
        );
        let mz = hermite(
            self.mz[i],
            self.mz[i + 1],
            self.mzz[i] * self.dz,
            self.mzz[i + 1] * self.dz,
            x,
        );
        (m, mz)
    }

    /// Second-order finite-difference residual `m'' + c m' + f(m) + delta`
    /// at interior nodes, sup norm.
    pub fn residual(&self, f: &Bistable) -> f64 {
        let h = self.dz;
        (1..self.m.len() - 1)
            .map(|j| {
                let mzz = (self.m[j + 1] - 2.0 * self.m[j] + self.m[j - 1]) / (h * h);
                let mz = (self.m[j + 1] - self.m[j - 1]) / (2.0 * h);
                (mzz + self.c * mz + f.f(self.m[j]) + self.delta).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Rows `(z, m, m_z)`.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        self.z_grid()
            .into_iter()
            .zip(self.m.iter().zip(&self.mz))
            .map(|(z, (&m, &mz))| [z, m, mz])
            .collect()
    }

    pub fn sidecar(&self) -> WaveSidecar {
        WaveSidecar {
            delta: self.delta,
            c: self.c,
            lambda_fit: self.lambda_fit,
            tail_const: self.tail_const,
            z_min: self.z_min,
            z_max: self.z_max(),
            dz: self.dz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveSidecar {
    pub delta: f64,
    pub c: f64,
    pub lambda_fit: f64,
    pub tail_const: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub dz: f64,
}

/// Phase-plane state `(m, p = m')` at position `z`.
#[derive(Debug, Clone, Copy)]
struct Node {
    z: f64,
    m: f64,
    p: f64,
}

struct Shooter<'a> {
    f: &'a Bistable,
    delta: f64,
    zeros: Zeros,
    h: f64,
}

enum Branch {
    Reached(Vec<Node>),
    /// The branch turned back before reaching the plane.
    Failed,
}

impl<'a> Shooter<'a> {
    fn rhs(&self, c: f64, m: f64, p: f64) -> (f64, f64) {
        (p, -c * p - self.f.f(m) - self.delta)
    }

    fn rk4(&self, c: f64, m: f64, p: f64, h: f64) -> (f64, f64) {
        let (k1m, k1p) = self.rhs(c, m, p);
        let (k2m, k2p) = self.rhs(c, m + 0.5 * h * k1m, p + 0.5 * h * k1p);
        let (k3m, k3p) = self.rhs(c, m + 0.5 * h * k2m, p + 0.5 * h * k2p);
        let (k4m, k4p) = self.rhs(c, m + h * k3m, p + h * k3p);
        (
            m + h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m),
            p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        )
    }

    /// One RK4 step with `m` as the independent variable, landing exactly on
    /// `m = target`: `dz/dm = 1/p`, `dp/dm = (-c p - f - delta)/p`.
    fn land(&self, c: f64, node: Node, target: f64) -> Node {
        let g = |m: f64, p: f64| (1.0 / p, (-c * p - self.f.f(m) - self.delta) / p);
        let k = target - node.m;
        let (m0, z0, p0) = (node.m, node.z, node.p);
        let (a1, b1) = g(m0, p0);
        let (a2, b2) = g(m0 + 0.5 * k, p0 + 0.5 * k * b1);
        let (a3, b3) = g(m0 + 0.5 * k, p0 + 0.5 * k * b2);
        let (a4, b4) = g(m0 + k, p0 + k * b3);
        Node {
            z: z0 + k / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
            m: target,
            p: p0 + k / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        }
    }

    fn rate_minus(&self, c: f64) -> f64 {
        let d = self.f.df(self.zeros.minus);
        0.5 * (-c + (c * c - 4.0 * d).sqrt())
    }

    fn rate_plus(&self, c: f64) -> f64 {
        let d = self.f.df(self.zeros.plus);
        // Stable eigenvalue is negative; return its magnitude.
        -0.5 * (-c - (c * c - 4.0 * d).sqrt())
    }

    fn max_steps(&self) -> usize {
        (200.0 / self.h) as usize
    }

    /// Forward branch from `a_-`, ending on `m = a`.
    fn left(&self, c: f64) -> Branch {
        let lam = self.rate_minus(c);
        let mut node = Node {
            z: 0.0,
            m: self.zeros.minus + SADDLE_OFFSET,
            p: lam * SADDLE_OFFSET,
        };
        let mut out = vec![node];
        for _ in 0..self.max_steps() {
            let (m, p) = self.rk4(c, node.m, node.p, self.h);
            if m >= self.zeros.mid {
                let last = self.land(c, node, self.zeros.mid);
                out.push(last);
                return Branch::Reached(out);
            }
            if p <= 0.0 {
                return Branch::Failed;
            }
            node = Node {
                z: node.z + self.h,
                m,
                p,
            };
            out.push(node);
        }
        Branch::Failed
    }

    /// Backward branch from `a_+`, ending on `m = a`. Nodes are returned in
    /// decreasing `z`.
    fn right(&self, c: f64) -> Branch {
        let lam = self.rate_plus(c);
        let mut node = Node {
            z: 0.0,
            m: self.zeros.plus - SADDLE_OFFSET,
            p: lam * SADDLE_OFFSET,
        };
        let mut out = vec![node];
        for _ in 0..self.max_steps() {
            let (m, p) = self.rk4(c, node.m, node.p, -self.h);
            if m <= self.zeros.mid {
                let last = self.land(c, node, self.zeros.mid);
                out.push(last);
                return Branch::Reached(out);
            }
            if p <= 0.0 {
                return Branch::Failed;
            }
            node = Node {
                z: node.z - self.h,
                m,
                p,
            };
            out.push(node);
        }
        Branch::Failed
    }

    /// Slope mismatch on the plane `m = a`; decreasing in `c`.
    fn mismatch(&self, c: f64) -> f64 {
        match (self.left(c), self.right(c)) {
            (Branch::Reached(l), Branch::Reached(r)) => l.last().unwrap().p - r.last().unwrap().p,
            (Branch::Failed, _) => -1e3,
            (_, Branch::Failed) => 1e3,
        }
    }
}

/// The zeros of `f + delta`, with a typed error.
pub fn zeros_of(f: &Bistable, delta: f64) -> Result<Zeros> {
    if delta == 0.0 {
        return Ok(f.zeros());
    }
    shifted_zeros(f, delta).map_err(|source| WaveError::NotBistable { delta, source })
}

/// `delta_0 = 0.8 min(-f(c_1), f(c_2))`, with `c_1 < c_2` the critical
/// points of `f`; three zeros persist exactly for `|delta|` below the min.
pub fn delta0(f: &Bistable) -> f64 {
    0.8 * f.bistability_limit()
}

/// Speed by bisection; returns the bracketing shooter for reuse.
fn find_speed(shooter: &Shooter<'_>, tol: f64) -> Result<f64> {
    let delta = shooter.delta;
    let scale = (shooter.f.df(shooter.zeros.minus).abs())
        .max(shooter.f.df(shooter.zeros.plus).abs())
        .sqrt();
    let mut lo = -scale;
    let mut hi = scale;
    let mut tries = 0;
    while shooter.mismatch(lo) <= 0.0 {
        lo *= 2.0;
        tries += 1;
        if tries > 20 {
            return Err(WaveError::NoConnection { delta });
        }
    }
    tries = 0;
    while shooter.mismatch(hi) >= 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 20 {
            return Err(WaveError::NoConnection { delta });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let g = shooter.mismatch(mid);
        if g == 0.0 {
            return Ok(mid);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solves for the wave at `delta` on a grid of `n_pts` nodes over
/// `[-z_half, z_half]`. `z_half` is doubled (keeping the spacing) until
/// both boundary values are within 1e-8 of `a_±(delta)`.
pub fn solve_wave(
    f: &Bistable,
    delta: f64,
    z_half: f64,
    n_pts: usize,
    tol: f64,
) -> Result<WaveProfile> {
    if n_pts < 5 || !(z_half > 0.0) || !(tol > 0.0) {
        return Err(WaveError::InvalidArgument(
            "solve_wave needs n_pts >= 5, z_half > 0, tol > 0".into(),
        ));
    }
    let zeros = zeros_of(f, delta)?;
    let half_nodes = (n_pts - 1) / 2;
    let dz = z_half / half_nodes as f64;
    let shooter = Shooter {
        f,
        delta,
        zeros,
        h: dz,
    };
    let c = find_speed(&shooter, tol)?;
    let (left, right) = match (shooter.left(c), shooter.right(c)) {
        (Branch::Reached(l), Branch::Reached(r)) => (l, r),
        _ => return Err(WaveError::NoConnection { delta }),
    };
    let rate_minus = shooter.rate_minus(c);
    let rate_plus = shooter.rate_plus(c);

    // Shift so that both branches meet at z = 0.
    let zl = left.last().unwrap().z;
    let zr = right.last().unwrap().z;
    let left: Vec<Node> = left.iter().map(|n| Node { z: n.z - zl, ..*n }).collect();
    let mut right: Vec<Node> = right.iter().map(|n| Node { z: n.z - zr, ..*n }).collect();
    right.reverse();

    let mut half = half_nodes;
    loop {
        let profile = resample(
            f, delta, c, zeros, &left, &right, dz, half, rate_minus, rate_plus,
        );
        let n = profile.m.len();
        let mismatch = (profile.m[0] - zeros.minus)
            .abs()
            .max((zeros.plus - profile.m[n - 1]).abs());
        if mismatch < BOUNDARY_TOL || half > 1 << 24 {
            return Ok(profile);
        }
        half *= 2;
    }
}

/// Solves with the default spacing and the domain heuristic
/// `Z = 10 / sqrt(min |f'(a_±)|)`.
pub fn solve_wave_default(f: &Bistable, delta: f64) -> Result<WaveProfile> {
    let z = f.zeros();
    let slope = f.df(z.minus).abs().min(f.df(z.plus).abs());
    let z_half = 10.0 / slope.sqrt();
    let half = (z_half / DEFAULT_DZ).ceil() as usize;
    solve_wave(f, delta, half as f64 * DEFAULT_DZ, 2 * half + 1, 1e-13)
}

#[allow(clippy::too_many_arguments)]
fn resample(
    f: &Bistable,
    delta: f64,
    c: f64,
    zeros: Zeros,
    left: &[Node],
    right: &[Node],
    dz: f64,
    half: usize,
    rate_minus: f64,
    rate_plus: f64,
) -> WaveProfile {
    let rhs = |m: f64, p: f64| -c * p - f.f(m) - delta;
    let sample = |branch: &[Node], z: f64, tail_left: bool| -> (f64, f64) {
        let first = branch[0];
        let last = branch[branch.len() - 1];
        if tail_left && z <= first.z {
            let e = (rate_minus * (z - first.z)).exp();
            let g = first.m - zeros.minus;
            return (zeros.minus + g * e, rate_minus * g * e);
        }
        if !tail_left && z >= last.z {
            let e = (-rate_plus * (z - last.z)).exp();
            let g = zeros.plus - last.m;
            return (zeros.plus - g * e, rate_plus * g * e);
        }
        // Locate the cell; nodes are uniformly spaced except the landing one.
        let idx = match branch.binary_search_by(|n| n.z.partial_cmp(&z).unwrap()) {
            Ok(i) => return (branch[i].m, branch[i].p),
            Err(i) => i.clamp(1, branch.len() - 1),
        };
        let (a, b) = (branch[idx - 1], branch[idx]);
        let w = b.z - a.z;
        let x = (z - a.z) / w;
        let m = hermite(a.m, b.m, a.p * w, b.p * w, x);
        let p = hermite(a.p, b.p, rhs(a.m, a.p) * w, rhs(b.m, b.p) * w, x);
        (m, p)
    };
    let n = 2 * half + 1;
    let mut m = Vec::with_capacity(n);
    let mut mz = Vec::with_capacity(n);
    for j in 0..n {
        let z = (j as f64 - half as f64) * dz;
        let (v, d) = if j < half {
            sample(left, z, true)
        } else if j == half {
            (zeros.mid, left.last().unwrap().p)
        } else {
            sample(right, z, false)
        };
        m.push(v);
        mz.push(d);
    }
    let mzz = m.iter().zip(&mz).map(|(&v, &d)| rhs(v, d)).collect();
    let mut profile = WaveProfile {
        delta,
        c,
        z_min: -(half as f64) * dz,
        dz,
        m,
        mz,
        mzz,
        a_minus_delta: zeros.minus,
        a_delta: zeros.mid,
        a_plus_delta: zeros.plus,
        lambda_fit: 0.0,
        tail_const: 0.0,
        rate_minus,
        rate_plus,
    };
    let (lambda, cst) = fit_tail(&profile);
    profile.lambda_fit = lambda;
    profile.tail_const = cst;
    profile
}

/// Least-squares decay rate of `a_+ - m` over nodes where the gap lies in
/// `[1e-7, 1e-3]`, and the smallest constant bounding the gap with it.
fn fit_tail(p: &WaveProfile) -> (f64, f64) {
    let i0 = p.zero_index();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in i0..p.m.len() {
        let gap = p.a_plus_delta - p.m[j];
        if (1e-7..=1e-3).contains(&gap) {
            xs.push(p.z_min + j as f64 * p.dz);
            ys.push(gap.ln());
        }
    }
    if xs.len() < 2 {
        return (p.rate_plus, 0.0);
    }
    let lambda = -crate::noise::ls_slope(&xs, &ys);
    let cst = (i0..p.m.len())
        .map(|j| {
            let z = p.z_min + j as f64 * p.dz;
            (p.a_plus_delta - p.m[j]).abs() * (lambda * z).exp()
        })
        .fold(0.0, f64::max);
    (lambda, cst)
}

/// `(delta, c(delta))` pairs.
pub fn wave_speed_curve(f: &Bistable, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let d0 = delta0(f);
    deltas
        .iter()
        .map(|&d| {
            if d.abs() > d0 {
                return Err(WaveError::OutOfCalibratedRange { delta: d, max: d0 });
            }
            Ok((d, speed_only(f, d)?))
        })
        .collect()
}

/// Wave speed without building the profile.
pub fn speed_only(f: &Bistable, delta: f64) -> Result<f64> {
    let zeros = zeros_of(f, delta)?;
    let shooter = Shooter {
        f,
        delta,
        zeros,
        h: DEFAULT_DZ,
    };
    find_speed(&shooter, 1e-13)
}

/// `c_0 = (a_+ - a_-) / int_{a_-}^{a_+} sqrt(2 F(u)) du`.
pub fn c0(f: &Bistable) -> Result<f64> {
    let bal = f.balance_integral();
    if bal.abs() > 1e-8 {
        return Err(WaveError::UnbalancedNonlinearity(bal));
    }
    let z = f.zeros();
    let integrand = |u: f64| (2.0 * f.potential(u).max(0.0)).sqrt();
    // Split at a so each half has a single endpoint zero of the integrand.
    let left = quadrature::double_exponential::integrate(integrand, z.minus, z.mid, 1e-13).integral;
    let right = quadrature::double_exponential::integrate(integrand, z.mid, z.plus, 1e-13).integral;
    Ok(z.span() / (left + right))
}

/// Natural cubic spline on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    pub x0: f64,
    pub h: f64,
    pub y: Vec<f64>,
    /// Second derivatives at the nodes.
    pub m2: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut m2 = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the tridiagonal system (1, 4, 1) m = 6 d2y / h^2.
            let k = n - 2;
            let mut cp = vec![0.0; k];
            let mut dp = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                let denom = if i == 0 { 4.0 } else { 4.0 - cp[i - 1] };
                cp[i] = 1.0 / denom;
                dp[i] = if i == 0 {
                    rhs / denom
                } else {
                    (rhs - dp[i - 1]) / denom
                };
            }
            for i in (0..k).rev() {
                m2[i + 1] = if i == k - 1 {
                    dp[i]
                } else {
                    dp[i] - cp[i] * m2[i + 2]
                };
            }
        }
        CubicSpline { x0, h, y, m2 }
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.y.len() - 1) as f64 * self.h
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let a = 1.0 - t;
        let h2 = self.h * self.h;
        a * self.y[i]
            + t * self.y[i + 1]
            + ((a * a * a - a) * self.m2[i] + (t * t * t - t) * self.m2[i + 1]) * h2 / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = ((x - self.x0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let a = 1.0 - t;
        (self.y[i + 1] - self.y[i]) / self.h
            + ((1.0 - 3.0 * a * a) * self.m2[i] + (3.0 * t * t - 1.0) * self.m2[i + 1]) * self.h
                / 6.0
    }
}

/// Cached interpolant of `c(delta)` on `[-delta_max, delta_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedCurve {
    pub delta_max: f64,
    pub spline: CubicSpline,
}

impl SpeedCurve {
    /// Samples `c` on `2 n + 1` uniform nodes.
    pub fn calibrate(f: &Bistable, delta_max: f64, n: usize) -> Result<Self> {
        let d0 = delta0(f);
        if !(delta_max > 0.0) || delta_max > d0 || n == 0 {
            return Err(WaveError::OutOfCalibratedRange {
                delta: delta_max,
                max: d0,
            });
        }
        let h = delta_max / n as f64;
        let deltas: Vec<f64> = (0..=2 * n).map(|i| (i as f64 - n as f64) * h).collect();
        let speeds = wave_speed_curve(f, &deltas)?
            .into_iter()
            .map(|(_, c)| c)
            .collect();
        Ok(SpeedCurve {
            delta_max,
            spline: CubicSpline::natural(-delta_max, h, speeds),
        })
    }

    /// Default calibration over `[-delta_0, delta_0]` with 64 nodes per side.
    pub fn for_bistable(f: &Bistable) -> Result<Self> {
        SpeedCurve::calibrate(f, delta0(f), 64)
    }

    pub fn c_of(&self, delta: f64) -> Result<f64> {
        if delta.abs() > self.delta_max * (1.0 + 1e-12) {
            return Err(WaveError::OutOfCalibratedRange {
                delta,
                max: self.delta_max,
            });
        }
        Ok(self.spline.eval(delta))
    }

    /// `-c(eps xi) / eps`, the forcing in the interface law of motion.
    pub fn forcing(&self, eps: f64, xi: f64) -> Result<f64> {
        Ok(-self.c_of(eps * xi)? / eps)
    }
}

/// Profiles `m(z; delta)` on a uniform `delta` grid, interpolated with
/// 4-point Lagrange polynomials in `delta`.
#[derive(Debug, Clone)]
pub struct WaveFamily {
    pub delta_max: f64,
    pub h: f64,
    pub profiles: Vec<WaveProfile>,
}

impl WaveFamily {
    pub fn build(f: &Bistable, delta_max: f64, n: usize) -> Result<Self> {
        let d0 = delta0(f);
        if !(delta_max > 0.0) || delta_max > d0 || n < 2 {
            return Err(WaveError::OutOfCalibratedRange {
                delta: delta_max,
                max: d0,
            });
        }
        let h = delta_max / n as f64;
        let profiles = (0..=2 * n)
            .map(|i| solve_wave_default(f, (i as f64 - n as f64) * h))
            .collect::<Result<Vec<_>>>()?;
        Ok(WaveFamily {
            delta_max,
            h,
            profiles,
        })
    }

    pub fn center(&self) -> &WaveProfile {
        &self.profiles[self.profiles.len() / 2]
    }

    fn stencil(&self, delta: f64) -> Result<(usize, [f64; 4], [f64; 4])> {
        if delta.abs() > self.delta_max * (1.0 + 1e-12) {
            return Err(WaveError::OutOfCalibratedRange {
                delta,
                max: self.delta_max,
            });
        }
        let n = self.profiles.len();
        let s = (delta + self.delta_max) / self.h;
        let i0 = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let x = s - i0 as f64;
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let mut w = [0.0; 4];
        let mut dw = [0.0; 4];
        for k in 0..4 {
            let mut num = 1.0;
            let mut den = 1.0;
            for j in 0..4 {
                if j != k {
                    num *= x - nodes[j];
                    den *= nodes[k] - nodes[j];
                }
            }
            w[k] = num / den;
            let mut d = 0.0;
            for l in 0..4 {
                if l == k {
                    continue;
                }
                let mut prod = 1.0;
                for j in 0..4 {
                    if j != k && j != l {
                        prod *= x - nodes[j];
                    }
                }
                d += prod;
            }
            dw[k] = d / den / self.h;
        }
        Ok((i0, w, dw))
    }

    /// `(m, m_z, m_delta)` at `(z, delta)`.
    pub fn eval(&self, z: f64, delta: f64) -> Result<(f64, f64, f64)> {
        let (i0, w, dw) = self.stencil(delta)?;
        let (mut m, mut mz, mut md) = (0.0, 0.0, 0.0);
        for k in 0..4 {
            let (v, d) = self.profiles[i0 + k].eval(z);
            m += w[k] * v;
            mz += w[k] * d;
            md += dw[k] * v;
        }
        Ok((m, mz, md))
    }

    /// Interpolated speed and zeros at `delta`.
    pub fn speed(&self, delta: f64) -> Result<f64> {
        let (i0, w, _) = self.stencil(delta)?;
        Ok((0..4).map(|k| w[k] * self.profiles[i0 + k].c).sum())
    }

    pub fn a_plus(&self, delta: f64) -> Result<f64> {
        let (i0, w, _) = self.stencil(delta)?;
        Ok((0..4)
            .map(|k| w[k] * self.profiles[i0 + k].a_plus_delta)
            .sum())
    }

    pub fn a_minus(&self, delta: f64) -> Result<f64> {
        let (i0, w, _) = self.stencil(delta)?;
        Ok((0..4)
            .map(|k| w[k] * self.profiles[i0 + k].a_minus_delta)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::make_cubic;

    /// Middle root of `u - u^3 + delta`.
    fn cubic_mid_root(delta: f64) -> f64 {
        // Trigonometric form of the three real roots of u^3 - u - delta = 0.
        let r = 2.0 / 3f64.sqrt();
        let phi = ((3.0 * 3f64.sqrt() / 2.0) * delta).acos() / 3.0;
        r * (phi - 2.0 * std::f64::consts::PI / 3.0).cos()
    }

    #[test]
    fn trig_root_oracle_is_a_root() {
        for &d in &[-0.2, -0.01, 0.0, 0.05, 0.3] {
            let a = cubic_mid_root(d);
            assert!((a - a * a * a + d).abs() < 1e-12, "{d}: {a}");
            assert!(a.abs() < 0.6);
        }
    }

    #[test]
    fn balanced_cubic_wave_is_tanh() {
        let f = make_cubic();
        let w = solve_wave_default(&f, 0.0).unwrap();
        assert!(w.c.abs() < 1e-8, "c = {}", w.c);
        let mut err: f64 = 0.0;
        let mut derr: f64 = 0.0;
        for (j, z) in w.z_grid().into_iter().enumerate() {
            let t = (z / 2f64.sqrt()).tanh();
            err = err.max((w.m[j] - t).abs());
            derr = derr.max((w.mz[j] - (1.0 - t * t) / 2f64.sqrt()).abs());
        }
        assert!(err < 1e-6, "sup error {err}");
        assert!(derr < 1e-6, "derivative error {derr}");
        assert_eq!(w.m[w.zero_index()], 0.0);
        assert!(w.residual(&f) < 1e-6, "residual {}", w.residual(&f));
        assert!(w.m.windows(2).all(|p| p[1] > p[0]));
        assert!((w.lambda_fit - 2f64.sqrt()).abs() < 0.05 * 2f64.sqrt());
    }

    #[test]
    fn speed_matches_exact_cubic_formula() {
        // For u - u^3 + delta the speed is (3 / sqrt 2) a(delta).
        let f = make_cubic();
        for &d in &[0.01, -0.05, 0.2] {
            let c = speed_only(&f, d).unwrap();
            let exact = 3.0 / 2f64.sqrt() * cubic_mid_root(d);
            assert!((c - exact).abs() < 1e-7, "delta {d}: {c} vs {exact}");
        }
        let w = solve_wave_default(&f, 0.01).unwrap();
        assert!((w.c + 0.0212).abs() < 0.02 * 0.0212);
    }

    #[test]
    fn c0_for_cubic() {
        let f = make_cubic();
        assert!((c0(&f).unwrap() - 3.0 / 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn spline_reproduces_cubics_in_the_interior() {
        let xs: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let s = CubicSpline::natural(0.0, 0.1, xs.iter().map(|x| 2.0 * x - 1.0).collect());
        assert!((s.eval(0.537) - 0.074).abs() < 1e-14);
        assert!((s.derivative(1.3) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn family_matches_direct_profile() {
        let f = make_cubic();
        let fam = WaveFamily::build(&f, 0.04, 4).unwrap();
        let direct = solve_wave_default(&f, 0.013).unwrap();
        for &z in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let (m, _, _) = fam.eval(z, 0.013).unwrap();
            assert!((m - direct.eval(z).0).abs() < 1e-5, "z {z}");
        }
        assert!(fam.eval(0.0, 0.05).is_err());
    }
}
