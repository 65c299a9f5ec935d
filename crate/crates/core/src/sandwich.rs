//! Wave-shaped sub- and super-solutions
//! `u^{+-} = m((d +- eps p(t)) / eps; eps xi(t)) +- q(t)` around a reference
//! flow, their constants, and numerical certification of the differential
//! inequalities and of the ordering against simulated fields.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field2D, Grid2D};
use crate::geometry::Point;
use crate::interface_flow::{FlowError, FlowForcing, RadiusPath};
use crate::reaction::Bistable;
use crate::wave::{WaveError, WaveFamily};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandwichError {
    #[error("sigma constant {which} is not positive ({value})")]
    NoValidSigma { which: String, value: f64 },
    #[error("side condition failed: {0}")]
    SideConditionFail(String),
    #[error("eps xi = {delta} outside the calibrated range {max}")]
    DeltaOutOfRange { delta: f64, max: f64 },
    #[error("snapshot at t = {time} precedes the generation time {t_eps}")]
    MisalignedTimes { time: f64, t_eps: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

pub type Result<T> = std::result::Result<T, SandwichError>;

/// Constants of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichParams {
    pub rho: f64,
    pub b: f64,
    pub a1: f64,
    pub beta: f64,
    pub sigma: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sup_df: f64,
    pub sup_d2f: f64,
    /// `|delta|` range over which `a1` was scanned.
    pub delta_range: f64,
    pub k: f64,
    pub l: f64,
    pub d0: f64,
    pub eps0: f64,
    pub horizon: f64,
    /// `eps0^2 L e^{L T} <= 1`.
    pub ep0m_holds: bool,
    /// `e^{L T} + K <= d0 / (2 eps0)`.
    pub ga_holds: bool,
}

impl SandwichParams {
    pub fn with_l(mut self, l: f64) -> Self {
        self.l = l;
        self.refresh_side_conditions();
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self.refresh_side_conditions();
        self
    }

    fn refresh_side_conditions(&mut self) {
        let growth = (self.l * self.horizon).exp();
        self.ep0m_holds = self.eps0 * self.eps0 * self.l * growth <= 1.0;
        self.ga_holds = growth + self.k <= self.d0 / (2.0 * self.eps0);
    }

    /// Longest horizon with `eps0^2 L e^{L T} <= 1`, if any.
    pub fn ep0m_horizon(eps0: f64, l: f64) -> Option<f64> {
        let x = eps0 * eps0 * l;
        (x < 1.0).then(|| (1.0 / x).ln() / l)
    }

    /// Longest horizon with `e^{L T} + K <= d0 / (2 eps0)`, if any.
    pub fn ga_horizon(&self, l: f64) -> Option<f64> {
        let room = self.d0 / (2.0 * self.eps0) - self.k;
        (room > 1.0).then(|| room.ln() / l)
    }

    pub fn p(&self, eps: f64, t: f64) -> f64 {
        -(-self.beta * t / (eps * eps)).exp() + (self.l * t).exp() + self.k
    }

    pub fn p_t(&self, eps: f64, t: f64) -> f64 {
        self.beta / (eps * eps) * (-self.beta * t / (eps * eps)).exp() + self.l * (self.l * t).exp()
    }

    pub fn q(&self, eps: f64, t: f64) -> f64 {
        self.sigma
            * (self.beta * (-self.beta * t / (eps * eps)).exp()
                + eps * eps * self.l * (self.l * t).exp())
    }

    pub fn q_t(&self, eps: f64, t: f64) -> f64 {
        let e2 = eps * eps;
        self.sigma
            * (-self.beta * self.beta / e2 * (-self.beta * t / e2).exp()
                + e2 * self.l * self.l * (self.l * t).exp())
    }
}

/// Margin band `b = 0.2 (a_+ - a_-) / 2`.
pub fn default_band(f: &Bistable) -> f64 {
    0.1 * f.zeros().span()
}

/// Scans the constants. `a1` is the minimum of `m_z` over profiles with
/// `|delta| <= delta_range` where `m` lies in `[a_- + b, a_+ - b]`; the
/// returned parameters carry `L = 1` until [`select_l`] runs.
pub fn compute_params(
    f: &Bistable,
    family: &WaveFamily,
    delta_range: f64,
    horizon: f64,
    eps0: f64,
    k: f64,
    d0: f64,
) -> Result<SandwichParams> {
    if !(k > 1.0) {
        return Err(SandwichError::InvalidArgument(format!(
            "K = {k} must exceed 1"
        )));
    }
    if delta_range > family.delta_max {
        return Err(SandwichError::DeltaOutOfRange {
            delta: delta_range,
            max: family.delta_max,
        });
    }
    let z = f.zeros();
    let b = default_band(f);
    let n = 1000;
    let mut rho = f64::INFINITY;
    for i in 0..=n {
        let s = b * i as f64 / n as f64;
        rho = rho.min(-f.df(z.minus + s)).min(-f.df(z.plus - s));
    }
    let a1 = scan_a1(family, z.minus + b, z.plus - b, delta_range)?;
    let sup_df = f.sup_abs_df(z.minus - 1.0, z.plus + 1.0, 20_000);
    let sup_d2f = f.sup_abs_d2f(z.minus - 1.0, z.plus + 1.0, 20_000);
    let beta = rho / 4.0;
    let sigma0 = a1 / (rho + sup_df);
    let sigma1 = 1.0 / (2.0 * (beta + 1.0));
    let sigma2 = 4.0 * beta / (sup_d2f * (beta + 1.0));
    for (which, value) in [("sigma0", sigma0), ("sigma1", sigma1), ("sigma2", sigma2)] {
        if !(value > 0.0) {
            return Err(SandwichError::NoValidSigma {
                which: which.into(),
                value,
            });
        }
    }
    let mut params = SandwichParams {
        rho,
        b,
        a1,
        beta,
        sigma: sigma0.min(sigma1).min(sigma2),
        sigma0,
        sigma1,
        sigma2,
        sup_df,
        sup_d2f,
        delta_range,
        k,
        l: 1.0,
        d0,
        eps0,
        horizon,
        ep0m_holds: false,
        ga_holds: false,
    };
    params.refresh_side_conditions();
    Ok(params)
}

fn scan_a1(family: &WaveFamily, lo: f64, hi: f64, delta_range: f64) -> Result<f64> {
    let n_delta = if delta_range > 0.0 { 16 } else { 0 };
    let mut a1 = f64::INFINITY;
    for j in 0..=n_delta {
        let delta = if n_delta == 0 {
            0.0
        } else {
            -delta_range + 2.0 * delta_range * j as f64 / n_delta as f64
        };
        let profile = &family.profiles[0];
        let (z_lo, z_hi) = (profile.z_min, profile.z_max());
        let steps = 20_000;
        let mut inside_prev: Option<(f64, f64)> = None;
        for i in 0..=steps {
            let zz = z_lo + (z_hi - z_lo) * i as f64 / steps as f64;
            let (m, mz, _) = family.eval(zz, delta)?;
            if m >= lo && m <= hi {
                a1 = a1.min(mz);
            }
            // Band edges fall between samples; interpolate m_z there.
            if let Some((m_prev, mz_prev)) = inside_prev {
                for edge in [lo, hi] {
                    if (m_prev - edge) * (m - edge) < 0.0 {
                        let w = (edge - m_prev) / (m - m_prev);
                        a1 = a1.min(mz_prev + w * (mz - mz_prev));
                    }
                }
            }
            inside_prev = Some((m, mz));
        }
    }
    Ok(a1)
}

/// `phi(s) = s` on `|s| <= d0`, `+-2 d0` beyond `2 d0`, increasing and C^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceCutoff {
    pub d0: f64,
}

impl DistanceCutoff {
    /// `(phi, phi', phi'')` at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let a = s.abs();
        let sign = s.signum();
        if a <= self.d0 {
            return (s, 1.0, 0.0);
        }
        if a >= 2.0 * self.d0 {
            return (sign * 2.0 * self.d0, 0.0, 0.0);
        }
        // phi' = 1 - S(tau) + B(tau) / 2 with S the quintic smooth step and
        // B = 30 tau^2 (1 - tau)^2; both integrate to 1/2 over [0, 1].
        let tau = (a - self.d0) / self.d0;
        let s_int = tau.powi(6) - 3.0 * tau.powi(5) + 2.5 * tau.powi(4);
        let b_int = 30.0 * (tau.powi(3) / 3.0 - tau.powi(4) / 2.0 + tau.powi(5) / 5.0);
        let phi_abs = self.d0 + self.d0 * (tau - s_int + 0.5 * b_int);
        let s_val = tau.powi(3) * (10.0 - 15.0 * tau + 6.0 * tau * tau);
        let b_val = 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau);
        let s_der = 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau);
        let b_der = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau);
        let d1 = (1.0 - s_val + 0.5 * b_val).max(0.0);
        let d2 = (-s_der + 0.5 * b_der) / self.d0;
        (sign * phi_abs, d1, sign * d2)
    }
}

/// Raw signed distance to the reference flow and its derivatives.
#[derive(Debug, Clone)]
pub enum FlowShape {
    /// Front `x = X(t)`, minus phase on the left, moving with velocity
    /// `-forcing`.
    Planar {
        x0: f64,
        forcing: Option<FlowForcing>,
    },
    /// Circle with the radius path of the radius SDE.
    Circle {
        center: Point,
        radius: RadiusPath,
        forcing: FlowForcing,
    },
}

/// `d^eps = phi(d~)` with `d~` the signed distance to the reference flow.
#[derive(Debug, Clone)]
pub struct DistanceModel {
    pub shape: FlowShape,
    pub cutoff: DistanceCutoff,
}

/// `d`, `d_t`, `Laplacian d`, `|grad d|^2` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEval {
    pub d: f64,
    pub d_t: f64,
    pub lap: f64,
    pub grad2: f64,
}

impl DistanceModel {
    pub fn new(shape: FlowShape, d0: f64) -> Self {
        DistanceModel {
            shape,
            cutoff: DistanceCutoff { d0 },
        }
    }

    /// Reference-flow horizon.
    pub fn t_max(&self) -> f64 {
        match &self.shape {
            FlowShape::Planar { .. } => f64::INFINITY,
            FlowShape::Circle { radius, .. } => *radius.t.last().unwrap(),
        }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<DistanceEval> {
        let (raw, raw_t, raw_lap) = match &self.shape {
            FlowShape::Planar { x0, forcing } => {
                let v = match forcing {
                    Some(fc) => -fc.at(t)?,
                    None => 0.0,
                };
                // Constant forcing: the front moves uniformly.
                (x - x0 - v * t, -v, 0.0)
            }
            FlowShape::Circle {
                center,
                radius,
                forcing,
            } => {
                let r_t = radius.at(t).ok_or_else(|| {
                    SandwichError::InvalidArgument(format!("t = {t} beyond the reference flow"))
                })?;
                let dr = -1.0 / r_t - forcing.at(t)?;
                let r = (x - center[0]).hypot(y - center[1]);
                let lap = if r > 0.0 { 1.0 / r } else { 0.0 };
                (r - r_t, -dr, lap)
            }
        };
        let (d, p1, p2) = self.cutoff.eval(raw);
        Ok(DistanceEval {
            d,
            d_t: p1 * raw_t,
            lap: p2 + p1 * raw_lap,
            grad2: p1 * p1,
        })
    }
}

/// The pair `u^{+-}` for one noise path and reference flow.
#[derive(Debug, Clone)]
pub struct SubSuperPair {
    pub params: SandwichParams,
    pub eps: f64,
    pub family: Arc<WaveFamily>,
    pub f: Bistable,
    pub distance: DistanceModel,
    /// Noise seen by the pair: `xi(t)` is read as `forcing.xi(t)`.
    pub forcing: FlowForcing,
}

/// The four terms of `L u^{+-}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualTerms {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
}

impl ResidualTerms {
    pub fn total(&self) -> f64 {
        self.e1 + self.e2 + self.e3 + self.e4
    }
}

impl SubSuperPair {
    fn delta(&self, t: f64) -> Result<f64> {
        let delta = self.eps * self.forcing.xi(t);
        if delta.abs() > self.family.delta_max {
            return Err(SandwichError::DeltaOutOfRange {
                delta,
                max: self.family.delta_max,
            });
        }
        Ok(delta)
    }

    /// `(u^-, u^+)` at `(x, y, t)`.
    pub fn eval_pair(&self, x: f64, y: f64, t: f64) -> Result<(f64, f64)> {
        let delta = self.delta(t)?;
        let d = self.distance.eval(x, y, t)?.d;
        let p = self.params.p(self.eps, t);
        let q = self.params.q(self.eps, t);
        let (m_minus, _, _) = self.family.eval((d - self.eps * p) / self.eps, delta)?;
        let (m_plus, _, _) = self.family.eval((d + self.eps * p) / self.eps, delta)?;
        Ok((m_minus - q, m_plus + q))
    }

    /// Exact continuum residual terms of `u^+` (`upper = true`) or `u^-`.
    pub fn residual_terms(&self, x: f64, y: f64, t: f64, upper: bool) -> Result<ResidualTerms> {
        let eps = self.eps;
        let delta = self.delta(t)?;
        let de = self.distance.eval(x, y, t)?;
        let s = if upper { 1.0 } else { -1.0 };
        let p = self.params.p(eps, t);
        let p_t = self.params.p_t(eps, t);
        let q = self.params.q(eps, t);
        let q_t = self.params.q_t(eps, t);
        let (m, mz, md) = self.family.eval((de.d + s * eps * p) / eps, delta)?;
        let c = self.family.speed(delta)?;
        let mzz = -c * mz - self.f.f(m) - delta;
        let e1 = s * (mz * p_t + q_t) - (self.f.f(m + s * q) - self.f.f(m)) / (eps * eps);
        let e2 = (1.0 - de.grad2) * mzz / (eps * eps);
        let e3 = (de.d_t - de.lap + c / eps) * mz / eps;
        let e4 = eps * self.forcing.xi_dot(t) * md;
        Ok(ResidualTerms { e1, e2, e3, e4 })
    }

    pub fn residual(&self, x: f64, y: f64, t: f64, upper: bool) -> Result<f64> {
        Ok(self.residual_terms(x, y, t, upper)?.total())
    }

    /// `L u = u_t - Laplacian u - f(u) / eps^2 - xi / eps` with centered
    /// differences of step `dt` in time and the 5-point stencil of step `h`.
    pub fn residual_fd(&self, x: f64, y: f64, t: f64, upper: bool, h: f64, dt: f64) -> Result<f64> {
        let u = |x: f64, y: f64, t: f64| -> Result<f64> {
            let (lo, hi) = self.eval_pair(x, y, t)?;
            Ok(if upper { hi } else { lo })
        };
        let c = u(x, y, t)?;
        let u_t = (u(x, y, t + dt)? - u(x, y, t - dt)?) / (2.0 * dt);
        let lap = (u(x + h, y, t)? + u(x - h, y, t)? + u(x, y + h, t)? + u(x, y - h, t)? - 4.0 * c)
            / (h * h);
        let eps = self.eps;
        Ok(u_t - lap - self.f.f(c) / (eps * eps) - self.forcing.xi(t) / eps)
    }
}

/// Probe points and times for the continuum residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProbes {
    pub points: Vec<Point>,
    pub times: Vec<f64>,
}

impl ResidualProbes {
    /// Points along a ray from `center` with spacing `eps / 8` within
    /// `band` of `radius` and `eps` elsewhere; times spread geometrically over
    /// the initial `eps^2 / beta` layer and uniformly after it.
    pub fn radial(
        center: Point,
        r_max: f64,
        eps: f64,
        beta: f64,
        horizon: f64,
        n_times: usize,
    ) -> Self {
        let mut points = Vec::new();
        let mut r = 0.0;
        while r <= r_max {
            points.push([center[0] + r, center[1]]);
            r += eps / 8.0;
        }
        ResidualProbes {
            points,
            times: probe_times(eps, beta, horizon, n_times),
        }
    }
}

pub fn probe_times(eps: f64, beta: f64, horizon: f64, n: usize) -> Vec<f64> {
    let layer = (eps * eps / beta).min(horizon);
    let mut times = vec![0.0];
    for k in 0..n {
        times.push(layer * 1e-3 * 1e3f64.powf(k as f64 / n as f64));
    }
    for k in 1..=n {
        times.push(layer + (horizon - layer) * k as f64 / n as f64);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    times
}

/// Extremes of the continuum residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumResidual {
    pub min_plus: f64,
    pub max_minus: f64,
    pub n_probes: usize,
    /// Floating-point tolerance `1e-9 / eps^2`.
    pub tol: f64,
}

impl ContinuumResidual {
    pub fn passes(&self) -> bool {
        self.min_plus >= -self.tol && self.max_minus <= self.tol
    }
}

pub fn continuum_residual(
    pair: &SubSuperPair,
    probes: &ResidualProbes,
) -> Result<ContinuumResidual> {
    let mut min_plus = f64::INFINITY;
    let mut max_minus = f64::NEG_INFINITY;
    for &t in &probes.times {
        for p in &probes.points {
            min_plus = min_plus.min(pair.residual(p[0], p[1], t, true)?);
            max_minus = max_minus.max(pair.residual(p[0], p[1], t, false)?);
        }
    }
    Ok(ContinuumResidual {
        min_plus,
        max_minus,
        n_probes: probes.points.len() * probes.times.len(),
        tol: 1e-9 / (pair.eps * pair.eps),
    })
}

/// Outcome of the `L` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LSelection {
    pub l: f64,
    pub horizon: f64,
    pub residual: ContinuumResidual,
}

/// Smallest `L = 2^k`, `k = 0..=10`, whose continuum residual passes on the
/// probes over `[0, T_L]`, where `T_L` is the largest horizon up to `t_max`
/// on which both side conditions hold. `make_pair` builds the pair for given params,
/// `make_probes` the probes for a horizon.
pub fn select_l(
    params: SandwichParams,
    t_max: f64,
    make_pair: impl Fn(SandwichParams) -> Result<SubSuperPair>,
    make_probes: impl Fn(f64) -> ResidualProbes,
) -> Result<LSelection> {
    let mut last = None;
    for k in 0..=10 {
        let l = 2f64.powi(k);
        let Some(h_l) = SandwichParams::ep0m_horizon(params.eps0, l) else {
            break;
        };
        let Some(h_ga) = params.ga_horizon(l) else {
            return Err(SandwichError::SideConditionFail(format!(
                "K = {:.3} leaves no room below d0/(2 eps0) = {:.3}",
                params.k,
                params.d0 / (2.0 * params.eps0)
            )));
        };
        let horizon = t_max.min(h_l).min(h_ga);
        let pair = make_pair(params.with_l(l).with_horizon(horizon))?;
        let residual = continuum_residual(&pair, &make_probes(horizon))?;
        last = Some((l, residual));
        if residual.passes() {
            return Ok(LSelection {
                l,
                horizon,
                residual,
            });
        }
    }
    let detail = match last {
        Some((l, r)) => format!(
            "no L <= {l} gives a nonnegative residual (min L u+ = {:.3e}, max L u- = {:.3e})",
            r.min_plus, r.max_minus
        ),
        None => "eps0^2 L >= 1 for L = 1".to_string(),
    };
    Err(SandwichError::SideConditionFail(detail))
}

/// Finite-difference residual report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub min_plus: f64,
    pub max_minus: f64,
    /// Richardson estimate `(4/3) max |R_h - R_{h/2}|` of the stencil error.
    pub budget: f64,
    pub h: f64,
    pub dt_probe: f64,
    pub n_probes: usize,
    pub pass: bool,
}

/// Evaluates `L u^{+-}` by finite differences at every `stride`-th interior
/// node of `grid` and at `times`, on steps `(h, dt)` and `(h/2, dt/2)`.
pub fn residual_check(
    pair: &SubSuperPair,
    grid: &Grid2D,
    times: &[f64],
    stride: usize,
) -> Result<ResidualReport> {
    let stride = stride.max(1);
    let p = pair.params;
    let dt_probe = 1e-2 * (pair.eps * pair.eps / p.beta).min(1.0 / p.l);
    let h = grid.h;
    let mut min_plus = f64::INFINITY;
    let mut max_minus = f64::NEG_INFINITY;
    let mut budget: f64 = 0.0;
    let mut n = 0;
    for &t in times {
        let t = t.max(dt_probe);
        for j in (1..grid.ny - 1).step_by(stride) {
            for i in (1..grid.nx - 1).step_by(stride) {
                let (x, y) = (grid.x(i), grid.y(j));
                for upper in [true, false] {
                    let coarse = pair.residual_fd(x, y, t, upper, h, dt_probe)?;
                    let fine = pair.residual_fd(x, y, t, upper, h / 2.0, dt_probe / 2.0)?;
                    budget = budget.max(4.0 / 3.0 * (coarse - fine).abs());
                    if upper {
                        min_plus = min_plus.min(fine);
                    } else {
                        max_minus = max_minus.max(fine);
                    }
                }
                n += 1;
            }
        }
    }
    let budget = budget + 1e-9 / (pair.eps * pair.eps);
    Ok(ResidualReport {
        min_plus,
        max_minus,
        budget,
        h,
        dt_probe,
        n_probes: n,
        pass: min_plus >= -budget && max_minus <= budget,
    })
}

/// Nodewise ordering `u^- - tol <= u <= u^+ + tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub tol: f64,
    pub snapshots: usize,
    pub violations: usize,
    /// `min(u - u^-, u^+ - u)` over all nodes and snapshots.
    pub worst_margin: f64,
    pub times: Vec<f64>,
}

/// Checks snapshots taken at `t + t_eps` against the pair at `t`.
pub fn sandwich_check(
    snapshots: &[Field2D],
    pair: &SubSuperPair,
    t_eps: f64,
    dt: f64,
) -> Result<SandwichReport> {
    if snapshots.is_empty() {
        return Err(SandwichError::InvalidArgument("no snapshots".into()));
    }
    let tol = 2.0 * (snapshots[0].grid.h + dt);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut times = Vec::new();
    for snap in snapshots {
        let t = snap.time - t_eps;
        if t < -0.5 * dt {
            return Err(SandwichError::MisalignedTimes {
                time: snap.time,
                t_eps,
            });
        }
        let t = t.max(0.0);
        times.push(t);
        let g = &snap.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (lo, hi) = pair.eval_pair(g.x(i), g.y(j), t)?;
                let u = snap.at(i, j);
                let margin = (u - lo).min(hi - u);
                worst = worst.min(margin);
                if margin < -tol {
                    violations += 1;
                }
            }
        }
    }
    Ok(SandwichReport {
        tol,
        snapshots: snapshots.len(),
        violations,
        worst_margin: worst,
        times,
    })
}

/// Smallest `M_1` with `d(x,0) >= M_1 eps => u_0 >= a_eps + M_0 eps` and
/// `d(x,0) <= -M_1 eps => u_0 <= a_eps - M_0 eps` over the grid nodes;
/// `d` is the signed distance to `{u_0 = a_eps}`.
pub fn calibrate_m1(
    u0: &Field2D,
    d: impl Fn(f64, f64) -> f64,
    a_eps: f64,
    m0: f64,
    eps: f64,
) -> f64 {
    let g = &u0.grid;
    let mut m1: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = (g.x(i), g.y(j));
            let dist = d(x, y);
            let u = u0.at(i, j);
            if dist > 0.0 && u < a_eps + m0 * eps {
                m1 = m1.max(dist / eps);
            }
            if dist < 0.0 && u > a_eps - m0 * eps {
                m1 = m1.max(-dist / eps);
            }
        }
    }
    m1
}

/// `K = max(2, 4 M_1, M_1 + z_H)`, where `z_H` is the smallest shift with
/// `m(z_H; delta) >= a_+(delta) - sigma beta / 2` and
/// `m(-z_H; delta) <= a_-(delta) + sigma beta / 2`. The last term makes
/// `u^-(x,0) <= H^-` and `H^+ <= u^+(x,0)` hold.
pub fn calibrate_k(
    m1: f64,
    family: &WaveFamily,
    params: &SandwichParams,
    delta: f64,
) -> Result<f64> {
    let half = params.sigma * params.beta / 2.0;
    let (a_minus, a_plus) = (family.a_minus(delta)?, family.a_plus(delta)?);
    let reaches = |s: f64| -> Result<bool> {
        let (hi, _, _) = family.eval(s, delta)?;
        let (lo, _, _) = family.eval(-s, delta)?;
        Ok(hi >= a_plus - half && lo <= a_minus + half)
    };
    let z_max = family.center().z_max();
    if !reaches(z_max)? {
        return Err(SandwichError::InvalidArgument(format!(
            "profile does not reach the H bounds within |z| <= {z_max}"
        )));
    }
    let (mut a, mut b) = (0.0, z_max);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if reaches(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(2f64.max(4.0 * m1).max(m1 + b))
}

/// Post-generation step bounds `H^-(x) <= u <= H^+(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBoundReport {
    pub violations: usize,
    pub worst_margin: f64,
}

/// Compares `u` with `H^{+-}` built from the initial distance `d` and the
/// plateaus `(a_-, a_+)`.
pub fn step_bound_check(
    u: &Field2D,
    d: impl Fn(f64, f64) -> f64,
    plateaus: (f64, f64),
    params: &SandwichParams,
    m1: f64,
    eps: f64,
) -> StepBoundReport {
    let (minus, plus) = plateaus;
    let half = params.sigma * params.beta / 2.0;
    let g = &u.grid;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let dist = d(g.x(i), g.y(j));
            let h_plus = if dist >= -m1 * eps { plus } else { minus } + half;
            let h_minus = if dist >= m1 * eps { plus } else { minus } - half;
            let v = u.at(i, j);
            let margin = (v - h_minus).min(h_plus - v);
            worst = worst.min(margin);
            if margin < 0.0 {
                violations += 1;
            }
        }
    }
    StepBoundReport {
        violations,
        worst_margin: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_continuous_and_monotone() {
        let c = DistanceCutoff { d0: 0.1 };
        let mut prev = c.eval(-0.3).0;
        for k in 1..=6000 {
            let s = -0.3 + 0.6 * k as f64 / 6000.0;
            let (v, d1, _) = c.eval(s);
            assert!(v >= prev - 1e-15);
            assert!(d1 >= 0.0, "{s} {d1}");
            prev = v;
        }
        for s in [0.1, 0.2, -0.1, -0.2] {
            let (a, da, dda) = c.eval(s - 1e-9);
            let (b, db, ddb) = c.eval(s + 1e-9);
            assert!((a - b).abs() < 1e-8 && (da - db).abs() < 1e-6 && (dda - ddb).abs() < 1e-4);
        }
        assert!((c.eval(0.2).0 - 0.2).abs() < 1e-15);
        // phi' is the derivative of phi.
        for s in [0.13, 0.17, -0.15] {
            let fd = (c.eval(s + 1e-6).0 - c.eval(s - 1e-6).0) / 2e-6;
            assert!((fd - c.eval(s).1).abs() < 1e-6);
            let fd2 = (c.eval(s + 1e-6).1 - c.eval(s - 1e-6).1) / 2e-6;
            assert!((fd2 - c.eval(s).2).abs() < 1e-5);
        }
    }

    #[test]
    fn q_is_sigma_eps2_p_t() {
        let p = SandwichParams {
            rho: 0.92,
            b: 0.2,
            a1: 0.2546,
            beta: 0.23,
            sigma: 0.02,
            sigma0: 0.02,
            sigma1: 0.4,
            sigma2: 0.06,
            sup_df: 11.0,
            sup_d2f: 12.0,
            delta_range: 0.0,
            k: 3.0,
            l: 8.0,
            d0: 0.1,
            eps0: 0.02,
            horizon: 0.05,
            ep0m_holds: true,
            ga_holds: true,
        };
        for k in 0..100 {
            let t = 0.05 * k as f64 / 100.0;
            let lhs = p.q(0.02, t);
            let rhs = p.sigma * 0.02 * 0.02 * p.p_t(0.02, t);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            assert!(p.p(0.02, t) >= p.k - 1.0);
        }
        assert_eq!(p.p(0.02, 0.0), p.k);
        assert!((p.q(0.02, 0.0) - p.sigma * (p.beta + 0.02 * 0.02 * p.l)).abs() < 1e-15);
    }
}
