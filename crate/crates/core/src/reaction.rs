//! Bistable nonlinearities, their shifted versions, and the pure-reaction
//! dynamics that drive the generation of interfaces.
//!
//! A [`Bistable`] carries `f`, `f'`, `f''` and the three zeros
//! `a_- < a < a_+`. The shifted nonlinearity `f(u) + shift`
//! ([`ShiftedBistable`]) keeps three zeros as long as the shift stays below
//! the critical values of `f`; its zeros and the slope `mu_eps` at the
//! middle zero are recomputed on construction.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Root tolerance used for all zero computations.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReactionError {
    #[error("no sign change of f in bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("zeros ({minus}, {mid}, {plus}) do not have the bistable derivative signs")]
    NotBistable { minus: f64, mid: f64, plus: f64 },
    #[error("shift {shift} destroys bistability (three zeros persist only for |shift| < {limit})")]
    ShiftTooLarge { shift: f64, limit: f64 },
    #[error("reaction ODE left the guard interval at tau = {tau} (Y = {value})")]
    StepTooLarge { tau: f64, value: f64 },
    #[error("nonlinearity is not balanced: integral of f between the stable zeros is {0:e}")]
    Unbalanced(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, ReactionError>;

/// The ordered zeros `a_- < a < a_+` of a bistable nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zeros {
    pub minus: f64,
    pub mid: f64,
    pub plus: f64,
}

impl Zeros {
    /// `min(a - a_-, a_+ - a)`, the upper bound for admissible `eta`.
    pub fn eta0(&self) -> f64 {
        (self.mid - self.minus).min(self.plus - self.mid)
    }

    pub fn span(&self) -> f64 {
        self.plus - self.minus
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.minus, self.mid, self.plus]
    }
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

struct CustomReaction {
    name: String,
    f: ScalarFn,
    df: ScalarFn,
    d2f: ScalarFn,
}

#[derive(Clone)]
enum Kind {
    Cubic,
    Custom(Arc<CustomReaction>),
}

/// A bistable nonlinearity with its zeros.
///
/// The cubic instance is matched directly so that the field stepper can
/// inline it; user-supplied nonlinearities go through boxed closures.
#[derive(Clone)]
pub struct Bistable {
    kind: Kind,
    zeros: Zeros,
}

impl fmt::Debug for Bistable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bistable")
            .field("name", &self.name())
            .field("zeros", &self.zeros)
            .finish()
    }
}

/// `f(u) = u - u^3`, zeros `(-1, 0, 1)`, `mu = 1`, `F(u) = (1 - u^2)^2 / 4`.
pub fn make_cubic() -> Bistable {
    Bistable::cubic()
}

impl Bistable {
    pub fn cubic() -> Self {
        Bistable {
            kind: Kind::Cubic,
            zeros: Zeros {
                minus: -1.0,
                mid: 0.0,
                plus: 1.0,
            },
        }
    }

    /// Builds a user-supplied nonlinearity. The zeros are located inside the
    /// three `brackets` and checked for the bistable derivative pattern.
    pub fn custom<F, D, D2>(
        name: impl Into<String>,
        f: F,
        df: D,
        d2f: D2,
        brackets: [(f64, f64); 3],
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let zeros = find_zeros(&f, &df, brackets, ROOT_TOL)?;
        Ok(Bistable {
            kind: Kind::Custom(Arc::new(CustomReaction {
                name: name.into(),
                f: Box::new(f),
                df: Box::new(df),
                d2f: Box::new(d2f),
            })),
            zeros,
        })
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            Kind::Cubic => "cubic",
            Kind::Custom(c) => &c.name,
        }
    }

    pub fn is_cubic(&self) -> bool {
        matches!(self.kind, Kind::Cubic)
    }

    #[inline(always)]
    pub fn f(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Cubic => u - u * u * u,
            Kind::Custom(c) => (c.f)(u),
        }
    }

    #[inline(always)]
    pub fn df(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Cubic => 1.0 - 3.0 * u * u,
            Kind::Custom(c) => (c.df)(u),
        }
    }

    #[inline(always)]
    pub fn d2f(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Cubic => -6.0 * u,
            Kind::Custom(c) => (c.d2f)(u),
        }
    }

    pub fn zeros(&self) -> Zeros {
        self.zeros
    }

    /// `mu = f'(a)`.
    pub fn mu(&self) -> f64 {
        self.df(self.zeros.mid)
    }

    /// The potential `F(u) = int_u^{a_+} f(z) dz`.
    pub fn potential(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Cubic => {
                let s = 1.0 - u * u;
                0.25 * s * s
            }
            Kind::Custom(c) => {
                if u == self.zeros.plus {
                    return 0.0;
                }
                let out = quadrature::double_exponential::integrate(
                    |z| (c.f)(z),
                    u,
                    self.zeros.plus,
                    1e-13,
                );
                out.integral
            }
        }
    }

    /// `int_{a_-}^{a_+} f(u) du`; zero for a balanced nonlinearity.
    pub fn balance_integral(&self) -> f64 {
        let z = self.zeros;
        quadrature::double_exponential::integrate(|u| self.f(u), z.minus, z.plus, 1e-14).integral
    }

    /// The two critical points of `f`, one in `(a_-, a)` (local minimum)
    /// and one in `(a, a_+)` (local maximum).
    pub fn critical_points(&self) -> (f64, f64) {
        let z = self.zeros;
        let df = |u: f64| self.df(u);
        let lo = bisect(&df, z.minus, z.mid, ROOT_TOL).unwrap_or(0.5 * (z.minus + z.mid));
        let hi = bisect(&df, z.mid, z.plus, ROOT_TOL).unwrap_or(0.5 * (z.mid + z.plus));
        (lo, hi)
    }

    /// The supremum of `|shift|` for which `f + shift` keeps three zeros.
    pub fn bistability_limit(&self) -> f64 {
        let (c_min, c_max) = self.critical_points();
        (-self.f(c_min)).min(self.f(c_max))
    }

    /// `sup |f'|` over `[lo, hi]`, by a uniform scan with `n` points.
    pub fn sup_abs_df(&self, lo: f64, hi: f64, n: usize) -> f64 {
        scan_sup(|u| self.df(u).abs(), lo, hi, n)
    }

    /// `sup |f''|` over `[lo, hi]`, by a uniform scan with `n` points.
    pub fn sup_abs_d2f(&self, lo: f64, hi: f64, n: usize) -> f64 {
        scan_sup(|u| self.d2f(u).abs(), lo, hi, n)
    }
}

fn scan_sup(g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n.max(2);
    (0..n)
        .map(|i| g(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .fold(0.0, f64::max)
}

/// Accepts `f` when `|int_{a_-}^{a_+} f| <= tol`.
pub fn check_balanced(f: &Bistable, tol: f64) -> bool {
    f.balance_integral().abs() <= tol
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut glo = g(lo);
    let ghi = g(hi);
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if glo.signum() == ghi.signum() {
        return Err(ReactionError::NoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finds one root of `f` in `[lo, hi]`: bisection down to `1e-6`, then
/// Newton steps kept inside the bracket until the update drops below `tol`.
pub fn find_root(
    f: &impl Fn(f64) -> f64,
    df: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(ReactionError::NoSignChange { lo, hi });
    }
    let coarse = bisect(f, lo, hi, 1e-6)?;
    // Narrow the bracket around the coarse root so Newton stays safe.
    if f(lo).signum() != f(coarse - 1e-6).signum() {
        hi = hi.min(coarse + 1e-6);
    }
    lo = lo.max(coarse - 2e-6);
    hi = hi.min(coarse + 2e-6);
    let mut x = coarse;
    for _ in 0..60 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        let d = df(x);
        let mut next = if d != 0.0 { x - fx / d } else { f64::NAN };
        if !next.is_finite() || next < lo || next > hi {
            next = 0.5 * (lo + hi);
        }
        if f(next).signum() == f(lo).signum() {
            lo = next;
        } else {
            hi = next;
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol {
            break;
        }
    }
    Ok(x)
}

/// Locates the three zeros of `f` inside ordered, disjoint brackets and
/// checks `f'(a_-) < 0`, `f'(a) > 0`, `f'(a_+) < 0`.
pub fn find_zeros(
    f: &impl Fn(f64) -> f64,
    df: &impl Fn(f64) -> f64,
    brackets: [(f64, f64); 3],
    tol: f64,
) -> Result<Zeros> {
    for w in brackets.windows(2) {
        let a_hi = w[0].0.max(w[0].1);
        let b_lo = w[1].0.min(w[1].1);
        if a_hi > b_lo {
            return Err(ReactionError::InvalidArgument(
                "brackets must be ordered and disjoint".into(),
            ));
        }
    }
    let mut roots = [0.0; 3];
    for (slot, &(lo, hi)) in roots.iter_mut().zip(brackets.iter()) {
        *slot = find_root(f, df, lo, hi, tol)?;
    }
    let zeros = Zeros {
        minus: roots[0],
        mid: roots[1],
        plus: roots[2],
    };
    if !(df(zeros.minus) < 0.0 && df(zeros.mid) > 0.0 && df(zeros.plus) < 0.0) {
        return Err(ReactionError::NotBistable {
            minus: zeros.minus,
            mid: zeros.mid,
            plus: zeros.plus,
        });
    }
    Ok(zeros)
}

/// Zeros of `f + shift`, bracketed by the critical points of `f`.
pub fn shifted_zeros(base: &Bistable, shift: f64) -> Result<Zeros> {
    let (c_min, c_max) = base.critical_points();
    let g = |u: f64| base.f(u) + shift;
    let dg = |u: f64| base.df(u);
    if !(g(c_min) < 0.0 && g(c_max) > 0.0) {
        return Err(ReactionError::ShiftTooLarge {
            shift,
            limit: base.bistability_limit(),
        });
    }
    let z = base.zeros();
    let mut reach = z.span().max(1.0);
    let mut lo = z.minus - reach;
    while g(lo) <= 0.0 {
        reach *= 2.0;
        lo = z.minus - reach;
        if reach > 1e6 {
            return Err(ReactionError::NoSignChange { lo, hi: c_min });
        }
    }
    let mut reach = z.span().max(1.0);
    let mut hi = z.plus + reach;
    while g(hi) >= 0.0 {
        reach *= 2.0;
        hi = z.plus + reach;
        if reach > 1e6 {
            return Err(ReactionError::NoSignChange { lo: c_max, hi });
        }
    }
    find_zeros(
        &g,
        &dg,
        [(lo, c_min), (c_min, c_max), (c_max, hi)],
        ROOT_TOL,
    )
}

/// `f_eps(u) = f(u) + shift` with its recomputed zeros and `mu_eps`.
#[derive(Debug, Clone)]
pub struct ShiftedBistable {
    pub base: Bistable,
    pub shift: f64,
    pub zeros_eps: Zeros,
    pub mu_eps: f64,
}

impl ShiftedBistable {
    #[inline(always)]
    pub fn f(&self, u: f64) -> f64 {
        self.base.f(u) + self.shift
    }

    #[inline(always)]
    pub fn df(&self, u: f64) -> f64 {
        self.base.df(u)
    }
}

pub fn shift_nonlinearity(base: &Bistable, shift: f64) -> Result<ShiftedBistable> {
    if !shift.is_finite() {
        return Err(ReactionError::InvalidArgument(
            "shift must be finite".into(),
        ));
    }
    let zeros_eps = if shift == 0.0 {
        base.zeros()
    } else {
        shifted_zeros(base, shift)?
    };
    Ok(ShiftedBistable {
        base: base.clone(),
        shift,
        mu_eps: base.df(zeros_eps.mid),
        zeros_eps,
    })
}

/// `mu_tilde = mu_eps (1 + eps)`, the perturbed growth rate in the envelopes.
pub fn mu_tilde(mu_eps: f64, eps: f64) -> f64 {
    mu_eps * (1.0 + eps)
}

/// Samples of `Y(tau, xi0; delta)` at the integration nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionTrajectory {
    pub tau: Vec<f64>,
    pub y: Vec<f64>,
}

impl ReactionTrajectory {
    pub fn last(&self) -> f64 {
        *self.y.last().expect("trajectory holds the initial value")
    }
}

#[inline]
fn rk4_step(g: &impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = g(y);
    let k2 = g(y + 0.5 * h * k1);
    let k3 = g(y + 0.5 * h * k2);
    let k4 = g(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn check_ode_args(tau_end: f64, dtau: f64) -> Result<()> {
    if !(dtau > 0.0) || !dtau.is_finite() {
        return Err(ReactionError::InvalidArgument(
            "dtau must be positive".into(),
        ));
    }
    if !(tau_end >= 0.0) || !tau_end.is_finite() {
        return Err(ReactionError::InvalidArgument(
            "tau_end must be non-negative".into(),
        ));
    }
    Ok(())
}

/// Integrates `Y' = f_eps(Y) + delta`, `Y(0) = xi0` with classical RK4.
/// The last step is shortened to land exactly on `tau_end`.
pub fn solve_reaction_ode(
    fe: &ShiftedBistable,
    delta: f64,
    xi0: f64,
    tau_end: f64,
    dtau: f64,
) -> Result<ReactionTrajectory> {
    check_ode_args(tau_end, dtau)?;
    let (lo, hi) = guard_interval(fe);
    let g = |y: f64| fe.f(y) + delta;
    let n_full = (tau_end / dtau).floor() as usize;
    let mut tau = Vec::with_capacity(n_full + 2);
    let mut y = Vec::with_capacity(n_full + 2);
    tau.push(0.0);
    y.push(xi0);
    let mut cur = xi0;
    let mut t = 0.0;
    for k in 1..=n_full {
        cur = rk4_step(&g, cur, dtau);
        t = k as f64 * dtau;
        if !(cur >= lo && cur <= hi) {
            return Err(ReactionError::StepTooLarge { tau: t, value: cur });
        }
        tau.push(t);
        y.push(cur);
    }
    let rest = tau_end - t;
    if rest > 1e-14 * tau_end.max(1.0) {
        cur = rk4_step(&g, cur, rest);
        if !(cur >= lo && cur <= hi) {
            return Err(ReactionError::StepTooLarge {
                tau: tau_end,
                value: cur,
            });
        }
        tau.push(tau_end);
        y.push(cur);
    }
    Ok(ReactionTrajectory { tau, y })
}

/// `Y(tau_end, xi0; delta)` without storing the trajectory.
pub fn reaction_flow_map(
    fe: &ShiftedBistable,
    delta: f64,
    xi0: f64,
    tau_end: f64,
    dtau: f64,
) -> Result<f64> {
    check_ode_args(tau_end, dtau)?;
    let (lo, hi) = guard_interval(fe);
    let g = |y: f64| fe.f(y) + delta;
    let n_full = (tau_end / dtau).floor() as usize;
    let mut cur = xi0;
    for k in 1..=n_full {
        cur = rk4_step(&g, cur, dtau);
        if !(cur >= lo && cur <= hi) {
            return Err(ReactionError::StepTooLarge {
                tau: k as f64 * dtau,
                value: cur,
            });
        }
    }
    let rest = tau_end - n_full as f64 * dtau;
    if rest > 1e-14 * tau_end.max(1.0) {
        cur = rk4_step(&g, cur, rest);
        if !(cur >= lo && cur <= hi) {
            return Err(ReactionError::StepTooLarge {
                tau: tau_end,
                value: cur,
            });
        }
    }
    Ok(cur)
}

/// Blow-up guard `[a_- - 2, a_+ + 2]` of the base nonlinearity.
fn guard_interval(fe: &ShiftedBistable) -> (f64, f64) {
    let z = fe.base.zeros();
    (z.minus - 2.0, z.plus + 2.0)
}

/// Number of nodes of the xi-table used to evaluate the envelopes.
pub const ENVELOPE_TABLE_POINTS: usize = 2049;

/// Tabulated flow map `xi -> Y(tau, xi; delta)` on a uniform xi-grid,
/// evaluated by linear interpolation.
#[derive(Debug, Clone)]
pub struct FlowMapTable {
    pub xi_lo: f64,
    pub xi_hi: f64,
    pub values: Vec<f64>,
}

impl FlowMapTable {
    pub fn build(
        fe: &ShiftedBistable,
        delta: f64,
        tau: f64,
        xi_lo: f64,
        xi_hi: f64,
        n: usize,
        dtau: f64,
    ) -> Result<Self> {
        if n < 2 || !(xi_hi > xi_lo) {
            return Err(ReactionError::InvalidArgument("empty xi-table".into()));
        }
        let values = (0..n)
            .map(|i| {
                let xi = xi_lo + (xi_hi - xi_lo) * i as f64 / (n - 1) as f64;
                reaction_flow_map(fe, delta, xi, tau, dtau)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowMapTable {
            xi_lo,
            xi_hi,
            values,
        })
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let n = self.values.len();
        let s = (xi - self.xi_lo) / (self.xi_hi - self.xi_lo) * (n - 1) as f64;
        if s <= 0.0 {
            return self.values[0];
        }
        if s >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = s.floor() as usize;
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// The generation sub/supersolutions
/// `w±(x, t) = Y(t/eps^2, u0(x) ± eps^2 C (exp(mu_tilde t/eps^2) - 1); ±eps)`.
///
/// Returns `(w_minus, w_plus)` with one entry per value of `u0`.
pub fn generation_envelopes(
    fe: &ShiftedBistable,
    u0: &[f64],
    t: f64,
    eps: f64,
    c: f64,
    mu_tilde: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(eps > 0.0) || !(c > 0.0) || !(t >= 0.0) {
        return Err(ReactionError::InvalidArgument(
            "generation envelopes need eps > 0, C > 0, t >= 0".into(),
        ));
    }
    if t == 0.0 {
        return Ok((u0.to_vec(), u0.to_vec()));
    }
    let tau = t / (eps * eps);
    let lift = eps * eps * c * ((mu_tilde * tau).exp() - 1.0);
    let z = fe.base.zeros();
    let (mut lo, mut hi) = (z.minus - 1.0, z.plus + 1.0);
    for &v in u0 {
        lo = lo.min(v - lift);
        hi = hi.max(v + lift);
    }
    let dtau = (tau / 4000.0).clamp(1e-5, 1e-3);
    let lower = FlowMapTable::build(fe, -eps, tau, lo, hi, ENVELOPE_TABLE_POINTS, dtau)?;
    let upper = FlowMapTable::build(fe, eps, tau, lo, hi, ENVELOPE_TABLE_POINTS, dtau)?;
    let w_minus = u0.iter().map(|&v| lower.eval(v - lift)).collect();
    let w_plus = u0.iter().map(|&v| upper.eval(v + lift)).collect();
    Ok((w_minus, w_plus))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form of `Y' = Y - Y^3`, `Y(0) = xi`.
    fn cubic_ode_exact(xi: f64, tau: f64) -> f64 {
        let e2 = (2.0 * tau).exp();
        xi * tau.exp() / (1.0 - xi * xi + xi * xi * e2).sqrt()
    }

    #[test]
    fn cubic_basics() {
        let f = make_cubic();
        assert_eq!(f.f(0.0), 0.0);
        assert_eq!(f.df(0.0), 1.0);
        assert_eq!(f.mu(), 1.0);
        assert!((f.potential(0.0) - 0.25).abs() < 1e-15);
        assert_eq!(f.potential(1.0), 0.0);
        assert!(check_balanced(&f, 1e-10));
        for z in f.zeros().as_array() {
            assert!(f.f(z).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_potential_matches_quadrature_of_f() {
        let f = make_cubic();
        for &u in &[-0.9, -0.3, 0.0, 0.4, 0.95] {
            let q = quadrature::double_exponential::integrate(|z| z - z * z * z, u, 1.0, 1e-14);
            assert!((q.integral - f.potential(u)).abs() < 1e-12);
        }
    }

    #[test]
    fn find_zeros_of_cubic() {
        let f = |u: f64| u - u * u * u;
        let df = |u: f64| 1.0 - 3.0 * u * u;
        let z = find_zeros(&f, &df, [(-1.5, -0.5), (-0.3, 0.3), (0.5, 1.5)], 1e-12).unwrap();
        assert!((z.minus + 1.0).abs() < 1e-12);
        assert!(z.mid.abs() < 1e-12);
        assert!((z.plus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn find_zeros_reports_missing_sign_change() {
        let f = |u: f64| u - u * u * u;
        let df = |u: f64| 1.0 - 3.0 * u * u;
        let err = find_zeros(&f, &df, [(-1.5, -0.5), (0.2, 0.3), (0.5, 1.5)], 1e-12).unwrap_err();
        assert!(matches!(err, ReactionError::NoSignChange { .. }));
    }

    #[test]
    fn find_zeros_rejects_wrong_derivative_pattern() {
        // -(u - u^3) has the stable/unstable roles swapped.
        let f = |u: f64| u * u * u - u;
        let df = |u: f64| 3.0 * u * u - 1.0;
        let err = find_zeros(&f, &df, [(-1.5, -0.5), (-0.3, 0.3), (0.5, 1.5)], 1e-12).unwrap_err();
        assert!(matches!(err, ReactionError::NotBistable { .. }));
    }

    #[test]
    fn shifted_cubic_zeros_follow_newton_oracle() {
        // One Newton step from each base zero, then the bisection reference.
        let delta = 0.01;
        let fe = shift_nonlinearity(&make_cubic(), delta).unwrap();
        let newton_mid = 0.0 - delta / 1.0;
        let newton_plus = 1.0 - delta / -2.0;
        assert!((fe.zeros_eps.mid - newton_mid).abs() < 2.0 * delta * delta);
        assert!((fe.zeros_eps.plus - newton_plus).abs() < 2.0 * delta * delta);
        let g = |u: f64| u - u * u * u + delta;
        let reference = bisect(&g, -0.3, 0.3, 1e-15).unwrap();
        assert!((fe.zeros_eps.mid - reference).abs() < 1e-12);
        assert!((fe.mu_eps - (1.0 - 3.0 * reference * reference)).abs() < 1e-12);
        assert!((fe.mu_eps - 0.9997).abs() < 1e-5);
    }

    #[test]
    fn zero_shift_is_identity() {
        let base = make_cubic();
        let fe = shift_nonlinearity(&base, 0.0).unwrap();
        assert_eq!(fe.zeros_eps, base.zeros());
        assert_eq!(fe.mu_eps, base.mu());
    }

    #[test]
    fn large_shift_loses_bistability() {
        let base = make_cubic();
        let err = shift_nonlinearity(&base, 0.5).unwrap_err();
        assert!(matches!(err, ReactionError::ShiftTooLarge { .. }));
        // Cubic discriminant: three real roots iff |delta| < 2/(3 sqrt 3).
        let limit = 2.0 / (3.0 * 3f64.sqrt());
        assert!((base.bistability_limit() - limit).abs() < 1e-10);
        assert!(shift_nonlinearity(&base, 0.99 * limit).is_ok());
        assert!(shift_nonlinearity(&base, -1.01 * limit).is_err());
    }

    #[test]
    fn zero_displacement_bound() {
        let base = make_cubic();
        let z = base.zeros();
        let min_slope = [z.minus, z.mid, z.plus]
            .iter()
            .map(|&u| base.df(u).abs())
            .fold(f64::INFINITY, f64::min);
        for &shift in &[1e-3, -1e-3, 0.05, -0.05, 0.2] {
            let fe = shift_nonlinearity(&base, shift).unwrap();
            let bound = 2.0 * shift.abs() / min_slope;
            assert!((fe.zeros_eps.minus - z.minus).abs() <= bound);
            assert!((fe.zeros_eps.mid - z.mid).abs() <= bound);
            assert!((fe.zeros_eps.plus - z.plus).abs() <= bound);
        }
    }

    #[test]
    fn mu_eps_converges_to_mu() {
        let base = make_cubic();
        let mut prev = f64::INFINITY;
        for &shift in &[1e-1, 1e-2, 1e-3, 1e-4] {
            let fe = shift_nonlinearity(&base, shift).unwrap();
            let gap = (fe.mu_eps - base.mu()).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn root_perturbation_law() {
        let base = make_cubic();
        for &d in &[1e-2, 1e-3, 1e-4] {
            let fe = shift_nonlinearity(&base, d).unwrap();
            let lin = (fe.zeros_eps.mid - base.zeros().mid) + d / base.mu();
            assert!(lin.abs() <= 5.0 * d * d, "delta {d}: {lin}");
        }
    }

    #[test]
    fn balance_detector() {
        assert!(check_balanced(&make_cubic(), 1e-10));
        let shifted = Bistable::custom(
            "cubic+0.1",
            |u| u - u * u * u + 0.1,
            |u| 1.0 - 3.0 * u * u,
            |u| -6.0 * u,
            [(-1.5, -0.7), (-0.4, 0.3), (0.5, 1.5)],
        )
        .unwrap();
        assert!(!check_balanced(&shifted, 1e-10));
    }

    #[test]
    fn custom_potential_uses_quadrature() {
        let f = Bistable::custom(
            "cubic-custom",
            |u| u - u * u * u,
            |u| 1.0 - 3.0 * u * u,
            |u| -6.0 * u,
            [(-1.5, -0.5), (-0.3, 0.3), (0.5, 1.5)],
        )
        .unwrap();
        let c = make_cubic();
        for &u in &[-0.5, 0.0, 0.7] {
            assert!((f.potential(u) - c.potential(u)).abs() < 1e-12);
        }
    }

    #[test]
    fn reaction_ode_fixed_point_and_closed_form() {
        let fe = shift_nonlinearity(&make_cubic(), 0.0).unwrap();
        let traj = solve_reaction_ode(&fe, 0.0, 0.0, 3.0, 1e-2).unwrap();
        assert!(traj.y.iter().all(|&y| y == 0.0));

        let exact = cubic_ode_exact(0.1, 2.0);
        assert!((exact - 0.596).abs() < 1e-3);
        let y = solve_reaction_ode(&fe, 0.0, 0.1, 2.0, 1e-4).unwrap().last();
        assert!((y - exact).abs() < 1e-6);
    }

    #[test]
    fn reaction_ode_approaches_stable_zero_monotonically() {
        let fe = shift_nonlinearity(&make_cubic(), 0.0).unwrap();
        let traj = solve_reaction_ode(&fe, 0.0, 0.1, 20.0, 1e-2).unwrap();
        assert!(traj.y.windows(2).all(|w| w[1] >= w[0]));
        assert!((traj.last() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reaction_ode_lands_on_tau_end() {
        let fe = shift_nonlinearity(&make_cubic(), 0.0).unwrap();
        let traj = solve_reaction_ode(&fe, 0.0, 0.3, 1.05, 0.1).unwrap();
        assert_eq!(*traj.tau.last().unwrap(), 1.05);
        assert_eq!(traj.tau.len(), traj.y.len());
    }

    #[test]
    fn reaction_ode_blow_up_guard() {
        let fe = shift_nonlinearity(&make_cubic(), 0.0).unwrap();
        let err = solve_reaction_ode(&fe, 0.0, 2.9, 1.0, 0.5).unwrap_err();
        assert!(matches!(err, ReactionError::StepTooLarge { .. }));
    }

    #[test]
    fn equilibria_are_preserved() {
        let base = make_cubic();
        let fe = shift_nonlinearity(&base, 0.02).unwrap();
        let delta = -0.01;
        let dtau = 0.05;
        let tau = 5.0;
        let zeros = shifted_zeros(&base, fe.shift + delta).unwrap();
        for z in zeros.as_array() {
            let y = solve_reaction_ode(&fe, delta, z, tau, dtau).unwrap().last();
            assert!((y - z).abs() <= 10.0 * dtau.powi(4) * tau, "zero {z}: {y}");
        }
    }

    #[test]
    fn envelopes_start_at_initial_data() {
        let fe = shift_nonlinearity(&make_cubic(), 0.0).unwrap();
        let u0 = vec![-0.8, -0.1, 0.0, 0.3, 0.9];
        let (lo, hi) = generation_envelopes(&fe, &u0, 0.0, 0.05, 1.0, 1.0).unwrap();
        assert_eq!(lo, u0);
        assert_eq!(hi, u0);
    }

    #[test]
    fn envelopes_stay_near_attracting_zero() {
        let eps: f64 = 0.05;
        let fe = shift_nonlinearity(&make_cubic(), 0.0).unwrap();
        let c = 1.0;
        let t = eps * eps * eps.ln().abs();
        let (lo, hi) = generation_envelopes(&fe, &[1.0], t, eps, c, mu_tilde(1.0, eps)).unwrap();
        // Oracle: the ODE with perturbed data and delta = ±eps.
        let tau = t / (eps * eps);
        let lift = eps * eps * c * ((mu_tilde(1.0, eps) * tau).exp() - 1.0);
        let upper = reaction_flow_map(&fe, eps, 1.0 + lift, tau, 1e-4).unwrap();
        let lower = reaction_flow_map(&fe, -eps, 1.0 - lift, tau, 1e-4).unwrap();
        assert!((hi[0] - upper).abs() < 1e-6);
        assert!((lo[0] - lower).abs() < 1e-6);
        assert!((hi[0] - 1.0).abs() < eps);
        assert!((lo[0] - 1.0).abs() < eps);
    }
}
