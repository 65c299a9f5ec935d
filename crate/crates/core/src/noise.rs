//! Mild-noise paths.
//!
//! Two constructions are provided:
//!
//! * derivative of mollified Brownian motion: `W^eps = rho_eps * W`,
//!   `xi^eps = (W^eps)'`, with `rho_eps(t) = w^{-1} rho(t / w)`,
//!   `w = eps^gamma2`;
//! * a rescaled stationary process `xi^eps(t) = eps^{-gamma1} xi(eps^{-2 gamma1} t)`,
//!   where `xi` is a clipped Ornstein–Uhlenbeck path mollified with a
//!   fixed-width bump.
//!
//! Paths are stored as samples of `xi` and `xi'` on a uniform grid and
//! evaluated by cubic Hermite interpolation.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checksum_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error(
        "Brownian path covers [{have_lo}, {have_hi}] but the convolution window needs [{need_lo}, {need_hi}]"
    )]
    InsufficientSupport {
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },
    #[error("gamma {gamma} outside the admissible range ({lo}, {hi})")]
    InvalidGamma { gamma: f64, lo: f64, hi: f64 },
    #[error("covariance integral estimate is negative ({0:e}); horizon too short")]
    NegativeVarianceEstimate(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, NoiseError>;

/// Standard bump `exp(-1/(1 - tau^2))` on `(-1, 1)` with unit mass.
pub mod kernel {
    use super::OnceLock;

    const CDF_INTERVALS: usize = 4096;

    struct Tables {
        norm: f64,
        cdf: Vec<f64>,
    }

    fn raw(tau: f64) -> f64 {
        if tau.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - tau * tau)).exp()
        }
    }

    fn tables() -> &'static Tables {
        static TABLES: OnceLock<Tables> = OnceLock::new();
        TABLES.get_or_init(|| {
            let h = 2.0 / CDF_INTERVALS as f64;
            let mut cdf = Vec::with_capacity(CDF_INTERVALS + 1);
            let mut acc = 0.0;
            cdf.push(0.0);
            for i in 0..CDF_INTERVALS {
                let a = -1.0 + h * i as f64;
                acc += quadrature::double_exponential::integrate(raw, a, a + h, 1e-18).integral;
                cdf.push(acc);
            }
            let norm = acc;
            for v in cdf.iter_mut() {
                *v /= norm;
            }
            Tables { norm, cdf }
        })
    }

    /// Normalization constant `int_{-1}^{1} exp(-1/(1-tau^2)) dtau`.
    pub fn normalization() -> f64 {
        tables().norm
    }

    #[inline]
    pub fn rho(tau: f64) -> f64 {
        raw(tau) / normalization()
    }

    #[inline]
    pub fn rho_prime(tau: f64) -> f64 {
        if tau.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - tau * tau;
        -2.0 * tau / (s * s) * rho(tau)
    }

    #[inline]
    pub fn rho_second(tau: f64) -> f64 {
        if tau.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - tau * tau;
        let t2 = tau * tau;
        rho(tau) * (4.0 * t2 / s.powi(4) - 2.0 / (s * s) - 8.0 * t2 / s.powi(3))
    }

    /// `int_{-1}^{tau} rho`, tabulated and Hermite-interpolated.
    pub fn cdf(tau: f64) -> f64 {
        if tau <= -1.0 {
            return 0.0;
        }
        if tau >= 1.0 {
            return 1.0;
        }
        let t = tables();
        let h = 2.0 / CDF_INTERVALS as f64;
        let s = (tau + 1.0) / h;
        let i = (s.floor() as usize).min(CDF_INTERVALS - 1);
        let x = s - i as f64;
        let (y0, y1) = (t.cdf[i], t.cdf[i + 1]);
        let a = -1.0 + h * i as f64;
        let (d0, d1) = (rho(a) * h, rho(a + h) * h);
        super::hermite(y0, y1, d0, d1, x)
    }

    /// `int |rho'|`, which equals `2 rho(0)` for a symmetric unimodal bump.
    pub fn abs_derivative_mass() -> f64 {
        2.0 * rho(0.0)
    }
}

#[inline]
pub(crate) fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let x2 = x * x;
    let x3 = x2 * x;
    let h00 = 2.0 * x3 - 3.0 * x2 + 1.0;
    let h10 = x3 - 2.0 * x2 + x;
    let h01 = -2.0 * x3 + 3.0 * x2;
    let h11 = x3 - x2;
    h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
}

/// A Brownian path on the uniform grid `t_k = (k - n_neg) dt`, with
/// `W(0) = 0` and independent streams for positive and negative times.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub dt: f64,
    pub n_neg: usize,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl BrownianPath {
    pub fn t_min(&self) -> f64 {
        -(self.n_neg as f64) * self.dt
    }

    pub fn t_max(&self) -> f64 {
        (self.values.len() - 1 - self.n_neg) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        (k as f64 - self.n_neg as f64) * self.dt
    }

    /// Piecewise-linear value.
    pub fn value_at(&self, t: f64) -> f64 {
        let s = (t - self.t_min()) / self.dt;
        let last = self.values.len() - 1;
        if s <= 0.0 {
            return self.values[0];
        }
        if s >= last as f64 {
            return self.values[last];
        }
        let k = s.floor() as usize;
        let x = s - k as f64;
        self.values[k] * (1.0 - x) + self.values[k + 1] * x
    }

    /// A deterministic path `t -> g(t)` on the same kind of grid, used to
    /// test the mollification against known functions. `g(0)` must be 0.
    pub fn from_fn(t_neg: f64, t_end: f64, dt: f64, g: impl Fn(f64) -> f64) -> Self {
        let n_neg = (t_neg / dt).ceil() as usize;
        let n_pos = (t_end / dt).ceil() as usize;
        let values = (0..=n_neg + n_pos)
            .map(|k| g((k as f64 - n_neg as f64) * dt))
            .collect();
        BrownianPath {
            dt,
            n_neg,
            values,
            seed: 0,
        }
    }

    /// Largest `|W(s) - W(t)|` over grid pairs with `|s - t| <= delta`.
    pub fn modulus(&self, delta: f64) -> f64 {
        let lag = (delta / self.dt).floor() as usize;
        let mut best: f64 = 0.0;
        for i in 0..self.values.len() {
            let hi = (i + lag).min(self.values.len() - 1);
            for j in i + 1..=hi {
                best = best.max((self.values[j] - self.values[i]).abs());
            }
        }
        best
    }
}

/// Samples `W` on `[-t_neg, t_end]` with step `dt`.
pub fn sample_brownian(t_neg: f64, t_end: f64, dt: f64, seed: u64) -> Result<BrownianPath> {
    if !(dt > 0.0) || !(t_end > 0.0) || !(t_neg >= 0.0) {
        return Err(NoiseError::InvalidArgument(
            "sample_brownian needs dt > 0, T > 0, T_neg >= 0".into(),
        ));
    }
    let n_neg = (t_neg / dt - 1e-9).ceil().max(0.0) as usize;
    let n_pos = (t_end / dt - 1e-9).ceil() as usize;
    let sd = dt.sqrt();
    let mut values = vec![0.0; n_neg + n_pos + 1];

    let mut pos = ChaCha8Rng::seed_from_u64(seed);
    pos.set_stream(0);
    let mut w = 0.0;
    for k in 1..=n_pos {
        let z: f64 = StandardNormal.sample(&mut pos);
        w += sd * z;
        values[n_neg + k] = w;
    }

    let mut neg = ChaCha8Rng::seed_from_u64(seed);
    neg.set_stream(1);
    let mut w = 0.0;
    for k in 1..=n_neg {
        let z: f64 = StandardNormal.sample(&mut neg);
        w += sd * z;
        values[n_neg - k] = w;
    }
    Ok(BrownianPath {
        dt,
        n_neg,
        values,
        seed,
    })
}

/// Values and derivatives on a uniform grid starting at 0, evaluated with
/// cubic Hermite interpolation. Arguments outside the grid are clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl SampledPath {
    pub fn t_end(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.values.len() - 1;
        let s = (t / self.dt).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(1));
        (i, s - i as f64)
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        let (i, x) = self.locate(t);
        hermite(
            self.values[i],
            self.values[i + 1],
            self.derivs[i] * self.dt,
            self.derivs[i + 1] * self.dt,
            x,
        )
    }

    /// Linear interpolation of the stored derivative.
    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        if self.derivs.len() == 1 {
            return self.derivs[0];
        }
        let (i, x) = self.locate(t);
        self.derivs[i] * (1.0 - x) + self.derivs[i + 1] * x
    }

    /// Exact integral of the Hermite interpolant over `[0, t_end]`.
    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let trap: f64 = self
            .values
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .sum::<f64>()
            * self.dt;
        trap + self.dt * self.dt / 12.0 * (self.derivs[0] - self.derivs[n - 1])
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_gamma(gamma: f64, hi: f64) -> Result<()> {
    if gamma > 0.0 && gamma < hi {
        Ok(())
    } else {
        Err(NoiseError::InvalidGamma { gamma, lo: 0.0, hi })
    }
}

/// Sample spacing `min(dt_pde / 4, eps^{2 gamma} / 16)`.
pub fn noise_sample_dt(dt_pde: f64, eps: f64, gamma: f64) -> f64 {
    (dt_pde / 4.0).min(eps.powf(2.0 * gamma) / 16.0)
}

/// Mollifier width `eps^gamma2` for the Brownian construction.
pub fn mollifier_width(eps: f64, gamma2: f64) -> f64 {
    eps.powf(gamma2)
}

fn check_support(w: &BrownianPath, lo: f64, hi: f64) -> Result<()> {
    let tol = 1e-9 * w.dt;
    if w.t_min() > lo + tol || w.t_max() < hi - tol {
        return Err(NoiseError::InsufficientSupport {
            need_lo: lo,
            need_hi: hi,
            have_lo: w.t_min(),
            have_hi: w.t_max(),
        });
    }
    Ok(())
}

/// Increments `dW_j` paired with their cell midpoints, restricted to cells
/// meeting `(t - width, t + width)`.
fn window(w: &BrownianPath, t: f64, width: f64) -> (usize, usize) {
    let t0 = w.t_min();
    let lo = ((t - width - t0) / w.dt).floor().max(0.0) as usize;
    let hi = (((t + width - t0) / w.dt).ceil() as usize).min(w.values.len() - 1);
    (lo, hi)
}

/// `W^eps(t) = W(s_lo) + sum_j dW_j R((t - s_{j+1/2}) / width)` with `R` the
/// kernel CDF; this is the convolution of the piecewise-linear path with
/// `rho_eps`, each cell collapsed to its midpoint.
pub fn mollified_value(w: &BrownianPath, t: f64, width: f64) -> f64 {
    let (lo, hi) = window(w, t, width);
    let mut acc = w.values[lo];
    for j in lo..hi {
        let mid = w.time(j) + 0.5 * w.dt;
        acc += (w.values[j + 1] - w.values[j]) * kernel::cdf((t - mid) / width);
    }
    acc
}

/// `xi^eps(t) = sum_j dW_j rho_eps(t - s_{j+1/2})`, the exact derivative of
/// [`mollified_value`], together with its own derivative.
pub fn mollified_derivatives(w: &BrownianPath, t: f64, width: f64) -> (f64, f64) {
    let (lo, hi) = window(w, t, width);
    let inv = 1.0 / width;
    let (mut xi, mut xi_dot) = (0.0, 0.0);
    for j in lo..hi {
        let mid = w.time(j) + 0.5 * w.dt;
        let tau = (t - mid) * inv;
        if tau.abs() >= 1.0 {
            continue;
        }
        let dw = w.values[j + 1] - w.values[j];
        xi += dw * kernel::rho(tau) * inv;
        xi_dot += dw * kernel::rho_prime(tau) * inv * inv;
    }
    (xi, xi_dot)
}

/// Samples `W^eps` on `[0, t_end]` at spacing `sample_dt`.
pub fn mollify(
    w: &BrownianPath,
    eps: f64,
    gamma2: f64,
    t_end: f64,
    sample_dt: f64,
) -> Result<SampledPath> {
    check_gamma(gamma2, 2.0 / 3.0)?;
    let width = mollifier_width(eps, gamma2);
    check_support(w, -width, t_end + width)?;
    let n = (t_end / sample_dt).ceil().max(1.0) as usize;
    let dt = t_end / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    let mut derivs = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 * dt;
        values.push(mollified_value(w, t, width));
        derivs.push(mollified_derivatives(w, t, width).0);
    }
    Ok(SampledPath { dt, values, derivs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Off,
    Mn1,
    Mn2,
}

/// Subtraction of `xi^eps(0) chi(t)` with a smooth cutoff `chi` that drops
/// from 1 to 0 over `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct InitialCutoff {
    xi0: f64,
    duration: f64,
}

impl InitialCutoff {
    fn chi(&self, t: f64) -> f64 {
        1.0 - kernel::cdf(2.0 * t / self.duration - 1.0)
    }

    fn chi_dot(&self, t: f64) -> f64 {
        -kernel::rho(2.0 * t / self.duration - 1.0) * 2.0 / self.duration
    }
}

/// A sampled realization of `xi^eps`.
///
/// `xi(t) = amp * base.value(time_scale * t)` and
/// `xi_dot(t) = amp * time_scale * base.deriv(time_scale * t)`; for the
/// Brownian construction both scales are 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MildNoisePath {
    pub kind: NoiseKind,
    pub eps: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Construction constant of the stationary surrogate (clip level).
    pub m_const: Option<f64>,
    /// Kernel width in physical time.
    pub kernel_width: f64,
    pub t_end: f64,
    base: SampledPath,
    amp: f64,
    time_scale: f64,
    cutoff: Option<InitialCutoff>,
}

impl MildNoisePath {
    /// `xi^eps == 0` on `[0, t_end]`.
    pub fn off(eps: f64, t_end: f64) -> Self {
        MildNoisePath {
            kind: NoiseKind::Off,
            eps,
            gamma: 0.0,
            seed: 0,
            m_const: None,
            kernel_width: 0.0,
            t_end,
            base: SampledPath {
                dt: t_end.max(1.0),
                values: vec![0.0, 0.0],
                derivs: vec![0.0, 0.0],
            },
            amp: 1.0,
            time_scale: 1.0,
            cutoff: None,
        }
    }

    #[inline]
    pub fn xi(&self, t: f64) -> f64 {
        let raw = self.amp * self.base.value(self.time_scale * t);
        match &self.cutoff {
            None => raw,
            Some(c) => raw - c.xi0 * c.chi(t),
        }
    }

    #[inline]
    pub fn xi_dot(&self, t: f64) -> f64 {
        let raw = self.amp * self.time_scale * self.base.deriv(self.time_scale * t);
        match &self.cutoff {
            None => raw,
            Some(c) => raw - c.xi0 * c.chi_dot(t),
        }
    }

    pub fn is_off(&self) -> bool {
        self.kind == NoiseKind::Off
    }

    /// Applies the `xi^eps(0) = 0` modification.
    pub fn with_zero_start(mut self) -> Self {
        if self.is_off() || self.cutoff.is_some() {
            return self;
        }
        let xi0 = self.xi(0.0);
        self.cutoff = Some(InitialCutoff {
            xi0,
            duration: self.kernel_width,
        });
        self
    }

    /// Sample times in physical time.
    pub fn sample_times(&self) -> Vec<f64> {
        let dt = self.base.dt / self.time_scale;
        let n = ((self.t_end / dt) + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * dt).collect()
    }

    /// `sup |xi^eps|` over the sample times in `[t0, t1]`.
    pub fn sup_abs(&self, t0: f64, t1: f64) -> f64 {
        self.sample_times()
            .into_iter()
            .filter(|&t| t >= t0 && t <= t1)
            .map(|t| self.xi(t).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_abs_dot(&self, t0: f64, t1: f64) -> f64 {
        self.sample_times()
            .into_iter()
            .filter(|&t| t >= t0 && t <= t1)
            .map(|t| self.xi_dot(t).abs())
            .fold(0.0, f64::max)
    }

    /// SHA-256 of the sampled values, identifying the path in manifests.
    pub fn checksum(&self) -> String {
        let mut data: Vec<f64> = vec![self.amp, self.time_scale, self.base.dt];
        data.extend_from_slice(&self.base.values);
        data.extend_from_slice(&self.base.derivs);
        if let Some(c) = &self.cutoff {
            data.push(c.xi0);
            data.push(c.duration);
        }
        checksum_f64(&data)
    }

    pub fn sidecar(&self) -> NoiseSidecar {
        NoiseSidecar {
            kind: self.kind,
            eps: self.eps,
            gamma: self.gamma,
            seed: self.seed,
            m: self.m_const,
            kernel_width: self.kernel_width,
            t_end: self.t_end,
            zero_start: self.cutoff.is_some(),
            checksum: self.checksum(),
        }
    }

    /// Rows `(t, xi, xi_dot)` at the sample times.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        self.sample_times()
            .into_iter()
            .map(|t| [t, self.xi(t), self.xi_dot(t)])
            .collect()
    }
}

/// JSON sidecar accompanying a noise CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSidecar {
    pub kind: NoiseKind,
    pub eps: f64,
    pub gamma: f64,
    pub seed: u64,
    pub m: Option<f64>,
    pub kernel_width: f64,
    pub t_end: f64,
    pub zero_start: bool,
    pub checksum: String,
}

/// The Brownian-motion construction on `[0, t_end]` at spacing `sample_dt`.
pub fn mn2_noise(
    w: &BrownianPath,
    eps: f64,
    gamma2: f64,
    t_end: f64,
    sample_dt: f64,
) -> Result<MildNoisePath> {
    check_gamma(gamma2, 2.0 / 3.0)?;
    if !(eps > 0.0 && eps < 1.0) || !(t_end > 0.0) || !(sample_dt > 0.0) {
        return Err(NoiseError::InvalidArgument(
            "mn2_noise needs 0 < eps < 1, t_end > 0, sample_dt > 0".into(),
        ));
    }
    let width = mollifier_width(eps, gamma2);
    check_support(w, -width, t_end + width)?;
    let n = (t_end / sample_dt).ceil().max(1.0) as usize;
    let dt = t_end / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    let mut derivs = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let (xi, xi_dot) = mollified_derivatives(w, i as f64 * dt, width);
        values.push(xi);
        derivs.push(xi_dot);
    }
    Ok(MildNoisePath {
        kind: NoiseKind::Mn2,
        eps,
        gamma: gamma2,
        seed: w.seed,
        m_const: None,
        kernel_width: width,
        t_end,
        base: SampledPath { dt, values, derivs },
        amp: 1.0,
        time_scale: 1.0,
        cutoff: None,
    })
}

/// Brownian step used for a given mollifier width: 64 cells per half-window.
pub fn brownian_dt_for_width(width: f64) -> f64 {
    width / 64.0
}

/// Samples a Brownian path covering the window needed by [`mn2_noise`] and
/// builds the noise in one go.
pub fn mn2_from_seed(
    eps: f64,
    gamma2: f64,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<MildNoisePath> {
    check_gamma(gamma2, 2.0 / 3.0)?;
    let width = mollifier_width(eps, gamma2);
    let w = sample_brownian(width, t_end + width, brownian_dt_for_width(width), seed)?;
    mn2_noise(&w, eps, gamma2, t_end, sample_dt)
}

/// Clipped, mollified Ornstein–Uhlenbeck surrogate for a stationary,
/// mixing, bounded `C^1` process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryBase {
    pub ou_rate: f64,
    /// Stationary standard deviation of the OU process.
    pub ou_std: f64,
    pub clip_level: f64,
    pub mollifier_width: f64,
    pub seed: u64,
}

impl StationaryBase {
    pub fn new(
        ou_rate: f64,
        ou_std: f64,
        clip_level: f64,
        mollifier_width: f64,
        seed: u64,
    ) -> Self {
        StationaryBase {
            ou_rate,
            ou_std,
            clip_level,
            mollifier_width,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Grid step of the OU path and of the stored samples.
    pub fn step(&self) -> f64 {
        self.mollifier_width / 16.0
    }

    /// Level at which the OU path is clipped before mollification, chosen so
    /// that `|xi| <= M` and `|xi'| <= M / width` both hold.
    pub fn inner_clip(&self) -> f64 {
        self.clip_level / (kernel::abs_derivative_mass().max(1.0) * 1.01)
    }

    /// Samples `xi` and `xi'` on `[0, span]`.
    pub fn sample(&self, span: f64) -> Result<SampledPath> {
        if !(self.mollifier_width > 0.0) || !(span > 0.0) || !(self.ou_rate > 0.0) {
            return Err(NoiseError::InvalidArgument(
                "stationary base needs positive width, span and rate".into(),
            ));
        }
        let dt = self.step();
        let half = 16usize;
        let n = (span / dt).ceil() as usize;
        // OU nodes r_k = (k - half) dt for k = 0..=n + 2 half.
        let n_ou = n + 2 * half;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2);
        let decay = (-self.ou_rate * dt).exp();
        let kick = self.ou_std * (1.0 - decay * decay).sqrt();
        let clip = self.inner_clip();
        let z0: f64 = StandardNormal.sample(&mut rng);
        let mut y = self.ou_std * z0;
        let mut clipped = Vec::with_capacity(n_ou + 1);
        clipped.push(y.clamp(-clip, clip));
        for _ in 0..n_ou {
            let z: f64 = StandardNormal.sample(&mut rng);
            y = decay * y + kick * z;
            clipped.push(y.clamp(-clip, clip));
        }
        let mids: Vec<f64> = clipped.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();

        let width = self.mollifier_width;
        // Sample i sits at OU index i + half; cell j has midpoint (j + 1/2 - half) dt.
        let mut w0 = Vec::with_capacity(2 * half);
        let mut w1 = Vec::with_capacity(2 * half);
        for m in 0..2 * half {
            let off = (m as f64 + 0.5 - half as f64) * dt;
            let tau = -off / width;
            w0.push(dt * kernel::rho(tau) / width);
            w1.push(dt * kernel::rho_prime(tau) / (width * width));
        }
        let mut values = Vec::with_capacity(n + 1);
        let mut derivs = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut v = 0.0;
            let mut d = 0.0;
            for m in 0..2 * half {
                let c = mids[i + m];
                v += w0[m] * c;
                d += w1[m] * c;
            }
            values.push(v);
            derivs.push(d);
        }
        Ok(SampledPath { dt, values, derivs })
    }
}

/// The rescaled stationary construction on `[0, t_end]`.
pub fn mn1_noise(
    base: &StationaryBase,
    eps: f64,
    gamma1: f64,
    t_end: f64,
) -> Result<MildNoisePath> {
    check_gamma(gamma1, 1.0 / 3.0)?;
    if !(eps > 0.0 && eps < 1.0) || !(t_end > 0.0) {
        return Err(NoiseError::InvalidArgument(
            "mn1_noise needs 0 < eps < 1 and t_end > 0".into(),
        ));
    }
    let time_scale = eps.powf(-2.0 * gamma1);
    let amp = eps.powf(-gamma1);
    let samples = base.sample(t_end * time_scale)?;
    Ok(MildNoisePath {
        kind: NoiseKind::Mn1,
        eps,
        gamma: gamma1,
        seed: base.seed,
        m_const: Some(base.clip_level),
        kernel_width: base.mollifier_width / time_scale,
        t_end,
        base: samples,
        amp,
        time_scale,
        cutoff: None,
    })
}

/// Estimate of `alpha_0 = sqrt(2 int_0^H C(t) dt)` for the stationary base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha0Estimate {
    pub alpha0: f64,
    pub alpha0_sq: f64,
    pub std_error_sq: f64,
    pub n_paths: usize,
    pub horizon: f64,
}

/// Empirical autocovariance of `x` at lags `0..=max_lag`, via FFT.
pub fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return vec![0.0; max_lag + 1];
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    (0..=max_lag.min(n - 1))
        .map(|k| buf[k].re / size as f64 / n as f64)
        .chain(std::iter::repeat(0.0))
        .take(max_lag + 1)
        .collect()
}

/// Averages the covariance integral over `n_paths` independent base paths
/// (seeds `base.seed + i`), each `span_factor * horizon` long.
pub fn alpha0(base: &StationaryBase, n_paths: usize, horizon: f64) -> Result<Alpha0Estimate> {
    alpha0_with_span(base, n_paths, horizon, 50.0)
}

pub fn alpha0_with_span(
    base: &StationaryBase,
    n_paths: usize,
    horizon: f64,
    span_factor: f64,
) -> Result<Alpha0Estimate> {
    if n_paths == 0 || !(horizon > 0.0) {
        return Err(NoiseError::InvalidArgument(
            "alpha0 needs paths and a horizon".into(),
        ));
    }
    let span = horizon * span_factor;
    let mut per_path = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let b = base.with_seed(base.seed.wrapping_add(i as u64));
        let path = b.sample(span)?;
        let max_lag = (horizon / path.dt).round() as usize;
        let cov = autocovariance(&path.values, max_lag);
        let integral: f64 = cov.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * path.dt;
        per_path.push(2.0 * integral);
    }
    let n = per_path.len() as f64;
    let mean = per_path.iter().sum::<f64>() / n;
    let var = if per_path.len() > 1 {
        per_path.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    if mean < 0.0 {
        return Err(NoiseError::NegativeVarianceEstimate(mean));
    }
    Ok(Alpha0Estimate {
        alpha0: mean.sqrt(),
        alpha0_sq: mean,
        std_error_sq: (var / n).sqrt(),
        n_paths,
        horizon,
    })
}

/// Result of the amplitude-growth regression for the Brownian construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBoundReport {
    pub gamma2: f64,
    pub horizon: f64,
    pub eps: Vec<f64>,
    /// Mean over paths of `sup_{[0, horizon]} |xi^eps|`.
    pub mean_sup: Vec<f64>,
    /// Largest observed `sup |xi^eps| / (eps^{-gamma2/2} |ln eps|^{1/2})`.
    pub m_fit: Vec<f64>,
    /// Least-squares slope of `ln(mean_sup / |ln eps|^{1/2})` against `-ln eps`.
    pub exponent: f64,
    pub n_paths: usize,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Samples `n_paths` Brownian-construction paths per `eps` on `[0, horizon]`
/// and fits the growth exponent of `sup |xi^eps|`. Path `i` of every `eps`
/// uses seed `master_seed + i`.
pub fn verify_mn2_bound(
    eps_list: &[f64],
    gamma2: f64,
    n_paths: usize,
    horizon: f64,
    master_seed: u64,
) -> Result<NoiseBoundReport> {
    if eps_list.len() < 2 || n_paths == 0 {
        return Err(NoiseError::InvalidArgument(
            "bound regression needs at least two eps values and one path".into(),
        ));
    }
    let mut mean_sup = Vec::new();
    let mut m_fit = Vec::new();
    for &eps in eps_list {
        let width = mollifier_width(eps, gamma2);
        let scale = eps.powf(-gamma2 / 2.0) * eps.ln().abs().sqrt();
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..n_paths {
            let path = mn2_from_seed(
                eps,
                gamma2,
                horizon,
                width / 16.0,
                master_seed.wrapping_add(i as u64),
            )?;
            let s = path.sup_abs(0.0, horizon);
            total += s;
            worst = worst.max(s / scale);
        }
        mean_sup.push(total / n_paths as f64);
        m_fit.push(worst);
    }
    let x: Vec<f64> = eps_list.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = eps_list
        .iter()
        .zip(&mean_sup)
        .map(|(e, s)| (s / e.ln().abs().sqrt()).ln())
        .collect();
    Ok(NoiseBoundReport {
        gamma2,
        horizon,
        eps: eps_list.to_vec(),
        mean_sup,
        m_fit,
        exponent: ls_slope(&x, &y),
        n_paths,
    })
}

/// Stationary variance of the mollified surrogate when clipping is inactive
/// (OU covariance `v e^{-theta |t|}` smoothed by the kernel), by quadrature.
pub fn surrogate_variance_unclipped(base: &StationaryBase) -> f64 {
    // Var = int int rho_w(a) rho_w(b) v e^{-theta |a - b|} da db.
    let w = base.mollifier_width;
    let v = base.ou_std * base.ou_std;
    let theta = base.ou_rate;
    let outer = |a: f64| {
        quadrature::double_exponential::integrate(
            |b| kernel::rho(b) * (-theta * w * (a - b).abs()).exp(),
            -1.0,
            1.0,
            1e-12,
        )
        .integral
            * kernel::rho(a)
    };
    v * quadrature::double_exponential::integrate(outer, -1.0, 1.0, 1e-11).integral
}
