//! Explicit finite-difference solvers for
//! `u_t = Laplace u + eps^{-2} f(u) + eps^{-1} xi^eps(t)` with homogeneous
//! Neumann conditions, on a 2-D rectangle and on a 1-D radial grid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checksum_f64;
use crate::noise::{MildNoisePath, NoiseSidecar};
use crate::reaction::Bistable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("solution left the guard interval at t = {time} (value {value})")]
    BlowUp { time: f64, value: f64 },
    #[error("time step {dt:e} exceeds the admissible bound {max:e}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid initial data: {0}")]
    InvalidInitial(String),
    #[error("noise path ends at {noise_end} before t_end = {t_end}")]
    NoiseTooShort { noise_end: f64, t_end: f64 },
}

pub type Result<T> = std::result::Result<T, FieldError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, h: f64, x0: f64, y0: f64) -> Result<Self> {
        if nx < 16 || ny < 16 || !(h > 0.0) {
            return Err(FieldError::InvalidGrid(format!(
                "need nx, ny >= 16 and h > 0 (got {nx} x {ny}, h = {h})"
            )));
        }
        Ok(Grid2D { nx, ny, h, x0, y0 })
    }

    /// `n x n` nodes covering the unit square, nodes on the boundary.
    pub fn unit_square(n: usize) -> Result<Self> {
        Grid2D::new(n, n, 1.0 / (n as f64 - 1.0), 0.0, 0.0)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.h
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn y_max(&self) -> f64 {
        self.y(self.ny - 1)
    }

    /// Distance from `(x, y)` to the rectangle boundary.
    pub fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.x0)
            .min(self.x_max() - x)
            .min(y - self.y0)
            .min(self.y_max() - y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub u: Vec<f64>,
    pub time: f64,
}

impl Field2D {
    pub fn from_fn(grid: Grid2D, g: impl Fn(f64, f64) -> f64) -> Self {
        let mut u = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                u.push(g(grid.x(i), grid.y(j)));
            }
        }
        Field2D { grid, u, time: 0.0 }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[self.grid.idx(i, j)]
    }

    /// Bilinear interpolation, clamped to the rectangle.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let sx = ((x - g.x0) / g.h).clamp(0.0, (g.nx - 1) as f64);
        let sy = ((y - g.y0) / g.h).clamp(0.0, (g.ny - 1) as f64);
        let i = (sx.floor() as usize).min(g.nx - 2);
        let j = (sy.floor() as usize).min(g.ny - 2);
        let (fx, fy) = (sx - i as f64, sy - j as f64);
        let u00 = self.at(i, j);
        let u10 = self.at(i + 1, j);
        let u01 = self.at(i, j + 1);
        let u11 = self.at(i + 1, j + 1);
        (1.0 - fy) * ((1.0 - fx) * u00 + fx * u10) + fy * ((1.0 - fx) * u01 + fx * u11)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn checksum(&self) -> String {
        let mut data = vec![self.time];
        data.extend_from_slice(&self.u);
        checksum_f64(&data)
    }

    /// Rows `(x, y, u)` in storage order.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.push([g.x(i), g.y(j), self.at(i, j)]);
            }
        }
        out
    }
}

/// 5-point Laplacian with mirror (ghost) reflection at the boundary.
pub fn laplacian_neumann(phi: &Field2D) -> Field2D {
    let mut out = vec![0.0; phi.u.len()];
    laplacian_into(&phi.grid, &phi.u, &mut out);
    Field2D {
        grid: phi.grid,
        u: out,
        time: phi.time,
    }
}

fn laplacian_into(g: &Grid2D, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let inv_h2 = 1.0 / (g.h * g.h);
    for j in 0..ny {
        let jm = if j == 0 { 1 } else { j - 1 };
        let jp = if j == ny - 1 { ny - 2 } else { j + 1 };
        for i in 0..nx {
            let im = if i == 0 { 1 } else { i - 1 };
            let ip = if i == nx - 1 { nx - 2 } else { i + 1 };
            let c = u[j * nx + i];
            out[j * nx + i] = (u[j * nx + im] + u[j * nx + ip] + u[jm * nx + i] + u[jp * nx + i]
                - 4.0 * c)
                * inv_h2;
        }
    }
}

/// Named initial data. Every generator places the minus phase inside the
/// initial interface, with profile
/// `u0 = a + (a_+ - a) tanh(d / w0)` for `d >= 0` and
/// `u0 = a + (a - a_-) tanh(d / w0)` for `d < 0`, where `d` is a signed
/// distance-like function that is negative inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialCondition {
    Circle {
        center: [f64; 2],
        radius: f64,
        width: f64,
    },
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        width: f64,
    },
    /// Interface `x = position`, minus phase on the left.
    Planar { position: f64, width: f64 },
    /// Nodal values in storage order, read from a CSV file.
    Custom { values: Vec<f64> },
}

/// The tanh profile around level `a` with the stated plateau values.
pub fn tanh_profile(f: &Bistable, d: f64, width: f64) -> f64 {
    let z = f.zeros();
    let s = (d / width).tanh();
    if s >= 0.0 {
        z.mid + (z.plus - z.mid) * s
    } else {
        z.mid + (z.mid - z.minus) * s
    }
}

/// The offset `d` with `tanh_profile(f, d, width) = level`, for `level`
/// strictly between the outer zeros.
pub fn tanh_profile_offset(f: &Bistable, level: f64, width: f64) -> f64 {
    let z = f.zeros();
    let s = if level >= z.mid {
        (level - z.mid) / (z.plus - z.mid)
    } else {
        (level - z.mid) / (z.mid - z.minus)
    };
    width * s.atanh()
}

impl InitialCondition {
    pub fn circle(center: [f64; 2], radius: f64, width: f64) -> Self {
        InitialCondition::Circle {
            center,
            radius,
            width,
        }
    }

    /// The signed distance-like function; `None` for custom data.
    pub fn level_function(&self, x: f64, y: f64) -> Option<f64> {
        match self {
            InitialCondition::Circle { center, radius, .. } => {
                Some(((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt() - radius)
            }
            InitialCondition::Ellipse {
                center, semi_axes, ..
            } => {
                let (a, b) = (semi_axes[0], semi_axes[1]);
                let r = (((x - center[0]) / a).powi(2) + ((y - center[1]) / b).powi(2)).sqrt();
                Some((r - 1.0) * (a * b).sqrt())
            }
            InitialCondition::Planar { position, .. } => Some(x - position),
            InitialCondition::Custom { .. } => None,
        }
    }

    fn width(&self) -> f64 {
        match self {
            InitialCondition::Circle { width, .. }
            | InitialCondition::Ellipse { width, .. }
            | InitialCondition::Planar { width, .. } => *width,
            InitialCondition::Custom { .. } => 0.0,
        }
    }

    pub fn build(&self, grid: Grid2D, f: &Bistable) -> Result<Field2D> {
        if let InitialCondition::Custom { values } = self {
            if values.len() != grid.len() {
                return Err(FieldError::InvalidInitial(format!(
                    "custom data has {} values for a grid of {}",
                    values.len(),
                    grid.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(FieldError::InvalidInitial("non-finite value".into()));
            }
            return Ok(Field2D {
                grid,
                u: values.clone(),
                time: 0.0,
            });
        }
        let w = self.width();
        if !(w > 0.0) {
            return Err(FieldError::InvalidInitial("width must be positive".into()));
        }
        Ok(Field2D::from_fn(grid, |x, y| {
            tanh_profile(f, self.level_function(x, y).unwrap(), w)
        }))
    }

    /// Parses `x,y,u` rows (header optional) in storage order.
    pub fn custom_from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let last = cols.last().unwrap().trim();
            match last.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if line_no == 0 => continue,
                Err(_) => {
                    return Err(FieldError::InvalidInitial(format!(
                        "line {}: cannot parse {last:?}",
                        line_no + 1
                    )))
                }
            }
        }
        Ok(InitialCondition::Custom { values })
    }
}

/// The time-step bound used throughout:
/// `min(h^2/4, 0.2 eps^2 / L, 1 / (4/h^2 + L/eps^2))`, with `L` the sup of
/// `|f'|` over `[a_- - 1, a_+ + 1]`. The last term keeps the explicit update
/// monotone, so the discrete comparison principle holds.
pub fn admissible_dt(f: &Bistable, h: f64, eps: f64) -> f64 {
    let z = f.zeros();
    let lip = f.sup_abs_df(z.minus - 1.0, z.plus + 1.0, 4001);
    let diff = h * h / 4.0;
    let react = 0.2 * eps * eps / lip;
    let mono = 1.0 / (4.0 / (h * h) + lip / (eps * eps));
    diff.min(react).min(mono)
}

/// Parameters of one simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub eps: f64,
    pub f: Bistable,
    pub noise: Arc<MildNoisePath>,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub initial: InitialCondition,
    pub grid: Grid2D,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let max = admissible_dt(&self.f, self.grid.h, self.eps);
        if !(self.dt > 0.0) || self.dt > max * (1.0 + 1e-12) {
            return Err(FieldError::StepTooLarge { dt: self.dt, max });
        }
        if !self.noise.is_off() && self.noise.t_end < self.t_end - 1e-12 {
            return Err(FieldError::NoiseTooShort {
                noise_end: self.noise.t_end,
                t_end: self.t_end,
            });
        }
        Ok(())
    }
}

#[inline(always)]
fn cubic(u: f64) -> f64 {
    u - u * u * u
}

/// Explicit Euler stepper shared by the 2-D and radial solvers.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub eps: f64,
    pub dt: f64,
    pub f: Bistable,
    pub guard: (f64, f64),
}

impl Stepper {
    pub fn new(f: &Bistable, eps: f64, dt: f64) -> Self {
        let z = f.zeros();
        Stepper {
            eps,
            dt,
            f: f.clone(),
            guard: (z.minus - 2.0, z.plus + 2.0),
        }
    }

    /// One step of the 2-D equation; `scratch` must have the field's length.
    pub fn step_2d(
        &self,
        state: &mut Field2D,
        noise: &MildNoisePath,
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        let xi = noise.xi(state.time + 0.5 * self.dt);
        scratch.resize(state.u.len(), 0.0);
        laplacian_into(&state.grid, &state.u, scratch);
        let dt = self.dt;
        let inv_e2 = 1.0 / (self.eps * self.eps);
        let forcing = xi / self.eps;
        let (lo, hi) = self.guard;
        let mut bad = None;
        if self.f.is_cubic() {
            for (v, lap) in state.u.iter_mut().zip(scratch.iter()) {
                let nv = *v + dt * (lap + inv_e2 * cubic(*v) + forcing);
                if !(nv >= lo && nv <= hi) {
                    bad = Some(nv);
                }
                *v = nv;
            }
        } else {
            for (v, lap) in state.u.iter_mut().zip(scratch.iter()) {
                let nv = *v + dt * (lap + inv_e2 * self.f.f(*v) + forcing);
                if !(nv >= lo && nv <= hi) {
                    bad = Some(nv);
                }
                *v = nv;
            }
        }
        state.time += dt;
        match bad {
            Some(value) => Err(FieldError::BlowUp {
                time: state.time,
                value,
            }),
            None => Ok(()),
        }
    }

    pub fn step_radial(
        &self,
        state: &mut FieldRadial,
        noise: &MildNoisePath,
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        let xi = noise.xi(state.time + 0.5 * self.dt);
        radial_operator_into(state, scratch);
        let dt = self.dt;
        let inv_e2 = 1.0 / (self.eps * self.eps);
        let forcing = xi / self.eps;
        let (lo, hi) = self.guard;
        let mut bad = None;
        for (v, lap) in state.u.iter_mut().zip(scratch.iter()) {
            let nv = *v + dt * (lap + inv_e2 * self.f.f(*v) + forcing);
            if !(nv >= lo && nv <= hi) {
                bad = Some(nv);
            }
            *v = nv;
        }
        state.time += dt;
        match bad {
            Some(value) => Err(FieldError::BlowUp {
                time: state.time,
                value,
            }),
            None => Ok(()),
        }
    }
}

/// One forward-Euler step of the 2-D equation.
pub fn step_ac(state: &Field2D, cfg: &SimConfig) -> Result<Field2D> {
    cfg.validate()?;
    let mut next = state.clone();
    let mut scratch = Vec::new();
    Stepper::new(&cfg.f, cfg.eps, cfg.dt).step_2d(&mut next, &cfg.noise, &mut scratch)?;
    Ok(next)
}

/// Deterministic record of a run: identical for identical configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub eps: f64,
    pub nonlinearity: String,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub steps: usize,
    pub seed: u64,
    pub initial: InitialCondition,
    pub noise: NoiseSidecar,
    pub snapshot_times: Vec<f64>,
    pub snapshot_checksums: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Field2D>,
    pub manifest: SimManifest,
}

/// A running 2-D simulation that can be advanced in pieces.
pub struct Simulation {
    pub state: Field2D,
    pub stepper: Stepper,
    pub noise: Arc<MildNoisePath>,
    pub steps: usize,
    scratch: Vec<f64>,
}

impl Simulation {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let state = cfg.initial.build(cfg.grid, &cfg.f)?;
        Ok(Simulation::from_state(state, cfg))
    }

    pub fn from_state(state: Field2D, cfg: &SimConfig) -> Self {
        Simulation {
            scratch: vec![0.0; state.u.len()],
            state,
            stepper: Stepper::new(&cfg.f, cfg.eps, cfg.dt),
            noise: cfg.noise.clone(),
            steps: 0,
        }
    }

    pub fn step(&mut self) -> Result<()> {
        self.stepper
            .step_2d(&mut self.state, &self.noise, &mut self.scratch)?;
        self.steps += 1;
        Ok(())
    }

    /// Steps while the step nearest to `t` has not been reached.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = steps_for(t, self.stepper.dt);
        while self.steps < target {
            self.step()?;
        }
        Ok(())
    }
}

/// Index of the step nearest to time `t`.
pub fn steps_for(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

/// Runs to `t_end`, keeping the snapshot nearest to each requested time.
pub fn run_simulation(cfg: &SimConfig) -> Result<Trajectory> {
    let mut sim = Simulation::new(cfg)?;
    let mut times: Vec<f64> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t <= cfg.t_end + 1e-12)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if cfg.t_end == 0.0 || times.is_empty() {
        times = vec![0.0];
    }
    let mut snapshots = Vec::with_capacity(times.len());
    for &t in &times {
        sim.advance_to(t)?;
        snapshots.push(sim.state.clone());
    }
    sim.advance_to(cfg.t_end)?;
    let manifest = SimManifest {
        eps: cfg.eps,
        nonlinearity: cfg.f.name().to_string(),
        nx: cfg.grid.nx,
        ny: cfg.grid.ny,
        h: cfg.grid.h,
        dt: cfg.dt,
        t_end: cfg.t_end,
        steps: sim.steps,
        seed: cfg.seed,
        initial: cfg.initial.clone(),
        noise: cfg.noise.sidecar(),
        snapshot_times: snapshots.iter().map(|s| s.time).collect(),
        snapshot_checksums: snapshots.iter().map(|s| s.checksum()).collect(),
    };
    Ok(Trajectory {
        snapshots,
        manifest,
    })
}

/// Radial field on `r_i = i dr`, `i = 0..nr`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRadial {
    pub dr: f64,
    pub u: Vec<f64>,
    pub time: f64,
}

impl FieldRadial {
    pub fn from_fn(nr: usize, r_max: f64, g: impl Fn(f64) -> f64) -> Result<Self> {
        if nr < 16 || !(r_max > 0.0) {
            return Err(FieldError::InvalidGrid(
                "radial grid needs nr >= 16, r_max > 0".into(),
            ));
        }
        let dr = r_max / (nr - 1) as f64;
        Ok(FieldRadial {
            dr,
            u: (0..nr).map(|i| g(i as f64 * dr)).collect(),
            time: 0.0,
        })
    }

    /// Circle data `tanh_profile(r - radius)`.
    pub fn circle(f: &Bistable, nr: usize, r_max: f64, radius: f64, width: f64) -> Result<Self> {
        FieldRadial::from_fn(nr, r_max, |r| tanh_profile(f, r - radius, width))
    }

    pub fn nr(&self) -> usize {
        self.u.len()
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    pub fn r_max(&self) -> f64 {
        self.r(self.nr() - 1)
    }

    /// Innermost radius where `u` crosses `level` upwards, by linear
    /// interpolation; `None` if `u(0) >= level` (no minus phase left).
    pub fn level_radius(&self, level: f64) -> Option<f64> {
        if self.u[0] >= level {
            return None;
        }
        for i in 0..self.nr() - 1 {
            let (a, b) = (self.u[i], self.u[i + 1]);
            if a < level && b >= level {
                let x = (level - a) / (b - a);
                return Some(self.r(i) + x * self.dr);
            }
        }
        None
    }

    /// Linear interpolation at radius `r`.
    pub fn sample(&self, r: f64) -> f64 {
        let s = (r / self.dr).clamp(0.0, (self.nr() - 1) as f64);
        let i = (s.floor() as usize).min(self.nr() - 2);
        let x = s - i as f64;
        self.u[i] * (1.0 - x) + self.u[i + 1] * x
    }
}

/// `u_rr + u_r / r` with the symmetric limit `2 u_rr` at `r = 0` and a
/// mirror node at `r_max`.
fn radial_operator_into(state: &FieldRadial, out: &mut Vec<f64>) {
    let n = state.nr();
    out.resize(n, 0.0);
    let u = &state.u;
    let inv_h2 = 1.0 / (state.dr * state.dr);
    out[0] = 4.0 * (u[1] - u[0]) * inv_h2;
    for i in 1..n - 1 {
        let r = i as f64 * state.dr;
        out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_h2
            + (u[i + 1] - u[i - 1]) / (2.0 * r * state.dr);
    }
    out[n - 1] = 2.0 * (u[n - 2] - u[n - 1]) * inv_h2;
}

/// One explicit step of the radial equation.
pub fn step_ac_radial(
    state: &FieldRadial,
    f: &Bistable,
    eps: f64,
    dt: f64,
    noise: &MildNoisePath,
) -> Result<FieldRadial> {
    let max = admissible_dt(f, state.dr, eps);
    if dt > max * (1.0 + 1e-12) {
        return Err(FieldError::StepTooLarge { dt, max });
    }
    let mut next = state.clone();
    let mut scratch = Vec::new();
    Stepper::new(f, eps, dt).step_radial(&mut next, noise, &mut scratch)?;
    Ok(next)
}

/// A running radial simulation.
pub struct RadialSimulation {
    pub state: FieldRadial,
    pub stepper: Stepper,
    pub noise: Arc<MildNoisePath>,
    pub steps: usize,
    scratch: Vec<f64>,
}

impl RadialSimulation {
    pub fn new(
        state: FieldRadial,
        f: &Bistable,
        eps: f64,
        dt: f64,
        noise: Arc<MildNoisePath>,
    ) -> Result<Self> {
        let max = admissible_dt(f, state.dr, eps);
        if !(dt > 0.0) || dt > max * (1.0 + 1e-12) {
            return Err(FieldError::StepTooLarge { dt, max });
        }
        Ok(RadialSimulation {
            scratch: vec![0.0; state.nr()],
            state,
            stepper: Stepper::new(f, eps, dt),
            noise,
            steps: 0,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        self.stepper
            .step_radial(&mut self.state, &self.noise, &mut self.scratch)?;
        self.steps += 1;
        Ok(())
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = steps_for(t, self.stepper.dt);
        while self.steps < target {
            self.step()?;
        }
        Ok(())
    }
}
