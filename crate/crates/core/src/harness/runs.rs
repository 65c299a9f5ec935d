//! Simulation runs shared by several experiments.

use std::sync::Arc;

use super::{Context, Result};
use crate::field::{
    admissible_dt, tanh_profile_offset, Field2D, Grid2D, InitialCondition, SimConfig, Simulation,
};
use crate::geometry::{LevelSet, Point, Polyline};
use crate::interface_flow::{
    radius_sde, FlowForcing, RadiusDrive, RadiusPath, Rect, StopClause, StoppingMonitor,
};
use crate::noise::MildNoisePath;
use crate::reaction::{shift_nonlinearity, Bistable};

/// Generation time `eps^2 |ln eps| / mu_eps` and the shifted middle zero
/// `a^eps`, both for the shift `eps xi(0)`.
pub fn generation_time(f: &Bistable, eps: f64, noise: &MildNoisePath) -> Result<(f64, f64)> {
    let shifted = shift_nonlinearity(f, eps * noise.xi(0.0))?;
    let t_eps = eps * eps * eps.ln().abs() / shifted.mu_eps;
    Ok((t_eps, shifted.zeros_eps.mid))
}

/// `n` equally spaced times covering `[t0, t1]`.
pub fn spread(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![t1];
    }
    (0..n)
        .map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Stopping time of a circle of radius path `radius` centred in `domain`.
pub fn circle_stopping(
    radius: &RadiusPath,
    center: Point,
    domain: Rect,
    n: f64,
) -> StoppingMonitor {
    let mut monitor = StoppingMonitor::new(n);
    let room = domain.boundary_distance(center);
    for (&t, &r) in radius.t.iter().zip(&radius.r) {
        let kappa_bar = (1.0 / r).max(r);
        if monitor.observe(t, kappa_bar, room - r) {
            break;
        }
    }
    if monitor.triggered_at.is_none() {
        if let Some(t) = radius.extinct_at {
            monitor.triggered_at = Some(t);
            monitor.clause = Some(StopClause::Curvature);
        }
    }
    monitor
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CircleKey {
    eps_bits: u64,
    index: usize,
    noise: bool,
}

/// A 2-D circle run on the unit square with its reference flow.
#[derive(Debug, Clone)]
pub struct CircleRun {
    pub eps: f64,
    pub index: usize,
    pub seed: u64,
    pub noise_on: bool,
    pub h: f64,
    pub dt: f64,
    pub t_eps: f64,
    pub a_eps: f64,
    /// Radius of `{u_0 = a^eps}`, the start of the reference flow.
    pub r0_eps: f64,
    pub center: Point,
    pub radius: RadiusPath,
    pub stop: Option<(f64, StopClause)>,
    /// `min(t_max, stopping time - margin)`.
    pub horizon: f64,
    pub noise_checksum: String,
    /// Snapshots at `n_times` times on `[t_eps, horizon]`.
    pub layer: Vec<Field2D>,
    /// Snapshots at `n_times` times on `[rho t_eps, horizon]`.
    pub late: Vec<Field2D>,
}

impl CircleRun {
    /// True when the horizon leaves no window after `rho t_eps`.
    pub fn stopped_early(&self) -> bool {
        self.layer.is_empty()
    }

    pub fn reference_radius(&self, t: f64) -> Option<f64> {
        self.radius.at(t)
    }

    /// The reference circle at time `t` as a closed polyline.
    pub fn reference(&self, t: f64, level: f64) -> Option<LevelSet> {
        let r = self.reference_radius(t)?;
        let n = ((2.0 * std::f64::consts::PI * r / (self.h / 2.0)).ceil() as usize).max(64);
        Some(LevelSet::from_polylines(
            level,
            vec![Polyline::circle(self.center, r, n)],
        ))
    }
}

impl Context {
    /// The circle run for sweep cell `(eps, index)`, computed once.
    pub fn circle_run(&self, eps: f64, index: usize, noise_on: bool) -> Result<Arc<CircleRun>> {
        let key = CircleKey {
            eps_bits: eps.to_bits(),
            index,
            noise: noise_on,
        };
        if let Some(run) = self.circle_runs.borrow().get(&key) {
            return Ok(run.clone());
        }
        let run = Arc::new(self.compute_circle_run(eps, index, noise_on)?);
        self.circle_runs.borrow_mut().insert(key, run.clone());
        Ok(run)
    }

    fn compute_circle_run(&self, eps: f64, index: usize, noise_on: bool) -> Result<CircleRun> {
        let c = &self.cfg.circle;
        let grid = Grid2D::unit_square(self.cfg.sweep.grid)?;
        let dt = admissible_dt(&self.f, grid.h, eps);
        let center = [0.5, 0.5];
        let noise = self.noise_path(eps, index, c.t_max + 0.01, dt, noise_on)?;
        let (t_eps, a_eps) = generation_time(&self.f, eps, &noise)?;
        let r0_eps = c.radius + tanh_profile_offset(&self.f, a_eps, c.width);
        let forcing = FlowForcing::new(eps, noise.clone(), self.speed()?);
        // Snapshots land on the PDE step grid, slightly past the horizon.
        let radius = radius_sde(
            r0_eps,
            RadiusDrive::Forcing(&forcing),
            c.radius_dt,
            c.t_max + 1e-3,
        )?;
        let monitor = circle_stopping(&radius, center, Rect::unit(), c.stop_n);
        let stop = monitor.triggered_at.zip(monitor.clause);
        let horizon = match stop {
            Some((t, _)) => c.t_max.min(t - c.stop_margin),
            None => c.t_max,
        };
        let rho = self.cfg.profile.rho_time;
        let (layer_times, late_times) = if horizon > rho * t_eps {
            (
                spread(t_eps, horizon, c.n_times),
                spread(rho * t_eps, horizon, c.n_times),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let sim_cfg = SimConfig {
            eps,
            f: self.f.clone(),
            noise: noise.clone(),
            dt,
            t_end: horizon.max(0.0),
            snapshot_times: Vec::new(),
            initial: InitialCondition::circle(center, c.radius, c.width),
            grid,
            seed: self.seed(index),
        };
        let mut sim = Simulation::new(&sim_cfg)?;
        let mut all: Vec<(f64, usize, usize)> = layer_times
            .iter()
            .enumerate()
            .map(|(k, &t)| (t, 0, k))
            .chain(late_times.iter().enumerate().map(|(k, &t)| (t, 1, k)))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut layer = vec![None; layer_times.len()];
        let mut late = vec![None; late_times.len()];
        for (t, which, k) in all {
            sim.advance_to(t)?;
            let slot = if which == 0 {
                &mut layer[k]
            } else {
                &mut late[k]
            };
            *slot = Some(sim.state.clone());
        }
        Ok(CircleRun {
            eps,
            index,
            seed: self.seed(index),
            noise_on,
            h: grid.h,
            dt,
            t_eps,
            a_eps,
            r0_eps,
            center,
            radius,
            stop,
            horizon,
            noise_checksum: noise.checksum(),
            layer: layer.into_iter().map(Option::unwrap).collect(),
            late: late.into_iter().map(Option::unwrap).collect(),
        })
    }
}
