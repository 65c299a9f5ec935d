//! The eight experiments. Each returns one CSV table, a JSON summary of the
//! fitted constants and its PASS/FAIL checks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::io::{num, Table};
use super::runs::{generation_time, spread, CircleRun};
use super::stats::{mean, power_fit, std_dev};
use super::{Check, Context, ExperimentKind, ExperimentOutput, HarnessError, Result};
use crate::field::{
    admissible_dt, tanh_profile_offset, Field2D, FieldRadial, Grid2D, InitialCondition,
    RadialSimulation, SimConfig, Simulation,
};
use crate::geometry::{
    extract_level_set, l2_step_distance, layer_width, transition_distance, GeometryError,
    SegmentIndex,
};
use crate::interface_flow::{
    front_boundary_distance, radius_sde, reconstruct_curve, step_kappa_spde, FlowError,
    FlowForcing, GaussMapCurve, RadiusDrive, Rect, StoppingMonitor,
};
use crate::noise::{alpha0, verify_mn2_bound, StationaryBase};
use crate::reaction::Zeros;
use crate::sandwich::{
    calibrate_k, calibrate_m1, compute_params, residual_check, sandwich_check, select_l,
    step_bound_check, DistanceModel, FlowShape, ResidualProbes, SandwichError, SubSuperPair,
};
use crate::wave::c0;

pub fn run(ctx: &Context, kind: ExperimentKind) -> Result<ExperimentOutput> {
    match kind {
        ExperimentKind::Generation => generation(ctx),
        ExperimentKind::Thickness => thickness(ctx),
        ExperimentKind::Profile => profile(ctx),
        ExperimentKind::CirclePathwise => circle_pathwise(ctx),
        ExperimentKind::FunakiKappa => funaki_kappa(ctx),
        ExperimentKind::L2Step => l2_step(ctx),
        ExperimentKind::SandwichCert => sandwich_cert(ctx),
        ExperimentKind::NoiseBounds => noise_bounds(ctx),
    }
}

fn flag(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

/// Sweep cells `(index, noise_on)`: the noisy seeds, then one noise-free cell
/// when requested.
fn cells(ctx: &Context, deterministic: bool) -> Vec<(usize, bool)> {
    let noisy = ctx.cfg.noise.kind != crate::noise::NoiseKind::Off;
    let mut out: Vec<(usize, bool)> = if noisy {
        (0..ctx.cfg.sweep.seeds).map(|i| (i, true)).collect()
    } else {
        Vec::new()
    };
    if deterministic || !noisy {
        out.push((0, false));
    }
    out
}

/// Sorted copy of the sweep, largest `eps` first.
fn sweep(list: &[f64]) -> Vec<f64> {
    let mut v = list.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.dedup();
    v
}

/// Ratios `v[k + 1] / v[k]`.
fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Smallest `|grad u|` along `{u = level}`, by central differences of the
/// bilinear interpolant at the level-set vertices.
pub fn min_gradient_on_level(u: &Field2D, level: f64) -> Result<f64> {
    let ls = extract_level_set(u, level);
    if ls.is_empty() {
        return Err(HarnessError::NonDegenerateViolation(format!(
            "u0 never crosses {level}"
        )));
    }
    let h = u.grid.h;
    let mut worst = f64::INFINITY;
    for l in &ls.loops {
        for p in &l.points {
            let gx = (u.sample(p[0] + h, p[1]) - u.sample(p[0] - h, p[1])) / (2.0 * h);
            let gy = (u.sample(p[0], p[1] + h) - u.sample(p[0], p[1] - h)) / (2.0 * h);
            worst = worst.min(gx.hypot(gy));
        }
    }
    if !(worst > 0.0) {
        return Err(HarnessError::NonDegenerateViolation(format!(
            "grad u0 vanishes on {{u0 = {level}}}"
        )));
    }
    Ok(worst)
}

/// Smallest `M` such that every node with `u0 - a_eps >= M eps` ends above
/// `plus - eta` and every node with `u0 - a_eps <= -M eps` below
/// `minus + eta`.
pub fn fit_m0(
    u0: &Field2D,
    u: &Field2D,
    a_eps: f64,
    eps: f64,
    eta: f64,
    minus: f64,
    plus: f64,
) -> f64 {
    let mut m0: f64 = 0.0;
    for (&v0, &v) in u0.u.iter().zip(&u.u) {
        let s = (v0 - a_eps) / eps;
        if (s > 0.0 && v < plus - eta) || (s < 0.0 && v > minus + eta) {
            m0 = m0.max(s.abs());
        }
    }
    m0
}

struct GenerationCell {
    eps: f64,
    index: usize,
    noise_on: bool,
    t_eps: f64,
    mu_eps: f64,
    a_eps: f64,
    theta: f64,
    m0: f64,
    range_at_t_eps: bool,
    /// Last time the global range failed.
    t_range: f64,
    /// `|u0 - a_eps| / eps` and first confinement time per node.
    levels: Vec<f64>,
    first_hit: Vec<f64>,
    t_run: f64,
}

fn generation_cell(
    ctx: &Context,
    eps: f64,
    index: usize,
    noise_on: bool,
) -> Result<GenerationCell> {
    let g = &ctx.cfg.generation;
    let f = &ctx.f;
    let z = f.zeros();
    let grid = Grid2D::unit_square(ctx.cfg.sweep.grid)?;
    let dt = admissible_dt(f, grid.h, eps);
    let t_guess = eps * eps * eps.ln().abs();
    let noise = ctx.noise_path(
        eps,
        index,
        2.0 * g.max_factor * t_guess + 1e-3,
        dt,
        noise_on,
    )?;
    let (t_eps, a_eps) = generation_time(f, eps, &noise)?;
    let mu_eps = eps * eps * eps.ln().abs() / t_eps;
    let initial = InitialCondition::circle([0.5, 0.5], g.radius, g.width);
    let u0 = initial.build(grid, f)?;
    let theta = min_gradient_on_level(&u0, a_eps)?;
    let t_run = g.max_factor * t_eps;
    let cfg = SimConfig {
        eps,
        f: f.clone(),
        noise,
        dt,
        t_end: t_run,
        snapshot_times: Vec::new(),
        initial,
        grid,
        seed: ctx.seed(index),
    };
    let mut sim = Simulation::new(&cfg)?;
    let n = grid.len();
    let levels: Vec<f64> = u0.u.iter().map(|&v| (v - a_eps) / eps).collect();
    let mut first_hit = vec![f64::INFINITY; n];
    let (lo, hi) = (z.minus - g.eta, z.plus + g.eta);
    let mark = |u: &Field2D, t: f64, first_hit: &mut Vec<f64>| -> bool {
        let mut in_range = true;
        for (k, &v) in u.u.iter().enumerate() {
            if v < lo || v > hi {
                in_range = false;
            }
            if first_hit[k].is_infinite()
                && ((levels[k] > 0.0 && v >= z.plus - g.eta)
                    || (levels[k] < 0.0 && v <= z.minus + g.eta))
            {
                first_hit[k] = t;
            }
        }
        in_range
    };
    let mut t_range = if mark(&sim.state, 0.0, &mut first_hit) {
        0.0
    } else {
        f64::INFINITY
    };
    let te_step = crate::field::steps_for(t_eps, dt);
    let total = crate::field::steps_for(t_run, dt);
    let mut m0 = f64::NAN;
    let mut range_at_t_eps = false;
    while sim.steps < total {
        sim.step()?;
        let t = sim.state.time;
        if mark(&sim.state, t, &mut first_hit) {
            if t_range.is_infinite() {
                t_range = t;
            }
        } else {
            t_range = f64::INFINITY;
        }
        if sim.steps == te_step {
            m0 = fit_m0(&u0, &sim.state, a_eps, eps, g.eta, z.minus, z.plus);
            range_at_t_eps = sim.state.u.iter().all(|&v| v >= lo && v <= hi);
        }
    }
    Ok(GenerationCell {
        eps,
        index,
        noise_on,
        t_eps,
        mu_eps,
        a_eps,
        theta,
        m0,
        range_at_t_eps,
        t_range,
        levels,
        first_hit,
        t_run,
    })
}

fn generation(ctx: &Context) -> Result<ExperimentOutput> {
    let g = &ctx.cfg.generation;
    let mut all = Vec::new();
    for eps in sweep(&ctx.cfg.sweep.eps) {
        for (index, on) in cells(ctx, g.deterministic) {
            all.push(generation_cell(ctx, eps, index, on)?);
        }
    }
    let m_ref = all.iter().map(|c| c.m0).fold(0.0, f64::max);
    let hash = ctx.cfg.hash();
    let mut table = Table::new(&[
        "config_hash",
        "seed",
        "eps",
        "index",
        "noise",
        "t_eps",
        "mu_eps",
        "a_eps",
        "theta",
        "m0",
        "m_ref",
        "t_generation",
        "ratio",
        "range_at_t_eps",
    ]);
    let mut checks = Vec::new();
    for c in &all {
        let t_imp = c
            .levels
            .iter()
            .zip(&c.first_hit)
            .filter(|(l, _)| l.abs() >= m_ref)
            .map(|(_, &t)| t)
            .fold(0.0, f64::max);
        let t_gen = t_imp.max(c.t_range);
        let ratio = t_gen / c.t_eps;
        let tag = format!("eps={} index={} noise={}", c.eps, c.index, c.noise_on);
        checks.push(Check::within(
            format!("generation time ratio ({tag})"),
            ratio,
            0.5,
            2.0,
        ));
        checks.push(Check::new(
            format!("global range at t_eps ({tag})"),
            c.range_at_t_eps,
            c.t_eps,
            "range holds",
        ));
        table.push(vec![
            hash.clone(),
            ctx.seed(c.index).to_string(),
            num(c.eps),
            c.index.to_string(),
            flag(c.noise_on),
            num(c.t_eps),
            num(c.mu_eps),
            num(c.a_eps),
            num(c.theta),
            num(c.m0),
            num(m_ref),
            if t_gen <= c.t_run {
                num(t_gen)
            } else {
                "inf".into()
            },
            num(ratio),
            flag(c.range_at_t_eps),
        ]);
    }
    let eps_list = sweep(&ctx.cfg.sweep.eps);
    let m0_mean: Vec<f64> = eps_list
        .iter()
        .map(|&e| {
            mean(
                &all.iter()
                    .filter(|c| c.eps == e)
                    .map(|c| c.m0)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    for (k, r) in ratios(&m0_mean).into_iter().enumerate() {
        checks.push(Check::within(
            format!("M0 ratio eps={} -> {}", eps_list[k], eps_list[k + 1]),
            r,
            0.7,
            1.4,
        ));
    }
    Ok(ExperimentOutput {
        kind: ExperimentKind::Generation,
        table,
        summary: json!({ "eta": g.eta, "m_ref": m_ref, "eps": eps_list, "m0_mean": m0_mean }),
        checks,
    })
}

/// Fitted width exponent per noise mode.
fn fit_modes(
    rows: &[(f64, bool, f64)],
    eps_list: &[f64],
    modes: &[bool],
) -> Vec<(bool, Vec<f64>, Option<super::stats::PowerFit>)> {
    let mut out = Vec::new();
    for &mode in modes {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for &e in eps_list {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.0 == e && r.1 == mode)
                .map(|r| r.2)
                .collect();
            if !vals.is_empty() {
                x.push(e);
                y.push(mean(&vals));
            }
        }
        let fit = power_fit(&x, &y);
        out.push((mode, y, fit));
    }
    out
}

fn circle_cells(ctx: &Context) -> Result<Vec<Arc<CircleRun>>> {
    let mut out = Vec::new();
    for eps in sweep(&ctx.cfg.sweep.eps) {
        for (index, on) in cells(ctx, ctx.cfg.circle.deterministic) {
            out.push(ctx.circle_run(eps, index, on)?);
        }
    }
    Ok(out)
}

fn stop_columns(run: &CircleRun) -> [String; 3] {
    match run.stop {
        Some((t, clause)) => [
            num(t),
            format!("{clause:?}").to_lowercase(),
            num(run.horizon),
        ],
        None => ["".into(), "none".into(), num(run.horizon)],
    }
}

fn thickness(ctx: &Context) -> Result<ExperimentOutput> {
    let eta = ctx.cfg.thickness.eta;
    let z = ctx.f.zeros();
    let hash = ctx.cfg.hash();
    let mut table = Table::new(&[
        "config_hash",
        "seed",
        "eps",
        "index",
        "noise",
        "t",
        "max_width",
        "mean_width",
        "area_width",
        "transition_distance",
        "reference_radius",
        "stop_time",
        "stop_clause",
        "horizon",
        "status",
    ]);
    let mut cell_stats = Vec::new();
    let mut unresolved = 0usize;
    for run in circle_cells(ctx)? {
        let [st, sc, hz] = stop_columns(&run);
        if run.stopped_early() {
            table.push(vec![
                hash.clone(),
                run.seed.to_string(),
                num(run.eps),
                run.index.to_string(),
                flag(run.noise_on),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
                "".into(),
                st,
                sc,
                hz,
                "stopped_early".into(),
            ]);
            continue;
        }
        let mut worst_width: f64 = 0.0;
        let mut resolved = true;
        for u in &run.layer {
            let ls = extract_level_set(u, z.mid);
            let reference = run
                .reference(u.time, z.mid)
                .expect("snapshot inside the reference horizon");
            let measured = layer_width(u, eta, &ls, z, 0.25)
                .and_then(|lw| Ok((lw, transition_distance(u, eta, z, &reference)?)));
            let (lw, td) = match measured {
                Ok(v) => v,
                // A plateau or the interface itself is gone: nothing to measure.
                Err(GeometryError::EmptyLevelSet) => {
                    let mut row = vec![
                        hash.clone(),
                        run.seed.to_string(),
                        num(run.eps),
                        run.index.to_string(),
                        flag(run.noise_on),
                        num(u.time),
                    ];
                    row.extend(vec![String::new(); 5]);
                    row.extend([st.clone(), sc.clone(), hz.clone(), "no_layer".into()]);
                    table.push(row);
                    resolved = false;
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            worst_width = worst_width.max(lw.max_width);
            table.push(vec![
                hash.clone(),
                run.seed.to_string(),
                num(run.eps),
                run.index.to_string(),
                flag(run.noise_on),
                num(u.time),
                num(lw.max_width),
                num(lw.mean_width),
                num(lw.area_width),
                num(td),
                num(run.reference_radius(u.time).unwrap()),
                st.clone(),
                sc.clone(),
                hz.clone(),
                "ok".into(),
            ]);
        }
        if resolved {
            cell_stats.push((run.eps, run.noise_on, worst_width));
        } else {
            unresolved += 1;
        }
    }
    let eps_list = sweep(&ctx.cfg.sweep.eps);
    let mut checks = vec![Check::new(
        "cells without a measurable layer",
        unresolved == 0,
        unresolved as f64,
        "0",
    )];
    let mut summary = serde_json::Map::new();
    let mut modes = Vec::new();
    if ctx.cfg.noise.kind != crate::noise::NoiseKind::Off {
        modes.push(true);
    }
    if ctx.cfg.circle.deterministic || modes.is_empty() {
        modes.push(false);
    }
    for (mode, widths, fit) in fit_modes(&cell_stats, &eps_list, &modes) {
        let name = if mode { "noise_on" } else { "noise_off" };
        match fit {
            Some(fit) => {
                checks.push(Check::within(
                    format!("width exponent ({name})"),
                    fit.exponent,
                    0.8,
                    1.2,
                ));
                summary.insert(name.into(), json!({ "mean_max_width": widths, "fit": fit }));
            }
            None => checks.push(Check::new(
                format!("width exponent ({name})"),
                false,
                f64::NAN,
                "needs two eps values with measurements",
            )),
        }
    }
    summary.insert("eps".into(), json!(eps_list));
    summary.insert("eta".into(), json!(eta));
    Ok(ExperimentOutput {
        kind: ExperimentKind::Thickness,
        table,
        summary: serde_json::Value::Object(summary),
        checks,
    })
}

/// `sup |u - U0(d / eps)|` over `|d| <= band eps`, `d` the signed distance
/// to `{u = a}`.
pub fn profile_error(
    u: &Field2D,
    eps: f64,
    band: f64,
    zeros: Zeros,
    u0: impl Fn(f64) -> f64,
) -> Result<f64> {
    let ls = extract_level_set(u, zeros.mid);
    let index = SegmentIndex::new(&ls, band * eps)?;
    let g = &u.grid;
    let mut worst: f64 = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let p = [g.x(i), g.y(j)];
            if let Some(d) = index.distance_within(p) {
                let v = u.at(i, j);
                let d = if v < zeros.mid { -d } else { d };
                worst = worst.max((v - u0(d / eps)).abs());
            }
        }
    }
    Ok(worst)
}

fn profile(ctx: &Context) -> Result<ExperimentOutput> {
    let p = &ctx.cfg.profile;
    let z = ctx.f.zeros();
    let family = ctx.family()?;
    let wave = family.center();
    let hash = ctx.cfg.hash();
    let mut table = Table::new(&[
        "config_hash",
        "seed",
        "eps",
        "index",
        "noise",
        "t",
        "sup_error",
        "horizon",
        "status",
    ]);
    let mut cell_stats = Vec::new();
    for run in circle_cells(ctx)? {
        if run.stopped_early() {
            table.push(vec![
                hash.clone(),
                run.seed.to_string(),
                num(run.eps),
                run.index.to_string(),
                flag(run.noise_on),
                "".into(),
                "".into(),
                num(run.horizon),
                "stopped_early".into(),
            ]);
            continue;
        }
        let mut worst: f64 = 0.0;
        for u in &run.late {
            let e = profile_error(u, run.eps, p.band, z, |s| wave.eval(s).0)?;
            worst = worst.max(e);
            table.push(vec![
                hash.clone(),
                run.seed.to_string(),
                num(run.eps),
                run.index.to_string(),
                flag(run.noise_on),
                num(u.time),
                num(e),
                num(run.horizon),
                "ok".into(),
            ]);
        }
        cell_stats.push((run.eps, run.noise_on, worst));
    }
    let eps_list = sweep(&ctx.cfg.sweep.eps);
    let noisy = ctx.cfg.noise.kind != crate::noise::NoiseKind::Off;
    let per_eps: Vec<f64> = eps_list
        .iter()
        .map(|&e| {
            cell_stats
                .iter()
                .filter(|c| c.0 == e && c.1 == noisy)
                .map(|c| c.2)
                .fold(f64::NAN, f64::max)
        })
        .collect();
    let bound = 0.05 * z.span();
    let mut checks = Vec::new();
    let last = *per_eps.last().unwrap();
    checks.push(Check::at_most(
        format!("profile error at eps={}", eps_list.last().unwrap()),
        if last.is_nan() { f64::INFINITY } else { last },
        bound,
    ));
    let decay = ratios(&per_eps).iter().map(|r| 1.0 / r).collect::<Vec<_>>();
    let monotone = per_eps.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check::new(
        "profile error decreases along the sweep",
        monotone,
        decay.iter().copied().fold(f64::INFINITY, f64::min),
        "error(eps) / error(eps/2) > 1",
    ));
    Ok(ExperimentOutput {
        kind: ExperimentKind::Profile,
        table,
        summary: json!({
            "eps": eps_list,
            "sup_error": per_eps,
            "decay_ratio": decay,
            "band": p.band,
            "rho_time": p.rho_time,
            "noise": noisy,
        }),
        checks,
    })
}

fn l2_step(ctx: &Context) -> Result<ExperimentOutput> {
    let z = ctx.f.zeros();
    let hash = ctx.cfg.hash();
    let mut table = Table::new(&[
        "config_hash",
        "seed",
        "eps",
        "index",
        "noise",
        "t",
        "l2",
        "status",
    ]);
    let mut cell_stats = Vec::new();
    for run in circle_cells(ctx)? {
        if run.stopped_early() {
            table.push(vec![
                hash.clone(),
                run.seed.to_string(),
                num(run.eps),
                run.index.to_string(),
                flag(run.noise_on),
                "".into(),
                "".into(),
                "stopped_early".into(),
            ]);
            continue;
        }
        let mut worst: f64 = 0.0;
        for u in &run.layer {
            let r = run.reference_radius(u.time).unwrap();
            let reference = crate::geometry::LevelSet::from_polylines(
                z.mid,
                vec![crate::geometry::Polyline::circle(run.center, r, 256)],
            );
            let l2 = l2_step_distance(u, &reference, z)?;
            worst = worst.max(l2);
            table.push(vec![
                hash.clone(),
                run.seed.to_string(),
                num(run.eps),
                run.index.to_string(),
                flag(run.noise_on),
                num(u.time),
                num(l2),
                "ok".into(),
            ]);
        }
        cell_stats.push((run.eps, run.noise_on, worst));
    }
    let eps_list = sweep(&ctx.cfg.sweep.eps);
    let noisy = ctx.cfg.noise.kind != crate::noise::NoiseKind::Off;
    let per_eps: Vec<f64> = eps_list
        .iter()
        .map(|&e| {
            let v: Vec<f64> = cell_stats
                .iter()
                .filter(|c| c.0 == e && c.1 == noisy)
                .map(|c| c.2)
                .collect();
            if v.is_empty() {
                f64::NAN
            } else {
                mean(&v)
            }
        })
        .collect();
    let fit = power_fit(&eps_list, &per_eps);
    let budget = ctx.cfg.l2_step.budget_factor * z.span();
    let mut checks = vec![Check::new(
        "sup-in-time L2 distance decreases along the sweep",
        per_eps.windows(2).all(|w| w[1] < w[0]),
        ratios(&per_eps).iter().copied().fold(0.0, f64::max),
        "ratio < 1",
    )];
    let last = *per_eps.last().unwrap();
    checks.push(Check::at_most(
        format!("L2 distance at eps={}", eps_list.last().unwrap()),
        if last.is_nan() { f64::INFINITY } else { last },
        budget,
    ));
    Ok(ExperimentOutput {
        kind: ExperimentKind::L2Step,
        table,
        summary: json!({ "eps": eps_list, "sup_l2": per_eps, "fit": fit, "budget": budget }),
        checks,
    })
}

struct PathwiseCell {
    sup_diff: f64,
    horizon: f64,
    t_eps: f64,
    extinct: bool,
    checksum: String,
    h: f64,
}

fn pathwise_cell(ctx: &Context, eps: f64, index: usize, noise_on: bool) -> Result<PathwiseCell> {
    let c = &ctx.cfg.pathwise;
    let f = &ctx.f;
    let z = f.zeros();
    let nr = (c.r_max / (c.dr_over_eps * eps)).ceil() as usize + 1;
    let state = FieldRadial::circle(f, nr, c.r_max, c.radius, c.width)?;
    let dt = admissible_dt(f, state.dr, eps);
    let h = state.dr;
    let noise = ctx.noise_path(eps, index, c.t_max + 0.01, dt, noise_on)?;
    let (t_eps, a_eps) = generation_time(f, eps, &noise)?;
    let r0_eps = c.radius + tanh_profile_offset(f, a_eps, c.width);
    let forcing = FlowForcing::new(eps, noise.clone(), ctx.speed()?);
    // Past `t_max` so the rounded PDE time stays inside the path.
    let radius = radius_sde(
        r0_eps,
        RadiusDrive::Forcing(&forcing),
        1e-6,
        c.t_max + c.margin,
    )?;
    let r_cap = c.r_max - 0.25;
    let stop = radius
        .t
        .iter()
        .zip(&radius.r)
        .find(|(_, &r)| r > r_cap)
        .map(|(&t, _)| t)
        .or(radius.extinct_at);
    let horizon = match stop {
        Some(t) => c.t_max.min(t - c.margin),
        None => c.t_max,
    };
    let mut sim = RadialSimulation::new(state, f, eps, dt, noise.clone())?;
    let mut sup_diff: f64 = 0.0;
    let mut extinct = false;
    let mut t = t_eps;
    while t <= horizon + 1e-12 {
        sim.advance_to(t)?;
        match sim.state.level_radius(z.mid) {
            Some(r_pde) => {
                let r_ref = if noise_on {
                    radius.at(sim.state.time).unwrap()
                } else {
                    (c.radius * c.radius - 2.0 * sim.state.time).max(0.0).sqrt()
                };
                sup_diff = sup_diff.max((r_pde - r_ref).abs());
            }
            None => {
                extinct = true;
                break;
            }
        }
        t += c.sample_every;
    }
    Ok(PathwiseCell {
        sup_diff,
        horizon,
        t_eps,
        extinct,
        checksum: noise.checksum(),
        h,
    })
}

fn circle_pathwise(ctx: &Context) -> Result<ExperimentOutput> {
    let hash = ctx.cfg.hash();
    let mut table = Table::new(&[
        "config_hash",
        "seed",
        "eps",
        "index",
        "noise",
        "t_eps",
        "horizon",
        "sup_diff",
        "sup_diff_over_eps",
        "extinct",
        "noise_checksum",
    ]);
    let eps_list = sweep(&ctx.cfg.sweep.eps);
    let mut checks = Vec::new();
    let mut c_mean = Vec::new();
    for &eps in &eps_list {
        let mut cs = Vec::new();
        for (index, on) in cells(ctx, true) {
            let cell = pathwise_cell(ctx, eps, index, on)?;
            let tag = format!("eps={eps} index={index}");
            if on {
                checks.push(Check::at_most(
                    format!("pathwise radius gap ({tag})"),
                    cell.sup_diff,
                    5.0 * eps,
                ));
                cs.push(cell.sup_diff / eps);
            } else {
                checks.push(Check::at_most(
                    format!("noise-free radius vs sqrt(R0^2 - 2t) (eps={eps})"),
                    cell.sup_diff,
                    2.0 * eps + 2.0 * cell.h,
                ));
            }
            table.push(vec![
                hash.clone(),
                ctx.seed(index).to_string(),
                num(eps),
                index.to_string(),
                flag(on),
                num(cell.t_eps),
                num(cell.horizon),
                num(cell.sup_diff),
                num(cell.sup_diff / eps),
                flag(cell.extinct),
                cell.checksum,
            ]);
        }
        if !cs.is_empty() {
            c_mean.push(mean(&cs));
        }
    }
    for (k, r) in ratios(&c_mean).into_iter().enumerate() {
        checks.push(Check::within(
            format!(
                "pathwise constant ratio eps={} -> {}",
                eps_list[k],
                eps_list[k + 1]
            ),
            r,
            0.6,
            1.6,
        ));
    }
    Ok(ExperimentOutput {
        kind: ExperimentKind::CirclePathwise,
        table,
        summary: json!({ "eps": eps_list, "constant": c_mean }),
        checks,
    })
}

/// Maximum over the path of `|kappa - 1/R|` between the Heun kappa equation
/// and the radius SDE driven by the same increments.
pub fn stratonovich_gap(
    kappa0: f64,
    n_theta: usize,
    coef: f64,
    increments: &[f64],
    dt: f64,
) -> Result<f64> {
    let mut curve = GaussMapCurve::from_fn(n_theta, [1.0 / kappa0, 0.0], |_| kappa0)?;
    let radius = radius_sde(
        1.0 / kappa0,
        RadiusDrive::Brownian { increments, coef },
        dt,
        dt * increments.len() as f64,
    )?;
    let mut gap: f64 = 0.0;
    for (n, &dw) in increments.iter().enumerate() {
        curve = step_kappa_spde(&curve, dt, coef, dw)?;
        let r = radius.r[n + 1];
        for &k in &curve.kappa {
            gap = gap.max((k - 1.0 / r).abs());
        }
    }
    Ok(gap)
}

/// Gaussian increments on the fine step `dt / 2` and their pairwise sums.
pub fn nested_increments(seed: u64, steps: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (dt / 2.0).sqrt();
    let fine: Vec<f64> = (0..2 * steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        })
        .collect();
    let coarse = fine.chunks(2).map(|p| p[0] + p[1]).collect();
    (coarse, fine)
}

fn funaki_kappa(ctx: &Context) -> Result<ExperimentOutput> {
    let fk = &ctx.cfg.funaki;
    let n = &ctx.cfg.noise;
    let hash = ctx.cfg.hash();
    let mut table = Table::new(&["config_hash", "case", "path", "dt", "metric", "value"]);
    let mut checks = Vec::new();
    let row = |case: &str, path: String, dt: f64, metric: &str, value: f64| {
        vec![
            hash.clone(),
            case.into(),
            path,
            num(dt),
            metric.into(),
            num(value),
        ]
    };
    let steps = (fk.t_end / fk.dt).round() as usize;

    // Constant curvature without noise against the separable solution.
    let mut curve = GaussMapCurve::from_fn(fk.n_theta, [1.0 / fk.kappa0, 0.0], |_| fk.kappa0)?;
    let mut err: f64 = 0.0;
    for _ in 0..steps {
        curve = step_kappa_spde(&curve, fk.dt, 0.0, 0.0)?;
        let exact = fk.kappa0 / (1.0 - 2.0 * fk.kappa0 * fk.kappa0 * curve.time).sqrt();
        err = err.max(
            curve
                .kappa
                .iter()
                .map(|k| (k - exact).abs())
                .fold(0.0, f64::max),
        );
    }
    checks.push(Check::at_most(
        "constant kappa vs separable solution",
        err,
        1e-4,
    ));
    table.push(row("constant_off", "".into(), fk.dt, "max_error", err));

    // Constant curvature with noise against the mapped radius SDE.
    let base = StationaryBase::new(n.ou_rate, n.ou_std, n.clip_level, 0.1, ctx.seed(0));
    let alpha = alpha0(&base, fk.alpha_paths, 200.0)?;
    let coef = c0(&ctx.f)? * alpha.alpha0.max(0.0).sqrt();
    let mut coarse_gaps = Vec::new();
    let mut fine_gaps = Vec::new();
    for p in 0..fk.paths {
        let (coarse, fine) = nested_increments(ctx.seed(1000 + p), steps, fk.dt);
        let g1 = stratonovich_gap(fk.kappa0, fk.n_theta, coef, &coarse, fk.dt)?;
        let g2 = stratonovich_gap(fk.kappa0, fk.n_theta, coef, &fine, fk.dt / 2.0)?;
        table.push(row("constant_on", p.to_string(), fk.dt, "gap", g1));
        table.push(row("constant_on", p.to_string(), fk.dt / 2.0, "gap", g2));
        coarse_gaps.push(g1);
        fine_gaps.push(g2);
    }
    let (g1, g2) = (mean(&coarse_gaps), mean(&fine_gaps));
    checks.push(Check::at_most("kappa equation vs radius SDE gap", g1, 1e-3));
    checks.push(Check::within(
        "gap ratio under step halving",
        g1 / g2,
        1.7,
        2.3,
    ));

    // Perturbed curvature without noise: the roundness statistic decays.
    let perturbed = |th: f64| fk.kappa0 * (1.0 + 0.1 * (2.0 * th).cos());
    let mut curve = GaussMapCurve::from_fn(fk.n_theta, [1.0 / fk.kappa0, 0.0], perturbed)?;
    let sample = (steps / 10).max(1);
    let mut roundness = vec![curve.roundness()];
    for k in 1..=steps {
        curve = step_kappa_spde(&curve, fk.dt, 0.0, 0.0)?;
        if k % sample == 0 {
            roundness.push(curve.roundness());
            table.push(row(
                "perturbed_off",
                "".into(),
                curve.time,
                "roundness",
                curve.roundness(),
            ));
        }
    }
    let decreasing = roundness.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check::new(
        "roundness decreases without noise",
        decreasing,
        *roundness.last().unwrap() / roundness[0],
        "strictly decreasing",
    ));

    // Perturbed curvature with noise: stopping monitor and convexity.
    let mut curve = GaussMapCurve::from_fn(fk.n_theta, [1.0 / fk.kappa0, 0.0], perturbed)?;
    let (increments, _) = nested_increments(ctx.seed(999), steps, fk.dt);
    let domain = Rect {
        x0: -2.0 / fk.kappa0,
        y0: -2.0 / fk.kappa0,
        x1: 2.0 / fk.kappa0,
        y1: 2.0 / fk.kappa0,
    };
    let mut monitor = StoppingMonitor::new(fk.stop_n);
    let mut convexity_lost = None;
    let mut consistent = true;
    for (k, &dw) in increments.iter().enumerate() {
        match step_kappa_spde(&curve, fk.dt, coef, dw) {
            Ok(next) => curve = next,
            Err(FlowError::ConvexityLost { time }) => {
                convexity_lost = Some(time);
                break;
            }
            Err(e) => return Err(e.into()),
        }
        if (k + 1) % sample == 0 {
            let rec = reconstruct_curve(&curve)?;
            let kb = curve.kappa_bar();
            let bd = front_boundary_distance(&rec.curve, domain);
            let fired = monitor.observe(curve.time, kb, bd);
            // Once fired, the monitor must report the first crossing.
            if fired && monitor.triggered_at.unwrap() > curve.time {
                consistent = false;
            }
            table.push(row("perturbed_on", "".into(), curve.time, "kappa_bar", kb));
            if fired {
                break;
            }
        }
    }
    let pre_trigger_ok = monitor
        .times
        .iter()
        .zip(monitor.kappa_bar.iter().zip(&monitor.boundary_distance))
        .filter(|(t, _)| monitor.triggered_at.map_or(true, |s| **t < s))
        .all(|(_, (kb, bd))| *kb <= fk.stop_n && *bd >= 1.0 / fk.stop_n);
    checks.push(Check::new(
        "stopping monitor fires at the first crossing",
        consistent && pre_trigger_ok,
        monitor.triggered_at.unwrap_or(f64::NAN),
        "kappa_bar <= N and distance >= 1/N before the stopping time",
    ));
    checks.push(Check::new(
        "convex until stopped",
        convexity_lost.is_none() || monitor.triggered_at.is_some(),
        convexity_lost.unwrap_or(f64::NAN),
        "convexity lost only after the stopping time",
    ));
    Ok(ExperimentOutput {
        kind: ExperimentKind::FunakiKappa,
        table,
        summary: json!({
            "alpha0": alpha.alpha0,
            "coef": coef,
            "separable_error": err,
            "gap": [g1, g2],
            "gap_ratio": g1 / g2,
            "gap_std": [std_dev(&coarse_gaps), std_dev(&fine_gaps)],
            "stopping": { "time": monitor.triggered_at, "clause": monitor.clause, "convexity_lost": convexity_lost },
        }),
        checks,
    })
}

fn noise_bounds(ctx: &Context) -> Result<ExperimentOutput> {
    let nb = &ctx.cfg.noise_bounds;
    let eps_list = sweep(&nb.eps);
    let rep = verify_mn2_bound(
        &eps_list,
        ctx.cfg.noise.gamma2,
        nb.paths,
        nb.horizon,
        ctx.seed(0),
    )?;
    let hash = ctx.cfg.hash();
    let mut table = Table::new(&["config_hash", "eps", "paths", "mean_sup", "m_fit"]);
    for k in 0..eps_list.len() {
        table.push(vec![
            hash.clone(),
            num(rep.eps[k]),
            rep.n_paths.to_string(),
            num(rep.mean_sup[k]),
            num(rep.m_fit[k]),
        ]);
    }
    let checks = vec![Check::within(
        "sup |xi| growth exponent",
        rep.exponent,
        0.20,
        0.30,
    )];
    Ok(ExperimentOutput {
        kind: ExperimentKind::NoiseBounds,
        table,
        summary: serde_json::to_value(&rep)?,
        checks,
    })
}

/// Everything measured on one sandwich cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SandwichCell {
    pub eps: f64,
    pub index: usize,
    pub t_eps: f64,
    pub a_eps: f64,
    pub delta_range: f64,
    pub m0: f64,
    pub theta: f64,
    pub m1: f64,
    pub k: f64,
    pub l: Option<f64>,
    pub horizon: Option<f64>,
    pub continuum_min_plus: Option<f64>,
    pub continuum_max_minus: Option<f64>,
    pub fd_min_plus: Option<f64>,
    pub fd_max_minus: Option<f64>,
    pub fd_budget: Option<f64>,
    pub fd_pass: Option<bool>,
    pub violations: Option<usize>,
    pub worst_margin: Option<f64>,
    pub slack: Option<f64>,
    pub step_bound_violations: usize,
    pub step_bound_margin: f64,
    pub failure: Option<String>,
    pub h: f64,
    pub dt: f64,
}

pub fn sandwich_cell(ctx: &Context, eps: f64, index: usize) -> Result<SandwichCell> {
    let s = &ctx.cfg.sandwich;
    let f = &ctx.f;
    let family = ctx.family()?;
    let n = s.grid;
    let grid = Grid2D::new(n, n, s.side / (n - 1) as f64, 0.0, 0.0)?;
    let center = [s.side / 2.0, s.side / 2.0];
    let dt = admissible_dt(f, grid.h, eps);
    let t_noise = 4.0 * eps * eps * eps.ln().abs() + s.t_max + 0.01;
    let noise = ctx.noise_path(eps, index, t_noise, dt, s.noise)?;
    let (t_eps, a_eps) = generation_time(f, eps, &noise)?;
    let r0_eps = s.radius + tanh_profile_offset(f, a_eps, s.width);
    let initial = InitialCondition::circle(center, s.radius, s.width);
    let u0 = initial.build(grid, f)?;
    let theta = min_gradient_on_level(&u0, a_eps)?;
    let sim_cfg = SimConfig {
        eps,
        f: f.clone(),
        noise: noise.clone(),
        dt,
        t_end: t_eps + s.t_max,
        snapshot_times: Vec::new(),
        initial,
        grid,
        seed: ctx.seed(index),
    };
    let mut sim = Simulation::new(&sim_cfg)?;
    sim.advance_to(t_eps)?;
    let u_te = sim.state.clone();
    let t_start = u_te.time;
    let delta_now = eps * noise.xi(t_start);
    let delta_range = eps * noise.sup_abs(0.0, t_start + s.t_max);
    let mut params = compute_params(f, &family, delta_range, s.t_max, eps, 2.0, s.d0)?;
    let half = params.sigma * params.beta / 2.0;
    let plateaus = (family.a_minus(delta_now)?, family.a_plus(delta_now)?);
    let m0 = fit_m0(&u0, &u_te, a_eps, eps, half, plateaus.0, plateaus.1);
    let dist = |x: f64, y: f64| (x - center[0]).hypot(y - center[1]) - r0_eps;
    let m1 = calibrate_m1(&u0, dist, a_eps, m0, eps);
    let k = calibrate_k(m1, &family, &params, delta_now)?;
    params = compute_params(f, &family, delta_range, s.t_max, eps, k, s.d0)?;
    let step_bounds = step_bound_check(&u_te, dist, plateaus, &params, m1, eps);

    let mut cell = SandwichCell {
        eps,
        index,
        t_eps,
        a_eps,
        delta_range,
        m0,
        theta,
        m1,
        k,
        l: None,
        horizon: None,
        continuum_min_plus: None,
        continuum_max_minus: None,
        fd_min_plus: None,
        fd_max_minus: None,
        fd_budget: None,
        fd_pass: None,
        violations: None,
        worst_margin: None,
        slack: None,
        step_bound_violations: step_bounds.violations,
        step_bound_margin: step_bounds.worst_margin,
        failure: None,
        h: grid.h,
        dt,
    };

    let forcing = FlowForcing::new(eps, noise.clone(), ctx.speed()?).shifted(t_start);
    // Snapshots and the centred time differences of the residual probe read
    // the flow slightly past the horizon.
    let radius = radius_sde(
        r0_eps,
        RadiusDrive::Forcing(&forcing),
        s.radius_dt,
        s.t_max + 1e-3,
    )?;
    if let Some(t) = radius.extinct_at {
        cell.failure = Some(format!("reference circle vanished at t = {t}"));
        return Ok(cell);
    }
    let make_pair = |p| -> crate::sandwich::Result<SubSuperPair> {
        Ok(SubSuperPair {
            params: p,
            eps,
            family: family.clone(),
            f: f.clone(),
            distance: DistanceModel::new(
                FlowShape::Circle {
                    center,
                    radius: radius.clone(),
                    forcing: forcing.clone(),
                },
                s.d0,
            ),
            forcing: forcing.clone(),
        })
    };
    let r_max = s.side / 2.0 * std::f64::consts::SQRT_2;
    let make_probes = |h| ResidualProbes::radial(center, r_max, eps, params.beta, h, 20);
    let selection = match select_l(params, s.t_max, make_pair, make_probes) {
        Ok(sel) => sel,
        Err(SandwichError::SideConditionFail(msg)) => {
            cell.failure = Some(msg);
            return Ok(cell);
        }
        Err(e) => return Err(e.into()),
    };
    cell.l = Some(selection.l);
    cell.horizon = Some(selection.horizon);
    cell.continuum_min_plus = Some(selection.residual.min_plus);
    cell.continuum_max_minus = Some(selection.residual.max_minus);
    let pair = make_pair(params.with_l(selection.l).with_horizon(selection.horizon))?;

    let times = spread(0.0, selection.horizon, s.snapshots);
    let mut snapshots = Vec::with_capacity(times.len());
    for &t in &times {
        sim.advance_to(t_start + t)?;
        snapshots.push(sim.state.clone());
    }
    let report = sandwich_check(&snapshots, &pair, t_start, dt)?;
    cell.violations = Some(report.violations);
    cell.worst_margin = Some(report.worst_margin);
    cell.slack = Some(report.tol);
    let fd = residual_check(&pair, &grid, &times, s.probe_stride)?;
    cell.fd_min_plus = Some(fd.min_plus);
    cell.fd_max_minus = Some(fd.max_minus);
    cell.fd_budget = Some(fd.budget);
    cell.fd_pass = Some(fd.pass);
    Ok(cell)
}

/// Reference values of the cubic constants `(rho, a1, sigma0, sigma1, sigma2)`.
pub const CUBIC_CONSTANTS: [f64; 5] = [0.92, 0.2546, 0.02136, 0.4065, 0.0623];

fn sandwich_cert(ctx: &Context) -> Result<ExperimentOutput> {
    let s = &ctx.cfg.sandwich;
    let family = ctx.family()?;
    let hash = ctx.cfg.hash();
    let mut checks = Vec::new();
    let base = compute_params(&ctx.f, &family, 0.0, s.t_max, s.eps[0], 2.0, s.d0)?;
    let got = [base.rho, base.a1, base.sigma0, base.sigma1, base.sigma2];
    for (name, (g, want)) in ["rho", "a1", "sigma0", "sigma1", "sigma2"]
        .iter()
        .zip(got.iter().zip(CUBIC_CONSTANTS))
    {
        checks.push(Check::at_most(
            format!("{name} relative error"),
            (g - want).abs() / want,
            0.01,
        ));
    }
    let mut table = Table::new(&[
        "config_hash",
        "seed",
        "eps",
        "index",
        "t_eps",
        "delta_range",
        "m0",
        "theta",
        "m1",
        "k",
        "l",
        "horizon",
        "continuum_min_plus",
        "continuum_max_minus",
        "fd_min_plus",
        "fd_max_minus",
        "fd_budget",
        "violations",
        "worst_margin",
        "slack",
        "step_bound_violations",
        "failure",
    ]);
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut cells_out = Vec::new();
    for &eps in &sweep(&s.eps) {
        for index in 0..s.seeds {
            let c = sandwich_cell(ctx, eps, index)?;
            let tag = format!("eps={eps} index={index}");
            checks.push(Check::new(
                format!("L selected with side conditions ({tag})"),
                c.failure.is_none(),
                c.l.unwrap_or(f64::NAN),
                "some L = 2^k, k <= 10",
            ));
            if c.failure.is_none() {
                let budget = c.fd_budget.unwrap();
                checks.push(Check::new(
                    format!("finite-difference residual ({tag})"),
                    c.fd_pass.unwrap(),
                    c.fd_min_plus.unwrap().min(-c.fd_max_minus.unwrap()),
                    format!(">= -{budget:e}"),
                ));
                checks.push(Check::at_most(
                    format!("sandwich violations ({tag})"),
                    c.violations.unwrap() as f64,
                    0.0,
                ));
            }
            table.push(vec![
                hash.clone(),
                ctx.seed(index).to_string(),
                num(eps),
                index.to_string(),
                num(c.t_eps),
                num(c.delta_range),
                num(c.m0),
                num(c.theta),
                num(c.m1),
                num(c.k),
                opt(c.l),
                opt(c.horizon),
                opt(c.continuum_min_plus),
                opt(c.continuum_max_minus),
                opt(c.fd_min_plus),
                opt(c.fd_max_minus),
                opt(c.fd_budget),
                c.violations.map(|v| v.to_string()).unwrap_or_default(),
                opt(c.worst_margin),
                opt(c.slack),
                c.step_bound_violations.to_string(),
                c.failure.clone().unwrap_or_default(),
            ]);
            cells_out.push(c);
        }
    }
    Ok(ExperimentOutput {
        kind: ExperimentKind::SandwichCert,
        table,
        summary: json!({ "constants": base, "cells": cells_out }),
        checks,
    })
}
