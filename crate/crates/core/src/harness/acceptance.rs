//! The twelve acceptance criteria and the suites that group them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    io, run_config, Check, Config, Context, ExperimentKind, ExperimentOutput, HarnessError, Result,
};
use crate::field::tanh_profile_offset;
use crate::geometry::extract_level_set;
use crate::reaction::{shift_nonlinearity, solve_reaction_ode};
use crate::wave::{c0, solve_wave_default, speed_only};

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "traveling wave matches tanh(z/sqrt 2)"),
    (2, "c0 quadrature and -dc/ddelta"),
    (3, "reaction ODE closed form"),
    (4, "noise sup growth exponent"),
    (5, "noise-free circle shrinks as sqrt(R0^2 - 2t)"),
    (6, "generation time and M0 stability"),
    (7, "layer thickness exponent"),
    (8, "pathwise circle radius"),
    (9, "profile in the layer"),
    (10, "sub/super certification"),
    (11, "kappa equation vs radius SDE"),
    (12, "determinism"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl Criterion {
    fn new(id: u8, checks: Vec<Check>) -> Self {
        let name = CRITERIA[id as usize - 1].1.to_string();
        Criterion {
            id,
            name,
            pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
            checks,
        }
    }

    /// One line: status, id, name and the first failing check if any.
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let mut s = format!("{status} {:>2} {}", self.id, self.name);
        if let Some(c) = self.checks.iter().find(|c| !c.pass) {
            s.push_str(&format!(" ({}: {} vs {})", c.name, c.value, c.bound));
        } else if let Some(c) = self.checks.first() {
            s.push_str(&format!(" ({}: {})", c.name, c.value));
        }
        s
    }
}

/// Criterion ids of a named suite: `acceptance` (all), `quick` (the
/// analytic oracles and determinism) or a comma-separated list of ids
/// `1`..`12`.
pub fn suite(name: &str) -> Result<Vec<u8>> {
    match name {
        "acceptance" | "all" => Ok((1..=12).collect()),
        "quick" => Ok(vec![1, 2, 3, 12]),
        _ => name
            .split(',')
            .map(|part| match part.trim().parse::<u8>() {
                Ok(id) if (1..=12).contains(&id) => Ok(id),
                _ => Err(HarnessError::UnknownSuite(name.into())),
            })
            .collect(),
    }
}

pub fn wave_oracle(ctx: &Context) -> Result<Criterion> {
    let w = solve_wave_default(&ctx.f, 0.0)?;
    let s = std::f64::consts::SQRT_2;
    let err = w
        .z_grid()
        .iter()
        .zip(&w.m)
        .map(|(z, m)| (m - (z / s).tanh()).abs())
        .fold(0.0, f64::max);
    Ok(Criterion::new(
        1,
        vec![
            Check::at_most("sup |U0 - tanh(z/sqrt 2)|", err, 1e-6),
            Check::at_most("|c(0)|", w.c.abs(), 1e-8),
        ],
    ))
}

pub fn c0_oracle(ctx: &Context) -> Result<Criterion> {
    let exact = 3.0 / std::f64::consts::SQRT_2;
    let q = c0(&ctx.f)?;
    let d = 1e-3;
    let fd = -(speed_only(&ctx.f, d)? - speed_only(&ctx.f, -d)?) / (2.0 * d);
    Ok(Criterion::new(
        2,
        vec![
            Check::at_most("|c0 - 3/sqrt 2|", (q - exact).abs(), 1e-6),
            Check::at_most(
                "relative gap of -dc/ddelta(0) to c0",
                (fd - q).abs() / q,
                0.01,
            ),
        ],
    ))
}

pub fn reaction_oracle(ctx: &Context) -> Result<Criterion> {
    let fe = shift_nonlinearity(&ctx.f, 0.0)?;
    let y = solve_reaction_ode(&fe, 0.0, 0.1, 2.0, 1e-4)?.last();
    // Y' = Y - Y^3 separates to Y^2 = y0^2 e^{2t} / (1 - y0^2 + y0^2 e^{2t}).
    let g = 0.01 * (4.0f64).exp();
    let exact = (g / (1.0 - 0.01 + g)).sqrt();
    Ok(Criterion::new(
        3,
        vec![Check::at_most(
            "|Y(2, 0.1) - exact|",
            (y - exact).abs(),
            1e-6,
        )],
    ))
}

/// Noise-free 2-D circle runs against `sqrt(R0^2 - 2t)` at five times in
/// `[t_eps, horizon]`, for the two largest sweep values.
pub fn deterministic_circle(ctx: &Context) -> Result<Criterion> {
    let c = &ctx.cfg.circle;
    let mid = ctx.f.zeros().mid;
    let mut eps_list = ctx.cfg.sweep.eps.clone();
    eps_list.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut checks = Vec::new();
    for &eps in eps_list.iter().take(2) {
        let run = ctx.circle_run(eps, 0, false)?;
        let r0 = c.radius + tanh_profile_offset(&ctx.f, mid, c.width);
        let mut worst: f64 = 0.0;
        let n = run.layer.len();
        for k in (0..5).map(|k| k * (n.max(1) - 1) / 4) {
            let Some(u) = run.layer.get(k) else { break };
            let ls = extract_level_set(u, mid);
            let r = ls.main_loop().map(|l| l.area_radius()).unwrap_or(0.0);
            let exact = (r0 * r0 - 2.0 * u.time).max(0.0).sqrt();
            worst = worst.max((r - exact).abs());
        }
        if n == 0 {
            worst = f64::INFINITY;
        }
        checks.push(Check::at_most(
            format!("radius gap at eps={eps}"),
            worst,
            3.0 * eps + 2.0 * run.h,
        ));
    }
    Ok(Criterion::new(5, checks))
}

fn from_output(id: u8, out: &ExperimentOutput, keep: impl Fn(&Check) -> bool) -> Criterion {
    Criterion::new(id, out.checks.iter().filter(|c| keep(c)).cloned().collect())
}

/// Runs the smoke configuration twice and compares the CSV bodies byte by byte.
pub fn determinism(out: &Path) -> Result<Criterion> {
    let cfg = Config::smoke();
    let a = out.join("determinism").join("a");
    let b = out.join("determinism").join("b");
    run_config(&cfg, &a)?;
    run_config(&cfg, &b)?;
    let mut checks = Vec::new();
    for kind in &cfg.run.experiments {
        let name = format!("{}.csv", kind.name());
        let same = std::fs::read(a.join(&name))? == std::fs::read(b.join(&name))?;
        checks.push(Check::new(
            format!("{name} identical"),
            same,
            f64::from(u8::from(same)),
            "identical",
        ));
    }
    Ok(Criterion::new(12, checks))
}

/// Evaluates the criteria `ids` under `cfg`, writing every experiment's
/// artifacts and `acceptance.json` into `out`. `on_result` sees each
/// criterion as soon as it is decided.
pub fn run_criteria(
    ids: &[u8],
    cfg: &Config,
    out: &Path,
    mut on_result: impl FnMut(&Criterion),
) -> Result<Vec<Criterion>> {
    std::fs::create_dir_all(out)?;
    let ctx = Context::new(cfg.clone());
    let mut results = Vec::new();
    let experiment = |kind: ExperimentKind| -> Result<ExperimentOutput> {
        let o = ctx.run(kind)?;
        o.write(out, cfg)?;
        Ok(o)
    };
    for &id in ids {
        let c = match id {
            1 => wave_oracle(&ctx)?,
            2 => c0_oracle(&ctx)?,
            3 => reaction_oracle(&ctx)?,
            4 => from_output(4, &experiment(ExperimentKind::NoiseBounds)?, |_| true),
            5 => deterministic_circle(&ctx)?,
            6 => from_output(6, &experiment(ExperimentKind::Generation)?, |c| {
                c.name.starts_with("generation time ratio") || c.name.starts_with("M0 ratio")
            }),
            7 => from_output(7, &experiment(ExperimentKind::Thickness)?, |_| true),
            8 => from_output(8, &experiment(ExperimentKind::CirclePathwise)?, |c| {
                !c.name.starts_with("noise-free")
            }),
            9 => from_output(9, &experiment(ExperimentKind::Profile)?, |_| true),
            10 => from_output(10, &experiment(ExperimentKind::SandwichCert)?, |_| true),
            11 => from_output(11, &experiment(ExperimentKind::FunakiKappa)?, |c| {
                c.name.starts_with("kappa equation") || c.name.starts_with("gap ratio")
            }),
            12 => determinism(out)?,
            _ => return Err(HarnessError::UnknownSuite(id.to_string())),
        };
        on_result(&c);
        results.push(c);
    }
    io::write_json(&out.join("acceptance.json"), &results)?;
    Ok(results)
}
