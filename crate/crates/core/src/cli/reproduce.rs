//! Data behind the standard figures, with a manifest of every setting.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::commands::{rate_model, RateChoice};
use super::{Context, Report};
use crate::dynsys::{integrate_with, IntegrateOptions};
use crate::error::{Error, Result};
use crate::escape::grid::{linspace, mode_validity_boundary};
use crate::escape::{
    deterministic_boundary, escape_grid_1d, monte_carlo_escape, q_inverse, solve_fpe_1d, solve_fpe_2d_monsoon,
    EscapeGrid, EscapeMethod, FpeGrid1D, FpeGrid2D, GridSpec, McSpec, MonsoonReduction, RateModel,
};
use crate::forcing::{ForcingProfile, Sech2Forcing};
use crate::io::{write_atomic, write_json_atomic};
use crate::monsoon::{analyze_fold, escape_box, stable_equilibrium, MonsoonParams, A_INF};
use crate::tipping::{classify_by_simulation, critical_curve, write_critical_curve_csv, Sech2Family, SimulationSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Figure {
    /// Monsoon trajectories for four albedo overshoots.
    Fig1,
    /// Simulated critical curve and the asymptotic law.
    Fig3,
    /// Canonical escape probability over (R, t_e), FPE and mode approximation.
    Fig4,
    /// Monsoon escape probability from the mode approximation.
    Fig5,
    /// Canonical escape probability over (q1, q2).
    Fig6,
    /// Monsoon 1D mode approximation against the 2D Fokker-Planck solution.
    #[value(name = "appendix-b", alias = "appendixB")]
    #[serde(rename = "appendix-b")]
    AppendixB,
}

impl Figure {
    fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::AppendixB => "appendix-b",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Smaller grids (20 x 20 for probability maps) for a quick look.
    #[arg(long)]
    pub coarse: bool,
    /// Seed for Monte-Carlo spot checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Escape-rate model for mode approximations.
    #[arg(long, value_enum, default_value = "fit")]
    pub rate: RateChoice,
}

/// Settings and results index written next to the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub figure: String,
    pub crate_version: String,
    pub coarse: bool,
    pub time_unit: String,
    pub settings: Value,
    pub files: Vec<String>,
    pub completed: usize,
    pub total: usize,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub checks: Value,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        write_atomic(&self.dir.join(name), fill)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

struct Outcome {
    settings: Value,
    checks: Value,
    completed: usize,
    total: usize,
    summary: String,
}

pub fn reproduce(a: &ReproduceArgs, ctx: &Context) -> Result<Report> {
    let dir = ctx.out.join(a.figure.name());
    let mut out = Output { dir, files: Vec::new() };
    let start = Instant::now();
    let over_budget = || ctx.budget.is_some_and(|b| start.elapsed() > b);
    let outcome = match a.figure {
        Figure::Fig1 => fig1(ctx, &mut out)?,
        Figure::Fig3 => fig3(a, ctx, &mut out, &over_budget)?,
        Figure::Fig4 => fig4(a, ctx, &mut out)?,
        Figure::Fig5 => fig5(a, ctx, &mut out)?,
        Figure::Fig6 => fig6(a, &mut out, &over_budget)?,
        Figure::AppendixB => appendix_b(a, ctx, &mut out, &over_budget)?,
    };
    let manifest = Manifest {
        figure: a.figure.name().into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        coarse: a.coarse,
        time_unit: ctx.time_unit().into(),
        settings: outcome.settings,
        files: out.files.clone(),
        completed: outcome.completed,
        total: outcome.total,
        complete: outcome.completed == outcome.total,
        checks: outcome.checks,
    };
    let mpath = out.dir.join("manifest.json");
    write_json_atomic(&mpath, &manifest)?;
    if !manifest.complete {
        return Err(Error::BudgetExceeded {
            completed: outcome.completed,
            total: outcome.total,
        });
    }
    let mut files: Vec<PathBuf> = out.files.iter().map(|f| out.dir.join(f)).collect();
    files.push(mpath);
    Ok(Report {
        summary: format!("reproduce {}: {}", a.figure.name(), outcome.summary),
        files,
    })
}

fn fig1(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let params = MonsoonParams::default();
    let fold = analyze_fold(&params)?;
    let a_b = fold.fold.q_b;
    let sys = params.system(fold.weights);
    let setup = SimulationSetup::new(escape_box(), crate::monsoon::GUESS.to_vec());
    let scenarios = [("green", 0.01), ("pink", 0.02), ("light-brown", 0.027), ("bright-blue", 0.03)];
    let speed = 0.5;
    let mut verdicts = Vec::new();
    for (name, r) in scenarios {
        let pulse = Sech2Forcing::with_background_tolerance(A_INF, r, speed, a_b, 1e-4);
        let forcing = ForcingProfile::Sech2(pulse);
        let verdict = classify_by_simulation(&sys, &forcing, &setup)?;
        let y0 = stable_equilibrium(&params, pulse.value(0.0))?;
        let opts = IntegrateOptions::with_tol(1e-9).escape(escape_box());
        let traj = integrate_with(&sys, &y0, (0.0, pulse.t_end), &forcing, &opts)?;
        out.write(&format!("fig1_{name}.csv"), |w| {
            writeln!(w, "t,A_sys,Q_a,T_a")?;
            for (t, y) in traj.times.iter().zip(&traj.states) {
                writeln!(w, "{},{},{},{}", ctx.time_out(*t), pulse.value(*t), y[0], y[1])?;
            }
            Ok(())
        })?;
        verdicts.push(json!({
            "scenario": name,
            "R": r,
            "t_e": ctx.time_out(pulse.exceedance_time_exact(a_b)),
            "tipped": verdict.tipped,
        }));
    }
    let tipped: Vec<&str> = scenarios
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| v["tipped"] == json!(true))
        .map(|(s, _)| s.0)
        .collect();
    Ok(Outcome {
        settings: json!({ "S": speed, "A_inf": A_INF, "A_b": a_b, "tol": 1e-9 }),
        checks: json!(verdicts),
        completed: 4,
        total: 4,
        summary: format!("4 trajectories, tipped: {}", if tipped.is_empty() { "none".into() } else { tipped.join(", ") }),
    })
}

fn fig3(a: &ReproduceArgs, ctx: &Context, out: &mut Output, over_budget: &(dyn Fn() -> bool + Sync)) -> Result<Outcome> {
    let params = MonsoonParams::default();
    let fold = analyze_fold(&params)?;
    let sys = params.system(fold.weights);
    let (lo, hi, n) = if a.coarse { (1.0, 4.0, 15) } else { (0.5, 4.5, 41) };
    let grid = linspace(lo, hi, n);
    let setup = SimulationSetup::new(escape_box(), crate::monsoon::GUESS.to_vec());
    let family = Sech2Family::new(A_INF, fold.fold.q_b);
    let r_tol = 1e-5;
    let mut pts = Vec::new();
    for chunk in grid.chunks(rayon::current_num_threads().max(1)) {
        if over_budget() {
            break;
        }
        pts.extend(critical_curve(&sys, &family, chunk, fold.fold.d_b, &setup, r_tol));
    }
    out.write("fig3.csv", |w| write_critical_curve_csv(&pts, ctx.time_out(1.0), w))?;
    let worst = pts.iter().filter_map(|p| p.relative_error()).fold(0.0, f64::max);
    Ok(Outcome {
        settings: json!({
            "t_e_decades": [lo, hi],
            "points": n,
            "r_tol": r_tol,
            "d_b": fold.fold.d_b,
            "A_b": fold.fold.q_b,
            "return_tol": setup.return_tol,
        }),
        checks: Value::Null,
        completed: pts.len(),
        total: n,
        summary: format!("{} critical points, largest relative gap to the asymptote {worst:.3}", pts.len()),
    })
}

fn write_grid(out: &mut Output, name: &str, g: &EscapeGrid) -> Result<()> {
    out.write(name, |w| g.write_csv(w))
}

fn fig4(a: &ReproduceArgs, ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let n = if a.coarse { (20, 20) } else { (30, 41) };
    let rate = rate_model(a.rate)?;
    let base = GridSpec {
        r: linspace(0.1, 3.0, n.0),
        t_e: linspace(1.0, 5.0, n.1),
        rate: rate.clone(),
        ..Default::default()
    };
    let fpe = escape_grid_1d(&base, ctx.budget)?;
    write_grid(out, "fig4_fpe.csv", &fpe)?;
    let mode = escape_grid_1d(
        &GridSpec {
            method: EscapeMethod::Mode,
            ..base.clone()
        },
        None,
    )?;
    write_grid(out, "fig4_mode.csv", &mode)?;
    let bounds: Vec<(f64, Option<f64>, Option<f64>)> = base
        .r
        .par_iter()
        .map(|&r| (r, deterministic_boundary(base.threshold, r), mode_validity_boundary(base.threshold, r)))
        .collect();
    out.write("fig4_boundaries.csv", |w| {
        writeln!(w, "R,t_e_deterministic,t_e_mode_validity")?;
        for (r, d, m) in &bounds {
            let f = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(w, "{r},{},{}", f(d), f(m))?;
        }
        Ok(())
    })?;
    let mut checks = Value::Null;
    if a.coarse {
        // Monte-Carlo spot check at three nodes spread over the map.
        let picks = [(0.5, 1.0), (1.5, 2.0), (2.5, 3.0)];
        let paths = 20_000;
        let mut rows = Vec::new();
        for (r, te) in picks {
            let (p0, p2) = crate::escape::axes_to_canonical(base.threshold, r, te);
            let p_fpe = solve_fpe_1d(p0, p2, &base.fpe)?.p_esc;
            let mc = monte_carlo_escape(&McSpec::canonical(p0, p2, &base.fpe, base.mc_dt), paths, a.seed)?;
            rows.push(json!({
                "R": r, "t_e": te, "p_fpe": p_fpe, "p_mc": mc.p_esc, "std_error": mc.std_error,
                "z": (p_fpe - mc.p_esc) / mc.std_error.max(1e-12),
            }));
        }
        checks = json!({ "monte_carlo": rows, "paths": paths, "seed": a.seed });
    }
    let total = fpe.nodes.len();
    Ok(Outcome {
        settings: json!({
            "threshold": base.threshold,
            "R": [0.1, 3.0, n.0],
            "t_e": [1.0, 5.0, n.1],
            "fpe": base.fpe,
            "rate": rate,
        }),
        checks,
        completed: total - fpe.skipped,
        total,
        summary: format!("{} x {} nodes, FPE and mode approximation", n.0, n.1),
    })
}

fn monsoon_reduction(threshold: f64) -> Result<(MonsoonParams, MonsoonReduction)> {
    let params = MonsoonParams::default();
    let fold = analyze_fold(&params)?;
    Ok((params, MonsoonReduction::from_fold(&fold, threshold)))
}

fn mode_cell(red: &MonsoonReduction, r: f64, te: f64, rate: &RateModel) -> (Option<f64>, bool) {
    match red.mode_approx(r, te, rate) {
        Ok(m) => (Some(m.probability), m.valid),
        Err(_) => (None, false),
    }
}

fn fig5(a: &ReproduceArgs, ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let (_, red) = monsoon_reduction(0.5)?;
    let rate = rate_model(a.rate)?;
    let n = if a.coarse { (20, 20) } else { (40, 50) };
    let rs = linspace(0.002, 0.06, n.0);
    let tes = linspace(0.5, 4.0, n.1);
    let pairs: Vec<(f64, f64)> = rs.iter().flat_map(|&r| tes.iter().map(move |&t| (r, t))).collect();
    let cells: Vec<(Option<f64>, bool)> = pairs.par_iter().map(|&(r, t)| mode_cell(&red, r, t, &rate)).collect();
    out.write("fig5_mode.csv", |w| {
        writeln!(w, "R,t_e,prob,valid")?;
        for ((r, t), (p, v)) in pairs.iter().zip(&cells) {
            let p = p.map(|x| format!("{x:.10e}")).unwrap_or_else(|| "nan".into());
            writeln!(w, "{r},{},{p},{v}", ctx.time_out(*t))?;
        }
        Ok(())
    })?;
    // cross sections and the four albedo profiles shown beside the map
    let sections: Vec<(f64, f64, Option<f64>, bool)> = [0.02, 0.03]
        .iter()
        .flat_map(|&r| linspace(0.5, 4.0, 71).into_iter().map(move |t| (r, t)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(r, t)| {
            let (p, v) = mode_cell(&red, r, t, &rate);
            (r, t, p, v)
        })
        .collect();
    out.write("fig5_sections.csv", |w| {
        writeln!(w, "R,t_e,prob,valid")?;
        for (r, t, p, v) in &sections {
            let p = p.map(|x| format!("{x:.10e}")).unwrap_or_else(|| "nan".into());
            writeln!(w, "{r},{},{p},{v}", ctx.time_out(*t))?;
        }
        Ok(())
    })?;
    let profiles = [(0.02, 0.75), (0.03, 0.9), (0.02, 2.5), (0.03, 3.0)];
    let pulses: Vec<Sech2Forcing> = profiles.iter().map(|&(r, t)| red.forcing(r, t)).collect::<Result<_>>()?;
    out.write("fig5_profiles.csv", |w| {
        writeln!(w, "R,t_e,t,A_sys")?;
        for ((r, te), p) in profiles.iter().zip(&pulses) {
            for t in linspace(0.0, p.t_end, 201) {
                writeln!(w, "{r},{},{},{}", ctx.time_out(*te), ctx.time_out(t), p.value(t))?;
            }
        }
        Ok(())
    })?;
    let valid = cells.iter().filter(|c| c.1).count();
    Ok(Outcome {
        settings: json!({
            "threshold": red.threshold,
            "reduction": red,
            "R": [0.002, 0.06, n.0],
            "t_e_decades": [0.5, 4.0, n.1],
            "rate": rate,
        }),
        checks: Value::Null,
        completed: pairs.len(),
        total: pairs.len(),
        summary: format!("{} x {} nodes, {valid} inside the mode-validity region", n.0, n.1),
    })
}

fn fig6(a: &ReproduceArgs, out: &mut Output, over_budget: &(dyn Fn() -> bool + Sync)) -> Result<Outcome> {
    let n = if a.coarse { (20, 20) } else { (40, 40) };
    let q1s = linspace(0.1, 2.5, n.0);
    let q2s = linspace(-4.0, 1.5, n.1);
    let grid = FpeGrid1D::default();
    let pairs: Vec<(f64, f64)> = q1s.iter().flat_map(|&a| q2s.iter().map(move |&b| (a, b))).collect();
    let cells: Vec<Option<(f64, f64, Option<f64>)>> = pairs
        .par_iter()
        .map(|&(q1, q2)| {
            if over_budget() {
                return None;
            }
            let (p0, p2) = q_inverse(q1, q2).ok()?;
            Some((p0, p2, solve_fpe_1d(p0, p2, &grid).ok().map(|s| s.p_esc)))
        })
        .collect();
    out.write("fig6.csv", |w| {
        writeln!(w, "q1,q2,p0,p2,prob")?;
        for ((q1, q2), c) in pairs.iter().zip(&cells) {
            match c {
                Some((p0, p2, p)) => {
                    let p = p.map(|x| format!("{x:.10e}")).unwrap_or_else(|| "nan".into());
                    writeln!(w, "{q1},{q2},{p0},{p2},{p}")?
                }
                None => writeln!(w, "{q1},{q2},,,")?,
            }
        }
        Ok(())
    })?;
    let completed = cells.iter().filter(|c| c.is_some()).count();
    Ok(Outcome {
        settings: json!({ "q1": [0.1, 2.5, n.0], "q2": [-4.0, 1.5, n.1], "fpe": grid }),
        checks: Value::Null,
        completed,
        total: pairs.len(),
        summary: format!("{} x {} nodes in (q1, q2)", n.0, n.1),
    })
}

/// Default comparison nodes `(R, t_e)` over the albedo threshold 0.5.
pub const APPENDIX_B_NODES: [(f64, f64); 5] = [(0.02, 1.5), (0.02, 2.5), (0.03, 1.5), (0.03, 2.5), (0.04, 2.0)];

fn appendix_b(a: &ReproduceArgs, ctx: &Context, out: &mut Output, over_budget: &(dyn Fn() -> bool + Sync)) -> Result<Outcome> {
    let (params, red) = monsoon_reduction(0.5)?;
    let rate = rate_model(a.rate)?;
    let grid = if a.coarse {
        FpeGrid2D {
            n_q: 64,
            n_t: 64,
            dt: 5e-3,
            ..Default::default()
        }
    } else {
        FpeGrid2D::default()
    };
    let mut rows = Vec::new();
    for &(r, te) in &APPENDIX_B_NODES {
        if over_budget() {
            break;
        }
        let (p_mode, valid) = mode_cell(&red, r, te, &rate);
        let p2d = solve_fpe_2d_monsoon(&params, &red.forcing(r, te)?, &grid)?.p_esc;
        rows.push((r, te, p_mode, valid, p2d));
    }
    out.write("appendix_b.csv", |w| {
        writeln!(w, "R,t_e,p_mode,mode_valid,p_fpe2d,abs_diff")?;
        for (r, te, pm, v, p2) in &rows {
            let (pm, d) = match pm {
                Some(p) => (format!("{p:.6}"), format!("{:.6}", (p - p2).abs())),
                None => ("nan".into(), "nan".into()),
            };
            writeln!(w, "{r},{},{pm},{v},{p2:.6},{d}", ctx.time_out(*te))?;
        }
        Ok(())
    })?;
    let worst = rows
        .iter()
        .filter_map(|(_, _, pm, _, p2)| pm.map(|p| (p - p2).abs()))
        .fold(0.0, f64::max);
    Ok(Outcome {
        settings: json!({ "grid": grid, "reduction": red, "rate": rate, "nodes": APPENDIX_B_NODES }),
        checks: Value::Null,
        completed: rows.len(),
        total: APPENDIX_B_NODES.len(),
        summary: format!("{} nodes, largest |P_mode - P_2D| = {worst:.4}", rows.len()),
    })
}
