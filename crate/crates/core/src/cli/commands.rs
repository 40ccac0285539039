//! The single-analysis commands.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{display, Context, Report};
use crate::dynsys::{integrate_with, locate_fold, normal_form_coefficients, DynamicalSystem, EscapeBox, FoldPoint, IntegrateOptions};
use crate::error::{Error, Result};
use crate::escape::{
    axes_to_canonical, fit_mode_coefficients, mode_approx, sample_path, solve_fpe_1d, solve_fpe_2d_monsoon, FpeGrid1D,
    FpeGrid2D, Gamma1Grid, Gamma1Table, InitialCondition, McSpec, ModeApprox, ModeFit, MonsoonReduction, RateModel,
};
use crate::forcing::{ForcingProfile, Sech2Forcing};
use crate::io::{write_atomic, write_json_atomic};
use crate::monsoon::{analyze_fold, escape_box, stable_equilibrium, MonsoonFold, MonsoonParams, A_INF, GUESS, NOISE};
use crate::tipping::{
    classify_by_simulation, criterion_acceleration, criterion_inverse_square, critical_curve as simulate_curve,
    critical_exceedance_time, dimensionless_check, estimate_db_from_series, exceedance_time, write_critical_curve_csv,
    Sech2Family, SimulationSetup,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemChoice {
    /// The bundled Indian-monsoon model (albedo forcing, time in decades).
    Monsoon,
    /// The scalar normal form `y' = a0 q + kappa y^2` or, for escape
    /// problems, the canonical SDE.
    NormalForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateChoice {
    /// `exp(-c0 - c2 xbar^2)` refitted to freshly computed eigenvalues.
    Fit,
    /// The same form with the coefficients 1.01 and 1.41.
    Published,
    /// Interpolated eigenvalue table, no fit.
    Table,
}

pub fn rate_model(choice: RateChoice) -> Result<RateModel> {
    Ok(match choice {
        RateChoice::Fit => fit_mode_coefficients(&Gamma1Grid::default().tabulate()?)?.into(),
        RateChoice::Published => ModeFit::published().into(),
        RateChoice::Table => RateModel::Table(Gamma1Table::dense()?),
    })
}

fn check(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

fn require(problems: &mut Vec<String>, value: Option<f64>, flag: &str) -> f64 {
    match value {
        Some(v) if v.is_finite() => v,
        Some(v) => {
            problems.push(format!("{flag} must be finite (got {v})"));
            f64::NAN
        }
        None => {
            problems.push(format!("{flag} is required"));
            f64::NAN
        }
    }
}

fn positive(problems: &mut Vec<String>, v: f64, flag: &str) {
    if !v.is_nan() && !(v > 0.0) {
        problems.push(format!("{flag} must be positive (got {v})"));
    }
}

fn load_params(path: &Option<PathBuf>) -> Result<MonsoonParams> {
    match path {
        Some(p) => MonsoonParams::load(p),
        None => Ok(MonsoonParams::default()),
    }
}

fn monsoon_fold(path: &Option<PathBuf>) -> Result<(MonsoonParams, MonsoonFold)> {
    let params = load_params(path)?;
    let fold = analyze_fold(&params)?;
    Ok((params, fold))
}

/// `y' = a0 q + kappa y^2`, stable for `q < 0` on the branch `y < 0`.
pub fn normal_form_system(a0: f64, kappa: f64) -> DynamicalSystem {
    DynamicalSystem::scalar(move |y, q| a0 * q + kappa * y * y)
}

fn normal_form_fold(a0: f64, kappa: f64) -> Result<FoldPoint> {
    let sys = normal_form_system(a0, kappa);
    let loc = locate_fold(&sys, (-1.0, 1.0), &[-(a0 / kappa).sqrt()])?;
    normal_form_coefficients(&sys, &loc)
}

fn csv_series(path: &std::path::Path, header: &str, rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let rows: Vec<(f64, f64)> = rows.collect();
    write_atomic(path, |w| {
        writeln!(w, "{header}")?;
        for (a, b) in &rows {
            writeln!(w, "{a},{b}")?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- fold

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FoldArgs {
    /// System to analyze.
    #[arg(long, value_enum, default_value = "monsoon")]
    pub system: SystemChoice,
    /// Monsoon parameter overrides (TOML or JSON).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Normal form: parameter coefficient a0.
    #[arg(long, default_value_t = 1.0)]
    pub a0: f64,
    /// Normal form: curvature kappa.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Also write both equilibrium branches of the monsoon model to
    /// `branches.csv` (albedo 0.45 to 0.6).
    #[arg(long)]
    pub branches: bool,
}

pub fn fold(a: &FoldArgs, ctx: &Context) -> Result<Report> {
    let json_path = ctx.path("fold.json");
    let mut files = vec![json_path.clone()];
    match a.system {
        SystemChoice::Monsoon => {
            let (params, f) = monsoon_fold(&a.params)?;
            write_json_atomic(&json_path, &f)?;
            if a.branches {
                let rows = crate::monsoon::equilibrium_branches(&params, (0.45, 0.6))?;
                let p = ctx.path("branches.csv");
                write_atomic(&p, |w| crate::monsoon::write_branches_csv(&rows, w))?;
                files.push(p);
            }
            Ok(Report {
                summary: format!(
                    "fold monsoon: A_b = {:.5}, d_b = {:.2} per decade^2 (limit route {:.2}), p_f = {:.3}, x_f = {:.4}, D = {:.4}",
                    f.fold.q_b, f.fold.d_b, f.fold.d_b_limit, f.p_f, f.x_f, f.noise_d
                ),
                files,
            })
        }
        SystemChoice::NormalForm => {
            let mut p = Vec::new();
            positive(&mut p, a.a0, "--a0");
            positive(&mut p, a.kappa, "--kappa");
            check(p)?;
            let f = normal_form_fold(a.a0, a.kappa)?;
            write_json_atomic(&json_path, &f)?;
            Ok(Report {
                summary: format!(
                    "fold normal-form: q_b = {:.3e}, a0 = {:.6}, kappa = {:.6}, d_b = {:.6} (limit route {:.6})",
                    f.q_b, f.a0, f.kappa, f.d_b, f.d_b_limit
                ),
                files,
            })
        }
    }
}

// ----------------------------------------------------------- criterion

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CriterionArgs {
    /// Critical rate d_b (per squared time unit).
    #[arg(long)]
    pub db: Option<f64>,
    /// Exceedance amplitude R above the fold.
    #[arg(long = "R", alias = "r")]
    pub r: Option<f64>,
    /// Exceedance time t_e (decades, or years with --years).
    #[arg(long)]
    pub te: Option<f64>,
    /// Acceleration form: peak value of the forcing.
    #[arg(long)]
    pub q_peak: Option<f64>,
    /// Acceleration form: second time derivative at the peak (per squared
    /// time unit).
    #[arg(long)]
    pub q_ddot: Option<f64>,
    /// Acceleration form: fold value.
    #[arg(long)]
    pub q_b: Option<f64>,
}

pub fn criterion(a: &CriterionArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    let db = require(&mut p, a.db, "--db");
    positive(&mut p, db, "--db");
    let accel = a.q_peak.is_some() || a.q_ddot.is_some() || a.q_b.is_some();
    if accel {
        let q_peak = require(&mut p, a.q_peak, "--q-peak");
        let q_ddot = require(&mut p, a.q_ddot, "--q-ddot");
        let q_b = require(&mut p, a.q_b, "--q-b");
        check(p)?;
        // second derivative in user time units squared
        let scale = ctx.time_out(1.0).powi(2);
        let verdict = criterion_acceleration(q_peak, q_ddot * scale, q_b, db)?;
        let path = ctx.path("criterion.json");
        write_json_atomic(&path, &verdict)?;
        return Ok(Report {
            summary: format!(
                "criterion acceleration: {}, margin {:.6}",
                if verdict.tipped { "tips" } else { "safe" },
                verdict.margin
            ),
            files: vec![path],
        });
    }
    let r = require(&mut p, a.r, "--R");
    let te = require(&mut p, a.te, "--te");
    positive(&mut p, te, "--te");
    check(p)?;
    let te_dec = ctx.time_in(te);
    let verdict = criterion_inverse_square(db, r, te_dec)?;
    let critical = (r > 0.0).then(|| ctx.time_out(critical_exceedance_time(db, r)));
    let path = ctx.path("criterion.json");
    write_json_atomic(
        &path,
        &json!({
            "verdict": verdict,
            "d_b": db,
            "R": r,
            "t_e": te,
            "critical_t_e": critical,
            "time_unit": ctx.time_unit(),
        }),
    )?;
    let crit = critical
        .map(|t| format!("; critical t_e = {t:.3} {}", ctx.time_unit()))
        .unwrap_or_default();
    Ok(Report {
        summary: format!(
            "criterion inverse-square: {}, margin {:.4}{crit}",
            if verdict.tipped { "tips" } else { "safe" },
            verdict.margin
        ),
        files: vec![path],
    })
}

// ---------------------------------------------------------- exceedance

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileChoice {
    /// `q_inf + (q_b + R - q_inf) sech^2(S (t_end - 2t))`.
    Sech2,
    /// `q_b + eps R0 - eps^2 R2 t^2`.
    Parabolic,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExceedanceArgs {
    #[arg(long, value_enum, default_value = "sech2")]
    pub profile: ProfileChoice,
    /// Sech²: amplitude above q_b.
    #[arg(long = "R", alias = "r")]
    pub r: Option<f64>,
    /// Sech²: speed S (per decade, or per year with --years).
    #[arg(long = "S", alias = "s")]
    pub s: Option<f64>,
    /// Sech²: background value [default: 0.47].
    #[arg(long)]
    pub q_inf: Option<f64>,
    /// Reference (fold) value [default: the monsoon fold for sech², 0 for
    /// parabolic].
    #[arg(long)]
    pub q_b: Option<f64>,
    /// Threshold [default: q_b].
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
}

pub fn exceedance(a: &ExceedanceArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    let (profile, q_b) = match a.profile {
        ProfileChoice::Sech2 => {
            let r = require(&mut p, a.r, "--R");
            let s = require(&mut p, a.s, "--S");
            positive(&mut p, r, "--R");
            positive(&mut p, s, "--S");
            check(p)?;
            let q_b = match a.q_b {
                Some(q) => q,
                None => analyze_fold(&MonsoonParams::default())?.fold.q_b,
            };
            let q_inf = a.q_inf.unwrap_or(A_INF);
            // speed is given per user time unit
            let s_dec = s * ctx.time_out(1.0);
            let f = Sech2Forcing::with_background_tolerance(q_inf, r, s_dec, q_b, 1e-4);
            (ForcingProfile::Sech2(f), q_b)
        }
        ProfileChoice::Parabolic => {
            let r0 = require(&mut p, a.r0, "--r0");
            let r2 = require(&mut p, a.r2, "--r2");
            let eps = require(&mut p, a.eps, "--eps");
            positive(&mut p, r2, "--r2");
            positive(&mut p, eps, "--eps");
            check(p)?;
            let q_b = a.q_b.unwrap_or(0.0);
            (ForcingProfile::parabolic(r0, r2, eps, q_b), q_b)
        }
    };
    let threshold = a.threshold.unwrap_or(q_b);
    let ex = exceedance_time(&profile, threshold)?;
    let path = ctx.path("exceedance.json");
    // parabolic profiles live in their own time units
    let sech2 = a.profile == ProfileChoice::Sech2;
    let unit = if sech2 { ctx.time_unit() } else { "time units" };
    let t = |v: f64| if sech2 { ctx.time_out(v) } else { v };
    write_json_atomic(
        &path,
        &json!({
            "t_e": t(ex.t_e),
            "t_minus": ex.exceeded.then(|| t(ex.t_minus)),
            "t_plus": ex.exceeded.then(|| t(ex.t_plus)),
            "exceeded": ex.exceeded,
            "closed_form": ex.closed_form.map(t),
            "threshold": threshold,
            "time_unit": unit,
            "profile": profile,
        }),
    )?;
    let summary = if ex.exceeded {
        format!(
            "exceedance: t_e = {:.4} {unit} above {threshold} (from {:.4} to {:.4})",
            t(ex.t_e),
            t(ex.t_minus),
            t(ex.t_plus)
        )
    } else {
        format!("exceedance: no-exceedance, the forcing stays below {threshold}")
    };
    Ok(Report {
        summary,
        files: vec![path],
    })
}

// ------------------------------------------------------------ classify

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long, value_enum, default_value = "monsoon")]
    pub system: SystemChoice,
    /// Monsoon parameter overrides (TOML or JSON).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Monsoon: albedo exceedance R above the fold.
    #[arg(long = "R", alias = "r")]
    pub r: Option<f64>,
    /// Monsoon: speed S of the sech² pulse (per decade, or per year with --years).
    #[arg(long = "S", alias = "s")]
    pub s: Option<f64>,
    /// Monsoon: exceedance time over the fold, instead of --S.
    #[arg(long)]
    pub te: Option<f64>,
    /// Normal form: coefficients and parabolic forcing `eps R0 - eps^2 R2 t^2`.
    #[arg(long, default_value_t = 1.0)]
    pub a0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Largest output distance from the final equilibrium that counts as a return.
    #[arg(long, default_value_t = 1e-3)]
    pub return_tol: f64,
    /// Write the simulated trajectory to `trajectory.csv`.
    #[arg(long)]
    pub trajectory: bool,
}

pub fn classify(a: &ClassifyArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    positive(&mut p, a.return_tol, "--return-tol");
    let (sys, forcing, mut setup, label) = match a.system {
        SystemChoice::Monsoon => {
            let r = require(&mut p, a.r, "--R");
            positive(&mut p, r, "--R");
            match (a.s, a.te) {
                (Some(s), None) => positive(&mut p, s, "--S"),
                (None, Some(t)) => positive(&mut p, t, "--te"),
                _ => p.push("give exactly one of --S and --te".into()),
            }
            check(p)?;
            let (params, f) = monsoon_fold(&a.params)?;
            let a_b = f.fold.q_b;
            let pulse = match a.s {
                Some(s) => Sech2Forcing::with_background_tolerance(A_INF, r, s * ctx.time_out(1.0), a_b, 1e-4),
                None => Sech2Family::new(A_INF, a_b).member(r, ctx.time_in(a.te.unwrap_or(f64::NAN))),
            };
            let label = format!(
                "R = {r}, S = {:.4}, t_e = {:.3} {}",
                pulse.s / ctx.time_out(1.0),
                ctx.time_out(pulse.exceedance_time_exact(a_b)),
                ctx.time_unit()
            );
            let setup = SimulationSetup::new(escape_box(), GUESS.to_vec());
            (params.system(f.weights), ForcingProfile::Sech2(pulse), setup, label)
        }
        SystemChoice::NormalForm => {
            let r0 = require(&mut p, a.r0, "--r0");
            let r2 = require(&mut p, a.r2, "--r2");
            let eps = require(&mut p, a.eps, "--eps");
            positive(&mut p, r2, "--r2");
            positive(&mut p, eps, "--eps");
            positive(&mut p, a.a0, "--a0");
            positive(&mut p, a.kappa, "--kappa");
            check(p)?;
            let forcing = ForcingProfile::parabolic(r0, r2, eps, 0.0);
            let mut setup = SimulationSetup::new(EscapeBox::cube(1, 1e3), vec![-(a.a0 / a.kappa).sqrt()]);
            setup.t_span = forcing.parabolic_window(1.0);
            let label = format!("R0 = {r0}, R2 = {r2}, eps = {eps}");
            (normal_form_system(a.a0, a.kappa), forcing, setup, label)
        }
    };
    setup.return_tol = a.return_tol;
    let verdict = classify_by_simulation(&sys, &forcing, &setup)?;
    let path = ctx.path("classify.json");
    write_json_atomic(&path, &json!({ "verdict": verdict, "forcing": forcing }))?;
    let mut files = vec![path];
    if a.trajectory {
        let (t0, t1) = setup.t_span.or_else(|| forcing.window()).unwrap_or((0.0, 1.0));
        let y0 = crate::dynsys::find_equilibrium(&sys, forcing.value(t0), &setup.guess)?;
        let opts = IntegrateOptions::with_tol(setup.tol).escape(setup.escape.clone());
        let traj = integrate_with(&sys, &y0, (t0, t1), &forcing, &opts)?;
        let tp = ctx.path("trajectory.csv");
        write_atomic(&tp, |w| traj.write_csv(w))?;
        files.push(tp);
    }
    Ok(Report {
        summary: format!(
            "classify {label}: {}{}",
            if verdict.tipped { "tipped" } else { "no tipping" },
            verdict.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
        ),
        files,
    })
}

// ------------------------------------------------------ critical-curve

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CriticalCurveArgs {
    /// Monsoon parameter overrides (TOML or JSON).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Smallest exceedance time [default: 1 decade].
    #[arg(long)]
    pub te_min: Option<f64>,
    /// Largest exceedance time [default: 4 decades].
    #[arg(long)]
    pub te_max: Option<f64>,
    /// Number of grid points.
    #[arg(long, default_value_t = 15)]
    pub points: usize,
    /// Bisection tolerance in R.
    #[arg(long, default_value_t = 1e-5)]
    pub r_tol: f64,
}

pub fn critical_curve(a: &CriticalCurveArgs, ctx: &Context) -> Result<Report> {
    let te_min = a.te_min.map(|t| ctx.time_in(t)).unwrap_or(1.0);
    let te_max = a.te_max.map(|t| ctx.time_in(t)).unwrap_or(4.0);
    let mut p = Vec::new();
    positive(&mut p, te_min, "--te-min");
    if !(te_max >= te_min) {
        p.push(format!("--te-max must not be below --te-min (got {te_max} < {te_min} decades)"));
    }
    if a.points == 0 {
        p.push("--points must be positive".into());
    }
    positive(&mut p, a.r_tol, "--r-tol");
    check(p)?;
    let (params, f) = monsoon_fold(&a.params)?;
    let grid = crate::escape::grid::linspace(te_min, te_max, a.points);
    let setup = SimulationSetup::new(escape_box(), GUESS.to_vec());
    let family = Sech2Family::new(A_INF, f.fold.q_b);
    let pts = simulate_curve(&params.system(f.weights), &family, &grid, f.fold.d_b, &setup, a.r_tol);
    let path = ctx.path("critical_curve.csv");
    write_atomic(&path, |w| write_critical_curve_csv(&pts, ctx.time_out(1.0), w))?;
    let failed = pts.iter().filter(|p| p.r_crit.is_none()).count();
    let worst = pts.iter().filter_map(|p| p.relative_error()).fold(0.0, f64::max);
    let first = pts.iter().find_map(|p| p.r_crit.map(|r| (p.t_e, r)));
    let head = first
        .map(|(t, r)| format!("R_crit({:.3} {}) = {r:.5}, ", ctx.time_out(t), ctx.time_unit()))
        .unwrap_or_default();
    Ok(Report {
        summary: format!(
            "critical-curve: {} points ({failed} failed), {head}largest relative gap to 16/(d_b t_e^2) {worst:.3}, d_b = {:.2}",
            pts.len(),
            f.fold.d_b
        ),
        files: vec![path],
    })
}

// ----------------------------------------------------------- canonical

/// Canonical point from either `(p0, p2)` or `(R, t_e)` over a threshold.
fn canonical_point(
    p: &mut Vec<String>,
    p0: Option<f64>,
    p2: Option<f64>,
    r: Option<f64>,
    te: Option<f64>,
    threshold: f64,
) -> (f64, f64) {
    match (p0, p2, r, te) {
        (Some(p0), Some(p2), None, None) => {
            positive(p, p2, "--p2");
            (p0, p2)
        }
        (None, None, Some(r), Some(te)) => {
            positive(p, r, "--R");
            positive(p, te, "--te");
            axes_to_canonical(threshold, r, te)
        }
        _ => {
            p.push("give either --p0 and --p2, or --R and --te".into());
            (f64::NAN, f64::NAN)
        }
    }
}

// --------------------------------------------------------------- fpe1d

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Fpe1dArgs {
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    /// Exceedance amplitude over --threshold (instead of --p0/--p2).
    #[arg(long = "R", alias = "r")]
    pub r: Option<f64>,
    /// Dimensionless exceedance time over --threshold.
    #[arg(long)]
    pub te: Option<f64>,
    #[arg(long, default_value_t = -1.0)]
    pub threshold: f64,
    /// Absorbing boundaries at ±x_bd.
    #[arg(long, default_value_t = 8.0)]
    pub x_bd: f64,
    /// Grid nodes including the boundary nodes.
    #[arg(long, default_value_t = 801)]
    pub nx: usize,
    /// Time steps [default: dt close to dx].
    #[arg(long)]
    pub nt: Option<usize>,
    /// Mean of the initial Gaussian.
    #[arg(long, default_value_t = -4.0)]
    pub x0: f64,
    /// Backward-Euler start-up interval.
    #[arg(long, default_value_t = 0.5)]
    pub startup: f64,
    /// Repeat on the grid with dx and dt halved and report the change.
    #[arg(long)]
    pub refine: bool,
}

pub fn fpe1d(a: &Fpe1dArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    let (p0, p2) = canonical_point(&mut p, a.p0, a.p2, a.r, a.te, a.threshold);
    let grid = FpeGrid1D {
        x_bd: a.x_bd,
        nx: a.nx,
        nt: a.nt,
        x0: a.x0,
        startup_time: a.startup,
        ..Default::default()
    };
    p.extend(grid.validate());
    check(p)?;
    let sol = solve_fpe_1d(p0, p2, &grid)?;
    let refined = if a.refine {
        Some(solve_fpe_1d(p0, p2, &grid.refined(p0, p2))?.p_esc)
    } else {
        None
    };
    let path = ctx.path("fpe1d.json");
    write_json_atomic(
        &path,
        &json!({
            "p0": p0,
            "p2": p2,
            "p_esc": sol.p_esc,
            "p_esc_refined": refined,
            "t_span": [sol.t_span.0, sol.t_span.1],
            "steps": sol.steps,
            "min_density": sol.min_density,
            "grid": grid,
        }),
    )?;
    let mass_path = ctx.path("fpe1d_mass.csv");
    csv_series(&mass_path, "t,mass", sol.times.iter().copied().zip(sol.mass.iter().copied()))?;
    let refine = refined
        .map(|r| format!(", halved steps change it by {:.2e}", (r - sol.p_esc).abs()))
        .unwrap_or_default();
    Ok(Report {
        summary: format!("fpe1d: P_esc = {:.6e} at p0 = {p0}, p2 = {p2}{refine}", sol.p_esc),
        files: vec![path, mass_path],
    })
}

// --------------------------------------------------------------- fpe2d

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Fpe2dArgs {
    /// Monsoon parameter overrides (TOML or JSON).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Albedo exceedance over --threshold.
    #[arg(long = "R", alias = "r")]
    pub r: Option<f64>,
    /// Exceedance time over --threshold (decades, or years with --years).
    #[arg(long)]
    pub te: Option<f64>,
    /// Albedo threshold the exceedance is measured from.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Interior nodes per axis.
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    /// Time step in decades.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Repeat with spacing and time step halved and report the change.
    #[arg(long)]
    pub refine: bool,
}

pub fn fpe2d(a: &Fpe2dArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    let r = require(&mut p, a.r, "--R");
    let te = require(&mut p, a.te, "--te");
    positive(&mut p, r, "--R");
    positive(&mut p, te, "--te");
    let grid = FpeGrid2D {
        n_q: a.grid,
        n_t: a.grid,
        dt: a.dt,
        ..Default::default()
    };
    p.extend(grid.validate());
    check(p)?;
    let (params, f) = monsoon_fold(&a.params)?;
    let red = MonsoonReduction::from_fold(&f, a.threshold);
    let forcing = red.forcing(r, ctx.time_in(te))?;
    let sol = solve_fpe_2d_monsoon(&params, &forcing, &grid)?;
    let refined = if a.refine {
        Some(solve_fpe_2d_monsoon(&params, &forcing, &grid.refined())?.p_esc)
    } else {
        None
    };
    let path = ctx.path("fpe2d.json");
    write_json_atomic(
        &path,
        &json!({
            "R": r,
            "t_e": te,
            "time_unit": ctx.time_unit(),
            "threshold": a.threshold,
            "p_esc": sol.p_esc,
            "p_esc_refined": refined,
            "forcing": forcing,
            "steps": sol.steps,
            "relax_iterations": sol.relax_iterations,
            "grid": grid,
        }),
    )?;
    let mass_path = ctx.path("fpe2d_mass.csv");
    csv_series(&mass_path, "t,mass", sol.times.iter().copied().zip(sol.mass.iter().copied()))?;
    let refine = refined
        .map(|v| format!(", halved steps change it by {:.2e}", (v - sol.p_esc).abs()))
        .unwrap_or_default();
    Ok(Report {
        summary: format!(
            "fpe2d: P_esc = {:.5} at R = {r}, t_e = {te} {} over {}{refine}",
            sol.p_esc,
            ctx.time_unit(),
            a.threshold
        ),
        files: vec![path, mass_path],
    })
}

// ---------------------------------------------------------------- mode

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ModeArgs {
    /// `normal-form` is the canonical SDE; `monsoon` uses its scalar reduction.
    #[arg(long, value_enum, default_value = "normal-form")]
    pub system: SystemChoice,
    /// Monsoon parameter overrides (TOML or JSON).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long = "R", alias = "r")]
    pub r: Option<f64>,
    /// Exceedance time over the threshold (dimensionless, or decades/years
    /// for the monsoon).
    #[arg(long)]
    pub te: Option<f64>,
    /// Threshold [default: -1 canonical, 0.5 albedo].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Escape-rate model along the connecting orbit.
    #[arg(long, value_enum, default_value = "fit")]
    pub rate: RateChoice,
    /// Report the value even where the orbit reaches xbar >= 0.
    #[arg(long)]
    pub allow_invalid: bool,
    /// Write the connecting orbit to `xbar.csv`.
    #[arg(long)]
    pub xbar: bool,
}

pub fn mode(a: &ModeArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    let run: Box<dyn Fn(&RateModel) -> Result<ModeApprox>>;
    let label;
    match a.system {
        SystemChoice::NormalForm => {
            let (p0, p2) = canonical_point(&mut p, a.p0, a.p2, a.r, a.te, a.threshold.unwrap_or(-1.0));
            check(p)?;
            label = format!("p0 = {p0}, p2 = {p2}");
            run = Box::new(move |rate| mode_approx(p0, p2, rate));
        }
        SystemChoice::Monsoon => {
            let r = require(&mut p, a.r, "--R");
            let te = require(&mut p, a.te, "--te");
            positive(&mut p, r, "--R");
            positive(&mut p, te, "--te");
            check(p)?;
            let (_, f) = monsoon_fold(&a.params)?;
            let red = MonsoonReduction::from_fold(&f, a.threshold.unwrap_or(0.5));
            let te_dec = ctx.time_in(te);
            label = format!("R = {r}, t_e = {te} {}", ctx.time_unit());
            run = Box::new(move |rate| red.mode_approx(r, te_dec, rate));
        }
    }
    let rate = rate_model(a.rate)?;
    let m = run(&rate)?;
    let m = if a.allow_invalid { m } else { m.checked()? };
    let path = ctx.path("mode.json");
    write_json_atomic(
        &path,
        &json!({
            "probability": m.probability,
            "exponent": m.exponent,
            "valid": m.valid,
            "max_xbar": m.xbar.max_xbar,
            "t_max": m.xbar.t_max,
            "rate": rate,
        }),
    )?;
    let mut files = vec![path];
    if a.xbar {
        let xp = ctx.path("xbar.csv");
        csv_series(&xp, "t,xbar", m.xbar.samples().into_iter().map(|s| (s.t, s.xbar)))?;
        files.push(xp);
    }
    Ok(Report {
        summary: format!(
            "mode: P_esc = {:.6e} at {label} ({}, max xbar {:.4})",
            m.probability,
            if m.valid { "valid" } else { "outside validity region" },
            m.xbar.max_xbar
        ),
        files,
    })
}

// ------------------------------------------------------------------ mc

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct McArgs {
    /// `normal-form` is the canonical SDE; `monsoon` the noisy 2D model.
    #[arg(long, value_enum, default_value = "normal-form")]
    pub system: SystemChoice,
    /// Monsoon parameter overrides (TOML or JSON).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long = "R", alias = "r")]
    pub r: Option<f64>,
    #[arg(long)]
    pub te: Option<f64>,
    /// Threshold [default: -1 canonical, 0.5 albedo].
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Euler-Maruyama step (dimensionless, or decades for the monsoon).
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
}

pub fn mc(a: &McArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    positive(&mut p, a.dt, "--dt");
    if a.paths == 0 {
        p.push("--paths must be positive".into());
    }
    let (spec, label) = match a.system {
        SystemChoice::NormalForm => {
            let (p0, p2) = canonical_point(&mut p, a.p0, a.p2, a.r, a.te, a.threshold.unwrap_or(-1.0));
            check(p)?;
            (McSpec::canonical(p0, p2, &FpeGrid1D::default(), a.dt), format!("p0 = {p0}, p2 = {p2}"))
        }
        SystemChoice::Monsoon => {
            let r = require(&mut p, a.r, "--R");
            let te = require(&mut p, a.te, "--te");
            positive(&mut p, r, "--R");
            positive(&mut p, te, "--te");
            check(p)?;
            let (params, f) = monsoon_fold(&a.params)?;
            let red = MonsoonReduction::from_fold(&f, a.threshold.unwrap_or(0.5));
            let pulse = red.forcing(r, ctx.time_in(te))?;
            (McSpec::monsoon(&params, f.weights, &pulse, a.dt)?, format!("R = {r}, t_e = {te} {}", ctx.time_unit()))
        }
    };
    let res = crate::escape::monte_carlo_escape(&spec, a.paths, a.seed)?;
    let path = ctx.path("mc.json");
    write_json_atomic(&path, &json!({ "result": res, "seed": a.seed, "dt": a.dt }))?;
    Ok(Report {
        summary: format!(
            "mc: P_esc = {:.5} ± {:.5} at {label} ({} paths, seed {})",
            res.p_esc, res.std_error, res.n_paths, a.seed
        ),
        files: vec![path],
    })
}

// --------------------------------------------------------- estimate-db

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EstimateDbArgs {
    /// CSV file with the output series (header row, one value per line or
    /// several columns).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column to read [default: the last one].
    #[arg(long)]
    pub column: Option<String>,
    /// Simulate the noisy monsoon model at fixed albedo --qc instead of
    /// reading a file.
    #[arg(long)]
    pub simulate: bool,
    /// Sampling interval (decades, or years with --years).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Parameter value at which the series was recorded.
    #[arg(long)]
    pub qc: Option<f64>,
    /// Fold value [default for --simulate: the computed monsoon fold].
    #[arg(long)]
    pub qb: Option<f64>,
    /// Simulation: number of samples.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Simulation: multiplier of the default noise half-variances.
    #[arg(long, default_value_t = 0.1)]
    pub noise_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional dimensionless check: forcing peak.
    #[arg(long)]
    pub q_peak: Option<f64>,
    /// Optional dimensionless check: exceedance time (same unit as --dt).
    #[arg(long)]
    pub te: Option<f64>,
}

/// Read one column of a CSV file with a header row.
pub fn read_series(path: &std::path::Path, column: Option<&str>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", display(path))))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{} is empty", display(path))))?
        .split(',')
        .map(str::trim)
        .collect();
    let idx = match column {
        Some(c) => header
            .iter()
            .position(|h| *h == c)
            .ok_or_else(|| Error::InvalidInput(format!("column {c} not in {}", display(path))))?,
        None => header.len() - 1,
    };
    lines
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .nth(idx)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidInput(format!("{} line {}: no number in column {idx}", display(path), i + 2)))
        })
        .collect()
}

pub fn estimate_db(a: &EstimateDbArgs, ctx: &Context) -> Result<Report> {
    let mut p = Vec::new();
    match (a.simulate, &a.input) {
        (true, Some(_)) | (false, None) => p.push("give exactly one of --input and --simulate".into()),
        _ => {}
    }
    if a.simulate {
        if a.samples < 1000 {
            p.push(format!("--samples must be at least 1000 (got {})", a.samples));
        }
        positive(&mut p, a.noise_scale, "--noise-scale");
    }
    let dt = match (a.dt, a.simulate) {
        (Some(d), _) => d,
        (None, true) => ctx.time_out(0.01),
        (None, false) => require(&mut p, None, "--dt"),
    };
    positive(&mut p, dt, "--dt");
    let qc = match (a.qc, a.simulate) {
        (Some(q), _) => q,
        (None, true) => A_INF,
        (None, false) => require(&mut p, None, "--qc"),
    };
    if !a.simulate && a.qb.is_none() {
        p.push("--qb is required".into());
    }
    check(p)?;
    let dt_dec = ctx.time_in(dt);
    let (series, qb) = if a.simulate {
        let (params, f) = monsoon_fold(&None)?;
        let qb = a.qb.unwrap_or(f.fold.q_b);
        let y0 = stable_equilibrium(&params, qc)?;
        // keep the Euler-Maruyama step well inside the stability limit of
        // the fast direction
        let substeps = ((dt_dec / 5e-4).ceil() as usize).max(1);
        let spec = McSpec {
            system: params.system(f.weights),
            forcing: ForcingProfile::constant(qc),
            noise: NOISE.iter().map(|d| d * a.noise_scale).collect(),
            domain: escape_box(),
            initial: InitialCondition::Point { state: y0 },
            t_span: (0.0, dt_dec * a.samples as f64),
            dt: dt_dec / substeps as f64,
        };
        let states = sample_path(&spec, a.seed, substeps)?;
        if states.len() < a.samples {
            return Err(Error::DiscretizationFailure(format!(
                "simulated path left the model domain after {} samples; lower --noise-scale",
                states.len()
            )));
        }
        let w = f.weights;
        (states.iter().map(|y| w[0] * y[0] + w[1] * y[1]).collect::<Vec<_>>(), qb)
    } else {
        let path = a.input.as_ref().expect("checked above");
        (read_series(path, a.column.as_deref())?, a.qb.unwrap_or(f64::NAN))
    };
    let est = estimate_db_from_series(&series, dt_dec, qc, qb)?;
    let check_verdict = match (a.q_peak, a.te) {
        (Some(q_peak), Some(te)) => Some(dimensionless_check(est.a, qc, qb, q_peak, te / dt)?),
        _ => None,
    };
    let path = ctx.path("estimate_db.json");
    write_json_atomic(
        &path,
        &json!({
            "estimate": est,
            "samples": series.len(),
            "dt": dt,
            "time_unit": ctx.time_unit(),
            "q_c": qc,
            "q_b": qb,
            "check": check_verdict,
        }),
    )?;
    let verdict = check_verdict
        .map(|v| format!(", dimensionless check: {}", if v.tipped { "tips" } else { "safe" }))
        .unwrap_or_default();
    Ok(Report {
        summary: format!(
            "estimate-db: a = {:.5}, lambda = {:.4} per decade, d = {:.2} per decade^2 from {} samples{verdict}",
            est.a,
            est.lambda,
            est.d,
            series.len()
        ),
        files: vec![path],
    })
}
