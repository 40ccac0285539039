//! Leading eigenvalue of the frozen Fokker-Planck operator and the mode
//! approximation of the escape probability.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::xbar::{parabolic_window, xbar_trajectory, XbarTrajectory};
use crate::dynsys::{integrate_with, DynamicalSystem, EscapeBox, IntegrateOptions};
use crate::error::{Error, Result};
use crate::forcing::ForcingProfile;
use crate::numerics::{fokker_planck_operator, Tridiagonal};

/// Discretization of the frozen operator and the range of well positions
/// used for tabulation and fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gamma1Grid {
    /// Half-width of the domain in the well-centred coordinate.
    pub half_width: f64,
    pub dz: f64,
    pub xbar_min: f64,
    pub xbar_max: f64,
    pub points: usize,
}

impl Default for Gamma1Grid {
    fn default() -> Self {
        Gamma1Grid {
            half_width: 8.0,
            dz: 0.005,
            xbar_min: -2.5,
            xbar_max: -0.1,
            points: 49,
        }
    }
}

impl Gamma1Grid {
    pub fn xbars(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|i| self.xbar_min + (self.xbar_max - self.xbar_min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// `(xbar, gamma1)` over the grid, in parallel.
    pub fn tabulate(&self) -> Result<Vec<(f64, f64)>> {
        self.xbars()
            .into_par_iter()
            .map(|x| gamma1(x, self).map(|g| (x, g)))
            .collect()
    }
}

/// Smallest decay rate of `L u = u_zz - ((z^2 + 2 xbar z) u)_z` on
/// `[-L, L]` with absorbing ends, i.e. the escape rate from the well of
/// `x' = -xbar^2 + x^2` at `x = xbar`.
///
/// `-L` discretized with exponentially fitted fluxes is an M-matrix whose
/// interior columns sum to zero, so the inverse can be applied with
/// additions only (the elimination tracks column losses instead of
/// subtracting nearly equal pivots). That keeps the tiny rates of deep
/// wells accurate to full relative precision.
pub fn gamma1(xbar: f64, grid: &Gamma1Grid) -> Result<f64> {
    if !(xbar < 0.0) {
        return Err(Error::NoMetastableWell { xbar });
    }
    let nodes = (2.0 * grid.half_width / grid.dz).round() as usize + 1;
    if nodes < 5 {
        return Err(Error::InvalidInput("gamma1 grid is too coarse".into()));
    }
    let n = nodes - 2;
    let h = 2.0 * grid.half_width / (nodes - 1) as f64;
    let face_drift: Vec<f64> = (0..=n)
        .map(|k| {
            let z = -grid.half_width + (k as f64 + 0.5) * h;
            z * z + 2.0 * xbar * z
        })
        .collect();
    let mut op = Tridiagonal::zeros(n);
    fokker_planck_operator(&face_drift, 1.0, h, &mut op);
    let solver = MSolver::new(&op);

    let mut x: Vec<f64> = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut lambda = f64::NAN;
    for _ in 0..2000 {
        solver.solve(&x, &mut y);
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let next = sx / sy;
        let converged = (next - lambda).abs() <= 1e-13 * next;
        lambda = next;
        let inv = 1.0 / sy;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi * inv;
        }
        if converged {
            return Ok(lambda);
        }
    }
    Err(Error::DiscretizationFailure(format!(
        "inverse iteration for gamma1 did not converge at xbar = {xbar}"
    )))
}

/// Factorization of `A = -op` using only sums of nonnegative terms.
struct MSolver {
    lower: Vec<f64>,
    upper: Vec<f64>,
    pivot: Vec<f64>,
}

impl MSolver {
    fn new(op: &Tridiagonal) -> Self {
        let n = op.len();
        // |A[k+1, k]| and |A[k, k+1]|
        let sub: Vec<f64> = (0..n).map(|k| if k + 1 < n { op.lower[k + 1] } else { 0.0 }).collect();
        let sup: Vec<f64> = (0..n).map(|k| if k + 1 < n { op.upper[k] } else { 0.0 }).collect();
        // column losses through the absorbing ends
        let mut loss = vec![0.0; n];
        loss[0] = -op.diag[0] - sub[0];
        if n > 1 {
            loss[n - 1] = -op.diag[n - 1] - sup[n - 2];
        } else {
            loss[0] = -op.diag[0];
        }
        let mut pivot = vec![0.0; n];
        let mut carried = loss[0];
        for k in 0..n {
            pivot[k] = carried + sub[k];
            if k + 1 < n {
                carried = loss[k + 1] + sup[k] * carried / pivot[k];
            }
        }
        MSolver {
            lower: sub,
            upper: sup,
            pivot,
        }
    }

    fn solve(&self, b: &[f64], y: &mut [f64]) {
        let n = b.len();
        y[0] = b[0];
        for k in 1..n {
            y[k] = b[k] + self.lower[k - 1] / self.pivot[k - 1] * y[k - 1];
        }
        y[n - 1] /= self.pivot[n - 1];
        for k in (0..n - 1).rev() {
            y[k] = (y[k] + self.upper[k] * y[k + 1]) / self.pivot[k];
        }
    }
}

/// `gamma1(xbar) ~ exp(-c0 - c2 xbar^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFit {
    pub c0: f64,
    pub c2: f64,
    /// Largest `|-log gamma1 - c0 - c2 xbar^2|` over the fitted points.
    pub max_log_residual: f64,
    /// Largest `|fit - gamma1|` relative to the largest tabulated rate.
    pub max_rate_residual: f64,
}

impl ModeFit {
    /// Coefficients quoted in the literature for this fit.
    pub const PUBLISHED: (f64, f64) = (1.01, 1.41);

    pub fn published() -> Self {
        ModeFit {
            c0: Self::PUBLISHED.0,
            c2: Self::PUBLISHED.1,
            max_log_residual: f64::NAN,
            max_rate_residual: f64::NAN,
        }
    }

    pub fn rate(&self, xbar: f64) -> f64 {
        (-self.c0 - self.c2 * xbar * xbar).exp()
    }

    /// Largest `|-log gamma1 - fit|` over the points with `lo <= xbar <= hi`.
    pub fn log_residual_on(&self, table: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
        table
            .iter()
            .filter(|(x, _)| *x >= lo && *x <= hi)
            .map(|&(x, g)| (-g.ln() - self.c0 - self.c2 * x * x).abs())
            .fold(0.0, f64::max)
    }
}

/// Least-squares fit of `-log gamma1 = c0 + c2 xbar^2`, each point weighted
/// by its rate. The weighting makes the fit accurate where escape actually
/// happens; deep wells contribute negligibly to any escape integral.
pub fn fit_mode_coefficients(table: &[(f64, f64)]) -> Result<ModeFit> {
    if table.len() < 3 {
        return Err(Error::InvalidInput("need at least three (xbar, gamma1) points".into()));
    }
    if let Some(&(x, g)) = table.iter().find(|(_, g)| !(*g > 0.0)) {
        return Err(Error::InvalidInput(format!("gamma1({x}) = {g} is not positive")));
    }
    let (mut s00, mut s01, mut s11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, g) in table {
        let w = g * g;
        let u = x * x;
        let y = -g.ln();
        s00 += w;
        s01 += w * u;
        s11 += w * u * u;
        b0 += w * y;
        b1 += w * u * y;
    }
    let det = s00 * s11 - s01 * s01;
    if !(det > 1e-12 * s00 * s11) {
        return Err(Error::InvalidInput("fit points do not determine c2".into()));
    }
    let c0 = (b0 * s11 - b1 * s01) / det;
    let c2 = (s00 * b1 - s01 * b0) / det;
    let mut fit = ModeFit {
        c0,
        c2,
        max_log_residual: 0.0,
        max_rate_residual: 0.0,
    };
    let gmax = table.iter().map(|p| p.1).fold(0.0, f64::max);
    for &(x, g) in table {
        fit.max_log_residual = fit.max_log_residual.max((-g.ln() - c0 - c2 * x * x).abs());
        fit.max_rate_residual = fit.max_rate_residual.max((fit.rate(x) - g).abs() / gmax);
    }
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct ModeApprox {
    pub probability: f64,
    /// `∫ gamma1(xbar(t)) dt`.
    pub exponent: f64,
    pub xbar: XbarTrajectory,
    pub valid: bool,
}

/// `P = 1 - exp(-∫ rate(xbar(t)) dt)` along the connecting orbit of
/// `x' = p(t) + x^2` over `t_span`. The result is returned even when
/// `xbar` reaches zero; `valid` records whether the approximation applies.
pub fn mode_approx_with<F>(forcing: &ForcingProfile, t_span: (f64, f64), rate: F) -> Result<ModeApprox>
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    let xbar = xbar_trajectory(forcing, t_span, 1e-10)?;
    let x0 = xbar.trajectory.states[0][0];
    let sys = DynamicalSystem::new(
        2,
        move |y: &[f64], p: f64, out: &mut [f64]| {
            out[0] = p + y[0] * y[0];
            out[1] = rate(y[0]);
        },
        vec![1.0, 0.0],
    )?;
    let opts = IntegrateOptions::with_tol(1e-10)
        .escape(EscapeBox::new(vec![-1e6, -1.0], vec![super::xbar::BLOWUP, 1e12])?);
    let traj = integrate_with(&sys, &[x0, 0.0], t_span, forcing, &opts)?;
    if traj.escaped {
        return Err(Error::NoConnectingOrbit { t: traj.final_time() });
    }
    let exponent = traj.final_state()[1];
    Ok(ModeApprox {
        probability: -(-exponent).exp_m1(),
        exponent,
        valid: xbar.valid,
        xbar,
    })
}

/// Escape rate as a function of the well position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateModel {
    /// `exp(-c0 - c2 xbar^2)`.
    Fit(ModeFit),
    /// Interpolated `gamma1` values.
    Table(Gamma1Table),
}

impl RateModel {
    pub fn rate(&self, xbar: f64) -> f64 {
        match self {
            RateModel::Fit(f) => f.rate(xbar),
            RateModel::Table(t) => t.rate(xbar),
        }
    }
}

impl From<ModeFit> for RateModel {
    fn from(f: ModeFit) -> Self {
        RateModel::Fit(f)
    }
}

/// `log gamma1` tabulated on an increasing `xbar` grid and interpolated
/// linearly. Below the table the log-rate is continued with the slope of
/// the barrier height `4|xbar|^3/3`; above it the last value is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gamma1Table {
    pub xbar: Vec<f64>,
    pub log_gamma: Vec<f64>,
}

impl Gamma1Table {
    pub fn compute(grid: &Gamma1Grid) -> Result<Self> {
        let table = grid.tabulate()?;
        Ok(Gamma1Table {
            xbar: table.iter().map(|p| p.0).collect(),
            log_gamma: table.iter().map(|p| p.1.ln()).collect(),
        })
    }

    /// Dense table over `[-5, -0.005]`, wide enough for escape integrals.
    pub fn dense() -> Result<Self> {
        Self::compute(&Gamma1Grid {
            xbar_min: -5.0,
            xbar_max: -0.005,
            points: 400,
            ..Default::default()
        })
    }

    pub fn rate(&self, x: f64) -> f64 {
        let (xs, ls) = (&self.xbar, &self.log_gamma);
        let last = xs.len() - 1;
        if x <= xs[0] {
            let barrier = |v: f64| 4.0 * v.abs().powi(3) / 3.0;
            return (ls[0] - (barrier(x) - barrier(xs[0]))).exp();
        }
        if x >= xs[last] {
            return ls[last].exp();
        }
        let i = xs.partition_point(|&v| v <= x);
        let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        ((1.0 - w) * ls[i - 1] + w * ls[i]).exp()
    }
}

impl ModeApprox {
    /// Refuse results whose connecting orbit reaches `xbar >= 0`.
    pub fn checked(self) -> Result<Self> {
        if self.valid {
            Ok(self)
        } else {
            Err(Error::ModeApproxInvalid {
                max_xbar: self.xbar.max_xbar,
            })
        }
    }
}

/// Mode approximation for canonical `p0 - p2 t^2`, returned with its
/// validity flag.
pub fn mode_approx(p0: f64, p2: f64, rate: &RateModel) -> Result<ModeApprox> {
    if !(p2 > 0.0) {
        return Err(Error::InvalidInput(format!("p2 must be positive (got {p2})")));
    }
    let t = parabolic_window(p0, p2);
    let rate = rate.clone();
    mode_approx_with(&super::canonical_forcing(p0, p2), (-t, t), move |x| rate.rate(x))
}

/// Escape probability from the mode approximation; fails with
/// [`Error::ModeApproxInvalid`] outside its validity region.
pub fn mode_approx_probability(p0: f64, p2: f64, rate: &RateModel) -> Result<f64> {
    Ok(mode_approx(p0, p2, rate)?.checked()?.probability)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma1_decreases_into_the_well() {
        let g = Gamma1Grid::default();
        let a = gamma1(-0.5, &g).unwrap();
        let b = gamma1(-1.0, &g).unwrap();
        let c = gamma1(-2.0, &g).unwrap();
        assert!(a > b && b > c && c > 0.0);
    }

    #[test]
    fn rejects_missing_well() {
        assert!(matches!(
            gamma1(0.1, &Gamma1Grid::default()),
            Err(Error::NoMetastableWell { .. })
        ));
    }

    #[test]
    fn deep_well_matches_kramers_scaling() {
        // log-rate slope approaches the barrier height 4|xbar|^3/3
        let g = Gamma1Grid::default();
        let r1 = gamma1(-2.4, &g).unwrap();
        let r2 = gamma1(-2.5, &g).unwrap();
        let slope = (r1.ln() - r2.ln()) / 0.1;
        let barrier_slope = 4.0 * 2.45f64.powi(2);
        assert!((slope / barrier_slope - 1.0).abs() < 0.1, "{slope}");
    }

    #[test]
    fn fit_recovers_exact_law() {
        let table: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let x = -2.5 + 0.12 * i as f64;
                (x, (-1.2 - 1.5 * x * x).exp())
            })
            .collect();
        let fit = fit_mode_coefficients(&table).unwrap();
        assert!((fit.c0 - 1.2).abs() < 1e-10 && (fit.c2 - 1.5).abs() < 1e-10);
        assert!(fit.max_log_residual < 1e-9);
    }

    #[test]
    fn probability_grows_with_peak() {
        let fit = ModeFit::published().into();
        let a = mode_approx_probability(-2.0, 1.0, &fit).unwrap();
        let b = mode_approx_probability(-0.5, 1.0, &fit).unwrap();
        assert!(b > a && a > 0.0);
    }

    #[test]
    fn refuses_outside_validity_region() {
        let fit = ModeFit::published().into();
        let m = mode_approx(0.9, 1.0, &fit).unwrap();
        assert!(!m.valid);
        assert!(matches!(
            mode_approx_probability(0.9, 1.0, &fit),
            Err(Error::ModeApproxInvalid { .. })
        ));
    }

    #[test]
    fn degenerate_design_rejected() {
        let t = [(-1.0, 0.1), (-1.0, 0.1), (1.0, 0.1)];
        assert!(fit_mode_coefficients(&t).is_err());
        assert!(fit_mode_coefficients(&t[..2]).is_err());
    }

    #[test]
    fn table_interpolates_and_extrapolates() {
        let g = Gamma1Grid {
            xbar_min: -2.0,
            xbar_max: -0.5,
            points: 16,
            ..Default::default()
        };
        let t = Gamma1Table::compute(&g).unwrap();
        let direct = gamma1(-1.05, &g).unwrap();
        assert!((t.rate(-1.05) / direct - 1.0).abs() < 0.01);
        assert!(t.rate(-3.0) < t.rate(-2.0));
        assert_eq!(t.rate(0.3), t.rate(-0.5));
    }
}
