//! Deterministic overshoot analysis: the inverse-square law, the
//! acceleration form of the criterion, exceedance times, tipping by direct
//! simulation, critical curves and the autocorrelation estimate of `d_b`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{find_equilibrium, integrate_with, leading_eigenvalue, DynamicalSystem, EscapeBox, IntegrateOptions};
use crate::error::{Error, Result};
use crate::forcing::{ForcingProfile, Sech2Forcing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictMethod {
    InverseSquare,
    Acceleration,
    Simulation,
}

/// Outcome of a tipping test. For the criteria `margin` is
/// `16 - d_b R t_e^2` (positive means safe); for simulations it is the time
/// the state left the escape box, or the end of the run if it never did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippingVerdict {
    pub tipped: bool,
    pub margin: f64,
    pub method: VerdictMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TippingVerdict {
    fn criterion(margin: f64, method: VerdictMethod) -> Self {
        TippingVerdict {
            tipped: !(margin > 0.0),
            margin,
            method,
            return_distance: None,
            note: None,
        }
    }
}

/// Safe iff `d_b R t_e^2 < 16`; non-positive `r` is always safe.
pub fn criterion_inverse_square(d_b: f64, r: f64, t_e: f64) -> Result<TippingVerdict> {
    if !(d_b > 0.0) || !(t_e > 0.0) {
        return Err(Error::InvalidInput(format!("need d_b > 0 and t_e > 0 (got {d_b}, {t_e})")));
    }
    let margin = 16.0 - d_b * r * t_e * t_e;
    Ok(TippingVerdict::criterion(margin, VerdictMethod::InverseSquare))
}

/// Longest safe exceedance time `sqrt(16 / (d_b R))` for amplitude `r > 0`.
pub fn critical_exceedance_time(d_b: f64, r: f64) -> f64 {
    (16.0 / (d_b * r)).sqrt()
}

/// Largest safe amplitude `16 / (d_b t_e^2)` for exceedance time `t_e`.
pub fn critical_amplitude(d_b: f64, t_e: f64) -> f64 {
    16.0 / (d_b * t_e * t_e)
}

/// Safe iff `q_peak < q_b + sqrt(-2 q'' / d_b)` where `q''` is the curvature
/// of the forcing at its peak. The margin uses the parabolic exceedance time
/// `t_e^2 = 8 R / (-q'')`.
pub fn criterion_acceleration(q_peak: f64, q_ddot: f64, q_b: f64, d_b: f64) -> Result<TippingVerdict> {
    if !(q_ddot < 0.0) {
        return Err(Error::NotAMaximum { q_ddot });
    }
    if !(d_b > 0.0) {
        return Err(Error::InvalidInput(format!("need d_b > 0 (got {d_b})")));
    }
    let r = q_peak - q_b;
    let margin = 16.0 - 8.0 * d_b * r * r.abs() / (-q_ddot);
    Ok(TippingVerdict::criterion(margin, VerdictMethod::Acceleration))
}

/// Threshold on `R0` for the parabolic forcing `q_b + eps R0 - eps^2 R2 t^2`:
/// tipping is avoided iff `R0 < sqrt(R2 / kappa) / a0`.
pub fn parabolic_threshold(a0: f64, kappa: f64, r2: f64) -> f64 {
    (r2 / kappa).sqrt() / a0
}

/// Interval `[t_minus, t_plus]` over which the forcing exceeds a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub t_e: f64,
    pub t_minus: f64,
    pub t_plus: f64,
    /// False when the forcing never reaches the threshold (`t_e = 0`).
    pub exceeded: bool,
    /// Closed-form value where the profile has one.
    pub closed_form: Option<f64>,
}

impl Exceedance {
    fn none() -> Self {
        Exceedance {
            t_e: 0.0,
            t_minus: f64::NAN,
            t_plus: f64::NAN,
            exceeded: false,
            closed_form: None,
        }
    }
}

/// Time spent above `threshold`, by bracketing the two crossings.
pub fn exceedance_time(forcing: &ForcingProfile, threshold: f64) -> Result<Exceedance> {
    let (t_peak, q_peak) = forcing
        .peak()
        .ok_or_else(|| Error::InvalidInput("forcing has no peak".into()))?;
    if let ForcingProfile::Sampled { values, .. } = forcing {
        let crossings = values
            .windows(2)
            .filter(|w| (w[0] > threshold) != (w[1] > threshold))
            .count();
        if crossings > 2 {
            return Err(Error::NotSinglePeaked { crossings });
        }
        if values[0] > threshold || values[values.len() - 1] > threshold {
            return Err(Error::InvalidInput("sampled forcing starts or ends above the threshold".into()));
        }
    }
    if q_peak <= threshold {
        return Ok(Exceedance::none());
    }
    let (lo, hi) = search_window(forcing, t_peak, threshold)?;
    if !matches!(forcing, ForcingProfile::Sampled { .. }) {
        // scan for extra crossings on a fine grid
        let n = 4000;
        let mut crossings = 0;
        let mut prev = forcing.value(lo) > threshold;
        for k in 1..=n {
            let t = lo + (hi - lo) * k as f64 / n as f64;
            let above = forcing.value(t) > threshold;
            crossings += usize::from(above != prev);
            prev = above;
        }
        if crossings > 2 {
            return Err(Error::NotSinglePeaked { crossings });
        }
    }
    let g = |t: f64| forcing.value(t) - threshold;
    let t_minus = bisect_crossing(&g, lo, t_peak);
    let t_plus = bisect_crossing(&g, hi, t_peak);
    let closed_form = match forcing {
        ForcingProfile::Parabolic { eps, r2, .. } => Some(2.0 * ((q_peak - threshold) / (eps * eps * r2)).sqrt()),
        ForcingProfile::Sech2(f) => Some(f.exceedance_time_exact(threshold)),
        _ => None,
    };
    Ok(Exceedance {
        t_e: t_plus - t_minus,
        t_minus,
        t_plus,
        exceeded: true,
        closed_form,
    })
}

fn search_window(forcing: &ForcingProfile, t_peak: f64, threshold: f64) -> Result<(f64, f64)> {
    if let Some((a, b)) = forcing.window() {
        if forcing.value(a) <= threshold && forcing.value(b) <= threshold {
            return Ok((a, b));
        }
        if !matches!(forcing, ForcingProfile::Sech2(_)) {
            return Err(Error::InvalidInput("forcing is above the threshold at the window ends".into()));
        }
    }
    let mut width = 1.0f64;
    for _ in 0..200 {
        let (a, b) = (t_peak - width, t_peak + width);
        if forcing.value(a) <= threshold && forcing.value(b) <= threshold {
            return Ok((a, b));
        }
        width *= 2.0;
    }
    Err(Error::InvalidInput("forcing does not return below the threshold".into()))
}

/// Root of `g` between `outside` (g <= 0) and `inside` (g > 0).
fn bisect_crossing<G: Fn(f64) -> f64>(g: &G, mut outside: f64, mut inside: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (outside + inside);
        if (inside - outside).abs() <= 1e-14 * mid.abs().max(1e-300) || mid == outside || mid == inside {
            break;
        }
        if g(mid) > 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (outside + inside)
}

/// Settings for [`classify_by_simulation`].
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub escape: EscapeBox,
    /// Time window; defaults to the forcing's own window.
    pub t_span: Option<(f64, f64)>,
    /// Newton guess for the starting equilibrium.
    pub guess: Vec<f64>,
    /// Largest output distance from the final equilibrium still counted as a return.
    pub return_tol: f64,
    pub tol: f64,
    /// After the forcing window the parameter is held at `q(t1)` for up to
    /// this many intervals of `5 / |lambda|` while the state settles.
    pub settle_chunks: usize,
}

impl SimulationSetup {
    pub fn new(escape: EscapeBox, guess: Vec<f64>) -> Self {
        SimulationSetup {
            escape,
            t_span: None,
            guess,
            return_tol: 1e-3,
            tol: 1e-9,
            settle_chunks: 8,
        }
    }
}

/// Start at the stable equilibrium for `q(t0)`, integrate through the
/// forcing and decide whether the state tipped: it left the escape box or
/// did not come back to the stable equilibrium for `q(t1)` once the
/// parameter is held there long enough to settle.
pub fn classify_by_simulation(
    system: &DynamicalSystem,
    forcing: &ForcingProfile,
    setup: &SimulationSetup,
) -> Result<TippingVerdict> {
    let (t0, t1) = setup
        .t_span
        .or_else(|| forcing.window())
        .ok_or_else(|| Error::InvalidInput("forcing has no natural window; give a time span".into()))?;
    let q0 = forcing.value(t0);
    let y0 = find_equilibrium(system, q0, &setup.guess)?;
    if leading_eigenvalue(system, &y0, q0).re >= 0.0 {
        return Err(Error::FoldAssumption(format!("equilibrium at q(t0) = {q0} is not stable")));
    }
    let opts = IntegrateOptions::with_tol(setup.tol).escape(setup.escape.clone());
    let traj = match integrate_with(system, &y0, (t0, t1), forcing, &opts) {
        Ok(tr) => tr,
        Err(Error::IntegrationFailure { t, reason }) => {
            return Ok(TippingVerdict {
                tipped: true,
                margin: t,
                method: VerdictMethod::Simulation,
                return_distance: None,
                note: Some(format!("integration failed: {reason}")),
            })
        }
        Err(e) => return Err(e),
    };
    if traj.escaped {
        return Ok(TippingVerdict {
            tipped: true,
            margin: traj.final_time(),
            method: VerdictMethod::Simulation,
            return_distance: None,
            note: Some("left the escape box".into()),
        });
    }
    let q_end = forcing.value(t1);
    let y_eq = match find_equilibrium(system, q_end, &y0) {
        Ok(y) => y,
        Err(_) => {
            return Ok(TippingVerdict {
                tipped: true,
                margin: t1,
                method: VerdictMethod::Simulation,
                return_distance: Some(f64::INFINITY),
                note: Some("no equilibrium at the final parameter".into()),
            })
        }
    };
    let distance_of = |y: &[f64]| {
        let diff: Vec<f64> = y.iter().zip(&y_eq).map(|(a, b)| a - b).collect();
        system.output(&diff).abs()
    };
    let mut y = traj.final_state().to_vec();
    let mut t = t1;
    let mut distance = distance_of(&y);
    let lambda = leading_eigenvalue(system, &y_eq, q_end).re;
    if lambda < 0.0 {
        let chunk = 5.0 / -lambda;
        let frozen = ForcingProfile::constant(q_end);
        for _ in 0..setup.settle_chunks {
            if distance <= setup.return_tol {
                break;
            }
            let tr = integrate_with(system, &y, (t, t + chunk), &frozen, &opts)?;
            if tr.escaped {
                return Ok(TippingVerdict {
                    tipped: true,
                    margin: tr.final_time(),
                    method: VerdictMethod::Simulation,
                    return_distance: None,
                    note: Some("left the escape box after the forcing window".into()),
                });
            }
            y = tr.final_state().to_vec();
            t += chunk;
            distance = distance_of(&y);
        }
    }
    Ok(TippingVerdict {
        tipped: !(distance <= setup.return_tol),
        margin: t,
        method: VerdictMethod::Simulation,
        return_distance: Some(distance),
        note: None,
    })
}

/// A sech² pulse family at fixed background, parameterized by `(R, t_e)`,
/// with `R` and `t_e` measured over `q_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sech2Family {
    pub q_inf: f64,
    pub q_b: f64,
    /// The run starts where `q - q_inf` is this fraction of `q_b - q_inf`.
    pub start_tolerance: f64,
}

impl Sech2Family {
    pub fn new(q_inf: f64, q_b: f64) -> Self {
        Sech2Family {
            q_inf,
            q_b,
            start_tolerance: 1e-4,
        }
    }

    pub fn member(&self, r: f64, t_e: f64) -> Sech2Forcing {
        let s = Sech2Forcing::speed_for(r, t_e, self.q_inf, self.q_b);
        Sech2Forcing::with_background_tolerance(self.q_inf, r, s, self.q_b, self.start_tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub t_e: f64,
    pub r_crit: Option<f64>,
    pub r_asymptotic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CriticalPoint {
    pub fn relative_error(&self) -> Option<f64> {
        self.r_crit.map(|r| (r - self.r_asymptotic).abs() / r)
    }
}

/// Bisection on `R` at fixed `t_e` for the tipping boundary of a sech²
/// family, evaluated in parallel over the grid.
pub fn critical_curve(
    system: &DynamicalSystem,
    family: &Sech2Family,
    t_e_grid: &[f64],
    d_b: f64,
    setup: &SimulationSetup,
    r_tol: f64,
) -> Vec<CriticalPoint> {
    t_e_grid
        .par_iter()
        .map(|&t_e| {
            let r_asymptotic = critical_amplitude(d_b, t_e);
            match critical_amplitude_by_simulation(system, family, t_e, r_asymptotic, setup, r_tol) {
                Ok(r) => CriticalPoint {
                    t_e,
                    r_crit: Some(r),
                    r_asymptotic,
                    error: None,
                },
                Err(e) => CriticalPoint {
                    t_e,
                    r_crit: None,
                    r_asymptotic,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Critical exceedance at one `t_e`, bracketing around `r_guess`.
pub fn critical_amplitude_by_simulation(
    system: &DynamicalSystem,
    family: &Sech2Family,
    t_e: f64,
    r_guess: f64,
    setup: &SimulationSetup,
    r_tol: f64,
) -> Result<f64> {
    let tipped = |r: f64| -> Result<bool> {
        let f = ForcingProfile::Sech2(family.member(r, t_e));
        Ok(classify_by_simulation(system, &f, setup)?.tipped)
    };
    let mut lo = 0.3 * r_guess;
    let mut hi = 1.5 * r_guess;
    let mut tries = 0;
    while tipped(lo)? {
        lo *= 0.5;
        tries += 1;
        if tries > 6 {
            return Err(Error::BracketFailure {
                t_e,
                reason: format!("still tipped at R = {lo}"),
            });
        }
    }
    tries = 0;
    while !tipped(hi)? {
        hi *= 2.0;
        tries += 1;
        if tries > 6 {
            return Err(Error::BracketFailure {
                t_e,
                reason: format!("still safe at R = {hi}"),
            });
        }
    }
    while hi - lo > r_tol {
        let mid = 0.5 * (lo + hi);
        if tipped(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// CSV `t_e,R_crit,R_asymptotic`; failed nodes have an empty `R_crit`.
pub fn write_critical_curve_csv<W: Write>(points: &[CriticalPoint], scale_t: f64, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t_e,R_crit,R_asymptotic")?;
    for p in points {
        let r = p.r_crit.map(|r| r.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", p.t_e * scale_t, r, p.r_asymptotic)?;
    }
    Ok(())
}

/// Autocorrelation-based estimate of the critical rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbEstimate {
    /// Lag-1 autocorrelation after mean removal.
    pub a: f64,
    /// Decay rate estimate `-(1 - a) / dt`.
    pub lambda: f64,
    /// `(1 - a)^2 / (dt^2 (q_b - q_c))`.
    pub d: f64,
}

pub fn lag1_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = series.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// Estimate `d` from a stationary output series sampled every `dt` at fixed
/// parameter `q_c < q_b`.
pub fn estimate_db_from_series(series: &[f64], dt: f64, q_c: f64, q_b: f64) -> Result<DbEstimate> {
    if !(dt > 0.0) || !(q_b > q_c) {
        return Err(Error::InvalidInput(format!("need dt > 0 and q_c < q_b (got {dt}, {q_c}, {q_b})")));
    }
    if series.len() < 1000 {
        let a = if series.len() > 2 { lag1_autocorrelation(series) } else { f64::NAN };
        return Err(Error::InvalidAutocorrelation { a });
    }
    let a = lag1_autocorrelation(series);
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidAutocorrelation { a });
    }
    Ok(DbEstimate {
        a,
        lambda: -(1.0 - a) / dt,
        d: (1.0 - a).powi(2) / (dt * dt * (q_b - q_c)),
    })
}

/// Dimensionless check `(1-a)^2 / (q_b - q_c) (q_peak - q_b) N_e^2 < 16`
/// with `N_e` the exceedance time in samples.
pub fn dimensionless_check(a: f64, q_c: f64, q_b: f64, q_peak: f64, n_e: f64) -> Result<TippingVerdict> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidAutocorrelation { a });
    }
    if !(q_b > q_c) || !(n_e > 0.0) {
        return Err(Error::InvalidInput("need q_c < q_b and N_e > 0".into()));
    }
    let margin = 16.0 - (1.0 - a).powi(2) / (q_b - q_c) * (q_peak - q_b) * n_e * n_e;
    Ok(TippingVerdict::criterion(margin, VerdictMethod::InverseSquare))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_square_examples() {
        let t30 = critical_exceedance_time(318.36, 0.005);
        assert!((t30 - 3.17).abs() < 0.01);
        let t15 = critical_exceedance_time(318.36, 0.02);
        assert!((t15 - 1.585).abs() < 0.01);
        let v = criterion_inverse_square(4.0, 0.0, 3.0).unwrap();
        assert!(!v.tipped && v.margin == 16.0);
        assert!(criterion_inverse_square(318.36, 0.005, 3.0).unwrap().margin > 0.0);
        assert!(criterion_inverse_square(318.36, 0.005, 3.3).unwrap().tipped);
        assert!(criterion_inverse_square(0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn acceleration_form() {
        assert!(!criterion_acceleration(1.0, -2.0, 1.0, 4.0).unwrap().tipped);
        assert_eq!(criterion_acceleration(1.0, 0.0, 0.9, 4.0).unwrap_err().kind(), "not-a-maximum");
        // parabolic forcing: R0 < sqrt(R2 / kappa) / a0
        let (a0, kappa, eps) = (2.0, 0.5, 1e-2);
        let d_b = 4.0 * a0 * a0 * kappa;
        let r2 = 3.0;
        let r0c = parabolic_threshold(a0, kappa, r2);
        for (r0, tipped) in [(0.99 * r0c, false), (1.01 * r0c, true)] {
            let v = criterion_acceleration(eps * r0, -2.0 * eps * eps * r2, 0.0, d_b).unwrap();
            assert_eq!(v.tipped, tipped);
        }
    }

    #[test]
    fn parabolic_exceedance() {
        let f = ForcingProfile::parabolic(1.0, 1.0, 0.01, 0.5);
        let e = exceedance_time(&f, 0.5).unwrap();
        assert!((e.t_e - 20.0).abs() < 1e-9);
        assert!((e.t_e - e.closed_form.unwrap()).abs() / 20.0 < 1e-6);
        let none = exceedance_time(&f, 0.6).unwrap();
        assert!(!none.exceeded && none.t_e == 0.0);
    }

    #[test]
    fn sampled_double_peak_rejected() {
        let f = ForcingProfile::sampled(
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(exceedance_time(&f, 0.5).unwrap_err().kind(), "not-single-peaked");
    }

    #[test]
    fn ou_autocorrelation_recovers_rate() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (lambda, dt) = (-2.0f64, 0.01);
        let phi = (lambda * dt).exp();
        let sd = ((1.0 - phi * phi) / (-2.0 * lambda)).sqrt();
        let mut x = 0.0;
        let series: Vec<f64> = (0..100_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + sd * z;
                x
            })
            .collect();
        let est = estimate_db_from_series(&series, dt, 0.0, 1.0).unwrap();
        assert!((est.a - 0.98).abs() < 0.003);
        assert!((est.lambda - lambda).abs() / 2.0 < 0.05);
    }

    #[test]
    fn degenerate_series_rejected() {
        let err = estimate_db_from_series(&vec![1.0; 2000], 0.1, 0.0, 1.0).unwrap_err();
        assert_eq!(err.kind(), "invalid-autocorrelation");
        assert!(estimate_db_from_series(&[1.0, 2.0, 3.0], 0.1, 0.0, 1.0).is_err());
    }
}
