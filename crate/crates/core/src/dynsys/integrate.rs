use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{inf_norm, DynamicalSystem};
use crate::error::{Error, Result};
use crate::forcing::ForcingProfile;

/// Axis-aligned box; integration stops when the state leaves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EscapeBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidInput("escape box needs lower < upper in every component".into()));
        }
        Ok(EscapeBox { lower, upper })
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(dim: usize, r: f64) -> Self {
        EscapeBox {
            lower: vec![-r; dim],
            upper: vec![r; dim],
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    pub escape: Option<EscapeBox>,
}

impl IntegrateOptions {
    pub fn with_tol(tol: f64) -> Self {
        IntegrateOptions {
            rtol: tol,
            atol: tol,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
            escape: None,
        }
    }

    pub fn escape(mut self, escape: EscapeBox) -> Self {
        self.escape = Some(escape);
        self
    }
}

/// Accepted integration steps with the derivative at each node, so the
/// solution can be evaluated between nodes by cubic Hermite interpolation.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub forcing_values: Vec<f64>,
    pub slopes: Vec<Vec<f64>>,
    /// Set when the state left the escape box; the last node is then the
    /// (interpolated) exit point.
    pub escaped: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&f64::NAN)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Cubic Hermite interpolation of the state at `t` (clamped to the range).
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&x| x <= t).max(1);
        hermite(
            self.times[i - 1],
            &self.states[i - 1],
            &self.slopes[i - 1],
            self.times[i],
            &self.states[i],
            &self.slopes[i],
            t,
        )
    }

    /// CSV with header `t,q,y1,...,yn`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.states.first().map_or(0, Vec::len);
        write!(out, "t,q")?;
        for i in 1..=dim {
            write!(out, ",y{i}")?;
        }
        writeln!(out)?;
        for ((t, q), y) in self.times.iter().zip(&self.forcing_values).zip(&self.states) {
            write!(out, "{t},{q}")?;
            for v in y {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn hermite(t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus the embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(y, q(t))` over `tspan` with local error control `tol`.
pub fn integrate(
    system: &DynamicalSystem,
    y0: &[f64],
    tspan: (f64, f64),
    forcing: &ForcingProfile,
    tol: f64,
) -> Result<Trajectory> {
    integrate_with(system, y0, tspan, forcing, &IntegrateOptions::with_tol(tol))
}

pub fn integrate_with(
    system: &DynamicalSystem,
    y0: &[f64],
    tspan: (f64, f64),
    forcing: &ForcingProfile,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let (t0, t1) = tspan;
    let n = system.dim();
    if !(t1 > t0) {
        return Err(Error::InvalidInput(format!("empty time span [{t0}, {t1}]")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidInput("integration tolerances must be positive".into()));
    }
    if y0.len() != n {
        return Err(Error::InvalidInput(format!("initial state has length {}, expected {n}", y0.len())));
    }

    let rhs = |t: f64, y: &[f64], out: &mut [f64]| system.eval_into(y, forcing.value(t), out);

    let mut traj = Trajectory::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    rhs(t, &y, &mut k[0]);
    traj.times.push(t);
    traj.states.push(y.clone());
    traj.forcing_values.push(forcing.value(t));
    traj.slopes.push(k[0].clone());
    if let Some(b) = &opts.escape {
        if !b.contains(&y) {
            traj.escaped = true;
            return Ok(traj);
        }
    }

    let mut h = opts.h_init.unwrap_or_else(|| initial_step(&y, &k[0], opts, t1 - t0));
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("step limit {} reached", opts.max_steps),
            });
        }
        h = h.min(opts.h_max).min(t1 - t);
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure {
                t,
                reason: "step size underflow".into(),
            });
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                ytmp[i] = acc;
            }
            rhs(t + C[s] * h, &ytmp, &mut k[s]);
        }
        // stage 7 is evaluated at the fifth-order solution (FSAL)
        ynew.copy_from_slice(&ytmp);
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (h * e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        steps += 1;
        if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            let t_new = if t1 - (t + h) < 1e-14 * t1.abs().max(1.0) { t1 } else { t + h };
            let exit = opts.escape.as_ref().filter(|b| !b.contains(&ynew)).cloned();
            if let Some(b) = exit {
                let (te, ye) = locate_exit(&b, t, &y, &k[0], t_new, &ynew, &k[6]);
                let mut fe = vec![0.0; n];
                rhs(te, &ye, &mut fe);
                traj.times.push(te);
                traj.forcing_values.push(forcing.value(te));
                traj.states.push(ye);
                traj.slopes.push(fe);
                traj.escaped = true;
                return Ok(traj);
            }
            t = t_new;
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            traj.times.push(t);
            traj.states.push(y.clone());
            traj.forcing_values.push(forcing.value(t));
            traj.slopes.push(k[0].clone());
            // PI step-size controller
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err.max(1e-4);
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(traj)
}

fn initial_step(y: &[f64], f: &[f64], opts: &IntegrateOptions, span: f64) -> f64 {
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = inf_norm(&y.iter().zip(&sc).map(|(a, b)| a / b).collect::<Vec<_>>());
    let d1 = inf_norm(&f.iter().zip(&sc).map(|(a, b)| a / b).collect::<Vec<_>>());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span).min(opts.h_max)
}

fn locate_exit(
    b: &EscapeBox,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t1: f64,
    y1: &[f64],
    f1: &[f64],
) -> (f64, Vec<f64>) {
    let (mut lo, mut hi) = (t0, t1);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let ym = hermite(t0, y0, f0, t1, y1, f1, mid);
        if b.contains(&ym) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * t1.abs().max(1.0) {
            break;
        }
    }
    (hi, hermite(t0, y0, f0, t1, y1, f1, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> DynamicalSystem {
        DynamicalSystem::scalar(|y, _| -y)
    }

    #[test]
    fn linear_decay_one_unit() {
        let tol = 1e-8;
        let tr = integrate(&decay(), &[1.0], (0.0, 1.0), &ForcingProfile::constant(0.0), tol).unwrap();
        assert!((tr.final_state()[0] - (-1.0f64).exp()).abs() <= 10.0 * tol);
        assert_eq!(tr.final_time(), 1.0);
    }

    #[test]
    fn linear_decay_global_error() {
        for tol in [1e-6, 1e-9] {
            let tr = integrate(&decay(), &[1.0], (0.0, 10.0), &ForcingProfile::constant(0.0), tol).unwrap();
            for (t, y) in tr.times.iter().zip(&tr.states) {
                assert!((y[0] - (-t).exp()).abs() <= 100.0 * tol, "t = {t}");
            }
            assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let tr = integrate(&decay(), &[1.0], (0.0, 3.0), &ForcingProfile::constant(0.0), 1e-10).unwrap();
        for t in [0.13, 1.7, 2.95] {
            assert!((tr.interpolate(t)[0] - (-t as f64).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn blow_up_is_caught_by_escape_box() {
        let sys = DynamicalSystem::scalar(|y, q| q + y * y);
        let opts = IntegrateOptions::with_tol(1e-8).escape(EscapeBox::cube(1, 10.0));
        // y' = 1 + y^2 from 0 blows up at pi/2
        let tr = integrate_with(&sys, &[0.0], (0.0, 3.0), &ForcingProfile::constant(1.0), &opts).unwrap();
        assert!(tr.escaped);
        let exit = 10.0f64.atan();
        assert!((tr.final_time() - exit).abs() < 1e-6);
    }

    #[test]
    fn blow_up_without_box_fails() {
        let sys = DynamicalSystem::scalar(|y, q| q + y * y);
        let err = integrate(&sys, &[0.0], (0.0, 3.0), &ForcingProfile::constant(1.0), 1e-8).unwrap_err();
        assert_eq!(err.kind(), "integration-failure");
    }

    #[test]
    fn csv_header() {
        let tr = integrate(&decay(), &[1.0], (0.0, 0.1), &ForcingProfile::constant(0.0), 1e-6).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,q,y1\n0,0,1\n"));
    }
}
