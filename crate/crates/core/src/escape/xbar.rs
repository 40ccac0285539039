//! The deterministic solution that follows the stable branch from the
//! distant past, for canonical forcing `x' = p(t) + x^2`.

use serde::{Deserialize, Serialize};

use crate::dynsys::{integrate_with, DynamicalSystem, EscapeBox, IntegrateOptions, Trajectory};
use crate::error::{Error, Result};
use crate::forcing::ForcingProfile;

/// Above this value the solution is treated as having blown up.
pub const BLOWUP: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct XbarTrajectory {
    pub trajectory: Trajectory,
    pub max_xbar: f64,
    pub t_max: f64,
    /// True when `xbar < 0` over the whole window.
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct XbarSample {
    pub t: f64,
    pub xbar: f64,
}

impl XbarTrajectory {
    pub fn at(&self, t: f64) -> f64 {
        self.trajectory.interpolate(t)[0]
    }

    pub fn samples(&self) -> Vec<XbarSample> {
        self.trajectory
            .times
            .iter()
            .zip(&self.trajectory.states)
            .map(|(&t, y)| XbarSample { t, xbar: y[0] })
            .collect()
    }
}

/// Starting value on the slow manifold: the quasi-static root
/// `-sqrt(-p)` plus the first-order lag `xdot / (2 x)`.
pub fn slow_manifold_start(forcing: &ForcingProfile, t: f64) -> Result<f64> {
    let p = forcing.value(t);
    if !(p < 0.0) {
        return Err(Error::NoMetastableWell { xbar: (-p).max(0.0).sqrt() });
    }
    let h = 1e-6 * t.abs().max(1.0);
    let dp = (forcing.value(t + h) - forcing.value(t - h)) / (2.0 * h);
    let x = -(-p).sqrt();
    let xdot = -dp / (2.0 * x);
    Ok(x + xdot / (2.0 * x))
}

/// Window `[-T, T]` for `p0 - p2 t^2` with `p(±T) <= -100`, which also
/// gives `sqrt(p2) T >= 10`.
pub fn parabolic_window(p0: f64, p2: f64) -> f64 {
    (p0.max(0.0) + 100.0).sqrt() / p2.sqrt()
}

/// Follow the stable branch through `t_span`. Blow-up is
/// [`Error::NoConnectingOrbit`]; reaching `xbar >= 0` only clears `valid`.
pub fn xbar_trajectory(forcing: &ForcingProfile, t_span: (f64, f64), tol: f64) -> Result<XbarTrajectory> {
    let x0 = slow_manifold_start(forcing, t_span.0)?;
    let sys = DynamicalSystem::scalar(|x, p| p + x * x);
    let opts = IntegrateOptions::with_tol(tol).escape(EscapeBox::new(vec![-1e6], vec![BLOWUP])?);
    let traj = integrate_with(&sys, &[x0], t_span, forcing, &opts)?;
    if traj.escaped {
        return Err(Error::NoConnectingOrbit { t: traj.final_time() });
    }
    let (t_max, max_xbar) = traj
        .times
        .iter()
        .zip(&traj.states)
        .fold((t_span.0, f64::NEG_INFINITY), |acc, (&t, y)| if y[0] > acc.1 { (t, y[0]) } else { acc });
    Ok(XbarTrajectory {
        trajectory: traj,
        max_xbar,
        t_max,
        valid: max_xbar < 0.0,
    })
}

/// `xbar_trajectory` for `p0 - p2 t^2` on its default window.
pub fn parabolic_xbar(p0: f64, p2: f64) -> Result<XbarTrajectory> {
    if !(p2 > 0.0) {
        return Err(Error::InvalidInput(format!("p2 must be positive (got {p2})")));
    }
    let t = parabolic_window(p0, p2);
    xbar_trajectory(&super::canonical_forcing(p0, p2), (-t, t), 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_the_branch_far_from_the_peak() {
        let xb = parabolic_xbar(-1.0, 1.0).unwrap();
        assert!(xb.valid);
        let t = 0.8 * xb.trajectory.final_time();
        let quasi = -(t * t + 1.0f64).sqrt();
        assert!((xb.at(-t) - quasi).abs() < 0.1);
    }

    #[test]
    fn invalid_beyond_the_deterministic_boundary() {
        // p0 = sqrt(p2) is the deterministic threshold; slightly below it the
        // orbit connects but crosses zero.
        let xb = parabolic_xbar(0.9, 1.0).unwrap();
        assert!(!xb.valid && xb.max_xbar >= 0.0);
        assert!(matches!(parabolic_xbar(1.5, 1.0), Err(Error::NoConnectingOrbit { .. })));
    }
}
