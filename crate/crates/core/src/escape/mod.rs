//! Noise-induced escape near a fold.
//!
//! Near the fold the projected dynamics rescale to the canonical SDE
//! `dx = [p0 - p2 t^2 + x^2] dt + sqrt(2) dW`. This module converts between
//! the original and canonical parameters, solves the Fokker-Planck equation
//! with absorbing boundaries, evaluates the mode approximation built on the
//! leading eigenvalue of the frozen operator, runs Monte-Carlo oracles, and
//! solves the two-dimensional monsoon Fokker-Planck equation.

pub mod fpe1d;
pub mod fpe2d;
pub mod grid;
pub mod mode;
pub mod montecarlo;
pub mod reduced;
pub mod xbar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::ForcingProfile;

pub use fpe1d::{solve_fpe_1d, FpeGrid1D, FpeSolution};
pub use fpe2d::{solve_fpe_2d_monsoon, Fpe2dResult, FpeGrid2D};
pub use grid::{escape_grid_1d, EscapeGrid, EscapeMethod, GridSpec};
pub use mode::{
    fit_mode_coefficients, gamma1, mode_approx, mode_approx_probability, Gamma1Grid, Gamma1Table, ModeApprox, ModeFit,
    RateModel,
};
pub use montecarlo::{monte_carlo_escape, sample_path, InitialCondition, McResult, McSpec};
pub use reduced::MonsoonReduction;
pub use xbar::{xbar_trajectory, XbarTrajectory};

/// Canonical parameters `(p0, p2)` together with the original tuple they
/// were computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFormParams {
    pub p0: f64,
    pub p2: f64,
    pub r0: f64,
    pub r2: f64,
    /// Noise half-variance of the projected equation.
    pub d: f64,
    pub a0: f64,
    pub kappa: f64,
}

fn check_scaling(r2: f64, d: f64, a0: f64, kappa: f64) -> Result<()> {
    let mut bad = Vec::new();
    for (name, v) in [("R2", r2), ("D", d), ("a0", a0), ("kappa", kappa)] {
        if !(v > 0.0 && v.is_finite()) {
            bad.push(format!("{name} = {v}"));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidScaling(format!("must be positive: {}", bad.join(", "))))
    }
}

/// `p0 = a0^(2/3) R0 / (D^(2/3) kappa^(1/3))`,
/// `p2 = R2 / (D^(4/3) kappa^(5/3) a0^(2/3))`.
pub fn rescale_to_canonical(r0: f64, r2: f64, d: f64, a0: f64, kappa: f64) -> Result<NormalFormParams> {
    check_scaling(r2, d, a0, kappa)?;
    let p0 = a0.powf(2.0 / 3.0) * r0 / (d.powf(2.0 / 3.0) * kappa.cbrt());
    let p2 = r2 / (d.powf(4.0 / 3.0) * kappa.powf(5.0 / 3.0) * a0.powf(2.0 / 3.0));
    Ok(NormalFormParams {
        p0,
        p2,
        r0,
        r2,
        d,
        a0,
        kappa,
    })
}

/// Inverse of [`rescale_to_canonical`]: `(R0, R2)` from `(p0, p2)`.
pub fn canonical_to_original(p0: f64, p2: f64, d: f64, a0: f64, kappa: f64) -> Result<(f64, f64)> {
    check_scaling(p2, d, a0, kappa)?;
    let r0 = p0 * d.powf(2.0 / 3.0) * kappa.cbrt() / a0.powf(2.0 / 3.0);
    let r2 = p2 * d.powf(4.0 / 3.0) * kappa.powf(5.0 / 3.0) * a0.powf(2.0 / 3.0);
    Ok((r0, r2))
}

/// Half-variance of the projected noise, `w0^T Delta w0`, for a noise
/// matrix `Sigma` with `Delta = Sigma Sigma^T` given row-major.
pub fn projected_noise(w0: &[f64], delta: &[f64]) -> Result<f64> {
    let n = w0.len();
    if delta.len() != n * n {
        return Err(Error::InvalidInput(format!("noise matrix must be {n}x{n}")));
    }
    let mut d = 0.0;
    for i in 0..n {
        for j in 0..n {
            d += w0[i] * delta[i * n + j] * w0[j];
        }
    }
    Ok(d)
}

/// `(q1, q2) = (sqrt(p2), p0 - sqrt(p2))`; `q2 = 0` is the deterministic
/// tipping boundary.
pub fn q_transform(p0: f64, p2: f64) -> Result<(f64, f64)> {
    if !(p2 >= 0.0) {
        return Err(Error::InvalidInput(format!("p2 must be nonnegative (got {p2})")));
    }
    let q1 = p2.sqrt();
    Ok((q1, p0 - q1))
}

pub fn q_inverse(q1: f64, q2: f64) -> Result<(f64, f64)> {
    if !(q1 > 0.0) {
        return Err(Error::InvalidInput(format!("q1 must be positive (got {q1})")));
    }
    Ok((q2 + q1, q1 * q1))
}

/// Canonical forcing `p0 - p2 t^2`.
pub fn canonical_forcing(p0: f64, p2: f64) -> ForcingProfile {
    ForcingProfile::parabolic(p0, p2, 1.0, 0.0)
}

/// `(p0, p2)` for exceedance amplitude `r` and time `t_e` over threshold
/// `p0_th`: `p0 = p0_th + r`, `t_e = 2 sqrt(r / p2)`.
pub fn axes_to_canonical(p0_th: f64, r: f64, t_e: f64) -> (f64, f64) {
    (p0_th + r, 4.0 * r / (t_e * t_e))
}

pub fn canonical_to_axes(p0_th: f64, p0: f64, p2: f64) -> (f64, f64) {
    let r = p0 - p0_th;
    (r, 2.0 * (r / p2).sqrt())
}

/// Exceedance time over `p0_th` at which the deterministic boundary
/// `p0 = sqrt(p2)` is reached, for amplitude `r`.
pub fn deterministic_boundary(p0_th: f64, r: f64) -> Option<f64> {
    let p0 = p0_th + r;
    (p0 > 0.0 && r > 0.0).then(|| 2.0 * r.sqrt() / p0)
}
