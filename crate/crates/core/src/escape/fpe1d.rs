//! Crank-Nicolson solver for the one-dimensional Fokker-Planck equation
//! with absorbing boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fokker_planck_operator, Tridiagonal};

/// Density values below this are reported as a discretization failure.
pub const NEGATIVITY_TOL: f64 = -1e-8;
/// Allowed per-step growth of the total mass.
pub const MASS_GROWTH_TOL: f64 = 1e-8;

/// Grid and initial condition for the canonical problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpeGrid1D {
    /// Absorbing boundaries sit at `±x_bd`.
    pub x_bd: f64,
    /// Number of nodes including the two boundary nodes.
    pub nx: usize,
    /// Half-length of the time window; `None` picks it from `(p0, p2)`.
    pub t0: Option<f64>,
    /// Number of time steps; `None` picks `dt <= dx`.
    pub nt: Option<usize>,
    pub x0: f64,
    pub variance: f64,
    /// Initial interval stepped with backward Euler before switching to
    /// Crank-Nicolson (at least two steps).
    pub startup_time: f64,
    /// Store the density every this many steps (0 keeps only the final one).
    pub snapshot_every: usize,
}

impl Default for FpeGrid1D {
    fn default() -> Self {
        FpeGrid1D {
            x_bd: 8.0,
            nx: 801,
            t0: None,
            nt: None,
            x0: -4.0,
            variance: 1.0,
            startup_time: 0.5,
            snapshot_every: 0,
        }
    }
}

impl FpeGrid1D {
    pub fn dx(&self) -> f64 {
        2.0 * self.x_bd / (self.nx - 1) as f64
    }

    /// Start the window where the quasi-static equilibrium sits at `x0`:
    /// `T0 = sqrt(max(x0^2 + p0, 1) / p2)`.
    pub fn horizon(&self, p0: f64, p2: f64) -> f64 {
        self.t0
            .unwrap_or_else(|| ((self.x0 * self.x0 + p0).max(1.0) / p2).sqrt())
    }

    /// Same grid with `dx` and `dt` halved.
    pub fn refined(&self, p0: f64, p2: f64) -> Self {
        let t0 = self.horizon(p0, p2);
        let nt = self.steps(t0);
        FpeGrid1D {
            nx: 2 * self.nx - 1,
            t0: Some(t0),
            nt: Some(2 * nt),
            ..self.clone()
        }
    }

    fn steps(&self, t0: f64) -> usize {
        self.nt.unwrap_or_else(|| (2.0 * t0 / self.dx()).ceil() as usize).max(4)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.x_bd > 0.0) {
            p.push(format!("x_bd must be positive (got {})", self.x_bd));
        }
        if self.nx < 5 {
            p.push(format!("nx must be at least 5 (got {})", self.nx));
        }
        if !(self.variance > 0.0) {
            p.push(format!("variance must be positive (got {})", self.variance));
        }
        if self.x0.abs() >= self.x_bd {
            p.push(format!("x0 = {} lies outside (-x_bd, x_bd)", self.x0));
        }
        if !(self.startup_time >= 0.0) {
            p.push(format!("startup_time must be nonnegative (got {})", self.startup_time));
        }
        if let Some(t0) = self.t0 {
            if !(t0 > 0.0) {
                p.push(format!("t0 must be positive (got {t0})"));
            }
        }
        p
    }

    /// Interior node coordinates.
    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.dx();
        (1..self.nx - 1).map(|i| -self.x_bd + i as f64 * dx).collect()
    }

    /// Gaussian initial density, renormalized so the discrete mass is one.
    pub fn initial_density(&self) -> Vec<f64> {
        let x = self.nodes();
        let mut u: Vec<f64> = x
            .iter()
            .map(|&x| (-(x - self.x0).powi(2) / (2.0 * self.variance)).exp())
            .collect();
        let m: f64 = u.iter().sum::<f64>() * self.dx();
        u.iter_mut().for_each(|v| *v /= m);
        u
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpeSolution {
    pub p_esc: f64,
    /// Interior node coordinates.
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub final_density: Vec<f64>,
    pub min_density: f64,
    pub t_span: (f64, f64),
    pub steps: usize,
}

/// Escape probability for `dx = [p0 - p2 t^2 + x^2] dt + sqrt(2) dW` over
/// `[-T0, T0]`.
pub fn solve_fpe_1d(p0: f64, p2: f64, grid: &FpeGrid1D) -> Result<FpeSolution> {
    let mut problems = grid.validate();
    if !(p2 > 0.0) {
        problems.push(format!("p2 must be positive (got {p2})"));
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let t0 = grid.horizon(p0, p2);
    let drift = move |x: f64, t: f64| p0 - p2 * t * t + x * x;
    evolve(&drift, 1.0, grid, (-t0, t0), grid.steps(t0), &grid.initial_density())
}

/// Evolve `u_t = -(a(x, t) u)_x + d u_xx` on the grid's interior nodes.
pub fn evolve(
    drift: &dyn Fn(f64, f64) -> f64,
    diffusion: f64,
    grid: &FpeGrid1D,
    t_span: (f64, f64),
    nt: usize,
    initial: &[f64],
) -> Result<FpeSolution> {
    let dx = grid.dx();
    let x = grid.nodes();
    let n = x.len();
    if initial.len() != n {
        return Err(Error::InvalidInput(format!(
            "initial density has {} values, grid has {n} interior nodes",
            initial.len()
        )));
    }
    let faces: Vec<f64> = (0..=n).map(|k| -grid.x_bd + (k as f64 + 0.5) * dx).collect();
    let dt = (t_span.1 - t_span.0) / nt as f64;
    let startup = ((grid.startup_time / dt).ceil() as usize).max(2);

    let mut face_drift = vec![0.0; n + 1];
    let mut assemble = |t: f64, op: &mut Tridiagonal| {
        for (a, &xf) in face_drift.iter_mut().zip(&faces) {
            *a = drift(xf, t);
        }
        fokker_planck_operator(&face_drift, diffusion, dx, op);
    };

    let mut u = initial.to_vec();
    let mut op_old = Tridiagonal::zeros(n);
    let mut op_new = Tridiagonal::zeros(n);
    let mut lhs = Tridiagonal::zeros(n);
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    let mass0 = u.iter().sum::<f64>() * dx;
    let mut times = vec![t_span.0];
    let mut mass = vec![mass0];
    let mut snapshots = Vec::new();
    let mut min_density = u.iter().cloned().fold(f64::INFINITY, f64::min);

    // One theta-step from t to t + h; theta = 1 is backward Euler.
    let mut step = |u: &mut Vec<f64>, t: f64, h: f64, theta: f64| -> Result<()> {
        assemble(t + h, &mut op_new);
        if theta < 1.0 {
            assemble(t, &mut op_old);
            op_old.mul_vec(u, &mut rhs);
            for (r, v) in rhs.iter_mut().zip(u.iter()) {
                *r = v + (1.0 - theta) * h * *r;
            }
        } else {
            rhs.copy_from_slice(u);
        }
        for i in 0..n {
            lhs.diag[i] = 1.0 - theta * h * op_new.diag[i];
            lhs.lower[i] = -theta * h * op_new.lower[i];
            lhs.upper[i] = -theta * h * op_new.upper[i];
        }
        if !lhs.solve_in_place(&mut rhs, &mut scratch) {
            return Err(Error::DiscretizationFailure(format!("singular step matrix at t = {t}")));
        }
        u.copy_from_slice(&rhs);
        Ok(())
    };

    for k in 0..nt {
        let t = t_span.0 + k as f64 * dt;
        if k < startup {
            // Rannacher start: half backward-Euler steps damp the collapse
            // of the initial density onto the well, which Crank-Nicolson
            // would otherwise turn into oscillations.
            step(&mut u, t, 0.5 * dt, 1.0)?;
            step(&mut u, t + 0.5 * dt, 0.5 * dt, 1.0)?;
        } else {
            step(&mut u, t, dt, 0.5)?;
        }
        let t_next = t + dt;
        let m = u.iter().sum::<f64>() * dx;
        let lo = u.iter().cloned().fold(f64::INFINITY, f64::min);
        min_density = min_density.min(lo);
        if lo < NEGATIVITY_TOL {
            return Err(Error::DiscretizationFailure(format!(
                "negative density {lo:e} at t = {t_next}; refine the grid"
            )));
        }
        if m > mass[mass.len() - 1] + MASS_GROWTH_TOL || !m.is_finite() {
            return Err(Error::DiscretizationFailure(format!(
                "total mass grew to {m} at t = {t_next}; refine the grid"
            )));
        }
        times.push(t_next);
        mass.push(m);
        if grid.snapshot_every > 0 && (k + 1) % grid.snapshot_every == 0 {
            snapshots.push((t_next, u.clone()));
        }
    }
    let final_mass = mass[mass.len() - 1];
    Ok(FpeSolution {
        p_esc: (1.0 - final_mass).clamp(0.0, 1.0),
        x,
        times,
        mass,
        snapshots,
        final_density: u,
        min_density,
        t_span,
        steps: nt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_mass_is_one() {
        let g = FpeGrid1D::default();
        let m: f64 = g.initial_density().iter().sum::<f64>() * g.dx();
        assert!(m > 1.0 - 1e-8 && m <= 1.0 + 1e-12);
    }

    #[test]
    fn mass_decreases_and_stays_in_range() {
        let sol = solve_fpe_1d(0.5, 1.0, &FpeGrid1D::default()).unwrap();
        assert!(sol.mass.windows(2).all(|w| w[1] <= w[0] + MASS_GROWTH_TOL));
        assert!(sol.p_esc > 0.0 && sol.p_esc < 1.0);
        assert!(sol.min_density >= NEGATIVITY_TOL);
    }

    #[test]
    fn probability_increases_with_peak_height() {
        let g = FpeGrid1D::default();
        let lo = solve_fpe_1d(-1.0, 1.0, &g).unwrap().p_esc;
        let hi = solve_fpe_1d(1.0, 1.0, &g).unwrap().p_esc;
        assert!(hi > lo, "{hi} <= {lo}");
    }

    #[test]
    fn symmetric_drift_preserves_symmetry() {
        // Ornstein-Uhlenbeck drift -x with a centered initial density.
        let g = FpeGrid1D {
            x0: 0.0,
            nx: 401,
            ..Default::default()
        };
        let sol = evolve(&|x, _| -x, 1.0, &g, (0.0, 2.0), 400, &g.initial_density()).unwrap();
        let u = &sol.final_density;
        let n = u.len();
        for i in 0..n / 2 {
            assert!((u[i] - u[n - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let g = FpeGrid1D {
            nx: 3,
            variance: -1.0,
            ..Default::default()
        };
        match solve_fpe_1d(0.0, 1.0, &g) {
            Err(Error::Validation(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
