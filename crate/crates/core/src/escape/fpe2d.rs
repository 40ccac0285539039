//! Fokker-Planck equation of the two-dimensional monsoon model under a
//! time-dependent albedo, with absorbing boundaries on a rectangle.
//!
//! Time stepping is locally one-dimensional backward Euler: each step
//! solves the `Q_a` lines and then the `T_a` lines implicitly with
//! exponentially fitted fluxes. Every 1D solve is an M-matrix system, so
//! the density stays nonnegative and its mass never grows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::Sech2Forcing;
use crate::monsoon::{monsoon_rhs, stable_equilibrium, MonsoonParams, MonsoonState, DOMAIN_LOWER, DOMAIN_UPPER, NOISE};
use crate::numerics::{fokker_planck_operator, Tridiagonal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpeGrid2D {
    /// Interior nodes along `Q_a`.
    pub n_q: usize,
    /// Interior nodes along `T_a`.
    pub n_t: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Half-variances `(D1, D2)`.
    pub noise: [f64; 2],
    /// Time step in model time units.
    pub dt: f64,
    /// Pseudo-time step of the relaxation to the quasi-stationary density.
    pub relax_dt: f64,
    pub relax_max_iter: usize,
    pub relax_tol: f64,
}

impl Default for FpeGrid2D {
    fn default() -> Self {
        FpeGrid2D {
            n_q: 256,
            n_t: 256,
            lower: DOMAIN_LOWER,
            upper: DOMAIN_UPPER,
            noise: NOISE,
            dt: 1e-3,
            relax_dt: 0.05,
            relax_max_iter: 4000,
            relax_tol: 1e-9,
        }
    }
}

impl FpeGrid2D {
    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.upper[0] - self.lower[0]) / (self.n_q + 1) as f64,
            (self.upper[1] - self.lower[1]) / (self.n_t + 1) as f64,
        ]
    }

    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.n_q < 3 || self.n_t < 3 {
            p.push("2D grid needs at least 3 interior nodes per axis".into());
        }
        for i in 0..2 {
            if !(self.lower[i] < self.upper[i]) {
                p.push(format!("domain axis {i}: lower must be below upper"));
            }
            if !(self.noise[i] > 0.0) {
                p.push(format!("noise component {i} must be positive"));
            }
        }
        if !(self.dt > 0.0 && self.relax_dt > 0.0) {
            p.push("time steps must be positive".into());
        }
        p
    }

    /// The grid with spacing and time step halved.
    pub fn refined(&self) -> Self {
        FpeGrid2D {
            n_q: 2 * self.n_q + 1,
            n_t: 2 * self.n_t + 1,
            dt: 0.5 * self.dt,
            ..self.clone()
        }
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [self.lower[0] + (i + 1) as f64 * h[0], self.lower[1] + (j + 1) as f64 * h[1]]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fpe2dResult {
    pub p_esc: f64,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    /// Density at the end of the window, indexed `[j * n_q + i]`.
    pub final_density: Vec<f64>,
    pub initial_density: Vec<f64>,
    /// Iterations the quasi-stationary relaxation needed.
    pub relax_iterations: usize,
    pub steps: usize,
}

/// Face drifts, affine in the albedo: `f = base + a * slope`.
struct Drifts {
    q_base: Vec<f64>,
    q_slope: Vec<f64>,
    t_base: Vec<f64>,
    t_slope: Vec<f64>,
}

impl Drifts {
    fn new(params: &MonsoonParams, grid: &FpeGrid2D) -> Result<Self> {
        let (nq, nt) = (grid.n_q, grid.n_t);
        let h = grid.spacing();
        let eval = |q: f64, t: f64, a: f64| monsoon_rhs(MonsoonState { q_a: q, t_a: t }, a, params);
        let (a0, a1, am) = (0.4, 0.6, 0.53);
        let mut d = Drifts {
            q_base: vec![0.0; nt * (nq + 1)],
            q_slope: vec![0.0; nt * (nq + 1)],
            t_base: vec![0.0; nq * (nt + 1)],
            t_slope: vec![0.0; nq * (nt + 1)],
        };
        let mut worst: f64 = 0.0;
        let mut fill = |q: f64, t: f64, comp: usize, base: &mut f64, slope: &mut f64| {
            let pick = |f: (f64, f64)| if comp == 0 { f.0 } else { f.1 };
            let f0 = pick(eval(q, t, a0));
            let f1 = pick(eval(q, t, a1));
            *slope = (f1 - f0) / (a1 - a0);
            *base = f0 - a0 * *slope;
            let fm = pick(eval(q, t, am));
            worst = worst.max((fm - (*base + am * *slope)).abs() / fm.abs().max(1.0));
        };
        for j in 0..nt {
            let t = grid.lower[1] + (j + 1) as f64 * h[1];
            for k in 0..=nq {
                let q = grid.lower[0] + (k as f64 + 0.5) * h[0];
                let idx = j * (nq + 1) + k;
                fill(q, t, 0, &mut d.q_base[idx], &mut d.q_slope[idx]);
            }
        }
        for i in 0..nq {
            let q = grid.lower[0] + (i + 1) as f64 * h[0];
            for k in 0..=nt {
                let t = grid.lower[1] + (k as f64 + 0.5) * h[1];
                let idx = i * (nt + 1) + k;
                fill(q, t, 1, &mut d.t_base[idx], &mut d.t_slope[idx]);
            }
        }
        if worst > 1e-9 {
            return Err(Error::DiscretizationFailure(format!(
                "model drift is not affine in the albedo (deviation {worst:e})"
            )));
        }
        Ok(d)
    }
}

struct Lod<'a> {
    grid: &'a FpeGrid2D,
    drifts: Drifts,
}

impl Lod<'_> {
    /// One backward-Euler LOD step at albedo `a`.
    fn step(&self, u: &mut [f64], a: f64, dt: f64) -> Result<()> {
        let (nq, nt) = (self.grid.n_q, self.grid.n_t);
        let h = self.grid.spacing();
        let d = &self.drifts;
        let dq = self.grid.noise[0];
        let dtt = self.grid.noise[1];
        let ok = u
            .par_chunks_mut(nq)
            .enumerate()
            .map(|(j, line)| {
                let faces: Vec<f64> = (0..=nq)
                    .map(|k| d.q_base[j * (nq + 1) + k] + a * d.q_slope[j * (nq + 1) + k])
                    .collect();
                implicit_line(&faces, dq, h[0], dt, line)
            })
            .all(|x| x);
        if !ok {
            return Err(Error::DiscretizationFailure("singular line system along Q_a".into()));
        }
        let columns: Vec<Vec<f64>> = (0..nq)
            .into_par_iter()
            .map(|i| {
                let mut col: Vec<f64> = (0..nt).map(|j| u[j * nq + i]).collect();
                let faces: Vec<f64> = (0..=nt)
                    .map(|k| d.t_base[i * (nt + 1) + k] + a * d.t_slope[i * (nt + 1) + k])
                    .collect();
                if implicit_line(&faces, dtt, h[1], dt, &mut col) {
                    Ok(col)
                } else {
                    Err(Error::DiscretizationFailure("singular line system along T_a".into()))
                }
            })
            .collect::<Result<_>>()?;
        for (i, col) in columns.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                u[j * nq + i] = *v;
            }
        }
        Ok(())
    }

    fn mass(&self, u: &[f64]) -> f64 {
        let h = self.grid.spacing();
        u.iter().sum::<f64>() * h[0] * h[1]
    }
}

/// Solve `(I - dt L) v = line` in place for one grid line.
fn implicit_line(faces: &[f64], diffusion: f64, h: f64, dt: f64, line: &mut [f64]) -> bool {
    let n = line.len();
    let mut op = Tridiagonal::zeros(n);
    fokker_planck_operator(faces, diffusion, h, &mut op);
    for k in 0..n {
        op.diag[k] = 1.0 - dt * op.diag[k];
        op.lower[k] *= -dt;
        op.upper[k] *= -dt;
    }
    let mut scratch = vec![0.0; n];
    op.solve_in_place(line, &mut scratch)
}

/// Quasi-stationary density of the frozen operator at albedo `a`, by
/// normalized implicit iteration from a Gaussian at the stable state.
fn quasi_stationary(lod: &Lod, params: &MonsoonParams, a: f64) -> Result<(Vec<f64>, usize)> {
    let grid = lod.grid;
    let (nq, nt) = (grid.n_q, grid.n_t);
    let eq = stable_equilibrium(params, a)?;
    let sd = [0.01 * (grid.upper[0] - grid.lower[0]), 0.05 * (grid.upper[1] - grid.lower[1])];
    let mut u = vec![0.0; nq * nt];
    for j in 0..nt {
        for i in 0..nq {
            let x = grid.node(i, j);
            let z0 = (x[0] - eq[0]) / sd[0];
            let z1 = (x[1] - eq[1]) / sd[1];
            u[j * nq + i] = (-0.5 * (z0 * z0 + z1 * z1)).exp();
        }
    }
    let m = lod.mass(&u);
    u.iter_mut().for_each(|v| *v /= m);
    let mut prev = u.clone();
    for it in 1..=grid.relax_max_iter {
        lod.step(&mut u, a, grid.relax_dt)?;
        let m = lod.mass(&u);
        if !(m > 0.0) {
            return Err(Error::DiscretizationFailure("density vanished during relaxation".into()));
        }
        u.iter_mut().for_each(|v| *v /= m);
        let h = grid.spacing();
        let change: f64 = u.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum::<f64>() * h[0] * h[1];
        if change < grid.relax_tol {
            return Ok((u, it));
        }
        prev.copy_from_slice(&u);
    }
    Err(Error::DiscretizationFailure(format!(
        "quasi-stationary relaxation did not converge in {} iterations",
        grid.relax_max_iter
    )))
}

/// Escape probability of the monsoon model from its quasi-stationary
/// state at `A(0)` through the pulse window `[0, t_end]`.
pub fn solve_fpe_2d_monsoon(params: &MonsoonParams, forcing: &Sech2Forcing, grid: &FpeGrid2D) -> Result<Fpe2dResult> {
    let mut problems = grid.validate();
    problems.extend(params.problems());
    if !(forcing.t_end > 0.0 && forcing.s > 0.0) {
        problems.push("forcing needs a positive window and speed".into());
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let lod = Lod {
        grid,
        drifts: Drifts::new(params, grid)?,
    };
    let (mut u, relax_iterations) = quasi_stationary(&lod, params, forcing.value(0.0))?;
    let initial_density = u.clone();
    let steps = (forcing.t_end / grid.dt).ceil().max(1.0) as usize;
    let dt = forcing.t_end / steps as f64;
    let mut times = vec![0.0];
    let mut mass = vec![1.0];
    for k in 0..steps {
        let t = (k + 1) as f64 * dt;
        lod.step(&mut u, forcing.value(t), dt)?;
        let m = lod.mass(&u);
        if !m.is_finite() || m > mass[mass.len() - 1] + super::fpe1d::MASS_GROWTH_TOL {
            return Err(Error::DiscretizationFailure(format!("total mass grew to {m} at t = {t}")));
        }
        times.push(t);
        mass.push(m);
    }
    Ok(Fpe2dResult {
        p_esc: (1.0 - mass[mass.len() - 1]).clamp(0.0, 1.0),
        times,
        mass,
        final_density: u,
        initial_density,
        relax_iterations,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> FpeGrid2D {
        FpeGrid2D {
            n_q: 48,
            n_t: 48,
            dt: 5e-3,
            ..Default::default()
        }
    }

    #[test]
    fn mass_is_monotone_and_probability_grows_with_amplitude() {
        let p = MonsoonParams::default();
        let pulse = |r: f64| {
            let amp = r + 0.03;
            let s = Sech2Forcing::speed_for(r, 2.0, 0.47, 0.5);
            Sech2Forcing {
                q_inf: 0.47,
                r,
                s,
                t_end: Sech2Forcing::t_end_for_offset(amp, s, 1e-3),
                q_b: 0.5,
            }
        };
        let lo = solve_fpe_2d_monsoon(&p, &pulse(0.02), &coarse()).unwrap();
        let hi = solve_fpe_2d_monsoon(&p, &pulse(0.05), &coarse()).unwrap();
        assert!(lo.mass.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(lo.initial_density.iter().all(|v| *v >= 0.0));
        assert!(hi.p_esc > lo.p_esc, "{} {}", hi.p_esc, lo.p_esc);
    }

    #[test]
    fn rejects_bad_grid() {
        let g = FpeGrid2D {
            n_q: 1,
            noise: [0.0, 1.0],
            ..Default::default()
        };
        let f = Sech2Forcing {
            q_inf: 0.47,
            r: 0.01,
            s: 1.0,
            t_end: 4.0,
            q_b: 0.5,
        };
        match solve_fpe_2d_monsoon(&MonsoonParams::default(), &f, &g) {
            Err(Error::Validation(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
