//! Smooth parameterized ODE systems `y' = f(y, q)` with a scalar output
//! `w^T y`: Jacobians, equilibria, eigenvalues, integration and folds.

mod fold;
mod integrate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use fold::{
    locate_fold, normal_form_coefficients, trace_branch, BranchOptions, BranchPoint, FoldLocation, FoldPoint,
    SignFlips,
};
pub use integrate::{integrate, integrate_with, EscapeBox, IntegrateOptions, Trajectory};

/// Right-hand side `f(y, q)` written into `out`.
pub type RhsFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// An `n`-dimensional system `y' = f(y, q)` with output weights `w`.
#[derive(Clone)]
pub struct DynamicalSystem {
    dim: usize,
    rhs: Arc<RhsFn>,
    weights: Vec<f64>,
}

impl fmt::Debug for DynamicalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicalSystem")
            .field("dim", &self.dim)
            .field("weights", &self.weights)
            .finish_non_exhaustive()
    }
}

impl DynamicalSystem {
    pub fn new<F>(dim: usize, rhs: F, weights: Vec<f64>) -> Result<Self>
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidInput("system dimension must be at least 1".into()));
        }
        check_weights(dim, &weights)?;
        Ok(DynamicalSystem {
            dim,
            rhs: Arc::new(rhs),
            weights,
        })
    }

    /// Scalar system `y' = f(y, q)` with unit output weight.
    pub fn scalar<F>(f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        DynamicalSystem {
            dim: 1,
            rhs: Arc::new(move |y: &[f64], q: f64, out: &mut [f64]| out[0] = f(y[0], q)),
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_weights(self.dim, &weights)?;
        self.weights = weights;
        Ok(self)
    }

    pub fn eval_into(&self, y: &[f64], q: f64, out: &mut [f64]) {
        (self.rhs)(y, q, out)
    }

    pub fn eval(&self, y: &[f64], q: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.rhs)(y, q, &mut out);
        out
    }

    /// Scalar output `w^T y`.
    pub fn output(&self, y: &[f64]) -> f64 {
        dot(&self.weights, y)
    }

    /// Finite-difference step used for derivatives at `y`.
    pub fn fd_step(y: &[f64]) -> f64 {
        1e-6f64.max(1e-6 * inf_norm(y))
    }

    /// Central-difference Jacobian `d_y f(y, q)`.
    pub fn jacobian(&self, y: &[f64], q: f64) -> DMatrix<f64> {
        let n = self.dim;
        let h = Self::fd_step(y);
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            yp[j] = y[j] + h;
            self.eval_into(&yp, q, &mut fp);
            yp[j] = y[j] - h;
            self.eval_into(&yp, q, &mut fm);
            yp[j] = y[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// Central-difference parameter derivative `d_q f(y, q)`.
    pub fn parameter_derivative(&self, y: &[f64], q: f64) -> DVector<f64> {
        let h = 1e-6f64.max(1e-6 * q.abs());
        let fp = self.eval(y, q + h);
        let fm = self.eval(y, q - h);
        DVector::from_iterator(self.dim, fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)))
    }

    /// Second directional derivative `d_y^2 f(y, q)[v, v]`.
    pub fn second_directional(&self, y: &[f64], q: f64, v: &[f64]) -> DVector<f64> {
        let scale = inf_norm(v).max(1e-300);
        // fourth root of machine epsilon balances truncation and rounding
        let h = 1.2e-4 * inf_norm(y).max(1.0) / scale;
        let yp: Vec<f64> = y.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let ym: Vec<f64> = y.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let fp = self.eval(&yp, q);
        let f0 = self.eval(y, q);
        let fm = self.eval(&ym, q);
        DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|i| (fp[i] - 2.0 * f0[i] + fm[i]) / (h * h)),
        )
    }
}

fn check_weights(dim: usize, weights: &[f64]) -> Result<()> {
    if weights.len() != dim {
        return Err(Error::InvalidInput(format!(
            "output weights have length {} but the system has dimension {dim}",
            weights.len()
        )));
    }
    if weights.iter().all(|&w| w == 0.0) || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidInput("output weights must be finite and not all zero".into()));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Leading eigenvalue (largest real part) of a Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadingEigenvalue {
    pub re: f64,
    pub im: f64,
}

impl LeadingEigenvalue {
    /// True when the leading eigenvalue is one of a complex-conjugate pair.
    pub fn is_complex(&self) -> bool {
        self.im.abs() > 1e-12 * self.re.abs().max(1.0)
    }
}

/// All eigenvalues sorted by decreasing real part.
pub fn eigenvalues(jac: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = jac.clone().complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    ev.sort_by(|a, b| b.0.total_cmp(&a.0));
    ev
}

/// Eigenvalue of `d_y f(y, q)` with the largest real part.
pub fn leading_eigenvalue(system: &DynamicalSystem, y: &[f64], q: f64) -> LeadingEigenvalue {
    let (re, im) = eigenvalues(&system.jacobian(y, q))[0];
    LeadingEigenvalue { re, im }
}

/// Equilibrium residual tolerance (infinity norm of `f`).
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// Newton iteration for `f(y, q) = 0` starting from `guess`.
pub fn find_equilibrium(system: &DynamicalSystem, q: f64, guess: &[f64]) -> Result<Vec<f64>> {
    if guess.len() != system.dim() {
        return Err(Error::InvalidInput(format!(
            "guess has length {} but the system has dimension {}",
            guess.len(),
            system.dim()
        )));
    }
    let mut y = guess.to_vec();
    let mut f = system.eval(&y, q);
    let mut res = inf_norm(&f);
    for _ in 0..50 {
        if res <= EQUILIBRIUM_TOL {
            return Ok(y);
        }
        let jac = system.jacobian(&y, q);
        let step = solve_checked(jac, DVector::from_column_slice(&f)).ok_or(Error::JacobianSingular { q })?;
        // damped update: halve until the residual does not grow
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
            let ft = system.eval(&trial, q);
            let rt = inf_norm(&ft);
            if rt.is_finite() && (rt < res || lambda < 1e-3) {
                y = trial;
                f = ft;
                res = rt;
                break;
            }
            lambda *= 0.5;
        }
        if !res.is_finite() {
            break;
        }
    }
    if res <= EQUILIBRIUM_TOL {
        Ok(y)
    } else {
        Err(Error::NewtonDiverged {
            iterations: 50,
            residual: res,
        })
    }
}

/// Solve `a x = b`, refusing numerically singular matrices.
pub(crate) fn solve_checked(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin <= 1e-13 * smax {
        return None;
    }
    a.lu().solve(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> DynamicalSystem {
        DynamicalSystem::scalar(|y, q| q - y * y)
    }

    #[test]
    fn jacobian_matches_analytic() {
        let sys = quadratic();
        for k in 0..=40 {
            let y = -2.0 + 0.1 * k as f64;
            let j = sys.jacobian(&[y], 0.3)[(0, 0)];
            assert!((j + 2.0 * y).abs() <= 1e-6, "y = {y}: {j}");
        }
    }

    #[test]
    fn equilibria_of_quadratic() {
        let sys = quadratic();
        let y = find_equilibrium(&sys, 1.0, &[0.9]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10);
        let y = find_equilibrium(&sys, 1.0, &[-0.9]).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn leading_eigenvalues_of_quadratic() {
        let sys = quadratic();
        assert!((leading_eigenvalue(&sys, &[1.0], 1.0).re + 2.0).abs() < 1e-8);
        assert!((leading_eigenvalue(&sys, &[0.5], 0.25).re + 1.0).abs() < 1e-8);
    }

    #[test]
    fn newton_reports_missing_root() {
        let sys = quadratic();
        let err = find_equilibrium(&sys, -1.0, &[0.5]).unwrap_err();
        assert!(matches!(err, Error::NewtonDiverged { .. } | Error::JacobianSingular { .. }));
    }

    #[test]
    fn complex_pair_is_flagged() {
        let sys = DynamicalSystem::new(
            2,
            |y, _q, out| {
                out[0] = -0.1 * y[0] - y[1];
                out[1] = y[0] - 0.1 * y[1];
            },
            vec![1.0, 0.0],
        )
        .unwrap();
        let ev = leading_eigenvalue(&sys, &[0.0, 0.0], 0.0);
        assert!(ev.is_complex());
        assert!((ev.re + 0.1).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(DynamicalSystem::new(2, |_, _, _| {}, vec![0.0, 0.0]).is_err());
        assert!(DynamicalSystem::new(2, |_, _, _| {}, vec![1.0]).is_err());
        assert!(DynamicalSystem::new(0, |_, _, _| {}, vec![]).is_err());
    }
}
