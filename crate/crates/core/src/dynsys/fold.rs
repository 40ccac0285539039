use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{dot, eigenvalues, find_equilibrium, inf_norm, leading_eigenvalue, solve_checked, DynamicalSystem};
use crate::error::{Error, Result};

/// A point on an equilibrium branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub q: f64,
    pub y: Vec<f64>,
    /// Real part of the leading eigenvalue.
    pub lambda: f64,
    pub stable: bool,
}

#[derive(Debug, Clone)]
pub struct BranchOptions {
    /// Continuation stops once `q` leaves `[q_min, q_max]`.
    pub q_min: f64,
    pub q_max: f64,
    /// Sign of the initial parameter direction.
    pub direction: f64,
    /// Arclength steps, measured in variables scaled by their initial size.
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
}

impl BranchOptions {
    pub fn new(q_min: f64, q_max: f64, direction: f64) -> Self {
        BranchOptions {
            q_min,
            q_max,
            direction: direction.signum(),
            ds_init: 1e-2,
            ds_min: 1e-9,
            ds_max: 5e-2,
            max_points: 20_000,
        }
    }
}

/// Pseudo-arclength continuation in scaled variables `u = (y, q) / scale`.
struct Continuation<'a> {
    system: &'a DynamicalSystem,
    scale: Vec<f64>,
    u: Vec<f64>,
    tangent: Vec<f64>,
    ds: f64,
    ds_min: f64,
    ds_max: f64,
}

impl<'a> Continuation<'a> {
    fn new(system: &'a DynamicalSystem, y: &[f64], q: f64, direction: f64, ds: f64, ds_min: f64, ds_max: f64) -> Result<Self> {
        let n = system.dim();
        let mut scale: Vec<f64> = y.iter().map(|v| v.abs().max(1e-3)).collect();
        scale.push(q.abs().max(1e-3));
        let mut u: Vec<f64> = y.iter().zip(&scale).map(|(a, s)| a / s).collect();
        u.push(q / scale[n]);
        let mut seed = vec![0.0; n + 1];
        seed[n] = direction;
        let mut c = Continuation {
            system,
            scale,
            u,
            tangent: seed.clone(),
            ds,
            ds_min,
            ds_max,
        };
        c.tangent = c.tangent_at(&c.u.clone(), &seed).ok_or(Error::JacobianSingular { q })?;
        Ok(c)
    }

    fn unscale(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let n = self.system.dim();
        let y = (0..n).map(|i| u[i] * self.scale[i]).collect();
        (y, u[n] * self.scale[n])
    }

    fn y(&self) -> Vec<f64> {
        self.unscale(&self.u).0
    }

    fn q(&self) -> f64 {
        self.unscale(&self.u).1
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let (y, q) = self.unscale(u);
        self.system.eval(&y, q)
    }

    /// `n x (n+1)` Jacobian of the scaled residual.
    fn jac(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.system.dim();
        let (y, q) = self.unscale(u);
        let jy = self.system.jacobian(&y, q);
        let fq = self.system.parameter_derivative(&y, q);
        let mut m = DMatrix::zeros(n, n + 1);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = jy[(i, j)] * self.scale[j];
            }
            m[(i, n)] = fq[i] * self.scale[n];
        }
        m
    }

    fn tangent_at(&self, u: &[f64], prev: &[f64]) -> Option<Vec<f64>> {
        let n = self.system.dim();
        let j = self.jac(u);
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n + 1)).copy_from(&j);
        for k in 0..=n {
            m[(n, k)] = prev[k];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let t = solve_checked(m, rhs)?;
        let norm = t.norm();
        let mut t: Vec<f64> = t.iter().map(|v| v / norm).collect();
        if dot(&t, prev) < 0.0 {
            t.iter_mut().for_each(|v| *v = -*v);
        }
        Some(t)
    }

    fn correct(&self, pred: &[f64], tangent: &[f64]) -> Option<(Vec<f64>, usize)> {
        let n = self.system.dim();
        let mut u = pred.to_vec();
        for it in 1..=10 {
            let f = self.residual(&u);
            let mut g = DVector::zeros(n + 1);
            for i in 0..n {
                g[i] = f[i];
            }
            g[n] = (0..=n).map(|k| tangent[k] * (u[k] - pred[k])).sum();
            let mut m = DMatrix::zeros(n + 1, n + 1);
            m.view_mut((0, 0), (n, n + 1)).copy_from(&self.jac(&u));
            for k in 0..=n {
                m[(n, k)] = tangent[k];
            }
            let du = solve_checked(m, g)?;
            for k in 0..=n {
                u[k] -= du[k];
            }
            if du.amax() <= 1e-11 * inf_norm(&u).max(1.0) {
                let res = inf_norm(&self.residual(&u));
                return (res <= 1e-8).then_some((u, it));
            }
        }
        None
    }

    /// Advance one step along the branch. Returns false when the step size
    /// has collapsed.
    fn step(&mut self) -> bool {
        loop {
            if self.ds < self.ds_min {
                return false;
            }
            let pred: Vec<f64> = self.u.iter().zip(&self.tangent).map(|(a, t)| a + self.ds * t).collect();
            if let Some((u, iters)) = self.correct(&pred, &self.tangent) {
                if let Some(t) = self.tangent_at(&u, &self.tangent) {
                    if dot(&t, &self.tangent) > 0.9 {
                        self.u = u;
                        self.tangent = t;
                        if iters <= 3 {
                            self.ds = (1.5 * self.ds).min(self.ds_max);
                        }
                        return true;
                    }
                }
            }
            self.ds *= 0.5;
        }
    }

    fn point(&self) -> BranchPoint {
        let (y, q) = self.unscale(&self.u);
        let lambda = leading_eigenvalue(self.system, &y, q).re;
        BranchPoint {
            q,
            y,
            lambda,
            stable: lambda < 0.0,
        }
    }

    /// Parameter component of the tangent.
    fn dq(&self) -> f64 {
        self.tangent[self.system.dim()]
    }
}

/// Trace the equilibrium branch through `(y0, q0)` by pseudo-arclength
/// continuation, passing around folds, until `q` leaves the requested range.
pub fn trace_branch(system: &DynamicalSystem, y0: &[f64], q0: f64, opts: &BranchOptions) -> Result<Vec<BranchPoint>> {
    let y = find_equilibrium(system, q0, y0)?;
    let mut cont = Continuation::new(system, &y, q0, opts.direction, opts.ds_init, opts.ds_min, opts.ds_max)?;
    let mut points = vec![cont.point()];
    while points.len() < opts.max_points {
        if !cont.step() {
            break;
        }
        let q = cont.q();
        if q < opts.q_min || q > opts.q_max || !inf_norm(&cont.y()).is_finite() {
            break;
        }
        points.push(cont.point());
    }
    Ok(points)
}

/// Sign changes applied so that `a0 > 0` and `kappa > 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignFlips {
    /// Output weights (and hence `v0`, `w0`) were negated.
    pub output: bool,
    /// The parameter direction was reversed (`q -> -q`).
    pub parameter: bool,
}

/// Fold location with nullvectors, before normal-form coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLocation {
    pub y_b: Vec<f64>,
    pub q_b: f64,
    /// Right nullvector with `w^T v0 = 1`.
    pub v0: Vec<f64>,
    /// Left nullvector with `w0^T v0 = 1`.
    pub w0: Vec<f64>,
    /// Leading eigenvalue of the Jacobian at the fold (zero up to tolerance).
    pub lambda_b: f64,
    /// Real parts of the remaining eigenvalues.
    pub other_eigenvalues: Vec<f64>,
    /// Output weights the nullvectors were scaled against.
    pub weights: Vec<f64>,
}

/// A fold with its normal-form coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub y_b: Vec<f64>,
    pub q_b: f64,
    pub v0: Vec<f64>,
    pub w0: Vec<f64>,
    pub a0: f64,
    pub kappa: f64,
    /// `4 a0^2 kappa`.
    pub d_b: f64,
    /// Extrapolated limit of `lambda(q)^2 / |q_b - q|` from the stable side.
    pub d_b_limit: f64,
    /// `(|q_b - q|, lambda^2 / |q_b - q|)` samples behind `d_b_limit`.
    pub d_b_samples: Vec<(f64, f64)>,
    pub flips: SignFlips,
    pub lambda_b: f64,
    pub other_eigenvalues: Vec<f64>,
}

impl FoldPoint {
    /// Relative disagreement of the two routes to `d_b`.
    pub fn d_b_discrepancy(&self) -> f64 {
        (self.d_b - self.d_b_limit).abs() / self.d_b
    }

    /// Sign of the parameter offset towards the side where the stable
    /// equilibrium exists.
    pub fn stable_side(&self) -> f64 {
        if self.flips.parameter {
            1.0
        } else {
            -1.0
        }
    }

    /// Exceedance of `q` over `q_b` measured in the oriented parameter.
    pub fn exceedance(&self, q: f64) -> f64 {
        -self.stable_side() * (q - self.q_b)
    }
}

/// Locate the fold that ends the stable branch starting at `q_bracket.0`,
/// continuing towards `q_bracket.1`.
pub fn locate_fold(system: &DynamicalSystem, q_bracket: (f64, f64), guess: &[f64]) -> Result<FoldLocation> {
    let (q_start, q_end) = q_bracket;
    let no_fold = Error::NoFoldInBracket {
        start: q_start,
        end: q_end,
    };
    if q_start == q_end {
        return Err(no_fold);
    }
    let direction = (q_end - q_start).signum();
    let y = find_equilibrium(system, q_start, guess)?;
    if leading_eigenvalue(system, &y, q_start).re >= 0.0 {
        return Err(Error::FoldAssumption(format!("equilibrium at q = {q_start} is not stable")));
    }
    let span = (q_end - q_start).abs();
    let ds0 = (0.02 * span / q_start.abs().max(1e-3)).min(1e-2);
    let mut cont = Continuation::new(system, &y, q_start, direction, ds0, 1e-12, 20.0 * ds0)?;
    let mut best = (cont.u.clone(), cont.tangent.clone());
    let mut turned = false;
    for _ in 0..100_000 {
        if !cont.step() {
            break;
        }
        let q = cont.q();
        if cont.dq() * direction <= 0.0 {
            turned = true;
            break;
        }
        if (q - q_start) * direction > span {
            return Err(no_fold);
        }
        best = (cont.u.clone(), cont.tangent.clone());
    }
    if !turned {
        return Err(no_fold);
    }
    // start the refinement from the extreme point of the traced branch
    let (y_guess, q_guess) = if (cont.q() - cont.unscale(&best.0).1) * direction > 0.0 {
        (cont.y(), cont.q())
    } else {
        cont.unscale(&best.0)
    };
    if (q_guess - q_start) * direction > span {
        return Err(no_fold);
    }
    let (y_b, q_b, v) = refine_fold(system, &y_guess, q_guess)?;
    if (q_b - q_start) * direction > span || (q_b - q_start) * direction < 0.0 {
        return Err(no_fold);
    }
    build_location(system, y_b, q_b, v)
}

/// Newton on `{f(y,q) = 0, J(y,q) v = 0, c^T v = 1}`.
fn refine_fold(system: &DynamicalSystem, y0: &[f64], q0: f64) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let n = system.dim();
    let jac0 = system.jacobian(y0, q0);
    let svd = jac0.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let imin = svd.singular_values.imin();
    let c: Vec<f64> = vt.row(imin).iter().copied().collect();

    let m = 2 * n + 1;
    let residual = |z: &[f64]| -> Vec<f64> {
        let y = &z[..n];
        let q = z[n];
        let v = &z[n + 1..];
        let mut r = system.eval(y, q);
        let jv = system.jacobian(y, q) * DVector::from_column_slice(v);
        r.extend(jv.iter());
        r.push(dot(&c, v) - 1.0);
        r
    };

    let mut z: Vec<f64> = y0.to_vec();
    z.push(q0);
    z.extend(&c);
    let mut res = residual(&z);
    let mut last_norm = f64::INFINITY;
    for _ in 0..40 {
        let hy = DynamicalSystem::fd_step(&z[..n]);
        let hq = 1e-6f64.max(1e-6 * z[n].abs());
        let mut jm = DMatrix::zeros(m, m);
        for k in 0..m {
            let h = if k < n {
                hy
            } else if k == n {
                hq
            } else {
                1e-6
            };
            let mut zp = z.clone();
            zp[k] += h;
            let rp = residual(&zp);
            zp[k] = z[k] - h;
            let rm = residual(&zp);
            for i in 0..m {
                jm[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let dz = match jm.lu().solve(&DVector::from_column_slice(&res)) {
            Some(d) => d,
            None => return Err(Error::DegenerateFold("augmented fold system is singular".into())),
        };
        for k in 0..m {
            z[k] -= dz[k];
        }
        res = residual(&z);
        let step = dz.amax() / inf_norm(&z).max(1.0);
        if step <= 1e-13 || (step <= 1e-9 && step >= last_norm) {
            break;
        }
        last_norm = step;
    }
    let f_res = inf_norm(&res[..n]);
    if !(f_res <= 1e-8) {
        return Err(Error::NewtonDiverged {
            iterations: 40,
            residual: f_res,
        });
    }
    Ok((z[..n].to_vec(), z[n], z[n + 1..].to_vec()))
}

fn build_location(system: &DynamicalSystem, y_b: Vec<f64>, q_b: f64, v: Vec<f64>) -> Result<FoldLocation> {
    let jac = system.jacobian(&y_b, q_b);
    let ev = eigenvalues(&jac);
    // the eigenvalue closest to zero belongs to the fold
    let (izero, _) = ev
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.hypot(a.1 .1).total_cmp(&b.1 .0.hypot(b.1 .1)))
        .expect("nonempty spectrum");
    let lambda_b = ev[izero].0;
    let other: Vec<f64> = ev
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != izero)
        .map(|(_, e)| e.0)
        .collect();
    if let Some(bad) = other.iter().find(|&&re| re >= 0.0) {
        return Err(Error::FoldAssumption(format!(
            "a second eigenvalue with nonnegative real part ({bad}) at the fold"
        )));
    }

    let svd = jac.transpose().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut w0: Vec<f64> = vt.row(svd.singular_values.imin()).iter().copied().collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut v0: Vec<f64> = v.iter().map(|x| x / norm).collect();

    let s = dot(&w0, &v0);
    if s.abs() < 1e-12 {
        return Err(Error::DegenerateFold("left and right nullvectors are orthogonal".into()));
    }
    w0.iter_mut().for_each(|x| *x /= s);
    let weights = system.weights().to_vec();
    let alpha = dot(&weights, &v0);
    if alpha.abs() < 1e-10 * inf_norm(&weights) {
        return Err(Error::FoldAssumption("output weights do not observe the critical direction".into()));
    }
    v0.iter_mut().for_each(|x| *x /= alpha);
    w0.iter_mut().for_each(|x| *x *= alpha);

    Ok(FoldLocation {
        y_b,
        q_b,
        v0,
        w0,
        lambda_b,
        other_eigenvalues: other,
        weights,
    })
}

/// Degeneracy threshold for `a0` and `kappa`.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Fill in `a0`, `kappa` and `d_b` (two routes) for a located fold.
pub fn normal_form_coefficients(system: &DynamicalSystem, fold: &FoldLocation) -> Result<FoldPoint> {
    let fq = system.parameter_derivative(&fold.y_b, fold.q_b);
    let fyy = system.second_directional(&fold.y_b, fold.q_b, &fold.v0);
    let mut a0 = dot(&fold.w0, fq.as_slice());
    if a0.abs() < DEGENERACY_TOL {
        return Err(Error::DegenerateFold(format!("parameter transversality a0 = {a0:e}")));
    }
    let mut kappa = dot(&fold.w0, fyy.as_slice()) / (2.0 * a0);
    if kappa.abs() < DEGENERACY_TOL {
        return Err(Error::DegenerateFold(format!("quadratic coefficient kappa = {kappa:e}")));
    }
    let mut flips = SignFlips::default();
    let mut v0 = fold.v0.clone();
    let mut w0 = fold.w0.clone();
    if kappa < 0.0 {
        flips.parameter = true;
        a0 = -a0;
        kappa = -kappa;
    }
    if a0 < 0.0 {
        flips.output = true;
        a0 = -a0;
        v0.iter_mut().for_each(|x| *x = -*x);
        w0.iter_mut().for_each(|x| *x = -*x);
    }
    let d_b = 4.0 * a0 * a0 * kappa;

    let mut point = FoldPoint {
        y_b: fold.y_b.clone(),
        q_b: fold.q_b,
        v0,
        w0,
        a0,
        kappa,
        d_b,
        d_b_limit: f64::NAN,
        d_b_samples: Vec::new(),
        flips,
        lambda_b: fold.lambda_b,
        other_eigenvalues: fold.other_eigenvalues.clone(),
    };
    let base = if fold.q_b.abs() > 1e-12 { fold.q_b.abs() } else { 1.0 };
    let side = point.stable_side();
    let mut samples = Vec::with_capacity(3);
    for frac in [1e-3, 5e-4, 2.5e-4] {
        let delta = frac * base;
        let q = fold.q_b + side * delta;
        let y = stable_equilibrium_near_fold(system, &point, q, delta)?;
        let lambda = leading_eigenvalue(system, &y, q).re;
        samples.push((delta, lambda * lambda / delta));
    }
    point.d_b_limit = richardson_sqrt(samples[0].1, samples[1].1, samples[2].1);
    point.d_b_samples = samples;
    Ok(point)
}

/// Extrapolate `g(h) = g0 + c1 sqrt(h) + c2 h + ...` from samples at
/// `h`, `h/2`, `h/4`: first remove the `sqrt(h)` term, then the `h` term.
fn richardson_sqrt(f1: f64, f2: f64, f3: f64) -> f64 {
    let r = std::f64::consts::SQRT_2;
    let g1 = (r * f2 - f1) / (r - 1.0);
    let g2 = (r * f3 - f2) / (r - 1.0);
    2.0 * g2 - g1
}

fn stable_equilibrium_near_fold(system: &DynamicalSystem, fold: &FoldPoint, q: f64, delta: f64) -> Result<Vec<f64>> {
    // in normal-form coordinates the stable equilibrium sits at x = -sqrt(delta / kappa)
    let amp = (delta / fold.kappa).sqrt();
    let mut last_err = None;
    for sign in [-1.0, 1.0] {
        let guess: Vec<f64> = fold.y_b.iter().zip(&fold.v0).map(|(y, v)| y + sign * amp * v).collect();
        match find_equilibrium(system, q, &guess) {
            Ok(y) => {
                let moved = y.iter().zip(&fold.y_b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if leading_eigenvalue(system, &y, q).re < 0.0 && moved > 0.0 {
                    return Ok(y);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::FoldAssumption(format!("no stable equilibrium found at q = {q}"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_removes_sqrt_and_linear_terms() {
        let g = |h: f64| 3.0 + 0.7 * h.sqrt() - 2.0 * h;
        let h = 1e-2;
        assert!((richardson_sqrt(g(h), g(h / 2.0), g(h / 4.0)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_fold() {
        let sys = DynamicalSystem::scalar(|y, q| q - y * y);
        let loc = locate_fold(&sys, (1.0, -1.0), &[1.0]).unwrap();
        assert!(loc.y_b[0].abs() < 1e-6, "{loc:?}");
        assert!(loc.q_b.abs() < 1e-10);
        assert!((loc.v0[0] - 1.0).abs() < 1e-12);
        assert!((loc.w0[0] - 1.0).abs() < 1e-12);
        let fp = normal_form_coefficients(&sys, &loc).unwrap();
        assert!((fp.a0 - 1.0).abs() < 1e-6);
        assert!((fp.kappa - 1.0).abs() < 1e-6);
        assert!((fp.d_b - 4.0).abs() < 1e-5);
        assert!((fp.d_b_limit - 4.0).abs() < 1e-3, "{fp:?}");
        assert!(fp.flips.parameter && fp.flips.output);
    }

    #[test]
    fn positive_orientation_needs_no_flip() {
        let sys = DynamicalSystem::scalar(|y, q| q + y * y);
        let loc = locate_fold(&sys, (-1.0, 1.0), &[-1.0]).unwrap();
        let fp = normal_form_coefficients(&sys, &loc).unwrap();
        assert_eq!(fp.flips, SignFlips::default());
        assert!((fp.d_b - 4.0).abs() < 1e-5);
        assert_eq!(fp.stable_side(), -1.0);
    }

    #[test]
    fn missing_fold_is_reported() {
        let sys = DynamicalSystem::scalar(|y, q| q - y * y);
        let err = locate_fold(&sys, (4.0, 1.0), &[2.0]).unwrap_err();
        assert_eq!(err.kind(), "no-fold-in-bracket");
    }

    #[test]
    fn branch_goes_around_the_fold() {
        let sys = DynamicalSystem::scalar(|y, q| q - y * y);
        let pts = trace_branch(&sys, &[1.0], 1.0, &BranchOptions::new(0.0, 1.0, -1.0)).unwrap();
        assert!(pts.first().unwrap().stable);
        let last = pts.last().unwrap();
        assert!(!last.stable && last.y[0] < -0.5, "{last:?}");
        for p in &pts {
            assert!((p.q - p.y[0] * p.y[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_fold_rejected() {
        // the parameter barely enters, so a0 is below the tolerance
        let sys = DynamicalSystem::scalar(|y, q| 1e-12 * q - y * y);
        let loc = FoldLocation {
            y_b: vec![0.0],
            q_b: 0.0,
            v0: vec![1.0],
            w0: vec![1.0],
            lambda_b: 0.0,
            other_eigenvalues: vec![],
            weights: vec![1.0],
        };
        assert_eq!(normal_form_coefficients(&sys, &loc).unwrap_err().kind(), "degenerate-fold");
    }
}
