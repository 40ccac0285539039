//! Small numerical kernels shared by the solvers: tridiagonal solves,
//! exponentially fitted fluxes and adaptive quadrature.

/// Bernoulli function `z / (exp(z) - 1)`, evaluated without cancellation.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - 0.5 * z + z * z / 12.0
    } else if z > 700.0 {
        z * (-z).exp()
    } else {
        z / z.exp_m1()
    }
}

/// Tridiagonal matrix in diagonal storage. Row `i` reads
/// `lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `out = self * x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    /// Solve `self * x = rhs` in place (Thomas algorithm). `scratch` must have
    /// length `n`. Returns false on a zero pivot.
    pub fn solve_in_place(&self, rhs: &mut [f64], scratch: &mut [f64]) -> bool {
        let n = self.len();
        if n == 0 {
            return true;
        }
        let mut beta = self.diag[0];
        if beta == 0.0 {
            return false;
        }
        rhs[0] /= beta;
        for i in 1..n {
            scratch[i] = self.upper[i - 1] / beta;
            beta = self.diag[i] - self.lower[i] * scratch[i];
            if beta == 0.0 {
                return false;
            }
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i + 1] * rhs[i + 1];
        }
        true
    }
}

/// Assemble the interior operator of a 1D Fokker-Planck equation
/// `u_t = -(a u - d u_x)_x` on a uniform grid with homogeneous Dirichlet
/// values at both ends, using exponentially fitted (Scharfetter-Gummel)
/// fluxes. `face_drift[k]` is the drift at the face between interior
/// unknowns `k-1` and `k` (so it has `n + 1` entries for `n` unknowns;
/// faces 0 and n touch the boundary nodes).
pub fn fokker_planck_operator(face_drift: &[f64], diffusion: f64, h: f64, op: &mut Tridiagonal) {
    let n = face_drift.len() - 1;
    debug_assert_eq!(op.len(), n);
    let scale = diffusion / (h * h);
    for k in 0..n {
        let left = face_drift[k] * h / diffusion;
        let right = face_drift[k + 1] * h / diffusion;
        // flux at right face: (d/h) [B(-z) u_k - B(z) u_{k+1}]
        op.diag[k] = -scale * (bernoulli(-right) + bernoulli(left));
        op.upper[k] = scale * bernoulli(right);
        op.lower[k] = scale * bernoulli(-left);
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance `rtol`
/// (with an absolute floor `atol`).
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rtol: f64, atol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    // Coarse pass to set the tolerance scale and avoid missing narrow peaks.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    let mut coarse = Vec::with_capacity(pieces);
    let mut total_abs = 0.0;
    for k in 0..pieces {
        let lo = a + k as f64 * h;
        let hi = if k + 1 == pieces { b } else { lo + h };
        let flo = f(lo);
        let fhi = f(hi);
        let (m, fm, s) = simpson(f, lo, flo, hi, fhi);
        total_abs += s.abs();
        coarse.push((lo, flo, hi, fhi, m, fm, s));
    }
    let tol = (rtol * total_abs).max(atol) / pieces as f64;
    coarse
        .into_iter()
        .map(|(lo, flo, hi, fhi, m, fm, s)| recurse(f, lo, flo, hi, fhi, m, fm, s, tol, 40))
        .sum()
}

/// Bisection for a sign change of `f` on `[a, b]`; `fa` must be `f(a)`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, rtol: f64) -> f64 {
    let mut fa = f(a);
    let scale = a.abs().max(b.abs()).max(1e-300);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= rtol * scale {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_limits() {
        assert!((bernoulli(0.0) - 1.0).abs() < 1e-15);
        assert!((bernoulli(1e-3) - 1e-3 / (1e-3f64).exp_m1()).abs() < 1e-12);
        // B(-z) - B(z) = z
        for z in [-30.0, -2.0, 0.5, 7.0] {
            assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-12 * z.abs().max(1.0));
        }
        assert!(bernoulli(800.0) >= 0.0);
    }

    #[test]
    fn thomas_matches_dense() {
        let n = 6;
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = 4.0 + i as f64;
            t.lower[i] = -1.0 - 0.1 * i as f64;
            t.upper[i] = -0.5;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut b = vec![0.0; n];
        t.mul_vec(&x, &mut b);
        let mut scratch = vec![0.0; n];
        assert!(t.solve_in_place(&mut b, &mut scratch));
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn simpson_gaussian() {
        let v = integrate_adaptive(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-10, 1e-14);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn zero_drift_operator_is_laplacian() {
        let mut op = Tridiagonal::zeros(3);
        fokker_planck_operator(&[0.0; 4], 2.0, 0.5, &mut op);
        assert!((op.diag[1] + 16.0).abs() < 1e-12);
        assert!((op.upper[1] - 8.0).abs() < 1e-12);
        assert!((op.lower[1] - 8.0).abs() < 1e-12);
    }
}
