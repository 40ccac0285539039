//! Euler-Maruyama Monte-Carlo estimates of escape probabilities.
//!
//! Paths are split into fixed-size batches; batch `b` draws from its own
//! ChaCha8 stream `b` of the master seed, so results do not depend on the
//! number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{DynamicalSystem, EscapeBox};
use crate::error::{Error, Result};
use crate::forcing::{ForcingProfile, Sech2Forcing};
use crate::monsoon::{escape_box, stable_equilibrium, MonsoonParams, NOISE};

pub const BATCH: usize = 1000;

/// How initial states are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    Point { state: Vec<f64> },
    /// Independent Gaussians, conditioned to start inside the box.
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
    /// Drawn uniformly (with replacement) from the given states.
    Samples { states: Vec<Vec<f64>> },
}

/// `dy = f(y, q(t)) dt + diag(sqrt(2 D_i)) dW` on `t_span`, absorbed on
/// leaving `domain`.
#[derive(Clone)]
pub struct McSpec {
    pub system: DynamicalSystem,
    pub forcing: ForcingProfile,
    /// Half-variances `D_i`.
    pub noise: Vec<f64>,
    pub domain: EscapeBox,
    pub initial: InitialCondition,
    pub t_span: (f64, f64),
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub p_esc: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub escaped: usize,
}

impl McResult {
    fn from_counts(escaped: usize, n: usize) -> Self {
        let p = escaped as f64 / n as f64;
        McResult {
            p_esc: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n_paths: n,
            escaped,
        }
    }
}

impl McSpec {
    /// Noisy monsoon model driven by an albedo pulse, started at the stable
    /// equilibrium for the initial albedo and absorbed on leaving the model
    /// domain.
    pub fn monsoon(params: &MonsoonParams, weights: [f64; 2], pulse: &Sech2Forcing, dt: f64) -> Result<Self> {
        let y0 = stable_equilibrium(params, pulse.value(0.0))?;
        Ok(McSpec {
            system: params.system(weights),
            forcing: ForcingProfile::Sech2(*pulse),
            noise: NOISE.to_vec(),
            domain: escape_box(),
            initial: InitialCondition::Point { state: y0 },
            t_span: (0.0, pulse.t_end),
            dt,
        })
    }

    /// Canonical SDE `dx = [p0 - p2 t^2 + x^2] dt + sqrt(2) dW` absorbed at
    /// `|x| = x_bd`, started from `N(x0, 1)` at `-T0`.
    pub fn canonical(p0: f64, p2: f64, grid: &super::FpeGrid1D, dt: f64) -> Self {
        let t0 = grid.horizon(p0, p2);
        McSpec {
            system: DynamicalSystem::scalar(|x, p| p + x * x),
            forcing: super::canonical_forcing(p0, p2),
            noise: vec![1.0],
            domain: EscapeBox::cube(1, grid.x_bd),
            initial: InitialCondition::Gaussian {
                mean: vec![grid.x0],
                sd: vec![grid.variance.sqrt()],
            },
            t_span: (-t0, t0),
            dt,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.system.dim();
        let mut p = Vec::new();
        if self.noise.len() != n || self.domain.lower.len() != n {
            p.push(format!("noise and domain must have {n} components"));
        }
        if self.noise.iter().any(|d| !(*d >= 0.0)) {
            p.push("noise half-variances must be nonnegative".into());
        }
        if !(self.dt > 0.0) || !(self.t_span.1 > self.t_span.0) {
            p.push("need dt > 0 and a nonempty time span".into());
        }
        match &self.initial {
            InitialCondition::Point { state } if state.len() != n => p.push("initial point has wrong length".into()),
            InitialCondition::Gaussian { mean, sd } if mean.len() != n || sd.len() != n => {
                p.push("initial Gaussian has wrong length".into())
            }
            InitialCondition::Samples { states } if states.is_empty() || states.iter().any(|s| s.len() != n) => {
                p.push("initial samples are empty or have wrong length".into())
            }
            _ => {}
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    fn draw_initial(&self, rng: &mut ChaCha8Rng, y: &mut [f64]) {
        match &self.initial {
            InitialCondition::Point { state } => y.copy_from_slice(state),
            InitialCondition::Gaussian { mean, sd } => loop {
                for i in 0..y.len() {
                    let z: f64 = rng.sample(StandardNormal);
                    y[i] = mean[i] + sd[i] * z;
                }
                if self.domain.contains(y) {
                    break;
                }
            },
            InitialCondition::Samples { states } => {
                y.copy_from_slice(&states[rng.random_range(0..states.len())]);
            }
        }
    }

    /// Simulate one path; true if it left the domain.
    fn path(&self, rng: &mut ChaCha8Rng, y: &mut [f64], f: &mut [f64], sigma: &[f64], steps: usize) -> bool {
        self.draw_initial(rng, y);
        let dt = (self.t_span.1 - self.t_span.0) / steps as f64;
        let sq = dt.sqrt();
        for k in 0..steps {
            let t = self.t_span.0 + k as f64 * dt;
            self.system.eval_into(y, self.forcing.value(t), f);
            for i in 0..y.len() {
                let z: f64 = if sigma[i] > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                y[i] += f[i] * dt + sigma[i] * sq * z;
            }
            if !self.domain.contains(y) {
                return true;
            }
        }
        false
    }
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

/// Escape fraction and its binomial standard error.
pub fn monte_carlo_escape(spec: &McSpec, n_paths: usize, seed: u64) -> Result<McResult> {
    spec.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be positive".into()));
    }
    let steps = ((spec.t_span.1 - spec.t_span.0) / spec.dt).ceil() as usize;
    let sigma: Vec<f64> = spec.noise.iter().map(|d| (2.0 * d).sqrt()).collect();
    let n_batches = n_paths.div_ceil(BATCH);
    let escaped: usize = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(seed, b);
            let dim = spec.system.dim();
            let (mut y, mut f) = (vec![0.0; dim], vec![0.0; dim]);
            let count = BATCH.min(n_paths - b * BATCH);
            (0..count)
                .filter(|_| spec.path(&mut rng, &mut y, &mut f, &sigma, steps))
                .count()
        })
        .sum();
    Ok(McResult::from_counts(escaped, n_paths))
}

/// Final states of the surviving paths, for seeding later runs.
pub fn surviving_states(spec: &McSpec, n_paths: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let steps = ((spec.t_span.1 - spec.t_span.0) / spec.dt).ceil() as usize;
    let sigma: Vec<f64> = spec.noise.iter().map(|d| (2.0 * d).sqrt()).collect();
    let n_batches = n_paths.div_ceil(BATCH);
    let states: Vec<Vec<Vec<f64>>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(seed, b);
            let dim = spec.system.dim();
            let (mut y, mut f) = (vec![0.0; dim], vec![0.0; dim]);
            let count = BATCH.min(n_paths - b * BATCH);
            let mut out = Vec::new();
            for _ in 0..count {
                if !spec.path(&mut rng, &mut y, &mut f, &sigma, steps) {
                    out.push(y.clone());
                }
            }
            out
        })
        .collect();
    Ok(states.into_iter().flatten().collect())
}

/// One path recorded every `sample_every` steps, starting with the initial
/// state. Recording stops early if the path leaves the domain.
pub fn sample_path(spec: &McSpec, seed: u64, sample_every: usize) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if sample_every == 0 {
        return Err(Error::InvalidInput("sample_every must be positive".into()));
    }
    let steps = ((spec.t_span.1 - spec.t_span.0) / spec.dt).ceil() as usize;
    let dt = (spec.t_span.1 - spec.t_span.0) / steps as f64;
    let sq = dt.sqrt();
    let sigma: Vec<f64> = spec.noise.iter().map(|d| (2.0 * d).sqrt()).collect();
    let mut rng = batch_rng(seed, 0);
    let dim = spec.system.dim();
    let (mut y, mut f) = (vec![0.0; dim], vec![0.0; dim]);
    spec.draw_initial(&mut rng, &mut y);
    let mut out = vec![y.clone()];
    for k in 0..steps {
        let t = spec.t_span.0 + k as f64 * dt;
        spec.system.eval_into(&y, spec.forcing.value(t), &mut f);
        for i in 0..dim {
            let z: f64 = if sigma[i] > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            y[i] += f[i] * dt + sigma[i] * sq * z;
        }
        if !spec.domain.contains(&y) {
            break;
        }
        if (k + 1) % sample_every == 0 {
            out.push(y.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escape::FpeGrid1D;

    #[test]
    fn zero_noise_is_deterministic() {
        let grid = FpeGrid1D::default();
        let mut spec = McSpec::canonical(-1.0, 1.0, &grid, 1e-3);
        spec.noise = vec![0.0];
        spec.initial = InitialCondition::Point { state: vec![-4.0] };
        assert_eq!(monte_carlo_escape(&spec, 200, 1).unwrap().p_esc, 0.0);
        let mut spec = McSpec::canonical(2.0, 1.0, &grid, 1e-3);
        spec.noise = vec![0.0];
        spec.initial = InitialCondition::Point { state: vec![-4.0] };
        assert_eq!(monte_carlo_escape(&spec, 200, 1).unwrap().p_esc, 1.0);
    }

    #[test]
    fn same_seed_same_answer() {
        let spec = McSpec::canonical(0.0, 2.0, &FpeGrid1D::default(), 2e-3);
        let a = monte_carlo_escape(&spec, 1500, 42).unwrap();
        let b = monte_carlo_escape(&spec, 1500, 42).unwrap();
        assert_eq!(a, b);
    }
}
