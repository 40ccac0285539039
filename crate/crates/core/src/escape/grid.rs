//! Escape probabilities over a grid of exceedance amplitudes and times.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fpe1d::{solve_fpe_1d, FpeGrid1D};
use super::mode::{mode_approx, ModeFit, RateModel};
use super::montecarlo::{monte_carlo_escape, McSpec};
use super::xbar::parabolic_xbar;
use super::{axes_to_canonical, deterministic_boundary};
use crate::error::{Error, Result};
use crate::numerics::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EscapeMethod {
    Fpe,
    Mode,
    MonteCarlo,
    Fpe2d,
}

impl EscapeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EscapeMethod::Fpe => "fpe",
            EscapeMethod::Mode => "mode",
            EscapeMethod::MonteCarlo => "monte-carlo",
            EscapeMethod::Fpe2d => "fpe2d",
        }
    }
}

/// One node of an escape grid. `axis1` is the exceedance amplitude and
/// `axis2` the exceedance time over the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    pub axis1: f64,
    pub axis2: f64,
    pub p0: f64,
    pub p2: f64,
    pub prob: Option<f64>,
    /// Standard error, for Monte-Carlo nodes.
    pub std_error: Option<f64>,
    /// False when the method does not apply at this node (mode
    /// approximation beyond its validity region) or the node failed.
    pub valid: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeGrid {
    pub method: EscapeMethod,
    pub threshold: f64,
    pub nodes: Vec<GridNode>,
    /// Nodes left uncomputed because the time budget ran out.
    pub skipped: usize,
}

impl EscapeGrid {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "axis1,axis2,p0,p2,prob,method,valid")?;
        for n in &self.nodes {
            let prob = n.prob.map(|p| format!("{p:.10e}")).unwrap_or_else(|| "nan".into());
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                n.axis1,
                n.axis2,
                n.p0,
                n.p2,
                prob,
                self.method.as_str(),
                n.valid
            )?;
        }
        Ok(())
    }

    pub fn budget_error(&self) -> Option<Error> {
        (self.skipped > 0).then(|| Error::BudgetExceeded {
            completed: self.nodes.len() - self.skipped,
            total: self.nodes.len(),
        })
    }
}

/// Canonical grid over `(R, t_e)` with `p0 = threshold + R`,
/// `p2 = 4 R / t_e^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub threshold: f64,
    pub r: Vec<f64>,
    pub t_e: Vec<f64>,
    pub method: EscapeMethod,
    pub fpe: FpeGrid1D,
    pub rate: RateModel,
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            threshold: -1.0,
            r: linspace(0.1, 3.0, 30),
            t_e: linspace(1.0, 5.0, 41),
            method: EscapeMethod::Fpe,
            fpe: FpeGrid1D::default(),
            rate: ModeFit::published().into(),
            mc_paths: 100_000,
            mc_dt: 1e-3,
            seed: 0,
        }
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Evaluate one canonical node with the chosen method.
pub fn canonical_node(spec: &GridSpec, r: f64, t_e: f64) -> GridNode {
    let (p0, p2) = axes_to_canonical(spec.threshold, r, t_e);
    let mut node = GridNode {
        axis1: r,
        axis2: t_e,
        p0,
        p2,
        prob: None,
        std_error: None,
        valid: false,
        error: None,
    };
    let outcome: Result<()> = (|| {
        match spec.method {
            EscapeMethod::Fpe => {
                node.prob = Some(solve_fpe_1d(p0, p2, &spec.fpe)?.p_esc);
                node.valid = true;
            }
            EscapeMethod::Mode => {
                let m = mode_approx(p0, p2, &spec.rate)?;
                node.prob = Some(m.probability);
                node.valid = m.valid;
            }
            EscapeMethod::MonteCarlo => {
                let mc = monte_carlo_escape(&McSpec::canonical(p0, p2, &spec.fpe, spec.mc_dt), spec.mc_paths, spec.seed)?;
                node.prob = Some(mc.p_esc);
                node.std_error = Some(mc.std_error);
                node.valid = true;
            }
            EscapeMethod::Fpe2d => {
                return Err(Error::InvalidInput("the 2D solver needs the monsoon model".into()));
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        node.error = Some(e.to_string());
        node.valid = false;
    }
    node
}

/// Evaluate the grid in parallel; nodes not started before `budget`
/// elapses are left empty and counted in `skipped`.
pub fn escape_grid_1d(spec: &GridSpec, budget: Option<Duration>) -> Result<EscapeGrid> {
    if spec.r.is_empty() || spec.t_e.is_empty() {
        return Err(Error::InvalidInput("grid axes must be nonempty".into()));
    }
    let mut bad: Vec<String> = spec
        .r
        .iter()
        .filter(|r| !(**r > 0.0))
        .map(|r| format!("amplitude {r} must be positive"))
        .collect();
    bad.extend(spec.t_e.iter().filter(|t| !(**t > 0.0)).map(|t| format!("exceedance time {t} must be positive")));
    bad.extend(spec.fpe.validate());
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let start = Instant::now();
    let pairs: Vec<(f64, f64)> = spec
        .r
        .iter()
        .flat_map(|&r| spec.t_e.iter().map(move |&t| (r, t)))
        .collect();
    let nodes: Vec<(GridNode, bool)> = pairs
        .par_iter()
        .map(|&(r, t_e)| {
            if budget.is_some_and(|b| start.elapsed() > b) {
                let (p0, p2) = axes_to_canonical(spec.threshold, r, t_e);
                let node = GridNode {
                    axis1: r,
                    axis2: t_e,
                    p0,
                    p2,
                    prob: None,
                    std_error: None,
                    valid: false,
                    error: Some("time budget exceeded".into()),
                };
                (node, true)
            } else {
                (canonical_node(spec, r, t_e), false)
            }
        })
        .collect();
    let skipped = nodes.iter().filter(|n| n.1).count();
    Ok(EscapeGrid {
        method: spec.method,
        threshold: spec.threshold,
        nodes: nodes.into_iter().map(|n| n.0).collect(),
        skipped,
    })
}

/// Exceedance time at which the connecting orbit first touches zero, for
/// amplitude `r`. `None` if the orbit stays negative up to the
/// deterministic boundary (or there is no boundary).
pub fn mode_validity_boundary(threshold: f64, r: f64) -> Option<f64> {
    let t_det = deterministic_boundary(threshold, r)?;
    let max_x = |t_e: f64| {
        let (p0, p2) = axes_to_canonical(threshold, r, t_e);
        parabolic_xbar(p0, p2).map(|x| x.max_xbar).unwrap_or(f64::INFINITY)
    };
    let mut lo = 0.5 * t_det;
    let mut k = 0;
    while max_x(lo) >= 0.0 {
        lo *= 0.5;
        k += 1;
        if k > 30 {
            return None;
        }
    }
    if max_x(t_det) < 0.0 {
        return None;
    }
    Some(bisect(max_x, lo, t_det, 1e-8))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_header() {
        let spec = GridSpec {
            r: vec![1.0],
            t_e: vec![2.0],
            method: EscapeMethod::Mode,
            ..Default::default()
        };
        let g = escape_grid_1d(&spec, None).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("axis1,axis2,p0,p2,prob,method,valid"));
        assert!(lines.next().unwrap().ends_with(",mode,true"));
    }

    #[test]
    fn validity_boundary_lies_inside_deterministic_boundary() {
        let t_det = deterministic_boundary(-1.0, 2.0).unwrap();
        let t_mode = mode_validity_boundary(-1.0, 2.0).unwrap();
        assert!(t_mode < t_det, "{t_mode} {t_det}");
    }

    #[test]
    fn zero_budget_skips_everything() {
        let spec = GridSpec {
            r: vec![1.0, 2.0],
            t_e: vec![2.0],
            method: EscapeMethod::Mode,
            ..Default::default()
        };
        let g = escape_grid_1d(&spec, Some(Duration::ZERO)).unwrap();
        assert_eq!(g.skipped, 2);
        assert!(matches!(g.budget_error(), Some(Error::BudgetExceeded { completed: 0, total: 2 })));
    }
}
