//! Escape probability over a small grid of exceedance amplitude and time
//! for the canonical SDE, from the Fokker-Planck solver and the mode
//! approximation, with the deterministic tipping boundary.

use tipping_kit::escape::grid::{linspace, mode_validity_boundary};
use tipping_kit::escape::{deterministic_boundary, escape_grid_1d, EscapeMethod, GridSpec};

fn main() -> tipping_kit::Result<()> {
    let spec = GridSpec {
        r: linspace(0.5, 2.5, 5),
        t_e: linspace(1.0, 4.0, 4),
        ..Default::default()
    };
    let fpe = escape_grid_1d(&spec, None)?;
    let mode = escape_grid_1d(&GridSpec { method: EscapeMethod::Mode, ..spec.clone() }, None)?;

    println!("  R   t_e   FPE     mode    (valid)");
    for (f, m) in fpe.nodes.iter().zip(&mode.nodes) {
        println!(
            "{:4.1} {:4.1}  {:.4}  {:.4}  {}",
            f.axis1,
            f.axis2,
            f.prob.unwrap_or(f64::NAN),
            m.prob.unwrap_or(f64::NAN),
            m.valid
        );
    }
    for r in [0.5, 1.5, 2.5] {
        let det = deterministic_boundary(spec.threshold, r);
        let valid = mode_validity_boundary(spec.threshold, r);
        println!("R = {r}: deterministic boundary t_e = {det:.3?}, mode valid below t_e = {valid:.3?}");
    }
    Ok(())
}
