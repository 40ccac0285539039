//! Escape probability of the canonical SDE
//! `dx = [p0 - p2 t^2 + x^2] dt + sqrt(2) dW` from its Fokker-Planck
//! equation, with a self-convergence check.

use tipping_kit::escape::{solve_fpe_1d, FpeGrid1D};

fn main() -> tipping_kit::Result<()> {
    let grid = FpeGrid1D::default();
    println!("   p0    p2     P_esc       refined     min density");
    for (p0, p2) in [(-9.0, 1.0), (-1.0, 0.5), (0.0, 1.0), (0.5, 2.0), (1.5, 1.0)] {
        let coarse = solve_fpe_1d(p0, p2, &grid)?;
        let fine = solve_fpe_1d(p0, p2, &grid.refined(p0, p2))?;
        println!(
            "{p0:5.1} {p2:5.1}  {:.4e}  {:.4e}  {:.1e}",
            coarse.p_esc, fine.p_esc, coarse.min_density
        );
    }

    let sol = solve_fpe_1d(0.0, 1.0, &grid)?;
    let growth = sol.mass.windows(2).map(|w| w[1] - w[0]).fold(f64::MIN, f64::max);
    println!("mass history at (0, 1): {} samples, largest step change {growth:.1e}", sol.mass.len());
    Ok(())
}
