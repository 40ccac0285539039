//! Escape rate of the frozen well, the quadratic fit of its logarithm and
//! the mode approximation built on it.

use tipping_kit::escape::{fit_mode_coefficients, mode_approx, solve_fpe_1d, FpeGrid1D, Gamma1Grid, ModeFit, RateModel};

fn main() -> tipping_kit::Result<()> {
    let table = Gamma1Grid::default().tabulate()?;
    let fit = fit_mode_coefficients(&table)?;
    println!("fit: c0 = {:.4}, c2 = {:.4} (quoted {:.2}, {:.2})", fit.c0, fit.c2, ModeFit::PUBLISHED.0, ModeFit::PUBLISHED.1);
    println!("largest log residual on [-1, -0.1]: {:.3}", fit.log_residual_on(&table, -1.0, -0.1));
    for &(x, g) in table.iter().step_by(12) {
        println!("  xbar = {x:5.2}  gamma1 = {g:.4e}  fit = {:.4e}", fit.rate(x));
    }

    let rate = RateModel::from(fit);
    let grid = FpeGrid1D::default();
    println!("   p0    p2   mode      FPE     valid  max xbar");
    for (p0, p2) in [(-1.0, 0.5), (-0.5, 2.0), (0.0, 1.0), (0.3, 0.2)] {
        let m = mode_approx(p0, p2, &rate)?;
        let f = solve_fpe_1d(p0, p2, &grid)?.p_esc;
        println!("{p0:5.1} {p2:5.1}  {:.4}  {f:.4}  {:5}  {:.3}", m.probability, m.valid, m.xbar.max_xbar);
    }
    Ok(())
}
