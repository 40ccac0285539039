//! Monte-Carlo escape probabilities, checked against the Fokker-Planck
//! solution and for reproducibility under a fixed seed.

use tipping_kit::escape::{monte_carlo_escape, solve_fpe_1d, FpeGrid1D, McSpec};

fn main() -> tipping_kit::Result<()> {
    let grid = FpeGrid1D::default();
    for (p0, p2) in [(-0.5, 1.0), (0.0, 1.0), (0.5, 2.0)] {
        let spec = McSpec::canonical(p0, p2, &grid, 1e-3);
        let mc = monte_carlo_escape(&spec, 20_000, 7)?;
        let fpe = solve_fpe_1d(p0, p2, &grid)?.p_esc;
        let z = (mc.p_esc - fpe) / mc.std_error;
        println!("({p0}, {p2}): MC {:.4} +- {:.4}, FPE {fpe:.4}, z = {z:+.2}", mc.p_esc, mc.std_error);
    }
    let spec = McSpec::canonical(0.0, 1.0, &grid, 1e-3);
    let a = monte_carlo_escape(&spec, 5_000, 11)?;
    let b = monte_carlo_escape(&spec, 5_000, 11)?;
    println!("same seed, same count: {}", a == b);
    Ok(())
}
