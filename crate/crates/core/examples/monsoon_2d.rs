//! Escape probability of the noisy two-dimensional monsoon model from its
//! Fokker-Planck equation, against the scalar mode approximation.
//!
//! Uses a 96 x 96 grid so it finishes in seconds; the library default is
//! 256 x 256.

use tipping_kit::escape::{fit_mode_coefficients, solve_fpe_2d_monsoon, FpeGrid2D, Gamma1Grid, MonsoonReduction, RateModel};
use tipping_kit::monsoon::{analyze_fold, MonsoonParams};

fn main() -> tipping_kit::Result<()> {
    let params = MonsoonParams::default();
    let fold = analyze_fold(&params)?;
    let red = MonsoonReduction::from_fold(&fold, 0.5);
    let rate = RateModel::from(fit_mode_coefficients(&Gamma1Grid::default().tabulate()?)?);
    let grid = FpeGrid2D {
        n_q: 96,
        n_t: 96,
        dt: 2e-3,
        ..Default::default()
    };
    println!("reduction: gain {:.2}, time scale {:.3}", red.gain(), red.time_scale());
    println!("    R   t_e   P_2D     P_mode   valid");
    for (r, t_e) in [(0.02, 1.5), (0.03, 2.5), (0.04, 2.0)] {
        let p2d = solve_fpe_2d_monsoon(&params, &red.forcing(r, t_e)?, &grid)?.p_esc;
        let m = red.mode_approx(r, t_e, &rate)?;
        println!("{r:5.2} {t_e:5.1}  {p2d:.4}  {:.4}   {}", m.probability, m.valid);
    }
    Ok(())
}
