//! Critical exceedance amplitude of the monsoon model by bisection on
//! direct simulations, against the asymptotic law `R = 16 / (d_b t_e^2)`.

use tipping_kit::monsoon::{analyze_fold, escape_box, MonsoonParams, A_INF, GUESS, YEARS_PER_DECADE};
use tipping_kit::tipping::{critical_curve, Sech2Family, SimulationSetup};

fn main() -> tipping_kit::Result<()> {
    let params = MonsoonParams::default();
    let report = analyze_fold(&params)?;
    let sys = params.system(report.weights);
    let family = Sech2Family::new(A_INF, report.fold.q_b);
    let setup = SimulationSetup::new(escape_box(), GUESS.to_vec());

    let t_e: Vec<f64> = (1..=8).map(|k| 0.5 * k as f64).collect();
    let points = critical_curve(&sys, &family, &t_e, report.fold.d_b, &setup, 1e-5);

    println!("t_e [y]   R_crit    16/(d_b t_e^2)  rel. gap");
    for p in &points {
        match (p.r_crit, p.relative_error()) {
            (Some(r), Some(e)) => println!("{:7.1}  {r:.5}   {:.5}         {e:.3}", p.t_e * YEARS_PER_DECADE, p.r_asymptotic),
            _ => println!("{:7.1}  failed: {}", p.t_e * YEARS_PER_DECADE, p.error.as_deref().unwrap_or("?")),
        }
    }
    Ok(())
}
