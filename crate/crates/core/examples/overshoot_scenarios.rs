//! Direct simulation of temporary albedo overshoots at speed S = 0.5 per
//! decade, compared with the inverse-square criterion.

use tipping_kit::forcing::{ForcingProfile, Sech2Forcing};
use tipping_kit::monsoon::{analyze_fold, escape_box, MonsoonParams, A_INF, GUESS, YEARS_PER_DECADE};
use tipping_kit::tipping::{classify_by_simulation, criterion_inverse_square, SimulationSetup};

fn main() -> tipping_kit::Result<()> {
    let params = MonsoonParams::default();
    let report = analyze_fold(&params)?;
    let (a_b, d_b) = (report.fold.q_b, report.fold.d_b);
    let sys = params.system(report.weights);
    let setup = SimulationSetup::new(escape_box(), GUESS.to_vec());

    println!("   R    t_e [y]  criterion  simulation  exit/end [decades]");
    for r in [0.01, 0.02, 0.027, 0.03] {
        let pulse = Sech2Forcing::with_background_tolerance(A_INF, r, 0.5, a_b, 1e-4);
        let t_e = pulse.exceedance_time_exact(a_b);
        let crit = criterion_inverse_square(d_b, r, t_e)?;
        let sim = classify_by_simulation(&sys, &ForcingProfile::Sech2(pulse), &setup)?;
        println!(
            "{r:6.3} {:8.2}  {:>9}  {:>10}  {:.3}",
            t_e * YEARS_PER_DECADE,
            if crit.tipped { "tip" } else { "safe" },
            if sim.tipped { "tip" } else { "safe" },
            sim.margin
        );
    }
    Ok(())
}
