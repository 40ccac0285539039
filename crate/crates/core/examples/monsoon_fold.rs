//! Fold of the monsoon model and its normal-form coefficients.

use tipping_kit::monsoon::{analyze_fold, equilibrium_branches, MonsoonParams};

fn main() -> tipping_kit::Result<()> {
    let params = MonsoonParams::default();
    let report = analyze_fold(&params)?;
    let fold = &report.fold;
    println!("A_b      = {:.6}", fold.q_b);
    println!("(Q_a, T_a) at fold = ({:.6}, {:.4})", fold.y_b[0], fold.y_b[1]);
    println!("a0       = {:.4}", fold.a0);
    println!("kappa    = {:.6e}", fold.kappa);
    println!("d_b      = {:.3} per decade^2 (4 a0^2 kappa)", fold.d_b);
    println!("d_b      = {:.3} per decade^2 (eigenvalue limit)", fold.d_b_limit);
    println!("w0       = ({:.4}, {:.4}) recomputed, ({:.2}, {:.2}) published", report.recomputed_w0[0], report.recomputed_w0[1], report.published_w0[0], report.published_w0[1]);
    println!("p_f = {:.3}, x_f = {:.4}, D = {:.4}", report.p_f, report.x_f, report.noise_d);

    let rows = equilibrium_branches(&params, (0.40, 0.60))?;
    let stable = rows.iter().filter(|r| r.stable).count();
    println!("branch table: {} rows ({} stable, {} unstable)", rows.len(), stable, rows.len() - stable);
    Ok(())
}
