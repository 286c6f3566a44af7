//! The two admissible exponents of the two-point power form annul a
//! second-order differential system; any other exponent leaves a residual.
//! This prints the residual for both branches over a diffusivity grid,
//! plus one deliberate non-solution.
//!
//! Run with: `cargo run --example null_vector_residuals`

use msle::partition::{two_point_exponents, PartitionSpec, ZForm};

fn main() -> msle::Result<()> {
    let x = [0.0, 1.0];
    println!(
        "{:>8} {:>12} {:>14} | {:>12} {:>14}",
        "kappa", "exponent 0", "residual", "exponent 1", "residual"
    );
    for kappa in [2.0, 8.0 / 3.0, 3.0, 4.0, 6.0] {
        let [e0, e1] = two_point_exponents(kappa)?;
        let mut res = [0.0_f64; 2];
        for (k, exponent) in [e0, e1].into_iter().enumerate() {
            let spec = PartitionSpec::new(vec![kappa, kappa], ZForm::TwoPointPower { exponent })?;
            res[k] = (0..2)
                .map(|i| spec.nve_residual(&x, i).map(f64::abs))
                .collect::<msle::Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
        }
        println!("{kappa:>8.4} {e0:>12.4} {:>14.2e} | {e1:>12.4} {:>14.2e}", res[0], res[1]);
    }

    let bad = PartitionSpec::new(vec![2.0, 2.0], ZForm::TwoPointPower { exponent: 2.0 })?;
    println!(
        "\nexponent 2 at kappa 2 is NOT a solution: residual = {:.9} (exactly 4 at unit gap)",
        bad.nve_residual(&x, 0)?
    );
    Ok(())
}
