//! Two curves can be grown in either order only when their diffusivities
//! are equal or multiply to 16. The commutator of the one-step growth
//! operators measures the obstruction; this prints it (scaled by the
//! fourth power of the gap) over a grid, with compatible pairs marked.
//!
//! Run with: `cargo run --example commutation_matrix`

use msle::dynamics::{commutator_defect, OperatorVariant};
use msle::partition::{PartitionSpec, ZForm};

fn main() -> msle::Result<()> {
    let grid = [2.0, 8.0 / 3.0, 3.0, 4.0, 6.0, 8.0];
    let x = [0.0, 1.0];
    let one = |_: &[f64]| 1.0;

    print!("{:>8} |", "ki \\ kj");
    for kj in grid {
        print!("{kj:>9.3}");
    }
    println!();
    println!("{}", "-".repeat(9 + 1 + 9 * grid.len()));
    for ki in grid {
        print!("{ki:>8.3} |");
        for kj in grid {
            let spec = PartitionSpec::new(vec![ki, kj], ZForm::Constant)?;
            let defect = commutator_defect(0, 1, &spec, OperatorVariant::NullVector, &one, &x)?;
            if defect.abs() < 1e-3 {
                print!("{:>9}", "ok");
            } else {
                print!("{defect:>9.3}");
            }
        }
        println!();
    }
    println!(
        "\n'ok' marks pairs with equal diffusivities or product 16; elsewhere the\n\
         value matches the closed form -3 (ki - kj)(16 - ki kj) / (ki kj)."
    );
    Ok(())
}
