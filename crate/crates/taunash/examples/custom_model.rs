//! A model from coefficient expressions.
//!
//! Any drift and diffusion given as formulas in x define a model the
//! whole toolkit accepts: here a double-well drift with unit noise.
//! The reflected spectrum picks up the slow well-hopping mode as a
//! small positive eigenvalue under the zero mode.

use taunash::discretize::{build_killed_generator, build_reflected_generator};
use taunash::model::model_from_expressions;
use taunash::moments::moment_recursion;
use taunash::spectral::eigendecompose;

fn main() -> taunash::Result<()> {
    let model = model_from_expressions("double-well", "x - x^3", "1", 0.0, (-3.0, 3.0))?;

    let gen = build_reflected_generator(&model, -2.5, 2.5, 400)?;
    let dec = eigendecompose(&gen)?;
    println!("reflected spectrum of {} on (-2.5, 2.5):", model.name);
    for (k, xi) in dec.eigenvalues.iter().take(4).enumerate() {
        println!("  xi_{} = {xi:.6}", k + 1);
    }
    println!("  stationary mass = {:.6}", gen.total_mass());

    // Exit moments from the right well, absorbing at the saddle and at
    // the outer wall.
    let killed = build_killed_generator(&model, 0.0, 2.5, 300)?;
    let table = moment_recursion(&killed, 2)?;
    let mass = killed.total_mass();
    println!("\nexit of the right well (0, 2.5):");
    println!("  mean exit time   (speed avg) = {:.4}", table.pairing(&killed, 1) / mass);
    println!("  second moment    (speed avg) = {:.4}", table.pairing(&killed, 2) / mass);
    Ok(())
}
