//! Eigenvalues of the discretized generator against closed forms.
//!
//! The flat model on (0, 1) with absorbing ends has eigenvalues (pi k)^2
//! and puts spectral weight 8/(pi k)^2 of the constant function on the
//! odd sine modes. Run with `cargo run --example spectrum`.

use taunash::model::model_by_name;
use taunash::discretize::build_killed_generator;
use taunash::spectral::{eigendecompose, spectral_weights};

fn main() -> taunash::Result<()> {
    let entry = model_by_name("BM2")?;
    let (a, b) = entry.killed_interval;
    let n = 500;
    let gen = build_killed_generator(&entry.model, a, b, n)?;
    let dec = eigendecompose(&gen)?;

    let pi = std::f64::consts::PI;
    println!("absorbing spectrum of {} on ({a}, {b}), n = {n}", entry.model.name);
    println!("{:>4} {:>18} {:>18} {:>12}", "k", "xi_k", "(pi k)^2", "rel err");
    for k in 1..=5 {
        let xi = dec.eigenvalues[k - 1];
        let exact = (pi * k as f64).powi(2);
        println!("{k:>4} {xi:>18.12} {exact:>18.12} {:>12.2e}", (xi - exact).abs() / exact);
    }

    let ones = vec![1.0; gen.n()];
    let measure = spectral_weights(&dec, &ones);
    println!("\nweights of f = 1 (odd modes carry 8/(pi k)^2):");
    for (k, &(xi, w)) in measure.atoms.iter().take(6).enumerate() {
        let exact = if k % 2 == 0 {
            8.0 / ((pi * (k + 1) as f64).powi(2))
        } else {
            0.0
        };
        println!("  mode {:>2}: xi = {xi:>12.6}  weight = {w:>14.10}  exact {exact:>14.10}", k + 1);
    }
    Ok(())
}
