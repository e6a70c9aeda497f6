//! Interpolation bound on the absorbing chain.
//!
//! For every f on the grid, ||f||^2 <= E(f)^(1/p) Phi_l(f)^(1/q) with
//! p = l + 2 over l + 1. A reproducible random family probes the bound;
//! the bottom eigenmode saturates it exactly.

use taunash::discretize::build_killed_generator;
use taunash::model::model_by_name;
use taunash::spectral::eigendecompose;
use taunash::verify::{random_bounded_family, verify_nash_killed, NashKilledOptions};

fn main() -> taunash::Result<()> {
    for name in ["BM2", "HT(4)"] {
        let entry = model_by_name(name)?;
        let (a, b) = entry.killed_interval;
        let n = 200;
        let gen = build_killed_generator(&entry.model, a, b, n)?;
        let dec = eigendecompose(&gen)?;
        let fs = random_bounded_family(n, 300, 7);

        let out = verify_nash_killed(&dec, &[0.5, 1.0, 2.0], &fs, &NashKilledOptions::default())?;
        println!("{name} on ({a}, {b}): xi_1 = {:.6}", dec.eigenvalues[0]);
        for a in &out.report.assertions {
            let mark = if a.passed { "ok " } else { "FAIL" };
            println!("  [{mark}] {}", a.name);
        }
    }
    Ok(())
}
