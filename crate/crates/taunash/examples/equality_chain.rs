//! Three routes to the same modulated moment.
//!
//! For a clock r(t) and the absorbing flat model, the quantity
//! E_m \int_0^tau r(t) dt can be computed by resolvent solves, by a
//! spectral sum, or by a time integral against the survival pairing.
//! All three must agree, and for a clock that outruns the spectral gap
//! all three must diverge together.

use taunash::discretize::build_killed_generator;
use taunash::model::model_by_name;
use taunash::spectral::{eigendecompose, RateFunction};
use taunash::verify::{verify_equality_chain, EqualityOptions};

fn main() -> taunash::Result<()> {
    let entry = model_by_name("BM2")?;
    let (a, b) = entry.killed_interval;
    let gen = build_killed_generator(&entry.model, a, b, 400)?;
    let dec = eigendecompose(&gen)?;

    let lam = 2.0 * std::f64::consts::PI.powi(2);
    let rates = [
        RateFunction::Constant,
        RateFunction::Polynomial { l: 1.0 },
        RateFunction::Exponential { lam },
    ];
    // Closed forms on (0, 1): 1/12 for the constant clock, 1/120 for the
    // linear one. The exponential clock at 2 pi^2 sits above the gap.
    let refs = [Some(1.0 / 12.0), Some(1.0 / 120.0), None];

    let opts = EqualityOptions {
        solve_tol: 1e-4,
        ..EqualityOptions::default()
    };
    let out = verify_equality_chain(&dec, &rates, &refs, &opts)?;

    for q in &out.report.quantities {
        println!("{:<44} {:>18}", q.name, format!("{}", q.value.0));
    }
    println!(
        "\n{} assertions, all passed: {}",
        out.report.assertions.len(),
        out.report.passed()
    );
    Ok(())
}
