//! Occupation averages leave their mean polynomially slowly.
//!
//! Start the heavy-tailed model from its stationary law and watch the
//! fraction of time spent inside the band [-1, 1]. The probability that
//! this fraction deviates from the stationary mass by at least
//! 4 * lambda must fall like t^-(l+1); cells whose threshold exceeds 1
//! are impossible for a [0, 1]-valued average and must be exactly zero.

use taunash::montecarlo::{deviation_check, DeviationOptions, Region, SimulationConfig};
use taunash::model::model_by_name;

fn main() -> taunash::Result<()> {
    let entry = model_by_name("HT(4)")?;
    let cfg = SimulationConfig {
        n_paths: 2_000,
        dt: 0.01,
        trunc_radius: 50.0,
        horizon: 100.0,
        seed: 42,
        bridge: false,
        noise_scale: 1.0,
    };
    let opts = DeviationOptions {
        lambdas: vec![0.025, 0.05, 0.3],
        ..DeviationOptions::default()
    };
    let out = deviation_check(
        &entry.model,
        &cfg,
        Region::Exterior { radius: 1.0 },
        1.0,
        &opts,
    )?;

    let mu = out.report.get_quantity("mu_v").unwrap();
    println!("stationary band mass mu(V) = {mu:.4}");
    if let Some(curve) = &out.curve {
        println!(
            "{:>8} {:>6} {:>12} {:>8} {:>11}",
            "lambda", "t", "probability", "hits", "impossible"
        );
        for r in &curve.rows {
            println!(
                "{:>8} {:>6} {:>12.2e} {:>8.0} {:>11.0}",
                r[0], r[1], r[2], r[6], r[8]
            );
        }
    }
    for name in ["slope_lambda_0.025", "slope_lambda_0.05"] {
        if let Some(s) = out.report.get_quantity(name) {
            println!("{name} = {s:.3} (bound requires <= -1.5)");
        }
    }
    println!("all assertions passed: {}", out.report.passed());
    Ok(())
}
