//! Polynomial decay of the reflected semigroup.
//!
//! Evolve a mean-zero sign pattern under the heavy-tailed model's
//! reflected semigroup and fit the log-log slope of the variance over a
//! time window. Doubling the truncation radius must leave the slope
//! alone; only then is the decay a property of the model.

use taunash::model::model_by_name;
use taunash::verify::{verify_decay_with_doubling, DecayDoublingOptions};

fn main() -> taunash::Result<()> {
    let entry = model_by_name("HT(4)")?;
    let opts = DecayDoublingOptions {
        trunc_radius: 50.0,
        ..DecayDoublingOptions::default()
    };
    let out = verify_decay_with_doubling(&entry.model, 0.0, 2.0, &opts)?;

    let s0 = out.report.get_quantity("log_log_slope_radius_50").unwrap();
    let s1 = out.report.get_quantity("log_log_slope_radius_100").unwrap();
    println!("model {}, order 2, window t in [1, 30]", entry.model.name);
    println!("  slope at L =  50: {s0:.4}");
    println!("  slope at L = 100: {s1:.4}");
    println!("  change on doubling: {:.2e}", (s1 - s0).abs());
    println!("  required: slope <= -2.5, change < {}", opts.max_slope_change);
    println!("  all assertions passed: {}", out.report.passed());

    if let Some(curve) = &out.curve {
        let rows = &curve.rows;
        println!("\n  first and last fitted points (series 0 = base radius):");
        for r in rows.iter().take(2).chain(rows.iter().rev().take(2).rev()) {
            println!("    series {:.0}  t = {:>7.3}  variance = {:.3e}", r[0], r[1], r[2]);
        }
    }
    Ok(())
}
