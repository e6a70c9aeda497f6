//! Whole-line bound assembled from two reflected halves.
//!
//! Truncate the line at +-L, split at a point a, and control the
//! variance of F by the energy and a functional built from the two
//! half-line speed masses. The scan reports which split point minimizes
//! the functional; for a symmetric model it lands at the origin.

use taunash::model::model_by_name;
use taunash::verify::{random_bounded_family, verify_nash_whole, WholeLineOptions};

fn main() -> taunash::Result<()> {
    let entry = model_by_name("OU")?;
    let opts = WholeLineOptions {
        n: 160,
        scan_candidates: 21,
        ..WholeLineOptions::default()
    };
    let fs = random_bounded_family(opts.n, 60, 11);

    for split in [-1.0, 0.0, 1.0] {
        let out = verify_nash_whole(&entry.model, 8.0, split, 1.0, &fs, &opts)?;
        let face = out.report.get_quantity("split_face_position").unwrap();
        let left = out.report.get_quantity("side_mass_left").unwrap();
        let right = out.report.get_quantity("side_mass_right").unwrap();
        println!(
            "split a = {split:>4} (face {face:>6.3}): passed = {}, side masses {left:.4} | {right:.4}",
            out.report.passed()
        );
        if let Some(best) = out.report.get_quantity("scan_best_split") {
            println!("          scan prefers a = {best:.3}");
        }
    }
    Ok(())
}
