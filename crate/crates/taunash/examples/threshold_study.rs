//! Where exterior moment functionals stop being finite.
//!
//! For the heavy-tailed model with exponent r = 4, the speed-averaged
//! order-l functional of the exterior components pairs a moment growing
//! like x^(2l+2) against tails x^(-2r); it is finite exactly for
//! l < r - 3/2. A ladder of truncation radii makes the split visible:
//! convergent orders freeze, divergent ones keep growing.

use taunash::model::model_by_name;
use taunash::verify::{threshold_study, Classification, ThresholdOptions};

fn main() -> taunash::Result<()> {
    let entry = model_by_name("HT(4)")?;
    let specs = [
        (2.0, Some(Classification::Convergent)),
        (3.0, Some(Classification::Divergent)),
        (4.0, Some(Classification::Divergent)),
    ];
    let opts = ThresholdOptions::default();
    let out = threshold_study(&entry.model, &specs, &opts)?;

    println!("model {}, ladder {:?}", entry.model.name, opts.ladder);
    let curve = out.curve.expect("threshold study always tabulates");
    print!("{:>8}", "radius");
    for (l, _) in &specs {
        print!("{:>16}", format!("order {l}"));
    }
    println!();
    for row in &curve.rows {
        print!("{:>8.0}", row[0]);
        for v in &row[1..] {
            print!("{v:>16.6}");
        }
        println!();
    }
    println!();
    for (l, _) in &specs {
        let class = out
            .report
            .inputs
            .get(&format!("classification_order_{l}"))
            .cloned()
            .unwrap_or_default();
        let growth = out
            .report
            .get_quantity(&format!("max_growth_order_{l}"))
            .unwrap();
        println!("order {l}: {class} (max growth per doubling {growth:+.3})");
    }
    Ok(())
}
