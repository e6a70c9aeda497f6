//! End-to-end acceptance gate. Each criterion prints one PASS/FAIL line
//! (run with `--nocapture` to watch); the test fails if any criterion
//! does. Every tolerance and budget is pinned here on purpose: loosening
//! one is a visible diff.

use std::f64::consts::PI;
use std::time::Instant;

use taunash::discretize::{build_killed_generator, build_reflected_generator};
use taunash::model::catalog;
use taunash::montecarlo::{
    deviation_check, sample_hitting_moments, DeviationOptions, Region, SimulationConfig, StartLaw,
};
use taunash::spectral::{eigendecompose, RateFunction, SpectralDecomposition};
use taunash::verify::{
    random_bounded_family, threshold_study, verify_decay_with_doubling, verify_equality_chain,
    verify_nash_killed, verify_nash_whole, Classification, DecayDoublingOptions, EqualityOptions,
    NashKilledOptions, ThresholdOptions, WholeLineOptions,
};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn run(
        &mut self,
        idx: usize,
        label: &str,
        budget_s: f64,
        body: impl FnOnce() -> Result<(), String>,
    ) {
        let clock = Instant::now();
        let result = body();
        let elapsed = clock.elapsed().as_secs_f64();
        let verdict = match &result {
            Ok(()) if elapsed <= budget_s => "PASS".to_string(),
            Ok(()) => format!("FAIL (took {elapsed:.1}s, budget {budget_s}s)"),
            Err(e) => format!("FAIL ({e})"),
        };
        println!("criterion {idx:02}  {label:<52} {verdict}  [{elapsed:.1}s]");
        if !verdict.starts_with("PASS") {
            self.failures.push(format!("criterion {idx:02}: {verdict}"));
        }
    }
}

fn rel_err(value: f64, exact: f64) -> f64 {
    (value - exact).abs() / exact.abs()
}

fn require(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

#[test]
fn acceptance_criteria() {
    let mut gate = Gate { failures: Vec::new() };
    let models = catalog();
    let bm2 = models[0].clone();
    let ht4 = models[2].clone();

    // Built inside criterion 1 (its budget covers the construction),
    // reused by criterion 2.
    let mut fine_dec: Option<SpectralDecomposition> = None;

    gate.run(1, "absorbing spectrum against the sine oracle", 10.0, || {
        let gen = build_killed_generator(&bm2.model, 0.0, 1.0, 2000).map_err(|e| e.to_string())?;
        let dec = eigendecompose(&gen).map_err(|e| e.to_string())?;
        let xi1 = dec.eigenvalues[0];
        let xi2 = dec.eigenvalues[1];
        require(
            rel_err(xi1, PI * PI) < 1e-3,
            format!("xi_1 = {xi1}, off by {:.1e}", rel_err(xi1, PI * PI)),
        )?;
        require(
            rel_err(xi2, 4.0 * PI * PI) < 1e-3,
            format!("xi_2 = {xi2}, off by {:.1e}", rel_err(xi2, 4.0 * PI * PI)),
        )?;
        fine_dec = Some(dec);
        Ok(())
    });

    gate.run(2, "three-route agreement for three clocks", 30.0, || {
        let fine_dec = fine_dec.as_ref().ok_or("criterion 1 did not build the spectrum")?;
        let rates = [
            RateFunction::Constant,
            RateFunction::Polynomial { l: 1.0 },
            RateFunction::Exponential { lam: 2.0 * PI * PI },
        ];
        let refs = [
            Some(1.0 / 12.0),
            Some(1.0 / 120.0),
            Some(f64::INFINITY),
        ];
        // Defaults pin the gates: solve and spectral routes within 1e-6
        // of the closed forms, the time integral within 1e-4.
        let out = verify_equality_chain(fine_dec, &rates, &refs, &EqualityOptions::default())
            .map_err(|e| e.to_string())?;
        let failed: Vec<&str> = out
            .report
            .assertions
            .iter()
            .filter(|a| !a.passed)
            .map(|a| a.name.as_str())
            .collect();
        require(failed.is_empty(), format!("failed: {}", failed.join(", ")))
    });

    // Built inside criterion 3, reused by criterion 4.
    let mut killed: Vec<(&str, SpectralDecomposition)> = Vec::new();

    gate.run(3, "boundary dichotomy across the catalog", 60.0, || {
        for e in &models {
            let (a, b) = e.killed_interval;
            let gen = build_killed_generator(&e.model, a, b, 400).map_err(|er| er.to_string())?;
            let dec = eigendecompose(&gen).map_err(|er| er.to_string())?;
            killed.push((e.model.name.as_str(), dec));
        }
        for (name, dec) in &killed {
            require(
                dec.eigenvalues[0] > 0.0,
                format!("{name} killed: xi_1 = {}", dec.eigenvalues[0]),
            )?;
        }
        for e in &models {
            let (a, b) = e.reflected_interval;
            let gen = build_reflected_generator(&e.model, a, b, 400).map_err(|er| er.to_string())?;
            let dec = eigendecompose(&gen).map_err(|er| er.to_string())?;
            let xi1 = dec.eigenvalues[0];
            require(
                xi1.abs() <= 1e-10,
                format!("{} reflected: xi_1 = {xi1:e}", e.model.name),
            )?;
            // Residual of the constant under the generator, in the speed
            // norm: reflecting rows must sum to zero.
            let ones = vec![1.0; gen.n()];
            let image = gen.apply(&ones);
            let res = gen.norm_sq(&image).sqrt();
            require(
                res <= 1e-8,
                format!("{} reflected: |L 1|_m = {res:e}", e.model.name),
            )?;
        }
        Ok(())
    });

    gate.run(4, "interpolation bound on a thousand functions", 120.0, || {
        for (name, dec) in &killed {
            if *name == "OU" {
                continue;
            }
            let fs = random_bounded_family(dec.n(), 1000, 2024);
            let out = verify_nash_killed(dec, &[0.5, 1.0, 2.0], &fs, &NashKilledOptions::default())
                .map_err(|e| e.to_string())?;
            if !out.report.passed() {
                let bad: Vec<&str> = out
                    .report
                    .assertions
                    .iter()
                    .filter(|a| !a.passed)
                    .map(|a| a.name.as_str())
                    .collect();
                return Err(format!("{name}: {}", bad.join(", ")));
            }
        }
        Ok(())
    });

    gate.run(5, "whole-line bound at three split points", 120.0, || {
        let opts = WholeLineOptions::default();
        let fs = random_bounded_family(opts.n, 100, 3030);
        for split in [0.0, -1.0, 1.0] {
            let out = verify_nash_whole(&ht4.model, 50.0, split, 2.0, &fs, &opts)
                .map_err(|e| e.to_string())?;
            if !out.report.passed() {
                return Err(format!("split {split} failed"));
            }
        }
        Ok(())
    });

    let hit_cfg = SimulationConfig {
        n_paths: 100_000,
        dt: 1e-4,
        trunc_radius: 2.0,
        horizon: 2.0,
        seed: 42,
        bridge: true,
        noise_scale: 1.0,
    };
    let mut hit_snapshot = Vec::new();
    gate.run(6, "simulated exit moments within four sigma", 300.0, || {
        let sample = sample_hitting_moments(
            &bm2.model,
            &hit_cfg,
            Region::Interval { lo: 0.0, hi: 1.0 },
            StartLaw::Point(0.5),
            &[1.0, 2.0],
        )
        .map_err(|e| e.to_string())?;
        require(sample.censored == 0, format!("{} censored paths", sample.censored))?;
        for (i, exact) in [(0usize, 0.125), (1usize, 5.0 / 192.0)] {
            let z = (sample.moments[i] - exact) / sample.standard_errors[i];
            require(
                z.abs() <= 4.0,
                format!("order {}: z = {z:.2}", i + 1),
            )?;
        }
        hit_snapshot = sample.moments.clone();
        Ok(())
    });

    gate.run(7, "threshold ladder separates the orders", 120.0, || {
        let specs = [
            (2.0, Some(Classification::Convergent)),
            (4.0, Some(Classification::Divergent)),
        ];
        let out = threshold_study(&ht4.model, &specs, &ThresholdOptions::default())
            .map_err(|e| e.to_string())?;
        require(out.report.passed(), "classification mismatch")
    });

    gate.run(8, "decay slope stable under doubled truncation", 120.0, || {
        let out = verify_decay_with_doubling(
            &ht4.model,
            0.0,
            2.0,
            &DecayDoublingOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let s0 = out.report.get_quantity("log_log_slope_radius_100").unwrap();
        require(out.report.passed(), format!("slope {s0:.3} or stability failed"))?;
        require(s0 <= -2.5, format!("slope {s0:.3} above -2.5"))
    });

    let dev_cfg = SimulationConfig {
        n_paths: 10_000,
        dt: 0.01,
        trunc_radius: 50.0,
        horizon: 100.0,
        seed: 42,
        bridge: false,
        noise_scale: 1.0,
    };
    let dev_opts = DeviationOptions {
        lambdas: vec![0.025, 0.05, 0.1, 0.3],
        times: vec![10.0, 30.0, 100.0],
        ..DeviationOptions::default()
    };
    let mut dev_snapshot = String::new();
    gate.run(9, "occupation deviations fall polynomially", 900.0, || {
        let out = deviation_check(
            &ht4.model,
            &dev_cfg,
            Region::Exterior { radius: 1.0 },
            1.0,
            &dev_opts,
        )
        .map_err(|e| e.to_string())?;
        let names: Vec<&str> = out.report.assertions.iter().map(|a| a.name.as_str()).collect();
        for needed in [
            "non_increasing_lambda_0.1",
            "slope_bound_lambda_0.1",
            "exact_zero_lambda_0.3_t_10",
            "exact_zero_lambda_0.3_t_30",
            "exact_zero_lambda_0.3_t_100",
        ] {
            require(names.contains(&needed), format!("missing assertion {needed}"))?;
        }
        // The two small thresholds populate their cells and carry a
        // genuine slope fit.
        for lam in ["0.025", "0.05"] {
            let slope = out
                .report
                .get_quantity(&format!("slope_lambda_{lam}"))
                .ok_or(format!("no slope for lambda {lam}"))?;
            require(slope <= -1.5, format!("lambda {lam}: slope {slope:.2}"))?;
        }
        let bad: Vec<&str> = out
            .report
            .assertions
            .iter()
            .filter(|a| !a.passed)
            .map(|a| a.name.as_str())
            .collect();
        require(bad.is_empty(), format!("failed: {}", bad.join(", ")))?;
        dev_snapshot = out.report.to_json();
        Ok(())
    });

    gate.run(10, "bit-identical reruns of both simulations", 600.0, || {
        let again = sample_hitting_moments(
            &bm2.model,
            &hit_cfg,
            Region::Interval { lo: 0.0, hi: 1.0 },
            StartLaw::Point(0.5),
            &[1.0, 2.0],
        )
        .map_err(|e| e.to_string())?;
        require(
            again.moments == hit_snapshot,
            "exit moments differ across reruns",
        )?;
        let again = deviation_check(
            &ht4.model,
            &dev_cfg,
            Region::Exterior { radius: 1.0 },
            1.0,
            &dev_opts,
        )
        .map_err(|e| e.to_string())?;
        require(
            again.report.to_json() == dev_snapshot,
            "deviation report differs across reruns",
        )
    });

    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
