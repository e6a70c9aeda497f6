//! Batch front door. Each subcommand reads one TOML config, runs its
//! check, writes report-<check>.json (and curves-<check>.csv when the
//! check produces a curve) into the output directory, and exits 0 only
//! when every assertion passed. Config problems exit 2, numeric
//! failures 3, failed assertions 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{parse_expectation, FileConfig};
use crate::discretize::{build_killed_generator, build_reflected_generator};
use crate::error::{Error, Result};
use crate::model::catalog;
use crate::moments::moment_recursion;
use crate::montecarlo::{deviation_check, hitting_check, DeviationOptions};
use crate::report::{CheckOutput, CsvTable, VerificationReport};
use crate::spectral::{eigendecompose, spectral_weights};
use crate::verify::{
    random_bounded_family, threshold_study, verify_decay_with_doubling, verify_equality_chain,
    verify_nash_killed, verify_nash_whole, DecayDoublingOptions, EqualityOptions,
    NashKilledOptions, ThresholdOptions, WholeLineOptions,
};

#[derive(Parser)]
#[command(
    name = "taunash",
    version,
    about = "Spectral and path-sampling checks for hitting times of one-dimensional diffusions"
)]
struct Cli {
    /// TOML run configuration (required by every check subcommand).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for report and curve files (default: current directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for path and family parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Also print the report (or the model listing) as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and spectral weights of the discretized generator.
    Spectrum,
    /// Hitting-moment table through the Dynkin recursion.
    Moments,
    /// Three-route agreement for modulated moments (solve, spectral sum,
    /// time integral).
    VerifyEquality,
    /// Spectral bound on random bounded functions under absorbing walls.
    VerifyNashKilled,
    /// Split-interval variance bound from one truncated model.
    VerifyNashWhole,
    /// Log-log decay slope of the semigroup variance, with truncation
    /// doubling.
    VerifyDecay,
    /// Classify moment orders as convergent or divergent on a truncation
    /// ladder.
    ThresholdStudy,
    /// Monte Carlo exit times with bridge-corrected crossing detection.
    SimulateHitting,
    /// Stationary-start time-average deviation probabilities.
    Deviation,
    /// Built-in models with tags, default intervals, and reference
    /// values.
    ListModels {
        /// Keep only entries carrying this tag.
        #[arg(long)]
        tag: Option<String>,
    },
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Ignore the error: the global pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    if let Command::ListModels { tag } = &cli.command {
        return list_models(tag.as_deref(), cli.json);
    }

    let Some(config_path) = &cli.config else {
        eprintln!("error: --config PATH is required for this subcommand");
        return ExitCode::from(2);
    };
    let config = match FileConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match run_check(&cli, &config) {
        Ok(output) => match emit(&output, &out_dir, cli.json) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidInput(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run_check(cli: &Cli, config: &FileConfig) -> Result<CheckOutput> {
    match &cli.command {
        Command::Spectrum => spectrum_check(config),
        Command::Moments => moments_check(config),
        Command::VerifyEquality => equality_check(config),
        Command::VerifyNashKilled => nash_killed_check(config, cli.seed),
        Command::VerifyNashWhole => nash_whole_check(config, cli.seed),
        Command::VerifyDecay => decay_check(config),
        Command::ThresholdStudy => threshold_check(config),
        Command::SimulateHitting => hitting_run(config, cli.seed),
        Command::Deviation => deviation_run(config, cli.seed),
        Command::ListModels { .. } => unreachable!("handled before config load"),
    }
}

/// Writes the artifacts; returns whether every assertion passed.
fn emit(output: &CheckOutput, out_dir: &Path, json_stdout: bool) -> Result<bool> {
    std::fs::create_dir_all(out_dir)?;
    let check = output.report.check.clone();
    output
        .report
        .write_json(&out_dir.join(format!("report-{check}.json")))?;
    if let Some(curve) = &output.curve {
        curve.write_csv(&out_dir.join(format!("curves-{check}.csv")))?;
    }
    if json_stdout {
        println!("{}", output.report.to_json());
    }
    let passed = output.report.passed();
    let failed: Vec<&str> = output
        .report
        .assertions
        .iter()
        .filter(|a| !a.passed)
        .map(|a| a.name.as_str())
        .collect();
    if passed {
        eprintln!(
            "check {check}: PASS ({} assertions)",
            output.report.assertions.len()
        );
    } else {
        eprintln!("check {check}: FAIL ({})", failed.join(", "));
    }
    Ok(passed)
}

fn grid_generator(config: &FileConfig) -> Result<crate::discretize::GeneratorMatrix> {
    let entry = config.model.resolve()?;
    let grid = config.need_grid()?;
    let (a, b) = (grid.interval[0], grid.interval[1]);
    if grid.is_killed() {
        build_killed_generator(&entry.model, a, b, grid.n)
    } else {
        build_reflected_generator(&entry.model, a, b, grid.n)
    }
}

fn spectrum_check(config: &FileConfig) -> Result<CheckOutput> {
    let gen = grid_generator(config)?;
    let count = config
        .spectrum
        .as_ref()
        .and_then(|s| s.eigenvalue_count)
        .unwrap_or(5)
        .min(gen.n());
    let dec = eigendecompose(&gen)?;
    let ones = vec![1.0; gen.n()];
    let weights = spectral_weights(&dec, &ones);

    let mut report = VerificationReport::new("spectrum", &gen.grid_label());
    report.input("n", gen.n());
    report.input(
        "boundary",
        if gen.is_killed() { "killed" } else { "reflected" },
    );
    report.quantity("total_mass", gen.total_mass(), "grid-sum");
    for (k, xi) in dec.eigenvalues.iter().take(count).enumerate() {
        report.quantity(&format!("eigenvalue_{}", k + 1), *xi, "ql");
    }
    if gen.is_killed() {
        report.assert_flag(
            "bottom_eigenvalue_positive",
            dec.eigenvalues[0] > 0.0,
            "absorbing walls force a spectral gap",
        );
    } else {
        report.assert_le(
            "bottom_eigenvalue_near_zero",
            dec.eigenvalues[0].abs(),
            0.0,
            1e-10,
        );
        let image = gen.apply(&ones);
        report.assert_le(
            "constant_in_kernel",
            gen.norm_sq(&image).sqrt(),
            0.0,
            1e-8,
        );
    }

    let mut curve = CsvTable::new(&["index", "eigenvalue", "weight_of_one"]);
    for (k, &(xi, w)) in weights.atoms.iter().enumerate() {
        curve.push(vec![(k + 1) as f64, xi, w]);
    }
    Ok(CheckOutput {
        report,
        curve: Some(curve),
    })
}

fn moments_check(config: &FileConfig) -> Result<CheckOutput> {
    let gen = grid_generator(config)?;
    let k_max = config
        .moments
        .as_ref()
        .ok_or_else(|| Error::Config("missing [moments] section".to_string()))?
        .max_order;
    if !gen.is_killed() {
        return Err(Error::InvalidInput(
            "hitting moments need absorbing walls; use boundary = \"killed\"".to_string(),
        ));
    }
    let table = moment_recursion(&gen, k_max)?;
    let mass = gen.total_mass();

    let mut report = VerificationReport::new("moments", &gen.grid_label());
    report.input("n", gen.n());
    report.input("max_order", k_max);
    let mut curve = CsvTable::new(&["order", "mean_moment"]);
    let mut all_finite = true;
    for k in 1..=k_max {
        let mean = table.pairing(&gen, k) / mass;
        all_finite &= mean.is_finite();
        report.quantity(&format!("mean_moment_{k}"), mean, "dynkin-recursion");
        curve.push(vec![k as f64, mean]);
    }
    report.assert_flag(
        "moments_finite",
        all_finite,
        "every requested order solved to a finite speed-average",
    );
    Ok(CheckOutput {
        report,
        curve: Some(curve),
    })
}

fn equality_check(config: &FileConfig) -> Result<CheckOutput> {
    let gen = grid_generator(config)?;
    if !gen.is_killed() {
        return Err(Error::InvalidInput(
            "the equality chain is stated for absorbing walls; use boundary = \"killed\""
                .to_string(),
        ));
    }
    let rate_sections = config
        .rates
        .as_ref()
        .ok_or_else(|| Error::Config("missing [[rates]] sections".to_string()))?;
    let rates: Vec<_> = rate_sections
        .iter()
        .map(|r| r.resolve())
        .collect::<Result<_>>()?;
    let references: Vec<Option<f64>> =
        rate_sections.iter().map(|r| r.reference_value).collect();
    let mut opts = EqualityOptions::default();
    if let Some(eq) = &config.equality {
        if let Some(t) = eq.solve_rel_tol {
            opts.solve_tol = t;
        }
        if let Some(t) = eq.integral_rel_tol {
            opts.integral_tol = t;
        }
    }
    let dec = eigendecompose(&gen)?;
    verify_equality_chain(&dec, &rates, &references, &opts)
}

fn nash_killed_check(config: &FileConfig, cli_seed: Option<u64>) -> Result<CheckOutput> {
    let gen = grid_generator(config)?;
    let nash = config
        .nash
        .as_ref()
        .ok_or_else(|| Error::Config("missing [nash] section".to_string()))?;
    let mut opts = NashKilledOptions::default();
    if let Some(t) = nash.slack_tol {
        opts.slack_tol = t;
    }
    let seed = cli_seed.or(nash.family_seed).unwrap_or(config.resolve_seed(None));
    let fs = random_bounded_family(gen.n(), nash.family_size, seed);
    let dec = eigendecompose(&gen)?;
    verify_nash_killed(&dec, &nash.orders, &fs, &opts)
}

fn nash_whole_check(config: &FileConfig, cli_seed: Option<u64>) -> Result<CheckOutput> {
    let entry = config.model.resolve()?;
    let w = config
        .whole_line
        .as_ref()
        .ok_or_else(|| Error::Config("missing [whole_line] section".to_string()))?;
    let mut opts = WholeLineOptions::default();
    if let Some(n) = w.grid_n {
        opts.n = n;
    }
    if let Some(k) = w.scan_candidates {
        opts.scan_candidates = k;
    }
    let seed = cli_seed.or(w.family_seed).unwrap_or(config.resolve_seed(None));
    let fs = random_bounded_family(opts.n, w.family_size, seed);
    verify_nash_whole(
        &entry.model,
        w.truncation_radius,
        w.split_point,
        w.order,
        &fs,
        &opts,
    )
}

fn decay_check(config: &FileConfig) -> Result<CheckOutput> {
    let entry = config.model.resolve()?;
    let d = config
        .decay
        .as_ref()
        .ok_or_else(|| Error::Config("missing [decay] section".to_string()))?;
    let mut opts = DecayDoublingOptions::default();
    if let Some(radius) = d.base_truncation_radius {
        opts.trunc_radius = radius;
    }
    if let Some(h) = d.node_spacing {
        opts.h = h;
    }
    if let Some(window) = d.window_time {
        opts.base.window = (window[0], window[1]);
    }
    if let Some(points) = d.window_points {
        opts.base.points = points;
    }
    if let Some(margin) = d.slope_margin {
        opts.base.slope_margin = margin;
    }
    if let Some(change) = d.max_slope_change {
        opts.max_slope_change = change;
    }
    verify_decay_with_doubling(&entry.model, d.sign_split, d.order, &opts)
}

fn threshold_check(config: &FileConfig) -> Result<CheckOutput> {
    let entry = config.model.resolve()?;
    let t = config
        .threshold
        .as_ref()
        .ok_or_else(|| Error::Config("missing [threshold] section".to_string()))?;
    let mut opts = ThresholdOptions::default();
    if let Some(ladder) = &t.ladder_radii {
        opts.ladder = ladder.clone();
    }
    if let Some(h) = t.node_spacing {
        opts.h = h;
    }
    if let Some(r) = t.inner_radius {
        opts.inner_radius = r;
    }
    let expectations: Vec<_> = match &t.expected {
        Some(labels) => labels
            .iter()
            .map(|s| parse_expectation(s))
            .collect::<Result<_>>()?,
        None => vec![None; t.orders.len()],
    };
    let specs: Vec<_> = t
        .orders
        .iter()
        .copied()
        .zip(expectations)
        .collect();
    threshold_study(&entry.model, &specs, &opts)
}

fn hitting_run(config: &FileConfig, cli_seed: Option<u64>) -> Result<CheckOutput> {
    let entry = config.model.resolve()?;
    let sim = config.need_simulation()?;
    let h = config
        .hitting
        .as_ref()
        .ok_or_else(|| Error::Config("missing [hitting] section".to_string()))?;
    let cfg = sim.to_config(config.resolve_seed(cli_seed));
    hitting_check(
        &entry.model,
        &cfg,
        h.region.resolve()?,
        h.start.resolve()?,
        &h.orders,
        h.references.as_deref(),
        h.histogram_bins.unwrap_or(40),
        h.max_censored_fraction.unwrap_or(1e-3),
    )
}

fn deviation_run(config: &FileConfig, cli_seed: Option<u64>) -> Result<CheckOutput> {
    let entry = config.model.resolve()?;
    let sim = config.need_simulation()?;
    let d = config
        .deviation
        .as_ref()
        .ok_or_else(|| Error::Config("missing [deviation] section".to_string()))?;
    let cfg = sim.to_config(config.resolve_seed(cli_seed));
    let mut opts = DeviationOptions::default();
    if let Some(ls) = &d.lambdas {
        opts.lambdas = ls.clone();
    }
    if let Some(ts) = &d.observation_times {
        opts.times = ts.clone();
    }
    deviation_check(&entry.model, &cfg, d.region.resolve()?, d.order, &opts)
}

fn list_models(tag: Option<&str>, json: bool) -> ExitCode {
    let entries: Vec<_> = catalog()
        .into_iter()
        .filter(|e| tag.is_none_or(|t| e.tags.contains(&t)))
        .collect();
    if json {
        let body: Vec<serde_json::Value> = entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "name": e.model.name,
                    "tags": e.tags,
                    "killed_interval": e.killed_interval,
                    "reflected_interval": e.reflected_interval,
                    "known_values": e.known_values.iter().map(|kv| {
                        serde_json::json!({
                            "name": kv.name,
                            "value": kv.value,
                            "oracle": kv.oracle,
                        })
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        let doc = serde_json::json!({ "schema_version": 1, "models": body });
        println!("{}", serde_json::to_string_pretty(&doc).expect("static json"));
    } else {
        for e in &entries {
            println!("{}  [{}]", e.model.name, e.tags.join(", "));
            println!(
                "  killed interval ({}, {}), reflected interval ({}, {})",
                e.killed_interval.0, e.killed_interval.1, e.reflected_interval.0, e.reflected_interval.1
            );
            for kv in &e.known_values {
                println!("  {} = {}  ({})", kv.name, kv.value, kv.oracle);
            }
        }
    }
    ExitCode::SUCCESS
}
