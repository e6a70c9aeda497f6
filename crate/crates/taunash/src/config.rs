//! TOML run configuration. Every section is strict: unknown keys are
//! rejected at parse time, and `validate` walks all present sections
//! before any computation starts. Keys carrying physical quantities
//! spell their unit (time_step, horizon_time, truncation_radius).

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{model_by_name, model_from_expressions, CatalogEntry};
use crate::montecarlo::{Region, SimulationConfig, StartLaw};
use crate::spectral::RateFunction;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelSection,
    pub seed: Option<u64>,
    pub grid: Option<GridSection>,
    pub spectrum: Option<SpectrumSection>,
    pub moments: Option<MomentsSection>,
    pub rates: Option<Vec<RateSection>>,
    pub equality: Option<EqualitySection>,
    pub nash: Option<NashSection>,
    pub whole_line: Option<WholeLineSection>,
    pub decay: Option<DecaySection>,
    pub threshold: Option<ThresholdSection>,
    pub simulation: Option<SimulationSection>,
    pub hitting: Option<HittingSection>,
    pub deviation: Option<DeviationSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Catalog name: BM2, OU, or HT(r). Exclusive with inline
    /// coefficients.
    pub name: Option<String>,
    pub drift: Option<String>,
    pub sigma: Option<String>,
    pub reference_point: Option<f64>,
    pub domain: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub interval: [f64; 2],
    pub n: usize,
    /// "killed" (absorbing ends) or "reflected" (Neumann ends).
    pub boundary: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub eigenvalue_count: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub max_order: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    /// "constant", "polynomial", or "exponential".
    pub kind: String,
    pub exponent: Option<f64>,
    pub lambda_rate: Option<f64>,
    pub reference_value: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualitySection {
    pub solve_rel_tol: Option<f64>,
    pub integral_rel_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashSection {
    pub orders: Vec<f64>,
    pub family_size: usize,
    pub family_seed: Option<u64>,
    pub slack_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WholeLineSection {
    pub truncation_radius: f64,
    pub split_point: f64,
    pub order: f64,
    pub family_size: usize,
    pub family_seed: Option<u64>,
    pub grid_n: Option<usize>,
    pub scan_candidates: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub sign_split: f64,
    pub order: f64,
    pub base_truncation_radius: Option<f64>,
    pub node_spacing: Option<f64>,
    pub window_time: Option<[f64; 2]>,
    pub window_points: Option<usize>,
    pub slope_margin: Option<f64>,
    pub max_slope_change: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub orders: Vec<f64>,
    /// Per order: "convergent", "divergent", or "any" (no expectation).
    pub expected: Option<Vec<String>>,
    pub ladder_radii: Option<Vec<f64>>,
    pub node_spacing: Option<f64>,
    pub inner_radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub path_count: usize,
    pub time_step: f64,
    pub truncation_radius: f64,
    pub horizon_time: f64,
    pub seed: Option<u64>,
    pub bridge: Option<bool>,
    pub noise_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    /// "interval" or "exterior".
    pub kind: String,
    pub interval: Option<[f64; 2]>,
    pub radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    /// "point", "stationary", or "stationary-restricted".
    pub kind: String,
    pub position: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingSection {
    pub region: RegionSection,
    pub start: StartSection,
    pub orders: Vec<f64>,
    pub histogram_bins: Option<usize>,
    pub max_censored_fraction: Option<f64>,
    /// Optional reference value per order, compared within 4 SE; must
    /// match `orders` in length when present.
    pub references: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationSection {
    pub region: RegionSection,
    pub order: f64,
    pub lambdas: Option<Vec<f64>>,
    pub observation_times: Option<Vec<f64>>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        let config: FileConfig =
            toml::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Walk every present section; reject impossible values before any
    /// computation starts.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(grid) = &self.grid {
            grid.validate()?;
        }
        if let Some(s) = &self.spectrum {
            if s.eigenvalue_count == Some(0) {
                return Err(cfg_err("spectrum.eigenvalue_count must be positive"));
            }
        }
        if let Some(m) = &self.moments {
            if m.max_order == 0 || m.max_order > 60 {
                return Err(cfg_err(format!(
                    "moments.max_order must be in 1..=60, got {}",
                    m.max_order
                )));
            }
        }
        if let Some(rates) = &self.rates {
            if rates.is_empty() {
                return Err(cfg_err("rates list is empty"));
            }
            for r in rates {
                r.resolve()?;
            }
        }
        if let Some(n) = &self.nash {
            if n.orders.is_empty() || n.orders.iter().any(|l| !(*l >= 0.0)) {
                return Err(cfg_err("nash.orders must be nonnegative and nonempty"));
            }
            if n.family_size == 0 {
                return Err(cfg_err("nash.family_size must be positive"));
            }
        }
        if let Some(w) = &self.whole_line {
            if !(w.truncation_radius > 0.0) {
                return Err(cfg_err("whole_line.truncation_radius must be positive"));
            }
            if !(w.order >= 0.0) || w.family_size == 0 {
                return Err(cfg_err("whole_line needs order >= 0 and a nonempty family"));
            }
            if let Some(gn) = w.grid_n {
                if gn < 8 {
                    return Err(cfg_err("whole_line.grid_n must be at least 8"));
                }
            }
        }
        if let Some(d) = &self.decay {
            if !(d.order >= 0.0) {
                return Err(cfg_err("decay.order must be nonnegative"));
            }
            if let Some(w) = d.window_time {
                if !(w[0] > 0.0 && w[1] > w[0]) {
                    return Err(cfg_err("decay.window_time must be positive and increasing"));
                }
            }
        }
        if let Some(t) = &self.threshold {
            if t.orders.is_empty() {
                return Err(cfg_err("threshold.orders is empty"));
            }
            if let Some(exp) = &t.expected {
                if exp.len() != t.orders.len() {
                    return Err(cfg_err(
                        "threshold.expected must match threshold.orders in length",
                    ));
                }
                for e in exp {
                    parse_expectation(e)?;
                }
            }
            if let Some(ladder) = &t.ladder_radii {
                if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(cfg_err("threshold.ladder_radii must be increasing, >= 2 rungs"));
                }
            }
        }
        if let Some(s) = &self.simulation {
            s.validate()?;
        }
        if let Some(h) = &self.hitting {
            h.region.resolve()?;
            h.start.resolve()?;
            if h.orders.is_empty() {
                return Err(cfg_err("hitting.orders is empty"));
            }
            if let Some(refs) = &h.references {
                if refs.len() != h.orders.len() {
                    return Err(cfg_err(
                        "hitting.references must match hitting.orders in length",
                    ));
                }
            }
        }
        if let Some(d) = &self.deviation {
            d.region.resolve()?;
            if !(d.order >= 0.0) {
                return Err(cfg_err("deviation.order must be nonnegative"));
            }
            if let Some(ls) = &d.lambdas {
                if ls.is_empty() || ls.iter().any(|l| !(*l > 0.0)) {
                    return Err(cfg_err("deviation.lambdas must be positive"));
                }
            }
            if let Some(ts) = &d.observation_times {
                if ts.is_empty() || ts[0] <= 0.0 || ts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(cfg_err(
                        "deviation.observation_times must be positive and increasing",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Section accessors that turn a missing section into a config
    /// error naming it.
    pub fn need_grid(&self) -> Result<&GridSection> {
        self.grid.as_ref().ok_or_else(|| cfg_err("missing [grid] section"))
    }

    pub fn need_simulation(&self) -> Result<&SimulationSection> {
        self.simulation
            .as_ref()
            .ok_or_else(|| cfg_err("missing [simulation] section"))
    }

    /// Seed precedence: command line, then [simulation], then top level.
    pub fn resolve_seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed
            .or(self.simulation.as_ref().and_then(|s| s.seed))
            .or(self.seed)
            .unwrap_or(0)
    }
}

impl ModelSection {
    fn validate(&self) -> Result<()> {
        match (&self.name, &self.drift, &self.sigma) {
            (Some(_), None, None) => Ok(()),
            (None, Some(_), Some(_)) => Ok(()),
            (Some(_), _, _) => Err(cfg_err(
                "model: give either a catalog name or inline drift/sigma, not both",
            )),
            _ => Err(cfg_err(
                "model: need a catalog name, or both drift and sigma expressions",
            )),
        }
    }

    /// Catalog entry for a named model; inline coefficients get a
    /// synthetic entry whose default intervals come from the domain.
    pub fn resolve(&self) -> Result<CatalogEntry> {
        if let Some(name) = &self.name {
            return model_by_name(name);
        }
        let drift = self.drift.as_deref().expect("validated");
        let sigma = self.sigma.as_deref().expect("validated");
        let x0 = self.reference_point.unwrap_or(0.0);
        let domain = self
            .domain
            .map(|d| (d[0], d[1]))
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let model = model_from_expressions("custom", drift, sigma, x0, domain)?;
        let lo = domain.0.max(x0 - 1.0);
        let hi = domain.1.min(x0 + 1.0);
        Ok(CatalogEntry {
            model,
            tags: vec!["custom"],
            killed_interval: (lo, hi),
            reflected_interval: (lo, hi),
            known_values: Vec::new(),
        })
    }
}

impl GridSection {
    fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(cfg_err(format!("grid.n must be at least 3, got {}", self.n)));
        }
        if !(self.interval[0] < self.interval[1]) {
            return Err(cfg_err(format!(
                "grid.interval [{}, {}] is not increasing",
                self.interval[0], self.interval[1]
            )));
        }
        match self.boundary.as_str() {
            "killed" | "reflected" => Ok(()),
            other => Err(cfg_err(format!(
                "grid.boundary must be \"killed\" or \"reflected\", got \"{other}\""
            ))),
        }
    }

    pub fn is_killed(&self) -> bool {
        self.boundary == "killed"
    }
}

impl RateSection {
    pub fn resolve(&self) -> Result<RateFunction> {
        let rate = match self.kind.as_str() {
            "constant" => RateFunction::Constant,
            "polynomial" => RateFunction::Polynomial {
                l: self
                    .exponent
                    .ok_or_else(|| cfg_err("polynomial rate needs an exponent"))?,
            },
            "exponential" => RateFunction::Exponential {
                lam: self
                    .lambda_rate
                    .ok_or_else(|| cfg_err("exponential rate needs lambda_rate"))?,
            },
            other => {
                return Err(cfg_err(format!(
                    "rate kind must be constant, polynomial, or exponential, got \"{other}\""
                )))
            }
        };
        rate.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(rate)
    }
}

impl SimulationSection {
    fn validate(&self) -> Result<()> {
        self.to_config(0).validate().map_err(|e| cfg_err(e.to_string()))
    }

    pub fn to_config(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n_paths: self.path_count,
            dt: self.time_step,
            trunc_radius: self.truncation_radius,
            horizon: self.horizon_time,
            seed,
            bridge: self.bridge.unwrap_or(true),
            noise_scale: self.noise_scale.unwrap_or(1.0),
        }
    }
}

impl RegionSection {
    pub fn resolve(&self) -> Result<Region> {
        let region = match self.kind.as_str() {
            "interval" => {
                let iv = self
                    .interval
                    .ok_or_else(|| cfg_err("interval region needs an interval"))?;
                Region::Interval { lo: iv[0], hi: iv[1] }
            }
            "exterior" => Region::Exterior {
                radius: self
                    .radius
                    .ok_or_else(|| cfg_err("exterior region needs a radius"))?,
            },
            other => {
                return Err(cfg_err(format!(
                    "region kind must be \"interval\" or \"exterior\", got \"{other}\""
                )))
            }
        };
        region.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(region)
    }
}

impl StartSection {
    pub fn resolve(&self) -> Result<StartLaw> {
        match self.kind.as_str() {
            "point" => Ok(StartLaw::Point(self.position.ok_or_else(|| {
                cfg_err("point start needs a position")
            })?)),
            "stationary" => Ok(StartLaw::Stationary),
            "stationary-restricted" => Ok(StartLaw::StationaryRestricted),
            other => Err(cfg_err(format!(
                "start kind must be point, stationary, or stationary-restricted, got \"{other}\""
            ))),
        }
    }
}

/// Parse a threshold expectation: "convergent" / "divergent" force the
/// classification, "any" records the result without asserting.
pub fn parse_expectation(s: &str) -> Result<Option<crate::verify::Classification>> {
    use crate::verify::Classification;
    match s.to_ascii_lowercase().as_str() {
        "convergent" => Ok(Some(Classification::Convergent)),
        "divergent" => Ok(Some(Classification::Divergent)),
        "inconclusive" => Ok(Some(Classification::Inconclusive)),
        "any" => Ok(None),
        other => Err(cfg_err(format!(
            "expected classification convergent/divergent/inconclusive/any, got \"{other}\""
        ))),
    }
}
