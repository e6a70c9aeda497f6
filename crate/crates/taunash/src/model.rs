//! Diffusion models on an interval: drift and diffusion coefficients,
//! natural scale and speed densities, invariant measures, and a small
//! catalog of built-in examples.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr;
use crate::numeric::{adaptive_quad, gamma};

/// Pointwise coefficient. Shared so models clone cheaply.
pub type Coef = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const QUAD_TOL: f64 = 1e-10;

/// A one-dimensional diffusion dX = b(X) dt + sigma(X) dW on an open
/// interval, with a distinguished reference point `x0` used to anchor the
/// scale function.
///
/// Scale density s'(x) = exp(-int_{x0}^x 2 b / sigma^2) and speed density
/// m'(x) = 2 / (sigma^2 s') satisfy s' m' sigma^2 / 2 = 1 identically; the
/// generator (1/2) sigma^2 f'' + b f' is d/dm d/dS in these coordinates.
/// Closed forms, when attached, shadow the quadrature route.
#[derive(Clone)]
pub struct DiffusionModel {
    pub name: String,
    drift: Coef,
    sigma: Coef,
    pub x0: f64,
    pub domain: (f64, f64),
    scale_closed: Option<Coef>,
    speed_closed: Option<Coef>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("domain", &self.domain)
            .finish()
    }
}

impl DiffusionModel {
    pub fn new(name: &str, drift: Coef, sigma: Coef, x0: f64, domain: (f64, f64)) -> Result<Self> {
        if !(domain.0 < x0 && x0 < domain.1) {
            return Err(Error::ModelDomain(format!(
                "reference point {x0} outside domain ({}, {})",
                domain.0, domain.1
            )));
        }
        let model = DiffusionModel {
            name: name.to_string(),
            drift,
            sigma,
            x0,
            domain,
            scale_closed: None,
            speed_closed: None,
        };
        model.probe(x0)?;
        Ok(model)
    }

    /// Attach closed-form scale and speed densities, replacing the
    /// quadrature-based route. Caller is responsible for consistency;
    /// `consistency_defect` measures it.
    pub fn with_closed_forms(mut self, scale_density: Coef, speed_density: Coef) -> Self {
        self.scale_closed = Some(scale_density);
        self.speed_closed = Some(speed_density);
        self
    }

    fn probe(&self, x: f64) -> Result<()> {
        let b = (self.drift)(x);
        let s = (self.sigma)(x);
        if !b.is_finite() {
            return Err(Error::ModelDomain(format!(
                "drift of '{}' not finite at x = {x}",
                self.name
            )));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::ModelDomain(format!(
                "diffusion coefficient of '{}' must be positive and finite, got {s} at x = {x}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(x)
    }

    pub fn contains(&self, a: f64, b: f64) -> bool {
        self.domain.0 <= a && a < b && b <= self.domain.1
    }

    /// Scale density s'(x), anchored so s'(x0) = 1 on the quadrature route.
    pub fn scale_density(&self, x: f64) -> Result<f64> {
        if let Some(sp) = &self.scale_closed {
            let v = sp(x);
            if v.is_finite() && v > 0.0 {
                return Ok(v);
            }
            return Err(Error::ModelDomain(format!(
                "closed-form scale density of '{}' invalid at x = {x}: {v}",
                self.name
            )));
        }
        let drift = &self.drift;
        let sigma = &self.sigma;
        let z = adaptive_quad(
            |y| 2.0 * drift(y) / (sigma(y) * sigma(y)),
            self.x0,
            x,
            QUAD_TOL,
        )?;
        let v = (-z).exp();
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::ModelDomain(format!(
                "scale density of '{}' overflowed at x = {x}",
                self.name
            )))
        }
    }

    /// Speed density m'(x) = 2 / (sigma^2(x) s'(x)).
    pub fn speed_density(&self, x: f64) -> Result<f64> {
        if let Some(mp) = &self.speed_closed {
            let v = mp(x);
            if v.is_finite() && v > 0.0 {
                return Ok(v);
            }
            return Err(Error::ModelDomain(format!(
                "closed-form speed density of '{}' invalid at x = {x}: {v}",
                self.name
            )));
        }
        self.probe(x)?;
        let s = (self.sigma)(x);
        let v = 2.0 / (s * s * self.scale_density(x)?);
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::ModelDomain(format!(
                "speed density of '{}' invalid at x = {x}",
                self.name
            )))
        }
    }

    /// |s'(x) m'(x) sigma^2(x)/2 - 1|; zero up to rounding for any
    /// consistent pair of closed forms.
    pub fn consistency_defect(&self, x: f64) -> Result<f64> {
        let s = (self.sigma)(x);
        Ok((self.scale_density(x)? * self.speed_density(x)? * s * s / 2.0 - 1.0).abs())
    }

    /// Scale increment S(b) - S(a) by quadrature of the scale density.
    pub fn scale_increment(&self, a: f64, b: f64) -> Result<f64> {
        adaptive_quad(|y| self.scale_density(y).unwrap_or(f64::NAN), a, b, QUAD_TOL)
    }

    /// Speed measure of [a, b].
    pub fn speed_mass(&self, a: f64, b: f64) -> Result<f64> {
        adaptive_quad(|y| self.speed_density(y).unwrap_or(f64::NAN), a, b, QUAD_TOL)
    }
}

/// Normalized restriction of the speed measure to an interval.
#[derive(Clone, Debug)]
pub struct InvariantMeasure {
    pub interval: (f64, f64),
    /// Speed mass of the interval before normalization.
    pub mass: f64,
    model: DiffusionModel,
}

impl InvariantMeasure {
    /// Probability density at `x`; zero outside the interval.
    pub fn density(&self, x: f64) -> Result<f64> {
        if x < self.interval.0 || x > self.interval.1 {
            return Ok(0.0);
        }
        Ok(self.model.speed_density(x)? / self.mass)
    }
}

/// Normalize the speed measure on `[a, b]` into a probability measure.
pub fn invariant_probability(model: &DiffusionModel, a: f64, b: f64) -> Result<InvariantMeasure> {
    if !model.contains(a, b) {
        return Err(Error::ModelDomain(format!(
            "interval [{a}, {b}] not inside the domain of '{}'",
            model.name
        )));
    }
    let mass = model.speed_mass(a, b)?;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::NotNormalizable(format!(
            "speed mass of [{a}, {b}] for '{}' is {mass}",
            model.name
        )));
    }
    Ok(InvariantMeasure {
        interval: (a, b),
        mass,
        model: model.clone(),
    })
}

/// Closed-form reference value attached to a catalog entry, with a short
/// note on where it comes from.
#[derive(Clone, Debug)]
pub struct KnownValue {
    pub name: &'static str,
    pub value: f64,
    pub oracle: &'static str,
}

/// A catalog model plus the intervals and reference values the
/// verification checks use by default.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub model: DiffusionModel,
    pub tags: Vec<&'static str>,
    /// Default interval for killed (absorbing) discretizations; chosen so
    /// the bottom eigenvalue is well above floating-point resolution.
    pub killed_interval: (f64, f64),
    /// Default truncation for reflected discretizations.
    pub reflected_interval: (f64, f64),
    pub known_values: Vec<KnownValue>,
}

/// Standard Brownian motion with generator d^2/dx^2 (sigma = sqrt 2).
/// Scale and speed densities are both 1.
pub fn bm2() -> DiffusionModel {
    let full = (f64::NEG_INFINITY, f64::INFINITY);
    DiffusionModel::new(
        "BM2",
        Arc::new(|_| 0.0),
        Arc::new(|_| std::f64::consts::SQRT_2),
        0.0,
        full,
    )
    .expect("static model")
    .with_closed_forms(Arc::new(|_| 1.0), Arc::new(|_| 1.0))
}

/// Ornstein-Uhlenbeck: drift -x, sigma = sqrt 2. Speed density is the
/// unnormalized Gaussian exp(-x^2/2).
pub fn ou() -> DiffusionModel {
    let full = (f64::NEG_INFINITY, f64::INFINITY);
    DiffusionModel::new(
        "OU",
        Arc::new(|x| -x),
        Arc::new(|_| std::f64::consts::SQRT_2),
        0.0,
        full,
    )
    .expect("static model")
    .with_closed_forms(
        Arc::new(|x: f64| (0.5 * x * x).exp()),
        Arc::new(|x: f64| (-0.5 * x * x).exp()),
    )
}

/// Heavy-tailed family: drift -r x / (1 + x^2), sigma = 1. The speed
/// density 2 (1 + x^2)^(-r) has polynomial tails of order 2r.
pub fn heavy_tail(r: f64) -> Result<DiffusionModel> {
    if !(r.is_finite() && r > 0.5) {
        return Err(Error::InvalidInput(format!(
            "heavy-tail exponent must exceed 1/2 for a finite speed measure, got {r}"
        )));
    }
    let full = (f64::NEG_INFINITY, f64::INFINITY);
    let name = if r == r.trunc() {
        format!("HT({})", r as i64)
    } else {
        format!("HT({r})")
    };
    Ok(DiffusionModel::new(
        &name,
        Arc::new(move |x| -r * x / (1.0 + x * x)),
        Arc::new(|_| 1.0),
        0.0,
        full,
    )?
    .with_closed_forms(
        Arc::new(move |x: f64| (1.0 + x * x).powf(r)),
        Arc::new(move |x: f64| 2.0 * (1.0 + x * x).powf(-r)),
    ))
}

fn bm2_entry() -> CatalogEntry {
    let pi = std::f64::consts::PI;
    CatalogEntry {
        model: bm2(),
        tags: vec!["brownian", "flat", "exact"],
        killed_interval: (0.0, 1.0),
        reflected_interval: (0.0, 1.0),
        known_values: vec![
            KnownValue {
                name: "killed_unit_eigenvalue_1",
                value: pi * pi,
                oracle: "sine modes of d^2/dx^2 on (0,1): k^2 pi^2",
            },
            KnownValue {
                name: "killed_unit_eigenvalue_2",
                value: 4.0 * pi * pi,
                oracle: "sine modes of d^2/dx^2 on (0,1): k^2 pi^2",
            },
            KnownValue {
                name: "mean_exit_from_center",
                value: 0.125,
                oracle: "v(x) = x(1-x)/2 solves -v'' = 1 with absorbing ends",
            },
            KnownValue {
                name: "second_exit_moment_from_center",
                value: 5.0 / 192.0,
                oracle: "w(x) = x(1 - 2x^2 + x^3)/12 solves -w'' = 2v",
            },
        ],
    }
}

fn ou_entry() -> CatalogEntry {
    CatalogEntry {
        model: ou(),
        tags: vec!["gaussian", "light-tail"],
        killed_interval: (-2.0, 2.0),
        reflected_interval: (-8.0, 8.0),
        known_values: vec![
            KnownValue {
                name: "speed_mass_full_line",
                value: (2.0 * std::f64::consts::PI).sqrt(),
                oracle: "Gaussian integral of exp(-x^2/2)",
            },
            KnownValue {
                name: "reflected_spectral_gap",
                value: 1.0,
                oracle: "Hermite spectrum 0, 1, 2, ... of f'' - x f'",
            },
        ],
    }
}

fn heavy_tail_entry(r: f64) -> Result<CatalogEntry> {
    let model = heavy_tail(r)?;
    let mut known = vec![
        KnownValue {
            name: "speed_mass_full_line",
            // int (1+x^2)^(-r) dx = sqrt(pi) Gamma(r - 1/2) / Gamma(r),
            // times the factor 2 in the speed density.
            value: 2.0 * std::f64::consts::PI.sqrt() * gamma(r - 0.5) / gamma(r),
            oracle: "Beta integral of (1+x^2)^(-r) over the line",
        },
        KnownValue {
            name: "weighted_moment_convergent_below",
            value: r - 1.5,
            oracle: "speed tails x^(-2r): order-l weighted moment converges for l < r - 3/2",
        },
        KnownValue {
            name: "weighted_moment_divergent_above",
            value: r - 0.5,
            oracle: "speed tails x^(-2r): order-l weighted moment diverges for l > r - 1/2",
        },
    ];
    known.retain(|kv| kv.value.is_finite());
    Ok(CatalogEntry {
        model,
        tags: vec!["heavy-tail", "polynomial"],
        killed_interval: (-1.0, 1.0),
        reflected_interval: (-50.0, 50.0),
        known_values: known,
    })
}

/// Built-in models with their default intervals and reference values.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        bm2_entry(),
        ou_entry(),
        heavy_tail_entry(4.0).expect("static model"),
    ]
}

/// Look up a model by name: `BM2`, `OU`, or `HT(r)` with a literal
/// exponent, e.g. `HT(4)` or `HT(2.5)`.
pub fn model_by_name(name: &str) -> Result<CatalogEntry> {
    let trimmed = name.trim();
    match trimmed {
        "BM2" => Ok(bm2_entry()),
        "OU" => Ok(ou_entry()),
        _ => {
            if let Some(inner) = trimmed.strip_prefix("HT(").and_then(|s| s.strip_suffix(')')) {
                let r: f64 = inner.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!("bad heavy-tail exponent '{inner}'"))
                })?;
                heavy_tail_entry(r)
            } else {
                Err(Error::InvalidInput(format!(
                    "unknown model '{trimmed}'; expected BM2, OU, or HT(r)"
                )))
            }
        }
    }
}

/// Build a model from drift and sigma expressions in the variable `x`.
/// Scale and speed come from quadrature against the reference point.
pub fn model_from_expressions(
    name: &str,
    drift_src: &str,
    sigma_src: &str,
    x0: f64,
    domain: (f64, f64),
) -> Result<DiffusionModel> {
    let drift = expr::parse(drift_src)?;
    let sigma = expr::parse(sigma_src)?;
    let model = DiffusionModel::new(
        name,
        Arc::new(move |x| drift.eval(x)),
        Arc::new(move |x| sigma.eval(x)),
        x0,
        domain,
    )?;
    // Probe a handful of points near the reference before any heavy use.
    let lo = domain.0.max(x0 - 1.0);
    let hi = domain.1.min(x0 + 1.0);
    for i in 0..=8 {
        let x = lo + (hi - lo) * i as f64 / 8.0;
        model.probe(x)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn catalog_closed_forms_match_sde_route() {
        // Strip closed forms and compare against the quadrature route.
        for entry in catalog() {
            let m = &entry.model;
            let bare = DiffusionModel {
                scale_closed: None,
                speed_closed: None,
                ..m.clone()
            };
            for &x in &[-1.5, -0.3, 0.0, 0.7, 1.5] {
                assert_relative_eq!(
                    m.scale_density(x).unwrap(),
                    bare.scale_density(x).unwrap(),
                    max_relative = 1e-8
                );
                assert_relative_eq!(
                    m.speed_density(x).unwrap(),
                    bare.speed_density(x).unwrap(),
                    max_relative = 1e-8
                );
            }
        }
    }

    #[test]
    fn consistency_identity_holds() {
        for entry in catalog() {
            for &x in &[-2.0, -0.5, 0.0, 1.0, 3.0] {
                assert!(entry.model.consistency_defect(x).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn heavy_tail_speed_mass_reaches_closed_form() {
        // HT(4): speed mass of the line is 5 pi / 8; the truncation to
        // [-50, 50] captures it to the x^(-7) tail.
        let entry = model_by_name("HT(4)").unwrap();
        let mass = entry.model.speed_mass(-50.0, 50.0).unwrap();
        let full = 5.0 * std::f64::consts::PI / 8.0;
        let kv = entry
            .known_values
            .iter()
            .find(|kv| kv.name == "speed_mass_full_line")
            .unwrap();
        assert_relative_eq!(kv.value, full, max_relative = 1e-12);
        // The x^(-7) tail beyond 50 (~2e-13 relative) sits below quadrature
        // resolution, so truncated and full masses agree to that tolerance.
        assert_relative_eq!(mass, full, max_relative = 1e-9);
    }

    #[test]
    fn ou_invariant_measure_normalizes() {
        let mu = invariant_probability(&ou(), -8.0, 8.0).unwrap();
        assert_relative_eq!(
            mu.mass,
            (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-8
        );
        let total = adaptive_quad(|x| mu.density(x).unwrap(), -8.0, 8.0, 1e-9).unwrap();
        assert_relative_eq!(total, 1.0, max_relative = 1e-8);
        assert_eq!(mu.density(9.0).unwrap(), 0.0);
    }

    #[test]
    fn scale_increment_is_exact_for_flat_scale() {
        let m = bm2();
        assert_relative_eq!(m.scale_increment(0.2, 0.9).unwrap(), 0.7, max_relative = 1e-12);
    }

    #[test]
    fn expression_models_work_end_to_end() {
        let m = model_from_expressions(
            "HT(4)-by-hand",
            "-4*x/(1+x^2)",
            "1",
            0.0,
            (f64::NEG_INFINITY, f64::INFINITY),
        )
        .unwrap();
        let reference = heavy_tail(4.0).unwrap();
        for &x in &[-2.0, 0.4, 1.0] {
            assert_relative_eq!(
                m.scale_density(x).unwrap(),
                reference.scale_density(x).unwrap(),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(heavy_tail(0.5).is_err());
        assert!(model_by_name("BM3").is_err());
        assert!(model_by_name("HT(abc)").is_err());
        // sigma vanishing at a probed point
        assert!(model_from_expressions("bad", "0", "x", 0.0, (-1.0, 1.0)).is_err());
        // reference point outside the domain
        assert!(model_from_expressions("bad", "0", "1", 5.0, (-1.0, 1.0)).is_err());
    }

    #[test]
    fn model_names_format_cleanly() {
        assert_eq!(heavy_tail(4.0).unwrap().name, "HT(4)");
        assert_eq!(heavy_tail(2.5).unwrap().name, "HT(2.5)");
    }
}
