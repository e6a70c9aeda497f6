//! The verification checks: a three-route equality chain for modulated
//! moments, Nash-type inequalities on killed and whole-line operators,
//! polynomial decay of the centered semigroup, and a truncation study of
//! the weighted moment functional.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::discretize::{build_generator, build_reflected_generator, Boundary, GeneratorMatrix};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::moments::{modulated_moment_by_solves, moment_recursion};
use crate::numeric::{fit_line, logspace, pairwise_sum};
use crate::report::{CheckOutput, CsvTable, VerificationReport};
use crate::spectral::{
    eigendecompose, spectral_weights, RateFunction, SpectralDecomposition, SpectralMeasure,
};

/// Conjugate exponents p = (l+2)/(l+1), q = l+2 kept as one fraction with
/// a shared denominator, so 1/p + 1/q = (num_e + num_phi)/den = 1 holds as
/// a rational identity by construction rather than as a float sum.
#[derive(Clone, Copy, Debug)]
pub struct HolderPair {
    num_energy: f64,
    num_phi: f64,
    den: f64,
}

impl HolderPair {
    pub fn for_order(l: f64) -> Result<Self> {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "Nash order must be nonnegative, got {l}"
            )));
        }
        let num_energy = l + 1.0;
        let num_phi = 1.0;
        Ok(HolderPair {
            num_energy,
            num_phi,
            den: num_energy + num_phi,
        })
    }

    pub fn p(&self) -> f64 {
        self.den / self.num_energy
    }

    pub fn q(&self) -> f64 {
        self.den / self.num_phi
    }

    pub fn inv_p(&self) -> f64 {
        self.num_energy / self.den
    }

    pub fn inv_q(&self) -> f64 {
        self.num_phi / self.den
    }

    /// E^(1/p) Phi^(1/q) evaluated through one exp-log chain over the
    /// shared denominator. Zero factors collapse the product to zero,
    /// infinite ones to infinity.
    pub fn holder_product(&self, energy: f64, phi: f64) -> f64 {
        if energy.is_infinite() || phi.is_infinite() {
            return f64::INFINITY;
        }
        if energy <= 0.0 || phi <= 0.0 {
            return 0.0;
        }
        ((self.num_energy * energy.ln() + self.num_phi * phi.ln()) / self.den).exp()
    }

    /// Mixed power a^(1/q) used by the split functional; same convention.
    pub fn root_q(&self, a: f64) -> f64 {
        if a.is_infinite() {
            return f64::INFINITY;
        }
        if a <= 0.0 {
            return 0.0;
        }
        (self.num_phi * a.ln() / self.den).exp()
    }

    /// Inverse of `root_q`.
    pub fn pow_q(&self, a: f64) -> f64 {
        if a.is_infinite() {
            return f64::INFINITY;
        }
        if a <= 0.0 {
            return 0.0;
        }
        (self.den * a.ln() / self.num_phi).exp()
    }
}

/// Everything the killed Nash inequality needs about one function:
/// its Parseval mass, Dirichlet energy, and weighted moment functional,
/// with the conjugate pair that ties them together.
#[derive(Clone, Debug)]
pub struct NashWitness {
    pub order: f64,
    pub holder: HolderPair,
    pub norm_sq: f64,
    pub energy: f64,
    pub phi: f64,
    pub parseval_defect: f64,
}

impl NashWitness {
    pub fn from_measure(measure: &SpectralMeasure, direct_norm_sq: f64, l: f64) -> Result<Self> {
        let holder = HolderPair::for_order(l)?;
        let norm_sq = measure.total();
        let scale = norm_sq.abs().max(direct_norm_sq.abs()).max(1e-300);
        let parseval_defect = (norm_sq - direct_norm_sq).abs() / scale;
        let energy = measure.functional(|xi| xi);
        let phi = measure.functional(|xi| {
            if xi > 0.0 {
                xi.powf(-(l + 1.0))
            } else {
                f64::INFINITY
            }
        });
        Ok(NashWitness {
            order: l,
            holder,
            norm_sq,
            energy,
            phi,
            parseval_defect,
        })
    }

    /// Right-hand side E^(1/p) Phi^(1/q).
    pub fn bound(&self) -> f64 {
        self.holder.holder_product(self.energy, self.phi)
    }

    /// Relative slack of the inequality; negative means violated.
    pub fn slack(&self) -> f64 {
        let b = self.bound();
        if b.is_infinite() {
            return f64::INFINITY;
        }
        (b - self.norm_sq) / b.abs().max(self.norm_sq.abs()).max(1.0)
    }
}

/// Deterministic family of node vectors with entries uniform in [-1, 1].
pub fn random_bounded_family(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect()
}

pub struct NashKilledOptions {
    pub slack_tol: f64,
    pub parseval_tol: f64,
    pub equality_tol: f64,
    pub contraction_times: usize,
}

impl Default for NashKilledOptions {
    fn default() -> Self {
        NashKilledOptions {
            slack_tol: 1e-12,
            parseval_tol: 1e-10,
            equality_tol: 1e-10,
            contraction_times: 20,
        }
    }
}

/// Check || f ||^2 <= E(f)^(1/p) Phi_l(f)^(1/q) on a killed decomposition
/// for every order in `l_values` and every function in `fs`, along with
/// saturation at the bottom mode, homogeneity of Phi, and contraction of
/// Phi under the semigroup.
pub fn verify_nash_killed(
    dec: &SpectralDecomposition,
    l_values: &[f64],
    fs: &[Vec<f64>],
    opts: &NashKilledOptions,
) -> Result<CheckOutput> {
    if !dec.gen.is_killed() {
        return Err(Error::InvalidInput(
            "killed Nash check needs an absorbing boundary".to_string(),
        ));
    }
    if fs.is_empty() || l_values.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one function and one order".to_string(),
        ));
    }
    let xi1 = dec.eigenvalues[0];
    if xi1 <= 0.0 {
        return Err(Error::Numeric(format!(
            "killed operator has nonpositive bottom eigenvalue {xi1}"
        )));
    }
    for &l in l_values {
        HolderPair::for_order(l)?;
    }

    let mut report = VerificationReport::new("nash-killed", &dec.gen.grid_label());
    report.input("orders", format_list(l_values));
    report.input("family_size", fs.len());
    report.input("n", dec.n());
    report.quantity("xi_1", xi1, "eigendecomposition");

    // Per function: Parseval defect and, per order, the witness triple.
    // Collected in input order, so reductions are deterministic.
    let rows: Vec<(f64, Vec<NashWitness>)> = fs
        .par_iter()
        .map(|f| {
            let measure = spectral_weights(dec, f);
            let direct = dec.gen.norm_sq(f);
            let witnesses: Vec<NashWitness> = l_values
                .iter()
                .map(|&l| NashWitness::from_measure(&measure, direct, l).expect("validated order"))
                .collect();
            (witnesses[0].parseval_defect, witnesses)
        })
        .collect();

    let worst_defect = rows.iter().map(|(d, _)| *d).fold(0.0f64, f64::max);
    report.assert_le("parseval_defect_max", worst_defect, opts.parseval_tol, 0.0);

    for (j, &l) in l_values.iter().enumerate() {
        let mut worst: Option<&NashWitness> = None;
        for (_, ws) in &rows {
            let w = &ws[j];
            if worst.map_or(true, |cur| w.slack() < cur.slack()) {
                worst = Some(w);
            }
        }
        let w = worst.expect("nonempty family");
        report.assert_le(
            &format!("nash_bound_order_{l}"),
            w.norm_sq,
            w.bound(),
            opts.slack_tol,
        );

        // The bottom mode saturates the inequality.
        let e1 = &dec.eigenvectors[0];
        let m1 = spectral_weights(dec, e1);
        let w1 = NashWitness::from_measure(&m1, dec.gen.norm_sq(e1), l)?;
        report.assert_close(
            &format!("equality_at_bottom_mode_order_{l}"),
            w1.norm_sq,
            w1.bound(),
            opts.equality_tol,
        );

        // Phi is 2-homogeneous and contracts along the semigroup.
        let f0 = &fs[0];
        let measure = spectral_weights(dec, f0);
        let phi = |m: &SpectralMeasure| {
            m.functional(|xi| if xi > 0.0 { xi.powf(-(l + 1.0)) } else { f64::INFINITY })
        };
        let base_phi = phi(&measure);
        let c = 3.7;
        let scaled: Vec<f64> = f0.iter().map(|&v| c * v).collect();
        let scaled_phi = phi(&spectral_weights(dec, &scaled));
        report.assert_close(
            &format!("phi_homogeneity_order_{l}"),
            scaled_phi,
            c * c * base_phi,
            1e-12,
        );

        let times = logspace(1e-3 / xi1, 10.0 / xi1, opts.contraction_times);
        let mut worst_phi_t = f64::NEG_INFINITY;
        for &t in &times {
            let evolved = SpectralMeasure {
                atoms: measure
                    .atoms
                    .iter()
                    .map(|&(xi, w)| (xi, (-2.0 * xi * t).exp() * w))
                    .collect(),
            };
            worst_phi_t = worst_phi_t.max(phi(&evolved));
        }
        report.assert_le(
            &format!("phi_contraction_order_{l}"),
            worst_phi_t,
            base_phi,
            1e-12,
        );
    }

    Ok(CheckOutput {
        report,
        curve: None,
    })
}

pub struct WholeLineOptions {
    pub n: usize,
    pub slack_tol: f64,
    pub parseval_tol: f64,
    /// When positive, also scan this many candidate split points across
    /// [-2, 2] and report the one minimizing the split functional.
    pub scan_candidates: usize,
}

impl Default for WholeLineOptions {
    fn default() -> Self {
        WholeLineOptions {
            n: 400,
            slack_tol: 1e-10,
            parseval_tol: 1e-10,
            scan_candidates: 0,
        }
    }
}

struct SplitMachinery {
    parent: GeneratorMatrix,
    left: SpectralDecomposition,
    right: SpectralDecomposition,
    face: usize,
    m_left: f64,
    m_right: f64,
}

fn split_machinery(
    model: &DiffusionModel,
    trunc_radius: f64,
    split_point: f64,
    l: f64,
    n: usize,
) -> Result<SplitMachinery> {
    let parent = build_reflected_generator(model, -trunc_radius, trunc_radius, n)?;
    let (left_gen, right_gen, face) = parent.split_at_face(split_point)?;
    let left = eigendecompose(&left_gen)?;
    let right = eigendecompose(&right_gen)?;

    // Modulated mass of each half: the speed integral of the (l+1)-th
    // hitting moment of the split face. Integer orders go through the
    // recursion; fractional ones through Gamma(l+2) sum xi^-(l+1) w(1).
    let side_mass = |side: &SpectralDecomposition| -> Result<f64> {
        if l.fract() == 0.0 && l >= 0.0 && l <= 60.0 {
            let k = l as usize + 1;
            let table = moment_recursion(&side.gen, k)?;
            Ok(table.pairing(&side.gen, k))
        } else {
            let ones = vec![1.0; side.n()];
            let meas = spectral_weights(side, &ones);
            let g = crate::numeric::gamma(l + 2.0);
            Ok(g * meas.functional(|xi| {
                if xi > 0.0 {
                    xi.powf(-(l + 1.0))
                } else {
                    f64::INFINITY
                }
            }))
        }
    };
    let m_left = side_mass(&left)?;
    let m_right = side_mass(&right)?;
    Ok(SplitMachinery {
        parent,
        left,
        right,
        face,
        m_left,
        m_right,
    })
}

/// Whole-line Nash check: on the reflected truncation of the model, the
/// centered variance of every test function obeys
/// Var(F) <= E(F)^(1/p) Phi_a^(1/q), where the split functional Phi_a glues
/// the one-sided weighted moments at the split point a through the q-th
/// root, and Phi_a itself is controlled by the oscillation of F times the
/// one-sided modulated masses.
pub fn verify_nash_whole(
    model: &DiffusionModel,
    trunc_radius: f64,
    split_point: f64,
    l: f64,
    fs: &[Vec<f64>],
    opts: &WholeLineOptions,
) -> Result<CheckOutput> {
    let holder = HolderPair::for_order(l)?;
    if fs.is_empty() {
        return Err(Error::InvalidInput("need at least one function".to_string()));
    }
    let mach = split_machinery(model, trunc_radius, split_point, l, opts.n)?;
    let parent = &mach.parent;
    let n = parent.n();
    for f in fs {
        if f.len() != n {
            return Err(Error::InvalidInput(format!(
                "function length {} does not match grid size {n}",
                f.len()
            )));
        }
    }
    let j = mach.face;
    let m_tot = parent.total_mass();

    let mut report = VerificationReport::new("nash-whole", &model.name);
    report.input("truncation_radius", trunc_radius);
    report.input("split_point", split_point);
    report.input("order", l);
    report.input("n", n);
    report.input("family_size", fs.len());
    report.quantity("split_face_position", parent.face_position(j), "grid");
    report.quantity("total_mass", m_tot, "speed-measure");
    report.quantity("xi_1_left", mach.left.eigenvalues[0], "eigendecomposition");
    report.quantity("xi_1_right", mach.right.eigenvalues[0], "eigendecomposition");
    let mass_route = if l.fract() == 0.0 { "moment-recursion" } else { "spectral-sum" };
    report.quantity("side_mass_left", mach.m_left, mass_route);
    report.quantity("side_mass_right", mach.m_right, mass_route);

    struct Row {
        var_raw: f64,
        bound: f64,
        phi_split: f64,
        osc_bound: f64,
        defect: f64,
    }

    let ones = vec![1.0; n];
    let rows: Vec<Row> = fs
        .iter()
        .map(|f| {
            // Center at the invariant mean; the variance is the squared
            // distance from the best constant, so any reference value c
            // used by the split can only overestimate it.
            let mean = parent.inner(f, &ones) / m_tot;
            let centered: Vec<f64> = f.iter().map(|&v| v - mean).collect();
            let var_raw = parent.norm_sq(&centered);
            let energy = parent.dirichlet_form(f);

            let c = 0.5 * (f[j] + f[j + 1]);
            let g_left: Vec<f64> = f[..=j].iter().map(|&v| v - c).collect();
            let g_right: Vec<f64> = f[j + 1..].iter().map(|&v| v - c).collect();

            let meas_l = spectral_weights(&mach.left, &g_left);
            let meas_r = spectral_weights(&mach.right, &g_right);
            let phi = |m: &SpectralMeasure| {
                m.functional(|xi| if xi > 0.0 { xi.powf(-(l + 1.0)) } else { f64::INFINITY })
            };
            let phi_l = phi(&meas_l);
            let phi_r = phi(&meas_r);
            let phi_split = holder.pow_q(holder.root_q(phi_l) + holder.root_q(phi_r));
            let bound = holder.holder_product(energy, phi_split);

            let defect_l = (meas_l.total() - mach.left.gen.norm_sq(&g_left)).abs()
                / meas_l.total().abs().max(1.0);
            let defect_r = (meas_r.total() - mach.right.gen.norm_sq(&g_right)).abs()
                / meas_r.total().abs().max(1.0);

            let osc = centered.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let osc_bound = 4.0
                * osc
                * osc
                * holder.pow_q(holder.root_q(mach.m_left) + holder.root_q(mach.m_right));

            Row {
                var_raw,
                bound,
                phi_split,
                osc_bound,
                defect: defect_l.max(defect_r),
            }
        })
        .collect();

    let worst_main = rows
        .iter()
        .min_by(|a, b| {
            let sa = (a.bound - a.var_raw) / a.bound.abs().max(a.var_raw).max(1.0);
            let sb = (b.bound - b.var_raw) / b.bound.abs().max(b.var_raw).max(1.0);
            sa.total_cmp(&sb)
        })
        .expect("nonempty family");
    report.assert_le(
        "whole_line_nash_bound",
        worst_main.var_raw,
        worst_main.bound,
        opts.slack_tol,
    );

    let worst_osc = rows
        .iter()
        .min_by(|a, b| {
            let sa = (a.osc_bound - a.phi_split) / a.osc_bound.abs().max(a.phi_split).max(1.0);
            let sb = (b.osc_bound - b.phi_split) / b.osc_bound.abs().max(b.phi_split).max(1.0);
            sa.total_cmp(&sb)
        })
        .expect("nonempty family");
    report.assert_le(
        "phi_split_oscillation_bound",
        worst_osc.phi_split,
        worst_osc.osc_bound,
        opts.slack_tol,
    );

    let worst_defect = rows.iter().map(|r| r.defect).fold(0.0f64, f64::max);
    report.assert_le("parseval_defect_max", worst_defect, opts.parseval_tol, 0.0);
    report.assert_flag(
        "total_mass_exceeds_one",
        m_tot > 1.0,
        &format!("normalized variance = raw / {m_tot} is below the raw bound"),
    );

    if opts.scan_candidates > 1 {
        let k = opts.scan_candidates;
        let mut best_pos = f64::NAN;
        let mut best_phi = f64::INFINITY;
        for i in 0..k {
            let cand = -2.0 + 4.0 * i as f64 / (k - 1) as f64;
            let m = split_machinery(model, trunc_radius, cand, l, opts.n)?;
            let ones_l = vec![1.0; m.left.n()];
            let ones_r = vec![1.0; m.right.n()];
            let phi = |dec: &SpectralDecomposition, v: &[f64]| {
                spectral_weights(dec, v).functional(|xi| {
                    if xi > 0.0 {
                        xi.powf(-(l + 1.0))
                    } else {
                        f64::INFINITY
                    }
                })
            };
            let split_phi = holder.pow_q(
                holder.root_q(phi(&m.left, &ones_l)) + holder.root_q(phi(&m.right, &ones_r)),
            );
            if split_phi < best_phi {
                best_phi = split_phi;
                best_pos = m.parent.face_position(m.face);
            }
        }
        report.quantity("scan_best_split", best_pos, "grid-scan");
        report.quantity("scan_best_phi_of_one", best_phi, "spectral");
    }

    Ok(CheckOutput {
        report,
        curve: None,
    })
}

pub struct EqualityOptions {
    pub solve_tol: f64,
    pub integral_tol: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub panels: usize,
}

impl Default for EqualityOptions {
    fn default() -> Self {
        EqualityOptions {
            solve_tol: 1e-6,
            integral_tol: 1e-4,
            u_lo: -30.0,
            u_hi: 30.0,
            panels: 4000,
        }
    }
}

/// Route (iii): integral over t of R'(t) Theta(t) with Theta the survival
/// pairing sum_k w_k exp(-xi_k t), computed in log time u = ln t so each
/// atom contributes exp(g(u)) with g handled before exponentiation; no
/// inf * 0 ambiguity can arise.
fn time_integral_route(measure: &SpectralMeasure, rate: RateFunction, opts: &EqualityOptions) -> f64 {
    // Divergence decision by branch: the smallest eigenvalue carrying
    // weight decides against an exponential rate.
    if let RateFunction::Exponential { lam } = rate {
        let min_xi = measure
            .atoms
            .iter()
            .filter(|&&(_, w)| w > 0.0)
            .map(|&(xi, _)| xi)
            .fold(f64::INFINITY, f64::min);
        if lam >= min_xi {
            return f64::INFINITY;
        }
    }
    let shift = |xi: f64| match rate {
        RateFunction::Constant => xi,
        RateFunction::Polynomial { l: _ } => xi,
        RateFunction::Exponential { lam } => xi - lam,
    };
    let power = match rate {
        RateFunction::Constant => 1.0,
        RateFunction::Polynomial { l } => l + 1.0,
        RateFunction::Exponential { lam: _ } => 1.0,
    };
    // Integrand in u: sum_k w_k exp(power*u - shift(xi_k) e^u).
    let integrand = |u: f64| -> f64 {
        let eu = u.exp();
        let mut acc = 0.0;
        for &(xi, w) in &measure.atoms {
            if w == 0.0 {
                continue;
            }
            let arg = power * u - shift(xi) * eu;
            if arg > -745.0 {
                acc += w * arg.exp();
            }
        }
        acc
    };
    let n = opts.panels;
    let h = (opts.u_hi - opts.u_lo) / n as f64;
    let mut acc = integrand(opts.u_lo) + integrand(opts.u_hi);
    for i in 1..n {
        let u = opts.u_lo + h * i as f64;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(u);
    }
    acc * h / 3.0
}

/// Truncation bounds for the log-time integral, from the extreme
/// eigenvalues: mass below t_min plus the exponentially killed tail
/// above t_max.
fn time_integral_tail_bound(
    measure: &SpectralMeasure,
    rate: RateFunction,
    opts: &EqualityOptions,
) -> f64 {
    let total = measure.total();
    let t_min = opts.u_lo.exp();
    let t_max = opts.u_hi.exp();
    let min_xi = measure
        .atoms
        .iter()
        .filter(|&&(_, w)| w > 0.0)
        .map(|&(xi, _)| xi)
        .fold(f64::INFINITY, f64::min);
    let low = match rate {
        RateFunction::Constant => total * t_min,
        RateFunction::Polynomial { l } => total * t_min.powf(l + 1.0) / (l + 1.0),
        RateFunction::Exponential { lam } => total * ((lam * t_min).exp_m1() / lam.max(1e-300)),
    };
    // Above t_max every atom is below exp(-min_xi t_max); one more factor
    // of the transform magnitude bounds the remainder crudely but safely.
    let kill = -0.5 * min_xi * t_max;
    let high = if kill < -700.0 {
        0.0
    } else {
        total * kill.exp() * rate.laplace(0.5 * min_xi).min(f64::MAX)
    };
    low + high
}

/// Compare three routes to the modulated moment of f = 1 on a killed
/// decomposition: (i) linear solves, (ii) the spectral sum, (iii) the
/// log-time integral. Optional reference values are asserted against
/// routes (i)/(ii) at the solve tolerance and route (iii) at the integral
/// tolerance.
pub fn verify_equality_chain(
    dec: &SpectralDecomposition,
    rates: &[RateFunction],
    references: &[Option<f64>],
    opts: &EqualityOptions,
) -> Result<CheckOutput> {
    if rates.is_empty() || rates.len() != references.len() {
        return Err(Error::InvalidInput(
            "need rates with aligned references".to_string(),
        ));
    }
    if opts.panels < 2 || opts.panels % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "Simpson panel count must be even and positive, got {}",
            opts.panels
        )));
    }
    let xi1 = dec.eigenvalues[0];
    if !dec.gen.is_killed() || xi1 <= 0.0 {
        return Err(Error::InvalidInput(
            "equality chain needs a killed decomposition".to_string(),
        ));
    }
    let n = dec.n();
    let ones = vec![1.0; n];
    let measure = spectral_weights(dec, &ones);

    let mut report = VerificationReport::new("equality", &dec.gen.grid_label());
    report.input("n", n);
    report.input("rates", rates.iter().map(|r| r.describe()).collect::<Vec<_>>().join("; "));
    report.quantity("xi_1", xi1, "eigendecomposition");

    let mut curve = CsvTable::new(&["rate_index", "route", "value"]);

    for (idx, (&rate, reference)) in rates.iter().zip(references).enumerate() {
        rate.validate()?;
        let tag = rate.describe();
        let spectral = measure.functional(|xi| rate.laplace(xi));
        report.quantity(&format!("{tag}_route_spectral"), spectral, "spectral-sum");
        curve.push(vec![idx as f64, 1.0, spectral]);

        let solvable = !matches!(rate, RateFunction::Polynomial { l } if l.fract() != 0.0);
        if solvable {
            let by_solve = modulated_moment_by_solves(&dec.gen, &ones, rate, xi1)?;
            report.quantity(&format!("{tag}_route_solve"), by_solve, "linear-solves");
            report.assert_close(
                &format!("{tag}_solve_vs_spectral"),
                by_solve,
                spectral,
                opts.solve_tol,
            );
            curve.push(vec![idx as f64, 0.0, by_solve]);
            if let Some(r) = reference {
                report.assert_close(&format!("{tag}_solve_vs_reference"), by_solve, *r, opts.solve_tol);
            }
        }

        let by_integral = time_integral_route(&measure, rate, opts);
        let tail = time_integral_tail_bound(&measure, rate, opts);
        report.quantity(&format!("{tag}_route_integral"), by_integral, "log-time-integral");
        report.quantity(&format!("{tag}_integral_tail_bound"), tail, "analytic");
        report.assert_close(
            &format!("{tag}_integral_vs_spectral"),
            by_integral,
            spectral,
            opts.integral_tol,
        );
        curve.push(vec![idx as f64, 2.0, by_integral]);

        if let Some(r) = reference {
            report.assert_close(
                &format!("{tag}_spectral_vs_reference"),
                spectral,
                *r,
                opts.solve_tol,
            );
            report.assert_close(
                &format!("{tag}_integral_vs_reference"),
                by_integral,
                *r,
                opts.integral_tol,
            );
        }
    }

    Ok(CheckOutput {
        report,
        curve: Some(curve),
    })
}

pub struct DecayOptions {
    pub window: (f64, f64),
    pub points: usize,
    pub slope_margin: f64,
    pub window_guard: bool,
    pub exponential_weight_cut: f64,
}

impl Default for DecayOptions {
    fn default() -> Self {
        DecayOptions {
            window: (1.0, 30.0),
            points: 40,
            slope_margin: 0.5,
            window_guard: true,
            exponential_weight_cut: 1e-8,
        }
    }
}

/// Fit the log-log slope of the centered variance
/// Var(t) = sum_{k >= 2} w_k exp(-2 xi_k t) over the window and assert it
/// is at most -(l+1) + margin. The bottom (constant) mode is excluded
/// structurally, not by subtraction.
pub fn verify_decay(
    dec: &SpectralDecomposition,
    f: &[f64],
    l: f64,
    opts: &DecayOptions,
) -> Result<CheckOutput> {
    if dec.gen.is_killed() {
        return Err(Error::InvalidInput(
            "decay check expects a reflected decomposition".to_string(),
        ));
    }
    let (t_lo, t_hi) = opts.window;
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::InvalidInput(format!(
            "bad time window [{t_lo}, {t_hi}]"
        )));
    }
    if f.len() != dec.n() {
        return Err(Error::InvalidInput(format!(
            "function length {} does not match grid size {}",
            f.len(),
            dec.n()
        )));
    }
    let xi2 = dec.eigenvalues[1];
    if opts.window_guard && t_hi > 0.5 / xi2 {
        return Err(Error::Window(format!(
            "window end {t_hi} exceeds 0.5/xi_2 = {}; the finite truncation decays \
             exponentially there, disable the guard to override",
            0.5 / xi2
        )));
    }

    let mean = {
        let ones = vec![1.0; dec.n()];
        dec.gen.inner(f, &ones) / dec.gen.total_mass()
    };
    let centered: Vec<f64> = f.iter().map(|&v| v - mean).collect();
    let measure = spectral_weights(dec, &centered);
    // Drop the constant mode; the centered function has no component
    // there beyond rounding.
    let tail_atoms: Vec<(f64, f64)> = measure.atoms[1..].to_vec();
    let tail_total = pairwise_sum(&tail_atoms.iter().map(|&(_, w)| w).collect::<Vec<_>>());

    let mut report = VerificationReport::new("decay", &dec.gen.grid_label());
    report.input("order", l);
    report.input("window", format!("[{t_lo}, {t_hi}]"));
    report.input("points", opts.points);
    report.quantity("xi_1", dec.eigenvalues[0], "eigendecomposition");
    report.quantity("xi_2", xi2, "eigendecomposition");
    report.quantity("variance_mass", tail_total, "parseval");

    let top_share = tail_atoms.first().map(|&(_, w)| w / tail_total).unwrap_or(0.0);
    let exponential_regime = top_share >= 1.0 - opts.exponential_weight_cut;

    let times = logspace(t_lo, t_hi, opts.points);
    let mut curve = CsvTable::new(&["series", "x", "y"]);
    let mut xs = Vec::with_capacity(times.len());
    let mut ys = Vec::with_capacity(times.len());
    for &t in &times {
        let terms: Vec<f64> = tail_atoms
            .iter()
            .map(|&(xi, w)| w * (-2.0 * xi * t).exp())
            .collect();
        let var = pairwise_sum(&terms);
        curve.push(vec![0.0, t, var]);
        if var > 1e-290 {
            xs.push(t.ln());
            ys.push(var.ln());
        }
    }
    if xs.len() < opts.points / 2 {
        return Err(Error::Numeric(
            "variance underflowed across most of the window".to_string(),
        ));
    }
    let (slope, intercept) = fit_line(&xs, &ys);
    report.quantity("log_log_slope", slope, "least-squares");
    report.quantity("log_log_intercept", intercept, "least-squares");

    if exponential_regime {
        report.assert_flag(
            "spectral_regime",
            true,
            &format!(
                "top mode carries {top_share} of the variance mass; decay is \
                 exponential and the polynomial slope test does not apply"
            ),
        );
    } else {
        report.assert_flag("spectral_regime", true, "polynomial regime");
        report.assert_le(
            "slope_bound",
            slope,
            -(l + 1.0) + opts.slope_margin,
            0.0,
        );
    }

    Ok(CheckOutput {
        report,
        curve: Some(curve),
    })
}

pub struct DecayDoublingOptions {
    pub base: DecayOptions,
    pub trunc_radius: f64,
    pub h: f64,
    pub max_slope_change: f64,
}

impl Default for DecayDoublingOptions {
    fn default() -> Self {
        DecayDoublingOptions {
            base: DecayOptions::default(),
            trunc_radius: 100.0,
            h: 0.25,
            max_slope_change: 0.2,
        }
    }
}

/// Run the decay check at the given truncation and at twice it (same cell
/// size), asserting the fitted slope moves by less than the admissible
/// change: the polynomial window is then a feature of the model, not of
/// the truncation.
pub fn verify_decay_with_doubling(
    model: &DiffusionModel,
    sign_split: f64,
    l: f64,
    opts: &DecayDoublingOptions,
) -> Result<CheckOutput> {
    let mut outputs = Vec::new();
    for (series, radius) in [(0.0, opts.trunc_radius), (1.0, 2.0 * opts.trunc_radius)] {
        let n = ((2.0 * radius) / opts.h).round() as usize;
        let gen = build_reflected_generator(model, -radius, radius, n)?;
        let dec = eigendecompose(&gen)?;
        let f: Vec<f64> = gen
            .grid
            .nodes
            .iter()
            .map(|&x| if x >= sign_split { 1.0 } else { -1.0 })
            .collect();
        let out = verify_decay(&dec, &f, l, &opts.base)?;
        outputs.push((series, radius, out));
    }

    let slope0 = outputs[0].2.report.get_quantity("log_log_slope").unwrap();
    let slope1 = outputs[1].2.report.get_quantity("log_log_slope").unwrap();

    let mut report = VerificationReport::new("decay", &model.name);
    report.input("order", l);
    report.input(
        "window",
        format!("[{}, {}]", opts.base.window.0, opts.base.window.1),
    );
    report.input("truncation_radius", opts.trunc_radius);
    report.input("cell_size", opts.h);
    let mut curve = CsvTable::new(&["series", "x", "y"]);
    for (series, radius, out) in &outputs {
        for q in &out.report.quantities {
            report.quantity(
                &format!("{}_radius_{radius}", q.name),
                q.value.0,
                &q.route,
            );
        }
        for a in &out.report.assertions {
            report.assertions.push(crate::report::Assertion {
                name: format!("{}_radius_{radius}", a.name),
                ..a.clone()
            });
        }
        if let Some(c) = &out.curve {
            for row in &c.rows {
                curve.push(vec![*series, row[1], row[2]]);
            }
        }
    }
    report.assert_le(
        "slope_stable_under_doubling",
        (slope0 - slope1).abs(),
        opts.max_slope_change,
        0.0,
    );

    Ok(CheckOutput {
        report,
        curve: Some(curve),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Convergent,
    Divergent,
    Inconclusive,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Convergent => "CONVERGENT",
            Classification::Divergent => "DIVERGENT",
            Classification::Inconclusive => "INCONCLUSIVE",
        }
    }
}

pub struct ThresholdOptions {
    pub ladder: Vec<f64>,
    pub inner_radius: f64,
    pub h: f64,
    pub convergent_change: f64,
    pub divergent_growth: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            ladder: vec![50.0, 100.0, 200.0],
            inner_radius: 1.0,
            h: 0.25,
            convergent_change: 0.05,
            divergent_growth: 0.5,
        }
    }
}

/// For each order l, track the weighted moment functional of the exterior
/// components (absorbing at the inner wall, reflecting at the truncation)
/// up a ladder of truncation radii, and classify its limit behavior from
/// the per-doubling growth.
pub fn threshold_study(
    model: &DiffusionModel,
    specs: &[(f64, Option<Classification>)],
    opts: &ThresholdOptions,
) -> Result<CheckOutput> {
    if specs.is_empty() || opts.ladder.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least one order and a two-step ladder".to_string(),
        ));
    }
    for win in opts.ladder.windows(2) {
        if win[1] <= win[0] {
            return Err(Error::InvalidInput("ladder must increase".to_string()));
        }
    }

    let mut report = VerificationReport::new("threshold", &model.name);
    report.input("inner_radius", opts.inner_radius);
    report.input("cell_size", opts.h);
    report.input(
        "ladder",
        opts.ladder
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    report.input(
        "orders",
        format_list(&specs.iter().map(|s| s.0).collect::<Vec<_>>()),
    );

    let mut columns = vec!["truncation_radius".to_string()];
    for (l, _) in specs {
        columns.push(format!("phi_order_{l}"));
    }
    let mut curve = CsvTable {
        columns,
        rows: Vec::new(),
    };

    let any_fractional = specs.iter().any(|&(l, _)| l.fract() != 0.0);

    // phi per (ladder step, order).
    let mut values: Vec<Vec<f64>> = Vec::new();
    for &radius in &opts.ladder {
        let side_n = (((radius - opts.inner_radius) / opts.h).round() as usize).max(3);
        let left = build_generator(
            model,
            -radius,
            -opts.inner_radius,
            side_n,
            Boundary::Reflecting,
            Boundary::Absorbing,
        )?;
        let right = build_generator(
            model,
            opts.inner_radius,
            radius,
            side_n,
            Boundary::Absorbing,
            Boundary::Reflecting,
        )?;
        let decs = if any_fractional {
            Some((eigendecompose(&left)?, eigendecompose(&right)?))
        } else {
            None
        };
        let mut row_vals = Vec::new();
        for &(l, _) in specs {
            let phi_solve = |gen: &GeneratorMatrix| -> Result<f64> {
                // (1, (-L)^-(l+1) 1)_m by iterated solves; no Gamma
                // factor in this functional.
                let ones = vec![1.0; gen.n()];
                let mut u = ones.clone();
                for _ in 0..(l as usize + 1) {
                    u = crate::moments::solve_shifted(gen, 0.0, &u)?;
                }
                Ok(gen.inner(&ones, &u))
            };
            let phi_spectral = |dec: &SpectralDecomposition| -> f64 {
                let ones = vec![1.0; dec.n()];
                spectral_weights(dec, &ones).functional(|xi| {
                    if xi > 0.0 {
                        xi.powf(-(l + 1.0))
                    } else {
                        f64::INFINITY
                    }
                })
            };
            let phi = if l.fract() == 0.0 && (0.0..=60.0).contains(&l) {
                phi_solve(&left)? + phi_solve(&right)?
            } else {
                let (dl, dr) = decs.as_ref().expect("decompositions built for fractional orders");
                phi_spectral(dl) + phi_spectral(dr)
            };
            row_vals.push(phi);
        }
        let mut row = vec![radius];
        row.extend_from_slice(&row_vals);
        curve.push(row);
        values.push(row_vals);
    }

    for (jl, &(l, expect)) in specs.iter().enumerate() {
        let series: Vec<f64> = values.iter().map(|row| row[jl]).collect();
        let route = if l.fract() == 0.0 { "iterated-solves" } else { "spectral-sum" };
        for (&radius, &phi) in opts.ladder.iter().zip(&series) {
            report.quantity(&format!("phi_order_{l}_radius_{radius}"), phi, route);
        }
        let mut growths = Vec::new();
        for win in series.windows(2) {
            growths.push(win[1] / win[0] - 1.0);
        }
        let max_growth = growths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min_growth = growths.iter().cloned().fold(f64::INFINITY, f64::min);
        report.quantity(&format!("max_growth_order_{l}"), max_growth, "ladder-ratio");

        let class = if max_growth.abs() < opts.convergent_change
            && min_growth.abs() < opts.convergent_change
        {
            Classification::Convergent
        } else if min_growth > opts.divergent_growth {
            Classification::Divergent
        } else {
            Classification::Inconclusive
        };
        report.input(&format!("classification_order_{l}"), class.as_str());
        if let Some(e) = expect {
            report.assert_flag(
                &format!("classified_order_{l}"),
                class == e,
                &format!("expected {}, classified {}", e.as_str(), class.as_str()),
            );
        }
    }

    Ok(CheckOutput {
        report,
        curve: Some(curve),
    })
}

fn format_list(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::build_killed_generator;
    use crate::model::{bm2, heavy_tail, ou};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn holder_pair_identity_and_products() {
        for l in [0.5, 1.0, 2.0, 7.3] {
            let hp = HolderPair::for_order(l).unwrap();
            // The conjugacy 1/p + 1/q = 1 is a statement about the stored
            // numerators, not about rounded float reciprocals.
            assert_eq!(hp.num_energy + hp.num_phi, hp.den);
            assert_relative_eq!(hp.inv_p() * hp.p(), 1.0, max_relative = 1e-15);
        }
        let hp = HolderPair::for_order(1.0).unwrap();
        assert_eq!(hp.p(), 1.5);
        assert_eq!(hp.q(), 3.0);
        assert_relative_eq!(hp.holder_product(5.0, 5.0), 5.0, max_relative = 1e-14);
        assert_eq!(hp.holder_product(0.0, 3.0), 0.0);
        assert!(hp.holder_product(f64::INFINITY, 1.0).is_infinite());
        assert!(HolderPair::for_order(-0.1).is_err());
    }

    #[test]
    fn random_family_is_deterministic_and_bounded() {
        let a = random_bounded_family(17, 4, 99);
        let b = random_bounded_family(17, 4, 99);
        assert_eq!(a, b);
        for f in &a {
            assert!(f.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn killed_nash_holds_on_random_family() {
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, 60).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let fs = random_bounded_family(60, 50, 7);
        let out = verify_nash_killed(
            &dec,
            &[0.5, 1.0, 2.0],
            &fs,
            &NashKilledOptions::default(),
        )
        .unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
        assert!(out
            .report
            .assertions
            .iter()
            .any(|a| a.name == "nash_bound_order_1"));
    }

    #[test]
    fn killed_nash_rejects_reflected_input() {
        let gen = build_reflected_generator(&bm2(), 0.0, 1.0, 30).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let fs = random_bounded_family(30, 3, 1);
        assert!(verify_nash_killed(&dec, &[1.0], &fs, &NashKilledOptions::default()).is_err());
    }

    #[test]
    fn whole_line_chain_holds_on_ou() {
        let opts = WholeLineOptions {
            n: 120,
            ..WholeLineOptions::default()
        };
        let fs = random_bounded_family(120, 40, 11);
        let out = verify_nash_whole(&ou(), 8.0, 0.0, 1.0, &fs, &opts).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
        // The grid is symmetric, so the face nearest zero is exactly zero.
        let pos = out.report.get_quantity("split_face_position").unwrap();
        assert!(pos.abs() < 1e-12, "split face at {pos}");
    }

    #[test]
    fn whole_line_chain_handles_fractional_order() {
        let opts = WholeLineOptions {
            n: 100,
            ..WholeLineOptions::default()
        };
        let fs = random_bounded_family(100, 10, 13);
        let out = verify_nash_whole(&ou(), 8.0, 0.5, 0.5, &fs, &opts).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
    }

    #[test]
    fn equality_chain_routes_agree_on_flat_model() {
        let n = 400;
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, n).unwrap();
        let h = gen.grid.h;
        let dec = eigendecompose(&gen).unwrap();
        let rates = [
            RateFunction::Constant,
            RateFunction::Polynomial { l: 1.0 },
            RateFunction::Exponential { lam: 2.0 * PI * PI },
        ];
        // The flat-model pairing of the first hitting moment is exactly
        // (1 - h^2)/12 on this grid.
        let refs = [Some((1.0 - h * h) / 12.0), None, None];
        let out =
            verify_equality_chain(&dec, &rates, &refs, &EqualityOptions::default()).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());

        let p_spec = out
            .report
            .get_quantity("polynomial(l=1)_route_spectral")
            .unwrap();
        assert_relative_eq!(p_spec, 1.0 / 120.0, max_relative = 1e-4);
        // The exponential clock outruns the spectral gap: every route
        // reports divergence.
        for route in ["solve", "spectral", "integral"] {
            let v = out
                .report
                .get_quantity(&format!("exponential(lambda={})_route_{route}", 2.0 * PI * PI))
                .unwrap();
            assert!(v.is_infinite(), "route {route} gave {v}");
        }
        let tail = out
            .report
            .get_quantity("constant_integral_tail_bound")
            .unwrap();
        assert!(tail < 1e-8);
    }

    #[test]
    fn equality_chain_handles_fractional_and_subcritical_rates() {
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, 150).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let xi1 = dec.eigenvalues[0];
        let rates = [
            RateFunction::Polynomial { l: 0.5 },
            RateFunction::Exponential { lam: 0.5 * xi1 },
        ];
        let out = verify_equality_chain(
            &dec,
            &rates,
            &[None, None],
            &EqualityOptions::default(),
        )
        .unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
        // No solve route for a fractional power.
        assert!(out
            .report
            .get_quantity("polynomial(l=0.5)_route_solve")
            .is_none());
    }

    #[test]
    fn equality_chain_rejects_odd_panel_count() {
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, 20).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let opts = EqualityOptions {
            panels: 3,
            ..EqualityOptions::default()
        };
        assert!(verify_equality_chain(&dec, &[RateFunction::Constant], &[None], &opts).is_err());
    }

    #[test]
    fn decay_guard_rejects_window_past_truncation_scale() {
        let gen = build_reflected_generator(&ou(), -8.0, 8.0, 160).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let f: Vec<f64> = gen
            .grid
            .nodes
            .iter()
            .map(|&x| if x >= 0.0 { 1.0 } else { -1.0 })
            .collect();
        // The spectral gap is order one, so [1, 30] sits deep in the
        // exponential regime and the guard must refuse it.
        let err = verify_decay(&dec, &f, 1.0, &DecayOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Window(_)), "{err}");

        let opts = DecayOptions {
            window_guard: false,
            ..DecayOptions::default()
        };
        let out = verify_decay(&dec, &f, 1.0, &opts).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
        let slope = out.report.get_quantity("log_log_slope").unwrap();
        assert!(slope < -5.0, "expected steep exponential slope, got {slope}");
    }

    #[test]
    fn decay_slope_is_polynomial_for_heavy_tails() {
        let gen = build_reflected_generator(&heavy_tail(4.0).unwrap(), -50.0, 50.0, 400).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let f: Vec<f64> = gen
            .grid
            .nodes
            .iter()
            .map(|&x| if x >= 0.0 { 1.0 } else { -1.0 })
            .collect();
        let out = verify_decay(&dec, &f, 2.0, &DecayOptions::default()).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
        let slope = out.report.get_quantity("log_log_slope").unwrap();
        assert!(slope <= -2.5, "slope {slope}");
        assert!(slope > -8.0, "slope {slope} looks exponential, not polynomial");
    }

    #[test]
    fn decay_slope_survives_doubling() {
        let opts = DecayDoublingOptions {
            trunc_radius: 50.0,
            ..DecayDoublingOptions::default()
        };
        let out = verify_decay_with_doubling(&heavy_tail(4.0).unwrap(), 0.0, 2.0, &opts).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
        let s0 = out.report.get_quantity("log_log_slope_radius_50").unwrap();
        let s1 = out.report.get_quantity("log_log_slope_radius_100").unwrap();
        assert!((s0 - s1).abs() < 0.2, "slopes {s0} vs {s1}");
    }

    #[test]
    fn threshold_study_classifies_heavy_tail_orders() {
        let specs = [
            (2.0, Some(Classification::Convergent)),
            (4.0, Some(Classification::Divergent)),
        ];
        let out = threshold_study(&heavy_tail(4.0).unwrap(), &specs, &ThresholdOptions::default()).unwrap();
        assert!(out.report.passed(), "{}", out.report.to_json());
        let curve = out.curve.unwrap();
        assert_eq!(curve.rows.len(), 3);
        assert_eq!(curve.columns.len(), 3);
    }

    #[test]
    fn threshold_study_flags_wrong_expectation() {
        let specs = [(4.0, Some(Classification::Convergent))];
        let out = threshold_study(&heavy_tail(4.0).unwrap(), &specs, &ThresholdOptions::default()).unwrap();
        assert!(!out.report.passed());
    }
}

impl GeneratorMatrix {
    /// Short label "interval with boundaries" used as the model slot of
    /// reports built straight from a decomposition.
    pub fn grid_label(&self) -> String {
        format!(
            "[{}, {}] {:?}/{:?}",
            self.grid.a, self.grid.b, self.left, self.right
        )
    }
}
