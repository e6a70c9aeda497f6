//! Hitting-time moments through linear solves: the moment recursion
//! (-L) v_k = k v_{k-1}, shifted and resolvent systems, and the pairing
//! route to modulated moments that needs no eigendecomposition.

use crate::discretize::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::numeric::gamma;
use crate::spectral::{spectral_functional, RateFunction, SpectralDecomposition};

/// Solve (-L - shift I) v = rhs by the Thomas algorithm.
///
/// The sweep has no pivoting, which is safe here: away from its kernel the
/// shifted operator is an (irreducibly diagonally dominant) M-matrix-like
/// tridiagonal. A collapsing pivot signals a singular system.
pub fn solve_shifted(gen: &GeneratorMatrix, shift: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = gen.n();
    assert_eq!(rhs.len(), n);
    // Rows of A = -L - shift I.
    let a_diag: Vec<f64> = gen.diag.iter().map(|&d| -d - shift).collect();
    let scale = a_diag.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let pivot_floor = 1e-13 * scale.max(1e-300);

    let mut c = vec![0.0; n]; // modified superdiagonal
    let mut y = vec![0.0; n]; // modified rhs
    let mut piv = a_diag[0];
    if piv.abs() <= pivot_floor {
        return Err(Error::Numeric(
            "singular shifted system: leading pivot vanished".to_string(),
        ));
    }
    c[0] = -gen.upper[0] / piv;
    y[0] = rhs[0] / piv;
    for i in 1..n {
        let sub = -gen.lower[i - 1];
        piv = a_diag[i] - sub * c[i - 1];
        if piv.abs() <= pivot_floor {
            return Err(Error::Numeric(format!(
                "singular shifted system: pivot vanished at row {i}"
            )));
        }
        if i < n - 1 {
            c[i] = -gen.upper[i] / piv;
        }
        y[i] = (rhs[i] - sub * y[i - 1]) / piv;
    }
    let mut v = y;
    for i in (0..n - 1).rev() {
        let next = v[i + 1];
        v[i] -= c[i] * next;
    }
    Ok(v)
}

/// Node-wise hitting-time moments v_k(x) = E_x tau^k for k = 0..=k_max,
/// from the recursion (-L) v_k = k v_{k-1} with v_0 = 1.
#[derive(Clone, Debug)]
pub struct MomentTable {
    pub values: Vec<Vec<f64>>,
}

impl MomentTable {
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    /// Speed-measure integral of the k-th moment over the grid.
    pub fn pairing(&self, gen: &GeneratorMatrix, k: usize) -> f64 {
        let ones = vec![1.0; gen.n()];
        gen.inner(&ones, &self.values[k])
    }
}

pub fn moment_recursion(gen: &GeneratorMatrix, k_max: usize) -> Result<MomentTable> {
    let n = gen.n();
    let mut values = Vec::with_capacity(k_max + 1);
    values.push(vec![1.0; n]);
    for k in 1..=k_max {
        let rhs: Vec<f64> = values[k - 1].iter().map(|&v| k as f64 * v).collect();
        let vk = solve_shifted(gen, 0.0, &rhs)?;
        values.push(vk);
    }
    Ok(MomentTable { values })
}

/// Modulated moment of f through the spectral measure:
/// sum_k Lambda(xi_k) w_k, possibly +infinity.
pub fn modulated_moment(dec: &SpectralDecomposition, f: &[f64], rate: RateFunction) -> f64 {
    spectral_functional(dec, f, rate)
}

/// Modulated moment of f through linear solves alone.
///
/// Constant rate pairs f with one solve; an integer polynomial exponent l
/// iterates l+1 solves and scales by Gamma(l+1); an exponential rate
/// solves the resolvent system when lambda sits below `xi1`, and is
/// +infinity otherwise. Non-integer polynomial exponents have no solve
/// route; use the spectral one.
pub fn modulated_moment_by_solves(
    gen: &GeneratorMatrix,
    f: &[f64],
    rate: RateFunction,
    xi1: f64,
) -> Result<f64> {
    rate.validate()?;
    match rate {
        RateFunction::Constant => {
            let v = solve_shifted(gen, 0.0, f)?;
            Ok(gen.inner(f, &v))
        }
        RateFunction::Polynomial { l } => {
            if l.fract() != 0.0 || l < 0.0 || l > 60.0 {
                return Err(Error::InvalidInput(format!(
                    "solve route needs a small integer polynomial exponent, got {l}"
                )));
            }
            let reps = l as usize + 1;
            let mut u = f.to_vec();
            for _ in 0..reps {
                u = solve_shifted(gen, 0.0, &u)?;
            }
            Ok(gamma(l + 1.0) * gen.inner(f, &u))
        }
        RateFunction::Exponential { lam } => {
            if lam >= xi1 {
                return Ok(f64::INFINITY);
            }
            let v = solve_shifted(gen, lam, f)?;
            Ok(gen.inner(f, &v))
        }
    }
}

/// Average over the normalized speed measure of the modulated hitting
/// moment with polynomial rate t^l (l = 0 meaning the constant rate):
/// E_mu [ tau^(l+1) / (l+1) ]. Integer l goes through the moment
/// recursion; fractional l through the spectral measure. Returns the
/// value and the route taken.
pub fn mean_modulated_moment(dec: &SpectralDecomposition, l: f64) -> Result<(f64, &'static str)> {
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "polynomial order must be nonnegative, got {l}"
        )));
    }
    let gen = &dec.gen;
    let m_tot = gen.total_mass();
    if l.fract() == 0.0 && l <= 60.0 {
        let k = l as usize + 1;
        let table = moment_recursion(gen, k)?;
        Ok((table.pairing(gen, k) / (k as f64 * m_tot), "dynkin-recursion"))
    } else {
        let ones = vec![1.0; gen.n()];
        let rate = if l == 0.0 {
            RateFunction::Constant
        } else {
            RateFunction::Polynomial { l }
        };
        Ok((modulated_moment(dec, &ones, rate) / m_tot, "spectral"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_killed_generator, build_reflected_generator};
    use crate::model::{bm2, ou};
    use crate::spectral::eigendecompose;
    use approx::assert_relative_eq;

    #[test]
    fn first_exit_moment_is_exact_for_flat_model() {
        // v_1(x) = x(1-x)/2 is quadratic, so the second difference is
        // exact at every node, including the wall rows.
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, 50).unwrap();
        let table = moment_recursion(&gen, 1).unwrap();
        for (i, &x) in gen.grid.nodes.iter().enumerate() {
            let exact = 0.5 * x * (1.0 - x);
            assert!((table.values[1][i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn second_exit_moment_converges_at_second_order() {
        // v_2(x) = x(1 - 2x^2 + x^3)/12 is quartic; the scheme converges
        // at O(h^2). n = 1999 puts a node exactly at the center, where
        // v_1 = 1/8 and v_2 = 5/192.
        let n = 1999;
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, n).unwrap();
        let table = moment_recursion(&gen, 2).unwrap();
        let mid = (n - 1) / 2;
        assert_relative_eq!(gen.grid.nodes[mid], 0.5, max_relative = 1e-13);
        // No discretization error for the quadratic v_1, but the solve
        // carries conditioning-level rounding (~kappa * eps ~ 1e-11).
        assert!((table.values[1][mid] - 0.125).abs() < 1e-10);
        assert_relative_eq!(table.values[2][mid], 5.0 / 192.0, max_relative = 1e-6);
    }

    #[test]
    fn constant_rate_pairing_matches_closed_discrete_value() {
        // For the flat model on (0,1) the raw pairing (1, v_1)_m evaluates
        // in closed form to (1 - h^2)/12 with h = 1/(n+1): the node sum of
        // x(1-x)/2 telescopes through the Faulhaber formulas.
        for n in [40usize, 400, 1999] {
            let gen = build_killed_generator(&bm2(), 0.0, 1.0, n).unwrap();
            let ones = vec![1.0; n];
            let v = modulated_moment_by_solves(&gen, &ones, RateFunction::Constant, f64::NAN)
                .unwrap();
            let h = 1.0 / (n as f64 + 1.0);
            assert_relative_eq!(v, (1.0 - h * h) / 12.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn polynomial_rate_pairing_approaches_continuum() {
        // integral of v_2/2 over (0,1) is 1/120; discretization error O(h^2).
        let n = 1999;
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, n).unwrap();
        let ones = vec![1.0; n];
        let v = modulated_moment_by_solves(&gen, &ones, RateFunction::Polynomial { l: 1.0 }, f64::NAN)
            .unwrap();
        assert_relative_eq!(v, 1.0 / 120.0, max_relative = 1e-5);
    }

    #[test]
    fn resolvent_pairing_matches_closed_form() {
        // (1, (-L - lambda)^(-1) 1) for the flat killed model: solving
        // -v'' - lambda v = 1 with zero walls and integrating gives
        // 2 tan(sqrt(lambda)/2) / lambda^(3/2) - 1/lambda. At lambda = 4:
        // tan(1)/4 - 1/4.
        let n = 1999;
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, n).unwrap();
        let ones = vec![1.0; n];
        let lam = 4.0;
        let v = modulated_moment_by_solves(
            &gen,
            &ones,
            RateFunction::Exponential { lam },
            10.0, // anything above lambda
        )
        .unwrap();
        let exact = 2.0 * (0.5 * lam.sqrt()).tan() / (lam * lam.sqrt()) - 1.0 / lam;
        assert_relative_eq!(v, exact, max_relative = 1e-5);
        // Above the bottom eigenvalue the transform diverges.
        let inf = modulated_moment_by_solves(
            &gen,
            &ones,
            RateFunction::Exponential { lam: 20.0 },
            std::f64::consts::PI.powi(2),
        )
        .unwrap();
        assert_eq!(inf, f64::INFINITY);
    }

    #[test]
    fn solve_and_spectral_routes_agree_off_the_flat_model() {
        let gen = build_killed_generator(&ou(), -2.0, 2.0, 300).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let ones = vec![1.0; 300];
        for rate in [
            RateFunction::Constant,
            RateFunction::Polynomial { l: 2.0 },
            RateFunction::Exponential { lam: 0.3 },
        ] {
            let by_solve =
                modulated_moment_by_solves(&gen, &ones, rate, dec.eigenvalues[0]).unwrap();
            let by_spectrum = modulated_moment(&dec, &ones, rate);
            // Iterated solves amplify conditioning; agreement at 1e-9 on a
            // kappa ~ 1e4 operator is rounding-limited, not structural.
            assert_relative_eq!(by_solve, by_spectrum, max_relative = 1e-9);
        }
    }

    #[test]
    fn reflected_system_is_singular() {
        let gen = build_reflected_generator(&bm2(), 0.0, 1.0, 30).unwrap();
        let ones = vec![1.0; 30];
        assert!(matches!(
            solve_shifted(&gen, 0.0, &ones),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn mean_modulated_moment_routes() {
        let n = 1999;
        let gen = build_killed_generator(&bm2(), 0.0, 1.0, n).unwrap();
        let dec = eigendecompose(&gen).unwrap();
        let h = 1.0 / (n as f64 + 1.0);
        // Raw pairing (1-h^2)/12 over the truncated mass 1-h: mean is
        // (1+h)/12 exactly.
        let (mean0, route0) = mean_modulated_moment(&dec, 0.0).unwrap();
        assert_eq!(route0, "dynkin-recursion");
        assert_relative_eq!(mean0, (1.0 + h) / 12.0, max_relative = 1e-10);
        // A fractional order takes the spectral route and lands nearby.
        let (mean_frac, route_frac) = mean_modulated_moment(&dec, 0.5).unwrap();
        assert_eq!(route_frac, "spectral");
        assert!(mean_frac > 0.0 && mean_frac.is_finite());
        // Monotone in l on this model: moments shrink (tau < 1 mostly).
        assert!(mean_frac < mean0 * 0.9);
        assert!(mean_modulated_moment(&dec, -1.0).is_err());
    }
}
