//! Eigendecomposition of the generator and spectral functionals built on
//! it: weights of a function across eigenmodes, semigroup norms, and
//! Laplace transforms of the admissible rate densities.

use crate::discretize::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::numeric::{gamma, pairwise_sum};

/// Full eigensystem of -L, orthonormal in the speed-weighted inner
/// product. Eigenvalues ascend; `eigenvectors[k]` is the k-th mode on the
/// grid nodes, normalized with (e_k, e_k)_m = 1 and signed so its largest
/// component is positive.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub gen: GeneratorMatrix,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

// Deflation threshold for the QL iteration, relative to the accumulated
// magnitude of the tridiagonal. Machine epsilon converges a little harder
// than strictly needed, but keeps near-zero eigenvalues of reflected
// operators resolved to absolute ~1e-11 even when the matrix norm is 1e4.
const QL_EPS: f64 = 2.220_446_049_250_313e-16;
const QL_MAX_SWEEPS_PER_SIZE: usize = 50;

/// Implicit-shift QL on a symmetric tridiagonal (d, e), accumulating the
/// rotations into `z`, whose ROWS end up as eigenvectors. e[i] couples
/// i and i+1; e[n-1] is ignored.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut [Vec<f64>]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let mut total_iter = 0usize;
    let iter_budget = QL_MAX_SWEEPS_PER_SIZE * n;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        loop {
            let mut m = l;
            while m < n - 1 {
                if e[m].abs() <= QL_EPS * tst1 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            total_iter += 1;
            if total_iter > iter_budget {
                return Err(Error::Numeric(format!(
                    "eigensolver exceeded {iter_budget} sweeps at size {n}"
                )));
            }

            // Form the implicit shift from the leading 2x2.
            let g0 = d[l];
            let mut p = (d[l + 1] - g0) / (2.0 * e[l]);
            let mut r = p.hypot(1.0);
            if p < 0.0 {
                r = -r;
            }
            d[l] = e[l] / (p + r);
            d[l + 1] = e[l] * (p + r);
            let dl1 = d[l + 1];
            let mut h = g0 - d[l];
            for item in d.iter_mut().take(n).skip(l + 2) {
                *item -= h;
            }
            f += h;

            // Chase the bulge from m down to l.
            p = d[m];
            let mut c = 1.0;
            let mut c2 = c;
            let mut c3 = c;
            let el1 = e[l + 1];
            let mut s = 0.0;
            let mut s2 = 0.0;
            for i in (l..m).rev() {
                c3 = c2;
                c2 = c;
                s2 = s;
                let g = c * e[i];
                h = c * p;
                r = p.hypot(e[i]);
                e[i + 1] = s * r;
                s = e[i] / r;
                c = p / r;
                p = c * d[i] - s * g;
                d[i + 1] = h + s * (c * g + s * d[i]);

                // Rotate rows i and i+1 of the accumulated transform.
                let (top, bot) = z.split_at_mut(i + 1);
                let zi = top[i].as_mut_slice();
                let zj = bot[0].as_mut_slice();
                for (a, b) in zi.iter_mut().zip(zj.iter_mut()) {
                    let t = *b;
                    *b = s * *a + c * t;
                    *a = c * *a - s * t;
                }
            }
            p = -s * s2 * c3 * el1 * e[l] / dl1;
            e[l] = s * p;
            d[l] = c * p;

            if e[l].abs() <= QL_EPS * tst1 {
                break;
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Diagonalize -L through its symmetric similarity transform.
pub fn eigendecompose(gen: &GeneratorMatrix) -> Result<SpectralDecomposition> {
    let n = gen.n();
    let (mut d, mut e) = gen.symmetric_tridiagonal();
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            row
        })
        .collect();
    tridiagonal_ql(&mut d, &mut e, &mut z)?;

    // Sort ascending; rows move by pointer, not by copy.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let mut slots: Vec<Option<Vec<f64>>> = z.into_iter().map(Some).collect();
    let mut eigenvectors: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| slots[i].take().expect("each row moved once"))
        .collect();

    // Undo the D^{1/2} similarity, renormalize in the speed inner product,
    // and fix signs deterministically.
    let inv_sqrt_m: Vec<f64> = gen.mass.iter().map(|&m| 1.0 / m.sqrt()).collect();
    for row in eigenvectors.iter_mut() {
        for (v, &w) in row.iter_mut().zip(&inv_sqrt_m) {
            *v *= w;
        }
        let nrm = gen.norm_sq(row).sqrt();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::Numeric("degenerate eigenvector".to_string()));
        }
        let mut imax = 0;
        let mut vmax = 0.0;
        for (i, &v) in row.iter().enumerate() {
            if v.abs() > vmax {
                vmax = v.abs();
                imax = i;
            }
        }
        let scale = if row[imax] < 0.0 { -1.0 / nrm } else { 1.0 / nrm };
        for v in row.iter_mut() {
            *v *= scale;
        }
    }

    Ok(SpectralDecomposition {
        gen: gen.clone(),
        eigenvalues,
        eigenvectors,
    })
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest deviation from orthonormality over a deterministic sample
    /// of mode pairs (all norms, adjacent pairs, and pairs against the
    /// bottom mode), in the speed inner product.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        let mut check = |k: usize, j: usize| {
            let ip = self.gen.inner(&self.eigenvectors[k], &self.eigenvectors[j]);
            let target = if k == j { 1.0 } else { 0.0 };
            let dev = (ip - target).abs();
            if dev > worst {
                worst = dev;
            }
        };
        for k in 0..n {
            check(k, k);
            if k + 1 < n {
                check(k, k + 1);
            }
            if k > 0 {
                check(0, k);
            }
        }
        // A fixed stride covers long-range pairs without O(n^2) cost.
        let stride = (n / 64).max(1);
        for k in (0..n).step_by(stride) {
            for j in (k + stride..n).step_by(stride) {
                check(k, j);
            }
        }
        worst
    }

    /// Speed-weighted distance of the bottom mode from the constants:
    /// || e_1 - proj_1 e_1 ||_m. Near zero for reflected operators, whose
    /// kernel is the constants.
    pub fn constant_mode_residual(&self) -> f64 {
        let e1 = &self.eigenvectors[0];
        let ones = vec![1.0; self.n()];
        let denom = self.gen.norm_sq(&ones);
        let c = self.gen.inner(e1, &ones) / denom;
        let resid: Vec<f64> = e1.iter().map(|&v| v - c).collect();
        self.gen.norm_sq(&resid).sqrt()
    }
}

/// Atomic spectral measure of a function: pairs (eigenvalue, squared
/// coefficient), ascending in the eigenvalue.
#[derive(Clone, Debug)]
pub struct SpectralMeasure {
    pub atoms: Vec<(f64, f64)>,
}

impl SpectralMeasure {
    /// Total mass, which Parseval makes equal to ||f||_m^2.
    pub fn total(&self) -> f64 {
        let ws: Vec<f64> = self.atoms.iter().map(|&(_, w)| w).collect();
        pairwise_sum(&ws)
    }

    /// Sum of phi(xi_k) w_k. An infinite phi value on an atom with
    /// positive weight makes the whole sum infinite; zero-weight atoms
    /// never contribute.
    pub fn functional<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        let mut terms = Vec::with_capacity(self.atoms.len());
        for &(xi, w) in &self.atoms {
            if w == 0.0 {
                continue;
            }
            let p = phi(xi);
            if p.is_infinite() {
                return f64::INFINITY;
            }
            terms.push(p * w);
        }
        pairwise_sum(&terms)
    }
}

/// Coefficients of f across the eigenmodes: w_k = (f, e_k)_m^2.
pub fn spectral_weights(dec: &SpectralDecomposition, f: &[f64]) -> SpectralMeasure {
    let atoms = dec
        .eigenvalues
        .iter()
        .zip(&dec.eigenvectors)
        .map(|(&xi, ek)| {
            let c = dec.gen.inner(f, ek);
            (xi, c * c)
        })
        .collect();
    SpectralMeasure { atoms }
}

/// Squared speed-norm of the semigroup at time t applied to f:
/// || P_t f ||_m^2 = sum_k exp(-2 xi_k t) w_k.
pub fn semigroup_norm_sq(dec: &SpectralDecomposition, f: &[f64], t: f64) -> f64 {
    spectral_weights(dec, f).functional(|xi| (-2.0 * xi * t).exp())
}

/// Time-weight densities R'(t) whose Laplace transforms modulate hitting
/// times: constant 1, polynomial t^l, exponential e^(lambda t).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateFunction {
    Constant,
    Polynomial { l: f64 },
    Exponential { lam: f64 },
}

impl RateFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RateFunction::Constant => Ok(()),
            RateFunction::Polynomial { l } => {
                if l.is_finite() && l > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "polynomial rate exponent must be positive, got {l}"
                    )))
                }
            }
            RateFunction::Exponential { lam } => {
                if lam.is_finite() && lam > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "exponential rate parameter must be positive, got {lam}"
                    )))
                }
            }
        }
    }

    /// Laplace transform of the rate density at `xi`: the expected
    /// modulation of a unit-rate exponential clock. Divergent transforms
    /// are an explicit +infinity, decided by branch, never by overflow.
    pub fn laplace(&self, xi: f64) -> f64 {
        match *self {
            RateFunction::Constant => {
                if xi > 0.0 {
                    1.0 / xi
                } else {
                    f64::INFINITY
                }
            }
            RateFunction::Polynomial { l } => {
                if xi > 0.0 {
                    gamma(l + 1.0) * xi.powf(-(l + 1.0))
                } else {
                    f64::INFINITY
                }
            }
            RateFunction::Exponential { lam } => {
                if xi > lam {
                    1.0 / (xi - lam)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            RateFunction::Constant => "constant".to_string(),
            RateFunction::Polynomial { l } => format!("polynomial(l={l})"),
            RateFunction::Exponential { lam } => format!("exponential(lambda={lam})"),
        }
    }
}

/// Sum of Laplace-transformed atoms: the spectral route to a modulated
/// moment of f.
pub fn spectral_functional(dec: &SpectralDecomposition, f: &[f64], rate: RateFunction) -> f64 {
    spectral_weights(dec, f).functional(|xi| rate.laplace(xi))
}
