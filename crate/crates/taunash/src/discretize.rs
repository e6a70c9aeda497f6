//! Finite-volume discretization of the generator d/dm d/dS on an interval.
//!
//! Nodes are cell centers; each interior face carries the conductance
//! 1/DeltaS across it, and cells carry speed masses m'(x_i) h. Absorbing
//! boundaries keep a face to the wall (killing), reflecting boundaries
//! drop the boundary flux so constants are harmonic. The resulting matrix
//! is symmetric in the speed-weighted inner product by construction: both
//! couplings across a face share the same conductance.

use crate::error::{Error, Result};
use crate::model::DiffusionModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Absorbing,
    Reflecting,
}

impl Boundary {
    /// Distance from the wall to the first node, in units of the spacing.
    /// Absorbing walls sit a full cell away so the killing face has the
    /// same length as interior faces; reflecting walls sit half a cell
    /// away so cells tile the interval exactly.
    fn offset(self) -> f64 {
        match self {
            Boundary::Absorbing => 1.0,
            Boundary::Reflecting => 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub nodes: Vec<f64>,
}

/// Tridiagonal generator L with its grid and speed masses.
///
/// `upper[i]` is L_{i,i+1}, `lower[i]` is L_{i+1,i}; the weighted symmetry
/// mass[i] upper[i] = mass[i+1] lower[i] holds because both sides equal the
/// face conductance.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    pub grid: Grid,
    pub left: Boundary,
    pub right: Boundary,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub mass: Vec<f64>,
    face_weight: Vec<f64>,
    left_face_weight: f64,
    right_face_weight: f64,
}

/// Build the generator of `model` on `[a, b]` with `n` nodes and the given
/// boundary conditions.
pub fn build_generator(
    model: &DiffusionModel,
    a: f64,
    b: f64,
    n: usize,
    left: Boundary,
    right: Boundary,
) -> Result<GeneratorMatrix> {
    if n < 3 {
        return Err(Error::Discretization(format!(
            "need at least 3 nodes, got {n}"
        )));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Discretization(format!(
            "bad interval [{a}, {b}]"
        )));
    }
    if !model.contains(a, b) {
        return Err(Error::Discretization(format!(
            "interval [{a}, {b}] not inside the domain of '{}'",
            model.name
        )));
    }
    let (ol, or) = (left.offset(), right.offset());
    let h = (b - a) / ((n - 1) as f64 + ol + or);
    let nodes: Vec<f64> = (0..n).map(|i| a + (ol + i as f64) * h).collect();

    let mut mass = Vec::with_capacity(n);
    for &x in &nodes {
        let mp = model.speed_density(x)?;
        mass.push(mp * h);
    }

    let mut face_weight = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let ds = model.scale_increment(nodes[i], nodes[i + 1])?;
        if !(ds.is_finite() && ds > 0.0) {
            return Err(Error::Discretization(format!(
                "scale increment across [{}, {}] is {ds}; scale function degenerate there",
                nodes[i],
                nodes[i + 1]
            )));
        }
        face_weight.push(1.0 / ds);
    }

    let boundary_weight = |wall: f64, node: f64, side: Boundary| -> Result<f64> {
        if side == Boundary::Reflecting {
            return Ok(0.0);
        }
        let ds = model.scale_increment(wall.min(node), wall.max(node))?;
        if !(ds.is_finite() && ds > 0.0) {
            return Err(Error::Discretization(format!(
                "scale increment to the wall at {wall} is {ds}; boundary may be inaccessible"
            )));
        }
        Ok(1.0 / ds)
    };
    let left_face_weight = boundary_weight(a, nodes[0], left)?;
    let right_face_weight = boundary_weight(b, nodes[n - 1], right)?;

    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n - 1];
    let mut lower = vec![0.0; n - 1];
    for i in 0..n - 1 {
        upper[i] = face_weight[i] / mass[i];
        lower[i] = face_weight[i] / mass[i + 1];
    }
    for i in 0..n {
        let wl = if i == 0 { left_face_weight } else { face_weight[i - 1] };
        let wr = if i == n - 1 {
            right_face_weight
        } else {
            face_weight[i]
        };
        diag[i] = -(wl + wr) / mass[i];
        if !diag[i].is_finite() {
            return Err(Error::Discretization(format!(
                "generator diagonal not finite at node {} (x = {})",
                i, nodes[i]
            )));
        }
    }

    Ok(GeneratorMatrix {
        grid: Grid { a, b, h, nodes },
        left,
        right,
        diag,
        upper,
        lower,
        mass,
        face_weight,
        left_face_weight,
        right_face_weight,
    })
}

/// Absorbing walls on both sides.
pub fn build_killed_generator(
    model: &DiffusionModel,
    a: f64,
    b: f64,
    n: usize,
) -> Result<GeneratorMatrix> {
    build_generator(model, a, b, n, Boundary::Absorbing, Boundary::Absorbing)
}

/// Reflecting walls on both sides; constants are harmonic and the cell
/// masses tile [a, b] exactly.
pub fn build_reflected_generator(
    model: &DiffusionModel,
    a: f64,
    b: f64,
    n: usize,
) -> Result<GeneratorMatrix> {
    build_generator(model, a, b, n, Boundary::Reflecting, Boundary::Reflecting)
}

impl GeneratorMatrix {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn is_killed(&self) -> bool {
        self.left == Boundary::Absorbing || self.right == Boundary::Absorbing
    }

    /// Matrix-vector product L f.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(f.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * f[i];
            if i > 0 {
                v += self.lower[i - 1] * f[i - 1];
            }
            if i < n - 1 {
                v += self.upper[i] * f[i + 1];
            }
            out[i] = v;
        }
        out
    }

    /// Speed-weighted inner product (f, g)_m.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n());
        assert_eq!(g.len(), self.n());
        let mut acc = 0.0;
        for i in 0..self.n() {
            acc += self.mass[i] * f[i] * g[i];
        }
        acc
    }

    pub fn norm_sq(&self, f: &[f64]) -> f64 {
        self.inner(f, f)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Dirichlet form (f, -L f)_m as a sum of nonnegative face terms:
    /// conductance times squared jump, plus killing terms at absorbing
    /// walls.
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        let n = self.n();
        assert_eq!(f.len(), n);
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let d = f[i + 1] - f[i];
            acc += self.face_weight[i] * d * d;
        }
        acc += self.left_face_weight * f[0] * f[0];
        acc += self.right_face_weight * f[n - 1] * f[n - 1];
        acc
    }

    /// Conductance of the interior face between nodes `i` and `i+1`.
    pub fn face_conductance(&self, i: usize) -> f64 {
        self.face_weight[i]
    }

    /// Killing conductances at the left and right walls (zero when
    /// reflecting).
    pub fn wall_conductances(&self) -> (f64, f64) {
        (self.left_face_weight, self.right_face_weight)
    }

    /// Coefficients (d, e) of the similar symmetric tridiagonal
    /// D^{1/2} (-L) D^{-1/2}: d[i] = -diag[i], e[i] couples i and i+1.
    pub fn symmetric_tridiagonal(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let d: Vec<f64> = self.diag.iter().map(|&v| -v).collect();
        let mut e = vec![0.0; n];
        for i in 0..n - 1 {
            e[i] = -self.face_weight[i] / (self.mass[i] * self.mass[i + 1]).sqrt();
        }
        (d, e)
    }

    /// Position of the interior face between nodes `j` and `j+1`.
    pub fn face_position(&self, j: usize) -> f64 {
        0.5 * (self.grid.nodes[j] + self.grid.nodes[j + 1])
    }

    /// Split at the interior face nearest `x` into two principal
    /// submatrices, each absorbing at the split face with the parent's
    /// face conductance. Returns (left part, right part, face index).
    ///
    /// Truncation is exact: rows away from the face are untouched, and the
    /// face conductance reappears as the killing weight, so each part's
    /// Dirichlet form is the parent's with the face jump term replaced by
    /// two one-sided killing terms.
    pub fn split_at_face(&self, x: f64) -> Result<(GeneratorMatrix, GeneratorMatrix, usize)> {
        let n = self.n();
        if n < 7 {
            return Err(Error::Discretization(format!(
                "split needs at least 7 nodes, got {n}"
            )));
        }
        let mut best = 2usize;
        let mut best_dist = f64::INFINITY;
        for j in 2..=n - 5 {
            let dist = (self.face_position(j) - x).abs();
            if dist < best_dist {
                best_dist = dist;
                best = j;
            }
        }
        let j = best;
        let w = self.face_weight[j];

        let left = GeneratorMatrix {
            grid: Grid {
                a: self.grid.a,
                b: self.face_position(j),
                h: self.grid.h,
                nodes: self.grid.nodes[..=j].to_vec(),
            },
            left: self.left,
            right: Boundary::Absorbing,
            diag: self.diag[..=j].to_vec(),
            upper: self.upper[..j].to_vec(),
            lower: self.lower[..j].to_vec(),
            mass: self.mass[..=j].to_vec(),
            face_weight: self.face_weight[..j].to_vec(),
            left_face_weight: self.left_face_weight,
            right_face_weight: w,
        };
        let right = GeneratorMatrix {
            grid: Grid {
                a: self.face_position(j),
                b: self.grid.b,
                h: self.grid.h,
                nodes: self.grid.nodes[j + 1..].to_vec(),
            },
            left: Boundary::Absorbing,
            right: self.right,
            diag: self.diag[j + 1..].to_vec(),
            upper: self.upper[j + 1..].to_vec(),
            lower: self.lower[j + 1..].to_vec(),
            mass: self.mass[j + 1..].to_vec(),
            face_weight: self.face_weight[j + 1..].to_vec(),
            left_face_weight: w,
            right_face_weight: self.right_face_weight,
        };
        Ok((left, right, j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bm2, heavy_tail, ou};
    use approx::assert_relative_eq;

    #[test]
    fn killed_flat_generator_has_exact_entries() {
        // Three cells on (0,1), both walls absorbing: spacing 1/4, every
        // conductance 4, every mass 1/4, so couplings are 16 and the
        // diagonal is -32.
        let g = build_killed_generator(&bm2(), 0.0, 1.0, 3).unwrap();
        assert_relative_eq!(g.grid.h, 0.25);
        assert_eq!(g.grid.nodes, vec![0.25, 0.5, 0.75]);
        for i in 0..3 {
            assert_relative_eq!(g.diag[i], -32.0, max_relative = 1e-13);
            assert_relative_eq!(g.mass[i], 0.25, max_relative = 1e-13);
        }
        for i in 0..2 {
            assert_relative_eq!(g.upper[i], 16.0, max_relative = 1e-13);
            assert_relative_eq!(g.lower[i], 16.0, max_relative = 1e-13);
        }
        let (wl, wr) = g.wall_conductances();
        assert_relative_eq!(wl, 4.0, max_relative = 1e-13);
        assert_relative_eq!(wr, 4.0, max_relative = 1e-13);
    }

    #[test]
    fn reflected_rows_sum_to_zero_and_mass_tiles() {
        let g = build_reflected_generator(&bm2(), 0.0, 1.0, 64).unwrap();
        assert_relative_eq!(g.total_mass(), 1.0, max_relative = 1e-12);
        let ones = vec![1.0; g.n()];
        let lf = g.apply(&ones);
        let scale = g.diag.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        for v in lf {
            assert!(v.abs() <= 1e-12 * scale, "row sum {v} too large");
        }
    }

    #[test]
    fn mixed_boundaries_place_nodes_correctly() {
        // Reflecting left (half-cell offset), absorbing right (full cell).
        let g = build_generator(
            &bm2(),
            0.0,
            1.0,
            5,
            Boundary::Reflecting,
            Boundary::Absorbing,
        )
        .unwrap();
        let h = g.grid.h;
        assert_relative_eq!(h, 2.0 / 11.0, max_relative = 1e-13);
        assert_relative_eq!(g.grid.nodes[0], h / 2.0, max_relative = 1e-13);
        assert_relative_eq!(1.0 - g.grid.nodes[4], h, max_relative = 1e-12);
        let (wl, wr) = g.wall_conductances();
        assert_eq!(wl, 0.0);
        assert!(wr > 0.0);
    }

    #[test]
    fn weighted_symmetry_across_faces() {
        let g = build_killed_generator(&ou(), -2.0, 2.0, 50).unwrap();
        for i in 0..g.n() - 1 {
            let a = g.mass[i] * g.upper[i];
            let b = g.mass[i + 1] * g.lower[i];
            assert_relative_eq!(a, b, max_relative = 1e-13);
            assert_relative_eq!(a, g.face_conductance(i), max_relative = 1e-13);
        }
    }

    #[test]
    fn dirichlet_form_matches_quadratic_form() {
        let g = build_killed_generator(&heavy_tail(4.0).unwrap(), -1.0, 1.0, 40).unwrap();
        // Deterministic wiggly test vector.
        let f: Vec<f64> = g.grid.nodes.iter().map(|&x| (3.0 * x).sin() + 0.2).collect();
        let lf = g.apply(&f);
        let quad: f64 = -(0..g.n()).map(|i| g.mass[i] * f[i] * lf[i]).sum::<f64>();
        assert_relative_eq!(quad, g.dirichlet_form(&f), max_relative = 1e-11);
    }

    #[test]
    fn split_preserves_rows_and_reduces_energy() {
        let g = build_reflected_generator(&bm2(), 0.0, 1.0, 8).unwrap();
        // Faces sit at multiples of 1/8; the request 0.5 is exact.
        let (le, ri, j) = g.split_at_face(0.5).unwrap();
        assert_eq!(j, 3);
        assert_relative_eq!(g.face_position(j), 0.5, max_relative = 1e-13);
        assert_eq!(le.n(), 4);
        assert_eq!(ri.n(), 4);
        assert_eq!(le.right, Boundary::Absorbing);
        assert_eq!(ri.left, Boundary::Absorbing);
        assert_eq!(le.diag, g.diag[..4].to_vec());
        assert_eq!(ri.diag, g.diag[4..].to_vec());

        let f: Vec<f64> = g.grid.nodes.iter().map(|&x| x * x - 0.3).collect();
        let c = 0.5 * (f[j] + f[j + 1]);
        let fl: Vec<f64> = f[..=j].iter().map(|&v| v - c).collect();
        let fr: Vec<f64> = f[j + 1..].iter().map(|&v| v - c).collect();
        let parent = g.dirichlet_form(&f);
        let split = le.dirichlet_form(&fl) + ri.dirichlet_form(&fr);
        assert!(split <= parent + 1e-12 * parent.abs());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_killed_generator(&bm2(), 0.0, 1.0, 2).is_err());
        assert!(build_killed_generator(&bm2(), 1.0, 0.0, 10).is_err());
        assert!(build_killed_generator(&bm2(), 0.0, f64::INFINITY, 10).is_err());
        let small = build_reflected_generator(&bm2(), 0.0, 1.0, 5).unwrap();
        assert!(small.split_at_face(0.5).is_err());
    }
}
