//! Chebyshev–Gauss–Lobatto collocation of `-Laplacian` on `(-1, 1)^2` with
//! homogeneous Dirichlet data.
//!
//! The unknowns are the interior nodal values `u(x_i, y_j)`,
//! `1 <= i < M_x`, `1 <= j < M_y`, stored row-major
//! (`index = (i - 1) * (M_y - 1) + (j - 1)`). The operator is the tensor sum
//! `A = A_x (x) I + I (x) A_y` of the interior-restricted 1D operators
//! `A_x = -D_x^2`. Each 1D operator is diagonalized once (real Schur form
//! followed by triangular back substitution), so a shifted solve is four
//! small dense products and a pointwise division.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, Schur};

use crate::error::{invalid, Error, Result};
use crate::integrator::SpatialProblem;

/// Ascending CGL nodes `x_k = -cos(k pi / m)`, `k = 0..=m`.
///
/// Evaluated as `sin(pi (2k - m) / (2m))`, which is exactly antisymmetric.
pub fn cgl_nodes(m: usize) -> Result<Vec<f64>> {
    if m < 1 {
        return invalid("need at least one interval");
    }
    let mf = m as f64;
    Ok((0..=m)
        .map(|k| (PI * (2.0 * k as f64 - mf) / (2.0 * mf)).sin())
        .collect())
}

/// Clenshaw–Curtis weights on the CGL nodes (symmetric, so the ordering does not matter).
pub fn clenshaw_curtis_weights(m: usize) -> Result<Vec<f64>> {
    if m < 1 {
        return invalid("need at least one interval");
    }
    let mf = m as f64;
    let mut w = vec![0.0; m + 1];
    if m == 1 {
        return Ok(vec![1.0, 1.0]);
    }
    let ends = if m.is_multiple_of(2) {
        1.0 / (mf * mf - 1.0)
    } else {
        1.0 / (mf * mf)
    };
    w[0] = ends;
    w[m] = ends;
    for (i, wi) in w.iter_mut().enumerate().take(m).skip(1) {
        let theta = PI * i as f64 / mf;
        let mut v = 1.0;
        if m.is_multiple_of(2) {
            for k in 1..m / 2 {
                v -= 2.0 * (2.0 * k as f64 * theta).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
            v -= (mf * theta).cos() / (mf * mf - 1.0);
        } else {
            for k in 1..=(m - 1) / 2 {
                v -= 2.0 * (2.0 * k as f64 * theta).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
        *wi = 2.0 * v / mf;
    }
    Ok(w)
}

/// First-derivative collocation matrix on the ascending CGL nodes.
///
/// Off-diagonal entries `(c_i / c_j) (-1)^{i+j} / (x_i - x_j)` with
/// `c_0 = c_m = 2`; the diagonal is the negative row sum.
pub fn cheb_diff_matrix(m: usize) -> Result<DMatrix<f64>> {
    let x = cgl_nodes(m)?;
    let c = |i: usize| if i == 0 || i == m { 2.0 } else { 1.0 };
    let mut d = DMatrix::from_fn(m + 1, m + 1, |i, j| {
        if i == j {
            0.0
        } else {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            c(i) / c(j) * sign / (x[i] - x[j])
        }
    });
    for i in 0..=m {
        let s: f64 = d.row(i).iter().sum();
        d[(i, i)] = -s;
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct ChebGrid {
    pub m: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ChebGrid {
    pub fn new(m: usize) -> Result<Self> {
        Ok(Self {
            m,
            nodes: cgl_nodes(m)?,
            weights: clenshaw_curtis_weights(m)?,
        })
    }

    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.m]
    }

    pub fn interior_weights(&self) -> &[f64] {
        &self.weights[1..self.m]
    }
}

/// Diagonalization `A = V diag(values) V^{-1}` of a 1D interior operator.
#[derive(Debug, Clone)]
struct Eigen1d {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

fn diagonalize(a: &DMatrix<f64>) -> Result<Eigen1d> {
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for i in 1..n {
        if t[(i, i - 1)].abs() > 1e-10 * scale {
            return Err(Error::Numerical("operator has complex eigenvalues".into()));
        }
    }
    // eigenvectors of the triangular factor by back substitution
    let mut y = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = 1.0;
        for i in (0..k).rev() {
            let s: f64 = (i + 1..=k).map(|l| t[(i, l)] * y[(l, k)]).sum();
            let gap = t[(i, i)] - lambda;
            if gap.abs() <= f64::EPSILON * scale {
                return Err(Error::Numerical(
                    "repeated eigenvalue in 1D operator".into(),
                ));
            }
            y[(i, k)] = -s / gap;
        }
    }
    let mut vectors = q * y;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let inverse = vectors
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("eigenvector matrix is singular".into()))?;
    let values = (0..n).map(|i| t[(i, i)]).collect();
    Ok(Eigen1d {
        values,
        vectors,
        inverse,
    })
}

/// Interior 1D operator `-D^2` with Dirichlet rows and columns removed.
pub fn interior_second_derivative(m: usize) -> Result<DMatrix<f64>> {
    let d = cheb_diff_matrix(m)?;
    let d2 = &d * &d;
    Ok(-d2.view((1, 1), (m - 1, m - 1)).into_owned())
}

#[derive(Debug, Clone)]
pub struct SpectralLaplacian {
    pub grid_x: ChebGrid,
    pub grid_y: ChebGrid,
    op_x: DMatrix<f64>,
    op_y: DMatrix<f64>,
    eig_x: Eigen1d,
    eig_y: Eigen1d,
    weights: Vec<f64>,
}

impl SpectralLaplacian {
    pub fn new(mx: usize, my: usize) -> Result<Self> {
        if mx < 2 || my < 2 {
            return invalid(format!(
                "need at least two intervals per direction, got ({mx}, {my})"
            ));
        }
        let grid_x = ChebGrid::new(mx)?;
        let grid_y = ChebGrid::new(my)?;
        let op_x = interior_second_derivative(mx)?;
        let op_y = if my == mx {
            op_x.clone()
        } else {
            interior_second_derivative(my)?
        };
        let eig_x = diagonalize(&op_x)?;
        let eig_y = if my == mx {
            eig_x.clone()
        } else {
            diagonalize(&op_y)?
        };
        let weights = grid_x
            .interior_weights()
            .iter()
            .flat_map(|wx| grid_y.interior_weights().iter().map(move |wy| wx * wy))
            .collect();
        Ok(Self {
            grid_x,
            grid_y,
            op_x,
            op_y,
            eig_x,
            eig_y,
            weights,
        })
    }

    pub fn nx(&self) -> usize {
        self.grid_x.m - 1
    }

    pub fn ny(&self) -> usize {
        self.grid_y.m - 1
    }

    /// Eigenvalues of the 1D interior operators, ascending.
    pub fn eigenvalues_1d(&self) -> (Vec<f64>, Vec<f64>) {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        (sorted(&self.eig_x.values), sorted(&self.eig_y.values))
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        let (x, y) = self.eigenvalues_1d();
        x[0] + y[0]
    }

    fn as_matrix(&self, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nx(), self.ny(), v)
    }

    fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
        m.transpose().as_slice().to_vec()
    }

    /// Samples `g(x, y)` on the interior nodes.
    pub fn sample_interior(&self, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let xs = self.grid_x.interior_nodes();
        let ys = self.grid_y.interior_nodes();
        xs.iter()
            .flat_map(|x| ys.iter().map(|y| g(*x, *y)).collect::<Vec<_>>())
            .collect()
    }

    /// Samples `g` on the full grid, row-major over `(M_x + 1) x (M_y + 1)`.
    pub fn sample_full(&self, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let ys = &self.grid_y.nodes;
        self.grid_x
            .nodes
            .iter()
            .flat_map(|x| ys.iter().map(|y| g(*x, *y)).collect::<Vec<_>>())
            .collect()
    }

    /// Pads interior values with the zero boundary.
    pub fn interior_to_full(&self, v: &[f64]) -> Vec<f64> {
        let (mx, my) = (self.grid_x.m, self.grid_y.m);
        let mut full = vec![0.0; (mx + 1) * (my + 1)];
        for i in 1..mx {
            for j in 1..my {
                full[i * (my + 1) + j] = v[(i - 1) * (my - 1) + (j - 1)];
            }
        }
        full
    }

    /// Dense `sigma I + mu A`, for validating the diagonalized solve.
    pub fn dense_shifted(&self, sigma: f64, mu: f64) -> DMatrix<f64> {
        let ix = DMatrix::<f64>::identity(self.nx(), self.nx());
        let iy = DMatrix::<f64>::identity(self.ny(), self.ny());
        let a = self.op_x.kronecker(&iy) + ix.kronecker(&self.op_y);
        a * mu + DMatrix::identity(self.nx() * self.ny(), self.nx() * self.ny()) * sigma
    }

    /// Shifted solve by dense LU of the full operator.
    pub fn solve_shifted_dense(&self, sigma: f64, mu: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self.dense_shifted(sigma, mu).lu();
        let b = nalgebra::DVector::from_column_slice(rhs);
        lu.solve(&b)
            .map(|x| x.as_slice().to_vec())
            .ok_or_else(|| Error::Numerical("shifted operator is singular".into()))
    }

    /// Writes `i,j,x_i,y_j,value` over the full grid.
    pub fn write_snapshot_csv<W: Write>(
        &self,
        mut out: W,
        interior: &[f64],
    ) -> std::io::Result<()> {
        let full = self.interior_to_full(interior);
        let my = self.grid_y.m;
        writeln!(out, "i,j,x_i,y_j,value")?;
        for (i, x) in self.grid_x.nodes.iter().enumerate() {
            for (j, y) in self.grid_y.nodes.iter().enumerate() {
                writeln!(out, "{i},{j},{x},{y},{}", full[i * (my + 1) + j])?;
            }
        }
        Ok(())
    }
}

impl SpatialProblem for SpectralLaplacian {
    fn dof_count(&self) -> usize {
        self.nx() * self.ny()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let u = self.as_matrix(v);
        let out = &self.op_x * &u + &u * self.op_y.transpose();
        Self::flatten(&out)
    }

    fn solve_shifted(&self, sigma: f64, mu: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        if sigma.is_nan() || sigma <= 0.0 || mu < 0.0 || !mu.is_finite() {
            return invalid(format!(
                "shift requires sigma > 0 and mu >= 0, got ({sigma}, {mu})"
            ));
        }
        let r = self.as_matrix(rhs);
        let mut c = &self.eig_x.inverse * r * self.eig_y.inverse.transpose();
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                c[(i, j)] /= sigma + mu * (self.eig_x.values[i] + self.eig_y.values[j]);
            }
        }
        let w = &self.eig_x.vectors * c * self.eig_y.vectors.transpose();
        Ok(Self::flatten(&w))
    }

    fn inner(&self, v: &[f64], w: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(v)
            .zip(w)
            .map(|((q, a), b)| q * a * b)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormKind {
    /// Tensor-product Clenshaw–Curtis quadrature.
    #[default]
    ClenshawCurtis,
    /// Root mean square over all grid nodes.
    Rms,
    Max,
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cc" => Ok(Self::ClenshawCurtis),
            "rms" => Ok(Self::Rms),
            "max" => Ok(Self::Max),
            other => invalid(format!("unknown norm '{other}' (expected cc, rms or max)")),
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ClenshawCurtis => "cc",
            Self::Rms => "rms",
            Self::Max => "max",
        })
    }
}

/// Discrete norm of full-grid values (row-major over `(M_x + 1) x (M_y + 1)`).
pub fn discrete_norm(gx: &ChebGrid, gy: &ChebGrid, values: &[f64], kind: NormKind) -> f64 {
    match kind {
        NormKind::ClenshawCurtis => {
            let mut s = 0.0;
            for (i, wx) in gx.weights.iter().enumerate() {
                for (j, wy) in gy.weights.iter().enumerate() {
                    let v = values[i * gy.weights.len() + j];
                    s += wx * wy * v * v;
                }
            }
            s.sqrt()
        }
        NormKind::Rms => (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt(),
        NormKind::Max => values.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

pub fn discrete_l2_norm(gx: &ChebGrid, gy: &ChebGrid, values: &[f64]) -> f64 {
    discrete_norm(gx, gy, values, NormKind::ClenshawCurtis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nodes() {
        assert_eq!(cgl_nodes(2).unwrap(), vec![-1.0, 0.0, 1.0]);
        let x = cgl_nodes(4).unwrap();
        let h = 0.5f64.sqrt();
        for (a, b) in x.iter().zip([-1.0, -h, 0.0, h, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        for m in 1..40 {
            let x = cgl_nodes(m).unwrap();
            assert_eq!(x[0], -1.0);
            assert_eq!(x[m], 1.0);
            assert!(x.windows(2).all(|w| w[0] < w[1]));
            for k in 0..=m {
                assert!((x[k] + x[m - k]).abs() <= 1e-15);
            }
        }
        assert!(cgl_nodes(0).is_err());
    }

    #[test]
    fn weights_integrate_polynomials() {
        for m in [1, 2, 5, 8, 20] {
            let x = cgl_nodes(m).unwrap();
            let w = clenshaw_curtis_weights(m).unwrap();
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            if m >= 2 {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                assert_relative_eq!(s, 2.0 / 3.0, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn diff_matrix_exactness() {
        for m in [1, 3, 8, 16] {
            let d = cheb_diff_matrix(m).unwrap();
            let x = nalgebra::DVector::from_vec(cgl_nodes(m).unwrap());
            let ones = nalgebra::DVector::from_element(m + 1, 1.0);
            assert!((&d * &ones).amax() < 1e-12);
            assert!((&d * &x - &ones).amax() < 1e-12);
            if m >= 3 {
                let sq = x.map(|v| v * v);
                let dd = &d * (&d * sq);
                assert!(dd.iter().all(|v| (v - 2.0).abs() < 1e-10), "{dd}");
            }
        }
    }

    #[test]
    fn smallest_eigenvalues() {
        let op = SpectralLaplacian::new(20, 20).unwrap();
        let (ex, _) = op.eigenvalues_1d();
        assert!(ex.iter().all(|v| *v > 0.0));
        assert_relative_eq!(ex[0], (PI / 2.0).powi(2), max_relative = 1e-8);
        assert_relative_eq!(op.smallest_eigenvalue(), PI * PI / 2.0, max_relative = 1e-8);
        let small = SpectralLaplacian::new(12, 12).unwrap();
        assert_relative_eq!(
            small.eigenvalues_1d().0[0],
            (PI / 2.0).powi(2),
            max_relative = 1e-8
        );
    }

    #[test]
    fn apply_on_eigenfunction_and_polynomial() {
        let op = SpectralLaplacian::new(20, 20).unwrap();
        let s = op.sample_interior(|x, y| (PI * x).sin() * (PI * y).sin());
        let a = op.apply(&s);
        let err = a
            .iter()
            .zip(&s)
            .map(|(a, s)| (a - 2.0 * PI * PI * s).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");

        let b = op.sample_interior(|x, y| (1.0 - x * x) * (1.0 - y * y));
        let want = op.sample_interior(|x, y| 2.0 * (1.0 - y * y) + 2.0 * (1.0 - x * x));
        let got = op.apply(&b);
        assert!(got.iter().zip(&want).all(|(g, w)| (g - w).abs() < 1e-11));
    }

    #[test]
    fn shifted_solves() {
        let op = SpectralLaplacian::new(20, 20).unwrap();
        let s = op.sample_interior(|x, y| (PI * x).sin() * (PI * y).sin());
        let w = op.solve_shifted(2.0, 0.0, &s).unwrap();
        assert!(w.iter().zip(&s).all(|(w, s)| (w - s / 2.0).abs() < 1e-14));

        let (sigma, mu) = (3.0, 0.7);
        let rhs: Vec<f64> = s.iter().map(|v| (sigma + 2.0 * PI * PI * mu) * v).collect();
        let w = op.solve_shifted(sigma, mu, &rhs).unwrap();
        assert!(w.iter().zip(&s).all(|(w, s)| (w - s).abs() < 1e-8));

        assert!(op.solve_shifted(0.0, 1.0, &rhs).is_err());
        assert!(op.solve_shifted(-1.0, 1.0, &rhs).is_err());
    }

    #[test]
    fn eigen_path_matches_dense_lu() {
        let op = SpectralLaplacian::new(10, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rhs: Vec<f64> = (0..op.dof_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let fast = op.solve_shifted(5.0, 0.3, &rhs).unwrap();
        let dense = op.solve_shifted_dense(5.0, 0.3, &rhs).unwrap();
        let diff = fast
            .iter()
            .zip(&dense)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-11, "{diff}");
    }

    #[test]
    fn norms() {
        let gx = ChebGrid::new(20).unwrap();
        let op = SpectralLaplacian::new(20, 20).unwrap();
        let ones = vec![1.0; 21 * 21];
        assert_relative_eq!(discrete_l2_norm(&gx, &gx, &ones), 2.0, max_relative = 1e-14);
        let s = op.sample_full(|x, y| (PI * x).sin() * (PI * y).sin());
        assert!((discrete_l2_norm(&gx, &gx, &s) - 1.0).abs() < 1e-10);
        assert_eq!(discrete_l2_norm(&gx, &gx, &vec![0.0; 441]), 0.0);
        assert_eq!(discrete_norm(&gx, &gx, &ones, NormKind::Rms), 1.0);
        assert_eq!(discrete_norm(&gx, &gx, &ones, NormKind::Max), 1.0);
        assert_eq!("rms".parse::<NormKind>().unwrap(), NormKind::Rms);
        assert!("l1".parse::<NormKind>().is_err());
    }

    #[test]
    fn grad_norm_of_eigenfunction() {
        let op = SpectralLaplacian::new(20, 20).unwrap();
        let s = op.sample_interior(|x, y| (PI * x).sin() * (PI * y).sin());
        let g = op.grad_norm(&s);
        let l2 = op.norm(&s);
        assert_relative_eq!(g * g, 2.0 * PI * PI * l2 * l2, max_relative = 1e-6);
    }

    #[test]
    fn snapshot_csv() {
        let op = SpectralLaplacian::new(2, 3).unwrap();
        let mut buf = Vec::new();
        op.write_snapshot_csv(&mut buf, &[1.0, 2.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 4);
        assert!(text.contains("\n1,1,0,"));
    }
}
