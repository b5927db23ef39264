//! Convolution kernels of the WSBDF2 difference operator and their DOC inverse.
//!
//! On step `n >= 2` the discrete derivative is
//!
//! ```text
//! D2 v^n = b0(n) (v^n - v^{n-1}) + b1(n) (v^{n-1} - v^{n-2})
//! b0(n)  = (1 + 2 theta r_n) / (tau_n (1 + r_n))
//! b1(n)  = (1 - 2 theta) r_n^2 / (tau_n (1 + r_n))
//! ```
//!
//! and the first step is the backward Euler quotient, `b0(1) = 1/tau_1`,
//! `b1(1) = 0`. Stacking the kernels gives a lower bidiagonal matrix `B`; the
//! discrete orthogonal convolution (DOC) kernels `d[n][k]` are the entries of
//! `B^{-1}`, satisfying `sum_{j=k}^{n} d[n][j] b_{j-k}^{(j)} = delta_{nk}`.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;

/// Per-step kernel coefficients, indexed by one-based step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    theta: f64,
    b0: Vec<f64>,
    b1: Vec<f64>,
}

impl KernelTable {
    pub fn build(mesh: &Mesh, theta: f64) -> Self {
        let n_steps = mesh.num_steps();
        let mut b0 = Vec::with_capacity(n_steps);
        let mut b1 = Vec::with_capacity(n_steps);
        b0.push(1.0 / mesh.tau(1));
        b1.push(0.0);
        for n in 2..=n_steps {
            let r = mesh.ratio(n);
            let tau = mesh.tau(n);
            b0.push((1.0 + 2.0 * theta * r) / (tau * (1.0 + r)));
            b1.push((1.0 - 2.0 * theta) * r * r / (tau * (1.0 + r)));
        }
        Self { theta, b0, b1 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.b0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b0.is_empty()
    }

    pub fn b0(&self, n: usize) -> f64 {
        self.b0[n - 1]
    }

    pub fn b1(&self, n: usize) -> f64 {
        self.b1[n - 1]
    }

    /// `b_lag^{(n)}`; zero for every lag beyond one.
    pub fn coefficient(&self, n: usize, lag: usize) -> f64 {
        match lag {
            0 => self.b0(n),
            1 => self.b1(n),
            _ => 0.0,
        }
    }

    /// Dense lower-bidiagonal `B`. Only meant for oracles on small meshes.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.b0[i]
            } else if i == j + 1 {
                self.b1[i]
            } else {
                0.0
            }
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,b0,b1")?;
        for n in 1..=self.len() {
            writeln!(out, "{n},{},{}", self.b0(n), self.b1(n))?;
        }
        Ok(())
    }
}

/// Lower-triangular DOC table, `d[n][k] = d_{n-k}^{(n)}` for `1 <= k <= n <= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTable {
    rows: Vec<Vec<f64>>,
}

impl DocTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.rows[n - 1][k - 1]
    }

    /// Row `n` as `d[n][1..=n]`.
    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n - 1]
    }

    pub fn row_sum(&self, n: usize) -> f64 {
        self.row(n).iter().sum()
    }

    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| if j <= i { self.rows[i][j] } else { 0.0 })
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,k,d")?;
        for (i, row) in self.rows.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                writeln!(out, "{},{},{d}", i + 1, j + 1)?;
            }
        }
        Ok(())
    }
}

/// One row of the DOC table, by the backward two-term recursion
/// `d[n][k] = -(b1(k+1) / b0(k)) d[n][k+1]`.
pub fn doc_row(kernels: &KernelTable, n: usize) -> Result<Vec<f64>> {
    if n == 0 || n > kernels.len() {
        return invalid(format!("row {n} outside 1..={}", kernels.len()));
    }
    let mut row = vec![0.0; n];
    let lead = kernels.b0(n);
    if lead == 0.0 {
        return Err(Error::DegenerateKernel { step: n });
    }
    row[n - 1] = 1.0 / lead;
    for k in (1..n).rev() {
        let b0 = kernels.b0(k);
        if b0 == 0.0 {
            return Err(Error::DegenerateKernel { step: k });
        }
        row[k - 1] = -(kernels.b1(k + 1) / b0) * row[k];
    }
    Ok(row)
}

pub fn build_doc_recursive(kernels: &KernelTable) -> Result<DocTable> {
    let rows = (1..=kernels.len())
        .map(|n| doc_row(kernels, n))
        .collect::<Result<_>>()?;
    Ok(DocTable { rows })
}

/// DOC table from the closed product
/// `d[n][k] = (1 / b0(k)) prod_{i=k+1}^{n} (2 theta - 1) r_i^2 / (1 + 2 theta r_i)`.
pub fn build_doc_explicit(kernels: &KernelTable, mesh: &Mesh) -> DocTable {
    let theta = kernels.theta();
    let factor = |i: usize| {
        let r = mesh.ratio(i);
        (2.0 * theta - 1.0) * r * r / (1.0 + 2.0 * theta * r)
    };
    let rows = (1..=kernels.len())
        .map(|n| {
            (1..=n)
                .map(|k| (k + 1..=n).map(factor).product::<f64>() / kernels.b0(k))
                .collect()
        })
        .collect();
    DocTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalityCheck {
    pub passed: bool,
    pub max_residual: f64,
}

/// Checks `sum_{j=k}^{n} d[n][j] b_{j-k}^{(j)} = delta_{nk}` for all `1 <= k <= n`.
///
/// The full sum is evaluated (not just the two nonzero terms). Each row's
/// residual is compared against `tol * max(1, max_j |d[n][j] b0(j)|)`.
pub fn check_orthogonality(kernels: &KernelTable, doc: &DocTable, tol: f64) -> OrthogonalityCheck {
    let n_max = kernels.len().min(doc.len());
    let mut max_residual = 0.0_f64;
    let mut passed = doc.len() == kernels.len();
    for n in 1..=n_max {
        let scale = (1..=n)
            .map(|j| (doc.get(n, j) * kernels.b0(j)).abs())
            .fold(1.0, f64::max);
        for k in 1..=n {
            let sum: f64 = (k..=n)
                .map(|j| doc.get(n, j) * kernels.coefficient(j, j - k))
                .sum();
            let target = if n == k { 1.0 } else { 0.0 };
            let residual = (sum - target).abs();
            max_residual = max_residual.max(residual);
            if residual > tol * scale {
                passed = false;
            }
        }
    }
    OrthogonalityCheck {
        passed,
        max_residual,
    }
}

/// `D2 v^1 .. D2 v^N` for scalar samples `v^0 .. v^N`.
pub fn apply_d2(mesh: &Mesh, theta: f64, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != mesh.num_steps() + 1 {
        return invalid(format!(
            "expected {} samples, got {}",
            mesh.num_steps() + 1,
            values.len()
        ));
    }
    let kernels = KernelTable::build(mesh, theta);
    Ok((1..=mesh.num_steps())
        .map(|n| {
            let mut d = kernels.b0(n) * (values[n] - values[n - 1]);
            if n >= 2 {
                d += kernels.b1(n) * (values[n - 1] - values[n - 2]);
            }
            d
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_step_mesh() -> Mesh {
        Mesh::from_steps(vec![0.1, 0.4]).unwrap()
    }

    #[test]
    fn crank_nicolson_kernels_are_diagonal() {
        let m = Mesh::random(1.0, 12, 3).unwrap();
        let k = KernelTable::build(&m, 0.5);
        for n in 1..=12 {
            assert_eq!(k.b1(n), 0.0);
            assert_relative_eq!(k.b0(n), 1.0 / m.tau(n), max_relative = 1e-15);
        }
        let doc = build_doc_recursive(&k).unwrap();
        for n in 1..=12 {
            assert_relative_eq!(doc.get(n, n), m.tau(n), max_relative = 1e-15);
            assert!(doc.row(n)[..n - 1].iter().all(|d| *d == 0.0));
        }
        let explicit = build_doc_explicit(&k, &m);
        assert!(explicit.row(5)[..4].iter().all(|d| *d == 0.0));
        let check = check_orthogonality(&k, &doc, 1e-12);
        assert!(check.passed);
        assert!(check.max_residual < 1e-15);
    }

    #[test]
    fn bdf2_uniform_kernels() {
        let tau = 0.125;
        let m = Mesh::uniform(1.0, 8).unwrap();
        let k = KernelTable::build(&m, 1.0);
        for n in 2..=8 {
            assert_relative_eq!(k.b0(n), 1.5 / tau, max_relative = 1e-14);
            assert_relative_eq!(k.b1(n), -0.5 / tau, max_relative = 1e-14);
        }
        // d = (2 tau / 3) (1/3)^(n-k) away from the first column
        let doc = build_doc_explicit(&k, &m);
        for n in 2..=8 {
            for kk in 2..=n {
                let want = 2.0 * tau / 3.0 * (1.0f64 / 3.0).powi((n - kk) as i32);
                assert_relative_eq!(doc.get(n, kk), want, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn hand_evaluated_two_step() {
        let m = two_step_mesh();
        let k = KernelTable::build(&m, 1.0);
        assert_relative_eq!(k.b0(1), 10.0, max_relative = 1e-15);
        assert_relative_eq!(k.b0(2), 4.5, max_relative = 1e-14);
        assert_relative_eq!(k.b1(2), -8.0, max_relative = 1e-14);

        let doc = build_doc_recursive(&k).unwrap();
        assert_relative_eq!(doc.get(2, 2), 2.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(doc.get(2, 1), 8.0 / 45.0, max_relative = 1e-14);
        assert_relative_eq!(doc.row_sum(2), 0.4, max_relative = 1e-14);
    }

    #[test]
    fn kernel_identity_b1_tau_plus_b0_tau() {
        let m = Mesh::random(2.0, 30, 9).unwrap();
        for theta in [0.5, 0.7, 1.0] {
            let k = KernelTable::build(&m, theta);
            for n in 2..=30 {
                let s = k.b1(n) * m.tau(n - 1) + k.b0(n) * m.tau(n);
                assert!((s - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn degenerate_kernel_is_reported() {
        let k = KernelTable {
            theta: 1.0,
            b0: vec![1.0, 0.0],
            b1: vec![0.0, 1.0],
        };
        assert!(matches!(
            build_doc_recursive(&k),
            Err(Error::DegenerateKernel { step: 2 })
        ));
        assert!(doc_row(&k, 3).is_err());
    }

    #[test]
    fn apply_d2_constant_linear_quadratic() {
        let m = Mesh::random(1.0, 15, 11).unwrap();
        let t = m.levels();
        let constant = vec![3.0; 16];
        assert!(apply_d2(&m, 0.8, &constant)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));

        for theta in [0.5, 0.75, 1.0] {
            let out = apply_d2(&m, theta, t).unwrap();
            assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-11), "{out:?}");
        }

        let squares: Vec<f64> = t.iter().map(|s| s * s).collect();
        let out = apply_d2(&m, 1.0, &squares).unwrap();
        for n in 2..=15 {
            assert!((out[n - 1] - 2.0 * t[n]).abs() < 1e-11);
        }
        assert!(apply_d2(&m, 1.0, &squares[1..]).is_err());
    }

    #[test]
    fn csv_headers() {
        let m = two_step_mesh();
        let k = KernelTable::build(&m, 1.0);
        let mut buf = Vec::new();
        k.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("n,b0,b1\n1,10,0\n"));
        let mut buf = Vec::new();
        build_doc_recursive(&k)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("n,k,d\n1,1,"));
    }
}
