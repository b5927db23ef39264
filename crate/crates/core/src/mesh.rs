//! Nonuniform time grids `0 = t_0 < t_1 < ... < t_N = T`.
//!
//! Steps are `tau_k = t_k - t_{k-1}` for `k = 1..=N` and adjacent ratios are
//! `r_k = tau_k / tau_{k-1}` for `k = 2..=N`. Accessors use these one-based
//! indices; the slices returned by [`Mesh::steps`] and [`Mesh::ratios`] are
//! zero-based and start at `tau_1` and `r_2` respectively.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::ratio_bounds;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    levels: Vec<f64>,
    steps: Vec<f64>,
    ratios: Vec<f64>,
}

/// Result of comparing a mesh's ratios against `r_s(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshReport {
    pub max_ratio: f64,
    /// One-based step indices `k` with `r_k > r_s`.
    pub violating_indices: Vec<usize>,
    pub r_s_used: f64,
    /// Set when `theta` is outside `[1/2, 1]`; the threshold is then not meaningful.
    pub theta_warning: bool,
}

impl MeshReport {
    pub fn is_clean(&self) -> bool {
        self.violating_indices.is_empty() && !self.theta_warning
    }
}

fn check_final_time(final_time: f64) -> Result<()> {
    if !(final_time.is_finite() && final_time > 0.0) {
        return invalid(format!("final time must be positive, got {final_time}"));
    }
    Ok(())
}

fn check_steps(n: usize) -> Result<()> {
    if n < 1 {
        return invalid("mesh needs at least one step");
    }
    Ok(())
}

impl Mesh {
    /// Builds a mesh from explicit step sizes. The final level is the plain sum of the steps.
    pub fn from_steps(steps: Vec<f64>) -> Result<Self> {
        check_steps(steps.len())?;
        if let Some(bad) = steps.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return invalid(format!("step sizes must be positive and finite, got {bad}"));
        }
        let final_time = steps.iter().sum();
        Ok(Self::assemble(steps, final_time))
    }

    fn assemble(steps: Vec<f64>, final_time: f64) -> Self {
        let mut levels = Vec::with_capacity(steps.len() + 1);
        levels.push(0.0);
        let mut t = 0.0;
        for tau in &steps {
            t += tau;
            levels.push(t);
        }
        // pin the endpoint so that t_N == T exactly
        *levels.last_mut().unwrap() = final_time;
        let ratios = steps.windows(2).map(|w| w[1] / w[0]).collect();
        Self {
            levels,
            steps,
            ratios,
        }
    }

    /// Builds the mesh whose ratios are `r_2..r_N` (so `N = ratios.len() + 1`),
    /// with `tau_1` solved from the constraint `sum tau_k = T`.
    pub fn from_ratios(final_time: f64, ratios: &[f64]) -> Result<Self> {
        check_final_time(final_time)?;
        if let Some(bad) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return invalid(format!("ratios must be positive and finite, got {bad}"));
        }
        // relative step sizes tau_k / tau_1
        let mut rel = Vec::with_capacity(ratios.len() + 1);
        rel.push(1.0);
        for r in ratios {
            let prev = *rel.last().unwrap();
            rel.push(prev * r);
        }
        let first = final_time / rel.iter().sum::<f64>();
        let mut steps = Vec::with_capacity(rel.len());
        steps.push(first);
        for r in ratios {
            let prev = *steps.last().unwrap();
            steps.push(prev * r);
        }
        Ok(Self::assemble(steps, final_time))
    }

    pub fn uniform(final_time: f64, n: usize) -> Result<Self> {
        check_final_time(final_time)?;
        check_steps(n)?;
        let tau = final_time / n as f64;
        let mut mesh = Self::assemble(vec![tau; n], final_time);
        // exact levels t_k = k T / N
        for (k, t) in mesh.levels.iter_mut().enumerate() {
            *t = final_time * k as f64 / n as f64;
        }
        Ok(mesh)
    }

    /// Alternating mesh with `r_{2k} = 4` and `r_{2k+1} = 1/4`. `n` must be even.
    pub fn case1(final_time: f64, n: usize) -> Result<Self> {
        check_final_time(final_time)?;
        if n < 2 || !n.is_multiple_of(2) {
            return invalid(format!(
                "alternating mesh needs an even number of steps, got {n}"
            ));
        }
        let ratios: Vec<f64> = (2..=n)
            .map(|k| if k % 2 == 0 { 4.0 } else { 0.25 })
            .collect();
        Self::from_ratios(final_time, &ratios)
    }

    /// Constant-ratio mesh `tau_k = tau_1 r^(k-1)`.
    pub fn geometric(final_time: f64, n: usize, ratio: f64) -> Result<Self> {
        check_final_time(final_time)?;
        check_steps(n)?;
        if !(ratio.is_finite() && ratio > 0.0) {
            return invalid(format!("ratio must be positive, got {ratio}"));
        }
        if ratio == 1.0 {
            return Self::uniform(final_time, n);
        }
        let first = final_time * (ratio - 1.0) / (ratio.powi(n as i32) - 1.0);
        let mut steps = Vec::with_capacity(n);
        steps.push(first);
        for _ in 1..n {
            let prev = *steps.last().unwrap();
            steps.push(prev * ratio);
        }
        Ok(Self::assemble(steps, final_time))
    }

    /// Random steps `tau_k = T eps_k / S` with `eps_k` uniform on `(0, 1)` and
    /// `S = sum eps_k`.
    ///
    /// The draws come from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`),
    /// whose output stream is fixed across platforms and crate versions.
    pub fn random(final_time: f64, n: usize, seed: u64) -> Result<Self> {
        check_final_time(final_time)?;
        check_steps(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps: Vec<f64> = (0..n)
            .map(|_| loop {
                let e: f64 = rng.gen();
                if e > 0.0 {
                    break e;
                }
            })
            .collect();
        let total: f64 = eps.iter().sum();
        let steps = eps.iter().map(|e| final_time * e / total).collect();
        Ok(Self::assemble(steps, final_time))
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn final_time(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    /// `t_0..t_N`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `tau_1..tau_N`.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// `r_2..r_N`.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn t(&self, n: usize) -> f64 {
        self.levels[n]
    }

    /// `tau_k` for `1 <= k <= N`.
    pub fn tau(&self, k: usize) -> f64 {
        self.steps[k - 1]
    }

    /// `r_k` for `2 <= k <= N`.
    pub fn ratio(&self, k: usize) -> f64 {
        self.ratios[k - 2]
    }

    pub fn max_step(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `k,t_k,tau_k,r_k`. Row `k = 0` carries only `t_0`; `r_1` is empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,t_k,tau_k,r_k")?;
        writeln!(out, "0,{},,", self.levels[0])?;
        for k in 1..=self.num_steps() {
            let ratio = if k >= 2 {
                self.ratio(k).to_string()
            } else {
                String::new()
            };
            writeln!(out, "{k},{},{},{ratio}", self.t(k), self.tau(k))?;
        }
        Ok(())
    }
}

/// Lists the steps whose ratio exceeds `r_s(theta)`. Never rejects the mesh.
pub fn validate_mesh(mesh: &Mesh, theta: f64) -> MeshReport {
    let theta_warning = !(0.5..=1.0).contains(&theta);
    // below 1/2 the threshold is undefined; report against the CN limit
    let r_s = ratio_bounds::r_optimal(theta.max(0.5)).unwrap_or(f64::INFINITY);
    let violating_indices = mesh
        .ratios()
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > r_s)
        .map(|(i, _)| i + 2)
        .collect();
    MeshReport {
        max_ratio: mesh.max_ratio(),
        violating_indices,
        r_s_used: r_s,
        theta_warning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_steps_and_ratios() {
        let m = Mesh::uniform(1.0, 4).unwrap();
        assert_eq!(m.steps(), &[0.25; 4]);
        assert_eq!(m.ratios(), &[1.0; 3]);

        let m = Mesh::uniform(2.0, 1).unwrap();
        assert_eq!(m.steps(), &[2.0]);
        assert!(m.ratios().is_empty());

        let m = Mesh::uniform(1.0, 160).unwrap();
        assert_eq!(m.t(160), 1.0);
        assert!(m.steps().iter().all(|t| (t - 1.0 / 160.0).abs() < 1e-17));
    }

    #[test]
    fn uniform_rejects_bad_arguments() {
        assert!(Mesh::uniform(0.0, 4).is_err());
        assert!(Mesh::uniform(-1.0, 4).is_err());
        assert!(Mesh::uniform(1.0, 0).is_err());
    }

    #[test]
    fn case1_hand_solved() {
        let m = Mesh::case1(1.0, 4).unwrap();
        for (a, b) in m.steps().iter().zip([0.1, 0.4, 0.1, 0.4]) {
            assert_relative_eq!(*a, b, max_relative = 1e-15);
        }
        let m = Mesh::case1(1.0, 2).unwrap();
        assert_relative_eq!(m.tau(1), 0.2, max_relative = 1e-15);
        assert_relative_eq!(m.tau(2), 0.8, max_relative = 1e-15);

        let m = Mesh::case1(1.0, 6).unwrap();
        assert_eq!(m.ratios(), &[4.0, 0.25, 4.0, 0.25, 4.0]);
        assert!(Mesh::case1(1.0, 5).is_err());
    }

    #[test]
    fn geometric_closed_form() {
        let m = Mesh::geometric(7.0, 3, 2.0).unwrap();
        for (a, b) in m.steps().iter().zip([1.0, 2.0, 4.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-15);
        }
        let m = Mesh::geometric(1.0, 3, 1.0).unwrap();
        assert!(m.steps().iter().all(|t| (t - 1.0 / 3.0).abs() < 1e-16));

        let m = Mesh::geometric(1.0, 20, 2.0).unwrap();
        let denom = (1u64 << 20) as f64 - 1.0;
        assert_relative_eq!(m.tau(1), 1.0 / denom, max_relative = 1e-14);
        assert_relative_eq!(m.tau(20), (1u64 << 19) as f64 / denom, max_relative = 1e-14);
        assert!(Mesh::geometric(1.0, 3, 0.0).is_err());
        assert!(Mesh::geometric(1.0, 3, -2.0).is_err());
    }

    #[test]
    fn random_is_deterministic_and_normalized() {
        let a = Mesh::random(1.0, 5, 42).unwrap();
        let b = Mesh::random(1.0, 5, 42).unwrap();
        assert_eq!(a, b);
        let c = Mesh::random(1.0, 5, 43).unwrap();
        assert_ne!(a, c);
        let sum: f64 = a.steps().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(a.steps().iter().all(|t| *t > 0.0 && *t < 1.0));
    }

    #[test]
    fn validate_reports_violations() {
        let m = Mesh::uniform(1.0, 10).unwrap();
        assert!(validate_mesh(&m, 1.0).is_clean());

        let m = Mesh::geometric(1.0, 10, 2.0).unwrap();
        assert!(validate_mesh(&m, 1.0).violating_indices.is_empty());

        let m = Mesh::geometric(1.0, 6, 5.0).unwrap();
        let report = validate_mesh(&m, 1.0);
        assert_eq!(report.violating_indices, vec![2, 3, 4, 5, 6]);
        assert_relative_eq!(report.r_s_used, 4.8645365123, epsilon = 1e-9);

        let report = validate_mesh(&m, 0.3);
        assert!(report.theta_warning);
    }

    #[test]
    fn csv_layout() {
        let m = Mesh::case1(1.0, 2).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,t_k,tau_k,r_k");
        assert_eq!(lines[1], "0,0,,");
        assert!(lines[2].starts_with("1,") && lines[2].ends_with(','));
        assert!(lines[3].ends_with(",4"));
    }

    proptest! {
        #[test]
        fn ratios_reconstruct(ratios in prop::collection::vec(0.05f64..8.0, 0..60), t in 0.1f64..10.0) {
            let m = Mesh::from_ratios(t, &ratios).unwrap();
            let sum: f64 = m.steps().iter().sum();
            prop_assert!((sum - t).abs() <= 1e-12 * t);
            prop_assert_eq!(m.t(m.num_steps()), t);
            for (got, want) in m.ratios().iter().zip(&ratios) {
                prop_assert!((got - want).abs() <= 1e-13 * want);
            }
        }

        #[test]
        fn random_sums_to_final_time(n in 1usize..300, seed in any::<u64>()) {
            let m = Mesh::random(1.0, n, seed).unwrap();
            let sum: f64 = m.steps().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (k, r) in m.ratios().iter().enumerate() {
                prop_assert!((r - m.steps()[k + 1] / m.steps()[k]).abs() <= 1e-14 * r);
            }
        }
    }
}
