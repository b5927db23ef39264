//! The variable-step WSBDF2 stepper and its diagnostics.
//!
//! Step one is the theta-weighted backward Euler start
//!
//! ```text
//! (I/tau_1 + theta A) u^1 = u^0/tau_1 - (1-theta) A u^0 + theta f^1 + (1-theta) f^0
//! ```
//!
//! and every later step solves
//!
//! ```text
//! (b0(n) I + theta A) u^n = b0(n) u^{n-1} - b1(n) (u^{n-1} - u^{n-2})
//!                           - (1-theta) A u^{n-1} + theta f^n + (1-theta) f^{n-1}.
//! ```

use crate::error::{Error, Result};
use crate::kernels::{build_doc_recursive, KernelTable};
use crate::mesh::Mesh;

/// A positive definite self-adjoint operator `A` on a finite-dimensional space.
pub trait SpatialProblem {
    fn dof_count(&self) -> usize;

    fn apply(&self, v: &[f64]) -> Vec<f64>;

    /// Solves `(sigma I + mu A) w = rhs` for `sigma > 0`, `mu >= 0`.
    fn solve_shifted(&self, sigma: f64, mu: f64, rhs: &[f64]) -> Result<Vec<f64>>;

    /// Discrete L2 inner product.
    fn inner(&self, v: &[f64], w: &[f64]) -> f64;

    fn norm(&self, v: &[f64]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// `||grad v||`, defined as `sqrt((v, A v))`.
    fn grad_norm(&self, v: &[f64]) -> f64 {
        self.inner(v, &self.apply(v)).max(0.0).sqrt()
    }
}

/// One degree of freedom with `A = lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProblem {
    pub lambda: f64,
}

impl ScalarProblem {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }
}

impl SpatialProblem for ScalarProblem {
    fn dof_count(&self) -> usize {
        1
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        vec![self.lambda * v[0]]
    }

    fn solve_shifted(&self, sigma: f64, mu: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        if sigma.is_nan() || sigma <= 0.0 || mu < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "shift ({sigma}, {mu}) out of range"
            )));
        }
        Ok(vec![rhs[0] / (sigma + mu * self.lambda)])
    }

    fn inner(&self, v: &[f64], w: &[f64]) -> f64 {
        v[0] * w[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    /// Keep every state `u^0..u^N`. When false only the last two are kept.
    pub keep_states: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { keep_states: true }
    }
}

#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub mesh: Mesh,
    pub theta: f64,
    /// `u^0..u^N`, or only the final two states in low-memory mode.
    pub states: Vec<Vec<f64>>,
    pub l2_norms: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// `E^0..E^{N-1}`, accumulated while stepping.
    pub energy: EnergyTrace,
}

impl SolutionTrace {
    pub fn has_all_states(&self) -> bool {
        self.states.len() == self.mesh.num_steps() + 1
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Writes `n,t_n,l2_norm,grad_norm,energy,error_vs_exact`. The energy
    /// column is empty at `n = N`; the error column is empty when `errors` is `None`.
    pub fn write_csv<W: std::io::Write>(
        &self,
        mut out: W,
        errors: Option<&[f64]>,
    ) -> std::io::Result<()> {
        writeln!(out, "n,t_n,l2_norm,grad_norm,energy,error_vs_exact")?;
        for n in 0..=self.mesh.num_steps() {
            let energy = self
                .energy
                .values
                .get(n)
                .map(f64::to_string)
                .unwrap_or_default();
            let error = errors
                .and_then(|e| e.get(n))
                .map(f64::to_string)
                .unwrap_or_default();
            writeln!(
                out,
                "{n},{},{},{},{energy},{error}",
                self.mesh.t(n),
                self.l2_norms[n],
                self.grad_norms[n]
            )?;
        }
        Ok(())
    }
}

/// Modified discrete energy
/// `E^k = (2 theta - 1) r_{k+1}^{3/2} / (1 + r_{k+1}) tau_k ||d_tau u^k||^2 + ||grad u^k||^2`
/// for `1 <= k <= N-1`, with `E^0 = ||grad u^0||^2`. `E^N` needs `r_{N+1}` and is left out.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub values: Vec<f64>,
}

fn energy_weight(mesh: &Mesh, theta: f64, k: usize) -> f64 {
    let r = mesh.ratio(k + 1);
    (2.0 * theta - 1.0) * r.powf(1.5) / (1.0 + r) * mesh.tau(k)
}

fn energy_at<P: SpatialProblem + ?Sized>(
    problem: &P,
    mesh: &Mesh,
    theta: f64,
    k: usize,
    current: &[f64],
    previous: &[f64],
    grad: f64,
) -> f64 {
    let tau = mesh.tau(k);
    let rate: Vec<f64> = current
        .iter()
        .zip(previous)
        .map(|(a, b)| (a - b) / tau)
        .collect();
    let rate_sq = problem.inner(&rate, &rate);
    energy_weight(mesh, theta, k) * rate_sq + grad * grad
}

fn axpy_into(out: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Integrates `u' + A u = f` over `mesh`. `forcing(t)` returns `f(t)` on the
/// problem's degrees of freedom and is sampled at every level `t_n`.
pub fn wsbdf2_solve<P, F>(
    problem: &P,
    mesh: &Mesh,
    theta: f64,
    u0: &[f64],
    forcing: F,
    options: SolveOptions,
) -> Result<SolutionTrace>
where
    P: SpatialProblem + ?Sized,
    F: Fn(f64) -> Vec<f64>,
{
    let dofs = problem.dof_count();
    if u0.len() != dofs {
        return Err(Error::InvalidArgument(format!(
            "initial data has {} values, expected {dofs}",
            u0.len()
        )));
    }
    if !(0.5..=1.0).contains(&theta) {
        log::warn!("theta = {theta} is outside [1/2, 1]; no stability guarantee applies");
    }
    let kernels = KernelTable::build(mesh, theta);
    let n_steps = mesh.num_steps();
    let sample = |t: f64| -> Result<Vec<f64>> {
        let f = forcing(t);
        if f.len() != dofs {
            return Err(Error::InvalidArgument(format!(
                "forcing has {} values, expected {dofs}",
                f.len()
            )));
        }
        Ok(f)
    };

    let mut l2_norms = Vec::with_capacity(n_steps + 1);
    let mut grad_norms = Vec::with_capacity(n_steps + 1);
    let mut energy = Vec::with_capacity(n_steps);
    let mut states: Vec<Vec<f64>> =
        Vec::with_capacity(if options.keep_states { n_steps + 1 } else { 2 });

    let g0 = problem.grad_norm(u0);
    l2_norms.push(problem.norm(u0));
    grad_norms.push(g0);
    energy.push(g0 * g0);

    let mut prev_prev: Vec<f64> = Vec::new();
    let mut prev = u0.to_vec();
    let mut f_prev = sample(mesh.t(0))?;
    states.push(prev.clone());

    for n in 1..=n_steps {
        let f_now = sample(mesh.t(n))?;
        let b0 = kernels.b0(n);
        let a_prev = problem.apply(&prev);
        let mut rhs: Vec<f64> = prev.iter().map(|v| b0 * v).collect();
        if n >= 2 {
            let b1 = kernels.b1(n);
            for ((r, p), pp) in rhs.iter_mut().zip(&prev).zip(&prev_prev) {
                *r -= b1 * (p - pp);
            }
        }
        axpy_into(&mut rhs, -(1.0 - theta), &a_prev);
        axpy_into(&mut rhs, theta, &f_now);
        axpy_into(&mut rhs, 1.0 - theta, &f_prev);

        let next = problem.solve_shifted(b0, theta, &rhs)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: n });
        }

        let g = problem.grad_norm(&next);
        l2_norms.push(problem.norm(&next));
        grad_norms.push(g);
        if n < n_steps {
            energy.push(energy_at(problem, mesh, theta, n, &next, &prev, g));
        }

        if options.keep_states {
            states.push(next.clone());
        } else if states.len() == 2 {
            states.remove(0);
            states.push(next.clone());
        } else {
            states.push(next.clone());
        }
        prev_prev = std::mem::replace(&mut prev, next);
        f_prev = f_now;
    }

    Ok(SolutionTrace {
        mesh: mesh.clone(),
        theta,
        states,
        l2_norms,
        grad_norms,
        energy: EnergyTrace { values: energy },
    })
}

/// Recomputes the energy from the stored states.
pub fn energy_trace<P: SpatialProblem + ?Sized>(
    trace: &SolutionTrace,
    problem: &P,
    theta: f64,
) -> Result<EnergyTrace> {
    if !trace.has_all_states() {
        return Err(Error::InvalidArgument(
            "energy needs every state; solve with keep_states".into(),
        ));
    }
    let mesh = &trace.mesh;
    let n_steps = mesh.num_steps();
    let g0 = problem.grad_norm(&trace.states[0]);
    let mut values = vec![g0 * g0];
    for k in 1..n_steps {
        let g = problem.grad_norm(&trace.states[k]);
        values.push(energy_at(
            problem,
            mesh,
            theta,
            k,
            &trace.states[k],
            &trace.states[k - 1],
            g,
        ));
    }
    Ok(EnergyTrace { values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationCheck {
    pub passed: bool,
    /// `max_k (E^k - E^{k-1}) / max(E^0, eps)`; nonpositive when the energy never grows.
    pub worst_violation: f64,
}

/// Checks `E^k <= E^{k-1}` up to `tol` relative to `E^0`.
pub fn check_dissipation(energy: &EnergyTrace, tol: f64) -> DissipationCheck {
    let scale = energy
        .values
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(f64::MIN_POSITIVE);
    let worst_violation = energy
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]) / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_violation = if worst_violation.is_finite() {
        worst_violation
    } else {
        0.0
    };
    DissipationCheck {
        passed: worst_violation <= tol,
        worst_violation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCheck {
    pub passed: bool,
    /// `min_n (||u^0|| + 2 t_n max_{1<=j<=n} ||f^j|| - ||u^n||)`.
    pub min_slack: f64,
    /// Same with the sharper DOC-weighted bound
    /// `||u^0|| + 2 sum_k sum_j d[k][j] ||theta f^j + (1-theta) f^{j-1}||`.
    pub min_doc_slack: f64,
}

/// Relative roundoff allowance in [`check_l2_stability`].
pub const L2_ROUNDOFF_TOL: f64 = 1e-12;

/// Evaluates the L2 stability bounds at every level. `forcing` holds `f^0..f^N`.
pub fn check_l2_stability<P: SpatialProblem + ?Sized>(
    trace: &SolutionTrace,
    problem: &P,
    forcing: &[Vec<f64>],
    theta: f64,
) -> Result<StabilityCheck> {
    let mesh = &trace.mesh;
    let n_steps = mesh.num_steps();
    if forcing.len() != n_steps + 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} forcing samples",
            n_steps + 1
        )));
    }
    let doc = build_doc_recursive(&KernelTable::build(mesh, theta))?;
    let combined: Vec<f64> = (1..=n_steps)
        .map(|j| {
            let mix: Vec<f64> = forcing[j]
                .iter()
                .zip(&forcing[j - 1])
                .map(|(a, b)| theta * a + (1.0 - theta) * b)
                .collect();
            problem.norm(&mix)
        })
        .collect();

    let u0 = trace.l2_norms[0];
    let mut max_f = 0.0_f64;
    let mut doc_sum = 0.0;
    let mut min_slack = f64::INFINITY;
    let mut min_doc_slack = f64::INFINITY;
    for (n, f) in forcing.iter().enumerate().skip(1) {
        max_f = max_f.max(problem.norm(f));
        doc_sum += doc
            .row(n)
            .iter()
            .zip(&combined)
            .map(|(d, c)| d * c)
            .sum::<f64>();
        let un = trace.l2_norms[n];
        min_slack = min_slack.min(u0 + 2.0 * mesh.t(n) * max_f - un);
        min_doc_slack = min_doc_slack.min(u0 + 2.0 * doc_sum - un);
    }
    // Allow roundoff relative to the largest bound value.
    let scale = u0 + 2.0 * mesh.final_time() * max_f;
    let floor = -L2_ROUNDOFF_TOL * scale.max(f64::MIN_POSITIVE);
    Ok(StabilityCheck {
        passed: min_slack >= floor && min_doc_slack >= floor,
        min_slack,
        min_doc_slack,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// `||eta^j||` for `j = 1..N`.
    pub per_step: Vec<f64>,
    /// `sum_{k=1}^{N} sum_{j=1}^{k} d[k][j] ||eta^j||`.
    pub doc_weighted: f64,
}

/// Truncation error `eta^j = D2 u(t_j) - theta u'(t_j) - (1-theta) u'(t_{j-1})`
/// of an exact solution.
pub fn consistency_error<U, DU, NORM>(
    mesh: &Mesh,
    theta: f64,
    exact: U,
    derivative: DU,
    norm: NORM,
) -> Result<ConsistencyReport>
where
    U: Fn(f64) -> Vec<f64>,
    DU: Fn(f64) -> Vec<f64>,
    NORM: Fn(&[f64]) -> f64,
{
    let kernels = KernelTable::build(mesh, theta);
    let doc = build_doc_recursive(&kernels)?;
    let values: Vec<Vec<f64>> = mesh.levels().iter().map(|t| exact(*t)).collect();
    let rates: Vec<Vec<f64>> = mesh.levels().iter().map(|t| derivative(*t)).collect();
    let per_step: Vec<f64> = (1..=mesh.num_steps())
        .map(|j| {
            let eta: Vec<f64> = (0..values[j].len())
                .map(|i| {
                    let mut d2 = kernels.b0(j) * (values[j][i] - values[j - 1][i]);
                    if j >= 2 {
                        d2 += kernels.b1(j) * (values[j - 1][i] - values[j - 2][i]);
                    }
                    d2 - theta * rates[j][i] - (1.0 - theta) * rates[j - 1][i]
                })
                .collect();
            norm(&eta)
        })
        .collect();
    let doc_weighted = (1..=mesh.num_steps())
        .map(|k| {
            doc.row(k)
                .iter()
                .zip(&per_step)
                .map(|(d, e)| d * e)
                .sum::<f64>()
        })
        .sum();
    Ok(ConsistencyReport {
        per_step,
        doc_weighted,
    })
}
