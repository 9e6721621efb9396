//! Brute-force certification of control solutions.
//!
//! The oracle assembles the terminal constraint `Σ_n C_n u_n = δ` without
//! touching the weight recurrences in [`control`](crate::control): scalar
//! step coefficients come from simulating the recursion with a unit kick, and
//! VAR step matrices from multiplying by `A` directly. It then solves the
//! stationarity system `u_n = C_nᵀ λ`, `(Σ C_n C_nᵀ) λ = δ` with the SVD-based
//! least-squares solver, which gives the global minimizer of `Σ ‖u_n‖²` by
//! convexity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::control::{impute_gap_ar, impute_gap_var, CoeffMode, ControlSolution};
use crate::error::{Error, Result};
use crate::fit::{ArModel, VarModel};
use crate::linalg::{least_squares, mat_vec, Matrix, Vector};
use crate::series::{detect_gaps, GapSegment, Series};

/// Reachability residual above `FEASIBILITY_TOL * (1 + ‖δ‖)` means infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Certification bar for objective and constraint agreement.
pub const CERTIFY_TOL: f64 = 1e-9;

/// `min Σ ‖u_n‖²` subject to `Σ_n C_n u_n = δ`, steps in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedProblem {
    pub steps: Vec<Matrix>,
    pub target: Vector,
}

impl ConstrainedProblem {
    pub fn new(steps: Vec<Matrix>, target: Vector) -> Result<Self> {
        let k = target.len();
        if steps.is_empty() {
            return Err(Error::InvalidInput("constrained problem needs at least one step".into()));
        }
        if steps.iter().any(|c| c.rows() != k) {
            return Err(Error::DimensionMismatch("step matrix rows vs target length".into()));
        }
        if !target.is_finite() {
            return Err(Error::NonFinite("target".into()));
        }
        Ok(ConstrainedProblem { steps, target })
    }

    /// Scalar problem with one coefficient per step.
    pub fn scalar(coeffs: &[f64], target: f64) -> Result<Self> {
        let steps = coeffs.iter().map(|&c| Matrix::new(1, 1, vec![c])).collect::<Result<Vec<_>>>()?;
        ConstrainedProblem::new(steps, Vector::scalar(target))
    }

    /// Constraint for an AR(p) gap of `gap_len` values, built by simulating the
    /// homogeneous recursion with a unit kick at each step.
    pub fn from_ar(model: &ArModel, gap_len: usize, delta: f64) -> Result<Self> {
        let m = gap_len + 1;
        let p = model.order();
        let coeffs: Vec<f64> = (0..m)
            .map(|kick_at| {
                let mut x = vec![0.0; p];
                for n in 0..m {
                    let next: f64 = (0..p).map(|i| model.coeffs[i] * x[x.len() - 1 - i]).sum::<f64>()
                        + if n == kick_at { 1.0 } else { 0.0 };
                    x.push(next);
                }
                *x.last().expect("nonempty")
            })
            .collect();
        ConstrainedProblem::scalar(&coeffs, delta)
    }

    /// Constraint for a VAR(1) gap: step `n` carries `A^{N−n}`, accumulated by
    /// repeated multiplication.
    pub fn from_var(model: &VarModel, gap_len: usize, delta: Vector) -> Result<Self> {
        let m = gap_len + 1;
        let a = &model.transition;
        let mut steps = vec![Matrix::identity(a.rows())];
        for _ in 1..m {
            let next = steps.last().expect("nonempty").matmul(a)?;
            steps.push(next);
        }
        steps.reverse();
        ConstrainedProblem::new(steps, delta)
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// `Σ_n C_n u_n`.
    pub fn apply(&self, controls: &[Vector]) -> Result<Vector> {
        if controls.len() != self.steps.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} controls for {} steps",
                controls.len(),
                self.steps.len()
            )));
        }
        let mut acc = Vector::zeros(self.dim());
        for (c, u) in self.steps.iter().zip(controls) {
            acc = acc.add(&mat_vec(c, u)?);
        }
        Ok(acc)
    }

    fn gram(&self) -> Result<Matrix> {
        let k = self.dim();
        let mut g = Matrix::zeros(k, k);
        for c in &self.steps {
            g = g.add(&c.matmul(&c.transpose())?)?;
        }
        Ok(g)
    }

    /// Remove from `d` the component that would move the terminal value, so
    /// that `solution + d` stays feasible.
    pub fn project_feasible(&self, d: &[Vector]) -> Result<Vec<Vector>> {
        let r = self.apply(d)?;
        let mu = least_squares(&self.gram()?, &r)?.coeffs;
        self.steps.iter().zip(d).map(|(c, di)| Ok(di.sub(&mat_vec(&c.transpose(), &mu)?))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub lambda: Vector,
    pub controls: Vec<Vector>,
    pub objective: f64,
    pub constraint_residual: f64,
}

pub fn kkt_solve(prob: &ConstrainedProblem) -> Result<OracleResult> {
    let g = prob.gram()?;
    let lambda = least_squares(&g, &prob.target)?.coeffs;
    let reach = mat_vec(&g, &lambda)?.sub(&prob.target).norm();
    let scale = 1.0 + prob.target.norm();
    if reach > FEASIBILITY_TOL * scale {
        return Err(Error::Unreachable(format!("target is outside the reachable subspace (residual {reach:e})")));
    }
    let controls = prob.steps.iter().map(|c| mat_vec(&c.transpose(), &lambda)).collect::<Result<Vec<_>>>()?;
    let objective = controls.iter().map(Vector::norm_sq).sum();
    let constraint_residual = prob.apply(&controls)?.sub(&prob.target).norm();
    Ok(OracleResult { lambda, controls, objective, constraint_residual })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub objective: f64,
    pub oracle_objective: f64,
    /// `|objective − oracle| / oracle` (absolute when the oracle optimum is zero).
    pub objective_error: f64,
    /// `‖Σ C_n u_n − δ‖ / (1 + ‖δ‖)`.
    pub constraint_residual: f64,
    pub pass: bool,
}

/// Compare a solution's controls against the oracle optimum for `prob`.
pub fn certify(sol: &ControlSolution, prob: &ConstrainedProblem) -> Result<Verdict> {
    certify_controls(&sol.controls, prob)
}

pub fn certify_controls(controls: &[Vector], prob: &ConstrainedProblem) -> Result<Verdict> {
    let oracle = kkt_solve(prob)?;
    let objective: f64 = controls.iter().map(Vector::norm_sq).sum();
    let diff = (objective - oracle.objective).abs();
    let objective_error = if oracle.objective > 0.0 { diff / oracle.objective } else { diff };
    let constraint_residual = prob.apply(controls)?.sub(&prob.target).norm() / (1.0 + prob.target.norm());
    let pass = objective_error <= CERTIFY_TOL && constraint_residual <= CERTIFY_TOL;
    Ok(Verdict { objective, oracle_objective: oracle.objective, objective_error, constraint_residual, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Scalar,
    Var,
}

/// Bounds for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceLimits {
    pub kind: InstanceKind,
    /// Largest AR order (scalar instances).
    pub max_order: usize,
    /// Inclusive range of VAR dimensions.
    pub min_dim: usize,
    pub max_dim: usize,
    pub max_gap: usize,
    /// Bound on `|a_j|` for AR, on absolute row sums of `A` for VAR.
    pub max_coeff: f64,
    pub max_prefix: usize,
}

impl InstanceLimits {
    pub fn scalar() -> Self {
        InstanceLimits {
            kind: InstanceKind::Scalar,
            max_order: 3,
            min_dim: 1,
            max_dim: 1,
            max_gap: 12,
            max_coeff: 1.2,
            max_prefix: 40,
        }
    }

    pub fn var() -> Self {
        InstanceLimits {
            kind: InstanceKind::Var,
            max_order: 1,
            min_dim: 2,
            max_dim: 3,
            max_gap: 10,
            max_coeff: 1.2,
            max_prefix: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum InstanceModel {
    Ar(ArModel),
    Var(VarModel),
}

impl InstanceModel {
    pub fn order(&self) -> usize {
        match self {
            InstanceModel::Ar(m) => m.order(),
            InstanceModel::Var(_) => 1,
        }
    }
}

/// A series with exactly one closed gap and the model that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub series: Series,
    pub model: InstanceModel,
    pub prefix_len: usize,
    pub gap_len: usize,
}

/// Deterministic random instance.
///
/// ChaCha8 seeded with `seed` via `seed_from_u64`, draws in this order:
/// order `p` (or dimension `k`), coefficients, intercept, prefix length `n0`,
/// gap length, `p` initial values, then one innovation per simulated step.
/// The whole path through the anchor is simulated with uniform innovations
/// in `[-1, 1]`; the gap values are then blanked.
pub fn random_instance(seed: u64, limits: &InstanceLimits) -> Result<Instance> {
    if limits.max_order == 0 || limits.max_gap == 0 || limits.min_dim == 0 || limits.max_dim < limits.min_dim {
        return Err(Error::InvalidInput("instance limits must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match limits.kind {
        InstanceKind::Scalar => {
            let p = rng.random_range(1..=limits.max_order);
            let a: Vec<f64> = (0..p).map(|_| rng.random_range(-limits.max_coeff..=limits.max_coeff)).collect();
            let b = rng.random_range(-5.0..=5.0);
            let n0 = rng.random_range((2 * p + 1)..=limits.max_prefix.max(2 * p + 1));
            let gap_len = rng.random_range(1..=limits.max_gap);
            let model = ArModel::new(a, b)?;
            let mut x: Vec<f64> = (0..p).map(|_| rng.random_range(-10.0..=10.0)).collect();
            while x.len() < n0 + gap_len + 1 {
                let e = rng.random_range(-1.0..=1.0);
                let next = model.step(&x) + e;
                x.push(next);
            }
            let values: Vec<Option<f64>> =
                x.iter().enumerate().map(|(i, &v)| (i < n0 || i >= n0 + gap_len).then_some(v)).collect();
            Ok(Instance {
                seed,
                series: Series::scalar(&values)?,
                model: InstanceModel::Ar(model),
                prefix_len: n0,
                gap_len,
            })
        }
        InstanceKind::Var => {
            let k = rng.random_range(limits.min_dim..=limits.max_dim);
            let bound = limits.max_coeff / k as f64;
            let entries: Vec<f64> = (0..k * k).map(|_| rng.random_range(-bound..=bound)).collect();
            let b: Vector = (0..k).map(|_| rng.random_range(-5.0..=5.0)).collect();
            let n0 = rng.random_range((k + 2)..=limits.max_prefix.max(k + 2));
            let gap_len = rng.random_range(1..=limits.max_gap);
            let model = VarModel::new(Matrix::new(k, k, entries)?, b)?;
            let mut cur: Vector = (0..k).map(|_| rng.random_range(-10.0..=10.0)).collect();
            let mut path = vec![cur.clone()];
            while path.len() < n0 + gap_len + 1 {
                let e: Vector = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
                cur = model.step(&cur)?.add(&e);
                path.push(cur.clone());
            }
            let values =
                path.into_iter().enumerate().map(|(i, v)| (i < n0 || i >= n0 + gap_len).then_some(v)).collect();
            Ok(Instance {
                seed,
                series: Series::new(k, values)?,
                model: InstanceModel::Var(model),
                prefix_len: n0,
                gap_len,
            })
        }
    }
}

impl Instance {
    pub fn gap(&self) -> Result<GapSegment> {
        let layout = detect_gaps(&self.series, self.model.order(), false)?;
        layout.segments.into_iter().next().ok_or_else(|| Error::InvalidInput("instance has no gap".into()))
    }

    /// Solve the instance's gap with its generating model.
    pub fn solve(&self, mode: CoeffMode) -> Result<(ControlSolution, ConstrainedProblem)> {
        let gap = self.gap()?;
        let anchor = gap.anchor.as_ref().expect("instances are closed").value.clone();
        match &self.model {
            InstanceModel::Ar(model) => {
                let seeds: Vec<f64> =
                    gap.seed_indices.iter().map(|&i| self.series.get(i).expect("observed seed")[0]).collect();
                let sol = impute_gap_ar(model, &seeds, gap.len(), anchor[0], mode)?;
                let xhat = *model.predict(&seeds, gap.len() + 1)?.last().expect("nonempty");
                let prob = ConstrainedProblem::from_ar(model, gap.len(), anchor[0] - xhat)?;
                Ok((sol, prob))
            }
            InstanceModel::Var(model) => {
                let seed = self.series.get(gap.seed_indices[0]).expect("observed seed").clone();
                let sol = impute_gap_var(model, &seed, gap.len(), &anchor, mode)?;
                let xhat = model.predict(&seed, gap.len() + 1)?.pop().expect("nonempty");
                let prob = ConstrainedProblem::from_var(model, gap.len(), anchor.sub(&xhat))?;
                Ok((sol, prob))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRecord {
    pub seed: u64,
    pub kind: InstanceKind,
    pub order: usize,
    pub dim: usize,
    pub prefix_len: usize,
    pub gap_len: usize,
    pub objective_error: f64,
    pub constraint_residual: f64,
    /// Terminal residual over `1 + ‖anchor‖`.
    pub terminal_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub cases: usize,
    pub passed: usize,
    pub worst_objective_error: f64,
    pub worst_constraint_residual: f64,
    pub worst_terminal_residual: f64,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.passed == self.cases
    }
}

/// Certify the exact-mode solution of one seeded instance.
///
/// `inject_fault` nudges one control by 0.1 before certification so the
/// harness can prove it detects a wrong answer.
pub fn verify_instance(seed: u64, limits: &InstanceLimits, inject_fault: bool) -> Result<VerifyRecord> {
    let inst = random_instance(seed, limits)?;
    let (mut sol, prob) = inst.solve(CoeffMode::Exact)?;
    if inject_fault {
        let u = &mut sol.controls[0];
        u[0] += 0.1;
    }
    let verdict = certify(&sol, &prob)?;
    let anchor_norm = inst.series.get(inst.prefix_len + inst.gap_len + 1).expect("anchor").norm();
    let terminal_residual = sol.terminal_residual / (1.0 + anchor_norm);
    Ok(VerifyRecord {
        seed,
        kind: limits.kind,
        order: inst.model.order(),
        dim: inst.series.dim(),
        prefix_len: inst.prefix_len,
        gap_len: inst.gap_len,
        objective_error: verdict.objective_error,
        constraint_residual: verdict.constraint_residual,
        terminal_residual,
        pass: verdict.pass && terminal_residual <= CERTIFY_TOL,
    })
}

pub fn summarize(records: &[VerifyRecord]) -> VerifySummary {
    let worst = |f: fn(&VerifyRecord) -> f64| records.iter().map(f).fold(0.0_f64, f64::max);
    VerifySummary {
        cases: records.len(),
        passed: records.iter().filter(|r| r.pass).count(),
        worst_objective_error: worst(|r| r.objective_error),
        worst_constraint_residual: worst(|r| r.constraint_residual),
        worst_terminal_residual: worst(|r| r.terminal_residual),
    }
}
