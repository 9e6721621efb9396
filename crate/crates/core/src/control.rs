//! Minimum-energy control correction of a fitted recursion.
//!
//! For a gap between seed values and a known anchor, the fitted recursion is
//! rolled forward with an additive control `u_n` at every step from the first
//! missing index through the anchor. The controls minimize `Σ ‖u_n‖²` subject
//! to the corrected path landing exactly on the anchor.
//!
//! The terminal deviation is linear in the controls,
//! `x̃_N − x̂_N = Σ_j W_j u_{N−j}`, where `W_j` is the impulse response of the
//! recursion `j` steps back (`a^j` for AR(1), `ψ_j` for AR(p), `A^j` for
//! VAR(1)). The minimizer is therefore `u_{N−j} = W_jᵀ λ` with `λ` solving
//! `(Σ_j W_j W_jᵀ) λ = δ`; in the scalar case that is `c* = δ / Σ_j w_j²`.
//!
//! [`CoeffMode::Paper`] swaps the impulse response for the γ recurrence as it
//! is usually printed for AR(p), p ≥ 2. That recurrence carries extra `+1`
//! terms, so its solutions generally miss the anchor; the residual is
//! reported rather than hidden.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{ArModel, RegModel, VarModel};
use crate::linalg::{mat_pow_table, mat_vec, solve_spd, Matrix, Vector};

/// Any weight (or matrix power entry) beyond this magnitude aborts the solve.
pub const WEIGHT_LIMIT: f64 = 1e150;

/// Relative tolerance used when checking that a singular Gram system is still consistent.
pub const REACHABILITY_TOL: f64 = 1e-8;

/// Note attached to paper-mode AR(p) solutions about the normalizing sum.
pub const PAPER_SUM_NOTE: &str =
    "normalizing sum runs over the control index set, gap start through anchor (lower limit n0+p)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffMode {
    #[default]
    Exact,
    Paper,
}

impl fmt::Display for CoeffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoeffMode::Exact => "exact",
            CoeffMode::Paper => "paper",
        })
    }
}

impl FromStr for CoeffMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(CoeffMode::Exact),
            "paper" => Ok(CoeffMode::Paper),
            other => Err(Error::InvalidInput(format!("unknown mode '{other}' (exact|paper)"))),
        }
    }
}

/// Weights `w_0, w_1, ...`; `w_j` multiplies the control applied `j` steps before the anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightSequence(Vec<f64>);

impl WeightSequence {
    pub fn new(weights: Vec<f64>) -> Self {
        WeightSequence(weights)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum_sq(&self) -> f64 {
        self.0.iter().map(|w| w * w).sum()
    }
}

fn guard(weights: &[f64]) -> Result<()> {
    match weights.iter().position(|w| !w.is_finite() || w.abs() > WEIGHT_LIMIT) {
        Some(lag) => Err(Error::WeightOverflow { lag, limit: WEIGHT_LIMIT }),
        None => Ok(()),
    }
}

fn require_length(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidInput("weight sequence length must be at least 1".into()));
    }
    Ok(())
}

/// Impulse response `ψ_0 = 1`, `ψ_j = Σ_{i=1}^{min(j,p)} a_i ψ_{j−i}`.
pub fn impulse_weights_exact(model: &ArModel, m: usize) -> Result<WeightSequence> {
    require_length(m)?;
    let a = &model.coeffs;
    let mut psi = Vec::with_capacity(m);
    psi.push(1.0);
    for j in 1..m {
        let v: f64 = (1..=j.min(a.len())).map(|i| a[i - 1] * psi[j - i]).sum();
        psi.push(v);
        if !v.is_finite() || v.abs() > WEIGHT_LIMIT {
            return Err(Error::WeightOverflow { lag: j, limit: WEIGHT_LIMIT });
        }
    }
    Ok(WeightSequence(psi))
}

/// The γ recurrence for AR(p), evaluated term by term.
///
/// `γ_n = Σ_k α_{n,k}` with `α_{0,1} = 1`, `α_{k−1,k} = 1`, entries above the
/// diagonal zero, `α_{n,k} = a_k γ_{n−k}` for `n ≥ k`, and an extra `+1` on the
/// last column (`α_{n,p} = a_p γ_{n−p} + 1`). For p = 1 this is
/// `γ_n = a γ_{n−1} + 1`, which is not the AR(1) weight `a^n`;
/// [`gamma_weights_paper`] uses `a^n` for p = 1 and this function is kept for
/// the comparison.
pub fn gamma_recurrence(model: &ArModel, m: usize) -> Result<WeightSequence> {
    require_length(m)?;
    let a = &model.coeffs;
    let p = a.len();
    let mut gamma: Vec<f64> = Vec::with_capacity(m);
    for n in 0..m {
        let mut g = 0.0;
        for k in 1..=p {
            let alpha = if n + 1 < k {
                0.0
            } else if n + 1 == k {
                1.0
            } else {
                let v = a[k - 1] * gamma[n - k];
                if k == p {
                    v + 1.0
                } else {
                    v
                }
            };
            g += alpha;
        }
        gamma.push(g);
    }
    guard(&gamma)?;
    Ok(WeightSequence(gamma))
}

/// Paper-mode weights: `a^n` for AR(1), the γ recurrence for p ≥ 2.
pub fn gamma_weights_paper(model: &ArModel, m: usize) -> Result<WeightSequence> {
    require_length(m)?;
    if model.order() == 1 {
        let a = model.coeffs[0];
        let w: Vec<f64> = std::iter::successors(Some(1.0), |w| Some(w * a)).take(m).collect();
        guard(&w)?;
        return Ok(WeightSequence(w));
    }
    gamma_recurrence(model, m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarControls {
    pub c_star: f64,
    /// Chronological order: `controls[i]` is applied `len − 1 − i` steps before the anchor.
    pub controls: Vec<f64>,
}

/// `c* = δ / Σ w_j²`, control `j` steps before the anchor `c*·w_j`.
pub fn solve_controls_scalar(weights: &WeightSequence, delta: f64) -> Result<ScalarControls> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("empty weight sequence".into()));
    }
    let denom = weights.sum_sq();
    if denom == 0.0 {
        return Err(Error::Unreachable("all control weights are zero".into()));
    }
    if !denom.is_finite() {
        return Err(Error::WeightOverflow { lag: weights.len() - 1, limit: WEIGHT_LIMIT });
    }
    let c_star = delta / denom;
    let controls = weights.as_slice().iter().rev().map(|w| c_star * w).collect();
    Ok(ScalarControls { c_star, controls })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarControls {
    pub lambda: Vector,
    /// Chronological, as in [`ScalarControls::controls`].
    pub controls: Vec<Vector>,
    /// The Gram matrix was singular and `lambda` is its minimum-norm solution.
    pub rank_deficient: bool,
}

/// Gram matrix `Σ_j A^j (A^j)ᵀ` over the given powers.
pub fn gram(powers: &[Matrix]) -> Result<Matrix> {
    let first = powers.first().ok_or_else(|| Error::InvalidInput("no matrix powers".into()))?;
    let mut g = Matrix::zeros(first.rows(), first.rows());
    for p in powers {
        g = g.add(&p.matmul(&p.transpose())?)?;
    }
    Ok(g)
}

/// Lagrange solve of `min Σ‖u‖²` s.t. `Σ_j A^j u_{N−j} = δ`.
///
/// `powers[j] = A^j` for `j = 0..m`.
pub fn solve_controls_var(powers: &[Matrix], delta: &Vector) -> Result<VarControls> {
    for (lag, p) in powers.iter().enumerate() {
        if p.max_abs() > WEIGHT_LIMIT {
            return Err(Error::WeightOverflow { lag, limit: WEIGHT_LIMIT });
        }
    }
    let g = gram(powers)?;
    if g.rows() != delta.len() {
        return Err(Error::DimensionMismatch("delta length vs matrix size".into()));
    }
    let sol = solve_spd(&g, delta)?;
    if sol.rank_deficient {
        let back = mat_vec(&g, &sol.x)?;
        let miss = back.sub(delta).norm();
        if miss > REACHABILITY_TOL * (1.0 + delta.norm()) {
            return Err(Error::Unreachable(format!(
                "terminal offset lies outside the reachable subspace (miss {miss:e})"
            )));
        }
    }
    let controls = powers.iter().rev().map(|p| mat_vec(&p.transpose(), &sol.x)).collect::<Result<Vec<_>>>()?;
    Ok(VarControls { lambda: sol.x, controls, rank_deficient: sol.rank_deficient })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Multiplier {
    Scalar(f64),
    Vector(Vector),
}

/// Paper-formula side results recorded next to a solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PaperDiagnostics {
    /// Scalar AR: the weights actually used versus the impulse response.
    Weights {
        gamma: Vec<f64>,
        psi: Vec<f64>,
        max_abs_diff: f64,
        /// For p = 1: the raw γ recurrence (with its `+1` term) against `a^n`.
        #[serde(skip_serializing_if = "Option::is_none")]
        raw_recurrence_max_abs_diff: Option<f64>,
        note: &'static str,
    },
    /// VAR(1): per-step control norms from the closed-form norm formula
    /// alongside the norms of the exact solution that was imputed.
    VarNorms { c_star: f64, paper_norms: Vec<f64>, exact_norms: Vec<f64>, max_abs_diff: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSolution {
    pub mode: CoeffMode,
    /// Controls for every step from the first missing index through the anchor.
    pub controls: Vec<Vector>,
    pub multiplier: Multiplier,
    /// Corrected values at the missing indices only.
    pub imputed: Vec<Vector>,
    /// Uncorrected predictions for the missing indices and the anchor index.
    pub uncorrected: Vec<Vector>,
    /// Euclidean distance between the corrected path at the anchor index and the anchor.
    pub terminal_residual: f64,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paper: Option<PaperDiagnostics>,
    /// The Gram system was singular (VAR path only).
    pub rank_deficient: bool,
}

impl ControlSolution {
    /// Control applied at the anchor index.
    pub fn terminal_control(&self) -> &Vector {
        self.controls.last().expect("at least one control")
    }
}

fn objective(controls: &[Vector]) -> f64 {
    controls.iter().map(Vector::norm_sq).sum()
}

/// Fill a scalar AR(p) gap of `gap_len` values between `seeds` and `anchor`.
///
/// `seeds` are the `p` values immediately before the gap, oldest first.
pub fn impute_gap_ar(
    model: &ArModel,
    seeds: &[f64],
    gap_len: usize,
    anchor: f64,
    mode: CoeffMode,
) -> Result<ControlSolution> {
    let p = model.order();
    if seeds.len() != p {
        return Err(Error::InvalidInput(format!("AR({p}) needs {p} seeds, got {}", seeds.len())));
    }
    if gap_len == 0 {
        return Err(Error::InvalidInput("gap length must be at least 1".into()));
    }
    let m = gap_len + 1;
    let uncorrected = model.predict(seeds, m)?;
    let delta = anchor - uncorrected[m - 1];

    let psi = impulse_weights_exact(model, m)?;
    let (weights, paper) = match mode {
        CoeffMode::Exact => (psi, None),
        CoeffMode::Paper => {
            let gamma = gamma_weights_paper(model, m)?;
            let max_abs_diff = max_abs_diff(gamma.as_slice(), psi.as_slice());
            let raw_recurrence_max_abs_diff = if p == 1 {
                let raw = gamma_recurrence(model, m)?;
                Some(max_abs_diff_of(&raw, &gamma))
            } else {
                None
            };
            let diag = PaperDiagnostics::Weights {
                gamma: gamma.as_slice().to_vec(),
                psi: psi.as_slice().to_vec(),
                max_abs_diff,
                raw_recurrence_max_abs_diff,
                note: PAPER_SUM_NOTE,
            };
            (gamma, Some(diag))
        }
    };
    let sc = solve_controls_scalar(&weights, delta)?;

    let mut hist = seeds.to_vec();
    let mut path = Vec::with_capacity(m);
    for u in &sc.controls {
        let next = model.step(&hist) + u;
        hist.remove(0);
        hist.push(next);
        path.push(next);
    }
    let terminal_residual = (path[m - 1] - anchor).abs();
    let controls: Vec<Vector> = sc.controls.iter().map(|&u| Vector::scalar(u)).collect();
    Ok(ControlSolution {
        mode,
        objective: objective(&controls),
        controls,
        multiplier: Multiplier::Scalar(sc.c_star),
        imputed: path[..gap_len].iter().map(|&v| Vector::scalar(v)).collect(),
        uncorrected: uncorrected.into_iter().map(Vector::scalar).collect(),
        terminal_residual,
        paper,
        rank_deficient: false,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn max_abs_diff_of(a: &WeightSequence, b: &WeightSequence) -> f64 {
    max_abs_diff(a.as_slice(), b.as_slice())
}

/// Closed-form per-step norms `‖u_n‖ = c*·Σ_{i,j} a^{(N−n)}_{ij}` with
/// `c* = ‖δ‖ / Σ_l Σ_j (Σ_i a^{(l)}_{ij})²`, chronological order.
pub fn paper_var_norms(powers: &[Matrix], delta: &Vector) -> (f64, Vec<f64>) {
    let col_sums = |p: &Matrix| -> Vec<f64> { (0..p.cols()).map(|j| p.column(j).iter().sum()).collect() };
    let denom: f64 = powers.iter().map(|p| col_sums(p).iter().map(|s| s * s).sum::<f64>()).sum();
    let c_star = delta.norm() / denom;
    let norms = powers.iter().rev().map(|p| c_star * col_sums(p).iter().sum::<f64>()).collect();
    (c_star, norms)
}

/// Fill a VAR(1) gap. Both modes impute with the exact Gram solve; paper mode
/// adds the closed-form norm diagnostics.
pub fn impute_gap_var(
    model: &VarModel,
    seed: &Vector,
    gap_len: usize,
    anchor: &Vector,
    mode: CoeffMode,
) -> Result<ControlSolution> {
    let k = model.dim();
    if seed.len() != k || anchor.len() != k {
        return Err(Error::DimensionMismatch(format!("VAR dimension {k}")));
    }
    if gap_len == 0 {
        return Err(Error::InvalidInput("gap length must be at least 1".into()));
    }
    let m = gap_len + 1;
    let uncorrected = model.predict(seed, m)?;
    let delta = anchor.sub(&uncorrected[m - 1]);
    let powers = mat_pow_table(&model.transition, m - 1).map_err(|e| match e {
        Error::NonFinite(_) => Error::WeightOverflow { lag: m - 1, limit: WEIGHT_LIMIT },
        other => other,
    })?;
    let vc = solve_controls_var(&powers, &delta)?;

    let mut cur = seed.clone();
    let mut path = Vec::with_capacity(m);
    for u in &vc.controls {
        cur = model.step(&cur)?.add(u);
        path.push(cur.clone());
    }
    let terminal_residual = path[m - 1].sub(anchor).norm();
    let paper = (mode == CoeffMode::Paper).then(|| {
        let (c_star, paper_norms) = paper_var_norms(&powers, &delta);
        let exact_norms: Vec<f64> = vc.controls.iter().map(Vector::norm).collect();
        PaperDiagnostics::VarNorms {
            c_star,
            max_abs_diff: max_abs_diff(&paper_norms, &exact_norms),
            paper_norms,
            exact_norms,
        }
    });
    path.truncate(gap_len);
    Ok(ControlSolution {
        mode,
        objective: objective(&vc.controls),
        controls: vc.controls,
        multiplier: Multiplier::Vector(vc.lambda),
        imputed: path,
        uncorrected,
        terminal_residual,
        paper,
        rank_deficient: vc.rank_deficient,
    })
}

/// Fill missing responses of a regression.
///
/// `covariates` holds the rows for the seed index, every missing index, and
/// the anchor index (`gap_len + 2` rows). The corrected path starts from the
/// fitted value at the seed index and adds the uniform correction
/// `(ȳ_N − ŷ_N)/(N − n_0)` at every step.
pub fn impute_gap_regression(model: &RegModel, covariates: &[Vector], anchor: &Vector) -> Result<ControlSolution> {
    if covariates.len() < 3 {
        return Err(Error::InvalidInput(
            "regression gap needs covariates for the seed, at least one missing index, and the anchor".into(),
        ));
    }
    if anchor.len() != model.response_dim() {
        return Err(Error::DimensionMismatch("anchor width vs response dimension".into()));
    }
    let m = covariates.len() - 1;
    let fitted = model.predict(covariates)?;
    let delta = anchor.sub(&fitted[m]);
    let step = delta.scale(1.0 / m as f64);

    let mut cur = fitted[0].clone();
    let mut path = Vec::with_capacity(m);
    for n in 1..=m {
        let drift = mat_vec(&model.coeffs, &covariates[n].sub(&covariates[n - 1]))?;
        cur = cur.add(&drift).add(&step);
        path.push(cur.clone());
    }
    let terminal_residual = path[m - 1].sub(anchor).norm();
    let controls = vec![step.clone(); m];
    let multiplier = if step.len() == 1 { Multiplier::Scalar(step[0]) } else { Multiplier::Vector(step) };
    path.truncate(m - 1);
    Ok(ControlSolution {
        mode: CoeffMode::Exact,
        objective: objective(&controls),
        controls,
        multiplier,
        imputed: path,
        uncorrected: fitted[1..].to_vec(),
        terminal_residual,
        paper: None,
        rank_deficient: false,
    })
}

/// Open-gap fallback: plain predictions with zero controls.
pub fn extrapolate_ar(model: &ArModel, seeds: &[f64], gap_len: usize) -> Result<ControlSolution> {
    let pred = model.predict(seeds, gap_len)?;
    let imputed: Vec<Vector> = pred.into_iter().map(Vector::scalar).collect();
    Ok(unconstrained(imputed, 1))
}

pub fn extrapolate_var(model: &VarModel, seed: &Vector, gap_len: usize) -> Result<ControlSolution> {
    let imputed = model.predict(seed, gap_len)?;
    Ok(unconstrained(imputed, model.dim()))
}

pub fn extrapolate_regression(model: &RegModel, covariates: &[Vector]) -> Result<ControlSolution> {
    let imputed = model.predict(covariates)?;
    Ok(unconstrained(imputed, model.response_dim()))
}

fn unconstrained(imputed: Vec<Vector>, dim: usize) -> ControlSolution {
    ControlSolution {
        mode: CoeffMode::Exact,
        controls: vec![Vector::zeros(dim); imputed.len()],
        multiplier: if dim == 1 { Multiplier::Scalar(0.0) } else { Multiplier::Vector(Vector::zeros(dim)) },
        uncorrected: imputed.clone(),
        imputed,
        terminal_residual: 0.0,
        objective: 0.0,
        paper: None,
        rank_deficient: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ar(a: &[f64], b: f64) -> ArModel {
        ArModel::new(a.to_vec(), b).unwrap()
    }

    /// Push a unit control `j` steps before the end through the homogeneous recursion.
    fn unit_kick(a: &[f64], m: usize, j: usize) -> f64 {
        let p = a.len();
        let mut x = vec![0.0; p + m];
        for n in 0..m {
            let kick = if n == m - 1 - j { 1.0 } else { 0.0 };
            x[p + n] = (0..p).map(|i| a[i] * x[p + n - 1 - i]).sum::<f64>() + kick;
        }
        x[p + m - 1]
    }

    #[test]
    fn impulse_examples() {
        let w = impulse_weights_exact(&ar(&[0.5], 0.0), 4).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.5, 0.25, 0.125]);
        let w = impulse_weights_exact(&ar(&[1.0, 1.0], 0.0), 6).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0, 2.0, 3.0, 5.0, 8.0]);
        let a = [0.5, 0.3, 0.1];
        let w = impulse_weights_exact(&ar(&a, 0.0), 5).unwrap();
        for j in 0..5 {
            assert_relative_eq!(w.as_slice()[j], unit_kick(&a, 5, j), epsilon = 1e-15);
        }
    }

    #[test]
    fn impulse_overflow_is_reported() {
        let err = impulse_weights_exact(&ar(&[1e10], 0.0), 40).unwrap_err();
        assert!(matches!(err, Error::WeightOverflow { .. }));
        assert!(impulse_weights_exact(&ar(&[1.0], 0.0), 0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_weights_paper(&ar(&[1.0, 1.0], 0.0), 5).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 2.0, 4.0, 7.0, 12.0]);
        let g = gamma_weights_paper(&ar(&[0.0, 0.0], 0.0), 5).unwrap();
        assert_eq!(g.as_slice(), &[1.0; 5]);
        let g = gamma_weights_paper(&ar(&[0.5], 0.0), 4).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 0.5, 0.25, 0.125]);
        // raw recurrence for p = 1: γ_n = a γ_{n-1} + 1
        let raw = gamma_recurrence(&ar(&[0.5], 0.0), 4).unwrap();
        assert_eq!(raw.as_slice(), &[1.0, 1.5, 1.75, 1.875]);
    }

    #[test]
    fn gamma_general_p_matches_alpha_beta_form_for_p2() {
        // alpha_n = a1 (alpha_{n-1} + beta_{n-1}), beta_n = a2 (alpha_{n-2} + beta_{n-2}) + 1
        let (a1, a2) = (0.7, -0.4);
        let mut alpha = vec![1.0, a1];
        let mut beta = vec![0.0, 1.0];
        for n in 2..8 {
            alpha.push(a1 * (alpha[n - 1] + beta[n - 1]));
            beta.push(a2 * (alpha[n - 2] + beta[n - 2]) + 1.0);
        }
        let g = gamma_weights_paper(&ar(&[a1, a2], 0.0), 8).unwrap();
        for n in 0..8 {
            assert_relative_eq!(g.as_slice()[n], alpha[n] + beta[n], epsilon = 1e-15);
        }
    }

    #[test]
    fn scalar_solve_examples() {
        let s = solve_controls_scalar(&WeightSequence::new(vec![1.0, 0.5]), 0.0).unwrap();
        assert_eq!(s.c_star, 0.0);
        assert!(s.controls.iter().all(|&u| u == 0.0));

        let s = solve_controls_scalar(&WeightSequence::new(vec![1.0; 3]), 3.0).unwrap();
        assert_eq!(s.c_star, 1.0);
        assert_eq!(s.controls, vec![1.0, 1.0, 1.0]);

        let s = solve_controls_scalar(&WeightSequence::new(vec![1.0, 0.5, 0.25]), -2.0).unwrap();
        assert_relative_eq!(s.c_star, -32.0 / 21.0, epsilon = 1e-15);
        // chronological: earliest control has the smallest weight
        assert_relative_eq!(s.controls[0], -8.0 / 21.0, epsilon = 1e-15);
        assert_relative_eq!(s.controls[1], -16.0 / 21.0, epsilon = 1e-15);
        assert_relative_eq!(s.controls[2], -32.0 / 21.0, epsilon = 1e-15);

        let err = solve_controls_scalar(&WeightSequence::new(vec![0.0, 0.0]), 1.0).unwrap_err();
        assert!(err.to_string().contains("unreachable terminal constraint"));
    }

    #[test]
    fn ar1_random_walk_interpolates_linearly() {
        let sol = impute_gap_ar(&ar(&[1.0], 0.0), &[0.0], 2, 3.0, CoeffMode::Exact).unwrap();
        assert_relative_eq!(sol.imputed[0][0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(sol.imputed[1][0], 2.0, epsilon = 1e-14);
        assert!(sol.terminal_residual < 1e-14);
    }

    #[test]
    fn ar1_half_decay_example() {
        let sol = impute_gap_ar(&ar(&[0.5], 0.0), &[16.0], 2, 0.0, CoeffMode::Exact).unwrap();
        assert_relative_eq!(sol.imputed[0][0], 160.0 / 21.0, epsilon = 1e-13);
        assert_relative_eq!(sol.imputed[1][0], 64.0 / 21.0, epsilon = 1e-13);
        assert!(sol.terminal_residual < 1e-13);
        assert_eq!(sol.multiplier, Multiplier::Scalar(-32.0 / 21.0));
        assert_relative_eq!(sol.objective, 64.0 / 21.0, epsilon = 1e-13);
        // the anchor-step control is reported
        assert_relative_eq!(sol.terminal_control()[0], -32.0 / 21.0, epsilon = 1e-15);
    }

    #[test]
    fn anchor_on_prediction_gives_zero_controls() {
        let m = ar(&[0.8, -0.1], 1.5);
        let pred = m.predict(&[2.0, 3.0], 4).unwrap();
        let sol = impute_gap_ar(&m, &[2.0, 3.0], 3, pred[3], CoeffMode::Exact).unwrap();
        for (i, v) in sol.imputed.iter().enumerate() {
            assert_eq!(v[0], pred[i]);
        }
        assert!(sol.controls.iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn paper_mode_p2_reports_residual() {
        let m = ar(&[0.6, 0.3], 0.0);
        let sol = impute_gap_ar(&m, &[1.0, 2.0], 4, 10.0, CoeffMode::Paper).unwrap();
        assert!(sol.terminal_residual > 1e-3);
        match sol.paper.unwrap() {
            PaperDiagnostics::Weights { max_abs_diff, .. } => assert!(max_abs_diff > 0.0),
            other => panic!("unexpected diagnostics {other:?}"),
        }
        let p1 = impute_gap_ar(&ar(&[0.6], 1.0), &[1.0], 4, 10.0, CoeffMode::Paper).unwrap();
        let exact = impute_gap_ar(&ar(&[0.6], 1.0), &[1.0], 4, 10.0, CoeffMode::Exact).unwrap();
        assert_eq!(p1.imputed, exact.imputed);
        match p1.paper.unwrap() {
            PaperDiagnostics::Weights { max_abs_diff, raw_recurrence_max_abs_diff, .. } => {
                assert_eq!(max_abs_diff, 0.0);
                assert!(raw_recurrence_max_abs_diff.unwrap() > 0.0);
            }
            other => panic!("unexpected diagnostics {other:?}"),
        }
    }

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn var_zero_matrix_puts_everything_on_last_step() {
        let powers = mat_pow_table(&Matrix::zeros(2, 2), 2).unwrap();
        let delta = Vector::new(vec![1.0, -2.0]);
        let vc = solve_controls_var(&powers, &delta).unwrap();
        assert_eq!(vc.controls[2], delta);
        assert_eq!(vc.controls[0], Vector::zeros(2));
        assert_eq!(vc.controls[1], Vector::zeros(2));
    }

    #[test]
    fn var_identity_spreads_uniformly() {
        let powers = mat_pow_table(&Matrix::identity(2), 3).unwrap();
        let delta = Vector::new(vec![4.0, -8.0]);
        let vc = solve_controls_var(&powers, &delta).unwrap();
        for u in &vc.controls {
            assert_relative_eq!(u[0], 1.0, epsilon = 1e-15);
            assert_relative_eq!(u[1], -2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn var_diagonal_example() {
        let a = mat(&[&[0.5, 0.0], &[0.0, 2.0]]);
        let powers = mat_pow_table(&a, 1).unwrap();
        let g = gram(&powers).unwrap();
        assert_eq!(g.entries(), &[1.25, 0.0, 0.0, 5.0]);
        let vc = solve_controls_var(&powers, &Vector::new(vec![1.0, 1.0])).unwrap();
        assert_relative_eq!(vc.lambda[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(vc.lambda[1], 0.2, epsilon = 1e-15);
        // KKT: earliest control A^T lambda = (0.4, 0.4), last control lambda
        assert_relative_eq!(vc.controls[0][0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(vc.controls[0][1], 0.4, epsilon = 1e-15);
        assert_eq!(vc.controls[1], vc.lambda);
    }

    #[test]
    fn var_unreachable_direction() {
        // A = 0 and only one step: G = I is fine; make G singular with a projector and m = 1
        let powers = vec![mat(&[&[1.0, 0.0], &[0.0, 0.0]])];
        let err = solve_controls_var(&powers, &Vector::new(vec![1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::Unreachable(_)));
        let ok = solve_controls_var(&powers, &Vector::new(vec![1.0, 0.0])).unwrap();
        assert!(ok.rank_deficient);
    }

    #[test]
    fn var_k1_matches_ar1() {
        let var = VarModel::new(mat(&[&[0.7]]), Vector::scalar(0.4)).unwrap();
        let sv = impute_gap_var(&var, &Vector::scalar(2.0), 5, &Vector::scalar(-3.0), CoeffMode::Exact).unwrap();
        let sa = impute_gap_ar(&ar(&[0.7], 0.4), &[2.0], 5, -3.0, CoeffMode::Exact).unwrap();
        for (a, b) in sv.imputed.iter().zip(&sa.imputed) {
            assert!((a[0] - b[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn regression_uniform_spread() {
        let model = RegModel::new(mat(&[&[2.0]]), Vector::scalar(1.0)).unwrap();
        let covs: Vec<Vector> = [0.0, 1.0, 1.5, 3.0].iter().map(|&x| Vector::scalar(x)).collect();
        // ŷ = (1, 3, 4, 7); anchor equal to ŷ_N keeps predictions
        let s = impute_gap_regression(&model, &covs, &Vector::scalar(7.0)).unwrap();
        assert_eq!(s.imputed, vec![Vector::scalar(3.0), Vector::scalar(4.0)]);
        // constant covariates and anchor 3 above the prediction: +1 per step
        let covs = vec![Vector::scalar(1.0); 4];
        let s = impute_gap_regression(&model, &covs, &Vector::scalar(6.0)).unwrap();
        assert_eq!(s.imputed, vec![Vector::scalar(4.0), Vector::scalar(5.0)]);
        assert!(s.terminal_residual < 1e-12);
    }

    #[test]
    fn open_gap_extrapolation_has_no_controls() {
        let s = extrapolate_ar(&ar(&[0.5], 0.0), &[16.0], 3).unwrap();
        assert_eq!(s.imputed, vec![Vector::scalar(8.0), Vector::scalar(4.0), Vector::scalar(2.0)]);
        assert_eq!(s.objective, 0.0);
    }

    fn ar_instance() -> impl Strategy<Value = (Vec<f64>, f64, Vec<f64>, usize, f64)> {
        (1usize..=3).prop_flat_map(|p| {
            (
                proptest::collection::vec(-1.2f64..1.2, p),
                -5.0f64..5.0,
                proptest::collection::vec(-10.0f64..10.0, p),
                1usize..=12,
                -50.0f64..50.0,
            )
        })
    }

    proptest! {
        #[test]
        fn exact_mode_hits_the_anchor((a, b, seeds, gap, anchor) in ar_instance()) {
            let sol = impute_gap_ar(&ar(&a, b), &seeds, gap, anchor, CoeffMode::Exact).unwrap();
            prop_assert!(sol.terminal_residual <= 1e-9 * (1.0 + anchor.abs()));
            prop_assert_eq!(sol.imputed.len(), gap);
            prop_assert_eq!(sol.controls.len(), gap + 1);
        }

        #[test]
        fn ar1_controls_follow_closed_form(a in -1.2f64..1.2, b in -3.0f64..3.0, seed in -10.0f64..10.0, gap in 1usize..=12, anchor in -20.0f64..20.0) {
            let sol = impute_gap_ar(&ar(&[a], b), &[seed], gap, anchor, CoeffMode::Exact).unwrap();
            let m = gap + 1;
            let xhat = sol.uncorrected[m - 1][0];
            let denom: f64 = (0..m).map(|j| a.powi(2 * j as i32)).sum();
            let c = (anchor - xhat) / denom;
            for (i, u) in sol.controls.iter().enumerate() {
                let want = c * a.powi((m - 1 - i) as i32);
                prop_assert!((u[0] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}
