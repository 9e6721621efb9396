//! Least-squares estimation of the recursions used for gap filling.
//!
//! Three model families share one estimator (the rank-revealing
//! [`least_squares`](crate::linalg::least_squares)):
//!
//! * scalar AR(p): `x_n = a_1 x_{n-1} + ... + a_p x_{n-p} + b`
//! * VAR(1): `x_n = A x_{n-1} + b` with a square transition matrix
//! * regression: `y_n = A x_n + b` for covariates `x_n`
//!
//! Each fit reports the rank of its design so degenerate windows (a constant
//! series, collinear covariates) are flagged rather than silently accepted.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{least_squares_with_tol, mat_vec, Matrix, Vector, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub intercept: bool,
    pub rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { intercept: true, rank_tol: DEFAULT_RANK_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub equations: usize,
    pub unknowns: usize,
    pub rank: usize,
    pub residual_norm: f64,
}

impl FitDiagnostics {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.unknowns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fitted<M> {
    pub model: M,
    pub diagnostics: FitDiagnostics,
}

/// Scalar autoregression of order `coeffs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArModel {
    /// `a_1..a_p`; `a_j` multiplies the value `j` steps back.
    pub coeffs: Vec<f64>,
    pub intercept: f64,
}

impl ArModel {
    pub fn new(coeffs: Vec<f64>, intercept: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("AR order must be at least 1".into()));
        }
        if coeffs.iter().chain([&intercept]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("AR coefficient".into()));
        }
        Ok(ArModel { coeffs, intercept })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// One step of the recursion; `history` ends with the most recent value.
    pub fn step(&self, history: &[f64]) -> f64 {
        let n = history.len();
        self.intercept + self.coeffs.iter().enumerate().map(|(j, a)| a * history[n - 1 - j]).sum::<f64>()
    }

    /// Uncorrected forward path from `seeds` (oldest first, at least `p` values).
    pub fn predict(&self, seeds: &[f64], steps: usize) -> Result<Vec<f64>> {
        let p = self.order();
        if seeds.len() < p {
            return Err(Error::InvalidInput(format!("AR({p}) prediction needs {p} seeds, got {}", seeds.len())));
        }
        let mut hist = seeds[seeds.len() - p..].to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.step(&hist);
            hist.remove(0);
            hist.push(next);
            out.push(next);
        }
        Ok(out)
    }
}

/// First-order vector autoregression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarModel {
    pub transition: Matrix,
    pub intercept: Vector,
}

impl VarModel {
    pub fn new(transition: Matrix, intercept: Vector) -> Result<Self> {
        if !transition.is_square() {
            return Err(Error::NotSquare { rows: transition.rows(), cols: transition.cols() });
        }
        if intercept.len() != transition.rows() {
            return Err(Error::DimensionMismatch("VAR intercept length".into()));
        }
        if !intercept.is_finite() {
            return Err(Error::NonFinite("VAR intercept".into()));
        }
        Ok(VarModel { transition, intercept })
    }

    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    pub fn step(&self, prev: &[f64]) -> Result<Vector> {
        Ok(mat_vec(&self.transition, prev)?.add(&self.intercept))
    }

    pub fn predict(&self, seed: &[f64], steps: usize) -> Result<Vec<Vector>> {
        let mut cur = Vector::new(seed.to_vec());
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            cur = self.step(&cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

/// Linear regression of an `m`-dimensional response on `k` covariates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegModel {
    /// `m x k`; a scalar response is the single-row case.
    pub coeffs: Matrix,
    pub intercept: Vector,
}

impl RegModel {
    pub fn new(coeffs: Matrix, intercept: Vector) -> Result<Self> {
        if intercept.len() != coeffs.rows() {
            return Err(Error::DimensionMismatch("regression intercept length".into()));
        }
        Ok(RegModel { coeffs, intercept })
    }

    pub fn response_dim(&self) -> usize {
        self.coeffs.rows()
    }

    pub fn covariate_dim(&self) -> usize {
        self.coeffs.cols()
    }

    pub fn predict_at(&self, covariates: &[f64]) -> Result<Vector> {
        Ok(mat_vec(&self.coeffs, covariates)?.add(&self.intercept))
    }

    pub fn predict(&self, covariates: &[Vector]) -> Result<Vec<Vector>> {
        covariates.iter().map(|x| self.predict_at(x)).collect()
    }
}

/// Regress each column of `targets` on `design` (plus an intercept column when asked).
fn solve_rows(
    design_rows: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    outputs: usize,
    opts: &FitOptions,
) -> Result<(Vec<Vector>, FitDiagnostics)> {
    let equations = design_rows.len();
    let mut rows = design_rows;
    if opts.intercept {
        rows.iter_mut().for_each(|r| r.push(1.0));
    }
    let unknowns = rows[0].len();
    let x = Matrix::from_rows(&rows)?;
    let mut solutions = Vec::with_capacity(outputs);
    let mut rank = unknowns;
    let mut rss = 0.0;
    for c in 0..outputs {
        let y: Vec<f64> = targets.iter().map(|t| t[c]).collect();
        let ls = least_squares_with_tol(&x, &y, opts.rank_tol)?;
        rank = rank.min(ls.rank);
        rss += ls.residual_norm * ls.residual_norm;
        solutions.push(ls.coeffs);
    }
    Ok((solutions, FitDiagnostics { equations, unknowns, rank, residual_norm: rss.sqrt() }))
}

fn split_intercept(coeffs: &Vector, intercept: bool) -> (Vec<f64>, f64) {
    if intercept {
        let (a, b) = coeffs.split_at(coeffs.len() - 1);
        (a.to_vec(), b[0])
    } else {
        (coeffs.to_vec(), 0.0)
    }
}

/// Fit AR(p) on a contiguous fully observed window.
pub fn fit_ar_scalar(window: &[f64], order: usize, opts: &FitOptions) -> Result<Fitted<ArModel>> {
    let values: Vec<Option<f64>> = window.iter().copied().map(Some).collect();
    fit_ar_scalar_masked(&values, order, opts)
}

/// Fit AR(p) using every position whose value and `p` predecessors are all observed.
pub fn fit_ar_scalar_masked(values: &[Option<f64>], order: usize, opts: &FitOptions) -> Result<Fitted<ArModel>> {
    if order == 0 {
        return Err(Error::InvalidInput("AR order must be at least 1".into()));
    }
    let unknowns = order + usize::from(opts.intercept);
    let mut design = Vec::new();
    let mut targets = Vec::new();
    for n in order..values.len() {
        let Some(target) = values[n] else { continue };
        let lags: Option<Vec<f64>> = (1..=order).map(|j| values[n - j]).collect();
        if let Some(lags) = lags {
            design.push(lags);
            targets.push(vec![target]);
        }
    }
    if design.len() < unknowns {
        let observed = values.iter().filter(|v| v.is_some()).count();
        return Err(Error::WindowTooShort { len: observed, needed: unknowns + order });
    }
    let (sol, diagnostics) = solve_rows(design, targets, 1, opts)?;
    let (coeffs, intercept) = split_intercept(&sol[0], opts.intercept);
    Ok(Fitted { model: ArModel::new(coeffs, intercept)?, diagnostics })
}

/// Fit VAR(1) on a contiguous fully observed window of `k`-vectors.
pub fn fit_var1(window: &[Vector], opts: &FitOptions) -> Result<Fitted<VarModel>> {
    let values: Vec<Option<Vector>> = window.iter().cloned().map(Some).collect();
    fit_var1_masked(&values, opts)
}

/// Fit VAR(1) on every consecutive pair of observed vectors.
pub fn fit_var1_masked(values: &[Option<Vector>], opts: &FitOptions) -> Result<Fitted<VarModel>> {
    let k = values.iter().flatten().map(|v| v.len()).next().ok_or(Error::NoObservations)?;
    let unknowns = k + usize::from(opts.intercept);
    let mut design = Vec::new();
    let mut targets = Vec::new();
    for pair in values.windows(2) {
        if let (Some(prev), Some(cur)) = (&pair[0], &pair[1]) {
            if prev.len() != k || cur.len() != k {
                return Err(Error::DimensionMismatch("VAR window width".into()));
            }
            design.push(prev.to_vec());
            targets.push(cur.to_vec());
        }
    }
    if design.len() < unknowns {
        let observed = values.iter().filter(|v| v.is_some()).count();
        return Err(Error::WindowTooShort { len: observed, needed: unknowns + 1 });
    }
    let (sol, diagnostics) = solve_rows(design, targets, k, opts)?;
    let mut transition = Matrix::zeros(k, k);
    let mut intercept = Vector::zeros(k);
    for (i, row) in sol.iter().enumerate() {
        let (a, b) = split_intercept(row, opts.intercept);
        for (j, v) in a.into_iter().enumerate() {
            transition[(i, j)] = v;
        }
        intercept[i] = b;
    }
    Ok(Fitted { model: VarModel::new(transition, intercept)?, diagnostics })
}

/// Fit `y = A x + b` over paired observations.
pub fn fit_regression(responses: &[Vector], covariates: &[Vector], opts: &FitOptions) -> Result<Fitted<RegModel>> {
    if responses.len() != covariates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses but {} covariate rows",
            responses.len(),
            covariates.len()
        )));
    }
    let m = responses.first().map(|v| v.len()).ok_or(Error::NoObservations)?;
    let k = covariates[0].len();
    let needed = k + 1 + usize::from(opts.intercept);
    if responses.len() < needed {
        return Err(Error::WindowTooShort { len: responses.len(), needed });
    }
    if responses.iter().any(|v| v.len() != m) || covariates.iter().any(|v| v.len() != k) {
        return Err(Error::DimensionMismatch("regression window width".into()));
    }
    let design = covariates.iter().map(|v| v.to_vec()).collect();
    let targets = responses.iter().map(|v| v.to_vec()).collect();
    let (sol, diagnostics) = solve_rows(design, targets, m, opts)?;
    let mut coeffs = Matrix::zeros(m, k);
    let mut intercept = Vector::zeros(m);
    for (i, row) in sol.iter().enumerate() {
        let (a, b) = split_intercept(row, opts.intercept);
        for (j, v) in a.into_iter().enumerate() {
            coeffs[(i, j)] = v;
        }
        intercept[i] = b;
    }
    Ok(Fitted { model: RegModel::new(coeffs, intercept)?, diagnostics })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: solve (XᵀX) c = Xᵀy by Gaussian elimination with partial pivoting.
    fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let n = rows[0].len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for (r, &t) in rows.iter().zip(y) {
            for i in 0..n {
                for j in 0..n {
                    a[i][j] += r[i] * r[j];
                }
                a[i][n] += r[i] * t;
            }
        }
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
            a.swap(col, piv);
            for i in (col + 1)..n {
                let f = a[i][col] / a[col][col];
                for j in col..=n {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (a[i][n] - s) / a[i][i];
        }
        x
    }

    fn simulate_ar(a: &[f64], b: f64, seeds: &[f64], len: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let m = ArModel::new(a.to_vec(), b).unwrap();
        let mut x = seeds.to_vec();
        while x.len() < len {
            let e = if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 };
            let next = m.step(&x) + e;
            x.push(next);
        }
        x
    }

    #[test]
    fn recovers_exact_ar1() {
        let w: Vec<f64> = std::iter::successors(Some(1.0), |x| Some(2.0 * x + 1.0)).take(8).collect();
        let f = fit_ar_scalar(&w, 1, &FitOptions::default()).unwrap();
        assert_relative_eq!(f.model.coeffs[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(f.model.intercept, 1.0, epsilon = 1e-7);
        assert!(f.diagnostics.residual_norm < 1e-7);
        assert!(!f.diagnostics.rank_deficient());
    }

    #[test]
    fn constant_window_is_flagged() {
        let f = fit_ar_scalar(&[5.0; 5], 1, &FitOptions::default()).unwrap();
        assert!(f.diagnostics.rank_deficient());
        // minimum-norm point of the ridge 5a + b = 5 is proportional to (5, 1)
        assert_relative_eq!(f.model.coeffs[0], 25.0 / 26.0, epsilon = 1e-12);
        assert_relative_eq!(f.model.intercept, 5.0 / 26.0, epsilon = 1e-12);
    }

    #[test]
    fn short_windows_are_rejected() {
        // p = 2 needs n0 - p >= p + 1, i.e. n0 >= 5
        assert!(matches!(
            fit_ar_scalar(&[1.0, 2.0, 3.0, 5.0], 2, &FitOptions::default()),
            Err(Error::WindowTooShort { .. })
        ));
        assert!(fit_ar_scalar(&[1.0, 2.0, 4.0, 3.0, 5.0], 2, &FitOptions::default()).is_ok());
        let w = vec![Vector::new(vec![1.0, 2.0]); 3];
        assert!(matches!(fit_var1(&w, &FitOptions::default()), Err(Error::WindowTooShort { .. })));
    }

    #[test]
    fn noisy_ar1_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = simulate_ar(&[0.6], 2.0, &[1.0], 200, 0.5, &mut rng);
        let f = fit_ar_scalar(&x, 1, &FitOptions::default()).unwrap();
        let rows: Vec<Vec<f64>> = x.windows(2).map(|w| vec![w[0], 1.0]).collect();
        let y: Vec<f64> = x.windows(2).map(|w| w[1]).collect();
        let oracle = normal_equations(&rows, &y);
        assert_relative_eq!(f.model.coeffs[0], oracle[0], max_relative = 1e-8);
        assert_relative_eq!(f.model.intercept, oracle[1], max_relative = 1e-8);
        assert!((f.model.coeffs[0] - 0.6).abs() < 0.1);
    }

    #[test]
    fn recovers_exact_ar3() {
        // roots 0.9, 0.5, -0.4: a = (1.0, 0.11, -0.18)
        let a = [1.0, 0.11, -0.18];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = simulate_ar(&a, 0.7, &[1.0, -2.0, 3.0], 40, 0.0, &mut rng);
        let f = fit_ar_scalar(&x, 3, &FitOptions::default()).unwrap();
        for (got, want) in f.model.coeffs.iter().zip(a) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!((f.model.intercept - 0.7).abs() < 1e-8);
    }

    #[test]
    fn identity_var_recovered() {
        // x_n = x_{n-1} would be rank deficient; use a rotation-like exact recursion instead.
        let a = Matrix::from_rows(&[vec![0.5, 0.2], vec![-0.3, 0.8]]).unwrap();
        let model = VarModel::new(a.clone(), Vector::new(vec![1.0, -1.0])).unwrap();
        let mut w = vec![Vector::new(vec![3.0, 1.0])];
        w.extend(model.predict(&w[0], 9).unwrap());
        let f = fit_var1(&w, &FitOptions::default()).unwrap();
        for (g, t) in f.model.transition.entries().iter().zip(a.entries()) {
            assert!((g - t).abs() < 1e-8);
        }
        assert!((f.model.intercept[0] - 1.0).abs() < 1e-8);
        assert!((f.model.intercept[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn identity_dynamics_without_intercept() {
        // A constant window is exactly x_n = I x_{n-1}; without an intercept the
        // scalar case identifies A = 1, b = 0.
        let w = vec![Vector::scalar(4.0); 6];
        let opts = FitOptions { intercept: false, ..FitOptions::default() };
        let f = fit_var1(&w, &opts).unwrap();
        assert_eq!(f.diagnostics.unknowns, 1);
        assert_relative_eq!(f.model.transition[(0, 0)], 1.0, epsilon = 1e-14);
        assert_eq!(f.model.intercept.as_slice(), &[0.0]);
        assert!(f.diagnostics.residual_norm < 1e-12);
    }

    #[test]
    fn regression_examples() {
        let xs: Vec<Vector> = (0..5).map(|i| Vector::scalar(i as f64 * 0.7 - 1.0)).collect();
        let ys: Vec<Vector> = xs.iter().map(|x| Vector::scalar(3.0 * x[0] + 2.0)).collect();
        let f = fit_regression(&ys, &xs, &FitOptions::default()).unwrap();
        assert_relative_eq!(f.model.coeffs[(0, 0)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.model.intercept[0], 2.0, epsilon = 1e-12);

        let ys: Vec<Vector> = xs.iter().map(|_| Vector::scalar(4.5)).collect();
        let f = fit_regression(&ys, &xs, &FitOptions::default()).unwrap();
        assert!(f.model.coeffs[(0, 0)].abs() < 1e-12);
        assert_relative_eq!(f.model.intercept[0], 4.5, epsilon = 1e-12);

        assert!(matches!(
            fit_regression(&ys[..2], &xs[..2], &FitOptions::default()),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn noisy_regression_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vector> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let ys: Vec<Vector> = xs
            .iter()
            .map(|x| Vector::scalar(1.5 * x[0] - 0.5 * x[1] + 2.0 * x[2] + 0.3 + rng.random_range(-0.1..0.1)))
            .collect();
        let f = fit_regression(&ys, &xs, &FitOptions::default()).unwrap();
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0], x[1], x[2], 1.0]).collect();
        let y: Vec<f64> = ys.iter().map(|v| v[0]).collect();
        let oracle = normal_equations(&rows, &y);
        for j in 0..3 {
            assert!((f.model.coeffs[(0, j)] - oracle[j]).abs() < 1e-8);
        }
        assert!((f.model.intercept[0] - oracle[3]).abs() < 1e-8);
    }

    #[test]
    fn forward_predictions() {
        let rw = ArModel::new(vec![1.0], 0.0).unwrap();
        assert_eq!(rw.predict(&[7.0], 3).unwrap(), vec![7.0, 7.0, 7.0]);
        let half = ArModel::new(vec![0.5], 0.0).unwrap();
        assert_eq!(half.predict(&[16.0], 3).unwrap(), vec![8.0, 4.0, 2.0]);
        let var = VarModel::new(Matrix::zeros(2, 2), Vector::new(vec![1.0, 2.0])).unwrap();
        let p = var.predict(&[9.0, -9.0], 2).unwrap();
        assert_eq!(p, vec![Vector::new(vec![1.0, 2.0]), Vector::new(vec![1.0, 2.0])]);
        assert!(half.predict(&[], 1).is_err());
    }

    #[test]
    fn masked_fit_skips_incomplete_rows() {
        let v = [Some(1.0), Some(3.0), Some(7.0), None, Some(15.0), Some(31.0), Some(63.0)];
        let f = fit_ar_scalar_masked(&v, 1, &FitOptions::default()).unwrap();
        assert_eq!(f.diagnostics.equations, 4);
        assert_relative_eq!(f.model.coeffs[0], 2.0, epsilon = 1e-10);
    }

    fn window_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 12..30)
    }

    proptest! {
        #[test]
        fn var_k1_matches_scalar_ar1(w in window_strategy()) {
            let scalar = fit_ar_scalar(&w, 1, &FitOptions::default()).unwrap();
            let vw: Vec<Vector> = w.iter().map(|&x| Vector::scalar(x)).collect();
            let var = fit_var1(&vw, &FitOptions::default()).unwrap();
            prop_assert!((scalar.model.coeffs[0] - var.model.transition[(0, 0)]).abs() <= 1e-10);
            prop_assert!((scalar.model.intercept - var.model.intercept[0]).abs() <= 1e-10);
        }

        #[test]
        fn shift_and_scale_equivariance(w in window_strategy(), p in 1usize..4, c in -50.0f64..50.0, s in 0.1f64..10.0) {
            let base = fit_ar_scalar(&w, p, &FitOptions::default()).unwrap().model;
            let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
            let sh = fit_ar_scalar(&shifted, p, &FitOptions::default()).unwrap().model;
            let scaled: Vec<f64> = w.iter().map(|x| x * s).collect();
            let sc = fit_ar_scalar(&scaled, p, &FitOptions::default()).unwrap().model;
            let sum_a: f64 = base.coeffs.iter().sum();
            for j in 0..p {
                prop_assert!((sh.coeffs[j] - base.coeffs[j]).abs() <= 1e-8 * (1.0 + base.coeffs[j].abs()));
                prop_assert!((sc.coeffs[j] - base.coeffs[j]).abs() <= 1e-8 * (1.0 + base.coeffs[j].abs()));
            }
            let tol = 1e-8 * (1.0 + base.intercept.abs() + c.abs());
            prop_assert!((sh.intercept - (base.intercept + c * (1.0 - sum_a))).abs() <= tol * 10.0);
            prop_assert!((sc.intercept - s * base.intercept).abs() <= 1e-8 * s * (1.0 + base.intercept.abs()) * 10.0);

            let seeds = &w[w.len() - p..];
            let pb = base.predict(seeds, 5).unwrap();
            let shifted_seeds: Vec<f64> = seeds.iter().map(|x| x + c).collect();
            let ps = sh.predict(&shifted_seeds, 5).unwrap();
            for (a, b) in pb.iter().zip(&ps) {
                prop_assert!((b - (a + c)).abs() <= 1e-7 * (1.0 + a.abs() + c.abs()));
            }
        }
    }
}
