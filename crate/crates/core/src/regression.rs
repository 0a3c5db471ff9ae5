//! Least-squares fitting for genome fitness and the STRidge sparse-regression
//! baseline over fixed candidate libraries.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RegressionError, SystemError};
use crate::genome::{Gene, Genome, TermModule};
use crate::surrogate::MetaDataset;
use crate::system::{module_column, LinearSystem};

/// Estimated condition numbers above this mark a fit as ill-conditioned.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coeffs: Vec<f64>,
    pub mse: f64,
    pub condition_flag: bool,
    /// Condition number of the column-normalized design.
    pub condition: f64,
}

struct Solution {
    coeffs: DVector<f64>,
    condition: f64,
}

fn column_scales(a: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 && n.is_finite() {
                n
            } else {
                1.0
            }
        })
        .collect()
}

/// Minimum-norm solution of `min |a x - b|` through QR of the column-scaled
/// matrix followed by an SVD of the small triangular factor.
fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Solution {
    let m = a.ncols();
    if m == 0 {
        return Solution {
            coeffs: DVector::zeros(0),
            condition: 1.0,
        };
    }
    let scales = column_scales(a);
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }
    let qr = scaled.qr();
    let r = qr.r();
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let k = r.nrows();
    let rhs = qtb.rows(0, k).into_owned();
    let svd = r.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = if k < m { 0.0 } else { svd.singular_values.min() };
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let tol = smax * (a.nrows().max(m) as f64) * f64::EPSILON;
    let x = svd.solve(&rhs, tol).expect("svd computed with u and v");
    let coeffs = DVector::from_iterator(m, x.iter().zip(&scales).map(|(v, s)| v / s));
    Solution { coeffs, condition }
}

fn mse(a: &DMatrix<f64>, b: &DVector<f64>, coeffs: &DVector<f64>) -> f64 {
    if b.is_empty() {
        return 0.0;
    }
    let residual = if coeffs.is_empty() { b.clone() } else { b - a * coeffs };
    residual.norm_squared() / b.len() as f64
}

/// Ordinary least squares on a genome's system.
pub fn least_squares(sys: &LinearSystem) -> Result<FitResult, RegressionError> {
    let (rows, cols) = sys.design.shape();
    if sys.target.len() != rows {
        return Err(RegressionError::RowMismatch {
            target: sys.target.len(),
            rows,
        });
    }
    if rows < cols {
        return Err(RegressionError::Underdetermined { rows, cols });
    }
    let sol = solve(&sys.design, &sys.target);
    Ok(FitResult {
        mse: mse(&sys.design, &sys.target, &sol.coeffs),
        coeffs: sol.coeffs.iter().copied().collect(),
        condition_flag: !(sol.condition <= CONDITION_LIMIT),
        condition: sol.condition,
    })
}

/// `u^power * d^derivative u / dx^derivative`; power 0 and derivative 0 is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LibraryTerm {
    pub power: Gene,
    pub derivative: Gene,
}

impl LibraryTerm {
    /// The equivalent genome module, `None` for the constant term.
    pub fn module(&self) -> Option<TermModule> {
        let mut genes = vec![0; self.power as usize];
        if self.derivative > 0 {
            genes.push(self.derivative);
        }
        TermModule::new(genes).ok().map(|m| m.canonical())
    }
}

impl fmt::Display for LibraryTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.module() {
            Some(m) => write!(f, "{}", m.term_name()),
            None => write!(f, "1"),
        }
    }
}

/// Ordered candidate terms for sparse regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedLibrary {
    terms: Vec<LibraryTerm>,
}

impl FixedLibrary {
    pub fn new(terms: Vec<LibraryTerm>) -> Self {
        Self { terms }
    }

    /// Every `u^p * d^k u/dx^k` with `p <= max_power`, `k <= max_derivative`,
    /// derivative-major; the `k = 0` block is the pure powers `1, u, .., u^max_power`.
    pub fn polynomial(max_power: Gene, max_derivative: Gene) -> Self {
        let terms = (0..=max_derivative)
            .flat_map(|derivative| (0..=max_power).map(move |power| LibraryTerm { power, derivative }))
            .collect();
        Self { terms }
    }

    /// Twelve terms: `1, u, u^2, u_x, u*u_x, u^2*u_x, .., u^2*u_xxx`.
    pub fn burgers() -> Self {
        Self::polynomial(2, 3)
    }

    /// Sixteen terms: `1, u, u^2, u^3, u_x, .., u^3*u_xxx`.
    pub fn chaffee_infante() -> Self {
        Self::polynomial(3, 3)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "burgers" => Some(Self::burgers()),
            "chaffee_infante" | "chaffee-infante" => Some(Self::chaffee_infante()),
            _ => None,
        }
    }

    pub fn terms(&self) -> &[LibraryTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn columns(&self, data: &MetaDataset) -> Result<DMatrix<f64>, SystemError> {
        let mut out = DMatrix::from_element(data.len(), self.terms.len(), 1.0);
        for (j, term) in self.terms.iter().enumerate() {
            if let Some(m) = term.module() {
                out.set_column(j, &DVector::from_vec(module_column(&m, data)?));
            }
        }
        Ok(out)
    }

    /// Genome with the given support on the right-hand side; `None` when the
    /// support is empty or includes the constant term.
    pub fn genome(&self, lhs: Gene, support: &[usize]) -> Option<Genome> {
        let modules = support
            .iter()
            .map(|&j| self.terms[j].module())
            .collect::<Option<Vec<_>>>()?;
        Genome::new(lhs, modules).ok().map(|g| g.canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StridgeParams {
    pub ridge_lambda: f64,
    /// Applied to coefficients of the unit-norm columns and unit-norm target.
    pub threshold: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFit {
    /// Full-length coefficients in original units, zero off the support.
    pub fit: FitResult,
    pub support: Vec<usize>,
    /// Support size after the initial fit and after each thresholding pass.
    pub support_history: Vec<usize>,
}

fn ridge(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> DVector<f64> {
    if lambda == 0.0 {
        return solve(a, b).coeffs;
    }
    let (n, m) = a.shape();
    let mut aug = DMatrix::zeros(n + m, m);
    aug.rows_mut(0, n).copy_from(a);
    for j in 0..m {
        aug[(n + j, j)] = lambda.sqrt();
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(b);
    solve(&aug, &rhs).coeffs
}

/// Sequential threshold ridge regression on `columns`.
pub fn stridge(
    columns: &DMatrix<f64>,
    target: &DVector<f64>,
    params: &StridgeParams,
) -> Result<SparseFit, RegressionError> {
    let (rows, cols) = columns.shape();
    if target.len() != rows {
        return Err(RegressionError::RowMismatch {
            target: target.len(),
            rows,
        });
    }
    if rows < cols {
        return Err(RegressionError::Underdetermined { rows, cols });
    }
    if !(params.threshold >= 0.0 && params.ridge_lambda >= 0.0) {
        return Err(RegressionError::Parameter(format!(
            "threshold {} and ridge lambda {} must be non-negative",
            params.threshold, params.ridge_lambda
        )));
    }
    let col_scales = column_scales(columns);
    let mut a = columns.clone();
    for (j, s) in col_scales.iter().enumerate() {
        a.column_mut(j).unscale_mut(*s);
    }
    let b_scale = match target.norm() {
        n if n > 0.0 => n,
        _ => 1.0,
    };
    let b = target / b_scale;

    let select = |support: &[usize]| a.select_columns(support.iter());
    let mut support: Vec<usize> = (0..cols).collect();
    let mut w = ridge(&a, &b, params.ridge_lambda);
    let mut history = vec![support.len()];
    for _ in 0..params.max_iters {
        let kept: Vec<usize> = support
            .iter()
            .zip(w.iter())
            .filter(|(_, v)| v.abs() >= params.threshold)
            .map(|(&j, _)| j)
            .collect();
        if kept.len() == support.len() {
            break;
        }
        support = kept;
        history.push(support.len());
        if support.is_empty() {
            break;
        }
        w = ridge(&select(&support), &b, params.ridge_lambda);
    }

    let mut coeffs = vec![0.0; cols];
    let mut condition = 1.0;
    if !support.is_empty() {
        let sub = columns.select_columns(support.iter());
        let sol = solve(&sub, target);
        condition = sol.condition;
        for (&j, v) in support.iter().zip(sol.coeffs.iter()) {
            coeffs[j] = *v;
        }
    }
    let full = DVector::from_vec(coeffs.clone());
    Ok(SparseFit {
        fit: FitResult {
            mse: mse(columns, target, &full),
            coeffs,
            condition_flag: !(condition <= CONDITION_LIMIT),
            condition,
        },
        support,
        support_history: history,
    })
}

/// Threshold sweep for STRidge. The winner minimizes
/// `mse / mean(target^2) + l0_penalty * support size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StridgeSweep {
    /// `None` selects `1e-5 * rows`.
    pub ridge_lambda: Option<f64>,
    pub thresholds: Vec<f64>,
    pub max_iters: usize,
    pub l0_penalty: f64,
}

impl Default for StridgeSweep {
    fn default() -> Self {
        Self {
            ridge_lambda: None,
            thresholds: std::iter::once(0.0)
                .chain((0..=12).map(|k| 10f64.powf(-4.0 + k as f64 / 3.0)))
                .collect(),
            max_iters: 10,
            l0_penalty: 1e-4,
        }
    }
}

impl StridgeSweep {
    pub fn run(&self, columns: &DMatrix<f64>, target: &DVector<f64>) -> Result<SparseFit, RegressionError> {
        if self.thresholds.is_empty() {
            return Err(RegressionError::Parameter("empty threshold grid".into()));
        }
        let ridge_lambda = self.ridge_lambda.unwrap_or(1e-5 * columns.nrows() as f64);
        let power = target.norm_squared() / target.len().max(1) as f64;
        let power = if power > 0.0 { power } else { 1.0 };
        let mut best: Option<(f64, SparseFit)> = None;
        for &threshold in &self.thresholds {
            let fit = stridge(
                columns,
                target,
                &StridgeParams {
                    ridge_lambda,
                    threshold,
                    max_iters: self.max_iters,
                },
            )?;
            let loss = fit.fit.mse / power + self.l0_penalty * fit.support.len() as f64;
            if best.as_ref().map_or(true, |(l, _)| loss < *l) {
                best = Some((loss, fit));
            }
        }
        Ok(best.expect("non-empty grid").1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Jets with independent random derivative columns, so library columns are
    /// generic rather than tied together by a PDE.
    fn random_dataset(n: usize, seed: u64) -> MetaDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut col = || (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<f64>>();
        let spatial = (0..=3).map(|_| col()).collect();
        let temporal = vec![col()];
        MetaDataset::from_columns(vec![(0.0, 0.0); n], spatial, temporal).unwrap()
    }

    #[test]
    fn orthonormal_columns_exact_representation() {
        let q = random_matrix(30, 4, 1).qr().q();
        let sys = LinearSystem::new(q.column(0).into_owned(), q.clone());
        let fit = least_squares(&sys).unwrap();
        assert_relative_eq!(fit.coeffs[0], 1.0, epsilon = 1e-12);
        for c in &fit.coeffs[1..] {
            assert!(c.abs() < 1e-12);
        }
        assert!(fit.mse < 1e-28);
        assert!(!fit.condition_flag);
    }

    #[test]
    fn orthogonal_target_gives_zero_coefficients() {
        let q = random_matrix(30, 4, 2).qr().q();
        let design = q.columns(0, 3).into_owned();
        let target = q.column(3) * 2.0;
        let fit = least_squares(&LinearSystem::new(target.clone(), design)).unwrap();
        assert!(fit.coeffs.iter().all(|c| c.abs() < 1e-12));
        assert_relative_eq!(fit.mse, target.norm_squared() / 30.0, max_relative = 1e-12);
    }

    #[test]
    fn manufactured_regression_recovers_coefficients() {
        let design = random_matrix(500, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = DVector::from_fn(500, |_, _| 1e-6 * rng.sample::<f64, _>(rand_distr_normal()));
        let target = design.column(0) * 3.0 - design.column(1) * 2.0 + noise;
        let fit = least_squares(&LinearSystem::new(target, design)).unwrap();
        assert!((fit.coeffs[0] - 3.0).abs() < 1e-4);
        assert!((fit.coeffs[1] + 2.0).abs() < 1e-4);
    }

    /// Box-Muller through the standard uniform; avoids a distribution crate.
    fn rand_distr_normal() -> impl rand::distributions::Distribution<f64> {
        struct Normal;
        impl rand::distributions::Distribution<f64> for Normal {
            fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
        }
        Normal
    }

    #[test]
    fn structural_errors() {
        let sys = LinearSystem::new(DVector::zeros(2), DMatrix::zeros(2, 3));
        assert!(matches!(least_squares(&sys), Err(RegressionError::Underdetermined { rows: 2, cols: 3 })));
        let sys = LinearSystem::new(DVector::zeros(3), DMatrix::zeros(2, 1));
        assert!(matches!(least_squares(&sys), Err(RegressionError::RowMismatch { .. })));
    }

    #[test]
    fn duplicate_columns_flag_and_min_norm() {
        let c = random_matrix(40, 1, 5);
        let design = DMatrix::from_columns(&[c.column(0), c.column(0)]);
        let target = c.column(0) * 2.0;
        let fit = least_squares(&LinearSystem::new(target, design)).unwrap();
        assert!(fit.condition_flag);
        assert_relative_eq!(fit.coeffs[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coeffs[1], 1.0, epsilon = 1e-10);
        assert!(fit.mse < 1e-24);
    }

    #[test]
    fn scaling_does_not_trigger_flag() {
        let mut design = random_matrix(100, 3, 6);
        design.column_mut(0).scale_mut(1e8);
        design.column_mut(2).scale_mut(1e-6);
        let target = design.column(0) * 1e-8 + design.column(2) * 1e6;
        let fit = least_squares(&LinearSystem::new(target, design)).unwrap();
        assert!(!fit.condition_flag);
        assert_relative_eq!(fit.coeffs[0], 1e-8, max_relative = 1e-9);
        assert_relative_eq!(fit.coeffs[2], 1e6, max_relative = 1e-9);
    }

    #[test]
    fn library_sizes_and_names() {
        let names = |l: &FixedLibrary| l.terms().iter().map(|t| t.to_string()).collect::<Vec<_>>();
        let b = FixedLibrary::burgers();
        assert_eq!(b.len(), 12);
        assert_eq!(
            names(&b),
            [
                "1", "u", "u*u", "u_x", "u*u_x", "u*u*u_x", "u_xx", "u*u_xx", "u*u*u_xx", "u_xxx", "u*u_xxx",
                "u*u*u_xxx"
            ]
        );
        let ci = FixedLibrary::chaffee_infante();
        assert_eq!(ci.len(), 16);
        assert_eq!(names(&ci)[..5], ["1", "u", "u*u", "u*u*u", "u_x"]);
        assert_eq!(names(&ci)[15], "u*u*u*u_xxx");
        let g = ci.genome(1, &[1, 3, 8]).unwrap();
        assert_eq!(g, "[1],{[0],[0,0,0],[2]}".parse().unwrap());
        assert!(ci.genome(1, &[0, 1]).is_none());
        assert!(ci.genome(1, &[]).is_none());
    }

    #[test]
    fn library_columns_match_terms() {
        let data = random_dataset(10, 7);
        let cols = FixedLibrary::burgers().columns(&data).unwrap();
        let u = data.spatial(0).unwrap();
        let uxx = data.spatial(2).unwrap();
        for i in 0..10 {
            assert_eq!(cols[(i, 0)], 1.0);
            assert_eq!(cols[(i, 2)], u[i] * u[i]);
            assert_eq!(cols[(i, 8)], u[i] * u[i] * uxx[i]);
        }
    }

    #[test]
    fn degenerate_stridge_is_least_squares() {
        let design = random_matrix(60, 5, 8);
        let target = DVector::from_fn(60, |i, _| (i as f64).sin());
        let params = StridgeParams {
            ridge_lambda: 0.0,
            threshold: 0.0,
            max_iters: 10,
        };
        let sparse = stridge(&design, &target, &params).unwrap();
        let ols = least_squares(&LinearSystem::new(target, design)).unwrap();
        assert_eq!(sparse.support, vec![0, 1, 2, 3, 4]);
        for (a, b) in sparse.fit.coeffs.iter().zip(&ols.coeffs) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn all_columns_eliminated() {
        let design = random_matrix(50, 3, 9);
        let target = DVector::from_fn(50, |i, _| (i as f64 * 0.3).cos());
        let params = StridgeParams {
            ridge_lambda: 0.0,
            threshold: 1e3,
            max_iters: 10,
        };
        let fit = stridge(&design, &target, &params).unwrap();
        assert!(fit.support.is_empty());
        assert!(fit.fit.coeffs.iter().all(|&c| c == 0.0));
        assert_relative_eq!(fit.fit.mse, target.norm_squared() / 50.0);
    }

    /// Best two-column subset by exhaustive least squares.
    fn brute_force_pair(columns: &DMatrix<f64>, target: &DVector<f64>) -> Vec<usize> {
        let m = columns.ncols();
        let mut best = (f64::INFINITY, vec![]);
        for i in 0..m {
            for j in i + 1..m {
                let sub = columns.select_columns([i, j].iter());
                let fit = least_squares(&LinearSystem::new(target.clone(), sub)).unwrap();
                if fit.mse < best.0 {
                    best = (fit.mse, vec![i, j]);
                }
            }
        }
        best.1
    }

    #[test]
    fn sparse_support_recovery() {
        let data = random_dataset(400, 10);
        let columns = FixedLibrary::burgers().columns(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = DVector::from_fn(400, |_, _| 1e-4 * rng.sample::<f64, _>(rand_distr_normal()));
        let target = columns.column(4) * -1.0 + columns.column(6) * 0.1 + noise;
        let oracle = brute_force_pair(&columns, &target);
        assert_eq!(oracle, vec![4, 6]);
        let fit = StridgeSweep::default().run(&columns, &target).unwrap();
        assert_eq!(fit.support, oracle);
        assert!((fit.fit.coeffs[4] + 1.0).abs() < 1e-3);
        assert!((fit.fit.coeffs[6] - 0.1).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn residual_is_orthogonal_to_columns(seed in any::<u64>(), cols in 1usize..8) {
            let mut design = random_matrix(50, cols, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for j in 0..cols {
                let s = 10f64.powf(rng.gen_range(-4.0..4.0));
                design.column_mut(j).scale_mut(s);
            }
            let target = DVector::from_fn(50, |_, _| rng.gen_range(-1.0..1.0));
            let fit = least_squares(&LinearSystem::new(target.clone(), design.clone())).unwrap();
            let residual = &target - &design * DVector::from_vec(fit.coeffs);
            for c in design.column_iter() {
                prop_assert!((c.dot(&residual) / c.norm()).abs() <= 1e-8 * target.norm());
            }
        }

        #[test]
        fn stridge_support_is_monotone(seed in any::<u64>(), threshold in 0.0f64..0.5, lambda in 0.0f64..1.0) {
            let design = random_matrix(40, 8, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let target = DVector::from_fn(40, |_, _| rng.gen_range(-1.0..1.0));
            let fit = stridge(&design, &target, &StridgeParams { ridge_lambda: lambda, threshold, max_iters: 20 }).unwrap();
            prop_assert!(fit.support_history.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(*fit.support_history.last().unwrap(), fit.support.len());
            for (j, c) in fit.fit.coeffs.iter().enumerate() {
                prop_assert!(fit.support.contains(&j) || *c == 0.0);
            }
        }

        #[test]
        fn threshold_above_ols_empties_support(seed in any::<u64>(), lambda in 0.0f64..1.0) {
            let design = random_matrix(40, 6, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
            let target = DVector::from_fn(40, |_, _| rng.gen_range(-1.0..1.0));
            // The threshold acts on the normalized problem; the ridge solution's
            // norm never exceeds the OLS solution's.
            let mut a = design.clone();
            for mut c in a.column_iter_mut() {
                let n = c.norm();
                c.unscale_mut(n);
            }
            let ols = solve(&a, &(&target / target.norm())).coeffs;
            let fit = stridge(&design, &target, &StridgeParams {
                ridge_lambda: lambda,
                threshold: ols.norm() * 1.000001,
                max_iters: 10,
            }).unwrap();
            prop_assert!(fit.support.is_empty());
        }
    }
}
