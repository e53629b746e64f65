//! Correlation functions over mixed inputs.
//!
//! Continuous features use the squared-exponential correlation on min-max
//! scaled coordinates. Each categorical feature carries an `L x L` level
//! correlation matrix whose structure depends on the categorical kernel:
//!
//! * `gd`: Gower-distance mismatch under an exponential kernel, one `theta`
//!   per feature: `exp(-theta)` off the diagonal.
//! * `cr`: continuous relaxation, levels one-hot expanded with a `theta` per
//!   level: `exp(-theta_i - theta_j)` off the diagonal.
//! * `hh`: homoscedastic hypersphere, `R = Λ Λᵀ` with `Λ` lower triangular
//!   with unit-norm rows parameterized by `L(L-1)/2` angles in `(0, π)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::FeatureSpace;

pub const DEFAULT_NUGGET: f64 = 1e-10;
pub const MAX_NUGGET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousKernel {
    #[default]
    SquaredExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoricalKernel {
    Gd,
    Cr,
    Hh,
}

impl fmt::Display for CategoricalKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CategoricalKernel::Gd => "gd",
            CategoricalKernel::Cr => "cr",
            CategoricalKernel::Hh => "hh",
        })
    }
}

impl FromStr for CategoricalKernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(CategoricalKernel::Gd),
            "cr" => Ok(CategoricalKernel::Cr),
            "hh" => Ok(CategoricalKernel::Hh),
            other => Err(Error::validation(format!("unknown kernel {other} (expected gd|cr|hh)"))),
        }
    }
}

/// Hyperparameters of one categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum CategoricalParams {
    Gd { theta: f64 },
    Cr { theta: Vec<f64> },
    Hh { angles: Vec<f64> },
}

impl CategoricalParams {
    pub fn initial(kernel: CategoricalKernel, n_levels: usize) -> Self {
        match kernel {
            CategoricalKernel::Gd => CategoricalParams::Gd { theta: 1.0 },
            CategoricalKernel::Cr => CategoricalParams::Cr { theta: vec![1.0; n_levels] },
            CategoricalKernel::Hh => CategoricalParams::Hh {
                angles: vec![std::f64::consts::FRAC_PI_2; n_levels * (n_levels - 1) / 2],
            },
        }
    }

    pub fn kernel(&self) -> CategoricalKernel {
        match self {
            CategoricalParams::Gd { .. } => CategoricalKernel::Gd,
            CategoricalParams::Cr { .. } => CategoricalKernel::Cr,
            CategoricalParams::Hh { .. } => CategoricalKernel::Hh,
        }
    }

    pub fn check(&self, n_levels: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::validation(msg));
        match self {
            CategoricalParams::Gd { theta } => {
                if !(*theta > 0.0 && theta.is_finite()) {
                    return bad(format!("gd theta must be positive, got {theta}"));
                }
            }
            CategoricalParams::Cr { theta } => {
                if theta.len() != n_levels {
                    return bad(format!("cr needs {n_levels} thetas, got {}", theta.len()));
                }
                if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return bad("cr thetas must be positive".into());
                }
            }
            CategoricalParams::Hh { angles } => {
                let want = n_levels * (n_levels - 1) / 2;
                if angles.len() != want {
                    return bad(format!("hh needs {want} angles, got {}", angles.len()));
                }
                if angles.iter().any(|a| !(*a > 0.0 && *a < std::f64::consts::PI)) {
                    return bad("hh angles must lie in (0, pi)".into());
                }
            }
        }
        Ok(())
    }

    /// Correlation between levels `i` and `j`.
    pub fn corr(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        match self {
            CategoricalParams::Gd { theta } => (-theta).exp(),
            CategoricalParams::Cr { theta } => (-theta[i] - theta[j]).exp(),
            CategoricalParams::Hh { angles } => {
                let (a, b) = (hypersphere_row(angles, i), hypersphere_row(angles, j));
                a.iter().zip(&b).map(|(x, y)| x * y).sum()
            }
        }
    }

    /// Dense `L x L` level correlation matrix, row-major.
    pub fn level_matrix(&self, n_levels: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_levels * n_levels];
        match self {
            CategoricalParams::Hh { angles } => {
                let rows: Vec<Vec<f64>> = (0..n_levels).map(|i| hypersphere_row(angles, i)).collect();
                for i in 0..n_levels {
                    for j in 0..=i {
                        let v: f64 = rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y).sum();
                        out[i * n_levels + j] = v;
                        out[j * n_levels + i] = v;
                    }
                    out[i * n_levels + i] = 1.0;
                }
            }
            _ => {
                for i in 0..n_levels {
                    for j in 0..n_levels {
                        out[i * n_levels + j] = self.corr(i, j);
                    }
                }
            }
        }
        out
    }
}

/// Row `i` of the hypersphere factor `Λ` (length `i + 1`).
///
/// Row 0 is `(1)`. Row `i` uses angles `φ_1..φ_i` stored at offset
/// `i(i-1)/2`: `Λ_i0 = cos φ_1`, `Λ_ik = cos φ_{k+1} Π_{j≤k} sin φ_j`,
/// `Λ_ii = Π_{j≤i} sin φ_j`.
pub fn hypersphere_row(angles: &[f64], i: usize) -> Vec<f64> {
    let phi = &angles[i * i.saturating_sub(1) / 2..i * i.saturating_sub(1) / 2 + i];
    let mut row = Vec::with_capacity(i + 1);
    let mut sin_prod = 1.0;
    for &a in phi {
        row.push(a.cos() * sin_prod);
        sin_prod *= a.sin();
    }
    row.push(sin_prod);
    row
}

/// Hypersphere angles reproducing a given positive-definite correlation
/// matrix (row-major, unit diagonal). Inverse of [`hypersphere_row`].
pub fn angles_from_correlation(matrix: &[f64], n_levels: usize) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(n_levels, n_levels, matrix);
    let chol = Cholesky::new(m).ok_or_else(|| Error::numerical("correlation matrix is not positive definite"))?;
    let l = chol.l();
    let mut angles = Vec::with_capacity(n_levels * (n_levels - 1) / 2);
    for i in 1..n_levels {
        let norm: f64 = (0..=i).map(|k| l[(i, k)] * l[(i, k)]).sum::<f64>().sqrt();
        let mut sin_prod = 1.0;
        for k in 0..i {
            let c = if sin_prod > 1e-300 { (l[(i, k)] / norm / sin_prod).clamp(-1.0, 1.0) } else { 0.0 };
            let a = c.acos();
            angles.push(a);
            sin_prod *= a.sin();
        }
    }
    Ok(angles)
}

/// Hyperparameters of the mixed product kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub continuous_kernel: ContinuousKernel,
    pub categorical_kernel: CategoricalKernel,
    /// One positive length-scale weight per continuous feature, in space order.
    pub theta_cont: Vec<f64>,
    /// One block per categorical feature, in space order.
    pub theta_cat: Vec<CategoricalParams>,
    pub nugget: f64,
}

impl KernelConfig {
    /// Untrained template: all `theta = 1`, hypersphere angles at `π/2`.
    pub fn initial(space: &FeatureSpace, kernel: CategoricalKernel) -> Self {
        KernelConfig {
            continuous_kernel: ContinuousKernel::SquaredExponential,
            categorical_kernel: kernel,
            theta_cont: vec![1.0; space.continuous_indices().len()],
            theta_cat: space
                .categorical_indices()
                .into_iter()
                .map(|i| CategoricalParams::initial(kernel, space.spec(i).levels().unwrap().len()))
                .collect(),
            nugget: DEFAULT_NUGGET,
        }
    }

    pub fn check(&self, space: &FeatureSpace) -> Result<()> {
        let cont = space.continuous_indices();
        let cat = space.categorical_indices();
        if self.theta_cont.len() != cont.len() {
            return Err(Error::validation(format!(
                "kernel has {} continuous thetas for {} continuous features",
                self.theta_cont.len(),
                cont.len()
            )));
        }
        if self.theta_cont.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::validation("continuous thetas must be positive"));
        }
        if self.theta_cat.len() != cat.len() {
            return Err(Error::validation(format!(
                "kernel has {} categorical blocks for {} categorical features",
                self.theta_cat.len(),
                cat.len()
            )));
        }
        for (block, &f) in self.theta_cat.iter().zip(&cat) {
            if block.kernel() != self.categorical_kernel {
                return Err(Error::validation("categorical block does not match the kernel choice"));
            }
            block.check(space.spec(f).levels().unwrap().len())?;
        }
        if !(self.nugget > 0.0 && self.nugget.is_finite()) {
            return Err(Error::validation("nugget must be positive"));
        }
        Ok(())
    }

    /// Level correlation matrix of the named categorical feature.
    pub fn level_correlation(&self, space: &FeatureSpace, feature: &str) -> Result<LevelCorrelationMatrix> {
        let idx = space.index_of(feature)?;
        let levels = space
            .spec(idx)
            .levels()
            .ok_or_else(|| Error::validation(format!("{feature} is not categorical")))?;
        let block = space.categorical_indices().iter().position(|&i| i == idx).unwrap();
        let n = levels.len();
        let flat = self.theta_cat[block].level_matrix(n);
        Ok(LevelCorrelationMatrix {
            feature: feature.to_string(),
            kernel: self.categorical_kernel,
            levels: levels.to_vec(),
            matrix: flat.chunks(n).map(|r| r.to_vec()).collect(),
        })
    }
}

/// Squared-exponential correlation `exp(-Σ θ_d (u_d - v_d)²)`.
pub fn corr_continuous(u: &[f64], v: &[f64], theta: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    debug_assert_eq!(u.len(), theta.len());
    let s: f64 = u.iter().zip(v).zip(theta).map(|((a, b), t)| t * (a - b) * (a - b)).sum();
    (-s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCorrelationMatrix {
    pub feature: String,
    pub kernel: CategoricalKernel,
    pub levels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl LevelCorrelationMatrix {
    /// `L x L` CSV with a leading `level` column and level labels as header.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["level".to_string()];
        header.extend(self.levels.iter().cloned());
        wtr.write_record(&header)?;
        for (label, row) in self.levels.iter().zip(&self.matrix) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        Ok(String::from_utf8(wtr.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }
}

/// Correlation evaluator with level tables materialized once per
/// hyperparameter setting.
#[derive(Debug, Clone)]
pub struct Correlator {
    cont: Vec<usize>,
    cat: Vec<usize>,
    theta_cont: Vec<f64>,
    tables: Vec<(usize, Vec<f64>)>,
}

impl Correlator {
    pub fn new(space: &FeatureSpace, config: &KernelConfig) -> Self {
        let cat = space.categorical_indices();
        let tables = cat
            .iter()
            .zip(&config.theta_cat)
            .map(|(&f, block)| {
                let n = space.spec(f).levels().unwrap().len();
                (n, block.level_matrix(n))
            })
            .collect();
        Correlator { cont: space.continuous_indices(), cat, theta_cont: config.theta_cont.clone(), tables }
    }

    /// Correlation between two encoded points.
    pub fn corr(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&d, t) in self.cont.iter().zip(&self.theta_cont) {
            let diff = u[d] - v[d];
            s += t * diff * diff;
        }
        let mut r = (-s).exp();
        for (&f, (n, table)) in self.cat.iter().zip(&self.tables) {
            r *= table[u[f] as usize * n + v[f] as usize];
        }
        r
    }

    pub fn corr_row(&self, x: &[f64], train: &[Vec<f64>]) -> Vec<f64> {
        train.iter().map(|t| self.corr(x, t)).collect()
    }
}

/// `K[i][j] = σ² · corr(x_i, x_j) + nugget · 1[i = j]`.
pub fn build_covariance(space: &FeatureSpace, x: &[Vec<f64>], config: &KernelConfig, sigma2: f64) -> DMatrix<f64> {
    let c = Correlator::new(space, config);
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = sigma2 * c.corr(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] = sigma2 + config.nugget;
    }
    k
}

/// Cached pairwise geometry of a fixed design, so that correlation matrices
/// for many hyperparameter settings are cheap to assemble.
#[derive(Debug, Clone)]
pub struct PairCache {
    n: usize,
    n_cont: usize,
    sqdiff: Vec<f64>,
    cat_pairs: Vec<usize>,
    n_cat: usize,
}

impl PairCache {
    pub fn new(space: &FeatureSpace, x: &[Vec<f64>]) -> Self {
        let cont = space.continuous_indices();
        let cat = space.categorical_indices();
        let n = x.len();
        let pairs = n * n.saturating_sub(1) / 2;
        let mut sqdiff = Vec::with_capacity(pairs * cont.len());
        let mut cat_pairs = Vec::with_capacity(pairs * cat.len());
        for i in 0..n {
            for j in 0..i {
                for &d in &cont {
                    let diff = x[i][d] - x[j][d];
                    sqdiff.push(diff * diff);
                }
                for &f in &cat {
                    let levels = space.spec(f).levels().unwrap().len();
                    cat_pairs.push(x[i][f] as usize * levels + x[j][f] as usize);
                }
            }
        }
        PairCache { n, n_cont: cont.len(), sqdiff, cat_pairs, n_cat: cat.len() }
    }

    /// Correlation matrix plus `nugget` on the diagonal.
    pub fn correlation(&self, space: &FeatureSpace, config: &KernelConfig, nugget: f64) -> DMatrix<f64> {
        let tables: Vec<Vec<f64>> = space
            .categorical_indices()
            .iter()
            .zip(&config.theta_cat)
            .map(|(&f, b)| b.level_matrix(space.spec(f).levels().unwrap().len()))
            .collect();
        let n = self.n;
        let mut r = DMatrix::zeros(n, n);
        let mut p = 0;
        for i in 0..n {
            for j in 0..i {
                let d = &self.sqdiff[p * self.n_cont..(p + 1) * self.n_cont];
                let s: f64 = d.iter().zip(&config.theta_cont).map(|(a, t)| a * t).sum();
                let mut v = (-s).exp();
                for (c, table) in tables.iter().enumerate() {
                    v *= table[self.cat_pairs[p * self.n_cat + c]];
                }
                r[(i, j)] = v;
                r[(j, i)] = v;
                p += 1;
            }
            r[(i, i)] = 1.0 + nugget;
        }
        r
    }
}

/// Cholesky factorization with nugget escalation: starting from `nugget`,
/// multiply by 10 on failure up to [`MAX_NUGGET`]. `base` must carry a unit
/// diagonal without nugget; returns the factor and the nugget that worked.
pub fn factorize_with_nugget(base: &DMatrix<f64>, nugget: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut nu = nugget;
    loop {
        let mut m = base.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += nu;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok((ch, nu));
        }
        if nu >= MAX_NUGGET {
            return Err(Error::numerical(format!(
                "covariance matrix not positive definite even with nugget {nu:e}"
            )));
        }
        nu = (nu * 10.0).min(MAX_NUGGET);
    }
}
