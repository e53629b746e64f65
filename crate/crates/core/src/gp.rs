//! Ordinary-kriging Gaussian process over mixed inputs.
//!
//! Responses are standardized internally. The constant trend `mu` and the
//! process variance `sigma2` are profiled out of the likelihood in closed
//! form; only kernel hyperparameters are searched, by multi-start bounded
//! Nelder-Mead in a normalized parameter box:
//!
//! * continuous and `gd`/`cr` thetas: `log10 theta` in `[-2, 2]`
//! * `hh` angles: `[ANGLE_MARGIN, π - ANGLE_MARGIN]`

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{factorize_with_nugget, CategoricalParams, Correlator, KernelConfig, PairCache};
use crate::optim::{self, NelderMeadOptions};
use crate::rng::{self, streams};
use crate::space::{FeatureSpace, Point};
use crate::stats;
use crate::surrogate::Surrogate;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const LOG10_THETA_BOUNDS: (f64, f64) = (-2.0, 2.0);
pub const ANGLE_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(y: &[f64]) -> Self {
        let std = stats::sample_std(y);
        Standardizer { mean: stats::mean(y), std: if std > 0.0 { std } else { 1.0 } }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub n_starts: usize,
    /// Objective evaluations per start; `None` scales with the dimension.
    pub max_evals_per_start: Option<usize>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { n_starts: 10, max_evals_per_start: None, seed: 0 }
    }
}

impl FitOptions {
    pub fn with_seed(seed: u64) -> Self {
        FitOptions { seed, ..Default::default() }
    }

    fn budget(&self, dim: usize) -> usize {
        self.max_evals_per_start.unwrap_or(100 + 40 * dim)
    }
}

/// Maps between a [`KernelConfig`] and a point of the unit box searched by
/// the optimizer.
#[derive(Debug, Clone)]
struct ParamLayout {
    template: KernelConfig,
}

impl ParamLayout {
    fn dim(&self) -> usize {
        self.template.theta_cont.len()
            + self
                .template
                .theta_cat
                .iter()
                .map(|b| match b {
                    CategoricalParams::Gd { .. } => 1,
                    CategoricalParams::Cr { theta } => theta.len(),
                    CategoricalParams::Hh { angles } => angles.len(),
                })
                .sum::<usize>()
    }

    fn theta_to_unit(t: f64) -> f64 {
        let (lo, hi) = LOG10_THETA_BOUNDS;
        ((t.log10() - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    fn unit_to_theta(u: f64) -> f64 {
        let (lo, hi) = LOG10_THETA_BOUNDS;
        10f64.powf(lo + u * (hi - lo))
    }

    fn angle_to_unit(a: f64) -> f64 {
        ((a - ANGLE_MARGIN) / (PI - 2.0 * ANGLE_MARGIN)).clamp(0.0, 1.0)
    }

    fn unit_to_angle(u: f64) -> f64 {
        ANGLE_MARGIN + u * (PI - 2.0 * ANGLE_MARGIN)
    }

    fn to_unit(&self, cfg: &KernelConfig) -> Vec<f64> {
        let mut u: Vec<f64> = cfg.theta_cont.iter().map(|&t| Self::theta_to_unit(t)).collect();
        for b in &cfg.theta_cat {
            match b {
                CategoricalParams::Gd { theta } => u.push(Self::theta_to_unit(*theta)),
                CategoricalParams::Cr { theta } => u.extend(theta.iter().map(|&t| Self::theta_to_unit(t))),
                CategoricalParams::Hh { angles } => u.extend(angles.iter().map(|&a| Self::angle_to_unit(a))),
            }
        }
        u
    }

    fn config_at(&self, u: &[f64]) -> KernelConfig {
        let mut cfg = self.template.clone();
        let mut it = u.iter().copied();
        for t in cfg.theta_cont.iter_mut() {
            *t = Self::unit_to_theta(it.next().unwrap());
        }
        for b in cfg.theta_cat.iter_mut() {
            match b {
                CategoricalParams::Gd { theta } => *theta = Self::unit_to_theta(it.next().unwrap()),
                CategoricalParams::Cr { theta } => theta.iter_mut().for_each(|t| *t = Self::unit_to_theta(it.next().unwrap())),
                CategoricalParams::Hh { angles } => angles.iter_mut().for_each(|a| *a = Self::unit_to_angle(it.next().unwrap())),
            }
        }
        cfg
    }
}

/// Concentrated likelihood pieces at one hyperparameter setting.
struct Profiled {
    nll: f64,
    mu: f64,
    sigma2: f64,
    nugget: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn profile(r: &DMatrix<f64>, y: &DVector<f64>, nugget: f64) -> Result<Profiled> {
    let n = y.len();
    if n < 2 {
        return Err(Error::validation("profiled likelihood needs at least 2 observations"));
    }
    let (chol, nugget) = factorize_with_nugget(r, nugget)?;
    let ones = DVector::from_element(n, 1.0);
    let ri_ones = chol.solve(&ones);
    let ri_y = chol.solve(y);
    let mu = ri_y.sum() / ri_ones.sum();
    let resid = y - &ones * mu;
    let alpha = chol.solve(&resid);
    let sigma2 = resid.dot(&alpha) / n as f64;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::numerical(format!("degenerate profiled variance {sigma2:e}")));
    }
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let nll = 0.5 * n as f64 * sigma2.ln() + 0.5 * log_det + 0.5 * n as f64 * (1.0 + (2.0 * PI).ln());
    Ok(Profiled { nll, mu, sigma2, nugget, chol, alpha })
}

/// Gaussian negative log-likelihood at fixed trend and variance:
/// `½ (y-μ)ᵀ(σ²R)⁻¹(y-μ) + ½ log|σ²R| + (n/2) log 2π`, where `r` already
/// carries its nugget.
pub fn nll_fixed(y: &[f64], r: &DMatrix<f64>, mu: f64, sigma2: f64) -> Result<f64> {
    let n = y.len();
    let k = r * sigma2;
    let chol = Cholesky::new(k).ok_or_else(|| Error::numerical("covariance not positive definite"))?;
    let resid = DVector::from_iterator(n, y.iter().map(|v| v - mu));
    let quad = resid.dot(&chol.solve(&resid));
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(0.5 * quad + 0.5 * log_det + 0.5 * n as f64 * (2.0 * PI).ln())
}

/// Negative log marginal likelihood of `data` under `config`, on
/// standardized responses with `mu` and `sigma2` profiled.
pub fn neg_log_likelihood(data: &Dataset, config: &KernelConfig) -> Result<f64> {
    config.check(data.space())?;
    let st = Standardizer::fit(data.responses());
    let y = DVector::from_iterator(data.len(), data.responses().iter().map(|&v| st.forward(v)));
    let cache = PairCache::new(data.space(), &data.encoded());
    let r = cache.correlation(data.space(), config, 0.0);
    Ok(profile(&r, &y, config.nugget)?.nll)
}

/// A fitted surrogate. Immutable; all predictions are pure.
#[derive(Debug, Clone)]
pub struct GpModel {
    space: FeatureSpace,
    config: KernelConfig,
    trend_mu: f64,
    sigma2: f64,
    nll: f64,
    standardizer: Standardizer,
    train: Dataset,
    train_x: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    correlator: Correlator,
}

/// Summary of one optimizer start, reported for transparency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartReport {
    pub index: usize,
    pub nll: Option<f64>,
    pub evals: usize,
}

impl GpModel {
    /// Maximum-likelihood fit by multi-start bounded Nelder-Mead.
    pub fn fit(data: &Dataset, template: &KernelConfig, opts: &FitOptions) -> Result<GpModel> {
        Ok(Self::fit_with_report(data, template, opts)?.0)
    }

    pub fn fit_with_report(
        data: &Dataset,
        template: &KernelConfig,
        opts: &FitOptions,
    ) -> Result<(GpModel, Vec<StartReport>)> {
        if data.len() < 2 {
            return Err(Error::validation("fit needs at least 2 observations"));
        }
        if opts.n_starts == 0 {
            return Err(Error::validation("fit needs at least one optimizer start"));
        }
        let space = data.space();
        template.check(space)?;
        let st = Standardizer::fit(data.responses());
        let y = DVector::from_iterator(data.len(), data.responses().iter().map(|&v| st.forward(v)));
        let train_x = data.encoded();
        let cache = PairCache::new(space, &train_x);
        let layout = ParamLayout { template: template.clone() };
        let dim = layout.dim();

        let objective = |u: &[f64]| -> f64 {
            let cfg = layout.config_at(u);
            let r = cache.correlation(space, &cfg, 0.0);
            profile(&r, &y, cfg.nugget).map(|p| p.nll).unwrap_or(f64::INFINITY)
        };

        let mut rng = rng::stream(opts.seed, streams::FIT_STARTS);
        let nm = NelderMeadOptions { max_evals: opts.budget(dim), ..Default::default() };
        let mut reports = Vec::with_capacity(opts.n_starts);
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for index in 0..opts.n_starts {
            let x0: Vec<f64> = if index == 0 {
                layout.to_unit(template)
            } else {
                (0..dim).map(|_| rng.random::<f64>()).collect()
            };
            let m = optim::minimize(objective, &x0, &nm);
            let ok = m.value.is_finite();
            reports.push(StartReport { index, nll: ok.then_some(m.value), evals: m.evals });
            // strict `<` keeps the lowest start index on ties
            if ok && best.as_ref().is_none_or(|(v, _, _)| m.value < *v) {
                best = Some((m.value, index, m.x));
            }
        }
        let (best_nll, _, mut u) = match best {
            Some(b) => b,
            None => {
                let r = cache.correlation(space, template, 0.0);
                let cause = match profile(&r, &y, template.nugget) {
                    Err(Error::Numerical(m)) => m,
                    Err(e) => e.to_string(),
                    Ok(_) => "non-finite likelihood".to_string(),
                };
                return Err(Error::numerical(format!(
                    "all {} optimizer starts failed on the {}-point design ({cause})",
                    opts.n_starts,
                    data.len()
                )));
            }
        };
        // one more local search from the winner
        let polished = optim::minimize(objective, &u, &nm);
        if polished.value < best_nll {
            u = polished.x;
        }
        let config = layout.config_at(&u);
        Ok((GpModel::assemble(data.clone(), config, st)?, reports))
    }

    /// Rebuild a model from trained hyperparameters (no optimization).
    pub fn from_parts(train: Dataset, config: KernelConfig, standardizer: Standardizer) -> Result<GpModel> {
        config.check(train.space())?;
        GpModel::assemble(train, config, standardizer)
    }

    fn assemble(train: Dataset, mut config: KernelConfig, st: Standardizer) -> Result<GpModel> {
        let space = train.space().clone();
        let y = DVector::from_iterator(train.len(), train.responses().iter().map(|&v| st.forward(v)));
        let train_x = train.encoded();
        let r = PairCache::new(&space, &train_x).correlation(&space, &config, 0.0);
        let p = profile(&r, &y, config.nugget)?;
        config.nugget = p.nugget;
        let correlator = Correlator::new(&space, &config);
        Ok(GpModel {
            space,
            config,
            trend_mu: p.mu,
            sigma2: p.sigma2,
            nll: p.nll,
            standardizer: st,
            train,
            train_x,
            chol: p.chol,
            alpha: p.alpha,
            correlator,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn trend_mu(&self) -> f64 {
        self.trend_mu
    }

    /// Process variance on the standardized scale.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn neg_log_likelihood(&self) -> f64 {
        self.nll
    }

    pub fn standardizer(&self) -> Standardizer {
        self.standardizer
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    /// Lower Cholesky factor of the training correlation matrix (with nugget).
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    fn mean_std_scale(&self, r: &DVector<f64>) -> f64 {
        self.trend_mu + r.dot(&self.alpha)
    }

    pub fn predict_encoded_full(&self, x: &[f64]) -> Prediction {
        let r = DVector::from_vec(self.correlator.corr_row(x, &self.train_x));
        let mean = self.mean_std_scale(&r);
        let v = self.chol.l_dirty().solve_lower_triangular(&r).expect("non-singular factor");
        let var = (self.sigma2 * (1.0 - v.norm_squared())).max(0.0);
        Prediction {
            mean: self.standardizer.inverse(mean),
            variance: var * self.standardizer.std * self.standardizer.std,
        }
    }

    pub fn predict(&self, p: &Point) -> Result<Prediction> {
        Ok(self.predict_encoded_full(&self.space.encode_point(p)?))
    }

    /// `mean ± z_{α/2} · sd` in response units.
    pub fn confidence_interval(&self, p: &Point, alpha: f64) -> Result<(f64, f64)> {
        let pred = self.predict(p)?;
        interval_from_prediction(&pred, alpha)
    }

    /// Raw and standardized (divided by the training response std) RMSE.
    pub fn rmse(&self, data: &Dataset) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(Error::validation("rmse of an empty dataset"));
        }
        let sq: Vec<f64> = data
            .points()
            .iter()
            .zip(data.responses())
            .map(|(p, y)| self.predict_point(p).map(|m| (m - y) * (m - y)))
            .collect::<Result<_>>()?;
        let raw = stats::mean(&sq).sqrt();
        Ok((raw, raw / self.standardizer.std))
    }

    pub fn to_document(&self) -> Result<ModelDocument> {
        Ok(ModelDocument {
            version: MODEL_FORMAT_VERSION,
            space: self.space.clone(),
            kernel: self.config.clone(),
            standardizer: self.standardizer,
            trend_mu: self.trend_mu,
            sigma2: self.sigma2,
            neg_log_likelihood: self.nll,
            train_csv: self.train.to_csv_string()?,
        })
    }

    pub fn from_document(doc: &ModelDocument) -> Result<GpModel> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(version_error(doc.version));
        }
        let train = Dataset::from_csv_str(&doc.space, &doc.train_csv)?;
        GpModel::from_parts(train, doc.kernel.clone(), doc.standardizer)
    }
}

pub fn interval_from_prediction(pred: &Prediction, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let half = stats::normal_critical_value(alpha) * pred.std_dev();
    Ok((pred.mean - half, pred.mean + half))
}

fn version_error(found: u32) -> Error {
    Error::validation(format!("model format version mismatch: expected {MODEL_FORMAT_VERSION}, found {found}"))
}

impl Surrogate for GpModel {
    fn space(&self) -> &FeatureSpace {
        &self.space
    }

    fn predict_encoded(&self, x: &[f64]) -> f64 {
        let r = DVector::from_vec(self.correlator.corr_row(x, &self.train_x));
        self.standardizer.inverse(self.mean_std_scale(&r))
    }
}

/// Persisted form of a [`GpModel`]. The Cholesky factor is recomputed on
/// load from the embedded training data and trained hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub space: FeatureSpace,
    pub kernel: KernelConfig,
    pub standardizer: Standardizer,
    pub trend_mu: f64,
    pub sigma2: f64,
    pub neg_log_likelihood: f64,
    pub train_csv: String,
}

impl ModelDocument {
    /// Parses a model JSON, checking the version before the rest of the schema.
    pub fn from_json(text: &str) -> Result<ModelDocument> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::validation("model file has no version field"))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(version_error(version as u32));
        }
        Ok(serde_json::from_value(raw)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::Problem;
    use crate::kernels::{build_covariance, CategoricalKernel};
    use crate::space::FeatureSpec;

    fn line_data(n: usize, seed: u64) -> Dataset {
        let space = FeatureSpace::new(vec![FeatureSpec::continuous("x", 0.0, 1.0)]).unwrap();
        let pts = space.lhs_sample(n, seed).unwrap();
        let y = pts.iter().map(|p| p[0].as_real().unwrap()).collect();
        Dataset::new(space, pts, y).unwrap()
    }

    fn small_fit(data: &Dataset, kernel: CategoricalKernel) -> GpModel {
        let opts = FitOptions { n_starts: 3, ..FitOptions::with_seed(1) };
        GpModel::fit(data, &KernelConfig::initial(data.space(), kernel), &opts).unwrap()
    }

    #[test]
    fn interpolates_a_line() {
        let m = small_fit(&line_data(10, 2), CategoricalKernel::Gd);
        let test = line_data(20, 99);
        let (_, std_rmse) = m.rmse(&test).unwrap();
        assert!(std_rmse < 1e-3, "{std_rmse}");
    }

    #[test]
    fn reproduces_training_points() {
        let d = Problem::Cantilever.generate_dataset(30, 4).unwrap();
        let m = small_fit(&d, CategoricalKernel::Gd);
        let scale = m.standardizer().std;
        for (p, y) in d.points().iter().zip(d.responses()) {
            let pred = m.predict(p).unwrap();
            assert!((pred.mean - y).abs() < 1e-6 * scale, "{} vs {y}", pred.mean);
            assert!(pred.variance < 1e-6 * m.sigma2() * scale * scale);
        }
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        let d = line_data(6, 3);
        let mut cfg = KernelConfig::initial(d.space(), CategoricalKernel::Gd);
        cfg.theta_cont = vec![1e4];
        let st = Standardizer::fit(d.responses());
        let m = GpModel::from_parts(d.subset(&[0, 1, 2]), cfg, st).unwrap();
        // pick a point far from the three training inputs
        let xs: Vec<f64> = m.train().points().iter().map(|p| p[0].as_real().unwrap()).collect();
        let probe = (0..=100)
            .map(|k| k as f64 / 100.0)
            .max_by(|a, b| {
                let da = xs.iter().map(|x| (x - a).abs()).fold(f64::MAX, f64::min);
                let db = xs.iter().map(|x| (x - b).abs()).fold(f64::MAX, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        let pred = m.predict(&Point::reals(&[probe])).unwrap();
        let s = m.standardizer();
        assert!((pred.mean - s.inverse(m.trend_mu())).abs() < 1e-6 * s.std);
        assert!((pred.variance - m.sigma2() * s.std * s.std).abs() < 1e-6 * s.std * s.std);
    }

    #[test]
    fn cholesky_prediction_matches_dense_solve() {
        let d = Problem::Cantilever.generate_dataset(40, 8).unwrap();
        let m = small_fit(&d, CategoricalKernel::Hh);
        let space = d.space();
        // dense LU solve of the full covariance, no reuse of the factor
        let x = d.encoded();
        let k = build_covariance(space, &x, &KernelConfig { nugget: 0.0, ..m.config().clone() }, 1.0)
            + DMatrix::identity(x.len(), x.len()) * m.config().nugget;
        let st = m.standardizer();
        let y = DVector::from_iterator(d.len(), d.responses().iter().map(|&v| st.forward(v)));
        let ones = DVector::from_element(d.len(), 1.0);
        let lu = k.clone().lu();
        let mu = lu.solve(&y).unwrap().sum() / lu.solve(&ones).unwrap().sum();
        let alpha = lu.solve(&(&y - &ones * mu)).unwrap();
        let sigma2 = (&y - &ones * mu).dot(&alpha) / d.len() as f64;
        let c = Correlator::new(space, m.config());
        let center = Point(vec![15.0.into(), 1.5.into(), "E".into()]);
        for p in [center, d.points()[0].clone()] {
            let xe = space.encode_point(&p).unwrap();
            let r = DVector::from_vec(c.corr_row(&xe, &x));
            let mean = st.inverse(mu + r.dot(&alpha));
            let var = (sigma2 * (1.0 - r.dot(&lu.solve(&r).unwrap()))).max(0.0) * st.std * st.std;
            let pred = m.predict(&p).unwrap();
            assert!((pred.mean - mean).abs() <= 1e-8 * st.std, "{} vs {mean}", pred.mean);
            assert!((pred.variance - var).abs() <= 1e-8 * st.std * st.std);
        }
    }

    #[test]
    fn confidence_interval_properties() {
        let m = small_fit(&line_data(8, 5), CategoricalKernel::Gd);
        let p = Point::reals(&[0.37]);
        let pred = m.predict(&p).unwrap();
        let (lo, hi) = m.confidence_interval(&p, 0.1).unwrap();
        assert!(((hi - lo) / 2.0 - 1.6449 * pred.std_dev()).abs() <= 1e-4 * pred.std_dev() + 1e-300);
        let (lo5, hi5) = m.confidence_interval(&p, 0.05).unwrap();
        if pred.variance > 0.0 {
            assert!(lo5 < lo && hi5 > hi);
        }
        let z = Prediction { mean: 3.0, variance: 0.0 };
        assert_eq!(interval_from_prediction(&z, 0.1).unwrap(), (3.0, 3.0));
        assert!(interval_from_prediction(&z, 1.5).is_err());
    }

    #[test]
    fn nll_single_observation_closed_form() {
        let (y, mu, s2, nu) = (2.0, 0.5, 1.5, 1e-10);
        let r = DMatrix::from_element(1, 1, 1.0 + nu);
        let got = nll_fixed(&[y], &r, mu, s2).unwrap();
        let v = s2 * (1.0 + nu);
        let want = 0.5 * (y - mu) * (y - mu) / v + 0.5 * v.ln() + 0.5 * (2.0 * PI).ln();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn profiled_nll_matches_fixed_form_at_profile() {
        let d = line_data(7, 6);
        let cfg = KernelConfig::initial(d.space(), CategoricalKernel::Gd);
        let m = GpModel::from_parts(d.clone(), cfg.clone(), Standardizer::fit(d.responses())).unwrap();
        let st = m.standardizer();
        let y: Vec<f64> = d.responses().iter().map(|&v| st.forward(v)).collect();
        let r = build_covariance(d.space(), &d.encoded(), &KernelConfig { nugget: m.config().nugget, ..cfg.clone() }, 1.0);
        let fixed = nll_fixed(&y, &r, m.trend_mu(), m.sigma2()).unwrap();
        let profiled = neg_log_likelihood(&d, &cfg).unwrap();
        assert!((fixed - profiled).abs() < 1e-6 * (1.0 + profiled.abs()), "{fixed} vs {profiled}");
    }

    #[test]
    fn nll_finite_with_duplicate_rows() {
        let d = line_data(5, 7);
        let dup = d.subset(&[0, 1, 2, 3, 4, 0, 1]);
        let v = neg_log_likelihood(&dup, &KernelConfig::initial(dup.space(), CategoricalKernel::Gd)).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn optimum_is_locally_optimal() {
        let d = Problem::Cantilever.generate_dataset(30, 12).unwrap();
        let m = small_fit(&d, CategoricalKernel::Gd);
        let best = neg_log_likelihood(&d, m.config()).unwrap();
        let tol = 1e-4 * (1.0 + best.abs());
        for i in 0..m.config().theta_cont.len() {
            for f in [0.8, 1.2] {
                let mut cfg = m.config().clone();
                let t = cfg.theta_cont[i] * f;
                let (lo, hi) = LOG10_THETA_BOUNDS;
                if t.log10() < lo || t.log10() > hi {
                    continue;
                }
                cfg.theta_cont[i] = t;
                let v = neg_log_likelihood(&d, &cfg).unwrap();
                assert!(v >= best - tol, "theta[{i}]*{f}: {v} < {best}");
            }
        }
    }

    #[test]
    fn affine_response_equivariance() {
        let d = Problem::Cantilever.generate_dataset(16, 2).unwrap();
        let (a, b) = (3.0, -7.5);
        let scaled = Dataset::new(
            d.space().clone(),
            d.points().to_vec(),
            d.responses().iter().map(|y| a * y + b).collect(),
        )
        .unwrap();
        let m1 = small_fit(&d, CategoricalKernel::Cr);
        let m2 = small_fit(&scaled, CategoricalKernel::Cr);
        for p in d.space().lhs_sample(5, 1).unwrap() {
            let (p1, p2) = (m1.predict(&p).unwrap(), m2.predict(&p).unwrap());
            let s = m2.standardizer().std;
            assert!((p2.mean - (a * p1.mean + b)).abs() < 1e-6 * s);
            assert!((p2.variance - a * a * p1.variance).abs() < 1e-6 * s * s);
        }
    }

    #[test]
    fn document_round_trip_and_version_check() {
        let d = line_data(6, 1);
        let m = small_fit(&d, CategoricalKernel::Gd);
        let doc = m.to_document().unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        let back = GpModel::from_document(&ModelDocument::from_json(&text).unwrap()).unwrap();
        let p = Point::reals(&[0.123]);
        assert_eq!(m.predict(&p).unwrap(), back.predict(&p).unwrap());
        let bad = text.replacen("\"version\":1", "\"version\":7", 1);
        let err = ModelDocument::from_json(&bad).unwrap_err();
        assert_eq!(err.to_string(), "validation error: model format version mismatch: expected 1, found 7");
    }

    #[test]
    fn fit_is_deterministic() {
        let d = Problem::Cantilever.generate_dataset(24, 5).unwrap();
        let a = small_fit(&d, CategoricalKernel::Hh);
        let b = small_fit(&d, CategoricalKernel::Hh);
        assert_eq!(a.config(), b.config());
    }

    #[test]
    fn fit_rejects_tiny_data() {
        let d = line_data(2, 1).subset(&[0]);
        let cfg = KernelConfig::initial(d.space(), CategoricalKernel::Gd);
        assert!(GpModel::fit(&d, &cfg, &FitOptions::default()).is_err());
    }
}
