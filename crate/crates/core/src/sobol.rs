//! Monte Carlo Sobol' indices (Jansen estimators) over continuous spaces.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdp::{ImportanceMethod, ImportanceTable};
use crate::rng::{self, streams};
use crate::space::{FeatureSpace, Point};
use crate::stats;
use crate::surrogate::Surrogate;

pub const DEFAULT_N_BASE: usize = 1 << 13;
/// Monte Carlo slack on the [0, 1] range of the estimates.
pub const MC_SLACK: f64 = 0.05;

/// Base matrices `A`, `B` and the hybrids `AB_i` (A with column `i` from B),
/// in encoded unit coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliDesign {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub ab: Vec<Vec<Vec<f64>>>,
}

impl SaltelliDesign {
    pub fn matrix_count(&self) -> usize {
        2 + self.ab.len()
    }

    pub fn decode(space: &FeatureSpace, rows: &[Vec<f64>]) -> Vec<Point> {
        rows.iter().map(|r| space.decode(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub features: Vec<String>,
    pub first: Vec<f64>,
    pub total: Vec<f64>,
    pub n_base: usize,
    pub seed: u64,
    pub total_variance: f64,
    /// Set when the output variance vanished; indices are then all zero.
    pub zero_variance: bool,
}

pub fn require_continuous(space: &FeatureSpace) -> Result<()> {
    if space.has_categorical() {
        let names: Vec<&str> = space.categorical_indices().iter().map(|&j| space.spec(j).name.as_str()).collect();
        return Err(Error::validation(format!(
            "Sobol' indices are only defined here for continuous inputs; categorical features: {}",
            names.join(", ")
        )));
    }
    Ok(())
}

/// Random Latin hypercube in `[0, 1)^m`.
fn lhs_unit<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; m]; n];
    for j in 0..m {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (row, s) in rows.iter_mut().zip(strata) {
            row[j] = ((s as f64 + rng.random::<f64>()) / n as f64).min(1.0);
        }
    }
    rows
}

/// `A` and `B` are independent random Latin hypercubes (uniform marginals).
pub fn saltelli_matrices(space: &FeatureSpace, n_base: usize, seed: u64) -> Result<SaltelliDesign> {
    require_continuous(space)?;
    if n_base < 2 {
        return Err(Error::validation("n_base must be at least 2"));
    }
    let m = space.len();
    let mut rng = rng::stream(seed, streams::SOBOL);
    let a = lhs_unit(n_base, m, &mut rng);
    let b = lhs_unit(n_base, m, &mut rng);
    let ab = (0..m)
        .map(|i| {
            a.iter()
                .zip(&b)
                .map(|(ra, rb)| {
                    let mut r = ra.clone();
                    r[i] = rb[i];
                    r
                })
                .collect()
        })
        .collect();
    Ok(SaltelliDesign { a, b, ab })
}

/// First-order and total indices of `model` under independent uniform inputs;
/// uses `n_base * (m + 2)` evaluations.
pub fn sobol_indices(model: &dyn Surrogate, n_base: usize, seed: u64) -> Result<SobolResult> {
    let space = model.space();
    let d = saltelli_matrices(space, n_base, seed)?;
    let eval = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().map(|r| model.predict_encoded(r)).collect() };
    let fa = eval(&d.a);
    let fb = eval(&d.b);
    let both: Vec<f64> = fa.iter().chain(&fb).copied().collect();
    let mean = stats::mean(&both);
    let sq: Vec<f64> = both.iter().map(|y| (y - mean) * (y - mean)).collect();
    let var = stats::mean(&sq);
    let scale = both.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    let m = space.len();
    let features = space.names().map(String::from).collect();
    if var.is_nan() || var <= (1e-12 * scale).powi(2) {
        return Ok(SobolResult {
            features,
            first: vec![0.0; m],
            total: vec![0.0; m],
            n_base,
            seed,
            total_variance: var,
            zero_variance: true,
        });
    }
    let mut first = Vec::with_capacity(m);
    let mut total = Vec::with_capacity(m);
    for ab in &d.ab {
        let fab = eval(ab);
        let db: Vec<f64> = fb.iter().zip(&fab).map(|(x, y)| (x - y) * (x - y)).collect();
        let da: Vec<f64> = fa.iter().zip(&fab).map(|(x, y)| (x - y) * (x - y)).collect();
        first.push((var - 0.5 * stats::mean(&db)) / var);
        total.push(0.5 * stats::mean(&da) / var);
    }
    Ok(SobolResult { features, first, total, n_base, seed, total_variance: var, zero_variance: false })
}

impl SobolResult {
    pub fn first_table(&self) -> ImportanceTable {
        ImportanceTable { method: ImportanceMethod::SobolFirst, features: self.features.clone(), values: self.first.clone() }
    }

    pub fn total_table(&self) -> ImportanceTable {
        ImportanceTable { method: ImportanceMethod::SobolTotal, features: self.features.clone(), values: self.total.clone() }
    }

    /// `feature,S1,ST` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["feature", "S1", "ST"])?;
        for ((f, s1), st) in self.features.iter().zip(&self.first).zip(&self.total) {
            wtr.write_record([f.clone(), s1.to_string(), st.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::FeatureSpec;
    use crate::surrogate::AnalyticModel;

    fn unit(m: usize) -> FeatureSpace {
        FeatureSpace::new((0..m).map(|j| FeatureSpec::continuous(format!("x{}", j + 1), 0.0, 1.0)).collect()).unwrap()
    }

    fn additive(p: &Point) -> f64 {
        p[0].as_real().unwrap() + 2.0 * p[1].as_real().unwrap()
    }

    #[test]
    fn design_shape() {
        let space = FeatureSpace::new(vec![
            FeatureSpec::continuous("a", -3.0, 1.0),
            FeatureSpec::continuous("b", 10.0, 20.0),
        ])
        .unwrap();
        let d = saltelli_matrices(&space, 4, 1).unwrap();
        assert_eq!(d.matrix_count(), 4);
        for (i, ab) in d.ab.iter().enumerate() {
            assert_eq!(ab.len(), 4);
            for ((r, a), b) in ab.iter().zip(&d.a).zip(&d.b) {
                for j in 0..2 {
                    assert_eq!(r[j], if j == i { b[j] } else { a[j] });
                }
            }
        }
        for p in SaltelliDesign::decode(&space, &d.a).iter().chain(&SaltelliDesign::decode(&space, &d.b)) {
            assert!(space.validate_point(p).is_empty());
        }
        assert_eq!(d, saltelli_matrices(&space, 4, 1).unwrap());
        assert!(saltelli_matrices(&space, 1, 1).is_err());
    }

    #[test]
    fn rejects_categorical() {
        let space = FeatureSpace::new(vec![
            FeatureSpec::continuous("a", 0.0, 1.0),
            FeatureSpec::categorical("c", ["u", "v"]),
        ])
        .unwrap();
        let err = saltelli_matrices(&space, 8, 0).unwrap_err();
        assert!(err.to_string().contains("continuous") && err.to_string().contains('c'));
    }

    #[test]
    fn additive_oracle() {
        // Var = 1/12 + 4/12, so S = S_T = (0.2, 0.8)
        let m = AnalyticModel::new(unit(2), additive);
        for seed in 0..10 {
            let r = sobol_indices(&m, 1 << 13, seed).unwrap();
            for (est, want) in r.first.iter().chain(&r.total).zip([0.2, 0.8, 0.2, 0.8]) {
                assert!((est - want).abs() < 0.02, "seed {seed}: {r:?}");
            }
            for i in 0..2 {
                assert!((r.total[i] - r.first[i]).abs() <= 2.0 * MC_SLACK);
            }
            assert!(!r.zero_variance);
        }
    }

    #[test]
    fn constant_flags_zero_variance() {
        let r = sobol_indices(&AnalyticModel::new(unit(3), |_: &Point| 2.5), 64, 0).unwrap();
        assert!(r.zero_variance);
        assert!(r.first.iter().chain(&r.total).all(|&v| v == 0.0));
    }

    #[test]
    fn interaction_bounds() {
        // x2 and x3 act only through their product
        let m = AnalyticModel::new(unit(3), |p: &Point| {
            let x: Vec<f64> = p.values().iter().map(|v| v.as_real().unwrap()).collect();
            x[0] + 4.0 * (x[1] - 0.5) * (x[2] - 0.5)
        });
        let r = sobol_indices(&m, 4096, 3).unwrap();
        let sum: f64 = r.first.iter().sum();
        assert!(sum <= 1.0 + MC_SLACK);
        for i in 0..3 {
            assert!(r.first[i] >= -MC_SLACK && r.total[i] <= 1.0 + MC_SLACK);
            assert!(r.total[i] >= r.first[i] - 2.0 * MC_SLACK);
        }
        assert!(r.first[2].abs() < MC_SLACK && r.total[2] > 0.05);
    }

    #[test]
    fn spread_shrinks_with_n() {
        let m = AnalyticModel::new(unit(2), |p: &Point| {
            let x = p[0].as_real().unwrap();
            let y = p[1].as_real().unwrap();
            (6.0 * x).sin() + x * y * 3.0
        });
        let spread = |n: usize| {
            let v: Vec<f64> = (0..10).map(|s| sobol_indices(&m, n, s).unwrap().first[1]).collect();
            stats::sample_std(&v)
        };
        assert!(spread(2048) < spread(256));
    }

    #[test]
    fn tables_and_csv() {
        let r = sobol_indices(&AnalyticModel::new(unit(2), additive), 256, 0).unwrap();
        assert_eq!(r.total_table().ranking(), vec!["x2", "x1"]);
        assert_eq!(r.first_table().method, ImportanceMethod::SobolFirst);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("feature,S1,ST\nx1,"));
    }
}
