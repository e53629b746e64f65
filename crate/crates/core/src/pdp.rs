//! Partial dependence, ICE curves and PD-based importance.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::space::{FeatureKind, FeatureSpace, Value};
use crate::stats::{self, FiveNumber};
use crate::surrogate::Surrogate;

pub const DEFAULT_GRID_SIZE: usize = 50;
/// Number of ICE curves written by the exporters.
pub const ICE_EXPORT_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdResult {
    pub features: Vec<String>,
    /// One entry per grid node, holding the values of `features`.
    pub grid: Vec<Vec<Value>>,
    pub pd: Vec<f64>,
    /// `ice[i][g]`: prediction for background row `i` at grid node `g`.
    pub ice: Vec<Vec<f64>>,
    pub background: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceMethod {
    Pd,
    Shap,
    SobolFirst,
    SobolTotal,
}

impl fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImportanceMethod::Pd => "pd",
            ImportanceMethod::Shap => "shap",
            ImportanceMethod::SobolFirst => "sobol-first",
            ImportanceMethod::SobolTotal => "sobol-total",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub method: ImportanceMethod,
    pub features: Vec<String>,
    pub values: Vec<f64>,
}

impl ImportanceTable {
    pub fn get(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|i| self.values[i])
    }

    /// Feature names by decreasing importance (ties keep declaration order).
    pub fn ranking(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]));
        idx.into_iter().map(|i| self.features[i].as_str()).collect()
    }

    /// 1-based rank of `feature`.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranking().iter().position(|f| *f == feature).map(|r| r + 1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["method", "feature", "importance"])?;
        for (f, v) in self.features.iter().zip(&self.values) {
            wtr.write_record([self.method.to_string(), f.clone(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Grid along one feature as `(encoded, decoded)` pairs: `grid_size` evenly
/// spaced values over the bounds (both ends included) or every level.
pub fn feature_grid(space: &FeatureSpace, feature: usize, grid_size: usize) -> Result<Vec<(f64, Value)>> {
    match &space.spec(feature).kind {
        FeatureKind::Continuous { lower, upper } => {
            if grid_size < 2 {
                return Err(Error::validation("grid size must be at least 2"));
            }
            Ok((0..grid_size)
                .map(|k| {
                    let u = k as f64 / (grid_size - 1) as f64;
                    let x = if k == grid_size - 1 { *upper } else { lower + u * (upper - lower) };
                    (u, Value::Real(x))
                })
                .collect())
        }
        FeatureKind::Categorical { levels } => {
            Ok(levels.iter().enumerate().map(|(k, l)| (k as f64, Value::Level(l.clone()))).collect())
        }
    }
}

fn check_background(model: &dyn Surrogate, background: &Dataset) -> Result<()> {
    if background.is_empty() {
        return Err(Error::validation("background dataset is empty"));
    }
    if background.space() != model.space() {
        return Err(Error::validation("background dataset does not match the model's feature space"));
    }
    Ok(())
}

/// Partial dependence of `model` on one or two features.
pub fn compute_pd(
    model: &dyn Surrogate,
    features: &[&str],
    background: &Dataset,
    grid_size: usize,
    background_id: &str,
) -> Result<PdResult> {
    check_background(model, background)?;
    if features.is_empty() || features.len() > 2 {
        return Err(Error::validation(format!("partial dependence takes 1 or 2 features, got {}", features.len())));
    }
    if features.len() == 2 && features[0] == features[1] {
        return Err(Error::validation("partial dependence features must differ"));
    }
    let space = model.space();
    let idx: Vec<usize> = features.iter().map(|f| space.index_of(f)).collect::<Result<_>>()?;
    let axes: Vec<Vec<(f64, Value)>> = idx.iter().map(|&j| feature_grid(space, j, grid_size)).collect::<Result<_>>()?;
    let nodes: Vec<Vec<&(f64, Value)>> = match axes.as_slice() {
        [a] => a.iter().map(|v| vec![v]).collect(),
        [a, b] => a.iter().flat_map(|u| b.iter().map(move |v| vec![u, v])).collect(),
        _ => unreachable!(),
    };
    let encoded = background.encoded();
    let ice: Vec<Vec<f64>> = encoded
        .iter()
        .map(|row| {
            let mut x = row.clone();
            nodes
                .iter()
                .map(|node| {
                    for (&j, (u, _)) in idx.iter().zip(node) {
                        x[j] = *u;
                    }
                    model.predict_encoded(&x)
                })
                .collect()
        })
        .collect();
    let pd = column_means(&ice);
    Ok(PdResult {
        features: features.iter().map(|f| f.to_string()).collect(),
        grid: nodes.iter().map(|node| node.iter().map(|(_, v)| v.clone()).collect()).collect(),
        pd,
        ice,
        background: background_id.to_string(),
    })
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let g = rows[0].len();
    (0..g)
        .map(|k| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            stats::mean(&col)
        })
        .collect()
}

/// Standard deviation of the PD curve for continuous features; a quarter of
/// the PD range over levels for categorical ones.
pub fn pd_importance(model: &dyn Surrogate, background: &Dataset, grid_size: usize) -> Result<ImportanceTable> {
    check_background(model, background)?;
    let space = model.space();
    let mut values = Vec::with_capacity(space.len());
    for spec in space.specs() {
        let r = compute_pd(model, &[&spec.name], background, grid_size, "")?;
        values.push(importance_from_pd(spec.is_categorical(), &r.pd));
    }
    Ok(ImportanceTable { method: ImportanceMethod::Pd, features: space.names().map(String::from).collect(), values })
}

pub fn importance_from_pd(categorical: bool, pd: &[f64]) -> f64 {
    if categorical {
        let hi = pd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = pd.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - lo) / 4.0
    } else {
        stats::sample_std(pd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: String,
    /// Over the background rows, of the prediction with this level substituted.
    pub raw: FiveNumber,
    /// Same, minus the prediction with the reference level substituted.
    pub relative: FiveNumber,
}

/// Box-plot summary per level of a categorical feature.
pub fn categorical_pd_levels(
    model: &dyn Surrogate,
    feature: &str,
    background: &Dataset,
    reference_level: &str,
) -> Result<Vec<LevelSummary>> {
    let space = model.space();
    let j = space.index_of(feature)?;
    let levels = space
        .spec(j)
        .levels()
        .ok_or_else(|| Error::validation(format!("{feature} is not categorical")))?;
    let r = levels
        .iter()
        .position(|l| l == reference_level)
        .ok_or_else(|| Error::validation(format!("unknown level {reference_level} for {feature}")))?;
    let pd = compute_pd(model, &[feature], background, DEFAULT_GRID_SIZE, "")?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(k, level)| {
            let raw: Vec<f64> = pd.ice.iter().map(|c| c[k]).collect();
            let rel: Vec<f64> = pd.ice.iter().map(|c| c[k] - c[r]).collect();
            LevelSummary { level: level.clone(), raw: FiveNumber::of(&raw), relative: FiveNumber::of(&rel) }
        })
        .collect())
}

impl PdResult {
    fn node_label(&self, g: usize) -> String {
        self.grid[g].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(":")
    }

    /// ICE curves minus their own first grid value.
    pub fn centered_ice(&self) -> Vec<Vec<f64>> {
        self.ice.iter().map(|c| c.iter().map(|v| v - c[0]).collect()).collect()
    }

    /// Largest vertical gap between any two centered ICE curves.
    pub fn centered_spread(&self) -> f64 {
        let c = self.centered_ice();
        (0..self.pd.len())
            .map(|g| {
                let col: Vec<f64> = c.iter().map(|r| r[g]).collect();
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Long-form CSV (`feature,grid_value,curve_id,prediction`); the PD curve
    /// has curve id `mean`, followed by the first `ice_limit` ICE curves.
    pub fn write_csv<W: Write>(&self, w: W, centered: bool, ice_limit: usize) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["feature", "grid_value", "curve_id", "prediction"])?;
        let name = self.features.join(":");
        let shift = |c: &[f64], g: usize| if centered { c[g] - c[0] } else { c[g] };
        for g in 0..self.pd.len() {
            wtr.write_record([name.clone(), self.node_label(g), "mean".into(), shift(&self.pd, g).to_string()])?;
        }
        for (i, c) in self.ice.iter().take(ice_limit).enumerate() {
            for g in 0..c.len() {
                wtr.write_record([name.clone(), self.node_label(g), i.to_string(), shift(c, g).to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}
