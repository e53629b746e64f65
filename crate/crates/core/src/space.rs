//! Mixed continuous/categorical input domains.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous { lower: f64, upper: f64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        FeatureSpec { name: name.into(), kind: FeatureKind::Continuous { lower, upper } }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical { levels: levels.into_iter().map(Into::into).collect() },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Continuous { .. } => None,
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Continuous { lower, upper } => Some((lower, upper)),
            FeatureKind::Categorical { .. } => None,
        }
    }

    fn check(&self) -> Result<()> {
        match &self.kind {
            FeatureKind::Continuous { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::validation(format!(
                        "feature {}: need finite lower < upper, got [{lower}, {upper}]",
                        self.name
                    )));
                }
            }
            FeatureKind::Categorical { levels } => {
                let distinct: HashSet<&String> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return Err(Error::validation(format!("feature {}: duplicate levels", self.name)));
                }
                if levels.len() < 2 {
                    return Err(Error::validation(format!(
                        "feature {}: categorical features need at least 2 levels",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A single feature value in raw (user-facing) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Real(f64),
    Level(String),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Level(_) => None,
        }
    }

    pub fn as_level(&self) -> Option<&str> {
        match self {
            Value::Level(s) => Some(s),
            Value::Real(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x}"),
            Value::Level(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Level(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<Value>);

impl Point {
    pub fn new(values: Vec<Value>) -> Self {
        Point(values)
    }

    pub fn reals(values: &[f64]) -> Self {
        Point(values.iter().map(|&x| Value::Real(x)).collect())
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for Point {
    type Output = Value;
    fn index(&self, i: usize) -> &Value {
        &self.0[i]
    }
}

/// Ordered declaration of the input domain.
///
/// Continuous features are scaled to `[0, 1]` by [`encode_point`](Self::encode_point);
/// categorical features are encoded as their positional level index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureSpec>", into = "Vec<FeatureSpec>")]
pub struct FeatureSpace {
    specs: Vec<FeatureSpec>,
}

impl TryFrom<Vec<FeatureSpec>> for FeatureSpace {
    type Error = Error;
    fn try_from(specs: Vec<FeatureSpec>) -> Result<Self> {
        FeatureSpace::new(specs)
    }
}

impl From<FeatureSpace> for Vec<FeatureSpec> {
    fn from(space: FeatureSpace) -> Self {
        space.specs
    }
}

impl FeatureSpace {
    pub fn new(specs: Vec<FeatureSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::validation("feature space needs at least one feature"));
        }
        let mut seen = HashSet::new();
        for spec in &specs {
            spec.check()?;
            if spec.name == "response" {
                return Err(Error::validation("feature name `response` is reserved"));
            }
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::validation(format!("duplicate feature name {}", spec.name)));
            }
        }
        Ok(FeatureSpace { specs })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn spec(&self, i: usize) -> &FeatureSpec {
        &self.specs[i]
    }

    /// Total number of features `m`.
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::validation(format!("unknown feature {name}")))
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.specs[i].is_categorical()).collect()
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.specs[i].is_categorical()).collect()
    }

    pub fn has_categorical(&self) -> bool {
        self.specs.iter().any(FeatureSpec::is_categorical)
    }

    /// Space restricted to the given features, in the given order.
    pub fn subspace(&self, features: &[usize]) -> Result<FeatureSpace> {
        FeatureSpace::new(features.iter().map(|&i| self.specs[i].clone()).collect())
    }

    /// Itemized check of a point; an empty list means the point is valid.
    pub fn validate_point(&self, p: &Point) -> Vec<Violation> {
        let mut out = Vec::new();
        if p.len() != self.len() {
            out.push(Violation::ArityMismatch { expected: self.len(), found: p.len() });
            return out;
        }
        for (spec, value) in self.specs.iter().zip(p.values()) {
            match (&spec.kind, value) {
                (FeatureKind::Continuous { lower, upper }, Value::Real(x)) => {
                    if !x.is_finite() {
                        out.push(Violation::NotFinite { feature: spec.name.clone() });
                    } else if x < lower || x > upper {
                        out.push(Violation::OutOfBounds {
                            feature: spec.name.clone(),
                            value: *x,
                            lower: *lower,
                            upper: *upper,
                        });
                    }
                }
                (FeatureKind::Categorical { levels }, Value::Level(l)) => {
                    if !levels.contains(l) {
                        out.push(Violation::UnknownLevel { feature: spec.name.clone(), level: l.clone() });
                    }
                }
                (FeatureKind::Continuous { .. }, Value::Level(_)) => {
                    out.push(Violation::KindMismatch { feature: spec.name.clone(), expected: "real" })
                }
                (FeatureKind::Categorical { .. }, Value::Real(_)) => {
                    out.push(Violation::KindMismatch { feature: spec.name.clone(), expected: "level label" })
                }
            }
        }
        out
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        let v = self.validate_point(p);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPoint(v))
        }
    }

    pub fn encode_point(&self, p: &Point) -> Result<Vec<f64>> {
        self.check_point(p)?;
        Ok(self.encode_unchecked(p))
    }

    pub(crate) fn encode_unchecked(&self, p: &Point) -> Vec<f64> {
        self.specs
            .iter()
            .zip(p.values())
            .map(|(spec, value)| match (&spec.kind, value) {
                (FeatureKind::Continuous { lower, upper }, Value::Real(x)) => (x - lower) / (upper - lower),
                (FeatureKind::Categorical { levels }, Value::Level(l)) => {
                    levels.iter().position(|v| v == l).expect("validated level") as f64
                }
                _ => unreachable!("point validated against space"),
            })
            .collect()
    }

    /// Inverse of [`encode_point`](Self::encode_point). Categorical indices are rounded.
    pub fn decode(&self, encoded: &[f64]) -> Point {
        Point(
            self.specs
                .iter()
                .zip(encoded)
                .map(|(spec, &u)| self.decode_value(spec, u))
                .collect(),
        )
    }

    fn decode_value(&self, spec: &FeatureSpec, u: f64) -> Value {
        match &spec.kind {
            FeatureKind::Continuous { lower, upper } => Value::Real((lower + u * (upper - lower)).clamp(*lower, *upper)),
            FeatureKind::Categorical { levels } => {
                let k = (u.round().max(0.0) as usize).min(levels.len() - 1);
                Value::Level(levels[k].clone())
            }
        }
    }

    /// Domain center for continuous features; categorical features take the
    /// override for that feature or, by default, their first declared level.
    pub fn center_reference(&self, overrides: &BTreeMap<String, String>) -> Result<Point> {
        for (name, level) in overrides {
            let i = self.index_of(name)?;
            match self.specs[i].levels() {
                None => {
                    return Err(Error::validation(format!(
                        "reference override names continuous feature {name}"
                    )))
                }
                Some(levels) if !levels.contains(level) => {
                    return Err(Error::InvalidPoint(vec![Violation::UnknownLevel {
                        feature: name.clone(),
                        level: level.clone(),
                    }]))
                }
                Some(_) => {}
            }
        }
        Ok(Point(
            self.specs
                .iter()
                .map(|spec| match &spec.kind {
                    FeatureKind::Continuous { lower, upper } => Value::Real(0.5 * (lower + upper)),
                    FeatureKind::Categorical { levels } => {
                        Value::Level(overrides.get(&spec.name).unwrap_or(&levels[0]).clone())
                    }
                })
                .collect(),
        ))
    }

    /// Random Latin hypercube over the continuous features (one point per
    /// stratum per axis, uniform jitter inside the stratum); categorical
    /// features are drawn uniformly over their levels.
    pub fn lhs_sample(&self, n: usize, seed: u64) -> Result<Vec<Point>> {
        if n == 0 {
            return Err(Error::validation("lhs_sample needs n >= 1"));
        }
        let mut rng = rng::stream(seed, streams::LHS);
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(self.len());
        for spec in &self.specs {
            let col = match &spec.kind {
                FeatureKind::Continuous { .. } => {
                    let mut strata: Vec<usize> = (0..n).collect();
                    strata.shuffle(&mut rng);
                    strata
                        .into_iter()
                        .map(|s| {
                            let u = (s as f64 + rng.random::<f64>()) / n as f64;
                            u.min(1.0)
                        })
                        .collect()
                }
                FeatureKind::Categorical { levels } => {
                    (0..n).map(|_| rng.random_range(0..levels.len()) as f64).collect()
                }
            };
            columns.push(col);
        }
        Ok((0..n)
            .map(|i| {
                let enc: Vec<f64> = columns.iter().map(|c| c[i]).collect();
                self.decode(&enc)
            })
            .collect())
    }

    /// Independent uniform draws in encoded coordinates (continuous in `[0,1)`,
    /// categorical as a uniform level index).
    pub fn uniform_encoded<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.specs
            .iter()
            .map(|spec| match &spec.kind {
                FeatureKind::Continuous { .. } => rng.random::<f64>(),
                FeatureKind::Categorical { levels } => rng.random_range(0..levels.len()) as f64,
            })
            .collect()
    }
}
