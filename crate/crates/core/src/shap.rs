//! Shapley attributions against a single reference point.
//!
//! `val(U)` is the model prediction at the hybrid point that takes the
//! explained point's values on `U` and the reference's values elsewhere.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pdp::{ImportanceMethod, ImportanceTable};
use crate::rng::{self, streams};
use crate::space::{Point, Value};
use crate::stats;
use crate::surrogate::Surrogate;

/// Largest feature count accepted by [`exact_shap`].
pub const MAX_EXACT_FEATURES: usize = 15;
/// Default number of points explained for importance and dependence.
pub const DEFAULT_SAMPLE_SIZE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ShapMode {
    Exact,
    Kernel { n_coalitions: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub point: Point,
    pub phi: Vec<f64>,
    /// Prediction at the reference.
    pub base_value: f64,
    pub prediction: f64,
    pub reference: Point,
}

impl ShapExplanation {
    /// `|Σφ - (f(p) - f(ref))|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.prediction - self.base_value)).abs()
    }
}

struct Game<'a> {
    model: &'a dyn Surrogate,
    x: Vec<f64>,
    r: Vec<f64>,
}

impl<'a> Game<'a> {
    fn new(model: &'a dyn Surrogate, p: &Point, reference: &Point) -> Result<Self> {
        let space = model.space();
        Ok(Game { model, x: space.encode_point(p)?, r: space.encode_point(reference)? })
    }

    fn m(&self) -> usize {
        self.x.len()
    }

    fn value(&self, mask: u64) -> f64 {
        let h: Vec<f64> = (0..self.m()).map(|j| if mask >> j & 1 == 1 { self.x[j] } else { self.r[j] }).collect();
        self.model.predict_encoded(&h)
    }

    fn full(&self) -> u64 {
        (1u64 << self.m()) - 1
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp().round()
}

/// Shapley values by enumerating all `2^m` coalitions.
pub fn exact_shap(model: &dyn Surrogate, p: &Point, reference: &Point) -> Result<ShapExplanation> {
    let game = Game::new(model, p, reference)?;
    let m = game.m();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::validation(format!(
            "exact SHAP enumerates 2^m coalitions and supports m <= {MAX_EXACT_FEATURES} (m = {m}); use kernel_shap"
        )));
    }
    let v: Vec<f64> = (0..=game.full()).map(|mask| game.value(mask)).collect();
    // s! (m - 1 - s)! / m!
    let w: Vec<f64> = (0..m).map(|s| (ln_factorial(s) + ln_factorial(m - 1 - s) - ln_factorial(m)).exp()).collect();
    let phi = (0..m)
        .map(|j| {
            let bit = 1u64 << j;
            let terms: Vec<f64> = (0..=game.full())
                .filter(|mask| mask & bit == 0)
                .map(|mask| w[mask.count_ones() as usize] * (v[(mask | bit) as usize] - v[mask as usize]))
                .collect();
            stats::pairwise_sum(&terms)
        })
        .collect();
    Ok(ShapExplanation {
        point: p.clone(),
        phi,
        base_value: v[0],
        prediction: v[game.full() as usize],
        reference: reference.clone(),
    })
}

/// Coalitions with their kernel weights. Sizes are visited from the outside
/// in (1 and m-1, then 2 and m-2, ...) and enumerated while the budget covers
/// them; the remaining mass is sampled with each draw paired with its
/// complement.
fn coalitions<R: Rng>(m: usize, budget: usize, rng: &mut R) -> Vec<(u64, f64)> {
    let n_sizes = m / 2;
    let n_paired = (m - 1) / 2;
    let paired = |s: usize| s <= n_paired;
    let mut mass: Vec<f64> = (1..=n_sizes)
        .map(|s| {
            let k = (m - 1) as f64 / (s * (m - s)) as f64;
            if paired(s) { 2.0 * k } else { k }
        })
        .collect();
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|w| *w /= total);

    let mut out: Vec<(u64, f64)> = Vec::new();
    let mut left = budget as f64;
    let mut remaining = mass.clone();
    let mut n_full = 0;
    for s in 1..=n_sizes {
        let count = binomial(m, s) * if paired(s) { 2.0 } else { 1.0 };
        if left * remaining[s - 1] / count < 1.0 - 1e-8 {
            break;
        }
        n_full += 1;
        left -= count;
        if remaining[s - 1] < 1.0 {
            let r = remaining[s - 1];
            remaining.iter_mut().for_each(|w| *w /= 1.0 - r);
        }
        let w = mass[s - 1] / count;
        for mask in masks_of_size(m, s) {
            out.push((mask, w));
            if paired(s) {
                out.push((!mask & ((1u64 << m) - 1), w));
            }
        }
    }
    if n_full == n_sizes || left < 1.0 {
        return out;
    }

    let tail: Vec<f64> = mass[n_full..].to_vec();
    let tail_total: f64 = tail.iter().sum();
    let mut sampled: BTreeMap<u64, usize> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    let mut left = left as usize;
    let mut tries = 0usize;
    let features: Vec<usize> = (0..m).collect();
    while left > 0 && tries < 100 * budget.max(1) {
        tries += 1;
        let u: f64 = rng.random::<f64>() * tail_total;
        let mut acc = 0.0;
        let mut s = n_full + tail.len();
        for (k, w) in tail.iter().enumerate() {
            acc += w;
            if u < acc {
                s = n_full + k + 1;
                break;
            }
        }
        let mut perm = features.clone();
        perm.shuffle(rng);
        let mask = perm[..s].iter().fold(0u64, |a, &j| a | 1 << j);
        let mut add = |mask: u64, left: &mut usize| {
            let e = sampled.entry(mask).or_insert_with(|| {
                order.push(mask);
                *left -= 1;
                0
            });
            *e += 1;
        };
        add(mask, &mut left);
        if left > 0 && paired(s) {
            add(!mask & ((1u64 << m) - 1), &mut left);
        }
    }
    let hits: usize = sampled.values().sum();
    for mask in order {
        out.push((mask, sampled[&mask] as f64 * tail_total / hits as f64));
    }
    out
}

/// All `m`-bit masks with `s` bits set, in increasing order (Gosper's hack).
fn masks_of_size(m: usize, s: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let mut v: u64 = (1 << s) - 1;
    while v < 1 << m {
        out.push(v);
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

/// KernelSHAP: weighted least squares over coalitions with the Shapley
/// kernel, the intercept pinned to `val(∅)` and `Σφ = val(full) - val(∅)`
/// imposed by eliminating the last feature.
pub fn kernel_shap(
    model: &dyn Surrogate,
    p: &Point,
    reference: &Point,
    n_coalitions: usize,
    seed: u64,
) -> Result<ShapExplanation> {
    let game = Game::new(model, p, reference)?;
    let m = game.m();
    if m < 2 {
        return Err(Error::validation("kernel_shap needs at least 2 features"));
    }
    if m > 62 {
        return Err(Error::validation(format!("kernel_shap supports at most 62 features (m = {m})")));
    }
    let full_count = (1u64 << m) - 2;
    let budget = n_coalitions.min(full_count as usize);
    let coal = coalitions(m, budget, &mut rng::stream(seed, streams::SHAP_COALITIONS));
    let v0 = game.value(0);
    let v1 = game.value(game.full());
    let delta = v1 - v0;
    let last = m - 1;
    let k = m - 1;
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut atb = DVector::<f64>::zeros(k);
    for &(mask, w) in &coal {
        let z = |j: usize| (mask >> j & 1) as f64;
        let zl = z(last);
        let a: Vec<f64> = (0..k).map(|j| z(j) - zl).collect();
        let b = game.value(mask) - v0 - zl * delta;
        for i in 0..k {
            if a[i] == 0.0 {
                continue;
            }
            atb[i] += w * a[i] * b;
            for j in 0..k {
                ata[(i, j)] += w * a[i] * a[j];
            }
        }
    }
    let singular = || {
        Error::numerical(format!(
            "KernelSHAP regression is singular with {} distinct coalitions; m = {m} needs at least {} \
             linearly independent coalitions, raise n_coalitions (full enumeration is {full_count})",
            coal.len(),
            m - 1
        ))
    };
    let sv = ata.clone().singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    if !(hi > 0.0 && lo / hi > 1e-12) {
        return Err(singular());
    }
    let head = ata.lu().solve(&atb).ok_or_else(singular)?;
    if head.iter().any(|x| !x.is_finite()) {
        return Err(singular());
    }
    let mut phi: Vec<f64> = head.iter().copied().collect();
    phi.push(delta - stats::pairwise_sum(&phi));
    Ok(ShapExplanation { point: p.clone(), phi, base_value: v0, prediction: v1, reference: reference.clone() })
}

pub fn explain(model: &dyn Surrogate, p: &Point, reference: &Point, mode: ShapMode) -> Result<ShapExplanation> {
    match mode {
        ShapMode::Exact => exact_shap(model, p, reference),
        ShapMode::Kernel { n_coalitions, seed } => kernel_shap(model, p, reference, n_coalitions, seed),
    }
}

/// `min(n, max)` rows drawn without replacement, kept in dataset order.
pub fn sample_rows(data: &Dataset, max: usize, seed: u64) -> Dataset {
    if data.len() <= max {
        return data.clone();
    }
    let mut idx = index::sample(&mut rng::stream(seed, streams::SHAP_SAMPLE), data.len(), max).into_vec();
    idx.sort_unstable();
    data.subset(&idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapTable {
    pub features: Vec<String>,
    pub mode: ShapMode,
    pub explanations: Vec<ShapExplanation>,
    pub n_sh: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceRow {
    pub value: Value,
    pub phi: f64,
}

pub fn shap_table(model: &dyn Surrogate, sample: &[Point], reference: &Point, mode: ShapMode) -> Result<ShapTable> {
    if sample.is_empty() {
        return Err(Error::validation("SHAP sample is empty"));
    }
    let explanations = sample.iter().map(|p| explain(model, p, reference, mode)).collect::<Result<Vec<_>>>()?;
    Ok(ShapTable {
        features: model.space().names().map(String::from).collect(),
        mode,
        n_sh: explanations.len(),
        explanations,
    })
}

impl ShapTable {
    /// Mean absolute attribution per feature.
    pub fn importance(&self) -> ImportanceTable {
        let values = (0..self.features.len())
            .map(|j| {
                let a: Vec<f64> = self.explanations.iter().map(|e| e.phi[j].abs()).collect();
                stats::mean(&a)
            })
            .collect();
        ImportanceTable { method: ImportanceMethod::Shap, features: self.features.clone(), values }
    }

    pub fn dependence(&self, feature: &str) -> Result<Vec<DependenceRow>> {
        let j = self
            .features
            .iter()
            .position(|f| f == feature)
            .ok_or_else(|| Error::validation(format!("unknown feature {feature}")))?;
        Ok(self
            .explanations
            .iter()
            .map(|e| DependenceRow { value: e.point[j].clone(), phi: e.phi[j] })
            .collect())
    }

    /// Long-form CSV: `point_id,feature,feature_value,phi`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["point_id", "feature", "feature_value", "phi"])?;
        for (i, e) in self.explanations.iter().enumerate() {
            for (j, f) in self.features.iter().enumerate() {
                wtr.write_record([i.to_string(), f.clone(), e.point[j].to_string(), e.phi[j].to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn shap_importance(
    model: &dyn Surrogate,
    sample: &Dataset,
    reference: &Point,
    mode: ShapMode,
) -> Result<ImportanceTable> {
    Ok(shap_table(model, sample.points(), reference, mode)?.importance())
}

pub fn shap_dependence(
    model: &dyn Surrogate,
    sample: &Dataset,
    reference: &Point,
    feature: &str,
    mode: ShapMode,
) -> Result<Vec<DependenceRow>> {
    model.space().index_of(feature)?;
    shap_table(model, sample.points(), reference, mode)?.dependence(feature)
}
