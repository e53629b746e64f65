use crate::error::Result;
use crate::space::{FeatureSpace, Point};

/// Anything that maps points of a [`FeatureSpace`] to a scalar prediction.
///
/// Explainers only need the mean prediction. They work in encoded
/// coordinates (see [`FeatureSpace::encode_point`]) so that hybrid points can
/// be assembled without re-validating labels.
pub trait Surrogate: Sync {
    fn space(&self) -> &FeatureSpace;

    fn predict_encoded(&self, x: &[f64]) -> f64;

    fn predict_point(&self, p: &Point) -> Result<f64> {
        Ok(self.predict_encoded(&self.space().encode_point(p)?))
    }
}

/// A closed-form function over decoded points.
pub struct AnalyticModel<F> {
    space: FeatureSpace,
    f: F,
}

impl<F: Fn(&Point) -> f64 + Sync> AnalyticModel<F> {
    pub fn new(space: FeatureSpace, f: F) -> Self {
        AnalyticModel { space, f }
    }
}

impl<F: Fn(&Point) -> f64 + Sync> Surrogate for AnalyticModel<F> {
    fn space(&self) -> &FeatureSpace {
        &self.space
    }

    fn predict_encoded(&self, x: &[f64]) -> f64 {
        (self.f)(&self.space.decode(x))
    }
}
