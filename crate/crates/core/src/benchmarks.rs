//! Analytic test problems: the light-aircraft wing weight function and the
//! mixed-variable cantilever beam tip deflection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::space::{FeatureSpace, FeatureSpec, Point, Value};

/// Wing weight inputs; `delta` is the quarter-chord sweep in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WingWeightInput {
    pub sw: f64,
    pub wfw: f64,
    pub a: f64,
    pub delta: f64,
    pub q: f64,
    pub lambda: f64,
    pub tc: f64,
    pub nz: f64,
    pub wdg: f64,
    pub wp: f64,
}

/// Feature names and bounds, in input order.
pub const WING_BOUNDS: [(&str, f64, f64); 10] = [
    ("Sw", 150.0, 200.0),
    ("Wfw", 220.0, 300.0),
    ("A", 6.0, 10.0),
    ("Delta", -10.0, 10.0),
    ("q", 16.0, 45.0),
    ("lambda", 0.5, 1.0),
    ("tc", 0.08, 0.18),
    ("Nz", 2.5, 6.0),
    ("Wdg", 1700.0, 2500.0),
    ("Wp", 0.025, 0.08),
];

impl WingWeightInput {
    pub fn from_slice(x: &[f64]) -> Self {
        assert_eq!(x.len(), 10, "wing weight takes 10 inputs");
        WingWeightInput {
            sw: x[0],
            wfw: x[1],
            a: x[2],
            delta: x[3],
            q: x[4],
            lambda: x[5],
            tc: x[6],
            nz: x[7],
            wdg: x[8],
            wp: x[9],
        }
    }

    pub fn to_array(self) -> [f64; 10] {
        [self.sw, self.wfw, self.a, self.delta, self.q, self.lambda, self.tc, self.nz, self.wdg, self.wp]
    }

    pub fn midpoint() -> Self {
        let mid: Vec<f64> = WING_BOUNDS.iter().map(|(_, lo, hi)| 0.5 * (lo + hi)).collect();
        WingWeightInput::from_slice(&mid)
    }
}

/// Wing weight in lb.
pub fn wing_weight(x: &WingWeightInput) -> f64 {
    let cos_sweep = x.delta.to_radians().cos();
    0.036
        * x.sw.powf(0.758)
        * x.wfw.powf(0.0035)
        * (x.a / (cos_sweep * cos_sweep)).powf(0.6)
        * x.q.powf(0.006)
        * x.lambda.powf(0.04)
        * (100.0 * x.tc / cos_sweep).powf(-0.3)
        * (x.nz * x.wdg).powf(0.49)
        + x.sw * x.wp
}

pub fn wing_space() -> FeatureSpace {
    FeatureSpace::new(WING_BOUNDS.iter().map(|&(n, lo, hi)| FeatureSpec::continuous(n, lo, hi)).collect())
        .expect("static wing space is valid")
}

/// Young's modulus in Pa.
pub const YOUNG_MODULUS: f64 = 2.0e11;
/// Tip load in N.
pub const TIP_LOAD: f64 = 5.0e4;

/// Cross-section labels with their normalized moment of inertia.
/// Rows cycle square, circle, I-beam, star; within each shape the section
/// gets more hollow from the first to the third entry.
pub const SECTIONS: [(&str, f64); 12] = [
    ("A", 0.0833),
    ("B", 0.139),
    ("C", 0.380),
    ("D", 0.0796),
    ("E", 0.133),
    ("F", 0.363),
    ("G", 0.0859),
    ("H", 0.136),
    ("I", 0.360),
    ("J", 0.0922),
    ("K", 0.138),
    ("L", 0.369),
];

/// Section labels grouped by wall thickness (full, medium, hollow).
pub const THICKNESS_GROUPS: [[&str; 4]; 3] = [["A", "D", "G", "J"], ["B", "E", "H", "K"], ["C", "F", "I", "L"]];

pub fn section_inertia(label: &str) -> Option<f64> {
    SECTIONS.iter().find(|(l, _)| *l == label).map(|&(_, i)| i)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CantileverInput {
    /// Length in m, within [10, 20].
    pub length: f64,
    /// Cross-section surface in m², within [1, 2].
    pub surface: f64,
    /// Normalized moment of inertia of the section.
    pub inertia: f64,
}

impl CantileverInput {
    pub fn new(length: f64, surface: f64, section: &str) -> Result<Self> {
        let inertia = section_inertia(section)
            .ok_or_else(|| Error::validation(format!("unknown cross-section {section}")))?;
        Ok(CantileverInput { length, surface, inertia })
    }
}

/// Tip deflection in m.
pub fn cantilever_deflection(x: &CantileverInput) -> f64 {
    TIP_LOAD / (3.0 * YOUNG_MODULUS) * x.length.powi(3) / (x.surface * x.surface * x.inertia)
}

pub fn cantilever_space() -> FeatureSpace {
    FeatureSpace::new(vec![
        FeatureSpec::continuous("L", 10.0, 20.0),
        FeatureSpec::continuous("S", 1.0, 2.0),
        FeatureSpec::categorical("I", SECTIONS.iter().map(|(l, _)| *l)),
    ])
    .expect("static cantilever space is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Wing,
    Cantilever,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Wing => "wing",
            Problem::Cantilever => "cantilever",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wing" => Ok(Problem::Wing),
            "cantilever" => Ok(Problem::Cantilever),
            other => Err(Error::validation(format!("unknown benchmark {other} (expected wing|cantilever)"))),
        }
    }
}

impl Problem {
    pub fn space(self) -> FeatureSpace {
        match self {
            Problem::Wing => wing_space(),
            Problem::Cantilever => cantilever_space(),
        }
    }

    /// Exact response at a point of [`Problem::space`].
    pub fn evaluate(self, p: &Point) -> Result<f64> {
        self.space().check_point(p)?;
        Ok(self.evaluate_unchecked(p))
    }

    fn evaluate_unchecked(self, p: &Point) -> f64 {
        match self {
            Problem::Wing => {
                let x: Vec<f64> = p.values().iter().map(|v| v.as_real().expect("continuous")).collect();
                wing_weight(&WingWeightInput::from_slice(&x))
            }
            Problem::Cantilever => {
                let (Value::Real(l), Value::Real(s), Value::Level(c)) = (&p[0], &p[1], &p[2]) else {
                    unreachable!("validated cantilever point")
                };
                cantilever_deflection(&CantileverInput::new(*l, *s, c).expect("validated section"))
            }
        }
    }

    /// LHS design of `n` points evaluated through the exact function.
    pub fn generate_dataset(self, n: usize, seed: u64) -> Result<Dataset> {
        if n < 2 {
            return Err(Error::validation("benchmark datasets need n >= 2"));
        }
        let space = self.space();
        let points = space.lhs_sample(n, seed)?;
        let y = points.iter().map(|p| self.evaluate_unchecked(p)).collect();
        Dataset::new(space, points, y)
    }

    /// Independent uniform points evaluated through the exact function. Uses
    /// its own random stream, so it never repeats the LHS design of a seed.
    pub fn validation_dataset(self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::validation("validation sets need n >= 1"));
        }
        let space = self.space();
        let mut rng = rng::stream(seed, streams::VALIDATION);
        let points: Vec<Point> = (0..n).map(|_| space.decode(&space.uniform_encoded(&mut rng))).collect();
        let y = points.iter().map(|p| self.evaluate_unchecked(p)).collect();
        Dataset::new(space, points, y)
    }
}
