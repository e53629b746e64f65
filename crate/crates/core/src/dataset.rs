//! Labelled point sets and their CSV form.
//!
//! The CSV layout is a header row with the feature names in declaration
//! order followed by a final `response` column. Categorical cells hold the
//! level label verbatim.

use std::io::{Read, Write};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::space::{FeatureKind, FeatureSpace, Point, Value};

pub const RESPONSE_COLUMN: &str = "response";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    space: FeatureSpace,
    points: Vec<Point>,
    responses: Vec<f64>,
}

impl Dataset {
    pub fn new(space: FeatureSpace, points: Vec<Point>, responses: Vec<f64>) -> Result<Self> {
        if points.len() != responses.len() {
            return Err(Error::validation(format!(
                "{} points but {} responses",
                points.len(),
                responses.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            let v = space.validate_point(p);
            if !v.is_empty() {
                return Err(Error::validation(format!(
                    "row {}: {}",
                    i + 1,
                    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
                )));
            }
        }
        if let Some(i) = responses.iter().position(|y| !y.is_finite()) {
            return Err(Error::validation(format!("row {}: response is not finite", i + 1)));
        }
        Ok(Dataset { space, points, responses })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn encoded(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| self.space.encode_unchecked(p)).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            space: self.space.clone(),
            points: rows.iter().map(|&i| self.points[i].clone()).collect(),
            responses: rows.iter().map(|&i| self.responses[i]).collect(),
        }
    }

    /// Keep only the listed features (in that order); responses are unchanged.
    pub fn project(&self, features: &[usize]) -> Result<Dataset> {
        let space = self.space.subspace(features)?;
        let points = self
            .points
            .iter()
            .map(|p| Point(features.iter().map(|&j| p[j].clone()).collect()))
            .collect();
        Ok(Dataset { space, points, responses: self.responses.clone() })
    }

    /// Uniform random partition into `(train, holdout)` with
    /// `round(train_frac * n)` training rows.
    pub fn split(&self, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(Error::validation(format!("train fraction {train_frac} must lie in (0, 1)")));
        }
        let n = self.len();
        let n_train = (train_frac * n as f64).round() as usize;
        if n_train == 0 || n_train >= n {
            return Err(Error::validation(format!(
                "split of {n} rows at fraction {train_frac} leaves an empty part"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, streams::SPLIT));
        let (a, b) = idx.split_at(n_train);
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        Ok((self.subset(&a), self.subset(&b)))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_points_csv(&self.space, &self.points, Some(&self.responses), w)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(space: &FeatureSpace, r: R) -> Result<Dataset> {
        let (points, responses) = read_points_csv(space, r)?;
        let responses = responses.ok_or_else(|| Error::validation("missing `response` column"))?;
        Dataset::new(space.clone(), points, responses)
    }

    pub fn from_csv_str(space: &FeatureSpace, text: &str) -> Result<Dataset> {
        Dataset::read_csv(space, text.as_bytes())
    }
}

pub fn write_points_csv<W: Write>(
    space: &FeatureSpace,
    points: &[Point],
    responses: Option<&[f64]>,
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = space.names().collect();
    if responses.is_some() {
        header.push(RESPONSE_COLUMN);
    }
    wtr.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut rec: Vec<String> = p.values().iter().map(|v| v.to_string()).collect();
        if let Some(y) = responses {
            rec.push(y[i].to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads points (and the `response` column when present), checking every
/// cell. Errors name the 1-based data row and the column.
pub fn read_points_csv<R: Read>(space: &FeatureSpace, r: R) -> Result<(Vec<Point>, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let names: Vec<&str> = space.names().collect();
    let m = names.len();
    let has_response = header.len() == m + 1 && header[m] == RESPONSE_COLUMN;
    if header.len() < m || header[..m] != names[..] || (header.len() > m && !has_response) {
        return Err(Error::validation(format!(
            "CSV header {:?} does not match features {:?} (+ optional `{RESPONSE_COLUMN}`)",
            header, names
        )));
    }
    let mut points = Vec::new();
    let mut responses = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        if rec.len() != header.len() {
            return Err(Error::validation(format!(
                "row {row}: expected {} columns, found {}",
                header.len(),
                rec.len()
            )));
        }
        let mut values = Vec::with_capacity(m);
        for (j, spec) in space.specs().iter().enumerate() {
            let cell = rec[j].trim();
            let value = match &spec.kind {
                FeatureKind::Continuous { .. } => Value::Real(cell.parse::<f64>().map_err(|_| {
                    Error::validation(format!("row {row}, column {}: cannot parse `{cell}` as a number", spec.name))
                })?),
                FeatureKind::Categorical { .. } => Value::Level(cell.to_string()),
            };
            values.push(value);
        }
        let p = Point(values);
        let v = space.validate_point(&p);
        if let Some(first) = v.first() {
            let col = match first {
                crate::error::Violation::OutOfBounds { feature, .. }
                | crate::error::Violation::UnknownLevel { feature, .. }
                | crate::error::Violation::NotFinite { feature }
                | crate::error::Violation::KindMismatch { feature, .. } => feature.clone(),
                crate::error::Violation::ArityMismatch { .. } => "-".to_string(),
            };
            return Err(Error::validation(format!("row {row}, column {col}: {first}")));
        }
        points.push(p);
        if has_response {
            let cell = rec[m].trim();
            let y = cell.parse::<f64>().ok().filter(|y| y.is_finite()).ok_or_else(|| {
                Error::validation(format!("row {row}, column {RESPONSE_COLUMN}: cannot parse `{cell}` as a number"))
            })?;
            responses.push(y);
        }
    }
    Ok((points, has_response.then_some(responses)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::FeatureSpec;

    fn space() -> FeatureSpace {
        FeatureSpace::new(vec![
            FeatureSpec::continuous("x", 0.0, 10.0),
            FeatureSpec::categorical("c", ["A", "B"]),
        ])
        .unwrap()
    }

    fn data(n: usize) -> Dataset {
        let pts = space().lhs_sample(n, 1).unwrap();
        let y = (0..n).map(|i| i as f64).collect();
        Dataset::new(space(), pts, y).unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = data(100);
        let (a, b) = d.split(0.8, 5).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        let mut all: Vec<f64> = a.responses().iter().chain(b.responses()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, d.responses());
        assert_eq!(d.split(0.8, 5).unwrap(), (a, b));
    }

    #[test]
    fn split_rejects_degenerate() {
        assert!(data(3).split(0.1, 0).is_err());
        assert!(data(3).split(1.0, 0).is_err());
        assert!(data(3).split(0.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = data(7);
        let text = d.to_csv_string().unwrap();
        assert!(text.starts_with("x,c,response\n"));
        assert_eq!(Dataset::from_csv_str(&space(), &text).unwrap(), d);
    }

    #[test]
    fn csv_errors_name_row_and_column() {
        let err = Dataset::from_csv_str(&space(), "x,c,response\n1,A,2\nfoo,B,3\n").unwrap_err();
        assert_eq!(err.to_string(), "validation error: row 2, column x: cannot parse `foo` as a number");
        let err = Dataset::from_csv_str(&space(), "x,c,response\n1,Q,2\n").unwrap_err();
        assert!(err.to_string().contains("row 1, column c"), "{err}");
        let err = Dataset::from_csv_str(&space(), "x,c,response\n1,A\n").unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        let err = Dataset::from_csv_str(&space(), "x,d,response\n").unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
        let err = Dataset::from_csv_str(&space(), "x,c\n1,A\n").unwrap_err();
        assert!(err.to_string().contains("response"), "{err}");
    }

    #[test]
    fn unlabelled_points() {
        let (pts, y) = read_points_csv(&space(), "x,c\n1.5,B\n".as_bytes()).unwrap();
        assert!(y.is_none());
        assert_eq!(pts, vec![Point(vec![Value::Real(1.5), "B".into()])]);
    }

    #[test]
    fn project_keeps_responses() {
        let d = data(5);
        let p = d.project(&[1]).unwrap();
        assert_eq!(p.space().len(), 1);
        assert_eq!(p.responses(), d.responses());
    }
}
