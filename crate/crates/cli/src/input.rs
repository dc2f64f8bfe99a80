//! Parsing of source files, grid specs and tolerance overrides.

use std::path::Path;

use gjrdf::{Error, JointGaussianSource, Matrix, Tolerances};
use serde::Deserialize;

/// Input file: either a full covariance with the size of the first block, or
/// canonical correlations directly.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SourceFile {
    Covariance {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        p1: usize,
    },
    Correlations {
        d: Vec<f64>,
    },
}

#[derive(Debug)]
pub enum InputError {
    Io(String),
    Parse(String),
    Model(Error),
}

impl InputError {
    pub fn name(&self) -> &'static str {
        match self {
            InputError::Io(_) => "Io",
            InputError::Parse(_) => "Parse",
            InputError::Model(e) => e.name(),
        }
    }
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputError::Io(s) | InputError::Parse(s) => f.write_str(s),
            InputError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for InputError {
    fn from(e: Error) -> Self {
        InputError::Model(e)
    }
}

pub fn read_source(path: &Path, tol: &Tolerances) -> Result<JointGaussianSource, InputError> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError::Io(format!("{}: {e}", path.display())))?;
    let file: SourceFile = serde_json::from_str(&text).map_err(|e| InputError::Parse(format!("{}: {e}", path.display())))?;
    source_from(file, tol)
}

pub fn source_from(file: SourceFile, tol: &Tolerances) -> Result<JointGaussianSource, InputError> {
    match file {
        SourceFile::Correlations { d } => Ok(JointGaussianSource::from_correlations(&d, tol)?),
        SourceFile::Covariance { q, p1 } => {
            let dim = q.len();
            if q.iter().any(|row| row.len() != dim) {
                return Err(Error::DimensionMismatch(format!("Q must be square, got {dim} rows of unequal length")).into());
            }
            if p1 == 0 || p1 >= dim {
                return Err(Error::DimensionMismatch(format!("p1 = {p1} must lie in 1..{dim}")).into());
            }
            let flat: Vec<f64> = q.into_iter().flatten().collect();
            let q = Matrix::from_row_slice(dim, dim, &flat);
            Ok(JointGaussianSource::new(q, p1, dim - p1, tol)?)
        }
    }
}

/// Default tolerances with the JSON map in `overrides` merged on top.
pub fn tolerances(overrides: Option<&str>) -> Result<Tolerances, InputError> {
    let Some(text) = overrides else {
        return Ok(Tolerances::default());
    };
    let patch: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| InputError::Parse(format!("GJRDF_TOL_OVERRIDES: {e}")))?;
    let mut base = serde_json::to_value(Tolerances::default()).expect("tolerances serialize");
    let fields = base.as_object_mut().expect("tolerances is a struct");
    for (k, v) in patch {
        fields.insert(k, v);
    }
    serde_json::from_value(base).map_err(|e| InputError::Parse(format!("GJRDF_TOL_OVERRIDES: {e}")))
}

/// One axis `min:max:steps` of a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.min + h * i as f64).collect()
    }
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, steps] = parts[..] else {
        return Err(format!("axis `{s}` must be min:max:steps"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    let (min, max) = (num(min)?, num(max)?);
    let steps = steps.trim().parse::<usize>().map_err(|e| format!("`{steps}`: {e}"))?;
    if steps == 0 {
        return Err(format!("axis `{s}` needs at least one step"));
    }
    if !(min.is_finite() && max.is_finite() && min > 0.0 && max >= min) {
        return Err(format!("axis `{s}` needs 0 < min <= max"));
    }
    Ok(Axis { min, max, steps })
}

/// Parses `d1min:d1max:steps,d2min:d2max:steps`.
pub fn parse_grid(s: &str) -> Result<(Axis, Axis), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("grid `{s}` must have two comma-separated axes"))?;
    Ok((parse_axis(a)?, parse_axis(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parses() {
        let (a, b) = parse_grid("0.1:1.0:10,0.2:0.2:1").unwrap();
        assert_eq!(a.steps, 10);
        assert_eq!(a.values().len(), 10);
        assert_eq!(*a.values().last().unwrap(), 1.0);
        assert_eq!(b.values(), vec![0.2]);
        assert!(parse_grid("0.1:1.0:10").is_err());
        assert!(parse_grid("0.1:1.0:0,0.1:1:2").is_err());
        assert!(parse_grid("-1:1.0:3,0.1:1:2").is_err());
        assert!(parse_grid("a:1.0:3,0.1:1:2").is_err());
    }

    #[test]
    fn overrides_merge() {
        let t = tolerances(Some(r#"{"region": 1e-6, "newton_max_iterations": 50}"#)).unwrap();
        assert_eq!(t.region, 1e-6);
        assert_eq!(t.newton_max_iterations, 50);
        assert_eq!(t.eps_one, Tolerances::default().eps_one);
        assert!(tolerances(Some(r#"{"nonsense": 1}"#)).is_err());
        assert!(tolerances(Some("[1]")).is_err());
        assert_eq!(tolerances(None).unwrap(), Tolerances::default());
    }

    #[test]
    fn source_shapes() {
        let tol = Tolerances::default();
        let f: SourceFile = serde_json::from_str(r#"{"d": [0.5, 0.2]}"#).unwrap();
        assert_eq!(source_from(f, &tol).unwrap().p1(), 2);
        let f: SourceFile = serde_json::from_str(r#"{"Q": [[1, 0], [0, 1]], "p1": 1}"#).unwrap();
        assert_eq!(source_from(f, &tol).unwrap().p2(), 1);
        let f: SourceFile = serde_json::from_str(r#"{"Q": [[1, 0], [0]], "p1": 1}"#).unwrap();
        assert!(source_from(f, &tol).is_err());
        let f: SourceFile = serde_json::from_str(r#"{"Q": [[1, 0], [0, 1]], "p1": 2}"#).unwrap();
        assert!(source_from(f, &tol).is_err());
    }
}
