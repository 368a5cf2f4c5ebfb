//! Run records: everything needed to reproduce and re-plot a run.

use std::collections::BTreeMap;
use std::fmt;

use anderson_core::EstimatorResult;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// An `f64` that survives JSON: non-finite values are written as the
/// strings `"NaN"`, `"inf"` and `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Real;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"NaN\", \"inf\", \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                match v {
                    "NaN" => Ok(Real(f64::NAN)),
                    "inf" => Ok(Real(f64::INFINITY)),
                    "-inf" => Ok(Real(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl From<f64> for Real {
    fn from(x: f64) -> Self {
        Real(x)
    }
}

/// One grid coordinate of a data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Num(Real),
    Label(String),
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coord::Num(x) => write!(f, "{}", x.0),
            Coord::Label(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Coord {
    fn from(x: f64) -> Self {
        Coord::Num(Real(x))
    }
}

impl From<i64> for Coord {
    fn from(x: i64) -> Self {
        Coord::Num(Real(x as f64))
    }
}

impl From<u64> for Coord {
    fn from(x: u64) -> Self {
        Coord::Num(Real(x as f64))
    }
}

impl From<&str> for Coord {
    fn from(s: &str) -> Self {
        Coord::Label(s.into())
    }
}

/// Serializable mirror of [`EstimatorResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: Real,
    pub std_error: Real,
    pub n_samples: u64,
    pub root_seed: u64,
    pub rejections: u64,
    pub metadata: BTreeMap<String, Real>,
}

impl From<&EstimatorResult> for Estimate {
    fn from(e: &EstimatorResult) -> Self {
        Estimate {
            mean: Real(e.mean),
            std_error: Real(e.std_error),
            n_samples: e.n_samples,
            root_seed: e.root_seed,
            rejections: e.rejections,
            metadata: e.metadata.iter().map(|(k, v)| (k.clone(), Real(*v))).collect(),
        }
    }
}

impl From<EstimatorResult> for Estimate {
    fn from(e: EstimatorResult) -> Self {
        Estimate::from(&e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub grid: Vec<Coord>,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: Value,
    pub spec_hash: String,
    pub tool_version: String,
    pub wall_time_s: Real,
    pub kind: String,
    /// Names of the grid coordinates, one per entry of [`Point::grid`].
    pub columns: Vec<String>,
    pub points: Vec<Point>,
    pub fits: BTreeMap<String, Real>,
    pub rejections: u64,
    pub verdicts: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(kind: &str, spec: Value, spec_hash: String, columns: &[&str]) -> Self {
        RunRecord {
            spec,
            spec_hash,
            tool_version: TOOL_VERSION.into(),
            wall_time_s: Real(0.0),
            kind: kind.into(),
            columns: columns.iter().map(|c| (*c).into()).collect(),
            points: Vec::new(),
            fits: BTreeMap::new(),
            rejections: 0,
            verdicts: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, grid: Vec<Coord>, estimate: impl Into<Estimate>) {
        debug_assert_eq!(grid.len(), self.columns.len());
        self.points.push(Point { grid, estimate: estimate.into() });
    }

    pub fn fit(&mut self, key: &str, value: f64) {
        self.fits.insert(key.into(), Real(value));
    }

    pub fn verdict(&mut self, key: &str, value: impl Into<String>) {
        self.verdicts.insert(key.into(), value.into());
    }

    /// Whether the stored hash matches the stored spec.
    pub fn hash_is_consistent(&self) -> bool {
        crate::spec::hash_value(&self.spec) == self.spec_hash
    }

    /// The record without wall time, which is the only field allowed to
    /// differ between identical runs.
    pub fn numeric_part(&self) -> RunRecord {
        RunRecord { wall_time_s: Real(0.0), ..self.clone() }
    }
}
