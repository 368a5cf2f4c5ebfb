//! Experiment specs: one flat JSON object per run.
//!
//! Keys starting with `_` are comments and ignored. Every other key must be
//! known for the kind; validation errors name the offending key.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anderson_core::dynamics::EnergyWindow;
use anderson_core::model::Segment;
use anderson_core::spectral::BoxSpec;
use anderson_core::{DisorderSpec, Envelope, ModelConfig, SingleSitePotential};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    LyapunovScan,
    BlockStats,
    NegativeMoment,
    GreenDecay,
    EigenDecay,
    CorrelatorDecay,
    KappaDichotomy,
    TransportCritical,
    MartingaleDiagnostic,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::LyapunovScan,
        Kind::BlockStats,
        Kind::NegativeMoment,
        Kind::GreenDecay,
        Kind::EigenDecay,
        Kind::CorrelatorDecay,
        Kind::KappaDichotomy,
        Kind::TransportCritical,
        Kind::MartingaleDiagnostic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::LyapunovScan => "lyapunov-scan",
            Kind::BlockStats => "block-stats",
            Kind::NegativeMoment => "negative-moment",
            Kind::GreenDecay => "green-decay",
            Kind::EigenDecay => "eigen-decay",
            Kind::CorrelatorDecay => "correlator-decay",
            Kind::KappaDichotomy => "kappa-dichotomy",
            Kind::TransportCritical => "transport-critical",
            Kind::MartingaleDiagnostic => "martingale-diagnostic",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::spec("kind", format!("unknown experiment kind `{s}`")))
    }
}

/// Kind-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    LyapunovScan { energies: Vec<f64>, n: u64 },
    BlockStats { energy: f64, n0: u64, blocks: Vec<u64> },
    NegativeMoment { energy: f64, s: f64, m: i64, ns: Vec<i64> },
    GreenDecay { energy: f64, s: f64, bx: BoxSpec, y: i64, xs: Vec<i64> },
    EigenDecay { bx: BoxSpec, interval: (f64, f64) },
    CorrelatorDecay { bx: BoxSpec, interval: (f64, f64), y: i64, xs: Vec<i64>, per_cell: usize, gammas: Vec<f64> },
    KappaDichotomy { half_lengths: Vec<i64>, kappas: Vec<f64>, interval: (f64, f64), n_times: usize, per_cell: usize },
    TransportCritical { bx: BoxSpec, window: EnergyWindow, p: f64, times: Vec<f64>, per_cell: usize },
    MartingaleDiagnostic { energy: f64, m: i64, ns: Vec<i64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub model: ModelConfig,
    pub n_samples: u64,
    pub root_seed: u64,
    pub output: Option<PathBuf>,
    pub params: Params,
    /// The document as parsed, with CLI overrides applied.
    source: Map<String, Value>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<Value>(text)? {
            Value::Object(map) => Self::from_map(map),
            _ => Err(LabError::spec("<root>", "an experiment config must be a JSON object")),
        }
    }

    pub fn from_value(value: Value) -> Result<Self> {
        match value {
            Value::Object(map) => Self::from_map(map),
            _ => Err(LabError::spec("<root>", "an experiment config must be a JSON object")),
        }
    }

    fn from_map(source: Map<String, Value>) -> Result<Self> {
        let mut f = Fields::new(&source);
        let kind: Kind = f.string("kind")?.parse()?;
        let model = parse_model(&mut f)?;
        let n_samples = f.u64("n_samples")?;
        if n_samples < 2 {
            return Err(LabError::spec("n_samples", "need at least 2 samples"));
        }
        let root_seed = f.opt_u64("root_seed")?.unwrap_or(0);
        let output = f.opt_string("output")?.map(PathBuf::from);
        let params = parse_params(kind, &model, &mut f)?;
        f.finish()?;
        Ok(ExperimentSpec { kind, model, n_samples, root_seed, output, params, source })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.root_seed = seed;
        self.source.insert("root_seed".into(), Value::from(seed));
        self
    }

    pub fn with_samples(mut self, n: u64) -> Result<Self> {
        if n < 2 {
            return Err(LabError::spec("n_samples", "need at least 2 samples"));
        }
        self.n_samples = n;
        self.source.insert("n_samples".into(), Value::from(n));
        Ok(self)
    }

    /// The experiment config as a JSON value with keys in sorted order.
    pub fn to_value(&self) -> Value {
        Value::Object(self.source.clone())
    }

    /// SHA-256 of the compact, key-sorted JSON of [`Self::to_value`].
    pub fn hash(&self) -> String {
        hash_value(&self.to_value())
    }
}

/// Hex SHA-256 of the compact serialization of `v`.
pub fn hash_value(v: &Value) -> String {
    let bytes = serde_json::to_vec(v).expect("JSON values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_model(f: &mut Fields) -> Result<ModelConfig> {
    let alpha = f.f64("alpha")?;
    let lambda = f.f64("lambda")?;
    let envelope = match f.opt_string("envelope.rule")?.as_deref() {
        None | Some("regularized") => Envelope::Regularized,
        Some("shifted") => Envelope::Shifted { offset: f.opt_f64("envelope.offset")?.unwrap_or(1.0) },
        Some(other) => {
            return Err(LabError::spec("envelope.rule", format!("expected regularized or shifted, got `{other}`")))
        }
    };
    let params = f.opt_f64_list("disorder.params")?;
    let disorder = match (f.opt_string("disorder.family")?.as_deref(), params.as_deref()) {
        (None | Some("uniform"), None) => DisorderSpec::standard_uniform(),
        (None | Some("uniform"), Some(&[lo, hi])) => {
            DisorderSpec::uniform(lo, hi).map_err(|e| keyed(e, "disorder.params"))?
        }
        (Some("triangular"), None) => DisorderSpec::standard_triangular(),
        (Some("triangular"), Some(&[lo, mode, hi])) => {
            DisorderSpec::triangular(lo, mode, hi).map_err(|e| keyed(e, "disorder.params"))?
        }
        (Some("degenerate"), None) => DisorderSpec::degenerate(),
        (None | Some("uniform" | "triangular" | "degenerate"), Some(_)) => {
            return Err(LabError::spec(
                "disorder.params",
                "expected [lo, hi] for uniform, [lo, mode, hi] for triangular, none for degenerate",
            ))
        }
        (Some(other), _) => {
            return Err(LabError::spec(
                "disorder.family",
                format!("expected uniform, triangular or degenerate, got `{other}`"),
            ))
        }
    };
    let single_site = match f.list("single_site.segments")? {
        None => SingleSitePotential::centered_box(),
        Some(items) => {
            let segments = items
                .iter()
                .map(|v| match v.as_array().map(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>()) {
                    Some(Some(t)) if t.len() == 3 => Ok(Segment { start: t[0], end: t[1], height: t[2] }),
                    _ => Err(LabError::spec("single_site.segments", "each segment is [start, end, height]")),
                })
                .collect::<Result<Vec<_>>>()?;
            SingleSitePotential::new(segments).map_err(|e| keyed(e, "single_site.segments"))?
        }
    };
    let config =
        ModelConfig::new(alpha, lambda, envelope, disorder, single_site).map_err(|e| keyed(e, "envelope.offset"))?;
    match f.opt_u64("max_window_cells")? {
        Some(cells) => Ok(config.with_max_window(cells)),
        None => Ok(config),
    }
}

/// Core validation errors become spec errors under the parameter they name,
/// or under `fallback` when they name none.
fn keyed(e: anderson_core::Error, fallback: &str) -> LabError {
    match e {
        anderson_core::Error::InvalidParameter { name, reason } => LabError::spec(name, reason),
        other => LabError::spec(fallback, other.to_string()),
    }
}

fn parse_params(kind: Kind, model: &ModelConfig, f: &mut Fields) -> Result<Params> {
    Ok(match kind {
        Kind::LyapunovScan => {
            let energies = f.f64_list("energies")?;
            nonempty("energies", &energies)?;
            Params::LyapunovScan { energies, n: f.u64("n")? }
        }
        Kind::BlockStats => {
            let blocks = f.u64_list("blocks")?;
            nonempty("blocks", &blocks)?;
            Params::BlockStats { energy: f.f64("energy")?, n0: f.u64("n0")?, blocks }
        }
        Kind::NegativeMoment => {
            let ns = f.i64_list("ns")?;
            nonempty("ns", &ns)?;
            Params::NegativeMoment { energy: f.f64("energy")?, s: f.f64("s")?, m: f.opt_i64("m")?.unwrap_or(0), ns }
        }
        Kind::GreenDecay => {
            let bx = f.box_spec("box")?;
            let xs = f.i64_list("xs")?;
            nonempty("xs", &xs)?;
            Params::GreenDecay { energy: f.f64("energy")?, s: f.f64("s")?, bx, y: f.opt_i64("y")?.unwrap_or(0), xs }
        }
        Kind::EigenDecay => Params::EigenDecay { bx: f.box_spec("box")?, interval: f.interval("interval")? },
        Kind::CorrelatorDecay => {
            let bx = f.box_spec("box")?;
            let y = f.opt_i64("y")?.unwrap_or(0);
            let xs = match f.opt_i64_list("xs")? {
                Some(xs) => xs,
                None => (y..bx.b).collect(),
            };
            nonempty("xs", &xs)?;
            let gammas = f.opt_f64_list("gammas")?.unwrap_or_else(|| vec![1.0 - 2.0 * model.alpha, 1.0 - model.alpha]);
            nonempty("gammas", &gammas)?;
            Params::CorrelatorDecay { bx, interval: f.interval("interval")?, y, xs, per_cell: f.per_cell()?, gammas }
        }
        Kind::KappaDichotomy => {
            let half_lengths = f.i64_list("half_lengths")?;
            if half_lengths.len() < 2 || half_lengths.iter().any(|&l| l < 1) {
                return Err(LabError::spec("half_lengths", "need at least two positive half-lengths"));
            }
            let kappas = f.f64_list("kappas")?;
            nonempty("kappas", &kappas)?;
            let n_times = f.opt_u64("n_times")?.unwrap_or(41) as usize;
            if n_times < 2 {
                return Err(LabError::spec("n_times", "need at least two times"));
            }
            Params::KappaDichotomy {
                half_lengths,
                kappas,
                interval: f.interval("interval")?,
                n_times,
                per_cell: f.per_cell()?,
            }
        }
        Kind::TransportCritical => {
            let (lo, hi) = f.interval("window")?;
            let window = match f.opt_string("window_shape")?.as_deref() {
                None | Some("bump") => EnergyWindow::new_bump(lo, hi),
                Some("indicator") => EnergyWindow::new_indicator(lo, hi),
                Some(other) => {
                    return Err(LabError::spec("window_shape", format!("expected bump or indicator, got `{other}`")))
                }
            }
            .map_err(|e| LabError::spec("window", e.to_string()))?;
            let times = f.f64_list("times")?;
            if times.len() < 2 {
                return Err(LabError::spec("times", "need at least two times"));
            }
            Params::TransportCritical { bx: f.box_spec("box")?, window, p: f.f64("p")?, times, per_cell: f.per_cell()? }
        }
        Kind::MartingaleDiagnostic => {
            let ns = f.i64_list("ns")?;
            nonempty("ns", &ns)?;
            Params::MartingaleDiagnostic { energy: f.f64("energy")?, m: f.opt_i64("m")?.unwrap_or(1), ns }
        }
    })
}

fn nonempty<T>(key: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(LabError::spec(key, "must not be empty"))
    } else {
        Ok(())
    }
}

/// Typed access to the config object, remembering which keys were read.
struct Fields<'a> {
    map: &'a Map<String, Value>,
    seen: BTreeSet<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(map: &'a Map<String, Value>) -> Self {
        Fields { map, seen: BTreeSet::new() }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.map.get(key)
    }

    fn required(&mut self, key: &'static str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| LabError::spec(key, "missing"))
    }

    fn string(&mut self, key: &'static str) -> Result<String> {
        self.opt_string(key)?.ok_or_else(|| LabError::spec(key, "missing"))
    }

    fn opt_string(&mut self, key: &'static str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(LabError::spec(key, "expected a string")),
        }
    }

    fn f64(&mut self, key: &'static str) -> Result<f64> {
        as_f64(key, self.required(key)?)
    }

    fn opt_f64(&mut self, key: &'static str) -> Result<Option<f64>> {
        self.get(key).map(|v| as_f64(key, v)).transpose()
    }

    fn u64(&mut self, key: &'static str) -> Result<u64> {
        as_u64(key, self.required(key)?)
    }

    fn opt_u64(&mut self, key: &'static str) -> Result<Option<u64>> {
        self.get(key).map(|v| as_u64(key, v)).transpose()
    }

    fn opt_i64(&mut self, key: &'static str) -> Result<Option<i64>> {
        self.get(key).map(|v| as_i64(key, v)).transpose()
    }

    fn list(&mut self, key: &'static str) -> Result<Option<&'a Vec<Value>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(_) => Err(LabError::spec(key, "expected an array")),
        }
    }

    fn f64_list(&mut self, key: &'static str) -> Result<Vec<f64>> {
        self.opt_f64_list(key)?.ok_or_else(|| LabError::spec(key, "missing"))
    }

    fn opt_f64_list(&mut self, key: &'static str) -> Result<Option<Vec<f64>>> {
        self.list(key)?.map(|a| a.iter().map(|v| as_f64(key, v)).collect()).transpose()
    }

    fn u64_list(&mut self, key: &'static str) -> Result<Vec<u64>> {
        let a = self.list(key)?.ok_or_else(|| LabError::spec(key, "missing"))?;
        a.iter().map(|v| as_u64(key, v)).collect()
    }

    fn i64_list(&mut self, key: &'static str) -> Result<Vec<i64>> {
        self.opt_i64_list(key)?.ok_or_else(|| LabError::spec(key, "missing"))
    }

    fn opt_i64_list(&mut self, key: &'static str) -> Result<Option<Vec<i64>>> {
        self.list(key)?.map(|a| a.iter().map(|v| as_i64(key, v)).collect()).transpose()
    }

    fn interval(&mut self, key: &'static str) -> Result<(f64, f64)> {
        let v = self.f64_list(key)?;
        match v[..] {
            [lo, hi] if lo < hi => Ok((lo, hi)),
            _ => Err(LabError::spec(key, "expected [lo, hi] with lo < hi")),
        }
    }

    fn box_spec(&mut self, key: &'static str) -> Result<BoxSpec> {
        let v = self.i64_list(key)?;
        match v[..] {
            [a, b] => BoxSpec::new(a, b).map_err(|e| LabError::spec(key, e.to_string())),
            _ => Err(LabError::spec(key, "expected [a, b]")),
        }
    }

    fn per_cell(&mut self) -> Result<usize> {
        let n = self.opt_u64("points_per_cell")?.unwrap_or(anderson_core::dynamics::DEFAULT_POINTS_PER_CELL as u64);
        if n < 2 {
            return Err(LabError::spec("points_per_cell", "need at least 2"));
        }
        Ok(n as usize)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().find(|k| !k.starts_with('_') && !self.seen.contains(k.as_str())) {
            Some(k) => Err(LabError::spec(k.clone(), "unknown key for this kind")),
            None => Ok(()),
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| LabError::spec(key, "expected a finite number"))
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    v.as_u64().ok_or_else(|| LabError::spec(key, "expected a nonnegative integer"))
}

fn as_i64(key: &str, v: &Value) -> Result<i64> {
    v.as_i64().ok_or_else(|| LabError::spec(key, "expected an integer"))
}
