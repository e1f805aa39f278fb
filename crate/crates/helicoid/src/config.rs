//! Experiment configuration: JSON ingestion with per-experiment defaults,
//! validation against the desk-scale caps, and the config hash.

use crate::HarnessError;
use helicoid_core::exponents::{ExponentTuple, LebesgueExponent, MixedExponent, Q};
use helicoid_core::gridfn::Weight;
use helicoid_core::wavepackets::Profile;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::str::FromStr;

/// Upper bound on `N^d · |W|` at the finer evaluation resolution.
pub const MAX_SAMPLES: usize = 1 << 24;
/// Upper bound on the number of multi-tiles in a collection.
pub const MAX_TILES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    LocalEstimate,
    LoomisWhitney,
    MixedNormScan,
    MaximalSuite,
    SparseSuite,
    Endpoint,
    RangeScan,
    Tree,
    Decomposition,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::LocalEstimate => "local_estimate",
            Experiment::LoomisWhitney => "loomis_whitney",
            Experiment::MixedNormScan => "mixed_norm_scan",
            Experiment::MaximalSuite => "maximal_suite",
            Experiment::SparseSuite => "sparse_suite",
            Experiment::Endpoint => "endpoint",
            Experiment::RangeScan => "range_scan",
            Experiment::Tree => "tree",
            Experiment::Decomposition => "decomposition",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Indicator,
    ChiTilde,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    #[default]
    RaisedCosine,
    GaussianTruncated,
}

/// The operator driven by the Loomis–Whitney and sparse experiments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    #[default]
    Product,
    Model,
}

/// Sampling region of the range scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRegion {
    /// Hölder tuples with every reciprocal in `[0, 1/2]`.
    #[default]
    LocalL2,
    /// Hölder tuples with input reciprocals in `[0, 1)`.
    Holder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerance {
    /// Allowed relative change of a seed-max ratio between the two resolutions.
    pub stability: f64,
    /// Slack for checks that hold exactly in exact arithmetic.
    pub exact: f64,
    /// Quadrature slack on the classical Loomis–Whitney constant 1.
    pub loomis_whitney: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { stability: 0.2, exact: 1e-9, loomis_whitney: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointGrid {
    /// Values used for each of `A₁, A₂, A₃`.
    pub a: Vec<f64>,
    pub s0: Vec<f64>,
    /// Half-width of the summation box.
    pub half: i64,
    /// Values of `q` at or beyond the divergence threshold, each expected to be rejected.
    pub divergent_q: Vec<f64>,
}

impl Default for EndpointGrid {
    fn default() -> Self {
        Self { a: vec![1.0 / 16.0, 0.25, 1.0, 4.0, 16.0], s0: vec![0.25, 1.0, 4.0], half: 20, divergent_q: vec![1.0, 1.5] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    /// Base resolution; data and collections live at `j`, evaluation also at `j + 1`.
    pub j: u32,
    /// Singular-subspace matrix of the Whitney collection; a default exists for
    /// rank 0 and for `n = 2, k = 1`.
    pub matrix: Option<Vec<Vec<i64>>>,
    pub scales: (i32, i32),
    pub box_bound: Option<i64>,
    /// Two frequency box bounds compared by the decomposition experiment.
    pub box_bounds: Vec<i64>,
    /// Rationals such as `"1/3"`.
    pub alpha: Vec<String>,
    /// Averaging exponents, one per tracked function.
    pub s: Vec<String>,
    pub q: f64,
    /// Mixed-norm spatial exponents per slot, `"p_1,...,p_d"`; the last entry is the output.
    pub tuples: Vec<String>,
    /// Vector exponents per slot; the last entry is the output.
    pub vector: Vec<String>,
    /// Points of the vector measure space; 0 for scalar data.
    pub vector_len: usize,
    /// Output exponent of the Loomis–Whitney experiment.
    pub p: f64,
    pub operator: OperatorKind,
    pub region: SampleRegion,
    pub endpoint: EndpointGrid,
    pub seeds: usize,
    pub base_seed: u64,
    pub weight: WeightMode,
    pub chi_m: f64,
    /// Decay order of the `χ̃` weight in the spatial sizes of the local
    /// estimate. Keep it near the order the packets are adapted to: the
    /// raised-cosine packets have decay constants of order 1 at 4 and
    /// about 1e8 at 10 on 32-point tiles.
    pub size_m: f64,
    pub profile: ProfileMode,
    pub output: Option<PathBuf>,
    pub tolerance: Tolerance,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::LocalEstimate,
            d: 1,
            n: 2,
            k: 1,
            j: 8,
            matrix: None,
            scales: (-5, -1),
            box_bound: None,
            box_bounds: vec![64, 128],
            alpha: Vec::new(),
            s: Vec::new(),
            q: 1.0,
            tuples: Vec::new(),
            vector: Vec::new(),
            vector_len: 0,
            p: 1.0,
            operator: OperatorKind::Product,
            region: SampleRegion::LocalL2,
            endpoint: EndpointGrid::default(),
            seeds: 10,
            base_seed: 0,
            weight: WeightMode::Indicator,
            chi_m: 20.0,
            size_m: 10.0,
            profile: ProfileMode::RaisedCosine,
            output: None,
            tolerance: Tolerance::default(),
        }
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl ExperimentConfig {
    /// Canonical configuration of each experiment.
    pub fn canonical(experiment: Experiment) -> Self {
        let base = Self { experiment, ..Self::default() };
        match experiment {
            Experiment::LocalEstimate => Self { alpha: strings(&["1/3", "1/3", "1/3"]), seeds: 100, ..base },
            Experiment::LoomisWhitney => Self { d: 4, n: 3, k: 0, j: 3, p: 1.0, seeds: 50, ..base },
            Experiment::MixedNormScan => Self { tuples: strings(&["2", "2", "1"]), seeds: 20, ..base },
            Experiment::MaximalSuite => Self {
                d: 2,
                j: 5,
                s: strings(&["1", "1"]),
                tuples: strings(&["inf,2", "2,inf", "2,2"]),
                vector: strings(&["4", "4", "2"]),
                vector_len: 3,
                seeds: 100,
                ..base
            },
            Experiment::SparseSuite => Self {
                k: 0,
                s: strings(&["11/10", "11/10", "1"]),
                operator: OperatorKind::Model,
                seeds: 50,
                ..base
            },
            Experiment::Endpoint => Self { q: 0.5, s: strings(&["2", "2"]), seeds: 0, ..base },
            Experiment::RangeScan => Self { seeds: 1000, ..base },
            Experiment::Tree => Self { seeds: 200, ..base },
            Experiment::Decomposition => Self { j: 10, box_bounds: vec![256, 512], seeds: 100, ..base },
        }
    }

    /// Parses a JSON object on top of the canonical configuration of its
    /// experiment; `experiment` may come from the file or from `fallback`.
    pub fn from_json(text: &str, fallback: Option<Experiment>) -> Result<Self, HarnessError> {
        let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("invalid JSON: {e}")))?;
        Self::from_value(value, fallback)
    }

    pub fn from_value(value: Value, fallback: Option<Experiment>) -> Result<Self, HarnessError> {
        let Value::Object(map) = value else {
            return Err(HarnessError::Config("config must be a JSON object".into()));
        };
        let from_file = match map.get("experiment") {
            Some(v) => Some(serde_json::from_value::<Experiment>(v.clone()).map_err(|e| HarnessError::Config(format!("experiment: {e}")))?),
            None => None,
        };
        let experiment = match (from_file, fallback) {
            (Some(a), Some(b)) if a != b => {
                return Err(HarnessError::Config(format!("config is for `{}`, not `{}`", a.name(), b.name())));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(HarnessError::Config("no experiment given".into())),
        };
        let mut merged = serde_json::to_value(Self::canonical(experiment)).expect("config serializes");
        merge(&mut merged, Value::Object(map));
        serde_json::from_value(merged).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Hex SHA-256 of the configuration without its output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }

    pub fn weight(&self) -> Weight {
        match self.weight {
            WeightMode::Indicator => Weight::Indicator,
            WeightMode::ChiTilde => Weight::ChiTilde(self.chi_m),
        }
    }

    pub fn profile(&self) -> Profile {
        match self.profile {
            ProfileMode::RaisedCosine => Profile::RaisedCosine,
            ProfileMode::GaussianTruncated => Profile::GaussianTruncated,
        }
    }

    /// `N^d · |W|` at resolution `j + 1`.
    pub fn check_sample_cap(&self, d: usize, vector_len: usize) -> Result<(), HarnessError> {
        let bits = (self.j as usize + 1) * d;
        let w = vector_len.max(1);
        if bits >= 64 || (1usize << bits).saturating_mul(w) > MAX_SAMPLES {
            return Err(HarnessError::Config(format!("2^{bits} samples × {w} exceeds the cap of 2^24")));
        }
        Ok(())
    }

    pub fn alphas(&self) -> Result<Vec<Q>, HarnessError> {
        self.alpha.iter().map(|a| Q::from_str(a.trim()).map_err(|e| HarnessError::Config(format!("alpha `{a}`: {e}")))).collect()
    }

    pub fn s_exponents(&self) -> Result<Vec<LebesgueExponent>, HarnessError> {
        self.s.iter().map(|s| parse_exponent(s)).collect()
    }

    pub fn vector_exponents(&self) -> Result<Vec<LebesgueExponent>, HarnessError> {
        self.vector.iter().map(|s| parse_exponent(s)).collect()
    }

    /// Spatial mixed exponents per slot, each with `dim` axes; a single
    /// exponent is repeated on every axis.
    pub fn mixed_tuples(&self, dim: usize) -> Result<Vec<MixedExponent>, HarnessError> {
        self.tuples.iter().map(|t| parse_mixed(t, dim)).collect()
    }
}

pub fn parse_exponent(s: &str) -> Result<LebesgueExponent, HarnessError> {
    s.trim().parse().map_err(|e| HarnessError::Config(format!("exponent `{s}`: {e}")))
}

pub fn parse_mixed(s: &str, dim: usize) -> Result<MixedExponent, HarnessError> {
    let ExponentTuple(axes) = ExponentTuple::parse(s).map_err(|e| HarnessError::Config(format!("tuple `{s}`: {e}")))?;
    match axes.len() {
        1 => Ok(MixedExponent::uniform(dim, axes[0].clone())),
        m if m == dim => Ok(MixedExponent::per_axis(axes)),
        m => Err(HarnessError::Config(format!("tuple `{s}` has {m} axes, expected {dim}"))),
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
