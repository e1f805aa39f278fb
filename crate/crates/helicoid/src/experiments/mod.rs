//! One driver per experiment, plus the shared pieces: collections, operators
//! at the two resolutions, and seeded test data.

mod decomposition;
mod endpoint;
mod local;
mod loomis_whitney;
mod maximal;
mod mixed;
mod range;
mod sparse;
mod tree;

use crate::config::{Experiment, ExperimentConfig, MAX_TILES};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::dyadic::{whitney_collection, DyadicCube, TileCollection, WhitneySpec};
use helicoid_core::gridfn::{mixed_norm, GridFunction, NormSpec};
use helicoid_core::model::ModelOperator;
use helicoid_core::testfns::{gaussian_field, indicator, random_dyadic_set, random_step};
use helicoid_core::wavepackets::PacketCache;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn build(cfg: &ExperimentConfig) -> Result<Box<dyn Driver>, HarnessError> {
    Ok(match cfg.experiment {
        Experiment::LocalEstimate => Box::new(local::LocalEstimate::new(cfg)?),
        Experiment::LoomisWhitney => Box::new(loomis_whitney::LoomisWhitney::new(cfg)?),
        Experiment::MixedNormScan => Box::new(mixed::MixedNormScan::new(cfg)?),
        Experiment::MaximalSuite => Box::new(maximal::MaximalSuite::new(cfg)?),
        Experiment::SparseSuite => Box::new(sparse::SparseSuite::new(cfg)?),
        Experiment::Endpoint => Box::new(endpoint::Endpoint::new(cfg)?),
        Experiment::RangeScan => Box::new(range::RangeScan::new(cfg)?),
        Experiment::Tree => Box::new(tree::TreeEstimate::new(cfg)?),
        Experiment::Decomposition => Box::new(decomposition::Decomposition::new(cfg)?),
    })
}

/// `[I_{dn}]` for rank 0 and `[I_d, -I_d]` for `n = 2, k = 1`.
fn default_matrix(d: usize, n: usize, k: usize) -> Option<Vec<Vec<i64>>> {
    let unit = |i: usize, j: usize| i64::from(i == j);
    match (n, k) {
        (_, 0) => Some((0..d * n).map(|i| (0..d * n).map(|j| unit(i, j)).collect()).collect()),
        (2, 1) => Some((0..d).map(|i| (0..2 * d).map(|j| if j < d { unit(i, j) } else { -unit(i, j - d) }).collect()).collect()),
        _ => None,
    }
}

/// Whitney collection at the base resolution, checked against the tile cap.
pub(crate) fn collection(cfg: &ExperimentConfig, box_bound: Option<i64>) -> Result<TileCollection, HarnessError> {
    if 2 * cfg.k >= cfg.n + 1 {
        return Err(HarnessError::Config(format!("rank k = {} needs k < (n+1)/2 for n = {}", cfg.k, cfg.n)));
    }
    let a = match &cfg.matrix {
        Some(a) => a.clone(),
        None => default_matrix(cfg.d, cfg.n, cfg.k).ok_or_else(|| HarnessError::Config(format!("no default matrix for n = {}, k = {}", cfg.n, cfg.k)))?,
    };
    let spec = WhitneySpec { n: cfg.n, k: cfg.k, d: cfg.d, a, j_res: cfg.j, scales: cfg.scales, box_bound, i0: 0 };
    let col = whitney_collection(&spec).config()?;
    if col.len() > MAX_TILES {
        return Err(HarnessError::Config(format!("{} tiles exceed the cap of {MAX_TILES}", col.len())));
    }
    if col.is_empty() {
        return Err(HarnessError::Config("the collection is empty".into()));
    }
    Ok(col)
}

/// Model operators over `col` at resolutions `j` and `j + 1`.
pub(crate) fn operators(cfg: &ExperimentConfig, col: &TileCollection) -> Result<[ModelOperator; 2], HarnessError> {
    cfg.check_sample_cap(cfg.d, 1)?;
    let cache = PacketCache::from_env();
    let at = |j| ModelOperator::with_cache(col.clone(), j, cfg.profile(), &cache).compute();
    Ok([at(cfg.j)?, at(cfg.j + 1)?])
}

pub(crate) fn rng(cfg: &ExperimentConfig, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed(index))
}

/// Test data family of a trial: smooth fields on even seeds, indicators of
/// random dyadic sets on odd ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Family {
    Gaussian,
    Indicator,
    Step,
}

impl Family {
    pub(crate) fn of_seed(seed: u64) -> Self {
        if seed % 2 == 0 {
            Family::Gaussian
        } else {
            Family::Indicator
        }
    }

    pub(crate) fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Indicator => "indicator",
            Family::Step => "step",
        }
    }

    /// `count` scalar functions fixed at resolution `j_base`, sampled at `j`.
    /// Draws the same random numbers for every `j`.
    pub(crate) fn draw(self, d: usize, j_base: u32, j: u32, count: usize, rng: &mut ChaCha8Rng) -> Vec<GridFunction> {
        (0..count)
            .map(|_| match self {
                Family::Gaussian => gaussian_field(d, j_base, j, rng),
                Family::Indicator => indicator(d, j, &random_dyadic_set(d, j_base, 4, rng)),
                Family::Step => random_step(d, j_base, j, Vec::new(), rng),
            })
            .collect()
    }
}

/// `num / den`, with `0/0 = 0` and `x/0 = ∞`.
pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// `‖out‖ / Π_j ‖f_j‖` in the given norms.
pub(crate) fn norm_ratio(out: &GridFunction, out_spec: &NormSpec, fs: &[GridFunction], specs: &[NormSpec]) -> Result<f64, HarnessError> {
    let num = mixed_norm(out, out_spec).compute()?;
    let mut den = 1.0;
    for (f, s) in fs.iter().zip(specs) {
        den *= mixed_norm(f, s).compute()?;
    }
    Ok(ratio(num, den))
}

pub(crate) fn torus(d: usize) -> DyadicCube {
    DyadicCube::torus(d)
}
