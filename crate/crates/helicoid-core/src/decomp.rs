//! Size, greedy tree decomposition, size-level forests and the local estimate.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::dyadic::{best_top, make_tree, spatial_projection, tile_order, DyadicCube, Relation, Tile, TileCollection, TopScore, Tree, TreeKind};
use crate::exponents::{AlphaTuple, LebesgueExponent};
use crate::gridfn::{spatial_size, weight_field, GridError, GridFunction, Weight};
use crate::model::{ModelError, ModelOperator};
use crate::wavepackets::Spectrum;

/// Number of λ levels tried by [`forest_decomposition`] below the top level.
pub const DEFAULT_LEVELS: usize = 40;

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("size {size} exceeds lambda {lambda}")]
    SizeExceedsLambda { size: f64, lambda: f64 },
    #[error("form is {form} while a spatial size vanishes")]
    Anomaly { form: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `sup_T ((1/|R_T|) Σ_{s∈T} e_s)^{1/2}` over lacunary trees `T ⊆ pool` in
/// `slot`, where `energies[i]` belongs to `pool[i]`.
pub fn size_from_energies(s: &TileCollection, pool: &[usize], slot: usize, energies: &[f64]) -> f64 {
    let mut w = vec![0.0; s.len()];
    for (&i, &e) in pool.iter().zip(energies) {
        w[i] = e;
    }
    best_top(s, pool, slot, TreeKind::Lacunary, &w, TopScore::Density).map_or(0.0, |c| c.score.sqrt())
}

/// `|⟨f, φ^slot_s⟩|²` summed over vector components, for every `s` in `pool`.
pub fn energies(t: &ModelOperator, pool: &[usize], slot: usize, f: &GridFunction) -> Vec<f64> {
    t.coefficients(slot, &Spectrum::of(f), pool)
        .iter()
        .map(|c| c.iter().map(Complex64::norm_sqr).sum())
        .collect()
}

/// Exact size of `⟨f, φ^slot⟩` on `pool`.
pub fn size(t: &ModelOperator, pool: &[usize], slot: usize, f: &GridFunction) -> f64 {
    size_from_energies(&t.collection, pool, slot, &energies(t, pool, slot, f))
}

/// Ratio of the size to the spatial size (p = 1, χ̃ weight) over the spatial
/// cubes of `pool`; 0 when the size vanishes.
pub fn john_nirenberg_check(t: &ModelOperator, pool: &[usize], slot: usize, f: &GridFunction) -> Result<f64, DecompError> {
    let sz = size(t, pool, slot, f);
    if sz == 0.0 {
        return Ok(0.0);
    }
    let mut cubes: Vec<DyadicCube> = pool.iter().map(|&i| t.collection.tiles[i].spatial.clone()).collect();
    cubes.sort();
    cubes.dedup();
    let ss = spatial_size(&f.abs(), &cubes, &LebesgueExponent::from_int(1), Weight::default())?;
    Ok(sz / ss)
}

/// A lacunary tree picked by the greedy loop, plus the tiles swept in with it
/// because their slot component lies `≤`-below the top.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtractedTree {
    pub tree: Tree,
    pub completion: Vec<usize>,
    /// Size of the lacunary tree itself.
    pub size: f64,
}

impl ExtractedTree {
    pub fn top(&self) -> &Tile {
        &self.tree.top
    }

    pub fn tiles(&self) -> impl Iterator<Item = usize> + '_ {
        self.tree.members.iter().chain(&self.completion).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    /// Tiles left over, with size at most λ/2.
    pub remaining: Vec<usize>,
    pub trees: Vec<ExtractedTree>,
    /// `Σ_T |R_T|`.
    pub energy: f64,
    /// `λ^{-2} ‖f χ̃_{R₀}‖₂²`, or `λ^{-2} ‖f‖₂²` without `R₀`.
    pub energy_bound: f64,
    /// `energy / energy_bound`, 0 when nothing was extracted.
    pub ratio: f64,
}

/// `λ^{-2} ‖f w‖₂²`, with `w = χ̃_{R₀}` or `w ≡ 1`.
pub fn energy_bound(f: &GridFunction, lambda: f64, r0: Option<&DyadicCube>) -> f64 {
    let np = f.points();
    let w = r0.map(|r| weight_field(r, f.d, f.j, Weight::default()));
    let mut total = 0.0;
    for c in 0..f.vector_len() {
        for (i, v) in f.component(c).iter().enumerate() {
            let wt = w.as_ref().map_or(1.0, |w| w[i]);
            total += v.norm_sqr() * wt * wt;
        }
    }
    total / np as f64 / (lambda * lambda)
}

/// Greedy decomposition at level `lambda` from precomputed energies
/// (`energies[i]` belongs to tile `i` of the collection).
pub fn decompose_energies(
    s: &TileCollection,
    pool: &[usize],
    slot: usize,
    energies: &[f64],
    lambda: f64,
) -> Result<(Vec<usize>, Vec<ExtractedTree>), DecompError> {
    let mut current: Vec<usize> = pool.to_vec();
    let mut trees = Vec::new();
    let mut first = true;
    loop {
        let Some(choice) = best_top(s, &current, slot, TreeKind::Lacunary, energies, TopScore::Density) else {
            break;
        };
        let sz = choice.score.sqrt();
        if first && sz > lambda * (1.0 + 1e-12) {
            return Err(DecompError::SizeExceedsLambda { size: sz, lambda });
        }
        first = false;
        if sz <= lambda / 2.0 {
            break;
        }
        let top = choice.top;
        let completion: Vec<usize> = current
            .iter()
            .copied()
            .filter(|i| !choice.members.contains(i) && tile_order(&s.tiles[*i].slot(slot), &top, Relation::LessEq, s.c0))
            .collect();
        current.retain(|i| !choice.members.contains(i) && !completion.contains(i));
        let tree = make_tree(s, slot, top, choice.members, TreeKind::Lacunary);
        trees.push(ExtractedTree { tree, completion, size: sz });
    }
    Ok((current, trees))
}

/// Extracts lacunary trees while the size of the remainder exceeds `λ/2`.
pub fn decompose(
    t: &ModelOperator,
    pool: &[usize],
    slot: usize,
    f: &GridFunction,
    lambda: f64,
    r0: Option<&DyadicCube>,
) -> Result<Decomposition, DecompError> {
    let mut e = vec![0.0; t.collection.len()];
    for (&i, v) in pool.iter().zip(energies(t, pool, slot, f)) {
        e[i] = v;
    }
    let (remaining, trees) = decompose_energies(&t.collection, pool, slot, &e, lambda)?;
    let energy: f64 = trees.iter().map(|x| x.top().spatial.measure()).sum();
    let bound = energy_bound(f, lambda, r0);
    let ratio = if energy == 0.0 { 0.0 } else { energy / bound };
    Ok(Decomposition { remaining, trees, energy, energy_bound: bound, ratio })
}

/// Trees extracted at `λ = 2^{-level}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Forest {
    pub level: i32,
    pub slot: usize,
    pub trees: Vec<ExtractedTree>,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlotForests {
    pub slot: usize,
    pub forests: Vec<Forest>,
    /// Tiles never extracted (zero or negligible coefficients).
    pub sentinel: Vec<usize>,
}

impl SlotForests {
    /// Every tile covered, forests first then the sentinel level.
    pub fn all_tiles(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.forests.iter().flat_map(|f| f.trees.iter().flat_map(|t| t.tiles())).collect();
        v.extend(&self.sentinel);
        v
    }
}

/// Runs [`decompose_energies`] at `λ = 2^{-ℓ}` for `ℓ` from
/// `floor(-log₂ size)` over `levels` levels, per slot.
pub fn forest_decomposition(t: &ModelOperator, pool: &[usize], fs: &[GridFunction], levels: usize) -> Vec<SlotForests> {
    crate::exec::map_range(t.exec, fs.len(), |slot| {
        let mut e = vec![0.0; t.collection.len()];
        for (&i, v) in pool.iter().zip(energies(t, pool, slot, &fs[slot])) {
            e[i] = v;
        }
        let pe: Vec<f64> = pool.iter().map(|&i| e[i]).collect();
        let sz = size_from_energies(&t.collection, pool, slot, &pe);
        let mut current = pool.to_vec();
        let mut forests = Vec::new();
        if sz > 0.0 {
            let top = (-sz.log2()).floor() as i32;
            for level in top..top + levels as i32 {
                let lambda = 2f64.powi(-level);
                let (rest, trees) = decompose_energies(&t.collection, &current, slot, &e, lambda)
                    .expect("size stays below the level by construction");
                current = rest;
                if !trees.is_empty() {
                    let energy = trees.iter().map(|x| x.top().spatial.measure()).sum();
                    forests.push(Forest { level, slot, trees, energy });
                }
                if current.is_empty() {
                    break;
                }
            }
        }
        SlotForests { slot, forests, sentinel: current }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalEstimate {
    pub form: f64,
    /// `Π_j size~_{R₀}(1_{E_j})^{1-α_j} · |R₀|`.
    pub bound: f64,
    pub ratio: f64,
    pub spatial_sizes: Vec<f64>,
}

/// Tiles of the collection whose spatial cube lies in `r0`.
pub fn localized_indices(s: &TileCollection, r0: &DyadicCube) -> Vec<usize> {
    (0..s.len()).filter(|&i| r0.contains_cube(&s.tiles[i].spatial)).collect()
}

/// `|Λ_{S(R₀)}(1_{E_1}, …, 1_{E_{n+1}})| / (Π_j size~_{R₀}(1_{E_j})^{1-α_j} |R₀|)`.
pub fn local_estimate_ratio(
    t: &ModelOperator,
    r0: &DyadicCube,
    es: &[GridFunction],
    alpha: &AlphaTuple,
) -> Result<LocalEstimate, DecompError> {
    local_estimate_ratio_weighted(t, r0, es, alpha, Weight::default())
}

/// [`local_estimate_ratio`] with the spatial sizes taken in `weight`.
pub fn local_estimate_ratio_weighted(
    t: &ModelOperator,
    r0: &DyadicCube,
    es: &[GridFunction],
    alpha: &AlphaTuple,
    weight: Weight,
) -> Result<LocalEstimate, DecompError> {
    let pool = localized_indices(&t.collection, r0);
    let form = t.form(es, &pool)?.norm();
    let cubes = spatial_projection(&t.collection, r0);
    let one = LebesgueExponent::from_int(1);
    let mut bound = r0.measure();
    let mut sizes = Vec::with_capacity(es.len());
    for (e, a) in es.iter().zip(alpha.to_f64()) {
        let ss = spatial_size(&e.abs(), &cubes, &one, weight)?;
        sizes.push(ss);
        bound *= ss.powf(1.0 - a);
    }
    if bound == 0.0 {
        if form > 1e-12 {
            return Err(DecompError::Anomaly { form });
        }
        return Ok(LocalEstimate { form, bound, ratio: 0.0, spatial_sizes: sizes });
    }
    Ok(LocalEstimate { form, bound, ratio: form / bound, spatial_sizes: sizes })
}
