//! The discretized model operator and its multilinear forms.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::decomp;
use crate::dyadic::{Tree, TileCollection};
use crate::exec::{map_range, pairwise_sum, Exec};
use crate::gridfn::GridFunction;
use crate::wavepackets::{fft_nd, PacketCache, PacketError, Profile, Spectrum, WavePacket};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error("expected {expected} input functions, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("input functions disagree in dimension, resolution or vector length")]
    Shape,
    #[error("tile index {0} is outside the collection")]
    Index(usize),
}

/// `T(f_1, …, f_n) = Σ_s |R_s|^{-(n-1)/2} Π_j ⟨f_j, φ^j_{s_j}⟩ φ^{n+1}_{s_{n+1}}`.
#[derive(Clone, Debug)]
pub struct ModelOperator {
    pub collection: TileCollection,
    pub j: u32,
    pub profile: Profile,
    /// `packets[s][slot]`.
    pub packets: Vec<Vec<Arc<WavePacket>>>,
    pub exec: Exec,
}

impl ModelOperator {
    pub fn new(collection: TileCollection, j: u32, profile: Profile) -> Result<Self, ModelError> {
        Self::with_cache(collection, j, profile, &PacketCache::new())
    }

    pub fn with_cache(collection: TileCollection, j: u32, profile: Profile, cache: &PacketCache) -> Result<Self, ModelError> {
        let packets = collection
            .tiles
            .iter()
            .map(|mt| (0..=collection.n).map(|slot| cache.get(&mt.slot(slot), j, profile)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { collection, j, profile, packets, exec: Exec::default() })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn n(&self) -> usize {
        self.collection.n
    }

    pub fn d(&self) -> usize {
        self.collection.d
    }

    pub fn all(&self) -> Vec<usize> {
        (0..self.collection.len()).collect()
    }

    /// `|R_s|^{-(n-1)/2}`.
    pub fn tile_weight(&self, s: usize) -> f64 {
        self.collection.tiles[s].spatial.measure().powf(-((self.n() as f64) - 1.0) / 2.0)
    }

    fn check_inputs(&self, fs: &[GridFunction], expected: usize) -> Result<usize, ModelError> {
        if fs.len() != expected {
            return Err(ModelError::Arity { expected, got: fs.len() });
        }
        let w = fs.first().map_or(1, GridFunction::vector_len);
        if fs.iter().any(|f| f.d != self.d() || f.j != self.j || f.vector_len() != w) {
            return Err(ModelError::Shape);
        }
        Ok(w)
    }

    fn check_subset(&self, subset: &[usize]) -> Result<(), ModelError> {
        match subset.iter().find(|&&s| s >= self.collection.len()) {
            Some(&s) => Err(ModelError::Index(s)),
            None => Ok(()),
        }
    }

    /// `⟨f, φ^slot_s⟩` for each `s` in `subset`, one entry per vector component.
    pub fn coefficients(&self, slot: usize, f: &Spectrum, subset: &[usize]) -> Vec<Vec<Complex64>> {
        map_range(self.exec, subset.len(), |i| {
            let p = &self.packets[subset[i]][slot];
            f.components.iter().map(|c| p.coefficient_component(c)).collect()
        })
    }

    /// Products `|R_s|^{-(n-1)/2} Π_{j≤n} ⟨f_j, φ^j⟩`, indexed `[i][w]` over `subset`.
    fn head_products(&self, fs: &[GridFunction], subset: &[usize], w: usize) -> Vec<Vec<Complex64>> {
        let coeffs: Vec<Vec<Vec<Complex64>>> =
            fs.iter().enumerate().map(|(slot, f)| self.coefficients(slot, &Spectrum::of(f), subset)).collect();
        (0..subset.len())
            .map(|i| {
                let wt = self.tile_weight(subset[i]);
                (0..w)
                    .map(|c| coeffs.iter().fold(Complex64::new(wt, 0.0), |acc, cs| acc * cs[i][c]))
                    .collect()
            })
            .collect()
    }

    pub fn apply(&self, fs: &[GridFunction]) -> Result<GridFunction, ModelError> {
        self.apply_subset(fs, &self.all())
    }

    /// The operator restricted to the tiles in `subset`. The output
    /// spectrum is accumulated in subset order, then inverted once.
    pub fn apply_subset(&self, fs: &[GridFunction], subset: &[usize]) -> Result<GridFunction, ModelError> {
        let w = self.check_inputs(fs, self.n())?;
        self.check_subset(subset)?;
        let heads = self.head_products(fs, subset, w);
        let n = 1usize << self.j;
        let np = n.pow(self.d() as u32);
        let mut samples = vec![Complex64::new(0.0, 0.0); np * w];
        for c in 0..w {
            let out = &mut samples[c * np..(c + 1) * np];
            for (i, &s) in subset.iter().enumerate() {
                let h = heads[i][c];
                for &(idx, v) in &self.packets[s][self.n()].spectrum {
                    out[idx] += h * v;
                }
            }
            fft_nd(out, self.d(), n, true);
        }
        let measures = fs.first().map(|f| f.measures.clone()).unwrap_or_default();
        Ok(GridFunction { d: self.d(), j: self.j, samples, measures })
    }

    /// `Σ_{s ∈ subset} |R_s|^{-(n-1)/2} Π_{j=1}^{n+1} ⟨f_j, φ^j_{s_j}⟩`, summed over
    /// vector components.
    pub fn form(&self, fs: &[GridFunction], subset: &[usize]) -> Result<Complex64, ModelError> {
        self.form_with(fs, subset, false)
    }

    /// As [`form`](Self::form); with `last_plain` the last slot uses `∫ f φ`
    /// instead of `⟨f, φ⟩`, so that `∫ T(f_1..f_n) f_{n+1} dx` is reproduced.
    pub fn form_with(&self, fs: &[GridFunction], subset: &[usize], last_plain: bool) -> Result<Complex64, ModelError> {
        let w = self.check_inputs(fs, self.n() + 1)?;
        self.check_subset(subset)?;
        let n = self.n();
        let heads = self.head_products(&fs[..n], subset, w);
        let last = Spectrum::of(&fs[n]);
        let terms: Vec<Complex64> = map_range(self.exec, subset.len(), |i| {
            let p = &self.packets[subset[i]][n];
            (0..w)
                .map(|c| {
                    let g = if last_plain {
                        p.plain_pairing(&last.components[c])
                    } else {
                        p.coefficient_component(&last.components[c])
                    };
                    heads[i][c] * g
                })
                .fold(Complex64::new(0.0, 0.0), |a, b| a + b)
        });
        Ok(pairwise_sum(&terms))
    }

    /// `(|Λ_T|, Π_j size_T(⟨f_j, φ^j⟩)·|R_T|, ratio)`; the ratio is 0 when
    /// the form vanishes.
    pub fn tree_form_ratio(&self, tree: &Tree, fs: &[GridFunction]) -> Result<(f64, f64, f64), ModelError> {
        self.check_inputs(fs, self.n() + 1)?;
        self.check_subset(&tree.members)?;
        let lambda = self.form(fs, &tree.members)?.norm();
        let mut bound = tree.top.spatial.measure();
        for (slot, f) in fs.iter().enumerate() {
            let coeffs = self.coefficients(slot, &Spectrum::of(f), &tree.members);
            let energies: Vec<f64> = coeffs.iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect();
            bound *= decomp::size_from_energies(&self.collection, &tree.members, slot, &energies);
        }
        let ratio = if lambda == 0.0 { 0.0 } else { lambda / bound };
        Ok((lambda, bound, ratio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{whitney_collection, DyadicCube, MultiTile, WhitneySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(d: usize, j: u32, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let np = 1usize << (j as usize * d);
        let samples = (0..np).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        GridFunction::from_samples(d, j, samples, Vec::new()).unwrap()
    }

    fn paraproduct(j: u32) -> TileCollection {
        whitney_collection(&WhitneySpec {
            n: 2,
            k: 0,
            d: 1,
            a: vec![vec![1, 0], vec![0, 1]],
            j_res: j,
            scales: (-4, -2),
            box_bound: None,
            i0: 0,
        })
        .unwrap()
    }

    #[test]
    fn empty_collection_gives_zero() {
        let t = ModelOperator::new(TileCollection::empty(2, 1, 1), 6, Profile::RaisedCosine).unwrap();
        let out = t.apply(&[random_fn(1, 6, 1), random_fn(1, 6, 2)]).unwrap();
        assert!(out.samples.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn single_tile_with_packet_inputs() {
        let r = DyadicCube::unshifted(-2, vec![1]);
        let freqs = vec![
            DyadicCube::new(2, vec![0], vec![1]).unwrap(),
            DyadicCube::new(2, vec![1], vec![0]).unwrap(),
            DyadicCube::new(2, vec![-2], vec![-1]).unwrap(),
        ];
        let s = TileCollection::new(2, 1, 1, 9, vec![MultiTile::new(r, freqs).unwrap()]).unwrap();
        let t = ModelOperator::new(s, 6, Profile::RaisedCosine).unwrap();
        let fs: Vec<GridFunction> = (0..2).map(|j| t.packets[0][j].values()).collect();
        let out = t.apply(&fs).unwrap();
        let expect = t.packets[0][2].values();
        let wt = 0.25f64.powf(-0.5);
        for (a, b) in out.samples.iter().zip(&expect.samples) {
            assert!((a - b * wt).norm() < 1e-12);
        }
        let tree = crate::dyadic::make_tree(&t.collection, 0, t.collection.tiles[0].slot(0), vec![0], crate::dyadic::TreeKind::Lacunary);
        let mut all = fs.clone();
        all.push(t.packets[0][2].values());
        let (lam, bound, ratio) = t.tree_form_ratio(&tree, &all).unwrap();
        assert!((lam - wt).abs() < 1e-12 && (bound - wt).abs() < 1e-12 && (ratio - 1.0).abs() < 1e-12);
        let zero = vec![GridFunction::zeros(1, 6); 3];
        assert_eq!(t.tree_form_ratio(&tree, &zero).unwrap().2, 0.0);
    }

    #[test]
    fn paraproduct_matches_bin_triple_oracle() {
        let j = 6;
        let s = paraproduct(j);
        assert!(!s.is_empty());
        let t = ModelOperator::new(s, j, Profile::RaisedCosine).unwrap();
        let fs = [random_fn(1, j, 3), random_fn(1, j, 4)];
        let out = t.apply(&fs).unwrap();
        let n = 1usize << j;
        let direct_hat = |f: &GridFunction, m: i64| -> Complex64 {
            f.samples
                .iter()
                .enumerate()
                .map(|(x, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (m * x as i64) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        };
        let hats: Vec<Vec<Complex64>> =
            fs.iter().map(|f| (0..n).map(|k| direct_hat(f, crate::wavepackets::signed_freq(k, n))).collect()).collect();
        for x in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (si, ps) in t.packets.iter().enumerate() {
                let wt = t.tile_weight(si);
                for &(i1, a1) in &ps[0].spectrum {
                    for &(i2, a2) in &ps[1].spectrum {
                        for &(i3, a3) in &ps[2].spectrum {
                            let m3 = crate::wavepackets::signed_freq(i3, n);
                            let e = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (m3 * x as i64) as f64 / n as f64);
                            acc += wt * hats[0][i1] * a1.conj() * hats[1][i2] * a2.conj() * a3 * e;
                        }
                    }
                }
            }
            assert!((acc - out.samples[x]).norm() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn duality_and_multilinearity() {
        let j = 6;
        let t = ModelOperator::new(paraproduct(j), j, Profile::RaisedCosine).unwrap();
        let (f1, f2, f3, g) = (random_fn(1, j, 5), random_fn(1, j, 6), random_fn(1, j, 7), random_fn(1, j, 8));
        let out = t.apply(&[f1.clone(), f2.clone()]).unwrap();
        let lhs = out.integral_product(&f3).unwrap();
        let rhs = t.form_with(&[f1.clone(), f2.clone(), f3.clone()], &t.all(), true).unwrap();
        assert!((lhs - rhs).norm() < 1e-10);

        let a = Complex64::new(0.3, -1.2);
        let comb = f1.scale(a).add(&g).unwrap();
        let left = t.apply(&[comb, f2.clone()]).unwrap();
        let right = t.apply(&[f1, f2.clone()]).unwrap().scale(a).add(&t.apply(&[g, f2]).unwrap()).unwrap();
        for (x, y) in left.samples.iter().zip(&right.samples) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_input_zero_form() {
        let j = 6;
        let t = ModelOperator::new(paraproduct(j), j, Profile::RaisedCosine).unwrap();
        let fs = [random_fn(1, j, 1), GridFunction::zeros(1, j), random_fn(1, j, 2)];
        assert_eq!(t.form(&fs, &t.all()).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let j = 6;
        let base = ModelOperator::new(paraproduct(j), j, Profile::RaisedCosine).unwrap();
        let fs = [random_fn(1, j, 1), random_fn(1, j, 2), random_fn(1, j, 3)];
        let a = base.clone().with_exec(Exec::Sequential).form(&fs, &base.all()).unwrap();
        let b = base.clone().with_exec(Exec::Parallel).form(&fs, &base.all()).unwrap();
        assert_eq!(a, b);
    }
}
