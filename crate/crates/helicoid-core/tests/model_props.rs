use helicoid_core::dyadic::{whitney_collection, DyadicCube, MultiTile, TileCollection, WhitneySpec};
use helicoid_core::gridfn::{weight_field, GridFunction, Weight};
use helicoid_core::model::ModelOperator;
use helicoid_core::testfns::gaussian_field;
use helicoid_core::wavepackets::{build_packet, Profile};
use helicoid_core::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const J: u32 = 8;

fn bht_collection() -> TileCollection {
    whitney_collection(&WhitneySpec { n: 2, k: 1, d: 1, a: vec![vec![1, -1]], j_res: J, scales: (-5, -1), box_bound: None, i0: 0 }).unwrap()
}

/// Translates every frequency component `i` by `gamma[i]·b`.
fn translate_freqs(t: &MultiTile, gamma: &[i64], b: i64) -> MultiTile {
    let freqs = t
        .freqs
        .iter()
        .zip(gamma)
        .map(|(w, g)| {
            let side = 1i64 << w.scale;
            let corner = w.corner.iter().map(|c| c + g * b / side).collect();
            DyadicCube::new(w.scale, corner, w.shift.clone()).unwrap()
        })
        .collect();
    MultiTile::new(t.spatial.clone(), freqs).unwrap()
}

fn within_nyquist(t: &MultiTile) -> bool {
    let half = (1i64 << J) as f64 / 2.0;
    t.freqs.iter().all(|w| {
        let (lo, hi) = w.bounds(0);
        lo >= -half && hi <= half
    })
}

#[test]
fn bht_collection_is_closed_under_symmetry_translation() {
    let col = bht_collection();
    let gamma = [1, 1, -2];
    let b = 32;
    let mut inside = 0;
    for t in &col.tiles {
        for sign in [1, -1] {
            let moved = translate_freqs(t, &gamma, sign * b);
            if within_nyquist(&moved) {
                inside += 1;
                assert!(col.tiles.contains(&moved), "{t:?} shifted by {}", sign * b);
            }
        }
    }
    assert!(inside > col.len() / 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn modulation_along_the_symmetry_preserves_the_form(seed in any::<u64>(), b_mult in 1i64..=2) {
        let col = bht_collection();
        let gamma = [1i64, 1, -2];
        let b = 32 * b_mult;
        let index: std::collections::HashMap<&MultiTile, usize> = col.tiles.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let mut shifted = Vec::new();
        let mut base = Vec::new();
        for (i, t) in col.tiles.iter().enumerate() {
            let back = translate_freqs(t, &gamma, -b);
            if let Some(&k) = index.get(&back) {
                shifted.push(i);
                base.push(k);
            }
        }
        prop_assert!(!shifted.is_empty());
        let op = ModelOperator::new(col, J, Profile::RaisedCosine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs: Vec<GridFunction> = (0..3).map(|_| gaussian_field(1, J, J, &mut rng)).collect();
        let n = 1usize << J;
        let modulated: Vec<GridFunction> = fs
            .iter()
            .zip(gamma)
            .map(|(f, g)| {
                let samples = f
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(x, v)| v * Complex64::from_polar(1.0, std::f64::consts::TAU * (g * b) as f64 * x as f64 / n as f64))
                    .collect();
                GridFunction::from_samples(1, J, samples, Vec::new()).unwrap()
            })
            .collect();
        let lhs = op.form(&modulated, &shifted).unwrap();
        let rhs = op.form(&fs, &base).unwrap();
        prop_assert!((lhs.norm() - rhs.norm()).abs() < 1e-8 * rhs.norm().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn far_inputs_obey_the_chi_tilde_tail(seed in any::<u64>(), r0_idx in 0i64..4, m in prop::sample::select(vec![2u32, 4, 8])) {
        let col = bht_collection();
        let r0 = DyadicCube::unshifted(-3, vec![2 * r0_idx]);
        let pool: Vec<usize> = (0..col.len()).filter(|&i| r0.contains_cube(&col.tiles[i].spatial)).collect();
        prop_assert!(!pool.is_empty());
        let op = ModelOperator::new(col.clone(), J, Profile::RaisedCosine).unwrap();
        // Inputs supported at toroidal distance ≥ 4ℓ(R₀) from R₀.
        let n = 1usize << J;
        let ell = r0.side();
        let (lo, hi) = r0.bounds(0);
        let far = |x: f64| {
            let y = lo + (x - lo).rem_euclid(1.0);
            let dist = if y < hi { 0.0 } else { (y - hi).min(lo + 1.0 - y) };
            dist >= 4.0 * ell
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs: Vec<GridFunction> = (0..3)
            .map(|_| {
                let g = gaussian_field(1, J, J, &mut rng);
                let samples = g.samples.iter().enumerate().map(|(x, v)| if far(x as f64 / n as f64) { *v } else { Complex64::new(0.0, 0.0) }).collect();
                GridFunction::from_samples(1, J, samples, Vec::new()).unwrap()
            })
            .collect();
        let form = op.form(&fs, &pool).unwrap().norm();
        // |⟨f, φ_s⟩| ≤ C_M ℓ(R_s)^{-1/2} ∫ |f| χ̃^M_{R_s}, with C_M the measured decay constant.
        let mut prediction = 0.0;
        for &i in &pool {
            let t = &col.tiles[i];
            let mut term = op.tile_weight(i);
            for (slot, f) in fs.iter().enumerate() {
                let p = build_packet(&t.slot(slot), J, Profile::RaisedCosine).unwrap();
                let c = p.adaptedness().decay.iter().find(|(mm, _)| *mm == m).unwrap().1;
                let w = weight_field(&t.spatial, 1, J, Weight::ChiTilde(m as f64));
                let mass: f64 = f.samples.iter().zip(&w).map(|(v, w)| v.norm() * w).sum::<f64>() / n as f64;
                term *= c * t.spatial.side().powf(-0.5) * mass;
            }
            prediction += term;
        }
        prop_assert!(form <= prediction * (1.0 + 1e-9), "{form} > {prediction}");
    }
}
