use helicoid_core::dyadic::{whitney_collection, DyadicCube, Tile, WhitneySpec};
use helicoid_core::testfns::gaussian_field;
use helicoid_core::wavepackets::*;
use helicoid_core::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bht(j: u32) -> WhitneySpec {
    WhitneySpec { n: 2, k: 1, d: 1, a: vec![vec![1, -1]], j_res: j, scales: (-5, -1), box_bound: None, i0: 0 }
}

/// Physical-space inner product `N^{-d} Σ_x f(x) conj(g(x))`.
fn inner(f: &[Complex64], g: &[Complex64]) -> Complex64 {
    f.iter().zip(g).map(|(a, b)| a * b.conj()).sum::<Complex64>() / f.len() as f64
}

fn tile_1d(s: i32, k: i64, wk: i64, wsh: i8) -> Tile {
    Tile::new(DyadicCube::unshifted(s, vec![k]), DyadicCube::new(-s, vec![wk], vec![wsh]).unwrap()).unwrap()
}

fn in_support(m: &[i64], w: &DyadicCube) -> bool {
    (0..m.len()).all(|a| {
        let (lo, hi) = w.bounds(a);
        (m[a] as f64 - 0.5 * (lo + hi)).abs() < DEFAULT_SUPPORT * 0.5 * (hi - lo)
    })
}

#[test]
fn collection_packets_have_exact_support() {
    let j = 8;
    let col = whitney_collection(&bht(j)).unwrap();
    assert!(col.len() > 100);
    for t in &col.tiles {
        for slot in 0..3 {
            let tile = t.slot(slot);
            for profile in [Profile::RaisedCosine, Profile::GaussianTruncated] {
                let p = build_packet(&tile, j, profile).unwrap();
                for &(i, _) in &p.spectrum {
                    assert!(in_support(&p.freq_of(i), &tile.freq));
                }
                let dense = p.dense_spectrum();
                for (i, v) in dense.iter().enumerate() {
                    if !in_support(&p.freq_of(i), &tile.freq) {
                        assert_eq!(*v, Complex64::new(0.0, 0.0));
                    }
                }
                let norm: f64 = dense.iter().map(|v| v.norm_sqr()).sum();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn frequency_disjoint_packets_are_orthogonal() {
    let j = 8;
    let col = whitney_collection(&bht(j)).unwrap();
    let packets: Vec<WavePacket> = col.tiles.iter().take(60).map(|t| build_packet(&t.slot(0), j, Profile::RaisedCosine).unwrap()).collect();
    let values: Vec<GridValues> = packets.iter().map(|p| GridValues(p.values().samples)).collect();
    let mut disjoint = 0;
    for a in 0..packets.len() {
        for b in a + 1..packets.len() {
            let sa: Vec<usize> = packets[a].spectrum.iter().map(|(i, _)| *i).collect();
            if packets[b].spectrum.iter().any(|(i, _)| sa.contains(i)) {
                continue;
            }
            disjoint += 1;
            assert!(inner(&values[a].0, &values[b].0).norm() < 1e-12);
        }
    }
    assert!(disjoint > 100);
}

struct GridValues(Vec<Complex64>);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coefficients_match_physical_inner_product(seed in any::<u64>(), d in 1usize..=2) {
        let j = if d == 1 { 8 } else { 5 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = gaussian_field(d, j, j, &mut rng);
        let spec = Spectrum::of(&f);
        for _ in 0..8 {
            let s = rng.random_range(-(j as i32) + 2..=0);
            let per = 1i64 << (-s);
            let half = (1i64 << j) / 2;
            let wmax = (half >> (-s)).max(1);
            let r = DyadicCube::unshifted(s, (0..d).map(|_| rng.random_range(0..per)).collect());
            let w = DyadicCube::new(-s, (0..d).map(|_| rng.random_range(-wmax..wmax - 1)).collect(), vec![0; d]).unwrap();
            let Ok(p) = build_packet(&Tile::new(r, w).unwrap(), j, Profile::RaisedCosine) else { continue };
            let direct = inner(&f.samples, &p.values().samples);
            let via = p.coefficient(&spec).unwrap()[0];
            prop_assert!((direct - via).norm() < 1e-10, "{direct} vs {via}");
        }
    }

    #[test]
    fn translation_and_modulation_covariance(s in -5i32..=-2, k in 0i64..32, shift in 1i64..8, wk in -3i64..1, a in 1i64..3) {
        let j = 8;
        let n = 1usize << j;
        let per = 1i64 << (-s);
        let k = k % per;
        let base = build_packet(&tile_1d(s, k, wk, 0), j, Profile::RaisedCosine).unwrap().values().samples;
        let moved = build_packet(&tile_1d(s, (k + shift) % per, wk, 0), j, Profile::RaisedCosine).unwrap().values().samples;
        let step = ((shift as usize) << (j as i32 + s) as usize) % n;
        for x in 0..n {
            prop_assert!((moved[(x + step) % n] - base[x]).norm() < 1e-12);
        }
        let modulated = build_packet(&tile_1d(s, k, wk + a, 0), j, Profile::RaisedCosine).unwrap().values().samples;
        let freq = a << (-s);
        let center = (k as f64 + 0.5) / per as f64;
        for (x, (mv, bv)) in modulated.iter().zip(&base).enumerate() {
            let phase = Complex64::from_polar(1.0, std::f64::consts::TAU * freq as f64 * (x as f64 / n as f64 - center));
            prop_assert!((mv - phase * bv).norm() < 1e-12);
        }
    }

    #[test]
    fn packets_refine_exactly(s in -5i32..=-1, k in 0i64..32, wk in -1i64..1, sh in -1i8..=1) {
        let per = 1i64 << (-s);
        let tile = tile_1d(s, k % per, wk, sh);
        let coarse = build_packet(&tile, 7, Profile::RaisedCosine).unwrap().values().samples;
        let fine = build_packet(&tile, 8, Profile::RaisedCosine).unwrap().values().samples;
        for (x, v) in coarse.iter().enumerate() {
            prop_assert!((fine[2 * x] - v).norm() < 1e-12);
        }
    }
}

/// `max_t |⟨φ_R, φ_{R + tℓ(R)}⟩| (1 + t)^4` over torus separations `t ≥ 1`.
fn decay_constant(s: i32, wk: i64, wsh: i8, j: u32) -> f64 {
    let per = 1i64 << (-s);
    let base = build_packet(&tile_1d(s, 0, wk, wsh), j, Profile::RaisedCosine).unwrap().values().samples;
    (1..=per / 2)
        .map(|t| {
            let other = build_packet(&tile_1d(s, t, wk, wsh), j, Profile::RaisedCosine).unwrap().values().samples;
            inner(&base, &other).norm() * ((1 + t) as f64).powi(4)
        })
        .fold(0.0, f64::max)
}

#[test]
fn almost_orthogonality_constant_is_stable() {
    let j = 9;
    for s in [-6, -5, -4] {
        let reference = decay_constant(s, 0, 0, j);
        assert!(reference.is_finite() && reference > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(s as u64);
        for _ in 0..6 {
            let wk = rng.random_range(-2..2);
            let wsh = rng.random_range(-1..=1);
            let c = decay_constant(s, wk, wsh, j);
            assert!(c <= 1.25 * reference && c >= 0.8 * reference, "scale {s}: {c} vs {reference}");
        }
    }
}
