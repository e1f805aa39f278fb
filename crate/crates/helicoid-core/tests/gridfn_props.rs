use helicoid_core::dyadic::DyadicCube;
use helicoid_core::exponents::{q, LebesgueExponent, MixedExponent};
use helicoid_core::gridfn::*;
use helicoid_core::testfns::{gaussian_field, random_cube, random_step};
use helicoid_core::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reciprocals `0, 1/4, 1/3, 1/2, 2/3` indexed by `i`.
fn exponent(i: usize) -> LebesgueExponent {
    match i % 5 {
        0 => LebesgueExponent::infinity(),
        1 => LebesgueExponent::from_recip(q(1, 4)),
        2 => LebesgueExponent::from_recip(q(1, 3)),
        3 => LebesgueExponent::from_recip(q(1, 2)),
        _ => LebesgueExponent::from_recip(q(2, 3)),
    }
}

fn random_function(seed: u64, d: usize, j: u32) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if seed % 2 == 0 {
        gaussian_field(d, j, j, &mut rng)
    } else {
        random_step(d, j - 1, j, Vec::new(), &mut rng)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixed_norm_is_absolutely_homogeneous(seed in any::<u64>(), d in 1usize..=3, e in proptest::collection::vec(0usize..5, 3), re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let j = if d == 3 { 3 } else { 5 };
        let f = random_function(seed, d, j);
        let spec = NormSpec::scalar(MixedExponent::per_axis((0..d).map(|a| exponent(e[a])).collect()));
        let c = Complex64::new(re, im);
        let lhs = mixed_norm(&f.scale(c), &spec).unwrap();
        let rhs = c.norm() * mixed_norm(&f, &spec).unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn equal_exponents_group_freely(seed in any::<u64>(), d in 2usize..=3, e in 0usize..5) {
        let j = if d == 3 { 3 } else { 5 };
        let f = random_function(seed, d, j);
        let p = exponent(e);
        let split = mixed_norm(&f, &NormSpec::scalar(MixedExponent::per_axis(vec![p.clone(); d]))).unwrap();
        let joint = mixed_norm(&f, &NormSpec::scalar(MixedExponent::new(vec![(d, p.clone())]).unwrap())).unwrap();
        let partial = mixed_norm(&f, &NormSpec::scalar(MixedExponent::new(vec![(1, p.clone()), (d - 1, p)]).unwrap())).unwrap();
        prop_assert!(rel_close(split, joint, 1e-12));
        prop_assert!(rel_close(partial, joint, 1e-12));
    }

    #[test]
    fn holder_per_axis(seed in any::<u64>(), d in 1usize..=2, e1 in proptest::collection::vec(0usize..4, 2), e2 in proptest::collection::vec(0usize..4, 2)) {
        let f = random_function(seed, d, 5);
        let g = random_function(seed.wrapping_add(1), d, 5);
        let p1: Vec<LebesgueExponent> = (0..d).map(|a| exponent(e1[a])).collect();
        let p2: Vec<LebesgueExponent> = (0..d).map(|a| exponent(e2[a])).collect();
        let p: Vec<LebesgueExponent> = p1.iter().zip(&p2).map(|(a, b)| LebesgueExponent::from_recip(a.recip() + b.recip())).collect();
        let lhs = mixed_norm(&f.mul(&g).unwrap(), &NormSpec::scalar(MixedExponent::per_axis(p))).unwrap();
        let rhs = mixed_norm(&f, &NormSpec::scalar(MixedExponent::per_axis(p1))).unwrap()
            * mixed_norm(&g, &NormSpec::scalar(MixedExponent::per_axis(p2))).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn chi_tilde_average_dominates_indicator_average(seed in any::<u64>(), d in 1usize..=2, e in 1usize..5, m in 4.0f64..200.0) {
        let f = random_function(seed, d, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let r = random_cube(d, (-5, 0), &mut rng);
        let p = exponent(e);
        let plain = ave(&f, &r, &p, Weight::Indicator).unwrap();
        let smooth = ave(&f, &r, &p, Weight::ChiTilde(m)).unwrap();
        prop_assert!(plain <= smooth * (1.0 + 1e-12));
    }
}

/// Brute-force dyadic maximal function: for each point, the largest average
/// of `|f|` over the unshifted dyadic cubes containing it.
fn dyadic_maximal_brute(f: &GridFunction) -> Vec<f64> {
    let n = f.n();
    let d = f.d;
    (0..f.points())
        .map(|x| {
            let c = f.coords(x);
            let mut best = 0.0f64;
            for level in 0..=f.j {
                let side = n >> level;
                let mut sum = 0.0;
                for y in 0..f.points() {
                    let cy = f.coords(y);
                    if (0..d).all(|a| cy[a] / side == c[a] / side) {
                        sum += f.samples[y].norm();
                    }
                }
                best = best.max(sum / side.pow(d as u32) as f64);
            }
            best
        })
        .collect()
}

#[test]
fn full_lattice_size_is_dyadic_maximal_sup() {
    let one = LebesgueExponent::from_int(1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d, j) in [(1usize, 6u32), (2, 3)] {
        for _ in 0..5 {
            let seed: u64 = rng.random();
            let f = random_function(seed, d, j);
            let size = spatial_size(&f, &full_lattice(d, j), &one, Weight::Indicator).unwrap();
            let brute = dyadic_maximal_brute(&f).into_iter().fold(0.0f64, f64::max);
            assert!(rel_close(size, brute, 1e-12), "{size} vs {brute}");
        }
    }
}

#[test]
fn torus_average_is_l1_norm() {
    let f = random_function(4, 2, 4);
    let one = LebesgueExponent::from_int(1);
    let a = ave(&f, &DyadicCube::torus(2), &one, Weight::Indicator).unwrap();
    assert!(rel_close(a, lp_norm(&f, &one).unwrap(), 1e-12));
}
