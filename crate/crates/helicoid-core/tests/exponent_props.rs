use std::collections::BTreeMap;

use helicoid_core::exponents::*;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Distributes `2L` units over `slots` counters capped at `L`, steered by
/// `choices`; the result divided by `2L` is a point of the closed local-L²
/// Hölder region.
fn capped_composition(slots: usize, half: i64, choices: &[u32]) -> Vec<i64> {
    let mut c = vec![0i64; slots];
    for u in 0..(2 * half) as usize {
        let open: Vec<usize> = (0..slots).filter(|&j| c[j] < half).collect();
        c[open[choices[u % choices.len()] as usize % open.len()]] += 1;
    }
    c
}

fn tuple_from_counts(counts: &[i64], den: i64) -> ExponentTuple {
    ExponentTuple::from_recips(counts.iter().map(|&c| q(c, den)).collect())
}

/// Brute force over α with `64·α_j ∈ {1, …, 31}`, `Σ α_j = k`. For k = 1 this
/// is the θ grid itself; for k ≥ 2 every such α is the image of a θ on the
/// 1/64 grid because hypersimplices have the integer decomposition property.
fn grid_member(k: usize, t: &ExponentTuple) -> bool {
    let recips = t.recips();
    let ok = |j: usize, units: i64| -> bool { &recips[j] < &(Q::one() - q(units, 64)) };
    fn rec(j: usize, left: i64, m: usize, ok: &dyn Fn(usize, i64) -> bool) -> bool {
        if j + 1 == m {
            return (1..=31).contains(&left) && ok(j, left);
        }
        (1..=31.min(left)).any(|a| ok(j, a) && rec(j + 1, left - a, m, ok))
    }
    rec(0, 64 * k as i64, t.arity(), &ok)
}

fn random_recip(rng: &mut ChaCha8Rng, max_num: i64, den: i64) -> Q {
    q(rng.random_range(0..=max_num), den)
}

/// Hölder tuple with `1/p_j ∈ [0, 1)` for the first n slots and the last slot
/// closing the sum.
fn random_holder(rng: &mut ChaCha8Rng, n: usize) -> ExponentTuple {
    let den = rng.random_range(2..=60);
    let mut r: Vec<Q> = (0..n).map(|_| random_recip(rng, den - 1, den)).collect();
    let s = r.iter().fold(Q::zero(), |a, b| a + b);
    r.push(Q::one() - s);
    ExponentTuple::from_recips(r)
}

proptest! {
    #[test]
    fn alpha_from_theta_sums_to_rank(n in 2usize..=6, kk in 1usize..=3, raw in proptest::collection::vec(0u32..20, 1..40)) {
        let k = 1 + (kk - 1) % (n / 2);
        let subsets = k_subsets(n + 1, k);
        let w: Vec<i64> = subsets.iter().enumerate().map(|(i, _)| raw[i % raw.len()] as i64 + 1).collect();
        let total: i64 = w.iter().sum();
        let weights: BTreeMap<Vec<usize>, Q> = subsets.into_iter().zip(w).map(|(s, wi)| (s, q(wi, total))).collect();
        let theta = ThetaVector::new(n, k, weights).unwrap();
        let alpha = alpha_from_theta(&theta);
        prop_assert_eq!(alpha.sum(), q(k as i64, 1));
    }

    #[test]
    fn closed_local_l2_region_is_in_range(n in 2usize..=6, kk in 0usize..=3, half in 1i64..=12, choices in proptest::collection::vec(any::<u32>(), 1..64)) {
        let k = kk % (n / 2 + 1);
        let counts = capped_composition(n + 1, half, &choices);
        let t = tuple_from_counts(&counts, 2 * half);
        let d = range_membership(n, k, &t).unwrap();
        prop_assert!(d.member, "{} rejected: {:?}", t, d.reason);
        if let Some(w) = d.witness {
            prop_assert!(is_range_witness(&t, &w).unwrap());
        }
    }

    #[test]
    fn lowering_an_input_exponent_keeps_the_witness(seed in any::<u64>(), n in 2usize..=4, slot in 0usize..4, step in 1i64..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = if n >= 4 && rng.random_bool(0.5) { 2 } else { 1 };
        let t = random_holder(&mut rng, n);
        let d = range_membership(n, k, &t).unwrap();
        prop_assume!(d.member);
        let witness = d.witness.unwrap();
        let j = slot % n;
        let mut r = t.recips();
        let delta = q(step, 64).min(r[j].clone());
        r[j] -= &delta;
        r[n] += &delta;
        let lowered = ExponentTuple::from_recips(r);
        if is_range_witness(&lowered, &witness).unwrap() {
            prop_assert!(range_membership(n, k, &lowered).unwrap().member);
        }
    }

    #[test]
    fn closed_form_matches_theta_lp(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = if n >= 4 && rng.random_bool(0.5) { 2 } else { 1 };
        let t = random_holder(&mut rng, n);
        let closed = range_membership(n, k, &t).unwrap().member;
        let slack = range_slack_lp(n, k, &t).unwrap();
        prop_assert_eq!(closed, slack.is_some_and(|s| s.is_positive()));
    }
}

#[test]
fn rank_two_membership_implies_pair_and_triple_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7432);
    let mut members = 0;
    for _ in 0..10_000 {
        let den = rng.random_range(2..=48);
        let mut r: Vec<Q> = (0..4).map(|_| random_recip(&mut rng, (3 * den) / 4, den)).collect();
        let s = r.iter().fold(Q::zero(), |a, b| a + b);
        r.push(Q::one() - s);
        let t = ExponentTuple::from_recips(r.clone());
        if !range_membership(4, 2, &t).unwrap().member {
            continue;
        }
        members += 1;
        for a in 0..4 {
            for b in a + 1..4 {
                assert!(&r[a] + &r[b] < q(3, 2), "{t}: pair ({a},{b})");
                for c in b + 1..4 {
                    assert!(&r[a] + &r[b] + &r[c] < q(2, 1), "{t}: triple ({a},{b},{c})");
                }
            }
        }
    }
    assert!(members > 1000, "only {members} members sampled");
}

#[test]
fn lp_agrees_with_theta_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut compared = 0;
    for (n, k, trials) in [(2, 1, 300), (3, 1, 200), (4, 1, 60), (4, 2, 60)] {
        for _ in 0..trials {
            let t = random_holder(&mut rng, n);
            let Some(slack) = range_slack_lp(n, k, &t).unwrap() else {
                assert!(!grid_member(k, &t));
                continue;
            };
            let member = slack.is_positive();
            if member && slack <= q(1, 64) {
                continue;
            }
            assert_eq!(grid_member(k, &t), member, "n={n} k={k} {t} slack {slack}");
            compared += 1;
        }
    }
    assert!(compared > 400);
}

#[test]
fn four_thirds_pair_is_rejected() {
    let t = ExponentTuple::from_recips(vec![q(3, 4), q(3, 4), q(-1, 2)]);
    assert!(!range_membership(2, 1, &t).unwrap().member);
}
