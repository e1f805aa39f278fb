//! Seeded random inputs: band-limited complex Gaussian fields and unions of
//! dyadic cubes.
//!
//! Every generator takes a base resolution `j_base` that fixes the data and
//! an evaluation resolution `j ≥ j_base`, so the same seed gives the same
//! continuum function at J and J+1.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dyadic::DyadicCube;
use crate::gridfn::GridFunction;
use crate::wavepackets::fft_nd;

fn torus_len(d: usize, j: u32) -> usize {
    1usize << (j as usize * d)
}

/// Frequencies `m ∈ ℤ^d` with `|m_i| < 2^{j_base}/4` on every axis.
fn band(d: usize, j_base: u32) -> Vec<Vec<i64>> {
    let cut = (1i64 << j_base) / 4;
    let side = (2 * cut - 1).max(1) as usize;
    (0..side.pow(d as u32))
        .map(|mut t| {
            let mut m = vec![0i64; d];
            for a in (0..d).rev() {
                m[a] = (t % side) as i64 - (cut - 1).max(0);
                t /= side;
            }
            m
        })
        .collect()
}

fn synthesize(d: usize, j: u32, modes: &[(Vec<i64>, Complex64)]) -> Vec<Complex64> {
    let n = 1usize << j;
    let mut data = vec![Complex64::new(0.0, 0.0); torus_len(d, j)];
    for (m, c) in modes {
        let idx = m.iter().fold(0usize, |acc, &mi| acc * n + mi.rem_euclid(n as i64) as usize);
        data[idx] += c;
    }
    fft_nd(&mut data, d, n, true);
    data
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random trigonometric polynomial with i.i.d. standard complex normal
/// coefficients on the band `|m_i| < 2^{j_base}/4`, scaled so that
/// `E|f(x)|² = 1`, sampled at resolution `j`.
pub fn gaussian_field<R: Rng + ?Sized>(d: usize, j_base: u32, j: u32, rng: &mut R) -> GridFunction {
    assert!(j >= j_base, "evaluation resolution below the base resolution");
    let modes = band(d, j_base);
    let norm = (modes.len() as f64).sqrt().recip();
    let coeffs: Vec<(Vec<i64>, Complex64)> = modes.into_iter().map(|m| (m, complex_normal(rng) * norm)).collect();
    GridFunction::from_samples(d, j, synthesize(d, j, &coeffs), Vec::new()).expect("shape is consistent")
}

/// Vector-valued field: one independent [`gaussian_field`] per point of the
/// product measure space `measures`.
pub fn gaussian_vector_field<R: Rng + ?Sized>(
    d: usize,
    j_base: u32,
    j: u32,
    measures: Vec<Vec<f64>>,
    rng: &mut R,
) -> GridFunction {
    let nw: usize = measures.iter().map(|m| m.len()).product();
    let mut samples = Vec::with_capacity(nw * torus_len(d, j));
    for _ in 0..nw {
        samples.extend(gaussian_field(d, j_base, j, rng).samples);
    }
    GridFunction::from_samples(d, j, samples, measures).expect("shape is consistent")
}

/// A uniformly chosen cube of the unshifted lattice at a scale drawn from
/// `scales = (lo, hi)`.
pub fn random_cube<R: Rng + ?Sized>(d: usize, scales: (i32, i32), rng: &mut R) -> DyadicCube {
    let s = rng.random_range(scales.0..=scales.1);
    let per_axis = 1i64 << (-s);
    DyadicCube::unshifted(s, (0..d).map(|_| rng.random_range(0..per_axis)).collect())
}

/// Between 1 and `max_cubes` random cubes with scales in `[-j_base, -1]`.
pub fn random_dyadic_set<R: Rng + ?Sized>(d: usize, j_base: u32, max_cubes: usize, rng: &mut R) -> Vec<DyadicCube> {
    let count = rng.random_range(1..=max_cubes.max(1));
    (0..count).map(|_| random_cube(d, (-(j_base as i32), -1), rng)).collect()
}

/// Indicator of the union of `cubes` at resolution `j`.
pub fn indicator(d: usize, j: u32, cubes: &[DyadicCube]) -> GridFunction {
    GridFunction::from_fn(d, j, |x| {
        let inside = cubes.iter().any(|c| (0..d).all(|a| {
            let (lo, hi) = c.bounds(a);
            x[a] >= lo && x[a] < hi
        }));
        Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
    })
}

/// Function constant on the cubes of scale `-j_base` with i.i.d. values of
/// modulus in `[0, 1)` and uniform phase, sampled at resolution `j`; one
/// independent field per point of `measures`.
pub fn random_step<R: Rng + ?Sized>(d: usize, j_base: u32, j: u32, measures: Vec<Vec<f64>>, rng: &mut R) -> GridFunction {
    assert!(j >= j_base, "evaluation resolution below the base resolution");
    let nw: usize = measures.iter().map(|m| m.len()).product();
    let coarse = torus_len(d, j_base);
    let n = 1usize << j;
    let shift = j - j_base;
    let mut samples = Vec::with_capacity(nw * torus_len(d, j));
    for _ in 0..nw {
        let cells: Vec<Complex64> = (0..coarse)
            .map(|_| Complex64::from_polar(rng.random::<f64>(), std::f64::consts::TAU * rng.random::<f64>()))
            .collect();
        for idx in 0..torus_len(d, j) {
            let mut t = idx;
            let mut cell = 0usize;
            let mut stride = 1usize;
            for _ in 0..d {
                cell += ((t % n) >> shift) * stride;
                stride <<= j_base;
                t /= n;
            }
            samples.push(cells[cell]);
        }
    }
    GridFunction::from_samples(d, j, samples, measures).expect("shape is consistent")
}
