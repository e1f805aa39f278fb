//! Complex samples on the d-torus, optionally indexed by a finite product
//! measure space, with iterated mixed norms, weighted averages and spatial
//! size.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::DyadicCube;
use crate::exec::{map_slice, Exec};
use crate::exponents::{LebesgueExponent, MixedExponent};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("size over an empty cube set is undefined")]
    EmptyCubeSet,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Samples at the points `i/N`, `N = 2^J` per axis; the vector index runs
/// over the product of the factor measures in `measures`.
///
/// Layout: `samples[w · N^d + x]` where `x` is row-major with axis 0 slowest
/// and `w` is row-major over the factors with factor 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub d: usize,
    pub j: u32,
    pub samples: Vec<Complex64>,
    pub measures: Vec<Vec<f64>>,
}

impl GridFunction {
    pub fn zeros(d: usize, j: u32) -> Self {
        let n = 1usize << (j as usize * d);
        Self { d, j, samples: vec![Complex64::new(0.0, 0.0); n], measures: Vec::new() }
    }

    pub fn vector_zeros(d: usize, j: u32, measures: Vec<Vec<f64>>) -> Self {
        let nw: usize = measures.iter().map(|m| m.len()).product();
        let n = (1usize << (j as usize * d)) * nw;
        Self { d, j, samples: vec![Complex64::new(0.0, 0.0); n], measures }
    }

    /// Scalar function from its values at the grid points.
    pub fn from_fn(d: usize, j: u32, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut g = Self::zeros(d, j);
        let mut x = vec![0.0; d];
        for idx in 0..g.points() {
            g.point_into(idx, &mut x);
            g.samples[idx] = f(&x);
        }
        g
    }

    pub fn from_samples(d: usize, j: u32, samples: Vec<Complex64>, measures: Vec<Vec<f64>>) -> Result<Self, GridError> {
        let nw: usize = measures.iter().map(|m| m.len()).product();
        let want = (1usize << (j as usize * d)) * nw;
        if samples.len() != want {
            return Err(GridError::Shape(format!("{} samples, expected {want}", samples.len())));
        }
        if measures.iter().flatten().any(|&m| m.is_nan() || m <= 0.0) {
            return Err(GridError::Shape("vector measures must be positive".into()));
        }
        Ok(Self { d, j, samples, measures })
    }

    pub fn n(&self) -> usize {
        1 << self.j
    }

    /// `N^d`.
    pub fn points(&self) -> usize {
        1usize << (self.j as usize * self.d)
    }

    /// `|𝒲|` (1 for scalar functions).
    pub fn vector_len(&self) -> usize {
        self.measures.iter().map(|m| m.len()).product()
    }

    pub fn is_scalar(&self) -> bool {
        self.vector_len() == 1
    }

    /// Integer coordinates of grid point `idx`.
    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let n = self.n();
        let mut c = vec![0; self.d];
        for a in (0..self.d).rev() {
            c[a] = idx % n;
            idx /= n;
        }
        c
    }

    fn point_into(&self, idx: usize, x: &mut [f64]) {
        let n = self.n();
        let mut idx = idx;
        for a in (0..self.d).rev() {
            x[a] = (idx % n) as f64 / n as f64;
            idx /= n;
        }
    }

    /// Samples of the `w`-th vector component.
    pub fn component(&self, w: usize) -> &[Complex64] {
        let p = self.points();
        &self.samples[w * p..(w + 1) * p]
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { samples: self.samples.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, GridError> {
        self.check_same(other)?;
        Ok(Self { samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).collect(), ..self.clone() })
    }

    pub fn add(&self, other: &Self) -> Result<Self, GridError> {
        self.check_same(other)?;
        Ok(Self { samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(), ..self.clone() })
    }

    pub fn conj(&self) -> Self {
        Self { samples: self.samples.iter().map(|v| v.conj()).collect(), ..self.clone() }
    }

    pub fn abs(&self) -> Self {
        Self { samples: self.samples.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(), ..self.clone() }
    }

    fn check_same(&self, other: &Self) -> Result<(), GridError> {
        if self.d != other.d || self.j != other.j || self.samples.len() != other.samples.len() {
            return Err(GridError::Shape("grids differ".into()));
        }
        Ok(())
    }

    /// `∫ f g dx` (no conjugation) for scalar functions.
    pub fn integral_product(&self, other: &Self) -> Result<Complex64, GridError> {
        self.check_same(other)?;
        let terms: Vec<Complex64> = self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).collect();
        Ok(crate::exec::pairwise_sum(&terms) / self.points() as f64)
    }

    /// Lifts a function of `d - 1` variables to `d` variables, constant along `axis`.
    pub fn lift_forgetting(&self, axis: usize) -> Self {
        let d = self.d + 1;
        let n = self.n();
        let mut out = Self::zeros(d, self.j);
        for idx in 0..out.points() {
            let c = out.coords(idx);
            let mut src = 0usize;
            for (a, &ci) in c.iter().enumerate() {
                if a != axis {
                    src = src * n + ci;
                }
            }
            out.samples[idx] = self.samples[src];
        }
        out
    }

    /// Writes little-endian complex64 samples (two `f32` each) and a JSON sidecar.
    pub fn write_raw(&self, path: &Path) -> Result<(), GridError> {
        let mut buf = Vec::with_capacity(self.samples.len() * 8);
        for v in &self.samples {
            buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        let side = Sidecar { d: self.d, j: self.j, w: self.measures.clone() };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read_raw(path: &Path) -> Result<Self, GridError> {
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() % 8 != 0 {
            return Err(GridError::Shape("raw length is not a multiple of 8".into()));
        }
        let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        let samples = buf.chunks_exact(8).map(|c| Complex64::new(f(&c[..4]), f(&c[4..]))).collect();
        Self::from_samples(side.d, side.j, samples, side.w)
    }

    /// CSV with one row per sample: grid coordinates, vector index, re, im.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for a in 0..self.d {
            out.push_str(&format!("x{a},"));
        }
        out.push_str("w,re,im\n");
        for w in 0..self.vector_len() {
            for (idx, v) in self.component(w).iter().enumerate() {
                for c in self.coords(idx) {
                    out.push_str(&format!("{c},"));
                }
                out.push_str(&format!("{w},{},{}\n", v.re, v.im));
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    d: usize,
    j: u32,
    w: Vec<Vec<f64>>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// Spatial mixed exponent plus the exponents over the factors of `𝒲`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormSpec {
    pub spatial: MixedExponent,
    pub vector: Vec<LebesgueExponent>,
}

impl NormSpec {
    pub fn scalar(spatial: MixedExponent) -> Self {
        Self { spatial, vector: Vec::new() }
    }
}

fn exponent_value(p: &LebesgueExponent) -> Result<f64, GridError> {
    if p.recip_f64() <= 0.0 && !p.is_infinite() {
        return Err(GridError::InvalidExponent(format!("p = {p} is not positive")));
    }
    Ok(p.to_f64())
}

/// Reduces the trailing axes of a row-major array of magnitudes group by
/// group, last group first. Axis `a` carries weights `weights[a]`.
fn iterated_norm(mut vals: Vec<f64>, shape: &[usize], weights: &[Vec<f64>], groups: &[(usize, f64)]) -> Vec<f64> {
    let mut end = shape.len();
    for &(gd, p) in groups.iter().rev() {
        let start = end - gd;
        let block: usize = shape[start..end].iter().product();
        let wblock: Vec<f64> = (0..block)
            .map(|mut t| {
                let mut w = 1.0;
                for a in (start..end).rev() {
                    w *= weights[a][t % shape[a]];
                    t /= shape[a];
                }
                w
            })
            .collect();
        vals = vals
            .chunks(block)
            .map(|chunk| {
                if p.is_infinite() {
                    chunk.iter().fold(0.0f64, |m, &v| m.max(v))
                } else {
                    let s: f64 = chunk.iter().zip(&wblock).map(|(v, w)| w * v.powf(p)).sum();
                    s.powf(1.0 / p)
                }
            })
            .collect();
        end = start;
    }
    vals
}

/// `x ↦ ‖f(x, ·)‖_{L^R_𝒲}`, with the last factor innermost.
pub fn restrict_vector_norm(f: &GridFunction, r: &[LebesgueExponent]) -> Result<GridFunction, GridError> {
    if r.len() != f.measures.len() {
        return Err(GridError::Shape(format!("{} vector exponents for {} factors", r.len(), f.measures.len())));
    }
    let groups: Vec<(usize, f64)> = r.iter().map(|p| exponent_value(p).map(|v| (1, v))).collect::<Result<_, _>>()?;
    let np = f.points();
    let shape: Vec<usize> = f.measures.iter().map(|m| m.len()).collect();
    let nw = f.vector_len();
    let samples = (0..np)
        .map(|x| {
            let vals: Vec<f64> = (0..nw).map(|w| f.samples[w * np + x].norm()).collect();
            let v = if groups.is_empty() { vals[0] } else { iterated_norm(vals, &shape, &f.measures, &groups)[0] };
            Complex64::new(v, 0.0)
        })
        .collect();
    Ok(GridFunction { d: f.d, j: f.j, samples, measures: Vec::new() })
}

/// `‖ … ‖f‖_{L^{R}_𝒲} … ‖_{L^P}` with Riemann weights `1/N` per spatial axis step.
pub fn mixed_norm(f: &GridFunction, spec: &NormSpec) -> Result<f64, GridError> {
    if spec.spatial.dim() != f.d {
        return Err(GridError::Shape(format!("spatial exponent covers {} axes, function has {}", spec.spatial.dim(), f.d)));
    }
    let g = restrict_vector_norm(f, &spec.vector)?;
    let groups: Vec<(usize, f64)> = spec
        .spatial
        .groups
        .iter()
        .map(|(gd, p)| exponent_value(p).map(|v| (*gd, v)))
        .collect::<Result<_, _>>()?;
    let n = f.n();
    let shape = vec![n; f.d];
    let weights = vec![vec![1.0 / n as f64; n]; f.d];
    let vals = g.samples.iter().map(|v| v.re).collect();
    Ok(iterated_norm(vals, &shape, &weights, &groups)[0])
}

/// Plain `L^p` norm of a scalar function on the torus.
pub fn lp_norm(f: &GridFunction, p: &LebesgueExponent) -> Result<f64, GridError> {
    if !f.is_scalar() {
        return Err(GridError::Shape("lp_norm needs a scalar function".into()));
    }
    mixed_norm(f, &NormSpec::scalar(MixedExponent::uniform(f.d, p.clone())))
}

/// Weight used in averages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    Indicator,
    /// `χ̃_R^M = (1 + dist(x, R)/ℓ(R))^{-M}` with toroidal distance.
    ChiTilde(f64),
}

impl Default for Weight {
    fn default() -> Self {
        Weight::ChiTilde(100.0)
    }
}

/// Toroidal distance from grid coordinate `i` (point `i/N`) to the closed
/// interval `[lo, hi]` along one axis, in units of `1/(3N)`.
fn axis_distance_units(i: usize, n: usize, lo: i64, hi: i64) -> i64 {
    let period = 3 * n as i64;
    let x = 3 * i as i64;
    // Bring x into [lo, lo + period).
    let x = lo + (x - lo).rem_euclid(period);
    if x <= hi {
        0
    } else {
        (x - hi).min(lo + period - x)
    }
}

/// Interval `[lo, hi]` of cube `r` along `axis` in units of `1/(3N)`; `hi`
/// is the closed right end.
fn cube_units(r: &DyadicCube, axis: usize, j: u32) -> (i64, i64) {
    let scale = r.scale + j as i32;
    assert!(scale >= 0, "cube finer than the grid");
    let f = 1i64 << scale;
    let lo = f * (3 * r.corner[axis] + r.shift[axis] as i64);
    (lo, lo + 3 * f)
}

/// The weight `w_R` at every grid point (length `N^d`).
pub fn weight_field(r: &DyadicCube, d: usize, j: u32, weight: Weight) -> Vec<f64> {
    let n = 1usize << j;
    let np = 1usize << (j as usize * d);
    let bounds: Vec<(i64, i64)> = (0..d).map(|a| cube_units(r, a, j)).collect();
    let side_units = 3.0 * n as f64 * r.side();
    let mut out = vec![0.0; np];
    let mut c = vec![0usize; d];
    for (idx, o) in out.iter_mut().enumerate() {
        let mut t = idx;
        for a in (0..d).rev() {
            c[a] = t % n;
            t /= n;
        }
        match weight {
            Weight::Indicator => {
                let inside = (0..d).all(|a| {
                    let (lo, hi) = bounds[a];
                    let x = lo + (3 * c[a] as i64 - lo).rem_euclid(3 * n as i64);
                    x < hi
                });
                *o = if inside { 1.0 } else { 0.0 };
            }
            Weight::ChiTilde(m) => {
                let d2: f64 = (0..d)
                    .map(|a| {
                        let u = axis_distance_units(c[a], n, bounds[a].0, bounds[a].1) as f64;
                        u * u
                    })
                    .sum();
                *o = (1.0 + d2.sqrt() / side_units).powf(-m);
            }
        }
    }
    out
}

/// `((1/|R|) Σ |f|^p w_R N^{-d})^{1/p}` for a scalar function; `p = ∞` gives `max |f| w_R`.
pub fn ave(f: &GridFunction, r: &DyadicCube, p: &LebesgueExponent, weight: Weight) -> Result<f64, GridError> {
    let w = weight_field(r, f.d, f.j, weight);
    ave_with_field(f, &w, r.measure(), p)
}

/// [`ave`] with a precomputed weight field.
pub fn ave_with_field(f: &GridFunction, w: &[f64], measure: f64, p: &LebesgueExponent) -> Result<f64, GridError> {
    if !f.is_scalar() {
        return Err(GridError::Shape("ave needs a scalar function; restrict the vector norm first".into()));
    }
    let p = exponent_value(p)?;
    if p.is_infinite() {
        return Ok(f.samples.iter().zip(w).fold(0.0, |m, (v, w)| m.max(v.norm() * w)));
    }
    let s: f64 = f.samples.iter().zip(w).map(|(v, w)| v.norm().powf(p) * w).sum();
    Ok((s / (f.points() as f64 * measure)).powf(1.0 / p))
}

/// `sup_R ave(f, R, p, weight)` over a nonempty cube set.
pub fn spatial_size(f: &GridFunction, cubes: &[DyadicCube], p: &LebesgueExponent, weight: Weight) -> Result<f64, GridError> {
    spatial_size_with(Exec::Auto, f, cubes, p, weight)
}

pub fn spatial_size_with(
    exec: Exec,
    f: &GridFunction,
    cubes: &[DyadicCube],
    p: &LebesgueExponent,
    weight: Weight,
) -> Result<f64, GridError> {
    if cubes.is_empty() {
        return Err(GridError::EmptyCubeSet);
    }
    let vals = map_slice(exec, cubes, |r| ave(f, r, p, weight));
    let mut best = 0.0f64;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

/// All unshifted dyadic cubes of the torus with scale in `[-J, 0]`.
pub fn full_lattice(d: usize, j: u32) -> Vec<DyadicCube> {
    (-(j as i32)..=0).rev().flat_map(|s| DyadicCube::torus_cubes(d, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn p(v: i64) -> LebesgueExponent {
        LebesgueExponent::from_int(v)
    }

    #[test]
    fn constant_has_unit_norms() {
        let f = GridFunction::from_fn(2, 3, |_| c(1.0));
        for q in [1, 2, 7] {
            let spec = NormSpec::scalar(MixedExponent::per_axis(vec![p(q), LebesgueExponent::from_ratio(3, 2)]));
            assert!((mixed_norm(&f, &spec).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn half_indicator_mixed_norm() {
        let f = GridFunction::from_fn(2, 4, |x| c(if x[0] < 0.5 { 1.0 } else { 0.0 }));
        let spec = NormSpec::scalar(MixedExponent::per_axis(vec![p(2), LebesgueExponent::infinity()]));
        assert!((mixed_norm(&f, &spec).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn mixed_norm_matches_double_loop() {
        let n = 16usize;
        let f = GridFunction::from_fn(2, 4, |x| Complex64::new((7.0 * x[0] + 3.0 * x[1]).sin(), x[0] * x[1]));
        let spec = NormSpec::scalar(MixedExponent::per_axis(vec![p(3), p(2)]));
        let mut outer = 0.0;
        for i in 0..n {
            let mut inner = 0.0;
            for k in 0..n {
                inner += f.samples[i * n + k].norm().powi(2) / n as f64;
            }
            outer += inner.sqrt().powi(3) / n as f64;
        }
        let want = outer.powf(1.0 / 3.0);
        assert!((mixed_norm(&f, &spec).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_exponent() {
        let f = GridFunction::zeros(1, 3);
        let spec = NormSpec::scalar(MixedExponent::uniform(1, LebesgueExponent::from_ratio(-2, 1)));
        assert!(matches!(mixed_norm(&f, &spec), Err(GridError::InvalidExponent(_))));
    }

    #[test]
    fn averages() {
        let f = GridFunction::from_fn(1, 5, |_| c(3.0));
        let r = DyadicCube::unshifted(-2, vec![1]);
        assert!((ave(&f, &r, &p(1), Weight::Indicator).unwrap() - 3.0).abs() < 1e-14);
        let z = GridFunction::zeros(1, 5);
        assert_eq!(ave(&z, &r, &p(2), Weight::ChiTilde(100.0)).unwrap(), 0.0);
    }

    #[test]
    fn chi_tilde_half_torus_matches_direct_sum() {
        // f ≡ 1, R = [0, 1/2), M = 100, J = 6: independent quadrature of the
        // tail weights. Points in R contribute 32; the other 32 points are at
        // toroidal distance min(i/64 - 1/2, 1 - i/64) from the closed box.
        let j = 6u32;
        let n = 64usize;
        let f = GridFunction::from_fn(1, j, |_| c(1.0));
        let r = DyadicCube::unshifted(-1, vec![0]);
        let mut s = 0.0;
        for i in 0..n {
            let x = i as f64 / n as f64;
            let dist = if x <= 0.5 { 0.0 } else { (x - 0.5).min(1.0 - x) };
            s += (1.0 + dist / 0.5).powf(-100.0);
        }
        let want = s / (n as f64 * 0.5);
        let got = ave(&f, &r, &p(1), Weight::ChiTilde(100.0)).unwrap();
        assert!((got - want).abs() < 1e-13);
        // Frozen value of the oracle at this resolution.
        assert!((want - 1.034_284_678_004_904).abs() < 1e-12, "{want}");
        assert!(got > 1.0);
    }

    #[test]
    fn spatial_size_cases() {
        let f = GridFunction::from_fn(1, 4, |x| c(if (0.25..0.5).contains(&x[0]) { 1.0 } else { 0.0 }));
        let e = DyadicCube::unshifted(-2, vec![1]);
        let s = spatial_size(&f, &full_lattice(1, 4), &p(1), Weight::Indicator).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(spatial_size(&f, std::slice::from_ref(&e), &p(1), Weight::Indicator).unwrap(), 1.0);
        assert!(matches!(spatial_size(&f, &[], &p(1), Weight::Indicator), Err(GridError::EmptyCubeSet)));
    }

    #[test]
    fn vector_norm_of_constant_in_w() {
        let d = 1;
        let j = 3;
        let mu = vec![0.5, 0.25, 1.25];
        let base = GridFunction::from_fn(d, j, |x| c(1.0 + x[0]));
        let mut samples = Vec::new();
        for _ in 0..3 {
            samples.extend_from_slice(&base.samples);
        }
        let f = GridFunction::from_samples(d, j, samples, vec![mu]).unwrap();
        let g = restrict_vector_norm(&f, &[p(3)]).unwrap();
        let scale = 2.0f64.powf(1.0 / 3.0);
        for (a, b) in g.samples.iter().zip(&base.samples) {
            assert!((a.re - scale * b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_roundtrip() {
        let dir = std::env::temp_dir().join(format!("helicoid-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let f = GridFunction::from_fn(2, 2, |x| Complex64::new(x[0], -x[1]));
        let path = dir.join("f.raw");
        f.write_raw(&path).unwrap();
        let g = GridFunction::read_raw(&path).unwrap();
        assert_eq!(g.samples.len(), f.samples.len());
        for (a, b) in f.samples.iter().zip(&g.samples) {
            assert!((a - b).norm() < 1e-6);
        }
        assert!(f.to_csv().starts_with("x0,x1,w,re,im\n"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
