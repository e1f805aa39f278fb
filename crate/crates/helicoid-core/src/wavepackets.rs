//! Wave packets built on DFT bins, and packet coefficients by Parseval.
//!
//! A packet for `R × ω` has spectrum `F_m = a(m) e^{-2πi m·c_R}` on the
//! integer frequencies `m` with `|m_i - c_{ω,i}| < 0.99·|ω|/2` on every
//! axis, where `a` is a smooth profile vanishing at the edge of that box.
//! The stored spectrum is sparse, so bins outside the support are exactly
//! zero, and `Σ |F_m|² = 1` makes `‖φ‖₂ = 1` on the torus.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dyadic::Tile;
use crate::gridfn::GridFunction;

/// Default fraction of the frequency cube carrying the spectrum.
pub const DEFAULT_SUPPORT: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("frequency cube exceeds the Nyquist box [-{half}, {half})")]
    Resolution { half: i64 },
    #[error("no integer frequency lies in the shrunken frequency cube")]
    EmptySupport,
    #[error("resolution mismatch: packet at J = {packet}, function at J = {function}")]
    Mismatch { packet: u32, function: u32 },
}

/// Spectral profile on the normalized coordinate `u ∈ (-1, 1)` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Profile {
    /// `cos²(πu/2)`.
    #[default]
    RaisedCosine,
    /// `exp(-u²/(2·0.35²))`, cut at `|u| = 1`.
    GaussianTruncated,
}

impl Profile {
    fn eval(self, u: f64) -> f64 {
        match self {
            Profile::RaisedCosine => (std::f64::consts::FRAC_PI_2 * u).cos().powi(2),
            Profile::GaussianTruncated => (-u * u / (2.0 * 0.35 * 0.35)).exp(),
        }
    }
}

/// In-place d-dimensional DFT of a row-major `n^d` array (axis 0 slowest).
/// Forward: `Σ_x v(x) e^{-2πi m·x/n}`; inverse: same with `+`, unnormalized.
pub fn fft_nd(data: &mut [Complex64], d: usize, n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let outer = data.len() / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
}

/// Signed frequency of DFT index `k` in `[-n/2, n/2)`.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn freq_index(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Normalized Fourier coefficients `f̂(m) = N^{-d} Σ_x f(x) e^{-2πi m·x}` of
/// every vector component, so that `⟨f, g⟩ = Σ_m f̂(m) conj(ĝ(m))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub d: usize,
    pub j: u32,
    /// One dense `N^d` array per vector component.
    pub components: Vec<Vec<Complex64>>,
}

impl Spectrum {
    pub fn of(f: &GridFunction) -> Self {
        let n = f.n();
        let np = f.points();
        let components = (0..f.vector_len())
            .map(|w| {
                let mut v = f.component(w).to_vec();
                fft_nd(&mut v, f.d, n, false);
                for x in v.iter_mut() {
                    *x /= np as f64;
                }
                v
            })
            .collect();
        Self { d: f.d, j: f.j, components }
    }
}

/// Measured decay constants of a packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptedness {
    /// `(M', sup_x |φ(x)| (1 + dist(x,R)/ℓ(R))^{M'} ℓ(R)^{d/2})` for `M' ∈ {2, 4, 8}`.
    pub decay: Vec<(u32, f64)>,
    /// Same with first and second forward difference quotients (max over axes),
    /// scaled by `ℓ(R)^{d/2 + order}`, for `M' = 4`.
    pub derivatives: Vec<(u32, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacket {
    pub tile: Tile,
    pub j: u32,
    pub profile: Profile,
    /// `(dense DFT index, F_m)` on the support, sorted by index.
    pub spectrum: Vec<(usize, Complex64)>,
}

/// Builds the packet with the default support fraction.
pub fn build_packet(tile: &Tile, j: u32, profile: Profile) -> Result<WavePacket, PacketError> {
    build_packet_with(tile, j, profile, DEFAULT_SUPPORT)
}

pub fn build_packet_with(tile: &Tile, j: u32, profile: Profile, support: f64) -> Result<WavePacket, PacketError> {
    let d = tile.freq.dim();
    let n = 1usize << j;
    let half = (n / 2) as i64;
    let mut per_axis: Vec<Vec<(i64, f64)>> = Vec::with_capacity(d);
    let rc = tile.spatial.center();
    for a in 0..d {
        let (lo, hi) = tile.freq.bounds(a);
        if lo < -(half as f64) - 1e-9 || hi > half as f64 + 1e-9 {
            return Err(PacketError::Resolution { half });
        }
        let c = 0.5 * (lo + hi);
        let h = support * 0.5 * (hi - lo);
        let bins: Vec<(i64, f64)> = ((c - h).floor() as i64..=(c + h).ceil() as i64)
            .filter_map(|m| {
                let u = (m as f64 - c) / h;
                (u.abs() < 1.0 && m >= -half && m < half).then(|| (m, profile.eval(u)))
            })
            .filter(|(_, v)| *v > 0.0)
            .collect();
        if bins.is_empty() {
            return Err(PacketError::EmptySupport);
        }
        per_axis.push(bins);
    }
    let mut spectrum = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let mut amp = 1.0;
        let mut phase = 0.0;
        let mut flat = 0usize;
        for a in 0..d {
            let (m, v) = per_axis[a][idx[a]];
            amp *= v;
            phase -= m as f64 * rc[a];
            flat = flat * n + freq_index(m, n);
        }
        let ang = 2.0 * std::f64::consts::PI * phase;
        spectrum.push((flat, Complex64::from_polar(amp, ang)));
        let mut a = d;
        loop {
            if a == 0 {
                let norm = spectrum.iter().map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt();
                for (_, v) in spectrum.iter_mut() {
                    *v /= norm;
                }
                spectrum.sort_by_key(|(i, _)| *i);
                return Ok(WavePacket { tile: tile.clone(), j, profile, spectrum });
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < per_axis[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl WavePacket {
    pub fn d(&self) -> usize {
        self.tile.spatial.dim()
    }

    pub fn dense_spectrum(&self) -> Vec<Complex64> {
        let np = 1usize << (self.j as usize * self.d());
        let mut v = vec![Complex64::new(0.0, 0.0); np];
        for &(i, c) in &self.spectrum {
            v[i] = c;
        }
        v
    }

    /// `φ` at the grid points.
    pub fn values(&self) -> GridFunction {
        let mut v = self.dense_spectrum();
        fft_nd(&mut v, self.d(), 1 << self.j, true);
        GridFunction { d: self.d(), j: self.j, samples: v, measures: Vec::new() }
    }

    /// Signed frequency vector of a dense index.
    pub fn freq_of(&self, idx: usize) -> Vec<i64> {
        let n = 1usize << self.j;
        let mut out = vec![0; self.d()];
        let mut t = idx;
        for a in (0..self.d()).rev() {
            out[a] = signed_freq(t % n, n);
            t /= n;
        }
        out
    }

    /// `⟨f, φ⟩ = Σ_m f̂(m) conj(F_m)` for each vector component of `f`.
    pub fn coefficient(&self, f: &Spectrum) -> Result<Vec<Complex64>, PacketError> {
        if f.j != self.j {
            return Err(PacketError::Mismatch { packet: self.j, function: f.j });
        }
        Ok(f.components.iter().map(|c| self.coefficient_component(c)).collect())
    }

    /// `⟨f, φ⟩` against one dense normalized spectrum.
    pub fn coefficient_component(&self, fhat: &[Complex64]) -> Complex64 {
        self.spectrum.iter().fold(Complex64::new(0.0, 0.0), |acc, &(i, c)| acc + fhat[i] * c.conj())
    }

    /// `∫ g φ dx = Σ_m ĝ(-m) F_m`, the pairing without conjugation.
    pub fn plain_pairing(&self, ghat: &[Complex64]) -> Complex64 {
        let n = 1usize << self.j;
        let d = self.d();
        self.spectrum.iter().fold(Complex64::new(0.0, 0.0), |acc, &(i, c)| {
            let m = self.freq_of(i);
            let mut flat = 0usize;
            for &mi in m.iter().take(d) {
                flat = flat * n + freq_index(-mi, n);
            }
            acc + ghat[flat] * c
        })
    }

    /// Measured decay of the packet and its difference quotients.
    pub fn adaptedness(&self) -> Adaptedness {
        let vals = self.values();
        let d = self.d();
        let n = 1usize << self.j;
        let r = &self.tile.spatial;
        let ell = r.side();
        let norm = ell.powf(d as f64 / 2.0);
        let factor: Vec<f64> = (0..vals.points())
            .map(|idx| {
                let c = vals.coords(idx);
                let d2: f64 = (0..d)
                    .map(|a| {
                        let x = c[a] as f64 / n as f64;
                        let (lo, hi) = r.bounds(a);
                        let y = lo + (x - lo).rem_euclid(1.0);
                        let dist = if y <= hi { 0.0 } else { (y - hi).min(lo + 1.0 - y) };
                        dist * dist
                    })
                    .sum();
                1.0 + d2.sqrt() / ell
            })
            .collect();
        let sup = |field: &[f64], m: u32| -> f64 {
            field.iter().zip(&factor).fold(0.0f64, |acc, (v, f)| acc.max(v * f.powi(m as i32)))
        };
        let abs: Vec<f64> = vals.samples.iter().map(|v| v.norm()).collect();
        let decay = [2u32, 4, 8].iter().map(|&m| (m, sup(&abs, m) * norm)).collect();
        let h = 1.0 / n as f64;
        let mut derivatives = Vec::new();
        let mut first = vec![0.0f64; vals.points()];
        let mut second = vec![0.0f64; vals.points()];
        for a in 0..d {
            let stride = n.pow((d - 1 - a) as u32);
            for idx in 0..vals.points() {
                let pos = (idx / stride) % n;
                let step = |k: usize| idx - pos * stride + ((pos + k) % n) * stride;
                let v0 = vals.samples[idx];
                let v1 = vals.samples[step(1)];
                let v2 = vals.samples[step(2)];
                first[idx] = first[idx].max(((v1 - v0) / h).norm());
                second[idx] = second[idx].max(((v2 - 2.0 * v1 + v0) / (h * h)).norm());
            }
        }
        derivatives.push((1, sup(&first, 4) * norm * ell));
        derivatives.push((2, sup(&second, 4) * norm * ell * ell));
        Adaptedness { decay, derivatives }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    tile: Tile,
    j: u32,
    profile: Profile,
}

/// Concurrent insert-or-get cache of packets, optionally persisted as JSON
/// files named by the SHA-256 of the key in a directory.
#[derive(Default)]
pub struct PacketCache {
    map: RwLock<HashMap<CacheKey, Arc<WavePacket>>>,
    dir: Option<PathBuf>,
}

impl PacketCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: PathBuf) -> Self {
        Self { map: RwLock::default(), dir: Some(dir) }
    }

    /// Uses the directory in `HELICOID_CACHE` if set.
    pub fn from_env() -> Self {
        match std::env::var_os("HELICOID_CACHE") {
            Some(d) if !d.is_empty() => Self::with_dir(PathBuf::from(d)),
            _ => Self::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, tile: &Tile, j: u32, profile: Profile) -> Result<Arc<WavePacket>, PacketError> {
        let key = CacheKey { tile: tile.clone(), j, profile };
        if let Some(p) = self.map.read().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let packet = Arc::new(self.load_or_build(&key)?);
        let mut w = self.map.write().expect("cache lock");
        Ok(w.entry(key).or_insert(packet).clone())
    }

    fn file_for(&self, key: &CacheKey) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let desc = format!("{:?}|{}|{:?}", key.tile, key.j, key.profile);
        let digest = Sha256::digest(desc.as_bytes());
        let name: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Some(dir.join(format!("{name}.json")))
    }

    fn load_or_build(&self, key: &CacheKey) -> Result<WavePacket, PacketError> {
        let file = self.file_for(key);
        if let Some(f) = &file {
            if let Ok(text) = std::fs::read_to_string(f) {
                if let Ok(p) = serde_json::from_str::<WavePacket>(&text) {
                    if p.tile == key.tile && p.j == key.j && p.profile == key.profile {
                        return Ok(p);
                    }
                }
            }
        }
        let p = build_packet(&key.tile, key.j, key.profile)?;
        if let Some(f) = file {
            // A failed write only loses the persisted copy.
            if std::fs::create_dir_all(f.parent().expect("cache file has a parent")).is_ok() {
                let _ = std::fs::write(&f, serde_json::to_string(&p).unwrap_or_default());
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::DyadicCube;

    fn tile(rs: i32, rk: i64, wk: i64, sh: i8) -> Tile {
        Tile::new(DyadicCube::unshifted(rs, vec![rk]), DyadicCube::new(-rs, vec![wk], vec![sh]).unwrap()).unwrap()
    }

    #[test]
    fn fft_roundtrip() {
        let mut v: Vec<Complex64> = (0..64).map(|i| Complex64::new(i as f64, (i * i % 7) as f64)).collect();
        let orig = v.clone();
        fft_nd(&mut v, 2, 8, false);
        fft_nd(&mut v, 2, 8, true);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a / 64.0 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn unit_tile_packet() {
        // ω = [-1/3, 2/3) holds the single bin 0; the unshifted [0, 1) holds none.
        let p = build_packet(&tile(0, 0, 0, -1), 6, Profile::RaisedCosine).unwrap();
        assert_eq!(p.spectrum.len(), 1);
        let v = p.values();
        for s in &v.samples {
            assert!((s.norm() - 1.0).abs() < 1e-14);
        }
        assert_eq!(build_packet(&tile(0, 0, 0, 0), 6, Profile::RaisedCosine), Err(PacketError::EmptySupport));
    }

    #[test]
    fn support_and_normalization() {
        let t = tile(-3, 5, 2, 1);
        let p = build_packet(&t, 8, Profile::RaisedCosine).unwrap();
        let (lo, hi) = t.freq.bounds(0);
        let (c, h) = (0.5 * (lo + hi), 0.99 * 0.5 * (hi - lo));
        let dense = p.dense_spectrum();
        for (i, v) in dense.iter().enumerate() {
            let m = signed_freq(i, 256) as f64;
            if (m - c).abs() >= h {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            }
        }
        let l2: f64 = p.values().samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / 256.0;
        assert!((l2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nyquist_is_enforced() {
        assert_eq!(build_packet(&tile(-2, 0, 40, 0), 6, Profile::RaisedCosine), Err(PacketError::Resolution { half: 32 }));
    }

    #[test]
    fn self_coefficient_is_one() {
        let p = build_packet(&tile(-2, 1, -3, 0), 7, Profile::GaussianTruncated).unwrap();
        let f = p.values();
        let c = p.coefficient(&Spectrum::of(&f)).unwrap()[0];
        assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cache_is_shared_and_persisted() {
        let dir = std::env::temp_dir().join(format!("helicoid-cache-{}", std::process::id()));
        let cache = PacketCache::with_dir(dir.clone());
        let t = tile(-2, 0, 1, 0);
        let a = cache.get(&t, 6, Profile::RaisedCosine).unwrap();
        let b = cache.get(&t, 6, Profile::RaisedCosine).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let again = PacketCache::with_dir(dir.clone());
        assert_eq!(*again.get(&t, 6, Profile::RaisedCosine).unwrap(), *a);
        assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
        std::fs::remove_dir_all(&dir).ok();
    }
}
