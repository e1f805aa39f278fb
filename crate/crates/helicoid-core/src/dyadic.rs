//! Dyadic and shifted-dyadic cubes, tiles, multi-tiles, their order
//! relations, rank-k collections, Whitney-type collections and trees.
//!
//! Units: space is the torus `[0,1)^d`, so spatial cubes have scale `j ≤ 0`
//! and side `2^j`; frequency cubes are measured in integer frequencies and a
//! tile with spatial scale `j` has frequency scale `-j`. All comparisons are
//! exact: interval endpoints are converted to integers in units of
//! `2^{e0}/6`, where `e0` is the smaller of the two scales involved.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_range, Exec};
use crate::exponents::{q_to_f64, Q};

/// Default constant in the `≲` relation.
pub const DEFAULT_C0: u32 = 9;

/// Default scale gap (in `log2` of the measure ratio) that counts as `|R'| ≪ |R|`.
pub const DEFAULT_SEPARATION_LOG2: i32 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DyadicError {
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("invalid tile: {0}")]
    InvalidTile(String),
    #[error("matrix has wrong shape: {0}")]
    Shape(String),
    #[error("block ({row}, {col}) of the constraint matrix is singular")]
    SingularBlock { row: usize, col: usize },
    #[error("kernel map for slot {0} is singular")]
    DegenerateSlot(usize),
    #[error("no admissible separation parameter: {0}")]
    NoSeparation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension {got} out of range 1..={max}")]
    DimOutOfRange { got: usize, max: usize },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// `Π_i [2^s (k_i + σ_i/3), 2^s (k_i + 1 + σ_i/3))` with `σ_i ∈ {-1, 0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub scale: i32,
    pub corner: Vec<i64>,
    pub shift: Vec<i8>,
}

impl DyadicCube {
    pub fn new(scale: i32, corner: Vec<i64>, shift: Vec<i8>) -> Result<Self, DyadicError> {
        if corner.is_empty() || corner.len() != shift.len() {
            return Err(DyadicError::InvalidCube(format!(
                "corner/shift lengths {} and {}",
                corner.len(),
                shift.len()
            )));
        }
        if shift.iter().any(|s| !(-1..=1).contains(s)) {
            return Err(DyadicError::InvalidCube(format!("shift {shift:?} outside {{-1,0,1}}")));
        }
        Ok(Self { scale, corner, shift })
    }

    pub fn unshifted(scale: i32, corner: Vec<i64>) -> Self {
        let d = corner.len();
        Self { scale, corner, shift: vec![0; d] }
    }

    /// The whole torus `[0,1)^d`.
    pub fn torus(d: usize) -> Self {
        Self::unshifted(0, vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn is_unshifted(&self) -> bool {
        self.shift.iter().all(|&s| s == 0)
    }

    pub fn side(&self) -> f64 {
        (self.scale as f64).exp2()
    }

    pub fn measure(&self) -> f64 {
        (self.scale as f64 * self.dim() as f64).exp2()
    }

    /// `[lo, hi)` along `axis` as floats.
    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        let s = self.side();
        let lo = s * (self.corner[axis] as f64 + self.shift[axis] as f64 / 3.0);
        (lo, lo + s)
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (a, b) = self.bounds(i);
                0.5 * (a + b)
            })
            .collect()
    }

    /// `[lo, hi)` along `axis` in integer units of `2^{e0}/6`; requires `e0 ≤ scale`.
    pub fn units(&self, axis: usize, e0: i32) -> (i128, i128) {
        debug_assert!(e0 <= self.scale);
        let f = 1i128 << (self.scale - e0);
        let lo = f * (6 * self.corner[axis] as i128 + 2 * self.shift[axis] as i128);
        (lo, lo + 6 * f)
    }

    /// `other ⊆ self`.
    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        self.dilate_contains(1, other)
    }

    /// `other ⊆ c·self`, the `c`-fold dilate about the center; `c` must be odd.
    pub fn dilate_contains(&self, c: u32, other: &DyadicCube) -> bool {
        debug_assert!(c % 2 == 1);
        let e0 = self.scale.min(other.scale);
        let c = c as i128;
        (0..self.dim()).all(|i| {
            let (lo, hi) = self.units(i, e0);
            let half = (hi - lo) / 2;
            let mid = lo + half;
            let (a, b) = other.units(i, e0);
            mid - c * half <= a && b <= mid + c * half
        })
    }

    pub fn intersects(&self, other: &DyadicCube) -> bool {
        let e0 = self.scale.min(other.scale);
        (0..self.dim()).all(|i| {
            let (a, b) = self.units(i, e0);
            let (c, d) = other.units(i, e0);
            a < d && c < b
        })
    }

    /// The dyadic parent within the lattice family of `self`.
    ///
    /// A fixed shift at every scale does not nest (`[1/3, 4/3)` is not inside
    /// `[2/3, 8/3)`), so the family flips the sign of the shift at each
    /// scale: `2^s (k + σ/3)` at scale `s` sits inside `2^{s+1} (k' - σ/3)`
    /// with `k' = ⌊(k + σ)/2⌋`.
    pub fn parent(&self) -> Self {
        Self {
            scale: self.scale + 1,
            corner: self
                .corner
                .iter()
                .zip(&self.shift)
                .map(|(k, &s)| (k + s as i64).div_euclid(2))
                .collect(),
            shift: self.shift.iter().map(|s| -s).collect(),
        }
    }

    /// The `2^d` children within the lattice family, in lexicographic corner order.
    pub fn children(&self) -> Vec<Self> {
        let d = self.dim();
        (0..1usize << d)
            .map(|m| Self {
                scale: self.scale - 1,
                corner: (0..d)
                    .map(|i| 2 * self.corner[i] + self.shift[i] as i64 + ((m >> (d - 1 - i)) & 1) as i64)
                    .collect(),
                shift: self.shift.iter().map(|s| -s).collect(),
            })
            .collect()
    }

    /// Ancestor at `scale ≥ self.scale` within the lattice family.
    pub fn ancestor(&self, scale: i32) -> Self {
        debug_assert!(scale >= self.scale);
        if self.is_unshifted() {
            let up = scale - self.scale;
            return Self::unshifted(scale, self.corner.iter().map(|k| k >> up).collect());
        }
        let mut c = self.clone();
        while c.scale < scale {
            c = c.parent();
        }
        c
    }

    /// Unshifted cube inside the torus.
    pub fn in_torus(&self) -> bool {
        self.scale <= 0
            && self.is_unshifted()
            && self.corner.iter().all(|&k| k >= 0 && k < 1i64 << (-self.scale))
    }

    /// All unshifted cubes of the given scale in the torus, lexicographic.
    pub fn torus_cubes(d: usize, scale: i32) -> Vec<Self> {
        assert!(scale <= 0);
        let per = 1i64 << (-scale);
        let total = (per as usize).pow(d as u32);
        (0..total)
            .map(|mut idx| {
                let mut corner = vec![0i64; d];
                for i in (0..d).rev() {
                    corner[i] = (idx % per as usize) as i64;
                    idx /= per as usize;
                }
                Self::unshifted(scale, corner)
            })
            .collect()
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.scale)?;
        for k in &self.corner {
            write!(f, " {k}")?;
        }
        for s in &self.shift {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

/// `R × ω` with `|R|·|ω| = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tile {
    pub spatial: DyadicCube,
    pub freq: DyadicCube,
}

fn check_pair(spatial: &DyadicCube, freq: &DyadicCube) -> Result<(), DyadicError> {
    if !spatial.is_unshifted() {
        return Err(DyadicError::InvalidTile("spatial cube is shifted".into()));
    }
    if spatial.dim() != freq.dim() {
        return Err(DyadicError::InvalidTile("spatial and frequency dimensions differ".into()));
    }
    if spatial.scale + freq.scale != 0 {
        return Err(DyadicError::InvalidTile(format!(
            "scales {} and {} do not give area one",
            spatial.scale, freq.scale
        )));
    }
    Ok(())
}

impl Tile {
    pub fn new(spatial: DyadicCube, freq: DyadicCube) -> Result<Self, DyadicError> {
        check_pair(&spatial, &freq)?;
        Ok(Self { spatial, freq })
    }
}

/// `n+1` tiles sharing one spatial cube.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiTile {
    pub spatial: DyadicCube,
    pub freqs: Vec<DyadicCube>,
}

impl MultiTile {
    pub fn new(spatial: DyadicCube, freqs: Vec<DyadicCube>) -> Result<Self, DyadicError> {
        for w in &freqs {
            check_pair(&spatial, w)?;
        }
        Ok(Self { spatial, freqs })
    }

    pub fn slot(&self, j: usize) -> Tile {
        Tile { spatial: self.spatial.clone(), freq: self.freqs[j].clone() }
    }
}

/// Order relations between tiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    /// `R' ⊊ R` and `ω ⊆ 3ω'`.
    Less,
    /// `<` or equal.
    LessEq,
    /// `R' ⊆ R` and `ω ⊆ C₀ω'`.
    Lesssim,
    /// `≲` but not `≤`.
    LesssimPrime,
}

/// Whether `a rel b`, with constant `c0` for the `≲` relations.
pub fn tile_order(a: &Tile, b: &Tile, rel: Relation, c0: u32) -> bool {
    order_parts(&a.spatial, &a.freq, &b.spatial, &b.freq, rel, c0)
}

fn order_parts(ra: &DyadicCube, wa: &DyadicCube, rb: &DyadicCube, wb: &DyadicCube, rel: Relation, c0: u32) -> bool {
    let less = || ra.scale < rb.scale && rb.contains_cube(ra) && wa.dilate_contains(3, wb);
    let equal = || ra == rb && wa == wb;
    let sim = || rb.contains_cube(ra) && wa.dilate_contains(c0, wb);
    match rel {
        Relation::Less => less(),
        Relation::LessEq => equal() || less(),
        Relation::Lesssim => sim(),
        Relation::LesssimPrime => sim() && !equal() && !less(),
    }
}

/// Multi-tiles with fixed `(n, k, d)` and the constant used for `≲`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileCollection {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub c0: u32,
    pub tiles: Vec<MultiTile>,
}

impl TileCollection {
    pub fn new(n: usize, k: usize, d: usize, c0: u32, tiles: Vec<MultiTile>) -> Result<Self, DyadicError> {
        if c0 % 2 == 0 || c0 < 3 {
            return Err(DyadicError::InvalidTile(format!("c0 = {c0} must be odd and at least 3")));
        }
        for t in &tiles {
            if t.freqs.len() != n + 1 {
                return Err(DyadicError::InvalidTile(format!("{} slots, expected {}", t.freqs.len(), n + 1)));
            }
            if t.spatial.dim() != d {
                return Err(DyadicError::InvalidTile(format!("dimension {} != {d}", t.spatial.dim())));
            }
            if !t.spatial.in_torus() {
                return Err(DyadicError::InvalidTile(format!("spatial cube {} outside the torus", t.spatial)));
            }
            for w in &t.freqs {
                check_pair(&t.spatial, w)?;
            }
        }
        Ok(Self { n, k, d, c0, tiles })
    }

    pub fn empty(n: usize, k: usize, d: usize) -> Self {
        Self { n, k, d, c0: DEFAULT_C0, tiles: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Same parameters, tiles at the given indices.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self { tiles: idx.iter().map(|&i| self.tiles[i].clone()).collect(), ..self.clone_empty() }
    }

    fn clone_empty(&self) -> Self {
        Self { n: self.n, k: self.k, d: self.d, c0: self.c0, tiles: Vec::new() }
    }

    /// Line-oriented text form: a header, then one multi-tile per line as
    /// `scale corner… | fscale fcorner… fshift… | …`.
    pub fn to_text(&self) -> String {
        let mut out = format!("helicoid-tiles n {} k {} d {} c0 {}\n", self.n, self.k, self.d, self.c0);
        for t in &self.tiles {
            out.push_str(&t.spatial.scale.to_string());
            for c in &t.spatial.corner {
                out.push_str(&format!(" {c}"));
            }
            for w in &t.freqs {
                out.push_str(&format!(" | {w}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`TileCollection::to_text`] output and validates every tile.
    pub fn from_text(text: &str) -> Result<Self, DyadicError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(DyadicError::Parse { line: 1, msg: "empty input".into() })?;
        let words: Vec<&str> = header.split_whitespace().collect();
        let perr = |line: usize, msg: &str| DyadicError::Parse { line: line + 1, msg: msg.to_string() };
        if words.len() != 9 || words[0] != "helicoid-tiles" {
            return Err(perr(hl, "bad header"));
        }
        let field = |name: &str, at: usize| -> Result<u64, DyadicError> {
            if words[at] != name {
                return Err(perr(hl, &format!("expected {name}")));
            }
            words[at + 1].parse().map_err(|_| perr(hl, &format!("bad {name}")))
        };
        let (n, k, d, c0) = (field("n", 1)? as usize, field("k", 3)? as usize, field("d", 5)? as usize, field("c0", 7)? as u32);
        let mut tiles = Vec::new();
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != n + 2 {
                return Err(perr(ln, "wrong number of slots"));
            }
            let nums = |s: &str| -> Result<Vec<i64>, DyadicError> {
                s.split_whitespace().map(|w| w.parse().map_err(|_| perr(ln, "bad integer"))).collect()
            };
            let sp = nums(parts[0])?;
            if sp.len() != d + 1 {
                return Err(perr(ln, "bad spatial cube"));
            }
            let spatial = DyadicCube::unshifted(sp[0] as i32, sp[1..].to_vec());
            let mut freqs = Vec::with_capacity(n + 1);
            for p in &parts[1..] {
                let v = nums(p)?;
                if v.len() != 2 * d + 1 {
                    return Err(perr(ln, "bad frequency cube"));
                }
                let shift = v[d + 1..].iter().map(|&s| s as i8).collect();
                freqs.push(DyadicCube::new(v[0] as i32, v[1..=d].to_vec(), shift).map_err(|e| perr(ln, &e.to_string()))?);
            }
            tiles.push(MultiTile::new(spatial, freqs).map_err(|e| perr(ln, &e.to_string()))?);
        }
        Self::new(n, k, d, c0, tiles)
    }
}

/// Which rank-k condition failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankCondition {
    /// k frequency cubes do not determine the rest.
    Determination,
    /// `≤` on k slots does not propagate to `≲` on all slots.
    Propagation,
    /// Under scale separation, fewer than two other slots have `≲'`.
    Separation,
}

/// First failing ordered pair `(s, s')` found by [`rank_k_check`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankViolation {
    pub s: usize,
    pub s_prime: usize,
    pub slots: Vec<usize>,
    pub condition: RankCondition,
}

/// Exhaustive pairwise check of the three rank-k conditions.
///
/// For `k = 0` the determination condition is read as "tiles of equal spatial
/// scale have equal frequency cubes", and the other two are applied to pairs
/// with `R_{s'} ⊆ R_s`; for `k ≥ 1` the `≤` hypothesis already forces nesting.
pub fn rank_k_check(s: &TileCollection) -> Result<(), RankViolation> {
    rank_k_check_with(Exec::Auto, s, DEFAULT_SEPARATION_LOG2)
}

pub fn rank_k_check_with(exec: Exec, s: &TileCollection, sep_log2: i32) -> Result<(), RankViolation> {
    let m = s.n + 1;
    let subsets = crate::exponents::k_subsets(m, s.k);
    let per_first = map_range(exec, s.tiles.len(), |a| {
        for b in 0..s.tiles.len() {
            if let Some(v) = check_pair_rank(s, a, b, &subsets, sep_log2) {
                return Some(v);
            }
        }
        None
    });
    match per_first.into_iter().flatten().next() {
        Some(v) => Err(v),
        None => Ok(()),
    }
}

fn check_pair_rank(col: &TileCollection, a: usize, b: usize, subsets: &[Vec<usize>], sep_log2: i32) -> Option<RankViolation> {
    let s = &col.tiles[a];
    let sp = &col.tiles[b];
    let m = col.n + 1;
    let fail = |slots: &[usize], condition| {
        Some(RankViolation { s: a, s_prime: b, slots: slots.to_vec(), condition })
    };
    let nested = s.spatial.contains_cube(&sp.spatial);
    for sub in subsets {
        // (i)
        let same = if col.k == 0 { s.spatial.scale == sp.spatial.scale } else { sub.iter().all(|&i| s.freqs[i] == sp.freqs[i]) };
        if a < b && same && (0..m).any(|j| s.freqs[j] != sp.freqs[j]) {
            return fail(sub, RankCondition::Determination);
        }
        // (ii), (iii): hypothesis s'_i ≤ s_i on the subset.
        let hyp = if col.k == 0 {
            nested
        } else {
            sub.iter().all(|&i| order_parts(&sp.spatial, &sp.freqs[i], &s.spatial, &s.freqs[i], Relation::LessEq, col.c0))
        };
        if !hyp {
            continue;
        }
        if (0..m).any(|j| !order_parts(&sp.spatial, &sp.freqs[j], &s.spatial, &s.freqs[j], Relation::Lesssim, col.c0)) {
            return fail(sub, RankCondition::Propagation);
        }
        let gap = (s.spatial.scale - sp.spatial.scale) * col.d as i32;
        if gap >= sep_log2 {
            let count = (0..m)
                .filter(|j| !sub.contains(j))
                .filter(|&j| order_parts(&sp.spatial, &sp.freqs[j], &s.spatial, &s.freqs[j], Relation::LesssimPrime, col.c0))
                .count();
            if count < 2 {
                return fail(sub, RankCondition::Separation);
            }
        }
    }
    None
}

/// Parameters of a Whitney-type collection pulled back through a constraint matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhitneySpec {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// `d(n-k) × dn` integer matrix whose kernel is the singular subspace.
    pub a: Vec<Vec<i64>>,
    /// Resolution exponent: `N = 2^J` samples per axis.
    pub j_res: u32,
    /// Inclusive range of spatial scales (each in `[-J, -1]`); empty if `lo > hi`.
    pub scales: (i32, i32),
    /// Optional bound on `|ξ|_∞` for frequency cube endpoints (Nyquist always applies).
    pub box_bound: Option<i64>,
    /// Constraint row block kept away from zero.
    pub i0: usize,
}

/// Geometric data of a generated collection.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitneyGeometry {
    pub lambda: i64,
    pub c0: u32,
    /// Per slot, the `d × d` map from the kernel parameter to the slot frequency (empty for k = 0).
    pub slot_maps: Vec<Vec<Vec<f64>>>,
    /// Per slot, the frequency offset in units of the frequency side.
    pub offsets: Vec<Vec<f64>>,
    /// The kernel parameter ranges over `lattice · ℤ^d`.
    pub lattice: i64,
}

type RatMat = Vec<Vec<Q>>;

fn qi(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

fn rat_inverse(m: &RatMat) -> Option<RatMat> {
    let n = m.len();
    let mut a: RatMat = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Q::one() } else { Q::zero() }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&r| !a[r][c].is_zero())?;
        a.swap(c, p);
        let piv = a[c][c].clone();
        for v in a[c].iter_mut() {
            *v = &*v / &piv;
        }
        let prow = a[c].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != c && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, y) in row.iter_mut().zip(&prow) {
                    *x -= &f * y;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn rat_mul(a: &RatMat, b: &RatMat) -> RatMat {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).fold(Q::zero(), |acc, t| acc + &row[t] * &b[t][j]))
                .collect()
        })
        .collect()
}

fn rat_vec(a: &RatMat, v: &[Q]) -> Vec<Q> {
    a.iter().map(|row| row.iter().zip(v).fold(Q::zero(), |acc, (x, y)| acc + x * y)).collect()
}

fn block(a: &[Vec<i64>], d: usize, row: usize, col: usize) -> RatMat {
    (0..d).map(|r| (0..d).map(|c| qi(a[row * d + r][col * d + c])).collect()).collect()
}

fn inf_norm(m: &RatMat) -> f64 {
    m.iter().map(|r| r.iter().map(|x| q_to_f64(x).abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn vec_inf(v: &[Q]) -> f64 {
    v.iter().map(|x| q_to_f64(x).abs()).fold(0.0, f64::max)
}

fn lcm(a: i64, b: i64) -> i64 {
    use num_integer::Integer;
    a.lcm(&b)
}

/// Checks the genericity needed by [`whitney_collection`]: all `d × d` blocks
/// of the constraint matrix invertible (for `k ≥ 1`) and every per-slot kernel
/// map invertible.
pub fn is_generic(spec: &WhitneySpec) -> bool {
    whitney_geometry(spec).is_ok()
}

struct KernelData {
    maps: Vec<RatMat>,
    offsets: Vec<Vec<Q>>,
    lattice: i64,
}

fn kernel_data(spec: &WhitneySpec) -> Result<KernelData, DyadicError> {
    let (n, k, d) = (spec.n, spec.k, spec.d);
    if d == 0 || n < 1 {
        return Err(DyadicError::Shape("need d ≥ 1 and n ≥ 1".into()));
    }
    if k > 1 {
        return Err(DyadicError::Unsupported(format!("rank {k} Whitney collections")));
    }
    if 2 * k >= n + 1 {
        return Err(DyadicError::Unsupported(format!("k = {k} not below (n+1)/2")));
    }
    let rows = d * (n - k);
    let cols = d * n;
    if spec.a.len() != rows || spec.a.iter().any(|r| r.len() != cols) {
        return Err(DyadicError::Shape(format!("expected {rows} × {cols}")));
    }
    if spec.i0 >= n - k {
        return Err(DyadicError::Shape(format!("i0 = {} but only {} row blocks", spec.i0, n - k)));
    }
    let mut v0 = vec![Q::zero(); rows];
    for r in 0..d {
        v0[spec.i0 * d + r] = Q::one();
    }
    let identity: RatMat = (0..d).map(|r| (0..d).map(|c| if r == c { Q::one() } else { Q::zero() }).collect()).collect();
    let mut offsets: Vec<Vec<Q>>;
    let mut maps: Vec<RatMat> = Vec::new();
    let mut lattice = 1i64;
    if k == 0 {
        let full: RatMat = spec.a.iter().map(|r| r.iter().map(|&x| qi(x)).collect()).collect();
        let inv = rat_inverse(&full).ok_or_else(|| DyadicError::Shape("constraint matrix is singular".into()))?;
        let p = rat_vec(&inv, &v0);
        offsets = (0..n).map(|j| p[j * d..(j + 1) * d].to_vec()).collect();
    } else {
        for i in 0..n - 1 {
            for j in 0..n {
                if rat_inverse(&block(&spec.a, d, i, j)).is_none() {
                    return Err(DyadicError::SingularBlock { row: i, col: j });
                }
            }
        }
        let b: RatMat = (0..rows).map(|r| spec.a[r][d..].iter().map(|&x| qi(x)).collect()).collect();
        let a1: RatMat = (0..rows).map(|r| spec.a[r][..d].iter().map(|&x| qi(x)).collect()).collect();
        let binv = rat_inverse(&b).ok_or_else(|| DyadicError::Shape("trailing square part is singular".into()))?;
        let stack = rat_mul(&binv, &a1);
        maps.push(identity.clone());
        for j in 0..n - 1 {
            maps.push((0..d).map(|r| stack[j * d + r].iter().map(|x| -x).collect()).collect());
        }
        let mut last = identity.clone();
        for m in &maps[1..] {
            for r in 0..d {
                for c in 0..d {
                    last[r][c] += &m[r][c];
                }
            }
        }
        maps.push(last.iter().map(|r| r.iter().map(|x| -x).collect()).collect());
        for (j, m) in maps.iter().enumerate() {
            if rat_inverse(m).is_none() {
                return Err(DyadicError::DegenerateSlot(j));
            }
            for x in m.iter().flatten() {
                lattice = lcm(lattice, x.denom().to_i64().unwrap_or(1));
            }
        }
        let tail = rat_vec(&binv, &v0);
        offsets = vec![vec![Q::zero(); d]];
        offsets.extend((0..n - 1).map(|j| tail[j * d..(j + 1) * d].to_vec()));
    }
    let mut last = vec![Q::zero(); d];
    for p in &offsets {
        for (x, y) in last.iter_mut().zip(p) {
            *x -= y;
        }
    }
    offsets.push(last);
    Ok(KernelData { maps, offsets, lattice })
}

fn whitney_geometry(spec: &WhitneySpec) -> Result<(KernelData, WhitneyGeometry), DyadicError> {
    let kd = kernel_data(spec)?;
    let m = spec.n + 1;
    let d = spec.d;
    let sep = (DEFAULT_SEPARATION_LOG2 + d as i32 - 1) / d as i32;
    let shrink = 1.0 - (-(sep as f64)).exp2();
    let grow = 1.0 + (-(sep as f64)).exp2();
    // Pairs (i, j): relative map norm and base offset under λ = 1.
    let mut pairs: Vec<(usize, usize, f64, f64)> = Vec::new();
    if spec.k == 0 {
        for j in 0..m {
            pairs.push((usize::MAX, j, 0.0, vec_inf(&kd.offsets[j])));
        }
    } else {
        for i in 0..m {
            let inv = rat_inverse(&kd.maps[i]).expect("checked invertible");
            for j in 0..m {
                if i == j {
                    continue;
                }
                let r = rat_mul(&kd.maps[j], &inv);
                let rp = rat_vec(&r, &kd.offsets[i]);
                let beta: Vec<Q> = kd.offsets[j].iter().zip(&rp).map(|(a, b)| a - b).collect();
                pairs.push((i, j, inf_norm(&r), vec_inf(&beta)));
            }
        }
    }
    let groups: Vec<usize> = if spec.k == 0 { vec![usize::MAX] } else { (0..m).collect() };
    for &g in &groups {
        let nonzero = pairs.iter().filter(|p| p.0 == g && p.3 > 0.0).count();
        if nonzero < 2 {
            return Err(DyadicError::NoSeparation(format!("slot group {g} has fewer than two separated slots")));
        }
    }
    let separated = |lambda: f64, norm: f64, beta: f64| shrink * lambda * beta - 1.5 * norm - (norm + 1.0) * grow / 6.0 > 1.5;
    let mut lambda = 1i64;
    loop {
        let ok = groups.iter().all(|&g| {
            pairs.iter().filter(|p| p.0 == g && separated(lambda as f64, p.2, p.3)).count() >= 2
        });
        if ok {
            break;
        }
        lambda += 1;
        if lambda > 1_000_000 {
            return Err(DyadicError::NoSeparation("λ search exceeded 10^6".into()));
        }
    }
    let worst = pairs
        .iter()
        .map(|p| 1.5 * p.2 + lambda as f64 * p.3 + (p.2 + 1.0) / 4.0)
        .fold(0.0, f64::max);
    let mut c0 = (2.0 * worst + 1.0).ceil() as u32;
    if c0 % 2 == 0 {
        c0 += 1;
    }
    let c0 = c0.max(DEFAULT_C0);
    let geo = WhitneyGeometry {
        lambda,
        c0,
        slot_maps: kd.maps.iter().map(|m| m.iter().map(|r| r.iter().map(q_to_f64).collect()).collect()).collect(),
        offsets: kd.offsets.iter().map(|p| p.iter().map(|x| q_to_f64(x) * lambda as f64).collect()).collect(),
        lattice: kd.lattice,
    };
    Ok((kd, geo))
}

/// Enumerates the Whitney-type collection: for each spatial scale `j`,
/// frequency side `L = 2^{-j}`, slot `i` frequencies centred near
/// `L·(M_i τ + λ p_i)` (snapped to the thirds lattice), crossed with every
/// spatial cube of scale `j`. The separation parameter `λ` and the constant
/// `C₀` are chosen so that the result is rank k.
pub fn whitney_collection(spec: &WhitneySpec) -> Result<TileCollection, DyadicError> {
    whitney_collection_with_geometry(spec).map(|(c, _)| c)
}

pub fn whitney_collection_with_geometry(spec: &WhitneySpec) -> Result<(TileCollection, WhitneyGeometry), DyadicError> {
    let (kd, geo) = whitney_geometry(spec)?;
    let (n, k, d) = (spec.n, spec.k, spec.d);
    let nyq = 1i64 << (spec.j_res.saturating_sub(1));
    let bound = spec.box_bound.map_or(nyq, |b| b.min(nyq));
    let lam = qi(geo.lambda);
    let mut tiles = Vec::new();
    for j in spec.scales.0..=spec.scales.1 {
        if j > -1 || j < -(spec.j_res as i32) {
            return Err(DyadicError::InvalidCube(format!("spatial scale {j} outside [-J, -1]")));
        }
        let fscale = -j;
        let side = 1i64 << fscale;
        // Frequency tuples at this scale.
        let mut tuples: Vec<Vec<DyadicCube>> = Vec::new();
        let params: Vec<Vec<Q>> = if k == 0 {
            vec![vec![]]
        } else {
            let reach = bound / side + 2;
            let zmax = reach / geo.lattice + 1;
            let per = (2 * zmax + 1) as usize;
            (0..per.pow(d as u32))
                .map(|mut idx| {
                    let mut z = vec![Q::zero(); d];
                    for zi in z.iter_mut().rev() {
                        *zi = qi(((idx % per) as i64 - zmax) * geo.lattice);
                        idx /= per;
                    }
                    z
                })
                .collect()
        };
        'tau: for tau in params {
            let mut freqs = Vec::with_capacity(n + 1);
            for slot in 0..=n {
                let mut x: Vec<Q> = kd.offsets[slot].iter().map(|p| p * &lam).collect();
                if k == 1 {
                    for (xi, yi) in x.iter_mut().zip(rat_vec(&kd.maps[slot], &tau)) {
                        *xi += yi;
                    }
                }
                let mut corner = Vec::with_capacity(d);
                let mut shift = Vec::with_capacity(d);
                for xi in &x {
                    let t = (xi * qi(3)).floor().to_integer().to_i64().expect("small frequency") - 1;
                    // lo = side·t/3 must lie in [-bound, bound - side].
                    if side * t < -3 * bound || side * t + 3 * side > 3 * bound {
                        continue 'tau;
                    }
                    let kk = (t + 1).div_euclid(3);
                    corner.push(kk);
                    shift.push((t - 3 * kk) as i8);
                }
                freqs.push(DyadicCube { scale: fscale, corner, shift });
            }
            tuples.push(freqs);
        }
        tuples.sort();
        tuples.dedup();
        for r in DyadicCube::torus_cubes(d, j) {
            for f in &tuples {
                tiles.push(MultiTile { spatial: r.clone(), freqs: f.clone() });
            }
        }
    }
    let col = TileCollection::new(n, k, d, geo.c0, tiles)?;
    Ok((col, geo))
}

/// `S(R₀)`: tiles whose spatial cube lies in `r0`.
pub fn localize(s: &TileCollection, r0: &DyadicCube) -> TileCollection {
    let idx: Vec<usize> = (0..s.len()).filter(|&i| r0.contains_cube(&s.tiles[i].spatial)).collect();
    s.subset(&idx)
}

/// Projection of an unshifted cube onto its first `dp` axes.
pub fn project_cube(r: &DyadicCube, dp: usize) -> DyadicCube {
    DyadicCube::unshifted(r.scale, r.corner[..dp].to_vec())
}

/// Tiles whose spatial projection onto the first `dp` axes lies in `rt`.
pub fn localize_lower(s: &TileCollection, dp: usize, rt: &DyadicCube) -> Result<TileCollection, DyadicError> {
    if dp == 0 || dp > s.d || rt.dim() != dp {
        return Err(DyadicError::DimOutOfRange { got: dp, max: s.d });
    }
    let idx: Vec<usize> = (0..s.len()).filter(|&i| rt.contains_cube(&project_cube(&s.tiles[i].spatial, dp))).collect();
    Ok(s.subset(&idx))
}

/// Distinct spatial cubes of `S` inside `r0`, together with `r0`, sorted.
pub fn spatial_projection(s: &TileCollection, r0: &DyadicCube) -> Vec<DyadicCube> {
    let mut out: Vec<DyadicCube> = s
        .tiles
        .iter()
        .map(|t| t.spatial.clone())
        .filter(|r| r0.contains_cube(r))
        .collect();
    out.push(r0.clone());
    out.sort();
    out.dedup();
    out
}

/// Tree type in one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeKind {
    Lacunary,
    Overlapping,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordType {
    Overlapping,
    Lacunary,
    None,
}

/// A tree in slot `slot`: members are indices into the source collection and
/// `top` is the slot component of the top multi-tile (other components of the
/// top are never consulted).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tree {
    pub slot: usize,
    pub top: Tile,
    pub members: Vec<usize>,
    pub kind: TreeKind,
    pub coordinate_types: Vec<CoordType>,
    /// For `d ≥ 2` lacunary trees: the first axis on which the top's frequency
    /// interval misses the 3-dilate of every member's.
    pub axis_tag: Option<usize>,
}

/// Whether tile `(r, w)` belongs to a tree of the given kind with top `top`.
pub fn tree_member(r: &DyadicCube, w: &DyadicCube, top: &Tile, kind: TreeKind, c0: u32) -> bool {
    let rel = match kind {
        TreeKind::Lacunary => Relation::LesssimPrime,
        TreeKind::Overlapping => Relation::LessEq,
    };
    order_parts(r, w, &top.spatial, &top.freq, rel, c0)
}

/// Best top found by [`best_top`].
#[derive(Clone, Debug, PartialEq)]
pub struct TopChoice {
    pub top: Tile,
    pub members: Vec<usize>,
    /// Σ weights of the members.
    pub mass: f64,
    /// The score that was maximized.
    pub score: f64,
}

/// How candidate tops are scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopScore {
    /// Total member weight.
    Mass,
    /// Total member weight divided by `|R_T|`.
    Density,
}

/// Searches all tops `(R_T, ω_T)` for the one maximizing the score of the
/// pool tiles it captures as a `kind` tree in `slot`. Candidates are every
/// dyadic `R_T` containing a pool tile, paired with every shifted `ω_T` of
/// the dual scale.
///
/// For each `R_T` the admissible positions of `ω_T` for each tile form a box
/// (minus a box or a point for lacunary trees) on the thirds lattice, so the
/// best position comes from a weighted difference array over compressed
/// coordinates. Ties go to larger `R_T`, then smaller corners.
pub fn best_top(
    s: &TileCollection,
    pool: &[usize],
    slot: usize,
    kind: TreeKind,
    weights: &[f64],
    score: TopScore,
) -> Option<TopChoice> {
    best_top_with(Exec::Sequential, s, pool, slot, kind, weights, score)
}

pub fn best_top_with(
    exec: Exec,
    s: &TileCollection,
    pool: &[usize],
    slot: usize,
    kind: TreeKind,
    weights: &[f64],
    score: TopScore,
) -> Option<TopChoice> {
    let mut by_cube: BTreeMap<(std::cmp::Reverse<i32>, Vec<i64>), Vec<usize>> = BTreeMap::new();
    for &i in pool {
        let r = &s.tiles[i].spatial;
        for sc in r.scale..=0 {
            let a = r.ancestor(sc);
            by_cube.entry((std::cmp::Reverse(sc), a.corner)).or_default().push(i);
        }
    }
    let cubes: Vec<(DyadicCube, Vec<usize>)> = by_cube
        .into_iter()
        .map(|((sc, corner), v)| (DyadicCube::unshifted(sc.0, corner), v))
        .collect();
    let results = map_slice_idx(exec, &cubes, |(rt, idx)| sweep_cube(s, rt, idx, slot, kind, weights, score));
    let mut best: Option<(f64, usize, Vec<i64>)> = None;
    for (ci, r) in results.into_iter().enumerate() {
        if let Some((val, pos)) = r {
            if best.as_ref().is_none_or(|b| val > b.0) {
                best = Some((val, ci, pos));
            }
        }
    }
    let (_, ci, pos) = best?;
    let rt = cubes[ci].0.clone();
    let top = Tile { freq: freq_from_thirds(-rt.scale, &pos), spatial: rt };
    let members: Vec<usize> = cubes[ci]
        .1
        .iter()
        .copied()
        .filter(|&i| tree_member(&s.tiles[i].spatial, &s.tiles[i].freqs[slot], &top, kind, s.c0))
        .collect();
    if members.is_empty() {
        return None;
    }
    let mass: f64 = members.iter().map(|&i| weights[i]).sum();
    let score_v = match score {
        TopScore::Mass => mass,
        TopScore::Density => mass / top.spatial.measure(),
    };
    Some(TopChoice { top, members, mass, score: score_v })
}

fn map_slice_idx<T: Sync, R: Send>(exec: Exec, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    crate::exec::map_slice(exec, items, f)
}

/// Frequency cube of scale `fscale` whose lower corner is `pos · 2^{fscale}/3`.
fn freq_from_thirds(fscale: i32, pos: &[i64]) -> DyadicCube {
    let corner: Vec<i64> = pos.iter().map(|&t| (t + 1).div_euclid(3)).collect();
    let shift = pos.iter().zip(&corner).map(|(&t, &k)| (t - 3 * k) as i8).collect();
    DyadicCube { scale: fscale, corner, shift }
}

type Box = (Vec<i64>, Vec<i64>);

/// Positions `u` (lower corner of `ω_T` in units of `|ω_T|/3`) with
/// `ω_T ⊆ c·ω_s`, as an inclusive box.
fn dilate_box(w: &DyadicCube, top_scale: i32, c: u32) -> Box {
    // Work in units of |ω_T|/6: ω_s = [lo, lo + 6f), ω_T = [v, v + 6).
    let e0 = top_scale;
    let c = c as i128;
    let mut lo = Vec::with_capacity(w.dim());
    let mut hi = Vec::with_capacity(w.dim());
    for i in 0..w.dim() {
        let (a, b) = w.units(i, e0);
        let half = (b - a) / 2;
        let mid = a + half;
        let (dl, dh) = (mid - c * half, mid + c * half - 6);
        lo.push((dl.div_euclid(2) + (dl.rem_euclid(2) != 0) as i128) as i64);
        hi.push(dh.div_euclid(2) as i64);
    }
    (lo, hi)
}

fn sweep_cube(
    s: &TileCollection,
    rt: &DyadicCube,
    idx: &[usize],
    slot: usize,
    kind: TreeKind,
    weights: &[f64],
    score: TopScore,
) -> Option<(f64, Vec<i64>)> {
    let d = s.d;
    let top_scale = -rt.scale;
    let mut events: Vec<(Box, f64)> = Vec::new();
    for &i in idx {
        let t = &s.tiles[i];
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let w_s = &t.freqs[slot];
        let strict = t.spatial.scale < rt.scale;
        let point = || -> Vec<i64> { (0..d).map(|a| 3 * w_s.corner[a] + w_s.shift[a] as i64).collect() };
        match kind {
            TreeKind::Lacunary => {
                events.push((dilate_box(w_s, top_scale, s.c0), w));
                if strict {
                    events.push((dilate_box(w_s, top_scale, 3), -w));
                } else {
                    let p = point();
                    events.push(((p.clone(), p), -w));
                }
            }
            TreeKind::Overlapping => {
                if strict {
                    events.push((dilate_box(w_s, top_scale, 3), w));
                } else {
                    let p = point();
                    events.push(((p.clone(), p), w));
                }
            }
        }
    }
    events.retain(|(b, _)| b.0.iter().zip(&b.1).all(|(l, h)| l <= h));
    if events.is_empty() {
        return None;
    }
    let mut axes: Vec<Vec<i64>> = vec![Vec::new(); d];
    for (b, _) in &events {
        for a in 0..d {
            axes[a].push(b.0[a]);
            axes[a].push(b.1[a] + 1);
        }
    }
    for ax in axes.iter_mut() {
        ax.sort_unstable();
        ax.dedup();
    }
    let dims: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = dims.iter().product();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * dims[a + 1];
    }
    let mut grid = vec![0.0f64; total];
    for (b, w) in &events {
        let lo: Vec<usize> = (0..d).map(|a| axes[a].binary_search(&b.0[a]).unwrap()).collect();
        let hi: Vec<usize> = (0..d).map(|a| axes[a].binary_search(&(b.1[a] + 1)).unwrap()).collect();
        for corner in 0..1usize << d {
            let mut off = 0usize;
            let mut sign = 1.0;
            let mut inside = true;
            for a in 0..d {
                let c = if corner >> a & 1 == 1 {
                    sign = -sign;
                    hi[a]
                } else {
                    lo[a]
                };
                if c >= dims[a] {
                    inside = false;
                    break;
                }
                off += c * strides[a];
            }
            if inside {
                grid[off] += sign * w;
            }
        }
    }
    for a in 0..d {
        let (st, n) = (strides[a], dims[a]);
        for base in 0..total {
            let pos = (base / st) % n;
            if pos > 0 {
                grid[base] += grid[base - st];
            }
        }
    }
    let norm = match score {
        TopScore::Mass => 1.0,
        TopScore::Density => 1.0 / rt.measure(),
    };
    let mut best: Option<(f64, usize)> = None;
    for (cell, &v) in grid.iter().enumerate() {
        if v > 1e-300 && best.is_none_or(|b| v > b.0) {
            best = Some((v, cell));
        }
    }
    let (v, cell) = best?;
    let pos = (0..d).map(|a| axes[a][(cell / strides[a]) % dims[a]]).collect();
    Some((v * norm, pos))
}

/// Greedy decomposition of `S` into disjoint `kind` trees in `slot`: each
/// round takes the top capturing the most remaining tiles (ties per
/// [`best_top`]) and removes its members.
pub fn find_trees(s: &TileCollection, slot: usize, kind: TreeKind) -> Vec<Tree> {
    find_trees_in(s, &(0..s.len()).collect::<Vec<_>>(), slot, kind)
}

pub fn find_trees_in(s: &TileCollection, pool: &[usize], slot: usize, kind: TreeKind) -> Vec<Tree> {
    let ones = vec![1.0; s.len()];
    let mut remaining: Vec<usize> = pool.to_vec();
    remaining.sort_unstable();
    let mut trees = Vec::new();
    while !remaining.is_empty() {
        let (top, members) = match best_top_with(Exec::Auto, s, &remaining, slot, kind, &ones, TopScore::Mass) {
            Some(c) => (c.top, c.members),
            None => {
                let i = remaining[0];
                let t = s.tiles[i].slot(slot);
                let mut freq = t.freq.clone();
                if kind == TreeKind::Lacunary {
                    freq.corner[0] += 1;
                }
                (Tile { spatial: t.spatial, freq }, vec![i])
            }
        };
        remaining.retain(|i| !members.contains(i));
        trees.push(make_tree(s, slot, top, members, kind));
    }
    trees
}

/// Assembles a [`Tree`], filling in coordinate types and the axis tag.
pub fn make_tree(s: &TileCollection, slot: usize, top: Tile, members: Vec<usize>, kind: TreeKind) -> Tree {
    let mut coordinate_types = vec![CoordType::None; s.n + 1];
    coordinate_types[slot] = match kind {
        TreeKind::Lacunary => CoordType::Lacunary,
        TreeKind::Overlapping => CoordType::Overlapping,
    };
    let axis_tag = if kind == TreeKind::Lacunary && s.d >= 2 {
        (0..s.d).find(|&ax| {
            members.iter().all(|&i| {
                let w = &s.tiles[i].freqs[slot];
                let e0 = w.scale.min(top.freq.scale);
                let (a, b) = top.freq.units(ax, e0);
                let (lo, hi) = w.units(ax, e0);
                let half = (hi - lo) / 2;
                let (c, e) = (lo + half - 3 * half, lo + half + 3 * half);
                b <= c || e <= a
            })
        })
    } else {
        None
    };
    Tree { slot, top, members, kind, coordinate_types, axis_tag }
}

/// Whether `members` (indices into `s`) form a `kind` tree in `slot` with top `top`.
pub fn is_tree(s: &TileCollection, members: &[usize], slot: usize, top: &Tile, kind: TreeKind) -> bool {
    members
        .iter()
        .all(|&i| tree_member(&s.tiles[i].spatial, &s.tiles[i].freqs[slot], top, kind, s.c0))
}
