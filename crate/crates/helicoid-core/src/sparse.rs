//! Sparse collections: verification, stopping-time construction, and
//! sparse forms.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::DyadicCube;
use crate::exec::Exec;
use crate::exponents::LebesgueExponent;
use crate::gridfn::{ave, full_lattice, lp_norm, GridError, GridFunction, Weight};
use crate::maximal::{maximal_table, CubeFamily, MaximalError};

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("children of {cube} cover {ratio} of it, above 1/2; raise the jump factor")]
    ChildMass { cube: String, ratio: f64 },
    #[error("top cube must be unshifted and fit the grid")]
    BadTop,
    #[error(transparent)]
    Maximal(#[from] MaximalError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Cubes with pairwise disjoint witness sets `E_Q ⊆ Q`, stored as bitmaps
/// over the `N^d` grid points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCollection {
    pub d: usize,
    pub j: u32,
    pub eta: BigRational,
    pub cubes: Vec<DyadicCube>,
    pub witnesses: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SparseViolation {
    WitnessOutside { cube: usize },
    Overlap { a: usize, b: usize },
    WitnessTooSmall { cube: usize, points: usize },
    ChildMass { cube: usize, points: usize },
    Shape,
}

pub fn bitmap_from(points: impl IntoIterator<Item = usize>, np: usize) -> Vec<u64> {
    let mut b = vec![0u64; np.div_ceil(64)];
    for p in points {
        b[p / 64] |= 1 << (p % 64);
    }
    b
}

fn bit(b: &[u64], p: usize) -> bool {
    b[p / 64] >> (p % 64) & 1 == 1
}

fn popcount(b: &[u64]) -> usize {
    b.iter().map(|w| w.count_ones() as usize).sum()
}

impl SparseCollection {
    pub fn points(&self) -> usize {
        1usize << (self.j as usize * self.d)
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("collection serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Every cube with `E_Q = Q`.
    pub fn with_full_witnesses(d: usize, j: u32, eta: BigRational, cubes: Vec<DyadicCube>) -> Result<Self, SparseError> {
        if cubes.is_empty() {
            return Ok(Self { d, j, eta, cubes, witnesses: Vec::new() });
        }
        let fam = CubeFamily::new(d, j, cubes.clone())?;
        let np = 1usize << (j as usize * d);
        let witnesses = (0..cubes.len()).map(|c| bitmap_from(fam.points(c).iter().copied(), np)).collect();
        Ok(Self { d, j, eta, cubes, witnesses })
    }
}

/// Checks `E_Q ⊆ Q`, pairwise disjointness, `|E_Q| ≥ η|Q|` and
/// `Σ_{P ∈ ch(Q)} |P| ≤ (1-η)|Q|` by counting grid points.
pub fn verify_sparse(c: &SparseCollection) -> Result<(), SparseViolation> {
    if c.witnesses.len() != c.cubes.len() {
        return Err(SparseViolation::Shape);
    }
    if c.cubes.is_empty() {
        return Ok(());
    }
    let fam = CubeFamily::new(c.d, c.j, c.cubes.clone()).map_err(|_| SparseViolation::Shape)?;
    let np = c.points();
    let words = np.div_ceil(64);
    if c.witnesses.iter().any(|w| w.len() != words) {
        return Err(SparseViolation::Shape);
    }
    let mut owner: Vec<Option<usize>> = vec![None; np];
    let num = BigInt::from(c.eta.numer().clone());
    let den = BigInt::from(c.eta.denom().clone());
    for (qi, w) in c.witnesses.iter().enumerate() {
        let inside = bitmap_from(fam.points(qi).iter().copied(), np);
        if w.iter().zip(&inside).any(|(a, b)| a & !b != 0) {
            return Err(SparseViolation::WitnessOutside { cube: qi });
        }
        for p in (0..np).filter(|&p| bit(w, p)) {
            if let Some(o) = owner[p] {
                return Err(SparseViolation::Overlap { a: o, b: qi });
            }
            owner[p] = Some(qi);
        }
        let size = fam.points(qi).len();
        let got = popcount(w);
        if BigInt::from(got) * &den < &num * BigInt::from(size) {
            return Err(SparseViolation::WitnessTooSmall { cube: qi, points: got });
        }
    }
    for qi in 0..c.cubes.len() {
        let q = &c.cubes[qi];
        let inner: Vec<usize> = (0..c.cubes.len()).filter(|&p| p != qi && c.cubes[p] != *q && q.contains_cube(&c.cubes[p])).collect();
        let children: Vec<usize> = inner
            .iter()
            .copied()
            .filter(|&p| !inner.iter().any(|&o| o != p && c.cubes[o] != c.cubes[p] && c.cubes[o].contains_cube(&c.cubes[p])))
            .collect();
        let mut covered = vec![false; np];
        for &p in &children {
            for &x in fam.points(p) {
                covered[x] = true;
            }
        }
        let mass = covered.iter().filter(|&&b| b).count();
        let size = fam.points(qi).len();
        if BigInt::from(mass) * &den > (&den - &num) * BigInt::from(size) {
            return Err(SparseViolation::ChildMass { cube: qi, points: mass });
        }
    }
    Ok(())
}

/// `max_{Q₀} Σ_{Q ∈ c, Q ⊆ Q₀} |Q| / |Q₀|` over all unshifted dyadic cubes of the torus.
pub fn carleson_constant(c: &SparseCollection) -> f64 {
    full_lattice(c.d, c.j)
        .iter()
        .map(|q0| c.cubes.iter().filter(|q| q0.contains_cube(q)).map(DyadicCube::measure).sum::<f64>() / q0.measure())
        .fold(0.0, f64::max)
}

/// Inputs of the stopping time: functions and exponents whose averages are tracked.
#[derive(Clone, Debug)]
pub struct Tracked<'a> {
    pub functions: Vec<&'a GridFunction>,
    pub exponents: Vec<LebesgueExponent>,
}

/// Default jump factor `2^{d+2}`.
pub fn default_jump(d: usize) -> f64 {
    2f64.powi(d as i32 + 2)
}

/// Stopping-time sparse collection under `top`: children of `Q` are the
/// maximal dyadic `P ⊊ Q` where some tracked average exceeds `jump` times
/// its value on `Q`, and `E_Q = Q \ ∪ children`. Aborts if children cover
/// more than half of a parent. Averages use the indicator weight.
pub fn build_sparse(tracked: &Tracked, top: &DyadicCube, jump: f64) -> Result<SparseCollection, SparseError> {
    let f0 = tracked.functions.first().ok_or(SparseError::BadTop)?;
    let (d, j) = (f0.d, f0.j);
    if !top.is_unshifted() || top.dim() != d || top.scale > 0 || top.scale + (j as i32) < 0 {
        return Err(SparseError::BadTop);
    }
    let family = CubeFamily::new(d, j, (-(j as i32)..=top.scale).rev().flat_map(|s| sub_cubes(top, s)).collect())?;
    let index: HashMap<DyadicCube, usize> = family.cubes.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    let tables: Vec<Vec<f64>> = tracked
        .functions
        .iter()
        .zip(&tracked.exponents)
        .map(|(f, s)| {
            let abs = f.abs();
            maximal_table(Exec::default(), std::slice::from_ref(&abs), std::slice::from_ref(s), &family, Weight::Indicator)
                .map(|t| t.values.into_iter().map(|v| v[0]).collect())
        })
        .collect::<Result<_, _>>()?;
    let np_total = 1usize << (j as usize * d);
    let mut cubes = Vec::new();
    let mut witnesses = Vec::new();
    let mut generation = vec![top.clone()];
    while !generation.is_empty() {
        let mut next = Vec::new();
        for q in generation {
            let qi = index[&q];
            let mut children = Vec::new();
            let mut stack = if q.scale + (j as i32) > 0 { q.children() } else { Vec::new() };
            while let Some(p) = stack.pop() {
                let pi = index[&p];
                if tables.iter().any(|t| t[pi] > jump * t[qi]) {
                    children.push(p);
                } else if p.scale + (j as i32) > 0 {
                    stack.extend(p.children());
                }
            }
            children.sort();
            let mass: f64 = children.iter().map(DyadicCube::measure).sum();
            if mass > 0.5 * q.measure() {
                return Err(SparseError::ChildMass { cube: q.to_string(), ratio: mass / q.measure() });
            }
            let mut inside = vec![false; np_total];
            for c in &children {
                for &x in family.points(index[c]) {
                    inside[x] = true;
                }
            }
            witnesses.push(bitmap_from(family.points(qi).iter().copied().filter(|&x| !inside[x]), np_total));
            cubes.push(q);
            next.extend(children);
        }
        generation = next;
    }
    Ok(SparseCollection { d, j, eta: BigRational::new(1.into(), 2.into()), cubes, witnesses })
}

fn sub_cubes(top: &DyadicCube, scale: i32) -> Vec<DyadicCube> {
    let k = 1i64 << (top.scale - scale);
    let d = top.dim();
    let mut out = Vec::new();
    let mut idx = vec![0i64; d];
    loop {
        out.push(DyadicCube::unshifted(scale, (0..d).map(|a| top.corner[a] * k + idx[a]).collect()));
        let mut a = d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < k {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// `Σ_Q Π_j ave^{s_j}_Q(f_j)^q · |Q|`, where the last tracked entry plays
/// the role of `v`.
pub fn sparse_form(c: &SparseCollection, tracked: &Tracked, q: f64, weight: Weight) -> Result<f64, SparseError> {
    let mut total = 0.0;
    for cube in &c.cubes {
        let mut term = cube.measure();
        for (f, s) in tracked.functions.iter().zip(&tracked.exponents) {
            term *= ave(&f.abs(), cube, s, weight)?.powf(q);
        }
        total += term;
    }
    Ok(total)
}

/// `‖T·v‖_q^q / sparse_form`, with `t_output` already reduced to a scalar.
/// Returns infinity when the form vanishes but the numerator does not.
pub fn sparse_domination_ratio(
    t_output: &GridFunction,
    v: &GridFunction,
    c: &SparseCollection,
    tracked: &Tracked,
    q: f64,
    weight: Weight,
) -> Result<f64, SparseError> {
    let qe = LebesgueExponent::from_recip(BigRational::from_float(1.0 / q).ok_or(SparseError::BadTop)?);
    let num = lp_norm(&t_output.mul(v)?, &qe)?.powf(q);
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = sparse_form(c, tracked, q, weight)?;
    Ok(if den == 0.0 { f64::INFINITY } else { num / den })
}
