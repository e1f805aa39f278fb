//! Exact rational algebra over tuples of Lebesgue exponents.
//!
//! Exponents are stored through their reciprocals (`0` encodes `p = ∞`), so
//! every admissibility condition below is linear and decided without
//! tolerances.

pub mod lp;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use lp::{Constraint, LpOutcome, Op};

pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn q_to_f64(v: &Q) -> f64 {
    v.numer().to_f64().unwrap_or(f64::NAN) / v.denom().to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExponentError {
    #[error("malformed tuple: {0}")]
    Malformed(String),
    #[error("rank constraint violated: k = {k} is not below (n+1)/2 for n = {n}")]
    RankConstraint { n: usize, k: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("map {0} is not a coordinate projection")]
    UnsupportedMap(usize),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
}

/// A Lebesgue exponent `p`, stored as `1/p`.
///
/// Negative reciprocals are allowed: the last slot of a quasi-Banach Hölder
/// tuple has `1/p_{n+1} < 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LebesgueExponent {
    recip: Q,
}

impl LebesgueExponent {
    pub fn infinity() -> Self {
        Self { recip: Q::zero() }
    }

    pub fn from_recip(recip: Q) -> Self {
        Self { recip }
    }

    /// `p = num/den`; panics on `num == 0`.
    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(num != 0, "p = 0 has no reciprocal");
        Self { recip: q(den, num) }
    }

    pub fn from_int(p: i64) -> Self {
        Self::from_ratio(p, 1)
    }

    pub fn recip(&self) -> &Q {
        &self.recip
    }

    pub fn recip_f64(&self) -> f64 {
        q_to_f64(&self.recip)
    }

    pub fn is_infinite(&self) -> bool {
        self.recip.is_zero()
    }

    /// `p` as a float (`f64::INFINITY` for `p = ∞`).
    pub fn to_f64(&self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            1.0 / self.recip_f64()
        }
    }

    /// Hölder conjugate `p'`, defined when `1/p ≤ 1`.
    pub fn conjugate(&self) -> Result<Self, ExponentError> {
        if self.recip > Q::one() {
            return Err(ExponentError::InvalidExponent(format!(
                "conjugate of p = {self} with 1/p > 1"
            )));
        }
        Ok(Self { recip: Q::one() - &self.recip })
    }

    /// Exponent usable as a norm index: `0 < p ≤ ∞`.
    pub fn check_norm_index(&self) -> Result<(), ExponentError> {
        if self.recip.is_negative() {
            Err(ExponentError::InvalidExponent(format!("p = {self} is negative")))
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for LebesgueExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            return write!(f, "inf");
        }
        let p = self.recip.recip();
        if p.denom().is_one() {
            write!(f, "{}", p.numer())
        } else {
            write!(f, "{}/{}", p.numer(), p.denom())
        }
    }
}

impl FromStr for LebesgueExponent {
    type Err = ExponentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s == "∞" {
            return Ok(Self::infinity());
        }
        let bad = || ExponentError::InvalidExponent(format!("cannot parse exponent {s:?}"));
        let (num, den) = match s.split_once('/') {
            Some((a, b)) => (
                a.trim().parse::<BigInt>().map_err(|_| bad())?,
                b.trim().parse::<BigInt>().map_err(|_| bad())?,
            ),
            None => (s.parse::<BigInt>().map_err(|_| bad())?, BigInt::one()),
        };
        if num.is_zero() || den.is_zero() {
            return Err(bad());
        }
        Ok(Self { recip: Q::new(den, num) })
    }
}

impl Serialize for LebesgueExponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LebesgueExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered exponents `(p_1, …, p_{n+1})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExponentTuple(pub Vec<LebesgueExponent>);

impl ExponentTuple {
    pub fn from_recips(recips: Vec<Q>) -> Self {
        Self(recips.into_iter().map(LebesgueExponent::from_recip).collect())
    }

    /// Parses a tuple such as `"2,2,inf"` or `"4/3, 4/3, -2"`.
    pub fn parse(s: &str) -> Result<Self, ExponentError> {
        s.split(',')
            .map(|p| p.parse())
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn recips(&self) -> Vec<Q> {
        self.0.iter().map(|e| e.recip.clone()).collect()
    }

    pub fn recip_sum(&self) -> Q {
        self.0.iter().fold(Q::zero(), |a, e| a + &e.recip)
    }
}

impl fmt::Display for ExponentTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Interpolation weights over the k-subsets of `{0, …, n}` (0-based slots).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThetaVector {
    pub n: usize,
    pub k: usize,
    pub weights: BTreeMap<Vec<usize>, Q>,
}

impl ThetaVector {
    /// Builds and validates: weights in `[0, 1]`, exact sum 1, subsets of size k.
    pub fn new(n: usize, k: usize, weights: BTreeMap<Vec<usize>, Q>) -> Result<Self, ExponentError> {
        check_rank(n, k)?;
        let mut total = Q::zero();
        for (s, w) in &weights {
            if s.len() != k || s.windows(2).any(|p| p[0] >= p[1]) || s.iter().any(|&i| i > n) {
                return Err(ExponentError::Malformed(format!("bad subset {s:?}")));
            }
            if w.is_negative() || *w > Q::one() {
                return Err(ExponentError::Malformed(format!("weight {w} outside [0,1]")));
            }
            total += w;
        }
        if k > 0 && total != Q::one() {
            return Err(ExponentError::Malformed(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { n, k, weights })
    }

    /// Uniform weights on all k-subsets.
    pub fn uniform(n: usize, k: usize) -> Result<Self, ExponentError> {
        let subsets = k_subsets(n + 1, k);
        let w = q(1, subsets.len() as i64);
        Self::new(n, k, subsets.into_iter().map(|s| (s, w.clone())).collect())
    }
}

/// `(α_1, …, α_{n+1})`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaTuple {
    pub n: usize,
    pub k: usize,
    pub alphas: Vec<Q>,
}

impl AlphaTuple {
    pub fn new(n: usize, k: usize, alphas: Vec<Q>) -> Result<Self, ExponentError> {
        if alphas.len() != n + 1 {
            return Err(ExponentError::LengthMismatch { expected: n + 1, got: alphas.len() });
        }
        Ok(Self { n, k, alphas })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.alphas.iter().map(q_to_f64).collect()
    }

    pub fn sum(&self) -> Q {
        self.alphas.iter().fold(Q::zero(), |a, b| a + b)
    }
}

/// `L^{p_1}_{ℝ^{d_1}} … L^{p_m}_{ℝ^{d_m}}` as `(d_i, p_i)` groups, outermost first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedExponent {
    pub groups: Vec<(usize, LebesgueExponent)>,
}

impl MixedExponent {
    pub fn new(groups: Vec<(usize, LebesgueExponent)>) -> Result<Self, ExponentError> {
        if groups.iter().any(|g| g.0 == 0) {
            return Err(ExponentError::Malformed("block dimension 0".into()));
        }
        Ok(Self { groups })
    }

    /// One group per axis.
    pub fn per_axis(exps: Vec<LebesgueExponent>) -> Self {
        Self { groups: exps.into_iter().map(|e| (1, e)).collect() }
    }

    /// The same exponent jointly on `d` axes.
    pub fn uniform(d: usize, p: LebesgueExponent) -> Self {
        Self { groups: vec![(d, p)] }
    }

    pub fn dim(&self) -> usize {
        self.groups.iter().map(|g| g.0).sum()
    }

    /// Exponent attached to each axis.
    pub fn axis_exponents(&self) -> Vec<LebesgueExponent> {
        self.groups
            .iter()
            .flat_map(|(d, p)| std::iter::repeat_n(p.clone(), *d))
            .collect()
    }
}

fn check_rank(n: usize, k: usize) -> Result<(), ExponentError> {
    // k < (n+1)/2  ⇔  2k < n+1
    if 2 * k >= n + 1 {
        Err(ExponentError::RankConstraint { n, k })
    } else {
        Ok(())
    }
}

/// All k-subsets of `{0, …, m-1}` in lexicographic order.
pub fn k_subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Σ 1/p_j = 1 with `1 < p_1..p_n ≤ ∞` and `1/n < p'_{n+1} < ∞`.
pub fn is_holder_tuple(t: &ExponentTuple) -> Result<bool, ExponentError> {
    holder_violation(t).map(|v| v.is_none())
}

fn holder_violation(t: &ExponentTuple) -> Result<Option<String>, ExponentError> {
    let m = t.arity();
    if m < 2 {
        return Err(ExponentError::Malformed(format!("arity {m} < 2")));
    }
    let n = m - 1;
    let sum = t.recip_sum();
    if sum != Q::one() {
        return Ok(Some(format!("reciprocals sum to {sum}")));
    }
    for (j, e) in t.0[..n].iter().enumerate() {
        if e.recip.is_negative() || e.recip >= Q::one() {
            return Ok(Some(format!("p_{} = {e} not in (1, ∞]", j + 1)));
        }
    }
    // 1/p'_{n+1} = 1 - 1/p_{n+1} must lie in (0, n).
    let conj = Q::one() - &t.0[n].recip;
    if !conj.is_positive() || conj >= Q::from_integer(BigInt::from(n)) {
        return Ok(Some(format!("p'_{} outside (1/{n}, ∞)", n + 1)));
    }
    Ok(None)
}

/// `1/p_j < a_j` for every j.
pub fn is_local(t: &ExponentTuple, a: &[Q]) -> Result<bool, ExponentError> {
    if a.len() != t.arity() {
        return Err(ExponentError::LengthMismatch { expected: t.arity(), got: a.len() });
    }
    Ok(t.0.iter().zip(a).all(|(e, a)| e.recip < *a))
}

/// α_j = Σ of θ over subsets containing j.
pub fn alpha_from_theta(theta: &ThetaVector) -> AlphaTuple {
    let mut alphas = vec![Q::zero(); theta.n + 1];
    for (s, w) in &theta.weights {
        for &j in s {
            alphas[j] += w;
        }
    }
    AlphaTuple { n: theta.n, k: theta.k, alphas }
}

/// Membership in Ξ_{n,k}: every α_j in (0, 1/2) and α = α(θ) for some θ,
/// decided by exact LP feasibility over the weight simplex.
pub fn xi_feasible(n: usize, k: usize, alphas: &AlphaTuple) -> Result<bool, ExponentError> {
    Ok(xi_certificate(n, k, alphas)?.is_some())
}

/// Like [`xi_feasible`], returning the θ certificate when it exists.
pub fn xi_certificate(n: usize, k: usize, alphas: &AlphaTuple) -> Result<Option<ThetaVector>, ExponentError> {
    check_rank(n, k)?;
    if alphas.alphas.len() != n + 1 {
        return Err(ExponentError::LengthMismatch { expected: n + 1, got: alphas.alphas.len() });
    }
    let half = q(1, 2);
    if alphas.alphas.iter().any(|a| !a.is_positive() || *a >= half) {
        return Ok(None);
    }
    let subsets = k_subsets(n + 1, k);
    let nv = subsets.len();
    let mut cons = Vec::with_capacity(n + 2);
    cons.push(Constraint { coeffs: vec![Q::one(); nv], op: Op::Eq, rhs: Q::one() });
    for (j, a) in alphas.alphas.iter().enumerate() {
        let coeffs = subsets
            .iter()
            .map(|s| if s.contains(&j) { Q::one() } else { Q::zero() })
            .collect();
        cons.push(Constraint { coeffs, op: Op::Eq, rhs: a.clone() });
    }
    Ok(lp::feasible_point(nv, &cons).map(|x| ThetaVector {
        n,
        k,
        weights: subsets.into_iter().zip(x).filter(|(_, w)| !w.is_zero()).collect(),
    }))
}

/// Outcome of a Range(n,k) query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeDecision {
    pub member: bool,
    pub witness: Option<AlphaTuple>,
    pub theta: Option<ThetaVector>,
    pub reason: Option<String>,
}

impl RangeDecision {
    fn reject(reason: String) -> Self {
        Self { member: false, witness: None, theta: None, reason: Some(reason) }
    }
}

/// Decides whether `t` lies in Range(n,k): a Hölder tuple for which some
/// α ∈ Ξ_{n,k} has `1/p_j < 1 - α_j` for every j.
///
/// The slack LP `max t` subject to `t ≤ α_j ≤ u_j - t`, `Σ α_j = k`, with
/// `u_j = min(1/2, 1 - 1/p_j)`, is solved in closed form; attainable α are
/// exactly the points of the hypersimplex, so θ is recovered constructively.
/// The witness is the max-slack point pushed proportionally towards the caps.
pub fn range_membership(n: usize, k: usize, t: &ExponentTuple) -> Result<RangeDecision, ExponentError> {
    check_rank(n, k)?;
    if t.arity() != n + 1 {
        return Err(ExponentError::LengthMismatch { expected: n + 1, got: t.arity() });
    }
    if let Some(why) = holder_violation(t)? {
        return Ok(RangeDecision::reject(format!("not a Hölder tuple: {why}")));
    }
    if k == 0 {
        let witness = AlphaTuple { n, k, alphas: vec![Q::zero(); n + 1] };
        return Ok(RangeDecision { member: true, witness: Some(witness), theta: None, reason: None });
    }
    let caps = slack_caps(t);
    let m = q((n + 1) as i64, 1);
    let kq = Q::from_integer(BigInt::from(k));
    let cap_sum = caps.iter().fold(Q::zero(), |a, b| a + b);
    let mut slack = &kq / &m;
    let upper = (&cap_sum - &kq) / &m;
    if upper < slack {
        slack = upper;
    }
    for u in &caps {
        let h = u / q(2, 1);
        if h < slack {
            slack = h;
        }
    }
    if !slack.is_positive() {
        let j = caps.iter().position(|u| !u.is_positive());
        let why = match j {
            Some(j) => format!("1/p_{} ≥ 1 leaves no room for α_{}", j + 1, j + 1),
            None => format!("caps sum to {cap_sum} ≤ k = {k}"),
        };
        return Ok(RangeDecision::reject(why));
    }
    let alphas = max_slack_point(&caps, &slack, &kq);
    let witness = AlphaTuple { n, k, alphas };
    let theta = theta_from_alpha(&witness);
    Ok(RangeDecision { member: true, witness: Some(witness), theta: Some(theta), reason: None })
}

/// `u_j = min(1/2, 1 - 1/p_j)`.
fn slack_caps(t: &ExponentTuple) -> Vec<Q> {
    let half = q(1, 2);
    t.0.iter()
        .map(|e| {
            let c = Q::one() - &e.recip;
            if c < half {
                c
            } else {
                half.clone()
            }
        })
        .collect()
}

fn max_slack_point(caps: &[Q], slack: &Q, k: &Q) -> Vec<Q> {
    let two = q(2, 1);
    let m = Q::from_integer(BigInt::from(caps.len()));
    let room: Vec<Q> = caps.iter().map(|u| u - &two * slack).collect();
    let room_sum = room.iter().fold(Q::zero(), |a, b| a + b);
    let need = k - &m * slack;
    let lambda = if room_sum.is_zero() { Q::zero() } else { need / room_sum };
    room.iter().map(|r| slack + &lambda * r).collect()
}

/// Checks a candidate witness for Range(n,k) membership of `t`.
pub fn is_range_witness(t: &ExponentTuple, alpha: &AlphaTuple) -> Result<bool, ExponentError> {
    let n = alpha.n;
    if t.arity() != n + 1 {
        return Err(ExponentError::LengthMismatch { expected: n + 1, got: t.arity() });
    }
    if !is_holder_tuple(t)? || alpha.sum() != Q::from_integer(BigInt::from(alpha.k)) {
        return Ok(false);
    }
    if alpha.k == 0 {
        return Ok(true);
    }
    if !xi_feasible(n, alpha.k, alpha)? {
        return Ok(false);
    }
    let a: Vec<Q> = alpha.alphas.iter().map(|a| Q::one() - a).collect();
    is_local(t, &a)
}

/// Decomposes α (with `0 ≤ α_j ≤ 1`, `Σ α_j = k`) into k-subset weights by
/// systematic sampling: lay the α_j end to end on `[0, k)` and read off which
/// intervals contain `u, u+1, …, u+k-1` as `u` sweeps `[0, 1)`.
pub fn theta_from_alpha(alpha: &AlphaTuple) -> ThetaVector {
    let mut cum = Vec::with_capacity(alpha.alphas.len() + 1);
    cum.push(Q::zero());
    for a in &alpha.alphas {
        let next = cum.last().unwrap() + a;
        cum.push(next);
    }
    let frac = |v: &Q| v - v.floor();
    let mut cuts: Vec<Q> = cum.iter().map(frac).collect();
    cuts.push(Q::zero());
    cuts.push(Q::one());
    cuts.sort();
    cuts.dedup();
    let mut weights: BTreeMap<Vec<usize>, Q> = BTreeMap::new();
    for w in cuts.windows(2) {
        let len = &w[1] - &w[0];
        if len.is_zero() {
            continue;
        }
        let u = (&w[0] + &w[1]) / q(2, 1);
        let set: Vec<usize> = (0..alpha.alphas.len())
            .filter(|&j| {
                // [cum_j, cum_{j+1}) contains some u + i.
                let lo = &cum[j] - &u;
                let hi = &cum[j + 1] - &u;
                let first = lo.ceil();
                first < hi
            })
            .collect();
        *weights.entry(set).or_insert_with(Q::zero) += len;
    }
    ThetaVector { n: alpha.n, k: alpha.k, weights }
}

/// Slack LP over θ directly (used to cross-check [`range_membership`]).
/// Returns the optimal slack, or `None` if even zero slack is infeasible.
pub fn range_slack_lp(n: usize, k: usize, t: &ExponentTuple) -> Result<Option<Q>, ExponentError> {
    check_rank(n, k)?;
    let subsets = k_subsets(n + 1, k);
    let nv = subsets.len() + 1;
    let ts = nv - 1;
    let member_row = |j: usize, tcoef: i64| -> Vec<Q> {
        let mut r: Vec<Q> = subsets
            .iter()
            .map(|s| if s.contains(&j) { Q::one() } else { Q::zero() })
            .collect();
        r.push(q(tcoef, 1));
        r
    };
    let mut cons = Vec::new();
    let mut sum_row = vec![Q::one(); nv];
    sum_row[ts] = Q::zero();
    cons.push(Constraint { coeffs: sum_row, op: Op::Eq, rhs: Q::one() });
    let mut cap = vec![Q::zero(); nv];
    cap[ts] = Q::one();
    cons.push(Constraint { coeffs: cap, op: Op::Le, rhs: Q::one() });
    for (j, e) in t.0.iter().enumerate() {
        cons.push(Constraint { coeffs: member_row(j, -1), op: Op::Ge, rhs: Q::zero() });
        cons.push(Constraint { coeffs: member_row(j, 1), op: Op::Le, rhs: q(1, 2) });
        cons.push(Constraint { coeffs: member_row(j, 1), op: Op::Le, rhs: Q::one() - e.recip() });
    }
    let mut obj = vec![Q::zero(); nv];
    obj[ts] = Q::one();
    Ok(match lp::maximize(&obj, &cons) {
        LpOutcome::Optimal { value, .. } => Some(value),
        _ => None,
    })
}

/// A linear map `ℝ^d → ℝ^{d_j}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearMap {
    /// Keeps the listed axes (in order) and drops the rest.
    Projection { keep: Vec<usize> },
    /// General integer matrix, rows are output coordinates.
    Matrix(Vec<Vec<i64>>),
}

impl LinearMap {
    /// Forgets axis `axis` of `ℝ^d`.
    pub fn forget(d: usize, axis: usize) -> Self {
        LinearMap::Projection { keep: (0..d).filter(|&i| i != axis).collect() }
    }

    fn kept_axes(&self, d: usize, idx: usize) -> Result<Vec<usize>, ExponentError> {
        let keep = match self {
            LinearMap::Projection { keep } => keep.clone(),
            LinearMap::Matrix(rows) => {
                let mut keep = Vec::new();
                for r in rows {
                    if r.len() != d {
                        return Err(ExponentError::UnsupportedMap(idx));
                    }
                    let nz: Vec<usize> = (0..d).filter(|&i| r[i] != 0).collect();
                    if nz.len() != 1 || r[nz[0]] != 1 {
                        return Err(ExponentError::UnsupportedMap(idx));
                    }
                    keep.push(nz[0]);
                }
                keep
            }
        };
        let mut sorted = keep.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != keep.len() || keep.iter().any(|&a| a >= d) {
            return Err(ExponentError::UnsupportedMap(idx));
        }
        Ok(sorted)
    }
}

/// Brascamp–Lieb admissibility for coordinate projections: `1 < p_j ≤ ∞`,
/// `d = Σ d_j/p_j`, and `dim V ≤ Σ dim(L_j V)/p_j` over all 2^d coordinate
/// subspaces V.
pub fn is_brascamp_lieb_tuple(t: &ExponentTuple, maps: &[LinearMap], d: usize) -> Result<bool, ExponentError> {
    if maps.len() != t.arity() {
        return Err(ExponentError::LengthMismatch { expected: t.arity(), got: maps.len() });
    }
    if d > 16 {
        return Err(ExponentError::Malformed(format!("d = {d} too large for exhaustive subspace check")));
    }
    let keeps = maps
        .iter()
        .enumerate()
        .map(|(i, m)| m.kept_axes(d, i))
        .collect::<Result<Vec<_>, _>>()?;
    if t.0.iter().any(|e| e.recip.is_negative() || e.recip >= Q::one()) {
        return Ok(false);
    }
    let weighted = |mask: u32| -> Q {
        keeps
            .iter()
            .zip(&t.0)
            .fold(Q::zero(), |acc, (keep, e)| {
                let dim = keep.iter().filter(|&&a| mask >> a & 1 == 1).count();
                acc + &e.recip * Q::from_integer(BigInt::from(dim))
            })
    };
    let full = (1u32 << d) - 1;
    if weighted(full) != Q::from_integer(BigInt::from(d)) {
        return Ok(false);
    }
    Ok((0..=full).all(|mask| Q::from_integer(BigInt::from(mask.count_ones())) <= weighted(mask)))
}

/// Per-axis Hölder condition for functions of subsets of variables:
/// `Σ_{j retaining axis i} 1/p̃_j^i = 1` for every axis i. Each tuple lists
/// the exponents on the retained axes of its map, in increasing axis order;
/// dropped axes carry `∞`.
pub fn finner_condition(d: usize, keeps: &[Vec<usize>], tuples: &[MixedExponent]) -> Result<bool, ExponentError> {
    Ok(finner_failing_axis(d, keeps, tuples)?.is_none())
}

/// First axis on which the per-axis Hölder condition fails, if any.
pub fn finner_failing_axis(
    d: usize,
    keeps: &[Vec<usize>],
    tuples: &[MixedExponent],
) -> Result<Option<usize>, ExponentError> {
    if keeps.len() != tuples.len() {
        return Err(ExponentError::LengthMismatch { expected: keeps.len(), got: tuples.len() });
    }
    let mut sums = vec![Q::zero(); d];
    for (keep, tup) in keeps.iter().zip(tuples) {
        if tup.dim() != keep.len() {
            return Err(ExponentError::LengthMismatch { expected: keep.len(), got: tup.dim() });
        }
        let mut sorted = keep.clone();
        sorted.sort();
        for (axis, e) in sorted.iter().zip(tup.axis_exponents()) {
            if *axis >= d {
                return Err(ExponentError::Malformed(format!("axis {axis} ≥ d = {d}")));
            }
            sums[*axis] += e.recip();
        }
    }
    Ok(sums.iter().position(|s| *s != Q::one()))
}

/// Greatest common divisor helper for callers building rational grids.
pub fn gcd_i64(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tup(s: &str) -> ExponentTuple {
        ExponentTuple::parse(s).unwrap()
    }

    #[test]
    fn holder_examples() {
        assert!(is_holder_tuple(&tup("2,2,inf")).unwrap());
        assert!(is_holder_tuple(&tup("4,4,2")).unwrap());
        assert!(!is_holder_tuple(&tup("2,3,4")).unwrap());
        assert!(is_holder_tuple(&tup("4/3,4/3,-2")).unwrap());
        assert!(matches!(is_holder_tuple(&tup("2")), Err(ExponentError::Malformed(_))));
    }

    #[test]
    fn locality_examples() {
        let a = vec![q(2, 3); 3];
        assert!(is_local(&tup("2,2,2"), &a).unwrap());
        assert!(!is_local(&tup("2,2,2"), &vec![q(1, 2); 3]).unwrap());
        assert!(is_local(&tup("inf,inf,inf"), &vec![q(1, 100); 3]).unwrap());
        assert!(is_local(&tup("2,2"), &a).is_err());
    }

    #[test]
    fn alpha_examples() {
        let th = ThetaVector::uniform(2, 1).unwrap();
        assert_eq!(alpha_from_theta(&th).alphas, vec![q(1, 3); 3]);

        let mut w = BTreeMap::new();
        w.insert(vec![0], Q::one());
        w.insert(vec![1], Q::zero());
        w.insert(vec![2], Q::zero());
        let corner = alpha_from_theta(&ThetaVector::new(2, 1, w).unwrap());
        assert_eq!(corner.alphas, vec![Q::one(), Q::zero(), Q::zero()]);
        assert!(!xi_feasible(2, 1, &corner).unwrap());

        // Each of the 5 slots lies in C(4,1) = 4 of the 10 pairs.
        let th = ThetaVector::uniform(4, 2).unwrap();
        assert_eq!(th.weights.len(), 10);
        let a = alpha_from_theta(&th);
        assert_eq!(a.alphas, vec![q(2, 5); 5]);
        assert_eq!(a.sum(), q(2, 1));
    }

    #[test]
    fn xi_examples() {
        let a = AlphaTuple::new(2, 1, vec![q(1, 3); 3]).unwrap();
        assert!(xi_feasible(2, 1, &a).unwrap());
        let b = AlphaTuple::new(2, 1, vec![q(3, 5), q(1, 5), q(1, 5)]).unwrap();
        assert!(!xi_feasible(2, 1, &b).unwrap());
        let c = AlphaTuple::new(4, 2, vec![q(2, 5); 5]).unwrap();
        let cert = xi_certificate(4, 2, &c).unwrap().unwrap();
        assert_eq!(alpha_from_theta(&cert).alphas, c.alphas);
        assert!(matches!(
            xi_feasible(3, 2, &AlphaTuple::new(3, 2, vec![q(1, 2); 4]).unwrap()),
            Err(ExponentError::RankConstraint { .. })
        ));
    }

    #[test]
    fn range_examples() {
        let t = tup("2,2,inf");
        let dec = range_membership(2, 1, &t).unwrap();
        assert!(dec.member);
        let w = dec.witness.unwrap();
        assert!(is_range_witness(&t, &w).unwrap());
        assert_eq!(alpha_from_theta(&dec.theta.unwrap()).alphas, w.alphas);
        // The documented witness (0.4, 0.4, 0.2) is also valid.
        let alt = AlphaTuple::new(2, 1, vec![q(2, 5), q(2, 5), q(1, 5)]).unwrap();
        assert!(is_range_witness(&t, &alt).unwrap());

        let bad = tup("4/3,4/3,-2");
        let dec = range_membership(2, 1, &bad).unwrap();
        assert!(!dec.member);
        assert_eq!(range_slack_lp(2, 1, &bad).unwrap(), Some(Q::zero()));

        // 1/p_1 + 1/p_3 = 3/2 for n = 4, k = 2.
        let edge = ExponentTuple::from_recips(vec![q(3, 4), q(0, 1), q(3, 4), q(0, 1), q(-1, 2)]);
        assert!(is_holder_tuple(&edge).unwrap());
        assert!(!range_membership(4, 2, &edge).unwrap().member);
    }

    #[test]
    fn range_rank_zero_and_errors() {
        assert!(range_membership(2, 0, &tup("3/2,3/2,-3")).unwrap().member);
        assert!(!range_membership(2, 0, &tup("2,3,4")).unwrap().member);
        assert!(matches!(range_membership(3, 2, &tup("4,4,4,4")), Err(ExponentError::RankConstraint { .. })));
    }

    #[test]
    fn brascamp_lieb_examples() {
        let lw: Vec<LinearMap> = (0..4).map(|i| LinearMap::forget(4, i)).collect();
        assert!(is_brascamp_lieb_tuple(&tup("3,3,3,3"), &lw, 4).unwrap());
        assert!(!is_brascamp_lieb_tuple(&tup("2,2,2,2"), &lw, 4).unwrap());
        let id = LinearMap::Projection { keep: vec![0, 1] };
        assert!(is_brascamp_lieb_tuple(&tup("2,2"), &[id.clone(), id], 2).unwrap());
        let rot = LinearMap::Matrix(vec![vec![1, 1]]);
        assert_eq!(
            is_brascamp_lieb_tuple(&tup("2,2"), &[rot, LinearMap::forget(2, 0)], 2),
            Err(ExponentError::UnsupportedMap(0))
        );
    }

    #[test]
    fn finner_examples() {
        let keeps: Vec<Vec<usize>> = (0..4).map(|i| (0..4).filter(|&a| a != i).collect()).collect();
        let three = vec![MixedExponent::uniform(3, LebesgueExponent::from_int(3)); 4];
        assert!(finner_condition(4, &keeps, &three).unwrap());

        // f1 = L^∞ L² L² L^∞, f2 = L^∞ L^∞ L² L², f3 = L² L^∞ L^∞ L², f4 = L² L² L^∞ L^∞,
        // restricted to each function's retained axes.
        let inf = LebesgueExponent::infinity();
        let two = LebesgueExponent::from_int(2);
        let full = [
            [&inf, &two, &two, &inf],
            [&inf, &inf, &two, &two],
            [&two, &inf, &inf, &two],
            [&two, &two, &inf, &inf],
        ];
        let tuples: Vec<MixedExponent> = keeps
            .iter()
            .zip(full.iter())
            .map(|(keep, row)| MixedExponent::per_axis(keep.iter().map(|&a| row[a].clone()).collect()))
            .collect();
        assert!(finner_condition(4, &keeps, &tuples).unwrap());

        let lone = vec![vec![0usize], vec![1usize]];
        let t = vec![MixedExponent::uniform(1, two.clone()), MixedExponent::uniform(1, LebesgueExponent::from_int(1))];
        assert_eq!(finner_failing_axis(2, &lone, &t).unwrap(), Some(0));
    }

    #[test]
    fn exponent_text_roundtrip() {
        let t = tup("4/3, inf, -2");
        let js = serde_json::to_string(&t).unwrap();
        assert_eq!(js, r#"["4/3","inf","-2"]"#);
        let back: ExponentTuple = serde_json::from_str(&js).unwrap();
        assert_eq!(back, t);
        assert!("0".parse::<LebesgueExponent>().is_err());
    }

    #[test]
    fn systematic_sampling_reproduces_alpha() {
        let a = AlphaTuple::new(4, 2, vec![q(1, 3), q(2, 5), q(1, 2), q(1, 2), q(4, 15)]).unwrap();
        assert_eq!(a.sum(), q(2, 1));
        let th = theta_from_alpha(&a);
        assert!(th.weights.keys().all(|s| s.len() == 2));
        assert_eq!(alpha_from_theta(&th).alphas, a.alphas);
    }
}
