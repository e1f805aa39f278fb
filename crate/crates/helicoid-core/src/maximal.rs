//! Multilinear dyadic maximal functions, stopping-time linearizations and
//! the endpoint summation bound.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dyadic::{project_cube, DyadicCube};
use crate::exec::{map_range, Exec};
use crate::exponents::LebesgueExponent;
use crate::gridfn::{full_lattice, lp_norm, restrict_vector_norm, weight_field, GridError, GridFunction, Weight};

/// Default ε added to the maximal exponents in Fefferman–Stein comparisons.
pub const DEFAULT_FS_EPSILON: f64 = 0.05;
/// Random stopping times drawn per adversarial trial.
pub const DEFAULT_KAPPA_SAMPLES: usize = 32;

#[derive(Debug, Error)]
pub enum MaximalError {
    #[error("empty cube family")]
    EmptyFamily,
    #[error("cube {0} does not fit the grid")]
    BadCube(String),
    #[error("maximal exponent must be positive, got {0}")]
    Exponent(String),
    #[error("inputs disagree with each other or with the cube family")]
    Shape,
    #[error("stopping time selects a cube that does not contain its point")]
    InvalidKappa,
    #[error("summation diverges: q/s1 + q/s2 = {0} must be < 1")]
    Divergent(f64),
    #[error("numerator {0} with vanishing denominator")]
    Anomaly(f64),
    #[error("map is not a surjective coordinate map")]
    NotSurjective,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Finite family of dyadic cubes on the `2^J`-grid, with point incidence.
#[derive(Clone, Debug)]
pub struct CubeFamily {
    pub d: usize,
    pub j: u32,
    pub cubes: Vec<DyadicCube>,
    points: Vec<Vec<usize>>,
    containing: Vec<Vec<u32>>,
}

/// Grid points `i` with `3i ∈ [lo, lo + len)` modulo `3N`.
fn axis_points(lo: i64, len: i64, n: usize) -> Vec<usize> {
    let first = lo.div_euclid(3) + i64::from(lo.rem_euclid(3) != 0);
    let hi = lo + len;
    let last = hi.div_euclid(3) + i64::from(hi.rem_euclid(3) != 0);
    (first..last).map(|t| t.rem_euclid(n as i64) as usize).collect()
}

impl CubeFamily {
    pub fn new(d: usize, j: u32, cubes: Vec<DyadicCube>) -> Result<Self, MaximalError> {
        if cubes.is_empty() {
            return Err(MaximalError::EmptyFamily);
        }
        let n = 1usize << j;
        let np = n.pow(d as u32);
        let mut points = Vec::with_capacity(cubes.len());
        let mut containing = vec![Vec::new(); np];
        for (ci, c) in cubes.iter().enumerate() {
            if c.dim() != d || c.scale > 0 || c.scale + (j as i32) < 0 {
                return Err(MaximalError::BadCube(c.to_string()));
            }
            let f = 1i64 << (c.scale + j as i32);
            let axes: Vec<Vec<usize>> =
                (0..d).map(|a| axis_points(f * (3 * c.corner[a] + c.shift[a] as i64), 3 * f, n)).collect();
            let mut pts = vec![0usize];
            for ax in &axes {
                pts = pts.iter().flat_map(|&p| ax.iter().map(move |&i| p * n + i)).collect();
            }
            pts.sort_unstable();
            pts.dedup();
            for &p in &pts {
                containing[p].push(ci as u32);
            }
            points.push(pts);
        }
        Ok(Self { d, j, cubes, points, containing })
    }

    /// All unshifted dyadic cubes of the torus with scale in `[-J, 0]`.
    pub fn dyadic(d: usize, j: u32) -> Self {
        Self::new(d, j, full_lattice(d, j)).expect("lattice is nonempty")
    }

    /// The unshifted lattice together with the alternating-shift lattice for
    /// `shift` (shift `(-1)^s·σ` at scale `s`).
    pub fn with_shift(d: usize, j: u32, shift: &[i8]) -> Self {
        let mut cubes = full_lattice(d, j);
        for s in -(j as i32)..=0 {
            let sign: i8 = if s % 2 == 0 { 1 } else { -1 };
            let sh: Vec<i8> = shift.iter().map(|&x| x * sign).collect();
            for c in DyadicCube::torus_cubes(d, s) {
                cubes.push(DyadicCube::new(s, c.corner, sh.clone()).expect("shift in {-1,0,1}"));
            }
        }
        cubes.sort();
        cubes.dedup();
        Self::new(d, j, cubes).expect("lattice is nonempty")
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn points(&self, c: usize) -> &[usize] {
        &self.points[c]
    }

    pub fn containing(&self, x: usize) -> &[u32] {
        &self.containing[x]
    }
}

/// Restriction on the cubes a localized operator may select.
#[derive(Clone, Debug, PartialEq)]
pub enum Localization {
    /// Cubes inside `R₀`.
    Cube(DyadicCube),
    /// Cubes whose projection on the first `dim(R̃)` axes lies in `R̃`.
    Lower(DyadicCube),
}

impl Localization {
    pub fn admits(&self, r: &DyadicCube) -> bool {
        match self {
            Localization::Cube(r0) => r0.contains_cube(r),
            Localization::Lower(rt) => rt.contains_cube(&project_cube(r, rt.dim())),
        }
    }
}

fn exponent(s: &LebesgueExponent) -> Result<f64, MaximalError> {
    if s.recip_f64() <= 0.0 && !s.is_infinite() {
        return Err(MaximalError::Exponent(s.to_string()));
    }
    Ok(s.to_f64())
}

/// `ave^s_R` of one component given the cube's points (indicator) or the
/// weight field (χ̃).
fn average(vals: &[Complex64], s: f64, pts: &[usize], field: Option<&[f64]>, count: f64) -> f64 {
    match field {
        None if s.is_infinite() => pts.iter().fold(0.0f64, |m, &p| m.max(vals[p].norm())),
        None => (pts.iter().map(|&p| vals[p].norm().powf(s)).sum::<f64>() / count).powf(1.0 / s),
        Some(w) if s.is_infinite() => vals.iter().zip(w).fold(0.0f64, |m, (v, w)| m.max(v.norm() * w)),
        Some(w) => (vals.iter().zip(w).map(|(v, w)| v.norm().powf(s) * w).sum::<f64>() / count).powf(1.0 / s),
    }
}

/// `Π_j ave^{s_j}_R f_j(·, w)` for every cube `R` of the family and every `w`.
#[derive(Clone, Debug)]
pub struct MaximalTable<'a> {
    pub family: &'a CubeFamily,
    pub vector_len: usize,
    /// `values[c][w]`.
    pub values: Vec<Vec<f64>>,
    measures: Vec<Vec<f64>>,
}

pub fn maximal_table<'a>(
    exec: Exec,
    fs: &[GridFunction],
    s: &[LebesgueExponent],
    family: &'a CubeFamily,
    weight: Weight,
) -> Result<MaximalTable<'a>, MaximalError> {
    let w = fs.first().ok_or(MaximalError::Shape)?.vector_len();
    if fs.len() != s.len() || fs.iter().any(|f| f.d != family.d || f.j != family.j || f.vector_len() != w) {
        return Err(MaximalError::Shape);
    }
    let sv: Vec<f64> = s.iter().map(exponent).collect::<Result<_, _>>()?;
    let np = fs[0].points();
    let values = map_range(exec, family.len(), |c| {
        let r = &family.cubes[c];
        let field = match weight {
            Weight::Indicator => None,
            Weight::ChiTilde(_) => Some(weight_field(r, family.d, family.j, weight)),
        };
        let count = r.measure() * np as f64;
        (0..w)
            .map(|wi| {
                fs.iter()
                    .zip(&sv)
                    .map(|(f, &sj)| average(f.component(wi), sj, family.points(c), field.as_deref(), count))
                    .product()
            })
            .collect()
    });
    Ok(MaximalTable { family, vector_len: w, values, measures: fs[0].measures.clone() })
}

/// Stopping time: for each `(x, w)` (index `w·N^d + x`) a cube of the family
/// or none.
#[derive(Clone, Debug, PartialEq)]
pub struct StoppingTime {
    pub choice: Vec<Option<u32>>,
}

impl MaximalTable<'_> {
    fn np(&self) -> usize {
        1usize << (self.family.j as usize * self.family.d)
    }

    fn output(&self, samples: Vec<f64>) -> GridFunction {
        GridFunction {
            d: self.family.d,
            j: self.family.j,
            samples: samples.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
            measures: self.measures.clone(),
        }
    }

    /// Stopping time attaining the sup among admissible cubes; ties go to the
    /// first cube in family order.
    pub fn argmax(&self, loc: Option<&Localization>) -> StoppingTime {
        let np = self.np();
        let choice = (0..np * self.vector_len)
            .map(|i| {
                let (w, x) = (i / np, i % np);
                let mut best: Option<(f64, u32)> = None;
                for &c in self.family.containing(x) {
                    if loc.is_some_and(|l| !l.admits(&self.family.cubes[c as usize])) {
                        continue;
                    }
                    let v = self.values[c as usize][w];
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, c));
                    }
                }
                best.map(|(_, c)| c)
            })
            .collect();
        StoppingTime { choice }
    }

    /// Per `(x, w)` a cube drawn uniformly from the admissible cubes containing `x`.
    pub fn random_kappa(&self, rng: &mut impl Rng, loc: Option<&Localization>) -> StoppingTime {
        let np = self.np();
        let choice = (0..np * self.vector_len)
            .map(|i| {
                let adm: Vec<u32> = self
                    .family
                    .containing(i % np)
                    .iter()
                    .copied()
                    .filter(|&c| loc.is_none_or(|l| l.admits(&self.family.cubes[c as usize])))
                    .collect();
                (!adm.is_empty()).then(|| adm[rng.random_range(0..adm.len())])
            })
            .collect();
        StoppingTime { choice }
    }

    pub fn sup(&self) -> GridFunction {
        self.linearized(&self.argmax(None), None).expect("argmax is valid")
    }

    /// The term selected by `kappa` at each `(x, w)`; zero for none or for a
    /// cube outside the localization.
    pub fn linearized(&self, kappa: &StoppingTime, loc: Option<&Localization>) -> Result<GridFunction, MaximalError> {
        let np = self.np();
        if kappa.choice.len() != np * self.vector_len {
            return Err(MaximalError::Shape);
        }
        let mut out = vec![0.0; np * self.vector_len];
        for (i, c) in kappa.choice.iter().enumerate() {
            let Some(c) = c else { continue };
            let c = *c as usize;
            if c >= self.family.len() || !self.family.containing(i % np).contains(&(c as u32)) {
                return Err(MaximalError::InvalidKappa);
            }
            if loc.is_none_or(|l| l.admits(&self.family.cubes[c])) {
                out[i] = self.values[c][i / np];
            }
        }
        Ok(self.output(out))
    }
}

/// `sup_{R ∋ x} Π_j ave^{s_j}_R f_j(·, w)` over the family.
pub fn multi_maximal(
    fs: &[GridFunction],
    s: &[LebesgueExponent],
    family: &CubeFamily,
    weight: Weight,
) -> Result<GridFunction, MaximalError> {
    Ok(maximal_table(Exec::default(), fs, s, family, weight)?.sup())
}

pub fn linearized_maximal(
    fs: &[GridFunction],
    s: &[LebesgueExponent],
    family: &CubeFamily,
    weight: Weight,
    kappa: &StoppingTime,
    loc: Option<&Localization>,
) -> Result<GridFunction, MaximalError> {
    maximal_table(Exec::default(), fs, s, family, weight)?.linearized(kappa, loc)
}

/// `sup_{R ∈ family, R ⊆ R₀} ave^s_R g` for a scalar `g`.
pub fn local_size(g: &GridFunction, s: &LebesgueExponent, family: &CubeFamily, r0: &DyadicCube, weight: Weight) -> Result<f64, MaximalError> {
    let t = maximal_table(Exec::default(), std::slice::from_ref(g), std::slice::from_ref(s), family, weight)?;
    Ok(family
        .cubes
        .iter()
        .zip(&t.values)
        .filter(|(c, _)| r0.contains_cube(c))
        .fold(0.0f64, |m, (_, v)| m.max(v[0])))
}

/// Vector exponents `R_j` of the inputs and `R'` of the output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorNorms {
    pub inputs: Vec<Vec<LebesgueExponent>>,
    pub output: Vec<LebesgueExponent>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalMaximalReport {
    pub rhs: f64,
    pub argmax_ratio: f64,
    /// Worst ratio over the argmax and the random stopping times.
    pub worst_ratio: f64,
}

/// Configuration of [`local_maximal_estimate`].
#[derive(Clone, Debug)]
pub struct LocalMaximalConfig<'a> {
    pub family: &'a CubeFamily,
    pub weight: Weight,
    pub samples: usize,
    pub seed: u64,
    pub vector: Option<VectorNorms>,
}

/// `‖ ‖M^{κ,R₀}(f)‖_{R'} · 1_E ‖_q` over
/// `Π_j size~^{s_j}_{R₀}‖f_j‖_{R_j} · (size~_{R₀} 1_E)^{1/q} · |R₀|^{1/q}`,
/// for the argmax stopping time and `samples` random ones.
pub fn local_maximal_estimate(
    fs: &[GridFunction],
    e: &GridFunction,
    s: &[LebesgueExponent],
    q: f64,
    r0: &DyadicCube,
    cfg: &LocalMaximalConfig,
) -> Result<LocalMaximalReport, MaximalError> {
    let family = cfg.family;
    let table = maximal_table(Exec::default(), fs, s, family, cfg.weight)?;
    let loc = Localization::Cube(r0.clone());
    let mut rhs = r0.measure().powf(1.0 / q);
    for (j, (f, sj)) in fs.iter().zip(s).enumerate() {
        let g = match &cfg.vector {
            Some(v) => restrict_vector_norm(f, &v.inputs[j])?,
            None if f.is_scalar() => f.clone(),
            None => return Err(MaximalError::Shape),
        };
        rhs *= local_size(&g, sj, family, r0, cfg.weight)?;
    }
    let one = LebesgueExponent::from_int(1);
    rhs *= local_size(&e.abs(), &one, family, r0, cfg.weight)?.powf(1.0 / q);
    let qe = LebesgueExponent::from_recip(num_rational::BigRational::from_float(1.0 / q).ok_or(MaximalError::Shape)?);
    let lhs = |kappa: &StoppingTime| -> Result<f64, MaximalError> {
        let m = table.linearized(kappa, Some(&loc))?;
        let m = match &cfg.vector {
            Some(v) => restrict_vector_norm(&m, &v.output)?,
            None => m,
        };
        Ok(lp_norm(&m.mul(e)?, &qe)?)
    };
    let ratio = |l: f64| if l == 0.0 { 0.0 } else { l / rhs };
    let argmax_ratio = ratio(lhs(&table.argmax(Some(&loc)))?);
    let mut worst = argmax_ratio;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.samples {
        worst = worst.max(ratio(lhs(&table.random_kappa(&mut rng, Some(&loc)))?));
    }
    Ok(LocalMaximalReport { rhs, argmax_ratio, worst_ratio: worst })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakTypeSum {
    /// Direct sum over the truncation box.
    pub value: f64,
    /// Certified bound on the sum outside the box.
    pub tail: f64,
    /// `A₁^{q/s₁} A₂^{q/s₂} A₃^{1-q/s₁-q/s₂} S₀^{q/s₁+q/s₂}`.
    pub rhs: f64,
    /// Analytic constant `C` of the bound.
    pub constant: f64,
    /// `value / rhs`, a lower bound for the true ratio.
    pub ratio: f64,
    /// `(value + tail) / rhs`, an upper bound for the true ratio.
    pub upper_ratio: f64,
}

/// Constant `C` with `sum ≤ C·A₁^a A₂^b A₃^{1-a-b} S₀^{a+b}`, `a = q/s₁`, `b = q/s₂`.
///
/// Splitting by which of `X = 2^{n₁s₁}A₁`, `Y = 2^{n₂s₂}A₂`, `Z = 2^{n₃}A₃` is
/// smallest, the `(n₁, n₂)` sum is at most `H·Z^{1-a-b}` by geometric series,
/// and the sum over `Z ≥ A₃/S₀` adds the factor `1/(1 - 2^{-(a+b)})`.
pub fn weak_type_constant(q: f64, s1: f64, s2: f64) -> f64 {
    let (a, b) = (q / s1, q / s2);
    let c = a + b;
    let inv = |x: f64| 1.0 / (1.0 - 2f64.powf(-x));
    let h = inv(s1 * (1.0 - a)) * (inv(s2 * (1.0 - c)) + inv(s2 * b))
        + inv(s2 * (1.0 - b)) * (inv(s1 * (1.0 - c)) + inv(s1 * a))
        + inv(s1 * a) * inv(s2 * b);
    h * inv(c)
}

/// Certified bound on `Σ min(X,Y,Z) X^{-a} Y^{-b} Z^{-1}` over the lattice points
/// outside the summation box, where `X = 2^{n₁s₁}A₁`, `Y = 2^{n₂s₂}A₂`,
/// `Z = 2^{n₃}A₃ ≥ Z₀`. `centers` are `log₂` of the box-centre `X`, `Y` and
/// `log_z0 = log₂ Z₀`; the box spans `±half` steps in `n₁, n₂` and
/// `2·half` steps above `Z₀`.
fn box_tail(q: f64, s1: f64, s2: f64, centers: [f64; 2], log_z0: f64, half: i64) -> f64 {
    let (a, b) = (q / s1, q / s2);
    let c = a + b;
    let inv = |x: f64| 1.0 / (1.0 - 2f64.powf(-x));
    let z0 = 2f64.powf(log_z0);
    // Points with the first coordinate outside: Σ_Y min(X,Y,Z) Y^{-b} ≤ K·min(X,Z)^{1-b},
    // then Σ_{Z ≥ Z₀} min(X,Z)^{1-b}/Z ≤ 2X^{1-b}/Z₀ for X < Z₀ and
    // ≤ Z₀^{-b}/(1-2^{-b}) + 2X^{-b} for X ≥ Z₀.
    let one_axis = |s_out: f64, e_out: f64, s_in: f64, e_in: f64, center: f64| {
        let k = inv(s_in * (1.0 - e_in)) + inv(s_in * e_in);
        let below = 2f64.powf(center - (half + 1) as f64 * s_out);
        let above = 2f64.powf(center + (half + 1) as f64 * s_out);
        debug_assert!(below < z0 && above > z0);
        let low = 2.0 / z0 * below.powf(1.0 - e_out - e_in) * inv(s_out * (1.0 - e_out - e_in));
        let high = z0.powf(-e_in) * inv(e_in) * above.powf(-e_out) * inv(s_out * e_out) + 2.0 * above.powf(-e_out - e_in) * inv(s_out * (e_out + e_in));
        k * (low + high)
    };
    let t1 = one_axis(s1, a, s2, b, centers[0]);
    let t2 = one_axis(s2, b, s1, a, centers[1]);
    // Third coordinate above the box: Σ_{X,Y} ≤ H·Z^{1-c}.
    let h = inv(s1 * (1.0 - a)) * (inv(s2 * (1.0 - c)) + inv(s2 * b))
        + inv(s2 * (1.0 - b)) * (inv(s1 * (1.0 - c)) + inv(s1 * a))
        + inv(s1 * a) * inv(s2 * b);
    let t3 = h * 2f64.powf(-c * (log_z0 + (2 * half + 1) as f64)) * inv(c);
    t1 + t2 + t3
}

/// `Σ_{n₁,n₂,n₃: 2^{-n₃} ≤ S₀} 2^{-n₁q-n₂q-n₃} min(2^{n₁s₁}A₁, 2^{n₂s₂}A₂, 2^{n₃}A₃)`
/// summed directly over a box of half-width `half` around the balance
/// point, with a certified geometric bound for the outside.
pub fn weak_type_sum(q: f64, s1: f64, s2: f64, a: [f64; 3], s0: f64, half: i64) -> Result<WeakTypeSum, MaximalError> {
    let (qa, qb) = (q / s1, q / s2);
    if !(q > 0.0 && s1 > 0.0 && s2 > 0.0 && s0 > 0.0) || a.iter().any(|&x| x < 0.0) {
        return Err(MaximalError::Exponent(format!("q = {q}, s = ({s1}, {s2}), S0 = {s0}")));
    }
    if qa + qb >= 1.0 {
        return Err(MaximalError::Divergent(qa + qb));
    }
    let constant = weak_type_constant(q, s1, s2);
    let rhs = a[0].powf(qa) * a[1].powf(qb) * a[2].powf(1.0 - qa - qb) * s0.powf(qa + qb);
    if a.contains(&0.0) {
        return Ok(WeakTypeSum { value: 0.0, tail: 0.0, rhs, constant, ratio: 0.0, upper_ratio: 0.0 });
    }
    let n3lo = (-s0.log2()).ceil() as i64;
    // Balance point: 2^{n₁s₁}A₁ ≈ 2^{n₂s₂}A₂ ≈ 2^{n₃}A₃ at n₃ = n3lo.
    let level = n3lo as f64 + a[2].log2();
    let c1 = ((level - a[0].log2()) / s1).round() as i64;
    let c2 = ((level - a[1].log2()) / s2).round() as i64;
    let b1 = (c1 - half, c1 + half);
    let b2 = (c2 - half, c2 + half);
    let b3 = (n3lo, n3lo + 2 * half);
    let (l1, l2, l3) = (a[0].log2(), a[1].log2(), a[2].log2());
    let mut value = 0.0;
    for n3 in b3.0..=b3.1 {
        for n1 in b1.0..=b1.1 {
            for n2 in b2.0..=b2.1 {
                let m = (n1 as f64 * s1 + l1).min(n2 as f64 * s2 + l2).min(n3 as f64 + l3);
                value += 2f64.powf(m - q * (n1 + n2) as f64 - n3 as f64);
            }
        }
    }
    let tail = a[0].powf(qa) * a[1].powf(qb) * a[2] * box_tail(q, s1, s2, [l1 + c1 as f64 * s1, l2 + c2 as f64 * s2], l3 + n3lo as f64, half);
    Ok(WeakTypeSum { value, tail, rhs, constant, ratio: value / rhs, upper_ratio: (value + tail) / rhs })
}

/// Coordinate surjection `ℝ^d → ℝ^{d_j}`: `(Lx)_i = σ_i x_{perm[i]}` for
/// `i < d_j`, where `perm` is a permutation of the `d` axes.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateSurjection {
    pub d: usize,
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
    pub target_dim: usize,
}

impl CoordinateSurjection {
    pub fn new(d: usize, perm: Vec<usize>, signs: Vec<i8>, target_dim: usize) -> Result<Self, MaximalError> {
        let mut seen = perm.clone();
        seen.sort_unstable();
        if target_dim == 0
            || target_dim > d
            || seen != (0..d).collect::<Vec<_>>()
            || signs.len() != target_dim
            || signs.iter().any(|s| s.abs() != 1)
        {
            return Err(MaximalError::NotSurjective);
        }
        Ok(Self { d, perm, signs, target_dim })
    }

    /// Keeps every axis except `axis`.
    pub fn forget(d: usize, axis: usize) -> Self {
        let mut perm: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
        perm.push(axis);
        Self::new(d, perm, vec![1; d - 1], d - 1).expect("valid forgetful map")
    }

    fn image(&self, x: &[usize], n: usize) -> usize {
        (0..self.target_dim).fold(0, |acc, i| {
            let v = x[self.perm[i]];
            let v = if self.signs[i] < 0 { (n - v) % n } else { v };
            acc * n + v
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommuteReport {
    pub max_ratio: f64,
    /// `M^d(f∘L)(x) / M^{d_j}f(Lx)` at every grid point (0 where both vanish).
    pub ratios: Vec<f64>,
}

/// Pointwise ratio of the maximal function of `f∘L` to that of `f` at `Lx`.
pub fn maximal_projection_commute(
    f: &GridFunction,
    map: &CoordinateSurjection,
    s: &LebesgueExponent,
    weight: Weight,
) -> Result<CommuteReport, MaximalError> {
    if f.d != map.target_dim || !f.is_scalar() {
        return Err(MaximalError::Shape);
    }
    let n = f.n();
    let lifted = GridFunction::from_fn(map.d, f.j, |_| Complex64::new(0.0, 0.0));
    let np = lifted.points();
    let samples = (0..np).map(|i| f.samples[map.image(&lifted.coords(i), n)]).collect();
    let g = GridFunction { samples, ..lifted };
    let high = multi_maximal(std::slice::from_ref(&g), std::slice::from_ref(s), &CubeFamily::dyadic(map.d, f.j), weight)?;
    let low = multi_maximal(std::slice::from_ref(f), std::slice::from_ref(s), &CubeFamily::dyadic(f.d, f.j), weight)?;
    let mut max_ratio = 0.0f64;
    let mut ratios = Vec::with_capacity(np);
    for i in 0..np {
        let num = high.samples[i].re;
        let den = low.samples[map.image(&g.coords(i), n)].re;
        let r = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            return Err(MaximalError::Anomaly(num));
        } else {
            num / den
        };
        max_ratio = max_ratio.max(r);
        ratios.push(r);
    }
    Ok(CommuteReport { max_ratio, ratios })
}

/// `‖g‖_q / ‖M_{s}(|f_1|, …, |f_n|)‖_q` for scalar `g` and `f_j`.
pub fn fefferman_stein_ratio(
    g: &GridFunction,
    fs: &[GridFunction],
    s: &[LebesgueExponent],
    q: &LebesgueExponent,
    family: &CubeFamily,
    weight: Weight,
) -> Result<f64, MaximalError> {
    let abs: Vec<GridFunction> = fs.iter().map(GridFunction::abs).collect();
    let m = multi_maximal(&abs, s, family, weight)?;
    let num = lp_norm(g, q)?;
    let den = lp_norm(&m, q)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    if den == 0.0 {
        return Err(MaximalError::Anomaly(num));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_fn(d: usize, j: u32, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let np = 1usize << (j as usize * d);
        let samples = (0..np).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        GridFunction::from_samples(d, j, samples, Vec::new()).unwrap()
    }

    fn ints(v: &[i64]) -> Vec<LebesgueExponent> {
        v.iter().map(|&p| LebesgueExponent::from_int(p)).collect()
    }

    #[test]
    fn constants_give_product() {
        let fam = CubeFamily::dyadic(2, 3);
        let fs = [
            GridFunction::from_fn(2, 3, |_| Complex64::new(2.0, 0.0)),
            GridFunction::from_fn(2, 3, |_| Complex64::new(0.0, 3.0)),
        ];
        let m = multi_maximal(&fs, &ints(&[1, 2]), &fam, Weight::Indicator).unwrap();
        assert!(m.samples.iter().all(|v| (v.re - 6.0).abs() < 1e-12));
        assert!(matches!(CubeFamily::new(1, 3, vec![]), Err(MaximalError::EmptyFamily)));
    }

    #[test]
    fn indicator_profile_matches_direct_sup() {
        let j = 5;
        let q = DyadicCube::unshifted(-3, vec![5]);
        let f = GridFunction::from_fn(1, j, |x| Complex64::new(if x[0] >= 5.0 / 8.0 && x[0] < 6.0 / 8.0 { 1.0 } else { 0.0 }, 0.0));
        let m = multi_maximal(&[f], &ints(&[1]), &CubeFamily::dyadic(1, j), Weight::Indicator).unwrap();
        for (i, v) in m.samples.iter().enumerate() {
            let x = i as f64 / 32.0;
            // Smallest dyadic ancestor of Q containing x.
            let mut expect = 0.0f64;
            for s in -(j as i32)..=0 {
                let k = (x * 2f64.powi(-s)).floor() as i64;
                let r = DyadicCube::unshifted(s, vec![k]);
                let inter = if r.contains_cube(&q) { q.measure() } else if q.contains_cube(&r) { r.measure() } else { 0.0 };
                expect = expect.max(inter / r.measure());
            }
            assert!((v.re - expect).abs() < 1e-12, "x = {x}");
        }
        assert!((m.samples[20].re - 1.0).abs() < 1e-12);
        assert!((m.samples[0].re - 0.125).abs() < 1e-12);
    }

    #[test]
    fn argmax_kappa_reproduces_sup_bitwise() {
        let fam = CubeFamily::with_shift(1, 6, &[1]);
        let fs = [rand_fn(1, 6, 1), rand_fn(1, 6, 2)];
        let s = ints(&[1, 2]);
        let table = maximal_table(Exec::default(), &fs, &s, &fam, Weight::Indicator).unwrap();
        let sup = table.sup();
        let lin = table.linearized(&table.argmax(None), None).unwrap();
        assert_eq!(sup, lin);
        let none = StoppingTime { choice: vec![None; 64] };
        assert!(table.linearized(&none, None).unwrap().samples.iter().all(|v| v.re == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rk = table.linearized(&table.random_kappa(&mut rng, None), None).unwrap();
        for (a, b) in rk.samples.iter().zip(&sup.samples) {
            assert!(a.re <= b.re);
        }
    }

    #[test]
    fn pointwise_product_bound() {
        let fam = CubeFamily::dyadic(2, 4);
        let fs = [rand_fn(2, 4, 4), rand_fn(2, 4, 5)];
        let s = ints(&[1, 3]);
        let m = multi_maximal(&fs, &s, &fam, Weight::Indicator).unwrap();
        let m1 = multi_maximal(&fs[..1], &s[..1], &fam, Weight::Indicator).unwrap();
        let m2 = multi_maximal(&fs[1..], &s[1..], &fam, Weight::Indicator).unwrap();
        for i in 0..m.points() {
            assert!(m.samples[i].re <= m1.samples[i].re * m2.samples[i].re);
        }
    }

    #[test]
    fn local_estimate_constants_ratio_one() {
        let j = 5;
        let fam = CubeFamily::dyadic(1, j);
        let r0 = DyadicCube::unshifted(-1, vec![1]);
        let fs = [
            GridFunction::from_fn(1, j, |_| Complex64::new(2.0, 0.0)),
            GridFunction::from_fn(1, j, |_| Complex64::new(0.5, 0.0)),
        ];
        let e = GridFunction::from_fn(1, j, |x| Complex64::new(if x[0] >= 0.5 { 1.0 } else { 0.0 }, 0.0));
        let cfg = LocalMaximalConfig { family: &fam, weight: Weight::Indicator, samples: 8, seed: 1, vector: None };
        let rep = local_maximal_estimate(&fs, &e, &ints(&[1, 1]), 1.0, &r0, &cfg).unwrap();
        assert!((rep.argmax_ratio - 1.0).abs() < 1e-12 && (rep.worst_ratio - 1.0).abs() < 1e-12);
        let zero = [GridFunction::zeros(1, j), fs[1].clone()];
        assert_eq!(local_maximal_estimate(&zero, &e, &ints(&[1, 1]), 1.0, &r0, &cfg).unwrap().worst_ratio, 0.0);
    }

    #[test]
    fn weak_type_sum_behaviour() {
        let base = weak_type_sum(0.5, 2.0, 2.0, [1.0; 3], 1.0, 30).unwrap();
        assert!(base.value.is_finite() && base.value > 0.0);
        assert!(base.upper_ratio <= base.constant, "{} > {}", base.upper_ratio, base.constant);
        assert!(base.tail < 1e-3 * base.value);
        let wide = weak_type_sum(0.5, 2.0, 2.0, [1.0; 3], 1.0, 60).unwrap();
        assert!((wide.value - base.value).abs() <= base.tail);
        let scaled = weak_type_sum(0.5, 2.0, 2.0, [4.0, 1.0, 1.0], 1.0, 30).unwrap();
        assert!((scaled.rhs / base.rhs - 2f64.sqrt()).abs() < 1e-12);
        assert!(((scaled.value + scaled.tail) / (base.value + base.tail) - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(weak_type_sum(0.5, 2.0, 2.0, [0.0, 1.0, 1.0], 1.0, 30).unwrap().value, 0.0);
        assert!(matches!(weak_type_sum(1.0, 2.0, 2.0, [1.0; 3], 1.0, 30), Err(MaximalError::Divergent(_))));
        assert!(matches!(weak_type_sum(1.0, 2.0, 1.5, [1.0; 3], 1.0, 30), Err(MaximalError::Divergent(_))));
    }

    #[test]
    fn weak_type_constant_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let s1 = rng.random_range(1.0..4.0);
            let s2 = rng.random_range(1.0..4.0);
            let q = rng.random_range(0.1..0.95) / (1.0 / s1 + 1.0 / s2);
            let a = [rng.random_range(0.01..100.0), rng.random_range(0.01..100.0), rng.random_range(0.01..100.0)];
            let s0 = rng.random_range(0.05..2.0);
            let r = weak_type_sum(q, s1, s2, a, s0, 25).unwrap();
            assert!(r.ratio <= r.constant, "value {} tail {} q {q} s ({s1}, {s2}) a {a:?} S0 {s0}: {} > {}", r.value, r.tail, r.ratio, r.constant);
        }
    }

    #[test]
    fn commute_identity_and_constants() {
        let f = rand_fn(2, 4, 7);
        let id = CoordinateSurjection::new(2, vec![0, 1], vec![1, 1], 2).unwrap();
        let rep = maximal_projection_commute(&f, &id, &LebesgueExponent::from_int(1), Weight::Indicator).unwrap();
        assert!(rep.max_ratio <= 1.0 + 1e-12);
        let c = GridFunction::from_fn(1, 4, |_| Complex64::new(3.0, 0.0));
        let rep = maximal_projection_commute(&c, &CoordinateSurjection::forget(2, 1), &LebesgueExponent::from_int(2), Weight::Indicator).unwrap();
        assert!(rep.ratios.iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert!(CoordinateSurjection::new(2, vec![0, 0], vec![1], 1).is_err());
    }

    #[test]
    fn fefferman_stein_scaling() {
        let fam = CubeFamily::dyadic(1, 6);
        let fs = [rand_fn(1, 6, 1), rand_fn(1, 6, 2)];
        let g = fs[0].mul(&fs[1]).unwrap().abs();
        let s = vec![LebesgueExponent::from_ratio(11, 10); 2];
        let q = LebesgueExponent::from_int(1);
        let r = fefferman_stein_ratio(&g, &fs, &s, &q, &fam, Weight::Indicator).unwrap();
        let scaled = [fs[0].scale(Complex64::new(3.0, 0.0)), fs[1].scale(Complex64::new(0.0, 0.5))];
        let g2 = g.scale(Complex64::new(1.5, 0.0));
        let r2 = fefferman_stein_ratio(&g2, &scaled, &s, &q, &fam, Weight::Indicator).unwrap();
        assert!((r - r2).abs() < 1e-12 * r);
        assert!(r <= 1.0 + 1e-12);
        let z = GridFunction::zeros(1, 6);
        assert_eq!(fefferman_stein_ratio(&z, &[z.clone(), z.clone()], &s, &q, &fam, Weight::Indicator).unwrap(), 0.0);
    }
}
