use super::{collection, operators, rng, torus, Family};
use crate::config::{ExperimentConfig, OperatorKind};
use crate::report::{all_finite, max_of, num, stability, Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::exponents::LebesgueExponent;
use helicoid_core::gridfn::GridFunction;
use helicoid_core::model::ModelOperator;
use helicoid_core::sparse::{build_sparse, carleson_constant, default_jump, sparse_domination_ratio, verify_sparse, Tracked};
use helicoid_core::testfns::{indicator, random_dyadic_set};
use serde_json::Value;
use std::collections::BTreeMap;

/// Stopping-time sparse collections and the domination ratio
/// `‖T(f)·v‖_q^q / Σ_Q Π ave^{s_j}_Q(f_j)^q |Q|`.
pub struct SparseSuite {
    cfg: ExperimentConfig,
    s: Vec<LebesgueExponent>,
    ops: Option<[ModelOperator; 2]>,
}

struct Level {
    cubes: usize,
    verified: bool,
    carleson: f64,
    ratio: f64,
}

impl SparseSuite {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let s = cfg.s_exponents()?;
        if s.len() != cfg.n + 1 {
            return Err(HarnessError::Config(format!("need {} averaging exponents (inputs, then v), got {}", cfg.n + 1, s.len())));
        }
        if !(cfg.q > 0.0) {
            return Err(HarnessError::Config(format!("q = {} must be positive", cfg.q)));
        }
        cfg.check_sample_cap(cfg.d, 1)?;
        let ops = match cfg.operator {
            OperatorKind::Product => None,
            OperatorKind::Model => Some(operators(cfg, &collection(cfg, cfg.box_bound)?)?),
        };
        Ok(Self { cfg: cfg.clone(), s, ops })
    }

    fn level(&self, index: usize, level: usize) -> Result<Level, HarnessError> {
        let cfg = &self.cfg;
        let j = cfg.j + level as u32;
        let mut r = rng(cfg, index);
        let family = if cfg.seed(index) % 2 == 0 { Family::Step } else { Family::Indicator };
        let fs = family.draw(cfg.d, cfg.j, j, cfg.n, &mut r);
        let v = indicator(cfg.d, j, &random_dyadic_set(cfg.d, cfg.j, 4, &mut r));
        let out = match &self.ops {
            None => fs[1..].iter().try_fold(fs[0].clone(), |acc, g| acc.mul(g)).compute()?,
            Some(ops) => ops[level].apply(&fs).compute()?,
        }
        .abs();
        let functions: Vec<&GridFunction> = fs.iter().chain(std::iter::once(&v)).collect();
        let tracked = Tracked { functions, exponents: self.s.clone() };
        let c = build_sparse(&tracked, &torus(cfg.d), default_jump(cfg.d)).compute()?;
        let verified = verify_sparse(&c).is_ok();
        let carleson = carleson_constant(&c);
        let ratio = sparse_domination_ratio(&out, &v, &c, &tracked, cfg.q, cfg.weight()).compute()?;
        Ok(Level { cubes: c.len(), verified, carleson, ratio })
    }
}

impl Driver for SparseSuite {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let (a, b) = (self.level(index, 0)?, self.level(index, 1)?);
        let packed = a.carleson.max(b.carleson) <= 2.0 * (1.0 + self.cfg.tolerance.exact);
        Ok(vec![
            ("cubes_j", Value::from(a.cubes)),
            ("cubes_j1", Value::from(b.cubes)),
            ("verified", Value::Bool(a.verified && b.verified)),
            ("carleson", num(a.carleson.max(b.carleson))),
            ("ratio_j", num(a.ratio)),
            ("ratio_j1", num(b.ratio)),
            ("flagged", Value::Bool(!(a.verified && b.verified && packed) || !a.ratio.is_finite() || !b.ratio.is_finite())),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let (a, b) = (report.numbers("ratio_j"), report.numbers("ratio_j1"));
        let col = report.column("verified");
        let unverified = report.rows.iter().filter(|r| col.is_some_and(|c| r[c] != Value::Bool(true))).count();
        let carleson = max_of(&report.numbers("carleson"));
        let summary = BTreeMap::from([
            ("max_carleson".to_string(), num(carleson)),
            ("max_ratio_j".to_string(), num(max_of(&a))),
            ("max_ratio_j1".to_string(), num(max_of(&b))),
        ]);
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        let verdicts = vec![
            Verdict::new("sparse_at_one_half", unverified == 0, format!("{unverified} trials fail verification")),
            Verdict::new(
                "carleson_packing",
                report.rows.is_empty() || carleson <= 2.0 * (1.0 + self.cfg.tolerance.exact),
                format!("max packing constant {carleson:.6}"),
            ),
            all_finite("finite", &both),
            stability("two_resolution", &a, &b, self.cfg.tolerance.stability),
        ];
        (summary, verdicts)
    }
}
