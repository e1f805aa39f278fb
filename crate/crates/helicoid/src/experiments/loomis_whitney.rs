use super::mixed::axis_range;
use super::{collection, norm_ratio, operators, rng, Family};
use crate::config::{ExperimentConfig, OperatorKind};
use crate::report::{all_finite, max_of, num, stability, Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::exponents::{finner_failing_axis, q, LebesgueExponent, MixedExponent, Q};
use helicoid_core::gridfn::{GridFunction, NormSpec};
use helicoid_core::model::ModelOperator;
use serde_json::Value;
use std::collections::BTreeMap;

/// Inputs on `ℝ^{d-1}` lifted to `ℝ^d` by forgetting one axis each, fed to
/// the pointwise product (one input per axis) or to a model operator.
pub struct LoomisWhitney {
    cfg: ExperimentConfig,
    /// Axis forgotten by each input.
    forget: Vec<usize>,
    inputs: Vec<NormSpec>,
    output: NormSpec,
    in_range: Option<bool>,
    ops: Option<[ModelOperator; 2]>,
}

impl LoomisWhitney {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let d = cfg.d;
        if d < 2 {
            return Err(HarnessError::Config("the lift needs d ≥ 2".into()));
        }
        let p = Q::from_float(cfg.p).filter(|p| *p > q(0, 1)).ok_or_else(|| HarnessError::Config(format!("p = {} is not a positive number", cfg.p)))?;
        let count = match cfg.operator {
            OperatorKind::Product => d,
            OperatorKind::Model => cfg.n,
        };
        let forget: Vec<usize> = match cfg.operator {
            OperatorKind::Product => (0..d).collect(),
            OperatorKind::Model => (0..count).map(|j| (j + 1) % d).collect(),
        };
        let keeps: Vec<Vec<usize>> = forget.iter().map(|&f| (0..d).filter(|&a| a != f).collect()).collect();
        let tuples = if cfg.tuples.is_empty() {
            // Spread 1/p evenly over the inputs that retain each axis.
            let sharing = (0..d).map(|a| keeps.iter().filter(|k| k.contains(&a)).count()).max().unwrap_or(1).max(1);
            let e = LebesgueExponent::from_recip(q(1, sharing as i64) / &p);
            vec![MixedExponent::uniform(d - 1, e); count]
        } else {
            cfg.mixed_tuples(d - 1)?
        };
        if tuples.len() != count {
            return Err(HarnessError::Config(format!("need {count} input tuples, got {}", tuples.len())));
        }
        // Per-axis Hölder condition for |f_j|^p against L^1.
        let scaled: Vec<MixedExponent> = tuples
            .iter()
            .map(|t| MixedExponent::per_axis(t.axis_exponents().iter().map(|e| LebesgueExponent::from_recip(e.recip() * &p)).collect()))
            .collect();
        if let Some(axis) = finner_failing_axis(d, &keeps, &scaled).config()? {
            return Err(HarnessError::Config(format!("exponents fail the per-axis Hölder condition on axis {axis}")));
        }
        let (in_range, ops) = match cfg.operator {
            OperatorKind::Product => {
                cfg.check_sample_cap(d, 1)?;
                (None, None)
            }
            OperatorKind::Model => {
                let lifted: Vec<Vec<Q>> = tuples
                    .iter()
                    .zip(&keeps)
                    .map(|(t, keep)| {
                        let axes = t.axis_exponents();
                        (0..d).map(|a| keep.iter().position(|&k| k == a).map_or(q(0, 1), |i| axes[i].recip().clone())).collect()
                    })
                    .collect();
                let col = collection(cfg, cfg.box_bound)?;
                (Some(axis_range(cfg.n, cfg.k, &lifted)?), Some(operators(cfg, &col)?))
            }
        };
        let output = NormSpec::scalar(MixedExponent::uniform(d, LebesgueExponent::from_recip(q(1, 1) / &p)));
        let inputs = tuples.into_iter().map(NormSpec::scalar).collect();
        Ok(Self { cfg: cfg.clone(), forget, inputs, output, in_range, ops })
    }

    fn ratio_at(&self, index: usize, level: usize, family: Family) -> Result<f64, HarnessError> {
        let cfg = &self.cfg;
        let j = cfg.j + level as u32;
        let fs = family.draw(cfg.d - 1, cfg.j, j, self.forget.len(), &mut rng(cfg, index));
        let gs: Vec<GridFunction> = fs.iter().zip(&self.forget).map(|(f, &a)| f.lift_forgetting(a)).collect();
        let out = match &self.ops {
            None => gs[1..].iter().try_fold(gs[0].clone(), |acc, g| acc.mul(g)).compute()?,
            Some(ops) => ops[level].apply(&gs).compute()?,
        };
        norm_ratio(&out, &self.output, &fs, &self.inputs)
    }
}

impl Driver for LoomisWhitney {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let family = Family::of_seed(self.cfg.seed(index));
        let (a, b) = (self.ratio_at(index, 0, family)?, self.ratio_at(index, 1, family)?);
        let over = self.ops.is_none() && a.max(b) > 1.0 + self.cfg.tolerance.loomis_whitney;
        Ok(vec![
            ("family", Value::from(family.name())),
            ("ratio_j", num(a)),
            ("ratio_j1", num(b)),
            ("flagged", Value::Bool(over || !a.is_finite() || !b.is_finite())),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let (a, b) = (report.numbers("ratio_j"), report.numbers("ratio_j1"));
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        let mut summary = BTreeMap::from([("max_ratio_j".to_string(), num(max_of(&a))), ("max_ratio_j1".to_string(), num(max_of(&b)))]);
        if let Some(r) = self.in_range {
            summary.insert("in_proved_range".to_string(), Value::Bool(r));
        }
        let mut verdicts = vec![all_finite("finite", &both)];
        match self.ops {
            None => {
                let worst = max_of(&both);
                let tol = self.cfg.tolerance.loomis_whitney;
                verdicts.push(Verdict::new("constant_one", both.is_empty() || worst <= 1.0 + tol, format!("max ratio {worst:.9} (tolerance {tol:e})")));
            }
            Some(_) => verdicts.push(stability("two_resolution", &a, &b, self.cfg.tolerance.stability)),
        }
        (summary, verdicts)
    }
}
