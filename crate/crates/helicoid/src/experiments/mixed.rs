use super::{collection, norm_ratio, operators, rng, Family};
use crate::config::ExperimentConfig;
use crate::report::{all_finite, max_of, num, stability, Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::exponents::{q, range_membership, ExponentTuple, Q};
use helicoid_core::gridfn::NormSpec;
use helicoid_core::model::ModelOperator;
use serde_json::Value;
use std::collections::BTreeMap;

/// Operator-norm ratio of the model operator between configured mixed-norm spaces.
pub struct MixedNormScan {
    cfg: ExperimentConfig,
    inputs: Vec<NormSpec>,
    output: NormSpec,
    in_range: bool,
    ops: [ModelOperator; 2],
}

/// Per axis, the tuple `(1/p_1, …, 1/p_n, 1 - Σ 1/p_j)` must lie in the range.
pub(crate) fn axis_range(n: usize, k: usize, inputs: &[Vec<Q>]) -> Result<bool, HarnessError> {
    let d = inputs.first().map_or(0, Vec::len);
    for axis in 0..d {
        let mut r: Vec<Q> = inputs.iter().map(|e| e[axis].clone()).collect();
        let sum = r.iter().fold(q(0, 1), |a, b| a + b);
        r.push(q(1, 1) - sum);
        if !range_membership(n, k, &ExponentTuple::from_recips(r)).config()?.member {
            return Ok(false);
        }
    }
    Ok(true)
}

impl MixedNormScan {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let tuples = cfg.mixed_tuples(cfg.d)?;
        if tuples.len() != cfg.n + 1 {
            return Err(HarnessError::Config(format!("need {} tuples (inputs, then output), got {}", cfg.n + 1, tuples.len())));
        }
        let recips: Vec<Vec<Q>> = tuples.iter().map(|t| t.axis_exponents().iter().map(|e| e.recip().clone()).collect()).collect();
        for axis in 0..cfg.d {
            let sum = recips[..cfg.n].iter().fold(q(0, 1), |a, r| a + &r[axis]);
            if sum != recips[cfg.n][axis] {
                return Err(HarnessError::Config(format!("axis {axis}: output exponent does not match Hölder scaling")));
            }
        }
        let in_range = axis_range(cfg.n, cfg.k, &recips[..cfg.n])?;
        let col = collection(cfg, cfg.box_bound)?;
        let ops = operators(cfg, &col)?;
        let mut specs: Vec<NormSpec> = tuples.into_iter().map(NormSpec::scalar).collect();
        let output = specs.pop().expect("n + 1 tuples");
        Ok(Self { cfg: cfg.clone(), inputs: specs, output, in_range, ops })
    }
}

impl Driver for MixedNormScan {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let cfg = &self.cfg;
        let family = Family::of_seed(cfg.seed(index));
        let mut ratios = Vec::with_capacity(2);
        for op in &self.ops {
            let fs = family.draw(cfg.d, cfg.j, op.j, cfg.n, &mut rng(cfg, index));
            let out = op.apply(&fs).compute()?;
            ratios.push(norm_ratio(&out, &self.output, &fs, &self.inputs)?);
        }
        Ok(vec![
            ("family", Value::from(family.name())),
            ("range", Value::from(if self.in_range { "inside" } else { "outside-proved-range" })),
            ("ratio_j", num(ratios[0])),
            ("ratio_j1", num(ratios[1])),
            ("flagged", Value::Bool(!self.in_range || ratios.iter().any(|x| !x.is_finite()) || ratios[1] > ratios[0] * (1.0 + cfg.tolerance.stability))),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let (a, b) = (report.numbers("ratio_j"), report.numbers("ratio_j1"));
        let summary = BTreeMap::from([
            ("in_proved_range".to_string(), Value::Bool(self.in_range)),
            ("max_ratio_j".to_string(), num(max_of(&a))),
            ("max_ratio_j1".to_string(), num(max_of(&b))),
        ]);
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        (summary, vec![all_finite("finite", &both), stability("two_resolution", &a, &b, self.cfg.tolerance.stability)])
    }
}
