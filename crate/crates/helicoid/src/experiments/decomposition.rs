use super::{collection, rng, Family};
use crate::config::ExperimentConfig;
use crate::report::{max_of, num, stability_between, Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::decomp::{decompose, size};
use helicoid_core::model::ModelOperator;
use rand::Rng;
use serde_json::Value;
use std::collections::BTreeMap;

/// Decomposition lemma on two nested collections, the second with twice the
/// frequency box of the first.
pub struct Decomposition {
    cfg: ExperimentConfig,
    ops: [ModelOperator; 2],
}

struct Outcome {
    lambda: f64,
    trees: usize,
    postconditions: bool,
    ratio: f64,
}

fn run_one(op: &ModelOperator, slot: usize, f: &helicoid_core::gridfn::GridFunction, slack: f64) -> Result<Outcome, HarnessError> {
    let pool = op.all();
    let lambda = size(op, &pool, slot, f) * slack;
    if lambda == 0.0 {
        return Ok(Outcome { lambda, trees: 0, postconditions: true, ratio: 0.0 });
    }
    let d = decompose(op, &pool, slot, f, lambda, None).compute()?;
    let mut ok = size(op, &d.remaining, slot, f) <= lambda / 2.0;
    ok &= d.trees.iter().all(|t| t.size > lambda / 2.0 && t.size <= lambda * (1.0 + 1e-12));
    let mut all: Vec<usize> = d.trees.iter().flat_map(|t| t.tiles()).chain(d.remaining.iter().copied()).collect();
    all.sort_unstable();
    ok &= all == pool;
    Ok(Outcome { lambda, trees: d.trees.len(), postconditions: ok, ratio: d.ratio })
}

impl Decomposition {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let [small, large] = cfg.box_bounds[..] else {
            return Err(HarnessError::Config("box_bounds needs exactly two entries".into()));
        };
        if large <= small {
            return Err(HarnessError::Config("box_bounds must be increasing".into()));
        }
        let nyquist = 1i64 << cfg.j.saturating_sub(1);
        if large > nyquist {
            return Err(HarnessError::Config(format!("box bound {large} exceeds the Nyquist bound {nyquist} at J = {}", cfg.j)));
        }
        cfg.check_sample_cap(cfg.d, 1)?;
        let op = |b| -> Result<ModelOperator, HarnessError> {
            ModelOperator::new(collection(cfg, Some(b))?, cfg.j, cfg.profile()).compute()
        };
        Ok(Self { cfg: cfg.clone(), ops: [op(small)?, op(large)?] })
    }
}

impl Driver for Decomposition {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let cfg = &self.cfg;
        let mut r = rng(cfg, index);
        let slot = index % (cfg.n + 1);
        let slack = r.random_range(1.0..1.5);
        let family = Family::of_seed(cfg.seed(index));
        let f = family.draw(cfg.d, cfg.j, cfg.j, 1, &mut r).remove(0);
        let small = run_one(&self.ops[0], slot, &f, slack)?;
        let large = run_one(&self.ops[1], slot, &f, slack)?;
        Ok(vec![
            ("slot", Value::from(slot)),
            ("family", Value::from(family.name())),
            ("lambda_small", num(small.lambda)),
            ("trees_small", Value::from(small.trees)),
            ("ratio_small", num(small.ratio)),
            ("lambda_large", num(large.lambda)),
            ("trees_large", Value::from(large.trees)),
            ("ratio_large", num(large.ratio)),
            ("postconditions", Value::Bool(small.postconditions && large.postconditions)),
            ("flagged", Value::Bool(!(small.postconditions && large.postconditions))),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let (a, b) = (report.numbers("ratio_small"), report.numbers("ratio_large"));
        let col = report.column("postconditions");
        let failed = report.rows.iter().filter(|r| col.is_some_and(|c| r[c] != Value::Bool(true))).count();
        let summary = BTreeMap::from([
            ("tiles_small".to_string(), Value::from(self.ops[0].collection.len())),
            ("tiles_large".to_string(), Value::from(self.ops[1].collection.len())),
            ("max_ratio_small".to_string(), num(max_of(&a))),
            ("max_ratio_large".to_string(), num(max_of(&b))),
        ]);
        let verdicts = vec![
            Verdict::new("postconditions", failed == 0, format!("{failed} of {} trials violate a postcondition", report.rows.len())),
            stability_between("collection_doubling", ("small box", "large box"), &a, &b, self.cfg.tolerance.stability),
        ];
        (summary, verdicts)
    }
}
