use super::{collection, operators, rng, Family};
use crate::config::ExperimentConfig;
use crate::report::{all_finite, max_of, median_of, num, stability, Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::dyadic::{find_trees, Tree, TreeKind};
use helicoid_core::model::ModelOperator;
use rand::Rng;
use serde_json::Value;
use std::collections::BTreeMap;

/// Single-tree estimate over lacunary trees of the collection.
pub struct TreeEstimate {
    cfg: ExperimentConfig,
    trees: Vec<Tree>,
    ops: [ModelOperator; 2],
}

impl TreeEstimate {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let col = collection(cfg, cfg.box_bound)?;
        let trees: Vec<Tree> = (0..=cfg.n).flat_map(|slot| find_trees(&col, slot, TreeKind::Lacunary)).collect();
        if trees.is_empty() {
            return Err(HarnessError::Config("the collection has no lacunary trees".into()));
        }
        let ops = operators(cfg, &col)?;
        Ok(Self { cfg: cfg.clone(), trees, ops })
    }
}

impl Driver for TreeEstimate {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let cfg = &self.cfg;
        let mut r = rng(cfg, index);
        let which = r.random_range(0..self.trees.len());
        let tree = &self.trees[which];
        let family = Family::of_seed(cfg.seed(index));
        let mut ratios = Vec::with_capacity(2);
        for op in &self.ops {
            let mut data_rng = r.clone();
            let fs = family.draw(cfg.d, cfg.j, op.j, cfg.n + 1, &mut data_rng);
            ratios.push(op.tree_form_ratio(tree, &fs).compute()?.2);
        }
        Ok(vec![
            ("tree", Value::from(which)),
            ("slot", Value::from(tree.slot)),
            ("tiles", Value::from(tree.members.len())),
            ("family", Value::from(family.name())),
            ("ratio_j", num(ratios[0])),
            ("ratio_j1", num(ratios[1])),
            ("flagged", Value::Bool(ratios.iter().any(|x| !x.is_finite()))),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let (a, b) = (report.numbers("ratio_j"), report.numbers("ratio_j1"));
        let summary = BTreeMap::from([
            ("trees".to_string(), Value::from(self.trees.len())),
            ("max_ratio_j".to_string(), num(max_of(&a))),
            ("median_ratio_j".to_string(), num(median_of(&a))),
            ("max_ratio_j1".to_string(), num(max_of(&b))),
        ]);
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        (summary, vec![all_finite("finite", &both), stability("two_resolution", &a, &b, self.cfg.tolerance.stability)])
    }
}
