use super::{collection, operators, rng};
use crate::config::ExperimentConfig;
use crate::report::{all_finite, max_of, median_of, num, stability, Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::decomp::local_estimate_ratio_weighted;
use helicoid_core::gridfn::Weight;
use helicoid_core::exponents::{xi_feasible, AlphaTuple};
use helicoid_core::model::ModelOperator;
use helicoid_core::testfns::{indicator, random_cube, random_dyadic_set};
use serde_json::Value;
use std::collections::BTreeMap;

/// Restricted-type local estimate: random sets `E_j`, a random localization
/// cube `R₀`, and the ratio of the localized form to the size bound.
pub struct LocalEstimate {
    cfg: ExperimentConfig,
    alpha: AlphaTuple,
    ops: [ModelOperator; 2],
}

impl LocalEstimate {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let alpha = AlphaTuple::new(cfg.n, cfg.k, cfg.alphas()?).config()?;
        if !xi_feasible(cfg.n, cfg.k, &alpha).config()? {
            return Err(HarnessError::Config(format!("alpha {:?} is not admissible for n = {}, k = {}", cfg.alpha, cfg.n, cfg.k)));
        }
        let col = collection(cfg, cfg.box_bound)?;
        let ops = operators(cfg, &col)?;
        Ok(Self { cfg: cfg.clone(), alpha, ops })
    }
}

impl Driver for LocalEstimate {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let cfg = &self.cfg;
        let mut r = rng(cfg, index);
        let sets: Vec<_> = (0..=cfg.n).map(|_| random_dyadic_set(cfg.d, cfg.j, 4, &mut r)).collect();
        let r0 = random_cube(cfg.d, (-2, 0), &mut r);
        let mut out = Vec::with_capacity(2);
        for op in &self.ops {
            let es: Vec<_> = sets.iter().map(|s| indicator(cfg.d, op.j, s)).collect();
            out.push(local_estimate_ratio_weighted(op, &r0, &es, &self.alpha, Weight::ChiTilde(cfg.size_m)).compute()?);
        }
        let flagged = out.iter().any(|e| !e.ratio.is_finite());
        Ok(vec![
            ("r0", Value::from(r0.to_string())),
            ("form_j", num(out[0].form)),
            ("bound_j", num(out[0].bound)),
            ("ratio_j", num(out[0].ratio)),
            ("ratio_j1", num(out[1].ratio)),
            ("flagged", Value::Bool(flagged)),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let (a, b) = (report.numbers("ratio_j"), report.numbers("ratio_j1"));
        let summary = BTreeMap::from([
            ("max_ratio_j".to_string(), num(max_of(&a))),
            ("median_ratio_j".to_string(), num(median_of(&a))),
            ("max_ratio_j1".to_string(), num(max_of(&b))),
            ("median_ratio_j1".to_string(), num(median_of(&b))),
        ]);
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        (summary, vec![all_finite("finite", &both), stability("two_resolution", &a, &b, self.cfg.tolerance.stability)])
    }
}
