use super::{norm_ratio, rng};
use crate::config::ExperimentConfig;
use crate::report::{all_finite, max_of, num, stability, Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::exec::Exec;
use helicoid_core::exponents::LebesgueExponent;
use helicoid_core::gridfn::{GridFunction, NormSpec};
use helicoid_core::maximal::{maximal_table, CubeFamily};
use helicoid_core::testfns::{gaussian_vector_field, random_step};
use serde_json::Value;
use std::collections::BTreeMap;

/// Multilinear maximal function: pointwise product bound, argmax
/// linearization, and a mixed-norm vector-valued ratio at two resolutions.
pub struct MaximalSuite {
    cfg: ExperimentConfig,
    s: Vec<LebesgueExponent>,
    inputs: Vec<NormSpec>,
    output: NormSpec,
    families: [CubeFamily; 2],
}

impl MaximalSuite {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let s = cfg.s_exponents()?;
        let m = s.len();
        if m == 0 {
            return Err(HarnessError::Config("no averaging exponents".into()));
        }
        let tuples = cfg.mixed_tuples(cfg.d)?;
        if tuples.len() != m + 1 {
            return Err(HarnessError::Config(format!("need {} tuples (inputs, then output), got {}", m + 1, tuples.len())));
        }
        let vector = if cfg.vector_len == 0 {
            vec![Vec::new(); m + 1]
        } else {
            let v = cfg.vector_exponents()?;
            if v.len() != m + 1 {
                return Err(HarnessError::Config(format!("need {} vector exponents, got {}", m + 1, v.len())));
            }
            v.into_iter().map(|e| vec![e]).collect()
        };
        cfg.check_sample_cap(cfg.d, cfg.vector_len)?;
        let mut specs: Vec<NormSpec> = tuples.into_iter().zip(vector).map(|(spatial, vector)| NormSpec { spatial, vector }).collect();
        let output = specs.pop().expect("m + 1 specs");
        let families = [CubeFamily::dyadic(cfg.d, cfg.j), CubeFamily::dyadic(cfg.d, cfg.j + 1)];
        Ok(Self { cfg: cfg.clone(), s, inputs: specs, output, families })
    }

    fn measures(&self) -> Vec<Vec<f64>> {
        if self.cfg.vector_len == 0 {
            Vec::new()
        } else {
            vec![vec![1.0; self.cfg.vector_len]]
        }
    }

    /// Step functions on even seeds, smooth fields on odd ones.
    fn data(&self, index: usize, j: u32) -> (Vec<GridFunction>, &'static str) {
        let cfg = &self.cfg;
        let mut r = rng(cfg, index);
        let step = cfg.seed(index) % 2 == 0;
        let fs = (0..self.s.len())
            .map(|_| {
                if step {
                    random_step(cfg.d, cfg.j, j, self.measures(), &mut r)
                } else {
                    gaussian_vector_field(cfg.d, cfg.j, j, self.measures(), &mut r)
                }
            })
            .collect();
        (fs, if step { "step" } else { "gaussian" })
    }
}

impl Driver for MaximalSuite {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let cfg = &self.cfg;
        let weight = cfg.weight();
        let (fs, family) = self.data(index, cfg.j);
        let table = maximal_table(Exec::Auto, &fs, &self.s, &self.families[0], weight).compute()?;
        let sup = table.sup();
        let linearized = table.linearized(&table.argmax(None), None).compute()?;
        let identical = sup.samples == linearized.samples;
        let singles: Vec<GridFunction> = (0..fs.len())
            .map(|j| maximal_table(Exec::Auto, &fs[j..=j], &self.s[j..=j], &self.families[0], weight).map(|t| t.sup()))
            .collect::<Result<_, _>>()
            .compute()?;
        let violations = (0..sup.samples.len())
            .filter(|&x| sup.samples[x].re > singles.iter().map(|m| m.samples[x].re).product::<f64>() * (1.0 + cfg.tolerance.exact))
            .count();
        let ratio_j = norm_ratio(&sup, &self.output, &fs, &self.inputs)?;
        let (fine, _) = self.data(index, cfg.j + 1);
        let sup_fine = maximal_table(Exec::Auto, &fine, &self.s, &self.families[1], weight).compute()?.sup();
        let ratio_j1 = norm_ratio(&sup_fine, &self.output, &fine, &self.inputs)?;
        Ok(vec![
            ("family", Value::from(family)),
            ("product_violations", Value::from(violations)),
            ("argmax_identical", Value::Bool(identical)),
            ("ratio_j", num(ratio_j)),
            ("ratio_j1", num(ratio_j1)),
            ("flagged", Value::Bool(violations > 0 || !identical || !ratio_j.is_finite() || !ratio_j1.is_finite())),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let (a, b) = (report.numbers("ratio_j"), report.numbers("ratio_j1"));
        let violations: f64 = report.numbers("product_violations").iter().sum();
        let col = report.column("argmax_identical");
        let differing = report.rows.iter().filter(|r| col.is_some_and(|c| r[c] != Value::Bool(true))).count();
        let summary = BTreeMap::from([("max_ratio_j".to_string(), num(max_of(&a))), ("max_ratio_j1".to_string(), num(max_of(&b)))]);
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        let verdicts = vec![
            Verdict::new("product_bound", violations == 0.0, format!("{violations} grid points exceed the product of single maximal functions")),
            Verdict::new("argmax_linearization", differing == 0, format!("{differing} trials where the argmax linearization differs")),
            all_finite("finite", &both),
            stability("two_resolution", &a, &b, self.cfg.tolerance.stability),
        ];
        (summary, verdicts)
    }
}
