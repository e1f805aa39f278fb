use crate::config::ExperimentConfig;
use crate::report::{max_of, num, Report, Row, Verdict};
use crate::{Driver, HarnessError};
use helicoid_core::maximal::{weak_type_constant, weak_type_sum, MaximalError};
use serde_json::Value;
use std::collections::BTreeMap;

/// Weak-type summation bound over a grid of `(A₁, A₂, A₃, S₀)` with one
/// constant, then divergence probes at `q ≥ s'`. Deterministic: seeds are unused.
pub struct Endpoint {
    cfg: ExperimentConfig,
    s1: f64,
    s2: f64,
    constant: f64,
}

impl Endpoint {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let s = cfg.s_exponents()?;
        let [s1, s2] = &s[..] else {
            return Err(HarnessError::Config("endpoint needs two averaging exponents".into()));
        };
        let (s1, s2) = (s1.to_f64(), s2.to_f64());
        if !(s1.is_finite() && s2.is_finite() && cfg.q > 0.0 && cfg.q / s1 + cfg.q / s2 < 1.0) {
            return Err(HarnessError::Config(format!("need 0 < q < s' for q = {}, s = ({s1}, {s2})", cfg.q)));
        }
        let g = &cfg.endpoint;
        if g.a.is_empty() || g.s0.is_empty() || g.a.iter().chain(&g.s0).any(|&x| !(x > 0.0)) || g.half < 1 {
            return Err(HarnessError::Config("endpoint grid needs positive values and half ≥ 1".into()));
        }
        Ok(Self { cfg: cfg.clone(), s1, s2, constant: weak_type_constant(cfg.q, s1, s2) })
    }

    fn grid_len(&self) -> usize {
        self.cfg.endpoint.a.len().pow(3) * self.cfg.endpoint.s0.len()
    }
}

impl Driver for Endpoint {
    fn trials(&self) -> usize {
        self.grid_len() + self.cfg.endpoint.divergent_q.len()
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let g = &self.cfg.endpoint;
        if index >= self.grid_len() {
            let q = g.divergent_q[index - self.grid_len()];
            let detected = matches!(weak_type_sum(q, self.s1, self.s2, [1.0; 3], 1.0, g.half), Err(MaximalError::Divergent(_)));
            let nan = num(f64::NAN);
            return Ok(vec![
                ("kind", Value::from("divergence")),
                ("q", num(q)),
                ("a1", nan.clone()),
                ("a2", nan.clone()),
                ("a3", nan.clone()),
                ("s0", nan.clone()),
                ("value", nan.clone()),
                ("upper_ratio", nan),
                ("pass", Value::Bool(detected)),
                ("flagged", Value::Bool(!detected)),
            ]);
        }
        let m = g.a.len();
        let (a1, a2, a3, s0) = (g.a[index % m], g.a[index / m % m], g.a[index / (m * m) % m], g.s0[index / (m * m * m)]);
        let w = weak_type_sum(self.cfg.q, self.s1, self.s2, [a1, a2, a3], s0, g.half).map_err(|e| HarnessError::Compute(e.to_string()))?;
        let holds = w.upper_ratio <= self.constant * (1.0 + self.cfg.tolerance.exact);
        Ok(vec![
            ("kind", Value::from("grid")),
            ("q", num(self.cfg.q)),
            ("a1", num(a1)),
            ("a2", num(a2)),
            ("a3", num(a3)),
            ("s0", num(s0)),
            ("value", num(w.value)),
            ("upper_ratio", num(w.upper_ratio)),
            ("pass", Value::Bool(holds)),
            ("flagged", Value::Bool(!holds)),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let kind = report.column("kind");
        let pass = report.column("pass");
        let count = |k: &str, ok: bool| {
            report.rows.iter().filter(|r| kind.is_some_and(|c| r[c] == Value::from(k)) && pass.is_some_and(|c| r[c] == Value::Bool(ok))).count()
        };
        let ratios: Vec<f64> = report.numbers("upper_ratio").into_iter().filter(|x| x.is_finite()).collect();
        let summary = BTreeMap::from([("constant".to_string(), num(self.constant)), ("max_upper_ratio".to_string(), num(max_of(&ratios)))]);
        let verdicts = vec![
            Verdict::new(
                "single_constant",
                count("grid", false) == 0,
                format!("{} of {} grid points exceed C = {:.6}", count("grid", false), self.grid_len(), self.constant),
            ),
            Verdict::new("divergence_detected", count("divergence", false) == 0, format!("{} probes not rejected", count("divergence", false))),
        ];
        (summary, verdicts)
    }
}
