use super::rng;
use crate::config::{ExperimentConfig, SampleRegion};
use crate::report::{Report, Row, Verdict};
use crate::{Driver, HarnessError, OrCompute};
use helicoid_core::exponents::{is_range_witness, q, range_membership, ExponentTuple, Q};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::collections::BTreeMap;

/// Random Hölder tuples through the range-membership decision.
pub struct RangeScan {
    cfg: ExperimentConfig,
}

impl RangeScan {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        if cfg.n < 1 || 2 * cfg.k >= cfg.n + 1 {
            return Err(HarnessError::Config(format!("rank k = {} needs k < (n+1)/2 for n = {}", cfg.k, cfg.n)));
        }
        Ok(Self { cfg: cfg.clone() })
    }

    fn sample(&self, r: &mut ChaCha8Rng) -> Vec<Q> {
        let n = self.cfg.n;
        loop {
            let den = r.random_range(2..=48i64);
            let top = match self.cfg.region {
                SampleRegion::LocalL2 => den / 2,
                SampleRegion::Holder => (3 * den) / 4,
            };
            let mut t: Vec<Q> = (0..n).map(|_| q(r.random_range(0..=top), den)).collect();
            let last = q(1, 1) - t.iter().fold(q(0, 1), |a, b| a + b);
            if self.cfg.region == SampleRegion::LocalL2 && (last < q(0, 1) || last > q(1, 2)) {
                continue;
            }
            t.push(last);
            return t;
        }
    }
}

/// For `n = 4, k = 2`: every pair of input reciprocals sums below 3/2 and every triple below 2.
fn rank_two_conditions(r: &[Q]) -> bool {
    (0..4).all(|a| (a + 1..4).all(|b| &r[a] + &r[b] < q(3, 2) && (b + 1..4).all(|c| &r[a] + &r[b] + &r[c] < q(2, 1))))
}

impl Driver for RangeScan {
    fn trials(&self) -> usize {
        self.cfg.seeds
    }

    fn trial(&self, index: usize) -> Result<Row, HarnessError> {
        let (n, k) = (self.cfg.n, self.cfg.k);
        let r = self.sample(&mut rng(&self.cfg, index));
        let t = ExponentTuple::from_recips(r.clone());
        let decision = range_membership(n, k, &t).compute()?;
        let witness_ok = match &decision.witness {
            Some(w) => is_range_witness(&t, w).compute()?,
            None => !decision.member,
        };
        let implied = if (n, k) == (4, 2) && decision.member { Value::Bool(rank_two_conditions(&r)) } else { Value::Null };
        let miss = self.cfg.region == SampleRegion::LocalL2 && !decision.member;
        Ok(vec![
            ("recips", Value::from(r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))),
            ("member", Value::Bool(decision.member)),
            ("witness_ok", Value::Bool(witness_ok)),
            ("implied_conditions", implied.clone()),
            ("flagged", Value::Bool(miss || !witness_ok || implied == Value::Bool(false))),
        ])
    }

    fn finish(&self, report: &Report) -> (BTreeMap<String, Value>, Vec<Verdict>) {
        let count = |col: &str, v: Value| report.column(col).map_or(0, |c| report.rows.iter().filter(|r| r[c] == v).count());
        let members = count("member", Value::Bool(true));
        let summary = BTreeMap::from([("members".to_string(), Value::from(members)), ("samples".to_string(), Value::from(report.rows.len()))]);
        let bad_witness = count("witness_ok", Value::Bool(false));
        let mut verdicts = vec![Verdict::new("witnesses", bad_witness == 0, format!("{bad_witness} members without a valid witness"))];
        if self.cfg.region == SampleRegion::LocalL2 {
            let missed = report.rows.len() - members;
            verdicts.push(Verdict::new("closed_local_l2_accepted", missed == 0, format!("{missed} of {} rejected", report.rows.len())));
        }
        if (self.cfg.n, self.cfg.k) == (4, 2) {
            let bad = count("implied_conditions", Value::Bool(false));
            verdicts.push(Verdict::new("implied_conditions", bad == 0, format!("{bad} counterexamples among {members} members")));
        }
        (summary, verdicts)
    }
}
