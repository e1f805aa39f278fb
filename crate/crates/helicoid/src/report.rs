//! Report rows, verdicts and CSV/JSON serialization.

use crate::HarnessError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// One trial: column name and value pairs in column order.
pub type Row = Vec<(&'static str, Value)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    /// Every row starts with `config_hash`, `trial` and `seed`.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub summary: BTreeMap<String, Value>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; non-numbers (such as `null` for an
    /// infinite ratio) read as `+∞`.
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        match self.column(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::INFINITY)).collect(),
            None => Vec::new(),
        }
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("report: {e}")))
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| HarnessError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn render(&self, format: Format) -> Result<String, HarnessError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => Ok(self.to_json()),
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "inf".to_string(),
        other => other.to_string(),
    }
}

/// JSON number, or `null` when not finite.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn median_of(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Two-resolution stability of the seed-max: both maxima finite and
/// `|max_fine / max_coarse - 1| ≤ tol`. Two zero maxima are stable.
pub fn stability(name: &str, coarse: &[f64], fine: &[f64], tol: f64) -> Verdict {
    stability_between(name, ("J", "J+1"), coarse, fine, tol)
}

/// [`stability`] with the two runs named by `labels`.
pub fn stability_between(name: &str, labels: (&str, &str), coarse: &[f64], fine: &[f64], tol: f64) -> Verdict {
    let (la, lb) = labels;
    if coarse.is_empty() {
        return Verdict::new(name, true, "no trials");
    }
    let (a, b) = (max_of(coarse), max_of(fine));
    if !a.is_finite() || !b.is_finite() {
        return Verdict::new(name, false, format!("non-finite maximum: {a} at {la}, {b} at {lb}"));
    }
    if a == 0.0 {
        return Verdict::new(name, b == 0.0, format!("max 0 at {la}, {b} at {lb}"));
    }
    let change = b / a - 1.0;
    Verdict::new(name, change.abs() <= tol, format!("max {a:.6e} at {la}, {b:.6e} at {lb}, change {:+.2}% (tolerance {:.0}%)", 100.0 * change, 100.0 * tol))
}

/// Passes when every value is finite.
pub fn all_finite(name: &str, xs: &[f64]) -> Verdict {
    let bad = xs.iter().filter(|x| !x.is_finite()).count();
    Verdict::new(name, bad == 0, format!("{bad} of {} non-finite", xs.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_verdicts() {
        assert!(stability("s", &[1.0, 2.0], &[2.1], 0.2).pass);
        assert!(!stability("s", &[1.0, 2.0], &[2.5], 0.2).pass);
        assert!(!stability("s", &[f64::INFINITY], &[1.0], 0.2).pass);
        assert!(stability("s", &[0.0], &[0.0], 0.2).pass);
        assert!(stability("s", &[], &[], 0.2).pass);
    }

    #[test]
    fn median_and_cells() {
        assert_eq!(median_of(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(num(f64::INFINITY), Value::Null);
        let r = Report {
            experiment: "e".into(),
            config_hash: "h".into(),
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![Value::from("x,y"), num(f64::INFINITY)]],
            summary: BTreeMap::new(),
            verdicts: vec![],
        };
        assert_eq!(r.to_csv().unwrap(), "a,b\n\"x,y\",inf\n");
        assert_eq!(r.numbers("b"), vec![f64::INFINITY]);
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn json_round_trips_floats_bit_for_bit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..2000).map(|_| f64::from_bits(rng.random::<u64>() >> 2) * rng.random_range(-1.0..1.0)).collect();
        let r = Report {
            experiment: "e".into(),
            config_hash: "h".into(),
            columns: vec!["x".into()],
            rows: xs.iter().map(|&x| vec![num(x)]).collect(),
            summary: BTreeMap::new(),
            verdicts: vec![],
        };
        let back = Report::from_json(&r.to_json()).unwrap();
        for (x, y) in xs.iter().zip(back.numbers("x")) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
