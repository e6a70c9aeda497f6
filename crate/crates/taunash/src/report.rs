//! Machine-readable verification reports and curve tables.
//!
//! Reports hold only input echoes, computed quantities, and assertion
//! outcomes; nothing time- or host-dependent, so a rerun with the same
//! seed reproduces the files byte for byte. Infinities are legitimate
//! values here (divergent moments) and serialize as the strings "inf" /
//! "-inf" rather than JSON null.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;

/// An f64 that survives JSON round-trips even when infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtReal(pub f64);

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }
}

struct ExtRealVisitor;

impl Visitor<'_> for ExtRealVisitor {
    type Value = ExtReal;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a number or one of \"inf\", \"-inf\", \"nan\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<ExtReal, E> {
        Ok(ExtReal(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<ExtReal, E> {
        Ok(ExtReal(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<ExtReal, E> {
        Ok(ExtReal(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<ExtReal, E> {
        match v {
            "inf" => Ok(ExtReal(f64::INFINITY)),
            "-inf" => Ok(ExtReal(f64::NEG_INFINITY)),
            "nan" => Ok(ExtReal(f64::NAN)),
            other => Err(E::custom(format!("bad extended real '{other}'"))),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<ExtReal, D::Error> {
        d.deserialize_any(ExtRealVisitor)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub value: ExtReal,
    /// How the value was obtained (e.g. "dynkin-recursion", "spectral").
    pub route: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<ExtReal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<ExtReal>,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub check: String,
    pub model: String,
    pub inputs: BTreeMap<String, String>,
    pub quantities: Vec<Quantity>,
    pub assertions: Vec<Assertion>,
}

impl VerificationReport {
    pub fn new(check: &str, model: &str) -> Self {
        VerificationReport {
            schema_version: 1,
            check: check.to_string(),
            model: model.to_string(),
            inputs: BTreeMap::new(),
            quantities: Vec::new(),
            assertions: Vec::new(),
        }
    }

    pub fn input(&mut self, key: &str, value: impl ToString) {
        self.inputs.insert(key.to_string(), value.to_string());
    }

    pub fn quantity(&mut self, name: &str, value: f64, route: &str) {
        self.quantities.push(Quantity {
            name: name.to_string(),
            value: ExtReal(value),
            route: route.to_string(),
        });
    }

    pub fn get_quantity(&self, name: &str) -> Option<f64> {
        self.quantities
            .iter()
            .find(|q| q.name == name)
            .map(|q| q.value.0)
    }

    /// Relative agreement |value - reference| <= rel_tol * scale, where
    /// scale is the larger magnitude. Two equal infinities agree; a
    /// finite value never agrees with an infinite one.
    pub fn assert_close(&mut self, name: &str, value: f64, reference: f64, rel_tol: f64) -> bool {
        let passed = if value.is_infinite() || reference.is_infinite() {
            value == reference
        } else {
            let scale = value.abs().max(reference.abs()).max(1e-300);
            (value - reference).abs() <= rel_tol * scale
        };
        let detail = if passed {
            format!("{value} matches {reference} within relative {rel_tol}")
        } else {
            format!("{value} deviates from {reference} beyond relative {rel_tol}")
        };
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            lhs: Some(ExtReal(value)),
            rhs: Some(ExtReal(reference)),
            tolerance: rel_tol,
            detail,
        });
        passed
    }

    /// One-sided bound lhs <= rhs with a relative slack floor: passes when
    /// (rhs - lhs) / max(|lhs|, |rhs|, 1) >= -slack_tol. Infinite rhs
    /// always passes; infinite lhs against finite rhs always fails.
    pub fn assert_le(&mut self, name: &str, lhs: f64, rhs: f64, slack_tol: f64) -> bool {
        let (passed, slack) = if rhs == f64::INFINITY {
            (true, f64::INFINITY)
        } else if lhs == f64::INFINITY {
            (false, f64::NEG_INFINITY)
        } else {
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            let slack = (rhs - lhs) / scale;
            (slack >= -slack_tol, slack)
        };
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            lhs: Some(ExtReal(lhs)),
            rhs: Some(ExtReal(rhs)),
            tolerance: slack_tol,
            detail: format!("relative slack {slack:e}"),
        });
        passed
    }

    /// A yes/no condition with no numeric pair attached.
    pub fn assert_flag(&mut self, name: &str, passed: bool, detail: &str) -> bool {
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            lhs: None,
            rhs: None,
            tolerance: 0.0,
            detail: detail.to_string(),
        });
        passed
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// A rectangular numeric table with named columns, written as plain CSV.
/// Values print in Rust's shortest round-trip form, so files are
/// reproducible bit for bit.
#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// What a single check hands back: the report plus an optional curve
/// table for the companion CSV file.
#[derive(Clone, Debug)]
pub struct CheckOutput {
    pub report: VerificationReport,
    pub curve: Option<CsvTable>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_reals_round_trip() {
        for v in [1.5, 0.0, -3.25] {
            let json = serde_json::to_string(&ExtReal(v)).unwrap();
            let back: ExtReal = serde_json::from_str(&json).unwrap();
            assert_eq!(back.0, v);
        }
        let json = serde_json::to_string(&ExtReal(f64::INFINITY)).unwrap();
        assert_eq!(json, "\"inf\"");
        let back: ExtReal = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(back.0, f64::INFINITY);
        let back: ExtReal = serde_json::from_str("\"-inf\"").unwrap();
        assert_eq!(back.0, f64::NEG_INFINITY);
        assert!(serde_json::from_str::<ExtReal>("\"wide\"").is_err());
    }

    #[test]
    fn report_assertions_accumulate() {
        let mut r = VerificationReport::new("demo", "BM2");
        r.input("n", 100);
        assert!(r.assert_close("close", 1.0, 1.0 + 1e-9, 1e-6));
        assert!(r.assert_le("bound", 0.5, 0.5 - 1e-14, 1e-10));
        assert!(r.assert_close("both_infinite", f64::INFINITY, f64::INFINITY, 1e-6));
        assert!(!r.assert_close("finite_vs_infinite", 1.0, f64::INFINITY, 1e-6));
        assert!(!r.passed());
        let json = r.to_json();
        assert!(json.contains("\"schema_version\": 1"));
        assert!(!json.contains("runtime"));
        let back: VerificationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.assertions.len(), 4);
        assert_eq!(back.inputs["n"], "100");
    }

    #[test]
    fn le_assertion_handles_slack_and_infinity() {
        let mut r = VerificationReport::new("demo", "OU");
        assert!(r.assert_le("tiny_violation_ok", 1.0 + 1e-13, 1.0, 1e-12));
        assert!(!r.assert_le("real_violation", 1.1, 1.0, 1e-12));
        assert!(r.assert_le("infinite_bound", 123.0, f64::INFINITY, 1e-12));
        assert!(!r.assert_le("infinite_lhs", f64::INFINITY, 10.0, 1e-12));
    }

    #[test]
    fn csv_is_stable_text() {
        let mut t = CsvTable::new(&["series", "x", "y"]);
        t.push(vec![0.0, 1.0, 0.125]);
        t.push(vec![0.0, 2.0, 1e-9]);
        assert_eq!(t.to_csv(), "series,x,y\n0,1,0.125\n0,2,0.000000001\n");
    }
}
