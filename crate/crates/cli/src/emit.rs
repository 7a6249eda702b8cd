use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{ConfigError, Format};

pub const CSV_HEADER: &str = "scenario,params,trials,empirical_error,ci_low,ci_high,ideal_error,bound,method,margin,seed,walltime_ms";

/// One result line. Field order is the CSV column order. Floats are stored
/// already rounded to 12 significant digits so CSV and JSON agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub params: String,
    pub trials: Option<u64>,
    pub empirical_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub ideal_error: Option<f64>,
    pub bound: Option<f64>,
    pub method: String,
    /// `bound − empirical_error` when both are present.
    pub margin: Option<f64>,
    pub seed: u64,
    pub walltime_ms: u64,
}

impl ResultRow {
    pub fn new(scenario: impl Into<String>, params: impl Into<String>, method: impl Into<String>, seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            params: params.into(),
            trials: None,
            empirical_error: None,
            ci_low: None,
            ci_high: None,
            ideal_error: None,
            bound: None,
            method: method.into(),
            margin: None,
            seed,
            walltime_ms: 0,
        }
    }

    /// Rounds every float and fills `margin` from the rounded fields.
    pub fn finish(mut self) -> Self {
        for v in [&mut self.empirical_error, &mut self.ci_low, &mut self.ci_high, &mut self.ideal_error, &mut self.bound] {
            *v = v.map(sig12);
        }
        self.margin = match (self.bound, self.empirical_error) {
            (Some(b), Some(e)) => Some(sig12(b - e)),
            _ => self.margin.map(sig12),
        };
        self
    }
}

/// Rounds to 12 significant digits.
pub fn sig12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

pub fn emit_to_string(rows: &[ResultRow], format: Format) -> Result<String, ConfigError> {
    if rows.is_empty() {
        return Err(ConfigError::Usage("no rows to emit".into()));
    }
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| ConfigError::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows)?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Writes rows to `path`, or to stdout when `path` is `None`.
pub fn emit(rows: &[ResultRow], format: Format, path: Option<&Path>) -> Result<(), ConfigError> {
    let text = emit_to_string(rows, format)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(sig12(0.1234567890123456), 0.123456789012);
        assert_eq!(sig12(123456.7890123456), 123456.789012);
        assert_eq!(sig12(0.0), 0.0);
        assert!(sig12(f64::NAN).is_nan());
    }
}
