//! Result tables and their JSON / CSV encodings.
//!
//! Rows are in long format, one value per (design point, method, statistic).
//! Non-finite values are written as the strings `inf`, `-inf` and `nan`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Serialize, Serializer};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::Result;

fn ser_value<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&fmt_value(*v))
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

/// A design point. Unused coordinates are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Point {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub prior: Option<String>,
    #[serde(rename = "S")]
    pub s: Option<usize>,
    /// Observation index for per-observation rows.
    pub obs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    #[serde(flatten)]
    pub point: Point,
    pub method: String,
    pub statistic: String,
    #[serde(serialize_with = "ser_value")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    #[serde(flatten)]
    pub point: Point,
    pub method: Option<String>,
    pub replicate: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub config_echo: BTreeMap<String, String>,
    pub results: Vec<Row>,
    pub failures: Vec<Failure>,
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
}

impl ResultTable {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let versions = [
            ("loomix", env!("CARGO_PKG_VERSION")),
            ("loomix-core", loomix_core::VERSION),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            config_echo: cfg.echo().clone(),
            results: Vec::new(),
            failures: Vec::new(),
            versions,
            seed: cfg.seed,
        }
    }

    pub fn push(&mut self, point: &Point, method: &str, statistic: &str, value: f64) {
        self.results.push(Row {
            point: point.clone(),
            method: method.to_string(),
            statistic: statistic.to_string(),
            value,
        });
    }

    /// Rows matching `method` and `statistic`, in insertion order.
    pub fn select<'a>(&'a self, method: &'a str, statistic: &'a str) -> impl Iterator<Item = &'a Row> {
        self.results
            .iter()
            .filter(move |r| r.method == method && r.statistic == statistic)
    }

    /// The unique value at `point` for `method` / `statistic`.
    pub fn value(&self, point: &Point, method: &str, statistic: &str) -> Option<f64> {
        self.select(method, statistic)
            .find(|r| &r.point == point)
            .map(|r| r.value)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::CliError::Output(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// The result rows only; failures are counted in `failures` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(["n", "p", "prior", "S", "obs", "method", "statistic", "value"])
            .map_err(csv_err)?;
        for r in &self.results {
            w.write_record([
                opt(r.point.n),
                opt(r.point.p),
                r.point.prior.clone().unwrap_or_default(),
                opt(r.point.s),
                opt(r.point.obs),
                r.method.clone(),
                r.statistic.clone(),
                fmt_value(r.value),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| csv_err(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }

    /// Writes to `cfg.out`, or to stdout when no path is set.
    pub fn emit(&self, cfg: &ExperimentConfig) -> Result<()> {
        let text = self.render(cfg.format)?;
        match &cfg.out {
            Some(path) => std::fs::write(path, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn csv_err(e: impl std::fmt::Display) -> crate::error::CliError {
    crate::error::CliError::Output(e.to_string())
}
