//! JSON run reports.
//!
//! Floating-point numbers are written in scientific notation with 17
//! significant digits so every value survives a text round trip.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::eval::PerformanceEstimate;
use crate::select::{CvResult, PemCurve};
use crate::sim::{ExchangeabilityDemo, NestedStudy, Table1Report};

pub const SCHEMA_VERSION: u32 = 1;
/// Name of the only non-reproducible report field.
pub const TIMESTAMP_FIELD: &str = "generated_unix_time";

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientEntry {
    pub term: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub n_rows: Option<usize>,
    pub n_source: Option<usize>,
    pub n_target: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub membership_train_coefficients: Option<Vec<CoefficientEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub membership_test_coefficients: Option<Vec<CoefficientEntry>>,
    /// Smallest fitted `Pr[S=1|X]` among target test rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_target_source_probability: Option<f64>,
    pub positivity_warning: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Everything a subcommand produced, plus the configuration that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_spec: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighting_mode: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<CoefficientEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub estimates: Vec<PerformanceEstimate>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pem: Option<PemCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table1: Option<Table1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exchangeability: Option<ExchangeabilityDemo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nested: Option<NestedStudy>,
    pub generated_unix_time: u64,
}

impl Report {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            model_spec: None,
            weighting_mode: None,
            coefficients: Vec::new(),
            estimates: Vec::new(),
            diagnostics: Diagnostics::default(),
            cv: None,
            pem: None,
            table1: None,
            exchangeability: None,
            nested: None,
            generated_unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}

/// Pretty-printing formatter that writes `f64` with 17 significant digits.
struct FullPrecision<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.inner.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// Serializes with the full-precision formatter.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let formatter = FullPrecision {
        inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
    value.serialize(&mut ser).expect("report serializes");
    out.push(b'\n');
    String::from_utf8(out).expect("json is utf-8")
}

/// Report text with the timestamp line removed, for reproducibility checks.
pub fn without_timestamp(json: &str) -> String {
    json.lines()
        .filter(|l| !l.trim_start().starts_with(&format!("\"{TIMESTAMP_FIELD}\"")))
        .collect::<Vec<_>>()
        .join("\n")
}
