//! Declarative feature maps over named covariates.
//!
//! A spec is a comma-separated list of terms. Each term is `1` (intercept)
//! or a product of factors joined by `:`, where a factor is a column name
//! optionally raised to a power with `^k`. `x2` is accepted as shorthand for
//! `x^2` when `x2` is not itself a column name.
//!
//! ```
//! use predtransport::ModelSpec;
//! let spec: ModelSpec = "1,x,x^2".parse().unwrap();
//! assert_eq!(spec.to_string(), "1,x,x^2");
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TransportDataset;
use crate::glm::DesignMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("empty model spec")]
    Empty,
    #[error("malformed term `{0}`")]
    MalformedTerm(String),
    #[error("unknown column `{column}` in term `{term}`")]
    UnknownColumn { column: String, term: String },
    #[error("duplicate term `{0}`")]
    DuplicateTerm(String),
}

/// Outcome family of the fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Gaussian,
    Bernoulli,
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" => Ok(Family::Bernoulli),
            other => Err(format!("unknown family `{other}`")),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Factor {
    column: String,
    power: u32,
}

/// One column of the design: a product of powered covariates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    factors: Vec<Factor>,
}

impl Term {
    pub fn intercept() -> Self {
        Self { factors: vec![] }
    }

    pub fn column(name: &str) -> Self {
        Self::power(name, 1)
    }

    pub fn power(name: &str, power: u32) -> Self {
        Self {
            factors: vec![Factor {
                column: name.to_string(),
                power,
            }],
        }
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }

    fn parse(raw: &str, columns: Option<&[String]>) -> Result<Self, SpecError> {
        let raw = raw.trim();
        if raw == "1" {
            return Ok(Self::intercept());
        }
        let mut factors = Vec::new();
        for part in raw.split(':') {
            let part = part.trim();
            let (column, power) = match part.split_once('^') {
                Some((c, p)) => {
                    let power = p
                        .trim()
                        .parse::<u32>()
                        .map_err(|_| SpecError::MalformedTerm(raw.into()))?;
                    (c.trim().to_string(), power)
                }
                None => split_trailing_power(part, columns),
            };
            if column.is_empty() || power == 0 {
                return Err(SpecError::MalformedTerm(raw.into()));
            }
            factors.push(Factor { column, power });
        }
        Ok(Self { factors })
    }

    fn evaluate(&self, lookup: &dyn Fn(&str) -> f64) -> f64 {
        self.factors
            .iter()
            .map(|f| lookup(&f.column).powi(f.power as i32))
            .product()
    }
}

/// `x2` means `x^2` only when `x2` is not a known column but `x` is; without
/// a column list the literal name is kept.
fn split_trailing_power(part: &str, columns: Option<&[String]>) -> (String, u32) {
    if let Some(cols) = columns {
        if !cols.iter().any(|c| c == part) {
            let stem = part.trim_end_matches(|c: char| c.is_ascii_digit());
            if stem.len() < part.len() && cols.iter().any(|c| c == stem) {
                if let Ok(power) = part[stem.len()..].parse() {
                    return (stem.to_string(), power);
                }
            }
        }
    }
    (part.to_string(), 1)
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|fa| match fa.power {
                1 => fa.column.clone(),
                k => format!("{}^{k}", fa.column),
            })
            .collect();
        f.write_str(&parts.join(":"))
    }
}

/// Feature map plus outcome family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    terms: Vec<Term>,
    pub family: Family,
}

impl ModelSpec {
    pub fn new(terms: Vec<Term>, family: Family) -> Result<Self, SpecError> {
        if terms.is_empty() {
            return Err(SpecError::Empty);
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(SpecError::DuplicateTerm(t.to_string()));
            }
        }
        Ok(Self { terms, family })
    }

    /// Parses a spec, resolving `x2`-style shorthand against `columns`.
    pub fn parse_with_columns(
        text: &str,
        family: Family,
        columns: &[String],
    ) -> Result<Self, SpecError> {
        Self::parse_impl(text, family, Some(columns))
    }

    fn parse_impl(text: &str, family: Family, columns: Option<&[String]>) -> Result<Self, SpecError> {
        let terms = text
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| Term::parse(t, columns))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(terms, family)
    }

    pub fn intercept_only() -> Self {
        Self {
            terms: vec![Term::intercept()],
            family: Family::Gaussian,
        }
    }

    /// Intercept plus every named column.
    pub fn main_effects(columns: &[String]) -> Self {
        let mut terms = vec![Term::intercept()];
        terms.extend(columns.iter().map(|c| Term::column(c)));
        Self {
            terms,
            family: Family::Gaussian,
        }
    }

    /// Intercept and powers `1..=degree` of a single column.
    pub fn polynomial(column: &str, degree: u32) -> Self {
        let mut terms = vec![Term::intercept()];
        terms.extend((1..=degree).map(|k| Term::power(column, k)));
        Self {
            terms,
            family: Family::Gaussian,
        }
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(Term::to_string).collect()
    }

    /// Column names referenced by the spec.
    pub fn columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for f in self.terms.iter().flat_map(|t| &t.factors) {
            if !out.contains(&f.column.as_str()) {
                out.push(&f.column);
            }
        }
        out
    }

    /// Rejects references to columns not in `names`.
    pub fn check_columns(&self, names: &[String]) -> Result<(), SpecError> {
        for t in &self.terms {
            for f in &t.factors {
                if !names.iter().any(|n| n == &f.column) {
                    return Err(SpecError::UnknownColumn {
                        column: f.column.clone(),
                        term: t.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Feature vector for one covariate row laid out as `names`.
    pub fn features(&self, names: &[String], row: &[f64]) -> Result<Vec<f64>, SpecError> {
        self.check_columns(names)?;
        let lookup = |c: &str| row[names.iter().position(|n| n == c).expect("checked")];
        Ok(self.terms.iter().map(|t| t.evaluate(&lookup)).collect())
    }

    /// Design matrix over the given dataset rows.
    pub fn design(&self, ds: &TransportDataset, rows: &[usize]) -> Result<DesignMatrix, SpecError> {
        self.check_columns(ds.covariate_names())?;
        let index: Vec<Vec<(usize, i32)>> = self
            .terms
            .iter()
            .map(|t| {
                t.factors
                    .iter()
                    .map(|f| (ds.column_index(&f.column).expect("checked"), f.power as i32))
                    .collect()
            })
            .collect();
        let matrix = DMatrix::from_fn(rows.len(), self.terms.len(), |r, j| {
            index[j]
                .iter()
                .map(|&(c, k)| ds.value(rows[r], c).powi(k))
                .product()
        });
        Ok(DesignMatrix {
            names: self.term_names(),
            matrix,
        })
    }
}

impl FromStr for ModelSpec {
    type Err = SpecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_impl(s, Family::Gaussian, None)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.term_names().join(","))
    }
}
