//! Prediction models tailored to the target population.
//!
//! The inverse-odds mode follows three steps on the training partition:
//! fit the membership model on all training rows, turn it into inverse-odds
//! weights for the source training rows, and fit the outcome model on those
//! rows with the weights. Target rows never enter the outcome fit.

use serde::{Deserialize, Serialize};

use crate::data::{SplitAssignment, TransportDataset};
use crate::error::{Error, Result};
use crate::glm::{self, fit_weighted_linear, fit_weighted_logistic};
use crate::model_spec::{Family, ModelSpec};
use crate::weighting::{fit_membership_on_rows, MembershipModel, Subset};

/// Version of the plain-text fitted-model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingMode {
    #[default]
    Unweighted,
    InverseOdds,
}

impl std::str::FromStr for WeightingMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "unweighted" => Ok(Self::Unweighted),
            "inverse-odds" => Ok(Self::InverseOdds),
            other => Err(format!("unknown weighting mode `{other}`")),
        }
    }
}

impl std::fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Unweighted => "unweighted",
            Self::InverseOdds => "inverse-odds",
        })
    }
}

/// Options for the inverse-odds fitting path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitOptions {
    /// Membership feature map; `None` means main effects of every covariate.
    pub membership_spec: Option<ModelSpec>,
    /// Optional upper-quantile cap on training weights.
    pub truncation: Option<f64>,
}

impl FitOptions {
    pub fn membership_spec_for(&self, ds: &TransportDataset) -> ModelSpec {
        self.membership_spec
            .clone()
            .unwrap_or_else(|| ModelSpec::main_effects(ds.covariate_names()))
    }
}

/// Fitted outcome model `g(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    spec: ModelSpec,
    coefficients: Vec<f64>,
    weighting: WeightingMode,
    membership: Option<MembershipModel>,
}

impl FittedModel {
    pub fn new(
        spec: ModelSpec,
        coefficients: Vec<f64>,
        weighting: WeightingMode,
        membership: Option<MembershipModel>,
    ) -> Result<Self> {
        if coefficients.len() != spec.len() {
            return Err(Error::Model(format!(
                "{} coefficients for {} terms",
                coefficients.len(),
                spec.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Model("non-finite coefficient".into()));
        }
        match (weighting, &membership) {
            (WeightingMode::InverseOdds, Some(m)) if m.fitted_on == Subset::Train => {}
            (WeightingMode::InverseOdds, _) => {
                return Err(Error::Model(
                    "inverse-odds fit requires a membership model fitted on training rows".into(),
                ))
            }
            (WeightingMode::Unweighted, Some(_)) => {
                return Err(Error::Model("unweighted fit carries no membership model".into()))
            }
            (WeightingMode::Unweighted, None) => {}
        }
        Ok(Self {
            spec,
            coefficients,
            weighting,
            membership,
        })
    }

    /// An externally developed model, treated as unweighted.
    pub fn established(spec: ModelSpec, coefficients: Vec<f64>) -> Result<Self> {
        Self::new(spec, coefficients, WeightingMode::Unweighted, None)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn weighting(&self) -> WeightingMode {
        self.weighting
    }

    pub fn membership(&self) -> Option<&MembershipModel> {
        self.membership.as_ref()
    }

    /// Predictions on dataset rows; probabilities for the Bernoulli family.
    pub fn predict(&self, ds: &TransportDataset, rows: &[usize]) -> Result<Vec<f64>> {
        let design = self.spec.design(ds, rows)?;
        let eta = design.linear_predictor(&self.coefficients)?;
        Ok(self.link(eta))
    }

    /// Prediction for one covariate row laid out as `names`.
    pub fn predict_point(&self, names: &[String], row: &[f64]) -> Result<f64> {
        let x = self.spec.features(names, row)?;
        let eta: f64 = x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum();
        Ok(self.link(vec![eta])[0])
    }

    fn link(&self, eta: Vec<f64>) -> Vec<f64> {
        match self.spec.family {
            Family::Gaussian => eta,
            Family::Bernoulli => eta.into_iter().map(glm::expit).collect(),
        }
    }

    /// Serializes to the versioned plain-text model document.
    pub fn to_document(&self) -> String {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            spec: self.spec.to_string(),
            family: self.spec.family,
            weighting: self.weighting,
            coefficients: self
                .spec
                .term_names()
                .into_iter()
                .zip(&self.coefficients)
                .map(|(term, &value)| Coefficient { term, value })
                .collect(),
            membership: self.membership.as_ref().map(|m| MembershipDocument {
                spec: m.spec.to_string(),
                coefficients: m.logistic.coefficients.clone(),
            }),
        };
        toml::to_string(&doc).expect("model document serializes")
    }

    /// Parses a document written by [`FittedModel::to_document`].
    pub fn from_document(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            toml::from_str(text).map_err(|e| Error::Model(format!("bad model document: {e}")))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        let spec: ModelSpec = doc.spec.parse::<ModelSpec>()?.with_family(doc.family);
        if spec.term_names() != doc.coefficients.iter().map(|c| c.term.clone()).collect::<Vec<_>>() {
            return Err(Error::Model("coefficient terms do not match the spec".into()));
        }
        let membership = match doc.membership {
            Some(m) => Some(MembershipModel::from_coefficients(
                m.spec.parse()?,
                m.coefficients,
                Subset::Train,
            )),
            None => None,
        };
        Self::new(
            spec,
            doc.coefficients.iter().map(|c| c.value).collect(),
            doc.weighting,
            membership,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    spec: String,
    family: Family,
    weighting: WeightingMode,
    coefficients: Vec<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    membership: Option<MembershipDocument>,
}

#[derive(Serialize, Deserialize)]
struct Coefficient {
    term: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct MembershipDocument {
    spec: String,
    coefficients: Vec<f64>,
}

/// Fits the outcome model on the training partition of `split`.
pub fn fit_transported(
    ds: &TransportDataset,
    split: &SplitAssignment,
    spec: &ModelSpec,
    mode: WeightingMode,
    options: &FitOptions,
) -> Result<FittedModel> {
    fit_transported_on_rows(ds, &split.train_rows(), spec, mode, options)
}

/// Fits the outcome model treating `train_rows` as the training partition.
pub fn fit_transported_on_rows(
    ds: &TransportDataset,
    train_rows: &[usize],
    spec: &ModelSpec,
    mode: WeightingMode,
    options: &FitOptions,
) -> Result<FittedModel> {
    let source: Vec<usize> = train_rows.iter().copied().filter(|&i| ds.is_source(i)).collect();
    if source.len() < spec.len() {
        return Err(Error::Model(format!(
            "{} source training rows for {} coefficients",
            source.len(),
            spec.len()
        )));
    }
    let (weights, membership) = match mode {
        WeightingMode::Unweighted => (vec![1.0; source.len()], None),
        WeightingMode::InverseOdds => {
            let mspec = options.membership_spec_for(ds);
            let mm = fit_membership_on_rows(ds, train_rows, Subset::Train, &mspec)?;
            let w = mm.inverse_odds(ds, &source, options.truncation)?;
            (w.values, Some(mm))
        }
    };
    let coefficients = fit_outcome(ds, &source, spec, &weights)?;
    FittedModel::new(spec.clone(), coefficients, mode, membership)
}

/// Weighted outcome regression on source rows.
pub fn fit_outcome(
    ds: &TransportDataset,
    source_rows: &[usize],
    spec: &ModelSpec,
    weights: &[f64],
) -> Result<Vec<f64>> {
    let design = spec.design(ds, source_rows)?;
    let y: Vec<f64> = source_rows
        .iter()
        .map(|&i| ds.outcome(i).expect("source rows carry outcomes"))
        .collect();
    Ok(match spec.family {
        Family::Gaussian => fit_weighted_linear(&design, &y, weights)?.coefficients,
        Family::Bernoulli => {
            let fit = fit_weighted_logistic(&design, &y, weights)?;
            if !fit.converged {
                return Err(Error::Model(format!(
                    "outcome logistic fit did not converge (gradient {:e})",
                    fit.final_gradient_norm
                )));
            }
            fit.coefficients
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DesignKind;
    use nalgebra::DMatrix;

    fn small() -> TransportDataset {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let s = [true, true, true, true, false, true, false, false];
        let y = x
            .iter()
            .zip(&s)
            .map(|(&x, &s)| s.then_some(1.0 + x + 0.5 * x * x))
            .collect();
        TransportDataset::new(
            vec!["x".into()],
            DMatrix::from_column_slice(8, 1, &x),
            y,
            s.to_vec(),
            DesignKind::NonNested,
        )
        .unwrap()
    }

    #[test]
    fn exact_quadratic_is_recovered_in_both_modes() {
        let ds = small();
        let split = SplitAssignment::from_train_flags(vec![true; 8], 0);
        let spec = ModelSpec::polynomial("x", 2);
        for mode in [WeightingMode::Unweighted, WeightingMode::InverseOdds] {
            let fit = fit_transported(&ds, &split, &spec, mode, &FitOptions::default()).unwrap();
            for (c, t) in fit.coefficients().iter().zip([1.0, 1.0, 0.5]) {
                assert!((c - t).abs() < 1e-9, "{mode}: {c} vs {t}");
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let ds = small();
        let split = SplitAssignment::from_train_flags(vec![true; 8], 0);
        let fit = fit_transported(
            &ds,
            &split,
            &ModelSpec::polynomial("x", 1),
            WeightingMode::InverseOdds,
            &FitOptions::default(),
        )
        .unwrap();
        let doc = fit.to_document();
        assert!(doc.contains("format_version = 1"));
        let back = FittedModel::from_document(&doc).unwrap();
        assert_eq!(back.coefficients(), fit.coefficients());
        assert_eq!(back.weighting(), WeightingMode::InverseOdds);
        assert_eq!(back.spec(), fit.spec());
    }

    #[test]
    fn invariants_on_construction() {
        let spec = ModelSpec::polynomial("x", 1);
        assert!(FittedModel::established(spec.clone(), vec![1.0]).is_err());
        assert!(FittedModel::new(spec.clone(), vec![1.0, 2.0], WeightingMode::InverseOdds, None).is_err());
        let test_mm = MembershipModel::from_coefficients(ModelSpec::intercept_only(), vec![0.0], Subset::Test);
        assert!(FittedModel::new(spec, vec![1.0, 2.0], WeightingMode::InverseOdds, Some(test_mm)).is_err());
    }

    #[test]
    fn bernoulli_predictions_are_probabilities() {
        let spec: ModelSpec = "1,x".parse::<ModelSpec>().unwrap().with_family(Family::Bernoulli);
        let fit = FittedModel::established(spec, vec![0.0, 1.0]).unwrap();
        let p = fit.predict_point(&["x".into()], &[0.0]).unwrap();
        assert_eq!(p, 0.5);
    }
}
