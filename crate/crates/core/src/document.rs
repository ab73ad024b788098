//! Versioned JSON form of fitted models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::methods::{Fitted, Method};
use crate::model::{CoefficientVector, EnsembleWeights, Standardizer};
use crate::stacking::{ensemble_predict, CoefficientMatrix, Lambdas, LinearModel, Variant};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Learner {
    pub id: String,
    /// Intercept first, on the standardized scale.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format_version: u32,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default)]
    pub lambdas: Lambdas,
    pub standardizer: Standardizer,
    pub learners: Vec<Learner>,
    /// Absent for single linear models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<EnsembleWeights>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

fn learners(b: &CoefficientMatrix) -> Vec<Learner> {
    b.ids()
        .iter()
        .zip(b.columns())
        .map(|(id, c)| Learner { id: id.clone(), coefficients: c.iter().copied().collect() })
        .collect()
}

impl ModelDocument {
    pub fn from_fitted(method: Method, fitted: &Fitted) -> Self {
        let base = |standardizer: &Standardizer| ModelDocument {
            format_version: FORMAT_VERSION,
            method: method.label(),
            variant: None,
            eta: None,
            mu: None,
            lambdas: Lambdas::default(),
            standardizer: standardizer.clone(),
            learners: Vec::new(),
            weights: None,
            objective_trace: Vec::new(),
            converged: None,
        };
        match fitted {
            Fitted::Mss(m) => ModelDocument {
                variant: Some(m.variant.clone()),
                mu: Some(m.mu),
                lambdas: m.lambdas.clone(),
                learners: learners(&m.coefficients),
                weights: Some(m.weights.clone()),
                ..base(&m.standardizer)
            },
            Fitted::Oec(m) => ModelDocument {
                variant: Some(m.variant.clone()),
                eta: Some(m.eta),
                mu: Some(m.mu),
                lambdas: m.lambdas.clone(),
                learners: learners(&m.coefficients),
                weights: Some(m.weights.clone()),
                objective_trace: m.objective_trace.clone(),
                converged: Some(m.converged),
                ..base(&m.standardizer)
            },
            Fitted::Linear(m) => ModelDocument {
                learners: vec![Learner { id: method.label(), coefficients: m.beta.0.iter().copied().collect() }],
                ..base(&m.standardizer)
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(invalid(
                "format_version",
                format!("unsupported version {} (expected {FORMAT_VERSION})", doc.format_version),
            ));
        }
        Ok(doc)
    }

    fn coefficient_matrix(&self) -> Result<CoefficientMatrix> {
        CoefficientMatrix::new(
            self.learners.iter().map(|l| l.id.clone()).collect(),
            self.learners.iter().map(|l| DVector::from_vec(l.coefficients.clone())).collect(),
        )
    }

    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        match &self.weights {
            Some(w) => ensemble_predict(&self.standardizer, &self.coefficient_matrix()?, w, x_new),
            None => {
                let [l] = self.learners.as_slice() else {
                    return Err(Error::Parse("a model without weights needs exactly one learner".into()));
                };
                LinearModel {
                    standardizer: self.standardizer.clone(),
                    beta: CoefficientVector(DVector::from_vec(l.coefficients.clone())),
                    lambda: 0.0,
                    rank_deficient: false,
                }
                .predict(x_new)
            }
        }
    }
}
