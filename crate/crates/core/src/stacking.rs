//! Two-stage multi-study stacking and the single-model references.
//!
//! Stage A fits one ridge learner per study; stage B regresses the outcome on
//! the learners' predictions with penalized NNLS. The three variants differ
//! only in which rows and columns enter stage B.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    build_design, concatenate, fit_standardizer, nnls_fit, ridge_fit, CoefficientVector,
    DesignMatrix, EnsembleWeights, PenaltyMask, Standardizer, Study,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "snake_case")]
pub enum Variant {
    Generalist,
    Specialist(String),
    SpecialistNoReuse(String),
}

/// Variant without its target, used to name methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantKind {
    Generalist,
    Specialist,
    SpecialistNoReuse,
}

impl VariantKind {
    pub fn suffix(self) -> &'static str {
        match self {
            VariantKind::Generalist => "G",
            VariantKind::Specialist => "S",
            VariantKind::SpecialistNoReuse => "SN",
        }
    }

    pub fn with_target(self, target: Option<&str>) -> Result<Variant> {
        match (self, target) {
            (VariantKind::Generalist, _) => Ok(Variant::Generalist),
            (VariantKind::Specialist, Some(t)) => Ok(Variant::Specialist(t.to_string())),
            (VariantKind::SpecialistNoReuse, Some(t)) => {
                Ok(Variant::SpecialistNoReuse(t.to_string()))
            }
            (_, None) => Err(invalid("variant", "specialist variants need a target study")),
        }
    }
}

impl Variant {
    pub fn kind(&self) -> VariantKind {
        match self {
            Variant::Generalist => VariantKind::Generalist,
            Variant::Specialist(_) => VariantKind::Specialist,
            Variant::SpecialistNoReuse(_) => VariantKind::SpecialistNoReuse,
        }
    }

    pub fn target(&self) -> Option<&str> {
        match self {
            Variant::Generalist => None,
            Variant::Specialist(t) | Variant::SpecialistNoReuse(t) => Some(t),
        }
    }

    /// Index of the target study, checking variant feasibility.
    pub fn target_index(&self, studies: &[Study]) -> Result<Option<usize>> {
        if studies.is_empty() {
            return Err(Error::InsufficientData("no studies supplied".into()));
        }
        let Some(target) = self.target() else {
            return Ok(None);
        };
        let idx = studies
            .iter()
            .position(|s| s.id() == target)
            .ok_or_else(|| Error::UnknownStudy(target.to_string()))?;
        if matches!(self, Variant::SpecialistNoReuse(_)) && studies.len() < 2 {
            return Err(Error::InsufficientData(
                "no-data-reuse specialist needs at least two studies".into(),
            ));
        }
        Ok(Some(idx))
    }

    /// Studies that contribute a learner (everything but the target for SN).
    pub fn contributing<'a>(&self, studies: &'a [Study]) -> Vec<&'a Study> {
        match self {
            Variant::SpecialistNoReuse(t) => studies.iter().filter(|s| s.id() != t).collect(),
            _ => studies.iter().collect(),
        }
    }

    pub(crate) fn contributing_owned(&self, studies: &[Study]) -> Vec<Study> {
        self.contributing(studies).into_iter().cloned().collect()
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

/// Per-study ridge penalties.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lambdas(pub BTreeMap<String, f64>);

impl Lambdas {
    pub fn uniform(studies: &[Study], lambda: f64) -> Self {
        Lambdas(studies.iter().map(|s| (s.id().to_string(), lambda)).collect())
    }

    pub fn get(&self, id: &str) -> Result<f64> {
        self.0
            .get(id)
            .copied()
            .ok_or_else(|| invalid("lambdas", format!("no penalty for study `{id}`")))
    }

    pub fn insert(&mut self, id: impl Into<String>, lambda: f64) {
        self.0.insert(id.into(), lambda);
    }
}

/// Per-study coefficient columns, intercept first in each.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    ids: Vec<String>,
    columns: Vec<DVector<f64>>,
}

impl CoefficientMatrix {
    pub fn new(ids: Vec<String>, columns: Vec<DVector<f64>>) -> Result<Self> {
        if ids.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                context: "coefficient matrix ids",
                expected: columns.len(),
                actual: ids.len(),
            });
        }
        if let Some(first) = columns.first() {
            if let Some(bad) = columns.iter().find(|c| c.len() != first.len()) {
                return Err(Error::DimensionMismatch {
                    context: "coefficient column length",
                    expected: first.len(),
                    actual: bad.len(),
                });
            }
        }
        Ok(CoefficientMatrix { ids, columns })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[DVector<f64>] {
        &self.columns
    }

    pub fn column(&self, id: &str) -> Option<&DVector<f64>> {
        self.ids.iter().position(|i| i == id).map(|k| &self.columns[k])
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.columns)
    }

    pub(crate) fn columns_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.columns
    }
}

/// Ridge learner per study, each on its own rows with scale `n_k`.
pub fn fit_ssls(
    studies: &[Study],
    lambdas: &Lambdas,
    standardizer: &Standardizer,
) -> Result<CoefficientMatrix> {
    let mut columns = Vec::with_capacity(studies.len());
    for s in studies {
        let design = build_design(s, Some(standardizer))?;
        let mask = PenaltyMask::intercept_free(design.ncols());
        let fit = ridge_fit(&design, s.y(), lambdas.get(s.id())?, &mask, s.n() as f64)?;
        if fit.rank_deficient {
            log::debug!("study `{}` has a rank-deficient design; using min-norm fit", s.id());
        }
        columns.push(fit.beta.0);
    }
    CoefficientMatrix::new(studies.iter().map(|s| s.id().to_string()).collect(), columns)
}

/// Rows and outcome of the stacking regression for a variant.
pub(crate) fn ensemble_rows(studies: &[Study], variant: &Variant) -> Result<Vec<Study>> {
    match variant.target_index(studies)? {
        None => Ok(studies.to_vec()),
        Some(t) => Ok(vec![studies[t].clone()]),
    }
}

/// Stacked prediction matrix: entry `(i, k)` is learner `k`'s prediction at
/// row `i` of the stacking rows. For the no-reuse variant the target's column
/// is left out even if `b` contains it.
pub fn build_stacked_matrix(
    b: &CoefficientMatrix,
    studies: &[Study],
    variant: &Variant,
    standardizer: &Standardizer,
) -> Result<DMatrix<f64>> {
    let rows = ensemble_rows(studies, variant)?;
    let cols: Vec<usize> = (0..b.ncols())
        .filter(|&k| match variant {
            Variant::SpecialistNoReuse(t) => &b.ids()[k] != t,
            _ => true,
        })
        .collect();
    let (x, _) = concatenate(&rows)?;
    let design = DesignMatrix::from_raw(&x, Some(standardizer))?;
    if design.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "stacked matrix coefficients",
            expected: design.ncols(),
            actual: b.nrows(),
        });
    }
    let mut out = DMatrix::zeros(design.nrows(), cols.len());
    for (j, &k) in cols.iter().enumerate() {
        out.set_column(j, &(design.values() * &b.columns()[k]));
    }
    Ok(out)
}

pub(crate) fn ensemble_outcome(studies: &[Study], variant: &Variant) -> Result<DVector<f64>> {
    Ok(concatenate(&ensemble_rows(studies, variant)?)?.1)
}

/// Fitted two-stage ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MssModel {
    pub coefficients: CoefficientMatrix,
    pub weights: EnsembleWeights,
    pub variant: Variant,
    pub standardizer: Standardizer,
    pub lambdas: Lambdas,
    pub mu: f64,
}

pub fn mss_fit(studies: &[Study], variant: &Variant, lambdas: &Lambdas, mu: f64) -> Result<MssModel> {
    variant.target_index(studies)?;
    let stage_a = variant.contributing_owned(studies);
    let standardizer = fit_standardizer(&stage_a)?;
    let coefficients = fit_ssls(&stage_a, lambdas, &standardizer)?;
    let weights = stack_weights(&coefficients, studies, variant, &standardizer, mu)?;
    Ok(MssModel {
        coefficients,
        weights,
        variant: variant.clone(),
        standardizer,
        lambdas: lambdas.clone(),
        mu,
    })
}

/// Stage B: penalized NNLS of the stacking outcome on the stacked matrix.
pub(crate) fn stack_weights(
    b: &CoefficientMatrix,
    studies: &[Study],
    variant: &Variant,
    standardizer: &Standardizer,
    mu: f64,
) -> Result<EnsembleWeights> {
    let z = build_stacked_matrix(b, studies, variant, standardizer)?;
    let y = ensemble_outcome(studies, variant)?;
    let design = z.insert_column(0, 1.0);
    let fit = nnls_fit(&design, &y, mu, &PenaltyMask::intercept_free(design.ncols()))?;
    let ids = b
        .ids()
        .iter()
        .filter(|id| variant.target() != Some(id.as_str()) || variant.kind() != VariantKind::SpecialistNoReuse)
        .cloned()
        .collect();
    EnsembleWeights::from_fit(ids, &fit)
}

/// `w₀ + Σ_k w_k X β_k` on raw covariates.
pub fn ensemble_predict(
    standardizer: &Standardizer,
    b: &CoefficientMatrix,
    weights: &EnsembleWeights,
    x_new: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let design = DesignMatrix::from_raw(x_new, Some(standardizer))?;
    if design.ncols() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "ensemble prediction covariates",
            expected: b.nrows().saturating_sub(1),
            actual: x_new.ncols(),
        });
    }
    let mut combined = DVector::zeros(b.nrows());
    for (id, &w) in weights.ids.iter().zip(&weights.weights) {
        let beta = b.column(id).ok_or_else(|| Error::UnknownStudy(id.clone()))?;
        combined.axpy(w, beta, 1.0);
    }
    Ok((design.values() * combined).add_scalar(weights.intercept))
}

pub fn mss_predict(model: &MssModel, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensemble_predict(&model.standardizer, &model.coefficients, &model.weights, x_new)
}

/// A single linear model on raw covariates (ToM or SSM).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub standardizer: Standardizer,
    pub beta: CoefficientVector,
    pub lambda: f64,
    pub rank_deficient: bool,
}

impl LinearModel {
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        let design = DesignMatrix::from_raw(x_new, Some(&self.standardizer))?;
        crate::model::predict(&design, &self.beta)
    }
}

/// Trained-on-merged: one ridge fit to the concatenation, scale `N`.
pub fn tom_fit(studies: &[Study], lambda: f64) -> Result<LinearModel> {
    let standardizer = fit_standardizer(studies)?;
    let (x, y) = concatenate(studies)?;
    linear_fit(&x, &y, lambda, standardizer)
}

/// Study-specific model: ridge on the study alone, scale `n_k`.
pub fn ssm_fit(study: &Study, lambda: f64) -> Result<LinearModel> {
    let standardizer = fit_standardizer(std::slice::from_ref(study))?;
    linear_fit(study.x(), study.y(), lambda, standardizer)
}

fn linear_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    standardizer: Standardizer,
) -> Result<LinearModel> {
    let design = DesignMatrix::from_raw(x, Some(&standardizer))?;
    let mask = PenaltyMask::intercept_free(design.ncols());
    let fit = ridge_fit(&design, y, lambda, &mask, y.len() as f64)?;
    Ok(LinearModel {
        standardizer,
        beta: fit.beta,
        lambda,
        rank_deficient: fit.rank_deficient,
    })
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g" | "generalist" => Ok(VariantKind::Generalist),
            "s" | "specialist" => Ok(VariantKind::Specialist),
            "sn" | "specialist-no-reuse" => Ok(VariantKind::SpecialistNoReuse),
            other => Err(invalid("variant", format!("unknown variant `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_study(id: &str, slope: f64, n: usize) -> Study {
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let y = DVector::from_fn(n, |i, _| 1.0 + slope * i as f64 + 0.1 * ((i * 7 % 5) as f64 - 2.0));
        Study::new(id, y, x).unwrap()
    }

    #[test]
    fn specialist_requires_known_target() {
        let s = vec![line_study("a", 1.0, 5)];
        let v = Variant::Specialist("zz".into());
        assert!(matches!(v.target_index(&s), Err(Error::UnknownStudy(_))));
    }

    #[test]
    fn no_reuse_needs_two_studies() {
        let s = vec![line_study("a", 1.0, 5)];
        let v = Variant::SpecialistNoReuse("a".into());
        assert!(v.target_index(&s).is_err());
    }

    #[test]
    fn identical_studies_give_identical_columns() {
        let a = line_study("a", 2.0, 8);
        let b = a.clone().with_id("b");
        let studies = vec![a, b];
        let st = fit_standardizer(&studies).unwrap();
        let bm = fit_ssls(&studies, &Lambdas::uniform(&studies, 0.3), &st).unwrap();
        assert_eq!(bm.columns()[0], bm.columns()[1]);
    }

    #[test]
    fn single_generalist_stacked_matrix_is_fitted_values() {
        let a = line_study("a", 2.0, 8);
        let studies = vec![a.clone()];
        let st = fit_standardizer(&studies).unwrap();
        let bm = fit_ssls(&studies, &Lambdas::uniform(&studies, 0.0), &st).unwrap();
        let z = build_stacked_matrix(&bm, &studies, &Variant::Generalist, &st).unwrap();
        let fitted = build_design(&a, Some(&st)).unwrap().values() * &bm.columns()[0];
        assert_eq!(z.column(0).into_owned(), fitted);
    }

    #[test]
    fn no_reuse_stacked_matrix_drops_target_column() {
        let studies: Vec<Study> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, id)| line_study(id, i as f64, 6))
            .collect();
        let st = fit_standardizer(&studies).unwrap();
        let bm = fit_ssls(&studies, &Lambdas::uniform(&studies, 0.1), &st).unwrap();
        let z = build_stacked_matrix(&bm, &studies, &Variant::SpecialistNoReuse("b".into()), &st)
            .unwrap();
        assert_eq!(z.ncols(), 2);
        assert_eq!(z.nrows(), 6);
    }

    #[test]
    fn single_study_generalist_weight_is_one() {
        let a = line_study("a", 2.0, 10);
        let studies = vec![a];
        let m = mss_fit(&studies, &Variant::Generalist, &Lambdas::uniform(&studies, 0.0), 0.0).unwrap();
        assert!((m.weights.weights[0] - 1.0).abs() < 1e-10);
        assert!(m.weights.intercept.abs() < 1e-9);
    }

    #[test]
    fn no_reuse_model_has_no_target_entries() {
        let studies: Vec<Study> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, id)| line_study(id, 1.0 + i as f64, 7))
            .collect();
        let v = Variant::SpecialistNoReuse("a".into());
        let m = mss_fit(&studies, &v, &Lambdas::uniform(&studies, 0.1), 0.01).unwrap();
        assert!(m.coefficients.column("a").is_none());
        assert!(m.weights.get("a").is_none());
        assert_eq!(m.weights.ids, vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn constant_prediction_when_weights_vanish() {
        let studies = vec![line_study("a", 1.0, 6), line_study("b", -1.0, 6)];
        let mut m =
            mss_fit(&studies, &Variant::Generalist, &Lambdas::uniform(&studies, 0.0), 0.0).unwrap();
        m.weights.weights = vec![0.0, 0.0];
        m.weights.intercept = 3.5;
        let p = mss_predict(&m, &DMatrix::from_element(4, 1, 9.0)).unwrap();
        assert!(p.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn variant_kind_parse() {
        assert_eq!("sn".parse::<VariantKind>().unwrap(), VariantKind::SpecialistNoReuse);
        assert!("x".parse::<VariantKind>().is_err());
    }

    #[test]
    fn missing_lambda_is_an_error() {
        let studies = vec![line_study("a", 1.0, 6)];
        let st = fit_standardizer(&studies).unwrap();
        assert!(fit_ssls(&studies, &Lambdas::default(), &st).is_err());
    }
}
