//! Studies, design matrices and the two convex solvers the ensembles are built on.
//!
//! Every fit in this crate reduces to one of two problems:
//!
//! * penalized least squares with an unpenalized intercept,
//!   `(1/(2s))‖y − Xβ‖² + (λ/2)‖Dβ‖²`, solved through the regularized normal
//!   equations ([`ridge_fit`]);
//! * penalized non-negative least squares with a free intercept,
//!   `(1/(2n))‖y − α₀ − Zα‖² + (μ/2)‖α‖²` subject to `α ≥ 0` ([`nnls_fit`]).

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// One dataset: outcome vector and raw covariates (no intercept column).
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    id: String,
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl Study {
    pub fn new(id: impl Into<String>, y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let id = id.into();
        if y.is_empty() {
            return Err(Error::InvalidStudy {
                id,
                reason: "study has no rows".into(),
            });
        }
        if x.nrows() != y.len() {
            return Err(Error::InvalidStudy {
                id,
                reason: format!("{} covariate rows for {} outcomes", x.nrows(), y.len()),
            });
        }
        if !y.iter().chain(x.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidStudy {
                id,
                reason: "non-finite entry".into(),
            });
        }
        Ok(Study { id, y, x })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// A new study made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Study> {
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        let x = self.x.select_rows(rows);
        Study::new(self.id.clone(), y, x)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Study {
        self.id = id.into();
        self
    }
}

/// Total number of rows across studies.
pub fn pooled_rows(studies: &[Study]) -> usize {
    studies.iter().map(Study::n).sum()
}

/// Vertically concatenates the studies' covariates and outcomes.
pub fn concatenate(studies: &[Study]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = common_p(studies)?;
    let n = pooled_rows(studies);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut row = 0;
    for s in studies {
        x.rows_mut(row, s.n()).copy_from(s.x());
        y.rows_mut(row, s.n()).copy_from(s.y());
        row += s.n();
    }
    Ok((x, y))
}

pub(crate) fn common_p(studies: &[Study]) -> Result<usize> {
    let first = studies
        .first()
        .ok_or_else(|| Error::InsufficientData("no studies supplied".into()))?;
    for s in studies {
        if s.p() != first.p() {
            return Err(Error::DimensionMismatch {
                context: "covariate count across studies",
                expected: first.p(),
                actual: s.p(),
            });
        }
    }
    Ok(first.p())
}

/// Per-covariate centering and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn new(means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if means.len() != sds.len() {
            return Err(Error::DimensionMismatch {
                context: "standardizer means/sds",
                expected: means.len(),
                actual: sds.len(),
            });
        }
        if let Some(column) = sds.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::ZeroVariance { column });
        }
        Ok(Standardizer { means, sds })
    }

    /// The no-op standardizer for `p` covariates.
    pub fn identity(p: usize) -> Self {
        Standardizer {
            means: vec![0.0; p],
            sds: vec![1.0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.means[j]) / self.sds[j]);
        }
        Ok(out)
    }

    pub fn unapply(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(z)?;
        let mut out = z.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|v| *v = *v * self.sds[j] + self.means[j]);
        }
        Ok(out)
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.p() {
            return Err(Error::DimensionMismatch {
                context: "standardizer covariate count",
                expected: self.p(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }
}

/// Pooled mean and sample standard deviation of every covariate over all rows
/// of all listed studies.
pub fn fit_standardizer(studies: &[Study]) -> Result<Standardizer> {
    let p = common_p(studies)?;
    let n = pooled_rows(studies);
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "standardizer needs at least 2 pooled rows, got {n}"
        )));
    }
    let mut means = vec![0.0; p];
    let mut sds = vec![0.0; p];
    for j in 0..p {
        let mean = studies.iter().map(|s| s.x().column(j).sum()).sum::<f64>() / n as f64;
        let ss: f64 = studies
            .iter()
            .flat_map(|s| s.x().column(j).iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<_>>())
            .sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::ZeroVariance { column: j });
        }
        means[j] = mean;
        sds[j] = sd;
    }
    Ok(Standardizer { means, sds })
}

/// An `n × (p+1)` design whose first column is all ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    /// Prepends the intercept column to (optionally standardized) covariates.
    pub fn from_raw(x: &DMatrix<f64>, standardizer: Option<&Standardizer>) -> Result<Self> {
        let cov = match standardizer {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        };
        Ok(DesignMatrix(cov.insert_column(0, 1.0)))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn build_design(study: &Study, standardizer: Option<&Standardizer>) -> Result<DesignMatrix> {
    DesignMatrix::from_raw(study.x(), standardizer)
}

/// Diagonal penalty selector: zero for the intercept, one elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMask {
    diag: DVector<f64>,
}

impl PenaltyMask {
    pub fn intercept_free(len: usize) -> Self {
        let mut diag = DVector::from_element(len, 1.0);
        if len > 0 {
            diag[0] = 0.0;
        }
        PenaltyMask { diag }
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub(crate) fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }
}

/// Linear-model coefficients, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(pub DVector<f64>);

impl CoefficientVector {
    pub fn zeros(len: usize) -> Self {
        CoefficientVector(DVector::zeros(len))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub beta: CoefficientVector,
    /// λ = 0 on a singular Gram matrix; `beta` is the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Minimizes `(1/(2·scale))‖y − Xβ‖² + (λ/2)‖Dβ‖²`.
pub fn ridge_fit(
    design: &DesignMatrix,
    y: &DVector<f64>,
    lambda: f64,
    mask: &PenaltyMask,
    scale: f64,
) -> Result<RidgeFit> {
    let x = design.values();
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "ridge design rows vs outcome length",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if mask.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "ridge penalty mask",
            expected: x.ncols(),
            actual: mask.len(),
        });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    if !(scale > 0.0) {
        return Err(invalid("scale", format!("must be > 0, got {scale}")));
    }
    let xt = x.transpose();
    let gram = &xt * x / scale + mask.as_matrix() * lambda;
    let rhs = &xt * y / scale;
    let sol = linalg::solve_psd(&gram, &rhs);
    if sol.singular && lambda == 0.0 {
        return Ok(RidgeFit {
            beta: CoefficientVector(linalg::lstsq_min_norm(x, y)),
            rank_deficient: true,
        });
    }
    Ok(RidgeFit {
        beta: CoefficientVector(sol.x),
        rank_deficient: sol.singular,
    })
}

/// Solution of the intercept-free-penalty NNLS stacking problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NnlsFit {
    pub intercept: f64,
    pub weights: DVector<f64>,
}

/// Minimizes `(1/(2n))‖y − α₀𝟙 − Zα‖² + (μ/2)‖α‖²` over `α ≥ 0`, `α₀` free.
///
/// `design` carries the ones column first, followed by the `K` columns of `Z`.
/// The intercept is profiled out by centering, which leaves a strictly
/// convex (for μ > 0) box-constrained quadratic in `α` that is solved exactly
/// by a Lawson–Hanson active-set iteration.
pub fn nnls_fit(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    mu: f64,
    mask: &PenaltyMask,
) -> Result<NnlsFit> {
    if design.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "nnls design rows vs outcome length",
            expected: design.nrows(),
            actual: y.len(),
        });
    }
    if design.ncols() == 0 || mask.len() != design.ncols() {
        return Err(Error::DimensionMismatch {
            context: "nnls penalty mask",
            expected: design.ncols(),
            actual: mask.len(),
        });
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid("mu", format!("must be finite and >= 0, got {mu}")));
    }
    let z = design.columns(1, design.ncols() - 1).into_owned();
    Ok(nnls_profiled(&z, y, mu))
}

pub(crate) fn nnls_profiled(z: &DMatrix<f64>, y: &DVector<f64>, mu: f64) -> NnlsFit {
    let n = y.len() as f64;
    let k = z.ncols();
    let y_mean = y.mean();
    let z_means = DVector::from_iterator(k, z.column_iter().map(|c| c.mean()));
    let mut zc = z.clone();
    for (j, mut col) in zc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-z_means[j]);
    }
    let yc = y.add_scalar(-y_mean);
    let gram = zc.transpose() * &zc / n;
    let c = zc.transpose() * &yc / n;
    nnls_from_moments(gram, &c, mu, y_mean, &z_means)
}

/// Same problem given the centered moments `Z_cᵀZ_c / n` and `Z_cᵀy_c / n`.
pub(crate) fn nnls_from_moments(
    mut gram: DMatrix<f64>,
    c: &DVector<f64>,
    mu: f64,
    y_mean: f64,
    z_means: &DVector<f64>,
) -> NnlsFit {
    for j in 0..gram.nrows() {
        gram[(j, j)] += mu;
    }
    let weights = box_qp_active_set(&gram, c);
    let intercept = y_mean - z_means.dot(&weights);
    NnlsFit { intercept, weights }
}

/// Lawson–Hanson for `min ½ αᵀGα − cᵀα` subject to `α ≥ 0`, `G` PSD.
fn box_qp_active_set(gram: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let k = c.len();
    let mut alpha = DVector::zeros(k);
    if k == 0 {
        return alpha;
    }
    let scale = gram.diagonal().amax().max(c.amax()).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let mut passive = vec![false; k];
    // indices whose entry immediately fails; cleared whenever alpha moves
    let mut blocked = vec![false; k];
    let max_outer = 10 * k + 50;

    for _ in 0..max_outer {
        let grad = c - gram * &alpha;
        let candidate = (0..k)
            .filter(|&j| !passive[j] && !blocked[j] && grad[j] > tol)
            .max_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        for _ in 0..max_outer {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let s = solve_subset(gram, c, &idx);
            if idx.iter().zip(s.iter()).all(|(_, &v)| v > 0.0) {
                alpha.fill(0.0);
                for (&i, &v) in idx.iter().zip(s.iter()) {
                    alpha[i] = v;
                }
                blocked.fill(false);
                break;
            }
            let pos_j = idx.iter().position(|&i| i == j);
            if let Some(pj) = pos_j {
                if alpha[j] == 0.0 && s[pj] <= 0.0 {
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            }
            // step toward s until the first passive coordinate hits zero
            let mut step = 1.0_f64;
            for (&i, &v) in idx.iter().zip(s.iter()) {
                if v <= 0.0 {
                    let denom = alpha[i] - v;
                    if denom > 0.0 {
                        step = step.min(alpha[i] / denom);
                    }
                }
            }
            for (&i, &v) in idx.iter().zip(s.iter()) {
                alpha[i] += step * (v - alpha[i]);
            }
            for &i in &idx {
                if alpha[i] <= tol.max(1e-15 * alpha.amax()) {
                    alpha[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    alpha
}

fn solve_subset(gram: &DMatrix<f64>, c: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let sub = gram.select_rows(idx).select_columns(idx);
    let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| c[i]));
    linalg::solve_psd(&sub, &rhs).x
}

pub fn predict(design: &DesignMatrix, beta: &CoefficientVector) -> Result<DVector<f64>> {
    if design.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            context: "prediction coefficients",
            expected: design.ncols(),
            actual: beta.len(),
        });
    }
    Ok(design.values() * beta.values())
}

/// Unconstrained intercept plus one non-negative weight per contributing study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub intercept: f64,
    pub ids: Vec<String>,
    pub weights: Vec<f64>,
}

impl EnsembleWeights {
    pub fn from_fit(ids: Vec<String>, fit: &NnlsFit) -> Result<Self> {
        if ids.len() != fit.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "ensemble weight ids",
                expected: fit.weights.len(),
                actual: ids.len(),
            });
        }
        Ok(EnsembleWeights {
            intercept: fit.intercept,
            ids,
            weights: fit.weights.iter().copied().collect(),
        })
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|k| self.weights[k])
    }

    pub fn weight_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }
}

/// Reads studies from CSV with header `study_id,y,x1..xp`. Studies appear in
/// order of first occurrence.
pub fn read_studies_csv<R: Read>(reader: R) -> Result<Vec<Study>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "study_id" || &headers[1] != "y" {
        return Err(Error::Parse(
            "study CSV header must start with `study_id,y`".into(),
        ));
    }
    let p = headers.len() - 2;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec[0].to_string();
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {}: `{s}` is not a number", line + 2)))
        };
        let y = parse(&rec[1])?;
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Vec::new(), Vec::new())
        });
        entry.0.push(y);
        for j in 0..p {
            entry.1.push(parse(&rec[j + 2])?);
        }
    }
    order
        .into_iter()
        .map(|id| {
            let (y, x) = rows.remove(&id).expect("id recorded on insert");
            let n = y.len();
            Study::new(id, DVector::from_vec(y), DMatrix::from_row_slice(n, p, &x))
        })
        .collect()
}

pub fn write_studies_csv<W: Write>(writer: W, studies: &[Study]) -> Result<()> {
    let p = common_p(studies)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["study_id".to_string(), "y".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for s in studies {
        for i in 0..s.n() {
            let mut rec = vec![s.id().to_string(), s.y()[i].to_string()];
            rec.extend((0..p).map(|j| s.x()[(i, j)].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study(id: &str, x: &[f64], y: &[f64]) -> Study {
        Study::new(
            id,
            DVector::from_column_slice(y),
            DMatrix::from_column_slice(x.len(), 1, x),
        )
        .unwrap()
    }

    #[test]
    fn design_prepends_intercept() {
        let s = study("a", &[2.0, 4.0], &[0.0, 0.0]);
        let d = build_design(&s, None).unwrap();
        assert_eq!(d.values(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 4.0]));
    }

    #[test]
    fn design_standardizes_covariates() {
        let s = study("a", &[2.0, 4.0], &[0.0, 0.0]);
        let st = Standardizer::new(vec![3.0], vec![2f64.sqrt()]).unwrap();
        let d = build_design(&s, Some(&st)).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((d.values()[(0, 1)] + r).abs() < 1e-15);
        assert!((d.values()[(1, 1)] - r).abs() < 1e-15);
        assert_eq!(d.values()[(0, 0)], 1.0);
    }

    #[test]
    fn design_rejects_wrong_standardizer_width() {
        let s = study("a", &[2.0, 4.0], &[0.0, 0.0]);
        let st = Standardizer::identity(2);
        assert!(matches!(
            build_design(&s, Some(&st)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pooled_two_point_standardizer() {
        let a = study("a", &[1.0], &[0.0]);
        let b = study("b", &[3.0], &[0.0]);
        let st = fit_standardizer(&[a, b]).unwrap();
        assert_eq!(st.means, vec![2.0]);
        assert!((st.sds[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_rejected() {
        let a = study("a", &[5.0, 5.0], &[0.0, 1.0]);
        let b = study("b", &[5.0], &[0.0]);
        assert!(matches!(
            fit_standardizer(&[a, b]),
            Err(Error::ZeroVariance { column: 0 })
        ));
    }

    #[test]
    fn study_validation() {
        assert!(Study::new("e", DVector::zeros(0), DMatrix::zeros(0, 1)).is_err());
        assert!(Study::new("m", DVector::zeros(2), DMatrix::zeros(3, 1)).is_err());
        assert!(Study::new("f", DVector::from_vec(vec![f64::NAN]), DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn ridge_interpolates_exact_data() {
        let s = study("a", &[0.0, 1.0, 2.0, 5.0], &[1.0, 3.0, 5.0, 11.0]);
        let d = build_design(&s, None).unwrap();
        let fit = ridge_fit(&d, s.y(), 0.0, &PenaltyMask::intercept_free(2), 4.0).unwrap();
        assert!(!fit.rank_deficient);
        assert!((fit.beta.0[0] - 1.0).abs() < 1e-12);
        assert!((fit.beta.0[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_huge_penalty_leaves_intercept_at_mean() {
        let s = study("a", &[0.0, 1.0, 2.0, 5.0], &[1.0, 3.0, 4.0, 12.0]);
        let d = build_design(&s, None).unwrap();
        let fit = ridge_fit(&d, s.y(), 1e12, &PenaltyMask::intercept_free(2), 4.0).unwrap();
        assert!(fit.beta.0[1].abs() < 1e-9);
        assert!((fit.beta.0[0] - 5.0).abs() < 1e-8);
    }

    #[test]
    fn ridge_rank_deficient_returns_min_norm() {
        // duplicated covariate column
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 4.0, 4.0]);
        let s = Study::new("d", DVector::from_vec(vec![2.0, 4.0, 8.0]), x).unwrap();
        let d = build_design(&s, None).unwrap();
        let fit = ridge_fit(&d, s.y(), 0.0, &PenaltyMask::intercept_free(3), 3.0).unwrap();
        assert!(fit.rank_deficient);
        assert!(fit.beta.0[0].abs() < 1e-10);
        assert!((fit.beta.0[1] - 1.0).abs() < 1e-10);
        assert!((fit.beta.0[2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ridge_rejects_negative_lambda() {
        let s = study("a", &[0.0, 1.0], &[1.0, 2.0]);
        let d = build_design(&s, None).unwrap();
        assert!(ridge_fit(&d, s.y(), -1.0, &PenaltyMask::intercept_free(2), 2.0).is_err());
    }

    #[test]
    fn nnls_inactive_constraints_match_least_squares() {
        // y = 0.5 + 2 z1 + 1 z2 exactly
        let z = DMatrix::from_row_slice(5, 2, &[0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 3.0, 1.0, 2.0]);
        let y = DVector::from_iterator(5, (0..5).map(|i| 0.5 + 2.0 * z[(i, 0)] + z[(i, 1)]));
        let design = z.clone().insert_column(0, 1.0);
        let fit = nnls_fit(&design, &y, 0.0, &PenaltyMask::intercept_free(3)).unwrap();
        assert!((fit.intercept - 0.5).abs() < 1e-10);
        assert!((fit.weights[0] - 2.0).abs() < 1e-10);
        assert!((fit.weights[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nnls_anticorrelated_column_gets_zero_weight() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let design = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -2.0, 1.0, -3.0, 1.0, -4.0]);
        let fit = nnls_fit(&design, &y, 0.0, &PenaltyMask::intercept_free(2)).unwrap();
        assert_eq!(fit.weights[0], 0.0);
        assert!((fit.intercept - 2.5).abs() < 1e-14);
    }

    #[test]
    fn nnls_zero_columns() {
        let y = DVector::from_vec(vec![1.0, 2.0, 6.0]);
        let design = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let fit = nnls_fit(&design, &y, 0.0, &PenaltyMask::intercept_free(3)).unwrap();
        assert_eq!(fit.weights.as_slice(), &[0.0, 0.0]);
        assert!((fit.intercept - 3.0).abs() < 1e-14);
    }

    #[test]
    fn predict_checks_width() {
        let s = study("a", &[1.0, 2.0], &[0.0, 0.0]);
        let d = build_design(&s, None).unwrap();
        assert!(predict(&d, &CoefficientVector::zeros(3)).is_err());
        let c = CoefficientVector(DVector::from_vec(vec![4.5, 0.0]));
        assert_eq!(predict(&d, &c).unwrap().as_slice(), &[4.5, 4.5]);
    }

    #[test]
    fn studies_csv_round_trip() {
        let a = study("a", &[1.0, 2.0], &[0.5, -1.25]);
        let b = study("b", &[3.0], &[7.0]);
        let mut buf = Vec::new();
        write_studies_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let back = read_studies_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn studies_csv_rejects_bad_header() {
        let text = "id,y,x1\na,1,2\n";
        assert!(read_studies_csv(text.as_bytes()).is_err());
    }
}
