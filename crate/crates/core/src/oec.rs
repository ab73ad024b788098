//! Joint fitting of the study learners and ensemble weights.
//!
//! The objective is a convex combination, weighted by `eta`, of the stacking
//! loss and the summed per-study ridge losses. It is biconvex in the learner
//! coefficients and the weights, and is minimized by block coordinate descent
//! where each block update is an exact minimizer.

use nalgebra::{DMatrix, DVector};
use crate::error::{invalid, Error, Result};
use crate::linalg::solve_psd;
use crate::model::{
    build_design, concatenate, fit_standardizer, nnls_from_moments, CoefficientVector, DesignMatrix,
    EnsembleWeights, Standardizer, Study,
};
use crate::stacking::{
    ensemble_predict, fit_ssls, stack_weights, CoefficientMatrix, Lambdas, Variant,
};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Starting point for block coordinate descent.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// Learners from `fit_ssls`, weights from the matching stacking fit.
    #[default]
    FromMss,
    /// Learners from `fit_ssls`, equal weights `1/K` and zero intercept.
    EqualWeights,
    Provided(CoefficientMatrix, EnsembleWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OecConfig {
    pub variant: Variant,
    pub eta: f64,
    pub mu: f64,
    pub lambdas: Lambdas,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl OecConfig {
    pub fn new(variant: Variant, eta: f64, mu: f64, lambdas: Lambdas) -> Self {
        OecConfig {
            variant,
            eta,
            mu,
            lambdas,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: Init::FromMss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid(
                "eta",
                format!("{} is outside (0, 1); use the limiting methods for 0 and 1", self.eta),
            ));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu", format!("{} must be finite and non-negative", self.mu)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OecModel {
    pub coefficients: CoefficientMatrix,
    pub weights: EnsembleWeights,
    /// Objective at initialization followed by its value after every cycle.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub standardizer: Standardizer,
    pub variant: Variant,
    pub eta: f64,
    pub mu: f64,
    pub lambdas: Lambdas,
    pub tol: f64,
    pub max_iter: usize,
}

impl OecModel {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Centered second moments of a design `[1, Z]` and its outcome, enough to
/// evaluate `‖y − Xβ‖²` without touching the rows.
struct Moments {
    n: f64,
    y_mean: f64,
    z_means: DVector<f64>,
    yy: f64,
    zty: DVector<f64>,
    zz: DMatrix<f64>,
}

impl Moments {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let n = y.len() as f64;
        let mut zc = x.columns(1, x.ncols() - 1).into_owned();
        let z_means = DVector::from_iterator(zc.ncols(), zc.column_iter().map(|c| c.mean()));
        for (j, mut col) in zc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-z_means[j]);
        }
        let y_mean = y.mean();
        let yc = y.add_scalar(-y_mean);
        Moments { n, y_mean, yy: yc.norm_squared(), zty: zc.tr_mul(&yc), zz: zc.tr_mul(&zc), z_means }
    }

    fn sse(&self, beta: &DVector<f64>) -> f64 {
        let b = beta.rows(1, beta.len() - 1);
        let shift = self.y_mean - beta[0] - self.z_means.dot(&b);
        let quad = (&self.zz * b).dot(&b);
        (self.yy - 2.0 * self.zty.dot(&b) + quad).max(0.0) + self.n * shift * shift
    }
}

struct Block {
    id: String,
    n: f64,
    lambda: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    moments: Moments,
}

/// Data of one OEC problem, standardized and with the Gram matrices that the
/// block updates reuse.
pub struct OecProblem {
    eta: f64,
    mu: f64,
    blocks: Vec<Block>,
    ensemble: Moments,
    s: f64,
    xe_gram: DMatrix<f64>,
    xe_ty: DVector<f64>,
    xe_tones: DVector<f64>,
    standardizer: Standardizer,
}

impl OecProblem {
    pub fn new(config: &OecConfig, studies: &[Study]) -> Result<Self> {
        config.validate()?;
        let variant = &config.variant;
        let target = variant.target_index(studies)?;
        let contributing = variant.contributing(studies);
        let owned: Vec<Study> = contributing.iter().map(|s| (*s).clone()).collect();
        let standardizer = fit_standardizer(&owned)?;

        let mut blocks = Vec::with_capacity(owned.len());
        for s in &owned {
            let x = build_design(s, Some(&standardizer))?.into_inner();
            let gram = x.tr_mul(&x);
            let xty = x.tr_mul(s.y());
            blocks.push(Block {
                id: s.id().to_string(),
                n: s.n() as f64,
                lambda: config.lambdas.get(s.id())?,
                moments: Moments::new(&x, s.y()),
                gram,
                xty,
            });
        }
        if let Some(b) = blocks.iter().find(|b| !(b.lambda >= 0.0 && b.lambda.is_finite())) {
            return Err(invalid("lambdas", format!("penalty for `{}` must be non-negative", b.id)));
        }

        let ens_rows: Vec<Study> = match target {
            None => studies.to_vec(),
            Some(t) => vec![studies[t].clone()],
        };
        let (xr, ye) = concatenate(&ens_rows)?;
        let xe = DesignMatrix::from_raw(&xr, Some(&standardizer))?.into_inner();
        let s = ye.len() as f64;
        let xe_gram = xe.tr_mul(&xe);
        let xe_ty = xe.tr_mul(&ye);
        let xe_tones = xe.row_sum().transpose();
        Ok(OecProblem {
            eta: config.eta,
            mu: config.mu,
            blocks,
            ensemble: Moments::new(&xe, &ye),
            s,
            xe_gram,
            xe_ty,
            xe_tones,
            standardizer,
        })
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn ids(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.id.clone()).collect()
    }

    fn same_ids(&self, ids: &[String]) -> bool {
        ids.len() == self.blocks.len() && ids.iter().zip(&self.blocks).all(|(a, b)| *a == b.id)
    }

    fn check(&self, b: &CoefficientMatrix, alpha: Option<&EnsembleWeights>) -> Result<()> {
        if !self.same_ids(b.ids()) {
            let ids = self.ids();
            return Err(invalid(
                "coefficients",
                format!("expected learners {:?}, got {:?}", ids, b.ids()),
            ));
        }
        if b.nrows() != self.xe_gram.ncols() {
            return Err(Error::DimensionMismatch {
                context: "coefficient rows",
                expected: self.xe_gram.ncols(),
                actual: b.nrows(),
            });
        }
        if let Some(a) = alpha {
            if !self.same_ids(&a.ids) || a.weights.len() != a.ids.len() {
                return Err(invalid(
                    "weights",
                    format!("expected weights for {:?}, got {:?}", self.ids(), a.ids),
                ));
            }
        }
        Ok(())
    }

    pub fn objective(&self, b: &CoefficientMatrix, alpha: &EnsembleWeights) -> Result<f64> {
        self.check(b, Some(alpha))?;
        Ok(self.objective_unchecked(b, alpha))
    }

    fn objective_unchecked(&self, b: &CoefficientMatrix, alpha: &EnsembleWeights) -> f64 {
        let ssl: f64 = (0..self.blocks.len()).map(|k| self.study_loss(k, &b.columns()[k])).sum();
        self.combine(self.ensemble_loss(b, alpha), ssl)
    }

    fn combine(&self, ensemble: f64, study: f64) -> f64 {
        self.eta * ensemble + (1.0 - self.eta) * study
    }

    fn ensemble_loss(&self, b: &CoefficientMatrix, alpha: &EnsembleWeights) -> f64 {
        // every learner is applied to the same ensemble rows, so the ensemble
        // fit is X_e times the weighted coefficient sum
        let mut combined = DVector::zeros(self.xe_gram.ncols());
        for (beta, &w) in b.columns().iter().zip(&alpha.weights) {
            if w != 0.0 {
                combined.axpy(w, beta, 1.0);
            }
        }
        combined[0] += alpha.intercept;
        self.ensemble.sse(&combined) / (2.0 * self.s)
            + 0.5 * self.mu * alpha.weights.iter().map(|w| w * w).sum::<f64>()
    }

    fn study_loss(&self, k: usize, beta: &DVector<f64>) -> f64 {
        let blk = &self.blocks[k];
        let pen: f64 = beta.iter().skip(1).map(|v| v * v).sum();
        blk.moments.sse(beta) / (2.0 * blk.n) + 0.5 * blk.lambda * pen
    }

    /// Exact minimizer over learner `k` with everything else fixed. The flag
    /// is set when the system was singular and the minimum-norm solution was
    /// taken.
    pub fn update_beta(
        &self,
        b: &CoefficientMatrix,
        alpha: &EnsembleWeights,
        k: usize,
    ) -> Result<(CoefficientVector, bool)> {
        self.check(b, Some(alpha))?;
        if k >= self.blocks.len() {
            return Err(invalid("k", format!("block {k} out of range")));
        }
        Ok(self.update_beta_unchecked(b, alpha, k))
    }

    fn update_beta_unchecked(&self, b: &CoefficientMatrix, alpha: &EnsembleWeights, k: usize) -> (CoefficientVector, bool) {
        let blk = &self.blocks[k];
        let eta = self.eta;
        let ak = alpha.weights[k];

        // X_eᵀ r_k without forming r_k
        let mut xtr = &self.xe_ty - &self.xe_tones * alpha.intercept;
        for (j, &w) in alpha.weights.iter().enumerate() {
            if j != k && w != 0.0 {
                xtr.gemv(-w, &self.xe_gram, &b.columns()[j], 1.0);
            }
        }

        let mut lhs = &blk.gram * ((1.0 - eta) / blk.n);
        if ak != 0.0 {
            lhs += &self.xe_gram * (eta * ak * ak / self.s);
        }
        for i in 1..lhs.nrows() {
            lhs[(i, i)] += (1.0 - eta) * blk.lambda;
        }
        let rhs = &blk.xty * ((1.0 - eta) / blk.n) + xtr * (eta * ak / self.s);
        let sol = solve_psd(&lhs, &rhs);
        (CoefficientVector(sol.x), sol.singular)
    }

    /// Exact minimizer over the intercept and non-negative weights.
    pub fn update_alpha(&self, b: &CoefficientMatrix) -> Result<EnsembleWeights> {
        self.check(b, None)?;
        let e = &self.ensemble;
        let bm = b.as_matrix();
        let slopes = bm.rows(1, bm.nrows() - 1);
        let gram = slopes.transpose() * &e.zz * slopes / e.n;
        let c = slopes.tr_mul(&e.zty) / e.n;
        let z_means = DVector::from_iterator(
            bm.ncols(),
            bm.column_iter().map(|col| col[0] + e.z_means.dot(&col.rows(1, col.len() - 1))),
        );
        let fit = nnls_from_moments(gram, &c, self.mu, e.y_mean, &z_means);
        EnsembleWeights::from_fit(self.ids(), &fit)
    }
}

pub fn oec_objective(
    config: &OecConfig,
    studies: &[Study],
    b: &CoefficientMatrix,
    alpha: &EnsembleWeights,
) -> Result<f64> {
    OecProblem::new(config, studies)?.objective(b, alpha)
}

pub fn update_beta_block(
    config: &OecConfig,
    studies: &[Study],
    b: &CoefficientMatrix,
    alpha: &EnsembleWeights,
    k: usize,
) -> Result<CoefficientVector> {
    Ok(OecProblem::new(config, studies)?.update_beta(b, alpha, k)?.0)
}

pub fn update_alpha_block(
    config: &OecConfig,
    studies: &[Study],
    b: &CoefficientMatrix,
) -> Result<EnsembleWeights> {
    OecProblem::new(config, studies)?.update_alpha(b)
}

pub fn oec_fit(config: &OecConfig, studies: &[Study]) -> Result<OecModel> {
    let problem = OecProblem::new(config, studies)?;
    let (mut b, mut alpha) = match &config.init {
        Init::FromMss => {
            let contributing = config.variant.contributing_owned(studies);
            let b = fit_ssls(&contributing, &config.lambdas, &problem.standardizer)?;
            let w = stack_weights(&b, studies, &config.variant, &problem.standardizer, config.mu)?;
            (b, w)
        }
        Init::EqualWeights => {
            let contributing = config.variant.contributing_owned(studies);
            let b = fit_ssls(&contributing, &config.lambdas, &problem.standardizer)?;
            let k = b.ncols();
            let a = EnsembleWeights {
                intercept: 0.0,
                ids: b.ids().to_vec(),
                weights: vec![1.0 / k as f64; k],
            };
            (b, a)
        }
        Init::Provided(b, a) => (b.clone(), a.clone()),
    };
    problem.check(&b, Some(&alpha))?;

    let mut study: Vec<f64> = (0..b.ncols()).map(|k| problem.study_loss(k, &b.columns()[k])).collect();
    let mut f = problem.combine(problem.ensemble_loss(&b, &alpha), study.iter().sum());
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut trace = vec![f];
    let mut converged = false;
    for iteration in 1..=config.max_iter {
        let f_prev = f;
        for k in 0..problem.blocks.len() {
            let (beta, singular) = problem.update_beta_unchecked(&b, &alpha, k);
            if singular {
                log::debug!("singular system for block {k} at iteration {iteration}");
            }
            let old = std::mem::replace(&mut b.columns_mut()[k], beta.0);
            let loss_k = problem.study_loss(k, &b.columns()[k]);
            let rest: f64 = study.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, v)| v).sum();
            let f_new = problem.combine(problem.ensemble_loss(&b, &alpha), rest + loss_k);
            // exact minimization cannot increase f; rounding can
            if f_new > f || !f_new.is_finite() {
                b.columns_mut()[k] = old;
            } else {
                f = f_new;
                study[k] = loss_k;
            }
        }
        let new_alpha = problem.update_alpha(&b)?;
        let f_new = problem.combine(problem.ensemble_loss(&b, &new_alpha), study.iter().sum());
        if f_new <= f && f_new.is_finite() {
            alpha = new_alpha;
            f = f_new;
        }
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective { iteration });
        }
        trace.push(f);
        if (f - f_prev).abs() / f_prev.abs().max(1.0) < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("block coordinate descent stopped after {} cycles", config.max_iter);
    }
    Ok(OecModel {
        coefficients: b,
        weights: alpha,
        objective_trace: trace,
        converged,
        standardizer: problem.standardizer,
        variant: config.variant.clone(),
        eta: config.eta,
        mu: config.mu,
        lambdas: config.lambdas.clone(),
        tol: config.tol,
        max_iter: config.max_iter,
    })
}

/// Runs `oec_fit` from each starting point and keeps the lowest final
/// objective; earlier starts win ties. The objective is only biconvex, and a
/// start whose weights are all zero can stall at a non-minimizing stationary
/// point.
pub fn oec_fit_best_of(config: &OecConfig, studies: &[Study], inits: &[Init]) -> Result<OecModel> {
    let mut best: Option<OecModel> = None;
    for init in inits {
        let mut cfg = config.clone();
        cfg.init = init.clone();
        let m = oec_fit(&cfg, studies)?;
        if best.as_ref().is_none_or(|b| m.final_objective() < b.final_objective()) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| invalid("inits", "at least one starting point is needed"))
}

pub fn oec_predict(model: &OecModel, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensemble_predict(&model.standardizer, &model.coefficients, &model.weights, x_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ridge_fit;
    use crate::model::PenaltyMask;
    use crate::stacking::mss_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_studies(seed: u64, k: usize, n: usize, p: usize) -> Vec<Study> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|i| {
                let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
                let beta: Vec<f64> = (0..p).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect();
                let y = DVector::from_fn(n, |r, _| {
                    (0..p).map(|j| x[(r, j)] * beta[j]).sum::<f64>()
                        + rng.sample::<f64, _>(StandardNormal)
                });
                Study::new(format!("s{i}"), y, x).unwrap()
            })
            .collect()
    }

    // term-by-term evaluation straight from the definition
    fn naive_objective(
        cfg: &OecConfig,
        studies: &[Study],
        st: &Standardizer,
        b: &CoefficientMatrix,
        a: &EnsembleWeights,
    ) -> f64 {
        let ens: Vec<&Study> = match cfg.variant.target() {
            None => studies.iter().collect(),
            Some(t) => studies.iter().filter(|s| s.id() == t).collect(),
        };
        let s_rows: usize = ens.iter().map(|s| s.n()).sum();
        let mut stack = 0.0;
        for s in &ens {
            let d = build_design(s, Some(st)).unwrap();
            for i in 0..s.n() {
                let mut pred = a.intercept;
                for (id, w) in a.ids.iter().zip(&a.weights) {
                    let beta = b.column(id).unwrap();
                    pred += w * (0..beta.len()).map(|j| d.values()[(i, j)] * beta[j]).sum::<f64>();
                }
                stack += (s.y()[i] - pred).powi(2);
            }
        }
        stack /= 2.0 * s_rows as f64;
        stack += 0.5 * cfg.mu * a.weights.iter().map(|w| w * w).sum::<f64>();
        let mut ssl = 0.0;
        for id in b.ids() {
            let s = studies.iter().find(|s| s.id() == id).unwrap();
            let d = build_design(s, Some(st)).unwrap();
            let beta = b.column(id).unwrap();
            let mut loss = 0.0;
            for i in 0..s.n() {
                let pred: f64 = (0..beta.len()).map(|j| d.values()[(i, j)] * beta[j]).sum();
                loss += (s.y()[i] - pred).powi(2);
            }
            let pen: f64 = (1..beta.len()).map(|j| beta[j] * beta[j]).sum();
            ssl += loss / (2.0 * s.n() as f64) + 0.5 * cfg.lambdas.get(id).unwrap() * pen;
        }
        cfg.eta * stack + (1.0 - cfg.eta) * ssl
    }

    fn random_state(ids: Vec<String>, rows: usize, seed: u64) -> (CoefficientMatrix, EnsembleWeights) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = ids
            .iter()
            .map(|_| DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let weights = ids.iter().map(|_| rng.random::<f64>()).collect();
        let a = EnsembleWeights { intercept: rng.random::<f64>(), ids: ids.clone(), weights };
        (CoefficientMatrix::new(ids, cols).unwrap(), a)
    }

    fn variants() -> Vec<Variant> {
        vec![
            Variant::Generalist,
            Variant::Specialist("s1".into()),
            Variant::SpecialistNoReuse("s1".into()),
        ]
    }

    #[test]
    fn zero_state_objective_is_scaled_outcome_norm() {
        let studies = random_studies(1, 3, 10, 2);
        let cfg = OecConfig::new(Variant::Generalist, 0.3, 5.0, Lambdas::uniform(&studies, 0.5));
        let p = OecProblem::new(&cfg, &studies).unwrap();
        let b = CoefficientMatrix::new(p.ids(), vec![DVector::zeros(3); 3]).unwrap();
        let a = EnsembleWeights { intercept: 0.0, ids: p.ids(), weights: vec![0.0; 3] };
        let (_, y) = concatenate(&studies).unwrap();
        let ssl: f64 = studies.iter().map(|s| s.y().norm_squared() / (2.0 * s.n() as f64)).sum();
        let expected = 0.3 * y.norm_squared() / 60.0 + 0.7 * ssl;
        assert!((p.objective(&b, &a).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_has_zero_objective() {
        let mut studies = random_studies(2, 2, 8, 2);
        let st = fit_standardizer(&studies).unwrap();
        let beta = DVector::from_vec(vec![0.5, 1.0, -2.0]);
        for s in studies.iter_mut() {
            let y = build_design(s, Some(&st)).unwrap().values() * &beta;
            *s = Study::new(s.id(), y, s.x().clone()).unwrap();
        }
        let cfg = OecConfig::new(Variant::Generalist, 0.5, 0.0, Lambdas::uniform(&studies, 0.0));
        let p = OecProblem::new(&cfg, &studies).unwrap();
        let b = CoefficientMatrix::new(p.ids(), vec![beta.clone(), beta]).unwrap();
        let a = EnsembleWeights { intercept: 0.0, ids: p.ids(), weights: vec![0.5, 0.5] };
        assert!(p.objective(&b, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn objective_matches_naive_sum() {
        let studies = random_studies(3, 3, 7, 2);
        for (i, v) in variants().into_iter().enumerate() {
            let cfg = OecConfig::new(v, 0.37, 0.8, Lambdas::uniform(&studies, 0.2));
            let p = OecProblem::new(&cfg, &studies).unwrap();
            let (b, a) = random_state(p.ids(), 3, 10 + i as u64);
            let fast = p.objective(&b, &a).unwrap();
            let slow = naive_objective(&cfg, &studies, p.standardizer(), &b, &a);
            assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn zero_weight_beta_update_is_ridge() {
        let studies = random_studies(4, 3, 12, 3);
        let cfg = OecConfig::new(Variant::Generalist, 0.6, 0.1, Lambdas::uniform(&studies, 0.7));
        let p = OecProblem::new(&cfg, &studies).unwrap();
        let (b, mut a) = random_state(p.ids(), 4, 5);
        a.weights[1] = 0.0;
        let (beta, _) = p.update_beta(&b, &a, 1).unwrap();
        let d = build_design(&studies[1], Some(p.standardizer())).unwrap();
        let ridge = ridge_fit(&d, studies[1].y(), 0.7, &PenaltyMask::intercept_free(4), 12.0).unwrap();
        assert!((beta.0 - ridge.beta.0).amax() < 1e-10);
    }

    #[test]
    fn tiny_eta_beta_update_is_ridge() {
        let studies = random_studies(5, 3, 12, 3);
        let cfg = OecConfig::new(Variant::Generalist, 1e-12, 0.1, Lambdas::uniform(&studies, 0.3));
        let p = OecProblem::new(&cfg, &studies).unwrap();
        let (b, a) = random_state(p.ids(), 4, 6);
        let (beta, _) = p.update_beta(&b, &a, 0).unwrap();
        let d = build_design(&studies[0], Some(p.standardizer())).unwrap();
        let ridge = ridge_fit(&d, studies[0].y(), 0.3, &PenaltyMask::intercept_free(4), 12.0).unwrap();
        assert!((beta.0 - ridge.beta.0).amax() < 1e-6);
    }

    #[test]
    fn block_updates_do_not_increase_objective() {
        let studies = random_studies(6, 3, 9, 2);
        for (i, v) in variants().into_iter().enumerate() {
            let cfg = OecConfig::new(v, 0.5, 0.05, Lambdas::uniform(&studies, 0.1));
            let p = OecProblem::new(&cfg, &studies).unwrap();
            let (mut b, a) = random_state(p.ids(), 3, 20 + i as u64);
            let before = p.objective(&b, &a).unwrap();
            let (beta, _) = p.update_beta(&b, &a, 0).unwrap();
            b.columns_mut()[0] = beta.0;
            let mid = p.objective(&b, &a).unwrap();
            assert!(mid <= before + 1e-12);
            let a2 = p.update_alpha(&b).unwrap();
            assert!(p.objective(&b, &a2).unwrap() <= mid + 1e-12);
        }
    }

    #[test]
    fn beta_update_is_stationary() {
        // finite-difference check that no coordinate move lowers the objective
        let studies = random_studies(7, 3, 9, 2);
        let cfg = OecConfig::new(Variant::Specialist("s1".into()), 0.4, 0.2, Lambdas::uniform(&studies, 0.3));
        let p = OecProblem::new(&cfg, &studies).unwrap();
        let (mut b, a) = random_state(p.ids(), 3, 3);
        let (beta, _) = p.update_beta(&b, &a, 2).unwrap();
        b.columns_mut()[2] = beta.0;
        let f0 = p.objective(&b, &a).unwrap();
        for j in 0..3 {
            for h in [1e-4, -1e-4] {
                let mut bb = b.clone();
                bb.columns_mut()[2][j] += h;
                assert!(p.objective(&bb, &a).unwrap() >= f0);
            }
        }
    }

    #[test]
    fn alpha_update_zero_columns() {
        let studies = random_studies(8, 2, 6, 2);
        let cfg = OecConfig::new(Variant::Generalist, 0.5, 0.0, Lambdas::uniform(&studies, 0.0));
        let p = OecProblem::new(&cfg, &studies).unwrap();
        let b = CoefficientMatrix::new(p.ids(), vec![DVector::zeros(3); 2]).unwrap();
        let a = p.update_alpha(&b).unwrap();
        let (_, y) = concatenate(&studies).unwrap();
        assert!(a.weights.iter().all(|&w| w == 0.0));
        assert!((a.intercept - y.mean()).abs() < 1e-12);
    }

    #[test]
    fn trace_is_non_increasing_and_converges() {
        let studies = random_studies(9, 3, 15, 3);
        for v in variants() {
            let cfg = OecConfig::new(v, 0.5, 0.01, Lambdas::uniform(&studies, 0.05));
            let m = oec_fit(&cfg, &studies).unwrap();
            assert!(m.converged);
            for w in m.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
            }
            assert!(m.weights.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn near_zero_eta_matches_mss() {
        let studies = random_studies(10, 3, 20, 3);
        let lambdas = Lambdas::uniform(&studies, 0.0);
        for v in variants() {
            let mss = mss_fit(&studies, &v, &lambdas, 0.0).unwrap();
            let mut cfg = OecConfig::new(v.clone(), 1e-3, 0.0, lambdas.clone());
            cfg.tol = 1e-12;
            let m = oec_fit(&cfg, &studies).unwrap();
            let (x, _) = concatenate(&studies).unwrap();
            let a = oec_predict(&m, &x).unwrap();
            let b = crate::stacking::mss_predict(&mss, &x).unwrap();
            let rmse = ((a - b).norm_squared() / x.nrows() as f64).sqrt();
            assert!(rmse < 1e-2, "{v:?}: {rmse}");
        }
    }

    #[test]
    fn rejects_eta_at_bounds() {
        let studies = random_studies(11, 2, 6, 1);
        for eta in [0.0, 1.0, -0.1, f64::NAN] {
            let cfg = OecConfig::new(Variant::Generalist, eta, 0.0, Lambdas::uniform(&studies, 0.0));
            assert!(oec_fit(&cfg, &studies).is_err());
        }
    }

    #[test]
    fn no_reuse_target_outcome_enters_only_stacking_term() {
        let studies = random_studies(12, 3, 8, 2);
        let cfg = OecConfig::new(Variant::SpecialistNoReuse("s0".into()), 0.4, 0.1, Lambdas::uniform(&studies, 0.1));
        let p = OecProblem::new(&cfg, &studies).unwrap();
        let (b, a) = random_state(p.ids(), 3, 4);
        let f1 = p.objective(&b, &a).unwrap();
        let mut moved = studies.clone();
        let y = moved[0].y().add_scalar(1.0);
        moved[0] = Study::new("s0", y, moved[0].x().clone()).unwrap();
        let p2 = OecProblem::new(&cfg, &moved).unwrap();
        let f2 = p2.objective(&b, &a).unwrap();
        // only the stacking residual shifts by one
        let mut cfg_ssl = cfg.clone();
        cfg_ssl.eta = 1.0 - 1e-15;
        let s1 = naive_objective(&cfg_ssl, &studies, p.standardizer(), &b, &a);
        let s2 = naive_objective(&cfg_ssl, &moved, p.standardizer(), &b, &a);
        assert!(((f2 - f1) - 0.4 * (s2 - s1)).abs() < 1e-9);
    }
}
