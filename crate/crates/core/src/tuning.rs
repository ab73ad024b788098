//! Cross-validation folds and grid search, plus the full tuning sequence
//! used by the experiments.

use std::io::Write;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::methods::{fit_oec_any_eta, rmse, Fitted, Hyper, Predictor};
use crate::model::Study;
use crate::stacking::{mss_fit, ssm_fit, tom_fit, Lambdas, Variant, VariantKind};

/// Row address: (study index, row index within the study).
pub type Address = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Random folds over one study's rows; every other row trains.
    WithinStudy(String),
    /// Every study's rows split evenly across folds.
    StudyBalanced,
    /// Fold k validates on all of study k.
    HoldOneStudyOut,
    /// Forward chaining over one study's rows, taken to be in time order.
    TimeSeriesSplit(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<Address>,
    pub validation: Vec<Address>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub scheme: Scheme,
    pub folds: Vec<Fold>,
}

fn index_of(studies: &[Study], id: &str) -> Result<usize> {
    studies
        .iter()
        .position(|s| s.id() == id)
        .ok_or_else(|| Error::UnknownStudy(id.to_string()))
}

fn all_addresses(studies: &[Study]) -> Vec<Address> {
    studies
        .iter()
        .enumerate()
        .flat_map(|(k, s)| (0..s.n()).map(move |i| (k, i)))
        .collect()
}

fn complement(studies: &[Study], validation: &[Address]) -> Vec<Address> {
    let mut held: Vec<Vec<bool>> = studies.iter().map(|s| vec![false; s.n()]).collect();
    for &(k, i) in validation {
        held[k][i] = true;
    }
    all_addresses(studies)
        .into_iter()
        .filter(|&(k, i)| !held[k][i])
        .collect()
}

// contiguous near-equal chunks, larger chunks first
fn chunk_bounds(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = len / parts;
    let extra = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|f| {
            let size = base + usize::from(f < extra);
            let b = (start, start + size);
            start += size;
            b
        })
        .collect()
}

pub fn make_folds(studies: &[Study], scheme: Scheme, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if studies.is_empty() {
        return Err(Error::InsufficientData("no studies to fold".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let folds = match &scheme {
        Scheme::HoldOneStudyOut => {
            if studies.len() < 2 {
                return Err(Error::InsufficientData(
                    "hold-one-study-out needs at least two studies".into(),
                ));
            }
            (0..studies.len())
                .map(|k| {
                    let validation: Vec<Address> = (0..studies[k].n()).map(|i| (k, i)).collect();
                    Fold { train: complement(studies, &validation), validation }
                })
                .collect()
        }
        Scheme::WithinStudy(id) => {
            check_folds(n_folds)?;
            let k = index_of(studies, id)?;
            let n = studies[k].n();
            if n < n_folds {
                return Err(too_few(id, n, n_folds));
            }
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            chunk_bounds(n, n_folds)
                .into_iter()
                .map(|(a, b)| {
                    let mut validation: Vec<Address> = rows[a..b].iter().map(|&i| (k, i)).collect();
                    validation.sort_unstable();
                    Fold { train: complement(studies, &validation), validation }
                })
                .collect()
        }
        Scheme::StudyBalanced => {
            check_folds(n_folds)?;
            let mut per_fold: Vec<Vec<Address>> = vec![Vec::new(); n_folds];
            for (k, s) in studies.iter().enumerate() {
                if s.n() < n_folds {
                    return Err(too_few(s.id(), s.n(), n_folds));
                }
                let mut rows: Vec<usize> = (0..s.n()).collect();
                rows.shuffle(&mut rng);
                for (f, (a, b)) in chunk_bounds(s.n(), n_folds).into_iter().enumerate() {
                    per_fold[f].extend(rows[a..b].iter().map(|&i| (k, i)));
                }
            }
            per_fold
                .into_iter()
                .map(|mut validation| {
                    validation.sort_unstable();
                    Fold { train: complement(studies, &validation), validation }
                })
                .collect()
        }
        Scheme::TimeSeriesSplit(id) => {
            check_folds(n_folds)?;
            let k = index_of(studies, id)?;
            let n = studies[k].n();
            let initial = n / 2;
            if n - initial < n_folds || initial == 0 {
                return Err(too_few(id, n, 2 * n_folds));
            }
            chunk_bounds(n - initial, n_folds)
                .into_iter()
                .map(|(a, b)| {
                    let validation: Vec<Address> = (initial + a..initial + b).map(|i| (k, i)).collect();
                    let train = all_addresses(studies)
                        .into_iter()
                        .filter(|&(j, i)| j != k || i < initial + a)
                        .collect();
                    Fold { train, validation }
                })
                .collect()
        }
    };
    Ok(FoldPlan { scheme, folds })
}

fn check_folds(n_folds: usize) -> Result<()> {
    if n_folds < 2 {
        return Err(invalid("n_folds", format!("{n_folds} is below 2")));
    }
    Ok(())
}

fn too_few(id: &str, n: usize, needed: usize) -> Error {
    Error::InsufficientData(format!("study `{id}` has {n} rows, fewer than the {needed} needed"))
}

/// Studies restricted to the given addresses, keeping study order and ids.
/// Studies with no selected rows are dropped.
pub fn subset(studies: &[Study], addresses: &[Address]) -> Result<Vec<Study>> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); studies.len()];
    for &(k, i) in addresses {
        rows[k].push(i);
    }
    studies
        .iter()
        .zip(rows)
        .filter(|(_, r)| !r.is_empty())
        .map(|(s, r)| s.select_rows(&r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parameter {
    Eta,
    Mu,
    LambdaK,
    StackMu,
    TomLambda,
}

impl Parameter {
    pub fn label(self) -> &'static str {
        match self {
            Parameter::Eta => "eta",
            Parameter::Mu => "mu",
            Parameter::LambdaK => "lambda_k",
            Parameter::StackMu => "stack_mu",
            Parameter::TomLambda => "tom_lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub parameter: Parameter,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(parameter: Parameter, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("grid", "must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid", "values must be finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid", "values must be strictly increasing"));
        }
        Ok(Grid { parameter, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `count` log-spaced points from `lo` to `hi` inclusive.
    pub fn log_spaced(parameter: Parameter, lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err(invalid("grid", "log grid needs 0 < lo < hi and at least two points"));
        }
        let (a, b) = (lo.log10(), hi.log10());
        let values = (0..count)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
            .collect();
        Grid::new(parameter, values)
    }

    pub fn default_eta() -> Self {
        let mut values = vec![0.01];
        values.extend((1..=19).map(|i| i as f64 * 0.05));
        values.push(0.99);
        Grid::new(Parameter::Eta, values).expect("static grid")
    }

    pub fn default_penalty(parameter: Parameter) -> Self {
        Grid::log_spaced(parameter, 1e-4, 1e2, 8).expect("static grid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub parameter: String,
    pub value: f64,
    pub fold: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: f64,
    pub mean_rmse: Vec<f64>,
    pub table: Vec<CvRow>,
}

/// Grid search: `factory(train, value)` fits a predictor, which is scored by
/// RMSE on each fold's validation rows. The smallest mean RMSE wins, ties
/// going to the smaller value.
pub fn tune_parameter<F, P>(
    studies: &[Study],
    factory: F,
    grid: &Grid,
    plan: &FoldPlan,
) -> Result<TuneResult>
where
    F: Fn(&[Study], f64) -> Result<P> + Sync,
    P: Predictor,
{
    let prepared: Vec<(Vec<Study>, Vec<Study>)> = plan
        .folds
        .iter()
        .map(|f| Ok((subset(studies, &f.train)?, subset(studies, &f.validation)?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..grid.values().len())
        .flat_map(|g| (0..prepared.len()).map(move |f| (g, f)))
        .collect();
    let score = |&(g, f): &(usize, usize)| -> Result<f64> {
        let (train, valid) = &prepared[f];
        let wrap = |e| Error::Fold { fold: f, source: Box::new(e) };
        let model = factory(train, grid.values()[g]).map_err(wrap)?;
        let mut y = Vec::new();
        let mut pred = Vec::new();
        for s in valid {
            y.extend(s.y().iter());
            pred.extend(model.predict(s.x()).map_err(wrap)?.iter());
        }
        Ok(rmse(&DVector::from_vec(y), &DVector::from_vec(pred)))
    };
    let scores: Vec<f64> = crate::par::map(&jobs, score).into_iter().collect::<Result<_>>()?;

    let n_folds = prepared.len();
    let mut table = Vec::with_capacity(jobs.len());
    let mut mean_rmse = Vec::with_capacity(grid.values().len());
    for (g, &value) in grid.values().iter().enumerate() {
        let fold_scores = &scores[g * n_folds..(g + 1) * n_folds];
        for (fold, &r) in fold_scores.iter().enumerate() {
            table.push(CvRow { parameter: grid.parameter.label().into(), value, fold, rmse: r });
        }
        mean_rmse.push(fold_scores.iter().sum::<f64>() / n_folds as f64);
    }
    let mut best = 0;
    for (g, &m) in mean_rmse.iter().enumerate() {
        if m < mean_rmse[best] || mean_rmse[best].is_nan() {
            best = g;
        }
    }
    Ok(TuneResult { best: grid.values()[best], mean_rmse, table })
}

pub fn write_cv_csv<W: Write>(writer: W, rows: &[CvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["parameter", "value", "fold", "rmse"])?;
    for r in rows {
        w.write_record([
            r.parameter.clone(),
            r.value.to_string(),
            r.fold.to_string(),
            r.rmse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// How the target study's rows are folded when tuning specialist quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetFolds {
    Random,
    TimeOrdered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOptions {
    pub lambda_grid: Grid,
    pub mu_grid: Grid,
    pub eta_grid: Grid,
    pub n_folds: usize,
    pub target_folds: TargetFolds,
    /// Skip λ tuning and use this value for every study and for ToM.
    pub fixed_lambda: Option<f64>,
    pub variants: Vec<VariantKind>,
    pub seed: u64,
}

impl TuningOptions {
    pub fn new(seed: u64) -> Self {
        TuningOptions {
            lambda_grid: Grid::default_penalty(Parameter::LambdaK),
            mu_grid: Grid::default_penalty(Parameter::Mu),
            eta_grid: Grid::default_eta(),
            n_folds: 5,
            target_folds: TargetFolds::Random,
            fixed_lambda: None,
            variants: vec![
                VariantKind::Generalist,
                VariantKind::Specialist,
                VariantKind::SpecialistNoReuse,
            ],
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub hyper: Hyper,
    pub table: Vec<CvRow>,
}

/// Runs the tuning sequence: per-study λ, stacking μ, OEC μ (generalist at
/// η = 0.5), η for each requested variant, then ToM λ.
///
/// `studies` is the full training collection. Generalist quantities are tuned
/// on `studies` without the target when `target` is set, matching how the
/// generalist methods are then fit.
pub fn tune_protocol(studies: &[Study], target: Option<&str>, opts: &TuningOptions) -> Result<Tuned> {
    let mut table = Vec::new();
    let mut seed = opts.seed;
    let mut next_seed = || {
        seed = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        seed
    };
    let generalist: Vec<Study> = match target {
        Some(t) => studies.iter().filter(|s| s.id() != t).cloned().collect(),
        None => studies.to_vec(),
    };
    let target_scheme = |id: &str| match opts.target_folds {
        TargetFolds::Random => Scheme::WithinStudy(id.to_string()),
        TargetFolds::TimeOrdered => Scheme::TimeSeriesSplit(id.to_string()),
    };

    let mut lambdas = Lambdas::default();
    for s in studies {
        let lambda = match opts.fixed_lambda {
            Some(l) => l,
            None => {
                let scheme = if Some(s.id()) == target {
                    target_scheme(s.id())
                } else {
                    Scheme::WithinStudy(s.id().to_string())
                };
                let folds = opts.n_folds.min(s.n() / 2).max(2);
                let plan = make_folds(studies, scheme, folds, next_seed())?;
                let id = s.id().to_string();
                let r = tune_parameter(
                    studies,
                    |train, l| {
                        let own = train.iter().find(|t| t.id() == id).ok_or_else(|| {
                            Error::InsufficientData(format!("fold left no rows of `{id}`"))
                        })?;
                        ssm_fit(own, l)
                    },
                    &opts.lambda_grid,
                    &plan,
                )?;
                table.extend(r.table);
                r.best
            }
        };
        lambdas.insert(s.id(), lambda);
    }

    let balanced = make_folds(&generalist, Scheme::StudyBalanced, opts.n_folds, next_seed())?;
    let stack_grid = Grid::new(Parameter::StackMu, opts.mu_grid.values().to_vec())?;
    let r = tune_parameter(
        &generalist,
        |train, mu| mss_fit(train, &Variant::Generalist, &lambdas, mu),
        &stack_grid,
        &balanced,
    )?;
    table.extend(r.table);
    let stack_mu = r.best;

    let mu_grid = Grid::new(Parameter::Mu, opts.mu_grid.values().to_vec())?;
    let r = tune_parameter(
        &generalist,
        |train, mu| fit_oec_any_eta(train, &Variant::Generalist, 0.5, mu, &lambdas),
        &mu_grid,
        &balanced,
    )?;
    table.extend(r.table);
    let oec_mu = r.best;

    let mut hyper = Hyper {
        lambdas: lambdas.clone(),
        stack_mu,
        oec_mu,
        eta_g: 0.5,
        eta_s: 0.5,
        eta_sn: 0.5,
        tom_lambda: 0.0,
    };
    let eta_grid = Grid::new(Parameter::Eta, opts.eta_grid.values().to_vec())?;
    for &kind in &opts.variants {
        let (set, plan) = match (kind, target) {
            (VariantKind::Generalist, _) => (&generalist[..], balanced.clone()),
            (_, Some(t)) => {
                let n = studies[index_of(studies, t)?].n();
                let folds = studies.len().clamp(2, (n / 2).max(2));
                (studies, make_folds(studies, target_scheme(t), folds, next_seed())?)
            }
            (_, None) => continue,
        };
        let variant = kind.with_target(target)?;
        let r = tune_parameter(
            set,
            |train, eta| -> Result<Fitted> { fit_oec_any_eta(train, &variant, eta, oec_mu, &lambdas) },
            &eta_grid,
            &plan,
        )?;
        table.extend(r.table.into_iter().map(|mut row| {
            row.parameter = format!("eta_{}", kind.suffix().to_ascii_lowercase());
            row
        }));
        hyper.set_eta(kind, r.best);
    }

    hyper.tom_lambda = match opts.fixed_lambda {
        Some(l) => l,
        None if generalist.len() >= 2 => {
            let plan = make_folds(&generalist, Scheme::HoldOneStudyOut, generalist.len(), 0)?;
            let grid = Grid::new(Parameter::TomLambda, opts.lambda_grid.values().to_vec())?;
            let r = tune_parameter(&generalist, tom_fit, &grid, &plan)?;
            table.extend(r.table);
            r.best
        }
        None => opts.lambda_grid.values()[0],
    };
    Ok(Tuned { hyper, table })
}

impl Predictor for crate::stacking::LinearModel {
    fn predict(&self, x_new: &nalgebra::DMatrix<f64>) -> Result<DVector<f64>> {
        crate::stacking::LinearModel::predict(self, x_new)
    }
}

impl Predictor for crate::stacking::MssModel {
    fn predict(&self, x_new: &nalgebra::DMatrix<f64>) -> Result<DVector<f64>> {
        crate::stacking::mss_predict(self, x_new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::collections::BTreeSet;

    fn studies(sizes: &[usize]) -> Vec<Study> {
        sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let x = DMatrix::from_fn(n, 1, |i, _| i as f64 + k as f64 * 0.3);
                let y = DVector::from_fn(n, |i, _| 2.0 * i as f64 + (i % 3) as f64);
                Study::new(format!("s{k}"), y, x).unwrap()
            })
            .collect()
    }

    fn assert_no_leak(plan: &FoldPlan) {
        for f in &plan.folds {
            let train: BTreeSet<_> = f.train.iter().collect();
            assert!(f.validation.iter().all(|a| !train.contains(a)));
        }
    }

    #[test]
    fn hold_one_study_out_validates_whole_studies() {
        let s = studies(&[4, 5, 6]);
        let plan = make_folds(&s, Scheme::HoldOneStudyOut, 0, 1).unwrap();
        assert_eq!(plan.folds.len(), 3);
        for (k, f) in plan.folds.iter().enumerate() {
            assert!(f.validation.iter().all(|&(j, _)| j == k));
            assert_eq!(f.validation.len(), s[k].n());
        }
        assert_no_leak(&plan);
    }

    #[test]
    fn study_balanced_two_rows_per_study_per_fold() {
        let s = studies(&[10, 10]);
        let plan = make_folds(&s, Scheme::StudyBalanced, 5, 3).unwrap();
        for f in &plan.folds {
            assert_eq!(f.validation.iter().filter(|a| a.0 == 0).count(), 2);
            assert_eq!(f.validation.iter().filter(|a| a.0 == 1).count(), 2);
        }
        assert_no_leak(&plan);
    }

    #[test]
    fn within_study_validation_is_a_partition() {
        let s = studies(&[7, 11]);
        let plan = make_folds(&s, Scheme::WithinStudy("s1".into()), 3, 9).unwrap();
        let mut seen = [0usize; 11];
        for f in &plan.folds {
            for &(k, i) in &f.validation {
                assert_eq!(k, 1);
                seen[i] += 1;
            }
            assert_eq!(f.train.len() + f.validation.len(), 18);
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_no_leak(&plan);
    }

    #[test]
    fn time_series_split_validates_after_training() {
        let s = studies(&[5, 12]);
        let plan = make_folds(&s, Scheme::TimeSeriesSplit("s1".into()), 3, 0).unwrap();
        for f in &plan.folds {
            let first = f.validation.iter().map(|a| a.1).min().unwrap();
            assert!(f.train.iter().filter(|a| a.0 == 1).all(|a| a.1 < first));
        }
        let covered: Vec<usize> = plan.folds.iter().flat_map(|f| f.validation.iter().map(|a| a.1)).collect();
        assert_eq!(covered, (6..12).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let s = studies(&[3, 10]);
        assert!(make_folds(&s, Scheme::StudyBalanced, 5, 0).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(Parameter::Eta, vec![]).is_err());
        assert!(Grid::new(Parameter::Eta, vec![0.2, 0.1]).is_err());
        let d = Grid::default_eta();
        assert_eq!(d.values().len(), 21);
        assert_eq!(d.values()[0], 0.01);
        assert_eq!(d.values()[20], 0.99);
        let p = Grid::default_penalty(Parameter::Mu);
        assert_eq!(p.values().len(), 8);
        assert!((p.values()[0] - 1e-4).abs() < 1e-18 && (p.values()[7] - 1e2).abs() < 1e-10);
    }

    #[test]
    fn single_value_grid_is_returned() {
        let s = studies(&[10, 10]);
        let plan = make_folds(&s, Scheme::HoldOneStudyOut, 2, 0).unwrap();
        let g = Grid::new(Parameter::TomLambda, vec![0.3]).unwrap();
        assert_eq!(tune_parameter(&s, tom_fit, &g, &plan).unwrap().best, 0.3);
    }

    #[test]
    fn noiseless_problem_prefers_zero_penalty() {
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * (j + 3)) % 7) as f64 + i as f64 * 0.1);
        let y = DVector::from_fn(20, |i, _| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)]);
        let s = vec![Study::new("a", y, x).unwrap()];
        let plan = make_folds(&s, Scheme::WithinStudy("a".into()), 4, 2).unwrap();
        let g = Grid::new(Parameter::LambdaK, vec![0.0, 1.0, 10.0]).unwrap();
        let r = tune_parameter(&s, |t, l| ssm_fit(&t[0], l), &g, &plan).unwrap();
        assert_eq!(r.best, 0.0);
    }

    #[test]
    fn cv_table_matches_hand_loop() {
        let s = studies(&[8, 9, 6]);
        let plan = make_folds(&s, Scheme::HoldOneStudyOut, 3, 0).unwrap();
        let g = Grid::new(Parameter::TomLambda, vec![0.0, 0.5]).unwrap();
        let r = tune_parameter(&s, tom_fit, &g, &plan).unwrap();
        let mut i = 0;
        for &lambda in g.values() {
            for held in 0..3 {
                let train: Vec<Study> = (0..3).filter(|&k| k != held).map(|k| s[k].clone()).collect();
                let m = tom_fit(&train, lambda).unwrap();
                let p = m.predict(s[held].x()).unwrap();
                let e: f64 = (0..s[held].n()).map(|r| (p[r] - s[held].y()[r]).powi(2)).sum();
                let expected = (e / s[held].n() as f64).sqrt();
                assert!((r.table[i].rmse - expected).abs() < 1e-12);
                assert_eq!(r.table[i].fold, held);
                i += 1;
            }
        }
    }

    #[test]
    fn ties_break_toward_smaller_value() {
        let s = studies(&[6, 6]);
        let plan = make_folds(&s, Scheme::HoldOneStudyOut, 2, 0).unwrap();
        let g = Grid::new(Parameter::Mu, vec![1.0, 2.0, 3.0]).unwrap();
        // predictor ignores the grid value, so all scores tie
        let r = tune_parameter(&s, |t, _| tom_fit(t, 0.0), &g, &plan).unwrap();
        assert_eq!(r.best, 1.0);
    }

    #[test]
    fn fold_errors_carry_fold_index() {
        let s = studies(&[6, 6]);
        let plan = make_folds(&s, Scheme::HoldOneStudyOut, 2, 0).unwrap();
        let g = Grid::new(Parameter::Mu, vec![1.0]).unwrap();
        let err = tune_parameter(&s, |_, _| -> Result<crate::stacking::LinearModel> {
            Err(Error::Parse("boom".into()))
        }, &g, &plan)
        .unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 0, .. }));
    }

    #[test]
    fn protocol_runs_end_to_end() {
        let s = studies(&[20, 20, 20]);
        let mut opts = TuningOptions::new(5);
        opts.eta_grid = Grid::new(Parameter::Eta, vec![0.1, 0.5, 0.9]).unwrap();
        opts.lambda_grid = Grid::new(Parameter::LambdaK, vec![0.01, 1.0]).unwrap();
        opts.mu_grid = Grid::new(Parameter::Mu, vec![0.01, 1.0]).unwrap();
        let a = tune_protocol(&s, Some("s2"), &opts).unwrap();
        let b = tune_protocol(&s, Some("s2"), &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.hyper.lambdas.get("s2").is_ok());
    }
}
