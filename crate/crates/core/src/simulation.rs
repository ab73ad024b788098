//! Data generators for the two simulation designs and the replicate runner.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{lstsq_min_norm, numerical_rank};
use crate::methods::{fit_method, rmse, Method, Predictor};
use crate::model::Study;
use crate::mortality::{fourier_design, prepare, synthetic_corpus, CountrySeries, SyntheticCorpusConfig};
use crate::stacking::VariantKind;
use crate::tuning::{tune_protocol, TargetFolds, TuningOptions};

/// Id given to the target study in generated data.
pub const TARGET_ID: &str = "target";

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalHyperparameters {
    pub mu_theta: DVector<f64>,
    pub sigma_theta: DMatrix<f64>,
    pub residual_variance_pool: Vec<f64>,
}

/// Per-study OLS with an intercept; returns the coefficient mean, their
/// sample covariance and each study's residual variance.
pub fn estimate_empirical_hyperparameters(studies: &[Study]) -> Result<EmpiricalHyperparameters> {
    if studies.len() < 2 {
        return Err(Error::InsufficientData("need at least two studies".into()));
    }
    let q = studies[0].p() + 1;
    let mut gammas = Vec::with_capacity(studies.len());
    let mut pool = Vec::with_capacity(studies.len());
    for s in studies {
        if s.p() + 1 != q {
            return Err(Error::DimensionMismatch { context: "covariates", expected: q - 1, actual: s.p() });
        }
        let mut x = DMatrix::from_element(s.n(), q, 1.0);
        x.columns_mut(1, q - 1).copy_from(s.x());
        if s.n() <= q || numerical_rank(&x) < q {
            return Err(Error::RankDeficient(format!("study `{}` design is not full rank", s.id())));
        }
        let g = lstsq_min_norm(&x, s.y());
        let rss = (s.y() - &x * &g).norm_squared();
        pool.push(rss / (s.n() - q) as f64);
        gammas.push(g);
    }
    let k = gammas.len() as f64;
    let mean = gammas.iter().fold(DVector::zeros(q), |acc, g| acc + g) / k;
    let outer = gammas.iter().fold(DMatrix::zeros(q, q), |acc, g| acc + g * g.transpose());
    let sigma = (outer - &mean * mean.transpose() * k) / (k - 1.0);
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(EmpiricalHyperparameters { mu_theta: mean, sigma_theta: sigma, residual_variance_pool: pool })
}

/// Symmetric square root factor `L` with `L Lᵀ = a`, rejecting matrices with
/// materially negative eigenvalues.
fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-9 * max.max(1.0) {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std_normal(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataDrivenSimConfig {
    pub mu_theta: Vec<f64>,
    pub sigma_theta: Vec<Vec<f64>>,
    pub sigma2_theta: f64,
    pub residual_variance_pool: Vec<f64>,
    /// Training studies besides the target.
    pub k: usize,
    pub n_target: usize,
    pub n_test: usize,
    pub n_k_range: (usize, usize),
}

impl DataDrivenSimConfig {
    pub fn from_hyperparameters(h: &EmpiricalHyperparameters, k: usize, sigma2_theta: f64) -> Self {
        DataDrivenSimConfig {
            mu_theta: h.mu_theta.iter().copied().collect(),
            sigma_theta: h.sigma_theta.row_iter().map(|r| r.iter().copied().collect()).collect(),
            sigma2_theta,
            residual_variance_pool: h.residual_variance_pool.clone(),
            k,
            n_target: 52,
            n_test: 52,
            n_k_range: (104, 517),
        }
    }

    /// Hyperparameters estimated from a weekly corpus, one study per country
    /// using all its weeks.
    pub fn from_corpus(corpus: &[CountrySeries], k: usize, sigma2_theta: f64) -> Result<Self> {
        let studies = corpus
            .iter()
            .map(|s| {
                let p = prepare(s)?;
                let rows: Vec<usize> = (0..p.t.len()).collect();
                p.study(&rows, true)
            })
            .collect::<Result<Vec<_>>>()?;
        let h = estimate_empirical_hyperparameters(&studies)?;
        Ok(Self::from_hyperparameters(&h, k, sigma2_theta))
    }

    /// Hyperparameters from the built-in synthetic reference corpus.
    pub fn reference(k: usize, sigma2_theta: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(REFERENCE_CORPUS_SEED);
        let (corpus, _) = synthetic_corpus(&reference_corpus_config(), &mut rng)?;
        Self::from_corpus(&corpus, k, sigma2_theta)
    }

    pub fn sigma_matrix(&self) -> Result<DMatrix<f64>> {
        let q = self.mu_theta.len();
        if self.sigma_theta.len() != q || self.sigma_theta.iter().any(|r| r.len() != q) {
            return Err(invalid("sigma_theta", format!("must be {q}x{q}")));
        }
        Ok(DMatrix::from_fn(q, q, |i, j| self.sigma_theta[i][j]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_theta.len() != 6 {
            return Err(invalid("mu_theta", "must have 6 entries (intercept, trend, two Fourier pairs)"));
        }
        let s = self.sigma_matrix()?;
        if (&s - s.transpose()).amax() > 1e-9 * s.amax().max(1.0) {
            return Err(invalid("sigma_theta", "must be symmetric"));
        }
        psd_factor(&s)?;
        if !(self.sigma2_theta >= 0.0 && self.sigma2_theta.is_finite()) {
            return Err(invalid("sigma2_theta", "must be non-negative"));
        }
        if self.residual_variance_pool.is_empty() || self.residual_variance_pool.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("residual_variance_pool", "must be non-empty and positive"));
        }
        if self.k < 1 {
            return Err(invalid("k", "need at least one auxiliary study"));
        }
        if self.n_target < 2 || self.n_test < 1 {
            return Err(invalid("n_target", "need at least two training and one test row"));
        }
        if self.n_k_range.0 < 2 || self.n_k_range.0 > self.n_k_range.1 {
            return Err(invalid("n_k_range", "must be an ordered range with minimum at least 2"));
        }
        Ok(())
    }
}

pub const REFERENCE_CORPUS_SEED: u64 = 20_200_101;

/// Corpus used to derive default data-driven hyperparameters.
pub fn reference_corpus_config() -> SyntheticCorpusConfig {
    SyntheticCorpusConfig {
        countries: 12,
        southern: 1,
        start_year: 2010,
        years: 10,
        // crude death rates differ by several per 1000 between countries
        country_sd: vec![2.0, 0.002, 0.4, 0.4, 0.15, 0.15],
        ..Default::default()
    }
}

/// One generated replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    /// Auxiliary studies followed by the target's training rows.
    pub studies: Vec<Study>,
    pub test: Study,
    /// True coefficients (intercept first), aligned with `studies`.
    pub theta: Vec<DVector<f64>>,
    pub noise_variances: Vec<f64>,
}

impl SimData {
    pub fn target(&self) -> &Study {
        self.studies.last().expect("target present")
    }
}

fn linear_outcome(x: &DMatrix<f64>, theta: &DVector<f64>, sd: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let beta = theta.rows(1, theta.len() - 1);
    DVector::from_fn(x.nrows(), |i, _| {
        let e: f64 = StandardNormal.sample(rng);
        theta[0] + (x.row(i) * beta)[(0, 0)] + sd * e
    })
}

/// Studies end at a common week `T`; auxiliary study `k` covers the `n_k`
/// weeks before it, the target trains on the `n_target` weeks before it and is
/// tested on the `n_test` weeks from `T`.
pub fn simulate_data_driven(cfg: &DataDrivenSimConfig, rng: &mut ChaCha8Rng) -> Result<SimData> {
    cfg.validate()?;
    let mu = DVector::from_vec(cfg.mu_theta.clone());
    let factor = psd_factor(&cfg.sigma_matrix()?)? * cfg.sigma2_theta.sqrt();
    let end = cfg.n_k_range.1.max(cfg.n_target);
    let weeks = |lo: usize, hi: usize| (lo..hi).map(|t| t as f64).collect::<Vec<_>>();
    let mut studies = Vec::with_capacity(cfg.k + 1);
    let mut theta = Vec::with_capacity(cfg.k + 1);
    let mut noise = Vec::with_capacity(cfg.k + 1);
    let mut test = None;
    for k in 0..=cfg.k {
        let th = &mu + &factor * gaussian_vector(rng, mu.len());
        let var = cfg.residual_variance_pool[rng.random_range(0..cfg.residual_variance_pool.len())];
        let is_target = k == cfg.k;
        let n = if is_target { cfg.n_target } else { rng.random_range(cfg.n_k_range.0..=cfg.n_k_range.1) };
        let x = fourier_design(&weeks(end - n, end), true);
        let y = linear_outcome(&x, &th, var.sqrt(), rng);
        let id = if is_target { TARGET_ID.to_string() } else { format!("s{}", k + 1) };
        if is_target {
            let xt = fourier_design(&weeks(end, end + cfg.n_test), true);
            let yt = linear_outcome(&xt, &th, var.sqrt(), rng);
            test = Some(Study::new(id.clone(), yt, xt)?);
        }
        studies.push(Study::new(id, y, x)?);
        theta.push(th);
        noise.push(var);
    }
    Ok(SimData { studies, test: test.expect("target generated"), theta, noise_variances: noise })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralSimConfig {
    /// 3 (clustered) or 6 (every study its own cluster).
    pub clusters: usize,
    pub k: usize,
    pub p: usize,
    pub n_zero_coeffs: usize,
    pub sigma2_delta: f64,
    pub sigma2_x: f64,
    pub n_k_range: (usize, usize),
    pub n_target: usize,
    pub n_test: usize,
    pub sigma2_eps_range: (f64, f64),
    pub tau_range: (f64, f64),
    pub mu_delta_range: (f64, f64),
    pub mu_tilde_mean: f64,
    pub mu_tilde_var: f64,
}

impl GeneralSimConfig {
    pub fn new(clusters: usize, sigma2_x: f64, sigma2_delta: f64) -> Self {
        GeneralSimConfig {
            clusters,
            k: 5,
            p: 20,
            n_zero_coeffs: 10,
            sigma2_delta,
            sigma2_x,
            n_k_range: (150, 300),
            n_target: 50,
            n_test: 100,
            sigma2_eps_range: (1.0, 2.0),
            tau_range: (-0.05, 0.05),
            mu_delta_range: (-2.0, 2.0),
            mu_tilde_mean: 5.0,
            mu_tilde_var: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k != 5 || !(self.clusters == 3 || self.clusters == 6) {
            return Err(invalid("clusters", "supported layouts are k = 5 with 3 or 6 clusters"));
        }
        if self.p == 0 || self.n_zero_coeffs > self.p {
            return Err(invalid("n_zero_coeffs", "must not exceed p"));
        }
        for (name, v) in [("sigma2_delta", self.sigma2_delta), ("sigma2_x", self.sigma2_x), ("mu_tilde_var", self.mu_tilde_var)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be non-negative"));
            }
        }
        for (name, (lo, hi)) in [
            ("sigma2_eps_range", self.sigma2_eps_range),
            ("tau_range", self.tau_range),
            ("mu_delta_range", self.mu_delta_range),
        ] {
            if !(lo <= hi) {
                return Err(invalid(name, "lower bound exceeds upper bound"));
            }
        }
        if self.sigma2_eps_range.0 <= 0.0 {
            return Err(invalid("sigma2_eps_range", "variances must be positive"));
        }
        if self.n_k_range.0 < 2 || self.n_k_range.0 > self.n_k_range.1 || self.n_target < 2 || self.n_test < 1 {
            return Err(invalid("n_k_range", "sample sizes too small or range unordered"));
        }
        Ok(())
    }

    /// Cluster of each training study and of the target. With three clusters
    /// the training studies fill them as 2, 2, 1 and the target joins the
    /// third, giving two studies per cluster.
    pub fn assignment(&self) -> (Vec<usize>, usize) {
        match self.clusters {
            3 => (vec![0, 0, 1, 1, 2], 2),
            _ => ((0..self.k).collect(), self.k),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn simulate_general(cfg: &GeneralSimConfig, rng: &mut ChaCha8Rng) -> Result<SimData> {
    cfg.validate()?;
    let p = cfg.p;
    let mut mu_delta = DVector::from_fn(p + 1, |_, _| uniform(rng, cfg.mu_delta_range));
    for j in sample(rng, p, cfg.n_zero_coeffs) {
        mu_delta[j + 1] = 0.0;
    }
    let sd_delta = cfg.sigma2_delta.sqrt();
    let deltas: Vec<DVector<f64>> = (0..cfg.clusters)
        .map(|_| &mu_delta + gaussian_vector(rng, p + 1) * sd_delta)
        .collect();
    let tilde_sd = cfg.mu_tilde_var.sqrt();
    let mu_tilde = DVector::from_fn(p, |_, _| cfg.mu_tilde_mean + tilde_sd * std_normal(rng));
    let sd_x = cfg.sigma2_x.sqrt();
    let zetas: Vec<DVector<f64>> = (0..cfg.clusters).map(|_| &mu_tilde + gaussian_vector(rng, p) * sd_x).collect();
    let a = DMatrix::from_fn(p, p, |_, _| std_normal(rng));
    let l_x = psd_factor(&(&a * a.transpose() / p as f64))?;

    let (train_clusters, target_cluster) = cfg.assignment();
    let half = cfg.sigma2_delta / 20.0;
    let mut studies = Vec::with_capacity(cfg.k + 1);
    let mut theta = Vec::with_capacity(cfg.k + 1);
    let mut noise = Vec::with_capacity(cfg.k + 1);
    let mut test = None;
    for k in 0..=cfg.k {
        let is_target = k == cfg.k;
        let c = if is_target { target_cluster } else { train_clusters[k] };
        let th = &deltas[c] + DVector::from_fn(p + 1, |_, _| uniform(rng, (-half, half)));
        let tau = DVector::from_fn(p, |_, _| uniform(rng, cfg.tau_range));
        let mean = &zetas[c] + tau;
        let var = uniform(rng, cfg.sigma2_eps_range);
        let n = if is_target { cfg.n_target } else { rng.random_range(cfg.n_k_range.0..=cfg.n_k_range.1) };
        let mut draw = |n: usize| -> Result<Study> {
            let mut x = DMatrix::zeros(n, p);
            for i in 0..n {
                let row = &mean + &l_x * gaussian_vector(rng, p);
                x.row_mut(i).copy_from(&row.transpose());
            }
            let y = linear_outcome(&x, &th, var.sqrt(), rng);
            let id = if is_target { TARGET_ID.to_string() } else { format!("s{}", k + 1) };
            Study::new(id, y, x)
        };
        let train = draw(n)?;
        if is_target {
            test = Some(draw(cfg.n_test)?);
        }
        studies.push(train);
        theta.push(th);
        noise.push(var);
    }
    Ok(SimData { studies, test: test.expect("target generated"), theta, noise_variances: noise })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum Generator {
    DataDriven(DataDrivenSimConfig),
    General(GeneralSimConfig),
}

impl Generator {
    pub fn generate(&self, rng: &mut ChaCha8Rng) -> Result<SimData> {
        match self {
            Generator::DataDriven(c) => simulate_data_driven(c, rng),
            Generator::General(c) => simulate_general(c, rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Generator::DataDriven(c) => c.validate(),
            Generator::General(c) => c.validate(),
        }
    }

    /// Table-row keys of the setting.
    pub fn setting(&self) -> Vec<(String, String)> {
        match self {
            Generator::DataDriven(c) => vec![("k".into(), c.k.to_string()), ("sigma2_theta".into(), c.sigma2_theta.to_string())],
            Generator::General(c) => vec![
                ("clusters".into(), c.clusters.to_string()),
                ("sigma2_x".into(), c.sigma2_x.to_string()),
                ("sigma2_delta".into(), c.sigma2_delta.to_string()),
            ],
        }
    }

    /// Tuning used for this design: the data-driven design has no per-study
    /// ridge penalty and folds the target in time order.
    pub fn default_tuning(&self, seed: u64) -> TuningOptions {
        let mut t = TuningOptions::new(seed);
        if let Generator::DataDriven(_) = self {
            t.fixed_lambda = Some(0.0);
            t.target_folds = TargetFolds::TimeOrdered;
        }
        t
    }
}

/// Test-set predictions of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub test_y: DVector<f64>,
    pub predictions: Vec<(Method, DVector<f64>)>,
    pub rmse: Vec<(Method, f64)>,
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Generates, tunes, fits and scores one replicate. Methods that do not use
/// the target are trained on the auxiliary studies only.
pub fn run_replicate(
    generator: &Generator,
    methods: &[Method],
    replicate: usize,
    seed: u64,
    tuning: &TuningOptions,
) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(seed, replicate);
    let data = generator.generate(&mut rng)?;
    let mut opts = tuning.clone();
    opts.seed = rng.random();
    opts.variants = oec_variants(methods);
    let tuned = tune_protocol(&data.studies, Some(TARGET_ID), &opts)?;
    let aux: Vec<Study> = data.studies.iter().filter(|s| s.id() != TARGET_ID).cloned().collect();
    let mut predictions = Vec::with_capacity(methods.len());
    let mut scores = Vec::with_capacity(methods.len());
    for &m in methods {
        let train = if m.needs_target() { &data.studies } else { &aux };
        let fitted = fit_method(m, train, Some(TARGET_ID), &tuned.hyper)?;
        let pred = fitted.predict(data.test.x())?;
        scores.push((m, rmse(data.test.y(), &pred)));
        predictions.push((m, pred));
    }
    Ok(ReplicateOutcome { replicate, test_y: data.test.y().clone(), predictions, rmse: scores })
}

fn oec_variants(methods: &[Method]) -> Vec<VariantKind> {
    let mut v: Vec<VariantKind> = methods
        .iter()
        .filter_map(|m| match m {
            Method::Oec(k) => Some(*k),
            _ => None,
        })
        .collect();
    v.sort_by_key(|k| k.suffix());
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub method: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub mean_rmse: f64,
    /// Mean per-replicate ratio to the stacking counterpart (OEC methods only).
    pub vs_mss: Option<f64>,
    pub vs_ssm: Option<f64>,
    pub vs_tom: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub setting: Vec<(String, String)>,
    pub rows: Vec<ReplicateRow>,
    pub failures: Vec<(usize, String)>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn summary_for(&self, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method.label())
    }

    pub fn completed(&self) -> usize {
        let mut reps: Vec<usize> = self.rows.iter().map(|r| r.replicate).collect();
        reps.dedup();
        reps.len()
    }
}

pub fn run_experiment(
    generator: &Generator,
    methods: &[Method],
    replicates: usize,
    seed: u64,
    tuning: &TuningOptions,
) -> Result<ExperimentResult> {
    if replicates == 0 {
        return Err(invalid("replicates", "must be at least 1"));
    }
    if methods.is_empty() {
        return Err(invalid("methods", "must not be empty"));
    }
    generator.validate()?;
    let idx: Vec<usize> = (0..replicates).collect();
    let outcomes = crate::par::map(&idx, |&r| run_replicate(generator, methods, r, seed, tuning));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in idx.into_iter().zip(outcomes) {
        match out {
            Ok(o) => rows.extend(o.rmse.into_iter().map(|(m, v)| ReplicateRow { replicate: r, method: m.label(), rmse: v })),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    let summary = summarize(&rows, methods);
    Ok(ExperimentResult { setting: generator.setting(), rows, failures, summary })
}

/// Mean RMSE and mean per-replicate ratios to the baselines present.
pub fn summarize(rows: &[ReplicateRow], methods: &[Method]) -> Vec<SummaryRow> {
    let mut by_rep: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows {
        by_rep.entry(r.replicate).or_default().insert(&r.method, r.rmse);
    }
    let mean_ratio = |num: &str, den: &str| -> Option<f64> {
        let v: Vec<f64> = by_rep.values().filter_map(|m| Some(m.get(num)? / m.get(den)?)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let mut seen = Vec::new();
    methods
        .iter()
        .filter(|m| {
            let new = !seen.contains(*m);
            seen.push(**m);
            new
        })
        .map(|&m| {
            let label = m.label();
            let own: Vec<f64> = rows.iter().filter(|r| r.method == label).map(|r| r.rmse).collect();
            let vs_mss = match m {
                Method::Oec(k) => mean_ratio(&label, &Method::Mss(k).label()),
                _ => None,
            };
            SummaryRow {
                mean_rmse: own.iter().sum::<f64>() / own.len().max(1) as f64,
                vs_mss,
                vs_ssm: mean_ratio(&label, "ssm"),
                vs_tom: mean_ratio(&label, "tom"),
                method: label,
            }
        })
        .collect()
}

pub fn write_replicates_csv<W: Write>(writer: W, rows: &[ReplicateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "method", "rmse"])?;
    for r in rows {
        w.write_record([r.replicate.to_string(), r.method.clone(), r.rmse.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row for the setting: its keys, replicate counts, then ratio columns.
pub fn write_summary_csv<W: Write>(writer: W, result: &ExperimentResult) -> Result<()> {
    let mut header: Vec<String> = result.setting.iter().map(|(k, _)| k.clone()).collect();
    let mut record: Vec<String> = result.setting.iter().map(|(_, v)| v.clone()).collect();
    header.extend(["replicates".to_string(), "failures".to_string()]);
    record.extend([result.completed().to_string(), result.failures.len().to_string()]);
    for s in &result.summary {
        let cols = [
            (format!("{}/{}", s.method, s.method.replace("oec", "mss")), s.vs_mss),
            (format!("{}/ssm", s.method), s.vs_ssm),
            (format!("{}/tom", s.method), s.vs_tom),
        ];
        for (name, v) in cols {
            if let Some(v) = v {
                header.push(name);
                record.push(format!("{v:.4}"));
            }
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    w.write_record(&record)?;
    w.flush()?;
    Ok(())
}
