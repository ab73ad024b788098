//! One function per subcommand: resolve settings, run, write artifacts.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use oec_core::document::ModelDocument;
use oec_core::methods::{fit_method, rmse, Hyper, Method};
use oec_core::model::{read_studies_csv, write_studies_csv, Study};
use oec_core::mortality::{
    build_loco_tasks, evaluate_loco, read_stmf_csv, synthetic_corpus, write_loco_csv, write_loco_summary_csv,
    write_stmf_csv, HemisphereMap, LocoOptions, SyntheticCorpusConfig, LOCO_METHODS,
};
use oec_core::simulation::{
    run_experiment, simulate_data_driven, simulate_general, write_replicates_csv, write_summary_csv,
    DataDrivenSimConfig, ExperimentResult, GeneralSimConfig, Generator, TARGET_ID,
};
use oec_core::stacking::VariantKind;
use oec_core::tuning::{tune_protocol, write_cv_csv, Grid, Parameter, TargetFolds, TuningOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::settings::{Checker, Settings};

const DEFAULT_OUTPUT_DIR: &str = "oec-output";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateDataDriven,
    SimulateGeneral,
    EvaluateMortality,
    Fit,
    Tune,
    MakeFixture,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateDataDriven => "simulate-datadriven",
            Command::SimulateGeneral => "simulate-general",
            Command::EvaluateMortality => "evaluate-mortality",
            Command::Fit => "fit",
            Command::Tune => "tune",
            Command::MakeFixture => "make-fixture",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct TuningSpec {
    fixed_lambda: Option<f64>,
    lambda_grid: Vec<f64>,
    mu_grid: Vec<f64>,
    eta_grid: Vec<f64>,
    n_folds: usize,
    target_folds: String,
}

impl TuningSpec {
    fn resolve(c: &mut Checker, default_fixed: Option<f64>, default_folds: TargetFolds) -> TuningSpec {
        let s = c.s;
        let penalty = Grid::default_penalty(Parameter::LambdaK).values().to_vec();
        let fixed_lambda = match (s.lambda, s.tune_lambda) {
            (Some(_), Some(true)) => {
                c.fail("lambda", "cannot be combined with tune_lambda");
                None
            }
            (_, Some(true)) => None,
            (Some(l), _) => Some(c.non_negative("lambda", Some(l), 0.0)),
            (None, _) => default_fixed,
        };
        let target_folds = match s.target_folds.as_deref() {
            None => folds_label(default_folds),
            Some(v @ ("random" | "time")) => v.to_string(),
            Some(v) => {
                c.fail("target_folds", format!("expected random or time, got `{v}`"));
                v.to_string()
            }
        };
        let n_folds = s.n_folds.unwrap_or(5);
        if n_folds < 2 {
            c.fail("n_folds", "must be at least 2");
        }
        TuningSpec {
            fixed_lambda,
            lambda_grid: c.grid("lambda_grid", &s.lambda_grid, &penalty, 0.0, f64::MAX),
            mu_grid: c.grid("mu_grid", &s.mu_grid, &penalty, 0.0, f64::MAX),
            eta_grid: c.grid("eta_grid", &s.eta_grid, Grid::default_eta().values(), 0.0, 1.0),
            n_folds,
            target_folds,
        }
    }

    fn options(&self, seed: u64) -> Result<TuningOptions> {
        let mut t = TuningOptions::new(seed);
        t.lambda_grid = Grid::new(Parameter::LambdaK, self.lambda_grid.clone())?;
        t.mu_grid = Grid::new(Parameter::Mu, self.mu_grid.clone())?;
        t.eta_grid = Grid::new(Parameter::Eta, self.eta_grid.clone())?;
        t.n_folds = self.n_folds;
        t.fixed_lambda = self.fixed_lambda;
        t.target_folds = if self.target_folds == "time" { TargetFolds::TimeOrdered } else { TargetFolds::Random };
        Ok(t)
    }
}

fn folds_label(f: TargetFolds) -> String {
    match f {
        TargetFolds::Random => "random".into(),
        TargetFolds::TimeOrdered => "time".into(),
    }
}

fn methods(c: &mut Checker, default: &[Method]) -> Vec<Method> {
    match &c.s.methods {
        None => default.to_vec(),
        Some(list) if list.is_empty() => {
            c.fail("methods", "must not be empty");
            Vec::new()
        }
        Some(list) => list
            .iter()
            .filter_map(|m| match m.parse::<Method>() {
                Ok(m) => Some(m),
                Err(_) => {
                    c.fail("methods", format!("unknown method `{m}`"));
                    None
                }
            })
            .collect(),
    }
}

/// Files written by one run, plus the manifest that describes it.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(s: &Settings) -> Result<Output> {
        let dir = s.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir, files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.files.push(name.to_string());
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    }

    /// Writes manifest.json: enough to re-run with `--config manifest.json`.
    fn finish<T: Serialize>(mut self, command: Command, s: &Settings, seed: Option<u64>, resolved: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a, T> {
            tool: &'a str,
            version: &'a str,
            command: &'a str,
            seed: Option<u64>,
            config: serde_json::Value,
            settings: &'a T,
            outputs: &'a [String],
        }
        self.files.push("manifest.json".into());
        let m = Manifest {
            tool: "oec",
            version: env!("CARGO_PKG_VERSION"),
            command: command.name(),
            seed,
            config: s.replayable(),
            settings: resolved,
            outputs: &self.files,
        };
        let mut body = serde_json::to_string_pretty(&m)?;
        body.push('\n');
        fs::write(self.dir.join("manifest.json"), body)?;
        Ok(self.dir)
    }
}

fn read_studies(path: &Path) -> Result<Vec<Study>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_studies_csv(f).with_context(|| format!("reading {}", path.display()))
}

fn load_hemispheres(path: Option<&Path>) -> Result<HemisphereMap> {
    match path {
        None => Ok(HemisphereMap::default()),
        Some(p) => Ok(HemisphereMap::from_toml(&fs::read_to_string(p)?)?),
    }
}

fn read_corpus(data: &Path, hemispheres: Option<&Path>) -> Result<Vec<oec_core::mortality::CountrySeries>> {
    let map = load_hemispheres(hemispheres)?;
    let f = File::open(data).with_context(|| format!("opening {}", data.display()))?;
    read_stmf_csv(f, &map).with_context(|| format!("reading {}", data.display()))
}

fn ratio(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn experiment_text(command: Command, result: &ExperimentResult) -> String {
    let mut t = String::new();
    let setting: Vec<String> = result.setting.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(t, "{} {}", command.name(), setting.join(" "));
    let _ = writeln!(t, "replicates completed {} failed {}", result.completed(), result.failures.len());
    let _ = writeln!(t, "{:<8} {:>10} {:>8} {:>8} {:>8}", "method", "mean_rmse", "/mss", "/ssm", "/tom");
    for r in &result.summary {
        let _ = writeln!(
            t,
            "{:<8} {:>10.4} {:>8} {:>8} {:>8}",
            r.method,
            r.mean_rmse,
            ratio(r.vs_mss),
            ratio(r.vs_ssm),
            ratio(r.vs_tom)
        );
    }
    for (r, e) in &result.failures {
        let _ = writeln!(t, "replicate {r} failed: {e}");
    }
    t
}

fn write_experiment(
    command: Command,
    s: &Settings,
    result: &ExperimentResult,
    seed: u64,
    resolved: &impl Serialize,
) -> Result<PathBuf> {
    let mut out = Output::new(s)?;
    write_replicates_csv(out.create("replicates.csv")?, &result.rows)?;
    write_summary_csv(out.create("summary.csv")?, result)?;
    out.text("summary.txt", &experiment_text(command, result))?;
    out.finish(command, s, Some(seed), resolved)
}

pub fn simulate_data_driven_cmd(s: &Settings) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Resolved {
        replicates: usize,
        methods: Vec<String>,
        k: usize,
        sigma2_theta: f64,
        corpus: Option<PathBuf>,
        hemispheres: Option<PathBuf>,
        tuning: TuningSpec,
    }
    let mut c = Checker::new(s);
    let seed = c.seed();
    let replicates = c.positive_usize("replicates", s.replicates, 30);
    let methods = methods(&mut c, &Method::ALL);
    let k = c.positive_usize("K", s.k, 5);
    let sigma2_theta = c.non_negative("sigma2_theta", s.sigma2_theta, 0.25);
    let corpus = c.existing_path("corpus", &s.corpus, false);
    let hemispheres = c.existing_path("hemispheres", &s.hemispheres, false);
    let tuning = TuningSpec::resolve(&mut c, Some(0.0), TargetFolds::TimeOrdered);
    c.finish()?;

    let cfg = match &corpus {
        Some(path) => DataDrivenSimConfig::from_corpus(&read_corpus(path, hemispheres.as_deref())?, k, sigma2_theta)?,
        None => DataDrivenSimConfig::reference(k, sigma2_theta)?,
    };
    let generator = Generator::DataDriven(cfg);
    let result = run_experiment(&generator, &methods, replicates, seed, &tuning.options(seed)?)?;
    let resolved = Resolved {
        replicates,
        methods: methods.iter().map(|m| m.label()).collect(),
        k,
        sigma2_theta,
        corpus,
        hemispheres,
        tuning,
    };
    write_experiment(Command::SimulateDataDriven, s, &result, seed, &resolved)
}

fn general_config(c: &mut Checker) -> GeneralSimConfig {
    let s = c.s;
    let clusters = s.clusters.unwrap_or(3);
    if clusters != 3 && clusters != 6 {
        c.fail("C", format!("must be 3 or 6, got {clusters}"));
    }
    let sigma2_x = c.non_negative("sigma2_x", s.sigma2_x, 1.5);
    let sigma2_delta = c.non_negative("sigma2_delta", s.sigma2_delta, 1.0);
    GeneralSimConfig::new(clusters, sigma2_x, sigma2_delta)
}

pub fn simulate_general_cmd(s: &Settings) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Resolved {
        replicates: usize,
        methods: Vec<String>,
        generator: GeneralSimConfig,
        tuning: TuningSpec,
    }
    let mut c = Checker::new(s);
    let seed = c.seed();
    let replicates = c.positive_usize("replicates", s.replicates, 30);
    let methods = methods(&mut c, &Method::ALL);
    let generator = general_config(&mut c);
    let tuning = TuningSpec::resolve(&mut c, None, TargetFolds::Random);
    c.finish()?;

    let gen = Generator::General(generator.clone());
    let result = run_experiment(&gen, &methods, replicates, seed, &tuning.options(seed)?)?;
    let resolved = Resolved { replicates, methods: methods.iter().map(|m| m.label()).collect(), generator, tuning };
    write_experiment(Command::SimulateGeneral, s, &result, seed, &resolved)
}

pub fn evaluate_mortality_cmd(s: &Settings) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Resolved {
        data: Option<PathBuf>,
        hemispheres: Option<PathBuf>,
        methods: Vec<String>,
        first_year: Option<i32>,
        last_year: Option<i32>,
        target_train_weeks: usize,
        linear_term: bool,
        tuning: TuningSpec,
    }
    let mut c = Checker::new(s);
    let seed = c.seed();
    let data = c.existing_path("data", &s.data, true);
    let hemispheres = c.existing_path("hemispheres", &s.hemispheres, false);
    let methods = methods(&mut c, &LOCO_METHODS);
    if methods.iter().any(|m| matches!(m, Method::Mss(VariantKind::Generalist) | Method::Oec(VariantKind::Generalist) | Method::Tom)) {
        c.fail("methods", "country-level evaluation supports specialist methods and ssm only");
    }
    let weeks = c.positive_usize("target_train_weeks", s.target_train_weeks, 52);
    if let (Some(a), Some(b)) = (s.first_year, s.last_year) {
        if a > b {
            c.fail("first_year", "must not exceed last_year");
        }
    }
    let tuning = TuningSpec::resolve(&mut c, None, TargetFolds::TimeOrdered);
    c.finish()?;

    let data = data.expect("checked");
    let corpus = read_corpus(&data, hemispheres.as_deref())?;
    let years: Vec<i32> = corpus.iter().flat_map(|s| s.records.iter().map(|r| r.year)).collect();
    let first = s.first_year.or_else(|| years.iter().min().copied()).unwrap_or(0);
    let last = s.last_year.or_else(|| years.iter().max().copied()).unwrap_or(0);
    let tasks = build_loco_tasks(&corpus, first..=last, weeks)?;
    let linear_term = !s.no_linear_term.unwrap_or(false);
    let opts = LocoOptions { tuning: tuning.options(seed)?, include_linear: linear_term };
    let result = evaluate_loco(&corpus, &tasks, &methods, &opts)?;

    let mut out = Output::new(s)?;
    write_loco_csv(out.create("loco.csv")?, &result.rows)?;
    write_loco_summary_csv(out.create("summary.csv")?, &result.summary)?;
    let mut t = String::new();
    let _ = writeln!(t, "evaluate-mortality tasks {} failed {}", tasks.len() - result.failures.len(), result.failures.len());
    let _ = writeln!(t, "temporal leakage violations {}", result.leakage_violations);
    for row in &result.summary {
        let cols: Vec<String> = row.vs_ssm.iter().map(|(m, v)| format!("{m}/ssm {v:.4}")).collect();
        let oec: Vec<String> = row.oec_vs_mss.iter().map(|(k, v)| format!("oec-{k}/mss-{k} {v:.4}")).collect();
        let _ = writeln!(t, "{} ({} tasks): {} | {}", row.test_year, row.tasks, cols.join(", "), oec.join(", "));
    }
    for (country, year, e) in &result.failures {
        let _ = writeln!(t, "{country} {year} failed: {e}");
    }
    out.text("summary.txt", &t)?;
    let resolved = Resolved {
        data: Some(data),
        hemispheres,
        methods: methods.iter().map(|m| m.label()).collect(),
        first_year: Some(first),
        last_year: Some(last),
        target_train_weeks: weeks,
        linear_term,
        tuning,
    };
    out.finish(Command::EvaluateMortality, s, Some(seed), &resolved)
}

pub fn fit_cmd(s: &Settings) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Resolved {
        data: Option<PathBuf>,
        test_data: Option<PathBuf>,
        variant: String,
        target: Option<String>,
        eta: f64,
        mu: f64,
        lambda: f64,
    }
    let mut c = Checker::new(s);
    let data = c.existing_path("data", &s.data, true);
    let test_data = c.existing_path("test_data", &s.test_data, false);
    let method = match s.variant.as_deref() {
        None => {
            c.fail("variant", "required for this command");
            None
        }
        Some(v) => match v.parse::<Method>() {
            Ok(m) => Some(m),
            Err(_) => {
                c.fail("variant", format!("unknown method `{v}`"));
                None
            }
        },
    };
    let eta = s.eta.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&eta) {
        c.fail("eta", format!("must lie in (0,1), or be exactly 0 or 1 for the limiting methods; got {eta}"));
    }
    let mu = c.non_negative("mu", s.mu, 0.0);
    let lambda = c.non_negative("lambda", s.lambda, 0.0);
    if method.is_some_and(|m| m.needs_target()) && s.target.is_none() {
        c.fail("target", "required for specialist methods and ssm");
    }
    c.finish()?;

    let method = method.expect("checked");
    let studies = read_studies(&data.clone().expect("checked"))?;
    let target = s.target.as_deref();
    let hyper = Hyper::fixed(&studies, lambda, mu, eta);
    let fitted = fit_method(method, &studies, target, &hyper)?;
    let doc = ModelDocument::from_fitted(method, &fitted);

    let mut out = Output::new(s)?;
    out.text("model.json", &(doc.to_json()? + "\n"))?;
    let mut t = String::new();
    let _ = writeln!(t, "fit {} on {} studies", method.label(), studies.len());
    if let Some(w) = &doc.weights {
        let parts: Vec<String> = w.ids.iter().zip(&w.weights).map(|(i, v)| format!("{i} {v:.4}")).collect();
        let _ = writeln!(t, "ensemble intercept {:.4}; weights {}", w.intercept, parts.join(", "));
    }
    if let (Some(first), Some(last)) = (doc.objective_trace.first(), doc.objective_trace.last()) {
        let _ = writeln!(
            t,
            "objective {first:.6} -> {last:.6} over {} cycles (converged: {})",
            doc.objective_trace.len() - 1,
            doc.converged.unwrap_or(false)
        );
    }
    if let Some(path) = &test_data {
        let test = read_studies(path)?;
        let mut w = csv::Writer::from_writer(out.create("predictions.csv")?);
        w.write_record(["study_id", "y", "prediction"])?;
        for st in &test {
            let pred = doc.predict(st.x())?;
            for i in 0..st.n() {
                w.write_record([st.id().to_string(), st.y()[i].to_string(), pred[i].to_string()])?;
            }
            let _ = writeln!(t, "test rmse on {} ({} rows): {:.4}", st.id(), st.n(), rmse(st.y(), &pred));
        }
        w.flush()?;
    }
    out.text("summary.txt", &t)?;
    let resolved = Resolved {
        data,
        test_data,
        variant: method.label(),
        target: s.target.clone(),
        eta,
        mu,
        lambda,
    };
    out.finish(Command::Fit, s, s.seed, &resolved)
}

pub fn tune_cmd(s: &Settings) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Resolved {
        data: Option<PathBuf>,
        target: Option<String>,
        variants: Vec<String>,
        tuning: TuningSpec,
    }
    let mut c = Checker::new(s);
    let seed = c.seed();
    let data = c.existing_path("data", &s.data, true);
    let tuning = TuningSpec::resolve(&mut c, None, TargetFolds::Random);
    c.finish()?;

    let studies = read_studies(&data.clone().expect("checked"))?;
    let mut opts = tuning.options(seed)?;
    if s.target.is_none() {
        opts.variants = vec![VariantKind::Generalist];
    }
    let tuned = tune_protocol(&studies, s.target.as_deref(), &opts)?;

    let mut out = Output::new(s)?;
    write_cv_csv(out.create("cv.csv")?, &tuned.table)?;
    out.text("hyper.json", &(serde_json::to_string_pretty(&tuned.hyper)? + "\n"))?;
    let h = &tuned.hyper;
    let mut t = String::new();
    let _ = writeln!(t, "tune on {} studies (target {})", studies.len(), s.target.as_deref().unwrap_or("none"));
    let lambdas: Vec<String> = h.lambdas.0.iter().map(|(k, v)| format!("{k} {v:.3e}")).collect();
    let _ = writeln!(t, "lambda: {}", lambdas.join(", "));
    let _ = writeln!(t, "stacking mu {:.3e}; oec mu {:.3e}; tom lambda {:.3e}", h.stack_mu, h.oec_mu, h.tom_lambda);
    let _ = writeln!(t, "eta g {:.2}; s {:.2}; sn {:.2}", h.eta_g, h.eta_s, h.eta_sn);
    out.text("summary.txt", &t)?;
    let resolved = Resolved {
        data,
        target: s.target.clone(),
        variants: opts.variants.iter().map(|v| v.to_string()).collect(),
        tuning,
    };
    out.finish(Command::Tune, s, Some(seed), &resolved)
}

pub fn make_fixture_cmd(s: &Settings) -> Result<PathBuf> {
    let mut c = Checker::new(s);
    let seed = c.seed();
    let kind = s.kind.clone().unwrap_or_else(|| "mortality".into());
    let mut general = None;
    let mut data_driven = None;
    match kind.as_str() {
        "mortality" => {}
        "general" => general = Some(general_config(&mut c)),
        "datadriven" => {
            data_driven = Some((c.positive_usize("K", s.k, 5), c.non_negative("sigma2_theta", s.sigma2_theta, 0.25)))
        }
        other => c.fail("kind", format!("expected mortality, general or datadriven, got `{other}`")),
    }
    c.finish()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Output::new(s)?;
    let resolved = serde_json::json!({ "kind": kind, "general": general, "data_driven": data_driven });
    if kind == "mortality" {
        let cfg = SyntheticCorpusConfig::default();
        let (corpus, map) = synthetic_corpus(&cfg, &mut rng)?;
        write_stmf_csv(out.create("stmf.csv")?, &corpus)?;
        out.text("hemispheres.toml", &toml::to_string(&map)?)?;
    } else {
        let data = match (general, data_driven) {
            (Some(g), _) => simulate_general(&g, &mut rng)?,
            (_, Some((k, s2))) => simulate_data_driven(&DataDrivenSimConfig::reference(k, s2)?, &mut rng)?,
            _ => unreachable!("kind checked above"),
        };
        write_studies_csv(out.create("train.csv")?, &data.studies)?;
        write_studies_csv(out.create("test.csv")?, std::slice::from_ref(&data.test))?;
        out.text("target.txt", &format!("{TARGET_ID}\n"))?;
    }
    out.finish(Command::MakeFixture, s, Some(seed), &resolved)
}
