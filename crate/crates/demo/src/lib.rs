//! Browser demo. Each exported function takes plain numbers and returns a JSON
//! string; the native functions underneath are what the tests exercise.

use oec_core::methods::{fit_method, fit_oec_any_eta, rmse, Hyper, Method, Predictor};
use oec_core::mortality::{build_loco_tasks, prepare, synthetic_corpus, task_data, SyntheticCorpusConfig};
use oec_core::oec::{oec_fit, OecConfig};
use oec_core::simulation::{simulate_general, GeneralSimConfig, TARGET_ID};
use oec_core::stacking::{ssm_fit, Lambdas, Variant, VariantKind};
use oec_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct SweepCurve {
    pub eta: f64,
    pub predictions: Vec<f64>,
    pub rmse: f64,
    pub distance_to_ssm: f64,
}

#[derive(Debug, Serialize)]
pub struct Sweep {
    pub country: String,
    pub test_year: i32,
    pub observed: Vec<f64>,
    pub ssm: Vec<f64>,
    pub ssm_rmse: f64,
    pub curves: Vec<SweepCurve>,
}

/// Fits the no-reuse specialist ensemble across `etas` on the first
/// forecasting task of a synthetic weekly corpus.
pub fn eta_sweep(seed: u64, etas: &[f64], mu: f64, lambda: f64) -> Result<Sweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (corpus, _) = synthetic_corpus(&SyntheticCorpusConfig::default(), &mut rng)?;
    let first = corpus.iter().flat_map(|s| s.records.iter().map(|r| r.year)).min().unwrap_or(0);
    let tasks = build_loco_tasks(&corpus, first..=first + 10, 52)?;
    let task = &tasks[0];
    let prepared = corpus.iter().map(prepare).collect::<Result<Vec<_>>>()?;
    let data = task_data(&prepared, task, true)?;
    let target = data.studies.iter().find(|s| s.id() == task.target).expect("target is among the studies");
    let x = data.test.x();
    let y = data.test.y();
    let ssm = ssm_fit(target, 0.0)?.predict(x)?;
    let variant = Variant::SpecialistNoReuse(task.target.clone());
    let lambdas = Lambdas::uniform(&data.studies, lambda);
    let curves = etas
        .iter()
        .map(|&eta| {
            let p = fit_oec_any_eta(&data.studies, &variant, eta, mu, &lambdas)?.predict(x)?;
            Ok(SweepCurve { eta, rmse: rmse(y, &p), distance_to_ssm: (&p - &ssm).amax(), predictions: p.iter().copied().collect() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep {
        country: task.target.clone(),
        test_year: task.test_year,
        observed: y.iter().copied().collect(),
        ssm_rmse: rmse(y, &ssm),
        ssm: ssm.iter().copied().collect(),
        curves,
    })
}

#[derive(Debug, Serialize)]
pub struct MethodScore {
    pub method: String,
    pub rmse: f64,
}

/// One replicate of the clustered-covariate design with fixed
/// hyperparameters. Methods that ignore the target train on the other studies.
pub fn general_replicate(seed: u64, clusters: usize, sigma2_x: f64, sigma2_delta: f64, eta: f64) -> Result<Vec<MethodScore>> {
    let cfg = GeneralSimConfig::new(clusters, sigma2_x, sigma2_delta);
    cfg.validate()?;
    let data = simulate_general(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let aux: Vec<_> = data.studies.iter().filter(|s| s.id() != TARGET_ID).cloned().collect();
    let hyper = Hyper::fixed(&data.studies, 0.1, 0.1, eta);
    Method::ALL
        .iter()
        .map(|&m| {
            let train = if m.needs_target() { &data.studies } else { &aux };
            let pred = fit_method(m, train, Some(TARGET_ID), &hyper)?.predict(data.test.x())?;
            Ok(MethodScore { method: m.label(), rmse: rmse(data.test.y(), &pred) })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub objective: Vec<f64>,
    pub converged: bool,
    pub intercept: f64,
    pub weights: Vec<(String, f64)>,
}

/// Objective per block-descent cycle for one ensemble fit.
pub fn bcd_trace(seed: u64, variant: &str, eta: f64, mu: f64) -> Result<Trace> {
    let data = simulate_general(&GeneralSimConfig::new(3, 1.5, 1.0), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let kind: VariantKind = variant.parse()?;
    let variant = kind.with_target(Some(TARGET_ID))?;
    let cfg = OecConfig::new(variant, eta, mu, Lambdas::uniform(&data.studies, 0.1));
    let fit = oec_fit(&cfg, &data.studies)?;
    Ok(Trace {
        objective: fit.objective_trace.clone(),
        converged: fit.converged,
        intercept: fit.weights.intercept,
        weights: fit.weights.ids.iter().cloned().zip(fit.weights.weights.iter().copied()).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())))
}

#[wasm_bindgen(js_name = etaSweep)]
pub fn eta_sweep_js(seed: u32, etas: Vec<f64>, mu: f64, lambda: f64) -> std::result::Result<String, JsValue> {
    to_js(eta_sweep(seed.into(), &etas, mu, lambda))
}

#[wasm_bindgen(js_name = generalReplicate)]
pub fn general_replicate_js(
    seed: u32,
    clusters: usize,
    sigma2_x: f64,
    sigma2_delta: f64,
    eta: f64,
) -> std::result::Result<String, JsValue> {
    to_js(general_replicate(seed.into(), clusters, sigma2_x, sigma2_delta, eta))
}

#[wasm_bindgen(js_name = bcdTrace)]
pub fn bcd_trace_js(seed: u32, variant: &str, eta: f64, mu: f64) -> std::result::Result<String, JsValue> {
    to_js(bcd_trace(seed.into(), variant, eta, mu))
}
