//! Named methods and a uniform fit/predict interface over them.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::Study;
use crate::oec::{oec_fit_best_of, oec_predict, Init, OecConfig, OecModel};
use crate::stacking::{
    mss_fit, mss_predict, ssm_fit, tom_fit, Lambdas, LinearModel, MssModel, Variant, VariantKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Mss(VariantKind),
    Oec(VariantKind),
    Tom,
    Ssm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Mss(VariantKind::Generalist),
        Method::Mss(VariantKind::Specialist),
        Method::Mss(VariantKind::SpecialistNoReuse),
        Method::Oec(VariantKind::Generalist),
        Method::Oec(VariantKind::Specialist),
        Method::Oec(VariantKind::SpecialistNoReuse),
        Method::Tom,
        Method::Ssm,
    ];

    pub fn label(self) -> String {
        match self {
            Method::Mss(v) => format!("mss-{}", v.suffix().to_ascii_lowercase()),
            Method::Oec(v) => format!("oec-{}", v.suffix().to_ascii_lowercase()),
            Method::Tom => "tom".into(),
            Method::Ssm => "ssm".into(),
        }
    }

    /// Whether the method uses the target study's training rows.
    pub fn needs_target(self) -> bool {
        match self {
            Method::Mss(v) | Method::Oec(v) => v != VariantKind::Generalist,
            Method::Ssm => true,
            Method::Tom => false,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s.to_ascii_lowercase())
            .ok_or_else(|| invalid("method", format!("unknown method `{s}`")))
    }
}

/// Hyperparameters shared by every method of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lambdas: Lambdas,
    pub stack_mu: f64,
    pub oec_mu: f64,
    pub eta_g: f64,
    pub eta_s: f64,
    pub eta_sn: f64,
    pub tom_lambda: f64,
}

impl Hyper {
    pub fn fixed(studies: &[Study], lambda: f64, mu: f64, eta: f64) -> Self {
        Hyper {
            lambdas: Lambdas::uniform(studies, lambda),
            stack_mu: mu,
            oec_mu: mu,
            eta_g: eta,
            eta_s: eta,
            eta_sn: eta,
            tom_lambda: lambda,
        }
    }

    pub fn eta(&self, kind: VariantKind) -> f64 {
        match kind {
            VariantKind::Generalist => self.eta_g,
            VariantKind::Specialist => self.eta_s,
            VariantKind::SpecialistNoReuse => self.eta_sn,
        }
    }

    pub fn set_eta(&mut self, kind: VariantKind, eta: f64) {
        match kind {
            VariantKind::Generalist => self.eta_g = eta,
            VariantKind::Specialist => self.eta_s = eta,
            VariantKind::SpecialistNoReuse => self.eta_sn = eta,
        }
    }
}

pub trait Predictor {
    fn predict(&self, x_new: &DMatrix<f64>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Mss(MssModel),
    Oec(OecModel),
    Linear(LinearModel),
}

impl Predictor for Fitted {
    fn predict(&self, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            Fitted::Mss(m) => mss_predict(m, x_new),
            Fitted::Oec(m) => oec_predict(m, x_new),
            Fitted::Linear(m) => m.predict(x_new),
        }
    }
}

fn find<'a>(studies: &'a [Study], id: &str) -> Result<&'a Study> {
    studies
        .iter()
        .find(|s| s.id() == id)
        .ok_or_else(|| Error::UnknownStudy(id.to_string()))
}

/// OEC at any `eta` in [0, 1]; the endpoints are answered by the limiting
/// methods (stacking at 0, unpenalized merged or target-only fit at 1).
pub fn fit_oec_any_eta(
    studies: &[Study],
    variant: &Variant,
    eta: f64,
    mu: f64,
    lambdas: &Lambdas,
) -> Result<Fitted> {
    if eta == 0.0 {
        return Ok(Fitted::Mss(mss_fit(studies, variant, lambdas, mu)?));
    }
    if eta == 1.0 {
        return Ok(Fitted::Linear(match variant.target() {
            None => tom_fit(studies, 0.0)?,
            Some(t) => ssm_fit(find(studies, t)?, 0.0)?,
        }));
    }
    let cfg = OecConfig::new(variant.clone(), eta, mu, lambdas.clone());
    // the stacking start alone can sit at the all-zero-weight stationary point
    Ok(Fitted::Oec(oec_fit_best_of(&cfg, studies, &[Init::FromMss, Init::EqualWeights])?))
}

/// Fits `method` with the given hyperparameters. Specialist methods and the
/// study-specific model need `target`.
pub fn fit_method(
    method: Method,
    studies: &[Study],
    target: Option<&str>,
    hyper: &Hyper,
) -> Result<Fitted> {
    match method {
        Method::Mss(kind) => {
            let variant = kind.with_target(target)?;
            Ok(Fitted::Mss(mss_fit(studies, &variant, &hyper.lambdas, hyper.stack_mu)?))
        }
        Method::Oec(kind) => {
            let variant = kind.with_target(target)?;
            fit_oec_any_eta(studies, &variant, hyper.eta(kind), hyper.oec_mu, &hyper.lambdas)
        }
        Method::Tom => Ok(Fitted::Linear(tom_fit(studies, hyper.tom_lambda)?)),
        Method::Ssm => {
            let t = target.ok_or_else(|| invalid("target", "ssm needs a target study"))?;
            Ok(Fitted::Linear(ssm_fit(find(studies, t)?, hyper.lambdas.get(t)?)?))
        }
    }
}

pub fn rmse(y: &DVector<f64>, pred: &DVector<f64>) -> f64 {
    assert_eq!(y.len(), pred.len(), "rmse of vectors with different lengths");
    ((y - pred).norm_squared() / y.len() as f64).sqrt()
}
