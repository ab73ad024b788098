//! Run settings: a TOML document merged with command-line flags, then
//! validated field by field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Every key a settings document may contain. Flags fill the same struct and
/// take precedence over the document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Seed for every random draw (required by stochastic commands)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated method labels, e.g. mss-s,oec-s,ssm
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Method to fit: mss-g|mss-s|mss-sn|oec-g|oec-s|oec-sn|tom|ssm
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Fixed ridge penalty for every study (skips tuning it)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Tune the per-study ridge penalties even where the default is fixed
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tune_lambda: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub mu_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub eta_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub n_folds: Option<usize>,
    /// How the target's rows are folded: random|time
    #[arg(long)]
    pub target_folds: Option<String>,
    /// Number of clusters in the general simulation (3 or 6)
    #[arg(long = "C")]
    #[serde(rename = "C")]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub sigma2_delta: Option<f64>,
    #[arg(long)]
    pub sigma2_x: Option<f64>,
    #[arg(long)]
    pub sigma2_theta: Option<f64>,
    /// Training studies besides the target
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<usize>,
    /// Drop the linear time term from the seasonal design
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_linear_term: Option<bool>,
    #[arg(long)]
    pub target_train_weeks: Option<usize>,
    /// Studies CSV (study_id,y,x1,...) or weekly mortality CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out rows to predict, same layout as --data
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// TOML map of country to hemisphere
    #[arg(long)]
    pub hemispheres: Option<PathBuf>,
    /// Weekly mortality CSV used to estimate data-driven hyperparameters
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub first_year: Option<i32>,
    #[arg(long)]
    pub last_year: Option<i32>,
    /// Fixture to write: mortality|general|datadriven
    #[arg(long)]
    pub kind: Option<String>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| ConfigErrors::single("config", e.message().to_string()))
    }

    /// Reads a TOML settings file, or the `config` object of a run manifest.
    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors::single("config", format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| ConfigErrors::single("config", e.to_string()))?;
            if let Some(c) = v.get_mut("config") {
                v = c.take();
            }
            return serde_json::from_value(v).map_err(|e| ConfigErrors::single("config", e.to_string()));
        }
        Self::from_toml(&text)
    }

    /// The settings as a manifest records them: unset keys and the keys that
    /// cannot change results are left out.
    pub fn replayable(&self) -> serde_json::Value {
        let s = Settings { output_dir: None, jobs: None, ..self.clone() };
        let mut v = serde_json::to_value(s).expect("settings serialize");
        if let Some(m) = v.as_object_mut() {
            m.retain(|_, x| !x.is_null());
        }
        v
    }

    /// `self` with every value set in `flags` replaced.
    pub fn overlay(mut self, flags: &Settings) -> Settings {
        overlay!(
            self, flags, seed, jobs, output_dir, replicates, methods, variant, eta, mu, lambda, tune_lambda,
            lambda_grid, mu_grid, eta_grid, n_folds, target_folds, clusters, sigma2_delta, sigma2_x,
            sigma2_theta, k, no_linear_term, target_train_weeks, data, test_data, target, hemispheres,
            corpus, first_year, last_year, kind
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Every problem found in one pass over the settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl ConfigErrors {
    pub fn single(field: &str, message: impl Into<String>) -> Self {
        ConfigErrors(vec![FieldError { field: field.into(), message: message.into() }])
    }

    pub fn push(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(FieldError { field: field.into(), message: message.into() });
    }

    pub fn into_result(self) -> Result<(), ConfigErrors> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
        write!(f, "invalid configuration ({})", parts.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

/// Collects field errors while reading resolved values.
pub struct Checker<'a> {
    pub s: &'a Settings,
    pub errors: ConfigErrors,
}

impl<'a> Checker<'a> {
    pub fn new(s: &'a Settings) -> Self {
        Checker { s, errors: ConfigErrors::default() }
    }

    pub fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(field, message);
    }

    pub fn seed(&mut self) -> u64 {
        self.s.seed.unwrap_or_else(|| {
            self.fail("seed", "required for this command");
            0
        })
    }

    pub fn existing_path(&mut self, field: &str, value: &Option<PathBuf>, required: bool) -> Option<PathBuf> {
        match value {
            Some(p) if p.exists() => Some(p.clone()),
            Some(p) => {
                self.fail(field, format!("{} does not exist", p.display()));
                None
            }
            None if required => {
                self.fail(field, "required for this command");
                None
            }
            None => None,
        }
    }

    pub fn positive_usize(&mut self, field: &str, value: Option<usize>, default: usize) -> usize {
        let v = value.unwrap_or(default);
        if v == 0 {
            self.fail(field, "must be at least 1");
        }
        v
    }

    pub fn non_negative(&mut self, field: &str, value: Option<f64>, default: f64) -> f64 {
        let v = value.unwrap_or(default);
        if !(v >= 0.0 && v.is_finite()) {
            self.fail(field, format!("must be a finite non-negative number, got {v}"));
        }
        v
    }

    pub fn grid(&mut self, field: &str, value: &Option<Vec<f64>>, default: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let g = value.clone().unwrap_or_else(|| default.to_vec());
        if g.is_empty() {
            self.fail(field, "must not be empty");
        } else if g.windows(2).any(|w| w[0] >= w[1] || w[0].is_nan()) {
            self.fail(field, "values must be strictly increasing");
        } else if g.iter().any(|v| !(*v >= lo && *v <= hi)) {
            self.fail(field, format!("values must lie in [{lo}, {hi}]"));
        }
        g
    }

    pub fn finish(self) -> Result<(), ConfigErrors> {
        self.errors.into_result()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = Settings::from_toml("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(err.0[0].message.contains("bogus"));
    }

    #[test]
    fn manifest_config_reloads() {
        let s = Settings { seed: Some(4), clusters: Some(6), output_dir: Some("x".into()), ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let doc = serde_json::json!({ "command": "simulate-general", "config": s.replayable() });
        std::fs::write(&path, doc.to_string()).unwrap();
        let back = Settings::load(&path).unwrap();
        assert_eq!(back, Settings { output_dir: None, ..s });
    }

    #[test]
    fn renamed_keys_parse() {
        let s = Settings::from_toml("C = 3\nK = 5\nsigma2_x = 1.5\n").unwrap();
        assert_eq!((s.clusters, s.k, s.sigma2_x), (Some(3), Some(5), Some(1.5)));
    }

    #[test]
    fn flags_win_and_gaps_fall_through() {
        let doc = Settings { seed: Some(1), eta: Some(0.2), replicates: Some(4), ..Default::default() };
        let flags = Settings { seed: Some(9), mu: Some(0.5), ..Default::default() };
        let merged = doc.overlay(&flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.eta, Some(0.2));
        assert_eq!(merged.mu, Some(0.5));
        assert_eq!(merged.replicates, Some(4));
    }

    #[test]
    fn checker_collects_every_error() {
        let s = Settings { replicates: Some(0), sigma2_x: Some(-1.0), ..Default::default() };
        let mut c = Checker::new(&s);
        c.seed();
        c.positive_usize("replicates", s.replicates, 1);
        c.non_negative("sigma2_x", s.sigma2_x, 0.0);
        let fields: Vec<String> = c.finish().unwrap_err().0.into_iter().map(|e| e.field).collect();
        assert_eq!(fields, ["seed", "replicates", "sigma2_x"]);
    }
}
