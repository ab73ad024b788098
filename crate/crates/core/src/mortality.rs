//! Weekly mortality series: ingestion, population interpolation, rates, the
//! seasonal design and leave-one-country-out evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::methods::{fit_method, rmse, Method, Predictor};
use crate::model::Study;
use crate::stacking::VariantKind;
use crate::tuning::{tune_protocol, TargetFolds, TuningOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    #[default]
    North,
    South,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyRecord {
    pub country: String,
    pub year: i32,
    pub week: u32,
    pub deaths: f64,
    pub population: Option<f64>,
    pub death_rate: Option<f64>,
}

impl WeeklyRecord {
    fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Parse(format!("{} {}-W{}: {reason}", self.country, self.year, self.week));
        if self.week == 0 || self.week > 53 || iso_monday(self.year, self.week).is_none() {
            return Err(bad("invalid ISO week".into()));
        }
        if !(self.deaths >= 0.0 && self.deaths.is_finite()) {
            return Err(bad("deaths must be a non-negative number".into()));
        }
        match (self.population, self.death_rate) {
            (None, None) => Err(bad("needs population or death_rate".into())),
            (Some(p), _) if !(p > 0.0 && p.is_finite()) => Err(bad("population must be positive".into())),
            (_, Some(r)) if !(r > 0.0 && r.is_finite()) => Err(bad("death_rate must be positive".into())),
            _ => Ok(()),
        }
    }
}

fn iso_monday(year: i32, week: u32) -> Option<NaiveDate> {
    NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)
}

/// Weeks since ISO week 1 of 2000.
pub fn week_index(year: i32, week: u32) -> Result<i64> {
    let origin = iso_monday(2000, 1).expect("valid origin");
    let d = iso_monday(year, week)
        .ok_or_else(|| Error::Parse(format!("{year}-W{week} is not an ISO week")))?;
    Ok((d - origin).num_days() / 7)
}

/// Seasonal position used by the design: 52 slots per year with week 53
/// folded onto week 52, so phase stays aligned with the calendar.
pub fn seasonal_index(year: i32, week: u32) -> f64 {
    ((year - 2000) as i64 * 52 + week.min(52) as i64 - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountrySeries {
    pub country: String,
    pub hemisphere: Hemisphere,
    pub records: Vec<WeeklyRecord>,
    /// Global week index of each record, strictly increasing.
    pub t: Vec<i64>,
}

impl CountrySeries {
    pub fn new(country: impl Into<String>, hemisphere: Hemisphere, mut records: Vec<WeeklyRecord>) -> Result<Self> {
        let country = country.into();
        for r in &records {
            r.validate()?;
        }
        records.sort_by_key(|r| (r.year, r.week));
        let t = records
            .iter()
            .map(|r| week_index(r.year, r.week))
            .collect::<Result<Vec<_>>>()?;
        if let Some(w) = t.windows(2).position(|w| w[1] <= w[0]) {
            let r = &records[w + 1];
            return Err(Error::Parse(format!("{country}: duplicate week {}-W{}", r.year, r.week)));
        }
        Ok(CountrySeries { country, hemisphere, records, t })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Hemisphere per country; countries not listed are northern.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HemisphereMap {
    #[serde(default)]
    pub hemispheres: BTreeMap<String, Hemisphere>,
}

impl HemisphereMap {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("hemisphere map: {e}")))
    }

    pub fn get(&self, country: &str) -> Hemisphere {
        self.hemispheres.get(country).copied().unwrap_or_default()
    }
}

fn parse_opt(field: Option<&str>, name: &str, line: u64) -> Result<Option<f64>> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Parse(format!("line {line}: bad {name} `{v}`"))),
    }
}

/// Reads `country,year,week,deaths` plus `population` and/or `death_rate`
/// columns. Countries keep first-appearance order.
pub fn read_stmf_csv<R: Read>(reader: R, hemispheres: &HemisphereMap) -> Result<Vec<CountrySeries>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ci), Some(yi), Some(wi), Some(di)) = (col("country"), col("year"), col("week"), col("deaths")) else {
        return Err(Error::Parse("header must include country,year,week,deaths".into()));
    };
    let pi = col("population");
    let ri = col("death_rate");
    if pi.is_none() && ri.is_none() {
        return Err(Error::Parse("header needs a population or death_rate column".into()));
    }
    let mut order = Vec::new();
    let mut by_country: BTreeMap<String, Vec<WeeklyRecord>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize| row.get(i).unwrap_or("").trim();
        let country = get(ci).to_string();
        if country.is_empty() {
            return Err(Error::Parse(format!("line {line}: empty country")));
        }
        let year = get(yi).parse::<i32>().map_err(|_| Error::Parse(format!("line {line}: bad year")))?;
        let week = get(wi).parse::<u32>().map_err(|_| Error::Parse(format!("line {line}: bad week")))?;
        let deaths = get(di).parse::<f64>().map_err(|_| Error::Parse(format!("line {line}: bad deaths")))?;
        let rec = WeeklyRecord {
            country: country.clone(),
            year,
            week,
            deaths,
            population: parse_opt(pi.and_then(|i| row.get(i)), "population", line)?,
            death_rate: parse_opt(ri.and_then(|i| row.get(i)), "death_rate", line)?,
        };
        if !by_country.contains_key(&country) {
            order.push(country.clone());
        }
        by_country.entry(country).or_default().push(rec);
    }
    order
        .into_iter()
        .map(|c| {
            let recs = by_country.remove(&c).unwrap_or_default();
            CountrySeries::new(c.clone(), hemispheres.get(&c), recs)
        })
        .collect()
}

pub fn write_stmf_csv<W: Write>(writer: W, corpus: &[CountrySeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["country", "year", "week", "deaths", "population", "death_rate"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for s in corpus {
        for r in &s.records {
            w.write_record([
                r.country.clone(),
                r.year.to_string(),
                r.week.to_string(),
                r.deaths.to_string(),
                opt(r.population),
                opt(r.death_rate),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Annual population per year: the reported value when present, otherwise the
/// median of the weekly implied values `C / Ỹ`.
pub fn annual_populations(series: &CountrySeries) -> BTreeMap<i32, f64> {
    let mut reported: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    let mut implied: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for r in &series.records {
        if let Some(p) = r.population {
            reported.entry(r.year).or_default().push(p);
        } else if let Some(rate) = r.death_rate {
            if r.deaths > 0.0 {
                implied.entry(r.year).or_default().push(r.deaths / rate);
            }
        }
    }
    let mut out = BTreeMap::new();
    for (y, v) in implied {
        out.insert(y, median(v));
    }
    for (y, v) in reported {
        out.insert(y, median(v));
    }
    out
}

/// Weekly population from an OLS line through the mid-year populations, each
/// placed at ISO week 26 of its year.
pub fn interpolate_population(series: &CountrySeries) -> Result<Vec<f64>> {
    let annual = annual_populations(series);
    if annual.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need mid-year population for at least two years",
            series.country
        )));
    }
    let pts: Vec<(f64, f64)> = annual
        .iter()
        .map(|(&y, &n)| Ok((week_index(y, 26)? as f64, n)))
        .collect::<Result<_>>()?;
    let m = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let b1 = sxy / sxx;
    let b0 = ybar - b1 * xbar;
    Ok(series.t.iter().map(|&t| b0 + b1 * t as f64).collect())
}

/// Annualized deaths per 1000.
pub fn death_rate(deaths: f64, population: f64) -> f64 {
    1000.0 * 52.0 * deaths / population
}

pub fn compute_rates(series: &CountrySeries) -> Result<Vec<f64>> {
    let pop = interpolate_population(series)?;
    series
        .records
        .iter()
        .zip(pop)
        .map(|(r, p)| {
            if p > 0.0 {
                Ok(death_rate(r.deaths, p))
            } else {
                Err(invalid("population", format!("{}: interpolated population {p} is not positive", series.country)))
            }
        })
        .collect()
}

/// `[t, sin(2πjt/52), cos(2πjt/52)]` for j = 1, 2, with `t` left out when
/// `include_linear` is false.
pub fn fourier_design(t_values: &[f64], include_linear: bool) -> DMatrix<f64> {
    let offset = usize::from(include_linear);
    let mut x = DMatrix::zeros(t_values.len(), 4 + offset);
    for (i, &t) in t_values.iter().enumerate() {
        if include_linear {
            x[(i, 0)] = t;
        }
        for j in 1..=2 {
            let a = 2.0 * std::f64::consts::PI * j as f64 * t / 52.0;
            x[(i, offset + 2 * (j - 1))] = a.sin();
            x[(i, offset + 2 * (j - 1) + 1)] = a.cos();
        }
    }
    x
}

/// Rates and seasonal positions of a series, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub country: String,
    pub hemisphere: Hemisphere,
    pub t: Vec<i64>,
    pub year: Vec<i32>,
    pub seasonal: Vec<f64>,
    pub rates: Vec<f64>,
}

pub fn prepare(series: &CountrySeries) -> Result<PreparedSeries> {
    Ok(PreparedSeries {
        country: series.country.clone(),
        hemisphere: series.hemisphere,
        t: series.t.clone(),
        year: series.records.iter().map(|r| r.year).collect(),
        seasonal: series.records.iter().map(|r| seasonal_index(r.year, r.week)).collect(),
        rates: compute_rates(series)?,
    })
}

impl PreparedSeries {
    pub fn study(&self, rows: &[usize], include_linear: bool) -> Result<Study> {
        let s: Vec<f64> = rows.iter().map(|&i| self.seasonal[i]).collect();
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.rates[i]));
        Study::new(self.country.clone(), y, fourier_design(&s, include_linear))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoTask {
    pub target: String,
    pub test_year: i32,
    /// Global week index where the test year starts.
    pub test_start: i64,
    pub target_train_weeks: usize,
    pub auxiliaries: Vec<String>,
}

pub const MIN_AUX_WEEKS: usize = 100;

fn year_weeks(year: i32) -> u32 {
    if iso_monday(year, 53).is_some() {
        53
    } else {
        52
    }
}

/// Enumerates feasible (northern target, test year) pairs: the target must
/// have the `target_train_weeks` weeks just before the test year and every
/// week of the test year; auxiliaries need at least 100 weeks before it.
pub fn build_loco_tasks(
    corpus: &[CountrySeries],
    years: std::ops::RangeInclusive<i32>,
    target_train_weeks: usize,
) -> Result<Vec<LocoTask>> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("empty corpus".into()));
    }
    let mut tasks = Vec::new();
    for target in corpus.iter().filter(|s| s.hemisphere == Hemisphere::North) {
        let weeks: BTreeSet<i64> = target.t.iter().copied().collect();
        for year in years.clone() {
            let start = week_index(year, 1)?;
            let train_ok = (1..=target_train_weeks as i64).all(|d| weeks.contains(&(start - d)));
            let test_ok = (0..year_weeks(year) as i64).all(|d| weeks.contains(&(start + d)));
            if !train_ok || !test_ok || target_train_weeks == 0 {
                continue;
            }
            let auxiliaries: Vec<String> = corpus
                .iter()
                .filter(|s| s.country != target.country)
                .filter(|s| s.t.iter().filter(|&&t| t < start).count() >= MIN_AUX_WEEKS)
                .map(|s| s.country.clone())
                .collect();
            if auxiliaries.is_empty() {
                continue;
            }
            tasks.push(LocoTask {
                target: target.country.clone(),
                test_year: year,
                test_start: start,
                target_train_weeks,
                auxiliaries,
            });
        }
    }
    Ok(tasks)
}

/// Training and test data of one task, with the global week index of every
/// training row kept for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub studies: Vec<Study>,
    pub train_t: Vec<Vec<i64>>,
    pub test: Study,
    pub test_t: Vec<i64>,
}

impl TaskData {
    /// Training rows at or after the test start; zero for a clean task.
    pub fn leakage_violations(&self, test_start: i64) -> usize {
        self.train_t.iter().flatten().filter(|&&t| t >= test_start).count()
    }
}

pub fn task_data(prepared: &[PreparedSeries], task: &LocoTask, include_linear: bool) -> Result<TaskData> {
    let find = |c: &str| {
        prepared
            .iter()
            .find(|p| p.country == c)
            .ok_or_else(|| Error::UnknownStudy(c.to_string()))
    };
    let mut studies = Vec::new();
    let mut train_t = Vec::new();
    for aux in &task.auxiliaries {
        let p = find(aux)?;
        let rows: Vec<usize> = (0..p.t.len()).filter(|&i| p.t[i] < task.test_start).collect();
        train_t.push(rows.iter().map(|&i| p.t[i]).collect());
        studies.push(p.study(&rows, include_linear)?);
    }
    let target = find(&task.target)?;
    let lo = task.test_start - task.target_train_weeks as i64;
    let train_rows: Vec<usize> = (0..target.t.len())
        .filter(|&i| target.t[i] >= lo && target.t[i] < task.test_start)
        .collect();
    train_t.push(train_rows.iter().map(|&i| target.t[i]).collect());
    studies.push(target.study(&train_rows, include_linear)?);
    let test_rows: Vec<usize> = (0..target.t.len()).filter(|&i| target.year[i] == task.test_year).collect();
    let test = target.study(&test_rows, include_linear)?;
    Ok(TaskData {
        studies,
        train_t,
        test,
        test_t: test_rows.iter().map(|&i| target.t[i]).collect(),
    })
}

pub const LOCO_METHODS: [Method; 5] = [
    Method::Ssm,
    Method::Mss(VariantKind::Specialist),
    Method::Mss(VariantKind::SpecialistNoReuse),
    Method::Oec(VariantKind::Specialist),
    Method::Oec(VariantKind::SpecialistNoReuse),
];

#[derive(Debug, Clone, PartialEq)]
pub struct LocoOptions {
    pub tuning: TuningOptions,
    pub include_linear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoRow {
    pub country: String,
    pub test_year: i32,
    pub method: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoSummaryRow {
    pub test_year: i32,
    pub tasks: usize,
    /// Mean of `rmse_method / rmse_ssm` per method label.
    pub vs_ssm: BTreeMap<String, f64>,
    /// Mean of `rmse_oec / rmse_mss` per variant suffix.
    pub oec_vs_mss: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocoResult {
    pub rows: Vec<LocoRow>,
    pub failures: Vec<(String, i32, String)>,
    pub leakage_violations: usize,
    pub summary: Vec<LocoSummaryRow>,
}

/// Fits and scores every method on every task. Task failures are recorded
/// and excluded.
pub fn evaluate_loco(
    corpus: &[CountrySeries],
    tasks: &[LocoTask],
    methods: &[Method],
    opts: &LocoOptions,
) -> Result<LocoResult> {
    if tasks.is_empty() {
        return Err(Error::InsufficientData("no feasible tasks".into()));
    }
    let prepared: Vec<PreparedSeries> = corpus.iter().map(prepare).collect::<Result<_>>()?;
    let run = |task: &LocoTask| -> Result<(Vec<LocoRow>, usize)> {
        let data = task_data(&prepared, task, opts.include_linear)?;
        let leaks = data.leakage_violations(task.test_start);
        let mut tuning = opts.tuning.clone();
        tuning.target_folds = TargetFolds::TimeOrdered;
        tuning.variants = methods
            .iter()
            .filter_map(|m| match m {
                Method::Oec(v) => Some(*v),
                _ => None,
            })
            .collect();
        tuning.seed = tuning.seed.wrapping_add(task.test_start as u64).wrapping_mul(31);
        let tuned = tune_protocol(&data.studies, Some(&task.target), &tuning)?;
        let mut rows = Vec::with_capacity(methods.len());
        for &m in methods {
            let train: Vec<Study> = if m.needs_target() {
                data.studies.clone()
            } else {
                data.studies.iter().filter(|s| s.id() != task.target).cloned().collect()
            };
            let fitted = fit_method(m, &train, Some(&task.target), &tuned.hyper)?;
            let pred = fitted.predict(data.test.x())?;
            rows.push(LocoRow {
                country: task.target.clone(),
                test_year: task.test_year,
                method: m.label(),
                rmse: rmse(data.test.y(), &pred),
            });
        }
        Ok((rows, leaks))
    };
    let outcomes = crate::par::map(tasks, run);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut leakage_violations = 0;
    for (task, out) in tasks.iter().zip(outcomes) {
        match out {
            Ok((r, leaks)) => {
                rows.extend(r);
                leakage_violations += leaks;
            }
            Err(e) => {
                log::warn!("task {} {} failed: {e}", task.target, task.test_year);
                failures.push((task.target.clone(), task.test_year, e.to_string()));
            }
        }
    }
    let summary = summarize_loco(&rows);
    Ok(LocoResult { rows, failures, leakage_violations, summary })
}

pub fn summarize_loco(rows: &[LocoRow]) -> Vec<LocoSummaryRow> {
    let mut by_task: BTreeMap<(i32, String), BTreeMap<String, f64>> = BTreeMap::new();
    for r in rows {
        by_task.entry((r.test_year, r.country.clone())).or_default().insert(r.method.clone(), r.rmse);
    }
    let mut by_year: BTreeMap<i32, Vec<&BTreeMap<String, f64>>> = BTreeMap::new();
    for ((year, _), m) in &by_task {
        by_year.entry(*year).or_default().push(m);
    }
    by_year
        .into_iter()
        .map(|(test_year, tasks)| {
            let mean_ratio = |num: &str, den: &str| -> Option<f64> {
                let v: Vec<f64> = tasks
                    .iter()
                    .filter_map(|m| Some(m.get(num)? / m.get(den)?))
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            let methods: BTreeSet<&String> = tasks.iter().flat_map(|m| m.keys()).collect();
            let vs_ssm = methods
                .iter()
                .filter_map(|m| Some(((*m).clone(), mean_ratio(m, "ssm")?)))
                .collect();
            let oec_vs_mss = ["s", "sn", "g"]
                .iter()
                .filter_map(|v| Some((v.to_string(), mean_ratio(&format!("oec-{v}"), &format!("mss-{v}"))?)))
                .collect();
            LocoSummaryRow { test_year, tasks: tasks.len(), vs_ssm, oec_vs_mss }
        })
        .collect()
}

pub fn write_loco_csv<W: Write>(writer: W, rows: &[LocoRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["country", "test_year", "method", "rmse"])?;
    for r in rows {
        w.write_record([r.country.clone(), r.test_year.to_string(), r.method.clone(), r.rmse.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per test year; columns are ratios to the country-specific model,
/// then OEC-to-stacking ratios.
pub fn write_loco_summary_csv<W: Write>(writer: W, summary: &[LocoSummaryRow]) -> Result<()> {
    let mut vs: BTreeSet<String> = BTreeSet::new();
    let mut om: BTreeSet<String> = BTreeSet::new();
    for s in summary {
        vs.extend(s.vs_ssm.keys().cloned());
        om.extend(s.oec_vs_mss.keys().cloned());
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["test_year".to_string(), "tasks".to_string()];
    header.extend(vs.iter().map(|m| format!("{m}/ssm")));
    header.extend(om.iter().map(|v| format!("oec-{v}/mss-{v}")));
    w.write_record(&header)?;
    let cell = |v: Option<&f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    for s in summary {
        let mut rec = vec![s.test_year.to_string(), s.tasks.to_string()];
        rec.extend(vs.iter().map(|m| cell(s.vs_ssm.get(m))));
        rec.extend(om.iter().map(|v| cell(s.oec_vs_mss.get(v))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of a synthetic weekly corpus in which every country follows
/// one shared seasonal rate model plus country-level deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpusConfig {
    pub countries: usize,
    pub southern: usize,
    pub start_year: i32,
    pub years: usize,
    /// Shared coefficients on `[1, s, sin1, cos1, sin2, cos2]` of the
    /// seasonal index `s`.
    pub shared: Vec<f64>,
    /// Standard deviation of country deviations from `shared`, per coefficient.
    pub country_sd: Vec<f64>,
    /// Range of weekly rate noise standard deviations.
    pub noise_sd: (f64, f64),
    /// Population range in the first year and annual growth range.
    pub population: (f64, f64),
    pub growth: (f64, f64),
    /// Report death rates instead of population for every other country.
    pub mix_rate_only: bool,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            countries: 5,
            southern: 1,
            start_year: 2010,
            years: 6,
            shared: vec![10.0, -0.002, 0.9, 1.1, 0.25, 0.15],
            country_sd: vec![0.3, 0.0005, 0.15, 0.15, 0.08, 0.08],
            noise_sd: (0.25, 0.6),
            population: (2.0e6, 6.0e7),
            growth: (-0.004, 0.008),
            mix_rate_only: true,
        }
    }
}

pub fn country_code(i: usize) -> String {
    let a = (b'A' + (i / 26 % 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    format!("C{a}{b}")
}

/// Generates a corpus and its hemisphere map. Southern countries have their
/// seasonal terms phase-shifted by half a year.
pub fn synthetic_corpus(cfg: &SyntheticCorpusConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<CountrySeries>, HemisphereMap)> {
    if cfg.shared.len() != 6 || cfg.country_sd.len() != 6 {
        return Err(invalid("shared", "need six coefficients"));
    }
    if cfg.southern >= cfg.countries || cfg.years < 2 {
        return Err(invalid("countries", "need a northern country and at least two years"));
    }
    let mut corpus = Vec::with_capacity(cfg.countries);
    let mut map = HemisphereMap::default();
    for c in 0..cfg.countries {
        let code = country_code(c);
        let south = c >= cfg.countries - cfg.southern;
        let hemi = if south { Hemisphere::South } else { Hemisphere::North };
        map.hemispheres.insert(code.clone(), hemi);
        let coef: Vec<f64> = (0..6)
            .map(|j| {
                let dev = if cfg.country_sd[j] > 0.0 {
                    Normal::new(0.0, cfg.country_sd[j]).expect("sd > 0").sample(rng)
                } else {
                    0.0
                };
                cfg.shared[j] + dev
            })
            .collect();
        let noise = Normal::new(0.0, rng.random_range(cfg.noise_sd.0..=cfg.noise_sd.1))
            .map_err(|e| invalid("noise_sd", e.to_string()))?;
        let pop0 = rng.random_range(cfg.population.0..=cfg.population.1);
        let growth = rng.random_range(cfg.growth.0..=cfg.growth.1);
        let rate_only = cfg.mix_rate_only && c % 2 == 1;
        let mut records = Vec::new();
        for yi in 0..cfg.years {
            let year = cfg.start_year + yi as i32;
            let pop = pop0 * (1.0 + growth).powi(yi as i32);
            for week in 1..=year_weeks(year) {
                let mut s = seasonal_index(year, week);
                let x = fourier_design(&[s], true);
                if south {
                    s += 26.0;
                }
                let xs = fourier_design(&[s], true);
                let mut rate = coef[0] + coef[1] * x[(0, 0)];
                for j in 1..5 {
                    rate += coef[j + 1] * xs[(0, j)];
                }
                rate = (rate + noise.sample(rng)).max(0.5);
                let deaths = (rate * pop / 52_000.0).round();
                records.push(WeeklyRecord {
                    country: code.clone(),
                    year,
                    week,
                    deaths,
                    population: (!rate_only).then_some(pop),
                    death_rate: rate_only.then_some(deaths / pop),
                });
            }
        }
        corpus.push(CountrySeries::new(code, hemi, records)?);
    }
    Ok((corpus, map))
}
