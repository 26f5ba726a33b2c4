//! Top-1 accuracy, Hits@k and the report format.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BtnError, Result};
use crate::world::Combo;

pub fn top1_accuracy<T: PartialEq>(predictions: &[T], truths: &[T]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(BtnError::InvalidInput("top-1 accuracy of an empty set".into()));
    }
    if predictions.len() != truths.len() {
        return Err(BtnError::InvalidInput(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Fraction of truths found among the first `k` entries of their ranked list.
pub fn hits_at_k<T: PartialEq>(ranked: &[Vec<T>], truths: &[T], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(BtnError::InvalidInput("Hits@k needs k >= 1".into()));
    }
    if ranked.is_empty() {
        return Err(BtnError::InvalidInput("Hits@k of an empty set".into()));
    }
    if ranked.len() != truths.len() {
        return Err(BtnError::InvalidInput(format!("{} rankings for {} truths", ranked.len(), truths.len())));
    }
    let hits = ranked.iter().zip(truths).filter(|(r, t)| r.iter().take(k).any(|x| x == *t)).count();
    Ok(hits as f64 / ranked.len() as f64)
}

/// Hits counted over a set of items; merging tallies is exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub hits: usize,
    pub count: usize,
}

impl Tally {
    pub fn add(&mut self, hit: bool) {
        self.hits += hit as usize;
        self.count += 1;
    }

    pub fn merge(&mut self, other: Tally) {
        self.hits += other.hits;
        self.count += other.count;
    }

    pub fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.hits as f64 / self.count as f64
        }
    }
}

/// Named tallies in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tallies(pub BTreeMap<String, Tally>);

impl Tallies {
    pub fn add(&mut self, name: impl Into<String>, hit: bool) {
        self.0.entry(name.into()).or_default().add(hit);
    }

    pub fn merge(&mut self, other: &Tallies) {
        for (k, t) in &other.0 {
            self.0.entry(k.clone()).or_default().merge(*t);
        }
    }

    pub fn get(&self, name: &str) -> Tally {
        self.0.get(name).copied().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// Items the value was computed over.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotSplit {
    pub train: Vec<Combo>,
    pub held_out: Vec<Combo>,
}

/// Outcome of one experiment. Wall-clock time is kept out of the serialized
/// report so that reruns are byte-identical; run manifests record it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub experiment: String,
    pub metrics: Vec<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<ZeroShotSplit>,
    pub config_fingerprint: String,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl MetricReport {
    pub fn new(experiment: &str, fingerprint: &str) -> Self {
        MetricReport {
            experiment: experiment.to_string(),
            metrics: vec![],
            zero_shot: None,
            config_fingerprint: fingerprint.to_string(),
            notes: vec![],
            wall_clock_s: 0.0,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, count: usize) {
        self.metrics.push(Metric { name: name.into(), value, count });
    }

    pub fn push_tallies(&mut self, prefix: &str, t: &Tallies) {
        for (k, v) in &t.0 {
            let name = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            self.push(name, v.value(), v.count);
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    /// Checks the documented invariants: accuracies in `[0, 1]`, counts > 0.
    pub fn validate(&self) -> Result<()> {
        for m in &self.metrics {
            if !m.value.is_finite() || m.count == 0 {
                return Err(BtnError::Format(format!("metric {} is malformed", m.name)));
            }
            let bounded = !m.name.ends_with("_count") && !m.name.ends_with(".delta");
            if bounded && !(0.0..=1.0).contains(&m.value) {
                return Err(BtnError::Format(format!("metric {} = {} outside [0, 1]", m.name, m.value)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub reports: Vec<ReportEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub experiment: String,
    pub json: String,
    pub csv: String,
}

/// Writes `<name>.json`, `<name>.csv` for each report and `index.json`.
/// Returns the written paths relative to `dir`.
pub fn write_reports(dir: &Path, reports: &[MetricReport]) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut index = ReportIndex { reports: vec![] };
    let mut written = vec![];
    for r in reports {
        let json = format!("{}.json", r.experiment);
        let csv = format!("{}.csv", r.experiment);
        crate::io::write_json(&dir.join(&json), r)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(&csv))?);
        writeln!(f, "experiment,metric,value,count")?;
        for m in &r.metrics {
            writeln!(f, "{},{},{:.9},{}", r.experiment, m.name, m.value, m.count)?;
        }
        f.flush()?;
        index.reports.push(ReportEntry { experiment: r.experiment.clone(), json: json.clone(), csv: csv.clone() });
        written.push(json);
        written.push(csv);
    }
    crate::io::write_json(&dir.join("index.json"), &index)?;
    written.push("index.json".into());
    Ok(written)
}
