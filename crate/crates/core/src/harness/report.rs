use std::collections::BTreeMap;
use std::path::Path;

use super::config::RegimeThresholds;
use super::records::{save_records, ExperimentRecord};
use super::regime::{label_regime, Regime};
use super::HarnessError;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REGIMES_FILE: &str = "regimes.csv";
pub const REGIME_COUNTS_FILE: &str = "regime_counts.csv";

/// Mean and population standard deviation of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

/// Aggregate over the successful seeds of one `(factor, value, epoch)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub factor: String,
    pub value: String,
    pub epoch: usize,
    pub runs: usize,
    pub failed: usize,
    pub metrics: Vec<(&'static str, Option<Stat>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub regimes: Vec<Option<Regime>>,
    pub regime_counts: BTreeMap<Regime, usize>,
}

/// Groups records by `(factor, value, epoch)`, keeping first-appearance order.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, String, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        let k = (r.factor.clone(), r.value.clone(), r.epoch);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let group = &groups[&k];
            let ok: Vec<&&ExperimentRecord> = group.iter().filter(|r| r.is_ok()).collect();
            let names = group[0].metrics().map(|(name, _)| name);
            let metrics = names
                .iter()
                .enumerate()
                .map(|(i, &name)| {
                    let vals: Vec<f64> = ok.iter().filter_map(|r| r.metrics()[i].1).collect();
                    (name, Stat::of(&vals))
                })
                .collect();
            SummaryRow {
                factor: k.0,
                value: k.1,
                epoch: k.2,
                runs: ok.len(),
                failed: group.len() - ok.len(),
                metrics,
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `records.csv`, `summary.csv`, `regimes.csv` and
/// `regime_counts.csv` into `out_dir`.
pub fn report(
    records: &[ExperimentRecord],
    thresholds: &RegimeThresholds,
    out_dir: impl AsRef<Path>,
) -> Result<Report, HarnessError> {
    thresholds.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    save_records(records, out_dir.join(super::sweep::RECORDS_FILE))?;

    let summary = summarize(records);
    let mut w = csv::Writer::from_path(out_dir.join(SUMMARY_FILE))?;
    let mut header = vec!["factor".to_string(), "value".into(), "epoch".into(), "runs".into(), "failed".into()];
    if let Some(first) = records.first() {
        for (name, _) in first.metrics() {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_std"));
        }
    }
    w.write_record(&header)?;
    for row in &summary {
        let mut fields = vec![
            row.factor.clone(),
            row.value.clone(),
            row.epoch.to_string(),
            row.runs.to_string(),
            row.failed.to_string(),
        ];
        for (_, stat) in &row.metrics {
            fields.push(fmt_opt(stat.map(|s| s.mean)));
            fields.push(fmt_opt(stat.map(|s| s.std)));
        }
        w.write_record(&fields)?;
    }
    w.flush()?;

    let mut regimes = Vec::with_capacity(records.len());
    let mut regime_counts = BTreeMap::new();
    let mut w = csv::Writer::from_path(out_dir.join(REGIMES_FILE))?;
    w.write_record(["factor", "value", "seed", "epoch", "regime"])?;
    for r in records {
        let label = if r.is_ok() {
            label_regime(r, thresholds)?.map(|l| l.regime)
        } else {
            None
        };
        if let Some(reg) = label {
            *regime_counts.entry(reg).or_insert(0) += 1;
        }
        w.write_record([
            r.factor.clone(),
            r.value.clone(),
            r.seed.to_string(),
            r.epoch.to_string(),
            label.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
        regimes.push(label);
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join(REGIME_COUNTS_FILE))?;
    w.write_record(["regime", "count"])?;
    for reg in [Regime::Under, Regime::Critical, Regime::Sufficient] {
        w.write_record([reg.to_string(), regime_counts.get(&reg).copied().unwrap_or(0).to_string()])?;
    }
    w.flush()?;

    Ok(Report {
        summary,
        regimes,
        regime_counts,
    })
}
