use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::mean_std;

use super::config::{ExperimentConfig, ExperimentKind, Method};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Metric names in report order.
pub const METRIC_NAMES: [&str; 9] = [
    "AUP",
    "AUR",
    "AUROC",
    "AUPRC",
    "information",
    "entropy",
    "CE",
    "ACC",
    "salient_fraction",
];

/// Scores of one explanation of one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Method label; masks fitted with a non-default operator carry it as
    /// `MASK:<operator>`.
    pub method: String,
    pub seed: u64,
    /// 1-based.
    pub repetition: usize,
    /// 1-based index of the series within its repetition's explained set.
    pub instance: usize,
    #[serde(rename = "AUP")]
    pub aup: f64,
    #[serde(rename = "AUR")]
    pub aur: f64,
    #[serde(rename = "AUROC")]
    pub auroc: f64,
    #[serde(rename = "AUPRC")]
    pub auprc: f64,
    pub information: f64,
    pub entropy: f64,
    #[serde(rename = "CE")]
    pub ce: Option<f64>,
    #[serde(rename = "ACC")]
    pub acc: Option<f64>,
    /// Fraction of mask entries at or above 0.5.
    pub salient_fraction: f64,
    /// Area of the kept mask (mask methods only).
    pub area: Option<f64>,
    /// Whether the extremal search met its threshold (state masks only).
    pub converged: Option<bool>,
}

impl MetricRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "AUP" => Some(self.aup),
            "AUR" => Some(self.aur),
            "AUROC" => Some(self.auroc),
            "AUPRC" => Some(self.auprc),
            "information" => Some(self.information),
            "entropy" => Some(self.entropy),
            "CE" => self.ce,
            "ACC" => self.acc,
            "salient_fraction" => Some(self.salient_fraction),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation of every metric for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub count: usize,
    pub metrics: BTreeMap<String, MeanStd>,
}

/// Per-method aggregates in first-appearance order of the records.
pub fn aggregate(records: &[MetricRecord]) -> Vec<MethodAggregate> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let rows: Vec<&MetricRecord> = records.iter().filter(|r| r.method == method).collect();
            let metrics = METRIC_NAMES
                .iter()
                .filter_map(|&name| {
                    let values: Vec<f64> = rows.iter().filter_map(|r| r.metric(name)).collect();
                    if values.is_empty() {
                        return None;
                    }
                    let (mean, std) = mean_std(&values);
                    Some((name.to_string(), MeanStd { mean, std }))
                })
                .collect();
            MethodAggregate {
                method: method.to_string(),
                count: rows.len(),
                metrics,
            }
        })
        .collect()
}

/// Held-out performance of one trained classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub repetition: usize,
    pub final_train_loss: f64,
    pub final_train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Mean pairwise binarized agreement between masks fitted with different
/// operators on the same instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub operators: Vec<String>,
    pub count: usize,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

impl AgreementMatrix {
    /// `pairs[k][a][b]` is the agreement of operators `a` and `b` on
    /// instance `k`.
    pub fn from_pairs(operators: Vec<String>, pairs: &[Vec<Vec<f64>>]) -> Self {
        let n = operators.len();
        let mut mean = vec![vec![0.0; n]; n];
        let mut std = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let values: Vec<f64> = pairs.iter().map(|p| p[a][b]).collect();
                let (m, s) = mean_std(&values);
                mean[a][b] = m;
                std[a][b] = s;
            }
        }
        AgreementMatrix {
            operators,
            count: pairs.len(),
            mean,
            std,
        }
    }
}

/// One pass/fail line of the acceptance table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Everything `evaluate` writes to `report.json`. Wall-clock times live in
/// a separate file so that this document is a pure function of the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub experiment: ExperimentKind,
    /// The resolved config, without the output directory.
    pub config: ExperimentConfig,
    pub records: Vec<MetricRecord>,
    pub aggregates: Vec<MethodAggregate>,
    pub models: Vec<ModelSummary>,
    pub agreement: Option<AgreementMatrix>,
    pub checks: Vec<Check>,
    /// Name of the file next to this one holding per-fit runtimes.
    pub timings_file: String,
}

impl ExperimentReport {
    pub fn new(
        config: &ExperimentConfig,
        records: Vec<MetricRecord>,
        models: Vec<ModelSummary>,
        agreement: Option<AgreementMatrix>,
    ) -> Self {
        let mut echo = config.clone();
        echo.output_dir = None;
        let aggregates = aggregate(&records);
        let mut report = ExperimentReport {
            format_version: REPORT_FORMAT_VERSION,
            experiment: config.experiment,
            config: echo,
            records,
            aggregates,
            models,
            agreement,
            checks: Vec::new(),
            timings_file: "timings.json".into(),
        };
        report.checks = acceptance_checks(&report);
        report
    }

    pub fn aggregate_for(&self, method: &str) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    pub fn mean(&self, method: &str, metric: &str) -> Option<f64> {
        self.aggregate_for(method)?.metrics.get(metric).map(|m| m.mean)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per method, `<metric>_mean,<metric>_std` columns for every
    /// metric any record carries.
    pub fn summary_csv(&self) -> String {
        let present: Vec<&str> = METRIC_NAMES
            .iter()
            .copied()
            .filter(|m| self.aggregates.iter().any(|a| a.metrics.contains_key(*m)))
            .collect();
        let mut out = String::from("method,count");
        for m in &present {
            let _ = write!(out, ",{m}_mean,{m}_std");
        }
        out.push('\n');
        for a in &self.aggregates {
            let _ = write!(out, "{},{}", a.method, a.count);
            for m in &present {
                match a.metrics.get(*m) {
                    Some(v) => {
                        let _ = write!(out, ",{:?},{:?}", v.mean, v.std);
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Human-readable table of the main columns.
    pub fn table(&self) -> String {
        let cols = ["AUP", "AUR", "AUROC", "AUPRC", "information", "entropy", "CE", "ACC"];
        let mut out = format!("{:<28}", "method");
        for c in cols {
            let _ = write!(out, " {c:>17}");
        }
        out.push('\n');
        for a in &self.aggregates {
            let _ = write!(out, "{:<28}", a.method);
            for c in cols {
                match a.metrics.get(c) {
                    Some(v) => {
                        let _ = write!(out, " {:>17}", format!("{:.3} ± {:.3}", v.mean, v.std));
                    }
                    None => {
                        let _ = write!(out, " {:>17}", "-");
                    }
                }
            }
            out.push('\n');
        }
        if let Some(agr) = &self.agreement {
            let _ = writeln!(out, "\nagreement over {} instances", agr.count);
            let _ = write!(out, "{:<22}", "");
            for op in &agr.operators {
                let _ = write!(out, " {op:>20}");
            }
            out.push('\n');
            for (a, row) in agr.mean.iter().enumerate() {
                let _ = write!(out, "{:<22}", agr.operators[a]);
                for (b, v) in row.iter().enumerate() {
                    let _ = write!(out, " {:>20}", format!("{v:.3} ± {:.3}", agr.std[a][b]));
                }
                out.push('\n');
            }
        }
        out
    }
}

const MASK: &str = "MASK";

fn baselines(report: &ExperimentReport) -> Vec<&str> {
    report
        .config
        .methods
        .iter()
        .filter(|m| m.is_baseline())
        .map(Method::label)
        .filter(|m| report.aggregate_for(m).is_some())
        .collect()
}

fn missing(name: &str) -> Check {
    Check::new(name, false, "MASK was not evaluated")
}

fn range_check(report: &ExperimentReport, metric: &str, lo: f64, hi: f64) -> Check {
    let name = format!("MASK mean {metric} in [{lo:.2}, {hi:.2}]");
    match report.mean(MASK, metric) {
        Some(v) => Check::new(name, (lo..=hi).contains(&v), format!("{v:.4}")),
        None => missing(&name),
    }
}

fn at_least(report: &ExperimentReport, metric: &str, lo: f64) -> Check {
    let name = format!("MASK mean {metric} >= {lo:.2}");
    match report.mean(MASK, metric) {
        Some(v) => Check::new(name, v >= lo, format!("{v:.4}")),
        None => missing(&name),
    }
}

/// Compares MASK against every baseline with `ok(mask, baseline)`.
fn versus_baselines(
    report: &ExperimentReport,
    name: String,
    metric: &str,
    ok: impl Fn(f64, f64) -> bool,
) -> Check {
    let Some(m) = report.mean(MASK, metric) else {
        return missing(&name);
    };
    let rivals = baselines(report);
    let mut passed = true;
    let mut detail = format!("MASK {m:.4}");
    for b in rivals {
        let v = report.mean(b, metric).unwrap_or(f64::NAN);
        passed &= ok(m, v);
        let _ = write!(detail, ", {b} {v:.4}");
    }
    Check::new(name, passed, detail)
}

fn baselines_at_most(report: &ExperimentReport, metric: &str, hi: f64) -> Check {
    let mut passed = true;
    let mut detail = Vec::new();
    for b in baselines(report) {
        let v = report.mean(b, metric).unwrap_or(f64::NAN);
        passed &= v <= hi;
        detail.push(format!("{b} {v:.4}"));
    }
    if detail.is_empty() {
        detail.push("no baselines evaluated".into());
    }
    Check::new(format!("every baseline mean {metric} <= {hi:.2}"), passed, detail.join(", "))
}

/// Acceptance table for the report's experiment. Runtime limits are not
/// included; they depend on the machine and are checked by `reproduce`.
pub fn acceptance_checks(report: &ExperimentReport) -> Vec<Check> {
    let info_ratio = |r: &ExperimentReport| {
        versus_baselines(r, "MASK information >= 5x every baseline".into(), "information", |m, b| {
            m >= 5.0 * b
        })
    };
    let entropy_ratio = |r: &ExperimentReport| {
        versus_baselines(r, "MASK entropy <= 0.5x every baseline".into(), "entropy", |m, b| {
            m <= 0.5 * b
        })
    };
    match report.experiment {
        ExperimentKind::RareFeature => vec![
            range_check(report, "AUR", 0.50, 0.70),
            at_least(report, "AUP", 0.95),
            baselines_at_most(report, "AUR", 0.30),
            info_ratio(report),
            entropy_ratio(report),
        ],
        ExperimentKind::RareTime => vec![
            range_check(report, "AUR", 0.58, 0.78),
            baselines_at_most(report, "AUR", 0.30),
            info_ratio(report),
            entropy_ratio(report),
        ],
        ExperimentKind::State => {
            let fraction = match report.mean(MASK, "salient_fraction") {
                Some(v) => Check::new("MASK salient fraction <= 0.45", v <= 0.45, format!("{v:.4}")),
                None => missing("MASK salient fraction <= 0.45"),
            };
            vec![
                at_least(report, "AUROC", 0.85),
                at_least(report, "AUPRC", 0.70),
                versus_baselines(report, "MASK AUP > every baseline".into(), "AUP", |m, b| m > b),
                fraction,
            ]
        }
        ExperimentKind::OperatorAgreement => match &report.agreement {
            None => vec![Check::new("agreement matrix", false, "no agreement matrix computed")],
            Some(agr) => {
                let n = agr.operators.len();
                let diag = (0..n).all(|a| agr.mean[a][a] == 1.0);
                let mut worst = f64::INFINITY;
                let mut detail = Vec::new();
                for a in 0..n {
                    for b in a + 1..n {
                        worst = worst.min(agr.mean[a][b]);
                        detail.push(format!("{}/{} {:.4}", agr.operators[a], agr.operators[b], agr.mean[a][b]));
                    }
                }
                vec![
                    Check::new("agreement diagonal is 1", diag, format!("{n} operators")),
                    Check::new("pairwise agreement >= 0.70", worst >= 0.70, detail.join(", ")),
                ]
            }
        },
    }
}

/// Wall-clock limit of a full `reproduce` run, in seconds.
pub fn runtime_limit_seconds(kind: ExperimentKind) -> Option<f64> {
    match kind {
        ExperimentKind::RareFeature | ExperimentKind::RareTime => Some(3600.0),
        ExperimentKind::State => Some(3.0 * 3600.0),
        ExperimentKind::OperatorAgreement => None,
    }
}

/// Typical seconds per mask fit on GPU hardware, for comparison with the
/// measured times.
pub fn reference_mask_fit_seconds(kind: ExperimentKind) -> Option<f64> {
    match kind {
        ExperimentKind::RareFeature | ExperimentKind::RareTime => Some(20.7),
        ExperimentKind::State => Some(49.8),
        ExperimentKind::OperatorAgreement => None,
    }
}
