use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::AttributionConfig;
use crate::error::{Error, Result};
use crate::masks::{area_grid, MaskFitConfig};
use crate::models::TrainConfig;
use crate::perturbations::PerturbationOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RareFeature,
    RareTime,
    State,
    OperatorAgreement,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::RareFeature,
        ExperimentKind::RareTime,
        ExperimentKind::State,
        ExperimentKind::OperatorAgreement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::RareFeature => "rare-feature",
            ExperimentKind::RareTime => "rare-time",
            ExperimentKind::State => "state",
            ExperimentKind::OperatorAgreement => "operator-agreement",
        }
    }

    /// Whether the experiment explains a white-box regressor (no training).
    pub fn is_white_box(&self) -> bool {
        matches!(self, ExperimentKind::RareFeature | ExperimentKind::RareTime)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(kind) = ExperimentKind::ALL.iter().find(|k| k.name() == s) {
            return Ok(*kind);
        }
        if s.eq_ignore_ascii_case("mimic") || s.eq_ignore_ascii_case("mimic-iii") {
            return Err(Error::UnsupportedExperiment {
                name: s.to_string(),
                reason: "it needs restricted-access clinical records, which cannot be bundled or \
                         synthesized; the deletion variant and prediction-shift metrics it uses are \
                         available on the synthetic experiments"
                    .into(),
            });
        }
        let known: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        Err(Error::Config(format!(
            "unknown experiment `{s}` (expected one of {})",
            known.join(", ")
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// Reduced sizes that run on one CPU core.
    Desk,
    /// Full experiment sizes; hours of compute.
    Paper,
}

/// Attribution methods compared in a report. `Mask` is the fitted mask; the
/// rest are baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MASK")]
    Mask,
    #[serde(rename = "FO")]
    FeatureOcclusion,
    #[serde(rename = "AFO")]
    AugmentedOcclusion,
    #[serde(rename = "FP")]
    FeaturePermutation,
    #[serde(rename = "IG")]
    IntegratedGradients,
    #[serde(rename = "SVS")]
    ShapleySampling,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Mask => "MASK",
            Method::FeatureOcclusion => "FO",
            Method::AugmentedOcclusion => "AFO",
            Method::FeaturePermutation => "FP",
            Method::IntegratedGradients => "IG",
            Method::ShapleySampling => "SVS",
        }
    }

    pub fn is_baseline(&self) -> bool {
        *self != Method::Mask
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RareSettings {
    pub rows: usize,
    pub cols: usize,
    /// Salient features (rare-feature) or salient time steps (rare-time).
    pub n_salient: usize,
    /// Areas fitted per instance; the lowest-error mask is kept.
    pub area_grid: Vec<f64>,
}

impl Default for RareSettings {
    fn default() -> Self {
        RareSettings {
            rows: 50,
            cols: 50,
            n_salient: 5,
            area_grid: area_grid(0.001, 0.001, 50),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub rows: usize,
    /// Test series explained per repetition (taken from the front).
    pub explain_count: usize,
    pub train: TrainConfig,
    pub area_grid: Vec<f64>,
    /// `epsilon = epsilon_fraction * L_e(M = 1)`.
    pub epsilon_fraction: f64,
    pub skip_unreachable: bool,
    /// Fraction of top-ranked inputs replaced by their time average for the
    /// prediction-shift metrics.
    pub shift_fraction: f64,
}

impl StateSettings {
    fn for_scale(scale: Scale) -> Self {
        let (n_train, n_test, rows, hidden, explain) = match scale {
            Scale::Desk => (200, 50, 100, 50, 10),
            Scale::Paper => (800, 200, 200, 200, 200),
        };
        StateSettings {
            n_train,
            n_test,
            rows,
            explain_count: explain,
            train: TrainConfig {
                hidden_size: hidden,
                ..TrainConfig::default()
            },
            area_grid: area_grid(0.15, 0.02, 11),
            epsilon_fraction: 0.9,
            skip_unreachable: true,
            shift_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementSettings {
    /// Test series explained with every operator.
    pub n_masks: usize,
    pub operators: Vec<PerturbationOperator>,
}

impl Default for AgreementSettings {
    fn default() -> Self {
        AgreementSettings {
            n_masks: 100,
            operators: vec![
                PerturbationOperator::GaussianBlur { sigma_max: 1.0 },
                PerturbationOperator::FadeMovingAverage { window: 3 },
                PerturbationOperator::FadePastAverage { window: 6 },
            ],
        }
    }
}

/// Everything needed to rerun an experiment bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub repetitions: usize,
    pub scale: Scale,
    /// Root of all outputs; a fresh timestamped directory when absent.
    pub output_dir: Option<PathBuf>,
    pub operator: PerturbationOperator,
    pub fit: MaskFitConfig,
    pub attribution: AttributionConfig,
    pub methods: Vec<Method>,
    pub heatmaps: bool,
    pub rare: RareSettings,
    pub state: StateSettings,
    pub agreement: AgreementSettings,
}

impl ExperimentConfig {
    /// Published protocol for `kind` at the given scale.
    pub fn preset(kind: ExperimentKind, scale: Scale) -> Self {
        let mut state = StateSettings::for_scale(scale);
        let (repetitions, fit, methods) = match kind {
            ExperimentKind::RareFeature | ExperimentKind::RareTime => (
                10,
                MaskFitConfig::default(),
                vec![
                    Method::Mask,
                    Method::FeatureOcclusion,
                    Method::FeaturePermutation,
                    Method::IntegratedGradients,
                    Method::ShapleySampling,
                ],
            ),
            ExperimentKind::State | ExperimentKind::OperatorAgreement => (
                if kind == ExperimentKind::State { 5 } else { 1 },
                MaskFitConfig {
                    lambda_0: 0.1,
                    dilation: 100.0,
                    lambda_c: 1.0,
                    ..MaskFitConfig::default()
                },
                if kind == ExperimentKind::State {
                    vec![
                        Method::Mask,
                        Method::FeatureOcclusion,
                        Method::AugmentedOcclusion,
                        Method::FeaturePermutation,
                        Method::IntegratedGradients,
                        Method::ShapleySampling,
                    ]
                } else {
                    vec![Method::Mask]
                },
            ),
        };
        let agreement = AgreementSettings::default();
        if kind == ExperimentKind::OperatorAgreement {
            state.n_test = state.n_test.max(agreement.n_masks);
            state.explain_count = agreement.n_masks;
        }
        ExperimentConfig {
            experiment: kind,
            seed: 0,
            repetitions,
            scale,
            output_dir: None,
            operator: PerturbationOperator::GaussianBlur { sigma_max: 1.0 },
            fit,
            attribution: AttributionConfig::default(),
            methods,
            heatmaps: true,
            rare: RareSettings::default(),
            state,
            agreement,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        self.operator.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.fit.validate()?;
        self.attribution.validate()?;
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        match self.experiment {
            ExperimentKind::RareFeature | ExperimentKind::RareTime => {
                if self.rare.area_grid.is_empty() {
                    return bad("rare.area_grid is empty".into());
                }
            }
            ExperimentKind::State | ExperimentKind::OperatorAgreement => {
                let s = &self.state;
                s.train.validate()?;
                if s.n_train == 0 || s.n_test == 0 || s.rows == 0 {
                    return bad("state dataset sizes must be positive".into());
                }
                if s.explain_count == 0 || s.explain_count > s.n_test {
                    return bad(format!(
                        "state.explain_count must be in 1..={} (the test-set size)",
                        s.n_test
                    ));
                }
                if !(s.epsilon_fraction > 0.0) || !(s.shift_fraction > 0.0 && s.shift_fraction <= 1.0) {
                    return bad("state.epsilon_fraction must be positive and state.shift_fraction in (0, 1]".into());
                }
                if self.experiment == ExperimentKind::OperatorAgreement {
                    if self.agreement.operators.len() < 2 {
                        return bad("operator agreement needs at least two operators".into());
                    }
                    for op in &self.agreement.operators {
                        op.validate().map_err(|e| Error::Config(e.to_string()))?;
                    }
                    if self.agreement.n_masks != s.explain_count {
                        return bad("agreement.n_masks must equal state.explain_count".into());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Command-line inputs that shape the resolved config.
#[derive(Clone, Debug, Default)]
pub struct ConfigSources {
    pub experiment: Option<ExperimentKind>,
    pub config_file: Option<PathBuf>,
    pub scale: Option<Scale>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// `dotted.path=value` overrides, applied in order.
    pub overrides: Vec<String>,
}

/// Resolves preset, config file, dotted overrides and direct flags, in
/// increasing order of precedence.
pub fn resolve_config(src: &ConfigSources) -> Result<ExperimentConfig> {
    let file: Option<Value> = match &src.config_file {
        Some(path) => Some(read_json(path)?),
        None => None,
    };
    let file_field = |key: &str| file.as_ref().and_then(|v| v.get(key)).cloned();

    let kind = match (src.experiment, file_field("experiment")) {
        (Some(k), _) => k,
        (None, Some(v)) => {
            let name = v.as_str().ok_or_else(|| Error::Config("`experiment` must be a string".into()))?;
            name.parse()?
        }
        (None, None) => {
            return Err(Error::Config(
                "no experiment given (pass a config file with `experiment`, or name one)".into(),
            ))
        }
    };
    let scale = match (src.scale, file_field("scale")) {
        (Some(s), _) => s,
        (None, Some(v)) => serde_json::from_value(v).map_err(|e| Error::Config(format!("scale: {e}")))?,
        (None, None) => Scale::Desk,
    };

    let mut value = serde_json::to_value(ExperimentConfig::preset(kind, scale))?;
    if let Some(file) = file {
        merge(&mut value, file);
    }
    value["experiment"] = serde_json::to_value(kind)?;
    value["scale"] = serde_json::to_value(scale)?;
    for ov in &src.overrides {
        apply_override(&mut value, ov)?;
    }
    if let Some(seed) = src.seed {
        value["seed"] = seed.into();
    }
    if let Some(out) = &src.output_dir {
        value["output_dir"] = serde_json::to_value(out)?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Recursively overlays `patch` onto `base`; objects merge key by key and
/// everything else is replaced.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `a.b.c=value` override. The value is parsed as JSON when
/// possible and taken as a string otherwise. Every path segment except the
/// last must already exist, which catches misspelled keys early.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override path `{path}` has an empty segment")));
    }
    let mut node = root;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    if !map.contains_key(*key) {
                        return Err(Error::Config(format!("unknown config key `{path}`")));
                    }
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.get_mut(*key)
                    .ok_or_else(|| Error::Config(format!("unknown config key `{path}`")))?
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` in `{path}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{path}` descends into a non-object value"))),
        };
    }
    unreachable!("loop returns on the last segment")
}
