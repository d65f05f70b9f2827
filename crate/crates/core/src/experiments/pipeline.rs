use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baselines::{
    augmented_feature_occlusion, feature_occlusion, feature_permutation, integrated_gradients,
    shapley_value_sampling,
};
use crate::datagen::{
    generate_arma, generate_hmm_dataset, load_dataset, make_rare_feature_target, make_rare_time_target,
    save_dataset, HmmDataset, SaliencyTarget, StoredDataset,
};
use crate::error::{Error, Result};
use crate::masks::{error_loss, fit_extremal_mask, fit_lowest_error_mask, AreaSearch, ExtremalConfig, Mask};
use crate::metrics::{
    auroc_auprc, aup_aur, mask_entropy, mask_information, pairwise_mask_accuracy, prediction_shift,
    replace_top_fraction_by_time_average, scores_to_mask, ThresholdGrid,
};
use crate::models::{train_gru, DifferentiableModel, FinalStep, GruClassifier, WhiteBoxRegressor};
use crate::numerics::{RngStream, TimeMatrix};
use crate::perturbations::PerturbationOperator;

use super::config::{resolve_config, ConfigSources, ExperimentConfig, ExperimentKind, Method};
use super::report::{
    reference_mask_fit_seconds, runtime_limit_seconds, AgreementMatrix, Check, ExperimentReport, MetricRecord,
    ModelSummary,
};

/// Sink for one-line progress messages.
pub type Progress<'a> = &'a (dyn Fn(&str) + Sync);

/// Progress sink that drops every message.
pub fn quiet(_: &str) {}

// Sub-stream keys under each repetition's stream.
const GENERATE: u64 = 0;
const TRAIN: u64 = 1;
const EXPLAIN: u64 = 2;
const PERMUTE: u64 = 3;

/// Stream for `stage` of repetition `rep` (0-based).
fn stage_stream(cfg: &ExperimentConfig, rep: usize, stage: u64) -> RngStream {
    RngStream::new(cfg.seed).substream(rep as u64).substream(stage)
}

/// File layout of one run. Repetitions and instances are numbered from 1.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    /// The configured output directory, or a fresh one under `runs/`.
    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        match &cfg.output_dir {
            Some(dir) => RunDir::new(dir),
            None => RunDir::new(default_output_dir(cfg.experiment)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn split_dir(&self, rep: usize, split: &str) -> PathBuf {
        self.dataset_dir().join(format!("rep_{rep}")).join(split)
    }

    pub fn model_dir(&self, rep: usize) -> PathBuf {
        self.root.join("model").join(format!("rep_{rep}"))
    }

    pub fn explanation_dir(&self, rep: usize, instance: usize) -> PathBuf {
        self.root
            .join("explanations")
            .join(format!("rep_{rep}"))
            .join(format!("instance_{instance}"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn timings_path(&self) -> PathBuf {
        self.report_dir().join("timings.json")
    }
}

/// `runs/<experiment>-<unix seconds>`, with a numeric suffix if taken.
pub fn default_output_dir(kind: ExperimentKind) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = PathBuf::from("runs").join(format!("{kind}-{secs}"));
    let mut candidate = base.clone();
    let mut n = 2;
    while candidate.exists() {
        candidate = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    candidate
}

/// Resolves the config for a single stage. When neither an experiment nor a
/// config file is given, the `config.json` of the output directory is used.
pub fn resolve_stage_config(src: &ConfigSources) -> Result<ExperimentConfig> {
    if src.experiment.is_none() && src.config_file.is_none() {
        if let Some(out) = &src.output_dir {
            let stored = RunDir::new(out).config_path();
            if stored.exists() {
                let mut with_file = src.clone();
                with_file.config_file = Some(stored);
                return resolve_config(&with_file);
            }
        }
    }
    resolve_config(src)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path, hint: &str) -> Result<String> {
    if !path.exists() {
        return Err(Error::InvalidRequest(format!("{} not found; {hint}", path.display())));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_config(cfg: &ExperimentConfig, run: &RunDir) -> Result<()> {
    let mut stored = cfg.clone();
    stored.output_dir = Some(run.root().to_path_buf());
    write_file(&run.config_path(), stored.to_json()?)
}

/// Wall-clock time of one explanation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTiming {
    pub repetition: usize,
    pub instance: usize,
    pub method: String,
    pub seconds: f64,
}

/// Contents of `timings.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: BTreeMap<String, f64>,
    pub fits: Vec<FitTiming>,
    pub mean_mask_fit_seconds: Option<f64>,
    /// Typical per-mask time on GPU hardware, for comparison.
    pub reference_mask_fit_seconds: Option<f64>,
}

impl Timings {
    pub fn load(run: &RunDir) -> Result<Timings> {
        let path = run.timings_path();
        if !path.exists() {
            return Ok(Timings::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn update(run: &RunDir, f: impl FnOnce(&mut Timings)) -> Result<()> {
        let mut t = Timings::load(run)?;
        f(&mut t);
        write_file(&run.timings_path(), serde_json::to_string_pretty(&t)?)
    }
}

fn is_rare(cfg: &ExperimentConfig) -> bool {
    cfg.experiment.is_white_box()
}

// ---------------------------------------------------------------- generate

/// Writes the config and a freshly generated dataset. Refuses to touch an
/// existing dataset directory.
pub fn generate(cfg: &ExperimentConfig, run: &RunDir, progress: Progress) -> Result<usize> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = run.dataset_dir();
    if dir.exists() && fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?.next().is_some() {
        return Err(Error::InvalidRequest(format!(
            "{} already holds a dataset; datasets are never overwritten",
            dir.display()
        )));
    }
    write_config(cfg, run)?;
    let count = if is_rare(cfg) {
        let r = &cfg.rare;
        let mut inputs = Vec::with_capacity(cfg.repetitions);
        let mut targets = Vec::with_capacity(cfg.repetitions);
        for rep in 0..cfg.repetitions {
            let mut rng = stage_stream(cfg, rep, GENERATE);
            inputs.push(generate_arma(&mut rng, r.rows, r.cols)?);
            targets.push(match cfg.experiment {
                ExperimentKind::RareFeature => make_rare_feature_target(&mut rng, r.rows, r.cols, r.n_salient)?,
                _ => make_rare_time_target(&mut rng, r.rows, r.cols, r.n_salient)?,
            });
        }
        let meta = json!({
            "experiment": cfg.experiment,
            "seed": cfg.seed,
            "series": cfg.repetitions,
            "seeding": "series k is drawn from sub-stream (k - 1, 0) of the root seed",
        });
        save_dataset(
            &dir,
            &StoredDataset {
                inputs,
                targets,
                labels: None,
                states: None,
                meta,
            },
        )?;
        cfg.repetitions
    } else {
        let s = &cfg.state;
        for rep in 0..cfg.repetitions {
            let mut rng = stage_stream(cfg, rep, GENERATE);
            let all = generate_hmm_dataset(&mut rng, s.n_train + s.n_test, s.rows)?;
            let (train, test) = all.split_at(s.n_train);
            for (split, part) in [("train", train), ("test", test)] {
                let meta = json!({
                    "experiment": cfg.experiment,
                    "seed": cfg.seed,
                    "repetition": rep + 1,
                    "split": split,
                    "seeding": "both splits come from sub-stream (repetition - 1, 0) of the root seed",
                });
                save_dataset(&run.split_dir(rep + 1, split), &StoredDataset::from((part, meta)))?;
            }
            progress(&format!("generated repetition {}/{}", rep + 1, cfg.repetitions));
        }
        cfg.repetitions * (s.n_train + s.n_test)
    };
    let secs = start.elapsed().as_secs_f64();
    Timings::update(run, |t| {
        t.stages.insert("generate".into(), secs);
    })?;
    Ok(count)
}

fn load_rare(cfg: &ExperimentConfig, run: &RunDir) -> Result<StoredDataset> {
    let dir = run.dataset_dir();
    if !dir.join("meta.json").exists() {
        return Err(Error::InvalidRequest(format!(
            "no dataset at {}; run `generate` first",
            dir.display()
        )));
    }
    let ds = load_dataset(&dir)?;
    if ds.inputs.len() != cfg.repetitions {
        return Err(Error::InvalidRequest(format!(
            "dataset holds {} series but the config asks for {} repetitions",
            ds.inputs.len(),
            cfg.repetitions
        )));
    }
    Ok(ds)
}

fn load_split(run: &RunDir, rep: usize, split: &str) -> Result<HmmDataset> {
    let dir = run.split_dir(rep, split);
    if !dir.join("meta.json").exists() {
        return Err(Error::InvalidRequest(format!(
            "no dataset at {}; run `generate` first",
            dir.display()
        )));
    }
    load_dataset(&dir)?.to_hmm()
}

// ------------------------------------------------------------------- train

/// Trains one classifier per repetition; white-box experiments have nothing
/// to train and return an empty list.
pub fn train(cfg: &ExperimentConfig, run: &RunDir, progress: Progress) -> Result<Vec<ModelSummary>> {
    cfg.validate()?;
    if is_rare(cfg) {
        progress("white-box experiment: no model to train");
        return Ok(Vec::new());
    }
    write_config(cfg, run)?;
    let start = Instant::now();
    let mut summaries = Vec::with_capacity(cfg.repetitions);
    for rep in 1..=cfg.repetitions {
        let train_set = load_split(run, rep, "train")?;
        let test_set = load_split(run, rep, "test")?;
        let mut rng = stage_stream(cfg, rep - 1, TRAIN);
        let (model, report) = train_gru(&train_set, Some(&test_set), &cfg.state.train, &mut rng)?;
        let dir = run.model_dir(rep);
        write_file(&dir.join("model.json"), model.to_json()?)?;
        let mut curve = String::from("epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n");
        for e in &report.epochs {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
            curve.push_str(&format!(
                "{},{:?},{:?},{},{}\n",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.validation_loss),
                opt(e.validation_accuracy)
            ));
        }
        write_file(&dir.join("training.csv"), curve)?;
        let summary = ModelSummary {
            repetition: rep,
            final_train_loss: report.final_train_loss,
            final_train_accuracy: report.final_train_accuracy,
            test_loss: report.final_validation_loss.unwrap_or(f64::NAN),
            test_accuracy: report.final_validation_accuracy.unwrap_or(f64::NAN),
        };
        write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        progress(&format!(
            "trained repetition {rep}/{}: test loss {:.4}, test accuracy {:.4}",
            cfg.repetitions, summary.test_loss, summary.test_accuracy
        ));
        summaries.push(summary);
    }
    let secs = start.elapsed().as_secs_f64();
    Timings::update(run, |t| {
        t.stages.insert("train".into(), secs);
    })?;
    Ok(summaries)
}

/// Loads the classifier trained for repetition `rep` (1-based).
pub fn load_model(run: &RunDir, rep: usize) -> Result<GruClassifier> {
    let path = run.model_dir(rep).join("model.json");
    GruClassifier::from_json(&read_file(&path, "run `train` first")?)
}

fn load_model_summary(run: &RunDir, rep: usize) -> Result<ModelSummary> {
    let path = run.model_dir(rep).join("summary.json");
    Ok(serde_json::from_str(&read_file(&path, "run `train` first")?)?)
}

// ----------------------------------------------------------------- explain

/// File stem of a method's explanation; masks from the agreement study carry
/// their operator.
fn stem(method: Method, operator: Option<PerturbationOperator>) -> String {
    match operator {
        Some(op) => format!("{}_{}", method.label(), op.name()),
        None => method.label().to_string(),
    }
}

fn record_label(method: Method, operator: Option<PerturbationOperator>) -> String {
    match operator {
        Some(op) => format!("{}:{}", method.label(), op.name()),
        None => method.label().to_string(),
    }
}

/// What one method produced for one instance.
enum Explanation {
    Mask(Box<AreaSearch>),
    Scores(TimeMatrix),
}

fn save_explanation(dir: &Path, stem: &str, e: &Explanation) -> Result<()> {
    match e {
        Explanation::Mask(search) => {
            write_file(&dir.join(format!("{stem}.json")), serde_json::to_string(search)?)?;
            write_file(&dir.join(format!("{stem}.csv")), search.fit.mask.values().to_csv())
        }
        Explanation::Scores(s) => write_file(&dir.join(format!("{stem}.csv")), s.to_csv()),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn method_key(method: Method) -> u64 {
    method as u64
}

/// Runs every non-mask method that needs only the instance itself.
fn explain_baseline(
    cfg: &ExperimentConfig,
    model: &dyn DifferentiableModel,
    x: &TimeMatrix,
    method: Method,
    reference: &[TimeMatrix],
    rng: &mut RngStream,
) -> Result<TimeMatrix> {
    let a = &cfg.attribution;
    match method {
        Method::FeatureOcclusion => feature_occlusion(model, x, a),
        Method::AugmentedOcclusion => augmented_feature_occlusion(model, x, reference, a, rng),
        Method::IntegratedGradients => integrated_gradients(model, x, a),
        Method::ShapleySampling => shapley_value_sampling(model, x, a, rng),
        Method::Mask | Method::FeaturePermutation => unreachable!("handled by the caller"),
    }
}

/// Fits the masks and runs the baselines; returns per-explanation timings.
pub fn explain(cfg: &ExperimentConfig, run: &RunDir, progress: Progress) -> Result<Vec<FitTiming>> {
    cfg.validate()?;
    write_config(cfg, run)?;
    let start = Instant::now();
    let timings = if is_rare(cfg) {
        explain_rare(cfg, run, progress)?
    } else {
        let mut all = Vec::new();
        for rep in 1..=cfg.repetitions {
            all.extend(explain_state(cfg, run, rep, progress)?);
        }
        all
    };
    let secs = start.elapsed().as_secs_f64();
    let mask_times: Vec<f64> = timings
        .iter()
        .filter(|t| t.method.starts_with(Method::Mask.label()))
        .map(|t| t.seconds)
        .collect();
    let fits = timings.clone();
    Timings::update(run, |t| {
        t.stages.insert("explain".into(), secs);
        t.mean_mask_fit_seconds = (!mask_times.is_empty())
            .then(|| mask_times.iter().sum::<f64>() / mask_times.len() as f64);
        t.reference_mask_fit_seconds = reference_mask_fit_seconds(cfg.experiment);
        t.fits = fits;
    })?;
    Ok(timings)
}

fn explain_rare(cfg: &ExperimentConfig, run: &RunDir, progress: Progress) -> Result<Vec<FitTiming>> {
    let ds = load_rare(cfg, run)?;
    let per_rep = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<FitTiming>> {
            let x = &ds.inputs[rep];
            let model = WhiteBoxRegressor::new(ds.targets[rep].clone());
            let dir = run.explanation_dir(rep + 1, 1);
            let mut timings = Vec::new();
            for &method in &cfg.methods {
                let mut rng = stage_stream(cfg, rep, EXPLAIN).substream(method_key(method));
                let (explanation, seconds) = timed(|| {
                    Ok(match method {
                        Method::Mask => Explanation::Mask(Box::new(fit_lowest_error_mask(
                            &model,
                            cfg.operator,
                            x,
                            &cfg.fit,
                            &cfg.rare.area_grid,
                        )?)),
                        // Each series has its own white-box model, so the
                        // whole set is permuted and only this member is kept.
                        Method::FeaturePermutation => {
                            let mut rng = stage_stream(cfg, rep, PERMUTE);
                            Explanation::Scores(feature_permutation(&model, &ds.inputs, &mut rng)?.swap_remove(rep))
                        }
                        _ => Explanation::Scores(explain_baseline(cfg, &model, x, method, &ds.inputs, &mut rng)?),
                    })
                })?;
                save_explanation(&dir, &stem(method, None), &explanation)?;
                timings.push(FitTiming {
                    repetition: rep + 1,
                    instance: 1,
                    method: method.label().into(),
                    seconds,
                });
            }
            progress(&format!("explained series {}/{}", rep + 1, cfg.repetitions));
            Ok(timings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

fn explain_state(cfg: &ExperimentConfig, run: &RunDir, rep: usize, progress: Progress) -> Result<Vec<FitTiming>> {
    let model = load_model(run, rep)?;
    let train_set = load_split(run, rep, "train")?;
    let test_set = load_split(run, rep, "test")?;
    let explained = &test_set.inputs[..cfg.state.explain_count];
    let agreement = cfg.experiment == ExperimentKind::OperatorAgreement;

    let mut timings = Vec::new();
    if cfg.methods.contains(&Method::FeaturePermutation) {
        let mut rng = stage_stream(cfg, rep - 1, PERMUTE);
        let (scores, seconds) = timed(|| feature_permutation(&model, explained, &mut rng))?;
        for (k, s) in scores.into_iter().enumerate() {
            save_explanation(
                &run.explanation_dir(rep, k + 1),
                &stem(Method::FeaturePermutation, None),
                &Explanation::Scores(s),
            )?;
            timings.push(FitTiming {
                repetition: rep,
                instance: k + 1,
                method: Method::FeaturePermutation.label().into(),
                seconds: seconds / explained.len() as f64,
            });
        }
    }

    let operators: Vec<Option<PerturbationOperator>> = if agreement {
        cfg.agreement.operators.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let per_instance = explained
        .par_iter()
        .enumerate()
        .map(|(k, x)| -> Result<Vec<FitTiming>> {
            let dir = run.explanation_dir(rep, k + 1);
            let mut out = Vec::new();
            for &method in &cfg.methods {
                if method == Method::FeaturePermutation {
                    continue;
                }
                let mut rng = stage_stream(cfg, rep - 1, EXPLAIN)
                    .substream(k as u64)
                    .substream(method_key(method));
                let ops: &[Option<PerturbationOperator>] = if method == Method::Mask { &operators } else { &[None] };
                for &op in ops {
                    let (explanation, seconds) = timed(|| {
                        Ok(match method {
                            Method::Mask => {
                                let operator = op.unwrap_or(cfg.operator);
                                let (rows, cols) = x.shape();
                                let at_identity = error_loss(&model, operator, x, &Mask::filled(rows, cols, 1.0))?;
                                let ext = ExtremalConfig {
                                    area_grid: cfg.state.area_grid.clone(),
                                    epsilon: cfg.state.epsilon_fraction * at_identity,
                                    skip_unreachable: cfg.state.skip_unreachable,
                                };
                                Explanation::Mask(Box::new(fit_extremal_mask(&model, operator, x, &cfg.fit, &ext)?))
                            }
                            _ => Explanation::Scores(explain_baseline(
                                cfg,
                                &model,
                                x,
                                method,
                                &train_set.inputs,
                                &mut rng,
                            )?),
                        })
                    })?;
                    save_explanation(&dir, &stem(method, op), &explanation)?;
                    out.push(FitTiming {
                        repetition: rep,
                        instance: k + 1,
                        method: record_label(method, op),
                        seconds,
                    });
                }
            }
            progress(&format!(
                "repetition {rep}/{}: explained series {}/{}",
                cfg.repetitions,
                k + 1,
                explained.len()
            ));
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    timings.extend(per_instance.into_iter().flatten());
    Ok(timings)
}

// ---------------------------------------------------------------- evaluate

struct LoadedExplanation {
    mask: Mask,
    area: Option<f64>,
    converged: Option<bool>,
}

fn load_explanation(dir: &Path, method: Method, stem: &str) -> Result<LoadedExplanation> {
    let hint = "the explanations do not match the config's instance counts; run `explain` first";
    if method == Method::Mask {
        let search: AreaSearch = serde_json::from_str(&read_file(&dir.join(format!("{stem}.json")), hint)?)?;
        Ok(LoadedExplanation {
            area: Some(search.fit.area),
            converged: Some(search.converged),
            mask: search.fit.mask,
        })
    } else {
        let scores = TimeMatrix::from_csv(&read_file(&dir.join(format!("{stem}.csv")), hint)?)?;
        if scores.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{stem} scores in {}", dir.display())));
        }
        Ok(LoadedExplanation {
            mask: scores_to_mask(&scores),
            area: None,
            converged: None,
        })
    }
}

struct RecordContext<'a> {
    cfg: &'a ExperimentConfig,
    repetition: usize,
    instance: usize,
    target: &'a SaliencyTarget,
    /// Classifier and input for the prediction-shift metrics.
    shift: Option<(&'a dyn DifferentiableModel, &'a TimeMatrix)>,
}

fn score(ctx: &RecordContext, method: String, e: &LoadedExplanation) -> Result<MetricRecord> {
    let (aup, aur) = aup_aur(&e.mask, ctx.target, &ThresholdGrid::default())?;
    let (auroc, auprc) = auroc_auprc(&e.mask, ctx.target)?;
    let salient = ctx.target.salient();
    let (ce, acc) = match ctx.shift {
        Some((model, x)) => {
            let x_tilde = replace_top_fraction_by_time_average(x, &e.mask, ctx.cfg.state.shift_fraction)?;
            let s = prediction_shift(model, x, &x_tilde)?;
            (Some(s.cross_entropy), Some(if s.flipped { 0.0 } else { 1.0 }))
        }
        None => (None, None),
    };
    Ok(MetricRecord {
        method,
        seed: ctx.cfg.seed,
        repetition: ctx.repetition,
        instance: ctx.instance,
        aup,
        aur,
        auroc,
        auprc,
        information: mask_information(&e.mask, salient)?,
        entropy: mask_entropy(&e.mask, salient)?,
        ce,
        acc,
        salient_fraction: e.mask.fraction_at_least(0.5),
        area: e.area,
        converged: e.converged,
    })
}

/// Scores every saved explanation against the ground truth and writes
/// `report.json`, `summary.csv` and optional heatmaps.
pub fn evaluate(cfg: &ExperimentConfig, run: &RunDir, progress: Progress) -> Result<ExperimentReport> {
    cfg.validate()?;
    write_config(cfg, run)?;
    let start = Instant::now();
    let heatmaps = run.report_dir().join("heatmaps");
    let heatmap = |rep: usize, k: usize, stem: &str, mask: &Mask| -> Result<()> {
        if cfg.heatmaps {
            write_file(&heatmaps.join(format!("rep_{rep}_instance_{k}_{stem}.pgm")), mask.to_pgm())?;
        }
        Ok(())
    };

    let mut records = Vec::new();
    let mut models = Vec::new();
    let mut agreement_pairs = Vec::new();
    if is_rare(cfg) {
        let ds = load_rare(cfg, run)?;
        for rep in 1..=cfg.repetitions {
            let target = &ds.targets[rep - 1];
            let ctx = RecordContext {
                cfg,
                repetition: rep,
                instance: 1,
                target,
                shift: None,
            };
            let dir = run.explanation_dir(rep, 1);
            heatmap(rep, 1, "TRUTH", &Mask::indicator(target))?;
            for &method in &cfg.methods {
                let e = load_explanation(&dir, method, method.label())?;
                heatmap(rep, 1, method.label(), &e.mask)?;
                records.push(score(&ctx, method.label().into(), &e)?);
            }
        }
    } else {
        let agreement = cfg.experiment == ExperimentKind::OperatorAgreement;
        for rep in 1..=cfg.repetitions {
            let model = load_model(run, rep)?;
            let final_step = FinalStep(&model);
            let test_set = load_split(run, rep, "test")?;
            models.push(load_model_summary(run, rep)?);
            for k in 1..=cfg.state.explain_count {
                let target = &test_set.targets[k - 1];
                let ctx = RecordContext {
                    cfg,
                    repetition: rep,
                    instance: k,
                    target,
                    shift: Some((&final_step, &test_set.inputs[k - 1])),
                };
                let dir = run.explanation_dir(rep, k);
                heatmap(rep, k, "TRUTH", &Mask::indicator(target))?;
                for &method in &cfg.methods {
                    if method == Method::Mask && agreement {
                        let mut masks = Vec::new();
                        for &op in &cfg.agreement.operators {
                            let s = stem(method, Some(op));
                            let e = load_explanation(&dir, method, &s)?;
                            heatmap(rep, k, &s, &e.mask)?;
                            records.push(score(&ctx, record_label(method, Some(op)), &e)?);
                            masks.push(e.mask);
                        }
                        let pairs = masks
                            .iter()
                            .map(|a| masks.iter().map(|b| pairwise_mask_accuracy(a, b)).collect())
                            .collect::<Result<Vec<Vec<f64>>>>()?;
                        agreement_pairs.push(pairs);
                    } else {
                        let e = load_explanation(&dir, method, method.label())?;
                        heatmap(rep, k, method.label(), &e.mask)?;
                        records.push(score(&ctx, method.label().into(), &e)?);
                    }
                }
            }
            progress(&format!("evaluated repetition {rep}/{}", cfg.repetitions));
        }
    }
    let agreement = (cfg.experiment == ExperimentKind::OperatorAgreement).then(|| {
        let names = cfg.agreement.operators.iter().map(|op| op.name().to_string()).collect();
        AgreementMatrix::from_pairs(names, &agreement_pairs)
    });
    let report = ExperimentReport::new(cfg, records, models, agreement);
    write_file(&run.report_dir().join("report.json"), report.to_json()?)?;
    write_file(&run.report_dir().join("summary.csv"), report.summary_csv())?;
    let secs = start.elapsed().as_secs_f64();
    Timings::update(run, |t| {
        t.stages.insert("evaluate".into(), secs);
    })?;
    Ok(report)
}

// --------------------------------------------------------------- reproduce

/// Result of a full pipeline run.
#[derive(Clone, Debug)]
pub struct ReproduceOutcome {
    pub run_dir: PathBuf,
    pub report: ExperimentReport,
    /// The report's checks followed by the runtime limit, if any.
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl ReproduceOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Generate, train, explain and evaluate in one go.
pub fn reproduce(cfg: &ExperimentConfig, progress: Progress) -> Result<ReproduceOutcome> {
    let run = RunDir::for_config(cfg);
    let start = Instant::now();
    progress(&format!("writing to {}", run.root().display()));
    generate(cfg, &run, progress)?;
    train(cfg, &run, progress)?;
    explain(cfg, &run, progress)?;
    let report = evaluate(cfg, &run, progress)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut checks = report.checks.clone();
    if let Some(limit) = runtime_limit_seconds(cfg.experiment) {
        checks.push(Check::new(
            format!("total runtime <= {limit:.0} s"),
            seconds <= limit,
            format!("{seconds:.1} s"),
        ));
    }
    Timings::update(&run, |t| {
        t.stages.insert("total".into(), seconds);
    })?;
    Ok(ReproduceOutcome {
        run_dir: run.root().to_path_buf(),
        report,
        checks,
        seconds,
    })
}
