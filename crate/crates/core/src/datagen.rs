//! Synthetic inputs with known saliency: autoregressive sequences with
//! rare-feature / rare-time salient sets, and the two-state HMM dataset.
//!
//! Index pairs are 0-based in the Rust API. Every serialized artifact uses
//! 1-based `[t, i]` pairs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, logistic, sample_with_factor, RngStream, TimeMatrix};
use rand_distr::{Distribution, StandardNormal};

/// Autoregressive coefficients for lags 1, 2, 3.
pub const AR_COEFFICIENTS: [f64; 3] = [0.25, 0.1, 0.05];

/// First salient time (rare-feature) or feature (rare-time), 0-based.
pub const RARE_BLOCK_START: usize = 12;
/// Length of the fixed salient block: 1-based `[13:37]`.
pub const RARE_BLOCK_LEN: usize = 25;

/// Finite set of 0-based `(t, i)` index pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexSet(BTreeSet<(usize, usize)>);

impl IndexSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cartesian product of time and feature indices.
    pub fn product(times: &[usize], features: &[usize]) -> Self {
        IndexSet(
            times
                .iter()
                .flat_map(|&t| features.iter().map(move |&i| (t, i)))
                .collect(),
        )
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        let times: Vec<usize> = (0..rows).collect();
        let features: Vec<usize> = (0..cols).collect();
        Self::product(&times, &features)
    }

    pub fn insert(&mut self, t: usize, i: usize) -> bool {
        self.0.insert((t, i))
    }

    pub fn contains(&self, t: usize, i: usize) -> bool {
        self.0.contains(&(t, i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.is_subset(&other.0)
    }

    /// 1-based `[t, i]` pairs, the serialized form.
    pub fn to_one_based(&self) -> Vec<[usize; 2]> {
        self.iter().map(|(t, i)| [t + 1, i + 1]).collect()
    }

    pub fn from_one_based(pairs: &[[usize; 2]]) -> Result<Self> {
        let mut set = IndexSet::new();
        for &[t, i] in pairs {
            if t == 0 || i == 0 {
                return Err(Error::Parse {
                    context: "index set".into(),
                    message: format!("pair [{t}, {i}] is not 1-based"),
                });
            }
            set.insert(t - 1, i - 1);
        }
        Ok(set)
    }

    /// Fails with an index error when any pair falls outside `rows x cols`.
    pub fn check_bounds(&self, rows: usize, cols: usize) -> Result<()> {
        match self.iter().find(|&(t, i)| t >= rows || i >= cols) {
            Some((t, i)) => Err(Error::IndexOutOfBounds {
                t: t + 1,
                i: i + 1,
                rows,
                cols,
            }),
            None => Ok(()),
        }
    }
}

impl FromIterator<(usize, usize)> for IndexSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        IndexSet(iter.into_iter().collect())
    }
}

/// Ground-truth salient set for a `rows x cols` input.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyTarget {
    salient: IndexSet,
    rows: usize,
    cols: usize,
}

impl SaliencyTarget {
    pub fn new(salient: IndexSet, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("target shape must be at least 1x1".into()));
        }
        salient.check_bounds(rows, cols)?;
        Ok(SaliencyTarget { salient, rows, cols })
    }

    pub fn salient(&self) -> &IndexSet {
        &self.salient
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn contains(&self, t: usize, i: usize) -> bool {
        self.salient.contains(t, i)
    }

    /// Salient features active at time `t`.
    pub fn features_at(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.salient.0.range((t, 0)..(t + 1, 0)).map(|&(_, i)| i)
    }

    /// Times with at least one salient feature.
    pub fn salient_times(&self) -> Vec<usize> {
        let times: BTreeSet<usize> = self.salient.iter().map(|(t, _)| t).collect();
        times.into_iter().collect()
    }

    pub fn salient_features(&self) -> Vec<usize> {
        let feats: BTreeSet<usize> = self.salient.iter().map(|(_, i)| i).collect();
        feats.into_iter().collect()
    }

    /// Binary matrix with ones on the salient set.
    pub fn indicator(&self) -> TimeMatrix {
        let mut m = TimeMatrix::zeros(self.rows, self.cols);
        for (t, i) in self.salient.iter() {
            m[(t, i)] = 1.0;
        }
        m
    }

    /// Fraction of all inputs that are salient.
    pub fn salient_fraction(&self) -> f64 {
        self.salient.len() as f64 / (self.rows * self.cols) as f64
    }
}

#[derive(Serialize, Deserialize)]
struct TargetFile {
    rows: usize,
    cols: usize,
    salient: Vec<[usize; 2]>,
}

impl Serialize for SaliencyTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TargetFile {
            rows: self.rows,
            cols: self.cols,
            salient: self.salient.to_one_based(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SaliencyTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = TargetFile::deserialize(d)?;
        let set = IndexSet::from_one_based(&f.salient).map_err(serde::de::Error::custom)?;
        SaliencyTarget::new(set, f.rows, f.cols).map_err(serde::de::Error::custom)
    }
}

/// Runs the order-3 autoregression column-wise over a given noise matrix,
/// starting from zero history.
pub fn arma_from_noise(noise: &TimeMatrix) -> TimeMatrix {
    let (rows, cols) = noise.shape();
    let mut x = TimeMatrix::zeros(rows, cols);
    for t in 0..rows {
        for i in 0..cols {
            let mut v = noise[(t, i)];
            for (lag, phi) in AR_COEFFICIENTS.iter().enumerate() {
                if t > lag {
                    v += phi * x[(t - lag - 1, i)];
                }
            }
            x[(t, i)] = v;
        }
    }
    x
}

/// `rows x cols` autoregressive sample with standard normal innovations.
pub fn generate_arma(rng: &mut RngStream, rows: usize, cols: usize) -> Result<TimeMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidRequest(format!("cannot generate a {rows}x{cols} sequence")));
    }
    let noise = TimeMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))?;
    Ok(arma_from_noise(&noise))
}

/// Rare-feature salient set: `n_feat` features drawn without replacement,
/// active on the fixed time block `[13:37]`.
pub fn make_rare_feature_target(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    n_feat: usize,
) -> Result<SaliencyTarget> {
    if n_feat > cols {
        return Err(Error::InvalidRequest(format!(
            "cannot pick {n_feat} salient features out of {cols}"
        )));
    }
    if rows < RARE_BLOCK_START + RARE_BLOCK_LEN {
        return Err(Error::InvalidRequest(format!(
            "rare-feature block needs at least {} time steps, got {rows}",
            RARE_BLOCK_START + RARE_BLOCK_LEN
        )));
    }
    let mut features = sample_indices(rng, cols, n_feat).into_vec();
    features.sort_unstable();
    let times: Vec<usize> = (RARE_BLOCK_START..RARE_BLOCK_START + RARE_BLOCK_LEN).collect();
    SaliencyTarget::new(IndexSet::product(&times, &features), rows, cols)
}

/// Rare-time salient set with a given 0-based start time.
pub fn rare_time_target_at(
    start: usize,
    rows: usize,
    cols: usize,
    n_time: usize,
) -> Result<SaliencyTarget> {
    if n_time == 0 || start + n_time > rows {
        return Err(Error::InvalidRequest(format!(
            "time block [{}, {}] does not fit in {rows} steps",
            start + 1,
            start + n_time
        )));
    }
    if cols < RARE_BLOCK_START + RARE_BLOCK_LEN {
        return Err(Error::InvalidRequest(format!(
            "rare-time block needs at least {} features, got {cols}",
            RARE_BLOCK_START + RARE_BLOCK_LEN
        )));
    }
    let times: Vec<usize> = (start..start + n_time).collect();
    let features: Vec<usize> = (RARE_BLOCK_START..RARE_BLOCK_START + RARE_BLOCK_LEN).collect();
    SaliencyTarget::new(IndexSet::product(&times, &features), rows, cols)
}

/// Rare-time salient set: `n_time` contiguous steps starting uniformly in
/// `[1 : rows - n_time + 1]`, on the fixed feature block `[13:37]`.
pub fn make_rare_time_target(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    n_time: usize,
) -> Result<SaliencyTarget> {
    if n_time == 0 || n_time > rows {
        return Err(Error::InvalidRequest(format!(
            "cannot place {n_time} salient steps in {rows}"
        )));
    }
    let start = rng.gen_range(0..=rows - n_time);
    rare_time_target_at(start, rows, cols, n_time)
}

/// Parameters of the two-state HMM. States are numbered from 0; labels read
/// feature 2 in state 0 and feature 3 in state 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub initial: [f64; 2],
    pub transition: [[f64; 2]; 2],
    pub means: [[f64; 3]; 2],
    pub covariances: [[[f64; 3]; 3]; 2],
}

impl Default for HmmParams {
    fn default() -> Self {
        HmmParams {
            initial: [0.5, 0.5],
            transition: [[0.1, 0.9], [0.1, 0.9]],
            means: [[0.1, 1.6, 0.5], [-0.1, -0.4, -1.5]],
            covariances: [
                [[0.8, 0.0, 0.0], [0.0, 0.8, 0.01], [0.0, 0.01, 0.8]],
                [[0.8, 0.01, 0.0], [0.01, 0.8, 0.0], [0.0, 0.0, 0.8]],
            ],
        }
    }
}

impl HmmParams {
    /// 0-based feature driving the label in `state`.
    pub fn label_feature(state: u8) -> usize {
        1 + state as usize
    }

    /// Bernoulli parameter for a feature vector observed in `state`.
    pub fn label_probability(x: &[f64], state: u8) -> f64 {
        logistic(x[Self::label_feature(state)])
    }
}

/// One simulated HMM sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmSeries {
    pub input: TimeMatrix,
    pub states: Vec<u8>,
    pub labels: Vec<u8>,
}

impl HmmSeries {
    pub fn target(&self) -> SaliencyTarget {
        let set = self
            .states
            .iter()
            .enumerate()
            .map(|(t, &s)| (t, HmmParams::label_feature(s)))
            .collect();
        SaliencyTarget::new(set, self.input.rows(), self.input.cols())
            .expect("state targets are in bounds by construction")
    }
}

/// Labeled dataset drawn from the two-state HMM.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmDataset {
    pub inputs: Vec<TimeMatrix>,
    pub labels: Vec<Vec<u8>>,
    pub states: Vec<Vec<u8>>,
    pub targets: Vec<SaliencyTarget>,
}

impl HmmDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Splits into the first `n` series and the rest.
    pub fn split_at(&self, n: usize) -> (HmmDataset, HmmDataset) {
        let n = n.min(self.len());
        let take = |lo: usize, hi: usize| HmmDataset {
            inputs: self.inputs[lo..hi].to_vec(),
            labels: self.labels[lo..hi].to_vec(),
            states: self.states[lo..hi].to_vec(),
            targets: self.targets[lo..hi].to_vec(),
        };
        (take(0, n), take(n, self.len()))
    }

    fn push(&mut self, s: HmmSeries) {
        self.targets.push(s.target());
        self.inputs.push(s.input);
        self.labels.push(s.labels);
        self.states.push(s.states);
    }
}

fn draw_state(rng: &mut RngStream, probs: &[f64; 2]) -> u8 {
    u8::from(rng.gen::<f64>() >= probs[0])
}

/// Simulates one sequence of length `len`.
pub fn sample_hmm_series(rng: &mut RngStream, len: usize, params: &HmmParams) -> Result<HmmSeries> {
    if len == 0 {
        return Err(Error::InvalidRequest("series length must be positive".into()));
    }
    let factors = params
        .covariances
        .iter()
        .map(|c| cholesky(&c.iter().map(|r| r.to_vec()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let mut states = Vec::with_capacity(len);
    let mut labels = Vec::with_capacity(len);
    let mut data = Vec::with_capacity(3 * len);
    let mut s = draw_state(rng, &params.initial);
    for t in 0..len {
        if t > 0 {
            s = draw_state(rng, &params.transition[s as usize]);
        }
        let x = sample_with_factor(rng, &params.means[s as usize], &factors[s as usize]);
        let p = HmmParams::label_probability(&x, s);
        labels.push(u8::from(rng.gen::<f64>() < p));
        states.push(s);
        data.extend_from_slice(&x);
    }
    Ok(HmmSeries {
        input: TimeMatrix::from_vec(len, 3, data)?,
        states,
        labels,
    })
}

/// `n_series` independent sequences; series `k` uses sub-stream `k`.
pub fn generate_hmm_dataset(rng: &mut RngStream, n_series: usize, len: usize) -> Result<HmmDataset> {
    generate_hmm_dataset_with(rng, n_series, len, &HmmParams::default())
}

pub fn generate_hmm_dataset_with(
    rng: &mut RngStream,
    n_series: usize,
    len: usize,
    params: &HmmParams,
) -> Result<HmmDataset> {
    if n_series == 0 {
        return Err(Error::InvalidRequest("dataset needs at least one series".into()));
    }
    let root = RngStream::new(rng.gen());
    let mut ds = HmmDataset {
        inputs: Vec::new(),
        labels: Vec::new(),
        states: Vec::new(),
        targets: Vec::new(),
    };
    for k in 0..n_series {
        let mut sub = root.substream(k as u64);
        ds.push(sample_hmm_series(&mut sub, len, params)?);
    }
    Ok(ds)
}

/// On-disk dataset: inputs, targets, optional labels/states, free-form meta.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredDataset {
    pub inputs: Vec<TimeMatrix>,
    pub targets: Vec<SaliencyTarget>,
    pub labels: Option<Vec<Vec<u8>>>,
    pub states: Option<Vec<Vec<u8>>>,
    pub meta: serde_json::Value,
}

impl From<(HmmDataset, serde_json::Value)> for StoredDataset {
    fn from((ds, meta): (HmmDataset, serde_json::Value)) -> Self {
        StoredDataset {
            inputs: ds.inputs,
            targets: ds.targets,
            labels: Some(ds.labels),
            states: Some(ds.states),
            meta,
        }
    }
}

impl StoredDataset {
    pub fn to_hmm(&self) -> Result<HmmDataset> {
        match (&self.labels, &self.states) {
            (Some(labels), Some(states)) => Ok(HmmDataset {
                inputs: self.inputs.clone(),
                labels: labels.clone(),
                states: states.clone(),
                targets: self.targets.clone(),
            }),
            _ => Err(Error::InvalidRequest("dataset has no labels/states".into())),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sequences_csv(prefix: &str, rows: &[Vec<u8>]) -> String {
    let len = rows.first().map_or(0, Vec::len);
    let mut out = String::from("series");
    for t in 1..=len {
        let _ = write!(out, ",{prefix}{t}");
    }
    out.push('\n');
    for (k, row) in rows.iter().enumerate() {
        let _ = write!(out, "{}", k + 1);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn parse_sequences_csv(text: &str) -> Result<Vec<Vec<u8>>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .skip(1)
                .map(|v| {
                    v.trim().parse::<u8>().map_err(|e| Error::Parse {
                        context: "sequence csv".into(),
                        message: format!("`{v}`: {e}"),
                    })
                })
                .collect()
        })
        .collect()
}

/// Writes `inputs/series_<k>.csv`, `targets.json`, `targets/series_<k>.json`,
/// optional `labels.csv` / `states.csv`, and `meta.json` under `dir`.
pub fn save_dataset(dir: &Path, ds: &StoredDataset) -> Result<()> {
    let inputs_dir = dir.join("inputs");
    let targets_dir = dir.join("targets");
    for d in [&inputs_dir, &targets_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for (k, x) in ds.inputs.iter().enumerate() {
        write_file(&inputs_dir.join(format!("series_{}.csv", k + 1)), &x.to_csv())?;
    }
    for (k, target) in ds.targets.iter().enumerate() {
        write_file(
            &targets_dir.join(format!("series_{}.json", k + 1)),
            &serde_json::to_string(target)?,
        )?;
    }
    let pairs: Vec<Vec<[usize; 2]>> = ds.targets.iter().map(|t| t.salient().to_one_based()).collect();
    write_file(&dir.join("targets.json"), &serde_json::to_string(&pairs)?)?;
    if let Some(labels) = &ds.labels {
        write_file(&dir.join("labels.csv"), &sequences_csv("y", labels))?;
    }
    if let Some(states) = &ds.states {
        write_file(&dir.join("states.csv"), &sequences_csv("s", states))?;
    }
    write_file(&dir.join("meta.json"), &serde_json::to_string_pretty(&ds.meta)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<StoredDataset> {
    let meta: serde_json::Value = serde_json::from_str(&read_file(&dir.join("meta.json"))?)?;
    let pairs: Vec<Vec<[usize; 2]>> = serde_json::from_str(&read_file(&dir.join("targets.json"))?)?;
    let mut inputs = Vec::with_capacity(pairs.len());
    let mut targets = Vec::with_capacity(pairs.len());
    for (k, p) in pairs.iter().enumerate() {
        let x = TimeMatrix::from_csv(&read_file(&dir.join("inputs").join(format!("series_{}.csv", k + 1)))?)?;
        targets.push(SaliencyTarget::new(IndexSet::from_one_based(p)?, x.rows(), x.cols())?);
        inputs.push(x);
    }
    let optional = |name: &str| -> Result<Option<Vec<Vec<u8>>>> {
        let path = dir.join(name);
        if path.exists() {
            Ok(Some(parse_sequences_csv(&read_file(&path)?)?))
        } else {
            Ok(None)
        }
    };
    Ok(StoredDataset {
        inputs,
        targets,
        labels: optional("labels.csv")?,
        states: optional("states.csv")?,
        meta,
    })
}
