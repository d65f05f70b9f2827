//! Dense matrices, seeded random streams and sorting helpers.
//!
//! Everything numeric in the crate is row-major `f64`. Rows are time steps and
//! columns are features (or outputs).

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `rows x cols` matrix of finite reals, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct TimeMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for TimeMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        TimeMatrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl From<TimeMatrix> for RawMatrix {
    fn from(m: TimeMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl TimeMatrix {
    /// Builds a matrix from row-major data, checking shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) = {}",
                k / cols + 1,
                k % cols + 1,
                data[k]
            )));
        }
        Ok(TimeMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(n, d, rows.concat())
    }

    /// `rows x cols` matrix filled with `value`.
    ///
    /// Panics if either dimension is zero or `value` is not finite.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        assert!(value.is_finite());
        TimeMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// Builds a matrix from a generator over 0-based `(t, i)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for i in 0..cols {
                data.push(f(t, i));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers must keep entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|t| self[(t, i)]).collect()
    }

    /// Per-column arithmetic mean over time.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.rows as f64);
        means
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks_exact(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// Checks the shape against an expected `(rows, cols)` pair.
    pub fn expect_shape(&self, shape: (usize, usize), what: &str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::Dimension(format!(
                "{what}: expected {}x{}, got {}x{}",
                shape.0, shape.1, self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &TimeMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Serializes to the repo-wide CSV format: header `t,f1,...,fd`, one row
    /// per time step with a 1-based time index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.cols {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for (t, row) in self.data.chunks_exact(self.cols).enumerate() {
            let _ = write!(out, "{}", t + 1);
            for v in row {
                // `Debug` on f64 prints the shortest representation that
                // parses back to the same bits.
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            context: "matrix csv".into(),
            message,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| parse_err("empty input".into()))?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.first() != Some(&"t") || fields.len() < 2 {
            return Err(parse_err(format!("bad header `{header}`")));
        }
        let cols = fields.len() - 1;
        let mut data = Vec::new();
        let mut rows = 0;
        for (k, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != cols + 1 {
                return Err(parse_err(format!("row {} has {} fields", k + 1, parts.len())));
            }
            for p in &parts[1..] {
                data.push(
                    p.parse::<f64>()
                        .map_err(|e| parse_err(format!("row {}: `{p}`: {e}", k + 1)))?,
                );
            }
            rows += 1;
        }
        Self::from_vec(rows, cols, data)
    }
}

impl Index<(usize, usize)> for TimeMatrix {
    type Output = f64;
    fn index(&self, (t, i): (usize, usize)) -> &f64 {
        debug_assert!(t < self.rows && i < self.cols);
        &self.data[t * self.cols + i]
    }
}

impl IndexMut<(usize, usize)> for TimeMatrix {
    fn index_mut(&mut self, (t, i): (usize, usize)) -> &mut f64 {
        debug_assert!(t < self.rows && i < self.cols);
        &mut self.data[t * self.cols + i]
    }
}

/// Seeded, portable random stream (ChaCha20).
///
/// Sub-streams derived with [`RngStream::substream`] depend only on the parent
/// seed and the key, so repetition `k` of an experiment can be replayed alone.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `key`; does not advance `self`.
    pub fn substream(&self, key: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(key.wrapping_add(0x5EED))))
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Draws `n` independent N(0, 1) values.
pub fn sample_standard_normal(rng: &mut RngStream, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidRequest("requested zero samples".into()));
    }
    Ok((0..n).map(|_| StandardNormal.sample(rng)).collect())
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// given as nested rows.
pub fn cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = cov.len();
    if cov.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    for a in 0..n {
        for b in 0..a {
            if (cov[a][b] - cov[b][a]).abs() > 1e-12 * (1.0 + cov[a][b].abs()) {
                return Err(Error::InvalidRequest("covariance is not symmetric".into()));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let pivot = cov[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let d = pivot.sqrt();
        l[j][j] = d;
        for r in (j + 1)..n {
            let s = cov[r][j] - (0..j).map(|k| l[r][k] * l[j][k]).sum::<f64>();
            l[r][j] = s / d;
        }
    }
    Ok(l)
}

/// One draw from N(mean, cov) via the Cholesky factor of `cov`.
pub fn sample_multivariate_normal(
    rng: &mut RngStream,
    mean: &[f64],
    cov: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if cov.len() != mean.len() {
        return Err(Error::Dimension(format!(
            "mean has {} entries, covariance is {}x{}",
            mean.len(),
            cov.len(),
            cov.len()
        )));
    }
    let l = cholesky(cov)?;
    Ok(sample_with_factor(rng, mean, &l))
}

/// Draw from N(mean, L Lᵀ) with a precomputed lower-triangular factor.
pub(crate) fn sample_with_factor(rng: &mut RngStream, mean: &[f64], l: &[Vec<f64>]) -> Vec<f64> {
    let z: Vec<f64> = (0..mean.len()).map(|_| StandardNormal.sample(rng)).collect();
    mean.iter()
        .enumerate()
        .map(|(r, mu)| mu + (0..=r).map(|k| l[r][k] * z[k]).sum::<f64>())
        .collect()
}

/// Stable ascending argsort: ties keep their original relative order.
pub fn argsort_ascending(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    // Comparing (value, index) makes the unstable sort deterministic and
    // equivalent to a stable one.
    idx.sort_unstable_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_stream_is_deterministic() {
        let a = sample_standard_normal(&mut RngStream::new(7), 3).unwrap();
        let b = sample_standard_normal(&mut RngStream::new(7), 3).unwrap();
        assert_eq!(a, b);
        let c = sample_standard_normal(&mut RngStream::new(8), 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(matches!(
            sample_standard_normal(&mut RngStream::new(7), 0),
            Err(Error::InvalidRequest(_))
        ));
    }

    #[test]
    fn normal_moments() {
        let v = sample_standard_normal(&mut RngStream::new(7), 100_000).unwrap();
        let (mean, sd) = mean_std(&v);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((sd * sd - 1.0).abs() < 0.05, "var {}", sd * sd);
    }

    #[test]
    fn substreams_are_independent_of_draw_order() {
        let root = RngStream::new(42);
        let mut a = root.substream(3);
        let mut root2 = RngStream::new(42);
        root2.next_u64();
        let mut b = root2.substream(3);
        assert_eq!(a.next_u64(), b.next_u64());
        assert_ne!(root.substream(3).next_u64(), root.substream(4).next_u64());
    }

    #[test]
    fn mvn_identity_covariance_is_standard() {
        let mut rng = RngStream::new(11);
        let cov = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let draws: Vec<Vec<f64>> = (0..50_000)
            .map(|_| sample_multivariate_normal(&mut rng, &[0.0, 0.0], &cov).unwrap())
            .collect();
        let x: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let y: Vec<f64> = draws.iter().map(|d| d[1]).collect();
        let (mx, sx) = mean_std(&x);
        let (my, sy) = mean_std(&y);
        let cxy = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
        assert!(mx.abs() < 0.02 && my.abs() < 0.02);
        assert!((sx - 1.0).abs() < 0.02 && (sy - 1.0).abs() < 0.02);
        assert!(cxy.abs() < 0.02);
    }

    #[test]
    fn mvn_matches_state_covariance() {
        let cov = vec![
            vec![0.8, 0.0, 0.0],
            vec![0.0, 0.8, 0.01],
            vec![0.0, 0.01, 0.8],
        ];
        let mean = [0.1, 1.6, 0.5];
        let mut rng = RngStream::new(5);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| sample_multivariate_normal(&mut rng, &mean, &cov).unwrap())
            .collect();
        for a in 0..3 {
            let ma = draws.iter().map(|d| d[a]).sum::<f64>() / n as f64;
            assert!((ma - mean[a]).abs() < 0.02);
            for b in 0..3 {
                let mb = draws.iter().map(|d| d[b]).sum::<f64>() / n as f64;
                let c = draws.iter().map(|d| (d[a] - ma) * (d[b] - mb)).sum::<f64>() / n as f64;
                assert!((c - cov[a][b]).abs() < 0.02, "cov[{a}][{b}] = {c}");
            }
        }
    }

    #[test]
    fn mvn_diagonal_matches_scaled_standard_normals() {
        let var = [0.25, 4.0];
        let mean = [1.0, -2.0];
        let cov = vec![vec![var[0], 0.0], vec![0.0, var[1]]];
        let mut rng = RngStream::new(99);
        let n = 100_000;
        let mvn: Vec<Vec<f64>> = (0..n)
            .map(|_| sample_multivariate_normal(&mut rng, &mean, &cov).unwrap())
            .collect();
        let z = sample_standard_normal(&mut RngStream::new(100), 2 * n).unwrap();
        for c in 0..2 {
            let a: Vec<f64> = mvn.iter().map(|d| d[c]).collect();
            let b: Vec<f64> = z[c * n..(c + 1) * n].iter().map(|v| mean[c] + var[c].sqrt() * v).collect();
            let (ma, sa) = mean_std(&a);
            let (mb, sb) = mean_std(&b);
            let tol = 0.02 * var[c].sqrt().max(1.0);
            assert!((ma - mb).abs() < tol);
            assert!((sa - sb).abs() < tol);
        }
    }

    #[test]
    fn degenerate_covariance_rejected() {
        let err = sample_multivariate_normal(&mut RngStream::new(1), &[5.0], &[vec![0.0]]);
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn argsort_examples() {
        assert_eq!(argsort_ascending(&[3.0, 1.0, 2.0]), vec![1, 2, 0]);
        assert_eq!(argsort_ascending(&[0.5, 0.5]), vec![0, 1]);
    }

    #[test]
    fn argsort_random_is_sorted_and_stable() {
        let mut rng = RngStream::new(3);
        let mut v = sample_standard_normal(&mut rng, 100).unwrap();
        for k in (0..100).step_by(7) {
            v[k] = 0.25;
        }
        let p = argsort_ascending(&v);
        for w in p.windows(2) {
            assert!(v[w[0]] <= v[w[1]]);
            if v[w[0]] == v[w[1]] {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn matrix_rejects_bad_input() {
        assert!(TimeMatrix::from_vec(0, 1, vec![]).is_err());
        assert!(TimeMatrix::from_vec(1, 2, vec![1.0]).is_err());
        assert!(TimeMatrix::from_vec(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = TimeMatrix::from_vec(2, 2, vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567]).unwrap();
        let text = m.to_csv();
        assert!(text.starts_with("t,f1,f2\n1,"));
        assert_eq!(TimeMatrix::from_csv(&text).unwrap(), m);
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-1000.0) >= 0.0);
        assert_eq!(logistic(1000.0), 1.0);
        assert!((logistic(2.0) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
    }
}
