//! Single-layer GRU with a per-step logistic head, and exact reverse-mode
//! gradients through time.
//!
//! Cell (gates stacked in the order reset, update, candidate):
//!
//! ```text
//! r  = σ(W_ir x + W_hr h + b_r)
//! z  = σ(W_iz x + W_hz h + b_z)
//! n  = tanh(W_in x + b_n + r ⊙ (W_hn h))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! p  = σ(w · h' + c)
//! ```

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{logistic, RngStream, TimeMatrix};

use super::{check_input, DifferentiableModel, OutputKind};

pub const FORMAT_VERSION: u32 = 1;

/// GRU sequence classifier producing one probability per time step.
///
/// Parameters live in one flat buffer: `w_ih (3h x d)`, `w_hh (3h x h)`,
/// `bias (3h)`, `head_w (h)`, `head_b (1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruClassifier {
    input_size: usize,
    hidden_size: usize,
    params: Vec<f64>,
}

/// Gradient with the same flat layout as the classifier's parameters.
pub type GruGradients = Vec<f64>;

struct Layout {
    w_ih: std::ops::Range<usize>,
    w_hh: std::ops::Range<usize>,
    bias: std::ops::Range<usize>,
    head_w: std::ops::Range<usize>,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn new(d: usize, h: usize) -> Self {
        let a = 3 * h * d;
        let b = a + 3 * h * h;
        let c = b + 3 * h;
        let e = c + h;
        Layout {
            w_ih: 0..a,
            w_hh: a..b,
            bias: b..c,
            head_w: c..e,
            head_b: e,
            total: e + 1,
        }
    }
}

/// Per-step activations kept for back-propagation.
struct Tape {
    /// Hidden states h_0 (zeros) .. h_T, each of length h.
    hidden: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// W_hn h_{t-1}, before the reset gate.
    hn: Vec<f64>,
    prob: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl GruClassifier {
    pub fn parameter_count(input_size: usize, hidden_size: usize) -> usize {
        Layout::new(input_size, hidden_size).total
    }

    /// All parameters set to zero.
    pub fn zeros(input_size: usize, hidden_size: usize) -> Result<Self> {
        Self::from_params(input_size, hidden_size, vec![0.0; Self::parameter_count(input_size, hidden_size)])
    }

    /// Every parameter uniform in `[-1/sqrt(h), 1/sqrt(h)]`.
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut RngStream) -> Result<Self> {
        if hidden_size == 0 {
            return Err(Error::InvalidRequest("hidden size must be positive".into()));
        }
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let params = (0..Self::parameter_count(input_size, hidden_size))
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self::from_params(input_size, hidden_size, params)
    }

    pub fn from_params(input_size: usize, hidden_size: usize, params: Vec<f64>) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::InvalidRequest("GRU sizes must be positive".into()));
        }
        let expected = Self::parameter_count(input_size, hidden_size);
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "GRU({input_size}, {hidden_size}) has {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("GRU parameter".into()));
        }
        Ok(GruClassifier {
            input_size,
            hidden_size,
            params,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(self.input_size, self.hidden_size)
    }

    fn run(&self, x: &TimeMatrix) -> Result<Tape> {
        check_input(x, self.input_size, "GRU input")?;
        let (h, d, len) = (self.hidden_size, self.input_size, x.rows());
        let lay = self.layout();
        let w_ih = &self.params[lay.w_ih.clone()];
        let w_hh = &self.params[lay.w_hh.clone()];
        let bias = &self.params[lay.bias.clone()];
        let head_w = &self.params[lay.head_w.clone()];
        let head_b = self.params[lay.head_b];

        let mut tape = Tape {
            hidden: vec![0.0; (len + 1) * h],
            r: vec![0.0; len * h],
            z: vec![0.0; len * h],
            n: vec![0.0; len * h],
            hn: vec![0.0; len * h],
            prob: vec![0.0; len],
        };
        let mut pre = vec![0.0; 3 * h];
        for t in 0..len {
            let xt = x.row(t);
            let (done, rest) = tape.hidden.split_at_mut((t + 1) * h);
            let h_prev = &done[t * h..];
            let h_next = &mut rest[..h];
            for g in 0..3 * h {
                pre[g] = bias[g] + dot(&w_ih[g * d..(g + 1) * d], xt);
            }
            let (r, z, n, hn) = (
                &mut tape.r[t * h..(t + 1) * h],
                &mut tape.z[t * h..(t + 1) * h],
                &mut tape.n[t * h..(t + 1) * h],
                &mut tape.hn[t * h..(t + 1) * h],
            );
            for j in 0..h {
                r[j] = logistic(pre[j] + dot(&w_hh[j * h..(j + 1) * h], h_prev));
                z[j] = logistic(pre[h + j] + dot(&w_hh[(h + j) * h..(h + j + 1) * h], h_prev));
                hn[j] = dot(&w_hh[(2 * h + j) * h..(2 * h + j + 1) * h], h_prev);
            }
            for j in 0..h {
                n[j] = (pre[2 * h + j] + r[j] * hn[j]).tanh();
                h_next[j] = (1.0 - z[j]) * n[j] + z[j] * h_prev[j];
            }
            tape.prob[t] = logistic(head_b + dot(head_w, h_next));
        }
        Ok(tape)
    }

    /// Reverse pass given dL/dlogit per step. Returns the input gradient and,
    /// when `param_grad` is set, accumulates parameter gradients into it.
    fn backward(
        &self,
        x: &TimeMatrix,
        tape: &Tape,
        dlogit: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> TimeMatrix {
        let (h, d, len) = (self.hidden_size, self.input_size, x.rows());
        let lay = self.layout();
        let w_ih = &self.params[lay.w_ih.clone()];
        let w_hh = &self.params[lay.w_hh.clone()];
        let head_w = &self.params[lay.head_w.clone()];

        let mut dx = TimeMatrix::zeros(len, d);
        let mut dh = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];
        let mut da = vec![0.0; 3 * h];
        let mut dg = vec![0.0; h];
        for t in (0..len).rev() {
            let h_prev = &tape.hidden[t * h..(t + 1) * h];
            let h_cur = &tape.hidden[(t + 1) * h..(t + 2) * h];
            let r = &tape.r[t * h..(t + 1) * h];
            let z = &tape.z[t * h..(t + 1) * h];
            let n = &tape.n[t * h..(t + 1) * h];
            let hn = &tape.hn[t * h..(t + 1) * h];

            axpy(dlogit[t], head_w, &mut dh);
            if let Some(pg) = param_grad.as_deref_mut() {
                axpy(dlogit[t], h_cur, &mut pg[lay.head_w.clone()]);
                pg[lay.head_b] += dlogit[t];
            }

            for j in 0..h {
                let dn = dh[j] * (1.0 - z[j]);
                let dz = dh[j] * (h_prev[j] - n[j]);
                dh_prev[j] = dh[j] * z[j];
                let dan = dn * (1.0 - n[j] * n[j]);
                let dr = dan * hn[j];
                dg[j] = dan * r[j];
                da[j] = dr * r[j] * (1.0 - r[j]);
                da[h + j] = dz * z[j] * (1.0 - z[j]);
                da[2 * h + j] = dan;
            }
            // Hidden-to-hidden: reset and update gates see da, candidate sees dg.
            for j in 0..h {
                axpy(da[j], &w_hh[j * h..(j + 1) * h], &mut dh_prev);
                axpy(da[h + j], &w_hh[(h + j) * h..(h + j + 1) * h], &mut dh_prev);
                axpy(dg[j], &w_hh[(2 * h + j) * h..(2 * h + j + 1) * h], &mut dh_prev);
            }
            let dxt = &mut dx.as_mut_slice()[t * d..(t + 1) * d];
            for g in 0..3 * h {
                axpy(da[g], &w_ih[g * d..(g + 1) * d], dxt);
            }
            if let Some(pg) = param_grad.as_deref_mut() {
                let xt = x.row(t);
                let (gw_ih, rest) = pg.split_at_mut(lay.w_hh.start);
                let (gw_hh, rest) = rest.split_at_mut(lay.bias.start - lay.w_hh.start);
                let gbias = &mut rest[..3 * h];
                for g in 0..3 * h {
                    axpy(da[g], xt, &mut gw_ih[g * d..(g + 1) * d]);
                    gbias[g] += da[g];
                }
                for j in 0..h {
                    axpy(da[j], h_prev, &mut gw_hh[j * h..(j + 1) * h]);
                    axpy(da[h + j], h_prev, &mut gw_hh[(h + j) * h..(h + j + 1) * h]);
                    axpy(dg[j], h_prev, &mut gw_hh[(2 * h + j) * h..(2 * h + j + 1) * h]);
                }
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        dx
    }

    /// Mean per-step binary cross-entropy and its gradient for every
    /// parameter.
    pub fn param_gradients(&self, x: &TimeMatrix, labels: &[u8]) -> Result<(f64, GruGradients)> {
        if labels.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} time steps",
                labels.len(),
                x.rows()
            )));
        }
        let tape = self.run(x)?;
        let len = x.rows() as f64;
        let loss = tape
            .prob
            .iter()
            .zip(labels)
            .map(|(&p, &y)| binary_cross_entropy(p, y))
            .sum::<f64>()
            / len;
        let dlogit: Vec<f64> = tape
            .prob
            .iter()
            .zip(labels)
            .map(|(&p, &y)| (p - f64::from(y)) / len)
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        self.backward(x, &tape, &dlogit, Some(&mut grad));
        Ok((loss, grad))
    }

    /// Mean per-step cross-entropy and accuracy (threshold 0.5) on one series.
    pub fn evaluate(&self, x: &TimeMatrix, labels: &[u8]) -> Result<(f64, f64)> {
        let p = self.forward(x)?;
        if labels.len() != p.rows() {
            return Err(Error::Dimension("label length".into()));
        }
        let n = labels.len() as f64;
        let ce = p.as_slice().iter().zip(labels).map(|(&p, &y)| binary_cross_entropy(p, y)).sum::<f64>() / n;
        let acc = p
            .as_slice()
            .iter()
            .zip(labels)
            .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
            .count() as f64
            / n;
        Ok((ce, acc))
    }

    pub fn to_json(&self) -> Result<String> {
        let lay = self.layout();
        let (h, d) = (self.hidden_size, self.input_size);
        let arr = |name: &str, shape: Vec<usize>, range: std::ops::Range<usize>| NamedArray {
            name: name.into(),
            shape,
            data: encode_f64(&self.params[range]),
        };
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            input_size: d,
            hidden_size: h,
            arrays: vec![
                arr("w_ih", vec![3 * h, d], lay.w_ih.clone()),
                arr("w_hh", vec![3 * h, h], lay.w_hh.clone()),
                arr("bias", vec![3 * h], lay.bias.clone()),
                arr("head_w", vec![h], lay.head_w.clone()),
                arr("head_b", vec![1], lay.head_b..lay.head_b + 1),
            ],
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Parse {
                context: "model file".into(),
                message: format!("unsupported format_version {}", file.format_version),
            });
        }
        let mut params = Vec::new();
        for name in ["w_ih", "w_hh", "bias", "head_w", "head_b"] {
            let a = file.arrays.iter().find(|a| a.name == name).ok_or_else(|| Error::Parse {
                context: "model file".into(),
                message: format!("missing array `{name}`"),
            })?;
            let values = decode_f64(&a.data)?;
            if values.len() != a.shape.iter().product::<usize>() {
                return Err(Error::Parse {
                    context: "model file".into(),
                    message: format!("array `{name}` does not match its shape"),
                });
            }
            params.extend(values);
        }
        Self::from_params(file.input_size, file.hidden_size, params)
    }
}

pub(crate) fn binary_cross_entropy(p: f64, y: u8) -> f64 {
    const FLOOR: f64 = 1e-12;
    if y == 1 {
        -p.max(FLOOR).ln()
    } else {
        -(1.0 - p).max(FLOOR).ln()
    }
}

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    /// Base64 of little-endian IEEE-754 doubles.
    data: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    input_size: usize,
    hidden_size: usize,
    arrays: Vec<NamedArray>,
}

fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

fn decode_f64(text: &str) -> Result<Vec<f64>> {
    let bytes = BASE64.decode(text).map_err(|e| Error::Parse {
        context: "model array".into(),
        message: e.to_string(),
    })?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse {
            context: "model array".into(),
            message: "byte length is not a multiple of 8".into(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl DifferentiableModel for GruClassifier {
    fn output_kind(&self) -> OutputKind {
        OutputKind::Probabilities
    }

    fn forward(&self, x: &TimeMatrix) -> Result<TimeMatrix> {
        let tape = self.run(x)?;
        TimeMatrix::from_vec(x.rows(), 1, tape.prob)
    }

    fn input_vjp(&self, x: &TimeMatrix, upstream: &TimeMatrix) -> Result<TimeMatrix> {
        upstream.expect_shape((x.rows(), 1), "GRU upstream")?;
        let tape = self.run(x)?;
        let dlogit = dlogits(&tape, upstream);
        Ok(self.backward(x, &tape, &dlogit, None))
    }

    fn forward_and_vjp(
        &self,
        x: &TimeMatrix,
        upstream: &mut dyn FnMut(&TimeMatrix) -> Result<TimeMatrix>,
    ) -> Result<(TimeMatrix, TimeMatrix)> {
        let tape = self.run(x)?;
        let y = TimeMatrix::from_vec(x.rows(), 1, tape.prob.clone())?;
        let u = upstream(&y)?;
        u.expect_shape((x.rows(), 1), "GRU upstream")?;
        let dlogit = dlogits(&tape, &u);
        let g = self.backward(x, &tape, &dlogit, None);
        Ok((y, g))
    }
}

fn dlogits(tape: &Tape, upstream: &TimeMatrix) -> Vec<f64> {
    tape.prob
        .iter()
        .zip(upstream.as_slice())
        .map(|(&p, &u)| u * p * (1.0 - p))
        .collect()
}
