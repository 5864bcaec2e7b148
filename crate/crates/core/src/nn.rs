//! Dense networks with reverse-mode gradients, an adaptive-moment
//! optimizer, and a self-describing checkpoint container.
//!
//! Batches are column-major: a batch of `k` samples is a `width × k`
//! matrix. A forward pass for training records a tape of activations;
//! `backward` consumes the tape and an upstream gradient and returns
//! parameter gradients plus the gradient with respect to the input.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::num::{sc, Scalar};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input width {got}, expected {expected}")]
    InputWidth { got: usize, expected: usize },
    #[error("gradient shape mismatch at layer {0}")]
    GradShape(usize),
    #[error("non-finite gradient at layer {0}")]
    NonFiniteGrad(usize),
    #[error("network needs at least one layer")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Elementwise activation. Hidden layers saturate smoothly, heads are
/// linear (squashing happens in the policy, not here).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    fn id(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_id(id: u8) -> Result<Self, NnError> {
        match id {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Tanh),
            other => Err(NnError::Corrupt(format!("unknown activation id {other}"))),
        }
    }

    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn grad_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Linear => S::one(),
            Activation::Tanh => S::one() - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S: Scalar> {
    pub weight: DMatrix<S>,
    pub bias: DVector<S>,
    pub activation: Activation,
}

/// Fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S: Scalar> {
    pub layers: Vec<Layer<S>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients<S: Scalar> {
    pub weights: Vec<DMatrix<S>>,
    pub biases: Vec<DVector<S>>,
}

/// Recorded forward pass: the input and every layer's post-activation.
pub struct Tape<S: Scalar> {
    input: DMatrix<S>,
    outputs: Vec<DMatrix<S>>,
}

impl<S: Scalar> Mlp<S> {
    /// Builds a network with the given widths, saturating hidden layers,
    /// linear head, and fan-in-scaled uniform initialization.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self, NnError> {
        if widths.len() < 2 {
            return Err(NnError::Empty);
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                sc::<S>(rng.gen_range(-bound..bound))
            });
            let activation = if l + 2 == widths.len() {
                Activation::Linear
            } else {
                Activation::Tanh
            };
            layers.push(Layer {
                weight,
                bias: DVector::zeros(fan_out),
                activation,
            });
        }
        Ok(Self { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Forward pass on a column batch.
    pub fn forward(&self, input: &DMatrix<S>) -> Result<DMatrix<S>, NnError> {
        if input.nrows() != self.input_width() {
            return Err(NnError::InputWidth {
                got: input.nrows(),
                expected: self.input_width(),
            });
        }
        let mut a = input.clone();
        for layer in &self.layers {
            a = &layer.weight * a;
            for c in 0..a.ncols() {
                for r in 0..a.nrows() {
                    a[(r, c)] = layer.activation.apply(a[(r, c)] + layer.bias[r]);
                }
            }
        }
        Ok(a)
    }

    /// Forward pass on a single sample.
    pub fn forward_vec(&self, input: &DVector<S>) -> Result<DVector<S>, NnError> {
        let out = self.forward(&DMatrix::from_column_slice(input.len(), 1, input.as_slice()))?;
        Ok(out.column(0).into_owned())
    }

    /// Forward pass that records a tape for [`Mlp::backward`].
    pub fn forward_cached(&self, input: &DMatrix<S>) -> Result<(DMatrix<S>, Tape<S>), NnError> {
        if input.nrows() != self.input_width() {
            return Err(NnError::InputWidth {
                got: input.nrows(),
                expected: self.input_width(),
            });
        }
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut a = input.clone();
        for layer in &self.layers {
            a = &layer.weight * a;
            for c in 0..a.ncols() {
                for r in 0..a.nrows() {
                    a[(r, c)] = layer.activation.apply(a[(r, c)] + layer.bias[r]);
                }
            }
            outputs.push(a.clone());
        }
        Ok((
            a,
            Tape {
                input: input.clone(),
                outputs,
            },
        ))
    }

    /// Reverse pass: given `∂loss/∂output`, returns parameter gradients and
    /// `∂loss/∂input`, both summed over the batch columns.
    pub fn backward(
        &self,
        tape: &Tape<S>,
        upstream: &DMatrix<S>,
    ) -> Result<(Gradients<S>, DMatrix<S>), NnError> {
        let n = self.layers.len();
        if upstream.nrows() != self.output_width() || upstream.ncols() != tape.input.ncols() {
            return Err(NnError::GradShape(n - 1));
        }
        let mut weights = vec![DMatrix::zeros(0, 0); n];
        let mut biases = vec![DVector::zeros(0); n];

        let mut delta = upstream.clone();
        for l in (0..n).rev() {
            let y = &tape.outputs[l];
            for c in 0..delta.ncols() {
                for r in 0..delta.nrows() {
                    delta[(r, c)] *= self.layers[l].activation.grad_from_output(y[(r, c)]);
                }
            }
            let below = if l == 0 { &tape.input } else { &tape.outputs[l - 1] };
            weights[l] = &delta * below.transpose();
            biases[l] = DVector::from_fn(delta.nrows(), |r, _| delta.row(r).sum());
            delta = self.layers[l].weight.transpose() * delta;
        }
        Ok((Gradients { weights, biases }, delta))
    }
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(mlp: &Mlp<S>) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| DMatrix::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
            biases: mlp.layers.iter().map(|l| DVector::zeros(l.bias.len())).collect(),
        }
    }

    pub fn scale(&mut self, s: S) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    pub fn add(&mut self, other: &Gradients<S>) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }
}

/// Adaptive-moment optimizer with an externally adjustable rate.
#[derive(Debug, Clone)]
pub struct Adam<S: Scalar> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    step: u64,
    m: Gradients<S>,
    v: Gradients<S>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(mlp: &Mlp<S>, lr: S) -> Self {
        Self {
            lr,
            beta1: sc(0.9),
            beta2: sc(0.999),
            eps: sc(1e-8),
            step: 0,
            m: Gradients::zeros_like(mlp),
            v: Gradients::zeros_like(mlp),
        }
    }

    pub fn set_lr(&mut self, lr: S) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. Rejects non-finite gradients before touching any state.
    pub fn step(&mut self, mlp: &mut Mlp<S>, grads: &Gradients<S>) -> Result<(), NnError> {
        for (l, (w, b)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            if w.shape() != mlp.layers[l].weight.shape() || b.len() != mlp.layers[l].bias.len() {
                return Err(NnError::GradShape(l));
            }
            if !w.iter().all(|x| x.is_finite()) || !b.iter().all(|x| x.is_finite()) {
                return Err(NnError::NonFiniteGrad(l));
            }
        }
        self.step += 1;
        let t: S = sc(self.step as f64);
        let bc1 = S::one() - self.beta1.powf(t);
        let bc2 = S::one() - self.beta2.powf(t);
        let one = S::one();
        for l in 0..mlp.layers.len() {
            let update = |p: &mut S, m: &mut S, v: &mut S, g: S, opt: &Adam<S>| {
                *m = opt.beta1 * *m + (one - opt.beta1) * g;
                *v = opt.beta2 * *v + (one - opt.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
            };
            for i in 0..mlp.layers[l].weight.len() {
                let g = grads.weights[l][i];
                let (mut m, mut v, mut p) =
                    (self.m.weights[l][i], self.v.weights[l][i], mlp.layers[l].weight[i]);
                update(&mut p, &mut m, &mut v, g, self);
                self.m.weights[l][i] = m;
                self.v.weights[l][i] = v;
                mlp.layers[l].weight[i] = p;
            }
            for i in 0..mlp.layers[l].bias.len() {
                let g = grads.biases[l][i];
                let (mut m, mut v, mut p) =
                    (self.m.biases[l][i], self.v.biases[l][i], mlp.layers[l].bias[i]);
                update(&mut p, &mut m, &mut v, g, self);
                self.m.biases[l][i] = m;
                self.v.biases[l][i] = v;
                mlp.layers[l].bias[i] = p;
            }
        }
        Ok(())
    }
}

const MAGIC: &[u8; 4] = b"SQN1";

/// Named entry inside a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointEntry {
    Mlp(Mlp<f64>),
    Vector(Vec<f64>),
}

/// Self-describing checkpoint container: named networks and flat vectors,
/// little-endian payload, trailing integrity checksum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, CheckpointEntry)>,
}

impl Checkpoint {
    pub fn insert_mlp(&mut self, name: &str, mlp: &Mlp<f64>) {
        self.entries.push((name.to_string(), CheckpointEntry::Mlp(mlp.clone())));
    }

    pub fn insert_vector(&mut self, name: &str, v: Vec<f64>) {
        self.entries.push((name.to_string(), CheckpointEntry::Vector(v)));
    }

    pub fn mlp(&self, name: &str) -> Result<&Mlp<f64>, NnError> {
        self.entries
            .iter()
            .find_map(|(n, e)| match e {
                CheckpointEntry::Mlp(m) if n == name => Some(m),
                _ => None,
            })
            .ok_or_else(|| NnError::Corrupt(format!("missing network entry {name}")))
    }

    pub fn vector(&self, name: &str) -> Result<&[f64], NnError> {
        self.entries
            .iter()
            .find_map(|(n, e)| match e {
                CheckpointEntry::Vector(v) if n == name => Some(v.as_slice()),
                _ => None,
            })
            .ok_or_else(|| NnError::Corrupt(format!("missing vector entry {name}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            match entry {
                CheckpointEntry::Mlp(mlp) => {
                    buf.push(0);
                    let widths = mlp.widths();
                    buf.extend_from_slice(&(widths.len() as u16).to_le_bytes());
                    for w in &widths {
                        buf.extend_from_slice(&(*w as u32).to_le_bytes());
                    }
                    for layer in &mlp.layers {
                        buf.push(layer.activation.id());
                    }
                    for layer in &mlp.layers {
                        for x in layer.weight.iter() {
                            buf.extend_from_slice(&x.to_le_bytes());
                        }
                        for x in layer.bias.iter() {
                            buf.extend_from_slice(&x.to_le_bytes());
                        }
                    }
                }
                CheckpointEntry::Vector(v) => {
                    buf.push(1);
                    buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    for x in v {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        let digest = Sha256::digest(&buf);
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        file.write_all(&digest)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        if raw.len() < MAGIC.len() + 32 {
            return Err(NnError::Corrupt("file too short".into()));
        }
        let (body, digest) = raw.split_at(raw.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(NnError::Corrupt("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.bytes(4)? != MAGIC {
            return Err(NnError::Corrupt("bad magic".into()));
        }
        let n_entries = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n_entries);
        for _ in 0..n_entries {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.bytes(name_len)?.to_vec())
                .map_err(|_| NnError::Corrupt("bad entry name".into()))?;
            match r.u8()? {
                0 => {
                    let n_widths = r.u16()? as usize;
                    let mut widths = Vec::with_capacity(n_widths);
                    for _ in 0..n_widths {
                        widths.push(r.u32()? as usize);
                    }
                    if n_widths < 2 {
                        return Err(NnError::Corrupt("network with no layers".into()));
                    }
                    let mut acts = Vec::with_capacity(n_widths - 1);
                    for _ in 0..n_widths - 1 {
                        acts.push(Activation::from_id(r.u8()?)?);
                    }
                    let mut layers = Vec::with_capacity(n_widths - 1);
                    for l in 0..n_widths - 1 {
                        let (rows, cols) = (widths[l + 1], widths[l]);
                        let mut weight = DMatrix::zeros(rows, cols);
                        for i in 0..weight.len() {
                            weight[i] = r.f64()?;
                        }
                        let mut bias = DVector::zeros(rows);
                        for i in 0..rows {
                            bias[i] = r.f64()?;
                        }
                        layers.push(Layer {
                            weight,
                            bias,
                            activation: acts[l],
                        });
                    }
                    entries.push((name, CheckpointEntry::Mlp(Mlp { layers })));
                }
                1 => {
                    let len = r.u32()? as usize;
                    let mut v = Vec::with_capacity(len);
                    for _ in 0..len {
                        v.push(r.f64()?);
                    }
                    entries.push((name, CheckpointEntry::Vector(v)));
                }
                other => return Err(NnError::Corrupt(format!("unknown entry kind {other}"))),
            }
        }
        Ok(Self { entries })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Corrupt("truncated payload".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}
