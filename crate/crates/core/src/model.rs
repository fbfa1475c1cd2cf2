//! Small sequential convolutional classifier, Adam optimizer, and parameter files.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::dpt;
use crate::error::{Error, FormatError, Result};
use crate::tape::{GradientSet, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Square convolution with stride 1 and the given zero padding.
    Conv { out_channels: usize, kernel: usize, pad: usize },
    Relu,
    AvgPool2,
    /// Flattens its input on first use.
    Dense { out: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// Input extents as channels, height, width.
    pub input: [usize; 3],
    pub layers: Vec<Layer>,
    pub classes: usize,
}

impl Architecture {
    /// conv(16,3×3)-relu-pool-conv(32,3×3)-relu-pool-dense(128)-relu-dense(k)
    /// over 3×32×32 inputs.
    pub fn reference(classes: usize) -> Self {
        Architecture {
            input: [3, 32, 32],
            layers: vec![
                Layer::Conv { out_channels: 16, kernel: 3, pad: 1 },
                Layer::Relu,
                Layer::AvgPool2,
                Layer::Conv { out_channels: 32, kernel: 3, pad: 1 },
                Layer::Relu,
                Layer::AvgPool2,
                Layer::Dense { out: 128 },
                Layer::Relu,
                Layer::Dense { out: classes },
            ],
            classes,
        }
    }

    /// Parameter shapes in storage order, validating the layer chain.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let bad = |d: String| Error::ArchitectureMismatch(d);
        if self.classes < 2 {
            return Err(bad(format!("need at least 2 classes, got {}", self.classes)));
        }
        let [mut c, mut h, mut w] = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(bad(format!("empty input extents {:?}", self.input)));
        }
        let mut flat: Option<usize> = None;
        let mut shapes = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Conv { out_channels, kernel, pad } => {
                    if flat.is_some() {
                        return Err(bad(format!("layer {i}: convolution after dense")));
                    }
                    if out_channels == 0 || kernel == 0 || h + 2 * pad < kernel || w + 2 * pad < kernel {
                        return Err(bad(format!("layer {i}: invalid convolution")));
                    }
                    shapes.push(vec![out_channels, c, kernel, kernel]);
                    shapes.push(vec![out_channels]);
                    c = out_channels;
                    h = h + 2 * pad - kernel + 1;
                    w = w + 2 * pad - kernel + 1;
                }
                Layer::Relu => {}
                Layer::AvgPool2 => {
                    if flat.is_some() || h < 2 || w < 2 {
                        return Err(bad(format!("layer {i}: pooling not applicable")));
                    }
                    h /= 2;
                    w /= 2;
                }
                Layer::Dense { out } => {
                    if out == 0 {
                        return Err(bad(format!("layer {i}: empty dense layer")));
                    }
                    let fan_in = flat.unwrap_or(c * h * w);
                    shapes.push(vec![fan_in, out]);
                    shapes.push(vec![out]);
                    flat = Some(out);
                }
            }
        }
        match flat {
            Some(k) if k == self.classes => Ok(shapes),
            Some(k) => Err(bad(format!("final layer has {k} outputs, expected {} classes", self.classes))),
            None => Err(bad("architecture must end in a dense layer".into())),
        }
    }

    fn encode(&self) -> Vec<f32> {
        let mut v = vec![
            self.input[0] as f32,
            self.input[1] as f32,
            self.input[2] as f32,
            self.classes as f32,
            self.layers.len() as f32,
        ];
        for layer in &self.layers {
            let rec = match *layer {
                Layer::Conv { out_channels, kernel, pad } => [1, out_channels, kernel, pad],
                Layer::Relu => [2, 0, 0, 0],
                Layer::AvgPool2 => [3, 0, 0, 0],
                Layer::Dense { out } => [4, out, 0, 0],
            };
            v.extend(rec.iter().map(|&x| x as f32));
        }
        v
    }

    fn decode(v: &[f32]) -> std::result::Result<Self, FormatError> {
        let bad = |m: &str| FormatError::BadHeader(m.to_string());
        let as_int = |x: f32| -> std::result::Result<usize, FormatError> {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e7 {
                Ok(x as usize)
            } else {
                Err(bad("non-integer field"))
            }
        };
        if v.len() < 5 {
            return Err(bad("header too short"));
        }
        let n_layers = as_int(v[4])?;
        if v.len() != 5 + 4 * n_layers {
            return Err(bad("layer count disagrees with header length"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for rec in v[5..].chunks(4) {
            let r: Vec<usize> = rec.iter().map(|&x| as_int(x)).collect::<std::result::Result<_, _>>()?;
            let layer = match r[0] {
                1 => Layer::Conv { out_channels: r[1], kernel: r[2], pad: r[3] },
                2 => Layer::Relu,
                3 => Layer::AvgPool2,
                4 => Layer::Dense { out: r[1] },
                _ => return Err(bad("unknown layer kind")),
            };
            let used = match layer {
                Layer::Conv { .. } => 4,
                Layer::Dense { .. } => 2,
                _ => 1,
            };
            if r[used..].iter().any(|&x| x != 0) {
                return Err(bad("nonzero unused layer field"));
            }
            layers.push(layer);
        }
        Ok(Architecture {
            input: [as_int(v[0])?, as_int(v[1])?, as_int(v[2])?],
            layers,
            classes: as_int(v[3])?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub arch: Architecture,
    pub tensors: Vec<Tensor>,
}

/// Parameters registered on a tape for one forward pass.
pub struct ParamVars(pub Vec<Var>);

impl ClassifierParams {
    /// Fan-in scaled uniform initialization; biases start at exactly zero.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = shapes
            .iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = if shape.len() == 4 { shape[1..].iter().product() } else { shape[0] };
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                Tensor::new(shape.clone(), data).expect("init shape")
            })
            .collect();
        Ok(ClassifierParams { arch: arch.clone(), tensors })
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Put parameters on the tape, tracked or as constants.
    pub fn register(&self, tape: &mut Tape, track: bool) -> ParamVars {
        ParamVars(
            self.tensors
                .iter()
                .map(|t| if track { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
                .collect(),
        )
    }

    /// Record the forward pass of an N×C×H×W batch, returning N×k logits.
    pub fn forward(&self, tape: &mut Tape, params: &ParamVars, input: Var) -> Result<Var> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 4 || shape[1..] != self.arch.input {
            return Err(Error::shape(
                "predict_logits",
                format!("batch {:?} does not match input extents {:?}", shape, self.arch.input),
            ));
        }
        let n = shape[0];
        let mut x = input;
        let mut p = params.0.iter();
        let mut flat = false;
        for layer in &self.arch.layers {
            x = match *layer {
                Layer::Conv { pad, .. } => {
                    let (k, b) = (*p.next().unwrap(), *p.next().unwrap());
                    let y = tape.conv2d(x, k, 1, pad)?;
                    tape.channel_bias(y, b)?
                }
                Layer::Relu => tape.relu(x)?,
                Layer::AvgPool2 => tape.avg_pool2(x)?,
                Layer::Dense { .. } => {
                    if !flat {
                        let len = tape.value(x).len() / n;
                        x = tape.reshape(x, &[n, len])?;
                        flat = true;
                    }
                    let (wt, b) = (*p.next().unwrap(), *p.next().unwrap());
                    tape.dense(x, wt, b)?
                }
            };
        }
        Ok(x)
    }

    pub fn predict_logits(&self, batch: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape, false);
        let x = tape.constant(batch.clone());
        let logits = self.forward(&mut tape, &params, x)?;
        Ok(tape.value(logits).clone())
    }

    pub fn predict_class(&self, batch: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_logits(batch)?))
    }

    /// Mean cross-entropy over a batch and the gradient set for the parameters.
    pub fn loss_and_grads(&self, batch: &Tensor, labels: &[usize]) -> Result<(f32, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape, true);
        let x = tape.constant(batch.clone());
        let logits = self.forward(&mut tape, &params, x)?;
        let losses = tape.softmax_cross_entropy(logits, labels)?;
        let total = tape.reduce_sum(losses)?;
        let mean = tape.scale(total, 1.0 / labels.len() as f32)?;
        let loss = tape.value(mean).item();
        let mut grads = tape.backward(mean)?;
        let g = params.0.iter().map(|&v| grads.take(v).expect("tracked parameter")).collect();
        Ok((loss, g))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = dpt::encode(&Tensor::from_vec(self.arch.encode()));
        for t in &self.tensors {
            bytes.extend(dpt::encode(t));
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Load a parameter file, checking it against the expected architecture.
    pub fn load(path: &Path, expected: &Architecture) -> Result<Self> {
        let params = Self::load_any(path)?;
        if &params.arch != expected {
            return Err(Error::ArchitectureMismatch(format!(
                "{} stores {:?} with {} classes, expected {:?} with {} classes",
                path.display(),
                params.arch.layers,
                params.arch.classes,
                expected.layers,
                expected.classes
            )));
        }
        Ok(params)
    }

    pub fn load_any(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Decode(source) => Error::Format { path: path.to_path_buf(), source },
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rest = bytes;
        let (header, used) = dpt::decode_prefix(rest)?;
        rest = &rest[used..];
        let arch = Architecture::decode(header.data())?;
        let shapes = arch
            .param_shapes()
            .map_err(|e| FormatError::BadHeader(e.to_string()))?;
        let mut tensors = Vec::with_capacity(shapes.len());
        for shape in &shapes {
            let (t, used) = dpt::decode_prefix(rest)?;
            if t.shape() != shape.as_slice() {
                return Err(FormatError::LengthMismatch(format!(
                    "parameter shape {:?}, architecture expects {:?}",
                    t.shape(),
                    shape
                ))
                .into());
            }
            tensors.push(t);
            rest = &rest[used..];
        }
        if !rest.is_empty() {
            return Err(FormatError::TrailingBytes.into());
        }
        Ok(ClassifierParams { arch, tensors })
    }
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = *logits.shape().last().unwrap_or(&1);
    logits.data().chunks(k).map(argmax).collect()
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ClassifierParams, lr: f32) -> Self {
        Self::for_shapes(params.tensors.iter().map(|t| t.shape()), lr)
    }

    pub fn for_shapes<'a>(shapes: impl Iterator<Item = &'a [usize]>, lr: f32) -> Self {
        let zeros: Vec<Tensor> = shapes.map(Tensor::zeros).collect();
        OptimizerState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::shape(
                "adam_step",
                format!("tensor {i}: param {:?}, grad {:?}, moment {:?}", p.shape(), g.shape(), state.m[i].shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - (state.beta1 as f64).powi(t);
    let bc2 = 1.0 - (state.beta2 as f64).powi(t);
    let (b1, b2) = (state.beta1, state.beta2);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let iter = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
        for ((pv, &gv), (mv, vv)) in iter {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv as f64 / bc1;
            let v_hat = *vv as f64 / bc2;
            *pv -= (state.lr as f64 * m_hat / (v_hat.sqrt() + state.eps as f64)) as f32;
        }
    }
    Ok(())
}

/// Same as [`adam_step`] for a [`GradientSet`] keyed by the registered vars.
pub fn adam_step_from_set(
    params: &mut ClassifierParams,
    vars: &ParamVars,
    grads: &GradientSet,
    state: &mut OptimizerState,
) -> Result<()> {
    let g: Vec<Tensor> = vars
        .0
        .iter()
        .map(|&v| grads.get(v).cloned().ok_or(Error::NotOnTape))
        .collect::<Result<_>>()?;
    adam_step(&mut params.tensors, &g, state)
}
