//! Straight-loop f64 reference implementations used as test oracles. They
//! share no code with the library kernels.

#![allow(dead_code)]

use dualpert::model::{Architecture, ClassifierParams, Layer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// NCHW ⊛ OIHW, zero padding.
pub fn conv2d(x: &[f64], xs: [usize; 4], k: &[f64], ks: [usize; 4], stride: usize, pad: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = xs;
    let [o, kc, kh, kw] = ks;
    assert_eq!(c, kc);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for s in 0..n {
        for oc in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for a in 0..kh {
                            for b in 0..kw {
                                let r = (i * stride + a) as isize - pad as isize;
                                let q = (j * stride + b) as isize - pad as isize;
                                if r < 0 || q < 0 || r >= h as isize || q >= w as isize {
                                    continue;
                                }
                                acc += x[((s * c + ic) * h + r as usize) * w + q as usize]
                                    * k[((oc * c + ic) * kh + a) * kw + b];
                            }
                        }
                    }
                    out[((s * o + oc) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    (out, [n, o, oh, ow])
}

pub fn channel_bias(x: &mut [f64], shape: [usize; 4], b: &[f64]) {
    let [n, c, h, w] = shape;
    for s in 0..n {
        for ch in 0..c {
            for p in 0..h * w {
                x[(s * c + ch) * h * w + p] += b[ch];
            }
        }
    }
}

/// `x: n×din`, `wt: din×dout`.
pub fn dense(x: &[f64], n: usize, din: usize, wt: &[f64], b: &[f64]) -> Vec<f64> {
    let dout = b.len();
    let mut out = vec![0.0; n * dout];
    for s in 0..n {
        for j in 0..dout {
            let mut acc = b[j];
            for i in 0..din {
                acc += x[s * din + i] * wt[i * dout + j];
            }
            out[s * dout + j] = acc;
        }
    }
    out
}

pub fn avg_pool2(x: &[f64], lead: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; lead * oh * ow];
    for l in 0..lead {
        for i in 0..oh {
            for j in 0..ow {
                let at = |r: usize, q: usize| x[l * h * w + r * w + q];
                out[l * oh * ow + i * ow + j] =
                    0.25 * (at(2 * i, 2 * j) + at(2 * i + 1, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j + 1));
            }
        }
    }
    out
}

pub fn xent(logits: &[f64], k: usize, labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(s, &y)| {
            let row = &logits[s * k..(s + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect()
}

/// Normalized Gaussian weights on `[-radius, radius]`.
pub fn gauss(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Direct 2-D blur (product kernel) with clamped borders, per H×W plane.
pub fn blur(x: &[f64], h: usize, w: usize, sigma: f64, radius: usize) -> Vec<f64> {
    let g = gauss(sigma, radius);
    let r = radius as isize;
    let mut out = vec![0.0; x.len()];
    for (plane, dst) in x.chunks(h * w).zip(out.chunks_mut(h * w)) {
        for i in 0..h as isize {
            for j in 0..w as isize {
                let mut acc = 0.0;
                for a in -r..=r {
                    for b in -r..=r {
                        let ii = (i + a).clamp(0, h as isize - 1) as usize;
                        let jj = (j + b).clamp(0, w as isize - 1) as usize;
                        acc += g[(a + r) as usize] * g[(b + r) as usize] * plane[ii * w + jj];
                    }
                }
                dst[i as usize * w + j as usize] = acc;
            }
        }
    }
    out
}

pub fn blur_radius(sigma: f64) -> usize {
    ((3.0 * sigma).ceil() as usize).max(1)
}

/// Difference-of-Gaussians density of one C×H×W image.
pub fn dog_density(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let fine = blur(x, h, w, 1.0, blur_radius(1.0));
    let coarse = blur(x, h, w, 4.0, blur_radius(4.0));
    let mut e = vec![0.0; h * w];
    for ch in 0..c {
        for p in 0..h * w {
            let d = fine[ch * h * w + p] - coarse[ch * h * w + p];
            e[p] += d * d;
        }
    }
    let kappa = 1e-8f32 as f64;
    let total: f64 = e.iter().map(|v| v + kappa).sum();
    e.iter().map(|v| (v + kappa) / total).collect()
}

pub fn foreground_score(x: &[f64], c: usize, h: usize, w: usize, fg: &[f32]) -> f64 {
    dog_density(x, c, h, w).iter().zip(fg).filter(|(_, &m)| m > 0.5).map(|(s, _)| s).sum()
}

/// Forward pass of `arch` in f64. Returns logits and every ReLU input.
pub fn forward(arch: &Architecture, params: &[Vec<f64>], x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let [mut c, mut h, mut w] = arch.input;
    let mut cur = x.to_vec();
    let mut pre = Vec::new();
    let mut p = 0;
    let mut flat: Option<usize> = None;
    for layer in &arch.layers {
        match *layer {
            Layer::Conv { out_channels, kernel, pad } => {
                let (y, s) = conv2d(&cur, [n, c, h, w], &params[p], [out_channels, c, kernel, kernel], 1, pad);
                cur = y;
                channel_bias(&mut cur, s, &params[p + 1]);
                p += 2;
                c = s[1];
                h = s[2];
                w = s[3];
            }
            Layer::Relu => {
                pre.extend_from_slice(&cur);
                for v in &mut cur {
                    *v = v.max(0.0);
                }
            }
            Layer::AvgPool2 => {
                cur = avg_pool2(&cur, n * c, h, w);
                h /= 2;
                w /= 2;
            }
            Layer::Dense { out } => {
                let din = *flat.get_or_insert(c * h * w);
                cur = dense(&cur, n, din, &params[p], &params[p + 1]);
                p += 2;
                flat = Some(out);
            }
        }
    }
    (cur, pre)
}

pub fn mean_loss(arch: &Architecture, params: &[Vec<f64>], x: &[f64], labels: &[usize]) -> (f64, Vec<f64>) {
    let (logits, pre) = forward(arch, params, x, labels.len());
    let l = xent(&logits, arch.classes, labels);
    (l.iter().sum::<f64>() / labels.len() as f64, pre)
}

/// A random small architecture with the given input extents.
pub fn small_arch(rng: &mut ChaCha8Rng) -> Architecture {
    let c = rng.random_range(1..=3);
    let h = rng.random_range(4..=6);
    let w = rng.random_range(4..=6);
    let kernel = rng.random_range(1..=3);
    let pad = if kernel == 3 { rng.random_range(0..=1) } else { 0 };
    let mut layers = vec![Layer::Conv { out_channels: rng.random_range(2..=3), kernel, pad }, Layer::Relu];
    if rng.random_bool(0.5) {
        layers.push(Layer::AvgPool2);
    }
    let classes = rng.random_range(2..=4);
    if rng.random_bool(0.5) {
        layers.push(Layer::Dense { out: rng.random_range(3..=5) });
        layers.push(Layer::Relu);
    }
    layers.push(Layer::Dense { out: classes });
    Architecture { input: [c, h, w], layers, classes }
}

pub fn params_f64(p: &ClassifierParams) -> Vec<Vec<f64>> {
    p.tensors.iter().map(|t| to_f64(t.data())).collect()
}

/// `|a − n| / (|n| + 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-6)
}

/// `|a − n| / max(|n|, floor)`, for gradients whose small coordinates come
/// out of cancellation: `floor` ties them to the gradient's overall scale.
pub fn rel_err_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(floor)
}

/// Central difference of `f` at coordinate `i` of `v`.
pub fn central_diff(v: &mut [f64], i: usize, h: f64, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let orig = v[i];
    v[i] = orig + h;
    let up = f(v);
    v[i] = orig - h;
    let down = f(v);
    v[i] = orig;
    (up - down) / (2.0 * h)
}

pub fn signs(v: &[f64]) -> Vec<bool> {
    v.iter().map(|&x| x > 0.0).collect()
}

/// Outcome of one finite-difference check of a random small network.
pub struct NetCheck {
    pub coordinates: usize,
    pub max_rel_err: f64,
}

/// Compare tape gradients (parameters and input) of the mean cross-entropy
/// of a random small network against f64 central differences with step `h`.
/// Returns `None` when the draw puts a ReLU input within reach of its kink,
/// where a difference quotient is meaningless.
pub fn net_gradient_check(seed: u64, h: f64) -> Option<NetCheck> {
    use dualpert::{Tape, Tensor};
    let mut r = rng(seed);
    let arch = small_arch(&mut r);
    let mut params = ClassifierParams::init(&arch, seed).unwrap();
    for t in &mut params.tensors {
        if t.ndim() == 1 {
            for v in t.data_mut() {
                *v = r.random_range(-0.2..0.2);
            }
        }
    }
    let n = r.random_range(1..=3);
    let [c, hh, ww] = arch.input;
    let x = Tensor::new(vec![n, c, hh, ww], uniform(&mut r, n * c * hh * ww, 0.0, 1.0)).unwrap();
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..arch.classes)).collect();

    let mut pf = params_f64(&params);
    let mut xf = to_f64(x.data());
    let (_, base_pre) = mean_loss(&arch, &pf, &xf, &labels);
    if base_pre.iter().any(|v| v.abs() < 2e-2) {
        return None;
    }
    let base_signs = signs(&base_pre);

    let (_, grads) = params.loss_and_grads(&x, &labels).unwrap();
    let mut tape = Tape::new();
    let pv = params.register(&mut tape, false);
    let xv = tape.leaf(x.clone());
    let logits = params.forward(&mut tape, &pv, xv).unwrap();
    let l = tape.softmax_cross_entropy(logits, &labels).unwrap();
    let s = tape.reduce_sum(l).unwrap();
    let mean = tape.scale(s, 1.0 / n as f32).unwrap();
    let gx = tape.backward(mean).unwrap().take(xv).unwrap();

    let mut worst = 0.0f64;
    let mut count = 0;
    let mut kink = false;
    for (ti, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let mut f = |v: &[f64]| {
                let mut p = pf.clone();
                p[ti] = v.to_vec();
                let (loss, pre) = mean_loss(&arch, &p, &xf, &labels);
                kink |= signs(&pre) != base_signs;
                loss
            };
            let mut v = pf[ti].clone();
            let num = central_diff(&mut v, i, h, &mut f);
            worst = worst.max(rel_err(g.data()[i] as f64, num));
            count += 1;
        }
    }
    for i in 0..xf.len() {
        let mut f = |v: &[f64]| {
            let (loss, pre) = mean_loss(&arch, &pf, v, &labels);
            kink |= signs(&pre) != base_signs;
            loss
        };
        let num = central_diff(&mut xf, i, h, &mut f);
        worst = worst.max(rel_err(gx.data()[i] as f64, num));
        count += 1;
    }
    pf.clear();
    if kink {
        return None;
    }
    Some(NetCheck { coordinates: count, max_rel_err: worst })
}
