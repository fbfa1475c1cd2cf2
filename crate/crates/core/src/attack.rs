//! Norm-ball projections, normalized steepest ascent, and the attacks built on
//! them: dual-perturbation PGD, textbook PGD, the noise-expectation variant
//! for randomized-smoothing targets, and a greedy sparse (JSMA-style) attack.
//!
//! The dual-perturbation attack maximizes
//! `L(h(x+δ), y) + λ·S(x+δ)` subject to `‖δ∘F‖ ≤ ε_F` and `‖δ∘B‖ ≤ ε_B`,
//! where `S` is the foreground score under the fixed clean-image masks. Each
//! iteration splits δ into its foreground and background parts, takes a
//! normalized ascent step in each region, projects each part onto its own
//! ball, and merges them. After each merge the image is clipped into
//! `[0,1]` and both parts are re-projected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{argmax, ClassifierParams};
use crate::salience::{MaskPair, SalienceKind, SalienceModel};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L2,
    Linf,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "l2" | "L2" => Ok(Norm::L2),
            "inf" | "linf" | "Linf" | "∞" => Ok(Norm::Linf),
            other => Err(Error::Config(format!("unknown norm {other:?} (expected 2|inf)"))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::L2 => "2",
            Norm::Linf => "inf",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub norm: Norm,
    pub eps_fg: f32,
    pub eps_bg: f32,
    pub lambda: f32,
    pub steps: usize,
    pub step_fg: f32,
    pub step_bg: f32,
    pub random_start: bool,
    pub seed: u64,
    pub salience: SalienceKind,
}

impl AttackConfig {
    /// Dual-perturbation config with step sizes `2ε/K` per region.
    pub fn dual(norm: Norm, eps_fg: f32, eps_bg: f32, lambda: f32, steps: usize) -> Self {
        let steps = steps.max(1);
        AttackConfig {
            norm,
            eps_fg,
            eps_bg,
            lambda,
            steps,
            step_fg: 2.0 * eps_fg / steps as f32,
            step_bg: 2.0 * eps_bg / steps as f32,
            random_start: true,
            seed: 0,
            salience: SalienceKind::Dog,
        }
    }

    /// Single-budget PGD config (`ε_B` unused, `λ = 0`).
    pub fn pgd(norm: Norm, eps: f32, steps: usize) -> Self {
        AttackConfig { lambda: 0.0, eps_bg: 0.0, step_bg: 0.0, ..Self::dual(norm, eps, 0.0, 0.0, steps) }
    }

    /// Recompute both step sizes as `2ε/K`.
    pub fn with_default_steps(mut self) -> Self {
        self.step_fg = 2.0 * self.eps_fg / self.steps as f32;
        self.step_bg = 2.0 * self.eps_bg / self.steps as f32;
        self
    }

    /// Budgets and step sizes multiplied by `f`.
    pub fn scaled(&self, f: f32) -> Self {
        AttackConfig {
            eps_fg: self.eps_fg * f,
            eps_bg: self.eps_bg * f,
            step_fg: self.step_fg * f,
            step_bg: self.step_bg * f,
            ..self.clone()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same config with a seed derived from this one and a sample index, so
    /// paired runs across models share random starts per image.
    pub fn for_sample(&self, index: usize) -> Self {
        AttackConfig { seed: mix_seed(self.seed, index as u64), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.eps_fg, self.eps_bg, self.lambda, self.step_fg, self.step_bg];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("attack parameters must be finite".into()));
        }
        if self.eps_fg < 0.0 || self.eps_bg < 0.0 {
            return Err(Error::Config("budgets must be nonnegative".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("salience weight must be nonnegative".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("attack needs at least one step".into()));
        }
        if self.step_fg < 0.0 || self.step_bg < 0.0 {
            return Err(Error::Config("step sizes must be nonnegative".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over `seed + index`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn l2(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Euclidean projection onto the ε-ball of the given norm.
pub fn project(v: &Tensor, eps: f32, norm: Norm) -> Result<Tensor> {
    if !(eps >= 0.0) {
        return Err(Error::invalid("project", format!("budget must be nonnegative, got {eps}")));
    }
    Ok(project_unchecked(v, eps, norm))
}

fn project_unchecked(v: &Tensor, eps: f32, norm: Norm) -> Tensor {
    match norm {
        Norm::Linf => v.map(|x| x.clamp(-eps, eps)),
        Norm::L2 => {
            let n = l2(v.data());
            if n <= eps as f64 {
                return v.clone();
            }
            let mut factor = eps as f64 / n;
            // Shrink until the rounded result sits inside the ball, so that a
            // second projection is the identity.
            loop {
                let out = v.map(|x| (x as f64 * factor) as f32);
                if l2(out.data()) <= eps as f64 {
                    return out;
                }
                factor *= 1.0 - f32::EPSILON as f64;
            }
        }
    }
}

/// Unit ascent direction: sign for ℓ∞, `g/‖g‖₂` for ℓ2 (zero below 1e-12).
pub fn steepest_dir(g: &Tensor, norm: Norm) -> Tensor {
    match norm {
        Norm::Linf => g.map(|x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
        Norm::L2 => {
            let n = l2(g.data());
            if n < 1e-12 {
                Tensor::zeros(g.shape())
            } else {
                g.map(|x| (x as f64 / n) as f32)
            }
        }
    }
}

/// Uniform sample from the ε-ball of `shape`: coordinatewise for ℓ∞,
/// Gaussian direction with radius `ε·u^{1/d}` for ℓ2.
pub fn sample_ball(shape: &[usize], eps: f32, norm: Norm, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = match norm {
        Norm::Linf => (0..n)
            .map(|_| if eps > 0.0 { rng.random_range(-eps..=eps) } else { 0.0 })
            .collect(),
        Norm::L2 => {
            let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let u: f64 = rng.random();
            let radius = eps as f64 * u.powf(1.0 / n as f64);
            dir.iter().map(|v| (v / norm * radius) as f32).collect()
        }
    };
    // Rounding can push the sample a hair outside the ball.
    project_unchecked(&Tensor::new(shape.to_vec(), data).unwrap(), eps, norm)
}

fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    a.zip_map(b, |x, y| x * y).expect("matching shapes")
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    a.zip_map(b, |x, y| x + y).expect("matching shapes")
}

/// δ such that `x + δ` lies in `[0,1]`.
fn clip_to_box(x: &Tensor, delta: &Tensor) -> Tensor {
    x.zip_map(delta, |xv, dv| (xv + dv).clamp(0.0, 1.0) - xv).expect("matching shapes")
}

/// `clamp(x + δ, 0, 1)`: the adversarial image for a perturbation.
pub fn apply(x: &Tensor, delta: &Tensor) -> Tensor {
    x.zip_map(delta, |xv, dv| (xv + dv).clamp(0.0, 1.0)).expect("matching shapes")
}

/// Masks broadcast over channels, as 1×C×H×W tensors.
struct Regions {
    fg: Tensor,
    bg: Tensor,
}

impl Regions {
    fn new(x: &Tensor, masks: &MaskPair) -> Result<Self> {
        let s = x.shape();
        if s.len() != 4 || s[0] != 1 {
            return Err(Error::shape("attack", format!("expected one 1×C×H×W image, got {s:?}")));
        }
        if (s[2], s[3]) != masks.extents() {
            return Err(Error::shape(
                "attack",
                format!("mask extents {:?} do not match image {:?}", masks.extents(), s),
            ));
        }
        let (fg, bg) = masks.broadcast(s[1]);
        Ok(Regions { fg, bg })
    }
}

/// A classifier under attack, with the salience model used by the λ term.
#[derive(Clone, Copy)]
pub struct Attacker<'a> {
    pub model: &'a ClassifierParams,
    pub salience: &'a SalienceModel,
}

impl<'a> Attacker<'a> {
    pub fn new(model: &'a ClassifierParams, salience: &'a SalienceModel) -> Self {
        Attacker { model, salience }
    }

    /// Objective `Σ_j [L(h(x_j), y) + λ·S(x_j)]` over a batch of inputs that
    /// share one label and mask, scaled by `weight`, and its input gradient.
    fn objective_grad(
        &self,
        inputs: Tensor,
        label: usize,
        masks: &MaskPair,
        lambda: f32,
        weight: f32,
    ) -> Result<(f32, Tensor)> {
        let n = inputs.shape()[0];
        let mut tape = Tape::new();
        let params = self.model.register(&mut tape, false);
        let x = tape.leaf(inputs);
        let logits = self.model.forward(&mut tape, &params, x)?;
        let losses = tape.softmax_cross_entropy(logits, &vec![label; n])?;
        let mut total = tape.reduce_sum(losses)?;
        if lambda != 0.0 {
            let fs = self.salience.record_foreground_score(&mut tape, x, masks)?;
            let fs = tape.scale(fs, lambda)?;
            total = tape.add(total, fs)?;
        }
        if weight != 1.0 {
            total = tape.scale(total, weight)?;
        }
        let value = tape.value(total).item();
        let mut grads = tape.backward(total)?;
        Ok((value, grads.take(x).expect("tracked input")))
    }

    /// Value of the attack objective `L(h(x'), y) + λ·S(x')` at one image.
    pub fn objective(&self, x_adv: &Tensor, label: usize, masks: &MaskPair, lambda: f32) -> Result<f32> {
        let mut tape = Tape::new();
        let params = self.model.register(&mut tape, false);
        let x = tape.constant(x_adv.clone());
        let logits = self.model.forward(&mut tape, &params, x)?;
        let loss = tape.softmax_cross_entropy(logits, &[label])?;
        let mut total = tape.reduce_sum(loss)?;
        if lambda != 0.0 {
            let fs = self.salience.record_foreground_score(&mut tape, x, masks)?;
            let fs = tape.scale(fs, lambda)?;
            total = tape.add(total, fs)?;
        }
        Ok(tape.value(total).item())
    }

    /// Random (or zero) feasible starting perturbation.
    pub fn init_dual(&self, x: &Tensor, masks: &MaskPair, cfg: &AttackConfig, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let regions = Regions::new(x, masks)?;
        Ok(init_in_regions(x, &regions, cfg, rng))
    }

    /// One split / ascend / project / merge iteration.
    pub fn dual_step(&self, x: &Tensor, label: usize, delta: &Tensor, masks: &MaskPair, cfg: &AttackConfig) -> Result<Tensor> {
        let regions = Regions::new(x, masks)?;
        let (_, g) = self.objective_grad(add(x, delta), label, masks, cfg.lambda, 1.0)?;
        Ok(update_regions(x, delta, &g, &regions, cfg))
    }

    /// Dual-perturbation attack; returns the final iterate as an image in `[0,1]`.
    pub fn dual_attack(&self, x: &Tensor, label: usize, masks: &MaskPair, cfg: &AttackConfig) -> Result<Tensor> {
        cfg.validate()?;
        let regions = Regions::new(x, masks)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut delta = init_in_regions(x, &regions, cfg, &mut rng);
        for _ in 0..cfg.steps {
            let (_, g) = self.objective_grad(add(x, &delta), label, masks, cfg.lambda, 1.0)?;
            delta = update_regions(x, &delta, &g, &regions, cfg);
        }
        Ok(apply(x, &delta))
    }

    /// Textbook PGD under a single budget `cfg.eps_fg` with step `cfg.step_fg`.
    pub fn pgd_attack(&self, x: &Tensor, label: usize, cfg: &AttackConfig) -> Result<Tensor> {
        cfg.validate()?;
        let (eps, alpha) = (cfg.eps_fg, cfg.step_fg);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut delta = if cfg.random_start {
            let d = sample_ball(x.shape(), eps, cfg.norm, &mut rng);
            clip_to_box(x, &d)
        } else {
            Tensor::zeros(x.shape())
        };
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let whole = MaskPair::all_foreground(h, w);
        for _ in 0..cfg.steps {
            let (_, g) = self.objective_grad(add(x, &delta), label, &whole, 0.0, 1.0)?;
            let dir = steepest_dir(&g, cfg.norm);
            let stepped = delta.zip_map(&dir, |d, s| d + alpha * s)?;
            delta = project_unchecked(&stepped, eps, cfg.norm);
            delta = clip_to_box(x, &delta);
            delta = project_unchecked(&delta, eps, cfg.norm);
        }
        Ok(apply(x, &delta))
    }

    /// Gradient of `E_η[L(h(x+δ+η), y) + λ·S(x+δ+η)]` estimated from
    /// `samples` Gaussian draws. With `sigma = 0` the expectation is exact and
    /// a single evaluation is used.
    pub fn expected_grad(
        &self,
        x_shifted: &Tensor,
        label: usize,
        masks: &MaskPair,
        lambda: f32,
        sigma: f32,
        samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        if sigma == 0.0 {
            return Ok(self.objective_grad(x_shifted.clone(), label, masks, lambda, 1.0)?.1);
        }
        let per = x_shifted.len();
        let mut batch = Vec::with_capacity(per * samples);
        for _ in 0..samples {
            batch.extend(
                x_shifted
                    .data()
                    .iter()
                    .map(|&v| v + sigma * rng.sample::<f32, _>(StandardNormal)),
            );
        }
        let mut shape = x_shifted.shape().to_vec();
        shape[0] = samples;
        let inputs = Tensor::new(shape, batch)?;
        let (_, g) = self.objective_grad(inputs, label, masks, lambda, 1.0 / samples as f32)?;
        // Every copy is x+δ+η_j, so ∂/∂δ sums the per-copy gradients.
        let mut total = vec![0.0f32; per];
        for chunk in g.data().chunks(per) {
            for (t, &v) in total.iter_mut().zip(chunk) {
                *t += v;
            }
        }
        Tensor::new(x_shifted.shape().to_vec(), total)
    }

    /// Dual attack against a randomized-smoothing classifier: gradients are
    /// replaced by noise-averaged gradients, redrawn every iteration. The
    /// returned image carries no noise.
    pub fn rs_dual_attack(
        &self,
        x: &Tensor,
        label: usize,
        masks: &MaskPair,
        cfg: &AttackConfig,
        sigma: f32,
        samples: usize,
    ) -> Result<Tensor> {
        cfg.validate()?;
        if !(sigma >= 0.0) || samples == 0 {
            return Err(Error::invalid("rs_dual_attack", "need σ ≥ 0 and at least one sample"));
        }
        let regions = Regions::new(x, masks)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut delta = init_in_regions(x, &regions, cfg, &mut rng);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX));
        for _ in 0..cfg.steps {
            let g = self.expected_grad(&add(x, &delta), label, masks, cfg.lambda, sigma, samples, &mut noise_rng)?;
            delta = update_regions(x, &delta, &g, &regions, cfg);
        }
        Ok(apply(x, &delta))
    }

    /// Greedy sparse attack: repeatedly push the unsaturated pixel-channel
    /// with the largest loss gradient by `theta` in the ascent direction,
    /// touching at most `budget` pixel positions. Stops on misclassification.
    /// Returns the image and the number of modified pixel positions.
    pub fn jsma_attack(&self, x: &Tensor, label: usize, budget: usize, theta: f32) -> Result<(Tensor, usize)> {
        if budget == 0 {
            return Err(Error::invalid("jsma_attack", "pixel budget must be at least 1"));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::invalid("jsma_attack", format!("θ must lie in (0,1], got {theta}")));
        }
        let s = x.shape();
        if s.len() != 4 || s[0] != 1 {
            return Err(Error::shape("jsma_attack", format!("expected 1×C×H×W, got {s:?}")));
        }
        let (c, plane) = (s[1], s[2] * s[3]);
        let mut adv = x.clone();
        let mut touched = vec![false; plane];
        let mut count = 0;
        let max_iters = budget * c * ((1.0 / theta).ceil() as usize + 1);
        let whole = MaskPair::all_foreground(s[2], s[3]);
        for _ in 0..max_iters {
            let logits = self.model.predict_logits(&adv)?;
            if argmax(logits.data()) != label {
                break;
            }
            let (_, g) = self.objective_grad(adv.clone(), label, &whole, 0.0, 1.0)?;
            let mut best: Option<(usize, f32)> = None;
            for (i, (&gv, &xv)) in g.data().iter().zip(adv.data()).enumerate() {
                let pos = i % plane;
                if count >= budget && !touched[pos] {
                    continue;
                }
                let movable = (gv > 0.0 && xv < 1.0) || (gv < 0.0 && xv > 0.0);
                if movable && best.is_none_or(|(_, b)| gv.abs() > b) {
                    best = Some((i, gv.abs()));
                }
            }
            let Some((i, _)) = best else { break };
            let dir = if g.data()[i] > 0.0 { 1.0 } else { -1.0 };
            let v = &mut adv.data_mut()[i];
            *v = (*v + dir * theta).clamp(0.0, 1.0);
            let pos = i % plane;
            if !touched[pos] {
                touched[pos] = true;
                count += 1;
            }
        }
        Ok((adv, count))
    }
}

fn init_in_regions(x: &Tensor, regions: &Regions, cfg: &AttackConfig, rng: &mut ChaCha8Rng) -> Tensor {
    if !cfg.random_start {
        return Tensor::zeros(x.shape());
    }
    let d_fg = sample_ball(x.shape(), cfg.eps_fg, cfg.norm, rng);
    let d_bg = sample_ball(x.shape(), cfg.eps_bg, cfg.norm, rng);
    let delta = add(&mul(&d_fg, &regions.fg), &mul(&d_bg, &regions.bg));
    clip_to_box(x, &delta)
}

fn update_regions(x: &Tensor, delta: &Tensor, grad: &Tensor, regions: &Regions, cfg: &AttackConfig) -> Tensor {
    let g_fg = steepest_dir(&mul(grad, &regions.fg), cfg.norm);
    let g_bg = steepest_dir(&mul(grad, &regions.bg), cfg.norm);
    let (a_fg, a_bg) = (cfg.step_fg, cfg.step_bg);
    let d_fg = mul(delta, &regions.fg).zip_map(&g_fg, |d, g| d + a_fg * g).unwrap();
    let d_bg = mul(delta, &regions.bg).zip_map(&g_bg, |d, g| d + a_bg * g).unwrap();
    let merged = add(
        &project_unchecked(&d_fg, cfg.eps_fg, cfg.norm),
        &project_unchecked(&d_bg, cfg.eps_bg, cfg.norm),
    );
    let clipped = clip_to_box(x, &merged);
    add(
        &project_unchecked(&mul(&clipped, &regions.fg), cfg.eps_fg, cfg.norm),
        &project_unchecked(&mul(&clipped, &regions.bg), cfg.eps_bg, cfg.norm),
    )
}

/// Norm of `δ` restricted to one region mask (broadcast over channels).
pub fn masked_norm(delta: &Tensor, mask: &Tensor, norm: Norm) -> f64 {
    let plane = mask.len();
    let vals = delta
        .data()
        .iter()
        .enumerate()
        .map(|(i, &d)| d as f64 * mask.data()[i % plane] as f64);
    match norm {
        Norm::L2 => vals.map(|v| v * v).sum::<f64>().sqrt(),
        Norm::Linf => vals.fold(0.0, |m, v| m.max(v.abs())),
    }
}
