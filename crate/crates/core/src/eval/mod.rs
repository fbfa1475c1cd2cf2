//! Experiment drivers: clean/adversarial accuracy, parameter sweeps,
//! transfer matrices and input-gradient visualization, plus the CSV and
//! portable-image outputs they produce.

pub mod cli;
pub mod config;
pub mod pnm;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::attack::{mix_seed, AttackConfig, Attacker};
use crate::data::Dataset;
use crate::defense::{dataset_masks, MaskSource, Prediction, SmoothedClassifier};
use crate::error::{Error, Result};
use crate::model::ClassifierParams;
use crate::salience::{MaskPair, SalienceModel};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Column names shared by every metrics CSV.
pub const METRICS_HEADER: &str = "id,model,attack,axis,value,clean_acc,adv_acc,mean_fs,seconds";

const PREDICT_STREAM: u64 = 0x5eed_0f_7e57;

/// Majority-vote settings for a smoothed model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothing {
    pub sigma: f32,
    pub copies: usize,
    pub alpha: f64,
    /// Noise draws per gradient when attacking the smoothed model.
    pub attack_samples: usize,
}

/// A classifier under evaluation, optionally wrapped in randomized smoothing.
#[derive(Clone, Debug)]
pub struct NamedModel {
    pub name: String,
    pub params: ClassifierParams,
    pub smoothing: Option<Smoothing>,
}

impl NamedModel {
    pub fn plain(name: impl Into<String>, params: ClassifierParams) -> Self {
        NamedModel { name: name.into(), params, smoothing: None }
    }

    /// Whether the model classifies `x` as `label`. Smoothed models draw
    /// their noise from `seed`; an abstention counts as wrong.
    pub fn correct(&self, x: &Tensor, label: usize, seed: u64) -> Result<bool> {
        match self.smoothing {
            None => Ok(self.params.predict_class(x)?[0] == label),
            Some(s) => {
                let clf = SmoothedClassifier {
                    base: self.params.clone(),
                    sigma: s.sigma,
                    copies: s.copies,
                    abstain_alpha: s.alpha,
                };
                Ok(matches!(clf.predict(x, seed)?, Prediction::Class(c) if c == label))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalAttack {
    Pgd(AttackConfig),
    /// Against a smoothed model this runs the noise-averaged variant.
    Dual(AttackConfig),
    Jsma { budget: usize, theta: f32 },
}

impl EvalAttack {
    pub fn name(&self) -> &'static str {
        match self {
            EvalAttack::Pgd(_) => "pgd",
            EvalAttack::Dual(_) => "dual",
            EvalAttack::Jsma { .. } => "jsma",
        }
    }
}

/// Settings shared by all drivers.
#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub salience: SalienceModel,
    pub mask_source: MaskSource,
    pub seed: u64,
    /// Fill the `seconds` column. Off by default so reruns are byte-identical.
    pub timing: bool,
    pub id: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            salience: SalienceModel::Dog,
            mask_source: MaskSource::GroundTruth,
            seed: 0,
            timing: false,
            id: "eval".into(),
        }
    }
}

impl EvalOptions {
    fn predict_seed(&self, index: usize) -> u64 {
        mix_seed(mix_seed(self.seed, PREDICT_STREAM), index as u64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub id: String,
    pub model: String,
    pub attack: String,
    pub axis: String,
    pub value: Option<f64>,
    pub clean_acc: f64,
    pub adv_acc: Option<f64>,
    pub mean_fs: Option<f64>,
    pub seconds: Option<f64>,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&self.id),
            csv_field(&self.model),
            csv_field(&self.attack),
            csv_field(&self.axis),
            opt(self.value),
            self.clean_acc,
            opt(self.adv_acc),
            opt(self.mean_fs),
            opt(self.seconds.map(|s| (s * 1000.0).round() / 1000.0)),
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Render a CSV with `#`-prefixed configuration lines, a header, and rows.
pub fn render_csv(config: &[(String, String)], header: &str, rows: &[String]) -> String {
    let mut out = String::new();
    for (k, v) in config {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: &Path, config: &[(String, String)], rows: &[MetricsRow]) -> Result<()> {
    let lines: Vec<String> = rows.iter().map(MetricsRow::csv_line).collect();
    let text = render_csv(config, METRICS_HEADER, &lines);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn masks_for(data: &Dataset, attack: Option<&EvalAttack>, opts: &EvalOptions) -> Result<Option<Vec<MaskPair>>> {
    match attack {
        Some(EvalAttack::Dual(_)) => dataset_masks(data, opts.mask_source, &opts.salience)
            .map(Some)
            .map_err(|e| match e {
                Error::Dataset(msg) => Error::Dataset(format!("dual attack: {msg}")),
                other => other,
            }),
        _ => Ok(None),
    }
}

/// Adversarial version of image `i` crafted against `model`.
fn craft(
    model: &NamedModel,
    data: &Dataset,
    i: usize,
    attack: &EvalAttack,
    masks: Option<&[MaskPair]>,
    opts: &EvalOptions,
) -> Result<Tensor> {
    let x = data.image(i);
    let y = data.labels[i];
    let atk = Attacker::new(&model.params, &opts.salience);
    match attack {
        EvalAttack::Pgd(cfg) => atk.pgd_attack(&x, y, &cfg.for_sample(i)),
        EvalAttack::Dual(cfg) => {
            let m = &masks.expect("masks prepared for dual attack")[i];
            match model.smoothing {
                Some(s) if s.sigma > 0.0 => atk.rs_dual_attack(&x, y, m, &cfg.for_sample(i), s.sigma, s.attack_samples),
                _ => atk.dual_attack(&x, y, m, &cfg.for_sample(i)),
            }
        }
        EvalAttack::Jsma { budget, theta } => Ok(atk.jsma_attack(&x, y, *budget, *theta)?.0),
    }
}

/// Clean accuracy and, when `attack` is given, adversarial accuracy over the
/// whole dataset. Dual attacks also report the mean foreground score of the
/// adversarial images under `opts.salience`.
pub fn eval_accuracy(
    model: &NamedModel,
    data: &Dataset,
    attack: Option<&EvalAttack>,
    opts: &EvalOptions,
) -> Result<MetricsRow> {
    eval_with_examples(model, data, attack, opts).map(|(_, row)| row)
}

/// Like [`eval_accuracy`], also returning the adversarial images.
pub fn eval_with_examples(
    model: &NamedModel,
    data: &Dataset,
    attack: Option<&EvalAttack>,
    opts: &EvalOptions,
) -> Result<(Vec<Tensor>, MetricsRow)> {
    data.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    if data.image_shape() != model.params.arch.input {
        return Err(Error::Shape {
            op: "eval_accuracy",
            detail: format!("dataset images {:?} vs model input {:?}", data.image_shape(), model.params.arch.input),
        });
    }
    let masks = masks_for(data, attack, opts)?;
    let start = opts.timing.then(Instant::now);
    let n = data.len();
    let mut clean = 0usize;
    let mut adv_ok = 0usize;
    let mut fs_total = 0.0f64;
    let mut examples = Vec::new();
    for i in 0..n {
        let x = data.image(i);
        let y = data.labels[i];
        let seed = opts.predict_seed(i);
        if model.correct(&x, y, seed)? {
            clean += 1;
        }
        if let Some(a) = attack {
            let adv = craft(model, data, i, a, masks.as_deref(), opts)?;
            if model.correct(&adv, y, seed)? {
                adv_ok += 1;
            }
            if let Some(m) = &masks {
                fs_total += opts.salience.foreground_score(&adv, &m[i])? as f64;
            }
            examples.push(adv);
        }
    }
    let row = MetricsRow {
        id: opts.id.clone(),
        model: model.name.clone(),
        attack: attack.map_or("none", EvalAttack::name).to_string(),
        axis: String::new(),
        value: None,
        clean_acc: clean as f64 / n as f64,
        adv_acc: attack.map(|_| adv_ok as f64 / n as f64),
        mean_fs: masks.as_ref().map(|_| fs_total / n as f64),
        seconds: start.map(|t| t.elapsed().as_secs_f64()),
    };
    Ok((examples, row))
}

/// Swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    EpsFg,
    EpsBg,
    /// Both budgets together: `ε_F = v`, `ε_B = ratio·v`.
    Eps,
    Lambda,
    /// Smoothing noise level.
    Sigma,
    /// Number of smoothing copies.
    Copies,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps_fg" => Ok(Axis::EpsFg),
            "eps_bg" => Ok(Axis::EpsBg),
            "eps" => Ok(Axis::Eps),
            "lambda" => Ok(Axis::Lambda),
            "sigma" => Ok(Axis::Sigma),
            "n" | "copies" => Ok(Axis::Copies),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (expected eps_fg|eps_bg|eps|lambda|sigma|n)"
            ))),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::EpsFg => "eps_fg",
            Axis::EpsBg => "eps_bg",
            Axis::Eps => "eps",
            Axis::Lambda => "lambda",
            Axis::Sigma => "sigma",
            Axis::Copies => "n",
        }
    }
}

/// Sweep settings beyond the attack itself.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// `ε_B / ε_F` for the joint `eps` axis.
    pub bg_ratio: f32,
    /// Smoothing applied to every model on the `sigma` and `n` axes.
    pub smoothing: Smoothing,
}

fn apply_value(attack: &EvalAttack, spec: &SweepSpec, v: f64) -> EvalAttack {
    let v32 = v as f32;
    let retune = |cfg: &AttackConfig, f: &dyn Fn(&mut AttackConfig)| {
        let mut c = cfg.clone();
        f(&mut c);
        c.with_default_steps()
    };
    match (attack, spec.axis) {
        (EvalAttack::Dual(c), Axis::EpsFg) => EvalAttack::Dual(retune(c, &|c| c.eps_fg = v32)),
        (EvalAttack::Dual(c), Axis::EpsBg) => EvalAttack::Dual(retune(c, &|c| c.eps_bg = v32)),
        (EvalAttack::Dual(c), Axis::Eps) => EvalAttack::Dual(retune(c, &|c| {
            c.eps_fg = v32;
            c.eps_bg = spec.bg_ratio * v32;
        })),
        (EvalAttack::Dual(c), Axis::Lambda) => EvalAttack::Dual(AttackConfig { lambda: v32, ..c.clone() }),
        (EvalAttack::Pgd(c), Axis::EpsFg | Axis::Eps) => EvalAttack::Pgd(retune(c, &|c| c.eps_fg = v32)),
        (a, _) => a.clone(),
    }
}

fn check_axis(attack: &EvalAttack, axis: Axis) -> Result<()> {
    let ok = match axis {
        Axis::EpsFg | Axis::Eps => !matches!(attack, EvalAttack::Jsma { .. }),
        Axis::EpsBg | Axis::Lambda => matches!(attack, EvalAttack::Dual(_)),
        Axis::Sigma | Axis::Copies => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("axis {} does not apply to the {} attack", axis.name(), attack.name())))
    }
}

/// One row per `(model, value)`. Every model sees the same per-image attack
/// seeds and smoothing noise, so rows are paired across models.
pub fn sweep(
    models: &[NamedModel],
    data: &Dataset,
    attack: &EvalAttack,
    spec: &SweepSpec,
    opts: &EvalOptions,
) -> Result<Vec<MetricsRow>> {
    if spec.values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if let Some(v) = spec.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Config(format!("sweep values must be finite and ≥ 0, got {v}")));
    }
    check_axis(attack, spec.axis)?;
    let mut rows = Vec::with_capacity(models.len() * spec.values.len());
    for model in models {
        for &v in &spec.values {
            let cell_attack = apply_value(attack, spec, v);
            let mut cell_model = model.clone();
            match spec.axis {
                Axis::Sigma => {
                    let base = model.smoothing.unwrap_or(spec.smoothing);
                    cell_model.smoothing = Some(Smoothing { sigma: v as f32, ..base });
                }
                Axis::Copies => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::Config(format!("copy counts must be positive integers, got {v}")));
                    }
                    let base = model.smoothing.unwrap_or(spec.smoothing);
                    cell_model.smoothing = Some(Smoothing { copies: v as usize, ..base });
                }
                _ => {}
            }
            let mut row = eval_accuracy(&cell_model, data, Some(&cell_attack), opts)?;
            row.axis = spec.axis.name().to_string();
            row.value = Some(v);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// `m[s][t]` is target `t`'s accuracy on examples crafted against source `s`.
pub fn transfer_matrix(
    models: &[NamedModel],
    data: &Dataset,
    attack: &EvalAttack,
    opts: &EvalOptions,
) -> Result<Vec<Vec<f64>>> {
    if models.len() < 2 {
        return Err(Error::Config("transfer needs at least two models".into()));
    }
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    let masks = masks_for(data, Some(attack), opts)?;
    let n = data.len();
    let mut matrix = Vec::with_capacity(models.len());
    for source in models {
        let mut hits = vec![0usize; models.len()];
        for i in 0..n {
            let adv = craft(source, data, i, attack, masks.as_deref(), opts)?;
            for (t, target) in models.iter().enumerate() {
                if target.correct(&adv, data.labels[i], opts.predict_seed(i))? {
                    hits[t] += 1;
                }
            }
        }
        matrix.push(hits.iter().map(|&h| h as f64 / n as f64).collect());
    }
    Ok(matrix)
}

pub fn render_transfer_csv(config: &[(String, String)], models: &[NamedModel], matrix: &[Vec<f64>]) -> String {
    let names: Vec<String> = models.iter().map(|m| csv_field(&m.name)).collect();
    let header = format!("source,{}", names.join(","));
    let rows: Vec<String> = names
        .iter()
        .zip(matrix)
        .map(|(n, row)| {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            format!("{n},{}", cells.join(","))
        })
        .collect();
    render_csv(config, &header, &rows)
}

/// `∂L/∂x` of the cross-entropy loss at one 1×C×H×W image.
pub fn input_gradient(params: &ClassifierParams, x: &Tensor, label: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = params.register(&mut tape, false);
    let xv = tape.leaf(x.clone());
    let logits = params.forward(&mut tape, &p, xv)?;
    let loss = tape.softmax_cross_entropy(logits, &[label])?;
    let total = tape.reduce_sum(loss)?;
    let mut grads = tape.backward(total)?;
    Ok(grads.take(xv).expect("tracked input"))
}

/// Per-pixel `Σ_c |g_c|` of a 1×C×H×W gradient.
pub fn channel_abs_sum(grad: &Tensor) -> Vec<f32> {
    let s = grad.shape();
    let plane = s[s.len() - 2] * s[s.len() - 1];
    let mut out = vec![0.0f32; plane];
    for chunk in grad.data().chunks(plane) {
        for (o, &g) in out.iter_mut().zip(chunk) {
            *o += g.abs();
        }
    }
    out
}

/// Fraction of gradient magnitude on foreground pixels; zero gradient gives 0.
pub fn gradient_concentration(grad: &Tensor, mask: &MaskPair) -> f64 {
    let mag = channel_abs_sum(grad);
    let mut fg = 0.0f64;
    let mut total = 0.0f64;
    for (&m, &f) in mag.iter().zip(mask.foreground.data()) {
        total += m as f64;
        if f > 0.5 {
            fg += m as f64;
        }
    }
    if total > 0.0 {
        fg / total
    } else {
        0.0
    }
}

/// Mean gradient concentration over every image of a dataset with
/// ground-truth masks.
pub fn mean_gradient_concentration(params: &ClassifierParams, data: &Dataset) -> Result<f64> {
    let masks = dataset_masks(data, MaskSource::GroundTruth, &SalienceModel::Dog)?;
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    let mut sum = 0.0;
    for (i, m) in masks.iter().enumerate() {
        let g = input_gradient(params, &data.image(i), data.labels[i])?;
        sum += gradient_concentration(&g, m);
    }
    Ok(sum / data.len() as f64)
}

/// One written visualization.
#[derive(Clone, Debug, PartialEq)]
pub struct GradVizRow {
    pub index: usize,
    pub label: usize,
    /// `None` when the dataset has no masks.
    pub concentration: Option<f64>,
}

/// For each listed image, write `grad_NNNN.pgm` (rescaled `Σ_c|∂L/∂x|`),
/// `input_NNNN.ppm`, and finally `gradviz.csv`.
pub fn gradviz(
    params: &ClassifierParams,
    data: &Dataset,
    indices: &[usize],
    out_dir: &Path,
    config: &[(String, String)],
) -> Result<Vec<GradVizRow>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let [_, h, w] = data.image_shape();
    let mut rows = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= data.len() {
            return Err(Error::invalid("gradviz", format!("image index {i} out of range for {} images", data.len())));
        }
        let x = data.image(i);
        let g = input_gradient(params, &x, data.labels[i])?;
        let pixels = pnm::rescale_to_u8(&channel_abs_sum(&g));
        pnm::write_pgm(&out_dir.join(format!("grad_{i:04}.pgm")), w, h, &pixels)?;
        pnm::write_ppm_image(&out_dir.join(format!("input_{i:04}.ppm")), &x)?;
        let concentration = match data.mask(i) {
            Some(m) => Some(gradient_concentration(&g, &MaskPair::from_foreground(&m)?)),
            None => None,
        };
        rows.push(GradVizRow { index: i, label: data.labels[i], concentration });
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            let c = r.concentration.map(|c| c.to_string()).unwrap_or_default();
            format!("{},{},{}", r.index, r.label, c)
        })
        .collect();
    let path = out_dir.join("gradviz.csv");
    std::fs::write(&path, render_csv(config, "index,label,fg_concentration", &lines)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
