//! Experiment configuration: `key=value` files merged with command-line
//! overrides, resolved against per-command defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::attack::{AttackConfig, Norm};
use crate::data::synth::SynthConfig;
use crate::defense::{AttackKind, MaskSource, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{Axis, EvalAttack, Smoothing, SweepSpec};
use crate::kv;
use crate::salience::{FixationNet, SalienceKind, SalienceModel};

/// Every recognized key with its default. An empty default means "unset".
const KEYS: &[(&str, &str)] = &[
    ("abstain_alpha", "0.001"),
    ("attack", ""),
    ("axis", "eps_fg"),
    ("batch_size", "32"),
    ("bg_ratio", "5"),
    ("classes", "6"),
    ("copies", "100"),
    ("count", "8"),
    ("data", ""),
    ("decay_epochs", ""),
    ("defense", "clean"),
    ("epochs", "10"),
    ("eps", ""),
    ("eps_bg", "2.5"),
    ("eps_fg", "0.5"),
    ("init_model", ""),
    ("jsma_budget", "52"),
    ("jsma_theta", "1"),
    ("lambda", "0"),
    ("limit", "0"),
    ("lr", "0.002"),
    ("lr_decay", "0.1"),
    ("mask_source", "gt"),
    ("model", ""),
    ("models", ""),
    ("name", ""),
    ("norm", "2"),
    ("out", "out"),
    ("radius_max", "11"),
    ("radius_min", "8"),
    ("ramp_epochs", "0"),
    ("random_start", "true"),
    ("rotation", "0.35"),
    ("rs_samples", "8"),
    ("rs_sigma", "0"),
    ("salience", "dog"),
    ("salience_model", ""),
    ("samples", "6000"),
    ("seed", "0"),
    ("separation", "0.8"),
    ("step_bg", ""),
    ("step_fg", ""),
    ("steps", ""),
    ("texture", "0.04"),
    ("timing", "false"),
    ("train_fraction", "0.75"),
    ("train_target", "classifier"),
    ("values", ""),
];

/// Subcommands of the command-line tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenData,
    Train,
    Attack,
    Eval,
    Sweep,
    Transfer,
    Gradviz,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Attack => "attack",
            Command::Eval => "eval",
            Command::Sweep => "sweep",
            Command::Transfer => "transfer",
            Command::Gradviz => "gradviz",
        }
    }

    fn default_for(self, key: &str) -> Option<&'static str> {
        match (self, key) {
            (Command::Eval | Command::Train, "attack") => Some("none"),
            (_, "attack") => Some("dual"),
            (Command::Train, "steps") => Some("10"),
            (_, "steps") => Some("20"),
            _ => None,
        }
    }
}

/// Fully resolved key/value configuration for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Merge `file_text` (may be empty) with `overrides`, later entries
    /// winning, then fill defaults. Unknown keys are rejected.
    pub fn resolve(command: Command, file_text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in kv::parse(file_text)?.into_iter().chain(overrides.iter().cloned()) {
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(Error::Config(format!("unknown configuration key {k:?}")));
            }
            values.insert(k, v);
        }
        for (k, d) in KEYS {
            if !values.contains_key(*k) {
                let v = command.default_for(k).unwrap_or(d);
                values.insert(k.to_string(), v.to_string());
            }
        }
        if values["name"].is_empty() {
            values.insert("name".into(), command.name().into());
        }
        Ok(ExperimentConfig { command, values })
    }

    pub fn from_file(command: Command, path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::resolve(command, &text, overrides)
    }

    /// Every key and value, sorted, for self-describing outputs.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let mut out = vec![("command".to_string(), self.command.name().to_string())];
        out.extend(self.values.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
    }

    pub fn f32(&self, key: &str) -> Result<f32> {
        let v: f32 = self.parse(key)?;
        if !v.is_finite() {
            return Err(Error::Config(format!("{key} must be finite")));
        }
        Ok(v)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parse(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!("{key}: expected true|false, got {other:?}"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        split_list(self.get(key))
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config(format!("{key}: bad number {s:?}")))
            })
            .collect()
    }

    /// A required path-valued key.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        match self.get(key) {
            "" => Err(Error::Config(format!("missing required key {key:?}"))),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    /// `(name, path)` pairs from `models` (entries `name=path` or `path`),
    /// falling back to the single `model` key.
    pub fn model_paths(&self) -> Result<Vec<(String, PathBuf)>> {
        let list = match self.get("models") {
            "" => self.get("model"),
            l => l,
        };
        let entries: Vec<(String, PathBuf)> = split_list(list)
            .map(|e| match e.split_once('=') {
                Some((n, p)) => (n.trim().to_string(), PathBuf::from(p.trim())),
                None => {
                    let p = PathBuf::from(e);
                    let name = p.file_stem().map_or_else(|| e.to_string(), |s| s.to_string_lossy().into_owned());
                    (name, p)
                }
            })
            .collect();
        if entries.is_empty() {
            return Err(Error::Config("missing required key \"model\" (or \"models\")".into()));
        }
        Ok(entries)
    }

    /// Attack parameters. For PGD the budget is `eps` when set, else
    /// `eps_fg`. Unset step sizes default to `2ε/K`.
    pub fn attack_config(&self, pgd: bool) -> Result<AttackConfig> {
        let norm: Norm = self.get("norm").parse()?;
        let steps = self.usize("steps")?;
        let mut cfg = if pgd {
            let eps = if self.get("eps").is_empty() { self.f32("eps_fg")? } else { self.f32("eps")? };
            AttackConfig::pgd(norm, eps, steps)
        } else {
            AttackConfig::dual(norm, self.f32("eps_fg")?, self.f32("eps_bg")?, self.f32("lambda")?, steps)
        };
        if !self.get("step_fg").is_empty() {
            cfg.step_fg = self.f32("step_fg")?;
        }
        if !self.get("step_bg").is_empty() && !pgd {
            cfg.step_bg = self.f32("step_bg")?;
        }
        cfg.steps = steps;
        cfg.random_start = self.bool("random_start")?;
        cfg.seed = self.seed()?;
        cfg.salience = self.get("salience").parse()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_attack(&self) -> Result<Option<EvalAttack>> {
        Ok(match self.get("attack") {
            "none" => None,
            "pgd" => Some(EvalAttack::Pgd(self.attack_config(true)?)),
            "dual" => Some(EvalAttack::Dual(self.attack_config(false)?)),
            "jsma" => Some(EvalAttack::Jsma { budget: self.usize("jsma_budget")?, theta: self.f32("jsma_theta")? }),
            other => return Err(Error::Config(format!("unknown attack {other:?} (expected none|pgd|dual|jsma)"))),
        })
    }

    pub fn mask_source(&self) -> Result<MaskSource> {
        self.get("mask_source").parse()
    }

    /// The salience model named by `salience`, loading `salience_model` for
    /// the learned variant.
    pub fn salience_model(&self) -> Result<SalienceModel> {
        match self.get("salience").parse::<SalienceKind>()? {
            SalienceKind::Dog => Ok(SalienceModel::Dog),
            SalienceKind::Learned => Ok(SalienceModel::Learned(FixationNet::load(&self.path("salience_model")?)?)),
        }
    }

    /// Smoothing for evaluated models, or `None` when `rs_sigma` is zero.
    pub fn smoothing(&self) -> Result<Option<Smoothing>> {
        let s = self.smoothing_params()?;
        Ok((s.sigma > 0.0).then_some(s))
    }

    pub fn smoothing_params(&self) -> Result<Smoothing> {
        let sigma = self.f32("rs_sigma")?;
        if sigma < 0.0 {
            return Err(Error::Config("rs_sigma must be nonnegative".into()));
        }
        Ok(Smoothing {
            sigma,
            copies: self.usize("copies")?,
            alpha: self.parse("abstain_alpha")?,
            attack_samples: self.usize("rs_samples")?,
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let values = self.f64_list("values")?;
        if values.is_empty() {
            return Err(Error::Config("sweep needs a nonempty \"values\" list".into()));
        }
        Ok(SweepSpec {
            axis: self.get("axis").parse::<Axis>()?,
            values,
            bg_ratio: self.f32("bg_ratio")?,
            smoothing: self.smoothing_params()?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::clean(self.usize("epochs")?, self.usize("batch_size")?, self.f32("lr")?, self.seed()?);
        cfg.lr_decay = self.f32("lr_decay")?;
        cfg.decay_epochs = split_list(self.get("decay_epochs"))
            .map(|s| s.parse().map_err(|_| Error::Config(format!("decay_epochs: bad epoch {s:?}"))))
            .collect::<Result<_>>()?;
        cfg.mask_source = self.mask_source()?;
        cfg.ramp_epochs = self.usize("ramp_epochs")?;
        match self.get("defense") {
            "clean" | "none" => {}
            "rs" => cfg.noise_sigma = self.f32("rs_sigma")?,
            other => {
                cfg.attack = other.parse::<AttackKind>()?;
                cfg.attack_cfg = self.attack_config(cfg.attack == AttackKind::Pgd)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let cfg = SynthConfig {
            classes: self.usize("classes")?,
            samples: self.usize("samples")?,
            min_radius: self.f32("radius_min")?,
            max_radius: self.f32("radius_max")?,
            texture_amplitude: self.f32("texture")?,
            separation: self.f32("separation")?,
            max_rotation: self.f32("rotation")?,
            seed: self.seed()?,
            ..SynthConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty())
}
