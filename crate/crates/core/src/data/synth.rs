//! Synthetic shape-classification images with exact foreground masks.

use std::f32::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Ring,
    Bar,
    Column,
    Chevron,
    Triangle,
    Arc,
    Disk,
    Square,
    Diamond,
    HalfDisk,
    Saltire,
    Cross,
    Frame,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 13] = [
        ShapeKind::Ring,
        ShapeKind::Bar,
        ShapeKind::Column,
        ShapeKind::Chevron,
        ShapeKind::Triangle,
        ShapeKind::Arc,
        ShapeKind::Disk,
        ShapeKind::Square,
        ShapeKind::Diamond,
        ShapeKind::HalfDisk,
        ShapeKind::Saltire,
        ShapeKind::Cross,
        ShapeKind::Frame,
    ];

    /// Membership test in the shape's own frame, unit circumradius.
    pub fn contains_unit(self, u: f32, v: f32) -> bool {
        let r2 = u * u + v * v;
        match self {
            ShapeKind::Disk => r2 <= 1.0,
            ShapeKind::Square => u.abs() <= 0.75 && v.abs() <= 0.75,
            ShapeKind::Triangle => {
                // Equilateral, apex up, circumradius 1.
                v >= -0.5 && v <= 1.0 && u.abs() <= (1.0 - v) / 3f32.sqrt()
            }
            ShapeKind::Cross => {
                (u.abs() <= 0.3 && v.abs() <= 1.0) || (v.abs() <= 0.3 && u.abs() <= 1.0)
            }
            ShapeKind::Ring => (0.3025..=1.0).contains(&r2),
            ShapeKind::Bar => u.abs() <= 1.0 && v.abs() <= 0.3,
            ShapeKind::Diamond => u.abs() + v.abs() <= 1.0,
            ShapeKind::Saltire => {
                let s = std::f32::consts::FRAC_1_SQRT_2;
                let (a, b) = (s * (u + v), s * (u - v));
                (a.abs() <= 0.28 && b.abs() <= 1.0) || (b.abs() <= 0.28 && a.abs() <= 1.0)
            }
            ShapeKind::Frame => {
                let m = u.abs().max(v.abs());
                (0.45..=0.8).contains(&m)
            }
            ShapeKind::HalfDisk => r2 <= 1.0 && v >= -0.1,
            ShapeKind::Column => u.abs() <= 0.3 && v.abs() <= 1.0,
            ShapeKind::Chevron => {
                let d = (v - 0.8 * u.abs() + 0.3).abs();
                d <= 0.3 && u.abs() <= 0.9
            }
            ShapeKind::Arc => (0.3025..=1.0).contains(&r2) && v <= 0.1,
        }
    }
}

/// One rendered object: kind, placement, and colors.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeInstance {
    pub kind: ShapeKind,
    pub center: (f32, f32),
    pub radius: f32,
    pub rotation: f32,
    pub color: [f32; 3],
}

impl ShapeInstance {
    /// Whether the center of pixel (row, col) lies inside the shape.
    pub fn covers(&self, row: usize, col: usize) -> bool {
        let dx = (col as f32 + 0.5 - self.center.0) / self.radius;
        let dy = (row as f32 + 0.5 - self.center.1) / self.radius;
        let (s, c) = self.rotation.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        self.kind.contains_unit(u, -v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub samples: usize,
    pub size: usize,
    pub min_radius: f32,
    pub max_radius: f32,
    /// Peak amplitude of the sinusoidal background texture.
    pub texture_amplitude: f32,
    /// Mean absolute intensity gap between object and background.
    pub separation: f32,
    pub max_rotation: f32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 6,
            samples: 6000,
            size: 32,
            min_radius: 8.0,
            max_radius: 11.0,
            texture_amplitude: 0.04,
            separation: 0.8,
            max_rotation: 0.35,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let most = ShapeKind::ALL.len();
        if !(2..=most).contains(&self.classes) {
            return Err(Error::Config(format!("classes must be in [2,{most}], got {}", self.classes)));
        }
        if self.samples < 2 * self.classes {
            return Err(Error::Config(format!(
                "need at least {} samples for {} classes, got {}",
                2 * self.classes,
                self.classes,
                self.samples
            )));
        }
        let finite = [
            self.min_radius,
            self.max_radius,
            self.texture_amplitude,
            self.separation,
            self.max_rotation,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("synthetic parameters must be finite and nonnegative".into()));
        }
        if self.min_radius <= 0.0 || self.min_radius > self.max_radius || self.size < 4 {
            return Err(Error::Config("invalid radius range or image size".into()));
        }
        Ok(())
    }
}

const MAX_PLACEMENT_TRIES: usize = 64;

fn place(cfg: &SynthConfig, rng: &mut ChaCha8Rng, kind: ShapeKind) -> Result<ShapeInstance> {
    let size = cfg.size as f32;
    for _ in 0..MAX_PLACEMENT_TRIES {
        let radius = if cfg.max_radius > cfg.min_radius {
            rng.random_range(cfg.min_radius..cfg.max_radius)
        } else {
            cfg.min_radius
        };
        let lo = radius + 1.0;
        let hi = size - radius - 1.0;
        if hi <= lo {
            // Retry with another radius draw.
            continue;
        }
        let center = (rng.random_range(lo..hi), rng.random_range(lo..hi));
        let rotation = if cfg.max_rotation > 0.0 {
            rng.random_range(-cfg.max_rotation..cfg.max_rotation)
        } else {
            0.0
        };
        return Ok(ShapeInstance { kind, center, radius, rotation, color: [0.0; 3] });
    }
    Err(Error::Config(format!(
        "shape of radius ≥ {} does not fit a {}×{} image",
        cfg.min_radius, cfg.size, cfg.size
    )))
}

/// Generate a dataset and the per-sample shape instances used to render it.
pub fn generate_with_instances(cfg: &SynthConfig) -> Result<(Dataset, Vec<ShapeInstance>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.size;
    let plane = s * s;
    let mut images = vec![0.0f32; cfg.samples * 3 * plane];
    let mut masks = vec![0.0f32; cfg.samples * plane];
    let mut labels = Vec::with_capacity(cfg.samples);
    let mut instances = Vec::with_capacity(cfg.samples);

    for n in 0..cfg.samples {
        let label = n % cfg.classes;
        let mut inst = place(cfg, &mut rng, ShapeKind::ALL[label])?;

        let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.25..0.75));
        let waves: Vec<(f32, f32, f32, [f32; 3])> = (0..rng.random_range(2..=4))
            .map(|_| {
                let theta = rng.random_range(0.0..2.0 * PI);
                let freq = 2.0 * PI / rng.random_range(16.0..64.0);
                let phase = rng.random_range(0.0..2.0 * PI);
                let gain: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.5..1.0));
                (theta, freq, phase, gain)
            })
            .collect();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        // A channel without headroom on the chosen side flips to the other,
        // so the configured gap survives clamping.
        let color: [f32; 3] = std::array::from_fn(|c| {
            let gap = cfg.separation * rng.random_range(0.7..1.3);
            let v = base[c] + sign * gap;
            let v = if (0.0..=1.0).contains(&v) { v } else { base[c] - sign * gap };
            v.clamp(0.0, 1.0)
        });
        inst.color = color;

        let amp = cfg.texture_amplitude / waves.len() as f32;
        let img = &mut images[n * 3 * plane..(n + 1) * 3 * plane];
        let mask = &mut masks[n * plane..(n + 1) * plane];
        for i in 0..s {
            for j in 0..s {
                let p = i * s + j;
                if inst.covers(i, j) {
                    mask[p] = 1.0;
                    for c in 0..3 {
                        img[c * plane + p] = color[c];
                    }
                    continue;
                }
                for c in 0..3 {
                    let mut v = base[c];
                    for (theta, freq, phase, gain) in &waves {
                        let t = (j as f32) * theta.cos() + (i as f32) * theta.sin();
                        v += amp * gain[c] * (freq * t + phase).sin();
                    }
                    img[c * plane + p] = v.clamp(0.0, 1.0);
                }
            }
        }
        labels.push(label);
        instances.push(inst);
    }

    let dataset = Dataset {
        images: Tensor::new(vec![cfg.samples, 3, s, s], images)?,
        labels,
        masks: Some(Tensor::new(vec![cfg.samples, s, s], masks)?),
        classes: cfg.classes,
    };
    Ok((dataset, instances))
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    generate_with_instances(cfg).map(|(d, _)| d)
}
