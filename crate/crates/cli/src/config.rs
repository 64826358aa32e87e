//! Run configuration: defaults, a flat `key = value` file, then flag overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use tempdepth::geometry::{AttackScene, RealScene};

use crate::CliError;

/// Values given on the command line; each one wins over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub frames: Option<usize>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    /// Channels of both backbone levels.
    pub backbone_channels: usize,
    /// Channels after each OFF block's 1×1 reduction.
    pub reduced_channels: usize,
    /// Output channels of each OFF block.
    pub fused_channels: usize,
    pub head_hidden: usize,
    /// Vertical face motion per frame, in image units.
    pub motion: f64,
    pub weights_dir: Option<PathBuf>,
    pub export_weights: Option<PathBuf>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            backbone_channels: 8,
            reduced_channels: 16,
            fused_channels: 32,
            head_hidden: tempdepth::supervision::DEFAULT_HEAD_HIDDEN,
            motion: 3.0,
            weights_dir: None,
            export_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub alpha: f64,
    pub beta: f64,
    pub frames: usize,
    pub threshold: f64,
    pub real: RealScene,
    /// Shared by the print, replay and rotated scenes.
    pub attack: AttackScene,
    pub rotation_theta: f64,
    /// Carrier shake per frame step for the replay scene.
    pub dv_schedule: Vec<f64>,
    pub demo: DemoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            alpha: 0.8,
            beta: 0.9,
            frames: 5,
            threshold: 0.5,
            real: RealScene::default(),
            attack: AttackScene::default(),
            rotation_theta: 0.3,
            dv_schedule: vec![0.05, 0.1, -0.05, 0.02],
            demo: DemoConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| CliError::Usage(format!("config line {line}: {key}: invalid value {raw:?}: {e}")))
}

fn parse_list(key: &str, raw: &str, line: usize) -> Result<Vec<f64>, CliError> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|v| parse_value(key, v.trim(), line)).collect()
}

fn optional_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

impl RunConfig {
    /// Applies one `key = value` pair; `line` is only used in diagnostics.
    pub fn set(&mut self, key: &str, raw: &str, line: usize) -> Result<(), CliError> {
        let raw = raw.trim();
        match key {
            "seed" => self.seed = parse_value(key, raw, line)?,
            "out" => self.out = PathBuf::from(raw),
            "alpha" => self.alpha = parse_value(key, raw, line)?,
            "beta" => self.beta = parse_value(key, raw, line)?,
            "frames" => self.frames = parse_value(key, raw, line)?,
            "threshold" => self.threshold = parse_value(key, raw, line)?,
            "real.f" => self.real.f = parse_value(key, raw, line)?,
            "real.z" => self.real.z = parse_value(key, raw, line)?,
            "real.d1" => self.real.d1 = parse_value(key, raw, line)?,
            "real.d2" => self.real.d2 = parse_value(key, raw, line)?,
            "real.dx" => self.real.dx = parse_value(key, raw, line)?,
            "attack.fa" => self.attack.fa = parse_value(key, raw, line)?,
            "attack.fb" => self.attack.fb = parse_value(key, raw, line)?,
            "attack.za" => self.attack.za = parse_value(key, raw, line)?,
            "attack.zb" => self.attack.zb = parse_value(key, raw, line)?,
            "attack.d1" => self.attack.d1 = parse_value(key, raw, line)?,
            "attack.d2" => self.attack.d2 = parse_value(key, raw, line)?,
            "attack.dx" => self.attack.dx = parse_value(key, raw, line)?,
            "attack.dv" => self.attack.dv = parse_value(key, raw, line)?,
            "attack.ul1" => self.attack.ul1 = parse_value(key, raw, line)?,
            "attack.um1" => self.attack.um1 = parse_value(key, raw, line)?,
            "attack.ur1" => self.attack.ur1 = parse_value(key, raw, line)?,
            "rotated.theta" => self.rotation_theta = parse_value(key, raw, line)?,
            "replay.dv_schedule" => self.dv_schedule = parse_list(key, raw, line)?,
            "demo.backbone_channels" => self.demo.backbone_channels = parse_value(key, raw, line)?,
            "demo.reduced_channels" => self.demo.reduced_channels = parse_value(key, raw, line)?,
            "demo.fused_channels" => self.demo.fused_channels = parse_value(key, raw, line)?,
            "demo.head_hidden" => self.demo.head_hidden = parse_value(key, raw, line)?,
            "demo.motion" => self.demo.motion = parse_value(key, raw, line)?,
            "demo.weights_dir" => self.demo.weights_dir = optional_path(raw),
            "demo.export_weights" => self.demo.export_weights = optional_path(raw),
            _ => return Err(CliError::Usage(format!("config line {line}: unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {line}: expected key = value, got {content:?}")))?;
            self.set(key.trim(), value, line)?;
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.alpha {
            self.alpha = v;
        }
        if let Some(v) = o.beta {
            self.beta = v;
        }
        if let Some(v) = o.frames {
            self.frames = v;
        }
        if let Some(v) = o.threshold {
            self.threshold = v;
        }
    }

    /// Defaults, then `file`, then `overrides`, then validation.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        cfg.apply_overrides(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.frames < 2 {
            return usage(format!("frames must be at least 2, got {}", self.frames));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return usage(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return usage(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !self.threshold.is_finite() {
            return usage(format!("threshold must be finite, got {}", self.threshold));
        }
        if let Err(e) = self.real.validate() {
            return usage(format!("real scene: {e}"));
        }
        let rotated = AttackScene {
            theta: self.rotation_theta,
            ..self.attack
        };
        if let Err(e) = rotated.validate() {
            return usage(format!("attack scene: {e}"));
        }
        if self.dv_schedule.iter().any(|v| !v.is_finite()) {
            return usage("replay.dv_schedule must be finite".into());
        }
        let d = &self.demo;
        if d.backbone_channels == 0 || d.reduced_channels == 0 || d.fused_channels == 0 || d.head_hidden == 0 {
            return usage("demo channel counts must be positive".into());
        }
        if !d.motion.is_finite() {
            return usage(format!("demo.motion must be finite, got {}", d.motion));
        }
        Ok(())
    }
}
