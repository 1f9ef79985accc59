//! Run settings from a flat `key = value` file, overridable from the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DecodeMode, TaskConfig, TaskPreset};

pub const DEFAULT_MAX_SIDE: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub task: TaskConfig,
    pub workers: usize,
    /// Repeats per image; only meaningful with sampled decoding.
    pub trials: usize,
    pub max_side: usize,
    pub templates: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            task: TaskConfig::default(),
            workers: 1,
            trials: 1,
            max_side: DEFAULT_MAX_SIDE,
            templates: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value '{value}' for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean '{value}' for {key}"))),
    }
}

impl RunSettings {
    /// Sets one key. `preset` replaces the whole task config, so it should
    /// come before other task keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.task;
        match key.trim().replace('-', "_").as_str() {
            "preset" => {
                let preset: TaskPreset = value.parse()?;
                *t = TaskConfig {
                    seed: t.seed,
                    ..TaskConfig::preset(preset)
                };
            }
            "task_prompt" | "generic_prompt" => t.generic_prompt = value.to_string(),
            "iterations" => t.iterations = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            "blend_weight" => t.blend_weight = parse(key, value)?,
            "patch_strategy" => t.patch_strategy = value.parse()?,
            "binarize_threshold" => t.binarize_threshold = parse(key, value)?,
            "seed" => {
                t.seed = parse(key, value)?;
                if let DecodeMode::Sampled { .. } = t.decode_mode {
                    t.decode_mode = DecodeMode::Sampled { seed: t.seed };
                }
            }
            "decode" => {
                t.decode_mode = match value {
                    "greedy" => DecodeMode::Greedy,
                    "sampled" => DecodeMode::Sampled { seed: t.seed },
                    other => return Err(Error::Config(format!("unknown decode mode '{other}'"))),
                }
            }
            "fusion" => t.fusion = value.parse()?,
            "visual_marker" => t.visual_marker = value.parse()?,
            "patch_vcr" => t.patch_vcr = parse_bool(key, value)?,
            "timing" | "record_timing" => t.record_timing = parse_bool(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "max_side" => self.max_side = parse(key, value)?,
            "templates" => self.templates = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        s.apply_text(text)?;
        Ok(s)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        if self.workers == 0 || self.trials == 0 || self.max_side < 2 {
            return Err(Error::Config(
                "workers and trials must be >= 1 and max_side >= 2".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PatchStrategy;

    #[test]
    fn file_then_override() {
        let mut s = RunSettings::parse(
            "# polyp run\npreset = polyp\nalpha = 0.5   # weaker contrast\npatch-strategy = original\nworkers = 4\n",
        )
        .unwrap();
        assert_eq!(s.task.iterations, 6);
        assert_eq!(s.task.generic_prompt, "polyp");
        assert_eq!(s.task.alpha, 0.5);
        assert_eq!(s.task.patch_strategy, PatchStrategy::Original);
        s.set("iterations", "2").unwrap();
        assert_eq!(s.task.iterations, 2);
        assert_eq!(s.workers, 4);
        s.validate().unwrap();
    }

    #[test]
    fn bad_keys_and_values() {
        assert!(RunSettings::parse("colour = red").is_err());
        assert!(RunSettings::parse("alpha = lots").is_err());
        assert!(RunSettings::parse("just words").is_err());
        let s = RunSettings::parse("blend_weight = 2").unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn sampled_decoding_follows_seed() {
        let s = RunSettings::parse("decode = sampled\nseed = 9").unwrap();
        assert_eq!(s.task.decode_mode, DecodeMode::Sampled { seed: 9 });
    }
}
