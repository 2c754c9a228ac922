//! Flat key/value configuration files. Keys mirror the CLI flag names; a
//! flag given on the command line always overrides the file.
//!
//! ```text
//! # lines starting with # are comments
//! low = 3
//! high = 45
//! taps = 601
//! scheme = cascade
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::preprocess::FilterSpec;
use crate::qrs::DualSlopeParams;
use crate::segment::SegmentConfig;
use crate::train::TrainConfig;

/// Every knob of a training or evaluation run, serialized as the JSON
/// sidecar next to each checkpoint so later commands can reproduce the
/// exact split and segmentation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub filter: FilterSpec,
    pub detector: DualSlopeParams,
    pub segmenter: SegmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub max_len: usize,
    pub fs: f64,
}

impl PipelineConfig {
    pub fn default_for(scheme: crate::model::Scheme) -> Self {
        PipelineConfig {
            filter: FilterSpec::default(),
            detector: DualSlopeParams::default(),
            segmenter: SegmentConfig::default(),
            model: ModelConfig::new(scheme),
            train: TrainConfig::default(),
            max_len: 9000,
            fs: 300.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.detector.validate()?;
        self.segmenter.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.fs <= 0.0 {
            return Err(Error::InvalidConfig("fs must be positive".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("config serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected `key = value`"))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

/// Flag value if given, else config-file value, else the default.
pub fn resolve<T: std::str::FromStr + Copy>(
    flag: Option<T>,
    file: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(file.get(key)?.unwrap_or(default))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_with_precedence() {
        let file = ConfigFile::parse("# comment\nlow = 5\ntaps = 301\n", Path::new("test.cfg")).unwrap();
        // flag beats file beats default
        assert_eq!(resolve(Some(7.0), &file, "low", 3.0).unwrap(), 7.0);
        assert_eq!(resolve(None::<f64>, &file, "low", 3.0).unwrap(), 5.0);
        assert_eq!(resolve(None::<f64>, &file, "high", 45.0).unwrap(), 45.0);
        assert_eq!(resolve(None::<usize>, &file, "taps", 601).unwrap(), 301);
    }

    #[test]
    fn rejects_malformed_lines_and_values() {
        assert!(ConfigFile::parse("just words\n", Path::new("c")).is_err());
        let file = ConfigFile::parse("taps = many\n", Path::new("c")).unwrap();
        assert!(file.get::<usize>("taps").is_err());
    }
}
