//! Optional `key = value` configuration file. Command-line flags take precedence.

use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Config {
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub level: Option<String>,
    pub backend: Option<String>,
    pub restarts: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().context("config is not key = value lines")?;
        let mut cfg = Config::default();
        for (key, value) in table {
            match key.as_str() {
                "jobs" => cfg.jobs = Some(uint(&key, &value)? as usize),
                "seed" => cfg.seed = Some(uint(&key, &value)?),
                "restarts" => cfg.restarts = Some(uint(&key, &value)? as usize),
                // levels may be written as 2 or "1+ab"
                "level" => cfg.level = Some(scalar(&value)),
                "backend" => cfg.backend = Some(scalar(&value)),
                other => bail!("unknown config key '{other}'"),
            }
        }
        Ok(cfg)
    }
}

fn uint(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => bail!("'{key}' must be a non-negative integer"),
    }
}

fn scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
