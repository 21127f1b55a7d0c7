//! Model configuration files (TOML or JSON) and `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::levy::{HyperExpJumps, LevyModel, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gamma: f64,
    pub sigma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub phases: Vec<Phase>,
    pub r: f64,
    pub q: f64,
    #[serde(rename = "strike_K")]
    pub strike_k: f64,
    #[serde(default)]
    pub level_y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

/// A parsed config together with the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ModelConfig,
    pub raw: String,
    pub format: Format,
    pub overrides: Vec<(String, f64)>,
}

impl ModelConfig {
    pub fn parse(text: &str, format: Format) -> Result<Self> {
        let cfg: ModelConfig = match format {
            Format::Toml => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            Format::Json => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
        };
        cfg.model()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<LevyModel> {
        LevyModel::new(
            self.gamma,
            self.sigma,
            HyperExpJumps {
                intensity: self.lambda,
                phases: self.phases.clone(),
            },
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn context(&self) -> Result<Context> {
        Context::new(self.model()?, self.r, self.q, self.strike_k).map_err(|e| match e {
            Error::InvalidModel(m) => Error::Config(m),
            other => other,
        })
    }

    /// Sets one scalar key; `phases` cannot be overridden.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "gamma" => self.gamma = value,
            "sigma" => self.sigma = value,
            "lambda" => self.lambda = value,
            "r" => self.r = value,
            "q" => self.q = value,
            "strike_K" => self.strike_k = value,
            "level_y" => self.level_y = Some(value),
            _ => return Err(Error::Config(format!("unknown override key `{key}`"))),
        }
        Ok(())
    }

    pub fn level_y(&self) -> Result<f64> {
        self.level_y
            .ok_or_else(|| Error::Config("level_y is required for this command".into()))
    }
}

/// Parses `k=v,k=v`.
pub fn parse_overrides(spec: &str) -> Result<Vec<(String, f64)>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("override `{kv}`: value is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

impl LoadedConfig {
    pub fn from_text(raw: String, format: Format, overrides: &[(String, f64)]) -> Result<Self> {
        let mut config = ModelConfig::parse(&raw, format)?;
        for (k, v) in overrides {
            config.set(k, *v)?;
        }
        config.model()?;
        Ok(LoadedConfig {
            config,
            raw,
            format,
            overrides: overrides.to_vec(),
        })
    }

    pub fn load(path: &Path, overrides: &[(String, f64)]) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(raw, Format::from_path(path), overrides)
    }

    /// Parsed values, overrides and the verbatim source text.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "parsed": self.config,
            "overrides": self.overrides.iter().map(|(k, v)| serde_json::json!([k, v])).collect::<Vec<_>>(),
            "format": match self.format { Format::Toml => "toml", Format::Json => "json" },
            "source": self.raw,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = "gamma = 0.3\nsigma = 0.2\nlambda = 0.6\nphases = [{ p = 1.0, eta = 1.0 }]\nr = 0.05\nq = 1.0\nstrike_K = 10.0\nlevel_y = 3.0\n";

    #[test]
    fn toml_and_json_agree() {
        let a = ModelConfig::parse(TOML, Format::Toml).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = ModelConfig::parse(&json, Format::Json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.level_y, Some(3.0));
        assert!((a.context().unwrap().psi_1 - 0.02).abs() < 1e-12);
    }

    #[test]
    fn overrides() {
        let o = parse_overrides("level_y=10, r=0.01").unwrap();
        let l = LoadedConfig::from_text(TOML.into(), Format::Toml, &o).unwrap();
        assert_eq!(l.config.level_y, Some(10.0));
        assert_eq!(l.config.r, 0.01);
        assert_eq!(l.echo()["source"], TOML);
        assert!(parse_overrides("r").is_err());
        assert!(LoadedConfig::from_text(TOML.into(), Format::Toml, &[("phases".into(), 1.0)]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ModelConfig::parse("gamma = 0.3", Format::Toml).is_err());
        let bad = TOML.replace("p = 1.0", "p = 0.5");
        assert!(matches!(ModelConfig::parse(&bad, Format::Toml), Err(Error::Config(_))));
        let extra = format!("{TOML}foo = 1\n");
        assert!(ModelConfig::parse(&extra, Format::Toml).is_err());
    }
}
