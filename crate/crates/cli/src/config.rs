//! Run configuration: one JSON document plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lsq::backtest::BacktestConfig;
use lsq::compare::CompareConfig;
use lsq::ensemble::{EnsembleSpec, VoteMode};
use lsq::market_data::BarSchema;
use lsq::FactorRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub n_quantiles: usize,
    pub horizons: Vec<usize>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            n_quantiles: 5,
            horizons: vec![1, 5, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// OHLCV file. Relative paths are taken from the config file's folder.
    pub bars: PathBuf,
    #[serde(default)]
    pub fundamentals: Option<PathBuf>,
    #[serde(default)]
    pub schema: BarSchema,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Root seed; copied into every seeded component.
    #[serde(default)]
    pub seed: u64,
    /// Ensemble preset, used unless `ensemble` is given.
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub vote_mode: Option<VoteMode>,
    /// Subset of the default factor registry; all factors when absent.
    #[serde(default)]
    pub factors: Option<Vec<String>>,
    #[serde(default)]
    pub backtest: BacktestConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

fn default_preset() -> String {
    "best".into()
}

impl RunConfig {
    /// A config for `bars` with every default.
    pub fn for_data(bars: impl Into<PathBuf>, fundamentals: Option<PathBuf>) -> Self {
        RunConfig {
            bars: bars.into(),
            fundamentals,
            schema: BarSchema::default(),
            output_dir: default_output_dir(),
            seed: 0,
            preset: default_preset(),
            ensemble: None,
            vote_mode: None,
            factors: None,
            backtest: BacktestConfig::default(),
            compare: CompareConfig::default(),
            analyze: AnalyzeConfig::default(),
        }
    }

    /// Reads `path`, applies `overrides` (`a.b.c=value`, value parsed as
    /// JSON and otherwise taken as a string), then checks the schema.
    /// Relative paths in the document are resolved against its folder.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut doc: Value =
            serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
            let at = e.path().to_string();
            anyhow::anyhow!("config {}: at `{at}`: {}", path.display(), e.into_inner())
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.finish()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.bars);
        if let Some(f) = self.fundamentals.as_mut() {
            fix(f);
        }
        fix(&mut self.output_dir);
    }

    /// Propagates the root seed and validates the parts.
    pub fn finish(&mut self) -> Result<()> {
        if self.backtest.seed != 0 && self.backtest.seed != self.seed {
            bail!("set the root `seed` rather than `backtest.seed`");
        }
        self.backtest.seed = self.seed;
        self.compare.seed = self.seed;
        self.backtest.validate().context("backtest section")?;
        self.ensemble_spec()?.validate().context("ensemble")?;
        self.registry()?;
        if self.analyze.n_quantiles < 2 || self.analyze.horizons.is_empty() {
            bail!("analyze needs at least 2 quantiles and one horizon");
        }
        Ok(())
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let mut spec = match &self.ensemble {
            Some(s) => s.clone(),
            None => EnsembleSpec::preset(&self.preset)?,
        };
        if let Some(m) = self.vote_mode {
            spec.mode = m;
        }
        Ok(spec)
    }

    pub fn registry(&self) -> Result<FactorRegistry> {
        let all = FactorRegistry::default();
        Ok(match &self.factors {
            None => all,
            Some(names) => {
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                all.subset(&names)?
            }
        })
    }
}

/// `backtest.window=120` sets `{"backtest": {"window": 120}}`.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .with_context(|| format!("override `{spec}` is not of the form key=value"))?;
    if key.is_empty() {
        bail!("override `{spec}` has an empty key");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            bail!("override `{key}`: `{}` is not an object", parts[..i].join("."));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields a part")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.json");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"bars": "b.csv", "backtest": {"windw": 3}}"#);
        let msg = format!("{:#}", RunConfig::load(&p, &[]).unwrap_err());
        assert!(msg.contains("backtest"), "{msg}");
        assert!(msg.contains("windw"), "{msg}");
    }

    #[test]
    fn overrides_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"bars": "data/b.csv", "seed": 4}"#);
        let cfg = RunConfig::load(&p, &["backtest.window=120".into(), "preset=ensemble1".into()]).unwrap();
        assert_eq!(cfg.backtest.window, 120);
        assert_eq!(cfg.backtest.seed, 4);
        assert_eq!(cfg.preset, "ensemble1");
        assert_eq!(cfg.bars, dir.path().join("data/b.csv"));
    }

    #[test]
    fn bad_override_and_bad_preset() {
        let mut v: Value = serde_json::json!({"a": 1});
        assert!(apply_override(&mut v, "a.b=2").is_err());
        assert!(apply_override(&mut v, "noequals").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"bars": "b.csv", "preset": "nope"}"#);
        assert!(RunConfig::load(&p, &[]).is_err());
    }
}
