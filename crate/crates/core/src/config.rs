//! Run configuration: named presets plus a flat `key = value` text format.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment            (also allowed after a value)
//! key = value
//! ```
//!
//! Blank lines are ignored, keys are case-sensitive, and unknown keys are
//! errors. Layers are merged key by key, later layers winning; the
//! resolved configuration is then built by applying keys in a fixed order
//! on top of the chosen preset.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::datagen::{DataKind, SyntheticSpec};
use crate::divergence::{LogBackend, ELEMENTWISE_EPS};
use crate::trainer::{CeReduction, CplMapping, Schedule, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub const PRESETS: [&str; 6] = ["default", "paper-literal", "supervised-mce", "ce-baseline", "cpl", "pseudo-label"];

/// Every accepted key, in the order they are applied and written.
pub const KEYS: [&str; 34] = [
    "preset",
    "seed",
    "steps",
    "eval_interval",
    "lr",
    "momentum",
    "weight_decay",
    "schedule",
    "mu_u",
    "gamma_u",
    "gamma_s",
    "tau",
    "labeled_batch",
    "unlabeled_ratio",
    "ce_reduction",
    "cpl",
    "cpl_mapping",
    "cpl_warmup",
    "log_backend",
    "elementwise_eps",
    "ridge_lambda",
    "hidden",
    "weak_sigma",
    "strong_sigma",
    "strong_dropout",
    "data.kind",
    "data.k",
    "data.d",
    "data.n_labeled",
    "data.n_unlabeled",
    "data.n_test",
    "data.separation",
    "data.noise",
    "data.seed",
];

fn is_key(k: &str) -> bool {
    KEYS.contains(&k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub train: TrainConfig,
    pub data: SyntheticSpec,
}

/// The default synthetic experiment: three Gaussian blobs in 16 dimensions.
pub fn default_data() -> SyntheticSpec {
    SyntheticSpec {
        kind: DataKind::GaussianBlobs,
        k: 3,
        d: 16,
        n_labeled: 12,
        n_unlabeled: 2000,
        n_test: 600,
        class_separation: 4.0,
        noise: 1.0,
        seed: 2024,
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let base = TrainConfig::default();
        let train = match name {
            "default" => base,
            "paper-literal" => TrainConfig { mu_u: 3e-3, gamma_u: 1.0, ..base },
            "supervised-mce" => TrainConfig { mu_u: 0.0, gamma_u: 0.0, gamma_s: 0.1, ..base },
            "ce-baseline" => TrainConfig { mu_u: 0.0, gamma_u: 0.0, gamma_s: 0.0, ..base },
            "cpl" => TrainConfig { cpl_enabled: true, ..base },
            "pseudo-label" => TrainConfig { gamma_u: 0.0, ..base },
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Ok(Self { preset: name.to_string(), train, data: default_data() })
    }

    /// Builds a configuration from layers of overrides, lowest precedence
    /// first. The preset is taken from the highest layer naming one.
    pub fn resolve(layers: &[BTreeMap<String, String>]) -> Result<Self, ConfigError> {
        let mut merged = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer {
                if !is_key(k) {
                    return Err(ConfigError::UnknownKey(k.clone()));
                }
                merged.insert(k.clone(), v.clone());
            }
        }
        let mut cfg = Self::preset(merged.get("preset").map_or("default", String::as_str))?;
        for key in KEYS.into_iter().skip(1) {
            if let Some(v) = merged.get(key) {
                cfg.set(key, v)?;
            }
        }
        cfg.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.data.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.into() };
        let f = || value.parse::<f64>().map_err(|_| bad("expected a number"));
        let u = || value.parse::<usize>().map_err(|_| bad("expected a non-negative integer"));
        let b = || match value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad("expected true or false")),
        };
        let t = &mut self.train;
        match key {
            "seed" => t.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
            "steps" => t.total_steps = u()?,
            "eval_interval" => t.eval_interval = u()?,
            "lr" => t.lr = f()?,
            "momentum" => t.momentum = f()?,
            "weight_decay" => t.weight_decay = f()?,
            "schedule" => {
                t.schedule = match value {
                    "cosine" => Schedule::Cosine,
                    "constant" => Schedule::Constant,
                    _ => return Err(bad("expected cosine or constant")),
                }
            }
            "mu_u" => t.mu_u = f()?,
            "gamma_u" => t.gamma_u = f()?,
            "gamma_s" => t.gamma_s = f()?,
            "tau" => t.tau = f()?,
            "labeled_batch" => t.labeled_batch = u()?,
            "unlabeled_ratio" => t.unlabeled_ratio = u()?,
            "ce_reduction" => {
                t.ce_reduction = match value {
                    "mean" => CeReduction::Mean,
                    "sum" => CeReduction::Sum,
                    _ => return Err(bad("expected mean or sum")),
                }
            }
            "cpl" => t.cpl_enabled = b()?,
            "cpl_mapping" => {
                t.cpl_mapping = match value {
                    "convex" => CplMapping::Convex,
                    "linear" => CplMapping::Linear,
                    _ => return Err(bad("expected convex or linear")),
                }
            }
            "cpl_warmup" => t.cpl_warmup = b()?,
            "log_backend" => {
                t.mce.log_backend =
                    parse_backend(value).ok_or_else(|| bad("expected principal, taylorK or elementwise"))?
            }
            "elementwise_eps" => match t.mce.log_backend {
                LogBackend::ElementWise(_) => t.mce.log_backend = LogBackend::ElementWise(f()?),
                _ => return Err(bad("only meaningful with log_backend = elementwise")),
            },
            "ridge_lambda" => t.mce.ridge_lambda = f()?,
            "hidden" => {
                t.hidden = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().ok().filter(|&n| n > 0))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| bad("expected a comma-separated list of positive widths"))?
                }
            }
            "weak_sigma" => t.weak_sigma = f()?,
            "strong_sigma" => t.strong_sigma = f()?,
            "strong_dropout" => t.strong_dropout = f()?,
            "data.kind" => {
                self.data.kind = DataKind::parse(value).ok_or_else(|| bad("expected blobs, moons or rings"))?
            }
            "data.k" => self.data.k = u()?,
            "data.d" => self.data.d = u()?,
            "data.n_labeled" => self.data.n_labeled = u()?,
            "data.n_unlabeled" => self.data.n_unlabeled = u()?,
            "data.n_test" => self.data.n_test = u()?,
            "data.separation" => self.data.class_separation = f()?,
            "data.noise" => self.data.noise = f()?,
            "data.seed" => self.data.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let d = &self.data;
        let f = |x: f64| format!("{x:?}");
        KEYS.into_iter()
            .filter_map(|k| {
                let v = match k {
                    "preset" => self.preset.clone(),
                    "seed" => t.seed.to_string(),
                    "steps" => t.total_steps.to_string(),
                    "eval_interval" => t.eval_interval.to_string(),
                    "lr" => f(t.lr),
                    "momentum" => f(t.momentum),
                    "weight_decay" => f(t.weight_decay),
                    "schedule" => match t.schedule {
                        Schedule::Cosine => "cosine".into(),
                        Schedule::Constant => "constant".into(),
                    },
                    "mu_u" => f(t.mu_u),
                    "gamma_u" => f(t.gamma_u),
                    "gamma_s" => f(t.gamma_s),
                    "tau" => f(t.tau),
                    "labeled_batch" => t.labeled_batch.to_string(),
                    "unlabeled_ratio" => t.unlabeled_ratio.to_string(),
                    "ce_reduction" => match t.ce_reduction {
                        CeReduction::Mean => "mean".into(),
                        CeReduction::Sum => "sum".into(),
                    },
                    "cpl" => t.cpl_enabled.to_string(),
                    "cpl_mapping" => match t.cpl_mapping {
                        CplMapping::Convex => "convex".into(),
                        CplMapping::Linear => "linear".into(),
                    },
                    "cpl_warmup" => t.cpl_warmup.to_string(),
                    "log_backend" => backend_name(t.mce.log_backend),
                    "elementwise_eps" => match t.mce.log_backend {
                        LogBackend::ElementWise(eps) => f(eps),
                        _ => return None,
                    },
                    "ridge_lambda" => f(t.mce.ridge_lambda),
                    "hidden" => t.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
                    "weak_sigma" => f(t.weak_sigma),
                    "strong_sigma" => f(t.strong_sigma),
                    "strong_dropout" => f(t.strong_dropout),
                    "data.kind" => d.kind.name().into(),
                    "data.k" => d.k.to_string(),
                    "data.d" => d.d.to_string(),
                    "data.n_labeled" => d.n_labeled.to_string(),
                    "data.n_unlabeled" => d.n_unlabeled.to_string(),
                    "data.n_test" => d.n_test.to_string(),
                    "data.separation" => f(d.class_separation),
                    "data.noise" => f(d.noise),
                    "data.seed" => d.seed.to_string(),
                    _ => unreachable!("key list and match arms agree"),
                };
                Some((k, v))
            })
            .collect()
    }

    /// The resolved snapshot in the same text format it is parsed from.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries().into_iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v))).collect(),
        )
    }
}

pub fn parse_backend(s: &str) -> Option<LogBackend> {
    match s {
        "principal" => Some(LogBackend::Principal),
        "elementwise" => Some(LogBackend::ElementWise(ELEMENTWISE_EPS)),
        _ => s.strip_prefix("taylor")?.parse().ok().filter(|&k| k >= 1).map(LogBackend::Taylor),
    }
}

pub fn backend_name(b: LogBackend) -> String {
    match b {
        LogBackend::Principal => "principal".into(),
        LogBackend::Taylor(k) => format!("taylor{k}"),
        LogBackend::ElementWise(_) => "elementwise".into(),
    }
}

/// Parses the text format into a key/value layer. Later duplicates win.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: n + 1, text: raw.into() })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: n + 1, text: raw.into() });
        }
        if !is_key(k) {
            return Err(ConfigError::UnknownKey(k.into()));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn presets_resolve() {
        for p in PRESETS {
            let c = RunConfig::resolve(&[layer(&[("preset", p)])]).unwrap();
            assert_eq!(c.preset, p);
        }
        let lit = RunConfig::preset("paper-literal").unwrap();
        assert_eq!((lit.train.mu_u, lit.train.gamma_u), (3e-3, 1.0));
        assert!(matches!(RunConfig::preset("nope"), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn later_layers_win() {
        let file = parse_text("preset = ce-baseline\nseed = 3 # file\nlr=0.1\n").unwrap();
        let flags = layer(&[("seed", "9")]);
        let c = RunConfig::resolve(&[file, flags]).unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.lr, 0.1);
        assert_eq!(c.train.mu_u, 0.0);
        let c = RunConfig::resolve(&[layer(&[("preset", "ce-baseline")]), layer(&[("preset", "cpl")])]).unwrap();
        assert!(c.train.cpl_enabled);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert_eq!(parse_text("colour = red"), Err(ConfigError::UnknownKey("colour".into())));
        assert!(matches!(parse_text("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::resolve(&[layer(&[("lr", "fast")])]), Err(ConfigError::BadValue { .. })));
        assert!(matches!(RunConfig::resolve(&[layer(&[("tau", "1.5")])]), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::resolve(&[layer(&[("data.kind", "moons")])]), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            RunConfig::resolve(&[layer(&[("elementwise_eps", "1e-6")])]),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn backends_parse() {
        assert_eq!(parse_backend("taylor3"), Some(LogBackend::Taylor(3)));
        assert_eq!(parse_backend("taylor12"), Some(LogBackend::Taylor(12)));
        assert_eq!(parse_backend("taylor0"), None);
        assert_eq!(parse_backend("principal"), Some(LogBackend::Principal));
        let c = RunConfig::resolve(&[layer(&[("log_backend", "elementwise"), ("elementwise_eps", "1e-5")])]).unwrap();
        assert_eq!(c.train.mce.log_backend, LogBackend::ElementWise(1e-5));
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::resolve(&[layer(&[
            ("preset", "cpl"),
            ("hidden", "32"),
            ("log_backend", "elementwise"),
            ("lr", "0.1"),
            ("data.separation", "3.25"),
        ])])
        .unwrap();
        let again = RunConfig::resolve(&[parse_text(&c.to_text()).unwrap()]).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.to_json()["hidden"], "32");
    }
}
