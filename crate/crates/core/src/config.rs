//! Flat `key=value` configuration covering training, outlier synthesis and
//! synthetic data generation.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. An empty
//! file yields the default configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::SynthDataConfig;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub data: SynthDataConfig,
}

/// Every recognized key with a short description, in display order.
pub const KEYS: &[(&str, &str)] = &[
    ("iterations", "training iterations"),
    ("batch_size", "source rows per batch"),
    ("lr_max", "peak learning rate"),
    ("warmup_iters", "linear warmup length"),
    ("weight_decay", "decoupled weight decay"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("epsilon", "Adam denominator floor"),
    ("temperature", "contrastive temperature"),
    ("alpha", "outlier loss weight (0 disables synthesis)"),
    ("sigma", "wrapped Gaussian std"),
    ("seeds_per_batch", "uncertain seeds per batch (auto = 10%)"),
    ("candidates_per_seed", "candidates drawn per seed"),
    ("keep_per_seed", "candidates kept per seed"),
    ("start_iteration", "first iteration with synthesis"),
    ("seed", "training seed"),
    ("view_mode", "two_view | single_view"),
    (
        "jitter_scale",
        "view jitter as a fraction of the feature std",
    ),
    ("embedding_dim", "embedding dimension n"),
    ("objective", "hsup | cross_entropy"),
    (
        "freeze_head_after",
        "iteration after which only class hyperplanes train (none = never)",
    ),
    ("n_classes", "synthetic classes"),
    ("dim", "synthetic feature dimension"),
    ("samples_per_class", "synthetic rows per class"),
    ("class_radius", "radius of the class-mean sphere"),
    ("within_std", "within-class std"),
    ("ood_mode", "shifted_cluster | uniform_shell"),
    ("ood_count", "synthetic OOD rows"),
    ("data_seed", "synthetic data seed"),
];

fn parse<V: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<V> {
    value.parse().map_err(|_| Error::ConfigType {
        key: key.to_string(),
        expected,
        value: value.to_string(),
    })
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>> {
    match value {
        "none" | "auto" => Ok(None),
        v => parse(key, v, "non-negative integer or `none`").map(Some),
    }
}

impl Config {
    /// Applies one pair. Returns `Ok(false)` for an unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        const INT: &str = "non-negative integer";
        const REAL: &str = "real number";
        let t = &mut self.train;
        let d = &mut self.data;
        match key {
            "iterations" => t.iterations = parse(key, value, INT)?,
            "batch_size" => t.batch_size = parse(key, value, INT)?,
            "lr_max" => t.lr_max = parse(key, value, REAL)?,
            "warmup_iters" => t.warmup_iters = parse(key, value, INT)?,
            "weight_decay" => t.weight_decay = parse(key, value, REAL)?,
            "beta1" => t.betas.0 = parse(key, value, REAL)?,
            "beta2" => t.betas.1 = parse(key, value, REAL)?,
            "epsilon" => t.epsilon = parse(key, value, REAL)?,
            "temperature" => t.loss.temperature = parse(key, value, REAL)?,
            "alpha" => t.loss.alpha = parse(key, value, REAL)?,
            "sigma" => t.outliers.sigma = parse(key, value, REAL)?,
            "seeds_per_batch" => t.outliers.seeds_per_batch = parse_optional(key, value)?,
            "candidates_per_seed" => t.outliers.candidates_per_seed = parse(key, value, INT)?,
            "keep_per_seed" => t.outliers.keep_per_seed = parse(key, value, INT)?,
            "start_iteration" => t.outliers.start_iteration = parse(key, value, INT)?,
            "seed" => t.seed = parse(key, value, INT)?,
            "view_mode" => t.view_mode = parse(key, value, "two_view or single_view")?,
            "jitter_scale" => t.jitter_scale = parse(key, value, REAL)?,
            "embedding_dim" => t.embedding_dim = parse(key, value, INT)?,
            "objective" => t.objective = parse(key, value, "hsup or cross_entropy")?,
            "freeze_head_after" => t.freeze_head_after = parse_optional(key, value)?,
            "n_classes" => d.n_classes = parse(key, value, INT)?,
            "dim" => d.dim = parse(key, value, INT)?,
            "samples_per_class" => d.samples_per_class = parse(key, value, INT)?,
            "class_radius" => d.class_radius = parse(key, value, REAL)?,
            "within_std" => d.within_std = parse(key, value, REAL)?,
            "ood_mode" => d.ood_mode = parse(key, value, "shifted_cluster or uniform_shell")?,
            "ood_count" => d.ood_count = parse(key, value, INT)?,
            "data_seed" => d.seed = parse(key, value, INT)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies pairs in order; unknown keys are collected and reported
    /// together.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        let mut unknown = Vec::new();
        for (k, v) in pairs {
            if !self.set(k, v)? {
                unknown.push(k.to_string());
            }
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownKeys(unknown))
        }
    }

    /// Applies `KEY=VALUE` overrides, e.g. from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let pairs = overrides
            .iter()
            .map(|o| {
                o.as_ref()
                    .split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| Error::ConfigSyntax {
                        line: 0,
                        message: format!("override `{}` is not KEY=VALUE", o.as_ref()),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        self.apply(pairs)
    }

    /// Parses configuration text on top of the defaults, without validating.
    pub fn parse_unvalidated(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: i + 1,
                message: format!("expected KEY=VALUE, found `{line}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::ConfigSyntax {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            pairs.push((k, v));
        }
        let mut cfg = Self::default();
        cfg.apply(pairs)?;
        Ok(cfg)
    }

    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg = Self::parse_unvalidated(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a file, applies `overrides` on top, then validates.
    pub fn load<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::parse_unvalidated(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.data.validate()
    }

    /// The configuration in the same `key=value` format.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let d = &self.data;
        let opt = |o: Option<usize>| o.map_or("none".to_string(), |v| v.to_string());
        let values = [
            t.iterations.to_string(),
            t.batch_size.to_string(),
            t.lr_max.to_string(),
            t.warmup_iters.to_string(),
            t.weight_decay.to_string(),
            t.betas.0.to_string(),
            t.betas.1.to_string(),
            t.epsilon.to_string(),
            t.loss.temperature.to_string(),
            t.loss.alpha.to_string(),
            t.outliers.sigma.to_string(),
            opt(t.outliers.seeds_per_batch),
            t.outliers.candidates_per_seed.to_string(),
            t.outliers.keep_per_seed.to_string(),
            t.outliers.start_iteration.to_string(),
            t.seed.to_string(),
            t.view_mode.to_string(),
            t.jitter_scale.to_string(),
            t.embedding_dim.to_string(),
            t.objective.to_string(),
            opt(t.freeze_head_after),
            d.n_classes.to_string(),
            d.dim.to_string(),
            d.samples_per_class.to_string(),
            d.class_radius.to_string(),
            d.within_std.to_string(),
            d.ood_mode.to_string(),
            d.ood_count.to_string(),
            d.seed.to_string(),
        ];
        let mut s = String::new();
        for ((k, _), v) in KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{Objective, ViewMode};

    #[test]
    fn empty_config_is_default() {
        let cfg = Config::parse("").unwrap();
        let t = &cfg.train;
        assert_eq!(t.loss.alpha, 0.1);
        assert_eq!(t.outliers.sigma, 0.01);
        assert_eq!(t.loss.temperature, 0.1);
        assert_eq!(t.lr_max, 1e-3);
        assert_eq!(t.warmup_iters, 400);
        assert_eq!(t.weight_decay, 0.2);
        assert_eq!(t.outliers.start_iteration, 1000);
        assert_eq!(t.embedding_dim, 128);
        assert_eq!(t.betas, (0.9, 0.98));
        assert_eq!((t.iterations, t.batch_size), (20_000, 256));
    }

    #[test]
    fn parses_pairs_and_comments() {
        let cfg = Config::parse(
            "# desk run\niterations = 2000\nbatch_size=64 # small\n\nalpha=0\nview_mode=single_view\nobjective=cross_entropy\nfreeze_head_after=1500\nood_mode=uniform_shell\n",
        )
        .unwrap();
        assert_eq!(cfg.train.iterations, 2000);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.loss.alpha, 0.0);
        assert_eq!(cfg.train.view_mode, ViewMode::SingleView);
        assert_eq!(cfg.train.objective, Objective::CrossEntropy);
        assert_eq!(cfg.train.freeze_head_after, Some(1500));
        assert_eq!(cfg.data.ood_mode, crate::data::OodMode::UniformShell);
    }

    #[test]
    fn errors() {
        let err = Config::parse("sigma=-1").unwrap_err();
        assert!(matches!(err, Error::ConfigValue(_)));
        let err = Config::parse("bogus=1\nalpha=0\nother=2").unwrap_err();
        match err {
            Error::UnknownKeys(k) => assert_eq!(k, vec!["bogus", "other"]),
            e => panic!("unexpected {e}"),
        }
        let err = Config::parse("iterations=many").unwrap_err();
        match err {
            Error::ConfigType { key, expected, .. } => {
                assert_eq!(key, "iterations");
                assert_eq!(expected, "non-negative integer");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            Config::parse("alpha 0.1"),
            Err(Error::ConfigSyntax { line: 1, .. })
        ));
        assert!(matches!(
            Config::parse("warmup_iters=5000\niterations=100"),
            Err(Error::ConfigValue(_))
        ));
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "alpha=0.5\nseed=3\n").unwrap();
        let cfg = Config::load(Some(&path), &["alpha=0", "seed = 7"]).unwrap();
        assert_eq!(cfg.train.loss.alpha, 0.0);
        assert_eq!(cfg.train.seed, 7);
        assert!(Config::load(Some(&path), &["alpha"]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = Config::default();
        cfg.apply([
            ("sigma", "0.05"),
            ("freeze_head_after", "10"),
            ("data_seed", "4"),
        ])
        .unwrap();
        let back = Config::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(KEYS.len(), cfg.to_text().lines().count());
    }
}
