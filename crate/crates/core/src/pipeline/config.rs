//! Line-oriented `key = value` configuration files.
//!
//! `#` starts a comment, blank lines are ignored, and later keys override
//! earlier ones. Values are parsed on access, so a typo in a number is
//! reported with the line it came from.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::train::{FrontendKind, ModelConfig, TrainConfig};
use crate::decoder::DecoderOptions;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    // key → (value, line)
    values: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            values.insert(k.to_string(), (v.trim().to_string(), i + 1));
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                msg: format!("cannot parse {key} = {v:?}"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| Error::Parse {
                        line: *line,
                        msg: format!("cannot parse list item {s:?} of {key}"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on any key outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.values {
            if !known.contains(&k.as_str()) {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("unknown key {k:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, (v, _))| format!("{k} = {v}\n")).collect()
    }
}

/// Keys read by [`model_config`], [`train_config`] and [`decoder_options`].
pub const KNOWN_KEYS: &[&str] = &[
    "frontend",
    "num_filters",
    "filter_width_ms",
    "lowpass_width_ms",
    "stride_ms",
    "channels",
    "kernel_width",
    "dropout",
    "epochs",
    "lr",
    "momentum",
    "clip",
    "batch_size",
    "patience",
    "seed",
    "alpha",
    "beta",
    "gamma",
    "beam_size",
    "beam_score",
    "normalize_emissions",
];

/// Model architecture, starting from the small synthetic-task configuration.
pub fn model_config(c: &Config) -> Result<ModelConfig> {
    let frontend: FrontendKind = c.get_or("frontend", FrontendKind::Learnable)?;
    let mut m = ModelConfig::small(frontend);
    let fc = &mut m.frontend_config;
    fc.num_filters = c.get_or("num_filters", fc.num_filters)?;
    fc.filter_width_ms = c.get_or("filter_width_ms", fc.filter_width_ms)?;
    fc.lowpass_width_ms = c.get_or("lowpass_width_ms", fc.lowpass_width_ms)?;
    fc.stride_ms = c.get_or("stride_ms", fc.stride_ms)?;
    if let Some(ch) = c.get_list("channels")? {
        m.channels = ch;
    }
    m.kernel_width = c.get_or("kernel_width", m.kernel_width)?;
    m.dropout = c.get_or("dropout", m.dropout)?;
    m.frontend_config.validate()?;
    m.acoustic(2).validate()?;
    Ok(m)
}

pub fn train_config(c: &Config) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let clip = match c.get_str("clip") {
        Some("none") => None,
        _ => Some(c.get_or("clip", d.clip.unwrap_or(0.2))?),
    };
    Ok(TrainConfig {
        epochs: c.get_or("epochs", d.epochs)?,
        lr: c.get_or("lr", d.lr)?,
        momentum: c.get_or("momentum", d.momentum)?,
        clip,
        batch_size: c.get_or("batch_size", d.batch_size)?,
        patience: c.get_or("patience", d.patience)?,
        seed: c.get_or("seed", d.seed)?,
    })
}

pub fn decoder_options(c: &Config) -> Result<DecoderOptions> {
    let d = DecoderOptions::default();
    let o = DecoderOptions {
        alpha: c.get_or("alpha", d.alpha)?,
        beta: c.get_or("beta", d.beta)?,
        gamma: c.get_or("gamma", d.gamma)?,
        beam_size: c.get_or("beam_size", d.beam_size)?,
        beam_score: c.get_or("beam_score", d.beam_score)?,
        normalize_emissions: c.get_or("normalize_emissions", d.normalize_emissions)?,
        merge: d.merge,
    };
    o.validate()?;
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_comments_and_lists() {
        let c = Config::parse("# training\nlr = 0.5\n\nchannels = 32, 64 # two layers\nfrontend=mel\n").unwrap();
        assert_eq!(c.get::<f64>("lr").unwrap(), Some(0.5));
        assert_eq!(c.get_list::<usize>("channels").unwrap(), Some(vec![32, 64]));
        assert_eq!(c.get_str("frontend"), Some("mel"));
        assert_eq!(c.get_or("epochs", 7usize).unwrap(), 7);
    }

    #[test]
    fn errors_carry_lines() {
        assert!(matches!(Config::parse("a = 1\nnonsense\n"), Err(Error::Parse { line: 2, .. })));
        let c = Config::parse("\nlr = fast\n").unwrap();
        assert!(matches!(c.get::<f64>("lr"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(c.check_keys(&["epochs"]), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn typed_sections() {
        let c = Config::parse("frontend = mel\nchannels = 16,16,16\nepochs = 3\nclip = none\nalpha = 0.7\n").unwrap();
        c.check_keys(KNOWN_KEYS).unwrap();
        let m = model_config(&c).unwrap();
        assert_eq!(m.frontend, FrontendKind::Mel);
        assert_eq!(m.channels, vec![16, 16, 16]);
        let t = train_config(&c).unwrap();
        assert_eq!((t.epochs, t.clip), (3, None));
        assert_eq!(decoder_options(&c).unwrap().alpha, 0.7);
        let bad = Config::parse("frontend = fbank\n").unwrap();
        assert!(model_config(&bad).is_err());
        let bad = Config::parse("beam_size = 0\n").unwrap();
        assert!(decoder_options(&bad).is_err());
    }

    #[test]
    fn round_trip_text() {
        let c = Config::parse("b = 2\na = x y\n").unwrap();
        assert_eq!(Config::parse(&c.to_text()).unwrap().to_text(), c.to_text());
    }
}
