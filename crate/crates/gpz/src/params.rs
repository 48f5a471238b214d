//! Parsers for the string-valued command-line parameters.

use std::fmt;
use std::str::FromStr;

use gpz_core::datagen::Dataset;
use gpz_core::micronet::TargetScheme;

/// Target scheme as given on the command line; the prior variant takes the
/// class frequencies of the training set once a dataset is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeSpec {
    OneHot,
    Ls(f64),
    Prior(f64),
}

impl SchemeSpec {
    pub fn resolve(&self, dataset: &Dataset) -> TargetScheme {
        match *self {
            SchemeSpec::OneHot => TargetScheme::OneHot,
            SchemeSpec::Ls(alpha) => TargetScheme::LabelSmoothing { alpha },
            SchemeSpec::Prior(alpha) => TargetScheme::PriorSmoothing {
                alpha,
                prior: dataset.class_prior(),
            },
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            SchemeSpec::OneHot => 0.0,
            SchemeSpec::Ls(a) | SchemeSpec::Prior(a) => a,
        }
    }
}

impl FromStr for SchemeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "onehot" {
            return Ok(SchemeSpec::OneHot);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("unknown scheme `{s}` (onehot, ls:<alpha>, prior:<alpha>)"))?;
        let alpha: f64 = value.parse().map_err(|_| format!("invalid alpha `{value}`"))?;
        if !alpha.is_finite() || alpha >= 1.0 {
            return Err(format!("alpha must be finite and below 1, got {alpha}"));
        }
        match kind {
            "ls" => Ok(SchemeSpec::Ls(alpha)),
            "prior" => Ok(SchemeSpec::Prior(alpha)),
            _ => Err(format!("unknown scheme `{kind}` (onehot, ls:<alpha>, prior:<alpha>)")),
        }
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeSpec::OneHot => f.write_str("onehot"),
            SchemeSpec::Ls(a) => write!(f, "ls:{a}"),
            SchemeSpec::Prior(a) => write!(f, "prior:{a}"),
        }
    }
}

/// Comma-separated widths. `allow_empty` admits `""` for a network without
/// hidden layers.
pub fn parse_widths(s: &str, allow_empty: bool) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if s.is_empty() {
        return if allow_empty {
            Ok(Vec::new())
        } else {
            Err("expected at least one width".into())
        };
    }
    s.split(',')
        .map(|w| match w.trim().parse::<usize>() {
            Ok(0) => Err("widths must be at least 1".to_string()),
            Ok(v) => Ok(v),
            Err(_) => Err(format!("invalid width `{w}`")),
        })
        .collect()
}

pub fn parse_arch(s: &str) -> Result<Vec<usize>, String> {
    parse_widths(s, false)
}

pub fn parse_decoder_arch(s: &str) -> Result<Vec<usize>, String> {
    parse_widths(s, true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelector {
    All,
    List(Vec<usize>),
}

impl LayerSelector {
    pub fn resolve(&self, count: usize) -> Result<Vec<usize>, String> {
        match self {
            LayerSelector::All => Ok((0..count).collect()),
            LayerSelector::List(list) => match list.iter().find(|&&l| l >= count) {
                Some(l) => Err(format!("layer {l} out of range (model has {count} layers)")),
                None => Ok(list.clone()),
            },
        }
    }
}

impl FromStr for LayerSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(LayerSelector::All);
        }
        let list: Vec<usize> = s
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| format!("invalid layer `{v}` (use `all` or a comma list)")))
            .collect::<Result<_, _>>()?;
        let mut sorted = list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != list {
            return Err("layer list must be strictly increasing".into());
        }
        Ok(LayerSelector::List(list))
    }
}
