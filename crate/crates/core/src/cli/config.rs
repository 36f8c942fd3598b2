//! Flat dotted-key configuration. Files are TOML (`scheme.T = 1.0` or
//! `[scheme]` tables); every key is checked against [`SCHEMA`] and unknown
//! keys are rejected. Command-line `--set key=value` pairs override the file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    ConvergenceSpace,
    ConvergenceTime,
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::ConvergenceSpace => "convergence-space",
            Self::ConvergenceTime => "convergence-time",
            Self::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    UInt(u64),
    Float(f64),
    Bool(bool),
    List(Vec<u64>),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    UInt,
    Bool,
    Str,
    UIntList,
}

struct Key {
    name: &'static str,
    kind: Kind,
    default: fn(Command) -> ConfigValue,
}

use ConfigValue as V;

fn ladder(from: u32, to: u32) -> ConfigValue {
    V::List((from..=to).map(|e| 1u64 << e).collect())
}

const SCHEMA: &[Key] = &[
    Key { name: "scheme.T", kind: Kind::Float, default: |_| V::Float(1.0) },
    Key {
        name: "scheme.N",
        kind: Kind::UInt,
        default: |c| V::UInt(if c == Command::Validate { 500 } else { 100 }),
    },
    Key { name: "scheme.n_cells", kind: Kind::UInt, default: |_| V::UInt(64) },
    Key { name: "scheme.f", kind: Kind::Str, default: |_| V::Str("identity".into()) },
    Key { name: "scheme.v0", kind: Kind::Str, default: |_| V::Str("2:1".into()) },
    Key {
        name: "noise.s",
        kind: Kind::Float,
        default: |c| V::Float(if c == Command::ConvergenceTime { 0.0005 } else { 0.5005 }),
    },
    Key { name: "noise.J", kind: Kind::UInt, default: |_| V::UInt(0) },
    Key {
        name: "noise.seed",
        kind: Kind::UInt,
        default: |c| {
            V::UInt(match c {
                Command::ConvergenceSpace => 20250101,
                Command::ConvergenceTime => 20250102,
                _ => 1,
            })
        },
    },
    Key { name: "noise.enabled", kind: Kind::Bool, default: |_| V::Bool(true) },
    Key {
        name: "study.beta",
        kind: Kind::Float,
        default: |c| V::Float(if c == Command::ConvergenceTime { 0.5 } else { 1.0 }),
    },
    Key {
        name: "study.ladder",
        kind: Kind::UIntList,
        default: |c| if c == Command::ConvergenceTime { ladder(6, 12) } else { ladder(3, 7) },
    },
    Key {
        name: "study.reference",
        kind: Kind::UInt,
        default: |c| V::UInt(if c == Command::ConvergenceTime { 1 << 16 } else { 1024 }),
    },
    Key {
        name: "study.samples",
        kind: Kind::UInt,
        default: |c| {
            V::UInt(match c {
                Command::ConvergenceTime => 100,
                Command::Validate => 10_000,
                _ => 1000,
            })
        },
    },
    Key { name: "study.coupled", kind: Kind::Bool, default: |_| V::Bool(true) },
    Key { name: "study.component", kind: Kind::Str, default: |_| V::Str("u".into()) },
    Key { name: "output.dir", kind: Kind::Str, default: |_| V::Str("out".into()) },
    Key { name: "output.full_path", kind: Kind::Bool, default: |_| V::Bool(false) },
    Key { name: "output.timing", kind: Kind::Bool, default: |_| V::Bool(false) },
];

/// Keys that each command reads; others are accepted but not echoed.
fn relevant(cmd: Command, key: &str) -> bool {
    // the output location never changes results
    if key == "output.dir" {
        return false;
    }
    let section = key.split('.').next().unwrap_or("");
    match cmd {
        Command::Simulate => !matches!(section, "study"),
        Command::ConvergenceSpace => key != "scheme.n_cells" && key != "output.full_path",
        Command::ConvergenceTime => key != "output.full_path",
        Command::Validate => {
            matches!(key, "noise.s" | "noise.J" | "noise.seed" | "study.beta" | "study.samples" | "scheme.N" | "output.timing")
        }
    }
}

fn schema_kind(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|k| k.name == key).map(|k| k.kind)
}

/// Explicitly set configuration values, before defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, ConfigValue>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn coerce(key: &str, kind: Kind, v: &toml::Value) -> Result<ConfigValue, CliError> {
    let bad = || CliError::Config(format!("key `{key}` expects {kind:?}, got `{v}`"));
    Ok(match (kind, v) {
        (Kind::Float, toml::Value::Float(f)) => V::Float(*f),
        (Kind::Float, toml::Value::Integer(i)) => V::Float(*i as f64),
        (Kind::UInt, toml::Value::Integer(i)) if *i >= 0 => V::UInt(*i as u64),
        (Kind::Bool, toml::Value::Boolean(b)) => V::Bool(*b),
        (Kind::Str, toml::Value::String(s)) => V::Str(s.clone()),
        (Kind::UIntList, toml::Value::Array(a)) => V::List(
            a.iter()
                .map(|x| match x {
                    toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                    _ => Err(bad()),
                })
                .collect::<Result<_, _>>()?,
        ),
        _ => return Err(bad()),
    })
}

fn parse_text(key: &str, kind: Kind, raw: &str) -> Result<ConfigValue, CliError> {
    let bad = || CliError::Config(format!("key `{key}` expects {kind:?}, got `{raw}`"));
    let raw = raw.trim();
    Ok(match kind {
        Kind::Float => V::Float(raw.parse().map_err(|_| bad())?),
        Kind::UInt => V::UInt(raw.parse().map_err(|_| bad())?),
        Kind::Bool => V::Bool(raw.parse().map_err(|_| bad())?),
        Kind::Str => V::Str(raw.to_string()),
        Kind::UIntList => V::List(
            raw.trim_start_matches('[')
                .trim_end_matches(']')
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?,
        ),
    })
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut cfg = Self::default();
        for (key, v) in flat {
            let kind = schema_kind(&key).ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
            cfg.values.insert(key.clone(), coerce(&key, kind, &v)?);
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Applies `key=value`.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{assignment}`")))?;
        let key = key.trim();
        let kind = schema_kind(key).ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
        self.values.insert(key.to_string(), parse_text(key, kind, raw)?);
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: ConfigValue) -> Result<(), CliError> {
        if schema_kind(key).is_none() {
            return Err(CliError::Config(format!("unknown config key `{key}`")));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&ConfigValue> {
        self.values.get(key)
    }

    /// Fills defaults for `cmd` and keeps only the keys it uses.
    pub fn resolve(&self, cmd: Command) -> ResolvedConfig {
        let values = SCHEMA
            .iter()
            .filter(|k| relevant(cmd, k.name))
            .map(|k| (k.name.to_string(), self.values.get(k.name).cloned().unwrap_or_else(|| (k.default)(cmd))))
            .collect();
        ResolvedConfig { values }
    }
}

/// Complete configuration for one command, echoed into result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResolvedConfig {
    values: BTreeMap<String, ConfigValue>,
}

impl ResolvedConfig {
    fn raw(&self, key: &str) -> Result<&ConfigValue, CliError> {
        self.values.get(key).ok_or_else(|| CliError::Config(format!("key `{key}` not available here")))
    }

    pub fn float(&self, key: &str) -> Result<f64, CliError> {
        match self.raw(key)? {
            V::Float(f) => Ok(*f),
            V::UInt(u) => Ok(*u as f64),
            other => Err(CliError::Config(format!("key `{key}` is not a number: {other:?}"))),
        }
    }

    pub fn uint(&self, key: &str) -> Result<u64, CliError> {
        match self.raw(key)? {
            V::UInt(u) => Ok(*u),
            other => Err(CliError::Config(format!("key `{key}` is not an unsigned integer: {other:?}"))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        usize::try_from(self.uint(key)?).map_err(|_| CliError::Config(format!("key `{key}` is too large")))
    }

    pub fn boolean(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key)? {
            V::Bool(b) => Ok(*b),
            other => Err(CliError::Config(format!("key `{key}` is not a boolean: {other:?}"))),
        }
    }

    pub fn string(&self, key: &str) -> Result<&str, CliError> {
        match self.raw(key)? {
            V::Str(s) => Ok(s),
            other => Err(CliError::Config(format!("key `{key}` is not a string: {other:?}"))),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        match self.raw(key)? {
            V::List(l) => Ok(l.iter().map(|&x| x as usize).collect()),
            other => Err(CliError::Config(format!("key `{key}` is not a list: {other:?}"))),
        }
    }

    pub fn set_value(&mut self, key: &str, value: ConfigValue) {
        self.values.insert(key.to_string(), value);
    }
}
