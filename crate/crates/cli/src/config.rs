//! JSON config files with dotted keys (`"train.epochs": 5`). Nested objects are
//! flattened, so `{"train": {"epochs": 5}}` is equivalent. Command-line flags
//! win over the file; the file wins over built-in defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, v: Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        v => {
            out.insert(prefix.to_string(), v);
        }
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        if !v.is_object() {
            return Err(CliError::Usage(format!("config {} must hold a JSON object", path.display())));
        }
        let mut values = BTreeMap::new();
        flatten("", v, &mut values);
        Ok(Self { values })
    }
}

/// Resolves one command's settings and records the effective values.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    section: &'static str,
    used: BTreeSet<String>,
    pub effective: BTreeMap<String, Value>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile, section: &'static str) -> Self {
        let mut effective = BTreeMap::new();
        effective.insert("command".to_string(), Value::String(section.to_string()));
        Self {
            file,
            section,
            used: BTreeSet::new(),
            effective,
        }
    }

    fn lookup<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        self.used.insert(key.to_string());
        match self.file.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))),
        }
    }

    fn record<T: Serialize>(&mut self, key: String, v: &T) {
        self.used.insert(key.clone());
        self.effective
            .insert(key, serde_json::to_value(v).expect("config values serialize"));
    }

    /// A global (unsectioned) setting such as `seed`.
    pub fn global<T: Serialize + DeserializeOwned>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T, CliError> {
        let v = match cli {
            Some(v) => v,
            None => self.lookup(key)?.unwrap_or(default),
        };
        self.record(key.to_string(), &v);
        Ok(v)
    }

    pub fn opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, cli: Option<T>) -> Result<Option<T>, CliError> {
        let full = format!("{}.{key}", self.section);
        let v = match cli {
            Some(v) => Some(v),
            None => self.lookup(&full)?,
        };
        self.record(full, &v);
        Ok(v)
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T, CliError> {
        let full = format!("{}.{key}", self.section);
        let v = match cli {
            Some(v) => v,
            None => self.lookup(&full)?.unwrap_or(default),
        };
        self.record(full, &v);
        Ok(v)
    }

    pub fn required<T: Serialize + DeserializeOwned>(&mut self, key: &str, cli: Option<T>) -> Result<T, CliError> {
        self.opt(key, cli)?.ok_or_else(|| {
            CliError::Usage(format!(
                "missing `--{}` (or `{}.{key}` in the config file)",
                key.replace('_', "-"),
                self.section
            ))
        })
    }

    /// Boolean switches: set on the command line, or true in the config.
    pub fn flag(&mut self, key: &str, cli: bool) -> Result<bool, CliError> {
        let v = if cli { true } else { self.get(key, None, false)? };
        self.record(format!("{}.{key}", self.section), &v);
        Ok(v)
    }

    /// Rejects config keys of this command that no setting consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        let prefix = format!("{}.", self.section);
        for k in self.file.values.keys() {
            if k.starts_with(&prefix) && !self.used.contains(k) {
                return Err(CliError::Usage(format!("unknown config key `{k}`")));
            }
        }
        Ok(())
    }
}

pub const SECTIONS: [&str; 8] = ["synth", "prepare", "augment", "align", "train", "finetune", "evaluate", "homonyms"];
pub const GLOBALS: [&str; 2] = ["seed", "out"];

/// Rejects keys that belong to no command and are not global settings.
pub fn check_sections(file: &ConfigFile) -> Result<(), CliError> {
    for k in file.values.keys() {
        let known = GLOBALS.contains(&k.as_str())
            || k.split_once('.').is_some_and(|(s, _)| SECTIONS.contains(&s));
        if !known {
            return Err(CliError::Usage(format!("unknown config key `{k}`")));
        }
    }
    Ok(())
}
