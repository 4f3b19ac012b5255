//! `key = value` config files and the resolved-parameter record written to
//! `run.lock`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

pub const SEED_ENV: &str = "DOPPLERGA_SEED";

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Keys are case-sensitive and `_` is treated as `-`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config(format!("config line {}: empty key", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

/// Resolves each parameter from (highest first) the command line, the config
/// file, and the built-in default, remembering every value for `run.lock`.
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let file = match config {
            None => BTreeMap::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                parse_config(&text)?
            }
        };
        Ok(Self { file, resolved: BTreeMap::new() })
    }

    fn take_from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.file.remove(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("config key `{key}`: cannot parse `{s}`"))),
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T, CliError> {
        let from_file = self.take_from_file(key)?;
        let v = cli.or(from_file).unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn get_required<T: FromStr + Display>(&mut self, key: &str, cli: Option<T>) -> Result<T, CliError> {
        let from_file = self.take_from_file(key)?;
        let v = cli.or(from_file).ok_or_else(|| CliError::Config(format!("missing required parameter --{key}")))?;
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Seed: flag, then config file, then `DOPPLERGA_SEED`, then 0.
    pub fn seed(&mut self, cli: Option<u64>) -> Result<u64, CliError> {
        let env = match std::env::var(SEED_ENV) {
            Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| CliError::Config(format!("{SEED_ENV}=`{s}` is not a u64")))?),
            Err(_) => None,
        };
        let from_file = self.take_from_file("seed")?;
        let v = cli.or(from_file).or(env).unwrap_or(0);
        self.resolved.insert("seed".into(), v.to_string());
        Ok(v)
    }

    /// Records an informational value (not user-settable).
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    /// Fails on config keys no parameter consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        match self.file.keys().next() {
            Some(k) => Err(CliError::Config(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn write_lock(&self, dir: &Path, command: &str) -> Result<(), CliError> {
        let mut text = format!("# dopplerga {}\ncommand = {command}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.resolved {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let path = dir.join("run.lock");
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
