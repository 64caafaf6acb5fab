//! Run configuration: flags layered over an optional `key = value` file.
//!
//! Keys are kebab-case (underscores are accepted and normalized). Blank
//! lines and lines starting with `#` are ignored. A key the command does not
//! know is an error, so typos never pass silently.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// Parses the flat `key = value` format.
pub fn parse_config(text: &str, origin: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::config(format!(
                "{}:{}: expected `key = value`, got {line:?}",
                origin.display(),
                n + 1
            )));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::config(format!("{}:{}: empty key", origin.display(), n + 1)));
        }
        if out.insert(key.clone(), v.trim().to_owned()).is_some() {
            return Err(CliError::config(format!(
                "{}:{}: duplicate key {key}",
                origin.display(),
                n + 1
            )));
        }
    }
    Ok(out)
}

/// The resolved settings of one run, in resolution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub command: &'static str,
    pub entries: Vec<(&'static str, String)>,
}

impl RunConfig {
    /// The settings in config-file syntax; feeding this back through
    /// `--config` reproduces the run.
    pub fn to_text(&self) -> String {
        let mut s = format!("# cgm {}\n", self.command);
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }
}

/// Resolves settings one key at a time: flag, then file, then default.
pub struct Resolver {
    command: &'static str,
    file: BTreeMap<String, String>,
    origin: PathBuf,
    entries: Vec<(&'static str, String)>,
}

impl Resolver {
    pub fn new(command: &'static str, config: Option<&Path>) -> CliResult<Self> {
        let (file, origin) = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                (parse_config(&text, path)?, path.to_path_buf())
            }
            None => (BTreeMap::new(), PathBuf::new()),
        };
        Ok(Self {
            command,
            file,
            origin,
            entries: Vec::new(),
        })
    }

    fn file_value<T: FromStr>(&mut self, key: &'static str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.file.remove(key) {
            // Unset optional settings are echoed as `key =`.
            None => Ok(None),
            Some(raw) if raw.is_empty() => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                CliError::config(format!("{}: key {key}: cannot parse {raw:?}: {e}", self.origin.display()))
            }),
        }
    }

    fn record(&mut self, key: &'static str, value: String) {
        self.entries.push((key, value));
    }

    /// A setting with a default.
    pub fn value<T: FromStr + Display>(&mut self, key: &'static str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        let file = self.file_value(key)?;
        let v = flag.or(file).unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    /// An optional setting; absent values are echoed as empty.
    pub fn optional<T: FromStr + Display>(&mut self, key: &'static str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        let file = self.file_value(key)?;
        let v = flag.or(file);
        self.record(key, v.as_ref().map(ToString::to_string).unwrap_or_default());
        Ok(v)
    }

    /// A setting without which the command cannot run.
    pub fn required<T: FromStr + Display>(&mut self, key: &'static str, flag: Option<T>) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::config(format!("missing required setting --{key} (flag or config key)")))
    }

    pub fn optional_path(&mut self, key: &'static str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        let file: Option<String> = self.file_value(key)?;
        let v = flag.or(file.map(PathBuf::from));
        self.record(key, v.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        Ok(v)
    }

    pub fn required_path(&mut self, key: &'static str, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.optional_path(key, flag)?
            .ok_or_else(|| CliError::config(format!("missing required setting --{key} (flag or config key)")))
    }

    /// Like [`value`](Self::value) but kept out of the echoed configuration,
    /// for settings that cannot change any output (e.g. the thread count).
    pub fn silent<T: FromStr>(&mut self, key: &'static str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        let file = self.file_value(key)?;
        Ok(flag.or(file).unwrap_or(default))
    }

    /// Fails on any file key that no setting consumed.
    pub fn finish(self) -> CliResult<RunConfig> {
        if let Some(k) = self.file.keys().next() {
            return Err(CliError::config(format!(
                "{}: unknown key {k:?} for `cgm {}`",
                self.origin.display(),
                self.command
            )));
        }
        Ok(RunConfig {
            command: self.command,
            entries: self.entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blank_lines_and_underscores() {
        let m = parse_config("# c\n\nt_low = 0.1\nout=dir \n", Path::new("x")).unwrap();
        assert_eq!(m["t-low"], "0.1");
        assert_eq!(m["out"], "dir");
    }

    #[test]
    fn rejects_malformed_lines_and_duplicates() {
        assert!(parse_config("novalue\n", Path::new("x")).is_err());
        assert!(parse_config("a=1\na=2\n", Path::new("x")).is_err());
        assert!(parse_config("=1\n", Path::new("x")).is_err());
    }

    fn resolver(text: &str) -> Resolver {
        Resolver {
            command: "test",
            file: parse_config(text, Path::new("f")).unwrap(),
            origin: PathBuf::from("f"),
            entries: Vec::new(),
        }
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let mut r = resolver("t-low = 0.2\nt-high = 0.8\n");
        assert_eq!(r.value("t-low", Some(0.1), 0.05).unwrap(), 0.1);
        assert_eq!(r.value("t-high", None, 0.95).unwrap(), 0.8);
        assert_eq!(r.value("seed", None::<u64>, 7).unwrap(), 7);
        let rc = r.finish().unwrap();
        assert_eq!(rc.to_text(), "# cgm test\nt-low = 0.1\nt-high = 0.8\nseed = 7\n");
    }

    #[test]
    fn unknown_and_unparsable_keys_are_config_errors() {
        let r = resolver("bogus = 1\n");
        assert_eq!(r.finish().unwrap_err().exit_code(), 2);
        let mut r = resolver("seed = x\n");
        assert_eq!(r.value("seed", None::<u64>, 7).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn echo_reparses_to_the_same_values() {
        let mut r = resolver("");
        r.value("t-low", Some(0.05), 0.0).unwrap();
        r.optional_path("out", Some(PathBuf::from("a b"))).unwrap();
        let text = r.finish().unwrap().to_text();
        let m = parse_config(&text, Path::new("echo")).unwrap();
        assert_eq!(m["t-low"].parse::<f64>().unwrap(), 0.05);
        assert_eq!(m["out"], "a b");
    }
}
