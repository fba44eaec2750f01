//! Run configuration files: `[section]` headers followed by `key = value`
//! lines, `#` comments. The same layout as a package manifest.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Invalid { section: String, key: String, msg: String },
    #[error("{0}")]
    Other(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = Document::default();
        let mut current: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name.is_empty() {
                    return Err(ConfigError::Syntax { line: i + 1, msg: "empty section name".into() });
                }
                current = Some(doc.section_index(name));
                continue;
            }
            let Some(at) = current else {
                return Err(ConfigError::Syntax { line: i + 1, msg: format!("{line:?} outside any section") });
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: format!("expected key = value, found {line:?}") })?;
            doc.sections[at].1.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    fn section_index(&mut self, name: &str) -> usize {
        match self.sections.iter().position(|(n, _)| n == name) {
            Some(i) => i,
            None => {
                self.sections.push((name.to_string(), Vec::new()));
                self.sections.len() - 1
            }
        }
    }

    /// Last value given for `key`, if any.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.get_all(section, key).pop()
    }

    pub fn get_all(&self, section: &str, key: &str) -> Vec<&str> {
        self.sections
            .iter()
            .filter(|(n, _)| n == section)
            .flat_map(|(_, kv)| kv.iter())
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    /// Replaces every value of `key` with `value`.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        let at = self.section_index(section);
        let entries = &mut self.sections[at].1;
        entries.retain(|(k, _)| k != key);
        entries.push((key.to_string(), value.into()));
    }

    pub fn keys(&self, section: &str) -> Vec<&str> {
        self.sections
            .iter()
            .filter(|(n, _)| n == section)
            .flat_map(|(_, kv)| kv.iter().map(|(k, _)| k.as_str()))
            .collect()
    }

    /// Parses `key` with `FromStr`, falling back to `default` when absent.
    pub fn parse_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| invalid(section, key, e.to_string())),
        }
    }

    /// Comma separated list.
    pub fn list_or<T: FromStr>(&self, section: &str, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e: T::Err| invalid(section, key, format!("{s:?}: {e}"))))
                .collect(),
        }
    }

    /// Rejects keys outside `allowed` so typos do not pass silently.
    pub fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<(), ConfigError> {
        for k in self.keys(section) {
            if !allowed.contains(&k) {
                return Err(invalid(section, k, "unknown key".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, kv) in &self.sections {
            writeln!(f, "[{name}]")?;
            for (k, v) in kv {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

pub fn invalid(section: &str, key: &str, msg: String) -> ConfigError {
    ConfigError::Invalid { section: section.to_string(), key: key.to_string(), msg }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_overrides() {
        let text = "# run\n[sim]\nseed = 7\nminers = honest-axe*3 # trailing\n\n[queue]\nproblem = always_true\nproblem = subset_sum\n[sim]\nlatency=2\n";
        let mut d = Document::parse(text).unwrap();
        assert_eq!(d.get("sim", "seed"), Some("7"));
        assert_eq!(d.get("sim", "miners"), Some("honest-axe*3"));
        assert_eq!(d.get("sim", "latency"), Some("2"));
        assert_eq!(d.get_all("queue", "problem"), vec!["always_true", "subset_sum"]);
        d.set("sim", "seed", "9");
        assert_eq!(d.parse_or("sim", "seed", 0u64).unwrap(), 9);
        assert_eq!(d.parse_or("sim", "absent", 5u64).unwrap(), 5);
        assert_eq!(d.list_or("x", "y", vec![1u32]).unwrap(), vec![1]);
        let round = Document::parse(&d.to_string()).unwrap();
        assert_eq!(round, d);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert_eq!(
            Document::parse("seed = 1\n"),
            Err(ConfigError::Syntax { line: 1, msg: "\"seed = 1\" outside any section".into() })
        );
        assert!(matches!(Document::parse("[a]\n\nnonsense\n"), Err(ConfigError::Syntax { line: 3, .. })));
        let d = Document::parse("[a]\nn = x\nlist = 1, 2,z\ntypo = 1\n").unwrap();
        assert!(matches!(d.parse_or("a", "n", 0u64), Err(ConfigError::Invalid { .. })));
        assert!(d.list_or::<u32>("a", "list", vec![]).is_err());
        assert!(d.check_keys("a", &["n", "list"]).is_err());
    }
}
