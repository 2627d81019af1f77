//! Flat `key = value` config files grouped in `[sections]`.
//!
//! ```text
//! # comment
//! [experiment]
//! dataset = wine_quality
//! epochs = 50
//! ```
//!
//! Keys outside any section land in the unnamed section `""`. A key may
//! appear only once per section.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{io_err, usage, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    pub sections: Vec<Section>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| usage(format!("line {line_no}: unterminated section header")))?
                    .trim();
                if sections.iter().any(|s| s.name == name) {
                    return Err(usage(format!("line {line_no}: section [{name}] repeated")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {line_no}: expected 'key = value', got '{line}'")))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(usage(format!("line {line_no}: empty key")));
            }
            if sections.is_empty() {
                sections.push(Section::default());
            }
            let section = sections.last_mut().expect("pushed above");
            if section.get(&key).is_some() {
                return Err(usage(format!("line {line_no}: key '{key}' repeated in [{}]", section.name)));
            }
            section.entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line: line_no,
            });
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section).and_then(|s| s.get(key))
    }

    /// Rejects any section or key outside `allowed` (section, keys).
    pub fn check_keys(&self, allowed: &[(&str, &[&str])]) -> Result<()> {
        for section in &self.sections {
            let keys = allowed
                .iter()
                .find(|(name, _)| *name == section.name)
                .map(|(_, keys)| *keys)
                .ok_or_else(|| usage(format!("unknown config section [{}]", section.name)))?;
            for e in &section.entries {
                if !keys.contains(&e.key.as_str()) {
                    return Err(usage(format!(
                        "unknown config key '{}' in [{}] (line {})",
                        e.key, section.name, e.line
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if !s.name.is_empty() {
                let _ = writeln!(out, "[{}]", s.name);
            }
            for e in &s.entries {
                let _ = writeln!(out, "{} = {}", e.key, e.value);
            }
        }
        out
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        let idx = match self.sections.iter().position(|s| s.name == section) {
            Some(i) => i,
            None => {
                self.sections.push(Section {
                    name: section.to_string(),
                    entries: Vec::new(),
                });
                self.sections.len() - 1
            }
        };
        let value = value.into();
        let s = &mut self.sections[idx];
        match s.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value,
            None => s.entries.push(Entry {
                key: key.to_string(),
                value,
                line: 0,
            }),
        }
    }
}

/// Parses one value, naming the key on failure.
pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| usage(format!("invalid value '{value}' for '{key}'")))
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let ini = Ini::parse("top = 1\n# c\n[a]\nx = 2 \n; c\n[b]\ny=hello world\n").unwrap();
        assert_eq!(ini.get("", "top"), Some("1"));
        assert_eq!(ini.get("a", "x"), Some("2"));
        assert_eq!(ini.get("b", "y"), Some("hello world"));
        assert_eq!(Ini::parse(&ini.render()).unwrap().get("b", "y"), Some("hello world"));
    }

    #[test]
    fn rejects_malformed_and_unknown() {
        assert!(Ini::parse("[a\nx=1").is_err());
        assert!(Ini::parse("[a]\nnovalue").is_err());
        assert!(Ini::parse("[a]\nx=1\nx=2").is_err());
        let ini = Ini::parse("[a]\nx=1\nzzz=2").unwrap();
        let err = ini.check_keys(&[("a", &["x"])]).unwrap_err().to_string();
        assert!(err.contains("zzz"), "{err}");
        assert!(ini.check_keys(&[("b", &["x"])]).is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("g", "0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_list::<f64>("g", "0, x").is_err());
    }
}
