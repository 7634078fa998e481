use std::fmt;

use super::HarnessError;

/// Ordered `[section]` / `key = value` document. Keys outside any section are
/// rejected; `#` and `;` start comment lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ini {
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut ini = Ini::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: String| HarnessError::Config(format!("line {}: {msg}", n + 1));
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header `{line}`")))?
                    .trim();
                if name.is_empty() {
                    return Err(err("empty section name".into()));
                }
                if ini.section(name).is_some() {
                    return Err(err(format!("section [{name}] appears twice")));
                }
                ini.sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            let Some(sec) = ini.sections.last_mut() else {
                return Err(err(format!("key `{k}` before any [section]")));
            };
            if sec.get(k).is_some() {
                return Err(err(format!("key `{k}` repeated in [{}]", sec.name)));
            }
            sec.entries.push((k.to_string(), v.to_string()));
        }
        Ok(ini)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section).and_then(|s| s.get(key))
    }

    /// Appends `key = value` to `section`, creating the section if needed.
    pub fn set(&mut self, section: &str, key: &str, value: impl fmt::Display) {
        let value = value.to_string();
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
        let sec = &mut self.sections[idx];
        match sec.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => sec.entries.push((key.to_string(), value)),
        }
    }
}

impl fmt::Display for Ini {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "[{}]", s.name)?;
            for (k, v) in &s.entries {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}
