//! Minimal INI reader: `[section]` headers, `key = value` lines, `#` and `;`
//! comments. Every entry remembers its line for diagnostics.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Header text without brackets, whitespace-normalized.
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ini {
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl Ini {
    pub fn parse(text: &str) -> Result<Ini, SyntaxError> {
        let mut ini = Ini::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') || body.starts_with(';') {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(SyntaxError { line, message: format!("unterminated section header {body:?}") });
                };
                let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
                if name.is_empty() {
                    return Err(SyntaxError { line, message: "empty section name".into() });
                }
                ini.sections.push(Section { name, line, entries: Vec::new() });
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(SyntaxError { line, message: format!("expected `key = value`, got {body:?}") });
            };
            let Some(section) = ini.sections.last_mut() else {
                return Err(SyntaxError { line, message: format!("`{}` appears before any [section]", key.trim()) });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(SyntaxError { line, message: "empty key".into() });
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(ini)
    }
}
