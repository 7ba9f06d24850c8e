//! A deliberately small YAML subset used for `cube.yaml`, `results.yaml`,
//! `statistics.yaml`, `parameters.yaml` and `benchmark.yaml`.
//!
//! Supported: block mappings, block sequences of scalars, plain / single- /
//! double-quoted scalars, `#` comments, and the empty flow forms `{}` and
//! `[]`. Indentation is spaces only. Anchors, aliases, tags, block scalars,
//! non-empty flow collections, nested sequences and multiple documents are
//! rejected with the offending line number.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Yaml {
    Scalar(String),
    List(Vec<String>),
    Map(IndexMap<String, Yaml>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct YamlError {
    pub line: usize,
    pub message: String,
    /// Set for duplicate keys: the path of the enclosing mapping and the key.
    pub duplicate: Option<(Vec<String>, String)>,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, YamlError> {
    Err(YamlError {
        line,
        message: message.into(),
        duplicate: None,
    })
}

/// A parsed document plus the line on which each mapping key appeared.
#[derive(Debug, Clone)]
pub struct Document {
    pub root: Yaml,
    key_lines: HashMap<Vec<String>, usize>,
}

impl Document {
    /// Line of the key at `path` (e.g. `["tasks", "infer", "outputs"]`).
    pub fn line_of(&self, path: &[&str]) -> Option<usize> {
        let key: Vec<String> = path.iter().map(|s| s.to_string()).collect();
        self.key_lines.get(&key).copied()
    }
}

impl Yaml {
    pub fn as_map(&self) -> Option<&IndexMap<String, Yaml>> {
        match self {
            Yaml::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Yaml::Scalar(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[String]> {
        match self {
            Yaml::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&Yaml> {
        self.as_map().and_then(|m| m.get(key))
    }

    /// Scalar `null` or `~`.
    pub fn is_null(&self) -> bool {
        matches!(self, Yaml::Scalar(s) if s == "null" || s == "~")
    }
}

struct Line<'a> {
    no: usize,
    indent: usize,
    text: &'a str,
}

/// Parses a document whose root is a mapping.
pub fn parse(text: &str) -> Result<Yaml, YamlError> {
    parse_document(text).map(|d| d.root)
}

/// Like [`parse`], also recording key line numbers.
pub fn parse_document(text: &str) -> Result<Document, YamlError> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let body = strip_comment(raw);
        let trimmed_end = body.trim_end();
        if trimmed_end.trim_start().is_empty() {
            continue;
        }
        let indent = trimmed_end.len() - trimmed_end.trim_start().len();
        if trimmed_end[..indent].contains('\t') {
            return err(no, "tab in indentation");
        }
        let content = trimmed_end.trim_start();
        if content == "---" || content == "..." || content.starts_with('%') {
            return err(no, "document markers and directives are not supported");
        }
        lines.push(Line {
            no,
            indent,
            text: content,
        });
    }
    if lines.is_empty() {
        return Ok(Document {
            root: Yaml::Map(IndexMap::new()),
            key_lines: HashMap::new(),
        });
    }
    if lines[0].indent != 0 {
        return err(lines[0].no, "document must start at column 0");
    }
    let mut parser = Parser {
        lines,
        pos: 0,
        path: Vec::new(),
        key_lines: HashMap::new(),
    };
    let root = parser.map(0)?;
    if let Some(line) = parser.lines.get(parser.pos) {
        return err(line.no, "unexpected content");
    }
    Ok(Document {
        root: Yaml::Map(root),
        key_lines: parser.key_lines,
    })
}

fn strip_comment(line: &str) -> &str {
    let (mut single, mut double, mut prev_space) = (false, false, true);
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            '\\' if double => escaped = !escaped,
            '"' if !single && !escaped => double = !double,
            '\'' if !double => single = !single,
            '#' if !single && !double && prev_space => return &line[..i],
            _ => {}
        }
        if c != '\\' {
            escaped = false;
        }
        prev_space = c == ' ' || c == '\t';
    }
    line
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    path: Vec<String>,
    key_lines: HashMap<Vec<String>, usize>,
}

fn is_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

impl<'a> Parser<'a> {
    fn map(&mut self, indent: usize) -> Result<IndexMap<String, Yaml>, YamlError> {
        let mut out = IndexMap::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return err(line.no, "unexpected indentation");
            }
            if is_item(line.text) {
                return err(line.no, "sequence item where a mapping key was expected");
            }
            let no = line.no;
            let (key, rest) = split_key(line.text, no)?;
            self.pos += 1;
            if out.contains_key(&key) {
                return Err(YamlError {
                    line: no,
                    message: format!("duplicate key {key:?}"),
                    duplicate: Some((self.path.clone(), key)),
                });
            }
            self.path.push(key.clone());
            self.key_lines.insert(self.path.clone(), no);
            let value = if rest.is_empty() {
                match self.lines.get(self.pos) {
                    Some(next) if next.indent > indent && is_item(next.text) => {
                        Yaml::List(self.list(next.indent)?)
                    }
                    Some(next) if next.indent > indent => Yaml::Map(self.map(next.indent)?),
                    Some(next) if next.indent == indent && is_item(next.text) => {
                        Yaml::List(self.list(indent)?)
                    }
                    _ => return err(no, format!("key {key:?} has no value")),
                }
            } else {
                inline_value(rest, no)?
            };
            self.path.pop();
            out.insert(key, value);
        }
        Ok(out)
    }

    fn list(&mut self, indent: usize) -> Result<Vec<String>, YamlError> {
        let mut out = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent != indent || !is_item(line.text) {
                break;
            }
            let rest = line.text[1..].trim_start();
            if rest.is_empty() {
                return err(line.no, "empty sequence item");
            }
            if rest.starts_with("- ") || rest == "-" {
                return err(line.no, "nested sequences are not supported");
            }
            if split_key(rest, line.no).is_ok() && !rest.starts_with(['"', '\'']) {
                return err(line.no, "mappings inside sequences are not supported");
            }
            out.push(scalar(rest, line.no)?);
            self.pos += 1;
            if let Some(next) = self.lines.get(self.pos) {
                if next.indent > indent {
                    return err(next.no, "unexpected indentation after sequence item");
                }
            }
        }
        Ok(out)
    }
}

/// Splits `key: rest` at the first `:` that is followed by a space or the
/// end of the line and is not inside quotes.
fn split_key(text: &str, no: usize) -> Result<(String, &str), YamlError> {
    let bytes = text.as_bytes();
    if bytes[0] == b'"' || bytes[0] == b'\'' {
        let (key, used) = quoted(text, no)?;
        let rest = &text[used..];
        return match rest.strip_prefix(':') {
            Some(r) if r.is_empty() || r.starts_with(' ') => Ok((key, r.trim())),
            _ => err(no, "expected ':' after quoted key"),
        };
    }
    for (i, c) in text.char_indices() {
        if c == ':' {
            let after = &text[i + 1..];
            if after.is_empty() || after.starts_with(' ') {
                let key = text[..i].trim_end();
                if key.is_empty() {
                    return err(no, "empty key");
                }
                check_plain(key, no)?;
                return Ok((key.to_owned(), after.trim()));
            }
        }
    }
    err(no, "expected 'key: value'")
}

fn inline_value(text: &str, no: usize) -> Result<Yaml, YamlError> {
    match text {
        "{}" => Ok(Yaml::Map(IndexMap::new())),
        "[]" => Ok(Yaml::List(Vec::new())),
        _ => Ok(Yaml::Scalar(scalar(text, no)?)),
    }
}

fn check_plain(text: &str, no: usize) -> Result<(), YamlError> {
    let first = text.chars().next().unwrap_or(' ');
    if matches!(
        first,
        '&' | '*' | '!' | '|' | '>' | '%' | '@' | '`' | '{' | '[' | ']' | '}' | ','
    ) {
        return err(no, format!("unsupported construct starting with {first:?}"));
    }
    if text.contains(": ") || text.ends_with(':') {
        return err(no, "plain scalar contains ': '");
    }
    Ok(())
}

fn scalar(text: &str, no: usize) -> Result<String, YamlError> {
    if text.starts_with('"') || text.starts_with('\'') {
        let (value, used) = quoted(text, no)?;
        if !text[used..].trim().is_empty() {
            return err(no, "trailing characters after quoted scalar");
        }
        return Ok(value);
    }
    check_plain(text, no)?;
    Ok(text.to_owned())
}

/// Parses a quoted scalar at the start of `text`; returns the value and the
/// number of bytes consumed.
fn quoted(text: &str, no: usize) -> Result<(String, usize), YamlError> {
    let mut chars = text.char_indices();
    let (_, q) = chars.next().expect("caller checked the quote");
    let mut out = String::new();
    while let Some((i, c)) = chars.next() {
        if q == '\'' {
            if c == '\'' {
                if text[i + 1..].starts_with('\'') {
                    out.push('\'');
                    chars.next();
                    continue;
                }
                return Ok((out, i + 1));
            }
            out.push(c);
        } else {
            match c {
                '"' => return Ok((out, i + 1)),
                '\\' => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, other)) => return err(no, format!("unsupported escape \\{other}")),
                    None => return err(no, "unterminated escape"),
                },
                _ => out.push(c),
            }
        }
    }
    err(no, "unterminated quoted scalar")
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s != s.trim()
        || s.contains(": ")
        || s.contains(" #")
        || s.ends_with(':')
        || s.contains(['"', '\'', '\n', '\t', '\\'])
        || s.starts_with([
            '&', '*', '!', '|', '>', '%', '@', '`', '{', '[', ']', '}', ',', '#', '-',
        ])
}

fn write_scalar(out: &mut String, s: &str) {
    if needs_quotes(s) {
        out.push('"');
        for c in s.chars() {
            match c {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\t' => out.push_str("\\t"),
                c => out.push(c),
            }
        }
        out.push('"');
    } else {
        out.push_str(s);
    }
}

fn write_key(out: &mut String, s: &str) {
    write_scalar(out, s)
}

fn emit_map(out: &mut String, map: &IndexMap<String, Yaml>, indent: usize) {
    for (key, value) in map {
        out.push_str(&" ".repeat(indent));
        write_key(out, key);
        out.push(':');
        match value {
            Yaml::Scalar(s) => {
                out.push(' ');
                write_scalar(out, s);
                out.push('\n');
            }
            Yaml::List(items) if items.is_empty() => out.push_str(" []\n"),
            Yaml::List(items) => {
                out.push('\n');
                for item in items {
                    out.push_str(&" ".repeat(indent + 2));
                    out.push_str("- ");
                    write_scalar(out, item);
                    out.push('\n');
                }
            }
            Yaml::Map(m) if m.is_empty() => out.push_str(" {}\n"),
            Yaml::Map(m) => {
                out.push('\n');
                emit_map(out, m, indent + 2);
            }
        }
    }
}

/// Renders a mapping. Non-map roots render as a single scalar or list.
pub fn to_string(doc: &Yaml) -> String {
    let mut out = String::new();
    match doc {
        Yaml::Map(m) => emit_map(&mut out, m, 0),
        Yaml::Scalar(s) => {
            write_scalar(&mut out, s);
            out.push('\n');
        }
        Yaml::List(items) => {
            for item in items {
                out.push_str("- ");
                write_scalar(&mut out, item);
                out.push('\n');
            }
        }
    }
    out
}

impl fmt::Display for Yaml {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_string(self))
    }
}

/// Builder helper: a mapping from `(key, value)` pairs.
pub fn map<I, K>(entries: I) -> Yaml
where
    I: IntoIterator<Item = (K, Yaml)>,
    K: Into<String>,
{
    Yaml::Map(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
}

pub fn scalar_value(s: impl Into<String>) -> Yaml {
    Yaml::Scalar(s.into())
}
