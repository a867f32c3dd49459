//! A small YAML subset: nested maps by indentation, scalars, flat lists
//! (block `- item` or flow `[a, b]`), `#` comments, single- or
//! double-quoted strings, `{}` for an empty map.

use std::collections::BTreeMap;

use super::value::{format_float, ConfigTree, Value};
use super::ConfigError;

#[derive(Debug)]
struct Line<'a> {
    no: usize,
    indent: usize,
    text: &'a str,
}

fn err(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Removes a trailing comment that is not inside quotes.
fn strip_comment(s: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut prev_space = true;
    for (i, c) in s.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == '#' && prev_space => return &s[..i],
            None => {}
        }
        prev_space = c == ' ';
    }
    s
}

pub fn parse(text: &str) -> Result<ConfigTree, ConfigError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let content = strip_comment(raw).trim_end();
        if content.trim().is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if content[..indent].contains('\t') {
            return Err(err(no, "tabs are not allowed in indentation"));
        }
        lines.push(Line {
            no,
            indent,
            text: content.trim_start(),
        });
    }
    if lines.is_empty() {
        return Ok(ConfigTree::new());
    }
    if lines[0].indent != 0 {
        return Err(err(lines[0].no, "document must start at column 0"));
    }
    let mut idx = 0;
    let map = parse_map(&lines, &mut idx, 0)?;
    if let Some(l) = lines.get(idx) {
        return Err(err(l.no, "unexpected indentation"));
    }
    Ok(ConfigTree::from_map(map))
}

fn is_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

/// Splits `key: rest` at the first colon followed by a space or end of line.
fn split_key(text: &str) -> Option<(&str, &str)> {
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\'' || b == b'"' {
            return None;
        }
        if b == b':' && (i + 1 == bytes.len() || bytes[i + 1] == b' ') {
            return Some((text[..i].trim_end(), text[i + 1..].trim()));
        }
    }
    None
}

fn parse_map(lines: &[Line], idx: &mut usize, indent: usize) -> Result<BTreeMap<String, Value>, ConfigError> {
    let mut map = BTreeMap::new();
    while let Some(line) = lines.get(*idx) {
        if line.indent < indent {
            break;
        }
        if line.indent > indent {
            return Err(err(line.no, "unexpected indentation"));
        }
        if is_item(line.text) {
            return Err(err(line.no, "list item where a key was expected"));
        }
        let (key, rest) = split_key(line.text).ok_or_else(|| err(line.no, format!("expected `key: value`, got `{}`", line.text)))?;
        if key.is_empty() {
            return Err(err(line.no, "empty key"));
        }
        if map.contains_key(key) {
            return Err(err(line.no, format!("duplicate key `{key}`")));
        }
        *idx += 1;
        let value = if rest.is_empty() {
            match lines.get(*idx) {
                Some(next) if next.indent > indent => {
                    if is_item(next.text) {
                        parse_list(lines, idx, next.indent)?
                    } else {
                        Value::Map(parse_map(lines, idx, next.indent)?)
                    }
                }
                // block list at the same indentation as its key
                Some(next) if next.indent == indent && is_item(next.text) => parse_list(lines, idx, indent)?,
                _ => Value::Map(BTreeMap::new()),
            }
        } else {
            parse_inline(rest, line.no)?
        };
        map.insert(key.to_string(), value);
    }
    Ok(map)
}

fn parse_list(lines: &[Line], idx: &mut usize, indent: usize) -> Result<Value, ConfigError> {
    let mut items = Vec::new();
    while let Some(line) = lines.get(*idx) {
        if line.indent != indent || !is_item(line.text) {
            if line.indent > indent {
                return Err(err(line.no, "nested structures inside lists are not supported"));
            }
            break;
        }
        let item = line.text[1..].trim();
        if item.is_empty() || (split_key(item).is_some() && !item.starts_with(['\'', '"'])) || item.starts_with("- ") {
            return Err(err(line.no, "only scalar list items are supported"));
        }
        items.push(parse_scalar(item, line.no)?);
        *idx += 1;
    }
    Ok(Value::List(items))
}

fn parse_inline(text: &str, line: usize) -> Result<Value, ConfigError> {
    if text == "{}" {
        return Ok(Value::Map(BTreeMap::new()));
    }
    if let Some(inner) = text.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| err(line, "unterminated flow list"))?;
        if inner.trim().is_empty() {
            return Ok(Value::List(Vec::new()));
        }
        return split_flow(inner, line)?
            .into_iter()
            .map(|item| parse_scalar(item.trim(), line))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::List);
    }
    parse_scalar(text, line)
}

fn split_flow(s: &str, line: usize) -> Result<Vec<&str>, ConfigError> {
    let mut parts = Vec::new();
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == '[' || c == '{' => return Err(err(line, "nested flow collections are not supported")),
            None if c == ',' => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            None => {}
        }
    }
    if quote.is_some() {
        return Err(err(line, "unterminated quote"));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

/// Parses a scalar; quoted text is always a string.
pub(crate) fn parse_scalar(text: &str, line: usize) -> Result<Value, ConfigError> {
    if let Some(body) = text.strip_prefix('\'') {
        let body = body
            .strip_suffix('\'')
            .ok_or_else(|| err(line, "unterminated single quote"))?;
        return Ok(Value::Str(body.replace("''", "'")));
    }
    if let Some(body) = text.strip_prefix('"') {
        let body = body
            .strip_suffix('"')
            .ok_or_else(|| err(line, "unterminated double quote"))?;
        let mut out = String::with_capacity(body.len());
        let mut chars = body.chars();
        while let Some(c) = chars.next() {
            if c == '\\' {
                match chars.next() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    other => return Err(err(line, format!("unsupported escape \\{}", other.unwrap_or(' ')))),
                }
            } else {
                out.push(c);
            }
        }
        return Ok(Value::Str(out));
    }
    Ok(Value::coerce(text))
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || Value::coerce(s) != Value::Str(s.to_string())
        || s.trim() != s
        || s.starts_with(['-', '[', '{', '\'', '"', '#', '&', '*', '!', '|', '>', '%', '@'])
        || s.contains(": ")
        || s.ends_with(':')
        || s.contains(" #")
        || s.contains(',')
        || s.contains(['\n', '\t', '\\'])
}

fn scalar_to_yaml(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format_float(*f),
        Value::Str(s) if needs_quotes(s) => {
            if s.contains(['\n', '\t', '\\']) {
                let escaped = s
                    .replace('\\', "\\\\")
                    .replace('"', "\\\"")
                    .replace('\n', "\\n")
                    .replace('\t', "\\t");
                format!("\"{escaped}\"")
            } else {
                format!("'{}'", s.replace('\'', "''"))
            }
        }
        Value::Str(s) => s.clone(),
        Value::List(_) | Value::Map(_) => unreachable!("not a scalar"),
    }
}

/// Emits `tree` in the subset accepted by [`parse`], keys sorted.
pub fn to_yaml(tree: &ConfigTree) -> String {
    let mut out = String::new();
    write_map(tree.as_map(), 0, &mut out);
    out
}

fn write_map(map: &BTreeMap<String, Value>, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    for (k, v) in map {
        match v {
            Value::Map(m) if m.is_empty() => out.push_str(&format!("{pad}{k}: {{}}\n")),
            Value::Map(m) => {
                out.push_str(&format!("{pad}{k}:\n"));
                write_map(m, indent + 2, out);
            }
            Value::List(items) if items.is_empty() => out.push_str(&format!("{pad}{k}: []\n")),
            Value::List(items) => {
                out.push_str(&format!("{pad}{k}:\n"));
                for item in items {
                    let s = match item {
                        Value::List(_) | Value::Map(_) => format!("'{}'", item.to_string().replace('\'', "''")),
                        _ => scalar_to_yaml(item),
                    };
                    out.push_str(&format!("{pad}  - {s}\n"));
                }
            }
            scalar => out.push_str(&format!("{pad}{k}: {}\n", scalar_to_yaml(scalar))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = "\
env: 'FetchPush-v1'
hydra:
  sweeper:
    study_name: sac_var_FetchPush
    max_trials: 64
    n_jobs: 16
    direction: maximize
    min_trials_per_param: 3
    max_trials_per_param: 12
    search_space:
      ++algorithm.weight_critic_var:
        type: categorical
        choices:
          - 0.0
          - 0.25
          - 0.5
          - 0.75
          - 1.0
";

    #[test]
    fn parses_sweeper_document() {
        let t = parse(SWEEP).unwrap();
        assert_eq!(t.get("env"), Some(&Value::Str("FetchPush-v1".into())));
        assert_eq!(t.get("hydra.sweeper.max_trials"), Some(&Value::Int(64)));
        let space = t.get("hydra.sweeper.search_space").unwrap().as_map().unwrap();
        let entry = space["++algorithm.weight_critic_var"].as_map().unwrap();
        assert_eq!(entry["type"], Value::Str("categorical".into()));
        assert_eq!(
            entry["choices"],
            Value::List([0.0, 0.25, 0.5, 0.75, 1.0].into_iter().map(Value::Float).collect())
        );
    }

    #[test]
    fn comments_flow_lists_and_same_indent_lists() {
        let t = parse("# header\nlr: 3e-4  # learning rate\nhidden: [64, 64]\nseeds:\n- 0\n- 1\nname: 'a # b'\nempty: {}\n").unwrap();
        assert_eq!(t.get("lr"), Some(&Value::Float(3e-4)));
        assert_eq!(t.get("hidden"), Some(&Value::List(vec![Value::Int(64), Value::Int(64)])));
        assert_eq!(t.get("seeds"), Some(&Value::List(vec![Value::Int(0), Value::Int(1)])));
        assert_eq!(t.get("name"), Some(&Value::Str("a # b".into())));
        assert_eq!(t.get("empty"), Some(&Value::Map(BTreeMap::new())));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("a: 1\n  b: 2\n", 2),
            ("a: 1\na: 2\n", 2),
            ("a:\n  - 1\n  - x: 2\n", 3),
            ("ok: 1\njust text\n", 2),
            ("a: 'open\n", 1),
        ];
        for (text, line) in cases {
            match parse(text) {
                Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_of_awkward_strings() {
        let mut t = ConfigTree::new();
        for (i, s) in ["", "true", "12", "a: b", "- x", "it's", "x #y", "tab\there", "1.5e3", "a,b"].iter().enumerate() {
            t.set(&format!("k{i}"), Value::Str(s.to_string())).unwrap();
        }
        let text = to_yaml(&t);
        assert_eq!(parse(&text).unwrap(), t, "{text}");
    }
}
