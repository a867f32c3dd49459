use std::collections::BTreeMap;
use std::fmt;

use super::ConfigError;

/// A configuration value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

impl Value {
    /// Literal coercion: `true`/`false` are booleans, integer literals are
    /// ints, decimal or exponent literals are floats, anything else is a string.
    pub fn coerce(text: &str) -> Value {
        match text {
            "true" => return Value::Bool(true),
            "false" => return Value::Bool(false),
            ".inf" | "+.inf" => return Value::Float(f64::INFINITY),
            "-.inf" => return Value::Float(f64::NEG_INFINITY),
            ".nan" => return Value::Float(f64::NAN),
            _ => {}
        }
        if is_int_literal(text) {
            if let Ok(i) = text.parse::<i64>() {
                return Value::Int(i);
            }
        }
        if is_float_literal(text) {
            if let Ok(f) = text.parse::<f64>() {
                return Value::Float(f);
            }
        }
        Value::Str(text.to_string())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(f) => Some(*f),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<String, Value>> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::List(_) => "list",
            Value::Map(_) => "map",
        }
    }
}

fn is_int_literal(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn is_float_literal(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], Some(&mantissa[i + 1..])),
        None => (mantissa, None),
    };
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = all_digits(int_part)
        && frac_part.is_none_or(all_digits)
        && (!int_part.is_empty() || frac_part.is_some_and(|f| !f.is_empty()));
    let exponent_ok = match exponent {
        None => frac_part.is_some(),
        Some(e) => is_int_literal(e),
    };
    mantissa_ok && exponent_ok
}

/// Formats a float so it re-parses as a float.
pub(crate) fn format_float(f: f64) -> String {
    if f.is_nan() {
        return ".nan".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { ".inf".into() } else { "-.inf".into() };
    }
    let s = format!("{f}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Display form used for tracker params and scalar override round-trips.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", format_float(*x)),
            Value::Str(s) => write!(f, "{s}"),
            Value::List(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Nested string-keyed configuration, addressable by dotted paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigTree {
    root: BTreeMap<String, Value>,
}

impl ConfigTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(root: BTreeMap<String, Value>) -> Self {
        Self { root }
    }

    pub fn as_map(&self) -> &BTreeMap<String, Value> {
        &self.root
    }

    pub fn into_map(self) -> BTreeMap<String, Value> {
        self.root
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    pub fn get(&self, path: &str) -> Option<&Value> {
        let mut parts = path.split('.');
        let mut cur = self.root.get(parts.next()?)?;
        for p in parts {
            cur = cur.as_map()?.get(p)?;
        }
        Some(cur)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.get(path).is_some()
    }

    /// Sets `path`, creating intermediate maps. Fails if a prefix of the
    /// path is a non-map value.
    pub fn set(&mut self, path: &str, value: Value) -> Result<(), ConfigError> {
        let parts: Vec<&str> = path.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::Syntax(format!("invalid key `{path}`")));
        }
        let mut cur = &mut self.root;
        for (i, p) in parts[..parts.len() - 1].iter().enumerate() {
            let entry = cur
                .entry(p.to_string())
                .or_insert_with(|| Value::Map(BTreeMap::new()));
            cur = match entry {
                Value::Map(m) => m,
                other => {
                    return Err(ConfigError::NotAMap {
                        path: parts[..=i].join("."),
                        found: other.type_name(),
                    })
                }
            };
        }
        cur.insert(parts[parts.len() - 1].to_string(), value);
        Ok(())
    }

    pub fn remove(&mut self, path: &str) -> Option<Value> {
        let (parent, leaf) = match path.rsplit_once('.') {
            Some((p, l)) => (Some(p), l),
            None => (None, path),
        };
        match parent {
            None => self.root.remove(leaf),
            Some(p) => {
                let mut cur = &mut self.root;
                for part in p.split('.') {
                    cur = match cur.get_mut(part)? {
                        Value::Map(m) => m,
                        _ => return None,
                    };
                }
                cur.remove(leaf)
            }
        }
    }

    /// Subtree at `path` as its own tree.
    pub fn subtree(&self, path: &str) -> Option<ConfigTree> {
        self.get(path)?.as_map().map(|m| ConfigTree { root: m.clone() })
    }

    /// Deep merge: maps merge key by key, anything else in `overlay` wins.
    pub fn merge(&mut self, overlay: &ConfigTree) {
        merge_maps(&mut self.root, &overlay.root);
    }

    /// `(dotted key, display value)` for every leaf, in key order.
    pub fn flatten(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        flatten_into(&self.root, "", &mut out);
        out
    }
}

fn merge_maps(base: &mut BTreeMap<String, Value>, overlay: &BTreeMap<String, Value>) {
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(Value::Map(b)), Value::Map(o)) => merge_maps(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn flatten_into(map: &BTreeMap<String, Value>, prefix: &str, out: &mut Vec<(String, String)>) {
    for (k, v) in map {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Map(m) if !m.is_empty() => flatten_into(m, &key, out),
            _ => out.push((key, v.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_coercion() {
        assert_eq!(Value::coerce("true"), Value::Bool(true));
        assert_eq!(Value::coerce("42"), Value::Int(42));
        assert_eq!(Value::coerce("-3"), Value::Int(-3));
        assert_eq!(Value::coerce("0.75"), Value::Float(0.75));
        assert_eq!(Value::coerce("3e-4"), Value::Float(3e-4));
        assert_eq!(Value::coerce(".5"), Value::Float(0.5));
        assert_eq!(Value::coerce("1."), Value::Float(1.0));
        assert_eq!(Value::coerce("PointReach-v0"), Value::Str("PointReach-v0".into()));
        assert_eq!(Value::coerce("1e"), Value::Str("1e".into()));
        assert_eq!(Value::coerce("inf"), Value::Str("inf".into()));
        assert_eq!(Value::coerce("."), Value::Str(".".into()));
    }

    #[test]
    fn floats_always_reparse_as_floats() {
        for f in [0.0, 1.0, -2.0, 3e-4, 1e21, 0.1 + 0.2] {
            assert_eq!(Value::coerce(&format_float(f)), Value::Float(f));
        }
    }

    #[test]
    fn dotted_access() {
        let mut t = ConfigTree::new();
        t.set("algorithm.lr", Value::Float(3e-4)).unwrap();
        t.set("algorithm.net.hidden", Value::Int(64)).unwrap();
        assert_eq!(t.get("algorithm.lr"), Some(&Value::Float(3e-4)));
        assert!(t.contains("algorithm.net"));
        assert!(t.get("algorithm.lr.x").is_none());
        assert!(t.set("algorithm.lr.x", Value::Int(1)).is_err());
        assert_eq!(t.remove("algorithm.net.hidden"), Some(Value::Int(64)));
        assert_eq!(
            t.flatten(),
            vec![("algorithm.lr".into(), "0.0003".into()), ("algorithm.net".into(), "{}".into())]
        );
    }
}
