use std::fmt;

use super::value::{ConfigTree, Value};
use super::yaml::parse_scalar;
use super::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverrideMode {
    /// `key=value`: the key must already exist.
    Replace,
    /// `++key=value`: the key must not exist yet.
    Add,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverrideDirective {
    pub path: String,
    pub value: Value,
    pub mode: OverrideMode,
}

impl OverrideDirective {
    /// Parses `key=value` or `++key=value`. Values follow literal coercion;
    /// `[a, b]` is a flat list.
    pub fn parse(token: &str) -> Result<Self, ConfigError> {
        let (mode, rest) = match token.strip_prefix("++") {
            Some(r) => (OverrideMode::Add, r),
            None => (OverrideMode::Replace, token),
        };
        let (path, raw) = rest
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(format!("expected key=value, got `{token}`")))?;
        let path = path.trim();
        if path.is_empty() || path.split('.').any(|p| p.is_empty()) || path.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax(format!("invalid key in `{token}`")));
        }
        let raw = raw.trim();
        let value = if raw.starts_with('[') {
            let inner = raw
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| ConfigError::Syntax(format!("unterminated list in `{token}`")))?;
            if inner.trim().is_empty() {
                Value::List(Vec::new())
            } else {
                Value::List(
                    inner
                        .split(',')
                        .map(|s| parse_scalar(s.trim(), 0))
                        .collect::<Result<_, _>>()?,
                )
            }
        } else {
            parse_scalar(raw, 0)?
        };
        Ok(Self {
            path: path.to_string(),
            value,
            mode,
        })
    }

    pub fn parse_all<S: AsRef<str>>(tokens: &[S]) -> Result<Vec<Self>, ConfigError> {
        tokens.iter().map(|t| Self::parse(t.as_ref())).collect()
    }
}

impl fmt::Display for OverrideDirective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = if self.mode == OverrideMode::Add { "++" } else { "" };
        write!(f, "{prefix}{}={}", self.path, self.value)
    }
}

/// Applies directives left to right.
pub fn apply_overrides(tree: &ConfigTree, directives: &[OverrideDirective]) -> Result<ConfigTree, ConfigError> {
    let mut out = tree.clone();
    for d in directives {
        let exists = out.contains(&d.path);
        match d.mode {
            OverrideMode::Replace if !exists => {
                return Err(ConfigError::UnknownKey {
                    key: d.path.clone(),
                    hint: "prefix with ++ to add a new key".into(),
                })
            }
            OverrideMode::Add if exists => return Err(ConfigError::DuplicateAdd(d.path.clone())),
            _ => out.set(&d.path, d.value.clone())?,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> ConfigTree {
        let mut t = ConfigTree::new();
        t.set("algorithm.learning_rate", Value::Float(3e-4)).unwrap();
        t.set("env", Value::Str("PointReach-v0".into())).unwrap();
        t
    }

    #[test]
    fn parse_forms() {
        let d = OverrideDirective::parse("++algorithm.weight_critic_var=0.75").unwrap();
        assert_eq!(d.mode, OverrideMode::Add);
        assert_eq!(d.path, "algorithm.weight_critic_var");
        assert_eq!(d.value, Value::Float(0.75));
        let d = OverrideDirective::parse("algorithm.hidden_sizes=[32, 32]").unwrap();
        assert_eq!(d.value, Value::List(vec![Value::Int(32), Value::Int(32)]));
        assert_eq!(OverrideDirective::parse("x=true").unwrap().value, Value::Bool(true));
        assert_eq!(OverrideDirective::parse("x='12'").unwrap().value, Value::Str("12".into()));
        assert!(OverrideDirective::parse("novalue").is_err());
        assert!(OverrideDirective::parse("a..b=1").is_err());
    }

    #[test]
    fn display_round_trips() {
        for tok in ["++algorithm.weight_critic_var=0.75", "seed=3", "env=PlanarPush-v0"] {
            assert_eq!(OverrideDirective::parse(tok).unwrap().to_string(), tok);
        }
    }

    #[test]
    fn add_creates_missing_key() {
        let d = OverrideDirective::parse_all(&["++algorithm.weight_critic_var=0.75"]).unwrap();
        let t = apply_overrides(&tree(), &d).unwrap();
        assert_eq!(t.get("algorithm.weight_critic_var"), Some(&Value::Float(0.75)));
    }

    #[test]
    fn replace_on_missing_key_names_it() {
        let d = OverrideDirective::parse_all(&["algorithm.weight_critic_var=0.75"]).unwrap();
        let e = apply_overrides(&tree(), &d).unwrap_err();
        assert!(e.to_string().contains("algorithm.weight_critic_var"), "{e}");
    }

    #[test]
    fn add_on_existing_key_is_duplicate() {
        let d = OverrideDirective::parse_all(&["++algorithm.learning_rate=1e-3"]).unwrap();
        assert!(matches!(apply_overrides(&tree(), &d), Err(ConfigError::DuplicateAdd(_))));
    }

    #[test]
    fn empty_list_is_identity_and_order_matters() {
        assert_eq!(apply_overrides(&tree(), &[]).unwrap(), tree());
        let d = OverrideDirective::parse_all(&["algorithm.learning_rate=1", "algorithm.learning_rate=2"]).unwrap();
        let t = apply_overrides(&tree(), &d).unwrap();
        assert_eq!(t.get("algorithm.learning_rate"), Some(&Value::Int(2)));
    }
}
