//! Parsing of `name:key=value,key=value` descriptors used to address
//! objectives, graph models, noise models and test functions.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpecString {
    pub name: String,
    pub params: Vec<(String, String)>,
}

impl SpecString {
    pub fn parse(input: &str) -> Result<Self> {
        let input = input.trim();
        let (name, rest) = match input.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (input, None),
        };
        if name.is_empty() {
            return Err(Error::Spec(format!("missing name in {input:?}")));
        }
        if !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Spec(format!("invalid name {name:?}")));
        }
        let mut params: Vec<(String, String)> = Vec::new();
        if let Some(rest) = rest {
            for item in rest.split(',') {
                let item = item.trim();
                if item.is_empty() {
                    continue;
                }
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Spec(format!("expected key=value, got {item:?}")))?;
                let (k, v) = (k.trim(), v.trim());
                if k.is_empty() {
                    return Err(Error::Spec(format!("empty key in {item:?}")));
                }
                if params.iter().any(|(pk, _)| pk == k) {
                    return Err(Error::Spec(format!("duplicate key {k:?}")));
                }
                params.push((k.to_string(), v.to_string()));
            }
        }
        Ok(SpecString {
            name: name.to_string(),
            params,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => parse_f64(key, v),
            None => Ok(default),
        }
    }

    pub fn f64_req(&self, key: &str) -> Result<f64> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::Spec(format!("{}: missing parameter {key:?}", self.name)))?;
        parse_f64(key, v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => v.parse::<usize>().map_err(|_| {
                Error::Spec(format!("{key}: expected non-negative integer, got {v:?}"))
            }),
            None => Ok(default),
        }
    }

    /// Rejects keys outside `allowed`.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.params {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Spec(format!(
                    "{}: unknown parameter {k:?} (expected one of {allowed:?})",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SpecString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            f.write_str(if i == 0 { ":" } else { "," })?;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub(crate) fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Spec(format!("{key}: expected number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(Error::Spec(format!("{key}: non-finite value {v:?}")));
    }
    Ok(x)
}
