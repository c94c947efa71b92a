//! Flat `key = value` run configuration with a fixed schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug)]
enum Kind {
    Float,
    Positive,
    Count,
    Choice(&'static [&'static str]),
    List,
    Start,
}

struct Key {
    name: &'static str,
    kind: Kind,
    default: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: &'static str) -> Key {
    Key { name, kind, default }
}

const SCHEMA: &[Key] = &[
    key("model", Kind::Choice(&["nagumo", "fhn"]), "nagumo"),
    key("a", Kind::Float, "0.3"),
    key("rho", Kind::Positive, "1"),
    key("varrho", Kind::Positive, "0.005"),
    key("gamma_fhn", Kind::Positive, "4"),
    key("sigma", Kind::Float, "0.05"),
    key("L", Kind::Positive, "40"),
    key("dx", Kind::Positive, "0.05"),
    key("dt", Kind::Positive, "0.001"),
    key("T", Kind::Positive, "10"),
    key("paths", Kind::Count, "100"),
    key("seed", Kind::Count, "0"),
    key("epsilon", Kind::Float, "0"),
    key("alpha", Kind::Float, "0"),
    key("eta", Kind::Positive, "0.001"),
    key("noise", Kind::Choice(&["logistic", "quadratic", "zero"]), "logistic"),
    key("u0", Kind::Start, "wave"),
    key("stride", Kind::Count, "10"),
    key("tol", Kind::Positive, "1e-11"),
    key("name", Kind::Choice(&["steepening", "stability"]), "steepening"),
    key("sigmas", Kind::List, "0,0.05,0.1,0.15,0.2,0.25,0.3"),
    key("etas", Kind::List, "0.0001,0.001,0.01"),
    key("Ts", Kind::List, ""),
    key("amplitudes", Kind::List, ""),
];

/// Keys that determine the deterministic wave and its spectral data.
pub const WAVE_KEYS: &[&str] = &["model", "a", "rho", "varrho", "gamma_fhn", "L", "dx"];

/// Initial condition relative to `Φ_σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Start {
    Wave,
    Bump(f64),
    Shift(f64),
}

fn number(key: &str, raw: &str) -> Result<f64, CliError> {
    raw.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Config(format!("key `{key}`: expected a number, got `{raw}`")))
}

fn canonical(k: &Key, raw: &str) -> Result<String, CliError> {
    let raw = raw.trim();
    let bad = |what: &str| CliError::Config(format!("key `{}`: {what}, got `{raw}`", k.name));
    match k.kind {
        Kind::Float => Ok(format!("{}", number(k.name, raw)?)),
        Kind::Positive => {
            let x = number(k.name, raw)?;
            if x > 0.0 {
                Ok(format!("{x}"))
            } else {
                Err(bad("expected a positive number"))
            }
        }
        Kind::Count => raw
            .parse::<u64>()
            .map(|n| n.to_string())
            .map_err(|_| bad("expected a non-negative integer")),
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(raw.to_string())
            } else {
                Err(bad(&format!("expected one of {}", options.join("|"))))
            }
        }
        Kind::List => {
            if raw.is_empty() {
                return Ok(String::new());
            }
            let xs: Result<Vec<String>, _> = raw
                .split(',')
                .map(|s| number(k.name, s.trim()).map(|x| format!("{x}")))
                .collect();
            Ok(xs?.join(","))
        }
        Kind::Start => match parse_start(raw) {
            Some(Start::Wave) => Ok("wave".into()),
            Some(Start::Bump(a)) => Ok(format!("bump:{a}")),
            Some(Start::Shift(g)) => Ok(format!("shift:{g}")),
            None => Err(bad("expected wave, bump:<amplitude> or shift:<gamma>")),
        },
    }
}

fn parse_start(raw: &str) -> Option<Start> {
    if raw == "wave" {
        return Some(Start::Wave);
    }
    let (tag, x) = raw.split_once(':')?;
    let x = x.trim().parse::<f64>().ok().filter(|x| x.is_finite())?;
    match tag.trim() {
        "bump" => Some(Start::Bump(x)),
        "shift" => Some(Start::Shift(x)),
        _ => None,
    }
}

/// Parses configuration text into `(key, raw value)` pairs.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
        })?;
        let k = k.trim();
        if !SCHEMA.iter().any(|s| s.name == k) {
            return Err(CliError::Config(format!("line {}: unknown key `{k}`", n + 1)));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(CliError::Config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Fully resolved configuration: every schema key has a canonical value.
#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub origin: Option<PathBuf>,
    pub hash: String,
}

impl RunConfig {
    /// Defaults, then the file (if any), then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut pairs = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Missing(format!("cannot read config {}: {e}", p.display())))?;
                parse_text(&text)?
            }
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        let mut cfg = Self::from_pairs(&pairs)?;
        cfg.origin = path.map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        let mut raw: BTreeMap<&str, &str> = SCHEMA.iter().map(|k| (k.name, k.default)).collect();
        for (k, v) in pairs {
            let slot = raw
                .get_mut(k.as_str())
                .ok_or_else(|| CliError::Config(format!("unknown key `{k}`")))?;
            *slot = v.as_str();
        }
        let mut values = BTreeMap::new();
        for k in SCHEMA {
            values.insert(k.name.to_string(), canonical(k, raw[k.name])?);
        }
        let hash = digest(values.iter());
        Ok(Self { values, origin: None, hash })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Hash over the keys in `keys` only.
    pub fn hash_of(&self, keys: &[&str]) -> String {
        digest(self.values.iter().filter(|(k, _)| keys.contains(&k.as_str())))
    }

    pub fn short_hash(&self) -> &str {
        &self.hash[..12]
    }

    pub fn text(&self, key: &str) -> &str {
        &self.values[key]
    }

    pub fn float(&self, key: &str) -> f64 {
        self.values[key].parse().expect("validated on load")
    }

    pub fn count(&self, key: &str) -> u64 {
        self.values[key].parse().expect("validated on load")
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        let v = &self.values[key];
        if v.is_empty() {
            return Vec::new();
        }
        v.split(',').map(|x| x.parse().expect("validated on load")).collect()
    }

    pub fn start(&self) -> Start {
        parse_start(&self.values["u0"]).expect("validated on load")
    }
}

fn digest<'a>(items: impl Iterator<Item = (&'a String, &'a String)>) -> String {
    let mut h = Sha256::new();
    for (k, v) in items {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
