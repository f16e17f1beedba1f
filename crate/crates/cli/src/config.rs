//! Declarative run description and its flat `key = value` text form.
//!
//! Lists are comma separated, strings are bare, numbers use Rust's shortest
//! round-trip formatting, so text → config → text is the identity on
//! anything this module writes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub preset: String,
    /// `ising` (free fermions), `ising-dense`, `tilted` or `xy`.
    pub model: String,
    pub n: usize,
    pub g: f64,
    pub h: f64,
    pub j: f64,
    /// Extra `g:h` pairs; the command runs once per pair.
    pub couplings: Vec<String>,
    /// System sizes for size sweeps.
    pub sizes: Vec<usize>,
    /// Product-state angles for the tilted model.
    pub thetas: Vec<f64>,
    /// Filter variants `delta@grid`, grid one of `full`, `opt:r`, `scaled:s`.
    pub variants: Vec<String>,
    pub x: f64,
    /// Width schedules for size sweeps: `const`, `inv_n`, `inv_n2`.
    pub schedules: Vec<String>,
    /// Size at which scheduled widths equal the variant widths.
    pub n_ref: usize,
    /// Eigenwindow half-width per site.
    pub window: f64,
    pub observables: Vec<String>,
    /// Filtered values from the amplitude `series`, the `exact` filter
    /// operator (dense models), or `both`.
    pub method: String,
    /// Number of seeded random states.
    pub states: usize,
    /// Explicit Fock labels (digits 1-4), overriding `states`.
    pub labels: String,
    pub energies: Vec<f64>,
    pub betas: Vec<f64>,
    pub e_min: f64,
    pub e_max: f64,
    pub e_step: f64,
    pub samples: usize,
    pub burn_in: usize,
    pub blocks: usize,
    pub cutoffs: Vec<f64>,
    /// Shots per amplitude; 0 means exact amplitudes.
    pub shots: u64,
    pub chains: usize,
    pub threads: usize,
    /// Also compute the exhaustive Fock-state sum (N ≤ 24).
    pub exhaustive: bool,
    /// Also report `M - 1/2 - 0.004 E/N`.
    pub shifted: bool,
    pub seed: u64,
    pub t_max: f64,
    pub dt: f64,
    pub zero_tol: f64,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            preset: String::new(),
            model: "ising".into(),
            n: 20,
            g: 1.0,
            h: 2.0,
            j: 1.0,
            couplings: vec![],
            sizes: vec![],
            thetas: vec![],
            variants: vec!["1@full".into()],
            x: 3.0,
            schedules: vec!["const".into()],
            n_ref: 10,
            window: 0.05,
            observables: vec!["magnetization".into()],
            method: "series".into(),
            states: 10,
            labels: String::new(),
            energies: vec![],
            betas: vec![],
            e_min: -100.0,
            e_max: 100.0,
            e_step: 0.5,
            samples: 100_000,
            burn_in: 1_000,
            blocks: 32,
            cutoffs: vec![0.0],
            shots: 0,
            chains: 1,
            threads: 1,
            exhaustive: false,
            shifted: false,
            seed: 1,
            t_max: 20.0,
            dt: 0.01,
            zero_tol: 1e-2,
            out: String::new(),
        }
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:?}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn parse_scalar(key: &str, text: &str, like: &Value) -> Result<Value, CliError> {
    let bad = || CliError::Config(format!("cannot read {key} = {text:?}"));
    Ok(match like {
        Value::String(_) => Value::String(text.to_string()),
        Value::Bool(_) => Value::Bool(text.parse().map_err(|_| bad())?),
        Value::Number(n) if n.is_f64() => {
            let f: f64 = text.parse().map_err(|_| bad())?;
            serde_json::Number::from_f64(f).map(Value::Number).ok_or_else(bad)?
        }
        Value::Number(_) => Value::Number(text.parse::<u64>().map_err(|_| bad())?.into()),
        _ => return Err(bad()),
    })
}

impl RunConfig {
    fn template() -> Map<String, Value> {
        match serde_json::to_value(RunConfig::default()) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("configs serialize to objects"),
        }
    }

    /// Field names accepted in files and as `--key value` overrides.
    pub fn keys() -> Vec<String> {
        Self::template().keys().cloned().collect()
    }

    pub fn to_text(&self) -> String {
        let Ok(Value::Object(map)) = serde_json::to_value(self) else {
            unreachable!("configs serialize to objects")
        };
        let mut out = String::new();
        for key in Self::keys() {
            let text = match &map[&key] {
                Value::Array(items) => items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
                v => scalar_text(v),
            };
            let _ = writeln!(out, "{key} = {text}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies the `key = value` lines of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.replace('-', "_");
        let template = Self::template();
        let like = template
            .get(&key)
            .ok_or_else(|| CliError::Config(format!("unknown key {key:?}")))?;
        let parsed = match like {
            Value::Array(_) => {
                let elem = match key.as_str() {
                    "sizes" => Value::Number(0u64.into()),
                    "variants" | "schedules" | "observables" | "couplings" => Value::String(String::new()),
                    _ => serde_json::json!(0.0),
                };
                let items = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_scalar(&key, s, &elem))
                    .collect::<Result<Vec<_>, _>>()?;
                Value::Array(items)
            }
            like => parse_scalar(&key, value, like)?,
        };
        let Ok(Value::Object(mut map)) = serde_json::to_value(&*self) else {
            unreachable!("configs serialize to objects")
        };
        map.insert(key.clone(), parsed);
        *self = serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
        Ok(())
    }
}
