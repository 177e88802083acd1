//! Flag/config-file resolution. Every value a command reads goes through [`Resolver`],
//! which prefers the flag, falls back to the JSON config file, and records what it used
//! so the result can be echoed in the output metadata.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use lhv_forge_core::LhvError;
use serde_json::{Map, Value};

pub type CliResult<T> = std::result::Result<T, LhvError>;

pub struct Resolver {
    file: Map<String, Value>,
    used: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn new(file: Map<String, Value>) -> Resolver {
        Resolver { file, used: BTreeMap::new() }
    }

    pub fn from_path(path: Option<&Path>) -> CliResult<Resolver> {
        let Some(path) = path else {
            return Ok(Resolver::new(Map::new()));
        };
        let text = read_file(path)?;
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(m)) => Ok(Resolver::new(m)),
            Ok(_) => Err(LhvError::domain(format!("config file {} must hold a JSON object", path.display()))),
            Err(e) => Err(LhvError::domain(format!("config file {}: {e}", path.display()))),
        }
    }

    fn from_file(&self, key: &str) -> Option<&Value> {
        self.file.get(key).or_else(|| self.file.get(&key.replace('-', "_")))
    }

    /// Flag value if given, else the config entry, recorded under `key`.
    fn pick(&mut self, key: &str, flag: Option<Value>) -> Option<Value> {
        let v = flag.or_else(|| self.from_file(key).cloned()).filter(|v| !v.is_null());
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.clone());
        }
        v
    }

    /// Record a value that was derived rather than read.
    pub fn record(&mut self, key: &str, v: impl Into<Value>) {
        self.used.insert(key.to_string(), v.into());
    }

    pub fn resolved(&self) -> Value {
        Value::Object(self.used.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    pub fn string(&mut self, key: &str, flag: Option<String>) -> CliResult<Option<String>> {
        match self.pick(key, flag.map(Value::String)) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Ok(Some(v.to_string())),
        }
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        Ok(self.string(key, flag.map(|p| p.display().to_string()))?.map(PathBuf::from))
    }

    /// Where to write results; not echoed in metadata so that outputs do not depend on it.
    pub fn output_path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        let p = self.path(key, flag)?;
        self.used.remove(key);
        Ok(p)
    }

    pub fn f64(&mut self, key: &str, flag: Option<String>) -> CliResult<Option<f64>> {
        match self.pick(key, flag.map(Value::String)) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(Value::String(s)) => {
                let x = parse_angle(&s).map_err(|e| LhvError::domain(format!("--{key}: {e}")))?;
                self.used.insert(key.to_string(), Value::from(x));
                Ok(Some(x))
            }
            Some(v) => Err(LhvError::domain(format!("--{key}: expected a number, got {v}"))),
        }
    }

    pub fn u64(&mut self, key: &str, flag: Option<u64>) -> CliResult<Option<u64>> {
        match self.pick(key, flag.map(Value::from)) {
            None => Ok(None),
            Some(Value::Number(n)) => {
                n.as_u64().map(Some).ok_or_else(|| LhvError::domain(format!("--{key}: expected a non-negative integer")))
            }
            Some(Value::String(s)) => {
                s.trim().parse().map(Some).map_err(|_| LhvError::domain(format!("--{key}: invalid integer `{s}`")))
            }
            Some(v) => Err(LhvError::domain(format!("--{key}: expected an integer, got {v}"))),
        }
    }

    /// Comma-separated list on the command line or a JSON array in the config.
    pub fn f64_list(&mut self, key: &str, flag: Option<String>) -> CliResult<Option<Vec<f64>>> {
        let v = match self.pick(key, flag.map(Value::String)) {
            None => return Ok(None),
            Some(v) => v,
        };
        let items: Vec<f64> = match v {
            Value::String(s) => s
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| parse_angle(t).map_err(|e| LhvError::domain(format!("--{key}: {e}"))))
                .collect::<CliResult<_>>()?,
            Value::Array(a) => a
                .iter()
                .map(|x| match x {
                    Value::Number(n) => n.as_f64().ok_or_else(|| LhvError::domain(format!("--{key}: bad number"))),
                    Value::String(s) => parse_angle(s).map_err(|e| LhvError::domain(format!("--{key}: {e}"))),
                    _ => Err(LhvError::domain(format!("--{key}: list entries must be numbers"))),
                })
                .collect::<CliResult<_>>()?,
            Value::Number(n) => vec![n.as_f64().unwrap_or(f64::NAN)],
            other => return Err(LhvError::domain(format!("--{key}: expected a list, got {other}"))),
        };
        self.used.insert(key.to_string(), Value::from(items.clone()));
        Ok(Some(items))
    }
}

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| LhvError::domain(format!("cannot read {}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LhvError::domain(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| LhvError::domain(format!("cannot write {}: {e}", path.display())))
}

/// A number, or a multiple of π such as `pi/8`, `-3pi/16`, `0.5pi`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi").replace(' ', "");
    if let Ok(x) = t.parse::<f64>() {
        return if x.is_finite() { Ok(x) } else { Err(format!("`{s}` is not finite")) };
    }
    let Some(idx) = t.find("pi") else {
        return Err(format!("`{s}` is not a number or multiple of pi"));
    };
    let (head, tail) = (&t[..idx], &t[idx + 2..]);
    let coef = match head.trim_end_matches('*') {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| format!("bad coefficient in `{s}`"))?,
    };
    let div = match tail {
        "" => 1.0,
        d => d
            .strip_prefix('/')
            .and_then(|x| x.parse::<f64>().ok())
            .filter(|x| *x != 0.0)
            .ok_or_else(|| format!("bad divisor in `{s}`"))?,
    };
    Ok(coef * PI / div)
}

/// `min:max:step`, inclusive of `max` up to rounding.
pub fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || LhvError::domain(format!("range must be min:max:step, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<CliResult<_>>()?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi < lo {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    // decimal-looking values are rounded to 12 places so that 0.1 + 2·0.05 prints as 0.2
    Ok((0..=n).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect())
}
