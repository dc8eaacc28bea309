//! Plain-text `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment, lists are comma-separated.
//! Errors carry the line number of the offending entry.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::evolve::{Bump, DtControl, EvolveConfig, GridSettings, InitialDatum};
use crate::params::{validate, Params, RawParams, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let ln = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::at(ln, format!("expected 'key = value', got '{line}'"))
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::at(ln, format!("invalid key '{key}'")));
            }
            if let Some((_, prev)) = entries.insert(key.to_string(), (value.trim().to_string(), ln))
            {
                return Err(ConfigError::at(
                    ln,
                    format!("duplicate key '{key}' (first set on line {prev})"),
                ));
            }
        }
        Ok(Config { entries })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Errors on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (k, (_, ln)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(ConfigError::at(*ln, format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.1)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.0.as_str())
    }

    fn parse_with<T>(
        &self,
        key: &str,
        f: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, ln)) => f(v)
                .map(Some)
                .map_err(|e| ConfigError::at(*ln, format!("{key}: {e}"))),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, parse_f64)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?
            .ok_or_else(|| ConfigError::general(format!("missing required key '{key}'")))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key, |s| {
            s.parse::<usize>().map_err(|e| format!("'{s}': {e}"))
        })
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.parse_with(key, |s| match s.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(format!("'{s}' is not a boolean")),
        })
    }

    /// Comma-separated reals; an empty value is an empty list.
    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.parse_with(key, |s| {
            if s.trim().is_empty() {
                return Ok(Vec::new());
            }
            s.split(',').map(|t| parse_f64(t.trim())).collect()
        })
    }

    /// Exact-decimal parameters `d`, `m`, `beta`, `gamma`.
    pub fn raw_params(&self) -> Result<RawParams> {
        let scalar = |k: &str| -> Result<Scalar> {
            let (v, ln) = self
                .entries
                .get(k)
                .ok_or_else(|| ConfigError::general(format!("missing required key '{k}'")))?;
            v.parse::<Scalar>()
                .map_err(|e| ConfigError::at(*ln, format!("{k}: {}", e.0)))
        };
        let (dv, dln) = self
            .entries
            .get("d")
            .ok_or_else(|| ConfigError::general("missing required key 'd'"))?;
        let d = dv
            .parse::<i64>()
            .map_err(|e| ConfigError::at(*dln, format!("d: '{dv}': {e}")))?;
        Ok(RawParams {
            d,
            m: scalar("m")?,
            beta: scalar("beta")?,
            gamma: scalar("gamma")?,
        })
    }

    /// Validated parameters; `allow_boundary` admits β = (d−2)γ/d.
    pub fn params(&self) -> Result<Params> {
        let raw = self.raw_params()?;
        let allow = self.get_bool("allow_boundary")?.unwrap_or(false);
        validate(&raw, allow).map_err(|e| {
            let ln = ["beta", "gamma", "m", "d"]
                .iter()
                .filter_map(|k| self.line_of(k))
                .max();
            ConfigError {
                line: ln.filter(|l| *l > 0),
                message: format!("invalid parameters: {e}"),
            }
        })
    }

    pub fn grid_settings(&self) -> Result<GridSettings> {
        let d = GridSettings::default();
        Ok(GridSettings {
            r_min: self.f64_or("r_min", d.r_min)?,
            r_max: self.f64_or("r_max", d.r_max)?,
            n: self.get_usize("n")?.unwrap_or(d.n),
        })
    }

    /// Tracked norm exponents (`qs`, `inf` allowed).
    pub fn qs(&self) -> Result<Vec<f64>> {
        Ok(self.get_list("qs")?.unwrap_or_default())
    }

    pub fn evolve_config(&self, params: Params) -> Result<EvolveConfig> {
        let kind = self.get_str("initial").unwrap_or("perturbed");
        let initial = match kind {
            "barenblatt" => InitialDatum::Barenblatt {
                c: self.f64_or("initial_c", 1.0)?,
            },
            "perturbed" => {
                let amps = self
                    .get_list("bump_amplitudes")?
                    .unwrap_or_else(|| vec![1.0]);
                let centers = self.get_list("bump_centers")?.unwrap_or_else(|| vec![1.0]);
                let widths = self.get_list("bump_widths")?.unwrap_or_else(|| vec![1.0]);
                if amps.len() != centers.len() || amps.len() != widths.len() {
                    let ln = self.line_of("bump_amplitudes").unwrap_or(0);
                    return Err(ConfigError::at(
                        ln,
                        "bump_amplitudes, bump_centers and bump_widths differ in length",
                    ));
                }
                if let Some(c) = centers.iter().find(|c| !(**c > 0.0)) {
                    return Err(ConfigError::at(
                        self.line_of("bump_centers").unwrap_or(0),
                        format!("bump center r = {c} must be positive"),
                    ));
                }
                let bumps = amps
                    .iter()
                    .zip(&centers)
                    .zip(&widths)
                    .map(|((a, c), w)| Bump {
                        amplitude: *a,
                        center: c.ln(),
                        width: *w,
                    })
                    .collect();
                InitialDatum::Perturbed {
                    c_base: self.f64_or("initial_c", 1.0)?,
                    eps: self.f64_or("eps", 0.1)?,
                    bumps,
                }
            }
            "file" => {
                let path = self.get_str("initial_file").ok_or_else(|| {
                    ConfigError::general("initial = file requires 'initial_file'")
                })?;
                InitialDatum::File(PathBuf::from(path))
            }
            other => {
                return Err(ConfigError::at(
                    self.line_of("initial").unwrap_or(0),
                    format!("initial: unknown datum '{other}' (barenblatt | perturbed | file)"),
                ))
            }
        };
        let mut cfg = EvolveConfig::new(params, initial);
        cfg.c = self.get_f64("C")?;
        cfg.grid = self.grid_settings()?;
        let dd = DtControl::default();
        cfg.dt = DtControl {
            dt_init: self.f64_or("dt_init", dd.dt_init)?,
            dt_min: self.f64_or("dt_min", dd.dt_min)?,
            dt_max: self.f64_or("dt_max", dd.dt_max)?,
            target_change: self.f64_or("dt_target", dd.target_change)?,
            reject_change: self.f64_or("dt_reject", dd.reject_change)?,
        };
        if let Some(dt) = self.get_f64("dt")? {
            cfg.dt = DtControl {
                target_change: cfg.dt.target_change,
                reject_change: cfg.dt.reject_change,
                ..DtControl::fixed(dt)
            };
        }
        cfg.t_end = self.f64_or("t_end", cfg.t_end)?;
        cfg.newton_tol = self.f64_or("newton_tol", cfg.newton_tol)?;
        cfg.newton_max_iter = self
            .get_usize("newton_max_iter")?
            .unwrap_or(cfg.newton_max_iter);
        cfg.cadence = self.get_usize("cadence")?.unwrap_or(cfg.cadence);
        cfg.qs = self.qs()?;
        cfg.f_stop_ratio = self.get_f64("f_stop_ratio")?;
        cfg.max_steps = self.get_usize("max_steps")?.unwrap_or(cfg.max_steps);
        Ok(cfg)
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}
