//! `key = value` configuration with flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use polaron_core::fock::Sector;
use polaron_core::patches::{default_patch_count, DEFAULT_DELTA};
use thiserror::Error;

pub const KEYS: &[&str] = &[
    "kf", "lambda", "beta", "m", "delta", "potential", "impurity", "q_cut", "p_cut", "sector", "n_max", "grid", "seed",
    "out", "preset",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Line(usize),
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Line(n) => write!(f, "line {n}"),
            Source::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: {source_}: unknown key `{key}`")]
    UnknownKey { origin: String, source_: Source, key: String },
    #[error("{origin}: {source_}: expected `key = value`, got `{text}`")]
    Malformed { origin: String, source_: Source, text: String },
    #[error("{origin}: {source_}: key `{key}` given twice")]
    Duplicate { origin: String, source_: Source, key: String },
    #[error("{origin}: {source_}: bad value for `{key}`: {msg}")]
    Value { origin: String, source_: Source, key: String, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw values with where they came from.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    origin: String,
    entries: BTreeMap<String, (String, Source)>,
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig { origin: origin.to_string(), entries: BTreeMap::new() };
        for (i, line) in text.lines().enumerate() {
            let source = Source::Line(i + 1);
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Malformed { origin: origin.into(), source_: source, text: body.into() });
            };
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed { origin: origin.into(), source_: source, text: body.into() });
            }
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { origin: origin.into(), source_: source, key });
            }
            if raw.entries.contains_key(&key) {
                return Err(ConfigError::Duplicate { origin: origin.into(), source_: source, key });
            }
            raw.entries.insert(key, (value, source));
        }
        Ok(raw)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Flag values replace file values.
    pub fn set_flag(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key));
        self.entries.insert(key.to_string(), (value.to_string(), Source::Flag));
    }

    fn err(&self, key: &str, source: &Source, msg: impl ToString) -> ConfigError {
        ConfigError::Value { origin: self.origin.clone(), source_: source.clone(), key: key.into(), msg: msg.to_string() }
    }

    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, src)) => parse(v).map(Some).map_err(|m| self.err(key, src, m)),
        }
    }
}

fn real(s: &str) -> Result<f64, String> {
    let v = match s {
        "sqrt2" | "√2" => 2f64.sqrt(),
        _ => s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be positive"))
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` must be nonnegative"))
    }
}

fn integer<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| format!("`{s}`: {e}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImpurityKind {
    Static,
    Truncated,
}

/// Time or `s` grid: `max:points`, the maximum defaulting per subcommand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub max: Option<f64>,
    pub points: usize,
}

impl GridSpec {
    fn parse(s: &str) -> Result<Self, String> {
        let (max, points) = match s.split_once(':') {
            Some((m, p)) => (Some(positive(m.trim())?), integer::<usize>(p.trim())?),
            None => (None, integer::<usize>(s)?),
        };
        if points < 2 {
            return Err("a grid needs at least 2 points".into());
        }
        Ok(GridSpec { max, points })
    }

    pub fn uniform(&self, default_max: f64) -> Vec<f64> {
        polaron_core::evolve::uniform_grid(self.max.unwrap_or(default_max), self.points)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub kf: Option<f64>,
    pub lambda: f64,
    pub beta: f64,
    /// Explicit patch count; `None` means the `N^{16/45}` rule.
    pub m: Option<usize>,
    pub delta: f64,
    pub potential: Option<PathBuf>,
    pub impurity: ImpurityKind,
    /// Impurity momentum cutoff `|q|^2 <= q_cut`.
    pub q_cut: i64,
    /// Fermion mode cutoff radius for custom desk spaces.
    pub p_cut: Option<f64>,
    pub sector: Option<Sector>,
    pub n_max: Option<usize>,
    pub grid: GridSpec,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
}

impl Config {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let m = raw.get("m", |s| {
            if s == "auto" {
                return Ok(None);
            }
            let m: usize = integer(s)?;
            if m < 2 || m % 2 == 1 {
                return Err(format!("patch count {m} must be even and at least 2"));
            }
            Ok(Some(m))
        })?;
        let delta = raw.get("delta", |s| {
            let d = real(s)?;
            if (0.0..2.0 / 3.0).contains(&d) {
                Ok(d)
            } else {
                Err("delta must lie in [0, 2/3)".into())
            }
        })?;
        let impurity = raw.get("impurity", |s| match s {
            "static" => Ok(ImpurityKind::Static),
            "truncated" => Ok(ImpurityKind::Truncated),
            _ => Err(format!("`{s}`: expected static or truncated")),
        })?;
        let sector = raw.get("sector", |s| match s.split_once(':') {
            None if s == "ph" => Ok(Sector::ParticleHole { max_pairs: None }),
            None if s == "full" => Ok(Sector::Full),
            Some(("ph", cap)) => Ok(Sector::ParticleHole { max_pairs: Some(integer(cap)?) }),
            Some(("fixed", n)) => Ok(Sector::FixedParticleNumber(integer(n)?)),
            _ => Err(format!("`{s}`: expected ph, ph:CAP, fixed:N or full")),
        })?;
        let preset = raw.get("preset", |s| {
            polaron_core::evolve::DeskPreset::parse(s)
                .map(|p| p.name().to_string())
                .ok_or_else(|| format!("`{s}`: expected kf1, kf_sqrt2, reduced or wide"))
        })?;
        let q_cut = raw.get("q_cut", |s| {
            let q: i64 = integer(s)?;
            if q >= 0 {
                Ok(q)
            } else {
                Err("q_cut must be nonnegative".into())
            }
        })?;
        Ok(Config {
            kf: raw.get("kf", positive)?,
            lambda: raw.get("lambda", positive)?.unwrap_or(1.0),
            beta: raw.get("beta", nonnegative)?.unwrap_or(0.0),
            m: m.flatten(),
            delta: delta.unwrap_or(DEFAULT_DELTA),
            potential: raw.get("potential", |s| Ok(PathBuf::from(s)))?,
            impurity: impurity.unwrap_or(ImpurityKind::Static),
            q_cut: q_cut.unwrap_or(1),
            p_cut: raw.get("p_cut", positive)?,
            sector,
            n_max: raw.get("n_max", integer)?,
            grid: raw.get("grid", GridSpec::parse)?.unwrap_or(GridSpec { max: None, points: 41 }),
            seed: raw.get("seed", integer)?.unwrap_or(42),
            out: raw.get("out", |s| Ok(PathBuf::from(s)))?,
            preset,
        })
    }

    pub fn require_kf(&self) -> Result<f64, ConfigError> {
        self.kf.ok_or(ConfigError::Missing("kf"))
    }

    /// Patch count for `n` lattice points in the ball.
    pub fn patch_count(&self, n: usize) -> usize {
        self.m.unwrap_or_else(|| default_patch_count(n))
    }

    /// Canonical `key = value` listing of every resolved field.
    pub fn canonical(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("kf", opt(self.kf.map(|v| v.to_string())));
        line("lambda", self.lambda.to_string());
        line("beta", self.beta.to_string());
        line("m", opt(self.m.map(|v| v.to_string())));
        line("delta", self.delta.to_string());
        line("potential", opt(self.potential.as_ref().map(|p| p.display().to_string())));
        line("impurity", format!("{:?}", self.impurity).to_ascii_lowercase());
        line("q_cut", self.q_cut.to_string());
        line("p_cut", opt(self.p_cut.map(|v| v.to_string())));
        line("sector", opt(self.sector.map(|v| format!("{v:?}"))));
        line("n_max", opt(self.n_max.map(|v| v.to_string())));
        line("grid", format!("{}:{}", opt(self.grid.max.map(|v| v.to_string())), self.grid.points));
        line("seed", self.seed.to_string());
        line("preset", opt(self.preset.clone()));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let mut raw = RawConfig::parse("", "empty").unwrap();
        raw.set_flag("kf", "40");
        let cfg = Config::from_raw(&raw).unwrap();
        assert_eq!(cfg.kf, Some(40.0));
        assert_eq!(cfg.delta, 2.0 / 15.0);
        assert_eq!(cfg.m, None);
        assert_eq!(cfg.lambda, 1.0);
    }

    #[test]
    fn flags_override_file() {
        let mut raw = RawConfig::parse("kf = 20\nlambda = 0.5\n", "cfg").unwrap();
        raw.set_flag("kf", "40");
        let cfg = Config::from_raw(&raw).unwrap();
        assert_eq!(cfg.kf, Some(40.0));
        assert_eq!(cfg.lambda, 0.5);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RawConfig::parse("kf = 2\n\nwidth = 3\n", "cfg").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(err.to_string().contains("width"));
    }

    #[test]
    fn malformed_number_reports_line() {
        let raw = RawConfig::parse("# comment\nkf = forty\n", "cfg").unwrap();
        let err = Config::from_raw(&raw).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn missing_equals_is_malformed() {
        assert!(matches!(RawConfig::parse("kf 2", "cfg"), Err(ConfigError::Malformed { .. })));
    }

    #[test]
    fn odd_patch_count_rejected() {
        let raw = RawConfig::parse("m = 7", "cfg").unwrap();
        assert!(Config::from_raw(&raw).is_err());
    }

    #[test]
    fn sector_forms() {
        let raw = RawConfig::parse("sector = ph:2", "cfg").unwrap();
        assert_eq!(Config::from_raw(&raw).unwrap().sector, Some(Sector::ParticleHole { max_pairs: Some(2) }));
    }

    #[test]
    fn missing_kf_is_reported() {
        let cfg = Config::from_raw(&RawConfig::default()).unwrap();
        assert!(matches!(cfg.require_kf(), Err(ConfigError::Missing("kf"))));
    }
}
