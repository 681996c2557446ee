//! Pipeline configuration shared by the library and the command line tool.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Live-session-window sizing: a fixed page count or a fraction of the
/// user's page views (window length `max(1, round(f * n))`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LswSpec {
    Count(usize),
    Fraction(f64),
}

impl LswSpec {
    /// Window length for a view list of `n` pages.
    pub fn window_len(self, n: usize) -> usize {
        match self {
            LswSpec::Count(k) => k,
            LswSpec::Fraction(f) => ((f * n as f64).round() as usize).max(1),
        }
    }
}

impl fmt::Display for LswSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LswSpec::Count(k) => write!(f, "{k}"),
            LswSpec::Fraction(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for LswSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.contains('.') {
            let f: f64 = s.parse().map_err(|_| ConfigError::BadValue("lsw", s.to_string()))?;
            if f > 0.0 && f <= 1.0 {
                return Ok(LswSpec::Fraction(f));
            }
        } else if let Ok(k) = s.parse::<usize>() {
            if k >= 1 {
                return Ok(LswSpec::Count(k));
            }
        }
        Err(ConfigError::BadValue("lsw", s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected key=value, found {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {0}: {1:?}")]
    BadValue(&'static str, String),
}

/// All tunables, with the documented defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Filename suffixes removed during cleansing (case-insensitive).
    pub filtered_suffixes: Vec<String>,
    /// A gap strictly greater than this many seconds starts a new session.
    pub session_timeout_s: i64,
    /// Navigation patterns below this total edge weight are discarded.
    pub min_weight: u32,
    /// Patterns with fewer vertices than this are discarded.
    pub min_vertices: usize,
    /// Session graphs with more vertices than this are rejected.
    pub max_graph_vertices: usize,
    /// Live session window sizing for replay evaluation.
    pub lsw: LswSpec,
    /// Map referrers from a different host to "-" (fresh entry).
    pub external_referer_as_dash: bool,
    /// Remove pages from the unvisited part that already appear in the
    /// history part.
    pub dedupe_across_parts: bool,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            filtered_suffixes: vec![
                ".gif".to_string(),
                ".jpeg".to_string(),
                ".jpg".to_string(),
                ".css".to_string(),
            ],
            session_timeout_s: 1800,
            min_weight: 3,
            min_vertices: 2,
            max_graph_vertices: 64,
            lsw: LswSpec::Fraction(0.1),
            external_referer_as_dash: true,
            dedupe_across_parts: false,
        }
    }
}

impl Config {
    /// Applies `key=value` lines from a config file over `self`. Blank lines
    /// and `#` comments are ignored; unknown keys are errors.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::MalformedLine {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.apply_pair(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "filtered_suffixes" => {
                self.filtered_suffixes =
                    value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            }
            "session_timeout_s" => {
                self.session_timeout_s = parse_positive(value, "session_timeout_s")?;
            }
            "min_weight" => {
                self.min_weight = parse_positive(value, "min_weight")? as u32;
            }
            "min_vertices" => {
                self.min_vertices = parse_positive(value, "min_vertices")? as usize;
            }
            "max_graph_vertices" => {
                self.max_graph_vertices = parse_positive(value, "max_graph_vertices")? as usize;
            }
            "lsw" => self.lsw = value.parse()?,
            "external_referer_as_dash" => {
                self.external_referer_as_dash = parse_bool(value, "external_referer_as_dash")?;
            }
            "dedupe_across_parts" => {
                self.dedupe_across_parts = parse_bool(value, "dedupe_across_parts")?;
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

fn parse_positive(value: &str, key: &'static str) -> Result<i64, ConfigError> {
    match value.parse::<i64>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(ConfigError::BadValue(key, value.to_string())),
    }
}

fn parse_bool(value: &str, key: &'static str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue(key, value.to_string())),
    }
}
