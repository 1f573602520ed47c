//! Run configuration: a `key = value` text file with a closed key set.
//!
//! Unknown keys are a hard error so typos cannot silently change a run, and
//! every command echoes its fully resolved configuration next to its output
//! so any run is reproducible from the echo alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected 'key = value', got '{text}'")]
    Syntax {
        path: String,
        line: usize,
        text: String,
    },
    #[error("{path}:{line}: unknown key '{key}'")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },
    #[error("{path}:{line}: duplicate key '{key}'")]
    DuplicateKey {
        path: String,
        line: usize,
        key: String,
    },
    #[error("missing required key '{0}'")]
    Missing(String),
    #[error("key '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Every key the grammar recognizes.
pub const RECOGNIZED_KEYS: &[&str] = &[
    "command",
    "data",
    "data.format",
    "proxy_data",
    "sigma_file",
    "sigma.kind",
    "sigma.d",
    "sigma.variance",
    "sigma.r",
    "sigma.values",
    "sigma.bulk",
    "sigma.spikes",
    "sigma.seed",
    "noise.dist",
    "scheme.kind",
    "scheme.cov",
    "scheme.cov_file",
    "scheme.keep_prob",
    "scheme.noise_var",
    "scheme.weights",
    "scheme.means_file",
    "scheme.fit_k",
    "scheme.fit_iters",
    "n",
    "m",
    "lambda",
    "lambda_grid",
    "alpha_grid",
    "eta",
    "k_mc",
    "seed",
    "mode",
    "output",
    "sigma_output",
    "suite",
    "replicates",
    "m_mc",
    "refine",
    "bound",
    "variance_reduction",
];

/// A parsed configuration plus a record of which keys a command consumed.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
    source: String,
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    path: source.to_string(),
                    line: idx + 1,
                    text: line.to_string(),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !RECOGNIZED_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    path: source.to_string(),
                    line: idx + 1,
                    key,
                });
            }
            if entries.contains_key(&key) {
                return Err(ConfigError::DuplicateKey {
                    path: source.to_string(),
                    line: idx + 1,
                    key,
                });
            }
            entries.insert(key, value);
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies a `key=value` override (from `--set`).
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: "--set".into(),
                line: 0,
                text: assignment.to_string(),
            });
        };
        let key = key.trim().to_string();
        if !RECOGNIZED_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                path: "--set".into(),
                line: 0,
                key,
            });
        }
        self.entries.insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    message: format!("'{v}' is not a number"),
                })
            })
            .transpose()
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get_f64(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    message: format!("'{v}' is not a non-negative integer"),
                })
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get_usize(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key)
            .map(|v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(ConfigError::BadValue {
                    key: key.into(),
                    message: format!("'{other}' is not a boolean"),
                }),
            })
            .transpose()
    }

    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>().map_err(|_| ConfigError::BadValue {
                            key: key.into(),
                            message: format!("'{s}' is not a number"),
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()
            })
            .transpose()
    }

    /// Grid syntax: `log:start:stop:count`, `lin:start:stop:count`, or a
    /// comma-separated list.
    pub fn get_grid(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        let bad = |message: String| ConfigError::BadValue {
            key: key.into(),
            message,
        };
        if let Some(rest) = raw.strip_prefix("log:").or_else(|| raw.strip_prefix("lin:")) {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad(format!("'{raw}' must be <kind>:start:stop:count")));
            }
            let start: f64 = parts[0]
                .parse()
                .map_err(|_| bad(format!("bad start '{}'", parts[0])))?;
            let stop: f64 = parts[1]
                .parse()
                .map_err(|_| bad(format!("bad stop '{}'", parts[1])))?;
            let count: usize = parts[2]
                .parse()
                .map_err(|_| bad(format!("bad count '{}'", parts[2])))?;
            if count < 1 {
                return Err(bad("count must be >= 1".into()));
            }
            let log = raw.starts_with("log:");
            if log && (start <= 0.0 || stop <= 0.0) {
                return Err(bad("log grids need positive endpoints".into()));
            }
            let grid = if count == 1 {
                vec![start]
            } else if log {
                let (a, b) = (start.ln(), stop.ln());
                (0..count)
                    .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                    .collect()
            } else {
                (0..count)
                    .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                    .collect()
            };
            return Ok(Some(grid));
        }
        self.get_f64_list(key)
    }
}

/// The fully resolved settings a command actually used, echoed to a file
/// that parses back as a `RunConfig`.
#[derive(Debug, Clone, Default)]
pub struct ConfigEcho {
    entries: Vec<(String, String)>,
}

impl ConfigEcho {
    pub fn new(command: &str) -> Self {
        let mut echo = Self::default();
        echo.push("command", command);
        echo
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        debug_assert!(
            RECOGNIZED_KEYS.contains(&key),
            "echoing unrecognized key {key}"
        );
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut sorted = self.entries.clone();
        sorted.sort();
        let mut out = String::from("# resolved configuration\n");
        for (k, v) in sorted {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write_next_to(&self, output: &Path) -> std::io::Result<PathBuf> {
        let mut echo_path = output.as_os_str().to_owned();
        echo_path.push(".echo.cfg");
        let path = PathBuf::from(echo_path);
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}
