//! Layered configuration: CLI flag > `DYCP_*` environment variable >
//! TOML config file > built-in default.
//!
//! The config file is `$DYCP_CONFIG` when set (then it must exist), else
//! `./dycp.toml` when present. Every key is optional; flags and
//! environment variables use the same names (`tau` ↔ `--tau` ↔
//! `DYCP_TAU`).

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Deserialize;

use dycp_core::{DycpError, Result};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tau: Option<f64>,
    pub theta: Option<f64>,
    pub embedder: Option<String>,
    pub ks: Option<Vec<usize>>,
    pub port: Option<u16>,
    pub seed: Option<u64>,
    pub format: Option<String>,
    pub method: Option<String>,
    pub bottom: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub dialogues: Option<PathBuf>,
}

pub fn load_file_config() -> Result<FileConfig> {
    let (path, explicit) = match std::env::var_os("DYCP_CONFIG") {
        Some(p) => (PathBuf::from(p), true),
        None => (PathBuf::from("dycp.toml"), false),
    };
    if !path.exists() {
        if explicit {
            return Err(DycpError::Validation(format!(
                "DYCP_CONFIG points at {} which does not exist",
                path.display()
            )));
        }
        return Ok(FileConfig::default());
    }
    let text = std::fs::read_to_string(&path)?;
    toml::from_str(&text)
        .map_err(|e| DycpError::Validation(format!("config {}: {e}", path.display())))
}

fn env_parsed<T: FromStr>(name: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    match std::env::var(name) {
        Ok(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| DycpError::Validation(format!("{name}={raw:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

/// One setting through the precedence chain.
pub fn resolve<T: FromStr>(
    flag: Option<T>,
    env_name: &str,
    file: Option<T>,
    default: T,
) -> Result<T>
where
    T::Err: Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(v) = env_parsed(env_name)? {
        return Ok(v);
    }
    Ok(file.unwrap_or(default))
}

/// Comma-separated positive integers, e.g. `"1,3,5"`.
pub fn parse_usize_list(raw: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v: usize = part
            .parse()
            .map_err(|_| DycpError::Validation(format!("bad list entry {part:?} in {raw:?}")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(DycpError::Validation(format!("empty list {raw:?}")));
    }
    Ok(out)
}

/// List-valued setting: the flag/env form is a comma-separated string,
/// the file form is a TOML array.
pub fn resolve_list(
    flag: Option<&str>,
    env_name: &str,
    file: Option<&Vec<usize>>,
    default: &[usize],
) -> Result<Vec<usize>> {
    if let Some(raw) = flag {
        return parse_usize_list(raw);
    }
    if let Ok(raw) = std::env::var(env_name) {
        return parse_usize_list(&raw);
    }
    Ok(file.cloned().unwrap_or_else(|| default.to_vec()))
}

/// Path-valued setting (no default; `None` means "not configured").
pub fn resolve_path(
    flag: Option<PathBuf>,
    env_name: &str,
    file: Option<&PathBuf>,
) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(env_name).map(PathBuf::from)).or_else(|| file.cloned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_env_beats_file_beats_default() {
        // Distinct env names per assertion; the test process environment
        // is shared across tests, so nothing here may collide.
        std::env::set_var("DYCP_TEST_A", "2.5");
        let file = Some(1.5);
        assert_eq!(resolve(Some(9.0), "DYCP_TEST_A", file, 0.5).unwrap(), 9.0);
        assert_eq!(resolve::<f64>(None, "DYCP_TEST_A", file, 0.5).unwrap(), 2.5);
        assert_eq!(resolve::<f64>(None, "DYCP_TEST_UNSET", file, 0.5).unwrap(), 1.5);
        assert_eq!(resolve::<f64>(None, "DYCP_TEST_UNSET", None, 0.5).unwrap(), 0.5);
        std::env::remove_var("DYCP_TEST_A");
    }

    #[test]
    fn malformed_env_is_an_error_not_a_fallback() {
        std::env::set_var("DYCP_TEST_BAD", "not-a-number");
        assert!(resolve::<f64>(None, "DYCP_TEST_BAD", None, 0.5).is_err());
        std::env::remove_var("DYCP_TEST_BAD");
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_usize_list("1,3,5").unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_usize_list(" 2 , 4 ").unwrap(), vec![2, 4]);
        assert!(parse_usize_list("1,x").is_err());
        assert!(parse_usize_list("").is_err());
    }
}
