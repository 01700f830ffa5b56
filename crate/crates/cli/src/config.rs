//! TOML run configuration. Every key is optional and mirrors the flag of
//! the same name; a flag given on the command line wins over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Subcommand the file is meant for; checked against the one invoked.
    pub command: Option<String>,
    pub model: Option<String>,
    pub spec: Option<PathBuf>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub target: Option<String>,
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub basis_csv: Option<PathBuf>,
    pub projector_csv: Option<PathBuf>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub k: Option<usize>,
    pub d: Option<usize>,
    pub k_grid: Option<String>,
    pub reps: Option<usize>,
    pub quantile_level: Option<f64>,
    pub folds: Option<usize>,
    pub n_neighbors: Option<usize>,
    pub test_fraction: Option<f64>,
    pub eig_floor: Option<String>,
    pub ridge: Option<f64>,
    pub u_grid: Option<Vec<f64>>,
    pub statistic: Option<String>,
    pub p: Option<usize>,
    pub n_mc: Option<usize>,
    pub y_grid: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub w: Option<Vec<f64>>,
    pub jobs: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::User(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::User(format!("config {}: {}", path.display(), e.message())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kebab_case_keys() {
        let c: RunConfig = toml::from_str(
            "model = \"A\"\nseed = 3\nk-grid = \"10:100:5\"\nin = \"a.csv\"\nu-grid = [0.1, 1.0]\n",
        )
        .unwrap();
        assert_eq!(c.model.as_deref(), Some("A"));
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.k_grid.as_deref(), Some("10:100:5"));
        assert_eq!(c.input, Some(PathBuf::from("a.csv")));
        assert_eq!(c.u_grid, Some(vec![0.1, 1.0]));
    }

    #[test]
    fn empty_config_is_all_none() {
        assert_eq!(toml::from_str::<RunConfig>("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = toml::from_str::<RunConfig>("kk = 3").unwrap_err();
        assert!(err.message().contains("`kk`"), "{}", err.message());
    }

    #[test]
    fn type_mismatch_is_rejected() {
        assert!(toml::from_str::<RunConfig>("n = \"many\"").is_err());
    }
}
