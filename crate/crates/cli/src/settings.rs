use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use laguerre_core::density::{IntervalSpec, ModelSpec};
use laguerre_core::experiments::Battery;
use laguerre_core::ppp::Aabb;
use serde::Deserialize;

use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// JSON model description; defaults to the β-model with β = 1.
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Inner window as lower corner then upper corner, e.g. x0,y0,x1,y1.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub window: Option<Vec<f64>>,
    /// Padding around the window kept in dumps and renderings.
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub battery: Option<String>,
    /// Moment orders s, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub orders: Option<Vec<f64>>,
    /// Paraboloid heights t of the intensity battery, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub levels: Option<Vec<f64>>,
    /// JSON config; its fields override the flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<ModelSpec>,
    pub d: Option<usize>,
    pub gamma: Option<f64>,
    pub nu: Option<f64>,
    pub seed: Option<u64>,
    pub window: Option<Vec<f64>>,
    pub margin: Option<f64>,
    pub replicates: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub battery: Option<Battery>,
    pub s: Option<Vec<f64>>,
    pub levels: Option<Vec<f64>>,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct Settings {
    pub model: ModelSpec,
    pub d: usize,
    pub gamma: f64,
    pub nu: f64,
    pub seed: u64,
    pub window: Option<Aabb>,
    pub margin: f64,
    pub replicates: Option<usize>,
    pub jobs: usize,
    pub out: PathBuf,
    pub battery: Option<Battery>,
    pub orders: Vec<f64>,
    pub levels: Option<Vec<f64>>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn default_model() -> ModelSpec {
    ModelSpec::Power {
        beta: 1.0,
        scale: None,
        interval: IntervalSpec::RightHalfLine { a: 0.0 },
    }
}

pub fn parse_window(values: &[f64], d: usize) -> Result<Aabb, CliError> {
    if values.len() != 2 * d {
        return Err(CliError::Usage(format!(
            "--window needs {} numbers (lower corner then upper corner) in d = {d}, got {}",
            2 * d,
            values.len()
        )));
    }
    let (lo, hi) = values.split_at(d);
    let window = Aabb::new(lo, hi).map_err(|e| CliError::Usage(e.to_string()))?;
    if (0..d).any(|k| window.side(k) <= 0.0) {
        return Err(CliError::Usage(format!("window {values:?} is empty")));
    }
    Ok(window)
}

impl Settings {
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let config: ConfigFile = match &flags.config {
            Some(path) => serde_json::from_str(&read(path)?)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?,
            None => ConfigFile::default(),
        };
        let model = match (config.model, &flags.model) {
            (Some(m), _) => m,
            (None, Some(path)) => {
                ModelSpec::from_json(&read(path)?).map_err(|e| CliError::Usage(format!("model {}: {e}", path.display())))?
            }
            (None, None) => default_model(),
        };
        let d = config.d.or(flags.d).unwrap_or(2);
        if d == 0 || d > 3 {
            return Err(CliError::Usage(format!("dimension {d} is not supported (1, 2 or 3)")));
        }
        let gamma = config.gamma.or(flags.gamma).unwrap_or(1.0);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(CliError::Usage(format!("gamma must be positive, got {gamma}")));
        }
        let nu = config.nu.or(flags.nu).unwrap_or(0.0);
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(CliError::Usage(format!("nu must be non-negative, got {nu}")));
        }
        let margin = config.margin.or(flags.margin).unwrap_or(0.0);
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(CliError::Usage(format!("margin must be non-negative, got {margin}")));
        }
        let window = match config.window.as_ref().or(flags.window.as_ref()) {
            Some(w) => Some(parse_window(w, d)?),
            None => None,
        };
        let battery = match (config.battery, &flags.battery) {
            (Some(b), _) => Some(b),
            (None, Some(name)) => Some(name.parse().map_err(|e: laguerre_core::Error| CliError::Usage(e.to_string()))?),
            (None, None) => None,
        };
        let orders = config.s.or_else(|| flags.orders.clone()).unwrap_or_else(|| vec![1.0, 2.0]);
        if orders.is_empty() || orders.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(CliError::Usage(format!("moment orders must be non-negative, got {orders:?}")));
        }
        let replicates = config.replicates.or(flags.replicates);
        if replicates == Some(0) {
            return Err(CliError::Usage("replicates must be positive".into()));
        }
        Ok(Settings {
            model,
            d,
            gamma,
            nu,
            seed: config.seed.or(flags.seed).unwrap_or(0),
            window,
            margin,
            replicates,
            jobs: config.jobs.or(flags.jobs).unwrap_or(0),
            out: config.out.or_else(|| flags.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
            battery,
            orders,
            levels: config.levels.or_else(|| flags.levels.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_parsing() {
        let w = parse_window(&[-1.0, -2.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(w.side(1), 4.0);
        assert!(parse_window(&[0.0, 0.0, 0.0, 1.0], 2).is_err());
        assert!(parse_window(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"gamma": 1.0, "colour": 3}"#).is_err());
        let c: ConfigFile = serde_json::from_str(r#"{"battery": "moments", "s": [1]}"#).unwrap();
        assert_eq!(c.battery, Some(Battery::Moments));
    }

    #[test]
    fn config_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"gamma": 2.5, "seed": 7}"#).unwrap();
        let flags = Flags {
            gamma: Some(1.0),
            seed: Some(1),
            nu: Some(1.0),
            config: Some(path),
            ..Flags::default()
        };
        let s = Settings::resolve(&flags).unwrap();
        assert_eq!((s.gamma, s.seed, s.nu), (2.5, 7, 1.0));
    }
}
