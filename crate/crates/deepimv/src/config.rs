//! Flat `key = value` run configuration shared by every CLI command.
//!
//! Unknown keys, type mismatches and out-of-range values are rejected with
//! the offending key named. The effective configuration echoes back out in
//! the same format, so an echoed file reparses to an identical config.

use std::path::PathBuf;

use crate::data::synth::{partition_factors, SynthConfig};
use crate::error::{usage, Result};
use crate::model::Fusion;
use crate::training::TrainConfig;

/// Command-scoped view of everything a run needs: training
/// hyperparameters, synthetic-data knobs, paths and experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth_samples: usize,
    pub synth_views: usize,
    pub synth_factors: usize,
    pub synth_view_dim: usize,
    pub synth_noise: f64,
    pub synth_label_flip: f64,
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub repeats: usize,
    /// Test-time view restriction, zero-based (configured one-based).
    pub views: Option<Vec<usize>>,
    pub r_grid: Vec<f64>,
    pub include_base1: bool,
    /// Missingness applied to the training split by `train`/`ablate`.
    pub missing_rate: f64,
    pub split: (f64, f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            synth_samples: 2000,
            synth_views: 4,
            synth_factors: 8,
            synth_view_dim: 20,
            synth_noise: 0.25,
            synth_label_flip: 0.05,
            data_dir: None,
            output_dir: PathBuf::from("out"),
            checkpoint: None,
            repeats: 5,
            views: None,
            r_grid: vec![0.0, 0.3, 0.6, 0.9],
            include_base1: true,
            missing_rate: 0.0,
            split: (0.64, 0.16, 0.20),
        }
    }
}

fn parse_typed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| usage(format!("key '{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(usage(format!("key '{key}': expected true/false, got '{value}'"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("key '{key}': cannot parse element '{part}'")))
        })
        .collect()
}

fn require_nonneg(key: &str, v: f64) -> Result<f64> {
    if v < 0.0 || !v.is_finite() {
        return Err(usage(format!("key '{key}': value {v} out of range (must be >= 0)")));
    }
    Ok(v)
}

fn require_unit(key: &str, v: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(usage(format!("key '{key}': value {v} out of range [0, 1]")));
    }
    Ok(v)
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "epochs" => self.train.epochs = parse_typed(key, value)?,
            "batch_size" => self.train.batch_size = parse_typed(key, value)?,
            "learning_rate" => {
                let v: f64 = parse_typed(key, value)?;
                if v <= 0.0 || !v.is_finite() {
                    return Err(usage(format!("key '{key}': {v} must be positive")));
                }
                self.train.learning_rate = v;
            }
            "alpha" => self.train.alpha = require_nonneg(key, parse_typed(key, value)?)?,
            "beta" => self.train.beta = require_nonneg(key, parse_typed(key, value)?)?,
            "beta_v" => {
                let bv: Vec<f64> = parse_list(key, value)?;
                for &b in &bv {
                    require_nonneg(key, b)?;
                }
                self.train.beta_v = if bv.is_empty() { None } else { Some(bv) };
            }
            "dropout" => {
                let v = require_unit(key, parse_typed(key, value)?)?;
                if v >= 1.0 {
                    return Err(usage(format!("key '{key}': {v} must be < 1")));
                }
                self.train.dropout = v;
            }
            "l1" => self.train.l1 = require_nonneg(key, parse_typed(key, value)?)?,
            "fusion" => {
                self.train.fusion = value
                    .parse::<Fusion>()
                    .map_err(|_| usage(format!("key '{key}': '{value}' is not poe|moe")))?;
            }
            "marginal_ib" => self.train.marginal_ib = parse_bool(key, value)?,
            "seed" => self.train.seed = parse_typed(key, value)?,
            "patience" => self.train.patience = parse_typed(key, value)?,
            "latent_dim" => self.train.latent_dim = parse_typed(key, value)?,
            "encoder_hidden" => self.train.encoder_hidden = parse_list(key, value)?,
            "predictor_hidden" => self.train.predictor_hidden = parse_list(key, value)?,
            "select_on_joint" => self.train.select_on_joint = parse_bool(key, value)?,
            "mc_eval_samples" => self.train.mc_eval_samples = parse_typed(key, value)?,
            "synth_samples" => self.synth_samples = parse_typed(key, value)?,
            "synth_views" => self.synth_views = parse_typed(key, value)?,
            "synth_factors" => self.synth_factors = parse_typed(key, value)?,
            "synth_view_dim" => self.synth_view_dim = parse_typed(key, value)?,
            "synth_noise" => self.synth_noise = require_nonneg(key, parse_typed(key, value)?)?,
            "synth_label_flip" => {
                self.synth_label_flip = require_unit(key, parse_typed(key, value)?)?
            }
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "repeats" => {
                let v: usize = parse_typed(key, value)?;
                if v == 0 {
                    return Err(usage(format!("key '{key}': must be >= 1")));
                }
                self.repeats = v;
            }
            "views" => {
                let one_based: Vec<usize> = parse_list(key, value)?;
                if one_based.is_empty() {
                    self.views = None;
                } else {
                    let mut zero_based = Vec::with_capacity(one_based.len());
                    for v in one_based {
                        if v == 0 {
                            return Err(usage(format!("key '{key}': views are numbered from 1")));
                        }
                        zero_based.push(v - 1);
                    }
                    self.views = Some(zero_based);
                }
            }
            "r_grid" => {
                let grid: Vec<f64> = parse_list(key, value)?;
                for &r in &grid {
                    require_unit(key, r)?;
                }
                if grid.is_empty() {
                    return Err(usage(format!("key '{key}': grid must be nonempty")));
                }
                self.r_grid = grid;
            }
            "include_base1" => self.include_base1 = parse_bool(key, value)?,
            "missing_rate" => self.missing_rate = require_unit(key, parse_typed(key, value)?)?,
            "train_frac" => self.split.0 = require_unit(key, parse_typed(key, value)?)?,
            "val_frac" => self.split.1 = require_unit(key, parse_typed(key, value)?)?,
            "test_frac" => self.split.2 = require_unit(key, parse_typed(key, value)?)?,
            _ => return Err(usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_samples: self.synth_samples,
            n_views: self.synth_views,
            factor_dim: self.synth_factors,
            view_dims: vec![self.synth_view_dim; self.synth_views],
            factor_subsets: partition_factors(self.synth_factors, self.synth_views),
            noise: self.synth_noise,
            label_flip: self.synth_label_flip,
            seed: self.train.seed,
        }
    }

    /// Full effective configuration in the accepted input format.
    pub fn echo(&self) -> String {
        let mut lines = Vec::new();
        let mut push = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        push("alpha", format!("{}", self.train.alpha));
        push("batch_size", format!("{}", self.train.batch_size));
        push("beta", format!("{}", self.train.beta));
        push(
            "beta_v",
            self.train
                .beta_v
                .as_ref()
                .map(|bv| {
                    bv.iter()
                        .map(|b| format!("{b}"))
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .unwrap_or_default(),
        );
        if let Some(cp) = &self.checkpoint {
            push("checkpoint", cp.display().to_string());
        }
        if let Some(dd) = &self.data_dir {
            push("data_dir", dd.display().to_string());
        }
        push("dropout", format!("{}", self.train.dropout));
        push(
            "encoder_hidden",
            self.train
                .encoder_hidden
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        push("epochs", format!("{}", self.train.epochs));
        push("fusion", format!("{}", self.train.fusion));
        push("include_base1", format!("{}", self.include_base1));
        push("l1", format!("{}", self.train.l1));
        push("latent_dim", format!("{}", self.train.latent_dim));
        push("learning_rate", format!("{}", self.train.learning_rate));
        push("marginal_ib", format!("{}", self.train.marginal_ib));
        push("mc_eval_samples", format!("{}", self.train.mc_eval_samples));
        push("missing_rate", format!("{}", self.missing_rate));
        push("output_dir", self.output_dir.display().to_string());
        push("patience", format!("{}", self.train.patience));
        push(
            "predictor_hidden",
            self.train
                .predictor_hidden
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        push(
            "r_grid",
            self.r_grid
                .iter()
                .map(|r| format!("{r}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        push("repeats", format!("{}", self.repeats));
        push("seed", format!("{}", self.train.seed));
        push("select_on_joint", format!("{}", self.train.select_on_joint));
        push("synth_factors", format!("{}", self.synth_factors));
        push("synth_label_flip", format!("{}", self.synth_label_flip));
        push("synth_noise", format!("{}", self.synth_noise));
        push("synth_samples", format!("{}", self.synth_samples));
        push("synth_view_dim", format!("{}", self.synth_view_dim));
        push("synth_views", format!("{}", self.synth_views));
        push("test_frac", format!("{}", self.split.2));
        push("train_frac", format!("{}", self.split.0));
        push("val_frac", format!("{}", self.split.1));
        if let Some(views) = &self.views {
            push(
                "views",
                views
                    .iter()
                    .map(|v| (v + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        lines.join("\n") + "\n"
    }
}

/// Parse a flat `key = value` document. Blank lines and `#` comments are
/// skipped; later assignments win.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!(
                "line {}: expected 'key = value', got '{line}'",
                line_no + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() && !matches!(key, "beta_v" | "views") {
            return Err(usage(format!("key '{key}': empty value")));
        }
        cfg.set(key, value)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_the_paper_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.train.alpha, 1.0);
        assert_eq!(cfg.train.beta, 0.01);
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.train.dropout, 0.7);
        assert_eq!(cfg.split, (0.64, 0.16, 0.20));
        assert_eq!(cfg.train.fusion, Fusion::Poe);
    }

    #[test]
    fn negative_beta_is_rejected_with_a_range_error() {
        let err = parse_config("beta = -1").unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
        assert!(err.contains("range"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("bogus = 1").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn fusion_override_round_trips_through_the_echo() {
        let cfg = parse_config("fusion = moe\nseed = 9\n").unwrap();
        assert_eq!(cfg.train.fusion, Fusion::Moe);
        let echoed = cfg.echo();
        let reparsed = parse_config(&echoed).unwrap();
        assert_eq!(reparsed, cfg);
        assert!(echoed.contains("fusion = moe"));
    }

    #[test]
    fn full_echo_reparses_identically() {
        let text = "epochs = 12\nencoder_hidden = 16,8\nbeta_v = 0.1,0.2\nviews = 1,3\n\
                    checkpoint = /tmp/x.json\ndata_dir = /tmp/d\nmissing_rate = 0.4\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.views, Some(vec![0, 2]));
        let reparsed = parse_config(&cfg.echo()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let cfg = parse_config("# a comment\n\nepochs = 3 # trailing\n").unwrap();
        assert_eq!(cfg.train.epochs, 3);
    }

    #[test]
    fn type_errors_name_the_key() {
        let err = parse_config("epochs = soon").unwrap_err().to_string();
        assert!(err.contains("epochs"), "{err}");
    }

    #[test]
    fn synth_config_partitions_factors() {
        let cfg = parse_config("synth_views = 4\nsynth_factors = 8\n").unwrap();
        let s = cfg.synth_config();
        assert_eq!(s.factor_subsets.len(), 4);
        s.validate().unwrap();
    }
}
