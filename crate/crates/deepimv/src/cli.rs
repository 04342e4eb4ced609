//! Command-line surface. One process runs one command against a flat
//! `key = value` config (file via `--config`, then inline overrides); the
//! effective config is echoed into the output directory so every run can
//! be reproduced byte for byte from (echo, seed).

use std::path::{Path, PathBuf};

use crate::config::{parse_config, RunConfig};
use crate::data::{
    apply_missingness, load_dataset, save_dataset, split_dataset, synthesize_dataset,
    MultiViewDataset,
};
use crate::error::{usage, Error, Result};
use crate::evaluation::{
    auroc, information_quantity, latent_pca_projection, missing_rate_sweep, run_ablation,
    view_count_curve, MetricsReport,
};
use crate::model::{forward, load_params, predict_proba, save_params};
use crate::numerics::{Mode, RngState};
use crate::training::{grad_check, train_deepimv, TrainConfig};

const USAGE: &str = "usage: deepimv <command> [--config <path>] [key=value ...]

commands:
  synth      generate a synthetic multi-view dataset
  train      train a model on data_dir and write a checkpoint
  eval       evaluate a checkpoint on the test split
  predict    write class probabilities for a dataset
  ablate     run the fusion/marginal-IB ablation grid
  sweep      run the missing-rate robustness sweep
  gradcheck  finite-difference check of the training gradients
  project    project joint-posterior means onto two principal axes

environment:
  DEEPIMV_OUTPUT_DIR overrides the output_dir config key";

/// Salts matching the experiment harness so CLI splits line up with it.
const SPLIT_SALT: u64 = 0x73706c69;
const MISS_SALT: u64 = 0x6d697373;

/// Entry point: parses `argv` (including the program name) and dispatches.
/// Exit codes: 0 success, 1 usage, 2 data/IO, 3 numeric failure.
pub fn run(argv: &[String]) -> i32 {
    match run_inner(argv) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Usage(_) => 1,
                Error::Numeric(_) => 3,
                _ => 2,
            }
        }
    }
}

fn run_inner(argv: &[String]) -> Result<()> {
    let command = argv
        .get(1)
        .ok_or_else(|| usage(format!("missing command\n{USAGE}")))?
        .as_str();
    if command == "--help" || command == "-h" || command == "help" {
        return Err(usage(USAGE.to_string()));
    }

    let mut config_path: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut rest = argv[2..].iter();
    while let Some(arg) = rest.next() {
        if arg == "--config" {
            let path = rest
                .next()
                .ok_or_else(|| usage("--config requires a path"))?;
            config_path = Some(PathBuf::from(path));
        } else if let Some((key, value)) = arg.split_once('=') {
            overrides.push((key.trim().to_string(), value.trim().to_string()));
        } else {
            return Err(usage(format!("unexpected argument '{arg}'\n{USAGE}")));
        }
    }

    let mut cfg = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    for (key, value) in &overrides {
        cfg.set(key, value)?;
    }
    if let Ok(dir) = std::env::var("DEEPIMV_OUTPUT_DIR") {
        if !dir.is_empty() {
            cfg.output_dir = PathBuf::from(dir);
        }
    }

    match command {
        "synth" => cmd_synth(&cfg),
        "train" => cmd_train(&cfg),
        "eval" => cmd_eval(&cfg),
        "predict" => cmd_predict(&cfg),
        "ablate" => cmd_ablate(&cfg),
        "sweep" => cmd_sweep(&cfg),
        "gradcheck" => cmd_gradcheck(&cfg),
        "project" => cmd_project(&cfg),
        other => Err(usage(format!("unknown command '{other}'\n{USAGE}"))),
    }
}

fn write_echo(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("config_echo.txt"), cfg.echo())?;
    Ok(())
}

fn write_report(dir: &Path, name: &str, report: &MetricsReport) -> Result<()> {
    std::fs::write(dir.join(format!("{name}.csv")), report.to_csv())?;
    std::fs::write(dir.join(format!("{name}_long.csv")), report.to_long_csv())?;
    Ok(())
}

fn require_data(cfg: &RunConfig) -> Result<MultiViewDataset> {
    let dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| usage("this command needs data_dir"))?;
    load_dataset(dir)
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("checkpoint.json"))
}

fn split_for_run(
    cfg: &RunConfig,
    ds: &MultiViewDataset,
) -> Result<(MultiViewDataset, MultiViewDataset, MultiViewDataset)> {
    let mut rng = RngState::from_seed(cfg.train.seed ^ SPLIT_SALT);
    split_dataset(ds, cfg.split, &mut rng)
}

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let ds = synthesize_dataset(&cfg.synth_config())?;
    let dir = cfg
        .data_dir
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("dataset"));
    save_dataset(&ds, &dir)?;
    println!(
        "synth: wrote {} samples x {} views to {}",
        ds.n_samples(),
        ds.n_views(),
        dir.display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let ds = require_data(cfg)?;
    let (train, val, _) = split_for_run(cfg, &ds)?;
    let train = if cfg.missing_rate > 0.0 && ds.n_views() >= 2 {
        let mut rng = RngState::from_seed(cfg.train.seed ^ MISS_SALT);
        apply_missingness(&train, cfg.missing_rate, &mut rng)?
    } else {
        train
    };
    let (params, history) = train_deepimv(&cfg.train, &train, &val)?;
    let ckpt = checkpoint_path(cfg);
    save_params(&params, &ckpt)?;
    std::fs::write(cfg.output_dir.join("history.csv"), history.to_csv())?;
    let selected = &history.epochs[history.selected_epoch];
    println!(
        "train: {} epochs, selected epoch {} (val total {:.6}, val AUROC {:.4}); checkpoint at {}",
        history.epochs.len(),
        history.selected_epoch,
        selected.val.total,
        selected.val_auroc,
        ckpt.display()
    );
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let ds = require_data(cfg)?;
    let (_, _, test) = split_for_run(cfg, &ds)?;
    let params = load_params(&checkpoint_path(cfg))?;
    let fusion = cfg.train.fusion;

    let mut report = MetricsReport::new(&["quantity", "condition"], "value");
    let curve = view_count_curve(&params, &test, fusion)?;
    for (k, value) in curve.iter().enumerate() {
        report.push(
            vec!["auroc".into(), format!("views={}", k + 1)],
            vec![*value],
        );
    }

    let (batch, labels) = test.full_batch()?;
    let probs = predict_proba(&params, &batch, fusion)?;
    let scores: Vec<f64> = (0..probs.rows()).map(|r| probs.get(r, 1)).collect();
    let full_auroc = auroc(&scores, &labels)?;
    report.push(vec!["auroc".into(), "as_observed".into()], vec![full_auroc]);

    // Information quantities (nats): joint and per view.
    let mut rng = RngState::from_seed(0);
    let fp = forward(&params, &batch, fusion, Mode::Eval, 0.0, &mut rng)?;
    if let Ok(iq) = information_quantity(&fp.joint_probs, &labels) {
        report.push(vec!["information_nats".into(), "joint".into()], vec![iq]);
    }
    for v in 0..params.n_views() {
        if let Some(ch) = &fp.view_channels[v] {
            let view_labels: Vec<usize> = ch.indices.iter().map(|&r| labels[r]).collect();
            if let Ok(iq) = information_quantity(&ch.probs, &view_labels) {
                report.push(
                    vec!["information_nats".into(), format!("view_{}", v + 1)],
                    vec![iq],
                );
            }
        }
    }
    write_report(&cfg.output_dir, "metrics", &report)?;
    println!(
        "eval: test AUROC {:.4} over {} samples; metrics at {}",
        full_auroc,
        test.n_samples(),
        cfg.output_dir.join("metrics.csv").display()
    );
    Ok(())
}

fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let mut ds = require_data(cfg)?;
    if let Some(views) = &cfg.views {
        ds = ds.restrict_views(views)?;
    }
    let params = load_params(&checkpoint_path(cfg))?;
    let (batch, _) = ds.full_batch()?;
    let probs = predict_proba(&params, &batch, cfg.train.fusion)?;
    let ids: Vec<String> = ds
        .ids
        .clone()
        .unwrap_or_else(|| (0..ds.n_samples()).map(|i| format!("s{i:06}")).collect());
    let mut out = String::from("id,label");
    for c in 0..probs.cols() {
        out.push_str(&format!(",p{c}"));
    }
    out.push('\n');
    for r in 0..probs.rows() {
        out.push_str(&format!("{},{}", ids[r], ds.labels[r]));
        for c in 0..probs.cols() {
            out.push_str(&format!(",{}", probs.get(r, c)));
        }
        out.push('\n');
    }
    std::fs::write(cfg.output_dir.join("predictions.csv"), out)?;
    println!(
        "predict: wrote {} rows to {}",
        probs.rows(),
        cfg.output_dir.join("predictions.csv").display()
    );
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let ds = require_data(cfg)?;
    let report = run_ablation(&cfg.train, &ds, cfg.repeats, cfg.missing_rate)?;
    write_report(&cfg.output_dir, "ablation", &report)?;
    println!(
        "ablate: {} cells over {} repeats; report at {}",
        report.rows.len(),
        cfg.repeats,
        cfg.output_dir.join("ablation.csv").display()
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let ds = require_data(cfg)?;
    let report = missing_rate_sweep(
        &cfg.train,
        &ds,
        &cfg.r_grid,
        cfg.repeats,
        cfg.include_base1,
    )?;
    write_report(&cfg.output_dir, "sweep", &report)?;
    println!(
        "sweep: rates {:?} over {} repeats; report at {}",
        cfg.r_grid,
        cfg.repeats,
        cfg.output_dir.join("sweep.csv").display()
    );
    Ok(())
}

/// Built-in tiny instance: 2 views, latent 3, 2 classes, mixed missingness.
fn gradcheck_instance(cfg: &RunConfig) -> Result<(TrainConfig, MultiViewDataset)> {
    let synth = crate::data::SynthConfig::with_partitioned_factors(
        12,
        2,
        4,
        3,
        0.1,
        0.0,
        cfg.train.seed,
    );
    let ds = synthesize_dataset(&synth)?;
    let mut rng = RngState::from_seed(cfg.train.seed ^ MISS_SALT);
    let ds = apply_missingness(&ds, 0.5, &mut rng)?;
    let mut tiny = cfg.train.clone();
    tiny.latent_dim = 3;
    tiny.encoder_hidden = vec![5];
    tiny.predictor_hidden = vec![4];
    tiny.dropout = 0.3;
    Ok((tiny, ds))
}

fn cmd_gradcheck(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let (tiny, ds) = gradcheck_instance(cfg)?;
    let report = grad_check(&tiny, &ds)?;
    let line = format!(
        "gradcheck: max relative error {:.3e} over {} parameters (worst index {})",
        report.max_rel_error, report.n_params, report.worst_param
    );
    println!("{line}");
    std::fs::write(cfg.output_dir.join("gradcheck.txt"), format!("{line}\n"))?;
    if report.max_rel_error >= 1e-4 {
        return Err(crate::error::Error::Numeric(format!(
            "gradient check failed: {:.3e} >= 1e-4",
            report.max_rel_error
        )));
    }
    Ok(())
}

fn cmd_project(cfg: &RunConfig) -> Result<()> {
    write_echo(cfg)?;
    let ds = require_data(cfg)?;
    let params = load_params(&checkpoint_path(cfg))?;
    let pattern: Vec<usize> = match &cfg.views {
        Some(views) => views.clone(),
        None => (0..ds.n_views()).collect(),
    };
    let proj = latent_pca_projection(&params, &ds, &pattern, cfg.train.fusion)?;
    let ids: Vec<String> = ds
        .ids
        .clone()
        .unwrap_or_else(|| (0..ds.n_samples()).map(|i| format!("s{i:06}")).collect());
    let mut out = String::from("id,label,pc1,pc2\n");
    for r in 0..proj.rows() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            ids[r],
            ds.labels[r],
            proj.get(r, 0),
            proj.get(r, 1)
        ));
    }
    std::fs::write(cfg.output_dir.join("projection.csv"), out)?;
    println!(
        "project: wrote {} rows to {}",
        proj.rows(),
        cfg.output_dir.join("projection.csv").display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(parts: &[&str]) -> Vec<String> {
        std::iter::once("deepimv")
            .chain(parts.iter().copied())
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn unknown_command_exits_with_usage() {
        assert_eq!(run(&args(&["frobnicate"])), 1);
        assert_eq!(run(&args(&[])), 1);
    }

    #[test]
    fn bad_override_exits_with_usage() {
        assert_eq!(run(&args(&["synth", "beta=-3"])), 1);
        assert_eq!(run(&args(&["synth", "--flag"])), 1);
    }

    #[test]
    fn missing_data_dir_is_a_usage_error() {
        assert_eq!(run(&args(&["train"])), 1);
    }
}
